"""Command-line front end: one subcommand per pipeline.

Output is either a JSON report (``--format report``, the default) or a
tab-separated table (``--format table``).  Reports are deterministic given
identical inputs, flags, and seed, except for the wall-clock field.  Exit
codes: 0 success, 1 infeasible / degenerate / non-convergent instance,
2 bad input (flags, files, malformed values).
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .equivalence import build_corresponding, identity_sweep, verify_optimum_coincidence
from .errors import LoglossLabError, ValidationError
from .oneshot import (
    excess_witness,
    logloss_avg_optimum,
    logloss_codebook,
    logloss_excess_optimum,
    logloss_excess_oracle,
    solve_avg,
    solve_avg_oracle,
    solve_codebook,
)
from .probability import Pmf, entropy, varentropy
from .problemio import (
    dump_report,
    load_problem,
    parse_float_list,
    render_table,
    to_bits,
)
from .ratedistortion import rd_at_distortion, verify_csiszar_identity
from .refinement import (
    construct_sr,
    construct_sr_chain,
    timeshare_simulate,
    timeshare_two_decoders,
    verify_sr,
)

__all__ = ["main", "entrypoint"]

DEFAULT_TOL = 1e-8
# Oracle cross-checks run only when the brute-force side stays this cheap.
_AVG_ORACLE_BUDGET = 100_000
_EXCESS_ORACLE_ALPHABET = 12


@dataclass
class _CommandOutput:
    inputs: dict
    outputs: dict
    tolerances: dict
    nat_keys: frozenset = frozenset()
    table_header: list = field(default_factory=list)
    table_rows: list = field(default_factory=list)


def _tol(args) -> float:
    return DEFAULT_TOL if args.tol is None else args.tol


# ----------------------------------------------------------------------
# rd
# ----------------------------------------------------------------------


def _cmd_rd(args) -> _CommandOutput:
    loaded = load_problem(args.problem)
    tol = _tol(args)
    if (args.distortion is None) == (args.grid is None):
        raise ValidationError("rd: give exactly one of --distortion or --grid")
    targets = ([args.distortion] if args.grid is None
               else parse_float_list(args.grid, "--grid"))

    points = []
    rows = []
    for d in targets:
        point = rd_at_distortion(loaded.problem, d, tol=tol, max_iter=args.max_iter)
        residual = verify_csiszar_identity(loaded.problem, point)
        diag = point.diagnostics
        points.append({
            "target_distortion": d,
            "achieved_distortion": diag.achieved_distortion,
            "rate": point.rate,
            "lambda_star": point.lambda_star,
            "kept_columns": list(point.kept_columns),
            "output_marginal": point.output_marginal.probs,
            "tilted_information": point.tilted,
            "csiszar_residual": residual,
            "ba_iterations": diag.ba_iterations,
        })
        rows.append([d, point.rate, point.lambda_star])

    return _CommandOutput(
        inputs={"problem": loaded.echo(),
                "flags": {"targets": targets, "tol": tol, "max_iter": args.max_iter}},
        outputs={"points": points},
        tolerances={"distortion_tol": tol,
                    "fixed_point_tol": min(1e-10, tol / 100.0)},
        nat_keys=frozenset({"rate", "tilted_information", "csiszar_residual"}),
        table_header=["D", "rate", "lambda"],
        table_rows=rows,
    )


# ----------------------------------------------------------------------
# oneshot
# ----------------------------------------------------------------------


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _code_doc(code) -> dict:
    return {"encoder": list(code.encoder), "decoder": list(code.decoder)}


def _cmd_oneshot(args) -> _CommandOutput:
    loaded = load_problem(args.problem)
    problem = loaded.problem
    px = problem.px
    crit = args.criterion

    if crit in ("avg", "excess"):
        _require(args.messages is not None, f"oneshot {crit}: --messages is required")
        _require(args.messages >= 1, "oneshot: --messages must be >= 1")
        _require(args.epsilon is None, f"oneshot {crit}: --epsilon does not apply")
    if crit in ("excess", "codebook"):
        _require(args.distortion is not None, f"oneshot {crit}: --distortion is required")
    if crit == "codebook":
        _require(args.epsilon is not None, "oneshot codebook: --epsilon is required")
        _require(args.messages is None,
                 "oneshot codebook: --messages is computed, not given")
    if crit == "avg":
        _require(args.distortion is None, "oneshot avg: --distortion does not apply")

    m = args.messages
    d = args.distortion
    oracle = None
    nat_keys = frozenset()

    if args.logloss:
        if crit == "avg":
            scheme, value = logloss_avg_optimum(px, m)
            outputs = {
                "criterion": "avg",
                "optimal_value": value,
                "scheme": {
                    "encoder": list(scheme.encoder),
                    "cell_masses": scheme.cell_masses,
                    "reproduction_rows": [q.probs for q in scheme.posterior_rows],
                },
            }
            nat_keys = frozenset({"optimal_value"})
            header, row = ["criterion", "M", "value"], ["avg", m, value]
        elif crit == "excess":
            scheme, value = logloss_excess_optimum(px, m, d)
            outputs = {
                "criterion": "excess",
                "optimal_value": value,
                "scheme": {
                    "sort_order": list(scheme.sort_order),
                    "cell_size": scheme.cell_size,
                    "encoder": list(scheme.encoder()),
                    "reproduction_rows": [q.probs for q in scheme.decoder_rows()],
                },
            }
            if px.n <= _EXCESS_ORACLE_ALPHABET:
                ov = logloss_excess_oracle(px, m, d)
                oracle = {"value": ov, "agrees": ov == value}
            header, row = ["criterion", "M", "D", "epsilon"], ["excess", m, d, value]
        else:
            m_star = logloss_codebook(px, d, args.epsilon)
            scheme, value = logloss_excess_optimum(px, m_star, d)
            outputs = {
                "criterion": "codebook",
                "m_star": m_star,
                "achieved_epsilon": value,
                "scheme": {
                    "sort_order": list(scheme.sort_order),
                    "cell_size": scheme.cell_size,
                    "encoder": list(scheme.encoder()),
                },
            }
            header = ["criterion", "D", "eps", "M_star", "achieved_epsilon"]
            row = ["codebook", d, args.epsilon, m_star, value]
    else:
        if crit == "avg":
            code, value = solve_avg(problem, m)
            outputs = {"criterion": "avg", "optimal_value": value,
                       "scheme": _code_doc(code)}
            if m ** px.n <= _AVG_ORACLE_BUDGET:
                ov = solve_avg_oracle(problem, m)
                oracle = {"value": ov, "agrees": ov == value}
            header, row = ["criterion", "M", "value"], ["avg", m, value]
        elif crit == "excess":
            code, value = excess_witness(problem, m, d)
            outputs = {"criterion": "excess", "optimal_value": value,
                       "scheme": _code_doc(code)}
            header, row = ["criterion", "M", "D", "epsilon"], ["excess", m, d, value]
        else:
            m_star = solve_codebook(problem, d, args.epsilon)
            code, value = excess_witness(problem, m_star, d)
            outputs = {"criterion": "codebook", "m_star": m_star,
                       "achieved_epsilon": value, "scheme": _code_doc(code)}
            header = ["criterion", "D", "eps", "M_star", "achieved_epsilon"]
            row = ["codebook", d, args.epsilon, m_star, value]

    outputs["oracle"] = oracle
    flags = {"criterion": crit, "logloss": bool(args.logloss)}
    for name, value_ in (("messages", m), ("distortion", d), ("epsilon", args.epsilon)):
        if value_ is not None:
            flags[name] = value_
    return _CommandOutput(
        inputs={"problem": loaded.echo(), "flags": flags},
        outputs=outputs,
        tolerances={"feasibility_slack": 1e-12},
        nat_keys=nat_keys,
        table_header=header,
        table_rows=[row],
    )


# ----------------------------------------------------------------------
# equiv
# ----------------------------------------------------------------------


def _cmd_equiv(args) -> _CommandOutput:
    loaded = load_problem(args.problem)
    _require(args.messages is not None, "equiv: --messages is required")
    _require(args.messages >= 1, "equiv: --messages must be >= 1")
    if args.samples is not None:
        _require(args.samples >= 1, "equiv: --samples must be >= 1")
        _require(args.seed is not None, "equiv: --samples requires --seed")
    tol = _tol(args)

    cp = build_corresponding(loaded.problem, args.messages, tol=tol)
    sweep = identity_sweep(cp, samples=args.samples, seed=args.seed)
    coincidence = None
    if not sweep.sampled:
        rep = verify_optimum_coincidence(cp)
        coincidence = {
            "matched": rep.matched,
            "min_distortion": rep.min_distortion,
            "min_log_loss": rep.min_loss,
            "n_distortion_argmin": len(rep.distortion_argmin),
            "n_loss_argmin": len(rep.loss_argmin),
        }
    outputs = {
        "d_star_m": cp.d_star_m,
        "lambda_star": cp.lambda_star,
        "h_x_given_xhat": cp.h_x_given_xhat,
        "reproduction_rows": [q.probs for q in cp.y_rows],
        "optimal_code": _code_doc(cp.optimal_code),
        "identity": {
            "n_codes": sweep.n_codes,
            "max_residual": sweep.max_residual,
            "min_log_loss": sweep.min_loss,
            "min_distortion": sweep.min_distortion,
            "sampled": sweep.sampled,
        },
        "coincidence": coincidence,
    }
    verdict = "skipped" if coincidence is None else (
        "pass" if coincidence["matched"] else "FAIL")
    flags = {"messages": args.messages, "tol": tol}
    if args.samples is not None:
        flags["samples"] = args.samples
        flags["seed"] = args.seed
    return _CommandOutput(
        inputs={"problem": loaded.echo(), "flags": flags},
        outputs=outputs,
        tolerances={"solver_tol": tol, "row_match_tol": 1e-9,
                    "coincidence_atol": 1e-9},
        nat_keys=frozenset({"h_x_given_xhat", "max_residual", "min_log_loss"}),
        table_header=["M", "d_star", "lambda", "h_cond", "max_residual",
                      "coincidence"],
        table_rows=[[args.messages, cp.d_star_m, cp.lambda_star,
                     cp.h_x_given_xhat, sweep.max_residual, verdict]],
    )


# ----------------------------------------------------------------------
# sr
# ----------------------------------------------------------------------


def _cmd_sr(args) -> _CommandOutput:
    loaded = load_problem(args.problem)
    tol = _tol(args)
    _require(args.d2 is not None, "sr: --d2 is required")
    if (args.d1 is None) == (args.chain is None):
        raise ValidationError("sr: give exactly one of --d1 or --chain")

    if args.chain is not None:
        targets = parse_float_list(args.chain, "--chain")
        layers = construct_sr_chain(loaded.problem, targets, args.d2, tol=tol)
    else:
        targets = [args.d1]
        layers = [construct_sr(loaded.problem, args.d1, args.d2, tol=tol)]

    layer_docs = []
    rows = []
    for layer in layers:
        report = verify_sr(layer, tol=1e-9)
        worst = max(c.residual for c in report.checks)
        layer_docs.append({
            "d1": layer.d1,
            "delta": layer.delta,
            "rates": list(layer.rates),
            "z_alphabet": [str(z) for z in layer.z_alphabet],
            "reproduction_rows": [q.probs for q in layer.q_rows],
            "row_of_z": {str(z): idx for z, idx in layer.q_index.items()},
            "checks": [{"name": c.name, "residual": c.residual, "ok": c.ok}
                       for c in report.checks],
            "all_checks_pass": report.ok,
        })
        rows.append([layer.d1, layer.delta, worst, report.ok])

    first = layers[0]
    return _CommandOutput(
        inputs={"problem": loaded.echo(),
                "flags": {"targets": targets, "d2": args.d2, "tol": tol}},
        outputs={"d2": first.d2,
                 "fine_rate": first.second_point.rate,
                 "fine_lambda": first.second_point.lambda_star,
                 "layers": layer_docs},
        tolerances={"solver_tol": tol, "check_tol": 1e-9},
        nat_keys=frozenset({"d1", "rates", "fine_rate"}),
        table_header=["d1", "delta", "max_residual", "ok"],
        table_rows=rows,
    )


# ----------------------------------------------------------------------
# timeshare
# ----------------------------------------------------------------------


def _sigma_units(diff: float, sigma: float) -> float:
    if sigma == 0.0:
        return 0.0 if abs(diff) <= 1e-12 else math.inf
    return abs(diff) / sigma


def _cmd_timeshare(args) -> _CommandOutput:
    if (args.problem is None) == (args.px is None):
        raise ValidationError("timeshare: give a problem file or --px, not both")
    if args.px is not None:
        px = Pmf(parse_float_list(args.px, "--px"))
        problem_echo = {"px": px.probs.tolist(), "source": "inline"}
    else:
        loaded = load_problem(args.problem)
        px = loaded.problem.px
        problem_echo = loaded.echo()
    _require(args.distortion is not None, "timeshare: --distortion is required")
    _require(args.n is not None and args.n >= 1, "timeshare: --n must be >= 1")
    _require(args.seed is not None, "timeshare: --seed is required")

    if args.d2 is None:
        targets = [args.distortion]
        reports = [timeshare_simulate(px, args.distortion, args.n, args.seed)]
    else:
        targets = [args.distortion, args.d2]
        reports = list(timeshare_two_decoders(px, args.distortion, args.d2,
                                              args.n, args.seed))

    h = entropy(px)
    v = varentropy(px)
    decoders = []
    rows = []
    for target, rep in zip(targets, reports):
        k = rep.lossless_prefix
        # The prefix contributes zero loss, so the block mean varies only
        # through the n - k tail draws; symmetrically for the ideal rate.
        loss_sigma = math.sqrt((rep.n - k) * v) / rep.n
        rate_sigma = math.sqrt(k * v) / rep.n
        loss_dev = _sigma_units(rep.empirical_loss - target, loss_sigma)
        rate_dev = _sigma_units(rep.ideal_rate - (h - target), rate_sigma)
        decoders.append({
            "target_distortion": target,
            "lossless_prefix": k,
            "empirical_loss": rep.empirical_loss,
            "ideal_rate": rep.ideal_rate,
            "loss_deviation_sigma": loss_dev,
            "rate_deviation_sigma": rate_dev,
        })
        rows.append([target, k, rep.empirical_loss, rep.ideal_rate,
                     loss_dev, rate_dev])

    flags = {"distortion": args.distortion, "n": args.n, "seed": args.seed}
    if args.d2 is not None:
        flags["d2"] = args.d2
    return _CommandOutput(
        inputs={"problem": problem_echo, "flags": flags},
        outputs={"entropy": h, "n": args.n, "seed": args.seed,
                 "decoders": decoders},
        tolerances={"sigma_floor": 1e-12},
        nat_keys=frozenset({"entropy", "empirical_loss", "ideal_rate",
                            "target_distortion"}),
        table_header=["D", "k", "empirical_loss", "ideal_rate",
                      "loss_dev_sigma", "rate_dev_sigma"],
        table_rows=rows,
    )


# ----------------------------------------------------------------------
# Wiring
# ----------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loglosslab",
        description="Finite-alphabet lossy compression under logarithmic loss.",
    )
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None,
                        help=f"solver tolerance (default {DEFAULT_TOL})")
    common.add_argument("--seed", type=int, default=None,
                        help="seed for randomized steps")
    common.add_argument("--output", default=None, metavar="PATH",
                        help="write output to PATH instead of stdout")
    common.add_argument("--format", choices=("report", "table"),
                        default="report")
    common.add_argument("--bits", action="store_true",
                        help="convert rates and log losses to bits "
                             "(report format only)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rd", parents=[common],
                       help="rate-distortion point(s) at fixed distortion")
    p.add_argument("problem", help="problem file (YAML)")
    p.add_argument("--distortion", "-D", type=float, default=None)
    p.add_argument("--grid", default=None,
                   help="comma-separated distortion targets")
    p.add_argument("--max-iter", type=int, default=300_000)
    p.set_defaults(handler=_cmd_rd)

    p = sub.add_parser("oneshot", parents=[common],
                       help="exact one-shot optima for small instances")
    p.add_argument("problem")
    p.add_argument("--criterion", choices=("avg", "excess", "codebook"),
                   required=True)
    p.add_argument("--messages", "-M", type=int, default=None)
    p.add_argument("--distortion", "-D", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--logloss", action="store_true",
                   help="use the log-loss closed forms; the distortion "
                        "matrix is ignored")
    p.set_defaults(handler=_cmd_oneshot)

    p = sub.add_parser("equiv", parents=[common],
                       help="log-loss surrogate of a one-shot problem")
    p.add_argument("problem")
    p.add_argument("--messages", "-M", type=int, default=None)
    p.add_argument("--samples", type=int, default=None,
                   help="sample this many codes instead of enumerating")
    p.set_defaults(handler=_cmd_equiv)

    p = sub.add_parser("sr", parents=[common],
                       help="coarse/fine two-decoder construction")
    p.add_argument("problem")
    p.add_argument("--d1", type=float, default=None,
                   help="coarse log-loss target (nats)")
    p.add_argument("--chain", default=None,
                   help="comma-separated non-increasing coarse targets")
    p.add_argument("--d2", type=float, default=None,
                   help="fine-stage distortion target")
    p.set_defaults(handler=_cmd_sr)

    p = sub.add_parser("timeshare", parents=[common],
                       help="simulate the prefix-lossless time-sharing scheme")
    p.add_argument("problem", nargs="?", default=None)
    p.add_argument("--px", default=None,
                   help="inline pmf, comma-separated (alternative to a file)")
    p.add_argument("--distortion", "-D", type=float, default=None)
    p.add_argument("--d2", type=float, default=None,
                   help="second decoder target (requires d2 <= D)")
    p.add_argument("--n", type=int, default=None, help="blocklength")
    p.set_defaults(handler=_cmd_timeshare)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        result = args.handler(args)
        if args.format == "table":
            if args.bits:
                raise ValidationError("--bits applies to report format only")
            text = render_table(result.table_header, result.table_rows)
        else:
            outputs = result.outputs
            units = "nats"
            if args.bits:
                outputs = to_bits(outputs, result.nat_keys)
                units = "bits"
            report = {
                "version": __version__,
                "command": args.command,
                "units": units,
                "inputs": result.inputs,
                "outputs": outputs,
                "tolerances": result.tolerances,
                "wall_clock_seconds": time.perf_counter() - start,
            }
            text = dump_report(report)
        if args.output is not None:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LoglossLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def entrypoint() -> None:
    sys.exit(main())
