"""Successive refinement under logarithmic loss, and time-sharing baselines.

A source compressed for a fine log-loss target D2 can serve a coarser
decoder at any D1 between H(X | Xhat*) and H(X) without redesign: pass the
fine reconstruction through an erasure channel whose erasure weight delta
solves

    (1 - delta) H(X | Xhat*) + delta H(X) = D1,

and decode the result by the posterior of the source given what survived.
The coarse decoder then sits exactly on the log-loss curve at D1.  Chains of
nested erasures serve any number of decoders at once.  The time-sharing
simulator realizes the same curve operationally for i.i.d. blocks: describe a
prefix losslessly, say nothing about the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, ValidationError, VerificationError
from .probability import (
    Channel,
    Pmf,
    conditional_entropy,
    entropy,
    joint_from_source_and_channel,
)
from .ratedistortion import RdPoint, SourceProblem, rd_at_distortion

__all__ = [
    "ERASURE",
    "ROW_MERGE_TOL",
    "SrConstruction",
    "SrCheck",
    "SrReport",
    "construct_sr",
    "construct_sr_chain",
    "chain_step_channel",
    "verify_sr",
    "TimeshareReport",
    "timeshare_simulate",
    "timeshare_two_decoders",
]

# Label of the erased output in z_labels.
ERASURE = "erasure"
# Posterior rows closer than this in max norm are identified.
ROW_MERGE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SrConstruction:
    """A coarse decoder built on top of a solved fine-stage point.

    ``z_alphabet`` lists the coarse observation alphabet: one label per kept
    reconstruction column (its original index) plus ``ERASURE``.
    ``pz_given_xhat`` rows follow kept order; its last output column is the
    erasure.  ``q_rows`` are the coarse reproductions (posteriors of the
    source given the observation, merged when they coincide within
    ``ROW_MERGE_TOL``), and ``q_index`` maps each positive-probability label
    to its row.  ``rates`` is (coarse rate, fine rate) in nats.
    """

    problem: SourceProblem
    second_point: RdPoint
    d1: float
    d2: float
    delta: float
    z_alphabet: tuple
    pz_given_xhat: Channel
    q_rows: tuple[Pmf, ...]
    q_index: dict
    rates: tuple[float, float]

    @property
    def px(self) -> Pmf:
        return self.problem.px


def _stage_entropies(problem: SourceProblem, point: RdPoint) -> tuple[float, float]:
    h = entropy(problem.px)
    h2 = conditional_entropy(joint_from_source_and_channel(problem.px, point.forward))
    return h, h2


def _erasure_weight(d1: float, h: float, h2: float) -> float:
    """Solve (1 - delta) h2 + delta h = d1 for delta in [0, 1]."""
    span = h - h2
    if span <= 1e-12:
        # Zero-rate fine stage: the mixture cannot move, so only d1 = h works.
        if abs(d1 - h) <= 1e-9:
            return 1.0
        raise InfeasibleError(
            f"coarse distortion {d1!r} unreachable: the fine stage already sits "
            f"at H(X) = {h!r}"
        )
    if d1 < h2 - 1e-12 or d1 > h + 1e-12:
        raise InfeasibleError(
            f"coarse distortion {d1!r} outside the feasible interval "
            f"[{h2!r}, {h!r}]"
        )
    return min(max((d1 - h2) / span, 0.0), 1.0)


def _assemble(problem: SourceProblem, point: RdPoint, h: float, h2: float,
              d1: float, d2: float, delta: float) -> SrConstruction:
    k = len(point.kept_columns)
    labels = tuple(point.kept_columns) + (ERASURE,)

    pz = np.zeros((k, k + 1))
    for j in range(k):
        pz[j, j] = 1.0 - delta
        pz[j, k] = delta

    m = point.output_marginal.probs
    pz_marg = np.concatenate(((1.0 - delta) * m, [delta]))

    # Posterior of the source given each positive-probability observation:
    # a surviving reconstruction pins its reverse row, an erasure reveals
    # nothing.  Near-equal rows merge to their probability-weighted mean, so
    # merged rows stay exact posteriors of the merged event.
    reps: list[np.ndarray] = []
    weights: list[float] = []
    q_index: dict = {}
    for z in range(k + 1):
        if pz_marg[z] <= 0.0:
            continue
        row = point.reverse.rows[z] if z < k else problem.px.probs
        w = float(pz_marg[z])
        for g, rep in enumerate(reps):
            if float(np.max(np.abs(row - rep))) <= ROW_MERGE_TOL:
                total = weights[g] + w
                reps[g] = (weights[g] * rep + w * row) / total
                weights[g] = total
                q_index[labels[z]] = g
                break
        else:
            reps.append(np.array(row))
            weights.append(w)
            q_index[labels[z]] = len(reps) - 1

    return SrConstruction(
        problem=problem,
        second_point=point,
        d1=d1,
        d2=d2,
        delta=delta,
        z_alphabet=labels,
        pz_given_xhat=Channel(pz),
        q_rows=tuple(Pmf(rep) for rep in reps),
        q_index=q_index,
        rates=(h - d1, point.rate),
    )


def _h_x_given_z(c: SrConstruction) -> float:
    """H(X|Z) from the reconstructed joint, independent of the q rows."""
    px = c.problem.px.probs
    p_xz = (px[:, None, None] * c.second_point.forward.rows[:, :, None]
            * c.pz_given_xhat.rows[None, :, :]).sum(axis=1)
    p_z = p_xz.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(p_xz) - np.log(p_z)[None, :]
    return float(-np.where(p_xz > 0.0, p_xz * ratio, 0.0).sum())


def construct_sr(problem: SourceProblem, d1: float, d2: float,
                 tol: float = 1e-8) -> SrConstruction:
    """Build the two-decoder construction for coarse d1 on top of fine d2.

    Args:
        problem: source pmf and fine-stage distortion matrix.
        d1: coarse log-loss target, feasible in [H(X | Xhat*), H(X)].
        d2: fine-stage distortion target on the problem's own measure.
        tol: bisection tolerance for the fine-stage curve solve.

    Raises:
        InfeasibleError: d1 outside the feasible interval (stated in the
            message).
    """
    point = rd_at_distortion(problem, d2, tol=tol)
    h, h2 = _stage_entropies(problem, point)
    delta = _erasure_weight(d1, h, h2)
    return _assemble(problem, point, h, h2, d1, d2, delta)


def construct_sr_chain(problem: SourceProblem, ds, d_final: float,
                       tol: float = 1e-8) -> list[SrConstruction]:
    """One construction per coarse target, nested along a Markov chain.

    ``ds`` must be non-increasing (coarsest first); every layer shares the
    same solved fine-stage point, and erasure weights are non-increasing
    along the list, so the layers compose into a physical chain of
    incremental erasure channels (see :func:`chain_step_channel`).  A
    single-entry list reduces to :func:`construct_sr`.
    """
    ds = [float(d) for d in ds]
    if not ds:
        raise ValidationError("construct_sr_chain: need at least one coarse target")
    for a, b in zip(ds, ds[1:]):
        if b > a + 1e-12:
            raise ValidationError(f"construct_sr_chain: targets must be non-increasing, got {ds}")
    point = rd_at_distortion(problem, d_final, tol=tol)
    h, h2 = _stage_entropies(problem, point)
    layers = [_assemble(problem, point, h, h2, d, d_final, _erasure_weight(d, h, h2))
              for d in ds]
    for layer in layers:
        gap = abs(_h_x_given_z(layer) - layer.d1)
        if gap > 1e-9:
            raise VerificationError(
                f"chain layer at d1={layer.d1!r} misses its conditional entropy "
                f"target by {gap:.3e}"
            )
    return layers


def chain_step_channel(coarse: SrConstruction, fine: SrConstruction) -> Channel:
    """The incremental erasure channel from the fine layer's Z to the coarse one's.

    Composing it after the fine layer's observation channel reproduces the
    coarse layer's exactly: surviving symbols are re-erased with the
    conditional weight, erasures stay erased.
    """
    if coarse.z_alphabet != fine.z_alphabet:
        raise ValidationError("chain_step_channel: layers do not share an alphabet")
    if coarse.delta < fine.delta - 1e-12:
        raise ValidationError(
            f"chain_step_channel: coarse erasure weight {coarse.delta!r} below "
            f"fine weight {fine.delta!r}"
        )
    k = len(coarse.z_alphabet) - 1
    if fine.delta >= 1.0:
        keep = 0.0  # fine layer is all-erasure; the pass branch is unreachable
    else:
        keep = min(max((1.0 - coarse.delta) / (1.0 - fine.delta), 0.0), 1.0)
    step = np.zeros((k + 1, k + 1))
    for j in range(k):
        step[j, j] = keep
        step[j, k] = 1.0 - keep
    step[k, k] = 1.0
    return Channel(step)


@dataclass(frozen=True)
class SrCheck:
    name: str
    residual: float
    ok: bool


@dataclass(frozen=True)
class SrReport:
    """Six named checks; ``ok`` only when every residual passed."""

    checks: tuple[SrCheck, ...]
    ok: bool

    def residual(self, name: str) -> float:
        for check in self.checks:
            if check.name == name:
                return check.residual
        raise KeyError(name)


def verify_sr(c: SrConstruction, tol: float = 1e-9) -> SrReport:
    """Re-derive every promised property of a construction from its joint.

    Checks, in order: the three-variable joint factorizes through the chain
    (Markov), the coarse decoder sits on the log-loss curve at d1 (rate and
    expected loss), the fine stage sits at its solved rate with distortion
    within d2, and each reproduction row equals the posterior of the source
    given its merged observation event.
    """
    px = c.problem.px.probs
    fwd = c.second_point.forward.rows
    pz = c.pz_given_xhat.rows
    kept = list(c.second_point.kept_columns)
    r = len(px)
    k = len(kept)

    joint3 = px[:, None, None] * fwd[:, :, None] * pz[None, :, :]

    total_residual = abs(float(joint3.sum()) - 1.0)
    p_xj = joint3.sum(axis=2)
    p_jz = joint3.sum(axis=0)
    p_j = p_xj.sum(axis=0)
    markov_residual = float(
        np.max(np.abs(joint3 * p_j[None, :, None]
                      - p_xj[:, :, None] * p_jz[None, :, :]))
    )
    check_a = max(total_residual, markov_residual)

    # Collapse (x, z) onto merged observation groups.
    p_xz = joint3.sum(axis=1)
    n_groups = len(c.q_rows)
    t = np.zeros((r, n_groups))
    for z in range(k + 1):
        label = c.z_alphabet[z]
        if label in c.q_index:
            t[:, c.q_index[label]] += p_xz[:, z]

    p_g = t.sum(axis=0)
    p_x = t.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(t) - np.log(np.outer(p_x, p_g))
    mi_xq = float(np.where(t > 0.0, t * ratio, 0.0).sum())
    h = entropy(c.problem.px)
    check_b = abs(mi_xq - (h - c.d1))

    loss = 0.0
    for g in range(n_groups):
        mass = t[:, g]
        live = mass > 0.0
        qg = c.q_rows[g].probs[live]
        if np.any(qg == 0.0):
            loss = math.inf
            break
        loss += float(-(mass[live] * np.log(qg)).sum())
    check_c = abs(loss - c.d1) if math.isfinite(loss) else math.inf

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(p_xj) - np.log(np.outer(p_x, p_j))
    mi_xxhat = float(np.where(p_xj > 0.0, p_xj * ratio, 0.0).sum())
    check_d = abs(mi_xxhat - c.second_point.rate)

    e_d2 = float((p_xj * c.problem.distortion[:, kept]).sum())
    check_e = max(e_d2 - c.d2, 0.0)

    check_f = 0.0
    for g in range(n_groups):
        if p_g[g] > 0.0:
            post = t[:, g] / p_g[g]
            check_f = max(check_f, float(np.max(np.abs(post - c.q_rows[g].probs))))

    checks = tuple(
        SrCheck(name, residual, residual <= tol)
        for name, residual in [
            ("markov_factorization", check_a),
            ("coarse_rate", check_b),
            ("coarse_loss", check_c),
            ("fine_rate", check_d),
            ("fine_distortion", check_e),
            ("posterior_rows", check_f),
        ]
    )
    return SrReport(checks=checks, ok=all(ch.ok for ch in checks))


@dataclass(frozen=True)
class TimeshareReport:
    """Outcome of one simulated time-sharing block."""

    n: int
    lossless_prefix: int
    empirical_loss: float
    ideal_rate: float
    seed: int


def _prefix_length(h: float, d: float, n: int) -> int:
    if h == 0.0:
        return n  # degenerate point-mass source; nothing to describe
    return int(round(n * (h - d) / h))


def timeshare_simulate(px: Pmf, d: float, n: int, seed: int) -> TimeshareReport:
    """Simulate one block of the prefix-lossless time-sharing scheme.

    The first k = round(n (H - D) / H) symbols are described exactly (the
    decoder's reproduction is a point mass, loss 0) and the rest not at all
    (reproduction px, loss -ln px(x)).  Sampling is a single
    ``numpy.random.default_rng(seed).choice`` call, so blocks are
    reproducible given (seed, n) and the two-decoder variant sees the same
    sample.
    """
    if n < 1:
        raise ValidationError("timeshare_simulate: n must be >= 1")
    h = entropy(px)
    if d < -1e-12 or d > h + 1e-12:
        raise InfeasibleError(f"timeshare distortion {d!r} outside [0, H(X) = {h!r}]")
    d = min(max(d, 0.0), h)
    k = _prefix_length(h, d, n)
    rng = np.random.default_rng(seed)
    xs = rng.choice(px.n, size=n, p=px.probs)
    codelengths = -np.log(px.probs[xs])
    return TimeshareReport(
        n=n,
        lossless_prefix=k,
        empirical_loss=float(codelengths[k:].sum()) / n,
        ideal_rate=float(codelengths[:k].sum()) / n,
        seed=seed,
    )


def timeshare_two_decoders(px: Pmf, d1: float, d2: float, n: int,
                           seed: int) -> tuple[TimeshareReport, TimeshareReport]:
    """One encoding, two decoders: the coarse one reads a shorter prefix.

    Requires d2 <= d1 so the coarse prefix is a prefix of the fine one.  The
    sample depends only on (seed, n), so each report equals the
    single-decoder simulation at its own distortion.
    """
    if d2 > d1 + 1e-12:
        raise ValidationError(
            f"timeshare_two_decoders: need d2 <= d1, got d1={d1!r}, d2={d2!r}"
        )
    return (
        timeshare_simulate(px, d1, n, seed),
        timeshare_simulate(px, d2, n, seed),
    )
