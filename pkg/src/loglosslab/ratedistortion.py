"""Informational rate-distortion solver for finite alphabets.

The workhorse is fixed-slope alternating minimization (Blahut-Arimoto): for a
slope parameter ``lam`` the Lagrangian

    F = I(X; Xhat) + lam * E[d(X, Xhat)]

is minimized by alternating the forward-channel update (rows proportional to
``marginal * exp(-lam * d)``) with the pushforward of the output marginal.
The objective never increases, so the loop stops once both the objective
decrease and the marginal fixed-point gap fall below tolerance; the gap is
what downstream identity checks inherit, so it is part of the stop rule.

:func:`rd_at_distortion` bisects the slope until the achieved distortion hits
a target, prunes reconstruction columns whose marginal falls below
``PRUNE_EPS``, and re-solves on the reduced alphabet.  Rates are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    InfeasibleError,
    ValidationError,
)
from .probability import (
    Channel,
    Pmf,
    conditional_entropy,
    entropy,
    joint_from_source_and_channel,
    mutual_information,
)

__all__ = [
    "PRUNE_EPS",
    "COLUMN_MATCH_TOL",
    "SourceProblem",
    "hamming_distortion",
    "BaSolution",
    "ba_fixed_slope",
    "distortion_bounds",
    "RdDiagnostics",
    "RdPoint",
    "rd_at_distortion",
    "rd_curve",
    "tilted_information",
    "verify_csiszar_identity",
    "logloss_rd",
    "Lemma1Report",
    "verify_lemma1",
]

# Reconstruction columns below this output-marginal mass are discarded.
PRUNE_EPS = 1e-9
# Distortion columns that agree entrywise within this are considered identical.
COLUMN_MATCH_TOL = 1e-12
# Marginal entries below this are ignored by the fixed-point gap (they are
# headed for pruning, one decade below PRUNE_EPS).
_GAP_MASK_EPS = 1e-10
# The fixed-point gap is relative above this mass and absolute (scaled by
# it) below: an absolute drift of tol * floor moves rate and distortion by
# far less than tol, while a strict ratio test on a near-zero column can
# stall forever at a support-change slope.
_GAP_MASS_FLOOR = 1e-2


def hamming_distortion(r: int, s: int | None = None) -> np.ndarray:
    """0/1 distortion matrix: free on the diagonal, unit cost elsewhere."""
    s = r if s is None else s
    return 1.0 - np.eye(r, s)


@dataclass(frozen=True, eq=False)
class SourceProblem:
    """A source pmf together with a finite nonnegative distortion matrix.

    Rows index source symbols, columns reconstruction symbols.  Two columns
    that coincide entrywise within ``COLUMN_MATCH_TOL`` are rejected: they
    describe the same reconstruction twice and break row-distinctness
    guarantees downstream.
    """

    px: Pmf
    distortion: np.ndarray

    def __post_init__(self):
        try:
            dist = np.array(self.distortion, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"SourceProblem: bad distortion matrix: {exc}") from exc
        if dist.ndim != 2:
            raise ValidationError(f"SourceProblem: distortion must be 2-D, got {dist.shape}")
        if dist.shape[0] != self.px.n:
            raise ValidationError(
                f"SourceProblem: {dist.shape[0]} distortion rows for {self.px.n} source symbols"
            )
        if dist.size == 0:
            raise ValidationError("SourceProblem: distortion must be nonempty")
        if not np.all(np.isfinite(dist)):
            raise ValidationError("SourceProblem: distortion entries must be finite")
        if np.any(dist < 0.0):
            raise ValidationError("SourceProblem: distortion entries must be nonnegative")
        for j in range(dist.shape[1]):
            for k in range(j + 1, dist.shape[1]):
                if np.max(np.abs(dist[:, j] - dist[:, k])) <= COLUMN_MATCH_TOL:
                    raise ValidationError(
                        f"SourceProblem: distortion columns {j} and {k} are identical"
                    )
        dist.setflags(write=False)
        object.__setattr__(self, "distortion", dist)

    @property
    def n_source(self) -> int:
        return self.px.n

    @property
    def n_reconstruction(self) -> int:
        return self.distortion.shape[1]


def distortion_bounds(problem: SourceProblem) -> tuple[float, float]:
    """(D_min, D_max): best achievable expectation and the zero-rate knee.

    D_min pairs every symbol with its cheapest column; D_max is the best
    single-column expectation, beyond which the curve is flat at rate 0.
    """
    px = problem.px.probs
    dist = problem.distortion
    d_min = float(px @ dist.min(axis=1))
    d_max = float((px @ dist).min())
    return d_min, d_max


@dataclass(frozen=True, eq=False)
class BaSolution:
    """Converged fixed-slope solution plus convergence diagnostics."""

    distortion: float
    rate: float
    output_marginal: Pmf
    forward: Channel
    iterations: int
    objective_gap: float
    marginal_gap: float
    objective_trace: np.ndarray | None


class _RawBa:
    """Internal fixed-slope solution on raw arrays (support rows only)."""

    __slots__ = ("q_in", "forward", "marginal", "distortion", "rate",
                 "iterations", "objective_gap", "marginal_gap", "trace")

    def __init__(self, q_in, forward, marginal, distortion, rate,
                 iterations, objective_gap, marginal_gap, trace):
        self.q_in = q_in
        self.forward = forward
        self.marginal = marginal
        self.distortion = distortion
        self.rate = rate
        self.iterations = iterations
        self.objective_gap = objective_gap
        self.marginal_gap = marginal_gap
        self.trace = trace


def _rate_of(pxp: np.ndarray, fwd: np.ndarray, m: np.ndarray) -> float:
    # sum px(x) fwd(j|x) ln(fwd(j|x) / m(j)) with 0 ln 0 = 0.
    with np.errstate(divide="ignore", invalid="ignore"):
        term = fwd * (np.log(fwd) - np.log(m)[None, :])
    term = np.where(fwd > 0.0, term, 0.0)
    return max(float(pxp @ term.sum(axis=1)), 0.0)


def _ba_core(pxp: np.ndarray, dist: np.ndarray, lam: float, tol: float,
             max_iter: int, track: bool, q0: np.ndarray | None = None) -> _RawBa:
    """Alternating minimization at fixed slope; pxp must be strictly positive."""
    r, s = dist.shape
    shift = dist.min(axis=1)
    expd = np.exp(-lam * (dist - shift[:, None]))  # row max is exactly 1
    shift_term = lam * float(pxp @ shift)

    q = np.full(s, 1.0 / s) if q0 is None else q0
    f_prev = math.inf
    gap_cp = math.inf
    revives = 0
    tried_drops: set[tuple[int, ...]] = set()
    trace: list[float] | None = [] if track else None
    d_f = math.inf
    gap = math.inf

    it = 0
    while it < max_iter:
        it += 1
        weighted = expd * q[None, :]
        z = weighted.sum(axis=1)
        fwd = weighted / z[:, None]
        m = pxp @ fwd
        f_val = -float(pxp @ np.log(z)) + shift_term
        if trace is not None:
            trace.append(f_val)

        big = m > _GAP_MASK_EPS
        drift = np.abs(m[big] - q[big]) / np.maximum(q[big], _GAP_MASS_FLOOR)
        gap = float(drift.max()) if drift.size else 0.0
        d_f = abs(f_prev - f_val)
        if d_f < tol and gap < tol:
            # The mass-floored gap under-polices columns below the floor: a
            # live column parked at the wrong tiny mass regrows too slowly
            # to trip it.  Gate the return on the exact exclusion score of
            # every sub-floor column; violators get a direct stationarity
            # solve on the widened support, else a re-seed, instead of
            # returning a false optimum.
            kt = pxp @ (expd / z[:, None])
            crushed = (q < _GAP_MASS_FLOOR) & (kt > 1.0 + 10.0 * tol)
            if np.any(crushed):
                seed = q.copy()
                seed[crushed] = np.maximum(seed[crushed], 10.0 * _GAP_MASK_EPS)
                q_new = _kt_newton(pxp, expd, seed, tol)
                if q_new is not None:
                    q = q_new
                    f_prev = math.inf
                    gap_cp = math.inf
                    continue
                revives += 1
                if revives > 8:
                    raise ConvergenceError(
                        "fixed-slope solve oscillates: a column keeps "
                        f"re-entering the support (exclusion score "
                        f"{float(kt[crushed].max()):.12g})",
                        gap=float(kt[crushed].max() - 1.0),
                    )
                q = m.copy()
                q[crushed] = np.maximum(q[crushed], 0.05)
                q /= q.sum()
                f_prev = math.inf
                gap_cp = math.inf
                tried_drops.clear()
                continue
            q_converged = q
            q = m
            return _RawBa(
                q_in=q_converged, forward=fwd, marginal=m,
                distortion=float(pxp @ (fwd * dist).sum(axis=1)),
                rate=_rate_of(pxp, fwd, m),
                iterations=it, objective_gap=d_f, marginal_gap=gap,
                trace=np.array(trace) if trace is not None else None,
            )

        # Columns near the edge of the support stall the fixed-point gap:
        # at a support-change slope the marginal decays like 1/iteration,
        # just inside it the decay is geometric with rate 1 - O(mass), and
        # just outside it a re-entering column grows the same way.  The
        # stall signature is the gap improving by less than 30% since the
        # previous checkpoint; healthy geometric convergence shrinks it far
        # more per 4096 iterations, and an objective-flatness test would
        # misfire on a slowly settling low-mass column whose gap is still
        # contracting.  On a stall, first try removing the strictly
        # decaying violators, accepting the reduced optimum only if each
        # dropped column j satisfies the exact exclusion condition
        # sum_x px exp(-lam d_xj) / z_x <= 1.  If the slow mode is instead
        # a live column settling toward a tiny equilibrium mass (a slope
        # just below that column's exit point), no support change helps and
        # plain iteration contracts at 1 - O(mass); a Newton solve of the
        # stationarity system on the current support lands on that fixed
        # point directly, verified by the same exclusion certificate.
        # Failing both, leap with an exact line search along the current
        # displacement: the objective is convex along any line, so the 1-D
        # minimum is a safe jump across the slow mode, and the unchanged
        # stop criterion still decides convergence.  The leap declines
        # itself once the attainable decrease sits inside float noise;
        # plain iteration finishes the remaining sub-noise crawl instead
        # of a noise-picked jump.
        if it % 4096 == 0:
            stalled = gap > 0.7 * gap_cp
            gap_cp = gap
            if not stalled:
                f_prev = f_val
                q = m
                continue
            col_drift = np.abs(m - q) / np.maximum(q, _GAP_MASS_FLOOR)
            violating = big & (col_drift >= tol)
            dying = violating & (m < q)
            if np.any(violating):
                key = tuple(int(j) for j in np.flatnonzero(dying))
                if np.any(dying) and key not in tried_drops:
                    tried_drops.add(key)
                    keep = np.flatnonzero(~dying)
                    q_warm = m[keep] / m[keep].sum()
                    try:
                        sub = _ba_core(pxp, dist[:, keep], lam, tol,
                                       max_iter - it, track, q0=q_warm)
                    except ConvergenceError:
                        sub = None
                    if sub is not None:
                        q_full = np.zeros(s)
                        q_full[keep] = sub.marginal
                        z_full = (expd * q_full[None, :]).sum(axis=1)
                        t_drop = pxp @ (expd[:, dying] / z_full[:, None])
                        if np.all(t_drop <= 1.0 + 10.0 * tol):
                            return _expand_raw(sub, keep, s, it, trace)

                q_new = _kt_newton(pxp, expd, q, tol)
                if q_new is not None:
                    q = q_new
                    it += 1
                    f_prev = math.inf
                    continue

                qa = m
                wb = expd * qa[None, :]
                qb = pxp @ (wb / wb.sum(axis=1)[:, None])
                q_leap = _leap(pxp, expd, qa, qb - qa)
                if q_leap is not None:
                    q = q_leap
                    it += 1
                    f_prev = math.inf
                    continue

        f_prev = f_val
        q = m

    raise ConvergenceError(
        f"fixed-slope solve did not converge in {max_iter} iterations "
        f"(objective gap {d_f:.3e}, marginal gap {gap:.3e})",
        gap=max(d_f, gap),
    )


def _expand_raw(sub: _RawBa, keep: np.ndarray, s: int, parent_iters: int,
                parent_trace: list[float] | None) -> _RawBa:
    """Re-embed a reduced-column solution into the full column set."""
    q_in = np.zeros(s)
    q_in[keep] = sub.q_in
    fwd = np.zeros((sub.forward.shape[0], s))
    fwd[:, keep] = sub.forward
    marginal = np.zeros(s)
    marginal[keep] = sub.marginal
    trace = None
    if parent_trace is not None:
        trace = np.concatenate([np.asarray(parent_trace), sub.trace])
    return _RawBa(
        q_in=q_in, forward=fwd, marginal=marginal,
        distortion=sub.distortion, rate=sub.rate,
        iterations=parent_iters + sub.iterations,
        objective_gap=sub.objective_gap, marginal_gap=sub.marginal_gap,
        trace=trace,
    )


def _leap(pxp: np.ndarray, expd: np.ndarray, q0: np.ndarray,
          d: np.ndarray) -> np.ndarray | None:
    """Minimize the fixed-slope objective along ``q0 + theta d``, theta >= 1.

    The per-symbol partition sums are linear in q, so the objective is
    convex along the ray and a bracketed golden-section search finds its
    1-D minimum; theta is capped just short of the first coordinate hitting
    zero so live columns can never be zeroed outright.  Returns None when
    the best point beats the natural step by less than float noise: a leap
    chosen by noise would kick a nearly converged iterate off the fixed
    point instead of helping it.
    """
    if not np.any(d != 0.0):
        return None
    dn = d < 0.0
    cap = float((q0[dn] / -d[dn]).min()) * (1.0 - 1e-9) if np.any(dn) else 1e12
    cap = max(cap, 1.0)
    z0 = expd @ q0
    dz = expd @ d

    def f(theta: float) -> float:
        return -float(pxp @ np.log(z0 + theta * dz))

    grid = [1.0]
    while grid[-1] * 2.0 < cap:
        grid.append(grid[-1] * 2.0)
    grid.append(cap)
    values = [f(th) for th in grid]
    best = int(np.argmin(values))
    f_nat = values[0]
    a = grid[best - 1] if best > 0 else grid[0]
    b = grid[best + 1] if best + 1 < len(grid) else grid[-1]
    phi = 0.5 * (math.sqrt(5.0) - 1.0)
    c1 = b - phi * (b - a)
    c2 = a + phi * (b - a)
    f1, f2 = f(c1), f(c2)
    for _ in range(72):
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - phi * (b - a)
            f1 = f(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + phi * (b - a)
            f2 = f(c2)
    if f_nat - min(values[best], f1, f2) < 1e-13 * max(1.0, abs(f_nat)):
        return None
    q = np.maximum(q0 + 0.5 * (a + b) * d, 0.0)
    return q / q.sum()


def _kt_newton(pxp: np.ndarray, expd: np.ndarray, q_seed: np.ndarray,
               tol: float) -> np.ndarray | None:
    """Solve the stationarity system t_j(q) = 1 on a fixed support.

    t_j = sum_x px exp(-lam d_xj) / z_x is each column's exclusion score;
    at an optimum it is 1 on the support and <= 1 off it.  The Jacobian of
    t is minus the Gram matrix of the score vectors, so a damped Newton
    step is a plain positive-definite solve, and sum_j q_j t_j = 1 holds
    for any q, which renormalizes the solution automatically.  Returns the
    polished q only when the residual closes and every off-support column
    passes the exclusion certificate; any failure returns None and the
    caller falls back to plain iteration.
    """
    sup = np.flatnonzero(q_seed > _GAP_MASK_EPS)
    if sup.size == 0:
        return None
    qs = q_seed[sup].copy()
    e_sup = expd[:, sup]
    rmax = math.inf
    for _ in range(60):
        z = e_sup @ qs
        if not np.all(z > 0.0):
            return None
        scores = e_sup / z[:, None]
        res = pxp @ scores - 1.0
        rmax = float(np.max(np.abs(res)))
        if not math.isfinite(rmax) or rmax > 0.5:
            return None
        if rmax < 1e-13:
            break
        gram = (scores * pxp[:, None]).T @ scores
        try:
            delta = np.linalg.solve(gram, res)
        except np.linalg.LinAlgError:
            return None
        step = 1.0
        for _h in range(50):
            q_try = qs + step * delta
            if q_try.min() > -1e-12:  # grazing zero is a valid face point
                break
            step *= 0.5
        else:
            return None
        qs = np.maximum(q_try, 0.0)
    if rmax >= 1e-13:
        return None
    q = np.zeros(q_seed.shape[0])
    q[sup] = qs
    z = expd @ q
    if not np.all(z > 0.0):
        return None
    if np.any(pxp @ (expd / z[:, None]) > 1.0 + 10.0 * tol):
        return None
    return q


def ba_fixed_slope(problem: SourceProblem, lam: float, tol: float = 1e-10,
                   max_iter: int = 300_000, track_objective: bool = False) -> BaSolution:
    """Minimize I(X; Xhat) + lam * E[d] by alternating updates.

    Args:
        problem: source pmf and distortion matrix.
        lam: nonnegative slope weight on expected distortion.
        tol: both the objective decrease and the output-marginal fixed-point
            gap must fall below this to stop.
        max_iter: iteration budget; exceeding it raises ConvergenceError
            carrying the last gap.
        track_objective: record the objective after every update so callers
            can inspect monotonicity.

    Returns:
        BaSolution with achieved distortion, rate in nats, output marginal,
        and forward channel on the full reconstruction alphabet.
    """
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise ValidationError(f"ba_fixed_slope: lam must be finite and >= 0, got {lam!r}")
    if tol <= 0.0:
        raise ValidationError("ba_fixed_slope: tol must be positive")
    px = problem.px.probs
    support = np.flatnonzero(px > 0.0)
    raw = _ba_core(px[support], problem.distortion[support], lam, tol, max_iter,
                   track_objective)
    fwd = _full_forward(problem.distortion, support, raw, lam)
    return BaSolution(
        distortion=raw.distortion, rate=raw.rate,
        output_marginal=Pmf(raw.marginal), forward=Channel(fwd),
        iterations=raw.iterations, objective_gap=raw.objective_gap,
        marginal_gap=raw.marginal_gap, objective_trace=raw.trace,
    )


def _full_forward(dist: np.ndarray, support: np.ndarray, raw: _RawBa,
                  lam: float) -> np.ndarray:
    """Expand forward rows back to the full source alphabet.

    Zero-mass symbols carry no probability but still get a well-defined row:
    the same exponential tilt of the converged marginal, computed in log
    space so large slopes cannot underflow a whole row.
    """
    r = dist.shape[0]
    fwd = np.empty((r, raw.forward.shape[1]))
    fwd[support] = raw.forward
    dead = np.setdiff1d(np.arange(r), support)
    if dead.size:
        with np.errstate(divide="ignore"):
            logq = np.log(raw.q_in)  # dropped columns sit at exactly zero
        for x in dead:
            logits = logq - lam * dist[x]
            logits -= logits.max()
            row = np.exp(logits)
            fwd[x] = row / row.sum()
    return fwd


def _mix_on_face(pxp: np.ndarray, dist: np.ndarray, lam: float, raw_lo: _RawBa,
                 raw_hi: _RawBa, target: float, tol_d: float) -> _RawBa | None:
    """Mix the two one-sided optima across an affine stretch of the curve.

    At a slope where the optimal output support changes, achieved distortion
    can jump while the Lagrangian value stays flat: the minimizer set is a
    face on which every per-symbol partition sum is constant, so distortion
    is linear in the mixing weight and any mixture is itself an exact
    optimum.  Returns None when the two solutions do not actually span such
    a face (then the collapse was a genuine failure).
    """
    d_lo, d_hi = raw_lo.distortion, raw_hi.distortion
    span = d_lo - d_hi
    if span <= tol_d or not (d_hi - tol_d < target < d_lo + tol_d):
        return None
    shift = dist.min(axis=1)
    expd = np.exp(-lam * (dist - shift[:, None]))
    theta = (target - d_hi) / span
    for _ in range(8):
        q = theta * raw_lo.marginal + (1.0 - theta) * raw_hi.marginal
        w = expd * q[None, :]
        z = w.sum(axis=1)
        fwd = w / z[:, None]
        m = pxp @ fwd
        d_mix = float(pxp @ (fwd * dist).sum(axis=1))
        if abs(d_mix - target) <= 0.5 * tol_d:
            break
        theta = min(max(theta + (target - d_mix) / span, 0.0), 1.0)
    else:
        return None
    big = m > _GAP_MASK_EPS
    drift = np.abs(m[big] - q[big]) / np.maximum(q[big], _GAP_MASS_FLOOR)
    gap = float(drift.max()) if drift.size else 0.0
    if gap > 1e-8:
        return None
    return _RawBa(
        q_in=q, forward=fwd, marginal=m, distortion=d_mix,
        rate=_rate_of(pxp, fwd, m),
        iterations=raw_lo.iterations + raw_hi.iterations,
        objective_gap=max(raw_lo.objective_gap, raw_hi.objective_gap),
        marginal_gap=gap, trace=None,
    )


def _bisect_slope(pxp: np.ndarray, dist: np.ndarray, target: float, tol_d: float,
                  tol_ba: float, max_iter: int) -> tuple[float, _RawBa, int, int]:
    """Find lam with achieved distortion within tol_d of target.

    Achieved distortion is non-increasing in lam; the bracket upper end is
    doubled until it undershoots, then halved.  Returns (lam, solution,
    total BA iterations, BA call count).
    """
    calls = 0
    iters = 0

    def solve(lam: float) -> _RawBa:
        nonlocal calls, iters
        raw = _ba_core(pxp, dist, lam, tol_ba, max_iter, track=False)
        calls += 1
        iters += raw.iterations
        return raw

    lo = 0.0
    raw_lo = solve(lo)
    if abs(raw_lo.distortion - target) <= tol_d:
        return lo, raw_lo, iters, calls

    hi = 1.0
    raw_hi = None
    for _ in range(70):
        raw_hi = solve(hi)
        if abs(raw_hi.distortion - target) <= tol_d:
            return hi, raw_hi, iters, calls
        if raw_hi.distortion < target:
            break
        lo, raw_lo = hi, raw_hi
        hi *= 2.0
    else:
        raise ConvergenceError(
            f"slope bracket expansion failed at lam={hi:g} "
            f"(achieved {raw_hi.distortion:.12g}, target {target:.12g})",
            gap=raw_hi.distortion - target,
        )

    for _ in range(300):
        mid = 0.5 * (lo + hi)
        raw = solve(mid)
        if abs(raw.distortion - target) <= tol_d:
            return mid, raw, iters, calls
        if raw.distortion > target:
            lo, raw_lo = mid, raw
        else:
            hi, raw_hi = mid, raw
        if hi - lo <= 1e-15 * max(1.0, hi):
            # Achieved distortion jumps across a vanishing bracket: the
            # minimizer at this slope is not unique and the curve has an
            # affine stretch.  The two one-sided solutions span the face.
            mixed = _mix_on_face(pxp, dist, mid, raw_lo, raw_hi, target, tol_d)
            if mixed is not None:
                return mid, mixed, iters, calls
            raise ConvergenceError(
                f"slope bracket collapsed at lam={mid:.12g} with achieved "
                f"{raw.distortion:.12g} vs target {target:.12g}; the curve "
                "appears non-strictly convex here",
                gap=raw.distortion - target,
            )
    raise ConvergenceError("slope bisection budget exhausted", gap=raw.distortion - target)


@dataclass(frozen=True)
class RdDiagnostics:
    """Solver effort and residuals for one rate-distortion point."""

    ba_iterations: int
    ba_calls: int
    objective_gap: float
    marginal_gap: float
    achieved_distortion: float
    prune_rounds: int


@dataclass(frozen=True, eq=False)
class RdPoint:
    """One point on the informational rate-distortion curve.

    ``forward``, ``output_marginal``, ``reverse``, and ``tilted`` live on the
    kept reconstruction columns (original indices in ``kept_columns``).  The
    tilted information is evaluated at the achieved distortion, which matches
    the target within the bisection tolerance; this keeps E[tilted] equal to
    the rate at full solver precision.
    """

    target_distortion: float
    rate: float
    lambda_star: float
    forward: Channel
    output_marginal: Pmf
    reverse: Channel
    tilted: np.ndarray
    kept_columns: tuple[int, ...]
    diagnostics: RdDiagnostics


def _tilted_vector(dist_kept: np.ndarray, m: np.ndarray, lam: float,
                   d_value: float) -> np.ndarray:
    # j(x) = -lam * D - ln sum_j m(j) exp(-lam d(x, j)), stabilized per row.
    logits = np.log(m)[None, :] - lam * dist_kept
    peak = logits.max(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(np.exp(logits - peak).sum(axis=1))
    out = -lam * d_value - lse
    out.setflags(write=False)
    return out


def rd_at_distortion(problem: SourceProblem, d: float, tol: float = 1e-8,
                     max_iter: int = 300_000) -> RdPoint:
    """Solve R(D) at a target distortion by bisecting the slope.

    Args:
        problem: source pmf and distortion matrix.
        d: target expected distortion, within [D_min, D_max].
        tol: bisection stops once |achieved - d| <= tol.  The inner
            fixed-slope tolerance is min(1e-10, tol / 100).
        max_iter: per fixed-slope-call iteration budget.

    Returns:
        RdPoint with rate, slope, forward and reverse channels on kept
        columns, the tilted-information vector, and diagnostics.

    Raises:
        InfeasibleError: d outside [D_min, D_max] (1e-12 slack).
        ConvergenceError: the inner solve or the bisection failed.
    """
    if tol <= 0.0:
        raise ValidationError("rd_at_distortion: tol must be positive")
    d_min, d_max = distortion_bounds(problem)
    if d < d_min - 1e-12 or d > d_max + 1e-12:
        raise InfeasibleError(
            f"target distortion {d!r} outside feasible interval "
            f"[{d_min!r}, {d_max!r}]"
        )
    target = min(max(d, d_min), d_max)
    tol_ba = min(1e-10, tol / 100.0)

    px = problem.px.probs
    support = np.flatnonzero(px > 0.0)
    pxp = px[support]
    cols = np.arange(problem.n_reconstruction)

    total_iters = 0
    total_calls = 0
    prune_rounds = 0
    for _ in range(8):
        sub = problem.distortion[np.ix_(support, cols)]
        lam, raw, iters, calls = _bisect_slope(pxp, sub, target, tol, tol_ba, max_iter)
        total_iters += iters
        total_calls += calls
        keep_local = raw.marginal >= PRUNE_EPS
        if np.all(keep_local):
            break
        cols = cols[keep_local]
        prune_rounds += 1
    else:
        raise ConvergenceError("column pruning did not stabilize after 8 rounds")

    dist_kept = problem.distortion[:, cols]
    fwd = _full_forward(dist_kept, support, raw, lam)
    m = raw.marginal
    reverse = Channel((px[None, :] * fwd.T) / m[:, None])
    tilted = _tilted_vector(dist_kept, m, lam, raw.distortion)

    return RdPoint(
        target_distortion=d,
        rate=raw.rate,
        lambda_star=lam,
        forward=Channel(fwd),
        output_marginal=Pmf(m),
        reverse=reverse,
        tilted=tilted,
        kept_columns=tuple(int(c) for c in cols),
        diagnostics=RdDiagnostics(
            ba_iterations=total_iters,
            ba_calls=total_calls,
            objective_gap=raw.objective_gap,
            marginal_gap=raw.marginal_gap,
            achieved_distortion=raw.distortion,
            prune_rounds=prune_rounds,
        ),
    )


def rd_curve(problem: SourceProblem, grid, tol: float = 1e-8) -> list[RdPoint]:
    """One rd_at_distortion point per grid value."""
    return [rd_at_distortion(problem, float(d), tol=tol) for d in grid]


def tilted_information(problem: SourceProblem, point: RdPoint) -> np.ndarray:
    """Per-symbol tilted information at a solved point, in nats.

    Recomputed from the point's marginal, slope, and achieved distortion;
    equals ``point.tilted``.  Its expectation under the source matches the
    point's rate.
    """
    dist_kept = problem.distortion[:, list(point.kept_columns)]
    return _tilted_vector(dist_kept, point.output_marginal.probs,
                          point.lambda_star, point.diagnostics.achieved_distortion)


def verify_csiszar_identity(problem: SourceProblem, point: RdPoint) -> float:
    """Max residual of the per-pair identity linking tilted information,
    information density, and distortion.

    At an exact optimum, for every source symbol x and kept column j,

        tilted(x) = ln(fwd(j|x) / m(j)) + lam * d(x, j) - lam * D

    holds with residual zero; the returned max over all pairs measures how
    far the solved point is from stationarity.  Entries whose forward
    probability underflowed to zero are skipped (they are not representable).
    """
    dist_kept = problem.distortion[:, list(point.kept_columns)]
    fwd = point.forward.rows
    m = point.output_marginal.probs
    lam = point.lambda_star
    d_value = point.diagnostics.achieved_distortion
    with np.errstate(divide="ignore"):
        dens = np.log(fwd) - np.log(m)[None, :]
    resid = np.abs(point.tilted[:, None] - dens - lam * dist_kept + lam * d_value)
    resid = np.where(fwd > 0.0, resid, 0.0)
    return float(resid.max())


def logloss_rd(px: Pmf, d: float) -> float:
    """The log-loss rate-distortion function H(X) - D, in nats."""
    h = entropy(px)
    if d < -1e-12 or d > h + 1e-12:
        raise InfeasibleError(f"log-loss distortion {d!r} outside [0, H(X) = {h!r}]")
    return max(h - min(max(d, 0.0), h), 0.0)


@dataclass(frozen=True)
class Lemma1Report:
    """Outcome of checking an achieving conditional for the log-loss curve.

    A family of reproduction distributions achieves the log-loss curve at
    distortion D exactly when each row equals the posterior of the source
    given the chosen reproduction; then D is the conditional entropy, the
    mutual information is H(X) - D, and the expected log loss equals D.
    """

    posterior_deviation: float
    conditional_entropy: float
    mutual_info: float
    expected_loss: float
    rate_residual: float
    loss_residual: float
    failures: tuple[str, ...]
    ok: bool


def verify_lemma1(px: Pmf, q_rows, weights: Channel, tol: float = 1e-9) -> Lemma1Report:
    """Check posterior consistency and its two consequences.

    Args:
        px: source distribution.
        q_rows: one reproduction Pmf per channel output.
        weights: conditional distribution of the reproduction index given
            the source symbol.
        tol: acceptance tolerance for every condition.

    Returns:
        Lemma1Report naming each failed condition in ``failures``.
    """
    if weights.n_in != px.n:
        raise ValidationError(f"verify_lemma1: weights have {weights.n_in} rows, pmf has {px.n}")
    rows = list(q_rows)
    if len(rows) != weights.n_out:
        raise ValidationError(
            f"verify_lemma1: {len(rows)} reproduction rows for {weights.n_out} outputs"
        )
    for k, row in enumerate(rows):
        if row.n != px.n:
            raise ValidationError(f"verify_lemma1: row {k} has alphabet {row.n}, expected {px.n}")

    joint = joint_from_source_and_channel(px, weights)
    pq = joint.table.sum(axis=0)

    post_dev = 0.0
    for k in np.flatnonzero(pq > 0.0):
        post = joint.table[:, k] / pq[k]
        post_dev = max(post_dev, float(np.max(np.abs(post - rows[k].probs))))

    d_value = conditional_entropy(joint)
    h = entropy(px)
    mi = mutual_information(px, weights)

    expected_loss = 0.0
    for k in range(weights.n_out):
        mass = joint.table[:, k]
        live = mass > 0.0
        if not np.any(live):
            continue
        qk = rows[k].probs[live]
        if np.any(qk == 0.0):
            expected_loss = math.inf
            break
        expected_loss += float(-(mass[live] * np.log(qk)).sum())

    rate_residual = abs(mi - (h - d_value))
    loss_residual = abs(expected_loss - d_value) if math.isfinite(expected_loss) else math.inf

    failures = []
    if post_dev > tol:
        failures.append("posterior_consistency")
    if rate_residual > tol:
        failures.append("rate_identity")
    if loss_residual > tol:
        failures.append("expected_loss")
    return Lemma1Report(
        posterior_deviation=post_dev,
        conditional_entropy=d_value,
        mutual_info=mi,
        expected_loss=expected_loss,
        rate_residual=rate_residual,
        loss_residual=loss_residual,
        failures=tuple(failures),
        ok=not failures,
    )
