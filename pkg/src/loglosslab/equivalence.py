"""The corresponding log-loss problem for a fixed-cardinality source code.

Given a source, a distortion measure, and a message budget M, the exact
one-shot optimum D*(M) picks out a point on the informational curve.  The
corresponding problem keeps the same source and messages but reproduces with
probability distributions, scored by log loss, where the available rows are
the reverse-channel posteriors of the solved point.  Under that dictionary:

  * every code pair satisfies an affine identity,
        E[log loss] = H(X | Xhat*) + lambda* (E[d] - D*(M)),
    so expected log loss is a fixed increasing affine function of expected
    distortion;
  * the log-loss value of the mapped optimum is the conditional entropy
    H(X | Xhat*), and no code with M messages does better;
  * the two argmin sets correspond one-to-one.

Instances whose D*(M) sits on a curve endpoint (where the slope degenerates)
are rejected as out of scope.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import (
    DegenerateInstanceError,
    InstanceTooLargeError,
    MappingError,
    ValidationError,
    VerificationError,
)
from .oneshot import OneShotCode, expected_distortion, solve_avg
from .probability import Pmf, conditional_entropy, joint_from_source_and_channel
from .ratedistortion import RdPoint, SourceProblem, distortion_bounds, rd_at_distortion

__all__ = [
    "ROW_MATCH_TOL",
    "ENDPOINT_TOL",
    "CorrespondingProblem",
    "LogLossCode",
    "build_corresponding",
    "map_code",
    "unmap_code",
    "expected_log_loss",
    "Theorem1Check",
    "verify_theorem1",
    "suboptimality_gap",
    "IdentitySweep",
    "identity_sweep",
    "CoincidenceReport",
    "verify_optimum_coincidence",
]

# Max-norm radius within which a reproduction row is identified with a
# reverse-channel row when carrying codes back.
ROW_MATCH_TOL = 1e-9
# D*(M) within this of a curve endpoint is treated as degenerate.
ENDPOINT_TOL = 1e-9
_CODE_ENUM_GUARD = 10_000_000


@dataclass(frozen=True, eq=False)
class LogLossCode:
    """One-shot code whose decoder emits probability distributions."""

    n_messages: int
    encoder: tuple[int, ...]
    decoder_rows: tuple[Pmf, ...]

    def __post_init__(self):
        if self.n_messages < 1:
            raise ValidationError("LogLossCode: need at least one message")
        if len(self.decoder_rows) != self.n_messages:
            raise ValidationError(
                f"LogLossCode: {len(self.decoder_rows)} rows for {self.n_messages} messages"
            )
        for x, msg in enumerate(self.encoder):
            if not 0 <= msg < self.n_messages:
                raise ValidationError(f"LogLossCode: encoder[{x}] = {msg} out of range")


@dataclass(frozen=True, eq=False)
class CorrespondingProblem:
    """The log-loss problem equivalent to a fixed-M average-distortion problem.

    ``y_rows`` are the reverse-channel rows of ``source_point`` (one per kept
    reconstruction column, in kept order); they are the only reproduction
    values an optimal log-loss decoder ever needs.
    """

    problem: SourceProblem
    n_messages: int
    d_star_m: float
    lambda_star: float
    h_x_given_xhat: float
    y_rows: tuple[Pmf, ...]
    source_point: RdPoint
    optimal_code: OneShotCode

    @property
    def px(self) -> Pmf:
        return self.problem.px


def build_corresponding(problem: SourceProblem, n_messages: int,
                        tol: float = 1e-8) -> CorrespondingProblem:
    """Solve D*(M), solve the curve there, and assemble the dictionary.

    Raises DegenerateInstanceError when D*(M) lands on a curve endpoint
    (slope divergence or the zero-rate knee); the equivalence needs an
    interior point.
    """
    code, d_star = solve_avg(problem, n_messages)
    d_min, d_max = distortion_bounds(problem)
    if d_star <= d_min + ENDPOINT_TOL or d_star >= d_max - ENDPOINT_TOL:
        raise DegenerateInstanceError(
            f"D*({n_messages}) = {d_star!r} sits at a curve endpoint of "
            f"[{d_min!r}, {d_max!r}]; the corresponding problem degenerates there"
        )
    point = rd_at_distortion(problem, d_star, tol=tol)

    rows = point.reverse.rows
    for a in range(rows.shape[0]):
        for b in range(a + 1, rows.shape[0]):
            if float(np.max(np.abs(rows[a] - rows[b]))) <= ROW_MATCH_TOL:
                raise VerificationError(
                    f"reverse rows {a} and {b} coincide within {ROW_MATCH_TOL}; "
                    "distinct distortion columns should force distinct posteriors"
                )

    if point.rate > math.log(n_messages) + 1e-9:
        raise VerificationError(
            f"rate {point.rate!r} exceeds ln M = {math.log(n_messages)!r} at D*(M)"
        )

    h = conditional_entropy(joint_from_source_and_channel(problem.px, point.forward))
    return CorrespondingProblem(
        problem=problem,
        n_messages=n_messages,
        d_star_m=d_star,
        lambda_star=point.lambda_star,
        h_x_given_xhat=h,
        y_rows=tuple(point.reverse.row(j) for j in range(rows.shape[0])),
        source_point=point,
        optimal_code=code,
    )


def map_code(cp: CorrespondingProblem, code: OneShotCode) -> LogLossCode:
    """Carry a source code across: same encoder, posterior rows as decoder."""
    if code.n_messages != cp.n_messages:
        raise ValidationError(
            f"map_code: code has {code.n_messages} messages, problem has {cp.n_messages}"
        )
    if len(code.encoder) != cp.px.n:
        raise ValidationError("map_code: encoder length mismatch")
    col_to_row = {col: j for j, col in enumerate(cp.source_point.kept_columns)}
    rows = []
    for m, col in enumerate(code.decoder):
        if col not in col_to_row:
            raise MappingError(
                f"map_code: decoder[{m}] uses reconstruction column {col}, "
                "which was pruned from the solved point"
            )
        rows.append(cp.y_rows[col_to_row[col]])
    return LogLossCode(n_messages=code.n_messages, encoder=code.encoder,
                       decoder_rows=tuple(rows))


def unmap_code(cp: CorrespondingProblem, lcode: LogLossCode) -> OneShotCode:
    """Carry a log-loss code back by matching rows in max norm.

    Every decoder row must sit within ROW_MATCH_TOL of some reverse-channel
    row; otherwise the code has no counterpart and MappingError names the
    offending message.
    """
    if lcode.n_messages != cp.n_messages:
        raise ValidationError(
            f"unmap_code: code has {lcode.n_messages} messages, problem has {cp.n_messages}"
        )
    decoder = []
    for m, row in enumerate(lcode.decoder_rows):
        if row.n != cp.px.n:
            raise ValidationError(f"unmap_code: row {m} has alphabet {row.n}")
        dists = [float(np.max(np.abs(row.probs - y.probs))) for y in cp.y_rows]
        j = int(np.argmin(dists))
        if dists[j] > ROW_MATCH_TOL:
            raise MappingError(
                f"unmap_code: decoder row for message {m} is {dists[j]:.3e} away "
                f"from the nearest reverse row, beyond {ROW_MATCH_TOL}"
            )
        decoder.append(cp.source_point.kept_columns[j])
    return OneShotCode(n_messages=lcode.n_messages, encoder=lcode.encoder,
                       decoder=tuple(decoder))


def expected_log_loss(px: Pmf, lcode: LogLossCode) -> float:
    """E[-ln q(X)] where q is the decoded row for X's message."""
    if len(lcode.encoder) != px.n:
        raise ValidationError("expected_log_loss: encoder length mismatch")
    total = 0.0
    for x in px.support():
        qx = float(lcode.decoder_rows[lcode.encoder[x]].probs[x])
        if qx == 0.0:
            return math.inf
        total += px.probs[x] * -math.log(qx)
    return total


@dataclass(frozen=True)
class Theorem1Check:
    """Both sides of the affine identity for one code pair."""

    lhs: float
    rhs: float
    residual: float
    expected_d: float


def verify_theorem1(cp: CorrespondingProblem, code: OneShotCode,
                    tol: float = 1e-9) -> Theorem1Check:
    """Evaluate the identity for one code and check the floor.

    lhs is the expected log loss of the mapped code; rhs is
    h + lambda* (E[d] - D*(M)).  The lhs must also stay above h (the value
    of the optimum) up to tol; a violation raises VerificationError.
    """
    lcode = map_code(cp, code)
    lhs = expected_log_loss(cp.px, lcode)
    e_d = expected_distortion(cp.problem, code)
    rhs = cp.h_x_given_xhat + cp.lambda_star * (e_d - cp.d_star_m)
    if lhs < cp.h_x_given_xhat - tol:
        raise VerificationError(
            f"expected log loss {lhs!r} fell below the optimum {cp.h_x_given_xhat!r}"
        )
    return Theorem1Check(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs), expected_d=e_d)


def suboptimality_gap(cp: CorrespondingProblem, code: OneShotCode) -> tuple[float, float]:
    """(log-loss regret, lambda* times distortion regret); equal for every code."""
    check = verify_theorem1(cp, code)
    return (check.lhs - cp.h_x_given_xhat,
            cp.lambda_star * (check.expected_d - cp.d_star_m))


def _cell_cost_tables(cp: CorrespondingProblem) -> tuple[np.ndarray, np.ndarray]:
    """Per-symbol costs against each kept column: distortion and log loss."""
    px = cp.px.probs
    kept = list(cp.source_point.kept_columns)
    w_d = px[:, None] * cp.problem.distortion[:, kept]
    rev = cp.source_point.reverse.rows  # rows: kept column, cols: x
    with np.errstate(divide="ignore"):
        neg_log = -np.log(rev.T)
    w_l = np.where(px[:, None] > 0.0, px[:, None] * neg_log, 0.0)
    return w_d, w_l


def _decoder_cost_grid(a: np.ndarray) -> np.ndarray:
    # a: (M, k) per-message costs -> grid over all decoder tuples, shape (k,)*M.
    return reduce(np.add.outer, list(a))


@dataclass(frozen=True)
class IdentitySweep:
    """Identity residuals over many code pairs."""

    n_codes: int
    max_residual: float
    min_loss: float
    min_distortion: float
    sampled: bool


def identity_sweep(cp: CorrespondingProblem, samples: int | None = None,
                   seed: int | None = None) -> IdentitySweep:
    """Residual of the affine identity over code pairs.

    Exhaustive over all M^r encoders and k^M decoders when samples is None
    (guarded at 10^7 pairs); otherwise over `samples` uniformly seeded draws.
    """
    r = cp.px.n
    m_count = cp.n_messages
    k = len(cp.y_rows)
    w_d, w_l = _cell_cost_tables(cp)
    h = cp.h_x_given_xhat
    lam = cp.lambda_star
    d_star = cp.d_star_m

    max_resid = 0.0
    min_loss = math.inf
    min_d = math.inf

    if samples is None:
        total = (m_count ** r) * (k ** m_count)
        if total > _CODE_ENUM_GUARD:
            raise InstanceTooLargeError(
                f"identity_sweep: {total} code pairs exceeds guard {_CODE_ENUM_GUARD}; "
                "pass samples= to randomize"
            )
        n_codes = 0
        for enc in itertools.product(range(m_count), repeat=r):
            a_d = np.zeros((m_count, k))
            a_l = np.zeros((m_count, k))
            for x in range(r):
                a_d[enc[x]] += w_d[x]
                a_l[enc[x]] += w_l[x]
            grid_d = _decoder_cost_grid(a_d)
            grid_l = _decoder_cost_grid(a_l)
            resid = np.abs(grid_l - h - lam * (grid_d - d_star))
            max_resid = max(max_resid, float(resid.max()))
            min_loss = min(min_loss, float(grid_l.min()))
            min_d = min(min_d, float(grid_d.min()))
            n_codes += grid_d.size
        return IdentitySweep(n_codes=n_codes, max_residual=max_resid,
                             min_loss=min_loss, min_distortion=min_d, sampled=False)

    if samples < 1:
        raise ValidationError("identity_sweep: samples must be >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        enc = rng.integers(0, m_count, size=r)
        dec = rng.integers(0, k, size=m_count)
        cost_d = float(sum(w_d[x, dec[enc[x]]] for x in range(r)))
        cost_l = float(sum(w_l[x, dec[enc[x]]] for x in range(r)))
        max_resid = max(max_resid, abs(cost_l - h - lam * (cost_d - d_star)))
        min_loss = min(min_loss, cost_l)
        min_d = min(min_d, cost_d)
    return IdentitySweep(n_codes=samples, max_residual=max_resid,
                         min_loss=min_loss, min_distortion=min_d, sampled=True)


@dataclass(frozen=True)
class CoincidenceReport:
    """Argmin sets on both sides, in shared (encoder, kept-index) coordinates."""

    min_distortion: float
    min_loss: float
    distortion_argmin: tuple
    loss_argmin: tuple
    matched: bool


def verify_optimum_coincidence(cp: CorrespondingProblem,
                               atol: float = 1e-9) -> CoincidenceReport:
    """Enumerate both problems and compare their sets of optimal codes.

    Decoders range over the kept reconstruction columns (the solved point's
    alphabet); a decoder choice is recorded as its kept-index tuple, which
    names a column on the distortion side and a reverse row on the log-loss
    side.  The two argmin sets must coincide exactly under that naming.
    """
    r = cp.px.n
    m_count = cp.n_messages
    k = len(cp.y_rows)
    total = (m_count ** r) * (k ** m_count)
    if total > _CODE_ENUM_GUARD:
        raise InstanceTooLargeError(
            f"verify_optimum_coincidence: {total} code pairs exceeds guard {_CODE_ENUM_GUARD}"
        )
    w_d, w_l = _cell_cost_tables(cp)

    def grids(enc):
        a_d = np.zeros((m_count, k))
        a_l = np.zeros((m_count, k))
        for x in range(r):
            a_d[enc[x]] += w_d[x]
            a_l[enc[x]] += w_l[x]
        return _decoder_cost_grid(a_d), _decoder_cost_grid(a_l)

    # First pass pins both global minima; the second collects the argmin
    # sets against the final values, so tolerance never drifts.
    best_d = math.inf
    best_l = math.inf
    for enc in itertools.product(range(m_count), repeat=r):
        grid_d, grid_l = grids(enc)
        best_d = min(best_d, float(grid_d.min()))
        best_l = min(best_l, float(grid_l.min()))

    set_d = set()
    set_l = set()
    for enc in itertools.product(range(m_count), repeat=r):
        grid_d, grid_l = grids(enc)
        for dec in np.argwhere(grid_d <= best_d + atol):
            set_d.add((enc, tuple(int(i) for i in dec)))
        for dec in np.argwhere(grid_l <= best_l + atol):
            set_l.add((enc, tuple(int(i) for i in dec)))
    return CoincidenceReport(
        min_distortion=best_d,
        min_loss=best_l,
        distortion_argmin=tuple(sorted(set_d)),
        loss_argmin=tuple(sorted(set_l)),
        matched=set_d == set_l,
    )
