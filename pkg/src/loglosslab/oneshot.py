"""Exact one-shot (blocklength-one) code optimization on desk-scale alphabets.

Two families live here.  For an arbitrary distortion matrix, the optimal
average distortion with at most M messages and the optimal excess-distortion
probability come from exhaustive enumeration over reconstruction subsets,
with independent brute-force oracles enumerating encoders or cover sets.
For logarithmic loss the optima have closed forms: average distortion reduces
to entropy-maximizing partitions of the source alphabet, and the excess
criterion to covering the most probable symbols in cells of size
``floor(exp(D))``.

Everything is deterministic; ties break toward the lowest index.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, InstanceTooLargeError, ValidationError
from .probability import Pmf, entropy
from .ratedistortion import SourceProblem

__all__ = [
    "OneShotCode",
    "expected_distortion",
    "solve_avg",
    "solve_avg_oracle",
    "solve_excess",
    "excess_witness",
    "solve_codebook",
    "PartitionScheme",
    "logloss_avg_optimum",
    "ExcessScheme",
    "logloss_excess_optimum",
    "logloss_codebook",
    "logloss_excess_oracle",
    "floor_exp",
]

_ENCODER_ENUM_GUARD = 10_000_000
_PARTITION_ALPHABET_GUARD = 14
_COVER_ALPHABET_GUARD = 12
# floor(exp(D)) with a whisker of slack so exact thresholds like D = ln 2
# land on the intended integer.
_FLOOR_SLACK = 1e-12


@dataclass(frozen=True)
class OneShotCode:
    """Deterministic one-shot code: encoder into messages, decoder back out.

    ``encoder[x]`` is the message for source symbol x (0-based), and
    ``decoder[m]`` the reconstruction column for message m.  Both maps are
    total.
    """

    n_messages: int
    encoder: tuple[int, ...]
    decoder: tuple[int, ...]

    def __post_init__(self):
        if self.n_messages < 1:
            raise ValidationError("OneShotCode: need at least one message")
        if len(self.decoder) != self.n_messages:
            raise ValidationError(
                f"OneShotCode: decoder covers {len(self.decoder)} of {self.n_messages} messages"
            )
        if not self.encoder:
            raise ValidationError("OneShotCode: empty encoder")
        for x, msg in enumerate(self.encoder):
            if not 0 <= msg < self.n_messages:
                raise ValidationError(f"OneShotCode: encoder[{x}] = {msg} out of range")
        for m, col in enumerate(self.decoder):
            if col < 0:
                raise ValidationError(f"OneShotCode: decoder[{m}] = {col} out of range")


def expected_distortion(problem: SourceProblem, code: OneShotCode) -> float:
    """E d(X, g(f(X))) for a code over the problem's distortion matrix."""
    if len(code.encoder) != problem.n_source:
        raise ValidationError("expected_distortion: encoder length mismatch")
    if max(code.decoder) >= problem.n_reconstruction:
        raise ValidationError("expected_distortion: decoder column out of range")
    px = problem.px.probs
    dist = problem.distortion
    return float(sum(px[x] * dist[x, code.decoder[code.encoder[x]]]
                     for x in range(problem.n_source)))


def solve_avg(problem: SourceProblem, n_messages: int) -> tuple[OneShotCode, float]:
    """Exact minimum average distortion over all codes with <= M messages.

    Enumerates reconstruction subsets of size min(M, s); the nearest-codeword
    encoder (ties to the lowest column index) is optimal for each subset.
    The first best subset in lexicographic order is returned as a witness.
    """
    if n_messages < 1:
        raise ValidationError("solve_avg: need at least one message")
    px = problem.px.probs
    dist = problem.distortion
    s = problem.n_reconstruction
    k = min(n_messages, s)

    best_val = math.inf
    best_subset: tuple[int, ...] | None = None
    for subset in itertools.combinations(range(s), k):
        sub = dist[:, subset]
        val = float(px @ sub.min(axis=1))
        if val < best_val:
            best_val = val
            best_subset = subset
    assert best_subset is not None

    sub = dist[:, best_subset]
    encoder = tuple(int(i) for i in sub.argmin(axis=1))
    decoder = tuple(best_subset) + (best_subset[-1],) * (n_messages - k)
    code = OneShotCode(n_messages=n_messages, encoder=encoder, decoder=decoder)
    # Report the value through the shared evaluator so independent solvers
    # that land on the same code agree bitwise.
    return code, expected_distortion(problem, code)


def solve_avg_oracle(problem: SourceProblem, n_messages: int) -> float:
    """Brute-force check of solve_avg: enumerate every encoder map.

    For each of the M^r encoders the best decoder picks, per message, the
    column minimizing that cell's expected distortion.  Guarded at
    M^r <= 10^7.  The winner is re-evaluated through the shared evaluator,
    so agreement with solve_avg is bitwise when the optimum is unique.
    """
    if n_messages < 1:
        raise ValidationError("solve_avg_oracle: need at least one message")
    r = problem.n_source
    if n_messages ** r > _ENCODER_ENUM_GUARD:
        raise InstanceTooLargeError(
            f"solve_avg_oracle: {n_messages}^{r} encoders exceeds guard {_ENCODER_ENUM_GUARD}"
        )
    px = problem.px.probs
    dist = problem.distortion
    weighted = px[:, None] * dist  # row x: px(x) d(x, .)

    best = math.inf
    best_code: OneShotCode | None = None
    for enc in itertools.product(range(n_messages), repeat=r):
        cost = 0.0
        columns = [0] * n_messages
        for m in range(n_messages):
            cell = [x for x in range(r) if enc[x] == m]
            if not cell:
                continue
            cell_costs = weighted[cell].sum(axis=0)
            columns[m] = int(cell_costs.argmin())
            cost += float(cell_costs.min())
        if cost < best:
            best = cost
            best_code = OneShotCode(n_messages=n_messages, encoder=tuple(enc),
                                    decoder=tuple(columns))
    assert best_code is not None
    return expected_distortion(problem, best_code)


def solve_excess(problem: SourceProblem, n_messages: int, d: float) -> float:
    """Exact minimum excess probability Pr[d(X, g(f(X))) > D] with <= M messages.

    A symbol is covered by a column when its distortion is <= D; the optimum
    picks the subset of min(M, s) columns covering the most probability.
    """
    if n_messages < 1:
        raise ValidationError("solve_excess: need at least one message")
    px = problem.px.probs
    covers = problem.distortion <= d  # r x s
    s = problem.n_reconstruction
    k = min(n_messages, s)

    best_mass = 0.0
    for subset in itertools.combinations(range(s), k):
        mass = float(px[covers[:, subset].any(axis=1)].sum())
        if mass > best_mass:
            best_mass = mass
    return min(max(1.0 - best_mass, 0.0), 1.0)


def excess_witness(problem: SourceProblem,
                   n_messages: int, d: float) -> tuple[OneShotCode, float]:
    """A code attaining solve_excess, with its excess probability.

    Uncovered symbols are encoded to the subset column of least distortion,
    which cannot hurt the excess criterion.
    """
    if n_messages < 1:
        raise ValidationError("excess_witness: need at least one message")
    px = problem.px.probs
    covers = problem.distortion <= d
    s = problem.n_reconstruction
    k = min(n_messages, s)

    best_mass = -1.0
    best_subset: tuple[int, ...] = ()
    for subset in itertools.combinations(range(s), k):
        mass = float(px[covers[:, subset].any(axis=1)].sum())
        if mass > best_mass:
            best_mass = mass
            best_subset = subset
    encoder = tuple(int(i) for i in problem.distortion[:, best_subset].argmin(axis=1))
    decoder = tuple(best_subset) + (best_subset[-1],) * (n_messages - k)
    code = OneShotCode(n_messages=n_messages, encoder=encoder, decoder=decoder)
    return code, min(max(1.0 - best_mass, 0.0), 1.0)


def solve_codebook(problem: SourceProblem, d: float, eps: float) -> int:
    """Least message count M with excess probability at D below eps.

    Raises InfeasibleError when even the full reconstruction alphabet cannot
    reach the target.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"solve_codebook: eps must lie in [0, 1], got {eps!r}")
    for m in range(1, problem.n_reconstruction + 1):
        if solve_excess(problem, m, d) <= eps + 1e-12:
            return m
    achievable = solve_excess(problem, problem.n_reconstruction, d)
    raise InfeasibleError(
        f"solve_codebook: excess target {eps!r} at distortion {d!r} unreachable; "
        f"best achievable is {achievable!r}"
    )


# ----------------------------------------------------------------------
# Logarithmic-loss closed forms.
# ----------------------------------------------------------------------


def floor_exp(d: float) -> int:
    """Largest integer k with ln k <= D (slack 1e-12), i.e. floor(exp(D))."""
    if d < 0.0:
        raise ValidationError(f"floor_exp: D must be >= 0, got {d!r}")
    k = max(int(math.floor(math.exp(min(d, 700.0)))), 1)
    while math.log(k + 1) <= d + _FLOOR_SLACK:
        k += 1
    while k > 1 and math.log(k) > d + _FLOOR_SLACK:
        k -= 1
    return k


def _restricted_growth_strings(n: int, max_blocks: int):
    """Yield set partitions of range(n) with <= max_blocks cells.

    Partitions stream in canonical restricted-growth order starting from the
    single-cell partition; each yielded list is reused, so copy to keep.
    """
    a = [0] * n
    while True:
        yield a
        i = n - 1
        while i > 0:
            cap = min(max(a[:i]) + 1, max_blocks - 1)
            if a[i] < cap:
                a[i] += 1
                for j in range(i + 1, n):
                    a[j] = 0
                break
            i -= 1
        else:
            return


@dataclass(frozen=True, eq=False)
class PartitionScheme:
    """Deterministic partition code achieving the log-loss average optimum.

    ``encoder[x]`` is the cell of symbol x; ``posterior_rows[m]`` is the
    source posterior on cell m (uniform over the cell when it carries no
    mass), supported exactly on the cell.
    """

    n_messages: int
    encoder: tuple[int, ...]
    cell_masses: np.ndarray
    posterior_rows: tuple[Pmf, ...]


def logloss_avg_optimum(px: Pmf, n_messages: int) -> tuple[PartitionScheme, float]:
    """Exact optimal average log loss with at most M messages.

    The optimum equals H(X) minus the largest entropy of f(X) over
    partitions f of the alphabet into at most M cells; the scheme reproduces
    each cell by its posterior.  Guarded at alphabets of size 14.
    """
    if n_messages < 1:
        raise ValidationError("logloss_avg_optimum: need at least one message")
    r = px.n
    if r > _PARTITION_ALPHABET_GUARD:
        raise InstanceTooLargeError(
            f"logloss_avg_optimum: alphabet {r} exceeds guard {_PARTITION_ALPHABET_GUARD}"
        )
    p = px.probs
    p_list = p.tolist()
    log = math.log

    best_h = -1.0
    best_assign: list[int] | None = None
    masses = [0.0] * n_messages
    for assign in _restricted_growth_strings(r, n_messages):
        blocks = max(assign) + 1
        for m in range(blocks):
            masses[m] = 0.0
        for x in range(r):
            masses[assign[x]] += p_list[x]
        h = 0.0
        for m in range(blocks):
            u = masses[m]
            if u > 0.0:
                h -= u * log(u)
        if h > best_h:
            best_h = h
            best_assign = assign.copy()
    assert best_assign is not None

    blocks = max(best_assign) + 1
    masses = np.bincount(best_assign, weights=p, minlength=blocks)
    masses.setflags(write=False)
    rows = []
    assign_arr = np.array(best_assign)
    for m in range(blocks):
        cell = assign_arr == m
        row = np.zeros(r)
        if masses[m] > 0.0:
            row[cell] = p[cell] / masses[m]
        else:
            row[cell] = 1.0 / int(cell.sum())
        rows.append(Pmf(row))
    scheme = PartitionScheme(
        n_messages=blocks,
        encoder=tuple(int(c) for c in best_assign),
        cell_masses=masses,
        posterior_rows=tuple(rows),
    )
    return scheme, entropy(px) - best_h


@dataclass(frozen=True, eq=False)
class ExcessScheme:
    """Sorted-cell scheme achieving the log-loss excess optimum.

    ``sort_order`` places probabilities in non-increasing order (stable, so
    equal masses keep their original order); consecutive runs of
    ``cell_size`` sorted symbols share a message and a uniform reproduction
    of mass 1/cell_size each.
    """

    d: float
    n_messages: int
    sort_order: tuple[int, ...]
    cell_size: int
    achieved_epsilon: float

    def encoder(self) -> tuple[int, ...]:
        """Message per symbol; ranks past the last cell fold into it."""
        r = len(self.sort_order)
        enc = [0] * r
        for rank, x in enumerate(self.sort_order):
            enc[x] = min(rank // self.cell_size, self.n_messages - 1)
        return tuple(enc)

    def decoder_rows(self) -> tuple[Pmf, ...]:
        """Reproduction Pmf per message.

        Each covered symbol in a cell gets mass 1/cell_size; a short final
        cell parks the leftover mass on its first symbol so the row is a
        genuine distribution, and a cell with no symbols falls back to
        uniform over the alphabet.
        """
        r = len(self.sort_order)
        rows = []
        for m in range(self.n_messages):
            members = self.sort_order[m * self.cell_size:(m + 1) * self.cell_size]
            row = np.zeros(r)
            if members:
                row[list(members)] = 1.0 / self.cell_size
                row[members[0]] += 1.0 - row.sum()
            else:
                row[:] = 1.0 / r
            rows.append(Pmf(row))
        return tuple(rows)


def _tail_excess(covered_probs: np.ndarray) -> float:
    """1 - mass of a covered set, summed in canonical descending order.

    Both the closed form and the cover oracle report through this, so equal
    covered sets give bitwise-equal epsilons.
    """
    mass = float(np.sort(np.asarray(covered_probs))[::-1].sum())
    return min(max(1.0 - mass, 0.0), 1.0)


def logloss_excess_optimum(px: Pmf, n_messages: int, d: float) -> tuple[ExcessScheme, float]:
    """Exact optimal excess probability Pr[log loss > D] with <= M messages.

    The optimum covers the M * floor(exp(D)) most probable symbols; the
    achieved epsilon is the tail mass beyond them.
    """
    if n_messages < 1:
        raise ValidationError("logloss_excess_optimum: need at least one message")
    cell = floor_exp(d)
    order = np.argsort(-px.probs, kind="stable")
    covered = min(n_messages * cell, px.n)
    eps = _tail_excess(px.probs[order[:covered]])
    scheme = ExcessScheme(
        d=d,
        n_messages=n_messages,
        sort_order=tuple(int(x) for x in order),
        cell_size=cell,
        achieved_epsilon=eps,
    )
    return scheme, eps


def logloss_codebook(px: Pmf, d: float, eps: float) -> int:
    """Least message count with log-loss excess probability at D below eps.

    Closed form: cover the smallest prefix of the sorted source reaching
    mass 1 - eps, in cells of floor(exp(D)).
    """
    if not 0.0 <= eps <= 1.0:
        raise ValidationError(f"logloss_codebook: eps must lie in [0, 1], got {eps!r}")
    cell = floor_exp(d)
    sorted_probs = np.sort(px.probs)[::-1]
    cdf = np.cumsum(sorted_probs)
    cdf[-1] = 1.0  # close the float gap so the cdf is total
    needed = int(np.searchsorted(cdf, (1.0 - eps) - 1e-12, side="left")) + 1
    return -(-needed // cell)


def logloss_excess_oracle(px: Pmf, n_messages: int, d: float) -> float:
    """Brute-force check of logloss_excess_optimum via cover enumeration.

    Each message may cover any set of at most floor(exp(D)) symbols (mass
    1/floor(exp(D)) each keeps the loss within D), so a code covers at most
    M * floor(exp(D)) symbols; enumerate every subset within that budget.
    Guarded at alphabets of size 12.
    """
    if n_messages < 1:
        raise ValidationError("logloss_excess_oracle: need at least one message")
    r = px.n
    if r > _COVER_ALPHABET_GUARD:
        raise InstanceTooLargeError(
            f"logloss_excess_oracle: alphabet {r} exceeds guard {_COVER_ALPHABET_GUARD}"
        )
    budget = min(n_messages * floor_exp(d), r)
    p = px.probs

    # mass[mask] via the lowest set bit, filled in increasing mask order.
    mass = np.zeros(1 << r)
    for mask in range(1, 1 << r):
        low = mask & -mask
        mass[mask] = mass[mask ^ low] + p[low.bit_length() - 1]

    best = 0.0
    best_mask = 0
    for mask in range(1 << r):
        if mask.bit_count() <= budget and mass[mask] > best:
            best = mass[mask]
            best_mask = mask
    members = [i for i in range(r) if best_mask >> i & 1]
    return _tail_excess(p[members])
