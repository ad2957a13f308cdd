import itertools
import math

import numpy as np
import pytest

from loglosslab import (
    InfeasibleError,
    InstanceTooLargeError,
    Pmf,
    SourceProblem,
    ValidationError,
    entropy,
    expected_distortion,
    floor_exp,
    hamming_distortion,
    log_loss,
    logloss_avg_optimum,
    logloss_codebook,
    logloss_excess_optimum,
    logloss_excess_oracle,
    solve_avg,
    solve_avg_oracle,
    solve_codebook,
    solve_excess,
)
from loglosslab.oneshot import excess_witness

LN2 = math.log(2.0)


def uniform_hamming(r: int) -> SourceProblem:
    return SourceProblem(px=Pmf.uniform(r), distortion=hamming_distortion(r))


def random_pmf(rng, r: int) -> Pmf:
    w = rng.uniform(0.05, 1.0, size=r)
    return Pmf(w / w.sum())


def partition_oracle(px: Pmf, n_messages: int) -> float:
    """Independent route: min H(X | f(X)) over every labeling f."""
    p = px.probs
    best = math.inf
    for labels in itertools.product(range(n_messages), repeat=px.n):
        masses = [0.0] * n_messages
        for x, m in enumerate(labels):
            masses[m] += p[x]
        h = sum(p[x] * math.log(masses[m] / p[x])
                for x, m in enumerate(labels) if p[x] > 0.0)
        best = min(best, h)
    return best


class TestSolveAvg:
    def test_uniform3_m2(self):
        code, value = solve_avg(uniform_hamming(3), 2)
        assert value == pytest.approx(1 / 3, abs=1e-15)
        assert expected_distortion(uniform_hamming(3), code) == value

    def test_uniform4_m2(self):
        _, value = solve_avg(uniform_hamming(4), 2)
        assert value == pytest.approx(0.5, abs=1e-15)

    def test_m_at_least_s_reaches_floor(self):
        code, value = solve_avg(uniform_hamming(3), 5)
        assert value == 0.0
        assert len(code.decoder) == 5

    def test_m_zero_rejected(self):
        with pytest.raises(ValidationError):
            solve_avg(uniform_hamming(2), 0)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_encoder_enumeration(self, seed):
        rng = np.random.default_rng(500 + seed)
        r, s = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        dist = rng.uniform(0.0, 1.0, size=(r, s))
        prob = SourceProblem(px=random_pmf(rng, r), distortion=dist)
        for m in (1, 2, 3):
            _, value = solve_avg(prob, m)
            assert value == solve_avg_oracle(prob, m)

    def test_oracle_guard(self):
        prob = SourceProblem(px=random_pmf(np.random.default_rng(0), 10),
                             distortion=np.random.default_rng(1).uniform(
                                 0.0, 1.0, size=(10, 10)))
        with pytest.raises(InstanceTooLargeError):
            solve_avg_oracle(prob, 10)


class TestSolveExcess:
    def test_uniform4_examples(self):
        u4 = uniform_hamming(4)
        assert solve_excess(u4, 1, 0.0) == pytest.approx(0.75, abs=1e-15)
        assert solve_excess(u4, 2, 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_everything_covered(self):
        assert solve_excess(uniform_hamming(3), 1, 1.0) == 0.0

    def test_witness_attains_value(self):
        rng = np.random.default_rng(77)
        dist = rng.uniform(0.0, 1.0, size=(5, 4))
        prob = SourceProblem(px=random_pmf(rng, 5), distortion=dist)
        for m, d in [(1, 0.3), (2, 0.2), (3, 0.5)]:
            value = solve_excess(prob, m, d)
            code, witness_value = excess_witness(prob, m, d)
            assert witness_value == value
            achieved = sum(
                float(prob.px.probs[x])
                for x in range(5)
                if prob.distortion[x, code.decoder[code.encoder[x]]] > d
            )
            assert achieved == pytest.approx(value, abs=1e-12)


class TestSolveCodebook:
    def test_uniform4_d0(self):
        assert solve_codebook(uniform_hamming(4), 0.0, 0.5) == 2
        assert solve_codebook(uniform_hamming(4), 0.0, 0.0) == 4

    def test_infeasible_reports_best(self):
        # symbol 0 is covered by no column at D = 0.5
        prob = SourceProblem(px=Pmf([0.6, 0.4]),
                             distortion=np.array([[1.0, 2.0], [0.0, 3.0]]))
        with pytest.raises(InfeasibleError, match="best achievable"):
            solve_codebook(prob, 0.5, 0.5)

    def test_eps_domain(self):
        with pytest.raises(ValidationError):
            solve_codebook(uniform_hamming(2), 0.0, 1.5)


class TestFloorExp:
    def test_small_values(self):
        assert floor_exp(0.0) == 1
        assert floor_exp(0.5) == 1
        assert floor_exp(LN2) == 2
        assert floor_exp(math.log(3.0)) == 3
        assert floor_exp(1.2) == 3

    @pytest.mark.parametrize("k", range(2, 21))
    def test_exact_log_thresholds(self, k):
        assert floor_exp(math.log(k)) == k
        assert floor_exp(math.log(k) - 1e-9) == k - 1

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            floor_exp(-0.1)


class TestLoglossAvg:
    def test_uniform4_m2(self):
        scheme, value = logloss_avg_optimum(Pmf.uniform(4), 2)
        assert value == pytest.approx(LN2, abs=1e-15)
        # canonical tie-break: first partition in enumeration order
        assert scheme.encoder == (0, 0, 1, 1)

    def test_m1_gives_entropy(self):
        px = Pmf([0.5, 0.3, 0.2])
        _, value = logloss_avg_optimum(px, 1)
        assert value == pytest.approx(entropy(px), abs=1e-12)

    def test_m_at_least_r_gives_zero(self):
        _, value = logloss_avg_optimum(Pmf([0.5, 0.3, 0.2]), 3)
        assert value == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_labeling_oracle(self, seed):
        rng = np.random.default_rng(600 + seed)
        r = int(rng.integers(2, 7))
        px = random_pmf(rng, r)
        for m in (1, 2, 3):
            _, value = logloss_avg_optimum(px, m)
            assert value == pytest.approx(partition_oracle(px, m), abs=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_entropy_gap_bound(self, seed):
        px = random_pmf(np.random.default_rng(700 + seed), 6)
        for m in (2, 3, 4):
            _, value = logloss_avg_optimum(px, m)
            assert value >= entropy(px) - math.log(m) - 1e-12

    def test_scheme_rows_live_on_cells(self):
        px = Pmf([0.4, 0.3, 0.2, 0.1])
        scheme, value = logloss_avg_optimum(px, 2)
        for m, row in enumerate(scheme.posterior_rows):
            assert row.probs.sum() == pytest.approx(1.0)
            for x in range(4):
                if scheme.encoder[x] != m:
                    assert row.probs[x] == 0.0
        # the expected loss of the scheme's own rows is the optimum
        direct = sum(px.probs[x] * log_loss(x, scheme.posterior_rows[scheme.encoder[x]])
                     for x in range(4))
        assert direct == pytest.approx(value, abs=1e-12)

    def test_alphabet_guard(self):
        with pytest.raises(InstanceTooLargeError):
            logloss_avg_optimum(Pmf.uniform(15), 2)


class TestLoglossExcess:
    def test_uniform4_m2_d0(self):
        scheme, value = logloss_excess_optimum(Pmf.uniform(4), 2, 0.0)
        assert value == pytest.approx(0.5, abs=1e-15)
        assert scheme.cell_size == 1

    def test_cell_size_doubles_coverage(self):
        _, value = logloss_excess_optimum(Pmf.uniform(4), 2, LN2)
        assert value == 0.0

    def test_scheme_consistency(self):
        rng = np.random.default_rng(42)
        px = random_pmf(rng, 7)
        scheme, value = logloss_excess_optimum(px, 2, 0.8)
        assert scheme.achieved_epsilon == value
        rows = scheme.decoder_rows()
        enc = scheme.encoder()
        assert len(enc) == 7
        for row in rows:
            assert row.probs.sum() == pytest.approx(1.0)
        # direct route: excess mass of symbols whose reproduction loss
        # exceeds D
        direct = sum(
            float(px.probs[x])
            for x in range(7)
            if log_loss(x, rows[enc[x]]) > 0.8 + 1e-9
        )
        assert direct == pytest.approx(value, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("d", [0.0, 0.5, LN2, 1.2])
    def test_matches_cover_oracle(self, seed, d):
        rng = np.random.default_rng(800 + seed)
        r = int(rng.integers(3, 11))
        px = random_pmf(rng, r)
        for m in (1, 2, 3):
            _, value = logloss_excess_optimum(px, m, d)
            assert value == logloss_excess_oracle(px, m, d)

    def test_oracle_guard(self):
        with pytest.raises(InstanceTooLargeError):
            logloss_excess_oracle(Pmf.uniform(13), 2, 0.0)


class TestLoglossCodebook:
    def test_uniform4_d0(self):
        assert logloss_codebook(Pmf.uniform(4), 0.0, 0.5) == 2
        assert logloss_codebook(Pmf.uniform(4), 0.0, 0.0) == 4

    def test_cell_size_shrinks_codebook(self):
        assert logloss_codebook(Pmf.uniform(4), LN2, 0.0) == 2
        assert logloss_codebook(Pmf.uniform(4), math.log(4.0), 0.0) == 1

    def test_eps_one_needs_single_message(self):
        assert logloss_codebook(Pmf([0.7, 0.2, 0.1]), 0.0, 1.0) == 1

    @pytest.mark.parametrize("seed", range(6))
    def test_mutual_consistency_with_excess(self, seed):
        rng = np.random.default_rng(900 + seed)
        px = random_pmf(rng, int(rng.integers(3, 9)))
        for m in (1, 2, 3, 4):
            for d in (0.0, 0.5, LN2):
                _, eps = logloss_excess_optimum(px, m, d)
                assert logloss_codebook(px, d, eps) <= m
