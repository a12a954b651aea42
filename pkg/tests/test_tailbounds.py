import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpmean.core import ParameterError, SyntheticSpec, derive_rng
from dpmean.tailbounds import (
    FROZEN_CALIBRATION,
    TailBoundQuery,
    acceptance_t_grid,
    berry_esseen_threshold,
    bound_berry_esseen,
    bound_heavytail,
    bound_highd,
    bound_markov,
    bound_norm_onesample,
    bucket_diagnostic,
    heavytail_window,
    lemma_checks,
    mc_tail,
)


class TestEvaluators:
    def test_heavytail_frozen_value(self):
        # m=100, k=3, t=0.5, C=1 -> 8e-4 + e^{-25/12} = 0.12531447144412297
        out = bound_heavytail(TailBoundQuery(m=100, k=3.0, t=0.5))
        assert math.isclose(out.value, 0.12531447144412297, rel_tol=1e-12)
        assert out.dominant == "exponential"

    def test_heavytail_limit_and_m1(self):
        assert bound_heavytail(TailBoundQuery(m=100, k=3.0, t=1e6)).value < 1e-15
        # m=1: polynomial term reduces to the Markov bound t^{-k}
        q = TailBoundQuery(m=1, k=3.0, t=2.0)
        poly = bound_heavytail(q).value - math.exp(-q.t**2 / 12)
        assert math.isclose(poly, bound_markov(3.0, 2.0), rel_tol=1e-12)

    def test_heavytail_needs_k3(self):
        with pytest.raises(ParameterError):
            bound_heavytail(TailBoundQuery(m=100, k=2.5, t=0.5))

    def test_berry_esseen_frozen_values(self):
        out = bound_berry_esseen(TailBoundQuery(m=100, k=3.0, t=0.5))
        assert math.isclose(out.value, 8e-4, rel_tol=1e-12)
        assert out.valid
        assert bound_berry_esseen(TailBoundQuery(m=100, k=3.0, t=0.5, constant=0.0)).value == 0.0
        # threshold at m=100, k=3: sqrt(2 ln 100 / 100) = 0.30348542587702926
        assert math.isclose(
            berry_esseen_threshold(100, 3.0), 0.30348542587702926, rel_tol=1e-12
        )
        assert not bound_berry_esseen(TailBoundQuery(m=100, k=3.0, t=0.3)).valid

    def test_highd_frozen_value(self):
        # d=4, m=256, k=4, t=1 -> 16/256^3 + e^{-64} = 9.5367e-07
        out = bound_highd(TailBoundQuery(m=256, k=4.0, t=1.0, d=4))
        assert math.isclose(out.value, 9.5367431640625e-07 + math.exp(-64), rel_tol=1e-9)

    def test_highd_d1_matches_univariate_polynomial(self):
        q = TailBoundQuery(m=64, k=3.0, t=0.7, d=1)
        poly_hd = bound_highd(q).value - math.exp(-q.m * q.t**2)
        assert math.isclose(poly_hd, bound_berry_esseen(q).value, rel_tol=1e-9)

    def test_norm_onesample(self):
        assert bound_norm_onesample(1, 2.0, 2.0) == 0.25
        assert math.isclose(bound_norm_onesample(9, 3.0, 10.0), 0.027, rel_tol=1e-12)
        assert bound_norm_onesample(4, 3.0, 0.1) == 1.0  # capped

    def test_markov(self):
        assert bound_markov(3.0, 1.0) == 1.0
        assert bound_markov(3.0, 2.0) == 0.125
        assert bound_markov(3.0, 1e9) < 1e-26

    def test_berry_esseen_leq_heavytail_poly(self):
        for m in (16, 64, 256):
            for t in (0.3, 0.5, 1.0):
                q = TailBoundQuery(m=m, k=3.0, t=t)
                assert bound_berry_esseen(q).value <= bound_heavytail(q).value

    @given(
        st.sampled_from([4, 16, 64, 256]),
        st.floats(3.0, 6.0),
        st.floats(0.05, 0.95),
        st.integers(1, 8),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_t(self, m, k, t, d):
        for fn, q1, q2 in [
            (bound_heavytail, TailBoundQuery(m, k, t), TailBoundQuery(m, k, t * 1.5)),
            (bound_berry_esseen, TailBoundQuery(m, k, t), TailBoundQuery(m, k, t * 1.5)),
            (bound_highd, TailBoundQuery(m, k, t, d), TailBoundQuery(m, k, t * 1.5, d)),
        ]:
            assert fn(q2).value <= fn(q1).value

    @given(st.floats(3.0, 6.0), st.floats(1.0, 5.0), st.integers(1, 8))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_m_for_t_above_one(self, k, t, d):
        for fn in (bound_heavytail, bound_berry_esseen, bound_highd):
            vals = [fn(TailBoundQuery(m, k, t, d)).value for m in (4, 16, 64, 256)]
            assert all(b <= a * (1 + 1e-12) for a, b in zip(vals, vals[1:]))

    def test_window_shapes(self):
        lo, hi = heavytail_window(10**9, 3.0)
        assert lo < hi  # the explicit window opens at very large m
        lo_small, hi_small = heavytail_window(64, 3.0)
        assert lo_small > hi_small  # and is empty at desk scale


class TestAcceptanceGrids:
    @pytest.mark.parametrize("bound", ["heavytail", "berry_esseen", "highd"])
    def test_grid_shape(self, bound):
        grid = acceptance_t_grid(bound, 64, 4.0, d=2)
        assert grid.shape == (12,)
        assert np.all(np.diff(grid) > 0)

    def test_frozen_table_covers_families(self):
        for family in ("scaled_gaussian", "point_mass_mixture"):
            for bound in ("heavytail", "berry_esseen", "highd"):
                assert (family, bound) in FROZEN_CALIBRATION


class TestMcTail:
    def test_symmetric_half_at_zero_plus(self):
        spec = SyntheticSpec("scaled_gaussian", mean=(0.0,), k=4.0)
        [point] = mc_tail(spec, 4, 1, [1e-12], 10**5, 3)
        assert abs(point.empirical - 0.5) < 0.01

    def test_huge_t_zero(self):
        spec = SyntheticSpec("scaled_gaussian", mean=(0.0,), k=4.0)
        [point] = mc_tail(spec, 4, 1, [100.0], 10**5, 3)
        assert point.empirical == 0.0
        assert point.std_error < 1e-4

    def test_gaussian_cdf_oracle(self):
        # m=1, t = 1.6449 / sigma_k: P = 1 - Phi(1.6449) = 0.05 by erf oracle
        spec = SyntheticSpec("scaled_gaussian", mean=(0.0,), k=4.0)
        sigma_k = 3.0**0.25
        t = 1.6449 / sigma_k
        truth = 0.5 * (1 - math.erf(1.6449 / math.sqrt(2)))
        [point] = mc_tail(spec, 1, 1, [t], 4 * 10**5, 3)
        assert abs(point.empirical - truth) < 4 * point.std_error + 1e-4

    def test_two_sided_doubles_symmetric_tail(self):
        spec = SyntheticSpec("scaled_gaussian", mean=(0.0,), k=4.0)
        [one] = mc_tail(spec, 4, 1, [0.3], 2 * 10**5, 3, mode="one_sided")
        [two] = mc_tail(spec, 4, 1, [0.3], 2 * 10**5, 3, mode="two_sided")
        assert abs(two.empirical - 2 * one.empirical) < 0.01

    def test_norm_mode_matches_d(self):
        spec = SyntheticSpec("scaled_gaussian", mean=(0.0, 0.0), k=4.0)
        [point] = mc_tail(spec, 4, 2, [0.1], 10**5, 3)
        assert 0 < point.empirical < 1

    def test_dimension_mismatch_rejected(self):
        spec = SyntheticSpec("scaled_gaussian", mean=(0.0, 0.0), k=4.0)
        with pytest.raises(ParameterError):
            mc_tail(spec, 4, 1, [0.1], 10**5, 3)


class TestBucketDiagnostic:
    def test_tiny_values_vacuous(self):
        part = bucket_diagnostic(np.full(64, 1e-6), 0.5)
        assert part.s2_count == 0
        assert not part.claim_applicable
        assert part.claim_holds

    def test_levels_cover_s2_range(self):
        rng = derive_rng(3)
        values = np.abs(rng.standard_t(5, size=256))
        t = 0.4
        part = bucket_diagnostic(values, t)
        covered = sum(count for _, count in part.levels)
        assert covered >= part.s2_count  # levels may extend slightly below 1/t

    def test_fuzz_claim_never_violated(self):
        rng = derive_rng(17)
        for trial in range(10**4):
            m = int(rng.integers(8, 128))
            scale = rng.uniform(0.05, 5.0)
            values = np.abs(rng.standard_t(3, size=m)) * scale
            t = float(rng.uniform(0.05, 1.0))
            part = bucket_diagnostic(values, t)
            assert part.claim_holds

    def test_adversarial_contrapositive(self):
        # fill every level to 2^{l-1} - 1 just under its top edge: the moderate
        # sum must stay strictly below m t / 3
        m, t = 4096, 0.5
        r2 = m * t / (3 * math.log(m))
        n_levels = math.ceil(math.log2(r2 * t))
        values = []
        for ell in range(1, n_levels + 1):
            top = r2 / 2 ** (ell - 1)
            values.extend([top * (1 - 1e-9)] * (2 ** (ell - 1) - 1))
        values.extend([1e-9] * (m - len(values)))
        part = bucket_diagnostic(np.array(values), t)
        for (ell, count) in part.levels:
            assert count <= 2 ** (ell - 1) - 1
        assert part.s2_sum < m * t / 3
        assert not part.claim_applicable

    def test_input_validation(self):
        with pytest.raises(ParameterError):
            bucket_diagnostic([1.0], 0.5)
        with pytest.raises(ParameterError):
            bucket_diagnostic([1.0, 2.0], 0.0)


class TestLemmaChecks:
    def test_binomial_example(self):
        assert math.comb(4, 2) == 6 <= (4 * math.e / 2) ** 2

    def test_full_battery_passes(self):
        report = lemma_checks(7)
        assert report.passed, report.summary()
        names = [name for name, _, _ in report.checks]
        assert "binomial_upper_bound" in names
        assert any(name.startswith("truncated_variance") for name in names)
        assert "bernstein_nonpositive_mean" in names

    def test_bernstein_at_t0_trivial(self):
        assert math.exp(-0.0) == 1.0  # bound is 1 at t = 0, trivially holds
