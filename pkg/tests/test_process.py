import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from contagion_reinsurance import (
    DomainError,
    JumpRecord,
    ModelParams,
    StructuralError,
    compensator_between,
    expected_claim_count,
    intensity_at,
    log_density_ratio,
    mean_intensity,
    simulate_exact,
    simulate_paths,
    simulate_thinning,
    thinning_counts,
    pooled_interarrivals,
    time_changed_claims,
    time_changed_interarrivals,
)
from contagion_reinsurance.process import (
    CLAIM,
    EXTERNAL,
    PathRecord,
    RandomRows,
    intensity_power_integral,
    invert_compensator,
    jumps_from_rows,
    read_path_csv,
    write_path_csv,
)

from conftest import U01, contagion_params, poisson_params


def _params(alpha, beta, lambda0):
    return ModelParams(alpha=alpha, beta=beta, lambda0=lambda0, rho=0.0, r=0.0, eta=1.0, horizon=10.0)


class TestIntensity:
    def test_constant_when_started_at_beta(self):
        assert intensity_at(_params(1, 2, 2), (), 5.0) == pytest.approx(2.0)

    def test_relaxation(self):
        assert intensity_at(_params(1, 1, 3), (), 1.0) == pytest.approx(1 + 2 * np.exp(-1), rel=1e-14)

    def test_external_jump(self):
        jumps = (JumpRecord(1.0, EXTERNAL, 2.0),)
        assert intensity_at(_params(1, 1, 1), jumps, 2.0) == pytest.approx(1.73576, abs=5e-6)

    def test_left_limit_excludes_jump_at_t(self):
        p = contagion_params()
        jumps = (JumpRecord(0.5, CLAIM, 0.4),)
        right = intensity_at(p, jumps, 0.5)
        left = intensity_at(p, jumps, 0.5, left=True)
        assert right - left == pytest.approx(0.4)

    def test_unsorted_jumps_rejected(self):
        jumps = (JumpRecord(1.0, CLAIM, 0.1), JumpRecord(0.5, CLAIM, 0.1))
        with pytest.raises(StructuralError):
            intensity_at(contagion_params(), jumps, 0.8)


class TestCompensator:
    def test_known_values(self):
        assert compensator_between(_params(1, 1, 1), 3.0, 0.0) == 0.0
        assert compensator_between(_params(1, 2, 2), 2.0, 1.7) == pytest.approx(3.4)
        assert compensator_between(_params(1, 1, 1), 3.0, 1.0) == pytest.approx(2.26424, abs=5e-6)

    def test_negative_length_rejected(self):
        with pytest.raises(DomainError):
            compensator_between(_params(1, 1, 1), 1.0, -0.1)

    @settings(max_examples=60, deadline=None)
    @given(lam=st.floats(1e-3, 100.0), budget=st.floats(1e-6, 50.0))
    def test_inversion_round_trip(self, lam, budget):
        p = ModelParams(alpha=2.0, beta=1.0, lambda0=1.0, rho=0.0, r=0.0, eta=1.0, horizon=1.0)
        h = invert_compensator(p, np.array([lam]), np.array([budget]))
        assert compensator_between(p, lam, h[0]) == pytest.approx(budget, rel=1e-10)

    @pytest.mark.parametrize("k", [1, 2])
    def test_power_integrals(self, k):
        p = contagion_params()
        lam, h = 3.3, 0.7
        ref = np.trapezoid(p.decay(lam, np.linspace(0, h, 20001)) ** k, dx=h / 20000)
        assert intensity_power_integral(p, lam, h, k) == pytest.approx(ref, rel=1e-8)


class TestRandomRows:
    def test_stream_depends_only_on_index(self):
        a = RandomRows(5, 300)
        b = RandomRows(5, 1000)
        cols = np.arange(40)
        for stream in (0, 17, 299):
            np.testing.assert_array_equal(
                a.take(RandomRows.CLAIM_WAIT, np.full(40, stream), cols),
                b.take(RandomRows.CLAIM_WAIT, np.full(40, stream), cols),
            )

    def test_keys_separate_families(self):
        a = RandomRows(5, 10).take(0, np.arange(10), np.zeros(10, dtype=int))
        b = RandomRows(5, 10, (1,)).take(0, np.arange(10), np.zeros(10, dtype=int))
        assert not np.array_equal(a, b)


class TestSimulation:
    def test_deterministic(self, contagion):
        a = simulate_paths(contagion, 11, 50)
        b = simulate_paths(contagion, 11, 50)
        assert [p.jumps for p in a] == [p.jumps for p in b]

    def test_single_path_matches_batch(self, contagion):
        batch = simulate_paths(contagion, 3, 600)
        for i in (0, 255, 256, 599):
            assert simulate_exact(contagion, 3, i).jumps == batch[i].jumps

    def test_low_rate_regime_allows_empty_paths(self):
        p = ModelParams(alpha=1.0, beta=1e-4, lambda0=1e-4, rho=0.0, r=0.0, eta=1.0, horizon=1.0)
        paths = simulate_paths(p, 0, 100)
        assert sum(q.n_claims for q in paths) <= 2

    def test_jumps_sorted_and_inside_horizon(self, contagion):
        for path in simulate_paths(contagion, 1, 200):
            times = [j.time for j in path.jumps]
            assert times == sorted(times)
            assert all(0 < t < contagion.horizon for t in times)

    def test_poisson_counts(self):
        p = poisson_params(beta=2.0, horizon=5.0)
        counts = np.array([q.n_claims for q in simulate_paths(p, 8, 4000)])
        k = np.arange(5, 17)
        obs = np.array([(counts == i).sum() for i in k] + [(counts < 5).sum() + (counts > 16).sum()])
        pmf = stats.poisson.pmf(k, 10.0)
        exp = np.concatenate([pmf, [1 - pmf.sum()]]) * counts.size
        assert stats.chisquare(obs, exp).pvalue > 0.01

    def test_mean_claim_count_long_horizon(self):
        p = contagion_params(horizon=10.0)
        counts = np.array([q.n_claims for q in simulate_paths(p, 21, 20000)])
        se = counts.std(ddof=1) / np.sqrt(counts.size)
        assert abs(counts.mean() - expected_claim_count(p, 10.0)) <= 3 * se


class TestThinning:
    def test_constant_intensity_accepts_everything(self):
        p = poisson_params(beta=3.0)
        path = simulate_thinning(p, 4)
        assert all(j.kind == CLAIM for j in path.jumps)

    def test_counts_agree_with_exact(self, contagion):
        n = 20000
        thin, _ = thinning_counts(contagion, 9, n)
        exact = np.array([q.n_claims for q in simulate_paths(contagion, 9, n)])
        se = np.hypot(thin.std(ddof=1), exact.std(ddof=1)) / np.sqrt(n)
        assert abs(thin.mean() - exact.mean()) <= 3 * se

    def test_margin_must_be_positive(self, contagion):
        with pytest.raises(DomainError):
            simulate_thinning(contagion, 0, majorant_margin=0.0)


class TestMoments:
    def test_pure_relaxation(self):
        p = _params(1.5, 1.0, 4.0)
        t = np.linspace(0, 3, 7)
        np.testing.assert_allclose(mean_intensity(p, t), 1 + 3 * np.exp(-1.5 * t))

    def test_critical_case_is_linear(self):
        from contagion_reinsurance import SelfExcitation

        p = ModelParams(
            alpha=1.0, beta=1.0, lambda0=2.0, rho=0.5, r=0.0, eta=1.0, horizon=1.0,
            claim_dist=U01, ext_dist=U01, self_excitation=SelfExcitation.linear(2.0),
        )
        assert mean_intensity(p, 2.0) == pytest.approx(2.0 + (1.0 + 0.25) * 2.0)

    def test_contagion_value(self, contagion):
        assert mean_intensity(contagion, 1.0) == pytest.approx(1.5 - 0.5 * np.exp(-1.5), rel=1e-14)


class TestLikelihood:
    def test_unit_rate_no_claims(self):
        p = poisson_params(beta=1.0)
        path = PathRecord(p, (), 0, p.horizon)
        assert log_density_ratio(p, path) == pytest.approx(0.0, abs=1e-15)

    def test_no_claims_general(self, contagion):
        path = PathRecord(contagion, (), 0, 1.0)
        expected = 1.0 - compensator_between(contagion, 1.0, 1.0)
        assert log_density_ratio(contagion, path) == pytest.approx(expected)

    def test_one_claim(self):
        p = poisson_params(beta=2.0, horizon=2.0)
        path = PathRecord(p, (JumpRecord(1.0, CLAIM, 0.5),), 0, 2.0)
        assert log_density_ratio(p, path) == pytest.approx(-2 + np.log(2), abs=1e-12)


@pytest.mark.parametrize("make", [lambda: poisson_params(beta=2.0, horizon=10.0), lambda: contagion_params(horizon=10.0)])
def test_time_change_gives_unit_exponentials(make):
    p = make()
    gaps = pooled_interarrivals(simulate_paths(p, 2, 800))
    assert gaps.size > 10000
    assert stats.kstest(gaps, "expon").pvalue > 0.01


def test_per_path_gaps_are_censored():
    # dropping the open gap after the last claim favours short gaps
    p = poisson_params(beta=2.0, horizon=10.0)
    paths = simulate_paths(p, 0, 600)
    naive = np.concatenate([time_changed_interarrivals(q) for q in paths])
    assert naive.mean() < pooled_interarrivals(paths).mean()
    assert stats.kstest(naive, "expon").pvalue < 0.01


def test_time_changed_claims_total(contagion):
    path = simulate_exact(contagion, 4, 1)
    times, total = time_changed_claims(path)
    grid = np.linspace(0.0, 1.0, 200001)
    lam = np.array([intensity_at(contagion, path.jumps, t) for t in grid])
    assert total == pytest.approx(np.trapezoid(lam, grid), rel=1e-4)
    assert np.all(np.diff(times) > 0) and (times.size == 0 or times[-1] <= total)


def test_path_csv_round_trip(tmp_path, contagion):
    path = simulate_exact(contagion, 5, 2)
    dest = tmp_path / "path.csv"
    write_path_csv(path, dest, "seed=5")
    rows = read_path_csv(dest)
    assert jumps_from_rows(rows) == path.jumps
    lam_after = [r[3] for r in rows]
    expected = [intensity_at(contagion, path.jumps, j.time) for j in path.jumps]
    np.testing.assert_allclose(lam_after, expected, rtol=1e-12)
