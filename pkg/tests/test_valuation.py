import numpy as np
import pytest

from contagion_reinsurance import (
    ConstantPolicy,
    DomainError,
    Estimate,
    JumpRecord,
    PhiTable,
    PolicyTable,
    Pricing,
    PremiumPrinciple,
    RetentionContract,
    TimeCurvePolicy,
    UnsupportedPolicyError,
    coupled_monotonicity,
    estimate_phi,
    estimate_phi_factorised,
    estimate_phi_q,
    estimate_phi_table,
    phi_closed_form_poisson,
    phi_deterministic_intensity,
    strana_check,
    terminal_wealth,
    value_function,
)
from contagion_reinsurance.process import CLAIM, PathRecord
from contagion_reinsurance.valuation import DeterministicWeights, combined_stderr

from conftest import U01, contagion_params, poisson_params

PROP = RetentionContract.proportional()
NULL = ConstantPolicy(1.0)
EVP = PremiumPrinciple.evp(0.2, 0.3)


def _agree(a: Estimate, b: Estimate, k=3.0):
    return abs(a.mean - b.mean) <= k * combined_stderr(a, b)


class TestClosedForms:
    def test_null_reinsurance_value(self, poisson):
        # reference digits are rounded from intermediate values; the formula is checked exactly
        val = phi_closed_form_poisson(poisson, NULL, PROP, PremiumPrinciple.evp(0.2, 0.0), 0.0)
        assert val == pytest.approx(np.exp(-1.2 + 2 * (np.e - 2)), rel=1e-12)
        assert val == pytest.approx(1.26690, abs=2e-5)

    def test_full_reinsurance_has_no_claim_exposure(self, poisson):
        pr = Pricing(EVP, PROP, U01)
        val = phi_closed_form_poisson(poisson, ConstantPolicy(0.0), PROP, EVP, 0.25)
        drift = 2.0 * (pr.c0 - pr.d(0.0))
        assert val == pytest.approx(np.exp(-drift * 0.75), rel=1e-12)

    def test_terminal_time(self, poisson):
        assert phi_closed_form_poisson(poisson, NULL, PROP, EVP, 1.0) == 1.0

    def test_needs_degenerate_config(self, contagion):
        with pytest.raises(DomainError):
            phi_closed_form_poisson(contagion, NULL, PROP, EVP, 0.0)

    def test_deterministic_intensity_reduces_to_poisson(self, poisson):
        pr = Pricing(EVP, PROP, U01)
        for u in (0.0, 0.4, 1.0):
            pol = ConstantPolicy(u)
            assert phi_deterministic_intensity(poisson, pol, pr, 0.3, 2.0) == pytest.approx(
                phi_closed_form_poisson(poisson, pol, PROP, EVP, 0.3), rel=1e-12
            )


class TestDirectEstimator:
    def test_terminal_time(self, contagion):
        est = estimate_phi(contagion, 1.0, 2.0, NULL, PROP, EVP, 100, 0)
        assert (est.mean, est.stderr) == (1.0, 0.0)

    def test_half_horizon_oracle(self, poisson):
        pr = PremiumPrinciple.evp(0.2, 0.0)
        est = estimate_phi(poisson, 0.5, 2.0, NULL, PROP, pr, 50000, 1)
        assert est.within(1.12557)
        assert phi_closed_form_poisson(poisson, NULL, PROP, pr, 0.5) == pytest.approx(1.12557, abs=2e-5)

    def test_relaxing_intensity_with_time_curve(self):
        p = poisson_params()
        p = type(p)(**{**p.__dict__, "lambda0": 4.0, "alpha": 1.5, "r": 0.05})
        pol = TimeCurvePolicy((0.0, 0.5, 1.0), (0.3, 0.7, 0.5))
        exact = phi_deterministic_intensity(p, pol, Pricing(EVP, PROP, U01), 0.0, 4.0)
        est = estimate_phi(p, 0.0, 4.0, pol, PROP, EVP, 40000, 3)
        assert est.within(exact)

    def test_rejects_empty_sample(self, contagion):
        with pytest.raises(DomainError):
            estimate_phi(contagion, 0.0, 1.0, NULL, PROP, EVP, 0, 0)

    def test_coupled_monotone_when_condition_holds(self):
        p = contagion_params().cox_twin()
        zero = PremiumPrinciple.evp(0.0, 0.0)
        pol = ConstantPolicy(0.5)
        assert strana_check(p, pol, zero, PROP, np.linspace(0, 1, 6)).passed
        for lam in (0.5, 1.0, 3.0):
            d = coupled_monotonicity(p, 0.2, lam, 2 * lam, pol, PROP, zero, 20000, 5)
            assert d.mean >= -3 * d.stderr

    def test_coupling_trivia(self, contagion):
        d = coupled_monotonicity(contagion, 0.2, 1.5, 1.5, NULL, PROP, EVP, 1000, 0)
        assert (d.mean, d.stderr) == (0.0, 0.0)
        d = coupled_monotonicity(contagion, 1.0, 1.0, 2.0, NULL, PROP, EVP, 1000, 0)
        assert d.mean == 0.0


class TestChangeOfMeasure:
    def test_terminal_time(self, contagion):
        assert estimate_phi_q(contagion, 1.0, 3.0, NULL, PROP, EVP, 10, 0).mean == 1.0

    def test_state_dependent_policy_rejected(self, contagion):
        tab = PolicyTable(np.array([0.0, 1.0]), np.array([1.0, 2.0]), np.full((2, 2), 0.5), PROP)
        with pytest.raises(UnsupportedPolicyError):
            estimate_phi_q(contagion, 0.0, 1.0, tab, PROP, EVP, 10, 0)

    def test_weight_at_least_one_without_contagion_and_zero_drift(self):
        # c = d and ell = 0 make a = 1 and B = exp(eta Phi) >= 1
        p = contagion_params().cox_twin()
        pr = PremiumPrinciple.evp(0.0, 0.0)
        wts = DeterministicWeights(p, ConstantPolicy(0.0), Pricing(pr, PROP, U01))
        s = np.linspace(0, 1, 11)
        np.testing.assert_allclose(wts.a(s), 1.0)
        z = np.linspace(0, 1, 7)
        assert np.all(wts.log_B(np.full_like(z, 0.3), z) >= 0)

    def test_weights_closed_form_vs_quadrature(self):
        p = contagion_params(r=0.07)
        pr = Pricing(EVP, PROP, U01)
        const = DeterministicWeights(p, ConstantPolicy(0.4), pr)
        curve = DeterministicWeights(p, TimeCurvePolicy((0.0, 1.0), (0.4, 0.4)), pr)
        v = np.array([0.0, 0.3, 0.9])
        np.testing.assert_allclose(const.A(v), curve.A(v), rtol=1e-12)
        np.testing.assert_allclose(const.int_a(v), curve.int_a(v), rtol=1e-12)

    @pytest.mark.parametrize("which", ["poisson", "contagion"])
    def test_agrees_with_direct(self, which):
        p = poisson_params() if which == "poisson" else contagion_params()
        pol = ConstantPolicy(0.5)
        direct = estimate_phi(p, 0.0, p.lambda0, pol, PROP, EVP, 100000, 1)
        weighted = estimate_phi_q(p, 0.0, p.lambda0, pol, PROP, EVP, 400000, 2)
        assert _agree(direct, weighted)

    def test_factorised_form_exact_without_feedback(self, poisson):
        pol = ConstantPolicy(0.5)
        fact = estimate_phi_factorised(poisson, 0.0, 2.0, pol, PROP, EVP, 1000, 0)
        assert fact.mean == pytest.approx(phi_closed_form_poisson(poisson, pol, PROP, EVP, 0.0), rel=1e-9)

    def test_factorised_form_biased_with_contagion(self, contagion):
        # integrating the jumps out while keeping lambda_s is not legitimate
        # once lambda_s is driven by those same jumps
        pol = ConstantPolicy(0.5)
        direct = estimate_phi(contagion, 0.0, 1.0, pol, PROP, EVP, 100000, 1)
        fact = estimate_phi_factorised(contagion, 0.0, 1.0, pol, PROP, EVP, 100000, 2)
        assert abs(direct.mean - fact.mean) > 6 * combined_stderr(direct, fact)


class TestWealth:
    def test_no_claims(self, poisson):
        pr = Pricing(EVP, PROP, U01)
        path = PathRecord(poisson, (), 0, 1.0, start_time=0.25)
        x = terminal_wealth(path, ConstantPolicy(0.6), EVP, PROP, 3.0)
        assert x == pytest.approx(3.0 + 2.0 * (pr.c0 - pr.d(0.6)) * 0.75)

    def test_null_reinsurance_claim(self, poisson):
        path = PathRecord(poisson, (JumpRecord(0.9, CLAIM, 0.4),), 0, 1.0)
        x = terminal_wealth(path, NULL, EVP, PROP, 1.0)
        assert x == pytest.approx(1.0 + 2.0 * 1.2 * 0.5 - 0.4)

    def test_full_reinsurance_is_deterministic(self, poisson):
        path = PathRecord(poisson, (JumpRecord(0.3, CLAIM, 0.9), JumpRecord(0.6, CLAIM, 0.2)), 0, 1.0)
        x = terminal_wealth(path, ConstantPolicy(0.0), EVP, PROP, 0.0)
        assert x == pytest.approx(2.0 * 0.5 * (0.2 - 0.3))

    def test_discounting(self):
        p = poisson_params(r=0.1)
        path = PathRecord(p, (), 0, 1.0)
        pr = Pricing(EVP, PROP, U01)
        x = terminal_wealth(path, NULL, EVP, PROP, 1.0)
        assert x == pytest.approx(np.exp(0.1) + 2.0 * pr.c0 * np.expm1(0.1) / 0.1)


def test_value_function():
    p = poisson_params()
    assert value_function(0.0, 0.0, 2.0, 1.3, p) == 1.3
    assert value_function(1.0, 2.0, 2.0, 1.0, p) == pytest.approx(np.exp(-2.0))
    assert value_function(0.0, 1.0, 2.0, 1.2669, p) == pytest.approx(0.46606, abs=2e-5)


def test_phi_table_workers_and_csv(tmp_path, contagion):
    pr = Pricing(EVP, PROP, U01)
    tg, lg = np.linspace(0, 1, 4), np.array([1.0, 2.0, 3.0])
    a = estimate_phi_table(contagion, tg, lg, NULL, pr, 2000, 9, workers=1)
    b = estimate_phi_table(contagion, tg, lg, NULL, pr, 2000, 9, workers=2)
    np.testing.assert_array_equal(a.phi, b.phi)
    np.testing.assert_array_equal(a.phi[-1], 1.0)
    a.write_csv(tmp_path / "phi.csv", "seed=9")
    back = PhiTable.read_csv(tmp_path / "phi.csv")
    np.testing.assert_array_equal(back.phi, a.phi)
    np.testing.assert_array_equal(back.stderr, a.stderr)
