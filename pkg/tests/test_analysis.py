import numpy as np
import pytest
from scipy import integrate

from contagion_reinsurance import (
    ConfigError,
    ConstantPolicy,
    ModelParams,
    PolicyTable,
    PremiumPrinciple,
    RetentionContract,
    SelfExcitation,
    TimeCurvePolicy,
    compare_policies,
    cox_table,
    monotonicity_probe,
    strana_check,
)

from conftest import U01, contagion_params

PROP = RetentionContract.proportional()


class TestStrana:
    def test_passes_when_drift_cancels_and_no_feedback(self):
        p = contagion_params().cox_twin()
        rep = strana_check(p, ConstantPolicy(0.0), PremiumPrinciple.evp(0.3, 0.3), PROP, np.linspace(0, 1, 5))
        assert rep.passed and rep.min_margin >= 0

    def test_terminal_margin(self, contagion):
        pr = PremiumPrinciple.evp(0.2, 0.2)
        rep = strana_check(contagion, ConstantPolicy(0.5), pr, PROP, [1.0])
        a_T = 1 + (1.2 * 0.5 - 1.2 * 0.5 * 0.5)
        assert rep.margin[0] == pytest.approx(2 * (np.exp(0.5) - 1) - a_T, rel=1e-12)

    def test_against_adaptive_quadrature(self):
        p = ModelParams(
            alpha=1.0, beta=1.0, lambda0=1.0, rho=0.5, r=0.0, eta=1.0, horizon=1.0,
            claim_dist=U01, ext_dist=U01, self_excitation=SelfExcitation.linear(1.0),
        )
        pr = PremiumPrinciple.evp(0.2, 0.2)
        c, d = 1.2 * 0.5, 1.2 * 0.5 * 0.5
        a = 1 + (c - d)

        def margin(t):
            A = integrate.quad(lambda s: a * np.exp(-(s - t)), t, 1.0, epsabs=1e-14)[0]
            B = integrate.quad(lambda z: np.exp(0.5 * z - A * z), 0.0, 1.0, epsabs=1e-14)[0]
            return B - a

        ts = np.array([0.0, 0.25, 0.5, 0.9])
        rep = strana_check(p, ConstantPolicy(0.5), pr, PROP, ts)
        np.testing.assert_allclose(rep.margin, [margin(t) for t in ts], rtol=1e-10)

    def test_time_curve_and_csv(self, tmp_path, contagion):
        pol = TimeCurvePolicy((0.0, 1.0), (0.2, 0.8))
        rep = strana_check(contagion, pol, PremiumPrinciple.evp(0.1, 0.3), PROP, np.linspace(0, 1, 4))
        rep.write_csv(tmp_path / "s.csv", "seed=0")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[1] == "t,margin,pass" and len(lines) == 6


class TestCompare:
    def setup_method(self):
        p = contagion_params()
        self.pr = PremiumPrinciple.evp(0.1, 0.5)
        self.tg, self.lg = np.linspace(0, 1, 4), np.array([1.0, 2.0])
        self.cox = cox_table(p.cox_twin(), PROP, self.pr, self.tg, self.lg)

    def test_identical_tables(self):
        rep = compare_policies(self.cox, self.cox, 1e-4)
        assert rep.violations == 0 and rep.max_excess == 0.0

    def test_perturbed_table_is_flagged(self, tmp_path):
        bumped = PolicyTable(self.tg, self.lg, np.minimum(self.cox.u + 0.1, 1.0), PROP)
        rep = compare_policies(bumped, self.cox, 1e-4)
        assert rep.violations > 0
        assert len(rep.violation_cells()) == rep.violations
        rep.write_csv(tmp_path / "c.csv")
        assert "true" in (tmp_path / "c.csv").read_text()

    def test_curve_forms_agree(self):
        arr = self.cox.u[:, 0]
        curve = TimeCurvePolicy(tuple(self.tg), tuple(arr))
        a = compare_policies(self.cox, arr, 1e-4)
        b = compare_policies(self.cox, curve, 1e-4)
        np.testing.assert_array_equal(a.u_cox, b.u_cox)

    def test_mismatch_rejected(self):
        other = cox_table(contagion_params().cox_twin(), RetentionContract.limited_xl(0.5, U01), self.pr, self.tg, self.lg)
        with pytest.raises(ConfigError):
            compare_policies(self.cox, other, 1e-4)
        with pytest.raises(ConfigError):
            compare_policies(self.cox, np.zeros(3), 1e-4)


def test_probe_shapes_and_verdict():
    p = contagion_params().cox_twin()
    pr = PremiumPrinciple.evp(0.0, 0.0)
    probe = monotonicity_probe(p, ConstantPolicy(0.5), PROP, pr, [0.0, 0.5], [1.0, 2.0, 3.0], 4000, 1)
    assert probe.diff.shape == (2, 3) and probe.stderr.shape == (2, 3)
    assert probe.passed
