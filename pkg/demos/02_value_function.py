"""Monte Carlo value function against closed forms.

With a constant intensity the retained-loss process is compound Poisson and
phi(t, lambda) has an exponential formula.  The direct simulator and the
reweighted (unit-rate reference measure) estimator should both land on it.
A contagion model then shows how phi grows with the current intensity.
"""
import numpy as np

from contagion_reinsurance import (
    ConstantPolicy,
    MarkDistribution,
    ModelParams,
    Pricing,
    PremiumPrinciple,
    RetentionContract,
    SelfExcitation,
    estimate_phi,
    estimate_phi_q,
    phi_closed_form_poisson,
    phi_deterministic_intensity,
    value_function,
)

U01 = MarkDistribution.uniform(0.0, 1.0)
prop = RetentionContract.proportional()

poisson = ModelParams(
    alpha=1.0, beta=2.0, lambda0=2.0, rho=0.0, r=0.0, eta=1.0, horizon=1.0,
    claim_dist=U01, ext_dist=MarkDistribution.point_mass(0.0),
)
evp = PremiumPrinciple.evp(0.2, 0.3)

print("constant intensity 2, proportional retention, EVP(0.2, 0.3)")
print(f"{'u':>5s} {'exact':>9s} {'direct MC':>18s} {'reweighted MC':>18s}")
for u in (0.0, 0.5, 1.0):
    pol = ConstantPolicy(u)
    exact = phi_closed_form_poisson(poisson, pol, prop, evp, 0.0)
    p_est = estimate_phi(poisson, 0.0, 2.0, pol, prop, evp, 50_000, seed=3)
    q_est = estimate_phi_q(poisson, 0.0, 2.0, pol, prop, evp, 200_000, seed=4)
    print(f"{u:5.2f} {exact:9.5f} {p_est.mean:10.5f} +- {p_est.stderr:.4f} {q_est.mean:10.5f} +- {q_est.stderr:.4f}")

# the reweighted estimator pays for the gap between lambda and the unit
# reference rate with variance, hence the wider error bars

# deterministic but time-varying intensity: the quadrature formula still applies
decaying = ModelParams(
    alpha=1.5, beta=1.0, lambda0=3.0, rho=0.0, r=0.05, eta=1.0, horizon=1.0,
    claim_dist=U01, ext_dist=MarkDistribution.point_mass(0.0),
)
pol = ConstantPolicy(0.6)
pr = Pricing(evp, prop, U01)
exact = phi_deterministic_intensity(decaying, pol, pr, 0.0, 3.0)
mc = estimate_phi(decaying, 0.0, 3.0, pol, prop, evp, 50_000, seed=5)
print(f"\nintensity decaying 3 -> 1:  quadrature {exact:.5f}   MC {mc.mean:.5f} +- {mc.stderr:.5f}")

# contagion: phi increases with the starting intensity
contagion = ModelParams(
    alpha=2.0, beta=1.0, lambda0=1.0, rho=0.5, r=0.0, eta=1.0, horizon=1.0,
    claim_dist=U01, ext_dist=U01, self_excitation=SelfExcitation.linear(1.0),
)
print("\ncontagion model, u = 0.5")
for lam in (1.0, 2.0, 4.0):
    est = estimate_phi(contagion, 0.0, lam, ConstantPolicy(0.5), prop, evp, 50_000, seed=6)
    v = value_function(0.0, 1.0, lam, est.mean, contagion)
    print(f"  lambda={lam:3.1f}  phi={est.mean:.4f} +- {est.stderr:.4f}   v(0, x=1, lambda)={v:.4f}")
