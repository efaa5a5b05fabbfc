"""Three routes to phi and why only two of them agree.

The direct estimator simulates the model.  The reweighted estimator simulates
unit-rate claims and multiplies by the exact pathwise density ratio.  The
factorised form additionally integrates the claim and shock marks out of the
exponent, treating the intensity path as if it were independent of them.
That step is exact for a deterministic intensity but not once shocks or
self-excitation make lambda depend on the very jumps being integrated.
"""
from contagion_reinsurance import (
    ConstantPolicy,
    MarkDistribution,
    ModelParams,
    PremiumPrinciple,
    RetentionContract,
    SelfExcitation,
    combined_stderr,
    estimate_phi,
    estimate_phi_factorised,
    estimate_phi_q,
)

U01 = MarkDistribution.uniform(0.0, 1.0)
prop = RetentionContract.proportional()
evp = PremiumPrinciple.evp(0.2, 0.3)
pol = ConstantPolicy(0.5)

models = {
    "poisson (no shocks, no contagion)": ModelParams(
        alpha=1.0, beta=2.0, lambda0=2.0, rho=0.0, r=0.0, eta=1.0, horizon=1.0,
        claim_dist=U01, ext_dist=MarkDistribution.point_mass(0.0),
    ),
    "cox (shocks only)": ModelParams(
        alpha=2.0, beta=1.0, lambda0=1.0, rho=1.0, r=0.0, eta=1.0, horizon=1.0,
        claim_dist=U01, ext_dist=MarkDistribution.uniform(0.0, 3.0),
    ),
    "contagion (shocks and self-excitation)": ModelParams(
        alpha=2.0, beta=1.0, lambda0=1.0, rho=0.5, r=0.0, eta=1.0, horizon=1.0,
        claim_dist=U01, ext_dist=U01, self_excitation=SelfExcitation.linear(2.0),
    ),
}

for name, p in models.items():
    direct = estimate_phi(p, 0.0, p.lambda0, pol, prop, evp, 200_000, seed=21)
    weighted = estimate_phi_q(p, 0.0, p.lambda0, pol, prop, evp, 400_000, seed=22)
    fact = estimate_phi_factorised(p, 0.0, p.lambda0, pol, prop, evp, 200_000, seed=23)
    print(name)
    for label, est in (("direct", direct), ("reweighted", weighted), ("factorised", fact)):
        z = (est.mean - direct.mean) / max(combined_stderr(est, direct), 1e-300)
        tail = "" if est is direct else f"   {z:+6.1f} sd from direct"
        print(f"  {label:<11s} {est.mean:.5f} +- {est.stderr:.5f}{tail}")
