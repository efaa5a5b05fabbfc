"""Simulating a dynamic contagion claim process.

Draws exact paths of the self- and externally-excited intensity, compares the
sample mean of lambda_T with its ODE value and checks the time-change
property: on the compensator clock the claims form a unit-rate Poisson process.
"""
import numpy as np
from scipy import stats

from contagion_reinsurance import (
    MarkDistribution,
    ModelParams,
    SelfExcitation,
    expected_claim_count,
    mean_intensity,
    pooled_interarrivals,
    simulate_paths,
    simulate_thinning,
)

U01 = MarkDistribution.uniform(0.0, 1.0)
params = ModelParams(
    alpha=2.0, beta=1.0, lambda0=1.0, rho=0.5, r=0.0, eta=1.0, horizon=1.0,
    claim_dist=U01, ext_dist=U01, self_excitation=SelfExcitation.linear(1.0),
)

paths = simulate_paths(params, seed=1, n_paths=20000)

# a single path, jump by jump
busy = next(p for p in paths if len(p.jumps) >= 4)
print(f"path {busy.index}:")
for _, s, _, lam_minus, lam_after, jump in busy.walk():
    if jump is not None:
        print(f"  t={s:.4f}  {jump.kind:<8s} mark={jump.mark:.3f}  lambda {lam_minus:.3f} -> {lam_after:.3f}")


def terminal_intensity(path):
    *_, last = path.walk()
    return last[3]


lam_T = np.array([terminal_intensity(p) for p in paths])
n_claims = np.array([p.n_claims for p in paths])
se = lam_T.std(ddof=1) / np.sqrt(lam_T.size)
print(f"\nE[lambda_T]   MC {lam_T.mean():.4f} +- {se:.4f}   ODE {float(mean_intensity(params, params.horizon)):.4f}")
print(f"E[N_T]        MC {n_claims.mean():.4f}   ODE {expected_claim_count(params, params.horizon):.4f}")

# time change: pooled compensator gaps should be Exp(1)
gaps = pooled_interarrivals(paths[:2000])
ks = stats.kstest(gaps, "expon")
print(f"\ntime-changed gaps: n={gaps.size}, mean {gaps.mean():.4f}, KS p-value {ks.pvalue:.3f}")

# the thinning sampler is an independent check on the law of N_T
thin = np.array([simulate_thinning(params, seed=s).n_claims for s in range(3000)])
print(f"thinning sampler E[N_T] {thin.mean():.4f} +- {thin.std(ddof=1) / np.sqrt(thin.size):.4f}")
