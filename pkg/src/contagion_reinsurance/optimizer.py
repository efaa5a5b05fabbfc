"""Optimal reinsurance: first-order conditions, thresholds and policy iteration.

Everything works with the first-order function scaled by ``1/(lam*phi)``,

    h(u) = -d'(u) - int ratio(z) exp(eta e^{r(T-t)} Phi(z, u)) dPhi/du(z, u) F1(dz),

with ``ratio(z) = phi(t, lam + ell(z)) / phi(t, lam)``.  Under convexity of
the Hamiltonian ``h`` is nonincreasing in ``u``; the optimum is ``u_M``
when ``h(u_M) < 0``, ``u_N`` when ``h(u_N) > 0`` and the root otherwise.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .contracts import (
    EXCESS_OF_LOSS,
    LIMITED_XL,
    PROPORTIONAL,
    Pricing,
    PremiumPrinciple,
    RetentionContract,
)
from .errors import ConcavityViolation, DomainError, NumericalError, StructuralError
from .model import ModelParams
from .policies import PolicyTable
from .valuation import PhiTable, estimate_phi_table

FOC_TOL = 1e-12


@dataclass(frozen=True)
class FocSpec:
    """Ingredients of the first-order condition at a given (t, lambda).

    ``phi_ratio(t, lam, z)`` returns ``phi(t, lam + ell(z)) / phi(t, lam)``
    (vectorised in ``z``); ``None`` means the ratio is identically one, as
    in the Cox model.
    """

    params: ModelParams
    contract: RetentionContract
    principle: PremiumPrinciple
    phi_ratio: Callable | None = None

    @classmethod
    def cox(cls, params, contract, principle) -> "FocSpec":
        return cls(params, contract, principle, None)

    @classmethod
    def from_phi_table(cls, table: PhiTable, params, contract, principle) -> "FocSpec":
        """Ratio from a table: exact rows when ``t`` is on the grid, bilinear otherwise."""
        ell = params.self_excitation

        def ratio(t, lam, z):
            hit = np.flatnonzero(np.isclose(table.t_grid, t, rtol=0, atol=1e-13))
            if hit.size:
                return table.row_ratio(int(hit[0]), lam, ell(z))
            return table.at(t, lam + ell(z)) / table.at(t, lam)

        return cls(params, contract, principle, ratio)

    @property
    def pricing(self) -> Pricing:
        return Pricing(self.principle, self.contract, self.params.claim_dist)

    def ratio_fn(self, t, lam):
        if self.phi_ratio is None:
            return lambda z: np.ones_like(np.asarray(z, dtype=float))
        return lambda z: self.phi_ratio(t, lam, z)


@dataclass(frozen=True)
class ThresholdReport:
    t: float
    lam: float
    theta_F: float | None = None
    theta_N: float | None = None
    theta_L: float | None = None


def _growth(params: ModelParams, t: float) -> float:
    return params.eta * np.exp(params.r * (params.horizon - t))


def foc_value(t: float, lam: float, foc: FocSpec, u: float, ratio=None, pricing=None) -> float:
    """The scaled first-order function h(t, lam, u)."""
    pr = pricing or foc.pricing
    ratio = ratio or foc.ratio_fn(t, lam)
    k = _growth(foc.params, t)
    dist = foc.params.claim_dist
    integral = dist.expect(
        lambda z: ratio(z) * np.exp(k * pr.phi(z, u)) * pr.dphi(z, u), breaks=pr.breaks(u)
    )
    return float(-pr.dd(u) - integral)


@dataclass(frozen=True)
class FocSolution:
    u: float
    region: str
    h: float


def solve_foc(t: float, lam: float, foc: FocSpec, tol: float = FOC_TOL) -> FocSolution:
    """Optimal control at ``(t, lam)`` with the three-region rule.

    Raises
    ------
    ConcavityViolation
        If ``h(u_M) < 0`` and ``h(u_N) > 0`` at the same time.
    """
    c = foc.contract
    pr = foc.pricing
    ratio = foc.ratio_fn(t, lam)
    lo, hi = c.u_M, c.u_hi
    h_lo = foc_value(t, lam, foc, lo, ratio, pr)
    h_hi = foc_value(t, lam, foc, hi, ratio, pr)
    if h_lo < 0 and h_hi > 0:
        raise ConcavityViolation(
            f"h(u_M)={h_lo:.6g} < 0 and h(u_N)={h_hi:.6g} > 0 at t={t}, lambda={lam}"
        )
    if h_lo < 0:
        return FocSolution(lo, "A0", h_lo)
    if h_hi > 0:
        return FocSolution(hi, "A1", h_hi)
    # bisection on the sign predicate; h may vanish on a whole interval at the
    # top of the claim support for the excess-of-loss families
    a, b = lo, hi
    while b - a > tol:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if foc_value(t, lam, foc, m, ratio, pr) > 0:
            a = m
        else:
            b = m
    u = 0.5 * (a + b)
    region = "interior"
    if c.kind != PROPORTIONAL and u >= hi - tol:
        u, region = hi, "A1"
    return FocSolution(u, region, foc_value(t, lam, foc, u, ratio, pr))


def cox_optimal(
    t: float, contract: RetentionContract, principle: PremiumPrinciple, params: ModelParams
) -> float:
    """Optimal control when the FOC does not involve phi (no self-excitation).

    Under EVP the (limited) excess-of-loss optimum is
    ``log(1 + theta_R) / eta * exp(-r (T - t))`` clamped to the control range;
    the other cases solve the phi-free first-order condition.
    """
    params.check_time(t)
    if principle.kind == "EVP" and contract.kind in (EXCESS_OF_LOSS, LIMITED_XL):
        u = np.log1p(principle.theta_R) / params.eta * np.exp(-params.r * (params.horizon - t))
        return float(np.clip(u, contract.u_M, contract.u_hi))
    return solve_foc(t, 1.0, FocSpec.cox(params, contract, principle)).u


def thresholds(t: float, lam: float, foc: FocSpec) -> ThresholdReport:
    """Loading thresholds separating the three regions.

    Proportional: ``theta_F`` (full reinsurance below) and ``theta_N``
    (null reinsurance above).  Excess-of-loss families: ``theta_L``
    (maximal coverage below).
    """
    p = foc.params
    dist = p.claim_dist
    ratio = foc.ratio_fn(t, lam)
    if foc.contract.kind == PROPORTIONAL:
        k = _growth(p, t)
        ez = dist.mean
        th_f = dist.expect(lambda z: ratio(z) * z) / ez - 1.0
        th_n = dist.expect(lambda z: ratio(z) * z * np.exp(k * z)) / ez - 1.0
        return ThresholdReport(t, lam, theta_F=th_f, theta_N=th_n)
    top = foc.contract.beta_M
    mass = float(dist.cdf(top)) if np.isfinite(top) else 1.0
    if mass <= 0:
        raise StructuralError("coverage beta_M carries no claim mass")
    hi = top if np.isfinite(top) else None
    th_l = dist.expect(ratio, hi=hi) / mass - 1.0
    return ThresholdReport(t, lam, theta_L=th_l)


# policy iteration


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 20000
    seed: int = 0
    max_iter: int = 50
    tol: float = 1e-4
    workers: int = 1


@dataclass
class IterationResult:
    policy: PolicyTable
    phi: PhiTable
    converged: bool
    diagnostics: list = field(default_factory=list)

    def write_diagnostics(self, dest) -> None:
        with open(dest, "w") as fh:
            for row in self.diagnostics:
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def cox_table(params, contract, principle, t_grid, lam_grid) -> PolicyTable:
    """Cox-optimal strategy on a grid (constant in lambda)."""
    col = np.array([cox_optimal(float(t), contract, principle, params) for t in t_grid])
    u = np.repeat(col[:, None], len(lam_grid), axis=1)
    return PolicyTable(t_grid, lam_grid, u, contract)


def improve_policy(table: PhiTable, params, contract, principle) -> PolicyTable:
    """One policy-improvement sweep: solve the FOC at every grid cell."""
    foc = FocSpec.from_phi_table(table, params, contract, principle)
    nt, nl = table.phi.shape
    u = np.empty((nt, nl))
    reg = np.empty((nt, nl), dtype=object)
    for i, t in enumerate(table.t_grid):
        for j, lam in enumerate(table.lam_grid):
            sol = solve_foc(float(t), float(lam), foc)
            u[i, j], reg[i, j] = sol.u, sol.region
    return PolicyTable(table.t_grid, table.lam_grid, u, contract, reg)


def policy_iteration(
    params: ModelParams,
    contract: RetentionContract,
    principle: PremiumPrinciple,
    t_grid,
    lam_grid,
    mc: MCConfig = MCConfig(),
    log: Callable[[dict], None] | None = None,
) -> IterationResult:
    """Alternate Monte Carlo evaluation of phi and FOC improvement.

    Starts from the Cox strategy.  The random streams are the same in every
    iteration, so the improvement map is deterministic and the stopping rule
    ``max |u_{k+1} - u_k| <= tol`` is meaningful.  The returned phi table is
    the one used to build the returned policy.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    lam_grid = np.asarray(lam_grid, dtype=float)
    if t_grid[0] < 0 or t_grid[-1] > params.horizon:
        raise DomainError("time grid must lie in [0, T]")
    if lam_grid[0] < min(params.lambda0, params.beta) - 1e-12:
        raise DomainError("lambda grid must start at or above min(lambda0, beta)")
    pricing = Pricing(principle, contract, params.claim_dist)
    policy = cox_table(params, contract, principle, t_grid, lam_grid)
    diags = []
    phi = None
    for k in range(1, mc.max_iter + 1):
        t0 = time.perf_counter()
        phi = estimate_phi_table(
            params, t_grid, lam_grid, policy, pricing, mc.n_paths, mc.seed, mc.workers
        )
        new = improve_policy(phi, params, contract, principle)
        delta = new.max_abs_diff(policy)
        row = {
            "iteration": k,
            "sup_delta": delta,
            "phi_min": float(phi.phi.min()),
            "phi_max": float(phi.phi.max()),
        }
        diags.append(row)
        # wall time goes to the log only so stored diagnostics stay reproducible
        if log:
            log({**row, "seconds": round(time.perf_counter() - t0, 3)})
        policy = new
        if delta <= mc.tol:
            return IterationResult(policy, phi, True, diags)
    return IterationResult(policy, phi, False, diags)


# HJB residual


def hjb_residual(
    phi: PhiTable,
    policy,
    i: int,
    j: int,
    params: ModelParams,
    contract: RetentionContract,
    principle: PremiumPrinciple,
) -> float:
    """Signed residual of the reduced HJB equation at grid cell ``(i, j)``.

    Time and intensity derivatives use central differences; the jump
    integrals interpolate linearly along the row and hold the last value
    beyond the grid.  The control is the policy's value at the cell.
    """
    nt, nl = phi.phi.shape
    if not (0 < i < nt - 1 and 0 < j < nl - 1):
        raise DomainError(f"cell ({i}, {j}) is on the grid boundary")
    p = params
    t, lam = phi.t_grid[i], phi.lam_grid[j]
    tg, lg, v = phi.t_grid, phi.lam_grid, phi.phi
    f = v[i, j]
    dt = (v[i + 1, j] - v[i - 1, j]) / (tg[i + 1] - tg[i - 1])
    dl = (v[i, j + 1] - v[i, j - 1]) / (lg[j + 1] - lg[j - 1])
    row = lambda x: np.interp(x, lg, v[i])
    pr = Pricing(principle, contract, p.claim_dist)
    k = _growth(p, t)
    u = float(np.clip(policy(t, lam), contract.u_M, contract.u_hi))
    ext = p.rho * p.ext_dist.expect(lambda z: row(lam + z) - f) if p.rho > 0 else 0.0
    ell = p.self_excitation
    psi = k * f * lam * float(pr.d(u)) + lam * p.claim_dist.expect(
        lambda z: np.exp(k * pr.phi(z, u)) * row(lam + ell(z)) - f, breaks=pr.breaks(u)
    )
    return float(dt + p.alpha * (p.beta - lam) * dl + ext - k * f * lam * pr.c0 + psi)
