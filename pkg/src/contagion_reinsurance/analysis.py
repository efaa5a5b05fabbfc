"""Contagion-versus-Cox comparison and monotonicity diagnostics.

The comparison ``u*(t, lam) <= u*_cox(t)`` holds when phi is increasing in
lambda.  That precondition is checked two ways: the analytic margin
``int B F1(dz) - a`` for time-only policies, and coupled Monte Carlo
differences ``phi(t, lam2) - phi(t, lam1)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .contracts import Pricing, PremiumPrinciple, RetentionContract
from .errors import ConfigError, DomainError
from .model import ModelParams
from .policies import PolicyTable, check_policy
from .valuation import DeterministicWeights, Estimate, phi_samples


@dataclass(frozen=True, eq=False)
class StranaReport:
    t_grid: np.ndarray
    margin: np.ndarray
    tol: float

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    @property
    def passed(self) -> bool:
        return self.min_margin >= -self.tol

    def write_csv(self, dest, header_comment: str | None = None) -> None:
        with open(dest, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "margin", "pass"])
            for t, m in zip(self.t_grid, self.margin):
                w.writerow(["%.17g" % t, "%.17g" % m, str(bool(m >= -self.tol)).lower()])


def strana_check(
    params: ModelParams,
    policy,
    principle: PremiumPrinciple,
    contract: RetentionContract,
    t_grid,
    tol: float = 1e-12,
) -> StranaReport:
    """Margin ``int B(t, z) F1(dz) - a(t)`` of the sufficient monotonicity condition.

    ``B(t, z) = exp(eta e^{r(T-t)} Phi(z, u_t) - A(t) ell(z))`` and ``a``, ``A``
    are as in :class:`~.valuation.DeterministicWeights`; the policy must depend
    on time only.
    """
    check_policy(policy, contract)
    pr = Pricing(principle, contract, params.claim_dist)
    wts = DeterministicWeights(params, policy, pr)
    t_grid = np.asarray(t_grid, dtype=float)
    margin = np.empty(t_grid.size)
    for k, t in enumerate(t_grid):
        params.check_time(float(t))
        u = float(wts.u(t))
        margin[k] = params.claim_dist.expect(
            lambda z: np.exp(wts.log_B(np.full_like(z, t), z)), breaks=pr.breaks(u)
        ) - float(wts.a(t))
    return StranaReport(t_grid, margin, tol)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    t_grid: np.ndarray
    lam_grid: np.ndarray
    u_star: np.ndarray
    u_cox: np.ndarray
    tol: float
    precondition: str = "unverified-precondition"

    @property
    def violation(self) -> np.ndarray:
        return self.u_star > self.u_cox[:, None] + self.tol

    @property
    def violations(self) -> int:
        return int(self.violation.sum())

    @property
    def max_excess(self) -> float:
        return float(np.max(self.u_star - self.u_cox[:, None]))

    def violation_cells(self) -> list[tuple[float, float, float, float]]:
        i, j = np.nonzero(self.violation)
        return [
            (self.t_grid[a], self.lam_grid[b], self.u_star[a, b], self.u_cox[a])
            for a, b in zip(i.tolist(), j.tolist())
        ]

    def write_csv(self, dest, header_comment: str | None = None) -> None:
        v = self.violation
        with open(dest, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lambda", "u_star", "u_cox", "violation"])
            for i, t in enumerate(self.t_grid):
                for j, lam in enumerate(self.lam_grid):
                    w.writerow(
                        ["%.17g" % t, "%.17g" % lam, "%.17g" % self.u_star[i, j],
                         "%.17g" % self.u_cox[i], str(bool(v[i, j])).lower()]
                    )


def compare_policies(
    policy_table: PolicyTable, cox_curve, tol: float, precondition: str = "unverified-precondition"
) -> ComparisonReport:
    """Cellwise check of ``u*(t, lam) <= u_cox(t) + tol``.

    ``cox_curve`` is a callable of time, an array over the table's time grid,
    or a Cox :class:`PolicyTable` on the same grid and contract.
    """
    tg = policy_table.t_grid
    if isinstance(cox_curve, PolicyTable):
        if cox_curve.contract != policy_table.contract:
            raise ConfigError("policy tables are bound to different contracts")
        if not np.array_equal(cox_curve.t_grid, tg):
            raise ConfigError("policy tables use different time grids")
        u_cox = cox_curve.u[:, 0]
    elif callable(cox_curve):
        u_cox = np.array([float(cox_curve(t)) for t in tg])
    else:
        u_cox = np.asarray(cox_curve, dtype=float)
        if u_cox.shape != tg.shape:
            raise ConfigError("Cox curve does not match the time grid")
    return ComparisonReport(tg, policy_table.lam_grid, policy_table.u, u_cox, tol, precondition)


def coupled_monotonicity(
    params: ModelParams,
    t: float,
    lam1: float,
    lam2: float,
    policy,
    contract: RetentionContract,
    principle: PremiumPrinciple,
    n: int,
    seed: int,
) -> Estimate:
    """Paired estimate of ``phi(t, lam2) - phi(t, lam1)`` on common random numbers."""
    if lam1 > lam2:
        raise DomainError("need lam1 <= lam2")
    check_policy(policy, contract)
    pr = Pricing(principle, contract, params.claim_dist)
    x = phi_samples(params, t, [lam1, lam2], policy, pr, n, seed)
    if lam1 == lam2 or t == params.horizon:
        return Estimate(0.0, 0.0, n)
    return Estimate.from_samples(x[1] - x[0])


@dataclass(frozen=True, eq=False)
class MonotonicityProbe:
    t_points: np.ndarray
    lam_points: np.ndarray
    diff: np.ndarray
    stderr: np.ndarray
    k: float = 3.0

    @property
    def passed(self) -> bool:
        return bool(np.all(self.diff >= -self.k * self.stderr))


def monotonicity_probe(
    params: ModelParams,
    policy,
    contract: RetentionContract,
    principle: PremiumPrinciple,
    t_points,
    lam_points,
    n: int,
    seed: int,
    k: float = 3.0,
) -> MonotonicityProbe:
    """Coupled differences ``phi(t, 2 lam) - phi(t, lam)`` over a probe grid."""
    t_points = np.asarray(t_points, dtype=float)
    lam_points = np.asarray(lam_points, dtype=float)
    diff = np.zeros((t_points.size, lam_points.size))
    se = np.zeros_like(diff)
    for a, t in enumerate(t_points):
        for b, lam in enumerate(lam_points):
            e = coupled_monotonicity(
                params, float(t), float(lam), 2 * float(lam), policy, contract, principle, n, seed
            )
            diff[a, b], se[a, b] = e.mean, e.stderr
    return MonotonicityProbe(t_points, lam_points, diff, se, k)
