"""Retention functions and premium principles.

All premiums are linear in the pre-jump intensity: the insurance premium is
``c = lam * c0`` and the reinsurance premium ``q(u) = lam * d(u)``.  The
per-unit rates ``c0`` and ``d(u)`` depend only on the claim law, the contract
and the loadings.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .model import GL_NODES, MarkDistribution

PROPORTIONAL = "proportional"
EXCESS_OF_LOSS = "excess_of_loss"
LIMITED_XL = "limited_xl"

_DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class RetentionContract:
    """A one-parameter reinsurance treaty.

    ``u_M`` is maximal protection, ``u_N`` is null reinsurance.  For the two
    excess-of-loss families ``u_N`` is infinite and ``u_cap`` (the top of the
    claim support) stands in for it, which is exact for bounded claims since
    ``Phi(z, u) = z`` once ``u >= z``.
    """

    kind: str
    beta_M: float = np.inf
    u_cap: float = 1.0

    def __post_init__(self):
        if self.kind not in (PROPORTIONAL, EXCESS_OF_LOSS, LIMITED_XL):
            raise ConfigError(f"unknown contract kind {self.kind!r}")
        if self.kind == LIMITED_XL and not (0 < self.beta_M < np.inf):
            raise ConfigError("limited excess of loss needs a finite coverage beta_M > 0")
        if self.kind == PROPORTIONAL and self.u_cap != 1.0:
            raise ConfigError("proportional contracts live on [0, 1]")
        if not (0 < self.u_cap < np.inf):
            raise ConfigError("u_cap must be finite and positive")

    @classmethod
    def proportional(cls) -> "RetentionContract":
        return cls(PROPORTIONAL)

    @classmethod
    def excess_of_loss(cls, claim_dist: MarkDistribution) -> "RetentionContract":
        return cls(EXCESS_OF_LOSS, np.inf, _cap(claim_dist))

    @classmethod
    def limited_xl(cls, beta_M: float, claim_dist: MarkDistribution) -> "RetentionContract":
        return cls(LIMITED_XL, float(beta_M), _cap(claim_dist))

    @property
    def u_M(self) -> float:
        return 0.0

    @property
    def u_N(self) -> float:
        return 1.0 if self.kind == PROPORTIONAL else np.inf

    @property
    def u_hi(self) -> float:
        """Finite upper end of the computational control interval."""
        return 1.0 if self.kind == PROPORTIONAL else self.u_cap

    @property
    def kinks(self) -> bool:
        return self.kind != PROPORTIONAL

    def check(self, u) -> None:
        u = np.asarray(u, dtype=float)
        if np.any(u < self.u_M - _DOMAIN_TOL) or np.any(u > self.u_N + _DOMAIN_TOL) or np.any(
            np.isnan(u)
        ):
            raise DomainError(f"control outside [{self.u_M}, {self.u_N}] for {self.kind}")

    def clamp(self, u):
        return np.clip(u, self.u_M, self.u_hi)


def _cap(dist: MarkDistribution) -> float:
    if not dist.bounded:
        raise ConfigError("excess-of-loss caps need a bounded claim law")
    return float(dist.support_max)


def retention(contract: RetentionContract, z, u):
    """Retained part Phi(z, u) of a claim ``z``."""
    contract.check(u)
    return _phi(contract, np.asarray(z, dtype=float), np.asarray(u, dtype=float))


def _phi(contract, z, u):
    if contract.kind == PROPORTIONAL:
        return u * z
    if contract.kind == EXCESS_OF_LOSS:
        return np.minimum(u, z)
    return z - np.maximum(z - u, 0.0) + np.maximum(z - u - contract.beta_M, 0.0)


def retention_deriv(contract: RetentionContract, z, u):
    """dPhi/du, with the kinks resolved as in ``1{u < z < u + beta_M}``."""
    contract.check(u)
    return _dphi(contract, np.asarray(z, dtype=float), np.asarray(u, dtype=float))


def _dphi(contract, z, u):
    if contract.kind == PROPORTIONAL:
        return z + 0.0 * u
    if contract.kind == EXCESS_OF_LOSS:
        return (z > u).astype(float)
    return ((z > u) & (z < u + contract.beta_M)).astype(float)


def _breaks(contract, u):
    if contract.kind == PROPORTIONAL:
        return ()
    if contract.kind == EXCESS_OF_LOSS:
        return (u,)
    return (u, u + contract.beta_M)


def ceded_moments(
    contract: RetentionContract, dist: MarkDistribution, u: float, order: int, n: int = GL_NODES
) -> float:
    """E[(Z - Phi(Z, u))^order] by Gauss-Legendre quadrature split at the kinks."""
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    if not dist.bounded:
        raise ConfigError("ceded moments need a bounded claim law")
    contract.check(u)
    u = float(u)
    return dist.expect(
        lambda z: (z - _phi(contract, z, u)) ** order, breaks=_breaks(contract, u), n=n
    )


def ceded_moments_exact(contract: RetentionContract, dist: MarkDistribution, u):
    """Closed-form first and second ceded moments and their u-derivatives.

    Uses ``S1(x) = int_0^x (1-F)`` and ``S2(x) = int_0^x z (1-F)``; returns
    ``(m1, m2, dm1, dm2)`` (vectorised in ``u``).
    """
    u = np.asarray(u, dtype=float)
    if contract.kind == PROPORTIONAL:
        m1 = (1 - u) * dist.mean
        m2 = (1 - u) ** 2 * dist.second_moment
        return m1, m2, -dist.mean + 0 * u, -2 * (1 - u) * dist.second_moment
    s1u, s2u = dist.survival_integral(u), dist.survival_z_integral(u)
    if contract.kind == EXCESS_OF_LOSS:
        m1 = dist.mean - s1u
        m2 = 2 * ((0.5 * dist.second_moment - s2u) - u * m1)
        return m1, m2, dist.cdf(u) - 1.0, -2 * m1
    top = u + contract.beta_M
    m1 = dist.survival_integral(top) - s1u
    m2 = 2 * ((dist.survival_z_integral(top) - s2u) - u * m1)
    sf_top = 1.0 - dist.cdf(top)
    return m1, m2, dist.cdf(u) - dist.cdf(top), 2 * (contract.beta_M * sf_top - m1)


@dataclass(frozen=True)
class PremiumPrinciple:
    """Loadings of the insurance (``_I``) and reinsurance (``_R``) premiums.

    EVP uses ``theta`` only, VPP uses ``eta`` only and MVP uses both, all as
    constants.
    """

    kind: str
    theta_I: float = 0.0
    theta_R: float = 0.0
    eta_I: float = 0.0
    eta_R: float = 0.0

    def __post_init__(self):
        if self.kind not in ("EVP", "VPP", "MVP"):
            raise ConfigError(f"unknown premium principle {self.kind!r}")
        if min(self.theta_I, self.theta_R, self.eta_I, self.eta_R) < 0:
            raise ConfigError("premium loadings must be nonnegative")
        if self.kind == "EVP" and (self.eta_I or self.eta_R):
            raise ConfigError("EVP takes no variance loadings")
        if self.kind == "VPP" and (self.theta_I or self.theta_R):
            raise ConfigError("VPP takes no expected-value loadings")

    @classmethod
    def evp(cls, theta_I: float, theta_R: float) -> "PremiumPrinciple":
        return cls("EVP", theta_I=float(theta_I), theta_R=float(theta_R))

    @classmethod
    def vpp(cls, eta_I: float, eta_R: float) -> "PremiumPrinciple":
        return cls("VPP", eta_I=float(eta_I), eta_R=float(eta_R))

    @classmethod
    def mvp(cls, theta_I, eta_I, theta_R, eta_R) -> "PremiumPrinciple":
        return cls("MVP", float(theta_I), float(theta_R), float(eta_I), float(eta_R))


def insurance_rate(principle: PremiumPrinciple, t: float, lam, claim_dist: MarkDistribution):
    """Insurance premium rate ``c = lam * ((1+theta_I) E[Z] + eta_I E[Z^2])``."""
    return lam * unit_insurance_rate(principle, claim_dist)


def unit_insurance_rate(principle: PremiumPrinciple, dist: MarkDistribution) -> float:
    return (1 + principle.theta_I) * dist.mean + principle.eta_I * dist.second_moment


def reinsurance_rate(
    principle: PremiumPrinciple,
    contract: RetentionContract,
    t: float,
    lam,
    u: float,
    claim_dist: MarkDistribution,
):
    """Reinsurance premium rate ``q = lam * ((1+theta_R) m1(u) + eta_R m2(u))``."""
    m1 = ceded_moments(contract, claim_dist, u, 1)
    m2 = ceded_moments(contract, claim_dist, u, 2) if principle.eta_R else 0.0
    return lam * ((1 + principle.theta_R) * m1 + principle.eta_R * m2)


def reinsurance_rate_deriv(
    principle: PremiumPrinciple,
    contract: RetentionContract,
    t: float,
    lam,
    u: float,
    claim_dist: MarkDistribution,
):
    """dq/du with dPhi/du moved under the ceded-moment integrals."""
    contract.check(u)
    u = float(u)
    brk = _breaks(contract, u)
    dm1 = -claim_dist.expect(lambda z: _dphi(contract, z, u), breaks=brk)
    dm2 = 0.0
    if principle.eta_R:
        dm2 = -2 * claim_dist.expect(
            lambda z: (z - _phi(contract, z, u)) * _dphi(contract, z, u), breaks=brk
        )
    return lam * ((1 + principle.theta_R) * dm1 + principle.eta_R * dm2)


@dataclass(frozen=True)
class Pricing:
    """Per-unit-intensity premium curves for one (principle, contract, claim law).

    ``d(u)`` and ``dd(u)`` are vectorised and use the closed-form ceded
    moments, so they are cheap enough for inner Monte Carlo loops.
    """

    principle: PremiumPrinciple
    contract: RetentionContract
    claim_dist: MarkDistribution

    @property
    def c0(self) -> float:
        return unit_insurance_rate(self.principle, self.claim_dist)

    def d(self, u):
        m1, m2, _, _ = ceded_moments_exact(self.contract, self.claim_dist, u)
        return (1 + self.principle.theta_R) * m1 + self.principle.eta_R * m2

    def dd(self, u):
        _, _, dm1, dm2 = ceded_moments_exact(self.contract, self.claim_dist, u)
        return (1 + self.principle.theta_R) * dm1 + self.principle.eta_R * dm2

    def phi(self, z, u):
        return _phi(self.contract, np.asarray(z, dtype=float), np.asarray(u, dtype=float))

    def dphi(self, z, u):
        return _dphi(self.contract, np.asarray(z, dtype=float), np.asarray(u, dtype=float))

    def breaks(self, u):
        return _breaks(self.contract, float(u))
