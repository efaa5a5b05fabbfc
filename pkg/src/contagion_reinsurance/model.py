"""Model constants and mark laws of the dynamic contagion claim model.

The claim intensity is

    lambda_t = beta + (lambda0 - beta) e^{-alpha t}
               + sum_claims e^{-alpha (t - T_j)} ell(Z_j)
               + sum_external e^{-alpha (t - S_k)} Y_k

with claim marks Z ~ F1 (the claim sizes), external marks Y ~ F2 arriving at
Poisson rate ``rho`` and a self-excitation map ``ell``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from .errors import ConfigError, DomainError

GL_NODES = 64

_FAMILIES = ("uniform", "truncated_exponential", "point_mass", "exponential")


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].

    Cached; the returned arrays are read-only.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gl_integrate(f, a: float, b: float, n: int = GL_NODES) -> float:
    """Integrate a vectorised ``f`` over [a, b] with an n-point rule."""
    if b <= a:
        return 0.0
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return float(half * np.dot(w, f(0.5 * (a + b) + half * x)))


@dataclass(frozen=True)
class MarkDistribution:
    """Law of a nonnegative jump mark.

    Families
    --------
    ``uniform(a, b)``, ``truncated_exponential(rate, cap)`` (exponential
    conditioned on ``Z <= cap``), ``point_mass(z0)``.  The unbounded
    ``exponential(rate)`` family exists for experiments but only finite
    exponential moments below ``rate``; :class:`ModelParams` refuses it
    unless ``unsafe_moments`` is set.
    """

    family: str
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown mark family {self.family!r}")
        if self.family == "uniform" and not (0.0 <= self.a < self.b):
            raise ConfigError("uniform marks need 0 <= a < b")
        if self.family in ("truncated_exponential", "exponential") and self.a <= 0:
            raise ConfigError("exponential rate must be positive")
        if self.family == "truncated_exponential" and self.b <= 0:
            raise ConfigError("truncation cap must be positive")
        if self.family == "point_mass" and self.a < 0:
            raise ConfigError("point mass must sit on [0, inf)")

    # constructors
    @classmethod
    def uniform(cls, low: float, high: float) -> "MarkDistribution":
        return cls("uniform", float(low), float(high))

    @classmethod
    def truncated_exponential(cls, rate: float, cap: float) -> "MarkDistribution":
        return cls("truncated_exponential", float(rate), float(cap))

    @classmethod
    def point_mass(cls, z0: float) -> "MarkDistribution":
        return cls("point_mass", float(z0), float(z0))

    @classmethod
    def exponential(cls, rate: float) -> "MarkDistribution":
        return cls("exponential", float(rate), np.inf)

    @classmethod
    def parse(cls, text: str) -> "MarkDistribution":
        """Parse ``"uniform 0 1"``, ``"point_mass 0.5"`` and friends."""
        parts = text.split()
        if not parts:
            raise ConfigError("empty distribution spec")
        name, args = parts[0].lower(), parts[1:]
        try:
            vals = [float(x) for x in args]
        except ValueError:
            raise ConfigError(f"non-numeric distribution parameter in {text!r}") from None
        arity = {"uniform": 2, "truncated_exponential": 2, "point_mass": 1, "exponential": 1}
        if name not in arity or len(vals) != arity[name]:
            raise ConfigError(f"cannot parse distribution {text!r}")
        return getattr(cls, name)(*vals)

    def spec(self) -> str:
        if self.family in ("point_mass", "exponential"):
            return f"{self.family} {self.a!r}"
        return f"{self.family} {self.a!r} {self.b!r}"

    # basic properties
    @property
    def bounded(self) -> bool:
        return self.family != "exponential"

    @property
    def is_atomic(self) -> bool:
        return self.family == "point_mass"

    @property
    def support(self) -> tuple[float, float]:
        if self.family == "uniform":
            return self.a, self.b
        if self.family == "truncated_exponential":
            return 0.0, self.b
        if self.family == "point_mass":
            return self.a, self.a
        return 0.0, np.inf

    @property
    def support_max(self) -> float:
        return self.support[1]

    @property
    def _norm(self) -> float:
        # 1 - e^{-rate*cap} for the truncated exponential
        return -np.expm1(-self.a * self.b)

    @cached_property
    def mean(self) -> float:
        return float(self.survival_integral(self.support_max))

    @cached_property
    def second_moment(self) -> float:
        return float(2.0 * self.survival_z_integral(self.support_max))

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        if self.family == "uniform":
            return np.clip((z - self.a) / (self.b - self.a), 0.0, 1.0)
        if self.family == "point_mass":
            return (z >= self.a).astype(float)
        if self.family == "exponential":
            return np.where(z > 0, -np.expm1(-self.a * np.maximum(z, 0.0)), 0.0)
        zc = np.clip(z, 0.0, self.b)
        return -np.expm1(-self.a * zc) / self._norm

    def ppf(self, p):
        """Quantile function; used to turn uniforms into marks."""
        p = np.asarray(p, dtype=float)
        if self.family == "uniform":
            return self.a + (self.b - self.a) * p
        if self.family == "point_mass":
            return np.full_like(p, self.a)
        if self.family == "exponential":
            return -np.log1p(-p) / self.a
        return np.minimum(-np.log1p(-p * self._norm) / self.a, self.b)

    def mgf(self, s: float) -> float:
        """E[exp(s Z)]."""
        if self.family == "point_mass":
            return float(np.exp(s * self.a))
        if self.family == "uniform":
            if s == 0:
                return 1.0
            return float((np.exp(s * self.b) - np.exp(s * self.a)) / (s * (self.b - self.a)))
        k = self.a
        if self.family == "exponential":
            if s >= k:
                return np.inf
            return k / (k - s)
        if abs(s - k) < 1e-14:
            return k * self.b / self._norm
        return float(k / self._norm * np.expm1((s - k) * self.b) / (s - k))

    # closed-form survival integrals, used for exact premium curves
    def survival_integral(self, x):
        """S1(x) = int_0^x (1 - F(z)) dz."""
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        if self.family == "point_mass":
            return np.minimum(x, self.a)
        if self.family == "uniform":
            a, b = self.a, self.b
            xm = np.clip(x, a, b)
            inner = a + ((b - a) ** 2 - (b - xm) ** 2) / (2.0 * (b - a))
            return np.where(x <= a, x, inner)
        k = self.a
        if self.family == "exponential":
            return -np.expm1(-k * x) / k
        c = self.b
        xm = np.minimum(x, c)
        return (-np.expm1(-k * xm) / k - xm * np.exp(-k * c)) / self._norm

    def survival_z_integral(self, x):
        """S2(x) = int_0^x z (1 - F(z)) dz."""
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        if self.family == "point_mass":
            return 0.5 * np.minimum(x, self.a) ** 2
        if self.family == "uniform":
            a, b = self.a, self.b
            xm = np.clip(x, a, b)
            inner = 0.5 * a * a + (0.5 * b * (xm**2 - a * a) - (xm**3 - a**3) / 3.0) / (b - a)
            return np.where(x <= a, 0.5 * x * x, inner)
        k = self.a
        xm = x if self.family == "exponential" else np.minimum(x, self.b)
        g = (1.0 - np.exp(-k * xm) * (1.0 + k * xm)) / (k * k)
        if self.family == "exponential":
            return g
        return (g - 0.5 * np.exp(-k * self.b) * xm * xm) / self._norm

    # quadrature
    def _pieces(self, lo, hi, breaks):
        s_lo, s_hi = self.support
        if self.family == "exponential":
            s_hi = 40.0 / self.a  # tail mass below e^{-40}
        lo = s_lo if lo is None else max(lo, s_lo)
        hi = s_hi if hi is None else min(hi, s_hi)
        if hi <= lo:
            return []
        pts = sorted({lo, hi, *(p for p in breaks if lo < p < hi)})
        return list(zip(pts[:-1], pts[1:]))

    def density(self, z):
        z = np.asarray(z, dtype=float)
        if self.family == "uniform":
            return np.full_like(z, 1.0 / (self.b - self.a))
        if self.family == "exponential":
            return self.a * np.exp(-self.a * z)
        return self.a * np.exp(-self.a * z) / self._norm

    def expect(self, g, lo=None, hi=None, breaks=(), n: int = GL_NODES) -> float:
        """Integral of ``g`` against F(dz) over (lo, hi].

        ``g`` must be vectorised.  Continuous families use an n-point
        Gauss-Legendre rule on each piece of the support split at ``breaks``;
        the point mass is integrated exactly.
        """
        if self.family == "point_mass":
            z0 = self.a
            if (lo is not None and z0 <= lo) or (hi is not None and z0 > hi):
                return 0.0
            return float(np.asarray(g(np.array([z0])), dtype=float)[0])
        x, w = gauss_legendre(n)
        total = 0.0
        for p, q in self._pieces(lo, hi, breaks):
            half = 0.5 * (q - p)
            z = 0.5 * (p + q) + half * x
            total += half * np.dot(w, np.asarray(g(z), dtype=float) * self.density(z))
        return float(total)

    @cached_property
    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and probability weights over the whole support."""
        if self.family == "point_mass":
            return np.array([self.a]), np.array([1.0])
        x, w = gauss_legendre(GL_NODES)
        lo, hi = self._pieces(None, None, ())[0]
        half = 0.5 * (hi - lo)
        z = 0.5 * (lo + hi) + half * x
        return z, half * w * self.density(z)


@dataclass(frozen=True)
class SelfExcitation:
    """The map ``ell``: zero, constant ``a`` or linear ``a * z``."""

    form: str = "zero"
    a: float = 0.0

    def __post_init__(self):
        if self.form not in ("zero", "constant", "linear"):
            raise ConfigError(f"unknown self-excitation form {self.form!r}")
        if self.a < 0:
            raise ConfigError("self-excitation coefficient must be nonnegative")

    @classmethod
    def zero(cls) -> "SelfExcitation":
        return cls("zero", 0.0)

    @classmethod
    def constant(cls, a: float) -> "SelfExcitation":
        return cls("constant", float(a))

    @classmethod
    def linear(cls, a: float) -> "SelfExcitation":
        return cls("linear", float(a))

    @classmethod
    def parse(cls, text: str) -> "SelfExcitation":
        parts = text.split()
        if parts == ["zero"]:
            return cls.zero()
        if len(parts) == 2 and parts[0] in ("constant", "linear"):
            try:
                return cls(parts[0], float(parts[1]))
            except ValueError:
                pass
        raise ConfigError(f"cannot parse self-excitation {text!r}")

    def spec(self) -> str:
        return "zero" if self.is_zero else f"{self.form} {self.a!r}"

    @property
    def is_zero(self) -> bool:
        return self.form == "zero" or self.a == 0.0

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.form == "zero":
            return np.zeros_like(z)
        if self.form == "constant":
            return np.full_like(z, self.a)
        return self.a * z

    def moment(self, dist: MarkDistribution, k: int = 1) -> float:
        """E[ell(Z)^k] under ``dist``."""
        if self.is_zero:
            return 0.0
        if self.form == "constant":
            return self.a**k
        return self.a**k * (dist.mean if k == 1 else dist.second_moment)


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    beta: float
    lambda0: float
    rho: float
    r: float
    eta: float
    horizon: float
    claim_dist: MarkDistribution = field(default_factory=lambda: MarkDistribution.uniform(0, 1))
    ext_dist: MarkDistribution = field(default_factory=lambda: MarkDistribution.uniform(0, 1))
    self_excitation: SelfExcitation = field(default_factory=SelfExcitation.zero)
    unsafe_moments: bool = False

    def __post_init__(self):
        checks = [
            (self.alpha > 0, "alpha must be > 0"),
            (self.beta > 0, "beta must be > 0"),
            (self.lambda0 > 0, "lambda0 must be > 0"),
            (self.rho >= 0, "rho must be >= 0"),
            (self.r >= 0, "r must be >= 0"),
            (self.eta > 0, "eta must be > 0"),
            (self.horizon > 0, "horizon must be > 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for name in ("claim_dist", "ext_dist"):
            dist = getattr(self, name)
            if dist.bounded:
                continue
            if not self.unsafe_moments:
                raise ConfigError(f"{name} is unbounded; set unsafe_moments to allow it")
            # exponential utility of retained claims needs E[exp(eta e^{rT} Z)] < inf
            if name == "claim_dist" and self.eta * np.exp(self.r * self.horizon) >= dist.a:
                raise ConfigError(
                    "unbounded claim law needs eta*exp(r*T) < rate for finite utility"
                )

    @property
    def T(self) -> float:
        return self.horizon

    @property
    def is_cox(self) -> bool:
        return self.self_excitation.is_zero

    def cox_twin(self) -> "ModelParams":
        """Same model with the self-exciting channel switched off."""
        return replace(self, self_excitation=SelfExcitation.zero())

    def with_horizon(self, horizon: float) -> "ModelParams":
        return replace(self, horizon=float(horizon))

    def decay(self, lam, h):
        """Intensity after a jump-free stretch of length ``h``."""
        return self.beta + (lam - self.beta) * np.exp(-self.alpha * h)

    def check_time(self, t: float) -> None:
        if not (0.0 <= t <= self.horizon):
            raise DomainError(f"time {t} outside [0, {self.horizon}]")
