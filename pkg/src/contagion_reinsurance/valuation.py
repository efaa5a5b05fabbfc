"""Monte Carlo evaluation of the reduced value function phi(t, lambda).

For a fixed policy ``u`` the value function factorises as
``v(t, x, lam) = exp(-eta x e^{r(T-t)}) phi(t, lam)`` with

    phi(t, lam) = E[ exp{ -eta int_t^T e^{r(T-s)} lam_s (c0 - d(u_s)) ds
                          + eta sum_j e^{r(T-T_j)} Phi(Z_j, u_{T_j}) } ].

Two estimators are provided: a direct one under P and a change-of-measure
one that simulates unit-rate claims and reweights by the density ratio.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .contracts import Pricing, PremiumPrinciple, RetentionContract
from .errors import DomainError, StructuralError, UnsupportedPolicyError
from .model import ModelParams, gauss_legendre
from .policies import ConstantPolicy, TimeCurvePolicy, _read_grid, check_policy
from .process import CLAIM, PathRecord, RandomRows, run_lanes

SEGMENT_NODES = 8
A_NODES = 128


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    n_paths: int

    @classmethod
    def from_samples(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
        return cls(float(np.mean(x)), float(sd / np.sqrt(n)), n)

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr


def combined_stderr(a: Estimate, b: Estimate) -> float:
    return float(np.hypot(a.stderr, b.stderr))


@dataclass(frozen=True, eq=False)
class PhiTable:
    """phi(t_i, lam_j) with per-cell standard errors."""

    t_grid: np.ndarray
    lam_grid: np.ndarray
    phi: np.ndarray
    stderr: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        lg = np.asarray(self.lam_grid, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        se = np.asarray(self.stderr, dtype=float)
        if np.any(np.diff(t) <= 0) or np.any(np.diff(lg) <= 0) or np.any(lg <= 0):
            raise StructuralError("phi grids must be strictly increasing, lambda > 0")
        if phi.shape != (t.size, lg.size) or se.shape != phi.shape:
            raise StructuralError("phi/stderr shape does not match the grids")
        if np.any(phi <= 0):
            raise StructuralError("phi must be strictly positive")
        for name, val in (("t_grid", t), ("lam_grid", lg), ("phi", phi), ("stderr", se)):
            object.__setattr__(self, name, val)

    def row_ratio(self, i: int, lam, jumps):
        """phi(t_i, lam + jump) / phi(t_i, lam), linear in lambda, flat above the grid."""
        row = self.phi[i]
        num = np.interp(np.asarray(lam) + np.asarray(jumps), self.lam_grid, row)
        return num / np.interp(lam, self.lam_grid, row)

    def at(self, t, lam):
        """Bilinear interpolation with flat extrapolation in both directions."""
        t = float(np.clip(t, self.t_grid[0], self.t_grid[-1]))
        col = np.array([np.interp(t, self.t_grid, self.phi[:, j]) for j in range(self.lam_grid.size)])
        return np.interp(lam, self.lam_grid, col)

    def write_csv(self, dest, header_comment: str | None = None) -> None:
        with open(dest, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lambda", "phi", "stderr"])
            for i, t in enumerate(self.t_grid):
                for j, lam in enumerate(self.lam_grid):
                    w.writerow(
                        ["%.17g" % t, "%.17g" % lam, "%.17g" % self.phi[i, j], "%.17g" % self.stderr[i, j]]
                    )

    @classmethod
    def read_csv(cls, src) -> "PhiTable":
        t, lam, (phi, se) = _read_grid(src, ("phi", "stderr"))
        return cls(t, lam, phi.astype(float), se.astype(float))


# wealth


def _disc_intensity_integral(p: ModelParams, s0, s1, lam_c):
    """int_{s0}^{s1} e^{r(T-s)} (beta + (lam_c - beta) e^{-alpha (s - s0)}) ds."""
    h = s1 - s0
    r, a, b, T = p.r, p.alpha, p.beta, p.horizon
    g0 = np.exp(r * (T - s0))
    if r == 0:
        base = b * h
    else:
        base = b * g0 * (-np.expm1(-r * h)) / r
    return base + (lam_c - b) * g0 * (-np.expm1(-(r + a) * h)) / (r + a)


def terminal_wealth(
    path: PathRecord,
    policy,
    principle: PremiumPrinciple,
    contract: RetentionContract,
    x0: float,
    t0: float | None = None,
) -> float:
    """X_T = x0 e^{r(T-t0)} + int e^{r(T-s)} (c - q) ds - sum e^{r(T-T_j)} Phi(Z_j, u)."""
    p = path.params
    check_policy(policy, contract)
    t0 = path.start_time if t0 is None else t0
    if t0 > path.horizon:
        raise DomainError("t0 must not exceed the horizon")
    pr = Pricing(principle, contract, p.claim_dist)
    obs = _PObserver(p, policy, pr, 1)
    T = p.horizon
    for s0, s1, lam_c, lam_minus, _, jump in path.walk():
        a, b = max(s0, t0), s1
        if b > a:
            lam_a = float(p.decay(lam_c, a - s0))
            obs.segment(np.array([0]), np.array([a]), np.array([b]), np.array([lam_a]))
        if jump is not None and jump.kind == CLAIM and jump.time > t0:
            obs.claim(np.array([0]), np.array([jump.time]), np.array([lam_minus]), np.array([jump.mark]))
    # the observer accumulates eta * (retained losses - premium income)
    return float(x0 * np.exp(p.r * (T - t0)) - obs.log_f[0] / p.eta)


# estimators under P


class _PObserver:
    """Accumulates the exponent of the phi functional lane by lane."""

    def __init__(self, params: ModelParams, policy, pricing: Pricing, n: int):
        self.p = params
        self.policy = policy
        self.pr = pricing
        self.log_f = np.zeros(n)
        self.c0 = pricing.c0
        self.constant = isinstance(policy, ConstantPolicy)
        if self.constant:
            self.k = self.c0 - float(pricing.d(policy.u))
        self.x, self.w = gauss_legendre(SEGMENT_NODES)

    def segment(self, idx, s0, s1, lam_c):
        p = self.p
        if self.constant:
            self.log_f[idx] -= p.eta * self.k * _disc_intensity_integral(p, s0, s1, lam_c)
            return
        half = 0.5 * (s1 - s0)
        s = (0.5 * (s0 + s1))[:, None] + half[:, None] * self.x
        lam = p.beta + (lam_c[:, None] - p.beta) * np.exp(-p.alpha * (s - s0[:, None]))
        u = self.pr.contract.clamp(self.policy(s, lam))
        f = np.exp(p.r * (p.horizon - s)) * lam * (self.c0 - self.pr.d(u))
        self.log_f[idx] -= p.eta * half * (f @ self.w)

    def claim(self, idx, s, lam_minus, z):
        p = self.p
        u = self.pr.contract.clamp(self.policy(s, lam_minus))
        self.log_f[idx] += p.eta * np.exp(p.r * (p.horizon - s)) * self.pr.phi(z, u)


def phi_samples(
    params: ModelParams,
    t: float,
    lams,
    policy,
    pricing: Pricing,
    n_paths: int,
    seed: int,
    key: tuple[int, ...] = (),
) -> np.ndarray:
    """Per-path functionals, shape ``(len(lams), n_paths)``.

    All starting intensities reuse the same ``n_paths`` random streams, so
    differences across ``lams`` are coupled.
    """
    if n_paths <= 0:
        raise DomainError("n_paths must be positive")
    params.check_time(t)
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    if np.any(lams <= 0):
        raise DomainError("starting intensity must be positive")
    if t == params.horizon:
        return np.ones((lams.size, n_paths))
    streams = np.tile(np.arange(n_paths), lams.size)
    lam0 = np.repeat(lams, n_paths)
    obs = _PObserver(params, policy, pricing, lam0.size)
    run_lanes(params, t, lam0, streams, RandomRows(seed, n_paths, key), obs)
    return np.exp(obs.log_f).reshape(lams.size, n_paths)


def estimate_phi(
    params: ModelParams,
    t: float,
    lam: float,
    policy,
    contract: RetentionContract,
    principle: PremiumPrinciple,
    n_paths: int,
    seed: int,
) -> Estimate:
    """Direct Monte Carlo estimate of phi(t, lam) under the given policy."""
    check_policy(policy, contract)
    pr = Pricing(principle, contract, params.claim_dist)
    x = phi_samples(params, t, [lam], policy, pr, n_paths, seed)[0]
    if t == params.horizon:
        return Estimate(1.0, 0.0, n_paths)
    return Estimate.from_samples(x)


def estimate_phi_row(
    params: ModelParams,
    t: float,
    lams,
    policy,
    pricing: Pricing,
    n_paths: int,
    seed: int,
    key: tuple[int, ...] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Coupled estimates of phi(t, lam_j) for every ``lam_j``; returns (mean, stderr)."""
    x = phi_samples(params, t, lams, policy, pricing, n_paths, seed, key)
    if t == params.horizon:
        return np.ones(x.shape[0]), np.zeros(x.shape[0])
    return x.mean(axis=1), x.std(axis=1, ddof=1) / np.sqrt(n_paths)


def _row_job(args):
    return estimate_phi_row(*args)


def estimate_phi_table(
    params: ModelParams,
    t_grid,
    lam_grid,
    policy,
    pricing: Pricing,
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> PhiTable:
    """phi on a grid; rows run independently so the result ignores ``workers``."""
    t_grid = np.asarray(t_grid, dtype=float)
    lam_grid = np.asarray(lam_grid, dtype=float)
    jobs = [(params, float(t), lam_grid, policy, pricing, n_paths, seed) for t in t_grid]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_row_job, jobs))
    else:
        rows = [_row_job(j) for j in jobs]
    phi = np.array([r[0] for r in rows])
    se = np.array([r[1] for r in rows])
    return PhiTable(t_grid, lam_grid, phi, se)


# change of measure


class DeterministicWeights:
    """a(s), int a, A(s) for a policy that depends on time only.

    ``a(s) = 1 + eta e^{r(T-s)} (c0 - d(u_s))`` and
    ``A(v) = int_v^T a(s) e^{-alpha (s - v)} ds``.  Constant policies use
    closed forms; time curves use 128-point Gauss-Legendre on ``[v, T]``.
    """

    def __init__(self, params: ModelParams, policy, pricing: Pricing):
        if not getattr(policy, "deterministic", False):
            raise UnsupportedPolicyError(
                "the change-of-measure form needs a policy that depends on time only"
            )
        self.p, self.policy, self.pr = params, policy, pricing
        self.c0 = pricing.c0
        self.constant = isinstance(policy, ConstantPolicy)
        if self.constant:
            self.k = self.c0 - float(pricing.d(policy.u))
        self.x, self.w = gauss_legendre(A_NODES)

    def u(self, s):
        return self.pr.contract.clamp(self.policy.of_time(np.asarray(s, dtype=float)))

    def a(self, s):
        p = self.p
        s = np.asarray(s, dtype=float)
        k = self.k if self.constant else self.c0 - self.pr.d(self.u(s))
        return 1.0 + p.eta * np.exp(p.r * (p.horizon - s)) * k

    def _gl(self, v, weight):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        T = self.p.horizon
        half = 0.5 * (T - v)
        s = (0.5 * (v + T))[:, None] + half[:, None] * self.x
        return half * ((self.a(s) * weight(s, v[:, None])) @ self.w)

    def A(self, v):
        p = self.p
        v = np.asarray(v, dtype=float)
        tau = p.horizon - v
        if self.constant:
            return -np.expm1(-p.alpha * tau) / p.alpha + p.eta * self.k * (
                np.exp(p.r * tau) - np.exp(-p.alpha * tau)
            ) / (p.r + p.alpha)
        out = self._gl(v, lambda s, v0: np.exp(-p.alpha * (s - v0)))
        return out.reshape(v.shape)

    def int_a(self, v):
        """int_v^T a(s) ds."""
        p = self.p
        v = np.asarray(v, dtype=float)
        tau = p.horizon - v
        if self.constant:
            growth = tau if p.r == 0 else np.expm1(p.r * tau) / p.r
            return tau + p.eta * self.k * growth
        out = self._gl(v, lambda s, v0: np.ones_like(s))
        return out.reshape(v.shape)

    def log_B(self, s, z):
        p = self.p
        s = np.asarray(s, dtype=float)
        return p.eta * np.exp(p.r * (p.horizon - s)) * self.pr.phi(z, self.u(s)) - self.A(
            s
        ) * p.self_excitation(z)


class _QObserver:
    def __init__(self, weights: DeterministicWeights, n: int):
        self.wts = weights
        self.log_w = np.zeros(n)

    def claim(self, idx, s, lam_minus, z):
        self.log_w[idx] += np.log(lam_minus) + self.wts.log_B(s, z)

    def ext(self, idx, s, y):
        self.log_w[idx] -= self.wts.A(s) * y


def estimate_phi_q(
    params: ModelParams,
    t: float,
    lam: float,
    policy,
    contract: RetentionContract,
    principle: PremiumPrinciple,
    n_paths: int,
    seed: int,
) -> Estimate:
    """phi(t, lam) by simulating unit-rate claims and reweighting.

    Writing the intensity as its jump-free part plus decayed jumps turns the
    density-ratio-weighted functional into

        (T - t) - beta int_t^T a - (lam - beta) A(t)
        + sum_claims [log lam_{T_j-} + log B(T_j, Z_j)] - sum_external A(S_k) Y_k,

    whose expectation under the reference measure is phi(t, lam).  The
    ``log lam_{T_j-}`` terms stay inside the expectation because the
    intensity path is not independent of the claim marks.
    """
    check_policy(policy, contract)
    if n_paths <= 0:
        raise DomainError("n_paths must be positive")
    params.check_time(t)
    pr = Pricing(principle, contract, params.claim_dist)
    wts = DeterministicWeights(params, policy, pr)
    if t == params.horizon:
        return Estimate(1.0, 0.0, n_paths)
    obs = _QObserver(wts, n_paths)
    run_lanes(
        params, t, lam, np.arange(n_paths), RandomRows(seed, n_paths, (0x51,)), obs, measure="Q"
    )
    base = (params.horizon - t) - params.beta * float(wts.int_a(t)) - (lam - params.beta) * float(wts.A(t))
    return Estimate.from_samples(np.exp(base + obs.log_w))


class _FactorisedObserver:
    def __init__(self, params, s_grid, m_grid, n):
        self.p, self.sg, self.mg = params, s_grid, m_grid
        self.acc = np.zeros(n)
        self.x, self.w = gauss_legendre(SEGMENT_NODES)

    def segment(self, idx, s0, s1, lam_c):
        p = self.p
        half = 0.5 * (s1 - s0)
        s = (0.5 * (s0 + s1))[:, None] + half[:, None] * self.x
        lam = p.beta + (lam_c[:, None] - p.beta) * np.exp(-p.alpha * (s - s0[:, None]))
        self.acc[idx] += half * ((lam * np.interp(s, self.sg, self.mg)) @ self.w)


def estimate_phi_factorised(
    params: ModelParams,
    t: float,
    lam: float,
    policy,
    contract: RetentionContract,
    principle: PremiumPrinciple,
    n_paths: int,
    seed: int,
    n_grid: int = 257,
) -> Estimate:
    """Reference-measure expectation after integrating the jumps out.

    Evaluates ``E_Q[exp{int rho E(e^{-A(s) Y} - 1) ds + int lam_s E B(s, Z) ds
    - int a(s) (beta + (lam - beta) e^{-alpha (s - t)}) ds}]``.  Conditioning
    on the intensity path and then applying the exponential formula to the
    claim and shock measures is only legitimate when that path does not
    depend on them, i.e. for ``rho = 0`` and ``ell = 0``; otherwise this
    differs from phi.  Kept as a diagnostic next to :func:`estimate_phi_q`.
    """
    check_policy(policy, contract)
    params.check_time(t)
    pr = Pricing(principle, contract, params.claim_dist)
    wts = DeterministicWeights(params, policy, pr)
    if t == params.horizon:
        return Estimate(1.0, 0.0, n_paths)
    p = params
    # E_F1[B(s, .)] is smooth in s; tabulate it once
    sg = np.linspace(t, p.horizon, n_grid)
    mg = np.array(
        [
            p.claim_dist.expect(
                lambda z, s=s: np.exp(wts.log_B(np.full_like(z, s), z)),
                breaks=pr.breaks(float(wts.u(s))),
            )
            for s in sg
        ]
    )
    ext = 0.0
    if p.rho > 0:
        x, w = gauss_legendre(A_NODES)
        half = 0.5 * (p.horizon - t)
        s = 0.5 * (t + p.horizon) + half * x
        e = np.array([p.ext_dist.expect(lambda y, A=A: np.exp(-A * y) - 1.0) for A in wts.A(s)])
        ext = p.rho * half * float(np.dot(w, e))
    obs = _FactorisedObserver(p, sg, mg, n_paths)
    run_lanes(p, t, lam, np.arange(n_paths), RandomRows(seed, n_paths, (0x46,)), obs, measure="Q")
    base = ext - p.beta * float(wts.int_a(t)) - (lam - p.beta) * float(wts.A(t))
    return Estimate.from_samples(np.exp(base + obs.acc))


# closed forms


def _require_poisson(params: ModelParams):
    if not (params.rho == 0 and params.self_excitation.is_zero and params.lambda0 == params.beta):
        raise DomainError("closed form needs rho = 0, ell = 0 and lambda0 = beta")


def phi_closed_form_poisson(
    params: ModelParams,
    policy: ConstantPolicy,
    contract: RetentionContract,
    principle: PremiumPrinciple,
    t: float,
) -> float:
    """Compound-Poisson exponential formula for constant intensity and r = 0.

    exp{(T - t)[-eta (c - q) + beta (E[exp(eta Phi(Z, u))] - 1)]}.
    """
    _require_poisson(params)
    if params.r != 0:
        raise DomainError("closed form needs r = 0")
    if not isinstance(policy, ConstantPolicy):
        raise UnsupportedPolicyError("closed form needs a constant policy")
    check_policy(policy, contract)
    params.check_time(t)
    pr = Pricing(principle, contract, params.claim_dist)
    u, eta, b = policy.u, params.eta, params.beta
    mgf = params.claim_dist.expect(lambda z: np.exp(eta * pr.phi(z, u)), breaks=pr.breaks(u))
    drift = b * (pr.c0 - float(pr.d(u)))
    return float(np.exp((params.horizon - t) * (-eta * drift + b * (mgf - 1.0))))


def phi_deterministic_intensity(
    params: ModelParams, policy, pricing: Pricing, t: float, lam: float, n: int = A_NODES
) -> float:
    """phi when the intensity is deterministic (rho = 0, ell = 0) and u depends on time only.

    Claims then form an inhomogeneous compound Poisson process and
    ``phi = exp(int_t^T lam_s g(s) ds)`` with
    ``g(s) = -eta e^{r(T-s)} (c0 - d(u_s)) + E[exp(eta e^{r(T-s)} Phi(Z, u_s)) - 1]``.
    """
    p = params
    if not (p.rho == 0 and p.self_excitation.is_zero):
        raise DomainError("deterministic intensity needs rho = 0 and ell = 0")
    if not getattr(policy, "deterministic", False):
        raise UnsupportedPolicyError("needs a policy that depends on time only")
    T = p.horizon
    if t >= T:
        return 1.0
    x, w = gauss_legendre(n)
    half = 0.5 * (T - t)
    s = 0.5 * (t + T) + half * x
    u = pricing.contract.clamp(policy.of_time(s))
    disc = np.exp(p.r * (T - s))
    mgf = np.array(
        [
            p.claim_dist.expect(lambda z, k=k, ui=ui: np.exp(k * pricing.phi(z, ui)), breaks=pricing.breaks(ui))
            for k, ui in zip(p.eta * disc, u)
        ]
    )
    g = -p.eta * disc * (pricing.c0 - pricing.d(u)) + mgf - 1.0
    lam_s = p.decay(lam, s - t)
    return float(np.exp(half * np.dot(w, lam_s * g)))


def value_function(t: float, x: float, lam: float, phi_value: float, params: ModelParams) -> float:
    """v(t, x, lam) = exp(-eta x e^{r(T-t)}) phi(t, lam)."""
    if not phi_value > 0:
        raise DomainError("phi must be positive")
    return float(np.exp(-params.eta * x * np.exp(params.r * (params.horizon - t))) * phi_value)
