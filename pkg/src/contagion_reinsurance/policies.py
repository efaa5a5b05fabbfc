"""Reinsurance policies u(t, lambda).

Every policy is a vectorised callable ``policy(t, lam) -> u``.  Constant and
time-curve policies are deterministic in time, which the change-of-measure
estimator and the monotonicity check require.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .contracts import RetentionContract
from .errors import ConfigError, DomainError, StructuralError

REGIONS = ("A0", "interior", "A1")


@dataclass(frozen=True)
class ConstantPolicy:
    u: float

    deterministic = True

    def __call__(self, t, lam=None):
        shape = np.shape(t) if lam is None else np.broadcast(np.asarray(t), np.asarray(lam)).shape
        return np.full(shape, self.u)

    def of_time(self, t):
        return np.full(np.shape(t), self.u)

    def check(self, contract: RetentionContract) -> None:
        contract.check(self.u)


@dataclass(frozen=True)
class TimeCurvePolicy:
    """Piecewise-linear u(t) through ``(t_grid, u_values)``, flat outside."""

    t_grid: tuple
    u_values: tuple

    deterministic = True

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise StructuralError("time grid must be strictly increasing with >= 2 points")
        if len(self.u_values) != t.size:
            raise StructuralError("u_values must match the time grid")
        object.__setattr__(self, "t_grid", tuple(map(float, self.t_grid)))
        object.__setattr__(self, "u_values", tuple(map(float, self.u_values)))

    @classmethod
    def from_function(cls, f, t_grid) -> "TimeCurvePolicy":
        t_grid = np.asarray(t_grid, dtype=float)
        return cls(tuple(t_grid), tuple(float(f(t)) for t in t_grid))

    def of_time(self, t):
        return np.interp(t, self.t_grid, self.u_values)

    def __call__(self, t, lam=None):
        u = self.of_time(np.asarray(t, dtype=float))
        if lam is None:
            return u
        return np.broadcast_to(u, np.broadcast(np.asarray(t), np.asarray(lam)).shape).copy()

    def check(self, contract: RetentionContract) -> None:
        contract.check(np.asarray(self.u_values))


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Strategy on a rectangular (t, lambda) grid with bilinear interpolation.

    Outside the lambda range the nearest column is used (flat extrapolation).
    """

    t_grid: np.ndarray
    lam_grid: np.ndarray
    u: np.ndarray
    contract: RetentionContract
    region: np.ndarray | None = None

    deterministic = False

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        lg = np.asarray(self.lam_grid, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if np.any(np.diff(t) <= 0) or np.any(np.diff(lg) <= 0):
            raise StructuralError("policy grids must be strictly increasing")
        if u.shape != (t.size, lg.size):
            raise StructuralError(f"u has shape {u.shape}, expected {(t.size, lg.size)}")
        self.contract.check(u)
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "lam_grid", lg)
        object.__setattr__(self, "u", u)
        if self.region is None:
            object.__setattr__(self, "region", default_regions(u, self.contract))

    @staticmethod
    def _locate(grid, x):
        if grid.size == 1:
            return np.zeros(np.shape(x), dtype=np.intp), np.zeros(np.shape(x))
        x = np.clip(x, grid[0], grid[-1])
        i = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
        w = (x - grid[i]) / (grid[i + 1] - grid[i])
        return i, w

    def __call__(self, t, lam):
        t = np.asarray(t, dtype=float)
        lam = np.asarray(lam, dtype=float)
        t, lam = np.broadcast_arrays(t, lam)
        i, wt = self._locate(self.t_grid, t)
        j, wl = self._locate(self.lam_grid, lam)
        u = self.u
        if self.lam_grid.size == 1:
            return (1 - wt) * u[i, 0] + wt * u[i + (self.t_grid.size > 1), 0]
        i1 = i + (self.t_grid.size > 1)
        lo = (1 - wl) * u[i, j] + wl * u[i, j + 1]
        hi = (1 - wl) * u[i1, j] + wl * u[i1, j + 1]
        return (1 - wt) * lo + wt * hi

    def check(self, contract: RetentionContract) -> None:
        if contract != self.contract:
            raise ConfigError("policy table is bound to a different contract")

    def max_abs_diff(self, other: "PolicyTable") -> float:
        return float(np.max(np.abs(self.u - other.u)))

    def write_csv(self, dest, header_comment: str | None = None) -> None:
        with open(dest, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lambda", "u_star", "region"])
            for i, t in enumerate(self.t_grid):
                for j, lam in enumerate(self.lam_grid):
                    w.writerow(["%.17g" % t, "%.17g" % lam, "%.17g" % self.u[i, j], self.region[i, j]])

    @classmethod
    def read_csv(cls, src, contract: RetentionContract) -> "PolicyTable":
        t, lam, (u, region) = _read_grid(src, ("u_star", "region"))
        return cls(t, lam, u.astype(float), contract, region)


def default_regions(u, contract: RetentionContract) -> np.ndarray:
    reg = np.full(np.shape(u), "interior", dtype=object)
    reg[np.asarray(u) <= contract.u_M] = "A0"
    reg[np.asarray(u) >= contract.u_hi] = "A1"
    return reg


def _read_grid(src, value_cols):
    """Read a long-format (t, lambda, ...) CSV into grid-shaped arrays."""
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise StructuralError(f"{src}: no data rows")
    ts = sorted({float(r["t"]) for r in rows})
    ls = sorted({float(r["lambda"]) for r in rows})
    ti = {t: i for i, t in enumerate(ts)}
    li = {l: j for j, l in enumerate(ls)}
    if len(rows) != len(ts) * len(ls):
        raise StructuralError(f"{src}: rows do not form a rectangular grid")
    out = [np.empty((len(ts), len(ls)), dtype=object) for _ in value_cols]
    for r in rows:
        i, j = ti[float(r["t"])], li[float(r["lambda"])]
        for arr, col in zip(out, value_cols):
            arr[i, j] = r[col]
    return np.array(ts), np.array(ls), out


def check_policy(policy, contract: RetentionContract) -> None:
    if not callable(policy):
        raise DomainError("policy must be callable as policy(t, lam)")
    policy.check(contract)
