"""Simulation and pathwise functionals of the dynamic contagion process.

Two samplers are provided.  The exact sampler runs competing clocks: the
external clock is a Poisson(rho) stream, and the next claim time solves
``compensator(h) = E`` for an Exp(1) budget ``E`` that is carried across
external events.  The thinning sampler is an Ogata scheme that shares no
code with it and serves as an independent check.

The exact sampler is written as a lockstep engine over many lanes so that
Monte Carlo drivers can evaluate path functionals through observer hooks
without materialising paths.  Each lane reads its random numbers from a
stream that depends only on ``(seed, key, stream index)``; lanes that share a
stream index share every uniform (common random numbers).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, NumericalError, StructuralError
from .model import ModelParams

CLAIM = "claim"
EXTERNAL = "external"

BLOCK = 256
CHUNK = 16

_NEWTON_MAX = 60
_BISECT_MAX = 200


@dataclass(frozen=True)
class JumpRecord:
    time: float
    kind: str
    mark: float

    def __post_init__(self):
        if self.kind not in (CLAIM, EXTERNAL):
            raise StructuralError(f"unknown jump kind {self.kind!r}")
        if not self.time > 0 or self.mark < 0:
            raise StructuralError("jump needs time > 0 and a nonnegative mark")


@dataclass(frozen=True)
class PathRecord:
    """One realisation on ``[start_time, horizon]`` started from ``start_lambda``."""

    params: ModelParams
    jumps: tuple[JumpRecord, ...]
    seed: int
    horizon: float
    start_time: float = 0.0
    start_lambda: float | None = None
    index: int = 0

    def __post_init__(self):
        times = [j.time for j in self.jumps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise StructuralError("jumps must be strictly increasing in time")
        if times and (times[-1] > self.horizon or times[0] <= self.start_time):
            raise StructuralError("jump times must lie in (start_time, horizon]")

    @property
    def lambda_start(self) -> float:
        return self.params.lambda0 if self.start_lambda is None else self.start_lambda

    @property
    def claims(self) -> list[JumpRecord]:
        return [j for j in self.jumps if j.kind == CLAIM]

    @property
    def externals(self) -> list[JumpRecord]:
        return [j for j in self.jumps if j.kind == EXTERNAL]

    @property
    def n_claims(self) -> int:
        return sum(j.kind == CLAIM for j in self.jumps)

    def walk(self):
        """Yield ``(t_prev, t_jump, lam_after_prev, lam_minus, lam_after, jump)``.

        The final item has ``jump=None`` and ``t_jump=horizon``.
        """
        p = self.params
        s, lam = self.start_time, self.lambda_start
        for j in self.jumps:
            lam_minus = float(p.decay(lam, j.time - s))
            size = float(p.self_excitation(j.mark)) if j.kind == CLAIM else j.mark
            yield s, j.time, lam, lam_minus, lam_minus + size, j
            s, lam = j.time, lam_minus + size
        yield s, self.horizon, lam, float(p.decay(lam, self.horizon - s)), None, None


# closed-form intensity primitives


def _check_sorted(jumps: Sequence[JumpRecord]) -> None:
    for a, b in zip(jumps, jumps[1:]):
        if b.time <= a.time:
            raise StructuralError("jumps must be sorted strictly increasing in time")


def intensity_at(
    params: ModelParams,
    jumps: Sequence[JumpRecord],
    t: float,
    *,
    left: bool = False,
    start_time: float = 0.0,
    start_lambda: float | None = None,
) -> float:
    """Intensity at time ``t`` given the jump history.

    The post-jump (cadlag) value is returned at jump times; ``left=True``
    gives the left limit instead.
    """
    _check_sorted(jumps)
    if t < start_time:
        raise DomainError("t precedes the start of the path")
    lam0 = params.lambda0 if start_lambda is None else start_lambda
    a, b = params.alpha, params.beta
    lam = b + (lam0 - b) * np.exp(-a * (t - start_time))
    for j in jumps:
        if j.time > t or (left and j.time == t):
            break
        size = float(params.self_excitation(j.mark)) if j.kind == CLAIM else j.mark
        lam += np.exp(-a * (t - j.time)) * size
    return float(lam)


def compensator_between(params: ModelParams, lambda_current, h):
    """Integral of the jump-free intensity over ``[0, h]``.

    Equals ``beta*h + (lam - beta)(1 - exp(-alpha h))/alpha``; vectorised.
    """
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0):
        raise DomainError("compensator needs h >= 0")
    a, b = params.alpha, params.beta
    out = b * h_arr - (np.asarray(lambda_current) - b) * np.expm1(-a * h_arr) / a
    return float(out) if np.ndim(out) == 0 else out


def _comp(a, b, lam, h):
    return b * h - (lam - b) * np.expm1(-a * h) / a


def intensity_power_integral(params: ModelParams, lambda_current, h, k: int):
    """Integral of ``lambda_s^k`` over a jump-free stretch of length ``h`` (k = 1, 2)."""
    a, b = params.alpha, params.beta
    lam = np.asarray(lambda_current, dtype=float)
    h = np.asarray(h, dtype=float)
    d = lam - b
    e1 = -np.expm1(-a * h) / a
    if k == 1:
        return b * h + d * e1
    if k == 2:
        e2 = -np.expm1(-2 * a * h) / (2 * a)
        return b * b * h + 2 * b * d * e1 + d * d * e2
    raise ValueError("k must be 1 or 2")


def invert_compensator(params: ModelParams, lam, budget):
    """Solve ``compensator_between(lam, h) = budget`` for ``h`` (vectorised).

    Newton from ``h = budget/lam`` converges monotonically: from below when
    ``lam > beta`` (concave compensator) and from above when ``lam < beta``.
    Lanes that fail to settle fall back to bisection on a doubled bracket.
    """
    a, b = params.alpha, params.beta
    lam = np.asarray(lam, dtype=float)
    e = np.asarray(budget, dtype=float)
    tol = 1e-12 * np.maximum(1.0, e)
    h = e / lam
    todo = np.ones(h.shape, dtype=bool)
    for _ in range(_NEWTON_MAX):
        idx = np.flatnonzero(todo)
        if idx.size == 0:
            return h
        hi, li = h[idx], lam[idx]
        f = _comp(a, b, li, hi) - e[idx]
        done = np.abs(f) <= tol[idx]
        todo[idx[done]] = False
        live = ~done
        d = b + (li[live] - b) * np.exp(-a * hi[live])
        h[idx[live]] = np.maximum(hi[live] - f[live] / d, 0.0)
    idx = np.flatnonzero(todo)
    if idx.size:
        h[idx] = _bisect_compensator(a, b, lam[idx], e[idx], tol[idx])
    return h


def _bisect_compensator(a, b, lam, e, tol):
    lo = np.zeros_like(e)
    hi = np.maximum(e / np.minimum(lam, b), 1e-300)
    for _ in range(_BISECT_MAX):
        short = _comp(a, b, lam, hi) < e
        if not short.any():
            break
        hi = np.where(short, 2 * hi, hi)
    for _ in range(_BISECT_MAX):
        mid = 0.5 * (lo + hi)
        f = _comp(a, b, lam, mid) - e
        if np.all(np.abs(f) <= tol) or np.all(hi - lo <= 4e-16 * hi):
            return mid
        lo = np.where(f < 0, mid, lo)
        hi = np.where(f < 0, hi, mid)
    bad = np.abs(_comp(a, b, lam, 0.5 * (lo + hi)) - e) > tol
    raise NumericalError(
        "compensator inversion did not converge: "
        f"lam={lam[bad][:3]}, budget={e[bad][:3]}, bracket=({lo[bad][:3]}, {hi[bad][:3]})"
    )


# random streams


class RandomRows:
    """Uniforms for ``n`` path streams, generated lazily in blocks.

    Stream ``i`` belongs to block ``i // 256``; column chunk ``c`` of that
    block is drawn from ``SeedSequence(seed, spawn_key=(*key, block, c))``
    as a ``(4, 256, 16)`` array holding the claim-wait, claim-mark,
    external-wait and external-mark uniforms.  The numbers seen by stream
    ``i`` therefore depend on ``(seed, key, i)`` only.
    """

    CLAIM_WAIT, CLAIM_MARK, EXT_WAIT, EXT_MARK = range(4)

    def __init__(self, seed: int, n: int, key: tuple[int, ...] = ()):
        if n <= 0:
            raise DomainError("need at least one stream")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self.n = int(n)
        self.n_blocks = -(-self.n // BLOCK)
        self._buf = np.empty((4, self.n_blocks * BLOCK, 0))

    def _grow(self, cols: int) -> None:
        while self._buf.shape[2] < cols:
            c = self._buf.shape[2] // CHUNK
            new = np.empty((4, self.n_blocks * BLOCK, CHUNK))
            for blk in range(self.n_blocks):
                ss = np.random.SeedSequence(self.seed, spawn_key=(*self.key, blk, c))
                new[:, blk * BLOCK:(blk + 1) * BLOCK] = np.random.default_rng(ss).random(
                    (4, BLOCK, CHUNK)
                )
            self._buf = np.concatenate([self._buf, new], axis=2)

    def take(self, which: int, stream, col):
        col = np.asarray(col)
        if col.size:
            self._grow(int(col.max()) + 1)
        return self._buf[which, stream, col]


# lockstep engine


@dataclass
class EngineResult:
    """Terminal state of every lane."""

    lam_T: np.ndarray
    n_claims: np.ndarray
    n_ext: np.ndarray


def run_lanes(
    params: ModelParams,
    t0: float,
    lam0,
    streams,
    rows: RandomRows,
    observer=None,
    *,
    measure: str = "P",
) -> EngineResult:
    """Advance all lanes from ``(t0, lam0)`` to the horizon.

    Parameters
    ----------
    lam0, streams : array_like
        Starting intensity and random-stream index of each lane.
    observer : object, optional
        May define ``segment(idx, s0, s1, lam_c)`` for jump-free stretches
        (``lam_c`` is the intensity at ``s0``), ``claim(idx, s, lam_minus, z)``
        and ``ext(idx, s, y)``.  ``idx`` holds lane numbers.
    measure : {"P", "Q"}
        Under ``"Q"`` claims arrive at unit rate while the intensity is
        still tracked, as needed for likelihood-ratio weights.
    """
    p = params
    T = p.horizon
    if not 0.0 <= t0 <= T:
        raise DomainError(f"start time {t0} outside [0, {T}]")
    lam = np.array(np.broadcast_to(np.asarray(lam0, dtype=float), np.shape(streams)), dtype=float)
    if np.any(lam <= 0):
        raise DomainError("starting intensity must be positive")
    streams = np.asarray(streams, dtype=np.intp)
    n = lam.size
    seg = getattr(observer, "segment", None)
    on_claim = getattr(observer, "claim", None)
    on_ext = getattr(observer, "ext", None)
    ell = p.self_excitation
    unit = measure == "Q"
    if measure not in ("P", "Q"):
        raise ValueError("measure must be 'P' or 'Q'")

    lam_T = np.empty(n)
    nc_out = np.zeros(n, dtype=np.int64)
    ne_out = np.zeros(n, dtype=np.int64)

    idx = np.arange(n)
    st = streams.copy()
    s = np.full(n, float(t0))
    nc = np.zeros(n, dtype=np.int64)
    ne = np.zeros(n, dtype=np.int64)
    rem = -np.log1p(-rows.take(RandomRows.CLAIM_WAIT, st, nc))
    if p.rho > 0:
        nxt = s - np.log1p(-rows.take(RandomRows.EXT_WAIT, st, ne)) / p.rho
    else:
        nxt = np.full(n, np.inf)

    while idx.size:
        end = np.minimum(nxt, T)
        g = end - s
        used = g if unit else _comp(p.alpha, p.beta, lam, g)
        hit = used >= rem
        h = g.copy()
        if hit.any():
            h[hit] = rem[hit] if unit else invert_compensator(p, lam[hit], rem[hit])
        s1 = s + h
        if seg is not None:
            seg(idx, s, s1, lam)
        lam_minus = p.decay(lam, h)

        # claims
        ci = np.flatnonzero(hit)
        if ci.size:
            z = p.claim_dist.ppf(rows.take(RandomRows.CLAIM_MARK, st[ci], nc[ci]))
            if on_claim is not None:
                on_claim(idx[ci], s1[ci], lam_minus[ci], z)
            nc[ci] += 1
            rem[ci] = -np.log1p(-rows.take(RandomRows.CLAIM_WAIT, st[ci], nc[ci]))
            lam_minus[ci] += ell(z)

        # jump-free stretches ending at an external event or the horizon
        ni = np.flatnonzero(~hit)
        rem[ni] -= used[ni]
        at_ext = nxt[ni] < T
        ei = ni[at_ext]
        fin = np.zeros(idx.size, dtype=bool)
        fin[ni[~at_ext]] = True
        if ei.size:
            y = p.ext_dist.ppf(rows.take(RandomRows.EXT_MARK, st[ei], ne[ei]))
            if on_ext is not None:
                on_ext(idx[ei], s1[ei], y)
            ne[ei] += 1
            lam_minus[ei] += y
            nxt[ei] = s1[ei] - np.log1p(-rows.take(RandomRows.EXT_WAIT, st[ei], ne[ei])) / p.rho

        s, lam = s1, lam_minus
        if fin.any():
            f = idx[fin]
            lam_T[f], nc_out[f], ne_out[f] = lam[fin], nc[fin], ne[fin]
            keep = ~fin
            idx, st, s, lam, rem, nxt, nc, ne = (
                x[keep] for x in (idx, st, s, lam, rem, nxt, nc, ne)
            )
    return EngineResult(lam_T, nc_out, ne_out)


class _Recorder:
    def __init__(self, n):
        self.jumps = [[] for _ in range(n)]

    def claim(self, idx, s, lam_minus, z):
        for i, t, m in zip(idx.tolist(), s.tolist(), z.tolist()):
            self.jumps[i].append(JumpRecord(t, CLAIM, m))

    def ext(self, idx, s, y):
        for i, t, m in zip(idx.tolist(), s.tolist(), y.tolist()):
            self.jumps[i].append(JumpRecord(t, EXTERNAL, m))


def simulate_paths(
    params: ModelParams,
    seed: int,
    n_paths: int,
    *,
    start_time: float = 0.0,
    start_lambda: float | None = None,
    first_index: int = 0,
) -> list[PathRecord]:
    """Exact simulation of paths ``first_index, ..., first_index + n_paths - 1``."""
    lam0 = params.lambda0 if start_lambda is None else float(start_lambda)
    streams = np.arange(first_index, first_index + n_paths)
    rows = RandomRows(seed, first_index + n_paths)
    rec = _Recorder(n_paths)
    run_lanes(params, start_time, lam0, streams, rows, rec)
    return [
        PathRecord(params, tuple(j), int(seed), params.horizon, start_time, start_lambda, int(i))
        for i, j in zip(streams.tolist(), rec.jumps)
    ]


def simulate_exact(
    params: ModelParams,
    seed: int,
    index: int = 0,
    *,
    start_time: float = 0.0,
    start_lambda: float | None = None,
) -> PathRecord:
    """Exact simulation of path ``index`` of the stream family ``seed``.

    Bitwise identical to the matching entry of :func:`simulate_paths`.
    """
    return simulate_paths(
        params, seed, 1, start_time=start_time, start_lambda=start_lambda, first_index=index
    )[0]


# thinning oracle


def _majorant(lam, beta, margin):
    # the intensity moves monotonically from lam towards beta between jumps
    return np.maximum(lam, beta) + margin * np.abs(lam - beta)


def simulate_thinning(
    params: ModelParams, seed: int, majorant_margin: float = 0.1
) -> PathRecord:
    """Ogata thinning with a piecewise-constant majorant.

    Between events the intensity relaxes monotonically towards ``beta``, so
    ``max(lam, beta)`` dominates it until the next jump; the majorant adds
    ``majorant_margin * |lam - beta|`` on top, which vanishes (and every
    candidate is accepted) when the intensity is constant.
    """
    if not majorant_margin > 0:
        raise DomainError("majorant margin must be positive")
    p = params
    rng = np.random.default_rng(seed)
    T, a, b = p.horizon, p.alpha, p.beta
    s, lam = 0.0, p.lambda0
    nxt = rng.exponential(1 / p.rho) if p.rho > 0 else np.inf
    jumps = []
    while True:
        bound = float(_majorant(lam, b, majorant_margin))
        cand = s + rng.exponential(1 / bound)
        stop = min(nxt, T)
        if cand >= stop:
            lam = float(p.decay(lam, stop - s))
            s = stop
            if nxt >= T:
                break
            y = float(p.ext_dist.ppf(rng.random()))
            jumps.append(JumpRecord(s, EXTERNAL, y))
            lam += y
            nxt = s + rng.exponential(1 / p.rho)
            continue
        lam = float(p.decay(lam, cand - s))
        s = cand
        if rng.random() * bound <= lam:
            z = float(p.claim_dist.ppf(rng.random()))
            jumps.append(JumpRecord(s, CLAIM, z))
            lam += float(p.self_excitation(z))
    return PathRecord(p, tuple(jumps), int(seed), T)


def thinning_counts(
    params: ModelParams, seed: int, n_paths: int, majorant_margin: float = 0.1
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised thinning; returns claim counts and terminal intensities."""
    if not majorant_margin > 0:
        raise DomainError("majorant margin must be positive")
    p = params
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x7468,)))
    T, b = p.horizon, p.beta
    counts = np.zeros(n_paths, dtype=np.int64)
    lam_T = np.empty(n_paths)
    idx = np.arange(n_paths)
    s = np.zeros(n_paths)
    lam = np.full(n_paths, p.lambda0)
    nxt = rng.exponential(1 / p.rho, n_paths) if p.rho > 0 else np.full(n_paths, np.inf)
    while idx.size:
        m = idx.size
        bound = _majorant(lam, b, majorant_margin)
        cand = s + rng.exponential(1.0, m) / bound
        u_acc, u_mark = rng.random(m), rng.random(m)
        stop = np.minimum(nxt, T)
        past = cand >= stop
        t_new = np.where(past, stop, cand)
        lam = p.decay(lam, t_new - s)
        s = t_new
        acc = ~past & (u_acc * bound <= lam)
        counts[idx[acc]] += 1
        lam[acc] += p.self_excitation(p.claim_dist.ppf(u_mark[acc]))
        ext = past & (nxt < T)
        if ext.any():
            lam[ext] += p.ext_dist.ppf(u_mark[ext])
            nxt[ext] = s[ext] + rng.exponential(1 / p.rho, int(ext.sum()))
        done = past & (nxt >= T) & ~ext
        if done.any():
            lam_T[idx[done]] = lam[done]
            keep = ~done
            idx, s, lam, nxt = idx[keep], s[keep], lam[keep], nxt[keep]
    return counts, lam_T


# moments and likelihood


def mean_intensity(params: ModelParams, t):
    """E[lambda_t] from the linear moment ODE ``m' = alpha*beta + rho E[Y] - kappa m``."""
    p = params
    t = np.asarray(t, dtype=float)
    drift = p.alpha * p.beta + p.rho * p.ext_dist.mean
    kappa = p.alpha - p.self_excitation.moment(p.claim_dist)
    if kappa == 0.0:
        out = p.lambda0 + drift * t
    else:
        m_inf = drift / kappa
        out = m_inf + (p.lambda0 - m_inf) * np.exp(-kappa * t)
    return float(out) if out.ndim == 0 else out


def expected_claim_count(params: ModelParams, t: float) -> float:
    """E[N_t] = integral of the mean intensity over [0, t]."""
    p = params
    drift = p.alpha * p.beta + p.rho * p.ext_dist.mean
    kappa = p.alpha - p.self_excitation.moment(p.claim_dist)
    if kappa == 0.0:
        return p.lambda0 * t + 0.5 * drift * t * t
    m_inf = drift / kappa
    return m_inf * t - (p.lambda0 - m_inf) * np.expm1(-kappa * t) / kappa


def log_density_ratio(params: ModelParams, path: PathRecord) -> float:
    """log L_T = -int (lambda_s - 1) ds + sum over claims of log lambda_{T_j-}."""
    total = 0.0
    for s0, s1, lam_c, lam_minus, _, jump in path.walk():
        total -= compensator_between(params, lam_c, s1 - s0) - (s1 - s0)
        if jump is not None and jump.kind == CLAIM:
            if lam_minus <= 0:
                raise NumericalError(f"non-positive intensity {lam_minus} at a claim")
            total += np.log(lam_minus)
    return float(total)


def time_changed_claims(path: PathRecord) -> tuple[np.ndarray, float]:
    """Compensator values at the claim times and over the whole path.

    Under the model the first array is a unit-rate Poisson process on
    ``[0, total]``.
    """
    out, acc = [], 0.0
    for s0, s1, lam_c, _, _, jump in path.walk():
        acc += compensator_between(path.params, lam_c, s1 - s0)
        if jump is not None and jump.kind == CLAIM:
            out.append(acc)
    return np.asarray(out), float(acc)


def time_changed_interarrivals(path: PathRecord) -> np.ndarray:
    """Compensator increments between successive claims of one path.

    The censored stretch after the last claim is dropped, so pooled over
    many short paths these gaps are biased towards small values; use
    :func:`pooled_interarrivals` for goodness-of-fit tests.
    """
    times, _ = time_changed_claims(path)
    return np.diff(times, prepend=0.0)


def pooled_interarrivals(paths: Iterable[PathRecord]) -> np.ndarray:
    """Exp(1) gaps of independent paths laid end to end on the compensator clock.

    Each path's time-changed claims form a unit Poisson process on
    ``[0, total]``; concatenating the independent pieces gives one unit
    Poisson process, whose gaps are i.i.d. Exp(1) with no censoring bias.
    """
    chunks, offset = [], 0.0
    for path in paths:
        times, total = time_changed_claims(path)
        chunks.append(times + offset)
        offset += total
    if not chunks:
        return np.empty(0)
    return np.diff(np.concatenate(chunks), prepend=0.0)


# path CSV


def write_path_csv(path: PathRecord, dest, header_comment: str | None = None) -> None:
    """Write ``time,kind,mark,lambda_after`` with 17 significant digits."""
    with open(dest, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "kind", "mark", "lambda_after"])
        for _, _, _, _, lam_after, jump in path.walk():
            if jump is not None:
                w.writerow(["%.17g" % jump.time, jump.kind, "%.17g" % jump.mark, "%.17g" % lam_after])


def read_path_csv(src) -> list[tuple[float, str, float, float]]:
    """Rows of a path dump as ``(time, kind, mark, lambda_after)`` tuples."""
    with open(src, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    return [(float(r["time"]), r["kind"], float(r["mark"]), float(r["lambda_after"])) for r in rows]


def jumps_from_rows(rows: Iterable[tuple[float, str, float, float]]) -> tuple[JumpRecord, ...]:
    return tuple(JumpRecord(t, k, m) for t, k, m, _ in rows)
