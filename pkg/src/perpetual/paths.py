"""Seeded trajectory generators for the three process families.

Replicate sub-streams are derived from a counter-based generator
(Philox) keyed by (tag, replicate) spawn keys, so stream i is the same
no matter how many replicates run, in what order, or on how many
workers.  Brownian increments are exact in law at any step size; the
fractional sampler is exact in law on its uniform grid via circulant
embedding of the fractional Gaussian noise covariance; compound Poisson
paths are event lists, so the time integral against them is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import cholesky, toeplitz

from .cpp_green import JumpKernel

# spawn-key tags keep the replicate, bootstrap and quadrature streams disjoint
TAG_PATH = 0
TAG_BOOTSTRAP = 1
TAG_QUADRATURE = 2
TAG_REFINE = 3

# block size for streamed Brownian increments; fixed so that the draw
# order (and hence every sampled path) is independent of consumer chunking
BM_CHUNK = 1 << 17


def replicate_rng(seed: int, replicate: int = 0, tag: int = TAG_PATH) -> np.random.Generator:
    """Independent sub-stream for one replicate of one kind of work."""
    ss = np.random.SeedSequence(seed, spawn_key=(tag, replicate))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class BmSpec:
    d: int
    x: tuple[float, ...] = ()

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("transient Brownian regime needs d >= 3")
        if not self.x:
            object.__setattr__(self, "x", (0.0,) * self.d)
        if len(self.x) != self.d:
            raise ValueError("start point dimension mismatch")

    @property
    def family(self) -> str:
        return "bm"


@dataclass(frozen=True)
class FbmSpec:
    d: int
    hurst: float
    x: tuple[float, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ValueError("Hurst index must lie in (0, 1)")
        if self.d <= 1.0 / self.hurst:
            raise ValueError(f"need d > 1/H; got d={self.d}, 1/H={1.0 / self.hurst:g}")
        if not self.x:
            object.__setattr__(self, "x", (0.0,) * self.d)
        if len(self.x) != self.d:
            raise ValueError("start point dimension mismatch")

    @property
    def family(self) -> str:
        return "fbm"


@dataclass(frozen=True)
class CppSpec:
    d: int
    rate: float
    kernel: JumpKernel
    x: tuple[float, ...] = ()

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("transient compound Poisson regime needs d >= 3")
        if self.rate <= 0:
            raise ValueError("jump rate must be positive")
        if self.kernel.d != self.d:
            raise ValueError("kernel dimension mismatch")
        if not self.x:
            object.__setattr__(self, "x", (0.0,) * self.d)
        if len(self.x) != self.d:
            raise ValueError("start point dimension mismatch")

    @property
    def family(self) -> str:
        return "cpp"


ProcessSpec = BmSpec | FbmSpec | CppSpec


@dataclass
class PathSample:
    """One trajectory: uniform grid for continuous paths, events for jumps.

    For kind "events" the state is piecewise constant and right-
    continuous: states[i] holds on [times[i], times[i+1]), the last
    state up to the horizon.
    """

    kind: str  # "grid" | "events"
    times: np.ndarray
    states: np.ndarray  # (len(times), d)
    horizon: float
    seed: int
    replicate: int

    @property
    def d(self) -> int:
        return self.states.shape[1]

    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _scaled_increment_chunks(rng, d: int, steps: int, dt: float):
    """Yield (d, c) blocks of N(0, dt) increments in a fixed draw order."""
    root = math.sqrt(dt)
    done = 0
    while done < steps:
        c = min(BM_CHUNK, steps - done)
        block = rng.standard_normal((d, c))
        block *= root
        yield block
        done += c


def sample_bm(spec: BmSpec, T: float, dt: float, seed: int, replicate: int = 0) -> PathSample:
    """Brownian path on the uniform grid 0, dt, ..., T."""
    if T <= 0 or dt <= 0:
        raise ValueError("need positive horizon and step")
    m = int(round(T / dt))
    rng = replicate_rng(seed, replicate)
    states = np.empty((m + 1, spec.d))
    states[0] = spec.x
    pos = 1
    carry = np.asarray(spec.x, dtype=float)
    for block in _scaled_increment_chunks(rng, spec.d, m, dt):
        c = block.shape[1]
        seg = np.cumsum(block, axis=1)
        seg += carry[:, None]
        states[pos : pos + c] = seg.T
        carry = seg[:, -1].copy()
        pos += c
    times = np.arange(m + 1) * dt
    return PathSample("grid", times, states, m * dt, seed, replicate)


@lru_cache(maxsize=32)
def _fgn_embedding(hurst: float, m: int):
    """sqrt eigenvalues of the circulant embedding of unit-spacing fGn.

    Returns None when the embedding is not non-negative definite beyond
    roundoff, in which case callers fall back to a direct factorization.
    """
    k = np.arange(m + 1, dtype=float)
    rho = 0.5 * ((k + 1.0) ** (2 * hurst) + np.abs(k - 1.0) ** (2 * hurst) - 2.0 * k ** (2 * hurst))
    row = np.concatenate([rho, rho[-2:0:-1]])
    eig = np.fft.fft(row).real
    floor = -1e-9 * eig.max()
    if eig.min() < floor:
        return None
    return np.sqrt(np.maximum(eig, 0.0))


@lru_cache(maxsize=8)
def _fgn_cholesky(hurst: float, m: int):
    if m > 4096:
        raise RuntimeError(
            "circulant embedding failed and the grid is too large for direct factorization"
        )
    k = np.arange(m, dtype=float)
    rho = 0.5 * ((k + 1.0) ** (2 * hurst) + np.abs(k - 1.0) ** (2 * hurst) - 2.0 * k ** (2 * hurst))
    return cholesky(toeplitz(rho), lower=True)


def sample_fbm(spec: FbmSpec, T: float, dt: float, seed: int, replicate: int = 0) -> PathSample:
    """Fractional Brownian path, coordinates independent, exact in law on the grid."""
    if T <= 0 or dt <= 0:
        raise ValueError("need positive horizon and step")
    m = int(round(T / dt))
    d, hurst = spec.d, spec.hurst
    rng = replicate_rng(seed, replicate)
    sq = _fgn_embedding(hurst, m)
    if sq is not None:
        a = rng.standard_normal((d, m + 1))
        b = rng.standard_normal((d, m - 1)) if m > 1 else np.zeros((d, 0))
        z = np.zeros((d, 2 * m), dtype=complex)
        z[:, 0] = a[:, 0]
        z[:, m] = a[:, m]
        if m > 1:
            z[:, 1:m] = (a[:, 1:m] + 1j * b) / math.sqrt(2.0)
            z[:, m + 1 :] = np.conj(z[:, 1:m][:, ::-1])
        w = np.fft.ifft(sq * z, axis=1)
        fgn = math.sqrt(2 * m) * w.real[:, :m]
    else:
        chol = _fgn_cholesky(hurst, m)
        fgn = rng.standard_normal((d, m)) @ chol.T
    fgn *= dt**hurst
    states = np.empty((m + 1, d))
    states[0] = spec.x
    states[1:] = np.asarray(spec.x) + np.cumsum(fgn, axis=1).T
    times = np.arange(m + 1) * dt
    return PathSample("grid", times, states, m * dt, seed, replicate)


def sample_cpp(spec: CppSpec, T: float, seed: int, replicate: int = 0) -> PathSample:
    """Compound Poisson path: exponential interarrivals, i.i.d. jumps.

    Paths are stored as event lists; with no event before T the path is
    constant at the start point (the empty-sum convention).
    """
    if T <= 0:
        raise ValueError("need a positive horizon")
    rng = replicate_rng(seed, replicate)
    lam = spec.rate
    mean_events = lam * T
    block = max(64, int(mean_events + 6.0 * math.sqrt(mean_events)))
    gaps = rng.exponential(1.0 / lam, block)
    total = float(gaps.sum())
    while total <= T:
        extra = rng.exponential(1.0 / lam, max(64, block // 4))
        gaps = np.concatenate([gaps, extra])
        total += float(extra.sum())
    times_all = np.cumsum(gaps)
    cnt = int(np.searchsorted(times_all, T, side="right"))
    jumps = spec.kernel.sample(rng, cnt) if cnt else np.zeros((0, spec.d))
    states = np.empty((cnt + 1, spec.d))
    states[0] = spec.x
    if cnt:
        states[1:] = np.asarray(spec.x) + np.cumsum(jumps, axis=0)
    times = np.concatenate([[0.0], times_all[:cnt]])
    return PathSample("events", times, states, T, seed, replicate)


def sample_path(spec: ProcessSpec, T: float, dt: float | None, seed: int, replicate: int = 0) -> PathSample:
    if isinstance(spec, BmSpec):
        return sample_bm(spec, T, dt, seed, replicate)
    if isinstance(spec, FbmSpec):
        return sample_fbm(spec, T, dt, seed, replicate)
    return sample_cpp(spec, T, seed, replicate)


def refine_bm(path: PathSample, rng: np.random.Generator) -> PathSample:
    """Halve the grid of a Brownian path by conditional (bridge) midpoints.

    The refined path has the law of Brownian motion observed at twice the
    resolution, consistent with the coarse path.
    """
    if path.kind != "grid":
        raise ValueError("refinement applies to grid paths")
    t, X = path.times, path.states
    dt = t[1] - t[0]
    mid = 0.5 * (X[:-1] + X[1:]) + math.sqrt(dt / 4.0) * rng.standard_normal(
        (len(t) - 1, X.shape[1])
    )
    times = np.empty(2 * len(t) - 1)
    times[0::2] = t
    times[1::2] = t[:-1] + dt / 2.0
    states = np.empty((2 * len(t) - 1, X.shape[1]))
    states[0::2] = X
    states[1::2] = mid
    return PathSample("grid", times, states, path.horizon, path.seed, path.replicate)


def transience_diagnostic(paths: list[PathSample], radius: float) -> float:
    """Fraction of paths whose terminal state left the ball of ``radius``.

    A cheap indicator that the transient regime is actually in force for
    the simulated ensemble.
    """
    if not paths:
        raise ValueError("empty path collection")
    far = sum(1 for p in paths if float(np.linalg.norm(p.final_state())) > radius)
    return far / len(paths)
