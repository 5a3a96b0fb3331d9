"""Truncated time integrals along paths and their truncation control.

The perpetual integral is approximated by its truncation to [0, T]; the
neglected tail is controlled through the transition-density envelope
E f(X(t)) <= ||f||_1 * sup_y p_t(y), which gives closed-form bounds for
the Gaussian families and a computable Poisson-mixture bound for the
jump process.  The occupation histogram realizes the time-spent-per-set
representation of the same functional as a checkable identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special, stats

from .cpp_green import GaussianJumps, JumpKernel
from .funcs import Gaussian, Mixture, TestFunction
from .paths import BmSpec, CppSpec, FbmSpec, PathSample, ProcessSpec


@dataclass(frozen=True)
class HorizonPolicy:
    mode: str  # "fixed" | "adaptive"
    resolved_T: float
    tail_bound_at_T: float
    eps_tail: float | None = None


@dataclass(frozen=True)
class OccupationHistogram:
    """Time spent per spatial bin, plus the time spent outside the box."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    bins: int
    measures: np.ndarray  # (bins,)*d
    overflow: float
    horizon: float

    def total(self) -> float:
        return float(self.measures.sum()) + self.overflow

    def bin_centers(self) -> list[np.ndarray]:
        return [
            lo + (np.arange(self.bins) + 0.5) * (hi - lo) / self.bins
            for lo, hi in zip(self.lo, self.hi)
        ]

    def bin_diameter(self) -> float:
        widths = [(hi - lo) / self.bins for lo, hi in zip(self.lo, self.hi)]
        return float(np.linalg.norm(widths))

    def riemann_sum(self, f: TestFunction) -> float:
        centers = self.bin_centers()
        grids = np.meshgrid(*centers, indexing="ij")
        pts = np.stack(grids, axis=-1)
        return float((f(pts) * self.measures).sum())

    def to_csv(self, path, config_comment: str = "") -> None:
        from .reporting import fmt17

        centers = self.bin_centers()
        d = len(self.lo)
        with open(path, "w", encoding="utf-8") as fh:
            if config_comment:
                for line in config_comment.splitlines():
                    fh.write(f"# {line}\n")
            fh.write(",".join(f"x{i + 1}" for i in range(d)) + ",measure\n")
            idx = np.indices(self.measures.shape).reshape(d, -1).T
            flat = self.measures.reshape(-1)
            for row, v in zip(idx, flat):
                coords = ",".join(fmt17(centers[i][j]) for i, j in enumerate(row))
                fh.write(f"{coords},{fmt17(v)}\n")


# ---------------------------------------------------------------------------
# path integrals
# ---------------------------------------------------------------------------


def integrate_path(path: PathSample, f: TestFunction) -> float:
    """Time integral of f along one path up to its horizon.

    Composite trapezoid on grid paths; the exact holding-time sum on
    event paths (piecewise-constant states make the integral exact).
    """
    if path.d != f.d:
        raise ValueError("path and function dimension mismatch")
    fv = f(path.states)
    if path.kind == "grid":
        dt = path.times[1] - path.times[0]
        return float(dt * (fv.sum() - 0.5 * fv[0] - 0.5 * fv[-1]))
    holds = np.diff(np.concatenate([path.times, [path.horizon]]))
    return float(np.dot(fv, holds))


def path_weights(path: PathSample) -> np.ndarray:
    """Time weight carried by each stored state; sums to the horizon."""
    if path.kind == "grid":
        dt = path.times[1] - path.times[0]
        w = np.full(len(path.times), dt)
        w[0] = w[-1] = dt / 2.0
        return w
    return np.diff(np.concatenate([path.times, [path.horizon]]))


def occupation_histogram(path: PathSample, lo, hi, bins: int) -> OccupationHistogram:
    """Accumulate the time the path spends in each bin of the box [lo, hi]^d.

    Exact for event paths via holding times; trapezoid-weighted for grid
    paths.  The in-box mass plus the overflow equals the horizon by
    construction.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != (path.d,) or hi.shape != (path.d,) or np.any(hi <= lo):
        raise ValueError("degenerate or mismatched box")
    if bins < 1:
        raise ValueError("need at least one bin per side")
    w = path_weights(path)
    hist, _ = np.histogramdd(
        path.states, bins=bins, range=list(zip(lo, hi)), weights=w
    )
    total = float(w.sum())
    overflow = total - float(hist.sum())
    return OccupationHistogram(tuple(lo), tuple(hi), bins, hist, overflow, total)


# ---------------------------------------------------------------------------
# truncation control
# ---------------------------------------------------------------------------


def bm_tail_bound(f: TestFunction, d: int, T: float) -> float:
    """Envelope bound on the mean mass beyond T for Brownian motion.

    E f(x + B_t) <= ||f||_1 (2 pi t)^{-d/2} integrated over (T, inf).
    """
    return f.l1_norm() * (2.0 * math.pi) ** (-d / 2) * T ** (1.0 - d / 2) / (d / 2 - 1.0)


def fbm_tail_bound(f: TestFunction, d: int, hurst: float, T: float) -> float:
    """Same envelope with variance t^{2H}: ||f||_1 (2 pi)^{-d/2} T^{1-dH}/(dH-1)."""
    dh = d * hurst
    return f.l1_norm() * (2.0 * math.pi) ** (-d / 2) * T ** (1.0 - dh) / (dh - 1.0)


def adaptive_horizon(
    f: TestFunction, d: int, eps: float, hurst: float = 0.5, t_min: float = 1.0
) -> HorizonPolicy:
    """Smallest horizon whose analytic tail bound is below eps (Gaussian families).

    Closed-form inversion of the envelope bound, clamped below at t_min.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    dh = d * hurst
    if dh <= 1.0:
        raise ValueError("divergent regime: need d * H > 1")
    coeff = f.l1_norm() * (2.0 * math.pi) ** (-d / 2) / (dh - 1.0)
    if coeff == 0.0:
        return HorizonPolicy("adaptive", t_min, 0.0, eps)
    T = (coeff / eps) ** (1.0 / (dh - 1.0))
    T = max(T, t_min)
    bound = fbm_tail_bound(f, d, hurst, T) if hurst != 0.5 else bm_tail_bound(f, d, T)
    return HorizonPolicy("adaptive", T, bound, eps)


def _cpp_envelope(f: TestFunction, kernel: JumpKernel, t: float) -> float:
    """Upper bound on E f(x + X_t) for the unit-rate jump process.

    The law of X_t is a Poisson mixture of k-fold convolutions plus an
    atom at zero; each convolution's sup is bounded by the kernel's
    per-term bound, and the Poisson expectation is summed exactly over
    an 8-sigma window.
    """
    atom = f.sup_norm() * math.exp(-t)
    k_lo = max(1, int(t - 8.0 * math.sqrt(t) - 8))
    k_hi = int(t + 8.0 * math.sqrt(t) + 8)
    ks = np.arange(k_lo, k_hi + 1)
    pmf = stats.poisson.pmf(ks, t)
    sups = kernel.sup_convolution(ks)
    # probability mass outside the window, bounded by the largest sup in range
    head = stats.poisson.cdf(k_lo - 1, t) - stats.poisson.pmf(0, t)
    head_bound = max(head, 0.0) * float(kernel.sup_convolution(np.array([1.0]))[0])
    tail_bound = float(stats.poisson.sf(k_hi, t)) * float(sups[-1])
    return atom + f.l1_norm() * (float(np.dot(pmf, sups)) + head_bound + tail_bound)


def cpp_tail_bound(f: TestFunction, kernel: JumpKernel, T: float) -> float:
    """Integral of the envelope over (T, inf), by quadrature after u = T/t."""
    val, _ = integrate.quad(
        lambda u: _cpp_envelope(f, kernel, T / u) * T / (u * u),
        0.0,
        1.0,
        epsabs=1e-12,
        epsrel=1e-8,
        limit=200,
    )
    return val


def cpp_adaptive_horizon(
    f: TestFunction, kernel: JumpKernel, eps: float, t_min: float = 1.0
) -> HorizonPolicy:
    """Solve the jump-process tail bound for the horizon by bisection on log T."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if f.is_zero():
        return HorizonPolicy("adaptive", t_min, 0.0, eps)

    def gap(log_t):
        return cpp_tail_bound(f, kernel, math.exp(log_t)) - eps

    lo, hi = math.log(t_min), math.log(t_min) + 1.0
    if gap(lo) <= 0:
        return HorizonPolicy("adaptive", t_min, cpp_tail_bound(f, kernel, t_min), eps)
    while gap(hi) > 0:
        hi += 2.0
        if hi > 40:
            raise ArithmeticError("tail bound does not reach eps at any sane horizon")
    log_T = optimize.brentq(gap, lo, hi, xtol=1e-3)
    T = math.exp(log_T)
    return HorizonPolicy("adaptive", T, cpp_tail_bound(f, kernel, T), eps)


def resolve_horizon(
    spec: ProcessSpec,
    f: TestFunction,
    mode: str,
    T: float | None = None,
    eps_tail: float | None = None,
) -> HorizonPolicy:
    """Build the horizon policy for a process family from config-level inputs."""
    if mode == "fixed":
        if T is None or T <= 0:
            raise ValueError("fixed horizon needs a positive T")
        if isinstance(spec, BmSpec):
            bound = bm_tail_bound(f, spec.d, T)
        elif isinstance(spec, FbmSpec):
            bound = fbm_tail_bound(f, spec.d, spec.hurst, T)
        else:
            bound = cpp_tail_bound(f, spec.kernel, T) if not f.is_zero() else 0.0
        return HorizonPolicy("fixed", float(T), bound)
    if mode == "adaptive":
        if eps_tail is None:
            raise ValueError("adaptive horizon needs eps_tail")
        if isinstance(spec, BmSpec):
            return adaptive_horizon(f, spec.d, eps_tail)
        if isinstance(spec, FbmSpec):
            return adaptive_horizon(f, spec.d, eps_tail, hurst=spec.hurst)
        return cpp_adaptive_horizon(f, spec.kernel, eps_tail)
    raise ValueError(f"unknown horizon mode {mode!r}")


def exact_tail_correction(spec: ProcessSpec, f: TestFunction, x, T: float) -> float | None:
    """Exact truncated-tail mean for Brownian motion with Gaussian-family f.

    For a Gaussian component of amplitude A and width s centered at c,
    E f(x + B_t) = A (s^2/(s^2+t))^{d/2} exp(-R^2/(2(s^2+t))), R = |x-c|,
    whose tail integral is an incomplete-gamma expression.  Returns None
    whenever no exact form is available (then the envelope bound widens
    the tolerance instead of correcting the mean).
    """
    if not isinstance(spec, BmSpec):
        return None
    x = np.asarray(x, dtype=float)

    def component_tail(amp: float, width: float, center: np.ndarray) -> float:
        d = f.d
        big_r = float(np.linalg.norm(x - center))
        s2t = width**2 + T
        if big_r == 0.0:
            return amp * width**d * s2t ** (1.0 - d / 2) / (d / 2 - 1.0)
        a = d / 2 - 1.0
        z = big_r**2 / (2.0 * s2t)
        partial = special.gamma(a) * special.gammainc(a, z)
        return amp * width**d * 2.0**a * big_r ** (2.0 - d) * partial

    if isinstance(f, Gaussian):
        return component_tail(f.amplitude, f.width, f.center())
    if isinstance(f, Mixture):
        total = 0.0
        for w, comp in f.components:
            if not isinstance(comp, Gaussian):
                return None
            total += w * component_tail(comp.amplitude, comp.width, f.center())
        return total
    return None
