"""Library of admissible test functions on R^d.

Every function here is continuous, bounded, non-negative and integrable,
so both the sup norm and the L1 norm are finite.  The families are
deliberately closed-form friendly (Gaussians, smooth bumps, finite
mixtures of those) so that every integral they enter has an independent
numerical check.

All functions are radial about a common center (``shift``); evaluation is
vectorized over arrays of points of shape (..., d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special


def surface_area(d: int) -> float:
    """Surface measure of the unit sphere S^{d-1}."""
    return 2.0 * math.pi ** (d / 2) / special.gamma(d / 2)


@dataclass(frozen=True)
class ClNorm:
    """sup norm, L1 norm and their sum for a bounded integrable function."""

    sup_norm: float
    l1_norm: float

    @property
    def cl_norm(self) -> float:
        return self.sup_norm + self.l1_norm


@dataclass(frozen=True)
class ValueWithError:
    """A numeric result together with an error estimate.

    ``error`` is an absolute quadrature error bound for deterministic
    routes and a standard error for Monte Carlo routes; ``method`` names
    the route that produced the value.
    """

    value: float
    error: float
    method: str = ""

    def __float__(self) -> float:
        return self.value


class DimensionMismatch(ValueError):
    pass


def _as_points(x, d: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.shape == () and d == 1:
        pts = pts.reshape(1)
    if pts.shape[-1] != d:
        raise DimensionMismatch(
            f"points have dimension {pts.shape[-1]}, function lives on R^{d}"
        )
    return pts


class TestFunction:
    """Base class for radial members of the CL class.

    Subclasses implement ``profile`` (the radial profile about the
    center), the exact ``sup_norm``, and either an exact ``l1_norm`` or
    one obtained by radial quadrature.
    """

    d: int
    shift: tuple[float, ...]

    def center(self) -> np.ndarray:
        return np.asarray(self.shift, dtype=float)

    def profile(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        pts = _as_points(x, self.d)
        diff = pts - self.center()
        r = np.sqrt(np.einsum("...i,...i->...", diff, diff))
        return self.profile(r)

    def sup_norm(self) -> float:
        raise NotImplementedError

    def l1_norm(self) -> float:
        raise NotImplementedError

    def l1_norm_quadrature(self) -> ValueWithError:
        """L1 norm by adaptive quadrature of the surface-weighted profile."""
        s = surface_area(self.d)
        val, err = integrate.quad(
            lambda r: float(self.profile(np.asarray(r))) * r ** (self.d - 1),
            0.0,
            self._radial_cutoff(),
            epsabs=1e-14,
            epsrel=1e-11,
            limit=200,
        )
        return ValueWithError(s * val, s * err, "radial-quadrature")

    def _radial_cutoff(self) -> float:
        """Radius beyond which the profile's mass is < 1e-12 of the total."""
        raise NotImplementedError

    def mass_outside(self, radius: float) -> float:
        """L1 mass of the function outside the ball of ``radius`` around its center."""
        if radius <= 0:
            return self.l1_norm()
        s = surface_area(self.d)
        hi = max(self._radial_cutoff(), radius * 1.001)
        if radius >= hi:
            return 0.0
        val, _ = integrate.quad(
            lambda r: float(self.profile(np.asarray(r))) * r ** (self.d - 1),
            radius,
            hi,
            epsabs=1e-15,
            epsrel=1e-10,
            limit=200,
        )
        return s * val

    def lipschitz_bound(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw points with density f / ||f||_1 (requires ||f||_1 > 0)."""
        raise NotImplementedError

    def scaled(self, c: float) -> "TestFunction":
        raise NotImplementedError

    def shifted(self, v) -> "TestFunction":
        raise NotImplementedError

    def is_zero(self) -> bool:
        return self.sup_norm() == 0.0

    def label(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Gaussian(TestFunction):
    """f(x) = A exp(-|x - c|^2 / (2 sigma^2))."""

    amplitude: float
    width: float
    d: int = 3
    shift: tuple[float, ...] = ()

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if not self.shift:
            object.__setattr__(self, "shift", (0.0,) * self.d)
        if len(self.shift) != self.d:
            raise DimensionMismatch("shift dimension does not match d")

    def profile(self, r):
        return self.amplitude * np.exp(-0.5 * (np.asarray(r) / self.width) ** 2)

    def sup_norm(self):
        return self.amplitude

    def l1_norm(self):
        return self.amplitude * (2.0 * math.pi * self.width**2) ** (self.d / 2)

    def _radial_cutoff(self):
        # Gaussian mass beyond 10 sigma + sqrt(d) corrections is far below 1e-12.
        return self.width * (10.0 + 2.0 * math.sqrt(self.d))

    def mass_outside(self, radius):
        if radius <= 0:
            return self.l1_norm()
        z = radius**2 / (2.0 * self.width**2)
        return self.l1_norm() * special.gammaincc(self.d / 2, z)

    def lipschitz_bound(self):
        # |grad f| peaks at r = sigma.
        return self.amplitude * math.exp(-0.5) / self.width

    def sample(self, rng, size):
        return self.center() + self.width * rng.standard_normal((size, self.d))

    def scaled(self, c):
        return Gaussian(self.amplitude * c, self.width, self.d, self.shift)

    def shifted(self, v):
        new = tuple(np.asarray(self.shift) + np.asarray(v, dtype=float))
        return Gaussian(self.amplitude, self.width, self.d, new)

    def label(self):
        return f"gaussian(A={self.amplitude:g},sigma={self.width:g})"


@dataclass(frozen=True)
class Bump(TestFunction):
    """Smooth compactly supported bump of height A on the ball of radius R.

    f(x) = A exp(1 - 1/(1 - (r/R)^2)) for r < R and 0 outside; C-infinity
    everywhere, peak value exactly A at the center.
    """

    radius: float
    amplitude: float = 1.0
    d: int = 3
    shift: tuple[float, ...] = ()

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if not self.shift:
            object.__setattr__(self, "shift", (0.0,) * self.d)
        if len(self.shift) != self.d:
            raise DimensionMismatch("shift dimension does not match d")

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        u = (r / self.radius) ** 2
        out = np.zeros_like(u)
        inside = u < 1.0
        with np.errstate(divide="ignore", over="ignore"):
            out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - u[inside]))
        return out

    def sup_norm(self):
        return self.amplitude

    def l1_norm(self):
        return self.l1_norm_quadrature().value

    def _radial_cutoff(self):
        return self.radius

    def lipschitz_bound(self):
        # max |profile'| found numerically once; profile' has a single hump.
        r = np.linspace(1e-9, self.radius * (1 - 1e-9), 20001)
        u = (r / self.radius) ** 2
        dp = self.profile(r) * (2 * r / self.radius**2) / (1.0 - u) ** 2
        return float(dp.max()) * 1.001

    def sample(self, rng, size):
        out = np.empty((size, self.d))
        have = 0
        while have < size:
            m = max(size - have, 128)
            w = rng.standard_normal((m, self.d))
            w /= np.linalg.norm(w, axis=1)[:, None]
            r = self.radius * rng.random(m) ** (1.0 / self.d)
            cand = r[:, None] * w
            acc = rng.random(m) * self.amplitude < self.profile(r)
            take = min(int(acc.sum()), size - have)
            out[have : have + take] = cand[acc][:take]
            have += take
        return self.center() + out

    def scaled(self, c):
        return Bump(self.radius, self.amplitude * c, self.d, self.shift)

    def shifted(self, v):
        new = tuple(np.asarray(self.shift) + np.asarray(v, dtype=float))
        return Bump(self.radius, self.amplitude, self.d, new)

    def label(self):
        return f"bump(R={self.radius:g},A={self.amplitude:g})"


@dataclass(frozen=True)
class Mixture(TestFunction):
    """Non-negative combination sum_i w_i f_i of co-centered components.

    All components share the mixture's center, so the sup norm is the
    exact sum of the component peaks.  The empty mixture is the zero
    function.
    """

    components: tuple[tuple[float, TestFunction], ...]
    d: int = 3
    shift: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.shift:
            object.__setattr__(self, "shift", (0.0,) * self.d)
        for w, c in self.components:
            if w < 0:
                raise ValueError("mixture weights must be non-negative")
            if c.d != self.d:
                raise DimensionMismatch("component dimension mismatch")
            if any(s != 0.0 for s in c.shift):
                raise ValueError("mixture components must be centered; shift the mixture")

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for w, c in self.components:
            out += w * c.profile(r)
        return out

    def sup_norm(self):
        return float(sum(w * c.sup_norm() for w, c in self.components))

    def l1_norm(self):
        return float(sum(w * c.l1_norm() for w, c in self.components))

    def _radial_cutoff(self):
        if not self.components:
            return 1.0
        return max(c._radial_cutoff() for _, c in self.components)

    def mass_outside(self, radius):
        return float(sum(w * c.mass_outside(radius) for w, c in self.components))

    def lipschitz_bound(self):
        return float(sum(w * c.lipschitz_bound() for w, c in self.components))

    def sample(self, rng, size):
        masses = np.array([w * c.l1_norm() for w, c in self.components])
        total = masses.sum()
        if total <= 0:
            raise ValueError("cannot sample from the zero function")
        counts = rng.multinomial(size, masses / total)
        parts = [
            c.sample(rng, k) for (w, c), k in zip(self.components, counts) if k > 0
        ]
        pts = np.concatenate(parts, axis=0)
        return pts + self.center()

    def scaled(self, c):
        comps = tuple((w * c, f) for w, f in self.components)
        return Mixture(comps, self.d, self.shift)

    def shifted(self, v):
        new = tuple(np.asarray(self.shift) + np.asarray(v, dtype=float))
        return Mixture(self.components, self.d, new)

    def is_zero(self):
        return not self.components or self.sup_norm() == 0.0

    def label(self):
        inner = "+".join(f"{w:g}*{c.label()}" for w, c in self.components)
        return f"mixture({inner})" if inner else "zero"


def gaussian_density(variance: float, d: int = 3, shift=()) -> Gaussian:
    """The normalized Gaussian probability density with the given per-coordinate variance."""
    amp = (2.0 * math.pi * variance) ** (-d / 2)
    return Gaussian(amp, math.sqrt(variance), d, tuple(shift))


def zero_function(d: int = 3) -> Mixture:
    return Mixture((), d)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def eval_function(f: TestFunction, x) -> float:
    """Evaluate f at a single point, with a dimension check."""
    return float(f(np.asarray(x, dtype=float)))


def cl_norm(f: TestFunction) -> ClNorm:
    return ClNorm(f.sup_norm(), f.l1_norm())


def _ball_sample(rng, n, d, alpha):
    """Points in the unit ball with density proportional to |y|^{-alpha}."""
    r = rng.random(n) ** (1.0 / (d - alpha))
    w = rng.standard_normal((n, d))
    w /= np.linalg.norm(w, axis=1)[:, None]
    return r[:, None] * w


def _mixed_draw(f, centers, alpha, rng, p_ball=0.5):
    """Draw y ~ q and return (importance weights f(c+y)|y|^-a / q(y), y).

    q mixes the normalized |y|^{-alpha} density on the unit ball with the
    function's own density re-centered at each row of ``centers``;
    the likelihood ratio is bounded by construction, which keeps the
    estimator variance finite for every alpha in (0, d).
    """
    n, d = centers.shape
    l1 = f.l1_norm()
    pick = rng.random(n) < p_ball
    y = np.empty((n, d))
    nb = int(pick.sum())
    y[pick] = _ball_sample(rng, nb, d, alpha)
    if n - nb:
        y[~pick] = f.sample(rng, n - nb) - f.center() - centers[~pick]
    r = np.linalg.norm(y, axis=1)
    rs = np.where(r > 0, r, 1.0)
    c_ball = (d - alpha) / surface_area(d)
    q_ball = np.where(r <= 1.0, c_ball * rs ** (-alpha), 0.0)
    fv = f(centers + y + f.center())
    q = p_ball * q_ball + (1.0 - p_ball) * fv / l1
    w = np.where(q > 0, fv * rs ** (-alpha) / np.where(q > 0, q, 1.0), 0.0)
    # r == 0 has probability zero under q; guard anyway
    w[r == 0] = 0.0
    return w, y


def radial_potential_integral(
    f: TestFunction,
    x,
    alpha: float,
    samples: int = 400_000,
    rng: np.random.Generator | None = None,
) -> ValueWithError:
    """Integral of f(x + y) |y|^{-alpha} over R^d for 0 < alpha < d.

    The singularity at y = 0 is integrable by the split-ball argument
    (sup norm controls the unit ball, the L1 norm the rest).  When x is
    the function's center the integral reduces to 1-D quadrature of the
    surface-weighted profile; otherwise a mixed importance-sampled Monte
    Carlo quadrature is used and ``error`` is its standard error.
    """
    d = f.d
    if not 0.0 < alpha < d:
        raise ValueError(f"alpha must lie in (0, {d}), got {alpha}")
    if f.is_zero():
        return ValueWithError(0.0, 0.0, "zero")
    x = np.asarray(x, dtype=float)
    if x.shape != (d,):
        raise DimensionMismatch(f"x must be a point in R^{d}")
    if np.array_equal(x, f.center()):
        s = surface_area(d)
        cutoff = f._radial_cutoff()
        # the endpoint power r^{d-1-alpha} is integrable for alpha < d and
        # QAGS extrapolation handles it without special treatment
        val, err = integrate.quad(
            lambda r: float(f.profile(np.asarray(r))) * r ** (d - 1 - alpha),
            0.0,
            cutoff,
            epsabs=1e-14,
            epsrel=1e-11,
            limit=400,
        )
        return ValueWithError(s * val, s * abs(err), "radial-quadrature")
    if rng is None:
        rng = np.random.default_rng(0)
    centers = np.tile(x - f.center(), (samples, 1))
    w, _ = _mixed_draw(f, centers, alpha, rng)
    value = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(samples))
    return ValueWithError(value, se, "mc-quadrature")


def split_ball_bound(f: TestFunction, alpha: float) -> float:
    """Upper bound C1 ||f||_inf + C2 ||f||_1 for the potential integral.

    C1 is the unit-ball factor surface/(d - alpha), C2 = 1 from
    |y|^{-alpha} <= 1 outside the unit ball.
    """
    d = f.d
    c1 = surface_area(d) / (d - alpha)
    return c1 * f.sup_norm() + f.l1_norm()
