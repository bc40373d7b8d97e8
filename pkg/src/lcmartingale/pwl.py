"""Exact calculus for piecewise-linear log-densities.

A log-concave density estimate is ``exp`` of a concave function that is linear
between consecutive knots and ``-inf`` outside ``[knots[0], knots[-1]]``.  All
integrals needed downstream (masses, CDF, quantiles, first moments against
another piecewise-linear function) have closed forms in terms of

    M_k(r, s) = int_0^1 u**k * exp(r + (s - r) * u) du,   k = 0, 1, 2,

which are evaluated here with care for the small-slope regime.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NEG_INF",
    "SLOPE_SWITCH",
    "PiecewiseLinear",
    "PWLConcave",
    "LogConcaveDensity",
    "EmpiricalMeasure",
    "exp_moments",
    "segment_moments",
    "exp_mass",
    "eval_log",
    "segment_exp_integral",
    "normalize",
    "cdf",
    "quantile",
    "integrate_pwl_against",
    "integrate_pwl_against_empirical",
    "loss",
    "sup_diff",
]

#: Value returned by :func:`eval_log` outside the support.  Never stored.
NEG_INF = -math.inf

#: Below this |Δy| across a segment the zeroth-order integral uses a Taylor
#: expansion instead of the exact ratio.
SLOPE_SWITCH = 1e-6

# Higher moments lose ~eps/|d|**k relative precision in closed form, so they
# switch to a power series on a wider band (|d| < 0.1 keeps the closed-form
# branch within ~1e-12 relative error; nine terms truncate below 1e-14).
_SERIES_SWITCH = 0.1
_SERIES_TERMS = 9

CONCAVITY_TOL = 1e-10

# a_k(d) = sum_n d**n / (n! (n + k + 1)); highest order first for Horner.
_A_COEF = [(1.0 / (math.factorial(n) * (n + 2)), 1.0 / (math.factorial(n) * (n + 3)))
           for n in reversed(range(_SERIES_TERMS))]


def _j0_unit(d):
    """int_0^1 exp(d*u) du for d <= 0, vectorised."""
    d = np.asarray(d, dtype=float)
    shape = d.shape
    d = d.reshape(-1)
    small = np.abs(d) <= SLOPE_SWITCH
    if not small.any():
        return (np.expm1(d) / d).reshape(shape)
    out = np.expm1(d)
    np.divide(out, d, out=out, where=~small)
    ds = d[small]
    out[small] = 1.0 + ds * (0.5 + ds * (1.0 / 6.0 + ds / 24.0))
    return out.reshape(shape)


def _a_unit(d):
    """(a0, a1, a2) with a_k = int_0^1 u**k exp(d*u) du, for d <= 0."""
    d = np.asarray(d, dtype=float)
    shape = d.shape
    d = d.reshape(-1)
    a0 = _j0_unit(d)
    small = np.abs(d) < _SERIES_SWITCH
    any_small = small.any()
    dc = np.where(small, -1.0, d) if any_small else d
    e = np.exp(dc)
    d2 = dc * dc
    a1 = (e * (dc - 1.0) + 1.0) / d2
    a2 = (e * (d2 - 2.0 * dc + 2.0) - 2.0) / (d2 * dc)
    if any_small:
        ds = d[small]
        s1 = np.zeros_like(ds)
        s2 = np.zeros_like(ds)
        for c1, c2 in _A_COEF:
            s1 = s1 * ds + c1
            s2 = s2 * ds + c2
        a1[small] = s1
        a2[small] = s2
    return a0.reshape(shape), a1.reshape(shape), a2.reshape(shape)


def segment_moments(r, s):
    """First and second exponential moments of a segment, both orientations.

    Returns ``(M0, M1, M2, R1, R2)`` where ``Mk = int_0^1 u**k exp(r + (s-r) u)
    du`` and ``Rk`` is the same with ``(1 - u)**k``.  Every entry is a sum of
    positive terms times ``exp(max(r, s))``, so no branch cancels badly.
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if r.shape != s.shape:
        r, s = np.broadcast_arrays(r, s)
    down = s <= r
    a0, a1, a2 = _a_unit(-np.abs(s - r))
    scale = np.exp(np.maximum(r, s))
    # Moments about the larger endpoint, then about the other one.
    near1, near2 = a1, a2
    far1 = a0 - a1
    far2 = a0 - 2.0 * a1 + a2
    m0 = scale * a0
    m1 = scale * np.where(down, near1, far1)
    m2 = scale * np.where(down, near2, far2)
    r1 = scale * np.where(down, far1, near1)
    r2 = scale * np.where(down, far2, near2)
    return m0, m1, m2, r1, r2


def exp_moments(r, s):
    """Return ``(M0, M1, M2)`` with ``Mk = int_0^1 u**k exp(r + (s-r) u) du``.

    Inputs broadcast; all outputs are finite for finite inputs (barring
    overflow of ``exp(max(r, s))`` itself).
    """
    return segment_moments(r, s)[:3]


def exp_mass(r, s):
    """``M0`` of :func:`exp_moments` alone."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    return np.exp(np.maximum(r, s)) * _j0_unit(-np.abs(s - r))


def _as_frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PiecewiseLinear:
    """Continuous piecewise-linear function on ``[knots[0], knots[-1]]``.

    Outside the knot range the function is ``-inf``.  Used directly for test
    functions that need not be concave; :class:`PWLConcave` adds the
    concavity invariant.
    """

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = _as_frozen(self.knots)
        values = _as_frozen(self.values)
        if knots.size < 2:
            raise ValueError("need at least two knots")
        if knots.shape != values.shape:
            raise ValueError("knots and values must have equal length")
        if not (np.all(np.isfinite(knots)) and np.all(np.isfinite(values))):
            raise ValueError("knots and values must be finite")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def __call__(self, x):
        return eval_log(self, x)

    def shift(self, c: float):
        return type(self)(self.knots, self.values + c)

    def __repr__(self):
        return f"{type(self).__name__}(knots={self.knots!r}, values={self.values!r})"


class PWLConcave(PiecewiseLinear):
    """Concave piecewise-linear function; slopes are nonincreasing."""

    def __post_init__(self):
        super().__post_init__()
        s = self.slopes
        if s.size > 1:
            ds = np.diff(s)
            if np.any(ds > CONCAVITY_TOL * (1.0 + np.abs(s[1:]))):
                raise ValueError("slopes must be nonincreasing (concavity)")


def eval_log(f: PiecewiseLinear, x):
    """Evaluate ``f`` at ``x``; ``-inf`` outside the support.

    Returns a float for scalar input and an array otherwise.
    """
    xa = np.asarray(x, dtype=float)
    out = np.interp(xa, f.knots, f.values)
    out = np.where((xa < f.knots[0]) | (xa > f.knots[-1]), NEG_INF, out)
    if out.ndim == 0:
        return float(out)
    return out


def segment_exp_integral(a: float, b: float, ya: float, yb: float) -> float:
    """``int_a^b exp(l(x)) dx`` for the line through ``(a, ya)`` and ``(b, yb)``.

    Uses ``(b - a) (e^yb - e^ya) / (yb - ya)`` in a cancellation-free form and
    a four-term Taylor series when ``|yb - ya| <= SLOPE_SWITCH``.
    """
    for v in (a, b, ya, yb):
        if not math.isfinite(v):
            raise ValueError("segment_exp_integral requires finite arguments")
    if not a < b:
        raise ValueError("need a < b")
    top = max(ya, yb)
    return float((b - a) * math.exp(top) * _j0_unit(np.array([-abs(yb - ya)]))[0])


def _segment_masses(knots: np.ndarray, values: np.ndarray) -> np.ndarray:
    return np.diff(knots) * exp_mass(values[:-1], values[1:])


@dataclass(frozen=True, eq=False)
class LogConcaveDensity:
    """``exp(shape)`` with cached per-segment masses.

    Build with :func:`normalize` (unit mass) or :meth:`from_shape` (mass as
    is).  Methods mirror the module-level functions.
    """

    shape: PWLConcave
    segment_masses: np.ndarray = field(repr=False)
    total_mass: float
    _cum: np.ndarray = field(repr=False)

    @classmethod
    def from_shape(cls, shape: PiecewiseLinear) -> "LogConcaveDensity":
        if not isinstance(shape, PWLConcave):
            shape = PWLConcave(shape.knots, shape.values)
        masses = _as_frozen(_segment_masses(shape.knots, shape.values))
        cum = np.concatenate(([0.0], np.cumsum(masses)))
        cum.setflags(write=False)
        return cls(shape, masses, float(cum[-1]), cum)

    @property
    def knots(self) -> np.ndarray:
        return self.shape.knots

    @property
    def values(self) -> np.ndarray:
        return self.shape.values

    @property
    def support(self) -> tuple[float, float]:
        return self.shape.support

    def logpdf(self, x):
        return eval_log(self.shape, x)

    def pdf(self, x):
        with np.errstate(under="ignore"):
            return np.exp(self.logpdf(x))

    def cdf(self, x):
        return cdf(self, x)

    def quantile(self, u):
        return quantile(self, u)

    def mean(self) -> float:
        return integrate_pwl_against(
            PiecewiseLinear(self.support, self.support), self)

    def __repr__(self):
        return (f"LogConcaveDensity(knots={self.knots!r}, values={self.values!r}, "
                f"total_mass={self.total_mass!r})")


def normalize(shape: PiecewiseLinear) -> LogConcaveDensity:
    """Shift ``shape`` by ``-log(mass)`` so the induced density integrates to one."""
    raw = LogConcaveDensity.from_shape(shape)
    if raw.total_mass == 1.0:
        return raw
    shifted = raw.shape.shift(-math.log(raw.total_mass))
    return LogConcaveDensity.from_shape(shifted)


def cdf(f: LogConcaveDensity, x):
    """Distribution function of ``f`` (divided by ``f.total_mass``)."""
    xa = np.asarray(x, dtype=float)
    t, y = f.knots, f.values
    xc = np.clip(xa, t[0], t[-1])
    j = np.clip(np.searchsorted(t, xc, side="right") - 1, 0, t.size - 2)
    h = xc - t[j]
    yx = y[j] + (y[j + 1] - y[j]) / (t[j + 1] - t[j]) * h
    out = (f._cum[j] + h * exp_mass(y[j], yx)) / f.total_mass
    out = np.clip(out, 0.0, 1.0)
    out = np.where(xa >= t[-1], 1.0, np.where(xa <= t[0], 0.0, out))
    if out.ndim == 0:
        return float(out)
    return out


def quantile(f: LogConcaveDensity, u):
    """Inverse of :func:`cdf`, by analytic inversion on the selected segment."""
    ua = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(ua)) or np.any((ua < 0.0) | (ua > 1.0)):
        raise ValueError("quantile level must lie in [0, 1]")
    t, y = f.knots, f.values
    target = ua * f.total_mass
    j = np.clip(np.searchsorted(f._cum, target, side="right") - 1, 0, t.size - 2)
    width = t[j + 1] - t[j]
    slope = (y[j + 1] - y[j]) / width
    rem = np.maximum(target - f._cum[j], 0.0)
    # Solve int_0^h exp(y_j + slope*v) dv = rem for h.
    r = rem * np.exp(-y[j])
    z = slope * r
    flat = np.abs(slope * width) <= SLOPE_SWITCH
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = np.log1p(np.maximum(z, -1.0 + 1e-300)) / slope
    series = r * (1.0 - z * (0.5 - z * (1.0 / 3.0 - z * 0.25)))
    h = np.where(flat, series, exact)
    h = np.clip(np.nan_to_num(h, nan=0.0, posinf=0.0), 0.0, width)
    out = t[j] + h
    out = np.where(ua <= 0.0, t[0], np.where(ua >= 1.0, t[-1], out))
    if out.ndim == 0:
        return float(out)
    return out


def integrate_pwl_against(g: PiecewiseLinear, f: LogConcaveDensity) -> float:
    """Exact ``int g(x) f(x) dx`` over the support of ``f``.

    ``g`` must be finite on the whole support of ``f``.
    """
    lo, hi = f.support
    if g.knots[0] > lo or g.knots[-1] < hi:
        raise ValueError("g is -inf on part of the support of f")
    inner = g.knots[(g.knots > lo) & (g.knots < hi)]
    grid = np.union1d(f.knots, inner)
    a, b = grid[:-1], grid[1:]
    ga, gb = np.interp(a, g.knots, g.values), np.interp(b, g.knots, g.values)
    pa = np.interp(a, f.knots, f.values)
    pb = np.interp(b, f.knots, f.values)
    # int_0^1 (ga + (gb-ga) u) e^{...} du = ga (M0 - M1) + gb M1, and
    # M0 - M1 is the reflected first moment.
    _, m1, _, m1r, _ = segment_moments(pa, pb)
    total = np.sum((b - a) * (ga * m1r + gb * m1))
    return float(total / f.total_mass)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Weighted point masses on strictly increasing support points."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = _as_frozen(self.points)
        w = _as_frozen(self.weights)
        if p.shape != w.shape or p.size == 0:
            raise ValueError("points and weights must be nonempty and equal length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(w))):
            raise ValueError("points and weights must be finite")
        if np.any(np.diff(p) <= 0):
            raise ValueError("points must be strictly increasing")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_sample(cls, x, weights=None) -> "EmpiricalMeasure":
        """Sort ``x``, merge exact duplicates and normalise the weights."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size == 0:
            raise ValueError("empty sample")
        w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).reshape(-1)
        if w.shape != x.shape:
            raise ValueError("weights must match sample length")
        pts, inv = np.unique(x, return_inverse=True)
        agg = np.bincount(inv.reshape(-1), weights=w, minlength=pts.size)
        return cls(pts, agg / agg.sum())

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def effective_size(self) -> float:
        return 1.0 / float(np.sum(self.weights**2))

    def cdf(self, x):
        """Right-continuous distribution function."""
        cw = np.concatenate(([0.0], np.cumsum(self.weights)))
        idx = np.searchsorted(self.points, np.asarray(x, dtype=float), side="right")
        out = np.minimum(cw[idx], 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def mean(self) -> float:
        return float(np.dot(self.weights, self.points))


def integrate_pwl_against_empirical(g: PiecewiseLinear, fn: EmpiricalMeasure) -> float:
    """``sum_i w_i g(x_i)``; every support point must lie in g's domain."""
    lo, hi = g.support
    if fn.points[0] < lo or fn.points[-1] > hi:
        raise ValueError("support point outside the domain of g")
    return float(np.dot(fn.weights, np.interp(fn.points, g.knots, g.values)))


def loss(g: PiecewiseLinear, fn: EmpiricalMeasure) -> float:
    """Log-likelihood functional ``int g dF_n - int exp(g) dx``."""
    mass = float(np.sum(_segment_masses(g.knots, g.values)))
    return integrate_pwl_against_empirical(g, fn) - mass


def sup_diff(g1: PiecewiseLinear, g2: PiecewiseLinear) -> float:
    """Sup-norm distance of two piecewise-linear functions on a common support."""
    if g1.support != g2.support:
        raise ValueError(f"supports differ: {g1.support} vs {g2.support}")
    grid = np.union1d(g1.knots, g2.knots)
    d = np.interp(grid, g1.knots, g1.values) - np.interp(grid, g2.knots, g2.values)
    return float(np.max(np.abs(d)))

