"""Log-concave NPMLE by an active-set method, and its optimality certificate.

The estimate maximises ``sum_i w_i phi(x_i) - int exp(phi)`` over concave
``phi``.  The maximiser is linear between consecutive data points, so the
search runs over knot subsets ``K`` of the data: for fixed ``K`` the
objective is smooth and strictly concave in the knot values and is solved by
Newton's method (the Hessian is tridiagonal); knots are dropped when the
unconstrained optimum breaks concavity and added where the directional
derivative towards a new kink is positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._solver import active_set
from .pwl import (
    EmpiricalMeasure,
    LogConcaveDensity,
    PiecewiseLinear,
    PWLConcave,
    cdf,
    integrate_pwl_against,
    integrate_pwl_against_empirical,
    normalize,
)

__all__ = [
    "FitOptions",
    "KktReport",
    "DegenerateSampleError",
    "ConvergenceError",
    "fit",
    "verify_kkt",
]


class DegenerateSampleError(ValueError):
    """Raised when the sample has fewer than two distinct points."""


class ConvergenceError(RuntimeError):
    """Raised when the active-set loop exhausts ``max_iter``.

    ``density`` holds the last (concave, normalised) iterate and ``report``
    its :class:`KktReport`, so callers may continue with it.
    """

    def __init__(self, message, density, report, iterations):
        super().__init__(message)
        self.density = density
        self.report = report
        self.iterations = iterations


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-8
    max_iter: int = 500
    warm_start: Optional[PWLConcave] = None

    def __post_init__(self):
        if not (self.tol > 0):
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class KktReport:
    """Outcome of :func:`verify_kkt`.

    ``max_hinge_violation`` is the largest ``int D dF_n - int D dF_hat`` over
    the kink test family (zero or negative for the NPMLE), ``mean_gap`` is
    ``int x dF_n - int x dF_hat``.  The sandwich flags check
    ``F_n(t-) <= F_hat(t) <= F_n(t)`` at the knots of the fit.
    """

    max_hinge_violation: float
    sandwich_lower_ok: bool
    sandwich_upper_ok: bool
    mass_error: float
    mean_gap: float
    tol: float
    weighted: bool = False

    @property
    def passed(self) -> bool:
        return (self.max_hinge_violation <= self.tol
                and abs(self.mean_gap) <= self.tol
                and self.mass_error <= self.tol
                and self.sandwich_lower_ok
                and self.sandwich_upper_ok)

    def as_dict(self) -> dict:
        return {
            "max_hinge_violation": self.max_hinge_violation,
            "sandwich_lower_ok": self.sandwich_lower_ok,
            "sandwich_upper_ok": self.sandwich_upper_ok,
            "mass_error": self.mass_error,
            "mean_gap": self.mean_gap,
            "tol": self.tol,
            "weighted": self.weighted,
            "passed": self.passed,
        }


def _as_measure(data) -> EmpiricalMeasure:
    if isinstance(data, EmpiricalMeasure):
        return data
    return EmpiricalMeasure.from_sample(data)


def _initial(x, warm):
    m = x.size
    if warm is not None and warm.support == (float(x[0]), float(x[-1])):
        idx = np.searchsorted(x, warm.knots)
        idx = np.clip(idx, 0, m - 1)
        idx = np.unique(idx[x[idx] == warm.knots])
        idx = np.union1d(idx, [0, m - 1]).astype(int)
        return idx, np.interp(x[idx], warm.knots, warm.values)
    idx = np.array([0, m - 1])
    return idx, np.full(2, -math.log(x[-1] - x[0]))


def fit(data, opts: Optional[FitOptions] = None, **overrides) -> LogConcaveDensity:
    """Log-concave NPMLE of a (weighted) sample.

    Parameters
    ----------
    data : EmpiricalMeasure or array_like
        Sample; raw arrays are converted with
        :meth:`EmpiricalMeasure.from_sample`.
    opts : FitOptions, optional
        Solver settings.  Keyword overrides (``tol``, ``max_iter``,
        ``warm_start``) replace individual fields.

    Returns
    -------
    LogConcaveDensity
        Normalised estimate supported on ``[min(data), max(data)]`` with knots
        at a subset of the data points.

    Raises
    ------
    DegenerateSampleError
        Fewer than two distinct points.
    ConvergenceError
        ``max_iter`` active-set iterations without certification.
    """
    opts = opts or FitOptions()
    if overrides:
        opts = FitOptions(**{**opts.__dict__, **overrides})
    fn = _as_measure(data)
    if fn.size < 2:
        raise DegenerateSampleError("need at least two distinct data points")
    x, w = fn.points, fn.weights
    # Directional derivatives carry a length unit; scaling by the mean spacing
    # puts the stopping rule on the scale of CDF discrepancies.
    add_tol = opts.tol * (x[-1] - x[0]) / (x.size - 1)
    K0, psi0 = _initial(x, opts.warm_start)
    K, psi, converged, it = active_set(
        x, w, K0.astype(np.int64), psi0.astype(float), add_tol, opts.max_iter)
    density = normalize(PWLConcave(x[K], psi + 0.0))
    if not converged:
        report = verify_kkt(density, fn, tol=max(opts.tol, 1e-6))
        raise ConvergenceError(
            f"active-set solver did not converge in {opts.max_iter} iterations",
            density, report, it)
    return density


def _kink_test(t, lo, hi, left):
    # left:  min(x - t, 0);   right: min(t - x, 0)
    if left:
        if t <= lo:
            return PiecewiseLinear([lo, hi], [0.0, 0.0])
        if t >= hi:
            return PiecewiseLinear([lo, hi], [lo - t, hi - t])
        return PiecewiseLinear([lo, t, hi], [lo - t, 0.0, 0.0])
    if t <= lo:
        return PiecewiseLinear([lo, hi], [t - lo, t - hi])
    if t >= hi:
        return PiecewiseLinear([lo, hi], [0.0, 0.0])
    return PiecewiseLinear([lo, t, hi], [0.0, 0.0, t - hi])


def verify_kkt(f: LogConcaveDensity, data, tol: float = 1e-6) -> KktReport:
    """Check the first-order optimality conditions of ``f`` for ``data``.

    Kink directions ``min(x - t, 0)`` and ``min(t - x, 0)`` are tested at every
    data point and knot ``t``; at interior knots of ``f`` the negated
    directions are admissible too and are tested as well.  All integrals are
    evaluated in closed form, independently of the solver.
    """
    fn = _as_measure(data)
    lo, hi = f.support
    pts, w = fn.points, fn.weights
    mass_error = abs(f.total_mass - 1.0)
    weighted = bool(np.ptp(w) > 1e-12 * np.max(w))
    if pts[0] < lo or pts[-1] > hi:
        return KktReport(math.inf, False, False, mass_error, math.nan, tol, weighted)

    ident = PiecewiseLinear([lo, hi], [lo, hi])
    mean_gap = integrate_pwl_against_empirical(ident, fn) - integrate_pwl_against(ident, f)

    interior = set(f.knots[1:-1][np.diff(f.shape.slopes) < 0].tolist())
    worst = -math.inf
    for t in np.union1d(pts, f.knots):
        for left in (True, False):
            g = _kink_test(float(t), lo, hi, left)
            gap = integrate_pwl_against_empirical(g, fn) - integrate_pwl_against(g, f)
            worst = max(worst, gap)
            if t in interior:
                worst = max(worst, -gap)

    fhat = np.asarray(cdf(f, f.knots))
    upper = np.asarray(fn.cdf(f.knots))
    at = np.searchsorted(pts, f.knots)
    at = np.clip(at, 0, pts.size - 1)
    point_mass = np.where(pts[at] == f.knots, w[at], 0.0)
    lower = upper - point_mass
    return KktReport(
        max_hinge_violation=float(max(worst, 0.0)),
        sandwich_lower_ok=bool(np.all(fhat >= lower - tol)),
        sandwich_upper_ok=bool(np.all(fhat <= upper + tol)),
        mass_error=float(mass_error),
        mean_gap=float(mean_gap),
        tol=float(tol),
        weighted=weighted,
    )
