"""Pointwise summaries of a posterior ensemble."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pwl import LogConcaveDensity

__all__ = [
    "DEFAULT_GRID_SIZE",
    "BandTable",
    "default_grid",
    "evaluate_ensemble",
    "pointwise_band",
    "knot_report",
    "ensemble_spread",
]

DEFAULT_GRID_SIZE = 512


@dataclass(frozen=True)
class BandTable:
    grid: np.ndarray
    lower: np.ndarray
    mean: np.ndarray
    upper: np.ndarray
    scale: str = "density"
    alpha: float = 0.1

    def rows(self):
        return zip(self.grid, self.lower, self.mean, self.upper)


def default_grid(support, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """``size`` equally spaced points strictly inside ``support``."""
    lo, hi = support
    return np.linspace(lo, hi, size + 2)[1:-1]


def evaluate_ensemble(fits, grid, scale: str = "density") -> np.ndarray:
    """``(B, len(grid))`` matrix of fitted values."""
    if scale not in ("density", "log"):
        raise ValueError("scale must be 'density' or 'log'")
    vals = np.array([f.logpdf(grid) for f in fits], dtype=float).reshape(len(fits), -1)
    if scale == "density":
        with np.errstate(under="ignore"):
            vals = np.exp(vals)
    return vals


def _fits_of(ens):
    fits = getattr(ens, "fits", ens)
    return list(fits)


def pointwise_band(ens, grid=None, alpha: float = 0.1, scale: str = "density") -> BandTable:
    """Equal-tailed pointwise band and ensemble mean.

    Quantiles are the linear interpolation of order statistics (Hyndman-Fan
    type 7): for sorted values ``v_0 <= ... <= v_{B-1}`` and level ``p``,
    ``h = (B - 1) p`` and ``Q = v_floor(h) + (h - floor(h)) (v_ceil(h) - v_floor(h))``.
    """
    fits = _fits_of(ens)
    if not fits:
        raise ValueError("empty ensemble")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    lo = max(f.support[0] for f in fits)
    hi = min(f.support[1] for f in fits)
    grid = default_grid((lo, hi)) if grid is None else np.asarray(grid, dtype=float).reshape(-1)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonempty and strictly increasing")
    if grid[0] < lo or grid[-1] > hi:
        raise ValueError("grid leaves the common support of the ensemble")
    vals = evaluate_ensemble(fits, grid, scale)
    lower = np.quantile(vals, alpha / 2.0, axis=0, method="linear")
    upper = np.quantile(vals, 1.0 - alpha / 2.0, axis=0, method="linear")
    mean = vals.mean(axis=0)
    # The mean of B equal floats can differ from them by an ulp.
    mean = np.clip(mean, vals.min(axis=0), vals.max(axis=0))
    return BandTable(grid, lower, mean, upper, scale, alpha)


def knot_report(f: LogConcaveDensity, tol: float = 0.0):
    """Endpoints and interior knots where the slope strictly drops.

    Returns a list of ``(knot, log-density)`` pairs.
    """
    t, y = f.knots, f.values
    slopes = np.diff(y) / np.diff(t)
    interior = np.nonzero(np.diff(slopes) < -tol)[0] + 1
    keep = np.concatenate(([0], interior, [t.size - 1]))
    return [(float(t[i]), float(y[i])) for i in keep]


def ensemble_spread(ens, alpha: float = 0.1, grid=None) -> float:
    """Mean band width (density scale) over the default grid."""
    band = pointwise_band(ens, grid, alpha, "density")
    return float(np.mean(band.upper - band.lower))
