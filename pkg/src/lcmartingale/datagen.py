"""Synthetic samples from the log-concave families used in the simulations.

All generators draw from an :class:`~lcmartingale.sampler.RngStream`, so a
sample is a pure function of ``(distribution, n, seed)``.

Gamma variates use the Marsaglia-Tsang squeeze/rejection method for
``shape >= 1`` (boosted by ``U**(1/shape)`` for ``shape < 1``).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .sampler import RngStream, derive_stream

__all__ = ["DistSpec", "parse_dist", "simulate", "DATA_STREAM_ID"]

#: Stream id reserved for data generation; chains use ids 1..B.
DATA_STREAM_ID = 0

_ARITY = {"normal": 2, "exponential": 1, "laplace": 2, "gamma": 2}
_PATTERN = re.compile(r"^\s*([a-z]+)\s*\(([^()]*)\)\s*$")


@dataclass(frozen=True)
class DistSpec:
    name: str
    params: tuple

    def __str__(self):
        return f"{self.name}({','.join(repr(p) for p in self.params)})"


def parse_dist(text: str) -> DistSpec:
    """Parse ``normal(mu,sigma)``, ``exponential(rate)``, ``laplace(mu,b)`` or
    ``gamma(shape,scale)``."""
    m = _PATTERN.match(text.lower())
    if not m:
        raise ValueError(f"cannot parse distribution {text!r}")
    name, body = m.group(1), m.group(2)
    if name not in _ARITY:
        raise ValueError(f"unknown distribution {name!r}")
    try:
        params = tuple(float(p) for p in body.split(",")) if body.strip() else ()
    except ValueError as err:
        raise ValueError(f"bad parameters in {text!r}") from err
    if len(params) != _ARITY[name]:
        raise ValueError(f"{name} takes {_ARITY[name]} parameter(s)")
    if not all(math.isfinite(p) for p in params):
        raise ValueError("parameters must be finite")
    # location parameters are free; every other parameter must be positive
    positive = params[1:] if name in ("normal", "laplace") else params
    if not all(p > 0 for p in positive):
        raise ValueError(f"invalid parameters for {name}: {params}")
    return DistSpec(name, params)


def _gamma(rng: RngStream, shape: float, n: int) -> np.ndarray:
    boost = shape < 1.0
    a = shape + 1.0 if boost else shape
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(n)
    for i in range(n):
        while True:
            x = float(rng.normal())
            v = (1.0 + c * x) ** 3
            if v <= 0.0:
                continue
            u = float(rng.uniform())
            if u < 1.0 - 0.0331 * x**4 or math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                out[i] = d * v
                break
        if boost:
            out[i] *= float(rng.uniform()) ** (1.0 / shape)
    return out


def simulate(dist, n: int, seed: int) -> np.ndarray:
    """``n`` draws from ``dist`` (a :class:`DistSpec` or its text form)."""
    spec = parse_dist(dist) if isinstance(dist, str) else dist
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = derive_stream(seed, DATA_STREAM_ID)
    p = spec.params
    if spec.name == "normal":
        return p[0] + p[1] * rng.normal(n)
    if spec.name == "exponential":
        # u = 0 maps to exactly 0, outside the open support; redraw it.
        x = -np.log1p(-rng.uniform(n)) / p[0]
        while np.any(x <= 0):
            bad = x <= 0
            x[bad] = -np.log1p(-rng.uniform(int(bad.sum()))) / p[0]
        return x
    if spec.name == "laplace":
        u = rng.uniform(n) - 0.5
        return p[0] - p[1] * np.sign(u) * np.log1p(-2.0 * np.abs(u))
    return p[1] * _gamma(rng, p[0], n)
