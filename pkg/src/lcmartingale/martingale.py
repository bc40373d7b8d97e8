"""Predictive resampling chains driven by the log-concave NPMLE.

Each chain starts from the NPMLE of the observed sample, draws the next
observation from the current fit, refits, and repeats.  The terminal fits of
``B`` independent chains form the posterior ensemble.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .npmle import ConvergenceError, FitOptions, fit
from .pwl import (
    EmpiricalMeasure,
    LogConcaveDensity,
    PiecewiseLinear,
    integrate_pwl_against,
    integrate_pwl_against_empirical,
    sup_diff,
)
from .sampler import RngStream, derive_stream, draw

__all__ = [
    "StopRule",
    "ChainState",
    "ChainDiagnostics",
    "PosteriorEnsemble",
    "PredictiveCheck",
    "FAILURE_FLAG_RATE",
    "initial_state",
    "step",
    "run_chain",
    "run_ensemble",
    "submartingale_gap",
    "predictive_identity_check",
]

#: Chains whose solver-failure rate exceeds this are flagged in the ensemble.
FAILURE_FLAG_RATE = 0.01


@dataclass(frozen=True)
class StopRule:
    """When a chain stops.

    ``M`` and ``M_max`` are terminal *total* sample sizes, so a chain started
    from ``N`` observations appends ``M - N`` draws.
    """

    mode: str = "fixed"
    M: Optional[int] = None
    epsilon: float = 1e-3
    window: int = 5
    M_max: Optional[int] = None

    def __post_init__(self):
        if self.mode == "fixed":
            if self.M is None or self.M < 1:
                raise ValueError("fixed mode needs M >= 1")
        elif self.mode == "adaptive":
            if not self.epsilon > 0 or self.window < 1:
                raise ValueError("adaptive mode needs epsilon > 0 and window >= 1")
            if self.M_max is None or self.M_max < self.window:
                raise ValueError("adaptive mode needs M_max >= window")
        else:
            raise ValueError(f"unknown stop mode {self.mode!r}")

    @classmethod
    def fixed(cls, M: int) -> "StopRule":
        return cls("fixed", M=int(M))

    @classmethod
    def adaptive(cls, epsilon: float, window: int, M_max: int) -> "StopRule":
        return cls("adaptive", epsilon=float(epsilon), window=int(window), M_max=int(M_max))

    @property
    def horizon(self) -> int:
        return self.M if self.mode == "fixed" else self.M_max

    def as_dict(self) -> dict:
        if self.mode == "fixed":
            return {"mode": "fixed", "M": self.M}
        return {"mode": "adaptive", "epsilon": self.epsilon, "window": self.window,
                "M_max": self.M_max}


@dataclass(frozen=True, eq=False)
class ChainState:
    """Sample multiset, current fit and stream of one chain.

    ``points`` are strictly increasing and ``counts`` their integer
    multiplicities; the empirical measure gives each point ``count / n``.
    """

    points: np.ndarray
    counts: np.ndarray
    fit: LogConcaveDensity
    rng: RngStream
    fit_options: FitOptions = field(default_factory=FitOptions)
    solver_failures: int = 0
    last_sup_diff: float = math.nan

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def sample(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.points, self.counts / self.counts.sum())


@dataclass
class ChainDiagnostics:
    start_n: int
    stopped_at: int
    sup_diffs: np.ndarray
    solver_failures: int = 0

    @property
    def steps(self) -> int:
        return self.stopped_at - self.start_n

    @property
    def terminal_diff(self) -> float:
        return float(self.sup_diffs[-1]) if self.sup_diffs.size else math.nan

    @property
    def flagged(self) -> bool:
        return self.steps > 0 and self.solver_failures > FAILURE_FLAG_RATE * self.steps


@dataclass
class PosteriorEnsemble:
    """Terminal fits of ``B`` chains, ordered by stream id ``1..B``."""

    fits: list
    diagnostics: list
    base_seed: int
    rule: StopRule
    initial_fit: LogConcaveDensity
    stream_ids: list = None

    def __post_init__(self):
        if len(self.fits) != len(self.diagnostics):
            raise ValueError("fits and diagnostics must have equal length")
        if self.stream_ids is None:
            self.stream_ids = list(range(1, len(self.fits) + 1))

    @property
    def B(self) -> int:
        return len(self.fits)

    @property
    def support(self) -> tuple[float, float]:
        return self.initial_fit.support

    @property
    def flagged_chains(self) -> list:
        return [sid for sid, d in zip(self.stream_ids, self.diagnostics) if d.flagged]


def _counts_of(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, EmpiricalMeasure):
        counts = data.weights / data.weights.min()
        rounded = np.rint(counts)
        if np.max(np.abs(counts - rounded)) > 1e-9:
            raise ValueError("chains need an unweighted sample (integer multiplicities)")
        return np.array(data.points), rounded.astype(np.int64)
    x = np.asarray(data, dtype=float).reshape(-1)
    pts, counts = np.unique(x, return_counts=True)
    return pts, counts.astype(np.int64)


def initial_state(data, rng: RngStream, fit_options: Optional[FitOptions] = None,
                  initial_fit: Optional[LogConcaveDensity] = None) -> ChainState:
    """Chain state at ``n = N``: the sample and its NPMLE."""
    opts = fit_options or FitOptions()
    pts, counts = _counts_of(data)
    if initial_fit is None:
        initial_fit = fit(EmpiricalMeasure(pts, counts / counts.sum()), opts)
    return ChainState(pts, counts, initial_fit, rng, opts)


def step(state: ChainState) -> ChainState:
    """Append one draw from the current fit and refit (warm-started)."""
    x_new = float(draw(state.fit, state.rng))
    pts, counts = state.points, state.counts
    i = int(np.searchsorted(pts, x_new))
    if i < pts.size and pts[i] == x_new:
        counts = counts.copy()
        counts[i] += 1
    else:
        pts = np.insert(pts, i, x_new)
        counts = np.insert(counts, i, 1)
    sample = EmpiricalMeasure(pts, counts / counts.sum())
    failures = state.solver_failures
    opts = replace(state.fit_options, warm_start=state.fit.shape)
    try:
        new_fit = fit(sample, opts)
    except ConvergenceError as err:
        new_fit = err.density
        failures += 1
    d = sup_diff(new_fit.shape, state.fit.shape)
    return ChainState(pts, counts, new_fit, state.rng, state.fit_options, failures, d)


def _should_stop(rule: StopRule, n: int, diffs: list) -> bool:
    if n >= rule.horizon:
        return True
    if rule.mode == "adaptive" and len(diffs) >= rule.window:
        return max(diffs[-rule.window:]) <= rule.epsilon
    return False


def run_chain(data, rule: StopRule, rng: RngStream,
              fit_options: Optional[FitOptions] = None,
              initial_fit: Optional[LogConcaveDensity] = None):
    """Run one chain to its stopping point.

    Returns
    -------
    (LogConcaveDensity, ChainDiagnostics)
    """
    state = initial_state(data, rng, fit_options, initial_fit)
    start = state.n
    if rule.horizon < start:
        raise ValueError(f"stop horizon {rule.horizon} is below the sample size {start}")
    diffs = []
    while not _should_stop(rule, state.n, diffs):
        state = step(state)
        diffs.append(state.last_sup_diff)
    diag = ChainDiagnostics(start, state.n, np.array(diffs, dtype=float),
                            state.solver_failures)
    return state.fit, diag


def _chain_job(args):
    data, rule, base_seed, stream_id, fit_options, initial_fit = args
    return run_chain(data, rule, derive_stream(base_seed, stream_id), fit_options, initial_fit)


def run_ensemble(data, rule: StopRule, B: int, base_seed: int, parallelism: int = 1,
                 fit_options: Optional[FitOptions] = None) -> PosteriorEnsemble:
    """Run ``B`` chains; chain ``l`` uses ``derive_stream(base_seed, l)``.

    Chains run in up to ``parallelism`` worker processes.  The result does not
    depend on ``parallelism``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    pts, counts = _counts_of(data)
    measure = EmpiricalMeasure(pts, counts / counts.sum())
    opts = fit_options or FitOptions()
    p0 = fit(measure, opts)
    jobs = [(measure, rule, base_seed, sid, opts, p0) for sid in range(1, B + 1)]
    if parallelism == 1 or B == 1:
        results = [_chain_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(parallelism, B)) as pool:
            results = list(pool.map(_chain_job, jobs))
    fits = [r[0] for r in results]
    diags = [r[1] for r in results]
    return PosteriorEnsemble(fits, diags, int(base_seed), rule, p0)


def submartingale_gap(g: PiecewiseLinear, state: ChainState) -> float:
    """``int g dF_hat_n - int g dF_n``; nonnegative for concave ``g``."""
    return integrate_pwl_against(g, state.fit) - integrate_pwl_against_empirical(g, state.sample)


class PredictiveCheck(NamedTuple):
    deviation: float
    band: float
    monte_carlo: float
    closed_form: float

    @property
    def within_band(self) -> bool:
        return self.deviation <= self.band


def predictive_identity_check(g: PiecewiseLinear, state: ChainState, trials: int,
                              rng: Optional[RngStream] = None) -> PredictiveCheck:
    """Compare a Monte Carlo estimate of ``E[int g dF_{n+1} | X_1:n]`` with
    ``n/(n+1) int g dF_n + 1/(n+1) int g dF_hat_n``.

    ``band`` is ``4 * sd / sqrt(trials)`` of the Monte Carlo terms.  Uses a
    dedicated stream (default ``derive_stream(0, 0)``) so the chain's own
    stream is untouched.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = rng if rng is not None else derive_stream(0, 0)
    n = state.n
    emp = integrate_pwl_against_empirical(g, state.sample)
    model = integrate_pwl_against(g, state.fit)
    closed = n / (n + 1) * emp + model / (n + 1)
    gx = np.interp(draw(state.fit, rng, size=trials), g.knots, g.values)
    terms = (n * emp + gx) / (n + 1)
    mc = float(np.mean(terms))
    # Same quantity as |mc - closed|, written to avoid cancellation.
    deviation = abs(float(np.mean(gx)) - model) / (n + 1)
    sd = float(np.std(terms, ddof=1)) if trials > 1 else 0.0
    return PredictiveCheck(deviation, 4.0 * sd / math.sqrt(trials), mc, closed)
