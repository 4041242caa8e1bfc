"""
Finite-size scaling estimators.
===============================

Monte Carlo estimators for rectangle crossing probabilities, the
correlation length (smallest box whose square-crossing probability
reaches a target), near-critical thresholds obtained by inverting the
correlation length, a multiscale threshold ladder driven by iterated
logarithms, and the origin-to-boundary reach probability.

Every monotone-in-p quantity is evaluated with shared weight streams
across p values, so monotonicity holds per sample and bisection
searches are deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Optional

import numpy as np

from . import _kernels
from .connectivity import RegionGraph, region_graph
from .lattice import Region, box, rectangle
from .weights import WeightField

# ------------------------------------------------------------------ intervals

def wilson_interval(successes: int, trials: int,
                    confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes {successes} outside [0, {trials}]")
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    phat = successes / trials
    denom = 1 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / trials
                                   + z * z / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class PointEstimate:
    """A Monte Carlo frequency with its confidence interval."""

    value: float
    ci_lo: float
    ci_hi: float
    successes: int
    trials: int


def _point(successes: int, trials: int, confidence: float) -> PointEstimate:
    lo, hi = wilson_interval(successes, trials, confidence)
    return PointEstimate(successes / trials, lo, hi, successes, trials)


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class EstimatorConfig:
    """Shared knobs for the search-based estimators.

    epsilon is the crossing tolerance: the correlation length at p is
    the smallest n whose square-crossing probability reaches
    1 - epsilon.  c_star rescales the ladder's length targets and
    iterate_floor is where the iterated base-2 logarithm stops.
    """

    epsilon: float = 0.02
    trials: int = 2000
    confidence: float = 0.95
    c_star: float = 1.0
    seed: int = 7
    max_n: int = 256
    trial_cap: int = 16000
    iterate_floor: float = 2.0
    p_tol: float = 1e-3

    def __post_init__(self):
        if not 0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must be in (0, 1/2), got {self.epsilon}")
        if self.trials < 100:
            raise ValueError(f"need at least 100 trials, got {self.trials}")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")
        if self.c_star <= 0:
            raise ValueError("c_star must be positive")
        if self.max_n < 1:
            raise ValueError("max_n must be at least 1")
        if self.trial_cap < self.trials:
            raise ValueError("trial_cap must be at least trials")
        if self.iterate_floor < 1:
            raise ValueError("iterate_floor must be at least 1")
        if self.p_tol <= 0:
            raise ValueError("p_tol must be positive")


# ------------------------------------------------------- Monte Carlo plumbing

def _crossing_hits(g: RegionGraph, x0: int, x1: int, p: float,
                   seed: int, t0: int, t1: int) -> int:
    """Count trials in [t0, t1) with an open left-right crossing."""
    keys = g.edge_keys
    left = g.xs == x0
    right = g.xs == x1
    hits = 0
    for t in range(t0, t1):
        taus = WeightField(seed, t).weights_for_keys(keys)
        raw = _kernels.label_components(g.n_sites, g.edge_a, g.edge_b,
                                        (taus < p).view(np.uint8))
        if np.intersect1d(raw[left], raw[right]).size:
            hits += 1
    return hits


def _reach_hits(g: RegionGraph, origin_idx: int, p: float,
                seed: int, t0: int, t1: int) -> int:
    """Count trials in [t0, t1) where the origin reaches the outer ring."""
    keys = g.edge_keys
    outer = g.outer_mask
    hits = 0
    for t in range(t0, t1):
        taus = WeightField(seed, t).weights_for_keys(keys)
        raw = _kernels.label_components(g.n_sites, g.edge_a, g.edge_b,
                                        (taus < p).view(np.uint8))
        if np.any(raw[outer] == raw[origin_idx]):
            hits += 1
    return hits


def estimate_sigma(n: int, m: int, p: float, trials: int = 2000,
                   seed: int = 0, confidence: float = 0.95) -> PointEstimate:
    """Horizontal-crossing probability of the site rectangle [0,n] x [0,m]."""
    if n < 1 or m < 1:
        raise ValueError(f"rectangle sides must be at least 1, got {n}x{m}")
    if not 0 <= p <= 1:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if trials < 1:
        raise ValueError("trials must be positive")
    g = region_graph(rectangle(0, n, 0, m))
    hits = _crossing_hits(g, 0, n, p, seed, 0, trials)
    return _point(hits, trials, confidence)


def estimate_pi(n: int, trials: int = 2000, seed: int = 0, p: float = 0.5,
                confidence: float = 0.95) -> PointEstimate:
    """Probability that the origin reaches the boundary of B(n) at level p."""
    if n < 1:
        raise ValueError(f"box radius must be at least 1, got {n}")
    if not 0 <= p <= 1:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if trials < 1:
        raise ValueError("trials must be positive")
    g = region_graph(box((0, 0), n))
    hits = _reach_hits(g, g.index[(0, 0)], p, seed, 0, trials)
    return _point(hits, trials, confidence)


def estimate_onearm(p: float, n: int, trials: int = 2000,
                    seed: int = 0, confidence: float = 0.95) -> PointEstimate:
    """Reach probability at an arbitrary threshold (argument order: p first)."""
    return estimate_pi(n, trials=trials, seed=seed, p=p, confidence=confidence)


# ------------------------------------------------------- correlation length

@dataclass(frozen=True)
class CorrelationLength:
    """Outcome of the smallest-crossing-box search.

    status is "ok" when every consulted scale was classified cleanly,
    "exceeds_cap" when no scale up to max_n passed, and
    "boundary_uncertain" when some scale could not be classified even
    at the escalated trial budget (the reported n is then the search's
    pessimistic answer).  evaluations records (n, hits, trials,
    verdict) for each scale consulted, in order.
    """

    n: Optional[int]
    status: str
    evaluations: tuple = ()


def _square_verdict(n: int, p: float, target: float,
                    cfg: EstimatorConfig) -> tuple[str, int, int]:
    """Classify sigma(n, n, p) against target by CI exclusion.

    Trials double until the Wilson interval excludes the target or the
    budget cap is reached.  Streams extend cumulatively, so a rerun
    with the same config reproduces the decision path exactly.
    """
    g = region_graph(rectangle(0, n, 0, n))
    trials = cfg.trials
    hits = _crossing_hits(g, 0, n, p, cfg.seed, 0, trials)
    while True:
        lo, hi = wilson_interval(hits, trials, cfg.confidence)
        if lo > target:
            return "pass", hits, trials
        if hi < target:
            return "fail", hits, trials
        if trials >= cfg.trial_cap:
            return "uncertain", hits, trials
        more = min(2 * trials, cfg.trial_cap)
        hits += _crossing_hits(g, 0, n, p, cfg.seed, trials, more)
        trials = more


def estimate_L(p: float, epsilon: Optional[float] = None,
               config: Optional[EstimatorConfig] = None,
               max_n: Optional[int] = None) -> CorrelationLength:
    """Smallest n whose square-crossing probability at p reaches 1 - epsilon.

    Doubles n until a scale passes, then bisects down to the minimum.
    Below criticality no scale ever passes; the max_n cap turns that
    divergence into an "exceeds_cap" result.
    """
    cfg = config if config is not None else EstimatorConfig()
    eps = cfg.epsilon if epsilon is None else epsilon
    cap = cfg.max_n if max_n is None else max_n
    if not 0 < eps < 0.5:
        raise ValueError(f"epsilon must be in (0, 1/2), got {eps}")
    if not 0 <= p <= 1:
        raise ValueError(f"p must be in [0, 1], got {p}")
    if cap < 1:
        raise ValueError("cap must be at least 1")
    target = 1.0 - eps

    evals = []

    def decide(nn: int) -> str:
        verdict, hits, trials = _square_verdict(nn, p, target, cfg)
        evals.append((nn, hits, trials, verdict))
        return verdict

    # doubling phase
    probe = 1
    last_fail = 0
    first_pass = None
    while True:
        nn = min(probe, cap)
        if decide(nn) == "pass":
            first_pass = nn
            break
        last_fail = nn
        if nn == cap:
            return CorrelationLength(None, "exceeds_cap", tuple(evals))
        probe *= 2

    # bisection phase on (last_fail, first_pass]
    lo, hi = last_fail, first_pass
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if decide(mid) == "pass":
            hi = mid
        else:
            lo = mid
    status = ("boundary_uncertain"
              if any(v[3] == "uncertain" for v in evals) else "ok")
    return CorrelationLength(hi, status, tuple(evals))


# ------------------------------------------------- near-critical thresholds

def estimate_pn(n: int, config: Optional[EstimatorConfig] = None) -> float:
    """Largest p at which the correlation length still exceeds n.

    Bisects p with shared weight streams, so the length-exceeds-n
    predicate is a deterministic nonincreasing function of p and the
    bisection is exact to p_tol.
    """
    cfg = config if config is not None else EstimatorConfig()
    if n < 1:
        raise ValueError(f"scale must be at least 1, got {n}")
    lo, hi = 0.5, 1.0
    while hi - lo > cfg.p_tol:
        mid = (lo + hi) / 2
        if estimate_L(mid, cfg.epsilon, cfg, max_n=n).status == "exceeds_cap":
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


# -------------------------------------------------------------- the ladder

def iterated_log(l: float, j: int) -> float:
    """j-fold iterated base-2 logarithm."""
    x = float(l)
    for _ in range(j):
        if x <= 0:
            raise ValueError(f"iterate {j} of {l} is undefined")
        x = math.log2(x)
    return x


def log_star(l: float, iterate_floor: float = 2.0) -> int:
    """Number of base-2 log applications taking l down to the floor."""
    if l <= 1:
        raise ValueError(f"log_star needs l > 1, got {l}")
    if iterate_floor < 1:
        raise ValueError("iterate_floor must be at least 1")
    x = float(l)
    j = 0
    while True:
        x = math.log2(x)
        j += 1
        if x <= iterate_floor:
            return j


@dataclass(frozen=True)
class LadderResult:
    """Thresholds p(j) interpolating from 1 down to the critical point.

    p_values[j] for j in 0..log_star: p(0) = 1, interior rungs are the
    smallest p whose correlation length fits under l divided by the
    j-th iterated log (scaled by c_star), and every rung at or past
    log_star is the critical value 1/2.
    """

    l: int
    log_star: int
    p_values: tuple


def ladder(l: int, config: Optional[EstimatorConfig] = None) -> LadderResult:
    cfg = config if config is not None else EstimatorConfig()
    if l <= 10:
        raise ValueError(f"ladder needs l > 10, got {l}")
    star = log_star(l, cfg.iterate_floor)
    rungs = [1.0]
    for j in range(1, star):
        target = l / (cfg.c_star * iterated_log(l, j))
        rungs.append(_threshold_for_length(target, cfg))
    rungs.append(0.5)
    return LadderResult(l=l, log_star=star, p_values=tuple(rungs))


def _threshold_for_length(target: float, cfg: EstimatorConfig) -> float:
    """Smallest p whose correlation length is at most target."""
    cap = int(target)
    if cap < 1:
        return 1.0
    cap = min(cap, cfg.max_n)
    lo, hi = 0.5, 1.0
    while hi - lo > cfg.p_tol:
        mid = (lo + hi) / 2
        if estimate_L(mid, cfg.epsilon, cfg, max_n=cap).status == "exceeds_cap":
            lo = mid
        else:
            hi = mid
    return hi
