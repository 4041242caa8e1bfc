"""Monte Carlo experiment drivers.

Each ``exp_*`` operation assembles the growth engine and the detectors
into one tabular comparison and returns an :class:`ExperimentResult`
holding rows, discard accounting, and enough metadata to reproduce the
run.  Trial ``t`` always draws its weights from stream ``t`` of a
seed derived from the experiment's master seed, so any single row can
be re-derived in isolation.

The chunked runner tallies integer counts per fixed-size chunk and
merges them in chunk order, which makes results byte-identical across
worker counts and lets an interrupted run resume from a checkpoint.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, replace
from statistics import NormalDist
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels, __version__
from .connectivity import (_defect_distance_raw, disconnecting_edges,
                           four_arm, max_disjoint_arms, region_graph)
from .estimators import (EstimatorConfig, estimate_pi, estimate_pn,
                         wilson_interval)
from .invasion import decompose_ponds, pond_open_clusters, run_invasion
from .lattice import Edge, Orientation, Site, box, norm, region_sites
from .weights import Config, WeightField


def _subseed(seed: int, tag: str) -> int:
    """Independent 64-bit seed for a named sub-run of an experiment."""
    digest = hashlib.blake2b(f"{seed}:{tag}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _z(confidence: float) -> float:
    return NormalDist().inv_cdf(0.5 + confidence / 2.0)


def _prop(hits: int, trials: int, confidence: float):
    """(p, lo, hi) with a Wilson interval; NaNs when there are no trials."""
    if trials == 0:
        return math.nan, math.nan, math.nan
    lo, hi = wilson_interval(hits, trials, confidence)
    return hits / trials, lo, hi


def _ratio_ci(h1: int, t1: int, h2: int, t2: int, confidence: float):
    """Ratio of two binomial proportions with a log-normal interval.

    Returns (ratio, lo, hi).  A zero numerator gives (0, 0, nan); a zero
    denominator or empty cell gives NaNs throughout.
    """
    if min(t1, t2) == 0 or h2 == 0:
        return math.nan, math.nan, math.nan
    p1, p2 = h1 / t1, h2 / t2
    ratio = p1 / p2
    if h1 == 0:
        return 0.0, 0.0, math.nan
    se = math.sqrt((1.0 - p1) / h1 + (1.0 - p2) / h2)
    half = _z(confidence) * se
    return ratio, ratio * math.exp(-half), ratio * math.exp(half)


# ---------------------------------------------------------------------------
# chunked deterministic runner


@dataclass(frozen=True)
class RunnerOptions:
    """Execution knobs that must never change the numbers."""

    n_workers: int = 1
    chunk_size: int = 512
    checkpoint_path: Optional[str] = None
    checkpoint_every: int = 4

    def __post_init__(self):
        if self.n_workers < 1:
            raise ValueError(f"n_workers must be >= 1, got {self.n_workers}")
        if self.chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.checkpoint_every < 1:
            raise ValueError(
                f"checkpoint_every must be >= 1, got {self.checkpoint_every}")


def _plain(obj):
    """Round-trip through JSON so saved and live signatures compare equal."""
    return json.loads(json.dumps(obj, sort_keys=True))


def _persist_checkpoint(path: str, signature, done: dict):
    payload = {
        "signature": signature,
        "chunks": {str(ci): dict(acc) for ci, acc in done.items()},
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def run_chunked(worker: Callable[[int], dict], n_trials: int,
                options: Optional[RunnerOptions] = None,
                signature: Optional[dict] = None) -> Counter:
    """Sum the integer tallies of worker(t) for t in [0, n_trials).

    Trials are grouped into fixed chunks; each chunk's tally is an
    integer Counter keyed only by what the worker returns, and chunks
    merge in index order.  Integer addition commutes, so the total is
    independent of scheduling.  With a checkpoint path, completed
    chunks are persisted and a rerun recomputes only the missing ones;
    the signature guards against resuming somebody else's run.
    """
    opts = options or RunnerOptions()
    if n_trials < 0:
        raise ValueError(f"n_trials must be >= 0, got {n_trials}")
    n_chunks = (n_trials + opts.chunk_size - 1) // opts.chunk_size
    sig = dict(signature or {})
    sig["n_trials"] = n_trials
    sig["chunk_size"] = opts.chunk_size
    sig = _plain(sig)

    done: dict[int, Counter] = {}
    path = opts.checkpoint_path
    if path and os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            saved = json.load(fh)
        if saved.get("signature") != sig:
            raise ValueError(
                f"checkpoint {path} was written by a different run; "
                "delete it or change checkpoint_path")
        for ci, acc in saved.get("chunks", {}).items():
            done[int(ci)] = Counter({k: int(v) for k, v in acc.items()})

    def run_chunk(ci: int):
        lo = ci * opts.chunk_size
        hi = min(lo + opts.chunk_size, n_trials)
        acc = Counter()
        for t in range(lo, hi):
            acc.update(worker(t))
        return ci, acc

    pending = [ci for ci in range(n_chunks) if ci not in done]
    if pending:
        fresh = 0
        with ThreadPoolExecutor(max_workers=opts.n_workers) as pool:
            futures = [pool.submit(run_chunk, ci) for ci in pending]
            for fut in as_completed(futures):
                ci, acc = fut.result()
                done[ci] = acc
                fresh += 1
                if path and fresh % opts.checkpoint_every == 0:
                    _persist_checkpoint(path, sig, done)
        if path:
            _persist_checkpoint(path, sig, done)

    total: Counter = Counter()
    for ci in range(n_chunks):
        total.update(done.get(ci, Counter()))
    return total


def _cell_options(options: Optional[RunnerOptions],
                  tag: str) -> Optional[RunnerOptions]:
    """Per-cell checkpoint path for experiments that run several tallies."""
    if options is None or options.checkpoint_path is None:
        return options
    return replace(options, checkpoint_path=f"{options.checkpoint_path}.{tag}")


# ---------------------------------------------------------------------------
# result container


@dataclass
class ExperimentResult:
    """Tabular outcome of one experiment run."""

    experiment: str
    schema: str
    params: dict
    seed: int
    columns: tuple
    rows: list
    discards: dict
    wall_seconds: float

    def _cell(self, value):
        if isinstance(value, (bool, np.bool_)):
            return int(value)
        if isinstance(value, float):
            return repr(value)
        if isinstance(value, (np.integer,)):
            return int(value)
        if isinstance(value, (np.floating,)):
            return repr(float(value))
        return value

    def csv_bytes(self) -> bytes:
        """The CSV payload; byte-identical for identical numbers."""
        out = io.StringIO()
        out.write(f"# {self.schema}\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([self._cell(row[c]) for c in self.columns])
        return out.getvalue().encode("utf-8")

    def sidecar(self, extra: Optional[dict] = None) -> dict:
        meta = {
            "experiment": self.experiment,
            "schema": self.schema,
            "params": _plain(self.params),
            "seed": self.seed,
            "discards": _plain(self.discards),
            "wall_seconds": self.wall_seconds,
            "version": __version__,
        }
        if extra:
            meta.update(extra)
        return meta

    def write(self, csv_path: str, sidecar_path: Optional[str] = None,
              extra: Optional[dict] = None) -> None:
        """Atomically write the CSV and its JSON sidecar."""
        tmp = f"{csv_path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(self.csv_bytes())
        os.replace(tmp, csv_path)
        side = sidecar_path or f"{os.path.splitext(csv_path)[0]}.json"
        tmp = f"{side}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self.sidecar(extra), fh, sort_keys=True, indent=2)
            fh.write("\n")
        os.replace(tmp, side)


def _critical_config(field: WeightField, g, p_ref: float) -> Config:
    # reuse the graph's cached edge list instead of re-enumerating the region
    return Config(region=g.region, p=p_ref, edges=g.edges,
                  taus=field.weights_for_keys(g.edge_keys))


# ---------------------------------------------------------------------------
# pond radii vs the one-arm benchmark


def exp_pond_radii(k_max: int, n_grid: Sequence[int], trials: int,
                   horizon: int, *, seed: int = 2026, p_ref: float = 0.5,
                   confirm_factor: float = 4.0, confidence: float = 0.95,
                   options: Optional[RunnerOptions] = None) -> ExperimentResult:
    """Tail frequencies of pond radii against the one-arm probability.

    The growth-radius event "outlet k happens at radius >= n" is decided
    per trial by counting confirmed outlets inside radius n: a suffix
    maximum there that fails confirmation is provably not an outlet at
    all (its weight never exceeded the reference threshold, or it closed
    a cycle), so with the horizon headroom the count is exact and no
    trial is wasted.  A candidate that fails only the reach test leaves
    the count uncertain and discards the affected cells; with scales
    capped at horizon/4 this cannot happen, but it is accounted anyway.

    Pond diameters need both bracketing outlets pinned down, so those
    columns carry their own identified-trial denominator.  The one-arm
    benchmark draws the same weight streams as the invasion runs, which
    makes the k = 1 domination by the benchmark hold sample by sample.
    """
    t0 = time.monotonic()
    grid = sorted(int(n) for n in n_grid)
    if not grid or grid[0] < 2:
        raise ValueError(f"scales must be >= 2, got {n_grid}")
    if len(set(grid)) != len(grid):
        raise ValueError(f"duplicate scales in {n_grid}")
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if grid[-1] > horizon // 4:
        raise ValueError(
            f"largest scale {grid[-1]} needs horizon >= {4 * grid[-1]}, "
            f"got {horizon}")

    def worker(t: int) -> dict:
        f = WeightField(seed, t)
        trace = run_invasion(f, exit_radius=horizon)
        dec = decompose_ponds(trace, p_ref=p_ref, confirm_factor=confirm_factor)
        pos = dec.outlet_pos
        conf = dec.confirmed
        # a candidate is fake for sure when its weight stayed at or below
        # the threshold or it closed a cycle; the remainder failed only
        # the reach test and could still be real
        maybe = (dec.outlet_tau > p_ref) & trace.new_mask[pos] & ~conf
        conf_r = dec.r_hat[conf]
        maybe_r = dec.r_hat[maybe]
        out: dict = {}
        for n in grid:
            sure = int(np.count_nonzero(conf_r < n))
            fuzzy = int(np.count_nonzero(maybe_r < n))
            for k in range(1, k_max + 1):
                if sure + fuzzy < k:
                    out[f"rhat{k}_{n}"] = 1
                elif sure < k:
                    out[f"disc{k}_{n}"] = 1
        conf_idx = np.flatnonzero(conf)
        maybe_idx = np.flatnonzero(maybe)
        bxs = trace.edge_b[:, 0]
        bys = trace.edge_b[:, 1]
        for k in range(1, k_max + 1):
            known = (len(conf_idx) >= k
                     and not np.any(maybe_idx < conf_idx[k - 1]))
            if not known:
                out[f"unknown{k}"] = 1
                continue
            out[f"known{k}"] = 1
            lo = int(pos[conf_idx[k - 2]]) if k >= 2 else 0
            hi = int(pos[conf_idx[k - 1]])
            sel = trace.new_mask[lo:hi]
            xs = bxs[lo:hi][sel]
            ys = bys[lo:hi][sel]
            if k == 1:
                xs = np.append(xs, trace.origin[0])
                ys = np.append(ys, trace.origin[1])
            if len(xs) == 0:
                diam = 0
            else:
                diam = max(int(xs.max() - xs.min()), int(ys.max() - ys.min()))
            for n in grid:
                if diam >= n:
                    out[f"rbar{k}_{n}"] = 1
        return out

    sig = {"experiment": "pond_radii", "seed": seed,
           "params": {"k_max": k_max, "n_grid": grid, "horizon": horizon,
                      "p_ref": p_ref, "confirm_factor": confirm_factor}}
    tally = run_chunked(worker, trials, options, sig)

    # shared streams: benchmark trial t sees the same weights as run t
    bench = {n: estimate_pi(n, trials=trials, seed=seed, p=p_ref,
                            confidence=confidence) for n in grid}

    columns = ("k", "n", "rhat_hits", "rhat_trials", "discarded", "rhat_p",
               "rhat_lo", "rhat_hi", "rbar_hits", "rbar_known", "rbar_p",
               "rbar_lo", "rbar_hi", "bench_hits", "bench_trials", "bench_p",
               "ratio", "ratio_lo", "ratio_hi", "underpowered")
    rows = []
    n_discarded = 0
    for k in range(1, k_max + 1):
        known = int(tally[f"known{k}"])
        for n in grid:
            disc = int(tally[f"disc{k}_{n}"])
            eff = trials - disc
            n_discarded += disc
            rh = int(tally[f"rhat{k}_{n}"])
            rb = int(tally[f"rbar{k}_{n}"])
            p, lo_, hi_ = _prop(rh, eff, confidence)
            pb, blo, bhi = _prop(rb, known, confidence)
            b = bench[n]
            scale = math.log2(n) ** (k - 1)
            ratio, rlo, rhi = _ratio_ci(rh, eff, b.successes, b.trials,
                                        confidence)
            rows.append({
                "k": k, "n": n, "rhat_hits": rh, "rhat_trials": eff,
                "discarded": disc,
                "rhat_p": p, "rhat_lo": lo_, "rhat_hi": hi_,
                "rbar_hits": rb, "rbar_known": known, "rbar_p": pb,
                "rbar_lo": blo, "rbar_hi": bhi,
                "bench_hits": b.successes, "bench_trials": b.trials,
                "bench_p": b.value,
                "ratio": ratio / scale, "ratio_lo": rlo / scale,
                "ratio_hi": rhi / scale,
                "underpowered": int(rh < 5 or b.successes < 5),
            })
    discards = {"ambiguous_radius_cells": n_discarded}
    for k in range(1, k_max + 1):
        discards[f"pond_{k}_unidentified"] = int(tally[f"unknown{k}"])
    return ExperimentResult(
        experiment="pond_radii", schema="pondlab.pond_radii.v1",
        params={"k_max": k_max, "n_grid": grid, "trials": trials,
                "horizon": horizon, "p_ref": p_ref,
                "confirm_factor": confirm_factor, "confidence": confidence},
        seed=seed, columns=columns, rows=rows, discards=discards,
        wall_seconds=time.monotonic() - t0)


# ---------------------------------------------------------------------------
# multi-point pond membership vs the critical cluster


def exp_kpoint(points: Optional[Sequence[Site]] = None, trials: int = 1000,
               horizon: int = 64, *, fullbox: Optional[int] = None,
               seed: int = 2026, p_ref: float = 0.5,
               confirm_factor: float = 4.0, confidence: float = 0.95,
               options: Optional[RunnerOptions] = None) -> ExperimentResult:
    """Joint first-pond membership of chosen sites vs their joint
    presence in the origin's open cluster, on shared weights.

    With ``fullbox=r`` the point set is every site of B(r) (kept tiny:
    r <= 3).  Per trial the numerator asks whether all points sit in
    the first confirmed pond; the denominator asks whether all points
    sit in the origin's open cluster on B(horizon).  The cluster is
    contained in the pond sample by sample, so the second event implies
    the first and the ratio is at least one; ``coupled_violations``
    counts per-trial breaches of that implication and must stay zero.
    """
    t0 = time.monotonic()
    if fullbox is not None:
        if not 0 <= fullbox <= 3:
            raise ValueError(
                f"the all-sites mode is feasible only up to 3, got {fullbox}")
        pts = region_sites(box((0, 0), fullbox))
        label = f"fullbox_{fullbox}"
    else:
        pts = [tuple(p) for p in (points or [])]
        label = f"points_{len(pts)}"
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if horizon < 8:
        raise ValueError(f"horizon must be >= 8, got {horizon}")
    for p in pts:
        if norm(p) > horizon // 4:
            raise ValueError(
                f"point {p} lies beyond horizon/4 = {horizon // 4}")

    g = region_graph(box((0, 0), horizon))
    origin_idx = g.index[(0, 0)]
    pt_idx = np.array([g.index[p] for p in pts], dtype=np.int64)

    def worker(t: int) -> dict:
        f = WeightField(seed, t)
        trace = run_invasion(f, exit_radius=horizon)
        dec = decompose_ponds(trace, p_ref=p_ref, confirm_factor=confirm_factor)
        if dec.n_outlets == 0 or not bool(dec.confirmed[0]):
            return {"skipped": 1}
        pond = set(dec.pond_sites(1))
        in_pond = all(p in pond for p in pts)
        taus = f.weights_for_keys(g.edge_keys)
        raw = _kernels.label_components(
            g.n_sites, g.edge_a, g.edge_b, (taus < p_ref).view(np.uint8))
        in_cluster = (bool(np.all(raw[pt_idx] == raw[origin_idx]))
                      if len(pts) else True)
        out = {"counted": 1}
        if in_pond:
            out["pond"] = 1
        if in_cluster:
            out["cluster"] = 1
        if in_cluster and not in_pond:
            out["violation"] = 1
        return out

    sig = {"experiment": "kpoint", "seed": seed,
           "params": {"points": [list(p) for p in pts], "horizon": horizon,
                      "p_ref": p_ref, "confirm_factor": confirm_factor}}
    tally = run_chunked(worker, trials, options, sig)

    counted = int(tally["counted"])
    pond_hits = int(tally["pond"])
    cluster_hits = int(tally["cluster"])
    p_pond, plo, phi = _prop(pond_hits, counted, confidence)
    p_cl, clo, chi = _prop(cluster_hits, counted, confidence)
    ratio, rlo, rhi = _ratio_ci(pond_hits, counted, cluster_hits, counted,
                                confidence)
    columns = ("point_set", "n_points", "counted", "skipped", "pond_hits",
               "pond_p", "pond_lo", "pond_hi", "cluster_hits", "cluster_p",
               "cluster_lo", "cluster_hi", "ratio", "ratio_lo", "ratio_hi",
               "coupled_violations", "underpowered")
    rows = [{
        "point_set": label, "n_points": len(pts), "counted": counted,
        "skipped": int(tally["skipped"]),
        "pond_hits": pond_hits, "pond_p": p_pond, "pond_lo": plo,
        "pond_hi": phi,
        "cluster_hits": cluster_hits, "cluster_p": p_cl, "cluster_lo": clo,
        "cluster_hi": chi,
        "ratio": ratio, "ratio_lo": rlo, "ratio_hi": rhi,
        "coupled_violations": int(tally["violation"]),
        "underpowered": int(pond_hits < 5 or cluster_hits < 5),
    }]
    return ExperimentResult(
        experiment="kpoint", schema="pondlab.kpoint.v1",
        params={"points": [list(p) for p in pts], "fullbox": fullbox,
                "trials": trials, "horizon": horizon, "p_ref": p_ref,
                "confirm_factor": confirm_factor, "confidence": confidence},
        seed=seed, columns=columns, rows=rows,
        discards={"unconfirmed_first_outlet": int(tally["skipped"])},
        wall_seconds=time.monotonic() - t0)


# ---------------------------------------------------------------------------
# many large open clusters inside one pond


def exp_pond_clusters(K: int, N: int, trials: int, horizon: int, *,
                      m_max: int = 3, seed: int = 2026, p_ref: float = 0.5,
                      confirm_factor: float = 4.0, confidence: float = 0.95,
                      options: Optional[RunnerOptions] = None
                      ) -> ExperimentResult:
    """Frequency of a pond holding >= K open clusters of diameter >= N.

    The headline row conditions pond 1 on being confirmed with growth
    radius >= N; later rows report the unconditioned frequency for
    ponds m = 1..m_max among trials where pond m is confirmed.
    """
    t0 = time.monotonic()
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if N < 0:
        raise ValueError(f"N must be >= 0, got {N}")
    if m_max < 1:
        raise ValueError(f"m_max must be >= 1, got {m_max}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if N > max(1, horizon // 8):
        raise ValueError(f"N = {N} needs horizon >= {8 * N}, got {horizon}")

    def worker(t: int) -> dict:
        f = WeightField(seed, t)
        trace = run_invasion(f, exit_radius=horizon)
        dec = decompose_ponds(trace, p_ref=p_ref, confirm_factor=confirm_factor)
        out: dict = {}
        big = {}
        for m in range(1, m_max + 1):
            if m > dec.n_outlets or not bool(dec.confirmed[m - 1]):
                continue
            out[f"conf{m}"] = 1
            clusters = pond_open_clusters(dec, m)
            big[m] = sum(1 for c in clusters if c.diameter >= N)
            if big[m] >= K:
                out[f"many{m}"] = 1
        if 1 in big and int(dec.r_hat[0]) >= N:
            out["cond"] = 1
            if big[1] >= K:
                out["hit"] = 1
        if "conf1" not in out:
            out["skip1"] = 1
        return out

    sig = {"experiment": "pond_clusters", "seed": seed,
           "params": {"K": K, "N": N, "m_max": m_max, "horizon": horizon,
                      "p_ref": p_ref, "confirm_factor": confirm_factor}}
    tally = run_chunked(worker, trials, options, sig)

    columns = ("m", "K", "N", "conditioned", "cond_trials", "hits", "p",
               "lo", "hi", "underpowered")
    cond = int(tally["cond"])
    hit = int(tally["hit"])
    p, lo_, hi_ = _prop(hit, cond, confidence)
    rows = [{"m": 1, "K": K, "N": N, "conditioned": 1, "cond_trials": cond,
             "hits": hit, "p": p, "lo": lo_, "hi": hi_,
             "underpowered": int(cond < 50)}]
    for m in range(1, m_max + 1):
        conf = int(tally[f"conf{m}"])
        many = int(tally[f"many{m}"])
        p, lo_, hi_ = _prop(many, conf, confidence)
        rows.append({"m": m, "K": K, "N": N, "conditioned": 0,
                     "cond_trials": conf, "hits": many, "p": p, "lo": lo_,
                     "hi": hi_, "underpowered": int(conf < 50)})
    return ExperimentResult(
        experiment="pond_clusters", schema="pondlab.pond_clusters.v1",
        params={"K": K, "N": N, "m_max": m_max, "trials": trials,
                "horizon": horizon, "p_ref": p_ref,
                "confirm_factor": confirm_factor, "confidence": confidence},
        seed=seed, columns=columns, rows=rows,
        discards={"pond_1_unconfirmed": int(tally["skip1"])},
        wall_seconds=time.monotonic() - t0)


# ---------------------------------------------------------------------------
# boundary reach with a budget of closed bonds


def exp_defect_scaling(k_max: int, n_grid: Sequence[int], trials: int, *,
                       seed: int = 2026, p_ref: float = 0.5,
                       confidence: float = 0.95,
                       options: Optional[RunnerOptions] = None
                       ) -> ExperimentResult:
    """Reach probabilities with at most k closed bonds allowed, k <= k_max.

    The s column rescales each probability by (log2 n)^k times the
    k = 0 probability measured on the same trials, so s = 1 exactly at
    k = 0 and stability of s across n probes the predicted growth rate.
    """
    t0 = time.monotonic()
    grid = sorted(int(n) for n in n_grid)
    if not grid or grid[0] < 2:
        raise ValueError(f"scales must be >= 2, got {n_grid}")
    if len(set(grid)) != len(grid):
        raise ValueError(f"duplicate scales in {n_grid}")
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")

    graphs = {n: region_graph(box((0, 0), n)) for n in grid}

    def worker(t: int) -> dict:
        f = WeightField(seed, t)
        out: dict = {}
        for n in grid:
            g = graphs[n]
            taus = f.weights_for_keys(g.edge_keys)
            d = _defect_distance_raw(g, taus < p_ref)
            for k in range(k_max + 1):
                if d <= k:
                    out[f"hit{k}_{n}"] = 1
        return out

    sig = {"experiment": "defect_scaling", "seed": seed,
           "params": {"k_max": k_max, "n_grid": grid, "p_ref": p_ref}}
    tally = run_chunked(worker, trials, options, sig)

    columns = ("k", "n", "hits", "trials", "p", "lo", "hi", "base_hits",
               "s", "s_lo", "s_hi", "underpowered")
    rows = []
    for k in range(k_max + 1):
        for n in grid:
            h = int(tally[f"hit{k}_{n}"])
            base = int(tally[f"hit0_{n}"])
            p, lo_, hi_ = _prop(h, trials, confidence)
            scale = math.log2(n) ** k
            if k == 0:
                s, slo, shi = 1.0, 1.0, 1.0
            else:
                s, slo, shi = _ratio_ci(h, trials, base, trials, confidence)
                s, slo, shi = s / scale, slo / scale, shi / scale
            rows.append({"k": k, "n": n, "hits": h, "trials": trials,
                         "p": p, "lo": lo_, "hi": hi_, "base_hits": base,
                         "s": s, "s_lo": slo, "s_hi": shi,
                         "underpowered": int(h < 5 or base < 5)})
    return ExperimentResult(
        experiment="defect_scaling", schema="pondlab.defect_scaling.v1",
        params={"k_max": k_max, "n_grid": grid, "trials": trials,
                "p_ref": p_ref, "confidence": confidence},
        seed=seed, columns=columns, rows=rows, discards={},
        wall_seconds=time.monotonic() - t0)


# ---------------------------------------------------------------------------
# near-critical threshold times the four-arm probability


def exp_kesten(n_grid: Sequence[int], trials: int, *, seed: int = 2026,
               p_ref: float = 0.5, est_config: Optional[EstimatorConfig] = None,
               confidence: float = 0.95,
               options: Optional[RunnerOptions] = None) -> ExperimentResult:
    """kappa(n) = (p_n - 1/2) n^2 times the four-arm probability at n.

    p_n comes from inverting the finite-size length scale; the four-arm
    probability is measured at the origin bond with both thresholds at
    the critical point.  The product should stay within a constant band
    across the grid.
    """
    t0 = time.monotonic()
    grid = sorted(int(n) for n in n_grid)
    if not grid or grid[0] < 2:
        raise ValueError(f"scales must be >= 2, got {n_grid}")
    if len(set(grid)) != len(grid):
        raise ValueError(f"duplicate scales in {n_grid}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    base_cfg = est_config or EstimatorConfig()
    bond = Edge(0, 0, Orientation.H)

    columns = ("n", "p_n", "p_n_tol", "fourarm_hits", "fourarm_trials",
               "fourarm_p", "fourarm_lo", "fourarm_hi", "kappa", "kappa_lo",
               "kappa_hi", "underpowered")
    rows = []
    for n in grid:
        cfg = replace(base_cfg, seed=_subseed(seed, f"pn_{n}"))
        p_n = estimate_pn(n, cfg)
        fa_seed = _subseed(seed, f"fourarm_{n}")

        def worker(t: int, n=n, fa_seed=fa_seed) -> dict:
            f = WeightField(fa_seed, t)
            return {"hit": 1} if four_arm(f, bond, n, p_ref, p_ref) else {}

        sig = {"experiment": "kesten", "seed": seed,
               "params": {"n": n, "p_ref": p_ref}}
        tally = run_chunked(worker, trials, _cell_options(options, f"n{n}"),
                            sig)
        h = int(tally["hit"])
        p, lo_, hi_ = _prop(h, trials, confidence)
        excess = p_n - 0.5
        kappa = excess * n * n * p
        klo = max(0.0, excess - cfg.p_tol) * n * n * lo_
        khi = (excess + cfg.p_tol) * n * n * hi_
        rows.append({"n": n, "p_n": p_n, "p_n_tol": cfg.p_tol,
                     "fourarm_hits": h, "fourarm_trials": trials,
                     "fourarm_p": p, "fourarm_lo": lo_, "fourarm_hi": hi_,
                     "kappa": kappa, "kappa_lo": klo, "kappa_hi": khi,
                     "underpowered": int(h < 5)})
    return ExperimentResult(
        experiment="kesten", schema="pondlab.kesten.v1",
        params={"n_grid": grid, "trials": trials, "p_ref": p_ref,
                "confidence": confidence,
                "est_trials": base_cfg.trials,
                "est_trial_cap": base_cfg.trial_cap,
                "est_epsilon": base_cfg.epsilon},
        seed=seed, columns=columns, rows=rows, discards={},
        wall_seconds=time.monotonic() - t0)


# ---------------------------------------------------------------------------
# conditioned critical configurations


@dataclass(frozen=True)
class IICSample:
    """One rejection-sampling outcome."""

    accepted: bool
    attempts: int
    config: Optional[Config]


def sample_iic(N: int, max_attempts: int, seed: int, *,
               p_ref: float = 0.5) -> IICSample:
    """Critical weights on B(N) conditioned on the origin's open cluster
    touching the boundary, by rejection over independent streams.

    Acceptance costs about one in 1/pi(N) attempts, so keep N modest
    (a hard cap of 256 guards against runaway rejection loops).
    """
    if not 1 <= N <= 256:
        raise ValueError(f"N must be in [1, 256], got {N}")
    if max_attempts < 1:
        raise ValueError(f"max_attempts must be >= 1, got {max_attempts}")
    g = region_graph(box((0, 0), N))
    origin_idx = g.index[(0, 0)]
    for a in range(max_attempts):
        f = WeightField(seed, a)
        taus = f.weights_for_keys(g.edge_keys)
        raw = _kernels.label_components(
            g.n_sites, g.edge_a, g.edge_b, (taus < p_ref).view(np.uint8))
        if np.any(raw[g.outer_mask] == raw[origin_idx]):
            cfg = Config(region=g.region, p=p_ref, edges=g.edges, taus=taus)
            return IICSample(True, a + 1, cfg)
    return IICSample(False, max_attempts, None)


# ---------------------------------------------------------------------------
# disconnecting bonds in an annulus, three ways


def annulus_untouched_by_disconnectors(edges: list, origin: Site,
                                       boundary_sites: list,
                                       m: int, n: int) -> bool:
    """True when no origin/boundary disconnecting bond of the given graph
    lies strictly inside the annulus m < r <= n."""
    for e in disconnecting_edges(edges, origin, boundary_sites):
        ra, rb = (norm(s) for s in e.endpoints())
        if m < min(ra, rb) and max(ra, rb) <= n:
            return False
    return True


def exp_disconnect(m: int, n: int, N: int, trials: int, *,
                   iic_samples: Optional[int] = None,
                   iic_attempt_cap: int = 400, seed: int = 2026,
                   p_ref: float = 0.5, confidence: float = 0.95,
                   options: Optional[RunnerOptions] = None) -> ExperimentResult:
    """Absence of disconnecting bonds in Ann(m, n), three ways.

    Measures the event "no disconnecting bond in the annulus" on
    invasion clusters clipped at radius N, the same event on critical
    configurations conditioned to reach radius N, and the one- and
    two-arm crossing probabilities of the annulus at criticality.  The
    ratio columns compare the first probability against the two-arm
    probability directly, and the second times the one-arm probability
    against the two-arm probability.
    """
    t0 = time.monotonic()
    if not 0 <= m < n:
        raise ValueError(f"need 0 <= m < n, got ({m}, {n})")
    if n > N // 4:
        raise ValueError(f"annulus outer radius {n} needs N >= {4 * n}, "
                         f"got {N}")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    n_iic = trials if iic_samples is None else iic_samples
    if n_iic < 1:
        raise ValueError(f"iic_samples must be >= 1, got {n_iic}")
    if iic_attempt_cap < 1:
        raise ValueError(
            f"iic_attempt_cap must be >= 1, got {iic_attempt_cap}")

    ipc_seed = _subseed(seed, "ipc")
    iic_seed = _subseed(seed, "iic")
    arm_seed = _subseed(seed, "arms")
    g = region_graph(box((0, 0), N))
    origin_idx = g.index[(0, 0)]
    base_sig = {"m": m, "n": n, "N": N, "p_ref": p_ref}

    def ipc_worker(t: int) -> dict:
        f = WeightField(ipc_seed, t)
        trace = run_invasion(f, exit_radius=N)
        boundary = [s for s in trace.sites() if norm(s) >= N]
        free = annulus_untouched_by_disconnectors(
            trace.edges(), trace.origin, boundary, m, n)
        return {"ipc_trials": 1, "ipc_free": int(free)}

    def iic_worker(s: int) -> dict:
        smp = sample_iic(N, iic_attempt_cap, _subseed(iic_seed, f"s{s}"),
                         p_ref=p_ref)
        if not smp.accepted:
            return {"iic_rejected": 1, "iic_attempts": smp.attempts}
        raw = _kernels.label_components(
            g.n_sites, g.edge_a, g.edge_b,
            (smp.config.taus < p_ref).view(np.uint8))
        lab = raw[origin_idx]
        keep = np.flatnonzero((smp.config.taus < p_ref)
                              & (raw[g.edge_a] == lab))
        edges = [g.edges[int(j)] for j in keep]
        member = raw == lab
        boundary = [g.sites[int(i)]
                    for i in np.flatnonzero(member & g.outer_mask)]
        free = annulus_untouched_by_disconnectors(
            edges, (0, 0), boundary, m, n)
        return {"iic_trials": 1, "iic_free": int(free),
                "iic_attempts": smp.attempts}

    def arm_worker(t: int) -> dict:
        f = WeightField(arm_seed, t)
        cfg = _critical_config(f, g, p_ref)
        arms = max_disjoint_arms(cfg, m, n)
        return {"arm_trials": 1, "arm1": int(arms >= 1),
                "arm2": int(arms >= 2)}

    ipc = run_chunked(ipc_worker, trials, _cell_options(options, "ipc"),
                      {"experiment": "disconnect/ipc", "seed": seed,
                       "params": base_sig})
    iic = run_chunked(iic_worker, n_iic, _cell_options(options, "iic"),
                      {"experiment": "disconnect/iic", "seed": seed,
                       "params": base_sig})
    arm = run_chunked(arm_worker, trials, _cell_options(options, "arms"),
                      {"experiment": "disconnect/arms", "seed": seed,
                       "params": base_sig})

    ipc_h, ipc_t = int(ipc["ipc_free"]), int(ipc["ipc_trials"])
    iic_h, iic_t = int(iic["iic_free"]), int(iic["iic_trials"])
    a1, a2, arm_t = int(arm["arm1"]), int(arm["arm2"]), int(arm["arm_trials"])

    p_ipc, ipc_lo, ipc_hi = _prop(ipc_h, ipc_t, confidence)
    p_iic, iic_lo, iic_hi = _prop(iic_h, iic_t, confidence)
    p_a1, a1_lo, a1_hi = _prop(a1, arm_t, confidence)
    p_a2, a2_lo, a2_hi = _prop(a2, arm_t, confidence)

    upper, up_lo, up_hi = _ratio_ci(ipc_h, ipc_t, a2, arm_t, confidence)
    # nu(D) * P(A1) / P(A2): three binomials, errors add on the log scale
    if min(iic_h, a1, a2) > 0:
        lower = (p_iic * p_a1) / p_a2
        se = math.sqrt((1 - p_iic) / iic_h + (1 - p_a1) / a1
                       + (1 - p_a2) / a2)
        half = _z(confidence) * se
        low_lo, low_hi = lower * math.exp(-half), lower * math.exp(half)
    elif iic_t > 0 and arm_t > 0 and a2 > 0:
        lower, low_lo, low_hi = 0.0, 0.0, math.nan
    else:
        lower, low_lo, low_hi = math.nan, math.nan, math.nan

    columns = ("m", "n", "N", "ipc_trials", "ipc_free", "ipc_p", "ipc_lo",
               "ipc_hi", "iic_trials", "iic_free", "iic_p", "iic_lo",
               "iic_hi", "iic_rejected", "iic_attempts", "arm_trials",
               "arm1_hits", "arm1_p", "arm2_hits", "arm2_p", "arm2_lo",
               "arm2_hi", "upper_ratio", "upper_lo", "upper_hi",
               "lower_ratio", "lower_lo", "lower_hi", "underpowered")
    rows = [{
        "m": m, "n": n, "N": N,
        "ipc_trials": ipc_t, "ipc_free": ipc_h, "ipc_p": p_ipc,
        "ipc_lo": ipc_lo, "ipc_hi": ipc_hi,
        "iic_trials": iic_t, "iic_free": iic_h, "iic_p": p_iic,
        "iic_lo": iic_lo, "iic_hi": iic_hi,
        "iic_rejected": int(iic["iic_rejected"]),
        "iic_attempts": int(iic["iic_attempts"]),
        "arm_trials": arm_t, "arm1_hits": a1, "arm1_p": p_a1,
        "arm2_hits": a2, "arm2_p": p_a2, "arm2_lo": a2_lo, "arm2_hi": a2_hi,
        "upper_ratio": upper, "upper_lo": up_lo, "upper_hi": up_hi,
        "lower_ratio": lower, "lower_lo": low_lo, "lower_hi": low_hi,
        "underpowered": int(min(ipc_h, iic_h, a1, a2) < 5),
    }]
    return ExperimentResult(
        experiment="disconnect", schema="pondlab.disconnect.v1",
        params={"m": m, "n": n, "N": N, "trials": trials,
                "iic_samples": n_iic, "iic_attempt_cap": iic_attempt_cap,
                "p_ref": p_ref, "confidence": confidence},
        seed=seed, columns=columns, rows=rows,
        discards={"iic_rejected": int(iic["iic_rejected"])},
        wall_seconds=time.monotonic() - t0)
