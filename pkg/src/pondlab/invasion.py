"""
Invasion growth, pond decomposition, invaded-bond statistics.
=============================================================

The growth process starts from a single site and repeatedly adds the
smallest-weight bond on the outer bond boundary (bonds not yet added
that touch at least one reached site).  A run is recorded as a trace:
the invaded bonds in order, their weights, and which step discovered a
new site.

Ponds and outlets are read off the trace afterwards.  An outlet is a
bond whose weight exceeds the weight of every later invaded bond (a
strict suffix maximum); outlet weights are strictly decreasing by
construction.  Pond k is the material invaded strictly between outlets
k-1 and k.  On a truncated trace the trailing candidates are
uncertain, so each outlet carries a confirmation flag: confirmed means
the growth beyond the outlet reached L-infinity distance at least
confirm_factor times the outlet's own distance (or hit the stop
boundary) and the outlet weight exceeds the reference threshold.

Two engines produce identical trace structures: a numba kernel for the
infinite lattice driven by hash weight fields, and a plain-Python
engine for finite graphs with explicit weights (the enumeration oracle
drives the latter).
"""

from __future__ import annotations

import heapq
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .lattice import Edge, Site, norm
from .weights import WeightField

# reusable dense workspaces for the lattice kernel, keyed by window
# half-width; thread-local so concurrent runs never share buffers
_tls = threading.local()


class _Workspace:
    def __init__(self, W: int, cap_steps: int):
        S = 2 * W + 1
        n_edges = 2 * S * S
        self.W = W
        self.stamp = 0
        self.site_stamp = np.zeros(S * S, dtype=np.int32)
        self.edge_stamp = np.zeros(n_edges, dtype=np.int32)
        heap_cap = min(n_edges, 3 * cap_steps + 8) + 8
        self.heap_tau = np.empty(heap_cap, dtype=np.float64)
        self.heap_eid = np.empty(heap_cap, dtype=np.int64)
        self.cap_steps = cap_steps
        self.ax = np.empty(cap_steps, dtype=np.int32)
        self.ay = np.empty(cap_steps, dtype=np.int32)
        self.bx = np.empty(cap_steps, dtype=np.int32)
        self.by = np.empty(cap_steps, dtype=np.int32)
        self.tau = np.empty(cap_steps, dtype=np.float64)
        self.new = np.empty(cap_steps, dtype=np.uint8)

    def next_stamp(self) -> int:
        self.stamp += 1
        if self.stamp >= np.iinfo(np.int32).max:
            self.site_stamp[:] = 0
            self.edge_stamp[:] = 0
            self.stamp = 1
        return self.stamp


def _get_workspace(W: int, cap_steps: int) -> _Workspace:
    cache = getattr(_tls, "workspaces", None)
    if cache is None:
        cache = _tls.workspaces = {}
    ws = cache.get(W)
    if ws is None or ws.cap_steps < cap_steps:
        ws = _Workspace(W, cap_steps)
        cache[W] = ws
    return ws


@dataclass
class InvasionTrace:
    """One recorded growth run.  Arrays are aligned per step."""

    origin: Site
    edge_a: np.ndarray      # (T, 2) known endpoint at invasion time
    edge_b: np.ndarray      # (T, 2) other endpoint (the new site when new_mask)
    tau: np.ndarray         # (T,)
    new_mask: np.ndarray    # (T,) bool, step discovered edge_b
    stop_reason: str        # "max_steps" | "exit_radius" | "exhausted"
    max_steps: Optional[int]
    exit_radius: Optional[int]
    boundary_size: int      # bonds on the outer boundary at stop
    boundary_min: Optional[float]
    seed: Optional[int] = None
    stream: Optional[int] = None

    @property
    def n_steps(self) -> int:
        return len(self.tau)

    def edges(self) -> list[Edge]:
        return [Edge.from_endpoints(tuple(a), tuple(b))
                for a, b in zip(self.edge_a, self.edge_b)]

    def sites(self) -> list[Site]:
        out = [self.origin]
        for i in np.flatnonzero(self.new_mask):
            out.append((int(self.edge_b[i, 0]), int(self.edge_b[i, 1])))
        return out

    def site_norms(self) -> np.ndarray:
        """Per step: norm of the discovered site, or -1 for closing bonds."""
        rel = self.edge_b - np.array(self.origin, dtype=self.edge_b.dtype)
        norms = np.abs(rel).max(axis=1)
        return np.where(self.new_mask, norms, -1).astype(np.int64)


def run_invasion(source, max_steps: Optional[int] = None,
                 exit_radius: Optional[int] = None) -> InvasionTrace:
    """Grow from the origin until a stop rule fires.

    ``source`` is either a hash WeightField (infinite-lattice run; at
    least one of max_steps / exit_radius is then required) or an
    explicit-weight handle carrying its own finite graph (runs to
    exhaustion by default).
    """
    graph = getattr(source, "graph", None)
    if graph is not None:
        return _run_finite(source, graph, max_steps)
    if not isinstance(source, WeightField):
        raise TypeError(f"cannot run invasion from {type(source).__name__}")
    if max_steps is None and exit_radius is None:
        raise ValueError("an infinite-lattice run needs max_steps or exit_radius")
    if max_steps is not None and max_steps < 1:
        raise ValueError(f"max_steps must be positive, got {max_steps}")
    if exit_radius is not None and exit_radius < 1:
        raise ValueError(f"exit_radius must be >= 1, got {exit_radius}")

    if exit_radius is not None:
        W = exit_radius
    else:
        # generous fractal-growth guess; the kernel reports overflow and we retry
        W = max(64, int(4 * max_steps ** 0.55))
    while True:
        trace = _run_lattice(source, max_steps, exit_radius, W)
        if trace is not None:
            return trace
        W *= 2


def _run_lattice(f: WeightField, max_steps, exit_radius, W):
    S = 2 * W + 1
    cap = 2 * S * S
    if max_steps is not None:
        cap = min(cap, max_steps)
    ws = _get_workspace(W, cap)
    stamp = ws.next_stamp()
    n, stop, boundary, bmin = _kernels.invade_lattice(
        np.uint64(f.state),
        -1 if max_steps is None else max_steps,
        -1 if exit_radius is None else exit_radius,
        W, stamp,
        ws.site_stamp, ws.edge_stamp, ws.heap_tau, ws.heap_eid,
        ws.ax, ws.ay, ws.bx, ws.by, ws.tau, ws.new)
    if stop == _kernels.STOP_WINDOW_OVERFLOW:
        return None
    reason = {_kernels.STOP_MAX_STEPS: "max_steps",
              _kernels.STOP_EXIT_RADIUS: "exit_radius",
              _kernels.STOP_EXHAUSTED: "exhausted"}[stop]
    edge_a = np.stack([ws.ax[:n], ws.ay[:n]], axis=1).astype(np.int64)
    edge_b = np.stack([ws.bx[:n], ws.by[:n]], axis=1).astype(np.int64)
    return InvasionTrace(
        origin=(0, 0), edge_a=edge_a, edge_b=edge_b,
        tau=ws.tau[:n].copy(), new_mask=ws.new[:n].astype(bool),
        stop_reason=reason, max_steps=max_steps, exit_radius=exit_radius,
        boundary_size=int(boundary),
        boundary_min=float(bmin) if boundary > 0 else None,
        seed=f.seed, stream=f.stream)


def _run_finite(source, graph, max_steps):
    """Reference engine: plain heap on an explicit finite graph."""
    adjacency: dict = {}
    for idx, (u, v) in enumerate(graph.edge_list):
        adjacency.setdefault(u, []).append((v, idx))
        adjacency.setdefault(v, []).append((u, idx))
    origin = graph.origin
    if origin not in adjacency:
        raise ValueError(f"origin {origin} has no incident bonds")
    weights = [source.weight_of_index(i) for i in range(len(graph.edge_list))]

    visited = {origin}
    pushed = set()
    heap: list = []
    for v, idx in adjacency[origin]:
        heapq.heappush(heap, (weights[idx], idx))
        pushed.add(idx)

    rec_a, rec_b, rec_tau, rec_new = [], [], [], []
    while heap:
        if max_steps is not None and len(rec_tau) >= max_steps:
            break
        t, idx = heapq.heappop(heap)
        u, v = graph.edge_list[idx]
        if v in visited and u not in visited:
            u, v = v, u
        new = v not in visited
        rec_a.append(u)
        rec_b.append(v)
        rec_tau.append(t)
        rec_new.append(new)
        if new:
            visited.add(v)
            for w, j in adjacency[v]:
                if j not in pushed:
                    pushed.add(j)
                    heapq.heappush(heap, (weights[j], j))

    reason = "exhausted" if not heap else "max_steps"
    return InvasionTrace(
        origin=origin,
        edge_a=np.array(rec_a, dtype=np.int64).reshape(-1, 2),
        edge_b=np.array(rec_b, dtype=np.int64).reshape(-1, 2),
        tau=np.array(rec_tau, dtype=np.float64),
        new_mask=np.array(rec_new, dtype=bool),
        stop_reason=reason, max_steps=max_steps, exit_radius=None,
        boundary_size=len(heap),
        boundary_min=heap[0][0] if heap else None)


@dataclass
class PondDecomposition:
    """Outlets and ponds of one trace.

    Outlet k (0-based index k-1 in the arrays) sits at trace position
    outlet_pos[k-1].  Pond k's bonds are the trace slice strictly
    between outlets k-1 and k; its sites are the ones first reached
    from the previous outlet's far endpoint up to just before outlet k.
    The outlet bond itself belongs to no pond.
    """

    trace: InvasionTrace
    p_ref: float
    confirm_factor: float
    outlet_pos: np.ndarray    # (K,) trace indices, increasing
    outlet_tau: np.ndarray    # (K,) strictly decreasing
    confirmed: np.ndarray     # (K,) bool
    r_hat: np.ndarray         # (K,) growth radius when outlet k is invaded
    r_bar: np.ndarray         # (K,) L-infinity diameter of pond k
    _norms: np.ndarray = field(repr=False, default=None)

    @property
    def n_outlets(self) -> int:
        return len(self.outlet_pos)

    @property
    def n_confirmed(self) -> int:
        return int(self.confirmed.sum())

    def outlet_edge(self, k: int) -> Edge:
        i = self.outlet_pos[k - 1]
        return Edge.from_endpoints(tuple(self.trace.edge_a[i]),
                                   tuple(self.trace.edge_b[i]))

    def outlet_far_end(self, k: int) -> Optional[Site]:
        i = self.outlet_pos[k - 1]
        if not self.trace.new_mask[i]:
            return None
        return (int(self.trace.edge_b[i, 0]), int(self.trace.edge_b[i, 1]))

    def pond_slice(self, k: int) -> slice:
        """Trace indices of pond k's bonds (outlets excluded)."""
        self._check_k(k)
        lo = 0 if k == 1 else int(self.outlet_pos[k - 2]) + 1
        return slice(lo, int(self.outlet_pos[k - 1]))

    def pond_edges(self, k: int) -> list[Edge]:
        s = self.pond_slice(k)
        return [Edge.from_endpoints(tuple(self.trace.edge_a[i]),
                                    tuple(self.trace.edge_b[i]))
                for i in range(s.start, s.stop)]

    def pond_sites(self, k: int) -> list[Site]:
        """Sites first reached in pond k (includes the previous outlet's
        far endpoint; pond 1 includes the origin)."""
        self._check_k(k)
        out = []
        if k == 1:
            out.append(self.trace.origin)
            lo = 0
        else:
            lo = int(self.outlet_pos[k - 2])
        hi = int(self.outlet_pos[k - 1])
        for i in range(lo, hi):
            if self.trace.new_mask[i]:
                out.append((int(self.trace.edge_b[i, 0]),
                            int(self.trace.edge_b[i, 1])))
        return out

    def _check_k(self, k: int):
        if not 1 <= k <= self.n_outlets:
            raise IndexError(f"pond {k} of {self.n_outlets}")


def decompose_ponds(trace: InvasionTrace, p_ref: float = 0.5,
                    confirm_factor: float = 4.0) -> PondDecomposition:
    """Read outlets, ponds, radii and confirmation flags off a trace."""
    if not 0.0 < p_ref < 1.0:
        raise ValueError(f"p_ref must lie in (0, 1), got {p_ref}")
    if confirm_factor < 1.0:
        raise ValueError(f"confirm_factor must be >= 1, got {confirm_factor}")
    tau = trace.tau
    T = len(tau)
    if T == 0:
        empty = np.empty(0)
        return PondDecomposition(trace, p_ref, confirm_factor,
                                 empty.astype(np.int64), empty,
                                 empty.astype(bool), empty.astype(np.int64),
                                 empty.astype(np.int64))

    # strict suffix maxima: tau[i] beats everything after it
    next_max = np.empty(T)
    next_max[:-1] = np.maximum.accumulate(tau[::-1])[::-1][1:]
    next_max[-1] = -np.inf
    pos = np.flatnonzero(tau > next_max).astype(np.int64)
    out_tau = tau[pos]

    norms = trace.site_norms()
    prefix = np.maximum.accumulate(np.maximum(norms, 0))
    # growth radius just before the outlet bond is added
    r_hat = np.where(pos > 0, prefix[np.maximum(pos - 1, 0)], 0).astype(np.int64)

    # farthest site reached strictly after each outlet
    suffix = np.empty(T, dtype=np.int64)
    suffix[::-1] = np.maximum.accumulate(norms[::-1])
    post_max = np.where(pos + 1 < T, suffix[np.minimum(pos + 1, T - 1)], -1)

    # outlet bond distance from the origin
    rel_a = trace.edge_a[pos] - np.array(trace.origin)
    rel_b = trace.edge_b[pos] - np.array(trace.origin)
    edge_norm = np.maximum(np.abs(rel_a).max(axis=1), np.abs(rel_b).max(axis=1))

    need = confirm_factor * edge_norm
    if trace.exit_radius is not None:
        need = np.minimum(need, trace.exit_radius)
    confirmed = (post_max >= need) & (out_tau > p_ref) & trace.new_mask[pos]

    # pond diameters from bounding boxes of first-reached sites
    r_bar = np.empty(len(pos), dtype=np.int64)
    ox, oy = trace.origin
    bx = trace.edge_b[:, 0]
    by = trace.edge_b[:, 1]
    for k in range(len(pos)):
        lo = 0 if k == 0 else int(pos[k - 1])
        hi = int(pos[k])
        sel = trace.new_mask[lo:hi]
        xs = bx[lo:hi][sel]
        ys = by[lo:hi][sel]
        if k == 0:
            xs = np.append(xs, ox)
            ys = np.append(ys, oy)
        if len(xs) == 0:
            r_bar[k] = 0
        else:
            r_bar[k] = max(int(xs.max() - xs.min()), int(ys.max() - ys.min()))

    return PondDecomposition(trace, p_ref, confirm_factor, pos, out_tau,
                             confirmed, r_hat, r_bar, _norms=norms)


def pond_radii(decomp: PondDecomposition) -> tuple[np.ndarray, np.ndarray]:
    """(growth radii, pond diameters), one entry per outlet."""
    return decomp.r_hat.copy(), decomp.r_bar.copy()


@dataclass
class PondCluster:
    sites: int
    diameter: int


def pond_open_clusters(decomp: PondDecomposition, k: int,
                       p_ref: Optional[float] = None) -> list[PondCluster]:
    """Connected clusters of pond k's sites under its open bonds
    (tau < p_ref); sites touching no open bond are singleton clusters.

    Cluster "size" is reported both ways: site count and L-infinity
    diameter.  The list is sorted by diameter, largest first.
    """
    p = decomp.p_ref if p_ref is None else p_ref
    s = decomp.pond_slice(k)
    trace = decomp.trace
    parent: dict = {site: site for site in decomp.pond_sites(k)}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(s.start, s.stop):
        if trace.tau[i] >= p:
            continue
        a = (int(trace.edge_a[i, 0]), int(trace.edge_a[i, 1]))
        b = (int(trace.edge_b[i, 0]), int(trace.edge_b[i, 1]))
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    groups: dict = {}
    for site in parent:
        groups.setdefault(find(site), []).append(site)
    out = []
    for sites in groups.values():
        xs = [p_[0] for p_ in sites]
        ys = [p_[1] for p_ in sites]
        out.append(PondCluster(sites=len(sites),
                               diameter=max(max(xs) - min(xs), max(ys) - min(ys))))
    out.sort(key=lambda c: (c.diameter, c.sites), reverse=True)
    return out


@dataclass
class InvadedStats:
    n_steps: int
    boundary_size: int
    boundary_to_volume: float
    mass_above_half: float
    ks_to_uniform: float
    mean_tau: float


def invaded_statistics(trace: InvasionTrace, hi: float = 0.5) -> InvadedStats:
    """Empirical law of the invaded weights against Uniform[0, hi]."""
    tau = np.sort(trace.tau)
    T = len(tau)
    if T == 0:
        raise ValueError("empty trace")
    ecdf_hi = np.arange(1, T + 1) / T
    ecdf_lo = np.arange(0, T) / T
    model = np.minimum(tau / hi, 1.0)
    ks = float(np.maximum(np.abs(ecdf_hi - model), np.abs(ecdf_lo - model)).max())
    return InvadedStats(
        n_steps=T,
        boundary_size=trace.boundary_size,
        boundary_to_volume=trace.boundary_size / T,
        mass_above_half=float((tau > hi).mean()),
        ks_to_uniform=ks,
        mean_tau=float(tau.mean()))
