"""
Percolation event detectors on finite regions.
==============================================

Everything here is a pure function of a bond configuration (or a weight
source plus thresholds): open clusters, crossings, circuits around the
origin, surrounding closed structures on the dual side, disjoint arms,
the alternating four-arm event, defect-tolerant reach, and
disconnecting bonds of explicit graphs.

Circuits are found through planar duality (an open circuit exists iff
no blocked dual path escapes the annulus), arms through unit-capacity
maximum flow, disconnecting bonds through bridge finding.  Each of
these has an independent naive twin in the oracle module and the test
suite holds the two routes together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels
from .lattice import (
    Annulus,
    Box,
    Edge,
    Rectangle,
    Region,
    Site,
    annulus,
    box,
    dual_edge,
    interior_dual_edges,
    interior_dual_sites,
    primal_edge,
    region_edges,
    region_sites,
)
from .weights import Config, WeightSource

# ------------------------------------------------------------ region graphs

_region_cache: dict = {}
_dual_cache: dict = {}


class RegionGraph:
    """Row-major site indexing plus CSR adjacency for one region."""

    def __init__(self, region: Region):
        self.region = region
        self.sites = region_sites(region)
        self.index = {s: i for i, s in enumerate(self.sites)}
        self.edges = region_edges(region)
        n = len(self.sites)
        m = len(self.edges)
        self.edge_a = np.empty(m, dtype=np.int64)
        self.edge_b = np.empty(m, dtype=np.int64)
        for j, e in enumerate(self.edges):
            u, v = e.endpoints()
            self.edge_a[j] = self.index[u]
            self.edge_b[j] = self.index[v]
        deg = np.zeros(n + 1, dtype=np.int64)
        for j in range(m):
            deg[self.edge_a[j] + 1] += 1
            deg[self.edge_b[j] + 1] += 1
        self.indptr = np.cumsum(deg)
        self.nbr_site = np.empty(2 * m, dtype=np.int64)
        self.nbr_edge = np.empty(2 * m, dtype=np.int64)
        cursor = self.indptr[:-1].copy()
        for j in range(m):
            a, b = self.edge_a[j], self.edge_b[j]
            self.nbr_site[cursor[a]] = b
            self.nbr_edge[cursor[a]] = j
            cursor[a] += 1
            self.nbr_site[cursor[b]] = a
            self.nbr_edge[cursor[b]] = j
            cursor[b] += 1

        xs = np.array([s[0] for s in self.sites], dtype=np.int64)
        ys = np.array([s[1] for s in self.sites], dtype=np.int64)
        self.xs, self.ys = xs, ys
        if isinstance(region, Box):
            r = np.maximum(np.abs(xs - region.cx), np.abs(ys - region.cy))
            self.outer_mask = r == region.n
            self.inner_mask = np.zeros(n, dtype=bool)
        elif isinstance(region, Annulus):
            r = np.maximum(np.abs(xs - region.cx), np.abs(ys - region.cy))
            self.outer_mask = r == region.n
            self.inner_mask = r == region.m + 1
        else:
            self.outer_mask = ((xs == region.x0) | (xs == region.x1)
                               | (ys == region.y0) | (ys == region.y1))
            self.inner_mask = np.zeros(n, dtype=bool)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def edge_keys(self) -> np.ndarray:
        """Canonical hash keys of the region's bonds, built on first use."""
        k = getattr(self, "_edge_keys", None)
        if k is None:
            k = np.fromiter((e.key() for e in self.edges),
                            dtype=np.uint64, count=len(self.edges))
            self._edge_keys = k
        return k


def region_graph(region: Region) -> RegionGraph:
    g = _region_cache.get(region)
    if g is None:
        g = RegionGraph(region)
        _region_cache[region] = g
    return g


class DualGraph:
    """Interior dual sites and bonds of B(N), with primal partners."""

    def __init__(self, N: int):
        self.N = N
        self.sites = interior_dual_sites(N)
        self.index = {s: i for i, s in enumerate(self.sites)}
        self.duals = interior_dual_edges(N)
        primal = region_graph(box((0, 0), N))
        edge_pos = {e: j for j, e in enumerate(primal.edges)}
        m = len(self.duals)
        self.edge_a = np.empty(m, dtype=np.int64)
        self.edge_b = np.empty(m, dtype=np.int64)
        self.partner = np.empty(m, dtype=np.int64)   # index into box edges
        for j, d in enumerate(self.duals):
            u, v = d.endpoints()
            self.edge_a[j] = self.index[u]
            self.edge_b[j] = self.index[v]
            self.partner[j] = edge_pos[primal_edge(d)]
        ii = np.array([s[0] for s in self.sites], dtype=np.int64)
        jj = np.array([s[1] for s in self.sites], dtype=np.int64)
        self.norm2 = np.maximum(np.abs(2 * ii + 1), np.abs(2 * jj + 1))
        self.outer_mask = self.norm2 == 2 * N - 1

    @property
    def n_sites(self) -> int:
        return len(self.sites)


def dual_graph(N: int) -> DualGraph:
    g = _dual_cache.get(N)
    if g is None:
        g = DualGraph(N)
        _dual_cache[N] = g
    return g


def _aligned_open_mask(config: Config, g: RegionGraph) -> np.ndarray:
    if config.region == g.region:
        return config.open_mask
    mask = np.empty(len(g.edges), dtype=bool)
    for j, e in enumerate(g.edges):
        try:
            mask[j] = config.is_open(e)
        except KeyError:
            raise ValueError(
                f"config on {config.region} does not cover {g.region}") from None
    return mask


def _contiguous_labels(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Map union-find roots to 0..k-1 in first-appearance order."""
    uniq, labels = np.unique(raw, return_inverse=True)
    first_seen = np.full(len(uniq), -1, dtype=np.int64)
    rank = 0
    for lab in labels:
        if first_seen[lab] < 0:
            first_seen[lab] = rank
            rank += 1
    return first_seen[labels], rank


# ---------------------------------------------------------------- clusters

@dataclass
class ClusterLabeling:
    """Connected components of the open subgraph of one region."""

    region: Region
    site_labels: np.ndarray      # (n_sites,) cluster id, row-major site order
    sizes: np.ndarray            # (k,) member count
    diameters: np.ndarray        # (k,) L-infinity diameter
    touches_outer: np.ndarray    # (k,) bool
    touches_inner: np.ndarray    # (k,) bool
    _graph: RegionGraph

    @property
    def n_clusters(self) -> int:
        return len(self.sizes)

    def label_of(self, site: Site) -> int:
        return int(self.site_labels[self._graph.index[site]])

    def cluster_sites(self, cid: int) -> list[Site]:
        idx = np.flatnonzero(self.site_labels == cid)
        return [self._graph.sites[i] for i in idx]

    def size_of_site(self, site: Site) -> int:
        return int(self.sizes[self.label_of(site)])


def clusters(config: Config, region: Optional[Region] = None) -> ClusterLabeling:
    """Exact open components, with sizes, diameters and boundary flags."""
    g = region_graph(config.region if region is None else region)
    open_mask = _aligned_open_mask(config, g)
    raw = _kernels.label_components(g.n_sites, g.edge_a, g.edge_b,
                                    open_mask.view(np.uint8))
    labels, k = _contiguous_labels(raw)
    sizes = np.bincount(labels, minlength=k)

    xmin = np.full(k, np.iinfo(np.int64).max)
    xmax = np.full(k, np.iinfo(np.int64).min)
    ymin = xmin.copy()
    ymax = xmax.copy()
    np.minimum.at(xmin, labels, g.xs)
    np.maximum.at(xmax, labels, g.xs)
    np.minimum.at(ymin, labels, g.ys)
    np.maximum.at(ymax, labels, g.ys)
    diameters = np.maximum(xmax - xmin, ymax - ymin)

    touches_outer = np.zeros(k, dtype=bool)
    touches_outer[labels[g.outer_mask]] = True
    touches_inner = np.zeros(k, dtype=bool)
    touches_inner[labels[g.inner_mask]] = True
    return ClusterLabeling(g.region, labels, sizes, diameters,
                           touches_outer, touches_inner, _graph=g)


# ---------------------------------------------------------------- crossings

def has_crossing(config: Config, region: Optional[Region] = None,
                 orientation: str = "horizontal") -> bool:
    """Open path joining opposite sides of a rectangle (or box)."""
    if orientation not in ("horizontal", "vertical"):
        raise ValueError(f"unknown orientation {orientation!r}")
    g = region_graph(config.region if region is None else region)
    r = g.region
    if isinstance(r, Box):
        x0, x1 = r.cx - r.n, r.cx + r.n
        y0, y1 = r.cy - r.n, r.cy + r.n
    elif isinstance(r, Rectangle):
        x0, x1, y0, y1 = r.x0, r.x1, r.y0, r.y1
    else:
        raise TypeError("crossings are defined on boxes and rectangles")
    open_mask = _aligned_open_mask(config, g)
    raw = _kernels.label_components(g.n_sites, g.edge_a, g.edge_b,
                                    open_mask.view(np.uint8))
    if orientation == "horizontal":
        a = raw[g.xs == x0]
        b = raw[g.xs == x1]
    else:
        a = raw[g.ys == y0]
        b = raw[g.ys == y1]
    return bool(np.intersect1d(a, b).size)


# ------------------------------------------------------------ dual circuits

def has_open_circuit_in_annulus(config: Config, m: int, n: int) -> bool:
    """Open circuit around the origin inside Ann(m, n), by duality.

    The circuit exists iff no dual path can escape: walk dual sites
    from the inner zone (distance <= m + 1/2) out past n - 1/2, where a
    step is allowed iff the primal bond it crosses is not an open bond
    of the annulus.  Bonds the config does not carry count as absent.
    """
    if not 0 <= m < n:
        raise ValueError(f"need 0 <= m < n, got ({m}, {n})")
    ring = annulus((0, 0), m, n)

    def blocked(e: Edge) -> bool:
        # escape is blocked where an open annulus bond crosses the step
        if not (ring.contains(e.endpoints()[0]) and ring.contains(e.endpoints()[1])):
            return False
        try:
            return config.is_open(e)
        except KeyError:
            return False

    # dual sites (i, j) ~ (i + 1/2, j + 1/2), walked inside norm < n + 1/2
    start = [(i, j) for i in range(-m - 1, m + 1) for j in range(-m - 1, m + 1)]
    seen = set(start)
    todo = list(start)
    lim = 2 * n - 1
    while todo:
        i, j = todo.pop()
        for (di, dj, e) in (
                (1, 0, Edge(i + 1, j, 1)), (-1, 0, Edge(i, j, 1)),
                (0, 1, Edge(i, j + 1, 0)), (0, -1, Edge(i, j, 0))):
            if blocked(e):
                continue
            ni, nj = i + di, j + dj
            if max(abs(2 * ni + 1), abs(2 * nj + 1)) > lim:
                return False   # a dual path escaped: no circuit
            if (ni, nj) not in seen:
                seen.add((ni, nj))
                todo.append((ni, nj))
    return True


# ------------------------------------------------- surrounding dual clusters

def _surrounding_cluster_norms(taus: np.ndarray, p: float, N: int) -> list[int]:
    """Per surrounding closed dual cluster: its max dual-site norm doubled.

    A cluster of p-closed dual bonds inside B(N)* surrounds the origin
    iff deleting the primal bonds it crosses cuts the origin off from
    the box boundary.
    """
    dg = dual_graph(N)
    closed = taus[dg.partner] >= p
    if not closed.any():
        return []
    raw = _kernels.label_components(dg.n_sites, dg.edge_a, dg.edge_b,
                                    closed.view(np.uint8))
    g = region_graph(box((0, 0), N))
    roots = np.unique(np.concatenate([raw[dg.edge_a[closed]],
                                      raw[dg.edge_b[closed]]]))
    out = []
    origin_idx = g.index[(0, 0)]
    targets = g.outer_mask
    for r in roots:
        in_cluster = raw == r
        removed = in_cluster[dg.edge_a] & closed   # this cluster's bonds
        passable = np.ones(len(g.edges), dtype=bool)
        passable[dg.partner[removed]] = False
        nbr_open = passable[g.nbr_edge]
        dist = _kernels.defect_distance(
            g.n_sites, g.indptr, g.nbr_site, nbr_open.view(np.uint8),
            origin_idx, targets.view(np.uint8), 1 << 30)
        if dist > 0:
            out.append(int(dg.norm2[in_cluster].max()))
    return out


def surrounding_closed_extent(weights: WeightSource, p: float, N: int) -> int:
    """Largest r with a surrounding p-closed dual cluster reaching
    L-infinity distance >= r from the origin; 0 when nothing surrounds.
    """
    if N < 2:
        raise ValueError(f"box half-width must be >= 2, got {N}")
    g = region_graph(box((0, 0), N))
    taus = weights.weights_for_edges(g.edges)
    norms2 = _surrounding_cluster_norms(taus, p, N)
    if not norms2:
        return 0
    return max((n2 - 1) // 2 for n2 in norms2)


def has_surrounding_closed_cluster(weights: WeightSource, p: float, N: int) -> bool:
    """Whether any p-closed dual cluster in B(N)* surrounds the origin."""
    if N < 2:
        raise ValueError(f"box half-width must be >= 2, got {N}")
    g = region_graph(box((0, 0), N))
    taus = weights.weights_for_edges(g.edges)
    return bool(_surrounding_cluster_norms(taus, p, N))


# ------------------------------------------------------------ disjoint arms

def max_disjoint_arms(config: Config, m: int, n: int) -> int:
    """Most vertex-disjoint open paths from B(m) to the box boundary.

    Sites of B(m) and of the boundary ring are exempt from the
    disjointness rule; every bond still carries at most one path.
    Unit-capacity max flow on the split-vertex graph gives exactness.
    """
    if not 0 <= m < n:
        raise ValueError(f"need 0 <= m < n, got ({m}, {n})")
    g = region_graph(box((0, 0), n))
    open_mask = _aligned_open_mask(config, g)

    r = np.maximum(np.abs(g.xs), np.abs(g.ys))
    is_source = r <= m
    is_target = r == n

    # split each site v into v_in = 2v, v_out = 2v + 1
    n_nodes = 2 * g.n_sites + 2
    S, T = 2 * g.n_sites, 2 * g.n_sites + 1
    INF = 1 << 30

    arc_to: list[int] = []
    arc_cap: list[int] = []
    arc_rev: list[int] = []
    heads: list[list[int]] = [[] for _ in range(n_nodes)]

    def add_arc(u, v, cap):
        heads[u].append(len(arc_to))
        arc_to.append(v)
        arc_cap.append(cap)
        arc_rev.append(len(arc_to))
        heads[v].append(len(arc_to))
        arc_to.append(u)
        arc_cap.append(0)
        arc_rev.append(len(arc_to) - 2)

    for v in range(g.n_sites):
        cap = INF if is_source[v] or is_target[v] else 1
        add_arc(2 * v, 2 * v + 1, cap)
        if is_source[v]:
            add_arc(S, 2 * v, INF)
        if is_target[v]:
            add_arc(2 * v + 1, T, INF)
    for j in range(len(g.edges)):
        if not open_mask[j]:
            continue
        a, b = int(g.edge_a[j]), int(g.edge_b[j])
        add_arc(2 * a + 1, 2 * b, 1)
        add_arc(2 * b + 1, 2 * a, 1)

    # the kernel wants arcs grouped by tail node; permute into that order
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    for v in range(n_nodes):
        indptr[v + 1] = indptr[v] + len(heads[v])
    grouping = np.concatenate(
        [np.array(h, dtype=np.int64) for h in heads if h] or
        [np.empty(0, dtype=np.int64)])
    n_arcs = len(arc_to)
    new_pos = np.empty(n_arcs, dtype=np.int64)
    new_pos[grouping] = np.arange(n_arcs)
    arc_to_np = np.array(arc_to, dtype=np.int64)[grouping]
    arc_cap_np = np.array(arc_cap, dtype=np.int64)[grouping]
    arc_rev_np = new_pos[np.array(arc_rev, dtype=np.int64)[grouping]]
    stop_at = 4 * (2 * m + 1)   # flow cannot exceed the inner perimeter
    return int(_kernels.maxflow_unit(
        n_nodes, indptr, arc_to_np, arc_cap_np, arc_rev_np, S, T, stop_at))


# ----------------------------------------------------------------- four-arm

def four_arm(weights: WeightSource, e: Edge, n: int,
             q1: float, q2: Optional[float] = None) -> bool:
    """Alternating four-arm event at bond e in B(n).

    With e itself removed: the two endpoints of e lie in distinct
    q1-open clusters that each touch the box boundary, and the two dual
    endpoints of e* lie in q2-closed dual clusters that each touch the
    outermost interior dual ring.  The event grows with q1 (more open
    bonds) and shrinks with q2 (fewer closed bonds); the thresholds may
    sit in either order.
    """
    if q2 is None:
        q2 = q1
    if not (0 <= q1 <= 1 and 0 <= q2 <= 1):
        raise ValueError(f"thresholds must lie in [0, 1], got ({q1}, {q2})")
    if e.norm() > n // 2:
        raise ValueError(f"bond {e} lies outside the central box of {n // 2}")
    g = region_graph(box((0, 0), n))
    taus = weights.weights_for_edges(g.edges)
    e_idx = g.edges.index(e)

    open1 = taus < q1
    open1[e_idx] = False
    raw = _kernels.label_components(g.n_sites, g.edge_a, g.edge_b,
                                    open1.view(np.uint8))
    u, v = e.endpoints()
    cu, cv = raw[g.index[u]], raw[g.index[v]]
    if cu == cv:
        return False
    outer = set(raw[g.outer_mask].tolist())
    if cu not in outer or cv not in outer:
        return False

    dg = dual_graph(n)
    closed2 = taus[dg.partner] >= q2
    d = dual_edge(e)
    d_idx = dg.duals.index(d)
    closed2[d_idx] = False
    draw = _kernels.label_components(dg.n_sites, dg.edge_a, dg.edge_b,
                                     closed2.view(np.uint8))
    du, dv = d.endpoints()
    cdu, cdv = draw[dg.index[du]], draw[dg.index[dv]]
    douter = set(draw[dg.outer_mask].tolist())
    return cdu in douter and cdv in douter


# -------------------------------------------------------------- defect reach

def _defect_distance_raw(g: RegionGraph, open_mask: np.ndarray) -> int:
    nbr_open = open_mask[g.nbr_edge]
    big = 1 << 30
    dist = _kernels.defect_distance(
        g.n_sites, g.indptr, g.nbr_site, nbr_open.view(np.uint8),
        g.index[(0, 0)], g.outer_mask.view(np.uint8), big)
    return int(dist)


def defect_distance(config: Config, n: int) -> int:
    """Fewest closed bonds on any origin-to-boundary path in B(n)."""
    if n < 1:
        raise ValueError(f"box half-width must be >= 1, got {n}")
    g = region_graph(box((0, 0), n))
    return _defect_distance_raw(g, _aligned_open_mask(config, g))


def reach_with_defects(config: Config, k: int, n: int) -> bool:
    """Path from the origin to the box boundary with at most k closed bonds."""
    if k < 0:
        raise ValueError(f"defect budget must be >= 0, got {k}")
    return defect_distance(config, n) <= k


# ------------------------------------------------------- disconnecting bonds

def disconnecting_edges(edges: Iterable[Edge], origin: Site,
                        boundary_sites: Iterable[Site]) -> list[Edge]:
    """Bonds whose removal cuts the origin off from every boundary site.

    These are exactly the bridges of the graph for which the bridge's
    far side (seen from the origin) holds the entire boundary.
    """
    edges = list(edges)
    adj: dict = {}
    for j, e in enumerate(edges):
        u, v = e.endpoints()
        adj.setdefault(u, []).append((v, j))
        adj.setdefault(v, []).append((u, j))
    if origin not in adj:
        raise ValueError(f"origin {origin} is not in the graph")
    boundary = {s for s in boundary_sites if s in adj}
    if not boundary:
        raise ValueError("no boundary site lies in the graph")

    # iterative DFS from the origin: lowpoint bridges + boundary counts
    disc: dict = {}
    low: dict = {}
    bcount: dict = {}
    parent_edge: dict = {origin: -1}
    order = []
    stack = [(origin, iter(adj[origin]))]
    disc[origin] = low[origin] = 0
    bcount[origin] = 1 if origin in boundary else 0
    t = 1
    while stack:
        v, it = stack[-1]
        advanced = False
        for (w, j) in it:
            if j == parent_edge[v]:
                continue
            if w in disc:
                low[v] = min(low[v], disc[w])
            else:
                disc[w] = low[w] = t
                t += 1
                bcount[w] = 1 if w in boundary else 0
                parent_edge[w] = j
                order.append(w)
                stack.append((w, iter(adj[w])))
                advanced = True
                break
        if not advanced:
            stack.pop()
            if stack:
                p = stack[-1][0]
                low[p] = min(low[p], low[v])
                bcount[p] += bcount[v]

    total = sum(1 for s in boundary if s in disc)
    if total == 0:
        raise ValueError("boundary unreachable from the origin")
    cut = set()
    for w in order:
        j = parent_edge[w]
        if low[w] == disc[w] and bcount[w] == total:
            cut.add(j)
    return [edges[j] for j in sorted(cut)]
