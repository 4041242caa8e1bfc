"""
Exact oracles on tiny graphs.
=============================

Two independent verification engines back the Monte Carlo machinery:

* Bernoulli enumeration: every subset of a graph's bonds (at most 24)
  is visited once, predicates are tallied by open-bond count, and the
  event probability comes out as an exact rational in p.

* Ordering enumeration: invasion-style events depend only on the
  relative order of the bond weights, so averaging a predicate over
  all |E|! orderings (at most 8 bonds) gives its exact probability.
  Predicates that peek at weight VALUES rather than the ordering are
  detected by running each ordering under two different order-preserving
  weight embeddings and rejected.

The connectivity predicates in here are deliberately naive (sets and
BFS, no arrays, no flow) so that they share nothing with the
production detectors they certify.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .invasion import InvasionTrace, PondDecomposition, decompose_ponds, run_invasion
from .lattice import Region, Site, region_edges

MAX_BERNOULLI_EDGES = 24
MAX_ORDERING_EDGES = 8

VertexPair = tuple[Site, Site]


class OracleError(ValueError):
    pass


@dataclass
class TinyGraph:
    """A finite graph with integer-pair vertices, small enough to enumerate."""

    edge_list: tuple
    origin: Site
    region: Optional[Region] = None
    name: str = ""
    _adj: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        seen = set()
        for (u, v) in self.edge_list:
            if u == v:
                raise OracleError(f"self-loop at {u}")
            key = frozenset((u, v))
            if key in seen:
                raise OracleError(f"duplicate bond {u}-{v}")
            seen.add(key)
        self.edge_list = tuple((tuple(u), tuple(v)) for u, v in self.edge_list)

    @classmethod
    def from_region(cls, region: Region, origin: Site = (0, 0), name: str = "") -> "TinyGraph":
        edges = tuple(e.endpoints() for e in region_edges(region))
        return cls(edge_list=edges, origin=origin, region=region, name=name)

    @property
    def n_edges(self) -> int:
        return len(self.edge_list)

    def vertices(self) -> set[Site]:
        out = {self.origin}
        for u, v in self.edge_list:
            out.add(u)
            out.add(v)
        return out

    def adjacency(self) -> dict:
        """vertex -> list of (neighbour, edge index), built once."""
        if not self._adj:
            for i, (u, v) in enumerate(self.edge_list):
                self._adj.setdefault(u, []).append((v, i))
                self._adj.setdefault(v, []).append((u, i))
            self._adj.setdefault(self.origin, [])
        return self._adj


@dataclass(frozen=True)
class ExplicitWeights:
    """Hand-assigned distinct weights on a TinyGraph; feeds run_invasion."""

    graph: TinyGraph
    values: tuple

    def weight_of_index(self, i: int) -> float:
        return self.values[i]

    def weight_of_pair(self, u: Site, v: Site) -> float:
        for i, (a, b) in enumerate(self.graph.edge_list):
            if (a, b) == (u, v) or (a, b) == (v, u):
                return self.values[i]
        raise KeyError(f"no bond {u}-{v}")


def explicit_weights(graph: TinyGraph,
                     values: Union[Sequence[float], dict]) -> ExplicitWeights:
    """Wrap explicit weights for the reference invasion engine.

    ``values`` is either a sequence aligned with graph.edge_list or a
    mapping from (u, v) pairs.  Duplicate weights are rejected: the
    growth process needs a strict order.
    """
    if isinstance(values, dict):
        vals = []
        for (u, v) in graph.edge_list:
            if (u, v) in values:
                vals.append(values[(u, v)])
            elif (v, u) in values:
                vals.append(values[(v, u)])
            else:
                raise OracleError(f"no weight given for bond {u}-{v}")
        values = vals
    values = tuple(float(x) for x in values)
    if len(values) != graph.n_edges:
        raise OracleError(f"need {graph.n_edges} weights, got {len(values)}")
    if len(set(values)) != len(values):
        raise OracleError("duplicate weights; the growth order would be ambiguous")
    return ExplicitWeights(graph=graph, values=values)


# ---------------------------------------------------------------- Bernoulli

def _coerce_p(p) -> Fraction:
    q = Fraction(p) if not isinstance(p, Fraction) else p
    if q.denominator > 64:
        raise OracleError(f"threshold denominator too fine for exact work: {q}")
    if not 0 <= q <= 1:
        raise OracleError(f"threshold out of range: {q}")
    return q


def oracle_bernoulli_counts(graph: TinyGraph,
                            predicate: Callable[[TinyGraph, int], bool]) -> np.ndarray:
    """Satisfying-configuration counts grouped by open-bond number.

    counts[k] = number of bond subsets of size k for which the
    predicate holds.  One full enumeration serves every threshold.
    """
    E = graph.n_edges
    if E > MAX_BERNOULLI_EDGES:
        raise OracleError(f"{E} bonds exceed the enumeration limit {MAX_BERNOULLI_EDGES}")
    counts = np.zeros(E + 1, dtype=np.int64)
    for mask in range(1 << E):
        if predicate(graph, mask):
            counts[mask.bit_count()] += 1
    return counts


def probability_from_counts(counts: Sequence[int], n_edges: int, p) -> Fraction:
    q = _coerce_p(p)
    total = Fraction(0)
    for k, c in enumerate(counts):
        if c:
            total += int(c) * q ** k * (1 - q) ** (n_edges - k)
    return total


def oracle_bernoulli_event(graph: TinyGraph, p,
                           predicate: Callable[[TinyGraph, int], bool]) -> Fraction:
    """Exact probability that the predicate holds under i.i.d. open bonds."""
    counts = oracle_bernoulli_counts(graph, predicate)
    return probability_from_counts(counts, graph.n_edges, p)


# ------------------------------------------------- naive connectivity routes

def oc_reachable(graph: TinyGraph, mask: int, sources: Iterable[Site]) -> set[Site]:
    """Sites joined to the sources by open bonds (BFS on sets)."""
    adj = graph.adjacency()
    todo = [s for s in sources if s in adj]
    seen = set(todo)
    while todo:
        v = todo.pop()
        for w, i in adj[v]:
            if (mask >> i) & 1 and w not in seen:
                seen.add(w)
                todo.append(w)
    return seen


def oc_connected(graph: TinyGraph, mask: int,
                 sources: Iterable[Site], targets: Iterable[Site]) -> bool:
    reach = oc_reachable(graph, mask, sources)
    return any(t in reach for t in targets)


def oc_clusters(graph: TinyGraph, mask: int) -> list[set[Site]]:
    """Open clusters, singletons included, largest first."""
    left = set(graph.vertices())
    out = []
    while left:
        v = next(iter(left))
        comp = oc_reachable(graph, mask, [v])
        out.append(comp)
        left -= comp
    out.sort(key=len, reverse=True)
    return out


def oc_circuit_around(graph: TinyGraph, mask: int, center: Site = (0, 0)) -> bool:
    """Is there an open cycle enclosing the centre?

    Parity test on a ray from the centre: a cycle of lattice bonds
    encloses (cx, cy) iff it crosses the half-line y = cy + 1/2,
    x > cx an odd number of times, i.e. uses an odd number of vertical
    bonds with lower end (x, cy), x > cx.  Odd-parity cycles are found
    with a two-layer double cover: flip layers on marked bonds and look
    for a vertex connected to its own twin.
    """
    cx, cy = center
    marked = set()
    for i, (u, v) in enumerate(graph.edge_list):
        if u[0] == v[0] and abs(u[1] - v[1]) == 1 and u[0] > cx:
            if min(u[1], v[1]) == cy:
                marked.add(i)
    adj = graph.adjacency()
    seen: set = set()
    for start in graph.vertices():
        if (start, 0) in seen:
            continue
        comp = set()
        todo = [(start, 0)]
        comp.add((start, 0))
        while todo:
            v, layer = todo.pop()
            for w, i in adj[v]:
                if not (mask >> i) & 1:
                    continue
                nxt = (w, layer ^ 1 if i in marked else layer)
                if nxt not in comp:
                    comp.add(nxt)
                    todo.append(nxt)
        seen |= comp
        if any((v, 0) in comp and (v, 1) in comp for v, _ in comp):
            return True
    return False


def oc_max_disjoint_paths(graph: TinyGraph, mask: int,
                          sources: set[Site], targets: set[Site],
                          state_cap: int = 2_000_000) -> int:
    """Maximum number of open paths from sources to targets that are
    pairwise disjoint on non-exempt vertices (sources and targets are
    exempt, and bonds are never shared).

    Exhaustive: recursively tries every packing of simple paths.  Paths
    are trimmed at their first target contact.  Only usable on small,
    sparsish instances; blows up (raises) past state_cap visited states.
    """
    adj = graph.adjacency()
    exempt = sources | targets
    budget = [state_cap]

    def paths_from(used_v: frozenset, used_e: frozenset):
        """All trimmed simple open paths avoiding used material."""
        found = []

        def dfs(v, interior, edges_used, path_vseen):
            for w, i in adj[v]:
                if not (mask >> i) & 1 or i in used_e or i in edges_used:
                    continue
                if w in path_vseen:
                    continue
                if w in targets:
                    found.append((interior, edges_used | {i}))
                    continue
                if w in exempt:
                    dfs(w, interior, edges_used | {i}, path_vseen | {w})
                elif w not in used_v:
                    dfs(w, interior | {w}, edges_used | {i}, path_vseen | {w})

        for s in sources:
            if s in adj:
                dfs(s, frozenset(), frozenset(), frozenset({s}))
        return found

    memo: dict = {}

    def best(used_v: frozenset, used_e: frozenset) -> int:
        key = (used_v, used_e)
        if key in memo:
            return memo[key]
        budget[0] -= 1
        if budget[0] < 0:
            raise OracleError("disjoint-path search exceeded its state budget")
        top = 0
        for interior, edges in paths_from(used_v, used_e):
            top = max(top, 1 + best(used_v | interior, used_e | edges))
        memo[key] = top
        return top

    return best(frozenset(), frozenset())


def oc_reach_with_defects(graph: TinyGraph, mask: int, k: int,
                          targets: set[Site]) -> bool:
    """Can the origin reach a target crossing at most k closed bonds?

    Layered-closure formulation: repeatedly take the open closure, then
    allow one closed hop, k times over.
    """
    if k < 0:
        raise OracleError(f"defect budget must be >= 0, got {k}")
    adj = graph.adjacency()
    layer = oc_reachable(graph, mask, [graph.origin])
    for _ in range(k):
        if any(t in layer for t in targets):
            return True
        hop = set()
        for v in layer:
            for w, i in adj[v]:
                if not (mask >> i) & 1 and w not in layer:
                    hop.add(w)
        nxt = oc_reachable(graph, mask, layer | hop)
        if nxt == layer:
            return False
        layer = nxt
    return any(t in layer for t in targets)


# ------------------------------------------------------ ordering enumeration

def oracle_invasion_event(
        graph: TinyGraph,
        predicate: Callable[[PondDecomposition], bool],
        p_ref: float = 0.5) -> Fraction:
    """Exact probability of an ordering-measurable growth event.

    Runs the reference engine to exhaustion under every ordering of the
    bond weights.  Each ordering is evaluated under two different
    order-preserving embeddings of ranks into (0, 1); a predicate whose
    answer differs between them depends on weight values, not the
    ordering, and is rejected.
    """
    E = graph.n_edges
    if E > MAX_ORDERING_EDGES:
        raise OracleError(f"{E} bonds exceed the ordering limit {MAX_ORDERING_EDGES}")
    if E == 0:
        raise OracleError("graph has no bonds")
    hits = 0
    total = math.factorial(E)
    for order in itertools.permutations(range(E)):
        w1 = [0.0] * E
        w2 = [0.0] * E
        for rank, idx in enumerate(order):
            w1[idx] = (rank + 1) / (E + 1)
            w2[idx] = 0.4 * (rank + 1) / (E + 1)
        r1 = bool(predicate(decompose_ponds(
            run_invasion(explicit_weights(graph, w1)), p_ref=p_ref)))
        r2 = bool(predicate(decompose_ponds(
            run_invasion(explicit_weights(graph, w2)), p_ref=p_ref)))
        if r1 != r2:
            raise OracleError(
                "predicate is not ordering-measurable: its answer changed "
                "under an order-preserving reweighting")
        hits += r1
    return Fraction(hits, total)


def ordered_invasion(graph: TinyGraph, order: Sequence[int]) -> InvasionTrace:
    """Reference run where order[j] is the j-th cheapest bond."""
    E = graph.n_edges
    w = [0.0] * E
    for rank, idx in enumerate(order):
        w[idx] = (rank + 1) / (E + 1)
    return run_invasion(explicit_weights(graph, w))
