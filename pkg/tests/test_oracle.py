"""Exact enumeration oracles: Bernoulli counts and ordering averages."""

import math
from fractions import Fraction

import pytest

from pondlab.lattice import annulus, box
from pondlab.oracle import (
    MAX_BERNOULLI_EDGES,
    OracleError,
    TinyGraph,
    explicit_weights,
    oc_circuit_around,
    oc_clusters,
    oc_connected,
    oc_max_disjoint_paths,
    oc_reach_with_defects,
    oc_reachable,
    oracle_bernoulli_counts,
    oracle_bernoulli_event,
    oracle_invasion_event,
    ordered_invasion,
    probability_from_counts,
)


def path_graph(sites):
    return TinyGraph(edge_list=tuple(zip(sites, sites[1:])), origin=sites[0])


def full_mask(g):
    return (1 << g.n_edges) - 1


# ------------------------------------------------------------- construction

def test_tiny_graph_validation():
    with pytest.raises(OracleError):
        TinyGraph(edge_list=(((0, 0), (0, 0)),), origin=(0, 0))
    with pytest.raises(OracleError):
        TinyGraph(edge_list=(((0, 0), (1, 0)), ((1, 0), (0, 0))), origin=(0, 0))


def test_from_region():
    g = TinyGraph.from_region(box((0, 0), 1))
    assert g.n_edges == 12
    assert len(g.vertices()) == 9
    a = TinyGraph.from_region(annulus((0, 0), 0, 2))
    assert a.n_edges == 36
    assert (0, 0) not in {v for e in a.edge_list for v in e}


def test_explicit_weights_validation():
    g = path_graph([(0, 0), (1, 0), (2, 0)])
    with pytest.raises(OracleError, match="duplicate"):
        explicit_weights(g, [0.3, 0.3])
    with pytest.raises(OracleError):
        explicit_weights(g, [0.3])
    h = explicit_weights(g, {((0, 0), (1, 0)): 0.2, ((2, 0), (1, 0)): 0.7})
    assert h.weight_of_index(0) == 0.2
    assert h.weight_of_pair((1, 0), (2, 0)) == 0.7
    with pytest.raises(OracleError, match="no weight"):
        explicit_weights(g, {((0, 0), (1, 0)): 0.2})


# ---------------------------------------------------------------- Bernoulli

def test_single_bond_probability():
    g = path_graph([(0, 0), (1, 0)])
    prob = oracle_bernoulli_event(g, Fraction(1, 3),
                                  lambda gr, m: bool(m & 1))
    assert prob == Fraction(1, 3)


def test_two_bond_series_and_parallel():
    series = path_graph([(0, 0), (1, 0), (2, 0)])
    p = Fraction(1, 2)
    conn = oracle_bernoulli_event(
        series, p, lambda g, m: oc_connected(g, m, [(0, 0)], [(2, 0)]))
    assert conn == Fraction(1, 4)

    square = TinyGraph(
        edge_list=(((0, 0), (1, 0)), ((1, 0), (1, 1)),
                   ((0, 0), (0, 1)), ((0, 1), (1, 1))),
        origin=(0, 0))
    par = oracle_bernoulli_event(
        square, p, lambda g, m: oc_connected(g, m, [(0, 0)], [(1, 1)]))
    # two independent 2-bond routes: 1 - (1 - p^2)^2
    assert par == 1 - (1 - p ** 2) ** 2


def test_counts_total_and_monotonicity():
    g = TinyGraph.from_region(box((0, 0), 1))
    counts = oracle_bernoulli_counts(
        g, lambda gr, m: oc_connected(gr, m, [(-1, -1)], [(1, 1)]))
    assert counts.sum() <= 2 ** 12
    assert counts[0] == 0 and counts[12] == 1
    for k in range(13):
        assert 0 <= counts[k] <= math.comb(12, k)
    # a monotone event satisfies a rising fraction of k-bond layouts
    fracs = [counts[k] / math.comb(12, k) for k in range(13)]
    assert all(a <= b + 1e-12 for a, b in zip(fracs, fracs[1:]))


def test_probability_guards():
    g = path_graph([(0, 0), (1, 0)])
    with pytest.raises(OracleError, match="denominator"):
        oracle_bernoulli_event(g, Fraction(1, 127), lambda gr, m: True)
    with pytest.raises(OracleError, match="range"):
        probability_from_counts([0, 1], 1, Fraction(3, 2))
    big = TinyGraph(
        edge_list=tuple(((i, 0), (i + 1, 0)) for i in range(MAX_BERNOULLI_EDGES + 1)),
        origin=(0, 0))
    with pytest.raises(OracleError, match="limit"):
        oracle_bernoulli_counts(big, lambda gr, m: True)


# ----------------------------------------------------- naive route helpers

def test_reachable_and_clusters():
    g = TinyGraph.from_region(box((0, 0), 1))
    assert oc_reachable(g, 0, [(0, 0)]) == {(0, 0)}
    comps = oc_clusters(g, 0)
    assert len(comps) == 9 and all(len(c) == 1 for c in comps)
    comps = oc_clusters(g, full_mask(g))
    assert len(comps) == 1 and len(comps[0]) == 9


def test_circuit_detection_on_unit_ring():
    ring_sites = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0),
                  (-1, -1), (0, -1), (1, -1)]
    edges = tuple((ring_sites[i], ring_sites[(i + 1) % 8]) for i in range(8))
    g = TinyGraph(edge_list=edges, origin=(1, 0))
    assert oc_circuit_around(g, full_mask(g))
    for drop in range(8):
        assert not oc_circuit_around(g, full_mask(g) ^ (1 << drop))


def test_circuit_requires_enclosure():
    # an open square off to the side does not wrap the centre
    square = TinyGraph(
        edge_list=(((2, 0), (3, 0)), ((3, 0), (3, 1)),
                   ((3, 1), (2, 1)), ((2, 1), (2, 0))),
        origin=(2, 0))
    assert not oc_circuit_around(square, full_mask(square))


def test_disjoint_path_counts():
    g = TinyGraph(
        edge_list=(((0, 0), (1, 0)), ((1, 0), (2, 0)),
                   ((0, 0), (0, 1)), ((0, 1), (2, 0))),
        origin=(0, 0))
    src, dst = {(0, 0)}, {(2, 0)}
    assert oc_max_disjoint_paths(g, full_mask(g), src, dst) == 2
    assert oc_max_disjoint_paths(g, full_mask(g) ^ 2, src, dst) == 1
    assert oc_max_disjoint_paths(g, 0, src, dst) == 0
    # shared interior vertex forces a single path
    waist = TinyGraph(
        edge_list=(((0, 0), (1, 0)), ((0, 0), (0, 1)), ((0, 1), (1, 1)),
                   ((1, 1), (1, 0)), ((1, 0), (2, 0)), ((1, 0), (2, 1))),
        origin=(0, 0))
    n = oc_max_disjoint_paths(waist, full_mask(waist),
                              {(0, 0)}, {(2, 0), (2, 1)})
    assert n == 1


def test_reach_with_defects():
    g = path_graph([(0, 0), (1, 0), (2, 0)])
    targets = {(2, 0)}
    assert oc_reach_with_defects(g, 0, 2, targets)
    assert not oc_reach_with_defects(g, 0, 1, targets)
    assert oc_reach_with_defects(g, 1, 1, targets)   # first bond open
    assert oc_reach_with_defects(g, 3, 0, targets)
    with pytest.raises(OracleError):
        oc_reach_with_defects(g, 0, -1, targets)


# ------------------------------------------------------ ordering enumeration

def test_race_on_branching_path_is_one_third():
    # origin o with a stub to a and a 2-bond branch to c through b:
    # c is reached first iff the stub bond is the most expensive of three
    g = TinyGraph(
        edge_list=(((0, 0), (-1, 0)), ((0, 0), (1, 0)), ((1, 0), (2, 0))),
        origin=(0, 0))

    def c_before_a(d):
        order = d.trace.sites()
        return order.index((2, 0)) < order.index((-1, 0))

    assert oracle_invasion_event(g, c_before_a) == Fraction(1, 3)


def test_first_growth_step_is_uniform():
    g = TinyGraph(
        edge_list=(((0, 0), (1, 0)), ((0, 0), (0, 1)), ((0, 0), (-1, 0))),
        origin=(0, 0))

    def starts_east(d):
        return tuple(d.trace.edge_b[0]) == (1, 0)

    assert oracle_invasion_event(g, starts_east) == Fraction(1, 3)


def test_value_dependent_predicate_rejected():
    g = path_graph([(0, 0), (1, 0), (2, 0)])
    with pytest.raises(OracleError, match="ordering-measurable"):
        oracle_invasion_event(g, lambda d: bool(d.trace.tau.max() > 0.5))


def test_ordering_cap():
    g = path_graph([(i, 0) for i in range(10)])
    with pytest.raises(OracleError, match="ordering limit"):
        oracle_invasion_event(g, lambda d: True)


def test_ordered_invasion_follows_rank():
    g = path_graph([(0, 0), (1, 0), (2, 0)])
    tr = ordered_invasion(g, (1, 0))
    # bond 1 is ranked cheaper, but bond 0 is the only reachable start
    assert [tuple(b) for b in tr.edge_b] == [(1, 0), (2, 0)]
    assert tr.tau[0] > tr.tau[1]


def test_outlet_count_distribution_on_path():
    # on a 2-bond path from the end, outlets = records from the right:
    # orderings 12, 21 -> outlet counts 1, 2; mean = 3/2
    g = path_graph([(0, 0), (1, 0), (2, 0)])
    one = oracle_invasion_event(g, lambda d: d.n_outlets == 1)
    two = oracle_invasion_event(g, lambda d: d.n_outlets == 2)
    assert one == two == Fraction(1, 2)
