"""Growth engine, pond decomposition, and trace statistics."""

import numpy as np
import pytest
import scipy.stats

from pondlab.invasion import (
    InvasionTrace,
    decompose_ponds,
    invaded_statistics,
    pond_open_clusters,
    pond_radii,
    run_invasion,
)
from pondlab.lattice import Edge, box, region_edges
from pondlab.oracle import TinyGraph, explicit_weights
from pondlab.weights import WeightField


def line_graph(n_edges, origin=(0, 0)):
    edges = [((i, 0), (i + 1, 0)) for i in range(n_edges)]
    return TinyGraph(edge_list=tuple(edges), origin=origin)


def run_line(taus):
    g = line_graph(len(taus))
    return run_invasion(explicit_weights(g, taus))


# ------------------------------------------------------------ growth engine

def test_first_step_takes_cheapest_origin_bond():
    f = WeightField(seed=1, stream=0)
    tr = run_invasion(f, max_steps=1)
    incident = [Edge(0, 0, 0), Edge(-1, 0, 0), Edge(0, 0, 1), Edge(0, -1, 1)]
    best = min(f.weight(e) for e in incident)
    assert tr.n_steps == 1
    assert tr.tau[0] == best
    assert tuple(tr.edge_a[0]) == (0, 0)
    assert tr.new_mask[0]


def incident_edges(site):
    x, y = site
    return [Edge(x, y, 0), Edge(x - 1, y, 0), Edge(x, y, 1), Edge(x, y - 1, 1)]


def test_boundary_is_six_after_one_step():
    # 4 origin bonds, one invaded, the new site contributes 3 fresh ones
    for stream in range(5):
        f = WeightField(seed=9, stream=stream)
        tr = run_invasion(f, max_steps=1)
        assert tr.boundary_size == 6
        invaded = tr.edges()[0]
        ring = {e for s in tr.sites() for e in incident_edges(s)} - {invaded}
        assert len(ring) == 6
        assert tr.boundary_min == min(f.weight(e) for e in ring)


def test_star_graph_invades_in_weight_order():
    g = TinyGraph(
        edge_list=(((0, 0), (1, 0)), ((0, 0), (0, 1)),
                   ((0, 0), (-1, 0)), ((0, 0), (0, -1))),
        origin=(0, 0))
    h = explicit_weights(g, [0.7, 0.1, 0.5, 0.3])
    tr = run_invasion(h)
    assert tr.stop_reason == "exhausted"
    assert list(tr.tau) == [0.1, 0.3, 0.5, 0.7]
    assert [tuple(b) for b in tr.edge_b] == [(0, 1), (0, -1), (-1, 0), (1, 0)]
    assert tr.new_mask.all()
    assert tr.boundary_size == 0
    assert tr.boundary_min is None


def test_greedy_order_on_a_line_is_positional():
    # on a path the boundary holds one bond, so trace order is positional
    taus = [0.9, 0.2, 0.8, 0.1]
    tr = run_line(taus)
    assert list(tr.tau) == taus
    assert [tuple(b) for b in tr.edge_b] == [(1, 0), (2, 0), (3, 0), (4, 0)]


def test_cycle_closing_bond_marked_not_new():
    # square: three cheap sides then the closing fourth
    g = TinyGraph(
        edge_list=(((0, 0), (1, 0)), ((1, 0), (1, 1)),
                   ((1, 1), (0, 1)), ((0, 1), (0, 0))),
        origin=(0, 0))
    tr = run_invasion(explicit_weights(g, [0.1, 0.2, 0.3, 0.4]))
    assert list(tr.new_mask) == [True, True, True, False]
    assert tr.n_steps == 4
    assert len(tr.sites()) == 4


def test_kernel_matches_reference_engine():
    # the finite engine on a box reproduces the lattice kernel until the
    # cluster first touches the box edge, i.e. the whole exit-radius run
    N = 8
    region = box((0, 0), N)
    edges = region_edges(region)
    g = TinyGraph(edge_list=tuple(e.endpoints() for e in edges), origin=(0, 0))
    for stream in range(6):
        f = WeightField(seed=42, stream=stream)
        fast = run_invasion(f, exit_radius=N)
        assert fast.stop_reason == "exit_radius"
        h = explicit_weights(g, [f.weight(e) for e in edges])
        slow = run_invasion(h, max_steps=fast.n_steps)
        np.testing.assert_array_equal(fast.edge_a, slow.edge_a)
        np.testing.assert_array_equal(fast.edge_b, slow.edge_b)
        np.testing.assert_array_equal(fast.new_mask, slow.new_mask)
        np.testing.assert_allclose(fast.tau, slow.tau, rtol=0, atol=0)


def test_stop_rules():
    f = WeightField(seed=3, stream=1)
    a = run_invasion(f, max_steps=200)
    assert a.stop_reason == "max_steps" and a.n_steps == 200

    b = run_invasion(f, exit_radius=6)
    assert b.stop_reason == "exit_radius"
    norms = b.site_norms()
    assert norms[-1] >= 6
    assert (norms[:-1] < 6).all()

    c = run_invasion(f, max_steps=10 ** 6, exit_radius=6)
    assert c.stop_reason == "exit_radius"
    assert c.n_steps == b.n_steps


def test_run_validation():
    f = WeightField(seed=0, stream=0)
    with pytest.raises(ValueError):
        run_invasion(f)
    with pytest.raises(ValueError):
        run_invasion(f, max_steps=0)
    with pytest.raises(ValueError):
        run_invasion(f, exit_radius=0)
    with pytest.raises(TypeError):
        run_invasion(object(), max_steps=5)


def test_workspace_reuse_is_clean():
    f1 = WeightField(seed=11, stream=4)
    f2 = WeightField(seed=12, stream=9)
    first = run_invasion(f1, max_steps=500)
    run_invasion(f2, max_steps=500)
    again = run_invasion(f1, max_steps=500)
    np.testing.assert_array_equal(first.edge_a, again.edge_a)
    np.testing.assert_array_equal(first.tau, again.tau)
    assert first.boundary_size == again.boundary_size


def test_trace_sites_and_edges():
    tr = run_invasion(WeightField(seed=5, stream=2), max_steps=300)
    sites = tr.sites()
    assert sites[0] == (0, 0)
    assert len(sites) == 1 + int(tr.new_mask.sum())
    assert len(set(sites)) == len(sites)
    edges = tr.edges()
    assert len(set(edges)) == len(edges) == 300
    # every bond touches a previously known site
    known = {(0, 0)}
    for i, e in enumerate(edges):
        a = tuple(tr.edge_a[i])
        b = tuple(tr.edge_b[i])
        assert a in known
        known.add(b)


# ------------------------------------------------------- pond decomposition

def test_outlets_on_hand_built_line():
    tr = run_line([0.9, 0.5, 0.7, 0.3, 0.2])
    d = decompose_ponds(tr)
    assert list(d.outlet_pos) == [0, 2, 3, 4]
    assert list(d.outlet_tau) == [0.9, 0.7, 0.3, 0.2]
    assert d.n_outlets == 4

    assert d.pond_slice(1) == slice(0, 0)
    assert d.pond_slice(2) == slice(1, 2)
    assert d.pond_slice(3) == slice(3, 3)
    assert d.pond_slice(4) == slice(4, 4)

    assert d.pond_sites(1) == [(0, 0)]
    assert d.pond_sites(2) == [(1, 0), (2, 0)]
    assert d.pond_sites(3) == [(3, 0)]
    assert d.pond_sites(4) == [(4, 0)]
    assert [e.endpoints() for e in d.pond_edges(2)] == [((1, 0), (2, 0))]

    r_hat, r_bar = pond_radii(d)
    assert list(r_hat) == [0, 2, 3, 4]
    assert list(r_bar) == [0, 1, 0, 0]

    assert d.outlet_edge(1) == Edge.from_endpoints((0, 0), (1, 0))
    assert d.outlet_far_end(1) == (1, 0)


def test_confirmation_rules():
    # growth past outlet 1 reaches distance 4 = 4 * its bond distance
    d = decompose_ponds(run_line([0.9, 0.5, 0.7, 0.3, 0.2]))
    assert list(d.confirmed) == [True, False, False, False]
    # outlet weight must clear the reference threshold
    d2 = decompose_ponds(run_line([0.4, 0.35, 0.3, 0.25, 0.2]))
    assert d2.n_outlets == 5
    assert not d2.confirmed.any()
    # an exit-radius stop caps the required reach; re-derive each flag
    total_confirmed = 0
    for stream in range(4):
        tr = run_invasion(WeightField(seed=21, stream=stream), exit_radius=32)
        d3 = decompose_ponds(tr)
        norms = tr.site_norms()
        for j, p_ in enumerate(d3.outlet_pos):
            p_ = int(p_)
            a, b = tr.edge_a[p_], tr.edge_b[p_]
            dist = max(np.abs(a).max(), np.abs(b).max())
            post = norms[p_ + 1:].max() if p_ + 1 < tr.n_steps else -1
            want = (post >= min(4 * dist, 32)
                    and tr.tau[p_] > 0.5 and tr.new_mask[p_])
            assert bool(d3.confirmed[j]) == bool(want)
        total_confirmed += d3.n_confirmed
    assert total_confirmed >= 1


def test_every_confirmed_outlet_weight_above_threshold():
    for stream in range(4):
        tr = run_invasion(WeightField(seed=33, stream=stream), exit_radius=48)
        d = decompose_ponds(tr)
        if d.n_confirmed:
            assert (d.outlet_tau[d.confirmed] > 0.5).all()


def test_suffix_maximum_property_random_runs():
    for stream in range(3):
        tr = run_invasion(WeightField(seed=17, stream=stream), max_steps=3000)
        d = decompose_ponds(tr)
        tau = tr.tau
        pos = set(int(p) for p in d.outlet_pos)
        # direct definition check on every position
        for i in range(len(tau)):
            is_suffix_max = i == len(tau) - 1 or tau[i] > tau[i + 1:].max()
            assert (i in pos) == is_suffix_max
        assert (np.diff(d.outlet_tau) < 0).all()
        assert tau[-1] == d.outlet_tau[-1]


def test_ponds_partition_the_trace():
    tr = run_invasion(WeightField(seed=23, stream=5), max_steps=2500)
    d = decompose_ponds(tr)
    covered = []
    for k in range(1, d.n_outlets + 1):
        s = d.pond_slice(k)
        covered.extend(range(s.start, s.stop))
    outlet_set = [int(p) for p in d.outlet_pos]
    all_idx = sorted(covered + outlet_set)
    assert all_idx == list(range(tr.n_steps))

    # pond sites are disjoint and cover everything except the last outlet's
    seen = {}
    for k in range(1, d.n_outlets + 1):
        for site in d.pond_sites(k):
            assert site not in seen, f"site {site} in ponds {seen[site]} and {k}"
            seen[site] = k
    total = len(seen)
    expected = 1 + int(tr.new_mask.sum())
    if tr.new_mask[d.outlet_pos[-1]]:
        expected -= 1  # final outlet's far end belongs to no pond
    assert total == expected


def test_radius_inequalities():
    for stream in range(4):
        tr = run_invasion(WeightField(seed=29, stream=stream), max_steps=4000)
        d = decompose_ponds(tr)
        r_hat, r_bar = pond_radii(d)
        assert (np.diff(r_hat) >= 0).all()
        assert (r_bar <= 2 * r_hat).all()
        assert (r_bar >= 0).all()
        # pond k lives inside the growth region present at outlet k
        for k in range(1, d.n_outlets + 1):
            for (x, y) in d.pond_sites(k):
                assert max(abs(x), abs(y)) <= r_hat[k - 1]


def test_pond_sites_match_slice_contents():
    tr = run_invasion(WeightField(seed=31, stream=7), max_steps=1500)
    d = decompose_ponds(tr)
    for k in range(2, min(d.n_outlets, 6) + 1):
        sites = set(d.pond_sites(k))
        far = d.outlet_far_end(k - 1)
        if far is not None:
            assert far in sites
        for e in d.pond_edges(k):
            a, b = e.endpoints()
            assert a in sites and b in sites


def test_pond_index_bounds():
    d = decompose_ponds(run_line([0.9, 0.2]))
    with pytest.raises(IndexError):
        d.pond_slice(0)
    with pytest.raises(IndexError):
        d.pond_sites(d.n_outlets + 1)


def test_empty_and_tiny_traces():
    d = decompose_ponds(run_line([0.5]))
    assert list(d.outlet_pos) == [0]
    assert d.pond_sites(1) == [(0, 0)]
    assert d.r_hat[0] == 0 and d.r_bar[0] == 0


def test_decompose_validation():
    tr = run_line([0.3, 0.2])
    with pytest.raises(ValueError):
        decompose_ponds(tr, p_ref=0.0)
    with pytest.raises(ValueError):
        decompose_ponds(tr, confirm_factor=0.5)


def test_pond_open_clusters():
    d = decompose_ponds(run_line([0.9, 0.5, 0.7, 0.3, 0.2]))
    # bond inside pond 2 has weight 0.5, closed at threshold 0.5
    closed = pond_open_clusters(d, 2)
    assert [c.sites for c in closed] == [1, 1]
    assert all(c.diameter == 0 for c in closed)
    open_ = pond_open_clusters(d, 2, p_ref=0.6)
    assert [(c.sites, c.diameter) for c in open_] == [(2, 1)]
    origin_pond = pond_open_clusters(d, 1)
    assert [(c.sites, c.diameter) for c in origin_pond] == [(1, 0)]


def test_pond_clusters_on_lattice_run():
    tr = run_invasion(WeightField(seed=41, stream=1), max_steps=3000)
    d = decompose_ponds(tr)
    for k in range(1, min(d.n_outlets, 5) + 1):
        clusters = pond_open_clusters(d, k)
        assert sum(c.sites for c in clusters) == len(d.pond_sites(k))
        diams = [c.diameter for c in clusters]
        assert diams == sorted(diams, reverse=True)
        if clusters:
            assert clusters[0].diameter <= max(d.r_bar[k - 1], 0)


# ------------------------------------------------------------- statistics

def test_invaded_statistics_against_scipy():
    tr = run_invasion(WeightField(seed=2, stream=0), max_steps=400)
    st = invaded_statistics(tr)
    ref = scipy.stats.kstest(tr.tau, lambda x: np.clip(x / 0.5, 0, 1))
    assert st.ks_to_uniform == pytest.approx(ref.statistic, abs=1e-12)
    assert st.n_steps == 400
    assert st.boundary_to_volume == tr.boundary_size / 400


def test_invaded_weights_concentrate_below_half():
    tr = run_invasion(WeightField(seed=7, stream=0), max_steps=20000)
    st = invaded_statistics(tr)
    assert st.mass_above_half < 0.05
    assert 0.8 < st.boundary_to_volume < 2.0
    assert st.ks_to_uniform < 0.15
    assert 0.2 < st.mean_tau < 0.3


def empty_trace():
    return InvasionTrace(
        origin=(0, 0),
        edge_a=np.empty((0, 2), dtype=np.int64),
        edge_b=np.empty((0, 2), dtype=np.int64),
        tau=np.empty(0),
        new_mask=np.empty(0, dtype=bool),
        stop_reason="exhausted", max_steps=None, exit_radius=None,
        boundary_size=0, boundary_min=None)


def test_degenerate_traces():
    with pytest.raises(ValueError):
        invaded_statistics(empty_trace())
    d = decompose_ponds(empty_trace())
    assert d.n_outlets == 0 and d.n_confirmed == 0
