"""Geometry invariants: region counts, canonical bonds, dual mapping."""

import random

import pytest

from pondlab.lattice import (
    Annulus,
    Box,
    DualEdge,
    Edge,
    Orientation,
    Rectangle,
    annulus,
    boundary,
    box,
    dual_edge,
    dual_site_norm2,
    interior_dual_edges,
    interior_dual_sites,
    norm,
    primal_edge,
    rectangle,
    region_edges,
    region_sites,
)

H, V = Orientation.H, Orientation.V


def test_box_site_count():
    assert len(region_sites(box((0, 0), 2))) == 25
    assert len(region_sites(box((3, -1), 2))) == 25
    assert len(region_sites(box((0, 0), 0))) == 1


def test_boundary_ring_count():
    assert len(boundary(box((0, 0), 2))) == 16
    assert len(boundary(box((0, 0), 1))) == 8
    assert boundary(box((5, 5), 0)) == [(5, 5)]
    for n in (1, 2, 3, 7):
        assert len(boundary(box((0, 0), n))) == 8 * n


def test_box_edge_count():
    assert len(region_edges(box((0, 0), 1))) == 12
    # 2 * 2n(2n+1) bonds in a (2n+1)^2 block
    assert len(region_edges(box((0, 0), 2))) == 40


def test_annulus_counts():
    ann = annulus((0, 0), 1, 2)
    assert len(region_sites(ann)) == 16
    # one-site-thick ring: only the 16 tangential bonds survive
    assert len(region_edges(ann)) == 16
    punctured = annulus((0, 0), 0, 2)
    assert len(region_sites(punctured)) == 24
    # bonds of box(0,2) minus the 4 touching the origin
    assert len(region_edges(punctured)) == 36


def test_edge_membership_needs_both_ends():
    ann = annulus((0, 0), 0, 2)
    edges = set(region_edges(ann))
    assert Edge(0, 0, H) not in edges  # touches the removed origin
    assert Edge(1, 0, H) in edges


def test_rectangle_counts():
    r = rectangle(0, 2, 0, 1)
    assert len(region_sites(r)) == 6
    es = region_edges(r)
    assert len(es) == 7
    assert sum(1 for e in es if e.o == H) == 4
    assert sum(1 for e in es if e.o == V) == 3


def test_region_validation():
    with pytest.raises(ValueError):
        Box(0, 0, -1)
    with pytest.raises(ValueError):
        Annulus(0, 0, 2, 2)
    with pytest.raises(ValueError):
        Rectangle(3, 1, 0, 0)


def test_canonical_edge_from_endpoints():
    assert Edge.from_endpoints((0, 0), (1, 0)) == Edge(0, 0, H)
    assert Edge.from_endpoints((1, 0), (0, 0)) == Edge(0, 0, H)
    assert Edge.from_endpoints((3, 6), (3, 5)) == Edge(3, 5, V)
    with pytest.raises(ValueError):
        Edge.from_endpoints((0, 0), (1, 1))
    with pytest.raises(ValueError):
        Edge.from_endpoints((0, 0), (0, 0))


def test_dual_of_named_bonds():
    # horizontal bond through the origin crosses the vertical dual bond
    # whose integer representative pair is (0, 0)-(0, -1)
    d = dual_edge(Edge(0, 0, H))
    assert d == DualEdge(0, -1, V)
    assert d.real_endpoints() == ((0.5, -0.5), (0.5, 0.5))
    # vertical bond (3,5)-(3,6) crosses the horizontal dual bond (2,5)-(3,5)
    d2 = dual_edge(Edge(3, 5, V))
    assert d2 == DualEdge(2, 5, H)
    assert d2.endpoints() == ((2, 5), (3, 5))


def test_dual_roundtrip_random():
    rng = random.Random(2026)
    for _ in range(10_000):
        e = Edge(rng.randrange(-500, 500), rng.randrange(-500, 500),
                 H if rng.random() < 0.5 else V)
        assert primal_edge(dual_edge(e)) == e
    for _ in range(10_000):
        d = DualEdge(rng.randrange(-500, 500), rng.randrange(-500, 500),
                     H if rng.random() < 0.5 else V)
        assert dual_edge(primal_edge(d)) == d


def test_dual_crosses_at_midpoint():
    rng = random.Random(7)
    for _ in range(1000):
        e = Edge(rng.randrange(-40, 40), rng.randrange(-40, 40),
                 H if rng.random() < 0.5 else V)
        (ax, ay), (bx, by) = e.endpoints()
        (cx, cy), (dx, dy) = dual_edge(e).real_endpoints()
        assert ((ax + bx) / 2, (ay + by) / 2) == ((cx + dx) / 2, (cy + dy) / 2)
        # and the two unit segments are perpendicular
        assert (bx - ax) * (dx - cx) + (by - ay) * (dy - cy) == 0


def test_edge_key_roundtrip():
    rng = random.Random(99)
    seen = set()
    for _ in range(10_000):
        e = Edge(rng.randrange(-1000, 1000), rng.randrange(-1000, 1000),
                 H if rng.random() < 0.5 else V)
        k = e.key()
        assert Edge.from_key(k) == e
        seen.add(k)
    with pytest.raises(ValueError):
        Edge(1 << 20, 0, H).key()


def test_norms():
    assert norm((3, -5)) == 5
    assert Edge(0, 0, H).norm() == 1
    assert Edge(-3, 2, V).norm() == 3
    assert dual_site_norm2((0, 0)) == 1  # the site (1/2, 1/2)
    assert dual_site_norm2((-1, -1)) == 1
    assert dual_site_norm2((1, 0)) == 3  # the site (3/2, 1/2)


def test_interior_dual_region():
    assert len(interior_dual_sites(2)) == 16
    duals = interior_dual_edges(2)
    assert len(duals) == 24
    partners = {primal_edge(d) for d in duals}
    ring = {e for e in region_edges(box((0, 0), 2))
            if min(norm(a) for a in [*e.endpoints()]) == 2}
    assert partners == set(region_edges(box((0, 0), 2))) - ring
    assert len(ring) == 16


def test_edge_helpers():
    e = Edge(2, 3, H)
    assert e.other_end((2, 3)) == (3, 3)
    assert e.other_end((3, 3)) == (2, 3)
    assert e.touches((2, 3)) and not e.touches((4, 3))
    with pytest.raises(ValueError):
        e.other_end((0, 0))
