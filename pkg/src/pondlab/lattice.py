"""
Square-lattice geometry: sites, bonds, dual bonds, finite regions.
=================================================================

Sites are integer pairs (x, y).  All distances are L-infinity:
``box(c, n)`` is the (2n+1) x (2n+1) block of sites within distance n
of c, ``boundary`` is the ring at distance exactly n, and
``annulus(c, m, n)`` is ``box(c, n)`` minus ``box(c, m)``.

A bond is stored in canonical form: lower-left endpoint plus an
orientation (H points to (x+1, y), V points to (x, y+1)).  The dual
lattice is shifted by (1/2, 1/2); the dual site (i+1/2, j+1/2) is
represented by the integer pair (i, j), so dual bonds reuse the same
canonical form on dual coordinates.  A bond crosses exactly one dual
bond and vice versa, and the two maps are inverse to each other.

A bond belongs to a region iff both of its endpoints do.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Union

Site = tuple[int, int]

# canonical ids pack coordinates into 21-bit fields, see Edge.key()
COORD_LIMIT = 1 << 20


class Orientation(IntEnum):
    H = 0
    V = 1


def norm(site: Site) -> int:
    """L-infinity norm of a site."""
    return max(abs(site[0]), abs(site[1]))


@dataclass(frozen=True, order=True)
class Edge:
    """A nearest-neighbour bond in canonical (lower-left, orientation) form."""

    x: int
    y: int
    o: Orientation

    def endpoints(self) -> tuple[Site, Site]:
        if self.o == Orientation.H:
            return (self.x, self.y), (self.x + 1, self.y)
        return (self.x, self.y), (self.x, self.y + 1)

    def other_end(self, site: Site) -> Site:
        a, b = self.endpoints()
        if site == a:
            return b
        if site == b:
            return a
        raise ValueError(f"{site} is not an endpoint of {self}")

    def touches(self, site: Site) -> bool:
        a, b = self.endpoints()
        return site == a or site == b

    def norm(self) -> int:
        """Distance of the bond from the origin (max endpoint norm)."""
        a, b = self.endpoints()
        return max(norm(a), norm(b))

    def key(self) -> int:
        """Canonical 43-bit integer id, stable across runs.

        Layout: (x + 2^20) << 22 | (y + 2^20) << 1 | orientation.
        Coordinates must stay below 2^20 in absolute value, which is far
        beyond any reachable simulation horizon.
        """
        if abs(self.x) >= COORD_LIMIT or abs(self.y) >= COORD_LIMIT:
            raise ValueError(f"coordinate out of range for edge key: {self}")
        return ((self.x + COORD_LIMIT) << 22) | ((self.y + COORD_LIMIT) << 1) | int(self.o)

    @classmethod
    def from_key(cls, key: int) -> "Edge":
        o = Orientation(key & 1)
        y = ((key >> 1) & ((1 << 21) - 1)) - COORD_LIMIT
        x = (key >> 22) - COORD_LIMIT
        return cls(x, y, o)

    @classmethod
    def from_endpoints(cls, a: Site, b: Site) -> "Edge":
        dx, dy = b[0] - a[0], b[1] - a[1]
        if (dx, dy) in ((1, 0), (-1, 0)):
            return cls(min(a[0], b[0]), a[1], Orientation.H)
        if (dx, dy) in ((0, 1), (0, -1)):
            return cls(a[0], min(a[1], b[1]), Orientation.V)
        raise ValueError(f"{a} and {b} are not nearest neighbours")


@dataclass(frozen=True, order=True)
class DualEdge:
    """A bond of the shifted lattice, in integer representation.

    The stored (x, y) is the integer representative of the dual site
    (x + 1/2, y + 1/2); orientation works exactly as for Edge.
    """

    x: int
    y: int
    o: Orientation

    def endpoints(self) -> tuple[Site, Site]:
        if self.o == Orientation.H:
            return (self.x, self.y), (self.x + 1, self.y)
        return (self.x, self.y), (self.x, self.y + 1)

    def real_endpoints(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """Endpoints in true half-integer coordinates."""
        (ax, ay), (bx, by) = self.endpoints()
        return (ax + 0.5, ay + 0.5), (bx + 0.5, by + 0.5)


def dual_site_norm2(d: Site) -> int:
    """Twice the L-infinity norm of the dual site represented by d.

    The true norm of (i+1/2, j+1/2) is max(|2i+1|, |2j+1|)/2; returning
    the doubled value keeps everything in integers.
    """
    return max(abs(2 * d[0] + 1), abs(2 * d[1] + 1))


def dual_edge(e: Edge) -> DualEdge:
    """The unique dual bond crossing e.

    A horizontal bond at (x, y) is crossed by the vertical dual bond
    whose integer representative is (x, y-1); a vertical bond at (x, y)
    is crossed by the horizontal dual bond at (x-1, y).
    """
    if e.o == Orientation.H:
        return DualEdge(e.x, e.y - 1, Orientation.V)
    return DualEdge(e.x - 1, e.y, Orientation.H)


def primal_edge(d: DualEdge) -> Edge:
    """Inverse of dual_edge."""
    if d.o == Orientation.V:
        return Edge(d.x, d.y + 1, Orientation.H)
    return Edge(d.x + 1, d.y, Orientation.V)


@dataclass(frozen=True)
class Box:
    cx: int
    cy: int
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError(f"box radius must be >= 0, got {self.n}")

    def contains(self, site: Site) -> bool:
        return max(abs(site[0] - self.cx), abs(site[1] - self.cy)) <= self.n


@dataclass(frozen=True)
class Annulus:
    cx: int
    cy: int
    m: int
    n: int

    def __post_init__(self):
        if not 0 <= self.m < self.n:
            raise ValueError(f"annulus needs 0 <= m < n, got m={self.m} n={self.n}")

    def contains(self, site: Site) -> bool:
        r = max(abs(site[0] - self.cx), abs(site[1] - self.cy))
        return self.m < r <= self.n


@dataclass(frozen=True)
class Rectangle:
    x0: int
    x1: int
    y0: int
    y1: int

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"degenerate rectangle {self}")

    def contains(self, site: Site) -> bool:
        return self.x0 <= site[0] <= self.x1 and self.y0 <= site[1] <= self.y1


Region = Union[Box, Annulus, Rectangle]


def box(center: Site, n: int) -> Box:
    return Box(center[0], center[1], n)


def annulus(center: Site, m: int, n: int) -> Annulus:
    return Annulus(center[0], center[1], m, n)


def rectangle(x0: int, x1: int, y0: int, y1: int) -> Rectangle:
    return Rectangle(x0, x1, y0, y1)


def region_sites(region: Region) -> list[Site]:
    """All sites of the region, in row-major order."""
    return list(_iter_sites(region))


def _iter_sites(region: Region) -> Iterator[Site]:
    if isinstance(region, Box):
        for y in range(region.cy - region.n, region.cy + region.n + 1):
            for x in range(region.cx - region.n, region.cx + region.n + 1):
                yield (x, y)
    elif isinstance(region, Annulus):
        for y in range(region.cy - region.n, region.cy + region.n + 1):
            for x in range(region.cx - region.n, region.cx + region.n + 1):
                if region.contains((x, y)):
                    yield (x, y)
    elif isinstance(region, Rectangle):
        for y in range(region.y0, region.y1 + 1):
            for x in range(region.x0, region.x1 + 1):
                yield (x, y)
    else:
        raise TypeError(f"not a region: {region!r}")


def region_edges(region: Region) -> list[Edge]:
    """All bonds with both endpoints in the region."""
    out = []
    for (x, y) in _iter_sites(region):
        if region.contains((x + 1, y)):
            out.append(Edge(x, y, Orientation.H))
        if region.contains((x, y + 1)):
            out.append(Edge(x, y, Orientation.V))
    return out


def boundary(b: Box) -> list[Site]:
    """The ring of sites at L-infinity distance exactly n from the centre."""
    if not isinstance(b, Box):
        raise TypeError("boundary is defined for boxes")
    if b.n == 0:
        return [(b.cx, b.cy)]
    out = []
    for site in _iter_sites(b):
        if max(abs(site[0] - b.cx), abs(site[1] - b.cy)) == b.n:
            out.append(site)
    return out


def interior_dual_sites(n: int) -> list[Site]:
    """Integer representatives of dual sites strictly inside box(0, n).

    These are the dual sites whose four surrounding primal sites all lie
    in the box: (i + 1/2, j + 1/2) for i, j in [-n, n-1].
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return [(i, j) for j in range(-n, n) for i in range(-n, n)]


def interior_dual_edges(n: int) -> list[DualEdge]:
    """Dual bonds with both endpoints strictly inside box(0, n).

    Their primal partners are exactly the bonds of box(0, n) that do not
    lie on the outermost ring.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    out = []
    for j in range(-n, n):
        for i in range(-n, n):
            if i + 1 < n:
                out.append(DualEdge(i, j, Orientation.H))
            if j + 1 < n:
                out.append(DualEdge(i, j, Orientation.V))
    return out
