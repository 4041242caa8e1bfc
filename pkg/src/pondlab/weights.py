"""
Counter-based bond weights and threshold configurations.
========================================================

Every bond of the lattice carries an i.i.d. Uniform[0, 1) weight.  The
weight is a pure function of (master seed, stream index, canonical bond
id), computed by a 64-bit mixing hash, so evaluation order is
irrelevant, any bond can be queried lazily, and two consumers of the
same (seed, stream) pair always see the same weight field.  Streams are
the unit of Monte Carlo independence: trial t of an experiment uses
stream base+t and nothing else.

Weights have the full 53-bit double resolution.  Thresholding at p
declares a bond open iff tau < p; ties (tau == p) are closed.  A dual
bond inherits the weight of the primal bond it crosses, so the dual
view "closed iff tau >= p" is consistent by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Protocol, Union

import numpy as np

from .lattice import DualEdge, Edge, Region, dual_edge, primal_edge, region_edges

_M64 = (1 << 64) - 1
_SEED_SALT = 0x9E3779B97F4A7C15
_STREAM_MUL = 0xD1B54A32D192ED03
_KEY_MUL = 0x8CB92BA72F3D8DD7
_INV_2_53 = 2.0 ** -53


def _fmix64(z: int) -> int:
    """Murmur3 finalizer, a 64-bit avalanche bijection."""
    z &= _M64
    z ^= z >> 33
    z = (z * 0xFF51AFD7ED558CCD) & _M64
    z ^= z >> 33
    z = (z * 0xC4CEB9FE1A85EC53) & _M64
    z ^= z >> 33
    return z


def _fmix64_np(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(33)
    z *= np.uint64(0xFF51AFD7ED558CCD)
    z ^= z >> np.uint64(33)
    z *= np.uint64(0xC4CEB9FE1A85EC53)
    z ^= z >> np.uint64(33)
    return z


def stream_state(seed: int, stream: int) -> int:
    """Per-stream hash state; weights are one more mix away."""
    return _fmix64(_fmix64((seed + _SEED_SALT) & _M64) ^ ((stream * _STREAM_MUL) & _M64))


def weight_from_state(state: int, key: int) -> float:
    h = _fmix64(state ^ ((key * _KEY_MUL) & _M64))
    return (h >> 11) * _INV_2_53


@dataclass(frozen=True)
class WeightField:
    """The lazily evaluated weight field for one (seed, stream) pair."""

    seed: int
    stream: int

    def __post_init__(self):
        if not 0 <= self.seed < 1 << 64:
            raise ValueError(f"master seed must be a 64-bit integer, got {self.seed}")
        if not 0 <= self.stream < 1 << 64:
            raise ValueError(f"stream index must be a 64-bit integer, got {self.stream}")

    @property
    def state(self) -> int:
        return stream_state(self.seed, self.stream)

    def weight(self, e: Union[Edge, DualEdge]) -> float:
        """Weight of a bond; a dual bond reports its primal partner's weight."""
        if isinstance(e, DualEdge):
            e = primal_edge(e)
        return weight_from_state(self.state, e.key())

    def weight_of_key(self, key: int) -> float:
        return weight_from_state(self.state, key)

    def weights_for_keys(self, keys: np.ndarray) -> np.ndarray:
        """Vectorised evaluation for an array of canonical bond ids."""
        keys = np.asarray(keys, dtype=np.uint64)
        mixed = _fmix64_np(np.uint64(self.state) ^ (keys * np.uint64(_KEY_MUL)))
        return (mixed >> np.uint64(11)) * _INV_2_53

    def weights_for_edges(self, edges: Iterable[Edge]) -> np.ndarray:
        keys = np.fromiter((e.key() for e in edges), dtype=np.uint64)
        return self.weights_for_keys(keys)


class WeightSource(Protocol):
    """Anything that can hand out bond weights (hash fields, explicit maps)."""

    def weight(self, e: Edge) -> float: ...

    def weights_for_edges(self, edges: Iterable[Edge]) -> np.ndarray: ...


@dataclass
class Config:
    """A thresholded weight configuration on one region.

    Bond i of ``edges`` is open iff ``taus[i] < p``.  The dual view is
    derived, not stored: the dual partner of bond i is closed iff
    ``taus[i] >= p``.
    """

    region: Region
    p: float
    edges: list[Edge]
    taus: np.ndarray
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.p}")
        if len(self.edges) != len(self.taus):
            raise ValueError("edge list and weight array disagree in length")

    @property
    def open_mask(self) -> np.ndarray:
        return self.taus < self.p

    def _edge_index(self, e: Edge) -> int:
        if not self._index:
            self._index.update({ed: i for i, ed in enumerate(self.edges)})
        try:
            return self._index[e]
        except KeyError:
            raise KeyError(f"{e} is not a bond of the region") from None

    def tau(self, e: Edge) -> float:
        return float(self.taus[self._edge_index(e)])

    def is_open(self, e: Edge) -> bool:
        return bool(self.taus[self._edge_index(e)] < self.p)

    def dual_is_closed(self, d: DualEdge) -> bool:
        """Closed-dual check for the partner of a bond of this region."""
        return not self.is_open(primal_edge(d))

    def open_edges(self) -> list[Edge]:
        mask = self.open_mask
        return [e for i, e in enumerate(self.edges) if mask[i]]


def threshold_config(source: WeightSource, p: float, region: Region) -> Config:
    """Evaluate the field on a region and threshold it at p."""
    edges = region_edges(region)
    taus = source.weights_for_edges(edges)
    return Config(region=region, p=p, edges=edges, taus=taus)


def explicit_config(region: Region, p: float, open_edges: Iterable[Edge]) -> Config:
    """Hand-built configuration: listed bonds open, everything else closed.

    Weights are synthesised below/above the threshold, which is all the
    detectors ever look at.
    """
    edges = region_edges(region)
    open_set = set(open_edges)
    unknown = open_set.difference(edges)
    if unknown:
        raise ValueError(f"open bonds outside the region: {sorted(unknown)[:3]}")
    taus = np.where([e in open_set for e in edges], p * 0.5, p + (1.0 - p) * 0.5)
    return Config(region=region, p=p, edges=edges, taus=np.asarray(taus, dtype=np.float64))
