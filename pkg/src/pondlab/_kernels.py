"""
Numba hot loops.
================

Everything in here is performance plumbing behind the public modules:
the invasion growth loop, union-find cluster labelling, graph searches
used by the detectors, and small exhaustive enumerators used by the
acceptance suite.  All kernels are deterministic pure functions of
their integer inputs; the weight hash is an exact twin of the one in
``weights.py`` and is cross-checked by tests.

The invasion kernel works on a dense coordinate window of half-width W
centred on the origin.  Visited marks are int32 stamps (one fresh stamp
per run), so workspaces are reused across millions of runs without any
clearing.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64

_KEY_MUL = U64(0x8CB92BA72F3D8DD7)
_COORD_OFF = np.int64(1 << 20)
_INV_2_53 = 2.0 ** -53

# stop codes returned by the invasion kernel
STOP_MAX_STEPS = 1
STOP_EXIT_RADIUS = 2
STOP_EXHAUSTED = 3
STOP_WINDOW_OVERFLOW = 4


@njit(cache=True, inline="always")
def _fmix64(z):
    z = U64(z)
    z ^= z >> U64(33)
    z = z * U64(0xFF51AFD7ED558CCD)
    z ^= z >> U64(33)
    z = z * U64(0xC4CEB9FE1A85EC53)
    z ^= z >> U64(33)
    return z


@njit(cache=True, inline="always")
def _tau(state, lx, ly, o):
    """Weight of the bond with canonical lower-left (lx, ly), orientation o."""
    key = U64(((lx + _COORD_OFF) << 22) | ((ly + _COORD_OFF) << 1) | o)
    h = _fmix64(U64(state) ^ (key * _KEY_MUL))
    return (h >> U64(11)) * _INV_2_53


@njit(cache=True)
def tau_of_keys(state, keys, out):
    for i in range(keys.shape[0]):
        h = _fmix64(U64(state) ^ (U64(keys[i]) * _KEY_MUL))
        out[i] = (h >> U64(11)) * _INV_2_53
    return out


@njit(cache=True, inline="always")
def _heap_push(heap_tau, heap_eid, size, t, eid):
    i = size
    heap_tau[i] = t
    heap_eid[i] = eid
    while i > 0:
        parent = (i - 1) >> 1
        if heap_tau[parent] <= heap_tau[i]:
            break
        heap_tau[parent], heap_tau[i] = heap_tau[i], heap_tau[parent]
        heap_eid[parent], heap_eid[i] = heap_eid[i], heap_eid[parent]
        i = parent
    return size + 1


@njit(cache=True, inline="always")
def _heap_pop(heap_tau, heap_eid, size):
    t = heap_tau[0]
    eid = heap_eid[0]
    size -= 1
    if size > 0:
        heap_tau[0] = heap_tau[size]
        heap_eid[0] = heap_eid[size]
        i = 0
        while True:
            left = 2 * i + 1
            if left >= size:
                break
            child = left
            right = left + 1
            if right < size and heap_tau[right] < heap_tau[left]:
                child = right
            if heap_tau[i] <= heap_tau[child]:
                break
            heap_tau[i], heap_tau[child] = heap_tau[child], heap_tau[i]
            heap_eid[i], heap_eid[child] = heap_eid[child], heap_eid[i]
            i = child
    return t, eid, size


@njit(cache=True)
def invade_lattice(state, max_steps, exit_radius, W, stamp_id,
                   site_stamp, edge_stamp,
                   heap_tau, heap_eid,
                   out_ax, out_ay, out_bx, out_by, out_tau, out_new):
    """Greedy growth from the origin on the square lattice.

    At each step the smallest-weight bond on the outer bond boundary is
    added.  Window coordinates are lattice coordinates plus W; the side
    is S = 2W + 1.  A site is visited iff site_stamp[idx] == stamp_id,
    likewise for pushed bonds, so workspaces need no clearing between
    runs.  Bond ids are (row-major site index) * 2 + orientation of the
    canonical lower-left endpoint.

    Returns (step count, stop code, boundary size, boundary minimum).
    The boundary minimum is -1.0 when the boundary is empty.
    """
    S = 2 * W + 1
    cap = out_tau.shape[0]
    heap_size = 0

    # seed: origin visited, its four bonds pushed
    oidx = W * S + W
    site_stamp[oidx] = stamp_id
    for k in range(4):
        if k == 0:
            lx, ly, o = 0, 0, 0
        elif k == 1:
            lx, ly, o = -1, 0, 0
        elif k == 2:
            lx, ly, o = 0, 0, 1
        else:
            lx, ly, o = 0, -1, 1
        eid = ((ly + W) * S + (lx + W)) * 2 + o
        edge_stamp[eid] = stamp_id
        heap_size = _heap_push(heap_tau, heap_eid, heap_size,
                               _tau(state, lx, ly, o), eid)

    n = 0
    stop = STOP_EXHAUSTED
    while heap_size > 0:
        if n >= cap or (max_steps >= 0 and n >= max_steps):
            stop = STOP_MAX_STEPS
            break
        t, eid, heap_size = _heap_pop(heap_tau, heap_eid, heap_size)
        o = eid & 1
        sidx = eid >> 1
        lx = sidx % S - W
        ly = sidx // S - W
        ax, ay = lx, ly
        if o == 0:
            bx, by = lx + 1, ly
        else:
            bx, by = lx, ly + 1
        a_seen = site_stamp[(ay + W) * S + (ax + W)] == stamp_id
        b_seen = site_stamp[(by + W) * S + (bx + W)] == stamp_id
        if a_seen and not b_seen:
            nx, ny = bx, by
        elif b_seen and not a_seen:
            nx, ny = ax, ay
            ax, ay, bx, by = bx, by, nx, ny
        else:
            nx, ny = ax, ay  # cycle-closing bond, no new site
        out_ax[n] = ax
        out_ay[n] = ay
        out_bx[n] = bx
        out_by[n] = by
        out_tau[n] = t
        new_site = not (a_seen and b_seen)
        out_new[n] = 1 if new_site else 0
        n += 1
        if new_site:
            site_stamp[(ny + W) * S + (nx + W)] = stamp_id
            r = max(abs(nx), abs(ny))
            if exit_radius >= 0 and r >= exit_radius:
                stop = STOP_EXIT_RADIUS
                break
            if r >= W:
                stop = STOP_WINDOW_OVERFLOW
                break
            for k in range(4):
                if k == 0:
                    lx2, ly2, o2 = nx, ny, 0
                elif k == 1:
                    lx2, ly2, o2 = nx - 1, ny, 0
                elif k == 2:
                    lx2, ly2, o2 = nx, ny, 1
                else:
                    lx2, ly2, o2 = nx, ny - 1, 1
                eid2 = ((ly2 + W) * S + (lx2 + W)) * 2 + o2
                if edge_stamp[eid2] != stamp_id:
                    edge_stamp[eid2] = stamp_id
                    heap_size = _heap_push(heap_tau, heap_eid, heap_size,
                                           _tau(state, lx2, ly2, o2), eid2)

    bmin = heap_tau[0] if heap_size > 0 else -1.0
    return n, stop, heap_size, bmin


@njit(cache=True)
def uf_find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        parent[i], i = root, parent[i]
    return root


@njit(cache=True)
def label_components(n_sites, edge_a, edge_b, active):
    """Union-find labelling; returns the root index per site.

    Only edges with active[i] True are merged.  Roots are path-halved,
    then flattened so labels[i] == labels[j] iff same cluster.
    """
    parent = np.arange(n_sites, dtype=np.int32)
    for i in range(edge_a.shape[0]):
        if active[i]:
            ra = uf_find(parent, edge_a[i])
            rb = uf_find(parent, edge_b[i])
            if ra != rb:
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
    for i in range(n_sites):
        parent[i] = uf_find(parent, i)
    return parent


@njit(cache=True)
def sets_intersect(labels, group_a, group_b):
    """Do any sites of the two groups share a cluster label?"""
    for i in range(group_a.shape[0]):
        la = labels[group_a[i]]
        for j in range(group_b.shape[0]):
            if labels[group_b[j]] == la:
                return True
    return False


@njit(cache=True)
def defect_distance(n_sites, indptr, nbr_site, nbr_open, source, targets_mask, big):
    """Minimum number of closed bonds on any path from source to a target.

    0-1 BFS over a CSR adjacency (indptr, neighbour site, open flag).
    Returns big if no target is reachable at all.
    """
    dist = np.full(n_sites, big, dtype=np.int32)
    # array deque: 0-1 BFS never holds more than 2E entries
    cap = 2 * nbr_site.shape[0] + 4
    dq = np.empty(cap, dtype=np.int32)
    head = cap // 2
    tail = cap // 2
    dist[source] = 0
    dq[tail] = source
    tail += 1
    best = big
    while head < tail:
        v = dq[head]
        head += 1
        d = dist[v]
        if d >= best:
            continue
        if targets_mask[v]:
            best = d
            continue
        for k in range(indptr[v], indptr[v + 1]):
            w = nbr_site[k]
            nd = d if nbr_open[k] else d + 1
            if nd < dist[w]:
                dist[w] = nd
                if nbr_open[k]:
                    head -= 1
                    dq[head] = w
                else:
                    dq[tail] = w
                    tail += 1
    return best


@njit(cache=True)
def maxflow_unit(n_nodes, indptr, arc_to, arc_cap, arc_rev, source, sink, stop_at):
    """Max flow with unit capacities via BFS augmentation (Edmonds-Karp).

    The caller encodes vertex capacities by node splitting and supplies
    paired residual arcs: arc k and arc_rev[k] are each other's
    reverses.  arc_cap is mutated in place.  Stops early once the flow
    reaches stop_at.  Returns the flow value.
    """
    prev_arc = np.empty(n_nodes, dtype=np.int64)
    state = np.zeros(n_nodes, dtype=np.int8)
    queue = np.empty(n_nodes + 1, dtype=np.int32)
    flow = 0
    while flow < stop_at:
        for i in range(n_nodes):
            state[i] = 0
        qh, qt = 0, 0
        queue[qt] = source
        qt += 1
        state[source] = 1
        found = False
        while qh < qt and not found:
            v = queue[qh]
            qh += 1
            for k in range(indptr[v], indptr[v + 1]):
                if arc_cap[k] <= 0:
                    continue
                w = arc_to[k]
                if state[w] == 1:
                    continue
                state[w] = 1
                prev_arc[w] = k
                if w == sink:
                    found = True
                    break
                queue[qt] = w
                qt += 1
        if not found:
            break
        v = sink
        while v != source:
            k = prev_arc[v]
            arc_cap[k] -= 1
            arc_cap[arc_rev[k]] += 1
            v = arc_to[arc_rev[k]]
        flow += 1
    return flow
