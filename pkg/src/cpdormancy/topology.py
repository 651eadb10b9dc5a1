"""Graphs the process lives on: lattice boxes and tori, regular trees, explicit graphs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import streams
from .errors import DegenerateGraph, EmptyGraph, NotConnected

__all__ = [
    "Topology",
    "EdgeSequence",
    "build",
    "lattice_box",
    "regular_tree",
    "explicit",
    "complete_graph",
    "path_graph",
    "read_edge_list",
    "spanning_path",
    "is_spanning",
]


@dataclass(eq=False)
class Topology:
    """A connected, bounded-degree simple graph.

    ``nbr[x]`` lists the neighbours of ``x`` padded with -1 and ``eid[x]``
    the matching edge ids; ``edges[e]`` holds the endpoints of edge ``e``
    with the smaller index first.  Lattice variants also carry integer
    coordinates relative to the origin vertex.
    """

    variant: str
    nbr: np.ndarray
    eid: np.ndarray
    edges: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)
    coords: np.ndarray | None = None
    origin: int | None = None
    boundary: np.ndarray | None = None
    _adj: dict[int, tuple[tuple[int, int], ...]] = field(default_factory=dict, repr=False)
    _labels: dict[int, int] = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.nbr.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def max_degree(self) -> int:
        return int((self.nbr >= 0).sum(axis=1).max()) if self.n else 0

    def degree(self, x: int) -> int:
        return int((self.nbr[x] >= 0).sum())

    def adjacency(self, x: int) -> tuple[tuple[int, int], ...]:
        """``((neighbour, edge id), ...)`` for vertex ``x``."""
        adj = self._adj.get(x)
        if adj is None:
            row, ids = self.nbr[x], self.eid[x]
            adj = tuple((int(v), int(e)) for v, e in zip(row, ids) if v >= 0)
            self._adj[x] = adj
        return adj

    def neighbors(self, x: int) -> list[int]:
        return [v for v, _ in self.adjacency(x)]

    def edge_index(self, u: int, v: int) -> int:
        for w, e in self.adjacency(u):
            if w == v:
                return e
        raise KeyError(f"no edge between {u} and {v}")

    def site_label(self, x: int) -> int:
        """Stable label used to key random clocks of vertex ``x``.

        Lattice vertices are labelled by coordinates, so boxes of different
        radius share the clocks of their common sites.
        """
        if self.coords is None:
            return x
        lab = self._labels.get(x)
        if lab is None:
            lab = self._labels[x] = streams.derive(0x51E, *(int(c) for c in self.coords[x]))
        return lab

    def edge_label(self, e: int) -> int:
        if self.coords is None:
            return e
        u, v = self.edges[e]
        return streams.derive(0xED6, self.site_label(int(u)), self.site_label(int(v)))

    def linf_norm(self, x: int) -> int:
        """Distance from the origin in the sup norm (minimum image on a torus)."""
        c = np.abs(self.coords[x])
        if self.params.get("boundary") == "periodic":
            side = 2 * self.params["radius"] + 1
            c = np.minimum(c, side - c)
        return int(c.max())

    def vertex_at(self, coord: Sequence[int]) -> int | None:
        if self.coords is None:
            raise ValueError("only lattice topologies have coordinates")
        r = self.params["radius"]
        if any(abs(c) > r for c in coord):
            return None
        side = 2 * r + 1
        idx = 0
        for c in coord:
            idx = idx * side + (c + r)
        return idx


@dataclass(frozen=True)
class EdgeSequence:
    """Chained directed traversals ``(v_0, v_1), (v_1, v_2), ...``."""

    steps: tuple[tuple[int, int], ...]

    def __len__(self):
        return len(self.steps)

    @property
    def vertices(self) -> tuple[int, ...]:
        if not self.steps:
            return ()
        return (self.steps[0][0],) + tuple(b for _, b in self.steps)


def _from_edge_array(variant: str, n: int, edges: np.ndarray, params: dict, **extra) -> Topology:
    if n == 0:
        raise EmptyGraph("graph has no vertices")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ValueError("edge endpoint out of range")
    if np.any(edges[:, 0] == edges[:, 1]):
        raise ValueError("self-loops are not allowed")
    edges = np.sort(edges, axis=1)
    if len({tuple(e) for e in edges.tolist()}) != len(edges):
        raise ValueError("duplicate edges are not allowed")
    if n > 1:
        m = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
        ncomp, _ = connected_components(m, directed=False)
        if ncomp != 1:
            raise NotConnected(f"graph has {ncomp} connected components")
    deg = np.bincount(edges.ravel(), minlength=n)
    width = int(deg.max()) if len(edges) else 0
    nbr = np.full((n, width), -1, dtype=np.int64)
    eid = np.full((n, width), -1, dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for e, (u, v) in enumerate(edges.tolist()):
        nbr[u, fill[u]], eid[u, fill[u]] = v, e
        fill[u] += 1
        nbr[v, fill[v]], eid[v, fill[v]] = u, e
        fill[v] += 1
    return Topology(variant, nbr, eid, edges, params, **extra)


def lattice_box(d: int, radius: int, boundary: str = "absorbing") -> Topology:
    """The box ``{-radius..radius}^d`` with nearest-neighbour edges.

    ``absorbing`` keeps the box as is and flags its outer faces; ``periodic``
    wraps it into a torus (side length at least 3).
    """
    if d < 1 or radius < 0:
        raise ValueError("need d >= 1 and radius >= 0")
    if boundary not in ("absorbing", "periodic"):
        raise ValueError(f"unknown boundary {boundary!r}")
    side = 2 * radius + 1
    if boundary == "periodic" and side < 3:
        raise ValueError("a periodic box needs side length at least 3")
    n = side ** d
    grid = np.indices((side,) * d).reshape(d, -1).T - radius
    idx = np.arange(n).reshape((side,) * d)
    edges = []
    for axis in range(d):
        if boundary == "periodic":
            right = np.roll(idx, -1, axis=axis)
            pairs = np.stack([idx.ravel(), right.ravel()], axis=1)
        else:
            lo = [slice(None)] * d
            hi = [slice(None)] * d
            lo[axis] = slice(0, side - 1)
            hi[axis] = slice(1, side)
            pairs = np.stack([idx[tuple(lo)].ravel(), idx[tuple(hi)].ravel()], axis=1)
        edges.append(pairs)
    edges = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)
    if n == 1:
        edges = np.empty((0, 2), dtype=np.int64)
    boundary_mask = np.zeros(n, dtype=bool)
    if boundary == "absorbing":
        boundary_mask = np.abs(grid).max(axis=1) == radius
    origin = int(idx[(radius,) * d])
    params = {"kind": "lattice", "d": d, "radius": radius, "boundary": boundary}
    return _lattice_fast(n, edges, params, grid, origin, boundary_mask)


def _lattice_fast(n, edges, params, coords, origin, boundary_mask) -> Topology:
    # lattice edges are unique and loop-free by construction; skip the generic checks
    edges = np.sort(edges, axis=1)
    ends = np.concatenate([edges[:, 0], edges[:, 1]])
    other = np.concatenate([edges[:, 1], edges[:, 0]])
    ids = np.concatenate([np.arange(len(edges))] * 2)
    order = np.lexsort((ids, ends))
    ends, other, ids = ends[order], other[order], ids[order]
    deg = np.bincount(ends, minlength=n)
    width = int(deg.max()) if len(edges) else 0
    start = np.concatenate([[0], np.cumsum(deg)[:-1]])
    slot = np.arange(len(ends)) - start[ends]
    nbr = np.full((n, width), -1, dtype=np.int64)
    eid = np.full((n, width), -1, dtype=np.int64)
    nbr[ends, slot] = other
    eid[ends, slot] = ids
    return Topology("lattice", nbr, eid, edges, params, coords=coords, origin=origin, boundary=boundary_mask)


def regular_tree(degree: int, depth: int) -> Topology:
    """Ball of radius ``depth`` around the root of the ``degree``-regular tree."""
    if degree < 2 or depth < 0:
        raise ValueError("need degree >= 2 and depth >= 0")
    edges = []
    level = [0]
    n = 1
    for k in range(depth):
        nxt = []
        for x in level:
            for _ in range(degree if k == 0 else degree - 1):
                edges.append((x, n))
                nxt.append(n)
                n += 1
        level = nxt
    return _from_edge_array("tree", n, np.array(edges, dtype=np.int64).reshape(-1, 2),
                            {"kind": "tree", "degree": degree, "depth": depth})


def explicit(n: int, edges: Iterable[Sequence[int]]) -> Topology:
    return _from_edge_array("explicit", n, np.array(list(edges), dtype=np.int64).reshape(-1, 2),
                            {"kind": "explicit", "n": n})


def complete_graph(n: int) -> Topology:
    t = _from_edge_array("explicit", n, np.array(list(itertools.combinations(range(n), 2)),
                                                 dtype=np.int64).reshape(-1, 2), {})
    t.params = {"kind": "complete", "n": n}
    return t


def path_graph(n: int) -> Topology:
    t = _from_edge_array("explicit", n, np.array([(i, i + 1) for i in range(n - 1)],
                                                 dtype=np.int64).reshape(-1, 2), {})
    t.params = {"kind": "path", "n": n}
    return t


def read_edge_list(path) -> Topology:
    """Read ``u v`` pairs (0-based), one per line; blank lines and ``#`` comments are skipped."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'u v'")
            pairs.append((int(parts[0]), int(parts[1])))
    n = max((max(p) for p in pairs), default=-1) + 1
    t = explicit(n, pairs)
    t.params = {"kind": "edgelist", "path": str(path), "n": n}
    return t


def build(spec: dict[str, Any]) -> Topology:
    """Build a topology from a descriptor such as ``{"kind": "lattice", "d": 2, "radius": 10}``."""
    kind = spec.get("kind")
    if kind == "lattice":
        return lattice_box(int(spec["d"]), int(spec["radius"]), spec.get("boundary", "absorbing"))
    if kind == "tree":
        return regular_tree(int(spec["degree"]), int(spec["depth"]))
    if kind == "complete":
        return complete_graph(int(spec["n"]))
    if kind == "path":
        return path_graph(int(spec["n"]))
    if kind == "explicit":
        edges = spec.get("edges", [])
        n = int(spec.get("n", max((max(e) for e in edges), default=-1) + 1))
        return explicit(n, edges)
    if kind == "edgelist":
        return read_edge_list(spec["path"])
    raise ValueError(f"unknown topology kind {kind!r}")


def _dfs_walk(top: Topology, root: int = 0) -> list[tuple[int, int]]:
    walk = []
    seen = {root}
    stack = [(root, iter(sorted(top.neighbors(root))))]
    while stack:
        x, it = stack[-1]
        for y in it:
            if y not in seen:
                seen.add(y)
                walk.append((x, y))
                stack.append((y, iter(sorted(top.neighbors(y)))))
                break
        else:
            stack.pop()
            if stack:
                walk.append((x, stack[-1][0]))
    return walk


def is_spanning(steps: Sequence[tuple[int, int]], n: int) -> bool:
    """Every ordered pair ``(x, y)``, ``x == y`` included, is joined by a contiguous sub-walk."""
    if not steps:
        return False
    seen = set()
    for i, (start, _) in enumerate(steps):
        for _, end in steps[i:]:
            seen.add((start, end))
    return len(seen) == n * n


def spanning_path(top: Topology) -> EdgeSequence:
    """Depth-first closed walk from vertex 0, traversed twice.

    The closed walk visits every vertex and returns to the root, so running it
    twice lets any vertex reach any other (itself included) in one stretch.
    Length is ``4 (|V| - 1)``.
    """
    if top.n < 2:
        raise DegenerateGraph("a spanning path needs at least two vertices")
    walk = _dfs_walk(top)
    steps = tuple(walk + walk)
    if not is_spanning(steps, top.n):
        raise AssertionError("doubled DFS walk failed the spanning check")
    return EdgeSequence(steps)


def min_gamma(length: int, lam: float, sigma: float) -> float:
    """Lower bound ``max(1, 2 l / lambda, 2 / sigma)`` on the interval-scheme gamma."""
    return max(1.0, 2.0 * length / lam, 2.0 / sigma)
