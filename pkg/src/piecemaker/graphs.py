"""Graphs, local complementation, LC orbits and minimal local covers.

Vertices are ``1..n``.  Orbit search works on tuples of adjacency bitmasks
(bit ``k`` = vertex ``k+1``), which keeps the breadth-first closure cheap for
the ``n <= 10`` graphs this package targets.
"""

from __future__ import annotations

import hashlib
import itertools
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_ORBIT_CAP = 2_000_000
CATALOG_FORMAT = "piecemaker-cover-catalog v1"


class GraphError(ValueError):
    pass


class OrbitCapExceeded(RuntimeError):
    def __init__(self, cap: int):
        super().__init__(f"LC orbit exceeds cap of {cap} graphs; raise orbit_cap")
        self.cap = cap


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError("graph needs at least one vertex")
        norm = set()
        for e in self.edges:
            u, v = e
            if u == v:
                raise GraphError(f"self-loop at {u}")
            if not (1 <= u <= self.n and 1 <= v <= self.n):
                raise GraphError(f"edge {e} outside 1..{self.n}")
            norm.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> Graph:
        edges = [tuple(e) for e in edges]
        if any(len(e) != 2 for e in edges):
            raise GraphError("edges must be vertex pairs")
        seen = set()
        for u, v in edges:
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
        return cls(n, frozenset(edges))

    @classmethod
    def from_masks(cls, masks: Sequence[int]) -> Graph:
        n = len(masks)
        edges = {(u + 1, v + 1) for u in range(n) for v in range(u + 1, n) if masks[u] >> v & 1}
        return cls(n, frozenset(edges))

    def masks(self) -> tuple[int, ...]:
        adj = [0] * self.n
        for u, v in self.edges:
            adj[u - 1] |= 1 << (v - 1)
            adj[v - 1] |= 1 << (u - 1)
        return tuple(adj)

    def neighbors(self, v: int) -> frozenset[int]:
        self._check(v)
        return frozenset(u if w == v else w for u, w in self.edges if v in (u, w))

    def _check(self, v: int):
        if not 1 <= v <= self.n:
            raise GraphError(f"vertex {v} out of range 1..{self.n}")

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.sorted_edges()})"


# ---------------------------------------------------------------------------
# families

FAMILIES = ("ghz-star", "star", "path", "cycle", "grid", "complete", "wheel", "cube", "empty", "custom")


def make_graph(family: str, n: int | None = None, *, rows: int | None = None, cols: int | None = None,
               dim: int | None = None, center: int = 1, edges=None) -> Graph:
    """Named graph families.

    ``wheel`` with ``n`` vertices is an ``(n-1)``-cycle plus a hub (vertex 1);
    ``cube`` is the ``dim``-dimensional hypercube (``dim=3`` gives 8 vertices;
    ``n`` may be given instead of ``dim``); ``grid`` is rows x cols, numbered
    row-major.
    """
    family = family.lower()
    if family in ("ghz-star", "star", "ghz"):
        _need(n, 2, family)
        if not 1 <= center <= n:
            raise GraphError("star center out of range")
        return Graph(n, frozenset((center, v) for v in range(1, n + 1) if v != center))
    if family == "path":
        _need(n, 1, family)
        return Graph(n, frozenset((i, i + 1) for i in range(1, n)))
    if family == "cycle":
        _need(n, 3, family)
        return Graph(n, frozenset((i, i % n + 1) for i in range(1, n + 1)))
    if family == "complete":
        _need(n, 1, family)
        return Graph(n, frozenset(itertools.combinations(range(1, n + 1), 2)))
    if family == "empty":
        _need(n, 1, family)
        return Graph(n)
    if family == "wheel":
        _need(n, 4, family)
        rim = list(range(2, n + 1))
        edges = {(1, v) for v in rim}
        edges |= {(rim[i], rim[(i + 1) % len(rim)]) for i in range(len(rim))}
        return Graph(n, frozenset(edges))
    if family == "grid":
        if rows is None or cols is None or rows < 1 or cols < 1:
            raise GraphError("grid needs positive rows and cols")
        idx = lambda r, c: r * cols + c + 1  # noqa: E731
        edges = {(idx(r, c), idx(r, c + 1)) for r in range(rows) for c in range(cols - 1)}
        edges |= {(idx(r, c), idx(r + 1, c)) for r in range(rows - 1) for c in range(cols)}
        return Graph(rows * cols, frozenset(edges))
    if family == "cube":
        if dim is None:
            if n is None or n < 2 or n & (n - 1):
                raise GraphError("cube needs dim >= 1 or n a power of two")
            dim = n.bit_length() - 1
        if dim < 1:
            raise GraphError("cube needs dim >= 1")
        size = 1 << dim
        edges = {(a + 1, b + 1) for a in range(size) for b in range(a + 1, size)
                 if bin(a ^ b).count("1") == 1}
        return Graph(size, frozenset(edges))
    if family == "custom":
        if edges is None:
            raise GraphError("custom graph needs an edge list")
        edges = [tuple(e) for e in edges]
        if n is None:
            n = max((max(e) for e in edges), default=0)
        return Graph.from_edges(n, edges)
    raise GraphError(f"unknown graph family {family!r}")


def _need(n, lo, family):
    if n is None or n < lo:
        raise GraphError(f"{family} graph needs n >= {lo}")


# ---------------------------------------------------------------------------
# local complementation


def _lc_masks(adj: tuple[int, ...], v: int) -> tuple[int, ...]:
    nb = adj[v]
    out = list(adj)
    m = nb
    while m:
        bit = m & -m
        u = bit.bit_length() - 1
        out[u] ^= nb & ~bit
        m ^= bit
    return tuple(out)


def local_complement(graph: Graph, v: int) -> Graph:
    graph._check(v)
    return Graph.from_masks(_lc_masks(graph.masks(), v - 1))


def apply_lc_sequence(graph: Graph, seq: Iterable[int]) -> Graph:
    adj = graph.masks()
    for v in seq:
        graph._check(v)
        adj = _lc_masks(adj, v - 1)
    return Graph.from_masks(adj)


@dataclass(frozen=True)
class OrbitMember:
    graph: Graph
    sequence: tuple[int, ...]


def _orbit_masks(graph: Graph, cap: int) -> tuple[list[tuple[int, ...]], dict]:
    """BFS over the labeled LC orbit; returns members in discovery order and parent links."""
    if cap < 1:
        raise GraphError("orbit cap must be >= 1")
    start = graph.masks()
    order = [start]
    parent: dict[tuple[int, ...], tuple[tuple[int, ...], int] | None] = {start: None}
    queue = deque([start])
    n = graph.n
    while queue:
        g = queue.popleft()
        for v in range(n):
            if not g[v]:
                continue
            h = _lc_masks(g, v)
            if h in parent:
                continue
            if len(order) >= cap:
                raise OrbitCapExceeded(cap)
            parent[h] = (g, v + 1)
            order.append(h)
            queue.append(h)
    return order, parent


def _path_to(parent, masks) -> tuple[int, ...]:
    seq = []
    while parent[masks] is not None:
        masks, v = parent[masks]
        seq.append(v)
    return tuple(reversed(seq))


def lc_orbit(graph: Graph, cap: int = DEFAULT_ORBIT_CAP) -> list[OrbitMember]:
    """All graphs reachable by local complementation, in BFS discovery order.

    Each member carries a shortest LC sequence from ``graph``.
    """
    order, parent = _orbit_masks(graph, cap)
    return [OrbitMember(Graph.from_masks(m), _path_to(parent, m)) for m in order]


# ---------------------------------------------------------------------------
# vertex covers


def is_vertex_cover(graph: Graph, cover: Iterable[int]) -> bool:
    cover = set(cover)
    return all(u in cover or v in cover for u, v in graph.edges)


def shrink_to_minimal_cover(graph: Graph, candidates: Iterable[int],
                            rng: np.random.Generator) -> frozenset[int] | None:
    """Drop vertices in random order while the set stays a vertex cover.

    One pass is enough: a vertex that could not be dropped earlier cannot be
    dropped later because subsets of non-covers are non-covers.
    """
    current = set(candidates)
    if not is_vertex_cover(graph, current):
        return None
    order = sorted(current)
    for i in rng.permutation(len(order)):
        v = order[i]
        current.discard(v)
        if not is_vertex_cover(graph, current):
            current.add(v)
    return frozenset(current)


def minimal_vertex_covers(graph: Graph) -> list[frozenset[int]]:
    """Every inclusion-minimal vertex cover (exhaustive, small graphs only)."""
    masks = _cover_table(graph.n, [graph.masks()])[0]
    return [_mask_to_set(m) for m in np.flatnonzero(_minimal(masks, graph.n))]


# ---------------------------------------------------------------------------
# minimal local covers


@dataclass(frozen=True)
class CoverEntry:
    cover: frozenset
    witness: Graph
    lc_sequence: tuple[int, ...]


@dataclass(frozen=True)
class CoverCatalog:
    target: Graph
    entries: tuple[CoverEntry, ...]

    def first_within(self, available: Iterable[int]) -> CoverEntry | None:
        available = set(available)
        for entry in self.entries:
            if entry.cover <= available:
                return entry
        return None

    def cover_sizes(self) -> list[int]:
        return [len(e.cover) for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


def _mask_to_set(mask: int) -> frozenset[int]:
    mask = int(mask)
    return frozenset(k + 1 for k in range(mask.bit_length()) if mask >> k & 1)


def _cover_table(n: int, members: Sequence[tuple[int, ...]]):
    """Boolean table ``is_cover[member, mask]`` for every vertex subset."""
    all_masks = np.arange(1 << n, dtype=np.int64)
    out = np.empty((len(members), 1 << n), dtype=bool)
    for k, adj in enumerate(members):
        ok = np.ones(1 << n, dtype=bool)
        for u in range(n):
            nb = adj[u] & ~((1 << (u + 1)) - 1)
            m = nb
            while m:
                bit = m & -m
                ok &= ((all_masks >> u) & 1).astype(bool) | ((all_masks & bit) != 0)
                m ^= bit
        out[k] = ok
    return out


def _minimal(is_cover: np.ndarray, n: int) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    minimal = is_cover.copy()
    for k in range(n):
        bit = 1 << k
        has = (masks & bit) != 0
        sub = masks ^ bit
        minimal &= ~(has & is_cover[sub])
    return minimal


def minimal_local_covers(graph: Graph, orbit_cap: int = DEFAULT_ORBIT_CAP,
                         max_vertices: int = 16) -> CoverCatalog:
    """Catalog of minimal local covers with edge-minimal witnesses.

    Entries are ordered by the BFS index of the first orbit member in which
    the cover is a vertex cover, then by sorted vertex list.
    """
    n = graph.n
    if n > max_vertices:
        raise GraphError(f"cover search is exhaustive over 2^n subsets; n={n} > {max_vertices}")
    order, parent = _orbit_masks(graph, orbit_cap)
    size = 1 << n
    first_seen = np.full(size, -1, dtype=np.int64)
    best_edges = np.full(size, np.iinfo(np.int64).max, dtype=np.int64)
    best_member = np.full(size, -1, dtype=np.int64)
    chunk = 512
    for start in range(0, len(order), chunk):
        block = order[start:start + chunk]
        table = _cover_table(n, block)
        for off, adj in enumerate(block):
            idx = start + off
            row = table[off]
            edges = sum(bin(a).count("1") for a in adj) // 2
            first_seen[row & (first_seen < 0)] = idx
            better = row & (edges < best_edges)
            best_edges[better] = edges
            best_member[better] = idx
    is_local_cover = first_seen >= 0
    minimal = np.flatnonzero(_minimal(is_local_cover, n))
    keyed = sorted(minimal, key=lambda m: (first_seen[m], sorted(_mask_to_set(m))))
    entries = []
    for m in keyed:
        masks = order[best_member[m]]
        entries.append(CoverEntry(_mask_to_set(m), Graph.from_masks(masks), _path_to(parent, masks)))
    return CoverCatalog(graph, tuple(entries))


# ---------------------------------------------------------------------------
# LC corrections


def lc_sequence_cliffords(seq: Sequence[int], graph: Graph) -> dict[int, list[str]]:
    """Single-qubit gates mapping ``|G'>`` back to ``|G>`` where ``G' = seq(G)``.

    Local complementation at ``v`` is undone by ``SXDG`` on ``v`` and ``S`` on
    each of its neighbours; steps are undone last-first, tracking the graph.
    Returns per-vertex gate lists in application order.
    """
    graphs = [graph.masks()]
    for v in seq:
        graph._check(v)
        graphs.append(_lc_masks(graphs[-1], v - 1))
    gates: dict[int, list[str]] = {v: [] for v in range(1, graph.n + 1)}
    for step in range(len(seq) - 1, -1, -1):
        v = seq[step]
        nb = graphs[step + 1][v - 1]
        gates[v].append("SXDG")
        for u in range(graph.n):
            if nb >> u & 1:
                gates[u + 1].append("S")
    return gates


# ---------------------------------------------------------------------------
# catalog cache


def catalog_key(graph: Graph) -> str:
    text = f"{graph.n};" + ";".join(f"{u}-{v}" for u, v in graph.sorted_edges())
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _edges_text(graph: Graph) -> str:
    return " ".join(f"{u}-{v}" for u, v in graph.sorted_edges()) or "-"


def _parse_edges(n: int, text: str) -> Graph:
    if text == "-":
        return Graph(n)
    return Graph.from_edges(n, [tuple(int(x) for x in tok.split("-")) for tok in text.split()])


def dump_catalog(catalog: CoverCatalog) -> str:
    lines = [CATALOG_FORMAT, f"n\t{catalog.target.n}", f"target\t{_edges_text(catalog.target)}",
             f"entries\t{len(catalog.entries)}"]
    for e in catalog.entries:
        cover = " ".join(str(v) for v in sorted(e.cover)) or "-"
        seq = " ".join(str(v) for v in e.lc_sequence) or "-"
        lines.append(f"entry\t{cover}\t{_edges_text(e.witness)}\t{seq}")
    return "\n".join(lines) + "\n"


def load_catalog(text: str) -> CoverCatalog:
    lines = text.rstrip("\n").split("\n")
    if not lines or lines[0] != CATALOG_FORMAT:
        raise GraphError("not a cover catalog (bad version header)")
    try:
        n = int(lines[1].split("\t")[1])
        target = _parse_edges(n, lines[2].split("\t")[1])
        count = int(lines[3].split("\t")[1])
        entries = []
        for line in lines[4:]:
            tag, cover, witness, seq = line.split("\t")
            if tag != "entry":
                raise GraphError(f"unexpected record {tag!r}")
            entries.append(CoverEntry(
                frozenset() if cover == "-" else frozenset(int(v) for v in cover.split()),
                _parse_edges(n, witness),
                () if seq == "-" else tuple(int(v) for v in seq.split())))
    except (IndexError, ValueError) as exc:
        raise GraphError(f"malformed cover catalog: {exc}") from exc
    if len(entries) != count:
        raise GraphError(f"catalog declares {count} entries, found {len(entries)}")
    return CoverCatalog(target, tuple(entries))


def save_catalog(catalog: CoverCatalog, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dump_catalog(catalog))
    tmp.replace(path)
    return path


def cached_catalog(graph: Graph, cache_dir: Path | None, orbit_cap: int = DEFAULT_ORBIT_CAP) -> CoverCatalog:
    """Load the catalog for ``graph`` from ``cache_dir`` or compute and store it."""
    if cache_dir is None:
        return minimal_local_covers(graph, orbit_cap)
    path = Path(cache_dir) / f"covers-{catalog_key(graph)}.txt"
    if path.exists():
        catalog = load_catalog(path.read_text())
        if catalog.target == graph:
            return catalog
    catalog = minimal_local_covers(graph, orbit_cap)
    save_catalog(catalog, path)
    return catalog
