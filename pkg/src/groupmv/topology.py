"""Hardware coupling graphs and contiguous qubit selection.

Three generators are provided (grid, ring, heavy-hex) plus a ``custom``
constructor for arbitrary edge lists.  Node indices are always
``0..node_count-1``; adjacency lists are kept sorted so every traversal in
this package is deterministic.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import networkx as nx
import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path


class TopologyError(ValueError):
    """Raised for malformed graphs or infeasible selections."""


class Kind(str, enum.Enum):
    HEAVY_HEX = "heavy_hex"
    GRID = "grid"
    RING = "ring"
    CUSTOM = "custom"


_MAX_DEGREE = {Kind.HEAVY_HEX: 3, Kind.GRID: 4, Kind.RING: 2}


@dataclass(frozen=True, eq=False)
class CouplingGraph:
    """Undirected, connected coupling graph.

    ``edges`` holds normalized ``(u, v)`` pairs with ``u < v``.  ``dims``
    records the generator parameters (e.g. ``(5, 8)`` for a 5x8 grid) and is
    only informational.
    """

    node_count: int
    edges: frozenset[tuple[int, int]]
    kind: Kind = Kind.CUSTOM
    dims: tuple[int, ...] = ()
    layout_hints: tuple[tuple[float, float], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise TopologyError("graph needs at least one node")
        for u, v in self.edges:
            if u == v:
                raise TopologyError(f"self-loop on node {u}")
            if not (0 <= u < v < self.node_count):
                raise TopologyError(f"edge ({u}, {v}) not normalized or out of range")
        if not _connected(range(self.node_count), self.adjacency):
            raise TopologyError("coupling graph is not connected")
        bound = _MAX_DEGREE.get(self.kind)
        if bound is not None and max(self.degrees) > bound:
            raise TopologyError(f"{self.kind.value} graph exceeds degree {bound}")
        if self.kind is Kind.RING and min(self.degrees) != 2:
            raise TopologyError("ring nodes must all have degree 2")

    @classmethod
    def custom(cls, node_count: int, edges: Iterable[tuple[int, int]], **kw) -> "CouplingGraph":
        norm = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise TopologyError(f"self-loop on node {u}")
            norm.add((min(u, v), max(u, v)))
        return cls(node_count, frozenset(norm), **kw)

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @property
    def degrees(self) -> list[int]:
        return [len(a) for a in self.adjacency]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self.adjacency[u]

    @property
    def label(self) -> str:
        if not self.dims:
            return f"{self.kind.value}({self.node_count})"
        return f"{self.kind.value}({'x'.join(map(str, self.dims))})"

    def to_networkx(self, nodes: Iterable[int] | None = None) -> nx.Graph:
        h = nx.Graph()
        keep = set(range(self.node_count)) if nodes is None else set(nodes)
        h.add_nodes_from(sorted(keep))
        h.add_edges_from((u, v) for u, v in sorted(self.edges) if u in keep and v in keep)
        return h

    def dumps(self) -> str:
        """Edge-list text: ``nodes <count>`` header, then one ``u v`` per line."""
        lines = [f"nodes {self.node_count}"]
        lines += [f"{u} {v}" for u, v in sorted(self.edges)]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "CouplingGraph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not rows or rows[0][0] != "nodes" or len(rows[0]) != 2:
            raise TopologyError("edge list must start with 'nodes <count>'")
        count = int(rows[0][1])
        edges = []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 2:
                raise TopologyError(f"line {lineno}: expected 'u v'")
            edges.append((int(row[0]), int(row[1])))
        return cls.custom(count, edges)


@dataclass(frozen=True)
class QubitSelection:
    nodes: tuple[int, ...]
    source_graph: CouplingGraph = field(repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.nodes)) != len(self.nodes):
            raise TopologyError("selection contains duplicate nodes")
        if not self.nodes:
            raise TopologyError("selection is empty")
        if not is_connected(self.source_graph, self.nodes):
            raise TopologyError("selected qubits do not induce a connected subgraph")

    def __len__(self) -> int:
        return len(self.nodes)


def _connected(nodes: Iterable[int], adjacency) -> bool:
    nodes = set(nodes)
    if not nodes:
        return False
    start = next(iter(nodes))
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if v in nodes and v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(nodes)


def is_connected(g: CouplingGraph, nodes: Iterable[int]) -> bool:
    """True when ``nodes`` induces a connected subgraph of ``g``."""
    return _connected(nodes, g.adjacency)


def components(g: CouplingGraph, nodes: Iterable[int]) -> list[set[int]]:
    """Connected components of the induced subgraph, largest first."""
    remaining = set(nodes)
    comps = []
    for s in sorted(remaining):
        if s not in remaining:
            continue
        comp = {s}
        queue = deque([s])
        remaining.discard(s)
        while queue:
            u = queue.popleft()
            for v in g.adjacency[u]:
                if v in remaining:
                    remaining.discard(v)
                    comp.add(v)
                    queue.append(v)
        comps.append(comp)
    comps.sort(key=lambda c: (-len(c), min(c)))
    return comps


# --------------------------------------------------------------------------
# generators


def make_grid(rows: int, cols: int) -> CouplingGraph:
    """Square lattice, node index ``row * cols + col``."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise TopologyError("grid needs rows, cols >= 1 and at least 2 nodes")
    edges = set()
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.add((u, u + 1))
            if r + 1 < rows:
                edges.add((u, u + cols))
    pos = tuple((float(c), float(-r)) for r in range(rows) for c in range(cols))
    return CouplingGraph(rows * cols, frozenset(edges), Kind.GRID, (rows, cols), pos)


def make_ring(n: int) -> CouplingGraph:
    if n < 3:
        raise TopologyError("ring needs at least 3 nodes")
    edges = {(min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n)}
    pos = tuple((math.cos(2 * math.pi * i / n), math.sin(2 * math.pi * i / n)) for i in range(n))
    return CouplingGraph(n, frozenset(edges), Kind.RING, (n,), pos)


def make_heavy_hex(cell_rows: int, cell_cols: int) -> CouplingGraph:
    """Heavy-hex lattice of ``cell_rows x cell_cols`` hexagonal cells.

    Built as a honeycomb (degree <= 3 vertices) with one extra qubit inserted
    on every honeycomb edge.  Numbering is row-major over the 2D layout:
    nodes are sorted by descending ``y`` then ascending ``x`` of their
    drawing position (edge qubits sit at the midpoint of their edge).
    """
    if cell_rows < 1 or cell_cols < 1:
        raise TopologyError("heavy-hex needs at least one cell in each direction")
    hexg = nx.hexagonal_lattice_graph(cell_rows, cell_cols)
    pos = {v: tuple(p) for v, p in hexg.nodes(data="pos")}
    points: dict[object, tuple[float, float]] = dict(pos)
    heavy_edges = []
    for a, b in sorted(hexg.edges()):
        mid = ("edge", a, b)
        points[mid] = ((pos[a][0] + pos[b][0]) / 2, (pos[a][1] + pos[b][1]) / 2)
        heavy_edges += [(a, mid), (mid, b)]
    order = sorted(points, key=lambda v: (-round(points[v][1], 6), round(points[v][0], 6)))
    index = {v: i for i, v in enumerate(order)}
    edges = {(min(index[a], index[b]), max(index[a], index[b])) for a, b in heavy_edges}
    hints = tuple(points[v] for v in order)
    return CouplingGraph(len(order), frozenset(edges), Kind.HEAVY_HEX, (cell_rows, cell_cols), hints)


def heavy_hex_node_count(cell_rows: int, cell_cols: int) -> int:
    corners = (cell_rows + 1) * (2 * cell_cols + 2) - 2
    # honeycomb edges: every interior corner has degree 3, the boundary loses some
    hexg_edges = 3 * cell_rows * cell_cols + 2 * cell_rows + 2 * cell_cols - 1
    return corners + hexg_edges


def _auto_dims(count_fn, n: int, max_side: int = 200) -> tuple[int, int]:
    best = None
    for a in range(1, max_side + 1):
        for b in range(a, 2 * a + 1):
            size = count_fn(a, b)
            if size < n:
                continue
            key = (size, b - a, a)
            if best is None or key < best[0]:
                best = (key, (a, b))
            break
    if best is None:
        raise TopologyError(f"no lattice with >= {n} nodes within size limit")
    return best[1]


def grid_for_size(n: int) -> CouplingGraph:
    """Smallest grid (aspect ratio <= 2) with at least ``n`` nodes."""
    rows, cols = _auto_dims(lambda a, b: a * b, max(n, 2))
    return make_grid(rows, cols)


def heavy_hex_for_size(n: int) -> CouplingGraph:
    """Smallest heavy-hex lattice (aspect ratio <= 2) with at least ``n`` nodes."""
    rows, cols = _auto_dims(heavy_hex_node_count, n)
    return make_heavy_hex(rows, cols)


def make_topology(kind: str | Kind, dims: Sequence[int] | None = None, n: int | None = None) -> CouplingGraph:
    """Build a graph from a kind name and either explicit dims or a node target."""
    kind = Kind(kind)
    if dims:
        if kind is Kind.GRID:
            return make_grid(*dims)
        if kind is Kind.HEAVY_HEX:
            return make_heavy_hex(*dims)
        if kind is Kind.RING:
            return make_ring(*dims)
    elif n is not None:
        if kind is Kind.GRID:
            return grid_for_size(n)
        if kind is Kind.HEAVY_HEX:
            return heavy_hex_for_size(n)
        if kind is Kind.RING:
            return make_ring(max(n, 3))
    raise TopologyError(f"cannot build {kind.value} from dims={dims} n={n}")


# --------------------------------------------------------------------------
# queries


def distance_matrix(g: CouplingGraph, nodes: Sequence[int] | None = None) -> np.ndarray:
    """All-pairs hop distances on the (induced) subgraph; ``inf`` if unreachable."""
    nodes = list(range(g.node_count)) if nodes is None else list(nodes)
    local = {v: i for i, v in enumerate(nodes)}
    rows, cols = [], []
    for v in nodes:
        for w in g.adjacency[v]:
            if w in local:
                rows.append(local[v])
                cols.append(local[w])
    mat = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(nodes), len(nodes)))
    return shortest_path(mat, unweighted=True, directed=False)


def center_of(g: CouplingGraph, nodes: Sequence[int]) -> int:
    """Minimum-eccentricity node of the induced subgraph, smallest index on ties."""
    nodes = sorted(nodes)
    if len(nodes) == 1:
        return nodes[0]
    ecc = distance_matrix(g, nodes).max(axis=1)
    return nodes[int(np.argmin(ecc))]


def graph_center(g: CouplingGraph) -> int:
    return center_of(g, range(g.node_count))


def bfs_order(g: CouplingGraph, start: int, nodes: Iterable[int] | None = None) -> list[int]:
    allowed = None if nodes is None else set(nodes)
    seen = {start}
    order = [start]
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if v not in seen and (allowed is None or v in allowed):
                seen.add(v)
                order.append(v)
                queue.append(v)
    return order


def bfs_select(g: CouplingGraph, start: int, n: int) -> QubitSelection:
    """First ``n`` nodes of a BFS from ``start`` (ascending-index neighbor order)."""
    if n < 1:
        raise TopologyError("must select at least one qubit")
    if n > g.node_count:
        raise TopologyError(f"cannot select {n} qubits from a {g.node_count}-node graph")
    return QubitSelection(tuple(bfs_order(g, start)[:n]), g)


def line_select(g: CouplingGraph, start: int, n: int, seed=None, attempts: int = 64,
                step_budget: int = 200_000) -> QubitSelection:
    """Find a simple path of ``n`` nodes, preferring one that begins at ``start``.

    Randomized DFS with a Warnsdorff-style neighbor order (fewest onward
    options first).  The first attempt starts at ``start``; later attempts
    start from random nodes.  The returned selection lists the nodes in path
    order.
    """
    if n > g.node_count:
        raise TopologyError(f"cannot select {n} qubits from a {g.node_count}-node graph")
    rng = np.random.default_rng(seed)
    for attempt in range(attempts):
        s = start if attempt == 0 else int(rng.integers(g.node_count))
        path = _dfs_path(g.adjacency, s, n, None, rng, step_budget)
        if path is not None:
            return QubitSelection(tuple(path), g)
    raise TopologyError(f"linear embedding unavailable: no simple path of {n} nodes found")


def _dfs_path(adjacency, start: int, n: int, allowed: set[int] | None, rng, budget: int):
    """Iterative randomized DFS for a simple path of length ``n`` from ``start``."""
    path = [start]
    on_path = {start}
    stack = [_ordered_moves(adjacency, start, on_path, allowed, rng)]
    steps = 0
    while stack:
        if len(path) == n:
            return path
        steps += 1
        if steps > budget:
            return None
        moves = stack[-1]
        if moves:
            v = moves.pop()
            path.append(v)
            on_path.add(v)
            stack.append(_ordered_moves(adjacency, v, on_path, allowed, rng))
        else:
            stack.pop()
            on_path.discard(path.pop())
    return None


def _ordered_moves(adjacency, u, on_path, allowed, rng) -> list[int]:
    cand = [v for v in adjacency[u] if v not in on_path and (allowed is None or v in allowed)]
    if not cand:
        return []
    noise = rng.random(len(cand))

    def onward(v):
        return sum(1 for w in adjacency[v] if w not in on_path and (allowed is None or w in allowed))

    # popped from the end: most promising (fewest onward options) last
    keyed = sorted(zip(cand, noise), key=lambda t: (-onward(t[0]), t[1]))
    return [v for v, _ in keyed]


def hamiltonian_path(g: CouplingGraph, nodes: Sequence[int], seed=None, attempts: int = 64,
                     step_budget: int = 100_000) -> list[int] | None:
    """Randomized search for a path visiting every node of the induced subgraph."""
    nodes = list(nodes)
    allowed = set(nodes)
    if len(nodes) == 1:
        return nodes
    if g.kind is Kind.GRID:
        snake = _serpentine(g, allowed)
        if snake is not None:
            return snake
    rng = np.random.default_rng(seed)
    deg = {v: sum(1 for w in g.adjacency[v] if w in allowed) for v in nodes}
    leaves = sorted(v for v in nodes if deg[v] == 1)
    if len(leaves) > 2:
        return None
    starts = leaves or sorted(nodes, key=lambda v: (deg[v], v))
    for attempt in range(attempts):
        s = starts[attempt % len(starts)] if attempt < len(starts) else nodes[int(rng.integers(len(nodes)))]
        path = _dfs_path(g.adjacency, s, len(nodes), allowed, rng, step_budget)
        if path is not None:
            return path
    return None


def _serpentine(g: CouplingGraph, nodes: set[int]) -> list[int] | None:
    """Boustrophedon path when ``nodes`` is a full rectangular block of a grid."""
    rows, cols = g.dims
    coords = sorted(divmod(v, cols) for v in nodes)
    r0 = min(r for r, _ in coords)
    r1 = max(r for r, _ in coords)
    c0 = min(c for _, c in coords)
    c1 = max(c for _, c in coords)
    if (r1 - r0 + 1) * (c1 - c0 + 1) != len(nodes):
        return None
    path = []
    for i, r in enumerate(range(r0, r1 + 1)):
        span = range(c0, c1 + 1) if i % 2 == 0 else range(c1, c0 - 1, -1)
        path += [r * cols + c for c in span]
    return path
