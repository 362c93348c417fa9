"""Recursive Kernighan-Lin partitioning and boundary-link planning."""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .topology import CouplingGraph, QubitSelection, center_of, components, is_connected

MAX_KL_PASSES = 10
# random restarts per bisection when a minimum boundary capacity is requested
KL_RETRIES = 16


class PartitionError(RuntimeError):
    pass


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# --------------------------------------------------------------------------
# Kernighan-Lin


def kl_bisect(nodes: Iterable[int], g: CouplingGraph, seed=None,
              max_passes: int = MAX_KL_PASSES, min_cut: int = 0) -> tuple[set[int], set[int]]:
    """Split ``nodes`` into two connected halves with a small cut.

    Starts from a random balanced split, runs Kernighan-Lin passes until a
    pass yields no positive gain (or ``max_passes``), then repairs
    connectivity and restores balance with articulation-safe boundary moves.
    With ``min_cut`` > 1, a pass never commits a swap prefix that would
    leave fewer than ``min_cut`` crossing edges, and the whole bisection is
    restarted from fresh random splits (up to ``KL_RETRIES``) until the
    repaired halves admit ``min_cut`` vertex-disjoint links; the best
    attempt is returned otherwise.
    """
    nodes = sorted(set(nodes))
    if len(nodes) < 2:
        raise PartitionError("kl_bisect needs at least two nodes")
    rng = _rng(seed)
    local = {v: i for i, v in enumerate(nodes)}
    adj = [[local[w] for w in g.adjacency[v] if w in local] for v in nodes]
    nbr_sets = [set(a) for a in adj]
    n = len(nodes)

    best = None
    for _ in range(KL_RETRIES if min_cut > 1 else 1):
        side = np.zeros(n, dtype=np.int8)
        side[rng.permutation(n)[: n // 2]] = 1
        for _ in range(max_passes):
            if not _kl_pass(side, adj, nbr_sets, min_cut):
                break
        a = {nodes[i] for i in range(n) if side[i] == 0}
        b = {nodes[i] for i in range(n) if side[i] == 1}
        a, b = _repair(g, a, b)
        if min(a) > min(b):
            a, b = b, a
        if min_cut <= 1:
            return a, b
        capacity = link_capacity(g, a, b)
        if best is None or capacity > best[0]:
            best = (capacity, a, b)
        if capacity >= min_cut:
            break
    return best[1], best[2]


def _kl_pass(side: np.ndarray, adj, nbr_sets, min_cut: int = 0) -> bool:
    """One KL pass in place; returns True if a positive-gain prefix was applied."""
    n = len(side)
    ext = np.array([sum(1 for w in adj[v] if side[w] != side[v]) for v in range(n)], dtype=np.int64)
    cut0 = int(ext.sum()) // 2
    D = 2 * ext - np.array([len(a) for a in adj], dtype=np.int64)
    locked = np.zeros(n, dtype=bool)
    work = side.copy()
    swaps, gains = [], []
    steps = min(int((side == 0).sum()), int((side == 1).sum()))
    for _ in range(steps):
        ia = np.flatnonzero((work == 0) & ~locked)
        ib = np.flatnonzero((work == 1) & ~locked)
        ia = ia[np.argsort(-D[ia], kind="stable")]
        ib = ib[np.argsort(-D[ib], kind="stable")]
        best, pair = None, None
        top_b = D[ib[0]]
        for x in ia:
            if best is not None and D[x] + top_b <= best:
                break
            for y in ib:
                bound = D[x] + D[y]
                if best is not None and bound <= best:
                    break
                gain = bound - 2 * (y in nbr_sets[x])
                if best is None or gain > best:
                    best, pair = gain, (x, y)
        x, y = pair
        locked[x] = locked[y] = True
        for w in adj[x]:
            D[w] += 2 if work[w] == work[x] else -2
        for w in adj[y]:
            D[w] += 2 if work[w] == work[y] else -2
        work[x], work[y] = work[y], work[x]
        swaps.append(pair)
        gains.append(best)
    if not gains:
        return False
    prefix = np.cumsum(gains)
    prefix[cut0 - prefix < min_cut] = np.iinfo(np.int64).min
    k = int(np.argmax(prefix))
    if prefix[k] <= 0:
        return False
    for x, y in swaps[: k + 1]:
        side[x], side[y] = side[y], side[x]
    return True


def _repair(g: CouplingGraph, a: set[int], b: set[int]) -> tuple[set[int], set[int]]:
    """Make both halves connected, then restore |a| - |b| within one."""
    while True:
        ca, cb = components(g, a), components(g, b)
        movable = [(len(c), min(c), c, 0) for c in ca[1:]] + [(len(c), min(c), c, 1) for c in cb[1:]]
        if not movable:
            break
        _, _, comp, src = min(movable, key=lambda t: (t[0], t[1]))
        if src == 0:
            a -= comp
            b |= comp
        else:
            b -= comp
            a |= comp

    # A boundary vertex moves together with whatever it would cut off from
    # the big side, so both halves stay connected after every move.
    while abs(len(a) - len(b)) > 1:
        big, small = (a, b) if len(a) > len(b) else (b, a)
        diff = len(big) - len(small)
        h = g.to_networkx(big)
        cut = set(nx.articulation_points(h))
        best = None
        for v in sorted(big):
            if not any(w in small for w in g.adjacency[v]):
                continue
            moved = {v}
            if v in cut:
                rest = components(g, big - {v})
                for comp in rest[1:]:
                    moved |= comp
            new_diff = abs(diff - 2 * len(moved))
            if new_diff >= diff:
                continue
            gain = cut_size(g, moved, small) - cut_size(g, moved, big - moved)
            key = (-new_diff, gain, -v)
            if best is None or key > best[0]:
                best = (key, moved)
        if best is None:
            break
        big -= best[1]
        small |= best[1]
    return a, b


def partition_groups(sel: QubitSelection, k: int, seed=None, min_cut: int = 0) -> list[set[int]]:
    """Recursively bisect the largest group until ``ceil(N / k)`` groups exist.

    ``min_cut`` is forwarded to every bisection (pass the requested link
    redundancy L to keep at least L crossing edges per split).
    """
    n = len(sel)
    if k < 2:
        raise PartitionError("group size k must be >= 2")
    if k > n:
        raise PartitionError(f"group size k={k} exceeds qubit count {n}")
    rng = _rng(seed)
    m = math.ceil(n / k)
    groups = [set(sel.nodes)]
    g = sel.source_graph
    while len(groups) < m:
        idx = max(range(len(groups)), key=lambda i: (len(groups[i]), -i))
        lo, hi = kl_bisect(groups[idx], g, rng, min_cut=min_cut)
        groups[idx] = lo
        groups.append(hi)
    return groups


def cut_size(g: CouplingGraph, a: Iterable[int], b: Iterable[int]) -> int:
    b = set(b)
    return sum(1 for u in a for v in g.adjacency[u] if v in b)


def link_capacity(g: CouplingGraph, a: Iterable[int], b: Iterable[int]) -> int:
    """Maximum number of vertex-disjoint coupling edges between ``a`` and ``b``."""
    return len(_max_matching(_boundary_pairs(a, frozenset(b), g)))


# --------------------------------------------------------------------------
# link planning


@dataclass
class GroupPlan:
    """Partition + spanning tree over groups + per-boundary link allocation.

    ``links[(parent, child)]`` is a list of ``(parent_qubit, child_qubit)``
    coupling-graph edges; ``l_eff`` maps each tree edge to ``len(links)``.
    Tree edges are stored in BFS order from ``root_group``.
    """

    groups: list[frozenset[int]]
    group_tree: list[tuple[int, int]]
    root_group: int
    links: dict[tuple[int, int], list[tuple[int, int]]]
    l_eff: dict[tuple[int, int], int]
    l_requested: int = 1
    notes: list[str] = field(default_factory=list)

    @property
    def degraded(self) -> bool:
        return any(v < self.l_requested for v in self.l_eff.values())

    @property
    def min_l_eff(self) -> int | None:
        return min(self.l_eff.values()) if self.l_eff else None

    @property
    def parent(self) -> dict[int, int]:
        return {c: p for p, c in self.group_tree}

    def group_of(self, qubit: int) -> int:
        for i, grp in enumerate(self.groups):
            if qubit in grp:
                return i
        raise KeyError(qubit)

    def path_from_root(self, group: int) -> list[tuple[int, int]]:
        """Tree edges from the root down to ``group`` (root first)."""
        parent = self.parent
        edges = []
        while group != self.root_group:
            p = parent[group]
            edges.append((p, group))
            group = p
        return edges[::-1]

    def measured_qubits(self, group: int | None = None) -> set[int]:
        return {c for (p, ch), ls in self.links.items() if group in (None, ch) for _, c in ls}

    def to_dict(self) -> dict:
        return {
            "groups": [sorted(grp) for grp in self.groups],
            "root_group": self.root_group,
            "l_requested": self.l_requested,
            "tree": [
                {"parent": p, "child": c, "l_eff": self.l_eff[(p, c)],
                 "links": [list(lk) for lk in self.links[(p, c)]]}
                for p, c in self.group_tree
            ],
            "degraded": self.degraded,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "GroupPlan":
        tree = [(e["parent"], e["child"]) for e in d["tree"]]
        return cls(
            groups=[frozenset(grp) for grp in d["groups"]],
            group_tree=tree,
            root_group=d["root_group"],
            links={(e["parent"], e["child"]): [tuple(lk) for lk in e["links"]] for e in d["tree"]},
            l_eff={(e["parent"], e["child"]): e["l_eff"] for e in d["tree"]},
            l_requested=d.get("l_requested", 1),
            notes=list(d.get("notes", [])),
        )

    def summary(self) -> str:
        sizes = ",".join(str(len(grp)) for grp in self.groups)
        leff = ",".join(str(self.l_eff[e]) for e in self.group_tree) or "-"
        return f"groups={sizes} l_eff={leff} degraded={self.degraded}"

    def validate(self, g: CouplingGraph, nodes: Sequence[int] | None = None) -> list[str]:
        """Return every violated GroupPlan invariant (empty list when valid)."""
        errs = []
        union = set()
        for i, grp in enumerate(self.groups):
            if union & grp:
                errs.append(f"group {i} overlaps another group")
            union |= grp
            if not is_connected(g, grp):
                errs.append(f"group {i} is not connected")
        if nodes is not None and union != set(nodes):
            errs.append("groups do not cover the selection exactly")
        m = len(self.groups)
        if len(self.group_tree) != m - 1:
            errs.append("group tree must have m-1 edges")
        reach = {self.root_group}
        for p, c in self.group_tree:
            if p not in reach or c in reach:
                errs.append(f"tree edge ({p}, {c}) breaks BFS tree order")
            reach.add(c)
        if len(reach) != m:
            errs.append("group tree does not span all groups")
        for e in self.group_tree:
            p, c = e
            ls = self.links.get(e, [])
            if self.l_eff.get(e) != len(ls):
                errs.append(f"l_eff mismatch on {e}")
            if len(ls) % 2 == 0:
                errs.append(f"even link count on {e}")
            if len(ls) > self.l_requested:
                errs.append(f"more links than requested on {e}")
            used = set()
            for a, b in ls:
                if not g.has_edge(a, b):
                    errs.append(f"link ({a}, {b}) is not a coupling edge")
                if a not in self.groups[p] or b not in self.groups[c]:
                    errs.append(f"link ({a}, {b}) not oriented parent->child on {e}")
                if a in used or b in used:
                    errs.append(f"links of {e} share a qubit")
                used |= {a, b}
        return errs


def group_adjacency(groups: Sequence[Iterable[int]], g: CouplingGraph) -> dict[int, set[int]]:
    owner = {}
    for i, grp in enumerate(groups):
        for v in grp:
            owner[v] = i
    adj = {i: set() for i in range(len(groups))}
    for u, v in g.edges:
        if u in owner and v in owner and owner[u] != owner[v]:
            adj[owner[u]].add(owner[v])
            adj[owner[v]].add(owner[u])
    return adj


def largest_odd(x: int) -> int:
    return x if x % 2 == 1 else x - 1


def plan_links(groups: Sequence[Iterable[int]], g: CouplingGraph, start: int, l_requested: int,
               seed=None) -> GroupPlan:
    """Spanning tree over groups plus up to ``l_requested`` vertex-disjoint links per tree edge.

    The tree is a maximum-capacity spanning tree of the group-adjacency
    graph (capacity = maximum matching size of the boundary), oriented away
    from the group holding ``start`` and listed in BFS order.  Per tree edge,
    a maximum bipartite matching over the boundary edges bounds the link count; the effective count is the largest
    odd value not exceeding ``min(l_requested, matching size)``.  Child-side
    link qubits are measured during fusion, so they are offered as parent-side
    qubits for deeper boundaries only when that is needed to reach the
    requested link count (the fusion builder then orders CX deepest-first).
    """
    if l_requested < 1 or l_requested % 2 == 0:
        raise PartitionError(f"L={l_requested} disallowed: requested redundancy must be odd (1, 3, 5, ...)")
    rng = _rng(seed)
    groups = [frozenset(grp) for grp in groups]
    root = next((i for i, grp in enumerate(groups) if start in grp), None)
    if root is None:
        raise PartitionError(f"start node {start} is not in any group")
    adj = group_adjacency(groups, g)
    tree = _capacity_tree(groups, adj, root, g)
    if tree is None:
        raise PartitionError("group-adjacency graph is disconnected (partitioning bug)")

    links: dict[tuple[int, int], list[tuple[int, int]]] = {}
    l_eff: dict[tuple[int, int], int] = {}
    measured: set[int] = set()
    notes: list[str] = []
    for p, c in tree:
        matching = _max_matching(_boundary_pairs(groups[p] - measured, groups[c], g))
        if largest_odd(min(l_requested, len(matching))) < l_requested:
            # fall back to measured parent-side qubits (their outgoing CX must run first)
            full = _max_matching(_boundary_pairs(groups[p], groups[c], g))
            if largest_odd(min(l_requested, len(full))) > largest_odd(min(l_requested, len(matching))) \
                    or not matching:
                matching = full
                notes.append(f"boundary {p}-{c}: reuses measured parent-side qubits")
        if not matching:
            raise PartitionError(f"boundary between groups {p} and {c} has no usable link")
        leff = largest_odd(min(l_requested, len(matching)))
        pick = sorted(rng.choice(len(matching), size=leff, replace=False).tolist())
        chosen = sorted(matching[i] for i in pick)
        links[(p, c)] = chosen
        l_eff[(p, c)] = leff
        measured |= {v for _, v in chosen}
        if leff < l_requested:
            notes.append(f"boundary {p}-{c}: matching size {len(matching)} supports L_eff={leff} < L={l_requested}")
    if any("supports" in s for s in notes) and l_requested > 1:
        notes.append("degraded to odd L_eff only (L=2 is never used)")
    return GroupPlan(groups, tree, root, links, l_eff, l_requested, notes)


def _capacity_tree(groups, adj, root: int, g: CouplingGraph) -> list[tuple[int, int]] | None:
    h = nx.Graph()
    h.add_nodes_from(range(len(groups)))
    for p in sorted(adj):
        for c in sorted(adj[p]):
            if p < c:
                h.add_edge(p, c, weight=link_capacity(g, groups[p], groups[c]))
    if not nx.is_connected(h):
        return None
    span = nx.maximum_spanning_tree(h, algorithm="kruskal")
    tree = []
    seen = {root}
    queue = deque([root])
    while queue:
        p = queue.popleft()
        for c in sorted(span.adj[p]):
            if c not in seen:
                seen.add(c)
                tree.append((p, c))
                queue.append(c)
    return tree


def _boundary_pairs(parent: Iterable[int], child: frozenset[int], g: CouplingGraph) -> list[tuple[int, int]]:
    return [(u, v) for u in sorted(parent) for v in g.adjacency[u] if v in child]


def _max_matching(pairs: list[tuple[int, int]]) -> list[tuple[int, int]]:
    if not pairs:
        return []
    h = nx.Graph()
    left = sorted({("p", u) for u, _ in pairs})
    h.add_nodes_from(left, bipartite=0)
    h.add_nodes_from(sorted({("c", v) for _, v in pairs}), bipartite=1)
    h.add_edges_from((("p", u), ("c", v)) for u, v in pairs)
    match = nx.bipartite.hopcroft_karp_matching(h, top_nodes=left)
    return sorted((u[1], match[u][1]) for u in left if u in match)
