"""Topology experiments: reservation sizes and coverage on scale-free graphs.

Graphs are preferential-attachment (Barabási–Albert) with degree-gravity
link capacities: each edge lands in one of ten buckets (40..400 Gbps by
default) by the quantile of its endpoint degree product, ties toward the
lower bucket. Every node gets an internal interface 0 whose capacity is
the maximum of its external links, plus one interface per incident edge,
and an allocation matrix built from those capacities.

Reservation sizes between node pairs follow the per-pair share formula
with the requester count taken as the exact number of sources whose
shortest paths cross the pair; paths are BFS shortest paths with
lowest-node-id tie-breaking, which makes every run reproducible. Per-pair
arithmetic is exact (integers and rationals); the per-destination minima
use floats for speed, which is safe because dividing by an integer count
never increases a float.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from statistics import median

import networkx as nx

from .admission import AllocationMatrix

GBPS = 10**9

CONCURRENT = "concurrent"
MAXIMUM = "maximum"


@dataclass(frozen=True)
class ExperimentConfig:
    n_nodes: int
    attachment: int = 2
    sampling_rate: float = 0.1
    strategy: str = MAXIMUM
    min_requesters: int = 1
    seed: int = 1
    capacity_step: int = 40 * GBPS
    capacity_buckets: int = 10

    def __post_init__(self):
        if not 0 < self.sampling_rate <= 1:
            raise ValueError("sampling rate must be in (0, 1]")
        if self.n_nodes < 2:
            raise ValueError("need at least two nodes")
        if self.strategy not in (CONCURRENT, MAXIMUM):
            raise ValueError(f"unknown strategy {self.strategy!r}")


class TopologyGraph:
    """Undirected scale-free graph with interfaces and link capacities."""

    def __init__(self, n: int, edges: list[tuple[int, int]],
                 edge_capacity: dict[tuple[int, int], int]):
        self.n = n
        self.adj: list[list[int]] = [[] for _ in range(n)]
        for u, v in edges:
            self.adj[u].append(v)
            self.adj[v].append(u)
        for lst in self.adj:
            lst.sort()  # ascending ids give the deterministic BFS tie-break
        self.edge_capacity = edge_capacity
        # interface 0 is internal; externals numbered in ascending neighbor id
        self.if_index: list[dict[int, int]] = [
            {nbr: i + 1 for i, nbr in enumerate(self.adj[u])} for u in range(n)
        ]
        self.capacities: list[list[int]] = []
        for u in range(n):
            ext = [edge_capacity[_ekey(u, v)] for v in self.adj[u]]
            self.capacities.append([max(ext, default=0)] + ext)

    @property
    def degrees(self) -> list[int]:
        return [len(a) for a in self.adj]

    @property
    def n_edges(self) -> int:
        return sum(self.degrees) // 2

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = bytearray(self.n)
        seen[0] = 1
        queue = deque([0])
        count = 1
        while queue:
            u = queue.popleft()
            for v in self.adj[u]:
                if not seen[v]:
                    seen[v] = 1
                    count += 1
                    queue.append(v)
        return count == self.n


def _ekey(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def generate_topology(n: int, attachment: int = 2, seed: int = 1,
                      capacity_step: int = 40 * GBPS,
                      capacity_buckets: int = 10) -> TopologyGraph:
    """Preferential-attachment graph with degree-gravity capacities."""
    g = nx.barabasi_albert_graph(n, attachment, seed=seed)
    edges = [(_ekey(u, v)) for u, v in g.edges()]
    deg = dict(g.degree())
    return _assign_capacities(n, edges, deg, capacity_step, capacity_buckets)


def _assign_capacities(n, edges, deg, step, buckets) -> TopologyGraph:
    products = {e: deg[e[0]] * deg[e[1]] for e in edges}
    ordered = sorted(products.values())
    # rank of the first occurrence: equal products share the lower bucket
    first_rank: dict[int, int] = {}
    for i, p in enumerate(ordered):
        first_rank.setdefault(p, i)
    m = len(edges)
    capacity = {
        e: step * (first_rank[products[e]] * buckets // m + 1) for e in edges
    }
    return TopologyGraph(n, edges, capacity)


def build_matrices(g: TopologyGraph) -> list[AllocationMatrix]:
    return [AllocationMatrix.from_capacities(caps) for caps in g.capacities]


# ---------------------------------------------------------------------------
# destination sampling


def destination_order(g: TopologyGraph, src: int, seed: int) -> list[int]:
    """All other nodes in weighted sampling order for this source.

    Keys are exponential draws scaled by inverse degree weight; taking the
    d smallest is distribution-identical to d sequential draws with
    renormalization, and prefixes are nested across sampling rates.
    """
    rng = random.Random(seed * 1_000_003 + src)
    deg = g.degrees
    keyed = []
    for v in range(g.n):
        if v == src:
            continue
        keyed.append((rng.expovariate(1.0) / deg[v], v))
    keyed.sort()
    return [v for _, v in keyed]


def sample_count(r: float, n: int) -> int:
    return max(1, min(n - 1, round(r * n)))


def sample_destinations(g: TopologyGraph, src: int, r: float, seed: int) -> list[int]:
    """Sample round(r*N) distinct destinations, degree-weighted, without
    replacement; never includes the source itself."""
    return destination_order(g, src, seed)[: sample_count(r, g.n)]


# ---------------------------------------------------------------------------
# shortest-path trees


def shortest_path_tree(g: TopologyGraph, src: int) -> tuple[list[int], list[int]]:
    """BFS tree with lowest-id tie-breaking: (parents, visit order)."""
    parent = [-1] * g.n
    parent[src] = src
    order = [src]
    queue = deque([src])
    adj = g.adj
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if parent[v] < 0:
                parent[v] = u
                order.append(v)
                queue.append(v)
    return parent, order


def path_between(g: TopologyGraph, src: int, dst: int) -> list[int]:
    parent, _ = shortest_path_tree(g, src)
    path = [dst]
    while path[-1] != src:
        path.append(parent[path[-1]])
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# reservation study


class ReservationStudy:
    """Per-pair requester counts and end-to-end reservation sizes.

    ``demands`` maps each source to its destination list. The requester
    count of an interface pair is the number of distinct sources whose
    selected paths traverse it, including the source's own internal-to-
    egress pair and the destination's ingress-to-internal pair.
    """

    def __init__(self, g: TopologyGraph, matrices: list[AllocationMatrix],
                 demands: dict[int, list[int]], min_requesters: int = 1):
        if min_requesters < 1:
            raise ValueError("min_requesters must be >= 1")
        self.g = g
        self.matrices = matrices
        self.demands = demands
        self.min_requesters = min_requesters
        self.pair_requesters: dict[tuple[int, int, int], int] = {}
        self._count_requesters()

    # pass A ---------------------------------------------------------------

    def _tree_and_counts(self, src: int, dests: list[int]):
        parent, order = shortest_path_tree(self.g, src)
        counts = [0] * self.g.n
        for d in dests:
            counts[d] += 1
        for v in reversed(order):
            if v != src and counts[v]:
                counts[parent[v]] += counts[v]
        return parent, order, counts

    def _count_requesters(self) -> None:
        rho = self.pair_requesters
        if_index = self.g.if_index
        for src, dests in self.demands.items():
            parent, order, counts = self._tree_and_counts(src, dests)
            dest_set = set(dests)
            for v in order:
                if v == src or not counts[v]:
                    continue
                u = parent[v]
                a = 0 if u == src else if_index[u][parent[u]]
                b = if_index[u][v]
                key = (u, a, b)
                rho[key] = rho.get(key, 0) + 1
                if v in dest_set:
                    tkey = (v, if_index[v][u], 0)
                    rho[tkey] = rho.get(tkey, 0) + 1

    # derived quantities -----------------------------------------------------

    def pair_bandwidth(self) -> dict[tuple[int, int, int], Fraction]:
        """Exact per-source share for every used interface pair."""
        out = {}
        for (node, a, b), count in self.pair_requesters.items():
            entry = self.matrices[node].admission_value(a, b)
            out[(node, a, b)] = Fraction(entry, max(count, self.min_requesters))
        return out

    def _bw_float(self) -> dict[tuple[int, int, int], float]:
        return {k: float(v) for k, v in self.pair_bandwidth().items()}

    def covers(self, gamma: float) -> dict[str, "CoverResult"]:
        """Coverage under both composition strategies in one sweep.

        A destination is covered when the end-to-end reservation exceeds
        ``gamma``: the minimum over on-path pair shares, where the
        concurrent strategy divides each share by the number of this
        source's paths through the pair and the maximum strategy uses the
        full share per path.
        """
        bw = self._bw_float()
        if_index = self.g.if_index
        inf = float("inf")
        per_node: dict[str, dict[int, float]] = {MAXIMUM: {}, CONCURRENT: {}}
        for src, dests in self.demands.items():
            parent, order, counts = self._tree_and_counts(src, dests)
            dest_set = set(dests)
            min_max = [0.0] * self.g.n
            min_conc = [0.0] * self.g.n
            min_max[src] = min_conc[src] = inf
            cov_max = cov_conc = 0
            for v in order:
                if v == src or not counts[v]:
                    continue
                u = parent[v]
                a = 0 if u == src else if_index[u][parent[u]]
                share = bw[(u, a, if_index[u][v])]
                min_max[v] = share if share < min_max[u] else min_max[u]
                cshare = share / counts[v]
                min_conc[v] = cshare if cshare < min_conc[u] else min_conc[u]
                if v in dest_set:
                    term = bw[(v, if_index[v][u], 0)]
                    if min(min_max[v], term) > gamma:
                        cov_max += 1
                    if min(min_conc[v], term) > gamma:  # one path ends here
                        cov_conc += 1
            per_node[MAXIMUM][src] = cov_max / len(dests)
            per_node[CONCURRENT][src] = cov_conc / len(dests)
        return {s: CoverResult(vals, gamma) for s, vals in per_node.items()}

    def reservations_exact(self, strategy: str) -> dict[tuple[int, int], Fraction]:
        """Exact end-to-end sizes for every (src, dst) demand. Small graphs."""
        bw = self.pair_bandwidth()
        if_index = self.g.if_index
        out = {}
        for src, dests in self.demands.items():
            parent, order, counts = self._tree_and_counts(src, dests)
            dest_set = set(dests)
            best: dict[int, Fraction | None] = {src: None}
            for v in order:
                if v == src or not counts[v]:
                    continue
                u = parent[v]
                a = 0 if u == src else if_index[u][parent[u]]
                share = bw[(u, a, if_index[u][v])]
                if strategy == CONCURRENT:
                    share = share / counts[v]
                up = best[u]
                best[v] = share if up is None or share < up else up
                if v in dest_set:
                    term = bw[(v, if_index[v][u], 0)]
                    out[(src, v)] = min(best[v], term)
        return out

    def reservation_rows(self, strategy: str):
        """Stream (src, dst, size_bps_float) without materializing them all."""
        bw = self._bw_float()
        if_index = self.g.if_index
        inf = float("inf")
        for src, dests in self.demands.items():
            parent, order, counts = self._tree_and_counts(src, dests)
            dest_set = set(dests)
            best = [0.0] * self.g.n
            best[src] = inf
            for v in order:
                if v == src or not counts[v]:
                    continue
                u = parent[v]
                a = 0 if u == src else if_index[u][parent[u]]
                share = bw[(u, a, if_index[u][v])]
                if strategy == CONCURRENT:
                    share = share / counts[v]
                best[v] = share if share < best[u] else best[u]
                if v in dest_set:
                    term = bw[(v, if_index[v][u], 0)]
                    yield src, v, min(best[v], term)


@dataclass(frozen=True)
class CoverResult:
    per_node: dict[int, float]
    gamma: float

    @property
    def median(self) -> float:
        return median(self.per_node.values())


def gamma_cover(reservations: dict[tuple[int, int], Fraction | float],
                dest_sets: dict[int, list[int]], gamma: float) -> CoverResult:
    """Cover from explicit reservation sizes; the direct-enumeration form."""
    per_node = {}
    for src, dests in dest_sets.items():
        if not dests:
            continue
        covered = sum(1 for d in dests if reservations.get((src, d), 0) > gamma)
        per_node[src] = covered / len(dests)
    return CoverResult(per_node, gamma)


# ---------------------------------------------------------------------------
# orchestration


def build_demands(g: TopologyGraph, r: float, seed: int) -> dict[int, list[int]]:
    return {src: sample_destinations(g, src, r, seed) for src in range(g.n)}


def run_cover_experiment(cfg: ExperimentConfig, gamma: float):
    """One (config, seed) run: returns {strategy: CoverResult}."""
    g = generate_topology(cfg.n_nodes, cfg.attachment, cfg.seed,
                          cfg.capacity_step, cfg.capacity_buckets)
    matrices = build_matrices(g)
    demands = build_demands(g, cfg.sampling_rate, cfg.seed)
    study = ReservationStudy(g, matrices, demands, cfg.min_requesters)
    return study.covers(gamma)
