"""Overlay generators: unstructured random, interest communities, MTC.

All three respect a shared power-law degree-cap sample so their edge
budgets stay comparable.  The interest-community generator wires a
tunable share of each peer's intra-community edges inside its linear
sub-group, which preserves the placement locality of the dataset; the
unstructured generator ignores communities entirely.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataset import (
    Dataset,
    Placement,
    STREAM_TOPOLOGY,
    assign_profiles,
    entity_ref,
)
from .errors import (
    EmptyDataset,
    InsufficientPeers,
    InvalidExponent,
    TooSmall,
)
from .overlay_mtc import MtcOverlay, PeerNode


class TopologyKind(Enum):
    UNSTRUCTURED = "unstructured"
    IBC = "ibc"
    MTC = "mtc"


@dataclass(frozen=True)
class DegreeCapDistribution:
    """Discrete power law P(cap = c) proportional to c ** -exponent."""

    exponent: float = 2.5
    min_cap: int = 2
    max_cap: int = 100

    def validate(self) -> None:
        if self.exponent <= 2.0:
            raise InvalidExponent(
                f"exponent must exceed 2, got {self.exponent}")
        if self.min_cap < 2 or self.max_cap < self.min_cap:
            raise InvalidExponent(
                f"bad cap support [{self.min_cap}, {self.max_cap}]")


@dataclass(frozen=True)
class CommunityConfig:
    n_communities: int = 7
    memberships_per_peer: int = 3
    homophily: float = 0.65           # share of edges kept inside sub-groups
    subgroup_frac: float = 0.05       # sub-group size as share of community
    min_subgroup: int = 24


@dataclass
class Topology:
    kind: TopologyKind
    n_peers: int
    caps: list[int]
    edges: set[tuple[int, int]]
    peers: list[PeerNode]
    profiles: list[tuple[int, ...]] = field(default_factory=list)
    communities: dict[int, list[int]] = field(default_factory=dict)
    subgroup_size: dict[int, int] = field(default_factory=dict)
    placement: Placement | None = None
    overlay: MtcOverlay | None = None
    largest_component: int = 0
    trimmed_edges: int = 0
    _csr: tuple[np.ndarray, np.ndarray] | None = None

    def degree(self, p: int) -> int:
        return len(self.peers[p].neighbors)

    def neighbor_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Adjacency in CSR form, neighbors ascending per peer."""
        if self._csr is None:
            counts = np.zeros(self.n_peers + 1, dtype=np.int64)
            for p in range(self.n_peers):
                counts[p + 1] = len(self.peers[p].neighbors)
            indptr = np.cumsum(counts)
            indices = np.empty(int(indptr[-1]), dtype=np.int32)
            for p in range(self.n_peers):
                nb = sorted(self.peers[p].neighbors)
                indices[indptr[p]:indptr[p + 1]] = nb
            self._csr = (indptr, indices)
        return self._csr

    def community_masks(self) -> np.ndarray:
        """Per-peer bitmask of community memberships (classes 0..63)."""
        masks = np.zeros(self.n_peers, dtype=np.uint64)
        for p, prof in enumerate(self.profiles):
            m = 0
            for c in prof:
                m |= 1 << c
            masks[p] = m
        return masks


def sample_degree_caps(n: int, dist: DegreeCapDistribution,
                       seed: int, run: int = 0) -> list[int]:
    """Inverse-CDF sample over the discrete support [min_cap, max_cap]."""
    dist.validate()
    if n < 1:
        raise TooSmall("need at least one peer")
    support = np.arange(dist.min_cap, dist.max_cap + 1, dtype=np.float64)
    pmf = support ** (-dist.exponent)
    cdf = np.cumsum(pmf / pmf.sum())
    rng = np.random.default_rng([STREAM_TOPOLOGY, seed, run, 0])
    picks = np.searchsorted(cdf, rng.random(n), side="right")
    picks = np.minimum(picks, len(support) - 1)
    return [int(dist.min_cap + p) for p in picks]


def analytic_mean_cap(dist: DegreeCapDistribution) -> float:
    support = np.arange(dist.min_cap, dist.max_cap + 1, dtype=np.float64)
    pmf = support ** (-dist.exponent)
    return float((support * pmf).sum() / pmf.sum())


class _Pool:
    """Uniform random picks from a shrinking candidate set."""

    def __init__(self, items: list[int], rng: np.random.Generator):
        self.items = list(items)
        self.pos = {p: i for i, p in enumerate(self.items)}
        self.rng = rng

    def __len__(self) -> int:
        return len(self.items)

    def pick(self) -> int:
        return self.items[int(self.rng.integers(len(self.items)))]

    def discard(self, p: int) -> None:
        i = self.pos.pop(p, None)
        if i is None:
            return
        last = self.items.pop()
        if last != p:
            self.items[i] = last
            self.pos[last] = i


def _edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def _try_link(u: int, v: int, caps: list[int],
              nbrs: list[set[int]], edges: set[tuple[int, int]]) -> bool:
    if u == v or v in nbrs[u]:
        return False
    if len(nbrs[u]) >= caps[u] or len(nbrs[v]) >= caps[v]:
        return False
    nbrs[u].add(v)
    nbrs[v].add(u)
    edges.add(_edge_key(u, v))
    return True


def largest_component_size(n: int, nbrs: list[set[int]]) -> int:
    seen = [False] * n
    best = 0
    for s in range(n):
        if seen[s]:
            continue
        size = 0
        queue = deque([s])
        seen[s] = True
        while queue:
            p = queue.popleft()
            size += 1
            for q in nbrs[p]:
                if not seen[q]:
                    seen[q] = True
                    queue.append(q)
        best = max(best, size)
    return best


def _finish(kind: TopologyKind, n: int, caps: list[int],
            edges: set[tuple[int, int]], nbrs: list[set[int]],
            **extra) -> Topology:
    peers = [PeerNode(peer_id=p, cap=caps[p], neighbors=nbrs[p])
             for p in range(n)]
    t = Topology(kind=kind, n_peers=n, caps=caps, edges=edges, peers=peers,
                 largest_component=largest_component_size(n, nbrs), **extra)
    return t


def gen_unstructured(n: int, dist: DegreeCapDistribution, seed: int,
                     *, run: int = 0, caps: list[int] | None = None,
                     dataset: Dataset | None = None,
                     edge_budget: int | None = None) -> Topology:
    """Random graph: visit peers in random order, add random partners
    until each peer's cap is filled or no partner remains."""
    if n < 2:
        raise TooSmall("unstructured topology needs at least 2 peers")
    caps = caps if caps is not None else sample_degree_caps(n, dist, seed, run)
    rng = np.random.default_rng([STREAM_TOPOLOGY, seed, run, 1])
    nbrs: list[set[int]] = [set() for _ in range(n)]
    edges: set[tuple[int, int]] = set()
    pool = _Pool([p for p in range(n) if caps[p] > 0], rng)
    order = rng.permutation(n)
    for p in order:
        misses = 0
        while len(nbrs[p]) < caps[p] and len(pool) > 1 and misses < 30:
            if edge_budget is not None and len(edges) >= edge_budget:
                break
            q = pool.pick()
            if _try_link(p, q, caps, nbrs, edges):
                misses = 0
                if len(nbrs[q]) >= caps[q]:
                    pool.discard(q)
            else:
                misses += 1
        if len(nbrs[p]) >= caps[p]:
            pool.discard(p)
        if edge_budget is not None and len(edges) >= edge_budget:
            break
    return _finish(TopologyKind.UNSTRUCTURED, n, caps, edges, nbrs)


def gen_ibc(n: int, dist: DegreeCapDistribution, cc: CommunityConfig,
            seed: int, *, run: int = 0, caps: list[int] | None = None,
            dataset: Dataset | None = None,
            edge_budget: int | None = None) -> Topology:
    """Interest communities: balanced memberships, intra-community edges
    with a homophilous preference for the peer's linear sub-group."""
    if n < cc.n_communities:
        raise InsufficientPeers(
            f"{n} peers cannot fill {cc.n_communities} communities")
    caps = caps if caps is not None else sample_degree_caps(n, dist, seed, run)
    rng = np.random.default_rng([STREAM_TOPOLOGY, seed, run, 2])
    if dataset is not None and dataset.profiles:
        profiles = dataset.profiles
    else:
        profiles = assign_profiles(n, cc.n_communities,
                                   cc.memberships_per_peer, rng)

    members: dict[int, list[int]] = {c: [] for c in range(cc.n_communities)}
    for p in range(n):
        for c in profiles[p]:
            members[c].append(p)
    rank: dict[int, dict[int, int]] = {
        c: {p: i for i, p in enumerate(ms)} for c, ms in members.items()}
    gsize = {c: max(cc.min_subgroup,
                    round(len(ms) * cc.subgroup_frac)) or 1
             for c, ms in members.items()}

    nbrs: list[set[int]] = [set() for _ in range(n)]
    edges: set[tuple[int, int]] = set()

    def community_pick(c: int) -> int:
        ms = members[c]
        return ms[int(rng.integers(len(ms)))]

    def subgroup_pick(c: int, p: int) -> int:
        ms = members[c]
        g = gsize[c]
        lo = (rank[c][p] // g) * g
        hi = min(lo + g, len(ms))
        return ms[lo + int(rng.integers(hi - lo))]

    for p in rng.permutation(n):
        prof = profiles[p]
        spare = caps[p] - len(nbrs[p])
        if spare <= 0:
            continue
        quotas = [spare // len(prof)] * len(prof)
        for i in range(spare % len(prof)):
            quotas[(p + i) % len(prof)] += 1
        for c, want in zip(prof, quotas):
            placed = 0
            misses = 0
            while placed < want and misses < 25:
                if len(members[c]) < 2:
                    break
                if rng.random() < cc.homophily:
                    q = subgroup_pick(c, p)
                else:
                    q = community_pick(c)
                if _try_link(p, q, caps, nbrs, edges):
                    placed += 1
                else:
                    misses += 1

    trimmed = 0
    if edge_budget is not None and len(edges) > edge_budget:
        eligible = sorted(edges)
        drop = rng.choice(len(eligible), size=len(edges) - edge_budget,
                          replace=False)
        for i in drop:
            u, v = eligible[int(i)]
            edges.discard((u, v))
            nbrs[u].discard(v)
            nbrs[v].discard(u)
            trimmed += 1

    placement = dataset.linear if dataset is not None else None
    return _finish(TopologyKind.IBC, n, caps, edges, nbrs,
                   profiles=list(profiles), communities=members,
                   subgroup_size=gsize, placement=placement,
                   trimmed_edges=trimmed)


def gen_mtc(n: int, dist: DegreeCapDistribution, dataset: Dataset | None,
            seed: int, *, run: int = 0, k: int = 2,
            caps: list[int] | None = None) -> Topology:
    """One virtual thread per entity over the dataset's linear placement."""
    if dataset is None or not dataset.memories:
        raise EmptyDataset("MTC generation needs a populated dataset")
    caps = caps if caps is not None else sample_degree_caps(n, dist, seed, run)
    ov = MtcOverlay(k=k)
    for p in range(n):
        ov.add_peer(p, cap=caps[p])
    for m in dataset.memories:
        ov.add_memory(m)
    for e, fs in enumerate(dataset.entity_files):
        if not fs:
            continue
        holders = dataset.linear.entity_holders(fs)
        ov.form_vmt(min(holders), entity_ref(e))
    nbrs = [ov.peers[p].neighbors for p in range(n)]
    t = _finish(TopologyKind.MTC, n, caps, set(ov.edges), nbrs,
                placement=dataset.linear, overlay=ov,
                profiles=list(dataset.profiles))
    t.peers = [ov.peers[p] for p in range(n)]
    return t


def graph_density(t: Topology) -> float:
    if t.n_peers < 2:
        raise TooSmall("density needs at least 2 peers")
    return 2.0 * len(t.edges) / (t.n_peers * (t.n_peers - 1))


def dump_topology(t: Topology, path) -> None:
    """Plain-text dump: vertex/edge counts, edge list, per-peer line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"V {t.n_peers}\n")
        fh.write(f"E {len(t.edges)}\n")
        for u, v in sorted(t.edges):
            fh.write(f"{u} {v}\n")
        for p in range(t.n_peers):
            comms = " ".join(str(c) for c in
                             (t.profiles[p] if t.profiles else ()))
            fh.write(f"{p} {t.caps[p]}{' ' + comms if comms else ''}\n")


def load_topology(path, kind: TopologyKind = TopologyKind.UNSTRUCTURED
                  ) -> Topology:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        n = int(header[1])
        n_edges = int(fh.readline().split()[1])
        nbrs: list[set[int]] = [set() for _ in range(n)]
        edges: set[tuple[int, int]] = set()
        for _ in range(n_edges):
            u, v = (int(x) for x in fh.readline().split())
            nbrs[u].add(v)
            nbrs[v].add(u)
            edges.add(_edge_key(u, v))
        caps = [0] * n
        profiles: list[tuple[int, ...]] = [()] * n
        for _ in range(n):
            parts = fh.readline().split()
            p = int(parts[0])
            caps[p] = int(parts[1])
            profiles[p] = tuple(int(c) for c in parts[2:])
    return _finish(kind, n, caps, edges, nbrs,
                   profiles=profiles if any(profiles) else [])
