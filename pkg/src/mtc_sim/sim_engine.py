"""Deterministic discrete-event simulator for flooded lookups.

One global event queue ordered by (time, sequence) carries query issues,
per-hop deliveries and reply arrivals.  Forwarding depends only on the
topology kind: unstructured peers relay to every neighbor except the
sender, interest communities relay only to neighbors sharing the target
class, and memory-thread members forward along their thread shortcuts.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .dataset import (
    STREAM_SCHEDULE,
    Dataset,
    Placement,
    Query,
    entity_ref,
)
from .errors import ConfigInvalid, InvalidParams, NotAMember
from .metrics import DROP_DUP, DROP_RESP, DROP_TTL

DEFAULT_TTL = 3


class EventKind(Enum):
    ISSUE_QUERY = "issue"
    DELIVER_MESSAGE = "deliver"


class MessageKind(Enum):
    QUERY = "query"
    REPLY = "reply"
    DROP = "drop"
    REQUEST = "request"
    THREAD_WALK = "thread_walk"


@dataclass(frozen=True)
class Message:
    msg_id: int                    # query index; all flood copies share it
    kind: MessageKind
    peer: int                      # receiving peer
    sender: int
    ttl_remaining: int
    hops_taken: int


@dataclass(frozen=True)
class SimEvent:
    time: float
    seq: int
    kind: EventKind
    payload: object


@dataclass(frozen=True)
class DropRecord:
    msg_id: int
    peer: int
    reason: str
    time: float


@dataclass(frozen=True)
class QuerySchedule:
    b: float
    m: float
    horizon: float
    times: tuple[float, ...]
    clamped: int = 0


def schedule_queries(b: float, m: float, horizon: float, seed: int, *,
                     min_gap: float | None = None,
                     run: int = 0) -> QuerySchedule:
    """Issue times with uniform gaps from [b - m, b + m], capped at horizon.

    The gap draw needs b > m to stay positive.  Passing ``min_gap``
    relaxes that: draws below it are clamped (and counted), which keeps
    heavy-traffic sweep points usable instead of erroring out.
    """
    if b <= 0 or horizon <= 0 or m < 0:
        raise InvalidParams(f"need b > 0, m >= 0, horizon > 0; "
                            f"got b={b} m={m} horizon={horizon}")
    if min_gap is None and b <= m:
        raise InvalidParams(f"gap range [{b - m}, {b + m}] allows "
                            f"non-positive gaps; need b > m")
    if min_gap is not None and min_gap <= 0:
        raise InvalidParams("min_gap must be positive")
    rng = np.random.default_rng([STREAM_SCHEDULE, seed, run])
    times: list[float] = []
    clamped = 0
    t = 0.0
    while True:
        gap = float(rng.uniform(b - m, b + m))
        if min_gap is not None and gap < min_gap:
            gap = float(min_gap)
            clamped += 1
        t += gap
        if t > horizon:
            break
        times.append(t)
    return QuerySchedule(b=b, m=m, horizon=horizon, times=tuple(times),
                         clamped=clamped)


@dataclass
class SearchResult:
    """Counter totals for one batch of queries over one topology."""

    issued: int = 0
    succeeded: int = 0
    dropped_ttl: int = 0
    dropped_dup: int = 0
    dropped_resp: int = 0
    query_messages: int = 0
    reply_messages: int = 0
    response_messages: int = 0
    hop_histogram: dict[int, int] = field(default_factory=dict)
    sent: int = 0
    received: int = 0
    engine: str = "event"
    drop_records: list[DropRecord] | None = None
    trace: list[str] | None = None

    def drops_by_reason(self) -> dict[str, int]:
        return {DROP_TTL: self.dropped_ttl,
                DROP_DUP: self.dropped_dup,
                DROP_RESP: self.dropped_resp}

    def overhead(self) -> int:
        return self.dropped_ttl + self.dropped_dup + self.dropped_resp


class _PolicyCtx:
    """Static lookup tables the forwarding policy reads per delivery."""

    def __init__(self, topology, dataset: Dataset):
        self.kind = topology.kind.value
        self.topology = topology
        self.dataset = dataset
        indptr, indices = topology.neighbor_csr()
        self.adj = [indices[indptr[p]:indptr[p + 1]].tolist()
                    for p in range(topology.n_peers)]
        self.profiles = [frozenset(pr) for pr in topology.profiles] \
            if topology.profiles else None
        self.overlay = topology.overlay
        self._class_adj: dict[int, list[list[int] | None]] = {}

    def class_adjacency(self, cls: int) -> list[list[int] | None]:
        """Neighbors sharing ``cls``, only for peers subscribed to it."""
        cached = self._class_adj.get(cls)
        if cached is not None:
            return cached
        n = len(self.adj)
        out: list[list[int] | None] = [None] * n
        for p in range(n):
            if cls in self.profiles[p]:
                out[p] = [q for q in self.adj[p] if cls in self.profiles[q]]
        self._class_adj[cls] = out
        return out


@dataclass(frozen=True)
class _QueryCtx:
    origin: int
    file_id: int
    entity: int
    value: int
    cls: int
    thread_id: str
    holders: frozenset[int]


def _query_contexts(dataset: Dataset, placement: Placement,
                    queries: list[Query]) -> list[_QueryCtx]:
    ctxs = []
    for q in queries:
        rec = dataset.files[q.target_file]
        holders = frozenset(placement.holders_by_file[q.target_file])
        if q.origin in holders:
            raise ConfigInvalid(f"query origin {q.origin} already holds "
                                f"file {q.target_file}")
        ctxs.append(_QueryCtx(origin=q.origin, file_id=q.target_file,
                              entity=rec.entity, value=rec.value,
                              cls=dataset.entity_class[rec.entity],
                              thread_id=f"vmt:{entity_ref(rec.entity)}",
                              holders=holders))
    return ctxs


def forwarding_policy(ctx: _PolicyCtx, q: _QueryCtx, peer: int,
                      sender: int | None) -> list[int]:
    """Next-hop peers for one delivered query copy, ascending order."""
    if ctx.kind == "unstructured":
        nbrs = ctx.adj[peer]
        return [p for p in nbrs if p != sender] if sender is not None \
            else list(nbrs)
    if ctx.kind == "ibc":
        row = ctx.class_adjacency(q.cls)[peer]
        if row is None:          # peer outside the target class
            return []
        return [p for p in row if p != sender] if sender is not None \
            else list(row)
    try:
        return ctx.overlay.apply_shortcuts(peer, q.thread_id, q.value,
                                           sender)
    except NotAMember:
        return []


class _QueryState:
    __slots__ = ("outstanding", "succeeded", "seen", "closed")

    def __init__(self):
        self.outstanding = 0
        self.succeeded = False
        self.seen: set[int] = set()
        self.closed = False


def run_event(topology, dataset: Dataset, queries: list[Query],
              times: list[float] | None = None, ttl: int = DEFAULT_TTL, *,
              placement: Placement | None = None, trace: bool = False,
              keep_records: bool = False) -> SearchResult:
    """Reference event-driven search over a prepared topology.

    Every hop costs one time unit.  A delivered copy is checked in order:
    duplicate, local match (holders reply and stop), expired TTL, then
    forwarding.  Structured peers with nowhere to forward send a drop
    response back to the origin; unstructured dead ends just go quiet.
    """
    if ttl < 1:
        raise InvalidParams(f"ttl must be >= 1, got {ttl}")
    placement = placement if placement is not None else topology.placement
    if placement is None:
        raise ConfigInvalid("topology has no placement attached")
    if times is None:
        times = [float(i) for i in range(len(queries))]
    if len(times) != len(queries):
        raise InvalidParams(f"{len(queries)} queries but {len(times)} "
                            f"issue times")

    ctx = _PolicyCtx(topology, dataset)
    qctxs = _query_contexts(dataset, placement, queries)
    res = SearchResult(trace=[] if trace else None,
                       drop_records=[] if keep_records else None)
    structured = ctx.kind != "unstructured"
    states = [_QueryState() for _ in queries]

    heap: list[tuple[float, int, int, object]] = []
    seq = 0

    def push(time: float, kind: EventKind, payload) -> None:
        nonlocal seq
        heapq.heappush(heap, (time, seq, kind.value, payload))
        seq += 1

    def log(time: float, peer: int, op: str, qid: int, detail: str) -> None:
        if res.trace is not None:
            res.trace.append(f"{time:g}, {peer}, {op}, q{qid}, {detail}")

    def drop(time: float, peer: int, qid: int, reason: str) -> None:
        if reason == DROP_TTL:
            res.dropped_ttl += 1
        elif reason == DROP_DUP:
            res.dropped_dup += 1
        else:
            res.dropped_resp += 1
        if res.drop_records is not None:
            res.drop_records.append(DropRecord(qid, peer, reason, time))
        log(time, peer, "drop", qid, reason)

    def forward(time: float, qid: int, peer: int, sender: int | None,
                ttl_remaining: int, hops: int) -> int:
        """Send copies onward; returns how many left this peer."""
        q = qctxs[qid]
        targets = forwarding_policy(ctx, q, peer, sender)
        for nb in targets:
            push(time + 1.0,
                 EventKind.DELIVER_MESSAGE,
                 Message(qid, MessageKind.QUERY, nb, peer,
                         ttl_remaining, hops + 1))
        n = len(targets)
        res.query_messages += n
        res.sent += n
        states[qid].outstanding += n
        return n

    for i, t in enumerate(times):
        push(t, EventKind.ISSUE_QUERY, i)

    while heap:
        time, _, kind, payload = heapq.heappop(heap)
        if kind == EventKind.ISSUE_QUERY.value:
            qid = payload
            q = qctxs[qid]
            st = states[qid]
            res.issued += 1
            st.seen.add(q.origin)
            log(time, q.origin, "issue", qid,
                f"file={q.file_id} value={q.value}")
            fanned = forward(time, qid, q.origin, None, ttl - 1, 0)
            if fanned == 0:
                if structured:
                    drop(time, q.origin, qid, DROP_RESP)
                st.closed = True
                log(time, q.origin, "close", qid, "no-route")
            continue

        msg: Message = payload
        qid = msg.msg_id
        st = states[qid]
        q = qctxs[qid]
        st.outstanding -= 1
        res.received += 1

        if msg.kind == MessageKind.REPLY:
            if not st.succeeded:
                st.succeeded = True
                res.succeeded += 1
                h = msg.hops_taken
                res.hop_histogram[h] = res.hop_histogram.get(h, 0) + 1
            log(time, msg.peer, "reply_arrived", qid,
                f"hops={msg.hops_taken}")
        elif msg.kind == MessageKind.DROP:
            drop(time, msg.peer, qid, DROP_RESP)
        else:                                  # a flooded query copy
            peer = msg.peer
            if peer in st.seen:
                drop(time, peer, qid, DROP_DUP)
            elif peer in q.holders:
                st.seen.add(peer)
                res.reply_messages += msg.hops_taken
                res.sent += 1
                st.outstanding += 1
                push(time + msg.hops_taken, EventKind.DELIVER_MESSAGE,
                     Message(qid, MessageKind.REPLY, q.origin, peer,
                             0, msg.hops_taken))
                log(time, peer, "match", qid, f"file={q.file_id}")
            elif msg.ttl_remaining == 0:
                st.seen.add(peer)
                drop(time, peer, qid, DROP_TTL)
            else:
                st.seen.add(peer)
                fanned = forward(time, qid, peer, msg.sender,
                                 msg.ttl_remaining - 1, msg.hops_taken)
                if fanned == 0 and structured:
                    res.response_messages += msg.hops_taken
                    res.sent += 1
                    st.outstanding += 1
                    push(time + msg.hops_taken, EventKind.DELIVER_MESSAGE,
                         Message(qid, MessageKind.DROP, q.origin, peer,
                                 0, msg.hops_taken))

        if st.outstanding == 0 and not st.closed:
            st.closed = True
            log(time, q.origin, "close", qid,
                "hit" if st.succeeded else "miss")

    return res


def simulate(topology, dataset: Dataset, queries: list[Query],
             times: list[float] | None = None, ttl: int = DEFAULT_TTL, *,
             placement: Placement | None = None, engine: str = "auto",
             trace: bool = False, keep_records: bool = False) -> SearchResult:
    """Run queries through the event engine or a batch flood kernel.

    ``auto`` picks the fastest implementation that can express the
    topology: the array kernels handle unstructured and community floods,
    while thread routing (tiny fan-out) stays on the event engine.  Both
    paths produce identical counters.
    """
    if engine not in ("auto", "event", "kernel"):
        raise ConfigInvalid(f"unknown engine {engine!r}")
    want_kernel = engine == "kernel" or (
        engine == "auto" and topology.kind.value in ("unstructured", "ibc")
        and not trace and not keep_records)
    if want_kernel:
        from .accel import flood_module
        mod = flood_module()
        if topology.kind.value in ("unstructured", "ibc"):
            return mod.run_flood(topology, dataset, queries, ttl,
                                 placement=placement)
        if engine == "kernel":
            raise ConfigInvalid("kernel engine covers unstructured and "
                                "ibc topologies only")
    return run_event(topology, dataset, queries, times, ttl,
                     placement=placement, trace=trace,
                     keep_records=keep_records)
