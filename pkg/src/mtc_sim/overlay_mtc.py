"""MTC overlay protocol: thread formation, join/leave, sub-communities.

The overlay arranges the holders of one entity's memories along that
entity's virtual memory thread (VMT), ordered by the indexing value of the
memory each peer holds.  Every thread position has one active peer; when
several peers hold the same content (same hash, hence same indexing value)
they form a sub-community whose lowest-id member represents the position
while the others attach to the representative and to the representatives on
both sides.  Representatives keep links to their k nearest position
neighbors on each side (k = 2 by default), which gives the thread enough
redundancy to survive any single departure.

All link placement is cap-aware: a link is refused (and counted) rather
than exceed either endpoint's degree cap.  Members that cannot reach their
representative chain to an already-attached member of the same position
instead, so a position stays internally connected whenever any capacity
remains.
"""

from __future__ import annotations

from bisect import bisect_left, insort
from collections import Counter, deque
from dataclasses import dataclass, field

from .errors import (
    BroadcastBudgetExceeded,
    EmptySubCommunity,
    NoMatchingMemory,
    NoResponders,
    NotAMember,
    TooFew,
    UnknownPeer,
)
from .memory_core import (
    TIME_KEY,
    DigitalMemory,
    MemoryThread,
    ThreadCriteria,
    ThreadEntry,
    ThreadKind,
)

#: a role is one (peer_id, position_value) pair
Role = tuple[int, int]


@dataclass
class NeighborTable:
    """k-hop thread neighbors of one position, nearer peers first."""

    k: int = 2
    predecessors: list[int] = field(default_factory=list)
    successors: list[int] = field(default_factory=list)


@dataclass
class SubCommunity:
    """Duplicate holders of one thread position (position = indexing value)."""

    position: int
    members: set[int]
    representative: int


@dataclass
class ShortcutList:
    """A peer's own positions within one thread, ascending."""

    peer_id: int
    thread_id: str
    sorted_positions: list[int]


class BoundedSet:
    """Fixed-capacity membership set with FIFO eviction (dedup cache)."""

    def __init__(self, maxlen: int = 4096):
        self.maxlen = maxlen
        self._order: deque = deque()
        self._items: set = set()

    def add(self, item) -> bool:
        """Insert item; returns False if it was already present."""
        if item in self._items:
            return False
        self._items.add(item)
        self._order.append(item)
        if len(self._order) > self.maxlen:
            self._items.discard(self._order.popleft())
        return True

    def __contains__(self, item) -> bool:
        return item in self._items

    def __len__(self) -> int:
        return len(self._items)


@dataclass
class PeerNode:
    """Simulated peer: stored memories, thread roles, overlay links."""

    peer_id: int
    cap: int | None = None
    stored_memories: list[int] = field(default_factory=list)
    memberships: dict[str, list[int]] = field(default_factory=dict)
    neighbor_tables: dict[str, NeighborTable] = field(default_factory=dict)
    neighbors: set[int] = field(default_factory=set)
    dedup_cache: BoundedSet = field(default_factory=BoundedSet)

    def degree(self) -> int:
        return len(self.neighbors)


@dataclass
class RoleLinks:
    """Directional link lists of one thread role."""

    up: list[int] = field(default_factory=list)
    down: list[int] = field(default_factory=list)
    same: list[int] = field(default_factory=list)

    def empty(self) -> bool:
        return not (self.up or self.down or self.same)


@dataclass
class Position:
    """One slot of a thread: the holders of one indexing value."""

    value: int
    members: list[int]                      # ascending peer ids
    representative: int
    records: list[tuple[int, int]] = field(default_factory=list)  # (memory_id, owner)


class ThreadState:
    """Mutable per-thread overlay state (positions, roles, links)."""

    def __init__(self, thread_id: str, criteria: ThreadCriteria, k: int):
        self.thread_id = thread_id
        self.criteria = criteria
        self.k = k
        self.positions: list[Position] = []
        self.link_pairs: set[tuple[Role, Role]] = set()
        self.role_links: dict[Role, RoleLinks] = {}
        # non-representative -> same-position peer it attached through
        self.anchors: dict[Role, int] = {}
        self.known_members: set[int] = set()

    # -- lookups ------------------------------------------------------------

    def values(self) -> list[int]:
        return [p.value for p in self.positions]

    def index_of_value(self, value: int) -> int:
        """Position index holding ``value``; -1 when absent."""
        vs = self.values()
        i = bisect_left(vs, value)
        if i < len(vs) and vs[i] == value:
            return i
        return -1

    def member_peers(self) -> set[int]:
        out: set[int] = set()
        for p in self.positions:
            out.update(p.members)
        return out

    def positions_of(self, peer_id: int) -> list[int]:
        """Indices of the positions where ``peer_id`` is a member."""
        return [i for i, p in enumerate(self.positions) if peer_id in p.members]

    def table(self, index: int) -> NeighborTable:
        """k-hop neighbor table (representatives only) for one position."""
        t = NeighborTable(k=self.k)
        for d in range(1, self.k + 1):
            if index - d >= 0:
                rep = self.positions[index - d].representative
                if rep not in t.predecessors:
                    t.predecessors.append(rep)
            if index + d < len(self.positions):
                rep = self.positions[index + d].representative
                if rep not in t.successors:
                    t.successors.append(rep)
        return t

    def primary_path(self) -> list[int]:
        """Representatives in thread order (the projection to primary links)."""
        return [p.representative for p in self.positions]

    def subcommunity_at(self, index: int) -> SubCommunity:
        p = self.positions[index]
        return SubCommunity(p.value, set(p.members), p.representative)

    def to_memory_thread(self) -> MemoryThread:
        entries = [ThreadEntry(mid, owner, p.value)
                   for p in self.positions for (mid, owner) in p.records]
        return MemoryThread(self.thread_id, self.criteria, ThreadKind.VMT, entries)


def _canon(ru: Role, rv: Role) -> tuple[Role, Role]:
    return (ru, rv) if ru <= rv else (rv, ru)


class MtcOverlay:
    """A network of peers plus the memory threads that organize them."""

    def __init__(self, k: int = 2, log_events: bool = False):
        if k not in (2, 3):
            raise ValueError(f"redundancy depth k must be 2 or 3, got {k}")
        self.k = k
        self.peers: dict[int, PeerNode] = {}
        self.memories: dict[int, DigitalMemory] = {}
        self.threads: dict[str, ThreadState] = {}
        self.edges: set[tuple[int, int]] = set()
        self._edge_uses: Counter = Counter()
        self.entity_index: dict[str, list[tuple[int, int, int]]] = {}
        self.refused_links = 0
        self.formation_messages = 0
        self.walk_messages = 0
        self.last_walk_messages = 0
        self.log_events = log_events
        self.event_log: list[str] = []
        self._clock = 0

    # -- peers and memories -------------------------------------------------

    def add_peer(self, peer_id: int, cap: int | None = None,
                 memories: list[DigitalMemory] | None = None) -> PeerNode:
        if peer_id in self.peers:
            raise ValueError(f"peer {peer_id} already present")
        node = PeerNode(peer_id=peer_id, cap=cap)
        self.peers[peer_id] = node
        for m in memories or []:
            self.add_memory(m)
        return node

    def add_memory(self, memory: DigitalMemory) -> None:
        if memory.owner not in self.peers:
            raise UnknownPeer(f"owner {memory.owner} not in overlay")
        memory.validate()
        self.memories[memory.memory_id] = memory
        self.peers[memory.owner].stored_memories.append(memory.memory_id)
        value = int(memory.index_value(TIME_KEY))
        for entity in memory.references:
            self.entity_index.setdefault(entity, []).append(
                (memory.owner, value, memory.memory_id))

    def matching_memories(self, peer_id: int, selection: str) -> list[DigitalMemory]:
        node = self.peers[peer_id]
        return [self.memories[mid] for mid in node.stored_memories
                if selection in self.memories[mid].references]

    def _log(self, peer: int, op: str, thread: str, detail: str) -> None:
        if self.log_events:
            self._clock += 1
            self.event_log.append(f"{self._clock}, {peer}, {op}, {thread}, {detail}")

    # -- link bookkeeping ---------------------------------------------------

    @staticmethod
    def _ekey(u: int, v: int) -> tuple[int, int]:
        return (u, v) if u < v else (v, u)

    def _has_capacity(self, u: int, v: int) -> bool:
        key = self._ekey(u, v)
        if key in self.edges:
            return True  # reusing an existing physical edge is free
        pu, pv = self.peers[u], self.peers[v]
        if pu.cap is not None and pu.degree() >= pu.cap:
            return False
        if pv.cap is not None and pv.degree() >= pv.cap:
            return False
        return True

    def _link_roles(self, ts: ThreadState, ru: Role, rv: Role) -> bool:
        """Link two thread roles; refuse (and count) on cap exhaustion."""
        if ru[0] == rv[0]:
            return False  # own positions connect via the shortcut list
        pair = _canon(ru, rv)
        if pair in ts.link_pairs:
            return True
        if not self._has_capacity(ru[0], rv[0]):
            self.refused_links += 1
            return False
        key = self._ekey(ru[0], rv[0])
        if key not in self.edges:
            self.edges.add(key)
            self.peers[ru[0]].neighbors.add(rv[0])
            self.peers[rv[0]].neighbors.add(ru[0])
        self._edge_uses[key] += 1
        ts.link_pairs.add(pair)
        self._attach_role(ts, ru, rv)
        self._attach_role(ts, rv, ru)
        return True

    @staticmethod
    def _attach_role(ts: ThreadState, role: Role, other: Role) -> None:
        links = ts.role_links.setdefault(role, RoleLinks())
        side = (links.up if other[1] > role[1]
                else links.down if other[1] < role[1] else links.same)
        if other[0] not in side:
            insort(side, other[0])

    def _unlink_pair(self, ts: ThreadState, pair: tuple[Role, Role]) -> None:
        ru, rv = pair
        ts.link_pairs.discard(pair)
        for role, other in ((ru, rv), (rv, ru)):
            links = ts.role_links.get(role)
            if links is None:
                continue
            side = (links.up if other[1] > role[1]
                    else links.down if other[1] < role[1] else links.same)
            if other[0] in side:
                side.remove(other[0])
            if links.empty():
                del ts.role_links[role]
        key = self._ekey(ru[0], rv[0])
        self._edge_uses[key] -= 1
        if self._edge_uses[key] <= 0:
            self._edge_uses.pop(key, None)
            self.edges.discard(key)
            self.peers[ru[0]].neighbors.discard(rv[0])
            self.peers[rv[0]].neighbors.discard(ru[0])

    # -- desired link pattern ----------------------------------------------

    def _relink_thread(self, ts: ThreadState) -> None:
        """Diff the thread's links against the desired pattern.

        Placement order: representative chain (primaries, then chords out
        to k), sub-community attachment (to the representative, else
        chained to an attached member), then side links of non-
        representative members.  Links that no longer fit the pattern are
        removed first so their capacity can be reused.
        """
        pos = ts.positions
        rep_at = {p.value: p.representative for p in pos}
        member_at = {p.value: set(p.members) for p in pos}
        order = {p.value: i for i, p in enumerate(pos)}

        def role_alive(role: Role) -> bool:
            return role[1] in order and role[0] in member_at[role[1]]

        def keeps_pattern(ru: Role, rv: Role) -> bool:
            du = abs(order[ru[1]] - order[rv[1]])
            rep_u = rep_at[ru[1]] == ru[0]
            rep_v = rep_at[rv[1]] == rv[0]
            if rep_u and rep_v and 1 <= du <= ts.k:
                return True           # chain link
            if du == 0:
                return True           # same-position attachment
            if du == 1 and (rep_u or rep_v):
                return True           # member side link
            return False

        for pair in list(ts.link_pairs):
            ru, rv = pair
            if not (role_alive(ru) and role_alive(rv)
                    and keeps_pattern(ru, rv)):
                self._unlink_pair(ts, pair)
        for role, target in list(ts.anchors.items()):
            stale = (not role_alive(role)
                     or rep_at[role[1]] == role[0]
                     or target not in member_at.get(role[1], ()))
            if stale:
                del ts.anchors[role]

        # representative chain: primaries first, then longer chords
        for dist in range(1, ts.k + 1):
            for i in range(len(pos) - dist):
                a, b = pos[i], pos[i + dist]
                self._link_roles(ts, (a.representative, a.value),
                                 (b.representative, b.value))

        # sub-community attachment
        for p in pos:
            attached = [p.representative]
            attached_set = {p.representative}
            pending = [m for m in p.members if m != p.representative]
            for m in pending:
                ts.anchors.pop((m, p.value), None)
            progress = True
            while pending and progress:
                progress = False
                rest = []
                for m in pending:
                    links = ts.role_links.get((m, p.value))
                    current = [x for x in (links.same if links else [])
                               if x in attached_set]
                    hooked = False
                    if current:
                        ts.anchors[(m, p.value)] = current[0]
                        hooked = True
                    else:
                        for target in attached:
                            if self._link_roles(ts, (m, p.value),
                                                (target, p.value)):
                                ts.anchors[(m, p.value)] = target
                                hooked = True
                                break
                    if hooked:
                        attached.append(m)
                        attached_set.add(m)
                        progress = True
                    else:
                        rest.append(m)
                pending = rest

        # side links of non-representative members
        for i, p in enumerate(pos):
            for m in p.members:
                if m == p.representative:
                    continue
                for j in (i - 1, i + 1):
                    if 0 <= j < len(pos):
                        q = pos[j]
                        self._link_roles(ts, (m, p.value),
                                         (q.representative, q.value))

        self._refresh_peer_views(ts)

    def _refresh_peer_views(self, ts: ThreadState) -> None:
        """Update memberships, shortcut lists and neighbor tables."""
        own_values: dict[int, list[int]] = {}
        for p in ts.positions:
            for m in p.members:
                own_values.setdefault(m, []).append(p.value)
        current = set(own_values)
        for pid in ts.known_members - current:
            node = self.peers.get(pid)
            if node is not None:
                node.memberships.pop(ts.thread_id, None)
                node.neighbor_tables.pop(ts.thread_id, None)
        for pid, values in own_values.items():
            node = self.peers[pid]
            node.memberships[ts.thread_id] = values  # already ascending
            node.neighbor_tables[ts.thread_id] = ts.table(
                ts.index_of_value(values[0]))
        ts.known_members = current

    # -- protocol operations ------------------------------------------------

    def form_vmt(self, initiator: int, selection: str,
                 indexing: str = TIME_KEY, *,
                 message_budget: int | None = None) -> MemoryThread:
        """Build the VMT for one entity from a broadcast enumeration.

        The initiator's request reaches every peer; holders reply with
        their (memory_id, value) pairs and receive the sorted thread list.
        Message cost is broadcast + one reply and one list per responder.
        """
        if initiator not in self.peers:
            raise UnknownPeer(f"initiator {initiator} not in overlay")
        triples = sorted(self.entity_index.get(selection, ()))
        responders = sorted({peer for peer, _v, _m in triples})
        messages = (len(self.peers) - 1) + 2 * len(responders)
        if message_budget is not None and messages > message_budget:
            raise BroadcastBudgetExceeded(
                f"formation needs {messages} messages, budget {message_budget}")
        if not responders:
            raise NoResponders(f"no peer holds a memory of {selection!r}")
        self.formation_messages += messages

        thread_id = f"vmt:{selection}"
        criteria = ThreadCriteria(selection=selection, indexing=indexing)
        ts = ThreadState(thread_id, criteria, self.k)
        ordered = sorted(triples, key=lambda t: t[1])  # stable over (peer, value, id)
        for peer, value, mid in ordered:
            idx = ts.index_of_value(value)
            if idx < 0:
                idx = bisect_left(ts.values(), value)
                ts.positions.insert(idx, Position(value, [peer], peer))
            else:
                if peer not in ts.positions[idx].members:
                    insort(ts.positions[idx].members, peer)
                ts.positions[idx].representative = ts.positions[idx].members[0]
            ts.positions[idx].records.append((mid, peer))
        self.threads[thread_id] = ts
        self._relink_thread(ts)
        self._log(initiator, "form_vmt", thread_id,
                  f"responders={len(responders)} positions={len(ts.positions)}")
        return ts.to_memory_thread()

    def join_community(self, joiner: int, thread_id: str,
                       entry_peer: int) -> int:
        """Walk the thread from an entry member and take the sorted slot.

        Returns the position index of the joiner's first inserted value.
        The walk contacts the entry peer and then one peer per step until
        the slot is bracketed; the contact count is recorded in
        ``last_walk_messages`` and accumulated into ``walk_messages``.
        """
        ts = self._thread(thread_id)
        if joiner not in self.peers:
            raise UnknownPeer(f"joiner {joiner} not in overlay")
        if entry_peer not in ts.member_peers():
            raise NotAMember(f"entry peer {entry_peer} not in {thread_id}")
        matching = self.matching_memories(joiner, ts.criteria.selection)
        if not matching:
            raise NoMatchingMemory(
                f"peer {joiner} holds no memory of {ts.criteria.selection!r}")

        total_msgs = 0
        first_index: int | None = None
        current = ts.positions_of(entry_peer)[0]
        values = sorted((int(m.index_value(ts.criteria.indexing)), m.memory_id)
                        for m in matching)
        for value, mid in values:
            msgs, idx = self._walk_insert(ts, joiner, value, mid, current)
            total_msgs += msgs
            current = idx
            if first_index is None:
                first_index = idx
        self._relink_thread(ts)
        self.walk_messages += total_msgs
        self.last_walk_messages = total_msgs
        self._log(joiner, "join", thread_id,
                  f"index={first_index} walk_messages={total_msgs}")
        return first_index if first_index is not None else -1

    def _walk_insert(self, ts: ThreadState, joiner: int, value: int,
                     memory_id: int, start: int) -> tuple[int, int]:
        """One walk: returns (messages, final position index)."""
        pos = ts.positions
        msgs = 1  # contacting the start position
        i = start
        if value == pos[i].value:
            self._absorb(pos[i], joiner, memory_id)
            return msgs, i
        if value > pos[i].value:
            while i + 1 < len(pos):
                msgs += 1
                nxt = pos[i + 1]
                if nxt.value == value:
                    self._absorb(nxt, joiner, memory_id)
                    return msgs, i + 1
                if nxt.value > value:
                    pos.insert(i + 1, Position(value, [joiner], joiner,
                                               [(memory_id, joiner)]))
                    return msgs, i + 1
                i += 1
            pos.insert(i + 1, Position(value, [joiner], joiner,
                                       [(memory_id, joiner)]))
            return msgs, i + 1
        while i - 1 >= 0:
            msgs += 1
            prv = pos[i - 1]
            if prv.value == value:
                self._absorb(prv, joiner, memory_id)
                return msgs, i - 1
            if prv.value < value:
                pos.insert(i, Position(value, [joiner], joiner,
                                       [(memory_id, joiner)]))
                return msgs, i
            i -= 1
        pos.insert(0, Position(value, [joiner], joiner, [(memory_id, joiner)]))
        return msgs, 0

    @staticmethod
    def _absorb(p: Position, joiner: int, memory_id: int) -> None:
        if joiner not in p.members:
            insort(p.members, joiner)
        p.representative = p.members[0]
        p.records.append((memory_id, joiner))

    def leave_community(self, leaver: int, thread_id: str) -> None:
        """Remove a peer from every position it holds; repair the chain."""
        ts = self._thread(thread_id)
        held = ts.positions_of(leaver)
        if not held:
            raise NotAMember(f"peer {leaver} not in {thread_id}")
        for idx in reversed(held):
            p = ts.positions[idx]
            p.members.remove(leaver)
            p.records = [(mid, owner) for (mid, owner) in p.records
                         if owner != leaver]
            if not p.members:
                del ts.positions[idx]
            elif p.representative == leaver:
                self.promote_representative(thread_id, p.value, _relink=False)
        self._relink_thread(ts)
        self._log(leaver, "leave", thread_id, f"positions={len(held)}")

    def promote_representative(self, thread_id: str,
                               sub_or_value: SubCommunity | int,
                               _relink: bool = True) -> SubCommunity:
        """Elect the lowest-id remaining member as representative."""
        ts = self._thread(thread_id)
        value = (sub_or_value.position
                 if isinstance(sub_or_value, SubCommunity) else sub_or_value)
        idx = ts.index_of_value(value)
        if idx < 0 or not ts.positions[idx].members:
            raise EmptySubCommunity(
                f"no member left at position {value} of {thread_id}")
        p = ts.positions[idx]
        p.representative = p.members[0]
        if _relink:
            self._relink_thread(ts)
        self._log(p.representative, "promote", thread_id, f"position={value}")
        return ts.subcommunity_at(idx)

    def form_subcommunity(self, peers: set[int], position_value: int,
                          thread_id: str) -> SubCommunity:
        """Group duplicate holders at one position; min-id member represents."""
        if len(peers) < 2:
            raise TooFew(f"sub-community needs >= 2 peers, got {len(peers)}")
        for pid in peers:
            if pid not in self.peers:
                raise UnknownPeer(f"peer {pid} not in overlay")
        ts = self._thread(thread_id)
        idx = ts.index_of_value(position_value)
        if idx < 0:
            idx = bisect_left(ts.values(), position_value)
            ts.positions.insert(idx, Position(position_value, [], -1))
        p = ts.positions[idx]
        for pid in sorted(peers):
            if pid not in p.members:
                insort(p.members, pid)
        p.representative = p.members[0]
        self._relink_thread(ts)
        self._log(p.representative, "form_subcommunity", thread_id,
                  f"position={position_value} size={len(p.members)}")
        return ts.subcommunity_at(idx)

    def apply_shortcuts(self, peer_id: int, thread_id: str,
                        target_value: int, sender: int | None = None) -> list[int]:
        """Forwarding set for a query at ``peer_id`` heading for a value.

        The peer picks its own position nearest the target on the lower
        side (so a shortcut never skips over a value lying between two of
        its own positions) and forwards along that role's links toward the
        target side.  Non-representatives also hand the query to their
        attachment anchor so it reaches the active chain.  The arrival
        link is never returned.
        """
        ts = self._thread(thread_id)
        own = self.peers[peer_id].memberships.get(thread_id, [])
        if not own:
            raise NotAMember(f"peer {peer_id} not in {thread_id}")
        role_value, direction = self._pick_role(own, target_value)
        links = ts.role_links.get((peer_id, role_value), RoleLinks())
        idx = ts.index_of_value(role_value)
        is_rep = idx >= 0 and ts.positions[idx].representative == peer_id
        # relay along the chain only: links to non-representative members
        # of neighbouring positions exist for repair, not for routing
        reps = {p.representative for p in ts.positions}
        targets: set[int] = set()
        if direction in ("up", "both"):
            targets.update(x for x in links.up if x in reps)
        if direction in ("down", "both"):
            targets.update(x for x in links.down if x in reps)
        if not is_rep:
            anchor = ts.anchors.get((peer_id, role_value))
            if anchor is not None:
                targets.add(anchor)
        targets.discard(peer_id)
        if sender is not None:
            targets.discard(sender)
        return sorted(targets)

    @staticmethod
    def _pick_role(own_values: list[int], target: int) -> tuple[int, str]:
        if target > own_values[-1]:
            return own_values[-1], "up"
        if target < own_values[0]:
            return own_values[0], "down"
        i = bisect_left(own_values, target)
        if i < len(own_values) and own_values[i] == target:
            return own_values[i], "both"
        # strictly between two own positions: approach from the lower one
        return own_values[i - 1], "up"

    def shortcut_list(self, peer_id: int, thread_id: str) -> ShortcutList:
        own = self.peers[peer_id].memberships.get(thread_id, [])
        return ShortcutList(peer_id, thread_id, list(own))

    # -- audits -------------------------------------------------------------

    def _thread(self, thread_id: str) -> ThreadState:
        ts = self.threads.get(thread_id)
        if ts is None:
            raise NotAMember(f"unknown thread {thread_id!r}")
        return ts

    def check_link_symmetry(self) -> bool:
        for (u, v) in self.edges:
            if v not in self.peers[u].neighbors or u not in self.peers[v].neighbors:
                return False
        for pid, node in self.peers.items():
            for nb in node.neighbors:
                if self._ekey(pid, nb) not in self.edges:
                    return False
        return True

    def check_caps(self) -> bool:
        return all(node.cap is None or node.degree() <= node.cap
                   for node in self.peers.values())
