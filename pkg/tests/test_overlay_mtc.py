"""Overlay protocol: formation, join/leave, sub-communities, shortcuts."""

from __future__ import annotations

import random
import re
from collections import deque

import networkx as nx
import pytest

from mtc_sim.errors import (
    BroadcastBudgetExceeded,
    EmptySubCommunity,
    NoMatchingMemory,
    NoResponders,
    NotAMember,
    TooFew,
    UnknownPeer,
)
from mtc_sim.memory_core import DigitalMemory
from mtc_sim.overlay_mtc import BoundedSet, MtcOverlay
from conftest import mem, thread_overlay


def member_graph(ov: MtcOverlay, thread_id: str) -> nx.Graph:
    """Overlay edges induced on the thread's current members."""
    members = ov.threads[thread_id].member_peers()
    g = nx.Graph()
    g.add_nodes_from(members)
    for (u, v) in ov.edges:
        if u in members and v in members:
            g.add_edge(u, v)
    return g


def thread_connected(ov: MtcOverlay, thread_id: str) -> bool:
    """Connectivity where a peer's several positions count as one node."""
    g = member_graph(ov, thread_id)
    return g.number_of_nodes() <= 1 or nx.is_connected(g)


# -- form_vmt ---------------------------------------------------------------

def test_form_vmt_five_peer_line():
    ov, tid = thread_overlay({i: [10 * (i + 1)] for i in range(5)})
    ts = ov.threads[tid]
    assert ts.values() == [10, 20, 30, 40, 50]
    assert ts.primary_path() == [0, 1, 2, 3, 4]
    # primaries plus 2-hop chords
    assert ov.edges == {(0, 1), (1, 2), (2, 3), (3, 4),
                        (0, 2), (1, 3), (2, 4)}
    mid_table = ts.table(2)
    assert mid_table.predecessors == [1, 0]
    assert mid_table.successors == [3, 4]


def test_form_vmt_single_responder():
    ov, tid = thread_overlay({3: [42]})
    ts = ov.threads[tid]
    assert len(ts.positions) == 1
    t = ts.table(0)
    assert t.predecessors == [] and t.successors == []
    assert ov.edges == set()


def test_form_vmt_matches_sort_oracle():
    rng = random.Random(23)
    for _ in range(100):
        n = rng.randrange(2, 201)
        values = {p: [rng.randrange(1000)] for p in range(n)}
        ov, tid = thread_overlay(values)
        thread = ov.threads[tid].to_memory_thread()
        expect = sorted((values[p][0], p) for p in values)
        assert [(e.value, e.owner) for e in thread.entries] == expect
        assert thread.is_ordered()


def test_form_vmt_no_responders():
    ov = MtcOverlay()
    ov.add_peer(0)
    ov.add_memory(mem(1, owner=0, refs=("other",), t=1))
    with pytest.raises(NoResponders):
        ov.form_vmt(0, "ent")


def test_form_vmt_budget_cap():
    ov = MtcOverlay()
    for p in range(10):
        ov.add_peer(p)
        ov.add_memory(mem(None, owner=p, refs=("ent",), t=p))
    with pytest.raises(BroadcastBudgetExceeded):
        ov.form_vmt(0, "ent", message_budget=5)


def test_form_vmt_unknown_initiator():
    ov = MtcOverlay()
    ov.add_peer(0)
    with pytest.raises(UnknownPeer):
        ov.form_vmt(99, "ent")


def test_link_symmetry_and_caps_after_formation():
    rng = random.Random(5)
    values = {p: [rng.randrange(60)] for p in range(80)}
    ov, tid = thread_overlay(values, caps={p: 10 for p in range(80)})
    assert ov.check_link_symmetry()
    assert ov.check_caps()


# -- join -------------------------------------------------------------------

def test_join_walk_between():
    ov, tid = thread_overlay({0: [10], 1: [20], 2: [30], 3: [40]})
    ov.add_peer(9)
    ov.add_memory(mem(None, owner=9, refs=("ent",), t=25))
    idx = ov.join_community(9, tid, entry_peer=0)
    assert idx == 2
    assert ov.last_walk_messages == 3
    assert ov.threads[tid].values() == [10, 20, 25, 30, 40]


def test_join_new_head():
    ov, tid = thread_overlay({0: [10], 1: [20]})
    ov.add_peer(5)
    ov.add_memory(mem(None, owner=5, refs=("ent",), t=5))
    idx = ov.join_community(5, tid, entry_peer=0)
    assert idx == 0
    assert ov.last_walk_messages == 1
    assert ov.threads[tid].values() == [5, 10, 20]


def test_join_equal_value_forms_subcommunity():
    ov, tid = thread_overlay({0: [10], 1: [20], 2: [30]})
    ov.add_peer(7)
    ov.add_memory(mem(None, owner=7, refs=("ent",), t=20))
    idx = ov.join_community(7, tid, entry_peer=0)
    assert idx == 1
    sub = ov.threads[tid].subcommunity_at(1)
    assert sub.members == {1, 7}
    assert sub.representative == 1
    assert ov.threads[tid].values() == [10, 20, 30]


def test_join_errors():
    ov, tid = thread_overlay({0: [10], 1: [20]})
    ov.add_peer(5)
    with pytest.raises(NoMatchingMemory):
        ov.join_community(5, tid, entry_peer=0)
    ov.add_memory(mem(None, owner=5, refs=("ent",), t=15))
    with pytest.raises(NotAMember):
        ov.join_community(5, tid, entry_peer=5)


def test_join_walk_cost_bounded_by_length():
    rng = random.Random(31)
    for trial in range(20):
        n = rng.randrange(3, 40)
        ov, tid = thread_overlay({p: [p * 10] for p in range(n)})
        joiner = 1000 + trial
        ov.add_peer(joiner)
        value = rng.randrange(-5, n * 10 + 15)
        ov.add_memory(mem(None, owner=joiner, refs=("ent",), t=value))
        entry = rng.randrange(n)
        before = len(ov.threads[tid].positions)
        ov.join_community(joiner, tid, entry_peer=entry)
        assert ov.last_walk_messages <= before
        assert ov.threads[tid].to_memory_thread().is_ordered()
        assert thread_connected(ov, tid)


def test_join_walk_to_tail_contacts_whole_thread():
    ov, tid = thread_overlay({0: [10], 1: [20], 2: [30]})
    ov.add_peer(9)
    ov.add_memory(mem(None, owner=9, refs=("ent",), t=99))
    ov.join_community(9, tid, entry_peer=0)
    assert ov.last_walk_messages == 3


# -- leave ------------------------------------------------------------------

def test_leave_middle_relinks_neighbors():
    ov, tid = thread_overlay({0: [10], 1: [20], 2: [30]})
    assert (0, 2) in ov.edges  # 2-hop chord already present
    ov.leave_community(1, tid)
    assert ov.threads[tid].values() == [10, 30]
    assert (0, 2) in ov.edges
    assert 1 not in ov.peers[0].neighbors
    assert thread_connected(ov, tid)


def test_leave_head():
    ov, tid = thread_overlay({i: [10 * (i + 1)] for i in range(5)})
    ov.leave_community(0, tid)
    ts = ov.threads[tid]
    assert ts.values() == [20, 30, 40, 50]
    assert ts.table(0).predecessors == []
    assert ts.table(0).successors == [2, 3]


def test_leave_not_a_member():
    ov, tid = thread_overlay({0: [10], 1: [20]})
    ov.add_peer(9)
    with pytest.raises(NotAMember):
        ov.leave_community(9, tid)


def test_any_single_removal_keeps_thread_connected():
    rng = random.Random(43)
    values = {p: [rng.randrange(500)] for p in range(60)}
    for victim in range(0, 60, 7):
        ov, tid = thread_overlay(values)
        ov.leave_community(victim, tid)
        assert thread_connected(ov, tid)
        assert ov.check_link_symmetry()
        assert ov.threads[tid].to_memory_thread().is_ordered()


def test_leave_multi_position_peer():
    ov, tid = thread_overlay({0: [10, 40], 1: [20], 2: [30], 3: [50]})
    ov.leave_community(0, tid)
    ts = ov.threads[tid]
    assert ts.values() == [20, 30, 50]
    assert 0 not in ts.member_peers()
    assert thread_connected(ov, tid)


# -- sub-communities --------------------------------------------------------

def test_duplicates_elect_min_id_representative():
    ov, tid = thread_overlay({1: [10], 3: [20], 7: [20], 9: [20], 11: [30]})
    ts = ov.threads[tid]
    sub = ts.subcommunity_at(1)
    assert sub.representative == 3
    assert sub.members == {3, 7, 9}
    # non-representatives link to the rep and both side representatives
    for m in (7, 9):
        assert ov.peers[m].neighbors == {3, 1, 11}


def test_two_member_subcommunity():
    ov, tid = thread_overlay({4: [20], 2: [20]})
    sub = ov.threads[tid].subcommunity_at(0)
    assert sub.representative == 2
    assert sub.members == {2, 4}


def test_subcommunity_audit_random_groups():
    rng = random.Random(59)
    for _ in range(100):
        dup = sorted(rng.sample(range(100, 400), rng.randrange(2, 11)))
        values = {1: [10], 2: [20], 3: [30]}
        for p in dup:
            values[p] = [20]
        ov, tid = thread_overlay(values)
        ts = ov.threads[tid]
        sub = ts.subcommunity_at(1)
        assert sub.representative == min(sub.members)
        assert sub.members == set(dup) | {2}
        for m in sub.members - {sub.representative}:
            assert ov.peers[m].neighbors == {sub.representative, 1, 3}


def test_form_subcommunity_requires_two():
    ov, tid = thread_overlay({0: [10], 1: [20]})
    with pytest.raises(TooFew):
        ov.form_subcommunity({0}, 10, tid)


def test_promote_after_representative_leaves():
    ov, tid = thread_overlay({3: [20], 7: [20], 9: [20], 0: [10], 5: [30]})
    ov.leave_community(3, tid)
    sub = ov.threads[tid].subcommunity_at(1)
    assert sub.representative == 7
    assert sub.members == {7, 9}
    assert thread_connected(ov, tid)


def test_promote_empty_position_raises():
    ov, tid = thread_overlay({0: [10], 1: [20]})
    with pytest.raises(EmptySubCommunity):
        ov.promote_representative(tid, 999)


def test_departures_until_position_vacated():
    ov, tid = thread_overlay({0: [10], 3: [20], 7: [20], 9: [20], 5: [30]})
    for leaver in (3, 7, 9):
        ov.leave_community(leaver, tid)
        assert thread_connected(ov, tid)
    ts = ov.threads[tid]
    assert ts.values() == [10, 30]
    assert (0, 5) in ov.edges


def test_single_member_dissolves_to_plain_member():
    ov, tid = thread_overlay({0: [10], 3: [20], 7: [20], 5: [30]})
    ov.leave_community(3, tid)
    ts = ov.threads[tid]
    sub = ts.subcommunity_at(1)
    assert sub.members == {7}
    assert sub.representative == 7
    assert ts.anchors == {}
    assert ts.primary_path() == [0, 7, 5]


# -- shortcuts --------------------------------------------------------------

def policy_bfs(ov: MtcOverlay, tid: str, origin: int, target_value: int,
               max_hops: int = 50) -> int | None:
    """Hops until some member of the target position is reached; None if never."""
    ts = ov.threads[tid]
    goal_idx = ts.index_of_value(target_value)
    goal = set(ts.positions[goal_idx].members)
    if origin in goal:
        return 0
    seen = {origin}
    frontier = deque([(origin, None, 0)])
    while frontier:
        peer, sender, hops = frontier.popleft()
        if hops >= max_hops:
            return None
        for nxt in ov.apply_shortcuts(peer, tid, target_value, sender):
            if nxt in goal:
                return hops + 1
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, peer, hops + 1))
    return None


def test_shortcut_skips_between_own_positions():
    values = {p: [p] for p in range(50)}
    values[4] = [4, 40]
    del values[40]
    ov, tid = thread_overlay(values)
    fwd = ov.apply_shortcuts(4, tid, target_value=45)
    assert fwd == [41, 42]


def test_shortcut_shortens_path():
    values = {p: [p] for p in range(50)}
    values[4] = [4, 40]
    del values[40]
    ov, tid = thread_overlay(values)
    hops = policy_bfs(ov, tid, origin=4, target_value=45)
    # without the shortcut the walk covers ~36 positions in 2-hop chords
    assert hops is not None and hops <= 4


def test_shortcut_does_not_skip_value_between_own_positions():
    values = {p: [p] for p in range(50)}
    values[4] = [4, 40]
    del values[40]
    ov, tid = thread_overlay(values)
    fwd = ov.apply_shortcuts(4, tid, target_value=20)
    assert fwd == [5, 6]
    assert policy_bfs(ov, tid, origin=4, target_value=20) is not None


def test_single_position_forwarding_is_plain_neighbors():
    ov, tid = thread_overlay({i: [10 * (i + 1)] for i in range(5)})
    assert ov.apply_shortcuts(2, tid, target_value=50) == [3, 4]
    assert ov.apply_shortcuts(2, tid, target_value=10) == [0, 1]


def test_no_backtrack_on_arrival_link():
    ov, tid = thread_overlay({i: [10 * (i + 1)] for i in range(5)})
    assert ov.apply_shortcuts(2, tid, target_value=50, sender=3) == [4]


def test_nonrep_forwards_through_anchor():
    ov, tid = thread_overlay({0: [10], 2: [20], 6: [20], 4: [30]})
    fwd = ov.apply_shortcuts(6, tid, target_value=30)
    assert 2 in fwd      # anchor (representative)
    assert 4 in fwd      # successor-side representative


def test_neighbor_tables_sorted_nearest_first():
    rng = random.Random(61)
    values = {p: [rng.randrange(300)] for p in range(40)}
    ov, tid = thread_overlay(values)
    ts = ov.threads[tid]
    for i in range(len(ts.positions)):
        t = ts.table(i)
        assert len(t.predecessors) <= ts.k and len(t.successors) <= ts.k
        assert len(set(t.predecessors)) == len(t.predecessors)
        assert len(set(t.successors)) == len(t.successors)
        for d, rep in enumerate(t.predecessors, 1):
            assert ts.positions[i - d].representative == rep
        for d, rep in enumerate(t.successors, 1):
            assert ts.positions[i + d].representative == rep


def test_thread_linearity_projection():
    rng = random.Random(67)
    values = {p: [rng.randrange(80)] for p in range(50)}
    ov, tid = thread_overlay(values)
    ts = ov.threads[tid]
    path = ts.primary_path()
    vs = ts.values()
    assert vs == sorted(vs)
    for i in range(len(path) - 1):
        a, b = path[i], path[i + 1]
        assert a == b or (min(a, b), max(a, b)) in ov.edges


def test_k3_tables_and_chords():
    ov, tid = thread_overlay({i: [10 * (i + 1)] for i in range(7)}, k=3)
    ts = ov.threads[tid]
    assert ts.table(3).predecessors == [2, 1, 0]
    assert ts.table(3).successors == [4, 5, 6]
    assert (0, 3) in ov.edges


def test_event_log_line_format():
    ov = MtcOverlay(log_events=True)
    for p in range(3):
        ov.add_peer(p)
        ov.add_memory(mem(None, owner=p, refs=("ent",), t=p * 10))
    ov.form_vmt(0, "ent")
    ov.add_peer(9)
    ov.add_memory(mem(None, owner=9, refs=("ent",), t=15))
    ov.join_community(9, "vmt:ent", entry_peer=0)
    ov.leave_community(9, "vmt:ent")
    assert len(ov.event_log) == 3
    for line in ov.event_log:
        assert re.fullmatch(r"\d+, \d+, \w+, [^,]*, .+", line)


def test_bounded_dedup_cache_evicts_fifo():
    cache = BoundedSet(maxlen=3)
    assert cache.add("a") and cache.add("b") and cache.add("c")
    assert not cache.add("a")
    cache.add("d")
    assert "a" not in cache  # oldest evicted
    assert "d" in cache and len(cache) == 3


def test_caps_respected_with_tight_budget():
    # every peer capped at 3: chords and side links must be refused, never
    # placed over budget
    values = {p: [p * 10] for p in range(12)}
    ov, tid = thread_overlay(values, caps={p: 3 for p in range(12)})
    assert ov.check_caps()
    assert ov.refused_links > 0
