"""Shared builders for the test suite."""

from __future__ import annotations

from mtc_sim.memory_core import DigitalMemory
from mtc_sim.overlay_mtc import MtcOverlay

_next_id = [0]


def mem(memory_id: int | None = None, owner: int = 0, refs=("e1",),
        t: int = 0, content: str | None = None, **keys) -> DigitalMemory:
    """One memory record; content hash defaults to a value-derived tag."""
    if memory_id is None:
        _next_id[0] += 1
        memory_id = 100000 + _next_id[0]
    content = content or f"h:{'+'.join(sorted(refs))}:{t}"
    return DigitalMemory(memory_id, owner, content, t, frozenset(refs),
                         dict(keys))


def thread_overlay(values_by_peer: dict[int, list[int]], entity: str = "ent",
                   k: int = 2, caps: dict[int, int] | None = None,
                   ) -> tuple[MtcOverlay, str]:
    """Overlay with one entity; each peer holds one memory per listed value.

    Memories at the same value share a content hash, so equal values form
    sub-communities.  Returns (overlay, thread_id) with the VMT formed.
    """
    ov = MtcOverlay(k=k)
    mid = 0
    for pid in sorted(values_by_peer):
        ov.add_peer(pid, cap=(caps or {}).get(pid))
        for v in values_by_peer[pid]:
            mid += 1
            ov.add_memory(DigitalMemory(mid, pid, f"h:{entity}:{v}", v,
                                        frozenset([entity])))
    initiator = min(values_by_peer)
    ov.form_vmt(initiator, entity)
    return ov, f"vmt:{entity}"
