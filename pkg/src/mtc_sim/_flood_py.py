"""Array-based flood kernels (numpy reference implementation).

Batch counterpart of the event engine for the two dense flood styles:
unstructured (full neighbor relay) and interest communities (relay
restricted to the target class).  Outcomes are issue-time independent,
so each query floods once over a CSR adjacency and the counters add up
to exactly what the event engine produces.  The compiled twin in
``_flood_cy`` swaps the inner per-query loop for C; everything else is
shared from here.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, Placement, Query
from .errors import ConfigInvalid

KERNEL_NAME = "kernel-py"


def class_csr(topology, cls: int) -> tuple[np.ndarray, np.ndarray]:
    """CSR restricted to edges whose both ends subscribe to ``cls``.

    Peers outside the class keep an empty row, so the same flood kernel
    serves both topology kinds.
    """
    indptr, indices = topology.neighbor_csr()
    masks = topology.community_masks()
    member = ((masks >> np.uint64(cls)) & np.uint64(1)).astype(bool)
    counts = np.diff(indptr)
    src_member = np.repeat(member, counts)
    keep = src_member & member[indices]
    new_indices = indices[keep]
    kept_counts = np.zeros(len(counts), dtype=np.int64)
    np.add.at(kept_counts, np.repeat(np.arange(len(counts)), counts), keep)
    new_indptr = np.zeros(len(indptr), dtype=np.int64)
    np.cumsum(kept_counts, out=new_indptr[1:])
    return new_indptr, new_indices


def _query_rows(dataset: Dataset, placement: Placement,
                queries: list[Query]) -> list[tuple[int, int, np.ndarray]]:
    rows = []
    for q in queries:
        holders = placement.holders_by_file[q.target_file]
        if q.origin in holders:
            raise ConfigInvalid(f"query origin {q.origin} already holds "
                                f"file {q.target_file}")
        cls = dataset.entity_class[dataset.files[q.target_file].entity]
        rows.append((q.origin, cls, np.asarray(holders, dtype=np.int32)))
    return rows


def flood_single(indptr: np.ndarray, indices: np.ndarray, origin: int,
                 holders: np.ndarray, seen: np.ndarray, hold: np.ndarray,
                 stamp: int, ttl: int,
                 structured: bool) -> tuple[int, ...]:
    """Flood one query; returns the counter tuple.

    (first_match_hop, query_msgs, dup_drops, ttl_drops, resp_drops,
     reply_units, resp_units, n_matches, n_resp_sent) — the *_units
    figures are message transmissions summed over return paths.
    """
    seen[origin] = stamp
    hold[holders] = stamp
    qm = dup = ttld = resp = 0
    reply_units = resp_units = n_match = n_resp_sent = 0
    first_hop = 0

    row = indices[indptr[origin]:indptr[origin + 1]]
    if len(row) == 0:
        if structured:
            resp += 1
        return (0, 0, 0, 0, resp, 0, 0, 0, 0)
    tgt = row
    src = np.full(len(row), origin, dtype=indices.dtype)

    for hop in range(1, ttl + 1):
        qm += len(tgt)
        fresh = seen[tgt] != stamp
        dup += int(len(tgt) - fresh.sum())
        t_new = tgt[fresh]
        s_new = src[fresh]
        uniq, first_idx = np.unique(t_new, return_index=True)
        dup += len(t_new) - len(uniq)
        order = np.sort(first_idx)           # keep first-touch delivery order
        peers = t_new[order]
        senders = s_new[order]
        seen[peers] = stamp
        is_holder = hold[peers] == stamp
        n_h = int(is_holder.sum())
        if n_h:
            n_match += n_h
            reply_units += n_h * hop
            if first_hop == 0:
                first_hop = hop
        rest_p = peers[~is_holder]
        rest_s = senders[~is_holder]
        if hop == ttl:
            ttld += len(rest_p)
            break
        parts_t: list[np.ndarray] = []
        parts_s: list[np.ndarray] = []
        for p, s in zip(rest_p.tolist(), rest_s.tolist()):
            r = indices[indptr[p]:indptr[p + 1]]
            r = r[r != s]
            if len(r) == 0:
                if structured:
                    resp += 1
                    resp_units += hop
                    n_resp_sent += 1
                continue
            parts_t.append(r)
            parts_s.append(np.full(len(r), p, dtype=indices.dtype))
        if not parts_t:
            break
        tgt = np.concatenate(parts_t)
        src = np.concatenate(parts_s)

    return (first_hop, qm, dup, ttld, resp, reply_units, resp_units,
            n_match, n_resp_sent)


def run_flood(topology, dataset: Dataset, queries: list[Query],
              ttl: int = 3, *, placement: Placement | None = None,
              kernel=None, name: str = KERNEL_NAME):
    """Flood every query over a prepared topology; event-engine parity."""
    from .sim_engine import SearchResult

    placement = placement if placement is not None else topology.placement
    if placement is None:
        raise ConfigInvalid("topology has no placement attached")
    if topology.kind.value not in ("unstructured", "ibc"):
        raise ConfigInvalid(f"flood kernel does not handle "
                            f"{topology.kind.value} topologies")
    kernel = kernel or flood_single
    structured = topology.kind.value == "ibc"
    n = topology.n_peers
    seen = np.zeros(n, dtype=np.int64)
    hold = np.zeros(n, dtype=np.int64)
    res = SearchResult(engine=name)
    csr_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    base_csr = topology.neighbor_csr()

    for i, (origin, cls, holders) in enumerate(
            _query_rows(dataset, placement, queries)):
        if structured:
            csr = csr_cache.get(cls)
            if csr is None:
                csr = class_csr(topology, cls)
                csr_cache[cls] = csr
        else:
            csr = base_csr
        stamp = i + 1
        (hop, qm, dup, ttld, resp, reply_units, resp_units, n_match,
         n_resp_sent) = kernel(csr[0], csr[1], origin, holders, seen,
                               hold, stamp, ttl, structured)
        res.issued += 1
        if hop > 0:
            res.succeeded += 1
            res.hop_histogram[hop] = res.hop_histogram.get(hop, 0) + 1
        res.query_messages += qm
        res.dropped_dup += dup
        res.dropped_ttl += ttld
        res.dropped_resp += resp
        res.reply_messages += reply_units
        res.response_messages += resp_units
        res.sent += qm + n_match + n_resp_sent
    res.received = res.sent
    return res
