# cython: language_level=3
"""Compiled flood kernel: C twin of the numpy loop in _flood_py.

Same per-query contract as ``_flood_py.flood_single``; array
preparation, class-restricted CSRs and counter roll-up stay in
``_flood_py.run_flood`` so the two kernels cannot drift apart
structurally.
"""

import numpy as np

from . import _flood_py

KERNEL_NAME = "kernel-cy"


def flood_single(const long long[:] indptr, const int[:] indices,
                 int origin, const int[:] holders, long long[:] seen,
                 long long[:] hold, long long stamp, int ttl,
                 bint structured):
    cdef int n = seen.shape[0]
    cdef int[:] cur_p = np.empty(n, dtype=np.int32)
    cdef int[:] cur_s = np.empty(n, dtype=np.int32)
    cdef int[:] nxt_p = np.empty(n, dtype=np.int32)
    cdef int[:] nxt_s = np.empty(n, dtype=np.int32)
    cdef long long qm = 0, dup = 0, ttld = 0, resp = 0
    cdef long long reply_units = 0, resp_units = 0
    cdef long long n_match = 0, n_resp_sent = 0
    cdef int first_hop = 0
    cdef int cur_n, nxt_n, cur_hop, deliver_hop
    cdef int i, m, p, s, t, emitted
    cdef long long j

    seen[origin] = stamp
    for i in range(holders.shape[0]):
        hold[holders[i]] = stamp

    cur_p[0] = origin
    cur_s[0] = -1
    cur_n = 1
    cur_hop = 0

    while cur_n > 0 and cur_hop < ttl:
        nxt_n = 0
        for i in range(cur_n):
            p = cur_p[i]
            s = cur_s[i]
            emitted = 0
            for j in range(indptr[p], indptr[p + 1]):
                t = indices[j]
                if t == s:
                    continue
                emitted += 1
                qm += 1
                if seen[t] == stamp:
                    dup += 1
                else:
                    seen[t] = stamp
                    nxt_p[nxt_n] = t
                    nxt_s[nxt_n] = p
                    nxt_n += 1
            if emitted == 0 and structured:
                resp += 1
                resp_units += cur_hop
                if cur_hop > 0:
                    n_resp_sent += 1
        deliver_hop = cur_hop + 1
        m = 0
        for i in range(nxt_n):
            t = nxt_p[i]
            if hold[t] == stamp:
                n_match += 1
                reply_units += deliver_hop
                if first_hop == 0:
                    first_hop = deliver_hop
            elif deliver_hop == ttl:
                ttld += 1
            else:
                cur_p[m] = t
                cur_s[m] = nxt_s[i]
                m += 1
        cur_n = m
        cur_hop = deliver_hop

    return (first_hop, int(qm), int(dup), int(ttld), int(resp),
            int(reply_units), int(resp_units), int(n_match),
            int(n_resp_sent))


def run_flood(topology, dataset, queries, ttl=3, *, placement=None):
    return _flood_py.run_flood(topology, dataset, queries, ttl,
                               placement=placement, kernel=flood_single,
                               name=KERNEL_NAME)
