"""Numba kernels for the CDCL search loop.

Solver state lives in a ``SolverArrays`` namedtuple of numpy arrays so the
kernels can run without the GIL. Literals are internal codes: ``2*v`` for the
positive and ``2*v + 1`` for the negative literal of 0-based variable ``v``.

Capacity of the clause arena, clause slots and watch pool is owned by Python:
``search`` returns ``NEED_GROW`` at a safe point and the caller reallocates.
"""
from __future__ import annotations

from collections import namedtuple

import numpy as np
from numba import njit

SolverArrays = namedtuple(
    "SolverArrays",
    [
        "val", "level", "reason", "trail", "trail_lim", "phase",
        "activity", "heap", "heap_pos",
        "cl_lits", "cl_start", "cl_size", "cl_flags", "cl_lbd", "cl_act", "free_slots",
        "w_off", "w_len", "w_cap", "w_cls", "w_blk",
        "seen", "buf", "stack", "toclear", "lvl_stamp",
        "S", "F",
    ],
)

# integer scalars in S
NVARS = 0
QHEAD = 1
TRAIL_SIZE = 2
DLEVEL = 3
NSLOTS = 4
ARENA_TOP = 5
POOL_TOP = 6
HEAP_SIZE = 7
CONFLICTS = 8
DECISIONS = 9
PROPAGATIONS = 10
NLEARNTS = 11
NEXT_REDUCE = 12
NREDUCE = 13
STAMP = 14
OK = 15
NWATCHED = 16
NFREE = 17
WIN_CONFLICTS = 18
WIN_LBD_SUM = 19
BUF_LEN = 20
ARENA_WASTED = 21
REDUCE_BASE = 22
REDUCE_INC = 23
TOTAL_LEARNT = 24
REMOVED_LITS = 25
NUM_S = 32

# float scalars in F
VAR_INC = 0
CLA_INC = 1
VAR_DECAY = 2
CLA_DECAY = 3
NUM_F = 8

LEARNT = 1
DELETED = 2

# search status codes
LIMIT = 0
NEED_GROW = 3
CANCELLED = 4
SAT = 10
UNSAT = 20
UNSAT_ASSUMPTIONS = 21


# -- heap -------------------------------------------------------------------

@njit(cache=True, nogil=True)
def heap_up(st, i):
    heap = st.heap
    pos = st.heap_pos
    act = st.activity
    x = heap[i]
    while i > 0:
        p = (i - 1) >> 1
        if act[x] > act[heap[p]]:
            heap[i] = heap[p]
            pos[heap[i]] = i
            i = p
        else:
            break
    heap[i] = x
    pos[x] = i


@njit(cache=True, nogil=True)
def heap_down(st, i):
    heap = st.heap
    pos = st.heap_pos
    act = st.activity
    n = st.S[HEAP_SIZE]
    x = heap[i]
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        if c + 1 < n and act[heap[c + 1]] > act[heap[c]]:
            c += 1
        if act[heap[c]] > act[x]:
            heap[i] = heap[c]
            pos[heap[i]] = i
            i = c
        else:
            break
    heap[i] = x
    pos[x] = i


@njit(cache=True, nogil=True)
def heap_insert(st, v):
    if st.heap_pos[v] >= 0:
        return
    n = st.S[HEAP_SIZE]
    st.heap[n] = v
    st.heap_pos[v] = n
    st.S[HEAP_SIZE] = n + 1
    heap_up(st, n)


@njit(cache=True, nogil=True)
def heap_pop(st):
    heap = st.heap
    top = heap[0]
    n = st.S[HEAP_SIZE] - 1
    st.S[HEAP_SIZE] = n
    st.heap_pos[top] = -1
    if n > 0:
        heap[0] = heap[n]
        st.heap_pos[heap[0]] = 0
        heap_down(st, 0)
    return top


@njit(cache=True, nogil=True)
def bump_var(st, v):
    act = st.activity
    act[v] += st.F[VAR_INC]
    if act[v] > 1e100:
        for k in range(act.shape[0]):
            act[k] *= 1e-100
        st.F[VAR_INC] *= 1e-100
    if st.heap_pos[v] >= 0:
        heap_up(st, st.heap_pos[v])


@njit(cache=True, nogil=True)
def bump_clause(st, c):
    st.cl_act[c] += st.F[CLA_INC]
    if st.cl_act[c] > 1e20:
        for k in range(st.S[NSLOTS]):
            st.cl_act[k] *= 1e-20
        st.F[CLA_INC] *= 1e-20


# -- trail ------------------------------------------------------------------

@njit(cache=True, nogil=True)
def enqueue(st, lit, from_clause):
    v = lit >> 1
    st.val[lit] = 1
    st.val[lit ^ 1] = -1
    st.level[v] = st.S[DLEVEL]
    st.reason[v] = from_clause
    st.trail[st.S[TRAIL_SIZE]] = lit
    st.S[TRAIL_SIZE] += 1


@njit(cache=True, nogil=True)
def new_level(st):
    d = st.S[DLEVEL]
    st.trail_lim[d] = st.S[TRAIL_SIZE]
    st.S[DLEVEL] = d + 1


@njit(cache=True, nogil=True)
def cancel_until(st, lvl):
    if st.S[DLEVEL] <= lvl:
        return
    stop = st.trail_lim[lvl]
    for i in range(st.S[TRAIL_SIZE] - 1, stop - 1, -1):
        lit = st.trail[i]
        v = lit >> 1
        st.val[lit] = 0
        st.val[lit ^ 1] = 0
        st.phase[v] = lit & 1
        st.reason[v] = -1
        heap_insert(st, v)
    st.S[TRAIL_SIZE] = stop
    st.S[QHEAD] = stop
    st.S[DLEVEL] = lvl


# -- clauses and watches ----------------------------------------------------

@njit(cache=True, nogil=True)
def watch_push(st, lit, c, blocker):
    n = st.w_len[lit]
    if n == st.w_cap[lit]:
        newcap = 4 if n < 2 else 2 * n
        newoff = st.S[POOL_TOP]
        old = st.w_off[lit]
        for k in range(n):
            st.w_cls[newoff + k] = st.w_cls[old + k]
            st.w_blk[newoff + k] = st.w_blk[old + k]
        st.w_off[lit] = newoff
        st.w_cap[lit] = newcap
        st.S[POOL_TOP] = newoff + newcap
    i = st.w_off[lit] + n
    st.w_cls[i] = c
    st.w_blk[i] = blocker
    st.w_len[lit] = n + 1


@njit(cache=True, nogil=True)
def alloc_clause(st, lits, n, flags, lbd):
    S = st.S
    if S[NFREE] > 0:
        S[NFREE] -= 1
        c = st.free_slots[S[NFREE]]
    else:
        c = S[NSLOTS]
        S[NSLOTS] += 1
    s = S[ARENA_TOP]
    for k in range(n):
        st.cl_lits[s + k] = lits[k]
    S[ARENA_TOP] = s + n
    st.cl_start[c] = s
    st.cl_size[c] = n
    st.cl_flags[c] = flags
    st.cl_lbd[c] = lbd
    st.cl_act[c] = 0.0
    S[NWATCHED] += 1
    if flags & LEARNT:
        S[NLEARNTS] += 1
        S[TOTAL_LEARNT] += 1
    s = st.cl_start[c]
    watch_push(st, st.cl_lits[s], c, st.cl_lits[s + 1])
    watch_push(st, st.cl_lits[s + 1], c, st.cl_lits[s])
    return c


@njit(cache=True, nogil=True)
def propagate(st):
    S = st.S
    val = st.val
    cl_lits = st.cl_lits
    cl_start = st.cl_start
    cl_size = st.cl_size
    w_cls = st.w_cls
    w_blk = st.w_blk
    confl = -1
    while S[QHEAD] < S[TRAIL_SIZE]:
        p = st.trail[S[QHEAD]]
        S[QHEAD] += 1
        S[PROPAGATIONS] += 1
        fl = p ^ 1
        off = st.w_off[fl]
        end = off + st.w_len[fl]
        i = off
        j = off
        while i < end:
            blk = w_blk[i]
            if val[blk] == 1:
                w_cls[j] = w_cls[i]
                w_blk[j] = blk
                i += 1
                j += 1
                continue
            c = w_cls[i]
            s = cl_start[c]
            if cl_lits[s] == fl:
                cl_lits[s] = cl_lits[s + 1]
                cl_lits[s + 1] = fl
            first = cl_lits[s]
            if first != blk and val[first] == 1:
                w_cls[j] = c
                w_blk[j] = first
                i += 1
                j += 1
                continue
            found = False
            for k in range(s + 2, s + cl_size[c]):
                lk = cl_lits[k]
                if val[lk] != -1:
                    cl_lits[s + 1] = lk
                    cl_lits[k] = fl
                    watch_push(st, lk, c, first)
                    found = True
                    break
            i += 1
            if found:
                continue
            w_cls[j] = c
            w_blk[j] = first
            j += 1
            if val[first] == -1:
                confl = c
                S[QHEAD] = S[TRAIL_SIZE]
                while i < end:
                    w_cls[j] = w_cls[i]
                    w_blk[j] = w_blk[i]
                    i += 1
                    j += 1
            else:
                enqueue(st, first, c)
        st.w_len[fl] = j - off
    return confl


@njit(cache=True, nogil=True)
def add_clause(st, lits):
    """Add a clause at decision level 0, simplifying against level-0 facts."""
    S = st.S
    if S[OK] == 0:
        return
    buf = st.stack
    k = 0
    for i in range(lits.shape[0]):
        lit = lits[i]
        if st.val[lit] == 1:
            return
        if st.val[lit] == 0:
            buf[k] = lit
            k += 1
    if k == 0:
        S[OK] = 0
    elif k == 1:
        enqueue(st, buf[0], -1)
        if propagate(st) != -1:
            S[OK] = 0
    else:
        alloc_clause(st, buf, k, 0, 0)


@njit(cache=True, nogil=True)
def load_clauses(st, flat, offsets):
    for c in range(offsets.shape[0] - 1):
        add_clause(st, flat[offsets[c]:offsets[c + 1]])
        if st.S[OK] == 0:
            return


# -- conflict analysis ------------------------------------------------------

@njit(cache=True, nogil=True)
def compute_lbd(st, lits, n):
    S = st.S
    S[STAMP] += 1
    stamp = S[STAMP]
    count = 0
    for k in range(n):
        lv = st.level[lits[k] >> 1]
        if st.lvl_stamp[lv] != stamp:
            st.lvl_stamp[lv] = stamp
            count += 1
    return count


@njit(cache=True, nogil=True)
def lit_redundant(st, p, abstract_levels, ntoclear):
    stack = st.stack
    seen = st.seen
    top = ntoclear
    sp = 0
    stack[sp] = p
    sp += 1
    while sp > 0:
        sp -= 1
        q = stack[sp]
        c = st.reason[q >> 1]
        s = st.cl_start[c]
        for k in range(s + 1, s + st.cl_size[c]):
            lk = st.cl_lits[k]
            v = lk >> 1
            if seen[v] == 0 and st.level[v] > 0:
                if st.reason[v] != -1 and (abstract_levels & (1 << (st.level[v] & 31))) != 0:
                    seen[v] = 1
                    stack[sp] = lk
                    sp += 1
                    st.toclear[ntoclear] = lk
                    ntoclear += 1
                else:
                    for r in range(top, ntoclear):
                        seen[st.toclear[r] >> 1] = 0
                    return -1
    return ntoclear


@njit(cache=True, nogil=True)
def analyze(st, confl):
    """First-UIP learning with recursive minimization.

    Writes the learnt clause to ``st.buf`` (asserting literal first, a
    literal of the backjump level second) and returns (length, backjump, lbd).
    """
    seen = st.seen
    buf = st.buf
    dl = st.S[DLEVEL]
    pathc = 0
    p = -1
    n = 1
    index = st.S[TRAIL_SIZE] - 1
    c = confl
    while True:
        if st.cl_flags[c] & LEARNT:
            bump_clause(st, c)
        s = st.cl_start[c]
        start = s if p == -1 else s + 1
        for k in range(start, s + st.cl_size[c]):
            q = st.cl_lits[k]
            v = q >> 1
            if seen[v] == 0 and st.level[v] > 0:
                bump_var(st, v)
                seen[v] = 1
                if st.level[v] >= dl:
                    pathc += 1
                else:
                    buf[n] = q
                    n += 1
        while seen[st.trail[index] >> 1] == 0:
            index -= 1
        p = st.trail[index]
        index -= 1
        c = st.reason[p >> 1]
        seen[p >> 1] = 0
        pathc -= 1
        if pathc <= 0:
            break
    buf[0] = p ^ 1

    # minimization
    ntoclear = 0
    abstract_levels = 0
    for k in range(n):
        st.toclear[ntoclear] = buf[k]
        ntoclear += 1
        if k > 0:
            abstract_levels |= 1 << (st.level[buf[k] >> 1] & 31)
    j = 1
    for k in range(1, n):
        q = buf[k]
        if st.reason[q >> 1] == -1:
            buf[j] = q
            j += 1
        else:
            r = lit_redundant(st, q, abstract_levels, ntoclear)
            if r < 0:
                buf[j] = q
                j += 1
            else:
                ntoclear = r
    st.S[REMOVED_LITS] += n - j
    n = j
    for k in range(ntoclear):
        seen[st.toclear[k] >> 1] = 0

    bt = 0
    if n > 1:
        best = 1
        for k in range(2, n):
            if st.level[buf[k] >> 1] > st.level[buf[best] >> 1]:
                best = k
        tmp = buf[1]
        buf[1] = buf[best]
        buf[best] = tmp
        bt = st.level[buf[1] >> 1]
    lbd = compute_lbd(st, buf, n)
    st.S[BUF_LEN] = n
    return n, bt, lbd


@njit(cache=True, nogil=True)
def analyze_final(st, p):
    """Collect the assumption literals responsible for ``p`` being true."""
    seen = st.seen
    n = 0
    st.buf[n] = p
    n += 1
    if st.S[DLEVEL] == 0:
        st.S[BUF_LEN] = n
        return n
    seen[p >> 1] = 1
    for i in range(st.S[TRAIL_SIZE] - 1, st.trail_lim[0] - 1, -1):
        lit = st.trail[i]
        x = lit >> 1
        if seen[x]:
            c = st.reason[x]
            if c == -1:
                if st.level[x] > 0:
                    st.buf[n] = lit ^ 1
                    n += 1
            else:
                s = st.cl_start[c]
                for k in range(s + 1, s + st.cl_size[c]):
                    if st.level[st.cl_lits[k] >> 1] > 0:
                        seen[st.cl_lits[k] >> 1] = 1
            seen[x] = 0
    seen[p >> 1] = 0
    st.S[BUF_LEN] = n
    return n


# -- clause database reduction -----------------------------------------------

@njit(cache=True, nogil=True)
def is_locked(st, c):
    l0 = st.cl_lits[st.cl_start[c]]
    return st.reason[l0 >> 1] == c and st.val[l0] == 1


@njit(cache=True, nogil=True)
def delete_clause(st, c):
    st.cl_flags[c] = DELETED
    st.S[NLEARNTS] -= 1
    st.S[NWATCHED] -= 1
    st.S[ARENA_WASTED] += st.cl_size[c]


@njit(cache=True, nogil=True)
def sweep_watches(st):
    for lit in range(st.w_off.shape[0]):
        off = st.w_off[lit]
        j = off
        for i in range(off, off + st.w_len[lit]):
            if (st.cl_flags[st.w_cls[i]] & DELETED) == 0:
                st.w_cls[j] = st.w_cls[i]
                st.w_blk[j] = st.w_blk[i]
                j += 1
        st.w_len[lit] = j - off


@njit(cache=True, nogil=True)
def reduce_db(st):
    """Drop the worse half of learnt clauses by (lbd, activity).

    Glue clauses (lbd <= 2) and clauses that are the reason of a current
    assignment are kept. Returns the number of clauses removed.
    """
    S = st.S
    count = 0
    idx = np.empty(S[NLEARNTS], np.int64)
    maxact = 0.0
    for c in range(S[NSLOTS]):
        if st.cl_flags[c] == LEARNT:
            idx[count] = c
            count += 1
            if st.cl_act[c] > maxact:
                maxact = st.cl_act[c]
    keys = np.empty(count)
    for r in range(count):
        c = idx[r]
        # larger key = worse clause; activity only breaks ties inside one lbd
        keys[r] = st.cl_lbd[c] - 0.5 * st.cl_act[c] / (maxact + 1e-300)
    order = np.argsort(-keys, kind="mergesort")
    removed = 0
    for r in range(count // 2):
        c = idx[order[r]]
        if st.cl_lbd[c] <= 2 or is_locked(st, c):
            continue
        delete_clause(st, c)
        st.free_slots[S[NFREE]] = c
        S[NFREE] += 1
        removed += 1
    if removed > 0:
        sweep_watches(st)
    S[NREDUCE] += 1
    return removed


# -- search -----------------------------------------------------------------

@njit(cache=True, nogil=True)
def pick_branch(st):
    while st.S[HEAP_SIZE] > 0:
        v = heap_pop(st)
        if st.val[2 * v] == 0:
            return 2 * v + st.phase[v]
    return -1


@njit(cache=True, nogil=True)
def pool_needed(st):
    S = st.S
    live_lits = S[ARENA_TOP] - S[ARENA_WASTED]
    return 4 * (2 * S[NWATCHED] + live_lits) + 16 * S[NVARS] + 4096


@njit(cache=True, nogil=True)
def needs_grow(st):
    S = st.S
    if st.cl_lits.shape[0] - S[ARENA_TOP] < S[NVARS] + 2:
        return True
    if S[NFREE] == 0 and S[NSLOTS] >= st.cl_start.shape[0]:
        return True
    if st.w_cls.shape[0] - S[POOL_TOP] < pool_needed(st):
        return True
    return False


@njit(cache=True, nogil=True)
def search(st, max_conflicts, restart_at_limit, assumptions, cancel):
    """CDCL loop until SAT/UNSAT, ``max_conflicts`` conflicts, or cancellation.

    With ``restart_at_limit`` the trail is cancelled to level 0 when the
    conflict limit is hit (a restart); otherwise search simply pauses.
    """
    S = st.S
    F = st.F
    if S[OK] == 0:
        return UNSAT
    nassump = assumptions.shape[0]
    conflicts = 0
    while True:
        if needs_grow(st):
            return NEED_GROW
        confl = propagate(st)
        if confl != -1:
            S[CONFLICTS] += 1
            conflicts += 1
            if S[DLEVEL] == 0:
                S[OK] = 0
                return UNSAT
            n, bt, lbd = analyze(st, confl)
            cancel_until(st, bt)
            if n == 1:
                enqueue(st, st.buf[0], -1)
            else:
                c = alloc_clause(st, st.buf, n, LEARNT, lbd)
                bump_clause(st, c)
                enqueue(st, st.buf[0], c)
            S[WIN_CONFLICTS] += 1
            S[WIN_LBD_SUM] += lbd
            F[VAR_INC] /= F[VAR_DECAY]
            F[CLA_INC] /= F[CLA_DECAY]
            if S[CONFLICTS] >= S[NEXT_REDUCE]:
                S[NEXT_REDUCE] = S[CONFLICTS] + S[REDUCE_BASE] + S[REDUCE_INC] * (S[NREDUCE] + 1)
                reduce_db(st)
            if cancel[0] != 0:
                return CANCELLED
            if conflicts >= max_conflicts:
                if restart_at_limit:
                    cancel_until(st, 0)
                return LIMIT
        else:
            if conflicts >= max_conflicts:
                if restart_at_limit:
                    cancel_until(st, 0)
                return LIMIT
            nxt = -1
            while S[DLEVEL] < nassump:
                p = assumptions[S[DLEVEL]]
                if st.val[p] == 1:
                    new_level(st)
                elif st.val[p] == -1:
                    analyze_final(st, p ^ 1)
                    return UNSAT_ASSUMPTIONS
                else:
                    nxt = p
                    break
            if nxt == -1:
                nxt = pick_branch(st)
                if nxt == -1:
                    return SAT
                S[DECISIONS] += 1
            new_level(st)
            enqueue(st, nxt, -1)


# -- capacity management ------------------------------------------------------

@njit(cache=True, nogil=True)
def compact_arena(cl_lits, cl_start, cl_size, cl_flags, nslots, new_lits):
    top = 0
    for c in range(nslots):
        if cl_flags[c] & DELETED:
            continue
        s = cl_start[c]
        for k in range(cl_size[c]):
            new_lits[top + k] = cl_lits[s + k]
        cl_start[c] = top
        top += cl_size[c]
    return top


@njit(cache=True, nogil=True)
def compact_pool(w_off, w_len, w_cap, w_cls, w_blk, new_cls, new_blk):
    top = 0
    for lit in range(w_off.shape[0]):
        n = w_len[lit]
        cap = 4 if n < 2 else 2 * n
        off = w_off[lit]
        for k in range(n):
            new_cls[top + k] = w_cls[off + k]
            new_blk[top + k] = w_blk[off + k]
        w_off[lit] = top
        w_cap[lit] = cap
        top += cap
    return top
