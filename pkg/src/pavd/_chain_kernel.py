"""Jitted inner loop for the discrete chain.

State lives in driver-owned arrays so the kernel can return for class
growth and resume.  The uniform stream layout (three draws per step:
class, member, kill) matches the pure-Python TreeState exactly.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from numba.typed import List as TypedList

OK = 0
NEED_CLASSES = 1
BAD_WEIGHT = 2

# scal_i slots
I_NEXT_LABEL = 0
I_MINPTR = 1
I_CURMAX = 2
I_MAXALL = 3
I_ALIVE = 4
I_N = 5
I_EXTINCT = 6
I_UI = 7
I_OI = 8

WEIGHT_CHECK_INTERVAL = 1 << 16


class ChainState:
    """Driver-side chain state passed piecewise into the kernel."""

    def __init__(self, n_target: int, n_classes: int = 1024):
        n = n_target + 2
        self.deg = np.zeros(n, dtype=np.int64)
        self.alive = np.zeros(n, dtype=np.uint8)
        self.pos = np.zeros(n, dtype=np.int64)
        self.members = TypedList()
        self.counts = np.zeros(n_classes, dtype=np.int64)
        self.caps = np.zeros(n_classes, dtype=np.int64)
        for _ in range(n_classes):
            self.members.append(np.empty(4, dtype=np.int64))
        self.caps[:] = 4
        fen = 1
        while fen < n_classes:
            fen *= 2
        self.tree = np.zeros(fen + 1, dtype=np.float64)
        self.scal_i = np.zeros(9, dtype=np.int64)
        self.scal_f = np.zeros(1, dtype=np.float64)

    def grow_classes(self, n_classes: int) -> None:
        old = len(self.counts)
        if n_classes <= old:
            return
        self.counts = np.concatenate([self.counts, np.zeros(n_classes - old, np.int64)])
        self.caps = np.concatenate([self.caps, np.full(n_classes - old, 4, np.int64)])
        for _ in range(n_classes - old):
            self.members.append(np.empty(4, dtype=np.int64))


def rebuild_tree(state: ChainState, w: np.ndarray) -> None:
    """Resize the class Fenwick tree after growth and re-add class weights."""
    state.grow_classes(len(w))
    fen = 1
    while fen < len(w):
        fen *= 2
    tree = np.zeros(fen + 1, dtype=np.float64)
    _readd(tree, state.counts, w)
    state.tree = tree


@njit(cache=True, nogil=True)
def _readd(tree, counts, w):
    for c in range(len(counts)):
        if counts[c] > 0:
            _fen_add(tree, c, counts[c] * w[c])


@njit(cache=True, nogil=True)
def _fen_add(tree, c, delta):
    i = c + 1
    n = tree.shape[0]
    while i < n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True, nogil=True)
def _fen_find(tree, x):
    # largest class index whose prefix sum is <= x
    n = tree.shape[0] - 1
    idx = 0
    bit = n
    while bit:
        nxt = idx + bit
        if nxt <= n and tree[nxt] <= x:
            idx = nxt
            x -= tree[nxt]
        bit >>= 1
    return idx


@njit(cache=True, nogil=True)
def _append_member(members, counts, caps, c, label, pos):
    if counts[c] >= caps[c]:
        newcap = caps[c] * 2
        fresh = np.empty(newcap, dtype=np.int64)
        fresh[: counts[c]] = members[c][: counts[c]]
        members[c] = fresh
        caps[c] = newcap
    members[c][counts[c]] = label
    pos[label] = counts[c]
    counts[c] += 1


@njit(cache=True, nogil=True)
def _kernel(n_target, w, dprob, uniforms, obs, out,
            deg, alive, pos, members, counts, caps, tree, scal_i, scal_f):
    C = w.shape[0]
    next_label = scal_i[I_NEXT_LABEL]
    minptr = scal_i[I_MINPTR]
    curmax = scal_i[I_CURMAX]
    maxall = scal_i[I_MAXALL]
    alive_count = scal_i[I_ALIVE]
    n = scal_i[I_N]
    extinct = scal_i[I_EXTINCT] != 0
    ui = scal_i[I_UI]
    oi = scal_i[I_OI]
    total = scal_f[0]
    status = OK

    if n == 0:
        # fresh state: root labelled 1 with degree 0
        n = 1
        next_label = 2
        minptr = 1
        deg[1] = 0
        alive[1] = 1
        _append_member(members, counts, caps, 0, 1, pos)
        _fen_add(tree, 0, w[0])
        total = w[0]
        alive_count = 1

    while True:
        # record observables for the current step count
        while oi < obs.shape[0] and obs[oi] == n:
            out[oi, 0] = n
            if extinct:
                out[oi, 1] = 0
                out[oi, 2] = 0
                out[oi, 3] = -1
                out[oi, 4] = -1
                out[oi, 5] = -1
            else:
                out[oi, 1] = 1
                out[oi, 2] = alive_count
                out[oi, 3] = minptr
                best = np.int64(1) << 62
                for j in range(counts[curmax]):
                    if members[curmax][j] < best:
                        best = members[curmax][j]
                out[oi, 4] = best
                out[oi, 5] = curmax
            out[oi, 6] = maxall
            oi += 1
        if n >= n_target:
            break
        if curmax + 2 >= C:
            status = NEED_CLASSES
            break
        if not extinct:
            u1 = uniforms[ui]
            u2 = uniforms[ui + 1]
            u3 = uniforms[ui + 2]
            ui += 3
            c = _fen_find(tree, u1 * total)
            if c >= C or counts[c] == 0:
                c = curmax
                while counts[c] == 0:
                    c -= 1
            m = np.int64(u2 * counts[c])
            if m >= counts[c]:
                m = counts[c] - 1
            v = members[c][m]
            if u3 < dprob[c]:
                # death of v
                counts[c] -= 1
                last = members[c][counts[c]]
                members[c][m] = last
                pos[last] = m
                alive[v] = 0
                alive_count -= 1
                _fen_add(tree, c, -w[c])
                total -= w[c]
                if alive_count == 0:
                    extinct = True
                else:
                    if c == curmax and counts[c] == 0:
                        while counts[curmax] == 0:
                            curmax -= 1
                    if v == minptr:
                        while minptr < next_label and alive[minptr] == 0:
                            minptr += 1
            else:
                # birth: new vertex attaches to v
                lab = next_label
                next_label += 1
                deg[lab] = 0
                alive[lab] = 1
                _append_member(members, counts, caps, 0, lab, pos)
                _fen_add(tree, 0, w[0])
                total += w[0]
                counts[c] -= 1
                last = members[c][counts[c]]
                members[c][m] = last
                pos[last] = m
                c2 = c + 1
                _append_member(members, counts, caps, c2, v, pos)
                deg[v] = c2
                _fen_add(tree, c, -w[c])
                _fen_add(tree, c2, w[c2])
                total += w[c2] - w[c]
                if c2 > curmax:
                    curmax = c2
                if c2 > maxall:
                    maxall = c2
                alive_count += 1
        n += 1
        if n % WEIGHT_CHECK_INTERVAL == 0 and not extinct:
            exact = 0.0
            for cc in range(curmax + 1):
                if counts[cc] > 0:
                    exact += counts[cc] * w[cc]
            if abs(exact - total) > 1e-9 * (exact if exact > 1.0 else 1.0):
                status = BAD_WEIGHT
                break
            total = exact

    scal_i[I_NEXT_LABEL] = next_label
    scal_i[I_MINPTR] = minptr
    scal_i[I_CURMAX] = curmax
    scal_i[I_MAXALL] = maxall
    scal_i[I_ALIVE] = alive_count
    scal_i[I_N] = n
    scal_i[I_EXTINCT] = 1 if extinct else 0
    scal_i[I_UI] = ui
    scal_i[I_OI] = oi
    scal_f[0] = total
    return status


def run(state: ChainState, n_target, w, dprob, uniforms, obs, out) -> int:
    return _kernel(
        n_target, w, dprob, uniforms, obs, out,
        state.deg, state.alive, state.pos,
        state.members, state.counts, state.caps,
        state.tree, state.scal_i, state.scal_f,
    )
