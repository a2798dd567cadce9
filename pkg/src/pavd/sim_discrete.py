"""Exact simulator of the discrete attachment-with-death chain.

At each step an alive vertex is selected with probability proportional to
b(deg)+d(deg); it is then killed with probability d/(b+d) or receives a
new child labelled with the next integer.  Selection is two-level: a
Fenwick tree over degree classes (weights depend on the degree only)
picks the class, then a uniform member is drawn.

``TreeState`` is the readable reference implementation; ``run_chain_fast``
drives a numba kernel that consumes an identical uniform stream, so the
two produce bit-identical trajectories from the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rates import DerivedSequences, RateModel

__all__ = [
    "Birth",
    "Death",
    "AlreadyExtinct",
    "Extinct",
    "Observables",
    "TreeState",
    "run_chain_fast",
    "ChainResult",
]


class Extinct(RuntimeError):
    """Operation requires an alive vertex but the tree has died."""


@dataclass(frozen=True)
class Birth:
    parent: int
    child: int


@dataclass(frozen=True)
class Death:
    label: int


@dataclass(frozen=True)
class AlreadyExtinct:
    pass


@dataclass(frozen=True)
class Observables:
    o_n: Optional[int]  # smallest alive label
    i_n: Optional[int]  # smallest alive label of maximal alive degree
    max_deg_alive: Optional[int]
    max_deg_all: int
    alive_count: int


class _Fenwick:
    """Prefix-sum tree over degree classes with weighted lower-bound search."""

    def __init__(self, size: int):
        self.n = 1
        while self.n < size:
            self.n *= 2
        self.tree = np.zeros(self.n + 1)

    def add(self, i: int, delta: float) -> None:
        i += 1
        while i <= self.n:
            self.tree[i] += delta
            i += i & (-i)

    def find(self, x: float) -> int:
        """Largest index whose prefix sum is <= x (the selected class)."""
        idx = 0
        bit = self.n
        t = self.tree
        while bit:
            nxt = idx + bit
            if nxt <= self.n and t[nxt] <= x:
                idx = nxt
                x -= t[nxt]
            bit >>= 1
        return idx

    def grow(self, size: int, weights) -> None:
        old = self
        new = _Fenwick(size)
        for c, wgt in weights:
            new.add(c, wgt)
        self.n = new.n
        self.tree = new.tree


class TreeState:
    """Reference chain state: parents, degrees, alive set, class sampler.

    Consumes exactly three uniforms per non-frozen step (class, member,
    kill decision), drawn one at a time from the supplied generator.
    """

    WEIGHT_CHECK_INTERVAL = 1 << 16

    def __init__(self, model: RateModel, seqs: Optional[DerivedSequences] = None):
        self.model = model
        self.seqs = seqs if seqs is not None else DerivedSequences(model)
        self.parent = [0, 0]  # label 1 is the root; slot 0 unused
        self.degree = [0, 0]
        self.alive = [False, True]
        self._pos = [0, 0]
        self._members = [[1]]  # per degree class, unordered member lists
        self._weights = [float(self.seqs.rate_sums(0, 1)[0])]
        self._fen = _Fenwick(16)
        self._fen.add(0, self._weights[0])
        self.total_weight = self._weights[0]
        self.alive_count = 1
        self.n_steps = 1
        self.extinct = False
        self._min_ptr = 1
        self._cur_max = 0
        self.max_deg_all = 0

    # -- class bookkeeping ---------------------------------------------------

    def _class_weight(self, c: int) -> float:
        while c >= len(self._weights):
            lo = len(self._weights)
            ext = self.seqs.rate_sums(lo, 2 * lo + 1)
            self._weights.extend(float(v) for v in ext)
            self._members.extend([] for _ in range(len(self._weights) - len(self._members)))
            if len(self._weights) > self._fen.n:
                occupied = [
                    (cc, len(mem) * self._weights[cc])
                    for cc, mem in enumerate(self._members)
                    if mem
                ]
                self._fen.grow(2 * len(self._weights), occupied)
        return self._weights[c]

    def _remove_from_class(self, v: int, c: int) -> None:
        mem = self._members[c]
        p = self._pos[v]
        last = mem[-1]
        mem[p] = last
        self._pos[last] = p
        mem.pop()
        self._fen.add(c, -self._weights[c])
        self.total_weight -= self._weights[c]

    def _add_to_class(self, v: int, c: int) -> None:
        wgt = self._class_weight(c)
        mem = self._members[c]
        self._pos[v] = len(mem)
        mem.append(v)
        self._fen.add(c, wgt)
        self.total_weight += wgt

    # -- operations ------------------------------------------------------------

    def select_vertex(self, rng: np.random.Generator) -> int:
        """Alive vertex j with probability (b+d)(deg j) / total weight."""
        if self.extinct:
            raise Extinct("no alive vertices to select")
        u1 = rng.random()
        u2 = rng.random()
        c = self._fen.find(u1 * self.total_weight)
        if c >= len(self._members) or not self._members[c]:
            c = self._cur_max
            while not self._members[c]:
                c -= 1
        mem = self._members[c]
        m = min(int(u2 * len(mem)), len(mem) - 1)
        return mem[m]

    def step(self, rng: np.random.Generator):
        """One chain transition; returns Birth, Death, or AlreadyExtinct."""
        if self.extinct:
            self.n_steps += 1
            return AlreadyExtinct()
        v = self.select_vertex(rng)
        c = self.degree[v]
        u3 = rng.random()
        kill = u3 < self.seqs.death_rates(c, c + 1)[0] / self._weights[c]
        self.n_steps += 1
        if kill:
            self._remove_from_class(v, c)
            self.alive[v] = False
            self.alive_count -= 1
            if self.alive_count == 0:
                self.extinct = True
            else:
                if c == self._cur_max and not self._members[c]:
                    while not self._members[self._cur_max]:
                        self._cur_max -= 1
                if v == self._min_ptr:
                    while self._min_ptr < len(self.alive) and not self.alive[self._min_ptr]:
                        self._min_ptr += 1
            result = Death(v)
        else:
            child = len(self.parent)
            self.parent.append(v)
            self.degree.append(0)
            self.alive.append(True)
            self._pos.append(0)
            self._add_to_class(child, 0)
            self._remove_from_class(v, c)
            self.degree[v] = c + 1
            self._add_to_class(v, c + 1)
            self.alive_count += 1
            if c + 1 > self._cur_max:
                self._cur_max = c + 1
            if c + 1 > self.max_deg_all:
                self.max_deg_all = c + 1
            result = Birth(v, child)
        if self.n_steps % self.WEIGHT_CHECK_INTERVAL == 0:
            self._check_weights()
        return result

    def _check_weights(self) -> None:
        exact = sum(len(mem) * self._weights[c] for c, mem in enumerate(self._members) if mem)
        if self.total_weight and abs(exact - self.total_weight) > 1e-9 * max(exact, 1.0):
            raise AssertionError(
                f"weight drift: incremental {self.total_weight} vs exact {exact}"
            )
        self.total_weight = exact

    def observables(self) -> Observables:
        if self.extinct:
            return Observables(None, None, None, self.max_deg_all, 0)
        i_n = min(self._members[self._cur_max])
        return Observables(
            o_n=self._min_ptr,
            i_n=i_n,
            max_deg_alive=self._cur_max,
            max_deg_all=self.max_deg_all,
            alive_count=self.alive_count,
        )

    def run(self, n_target: int, observer_stride: int, rng: np.random.Generator):
        """Advance to n_target steps, emitting (n, Observables) at each stride."""
        if n_target < self.n_steps:
            raise ValueError("n_target below current step count")
        out = []
        while self.n_steps < n_target:
            self.step(rng)
            if self.n_steps % observer_stride == 0 or self.n_steps == n_target:
                out.append((self.n_steps, self.observables()))
        if not out or out[-1][0] != self.n_steps:
            out.append((self.n_steps, self.observables()))
        return out


# ---------------------------------------------------------------------------
# Fast path: numba kernel over the same uniform stream
# ---------------------------------------------------------------------------


@dataclass
class ChainResult:
    """Observation rows from a fast chain run.

    Arrays indexed by observation point: ``n``, ``survived``,
    ``alive_count``, ``o_n``, ``i_n``, ``max_deg_alive`` (-1 when extinct),
    ``max_deg_all``; plus the final alive-degree histogram (counts per
    degree) of the surviving population.
    """

    n: np.ndarray
    survived: np.ndarray
    alive_count: np.ndarray
    o_n: np.ndarray
    i_n: np.ndarray
    max_deg_alive: np.ndarray
    max_deg_all: np.ndarray
    final_degree_counts: np.ndarray


def run_chain_fast(
    model: RateModel,
    n_target: int,
    obs_steps,
    seed=None,
    rng: Optional[np.random.Generator] = None,
    seqs: Optional[DerivedSequences] = None,
) -> ChainResult:
    """Run the chain to ``n_target`` steps with the jitted kernel.

    ``obs_steps`` are step counts at which observables are recorded; the
    uniform stream matches TreeState driven by the same generator.
    """
    from . import _chain_kernel as ck

    if rng is None:
        rng = np.random.default_rng(seed)
    if seqs is None:
        seqs = DerivedSequences(model)
    obs = np.asarray(sorted(set(int(x) for x in obs_steps)), dtype=np.int64)
    if len(obs) == 0 or obs[0] < 1 or obs[-1] > n_target:
        raise ValueError("observation steps must lie in [1, n_target]")
    uniforms = rng.random(3 * max(n_target - 1, 1))
    state = ck.ChainState(n_target)
    C = 1024
    out = np.zeros((len(obs), 7), dtype=np.int64)
    while True:
        w = np.ascontiguousarray(seqs.rate_sums(0, C))
        dp = np.ascontiguousarray(seqs.death_rates(0, C) / w)
        status = ck.run(state, n_target, w, dp, uniforms, obs, out)
        if status == ck.OK:
            break
        if status == ck.NEED_CLASSES:
            C *= 2
            ck.rebuild_tree(state, np.ascontiguousarray(seqs.rate_sums(0, C)))
            continue
        raise AssertionError("weight consistency check failed in kernel")
    counts = np.asarray(state.counts[: state.scal_i[ck.I_CURMAX] + 1])
    return ChainResult(
        n=out[:, 0].copy(),
        survived=out[:, 1].copy(),
        alive_count=out[:, 2].copy(),
        o_n=out[:, 3].copy(),
        i_n=out[:, 4].copy(),
        max_deg_alive=out[:, 5].copy(),
        max_deg_all=out[:, 6].copy(),
        final_degree_counts=counts.copy(),
    )
