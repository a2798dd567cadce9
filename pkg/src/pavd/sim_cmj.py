"""Event-driven simulator of the continuous-time branching embedding.

Each alive individual carries exactly one pending event, scheduled at an
exponential time with rate b(deg)+d(deg); whether it is a birth or a
death is resolved when the event fires, with birth probability
b/(b+d).  Memorylessness of the exponential clocks makes this equivalent
to running separate birth and death clocks.

Also provides direct samplers for the offspring count, the birth-offset
sequence, and the lifetime, which share the chain construction but never
build a tree.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rates import DerivedSequences, RateModel
from .sim_discrete import Extinct

__all__ = [
    "BPState",
    "ContinuousObservables",
    "OffspringSample",
    "PopulationExplosion",
    "sample_offspring_process",
    "sample_remaining_lifetime",
    "sample_lifetimes",
    "sample_offspring_counts",
]


class PopulationExplosion(RuntimeError):
    """Alive population exceeded the configured cap."""


@dataclass(frozen=True)
class ContinuousObservables:
    o_t: float  # birth time of the oldest alive individual
    i_t: float  # birth time of the oldest alive individual of maximal degree
    max_children: int
    alive_count: int
    w_hat: Optional[float]  # alive_count * exp(-lambda* t) when lambda* given


@dataclass(frozen=True)
class OffspringSample:
    D: float  # offspring count; math.inf when the chain never dies
    S: np.ndarray  # birth offsets S_1..S_min(D, k_cap)
    L: float  # lifetime; math.inf when never dying


class BPState:
    """Continuous-time population with one pending event per alive individual."""

    def __init__(
        self,
        model: RateModel,
        seqs: Optional[DerivedSequences] = None,
        record_events: bool = False,
        alive_cap: int = 100_000_000,
    ):
        self.model = model
        self.seqs = seqs if seqs is not None else DerivedSequences(model)
        self.alive_cap = alive_cap
        self.t = 0.0
        self.birth_time = [0.0]
        self.degree = [0]
        self.alive = [True]
        self.death_time = [math.nan]
        self.parent = [-1]
        self.alive_count = 1
        self.N = 0  # births + deaths so far
        self.taus: list = []
        self.events: Optional[list] = [] if record_events else None
        self._heap: list = []
        self._seq = 0
        self._scheduled = False

    # -- scheduling -------------------------------------------------------------

    def schedule_next(self, vid: int, rng: np.random.Generator) -> tuple:
        """Push the next pending event for an alive individual."""
        i = self.degree[vid]
        w = float(self.seqs.rate_sums(i, i + 1)[0])
        entry = (self.t + rng.exponential() / w, self._seq, vid)
        self._seq += 1
        heapq.heappush(self._heap, entry)
        return entry

    def _ensure_root(self, rng: np.random.Generator) -> None:
        if not self._scheduled:
            self.schedule_next(0, rng)
            self._scheduled = True

    def _pop_event(self, rng: np.random.Generator) -> bool:
        """Resolve the earliest pending event; returns False when none remain."""
        if not self._heap:
            return False
        when, _, vid = heapq.heappop(self._heap)
        self.t = when
        i = self.degree[vid]
        b = float(self.seqs.birth_rates(i, i + 1)[0])
        w = float(self.seqs.rate_sums(i, i + 1)[0])
        if rng.random() < b / w:
            child = len(self.birth_time)
            self.birth_time.append(when)
            self.degree.append(0)
            self.alive.append(True)
            self.death_time.append(math.nan)
            self.parent.append(vid)
            self.degree[vid] = i + 1
            self.alive_count += 1
            if self.alive_count > self.alive_cap:
                raise PopulationExplosion(f"alive population exceeded {self.alive_cap}")
            self.schedule_next(child, rng)
            self.schedule_next(vid, rng)
            if self.events is not None:
                self.events.append(("b", vid + 1))
        else:
            self.alive[vid] = False
            self.death_time[vid] = when
            self.alive_count -= 1
            if self.events is not None:
                self.events.append(("d", vid + 1))
        self.N += 1
        self.taus.append(when)
        return True

    # -- runs ----------------------------------------------------------------------

    def run_until_events(self, n: int, rng: np.random.Generator) -> tuple:
        """Pop events until the counter reaches n or the population dies.

        Returns (self, survived flag).
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        self._ensure_root(rng)
        while self.N < n:
            if not self._pop_event(rng):
                return self, False
        return self, self.alive_count > 0

    def run_until_time(self, t_end: float, rng: np.random.Generator):
        """Pop all events with time <= t_end and advance the clock to t_end."""
        if t_end < self.t:
            raise ValueError("t_end is in the past")
        self._ensure_root(rng)
        while self._heap and self._heap[0][0] <= t_end:
            self._pop_event(rng)
        self.t = t_end
        return self

    def continuous_observables(self, lambda_star: Optional[float] = None) -> ContinuousObservables:
        if self.alive_count == 0:
            raise Extinct("population has died out")
        o_t = math.inf
        i_t = math.inf
        max_children = -1
        for vid in range(len(self.birth_time)):
            if not self.alive[vid]:
                continue
            s = self.birth_time[vid]
            if s < o_t:
                o_t = s
            dv = self.degree[vid]
            if dv > max_children or (dv == max_children and s < i_t):
                if dv > max_children:
                    i_t = s
                    max_children = dv
                else:
                    i_t = s
        w_hat = None
        if lambda_star is not None:
            w_hat = self.alive_count * math.exp(-lambda_star * self.t)
        return ContinuousObservables(
            o_t=o_t,
            i_t=i_t,
            max_children=max_children,
            alive_count=self.alive_count,
            w_hat=w_hat,
        )


# ---------------------------------------------------------------------------
# Direct samplers for (D, S, L)
# ---------------------------------------------------------------------------


def _chain_segment(seqs: DerivedSequences, k0: int, size: int, rng: np.random.Generator):
    """Gaps and death flags for chain indices [k0, k0+size)."""
    w, d = seqs.rate_window(k0, k0 + size)
    gaps = rng.standard_exponential(size) / w
    deaths = rng.random(size) < d / w
    return gaps, deaths


def sample_offspring_process(
    model: RateModel,
    k_cap: int,
    rng: np.random.Generator,
    seqs: Optional[DerivedSequences] = None,
) -> OffspringSample:
    """Sample (D, S_1..S_{min(D,k_cap)}, L) without building a tree."""
    if k_cap < 1:
        raise ValueError("k_cap must be >= 1")
    if seqs is None:
        seqs = DerivedSequences(model)
    zero_start = model.d_zero_tail_start()
    stored: list = []
    n_stored = 0
    total = 0.0
    k = 0
    chunk = 64
    while True:
        if zero_start is not None and k >= zero_start:
            # no death can ever occur: fill remaining birth offsets and stop
            if n_stored < k_cap:
                gaps, _ = _chain_segment(seqs, k, k_cap - n_stored, rng)
                stored.append(total + np.cumsum(gaps))
            return OffspringSample(D=math.inf, S=_concat(stored, k_cap), L=math.inf)
        gaps, deaths = _chain_segment(seqs, k, chunk, rng)
        cums = total + np.cumsum(gaps)
        hit = np.nonzero(deaths)[0]
        if hit.size:
            f = int(hit[0])
            if n_stored < k_cap and f > 0:
                stored.append(cums[: min(f, k_cap - n_stored)])
                n_stored += min(f, k_cap - n_stored)
            return OffspringSample(D=float(k + f), S=_concat(stored, k_cap), L=float(cums[f]))
        if n_stored < k_cap:
            take = min(chunk, k_cap - n_stored)
            stored.append(cums[:take])
            n_stored += take
        total = float(cums[-1])
        k += chunk
        chunk = min(2 * chunk, 1 << 16)


def _concat(parts: list, k_cap: int) -> np.ndarray:
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)[:k_cap]


def sample_remaining_lifetime(
    model: RateModel,
    k: int,
    rng: np.random.Generator,
    seqs: Optional[DerivedSequences] = None,
) -> float:
    """Sample the time-to-death of the chain started at index k.

    Conditioned on at least k children, this is the lifetime remaining
    after the k-th birth.  Returns math.inf when the death rates vanish
    from some index on and the chain passes it.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if seqs is None:
        seqs = DerivedSequences(model)
    zero_start = model.d_zero_tail_start()
    total = 0.0
    idx = k
    chunk = 64
    while True:
        if zero_start is not None and idx >= zero_start:
            return math.inf
        gaps, deaths = _chain_segment(seqs, idx, chunk, rng)
        hit = np.nonzero(deaths)[0]
        if hit.size:
            f = int(hit[0])
            return total + float(np.cumsum(gaps[: f + 1])[-1])
        total += float(np.sum(gaps))
        idx += chunk
        chunk = min(2 * chunk, 1 << 16)


def sample_lifetimes(
    model: RateModel,
    n: int,
    rng: np.random.Generator,
    seqs: Optional[DerivedSequences] = None,
    start_index: int = 0,
) -> np.ndarray:
    """Vectorised batch of n lifetime samples (math.inf for never-dying chains).

    Chains advance index-by-index while many are active, then the few
    deep survivors finish with the chunked scalar sampler.
    """
    if seqs is None:
        seqs = DerivedSequences(model)
    zero_start = model.d_zero_tail_start()
    out = np.zeros(n)
    active = np.arange(n)
    i = start_index
    while active.size > 512:
        if zero_start is not None and i >= zero_start:
            out[active] = math.inf
            return out
        w_arr, d_arr = seqs.rate_window(i, i + 1)
        w = float(w_arr[0])
        q = float(d_arr[0]) / w
        gaps = rng.standard_exponential(active.size) / w
        out[active] += gaps
        dead = rng.random(active.size) < q
        active = active[~dead]
        i += 1
    for j in active:
        out[j] += sample_remaining_lifetime(model, i, rng, seqs)
    return out


def sample_offspring_counts(
    model: RateModel,
    n: int,
    rng: np.random.Generator,
    k_cap: int = 64,
    seqs: Optional[DerivedSequences] = None,
) -> np.ndarray:
    """Batch of n offspring counts, censored at k_cap."""
    if seqs is None:
        seqs = DerivedSequences(model)
    out = np.full(n, k_cap, dtype=np.int64)
    active = np.arange(n)
    for i in range(k_cap):
        if active.size == 0:
            break
        w_arr, d_arr = seqs.rate_window(i, i + 1)
        w = float(w_arr[0])
        q = float(d_arr[0]) / w
        dead = rng.random(active.size) < q
        out[active[dead]] = i
        active = active[~dead]
    return out
