"""Oracles and statistical verification tools.

Exact small-chain enumeration (the ground truth both simulators are
checked against), exponentially tilted importance sampling for
moderate-deviation quantities of the birth-offset sums, stratified
deep-tail lifetime estimation, survival-with-high-degree envelopes, and
one-sample distribution tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import stats as sps

from .rates import DerivedSequences, RateModel
from . import sim_cmj

__all__ = [
    "ChainLaw",
    "TiltedEstimate",
    "TooLarge",
    "NoTilt",
    "InsufficientTail",
    "EmptyInput",
    "enumerate_small_chain",
    "mdp_estimate",
    "tilted_expectation_estimate",
    "lifetime_tail_rate",
    "survdeg_probability",
    "ks_test",
    "tv_distance",
    "mu_hat_mc_estimate",
]


class TooLarge(ValueError):
    """Enumeration would exceed the outcome budget."""


class NoTilt(ValueError):
    """The tilted mean cannot reach the requested target."""


class InsufficientTail(RuntimeError):
    """Too few survivors at the deepest tail point."""


class EmptyInput(ValueError):
    pass


# ---------------------------------------------------------------------------
# Exact enumeration of the first chain steps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainLaw:
    """Exact law of outcome sequences of the first n steps.

    Keys are tuples of events ('b', parent) / ('d', label); probabilities
    are high-precision floats (products of at most 2n rational factors).
    """

    n_steps: int
    probs: dict

    def total_mass(self) -> float:
        return math.fsum(self.probs.values())


def enumerate_small_chain(
    model: RateModel,
    n_max: int,
    max_outcomes: int = 2_000_000,
) -> ChainLaw:
    """Depth-first expansion of all outcome sequences of n_max steps."""
    if n_max > 8:
        raise TooLarge("n_max beyond 8 explodes the outcome tree")
    b = lambda i: model.rate("birth", i)  # noqa: E731
    d = lambda i: model.rate("death", i)  # noqa: E731
    probs: dict = {}
    budget = [max_outcomes]

    def rec(prefix, alive, degrees, next_label, p, depth):
        if depth == n_max or not alive:
            probs[tuple(prefix)] = probs.get(tuple(prefix), 0.0) + p
            budget[0] -= 1
            if budget[0] < 0:
                raise TooLarge("outcome budget exhausted")
            return
        total = sum(b(degrees[v]) + d(degrees[v]) for v in alive)
        for v in list(alive):
            dv = degrees[v]
            wv = b(dv) + d(dv)
            sel = wv / total
            pk = d(dv) / wv
            if pk > 0.0:
                prefix.append(("d", v))
                alive.remove(v)
                rec(prefix, alive, degrees, next_label, p * sel * pk, depth + 1)
                alive.add(v)
                prefix.pop()
            prefix.append(("b", v))
            alive.add(next_label)
            degrees[next_label] = 0
            degrees[v] = dv + 1
            rec(prefix, alive, degrees, next_label + 1, p * sel * (1.0 - pk), depth + 1)
            degrees[v] = dv
            del degrees[next_label]
            alive.remove(next_label)
            prefix.pop()

    rec([], {1}, {1: 0}, 2, 1.0, 0)
    return ChainLaw(n_steps=n_max, probs=probs)


def tv_distance(law_a: dict, law_b: dict) -> float:
    """Exact total-variation distance between two laws on a common space."""
    if not law_a and not law_b:
        raise EmptyInput("both laws are empty")
    keys = set(law_a) | set(law_b)
    return 0.5 * math.fsum(abs(law_a.get(k, 0.0) - law_b.get(k, 0.0)) for k in keys)


def ks_test(samples, cdf: Callable) -> tuple:
    """One-sample Kolmogorov-Smirnov test against a CDF callback."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EmptyInput("no samples")
    res = sps.kstest(samples, cdf)
    return float(res.statistic), float(res.pvalue)


# ---------------------------------------------------------------------------
# Exponentially tilted estimators for the birth-offset sums
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TiltedEstimate:
    value: float  # normalised log estimate
    se: float  # delta-method standard error of the normalised log
    theta: float  # tilt used for sampling
    samples: int
    raw: float  # untransformed probability / expectation estimate
    raw_se: float


def _solve_tilt(w: np.ndarray, target: float, tol: float = 1e-10) -> float:
    """theta >= 0 with sum 1/(w_i + theta) = target (bisection)."""
    if target <= 0.0:
        raise NoTilt(f"target mean {target} is not reachable")
    lo, hi = 0.0, 1.0
    if float(np.sum(1.0 / w)) <= target:
        return 0.0
    while float(np.sum(1.0 / (w + hi))) > target:
        hi *= 2.0
        if hi > 1e18:
            raise NoTilt("tilt diverged")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.sum(1.0 / (w + mid))) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def _tilted_core(
    seqs: DerivedSequences,
    k: int,
    z: float,
    weight_theta: float,
    y: Optional[float],
    samples: int,
    rng: np.random.Generator,
) -> TiltedEstimate:
    w = np.asarray(seqs.rate_sums(0, k))
    snap = seqs.ensure(k)
    phi1 = float(snap.phi1[k])
    phi2 = float(snap.phi2[k])
    a_z = phi1 - z * phi2
    theta = _solve_tilt(w, a_z)
    logC = float(np.sum(np.log1p(theta / w)))
    a_y = phi1 - y * phi2 if y is not None else 0.0
    vals = np.empty(samples)
    done = 0
    row_cap = max(1, int(2e7 // max(k, 1)))
    while done < samples:
        m = min(row_cap, samples - done)
        gaps = rng.standard_exponential((m, k)) / (w + theta)
        s = gaps.sum(axis=1)
        logw = theta * s - logC
        if weight_theta != 0.0:
            logw = logw + weight_theta * (s - a_y)
        vals[done : done + m] = np.where(s <= a_z, np.exp(logw), 0.0)
        done += m
    raw = float(np.mean(vals))
    raw_se = float(np.std(vals, ddof=1) / math.sqrt(samples))
    if raw <= 0.0:
        raise InsufficientTail("no sample hit the indicator region")
    return TiltedEstimate(
        value=math.log(raw) / phi2,
        se=raw_se / raw / phi2,
        theta=theta,
        samples=samples,
        raw=raw,
        raw_se=raw_se,
    )


def mdp_estimate(
    model: RateModel,
    k: int,
    z: float,
    samples: int,
    rng: np.random.Generator,
    seqs: Optional[DerivedSequences] = None,
) -> TiltedEstimate:
    """Estimate phi2(k)^-1 log P(S_k <= phi1(k) - z phi2(k)) by tilted sampling.

    Gaps are drawn at rates w_i + theta with theta solving the tilted-mean
    equation, and reweighted by the exact likelihood ratio.
    """
    if seqs is None:
        seqs = DerivedSequences(model)
    return _tilted_core(seqs, k, z, 0.0, None, samples, rng)


def tilted_expectation_estimate(
    model: RateModel,
    k: int,
    z: float,
    y: float,
    theta: float,
    samples: int,
    rng: np.random.Generator,
    seqs: Optional[DerivedSequences] = None,
) -> TiltedEstimate:
    """Estimate phi2^-1 log E[1{S_k <= phi1 - z phi2} e^{theta (S_k - (phi1 - y phi2))}]."""
    if seqs is None:
        seqs = DerivedSequences(model)
    return _tilted_core(seqs, k, z, theta, y, samples, rng)


def smallest_k_with_phi2(model: RateModel, phi2_min: float) -> int:
    """Smallest k whose birth-offset variance reaches phi2_min."""
    seqs = DerivedSequences(model)
    k = 1
    while seqs.phi2(k) < phi2_min:
        k *= 2
    lo, hi = k // 2, k
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if seqs.phi2(mid) < phi2_min:
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------------------
# Lifetime tail rates with stratified (multilevel splitting) estimation
# ---------------------------------------------------------------------------


def _advance_chain(
    seqs: DerivedSequences,
    zero_start: Optional[int],
    start_index: int,
    horizon: float,
    rng: np.random.Generator,
) -> tuple:
    """Run one chain for `horizon` time; returns (alive, index_at_horizon)."""
    idx = start_index
    elapsed = 0.0
    chunk = 64
    while True:
        if zero_start is not None and idx >= zero_start:
            # no further deaths; the chain certainly survives the horizon
            return True, idx
        w, d = seqs.rate_window(idx, idx + chunk)
        gaps = rng.standard_exponential(chunk) / w
        cums = elapsed + np.cumsum(gaps)
        deaths = rng.random(chunk) < d / w
        passed = np.nonzero(cums > horizon)[0]
        hit = np.nonzero(deaths)[0]
        stop_at = int(passed[0]) if passed.size else chunk
        if hit.size and hit[0] < stop_at:
            return False, idx + int(hit[0])
        if passed.size:
            # survived the horizon during gap stop_at: degree is idx + stop_at
            return True, idx + stop_at
        elapsed = float(cums[-1])
        idx += chunk
        chunk = min(2 * chunk, 1 << 14)


def lifetime_tail_rate(
    model: RateModel,
    t_grid,
    samples: int,
    rng: np.random.Generator,
    stratified: bool = True,
    min_survivors: int = 10,
) -> dict:
    """Estimate -(1/t) log P(L > t) on a grid of horizons.

    With stratification the grid points act as milestones: the chain state
    is just the current index (the clocks are memoryless), so survivors of
    one stage are resampled to full strength and advanced to the next;
    the tail probability is the product of per-stage survival fractions.
    Error bars are delta-method standard errors on the log scale
    (stagewise binomial, treating stages as independent).
    """
    t_grid = sorted(float(t) for t in t_grid)
    if not t_grid or t_grid[0] <= 0:
        raise ValueError("t_grid must contain positive times")
    seqs = DerivedSequences(model)
    zero_start = model.d_zero_tail_start()
    report = {"t": [], "rate": [], "log_p": [], "se_log": [], "survivors": []}
    if not stratified:
        L = sim_cmj.sample_lifetimes(model, samples, rng, seqs)
        for t in t_grid:
            hits = int(np.sum(L > t))
            if hits < min_survivors:
                raise InsufficientTail(f"{hits} survivors at t={t}")
            p = hits / samples
            lo, hi_ = _wilson(hits, samples)
            report["t"].append(t)
            report["rate"].append(-math.log(p) / t)
            report["log_p"].append(math.log(p))
            report["se_log"].append((math.log(hi_) - math.log(lo)) / 4.0)
            report["survivors"].append(hits)
        return _finish_rate_report(report, model)

    stages = [0.0] + t_grid
    indices = np.zeros(samples, dtype=np.int64)
    log_p = 0.0
    var_log = 0.0
    for j in range(len(t_grid)):
        horizon = stages[j + 1] - stages[j]
        alive_idx = []
        for s in range(samples):
            ok, idx = _advance_chain(seqs, zero_start, int(indices[s]), horizon, rng)
            if ok:
                alive_idx.append(idx)
        k_surv = len(alive_idx)
        if k_surv < min_survivors:
            raise InsufficientTail(f"{k_surv} survivors at stage t={stages[j+1]}")
        p_j = k_surv / samples
        log_p += math.log(p_j)
        var_log += (1.0 - p_j) / (p_j * samples)
        t = stages[j + 1]
        report["t"].append(t)
        report["rate"].append(-log_p / t)
        report["log_p"].append(log_p)
        report["se_log"].append(math.sqrt(var_log))
        report["survivors"].append(k_surv)
        # resample survivors back to full strength (memoryless restart)
        picks = rng.integers(0, k_surv, size=samples)
        alive_arr = np.asarray(alive_idx, dtype=np.int64)
        indices = alive_arr[picks]
    return _finish_rate_report(report, model)


def _wilson(hits: int, n: int, zcrit: float = 1.96) -> tuple:
    p = hits / n
    z2 = zcrit * zcrit
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = zcrit * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return max(center - half, 1e-300), min(center + half, 1.0)


def _finish_rate_report(report: dict, model: RateModel) -> dict:
    from .rates import assumption_report

    rep = assumption_report(model)
    d_lim = model.d_limit()
    expected = min(d_lim, rep.R) if math.isfinite(d_lim) else rep.R
    report["expected_rate"] = expected
    report["R"] = rep.R
    report["d_star"] = rep.d_star
    return report


# ---------------------------------------------------------------------------
# Survival with a high degree: direct Monte Carlo against the envelopes
# ---------------------------------------------------------------------------


def survdeg_probability(
    model: RateModel,
    k: int,
    t: float,
    t_prime: float,
    samples: int,
    rng: np.random.Generator,
    x: Optional[float] = None,
) -> dict:
    """Estimate P(D >= k, S_k <= t, S_{D+1} > t') with envelope comparison.

    The envelope e^{-x(t'-t)} P(D>=k) E[1{S_k<=t} e^{x(S_k-t)}] upper
    bounds the probability when d(i) >= x for i >= k, and lower bounds it
    when d(i) <= x there.  When the finite-degree sum converges, the
    probability is sandwiched between P(S_k<=t) and p_inf^2 P(S_k<=t).
    """
    if not (t_prime >= t >= 0):
        raise ValueError("need t' >= t >= 0")
    seqs = DerivedSequences(model)
    from .malthus import OffspringDistribution

    dist = OffspringDistribution(seqs)
    w = np.asarray(seqs.rate_sums(0, k))
    # direct Monte Carlo of the joint event: conditionally on k births the
    # remaining lifetime is independent of the birth offsets
    hits = 0
    chunk = max(1, int(5e6 // max(k, 1)))
    done = 0
    s_hits = 0
    while done < samples:
        m = min(chunk, samples - done)
        gaps = rng.standard_exponential((m, k)) / w
        S_k = gaps.sum(axis=1)
        ok = S_k <= t
        n_ok = int(np.sum(ok))
        s_hits += n_ok
        if n_ok:
            rem = sim_cmj.sample_lifetimes(model, n_ok, rng, seqs, start_index=k)
            hits += int(np.sum(rem > t_prime - S_k[ok]))
        done += m
    p_tail_k = dist.tail(k)
    ph = hits / samples
    estimate = ph * p_tail_k  # D >= k is independent of the gaps
    se = p_tail_k * math.sqrt(max(ph * (1.0 - ph), 1.0 / samples) / samples)
    out = {
        "estimate": estimate,
        "se": se,
        "p_s_le_t": s_hits / samples,
        "p_d_ge_k": p_tail_k,
        "samples": samples,
    }
    if x is not None:
        # E[1{S_k<=t} e^{x(S_k-t)}] by direct Monte Carlo
        vals = np.empty(samples)
        done = 0
        while done < samples:
            m = min(chunk, samples - done)
            gaps = rng.standard_exponential((m, k)) / w
            S_k = gaps.sum(axis=1)
            vals[done : done + m] = np.where(S_k <= t, np.exp(x * (S_k - t)), 0.0)
            done += m
        env = math.exp(-x * (t_prime - t)) * p_tail_k * float(np.mean(vals))
        env_se = math.exp(-x * (t_prime - t)) * p_tail_k * float(np.std(vals) / math.sqrt(samples))
        out["envelope"] = env
        out["envelope_se"] = env_se
        d_from_k = seqs.death_rates(k, k + 4096)
        out["envelope_is_upper"] = bool(np.all(d_from_k >= x - 1e-12))
        out["envelope_is_lower"] = bool(np.all(d_from_k <= x + 1e-12))
    p_inf = dist.p_infinite()
    if p_inf > 0:
        out["theta_lower"] = p_inf * p_inf * (s_hits / samples)
        out["theta_upper"] = s_hits / samples
    return out


# ---------------------------------------------------------------------------
# Monte Carlo identity for the Laplace transform
# ---------------------------------------------------------------------------


def mu_hat_mc_estimate(
    model: RateModel,
    lam: float,
    samples: int,
    rng: np.random.Generator,
    seqs: Optional[DerivedSequences] = None,
) -> tuple:
    """Estimate E[sum_{k<=D} e^{-lam S_k}] vectorised across chains.

    Returns (mean, standard error).  Contributions beyond the index where
    e^{-lam S} is negligible are dropped; the truncation bias is far below
    the Monte Carlo error for lam > 0.
    """
    if lam <= 0:
        raise ValueError("the identity estimator needs lam > 0")
    if seqs is None:
        seqs = DerivedSequences(model)
    zero_start = model.d_zero_tail_start()
    acc = np.zeros(samples)
    times = np.zeros(samples)
    active = np.arange(samples)
    i = 0
    while active.size:
        w_arr, d_arr = seqs.rate_window(i, i + 1)
        w = float(w_arr[0])
        q = float(d_arr[0]) / w
        gaps = rng.standard_exponential(active.size) / w
        times[active] += gaps
        survive = rng.random(active.size) >= q
        if zero_start is not None and i >= zero_start:
            survive[:] = True
        active = active[survive]
        # survivors of the i-th mark give birth to child i+1 at the current time
        contrib = np.exp(-lam * times[active])
        acc[active] += contrib
        # drop chains whose future contributions are negligible (the
        # discarded mass is a certified tail of the transform series)
        active = active[contrib > 1e-12]
        i += 1
    return float(np.mean(acc)), float(np.std(acc, ddof=1) / math.sqrt(samples))
