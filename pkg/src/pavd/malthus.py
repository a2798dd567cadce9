"""Numerical kernel for the analytic side of the model.

Evaluates the Laplace transform of the offspring point-process density as
the product series  sum_k prod_{i<k} b(i)/(lambda+b(i)+d(i)), locates the
Malthusian parameter, and derives the offspring and limiting degree
distributions together with the scaling constants predicted for the
observables of the discrete chain.

Series truncation is always certificate-backed, with three convergent
paths: a geometric tail bound (per-term decay rate bounded away from
zero), an exact gamma-ratio tail for affine birth tails with constant
death tails (where terms decay only polynomially), and a Cauchy
condensation bound for sub-linear birth growth.  Absent a certificate the
result is reported as uncertain rather than guessed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .rates import (
    FAILS,
    HOLDS,
    RICH_DIE_YOUNG,
    Affine,
    Constant,
    DerivedSequences,
    Power,
    RateModel,
    RegimeReport,
    _finite_degree_verdict,
    _is_zero_tail,
    _limit,
    _tail_family,
)

__all__ = [
    "MuHatResult",
    "MalthusianSolution",
    "OffspringDistribution",
    "PredictedAsymptotics",
    "Subcritical",
    "NoBracket",
    "BoundViolated",
    "MissingR",
    "mu_hat",
    "lambda_underline",
    "solve_malthusian",
    "offspring_tail",
    "offspring_pmf",
    "limiting_degree_distribution",
    "predicted_constants",
]


class Subcritical(RuntimeError):
    """mu_hat stays below one for every certifiable lambda."""


class NoBracket(RuntimeError):
    """Finiteness of mu_hat could not be certified anywhere."""


class BoundViolated(AssertionError):
    """The offspring tail exceeded its analytic envelope (implementation bug)."""


class MissingR(ValueError):
    """Third-order centering needs a window function when K_alpha diverges."""


FINITE = "finite"
DIVERGES = "diverges"
UNCERTAIN = "uncertain"


@dataclass(frozen=True)
class MuHatResult:
    status: str
    value: Optional[float] = None
    error_bound: Optional[float] = None
    partial_sum: Optional[float] = None
    terms_used: int = 0

    @property
    def is_finite(self) -> bool:
        return self.status == FINITE


# ---------------------------------------------------------------------------
# series classification from family metadata
# ---------------------------------------------------------------------------


def _leading_coefficient(fam) -> float:
    """Coefficient of the i^exponent term of the tail family."""
    t = _tail_family(fam)
    if isinstance(t, Constant):
        return t.value
    if isinstance(t, Affine):
        return t.slope if t.slope > 0 else t.intercept
    return t.scale


def _affine_tail_params(model: RateModel) -> Optional[tuple]:
    """(slope, intercept) of the b tail when it is exactly affine in i."""
    t = _tail_family(model.b)
    if isinstance(t, Affine) and t.slope > 0:
        return t.slope, t.intercept
    if isinstance(t, Power) and t.exponent == 1.0:
        return t.scale, t.scale  # scale*(i+1) = scale*i + scale
    return None


def _numerator_exponent(model: RateModel, lam: float) -> float:
    # growth exponent of lambda + d(i); a bounded d contributes exponent 0
    if _is_zero_tail(model.d) or math.isfinite(model.d_limit()):
        return 0.0
    return model.d_exponent()


GEOMETRIC = "geometric"
AFFINE_TAIL = "affine-tail"
CONDENSE = "condense"
DIVERGE = "diverge"
BOUNDARY_CLASS = "boundary"


def _series_class(model: RateModel, lam: float) -> str:
    """Classify decay of the term ratio b/(lam+b+d) from family metadata."""
    if lam == 0.0 and _is_zero_tail(model.d):
        return DIVERGE  # every tail ratio is exactly one
    eb = model.b_exponent()
    num = _numerator_exponent(model, lam)
    if num >= eb:
        return GEOMETRIC
    gap = eb - num
    if gap > 1.0:
        return DIVERGE  # log-ratios are summable: terms bounded below
    if gap == 1.0:
        if num > 0:
            pbar = _leading_coefficient(model.d) / _leading_coefficient(model.b)
            if pbar < 1.0:
                return DIVERGE
            if pbar == 1.0:
                return BOUNDARY_CLASS
            return CONDENSE
        p = (lam + model.d_limit()) / _leading_coefficient(model.b)
        if p < 1.0:
            return DIVERGE
        if p == 1.0:
            return BOUNDARY_CLASS
        if _affine_tail_params(model) is not None:
            return AFFINE_TAIL
        return CONDENSE
    return CONDENSE


def _gamma_tail_limit(model: RateModel, lam: float) -> float:
    """Limit of log(1 + (lam+d(i))/b(i)); used in the geometric class."""
    eb = model.b_exponent()
    num = _numerator_exponent(model, lam)
    if num > eb or (num == 0.0 and model.d_limit() == math.inf):
        return math.inf
    if num == eb and eb > 0:
        return math.log1p(_leading_coefficient(model.d) / _leading_coefficient(model.b))
    return math.log1p((lam + model.d_limit()) / _limit(model.b))


# ---------------------------------------------------------------------------
# mu_hat
# ---------------------------------------------------------------------------


def mu_hat(
    seqs: DerivedSequences,
    lam: float,
    tol: float = 1e-10,
    max_terms: int = 1 << 22,
) -> MuHatResult:
    """Evaluate the Laplace-transform series at lam >= 0 in log space.

    The result is Finite with a certified remainder bound, DivergesCertified
    when the terms are certified bounded away from zero, or Uncertain with
    the partial sum when no certificate applies within ``max_terms`` terms.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    model = seqs.model
    klass = _series_class(model, lam)
    if klass == DIVERGE:
        return MuHatResult(status=DIVERGES)

    irregular = model.irregular_end()

    if klass == AFFINE_TAIL:
        # beyond the irregular prefix the rates are exactly b = s*i + m,
        # d = c, and the tail sums in closed form through gamma ratios:
        # sum_{j>K} term_j = term_K * (K + m/s) / (p - 1),  p = (lam+c)/s
        K = max(irregular + 1, 64)
        b = seqs.birth_rates(0, K)
        d = seqs.death_rates(0, K)
        cums = np.cumsum(np.log1p((lam + d) / b))
        total = float(np.sum(np.exp(-cums)))
        s, m = _affine_tail_params(model)
        p = (lam + model.d_limit()) / s
        remainder = math.exp(-float(cums[-1])) * (K + m / s) / (p - 1.0)
        value = total + remainder
        return MuHatResult(FINITE, value=value, error_bound=1e-13 * max(value, 1.0), terms_used=K)

    total = 0.0
    G = 0.0  # cumulative log of the inverse term ratio
    k = 0
    chunk = 256
    # dyadic bookkeeping for the condensation certificate
    window_start = 1
    while window_start < max(64, 2 * (irregular + 1)):
        window_start *= 2
    G_at: dict[int, float] = {}
    last_window = None
    windows_monotone = True
    gamma_inf_limit = _gamma_tail_limit(model, lam) if klass == GEOMETRIC else 0.0

    while k < max_terms:
        hi = min(k + chunk, max_terms)
        b = seqs.birth_rates(k, hi)
        d = seqs.death_rates(k, hi)
        gamma = np.log1p((lam + d) / b)
        cums = G + np.cumsum(gamma)
        total += float(np.sum(np.exp(-cums)))
        G = float(cums[-1])
        p = window_start
        while p <= k:
            p *= 2
        while p <= hi:
            G_at[p] = G - float(np.sum(gamma[p - k:]))
            if p // 2 in G_at:
                w_sum = G_at[p] - G_at[p // 2]
                if last_window is not None and w_sum < last_window - 1e-12:
                    windows_monotone = False
                last_window = w_sum
            p *= 2
        k = hi
        term_k = math.exp(-G)

        if klass == GEOMETRIC:
            scan_n = 512
            bs = seqs.birth_rates(k, k + scan_n)
            ds = seqs.death_rates(k, k + scan_n)
            g_inf = min(float(np.min(np.log1p((lam + ds) / bs))), gamma_inf_limit)
            if g_inf > 0:
                r = math.exp(-g_inf)
                bound = term_k * r / (1.0 - r)
                if bound <= tol:
                    return MuHatResult(FINITE, value=total, error_bound=bound, terms_used=k)
        elif last_window is not None and k in G_at and windows_monotone:
            # Cauchy condensation: sum_{j>=2^L} term_j <= 2^L term_{2^L}/(1-rho)
            rho = 2.0 * math.exp(-last_window)
            if rho < 1.0:
                bound = k * term_k / (1.0 - rho)
                if bound <= tol:
                    return MuHatResult(FINITE, value=total, error_bound=bound, terms_used=k)
        chunk = min(2 * chunk, 1 << 16)

    return MuHatResult(UNCERTAIN, partial_sum=total, terms_used=k)


def lambda_underline(seqs: DerivedSequences) -> Optional[float]:
    """Abscissa of convergence of the transform, in closed form per family.

    math.inf means the series diverges for every lambda; None means no
    closed form is certified.
    """
    model = seqs.model
    eb = model.b_exponent()
    d_lim = model.d_limit()
    if eb < 1.0:
        return 0.0
    if eb == 1.0:
        if d_lim == math.inf:
            return 0.0
        return max(0.0, _leading_coefficient(model.b) - d_lim)
    # eb > 1: lambda never affects convergence
    ed = model.d_exponent() if d_lim == math.inf else 0.0
    if ed >= eb or 0.0 < eb - ed < 1.0:
        return 0.0
    if eb - ed == 1.0:
        pbar = _leading_coefficient(model.d) / _leading_coefficient(model.b)
        if pbar > 1.0:
            return 0.0
        return math.inf if pbar < 1.0 else None
    return math.inf


# ---------------------------------------------------------------------------
# Malthusian parameter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MalthusianSolution:
    lambda_star: float
    residual: float
    lambda_underline: Optional[float]
    evaluations_used: int


def solve_malthusian(
    seqs: DerivedSequences,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> MalthusianSolution:
    """Bisection for the root of the strictly decreasing map lam -> mu_hat(lam)."""
    lu = lambda_underline(seqs)
    if lu is not None and math.isinf(lu):
        raise NoBracket("transform diverges for every lambda")
    evals = 0

    def mh(lam: float) -> MuHatResult:
        nonlocal evals
        evals += 1
        return mu_hat(seqs, lam, tol=tol / 4.0)

    base = lu if lu is not None else 0.0
    hi = max(1.0, 2.0 * base + 1.0)
    for _ in range(80):
        res = mh(hi)
        if res.is_finite and res.value < 1.0:
            break
        hi *= 2.0
    else:
        raise NoBracket("no certified lambda with mu_hat < 1")

    lo = base
    lo_supercritical = False  # saw a finite mu_hat > 1
    lam = residual = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        res = mh(mid)
        if res.is_finite:
            r = abs(res.value - 1.0)
            if r <= tol:
                lam, residual = mid, r
                break
            if res.value > 1.0:
                lo, lo_supercritical = mid, True
            else:
                hi = mid
        else:
            lo = mid  # divergent or uncertain: below the root
        if hi - lo <= 1e-15 * max(1.0, hi):
            res_hi = mh(hi)
            if not lo_supercritical and res_hi.is_finite and res_hi.value < 1.0:
                raise Subcritical("mu_hat < 1 for every certifiable lambda")
            lam, residual = hi, abs(res_hi.value - 1.0)
            break
    if lam is None:
        raise NoBracket("bisection exhausted without meeting the tolerance")
    if lu is not None and not (lam > lu):
        raise Subcritical(f"root {lam} does not exceed the abscissa {lu}")
    return MalthusianSolution(
        lambda_star=lam,
        residual=residual,
        lambda_underline=lu,
        evaluations_used=evals,
    )


# ---------------------------------------------------------------------------
# Offspring distribution
# ---------------------------------------------------------------------------


class OffspringDistribution:
    """Inhomogeneous geometric law of the total offspring count.

    The survival function is the running product of b(i)/(b(i)+d(i)), kept
    in log space.  The mass at infinity is the limit of that product; it is
    positive exactly when the finite-degree sum converges.
    """

    def __init__(self, seqs: DerivedSequences):
        self.seqs = seqs
        self.model = seqs.model
        self._logtail = np.zeros(1)  # logtail[k] = log P(D >= k)

    def _ensure(self, k: int) -> np.ndarray:
        arr = self._logtail
        if k < len(arr):
            return arr
        m = len(arr)
        new_m = m
        while new_m <= k:
            new_m *= 2
        b = self.seqs.birth_rates(m - 1, new_m - 1)
        d = self.seqs.death_rates(m - 1, new_m - 1)
        ext = arr[-1] - np.cumsum(np.log1p(d / b))
        self._logtail = np.concatenate([arr, ext])
        return self._logtail

    def log_tail(self, k: int) -> float:
        return float(self._ensure(k)[k])

    def tail(self, k: int) -> float:
        """P(D >= k) as a log-space product."""
        if k < 0:
            raise ValueError("k must be non-negative")
        return math.exp(self.log_tail(k))

    def pmf(self, k: int) -> float:
        """P(D = k) via the closed form q_k/(p_k+q_k) * prod_{i<k} p_i/(p_i+q_i)."""
        if k < 0:
            raise ValueError("k must be non-negative")
        b = self.model.rate("birth", k)
        d = self.model.rate("death", k)
        return math.exp(self.log_tail(k)) * (d / (b + d))

    def tail_array(self, k_max: int) -> np.ndarray:
        """P(D >= k) for k = 0..k_max."""
        return np.exp(self._ensure(k_max)[: k_max + 1])

    def p_infinite(self) -> float:
        """P(D = infinity); zero iff the finite-degree sum diverges."""
        if _finite_degree_verdict(self.model) == HOLDS:
            return 0.0
        zs = self.model.d_zero_tail_start()
        if zs is not None:
            return self.tail(zs)
        # d persists under a power b with exponent gap > 1: certify the tail sum
        eb, ed = self.model.b_exponent(), self.model.d_exponent()
        gap = eb - ed
        m = max(self.model.irregular_end() + 1, 1 << 14)
        head = self.log_tail(m)
        a_num = self.model.rate("death", m) / m**ed  # d(i)/i^ed non-increasing on the tail
        a_den = _leading_coefficient(self.model.b)
        tail_bound = (a_num / a_den) * (m - 1.0) ** (1.0 - gap) / (gap - 1.0)
        return math.exp(head - 0.5 * tail_bound)

    def dtail_bound_check(self, k_max: int) -> dict:
        """Verify log P(D>=k) <= -rho1(k) - rho2(k)/2 for every k <= k_max."""
        if k_max < 1:
            raise ValueError("k_max must be >= 1")
        logtail = self._ensure(k_max)[: k_max + 1]
        snap = self.seqs.ensure(k_max)
        ks = np.arange(k_max + 1)
        slack = (-snap.rho1[ks] - 0.5 * snap.rho2[ks]) - logtail  # must be >= 0
        worst = int(np.argmin(slack))
        if slack[worst] < -1e-12:
            raise BoundViolated(f"tail bound violated at k={worst} by {-slack[worst]:.3e}")
        return {
            "ok": True,
            "k_max": k_max,
            "min_slack": float(slack[worst]),
            "worst_k": worst,
            "max_slack": float(np.max(slack)),
        }


def offspring_tail(dist: OffspringDistribution, k: int) -> float:
    return dist.tail(k)


def offspring_pmf(dist: OffspringDistribution, k: int) -> float:
    return dist.pmf(k)


# ---------------------------------------------------------------------------
# Limiting degree distributions (characteristic-transform ratios)
# ---------------------------------------------------------------------------


def _log_Lk(seqs: DerivedSequences, lam: float, k_max: int) -> np.ndarray:
    """log transform of the k-th birth time, for k = 0..k_max."""
    w = seqs.rate_sums(0, k_max)
    out = np.zeros(k_max + 1)
    out[1:] = -np.cumsum(np.log1p(lam / w))
    return out


def limiting_degree_distribution(
    sol: MalthusianSolution,
    dist: OffspringDistribution,
    which: str,
    k_max: int = 256,
    tol: float = 1e-10,
) -> tuple:
    """Limiting proportion of individuals with k children, among alive or all.

    Returns (probabilities for k = 0..k_max, mass beyond k_max).  The
    truncation point of the internal sums is pushed until the certified
    tail of the alive transform is below tol.
    """
    if which not in ("alive", "born"):
        raise ValueError("which must be 'alive' or 'born'")
    lam = sol.lambda_star
    K = max(k_max + 1, 64)
    while True:
        logL = _log_Lk(dist.seqs, lam, K + 1)
        logtails = dist._ensure(K + 1)[: K + 2]
        L = np.exp(logL)
        # L_k - L_{k+1} without cancellation: L_k * (1 - L_{k+1}/L_k)
        diff = L[:-1] * -np.expm1(logL[1:] - logL[:-1])
        tails = np.exp(logtails)
        chi_a = tails[: K + 1] * diff / lam
        tail_a = tails[K + 1] * L[K + 1] / lam
        if tail_a <= tol * max(float(np.sum(chi_a)), 1e-300) or K >= 1 << 20:
            break
        K *= 2
    if which == "alive":
        norm = float(np.sum(chi_a)) + tail_a
        probs = chi_a[: k_max + 1] / norm
        return probs, max(float(1.0 - np.sum(probs)), 0.0)
    d = dist.seqs.death_rates(0, K + 1)
    b = dist.seqs.birth_rates(0, K + 1)
    pmf = tails[: K + 1] * (d / (b + d))
    chi_b = pmf * L[: K + 1] + tails[1 : K + 2] * diff
    probs = chi_b[: k_max + 1]
    return probs, max(float(1.0 - np.sum(probs)), 0.0)


# ---------------------------------------------------------------------------
# Predicted scaling constants for the chain observables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredictedAsymptotics:
    regime: str
    theorem: str
    exponents: dict = field(default_factory=dict)
    scalings: dict = field(default_factory=dict)
    notes: tuple = ()

    def as_dict(self) -> dict:
        return {
            "regime": self.regime,
            "theorem": self.theorem,
            "exponents": dict(self.exponents),
            "scalings": {k: dict(v) for k, v in self.scalings.items()},
            "notes": list(self.notes),
        }


def _k_alpha_converges(model: RateModel) -> bool:
    """d attains its limit exactly beyond the prefix, so alpha is a finite sum."""
    return model.d_star is not None and isinstance(_tail_family(model.d), Constant)


def predicted_constants(
    sol: MalthusianSolution,
    seqs: DerivedSequences,
    report: RegimeReport,
    n: float,
    r_func: Optional[Callable[[float], float]] = None,
) -> PredictedAsymptotics:
    """Centerings, normalizers, and limit constants for the observables at n.

    The applicable scaling depends on the regime flags: when the
    finite-degree sum converges the oldest label freezes and the
    largest-degree label scales with the variance transform; converging
    death rates below the minimal total rate give the second-order
    expansions; the rich-die-young regime pins the oldest-label exponent;
    bounded birth rates use the converging-rates constants.
    """
    lam = sol.lambda_star
    model = seqs.model
    logn = math.log(n)
    d_star = report.d_star
    R = report.R
    scalings: dict = {}
    exponents: dict = {}
    notes: list = []

    if report.finite_degree == FAILS:
        if report.diverging_variance != HOLDS:
            notes.append("variance transform bounded: no largest-degree scaling limit")
        Kn = seqs.K(logn / lam)
        scalings["log_I"] = {"limit": lam * lam / 2.0, "center": 0.0, "scale": Kn}
        scalings["phi1_maxdeg"] = {"limit": lam / 2.0, "center": logn / lam, "scale": Kn}
        exponents["O_limit"] = "constant"
        return PredictedAsymptotics(
            regime=report.regime,
            theorem="no-finite-degree",
            exponents=exponents,
            scalings=scalings,
            notes=tuple(notes),
        )

    if report.regime == RICH_DIE_YOUNG:
        exponents["O_exponent"] = R / (lam + R)
        return PredictedAsymptotics(
            regime=report.regime,
            theorem="rich-die-young",
            exponents=exponents,
            notes=("largest-degree label scaling open when death rates diverge",),
        )

    if model.b_exponent() == 0.0 and d_star is not None:
        M = min(1.0, R)
        exponents["O_exponent"] = M / (lam + M)
        if math.isclose(d_star, 1.0, rel_tol=1e-12):
            exponents["I_exponent"] = 1.0 - lam / (2.0 * (lam + 1.0) * math.log(2.0))
            exponents["maxdeg_over_logn"] = 1.0 / math.log(2.0)
        else:
            notes.append("closed-form I/maxdeg constants stated for death rates -> 1 only")
        return PredictedAsymptotics(
            regime=report.regime,
            theorem="converging-rates",
            exponents=exponents,
            notes=tuple(notes),
        )

    # rich are old, diverging b, d -> d* < R
    if d_star is None:
        raise MissingR("no declared limit of d: no centering available")
    if r_func is None:
        if _k_alpha_converges(model):
            def r_func(t, _c=lam / (lam + d_star)):
                return _c * t
        else:
            raise MissingR("K_alpha not certified convergent: supply a window function r")
    ka = seqs.K_alpha(r_func(logn / lam))
    Kn = seqs.K(logn / (lam + d_star))
    center = d_star / (lam + d_star) * logn + lam / (lam + d_star) * ka
    scalings["log_O"] = {"limit": 0.0, "center": center, "scale": Kn}
    scalings["log_I"] = {"limit": lam * (lam + d_star) / 2.0, "center": center, "scale": Kn}
    scalings["phi1_maxdeg"] = {
        "limit": (lam - d_star) / 2.0,
        "center": logn / (lam + d_star) - ka / (lam + d_star),
        "scale": Kn,
    }
    exponents["O_exponent"] = d_star / (lam + d_star)
    if report.diverging_variance != HOLDS:
        notes.append("diverging-variance assumption fails: scaling limits not guaranteed")
    return PredictedAsymptotics(
        regime=report.regime,
        theorem="converging-death",
        exponents=exponents,
        scalings=scalings,
        notes=tuple(notes),
    )
