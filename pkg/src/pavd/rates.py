"""Birth/death rate sequences and the prefix-sum machinery derived from them.

A rate model pairs a birth sequence ``b`` (positive) with a death sequence
``d`` (non-negative), each given as a parametric family with optional
finite overrides.  All asymptotic classification (series divergence,
regime tests) is decided from family metadata, never from finite numeric
evidence.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

__all__ = [
    "Constant",
    "Affine",
    "Power",
    "Table",
    "RateModel",
    "DerivedSequences",
    "RegimeReport",
    "AlphaUndefined",
    "OutOfRange",
    "Uncertified",
    "IndexBudgetExceeded",
    "rate_at",
    "derived_sequence",
    "phi1_inverse",
    "k_transform",
    "infimum_rate",
    "assumption_report",
    "model_from_json",
    "model_to_json",
]

HOLDS = "holds"
FAILS = "fails"
UNKNOWN = "unknown"

RICH_ARE_OLD = "RichAreOld"
RICH_DIE_YOUNG = "RichDieYoung"
BOUNDARY = "Boundary"
UNKNOWN_REGIME = "Unknown"


class AlphaUndefined(ValueError):
    """alpha requires a declared limit of d or a convergent finite-degree sum."""


class OutOfRange(ValueError):
    """Argument exceeds the certified supremum of the sequence."""


class Uncertified(ValueError):
    """The tail admits no monotone or lower-bound certificate."""


class IndexBudgetExceeded(RuntimeError):
    """A derived-sequence request would memoise past the configured budget.

    Reachable through the inverse of slowly growing prefix sums (for
    logarithmic growth the index is exponential in the argument)."""


# ---------------------------------------------------------------------------
# Rate families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Affine:
    slope: float
    intercept: float


@dataclass(frozen=True)
class Power:
    scale: float
    exponent: float


@dataclass(frozen=True)
class Table:
    values: tuple
    tail: Union[Constant, Affine, Power]


Family = Union[Constant, Affine, Power, Table]


def _family_at(fam: Family, idx: np.ndarray) -> np.ndarray:
    x = np.asarray(idx, dtype=float)
    if isinstance(fam, Constant):
        return np.full_like(x, fam.value)
    if isinstance(fam, Affine):
        return fam.slope * x + fam.intercept
    if isinstance(fam, Power):
        return fam.scale * (x + 1.0) ** fam.exponent
    out = np.asarray(_family_at(fam.tail, idx), dtype=float).copy()
    ii = np.asarray(idx, dtype=np.int64)
    m = len(fam.values)
    mask = ii < m
    if np.any(mask):
        out[mask] = np.asarray(fam.values, dtype=float)[ii[mask]]
    return out


def _tail_family(fam: Family) -> Family:
    return fam.tail if isinstance(fam, Table) else fam


def _limit(fam: Family) -> float:
    t = _tail_family(fam)
    if isinstance(t, Constant):
        return t.value
    if isinstance(t, Affine):
        return math.inf if t.slope > 0 else t.intercept
    return math.inf if t.exponent > 0 else t.scale


def _exponent(fam: Family) -> float:
    """Polynomial growth exponent of the tail (0 for bounded families)."""
    t = _tail_family(fam)
    if isinstance(t, Constant):
        return 0.0
    if isinstance(t, Affine):
        return 1.0 if t.slope > 0 else 0.0
    return t.exponent if t.scale > 0 else 0.0


def _prefix_len(fam: Family) -> int:
    return len(fam.values) if isinstance(fam, Table) else 0


def _is_zero_tail(fam: Family) -> bool:
    """True when the family is exactly zero beyond a finite prefix."""
    t = _tail_family(fam)
    if isinstance(t, Constant):
        return t.value == 0.0
    if isinstance(t, Affine):
        return t.slope == 0.0 and t.intercept == 0.0
    return t.scale == 0.0


def _validate_family(fam: Family, name: str, strictly_positive: bool) -> None:
    def check(v, what):
        ok = v > 0 if strictly_positive else v >= 0
        if not ok:
            raise ValueError(f"{name}: {what} = {v} out of range")

    if isinstance(fam, Constant):
        check(fam.value, "constant value")
    elif isinstance(fam, Affine):
        if fam.slope < 0:
            raise ValueError(f"{name}: negative slope")
        check(fam.intercept, "intercept")
    elif isinstance(fam, Power):
        if fam.exponent < 0:
            raise ValueError(f"{name}: negative exponent")
        check(fam.scale, "scale")
    elif isinstance(fam, Table):
        for j, v in enumerate(fam.values):
            check(v, f"table value at index {j}")
        _validate_family(fam.tail, f"{name}.tail", strictly_positive)
    else:
        raise TypeError(f"{name}: unknown family {fam!r}")


# ---------------------------------------------------------------------------
# RateModel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateModel:
    """Immutable pair of rate sequences with finite overrides and metadata.

    ``b(i) > 0`` for all i and ``d(i) >= 0``; overrides patch finitely many
    indices on top of the family values.  ``d_star`` and ``b_to_infinity``
    are derived from the tail families when not declared, and validated
    against them when they are.
    """

    b: Family
    d: Family
    b_overrides: dict = field(default_factory=dict)
    d_overrides: dict = field(default_factory=dict)
    d_star: Optional[float] = None
    b_to_infinity: Optional[bool] = None

    def __post_init__(self):
        _validate_family(self.b, "b", strictly_positive=True)
        _validate_family(self.d, "d", strictly_positive=False)
        for k, v in self.b_overrides.items():
            if k < 0 or v <= 0:
                raise ValueError(f"b override ({k}: {v}) invalid")
        for k, v in self.d_overrides.items():
            if k < 0 or v < 0:
                raise ValueError(f"d override ({k}: {v}) invalid")
        tail_limit = _limit(self.d)
        if self.d_star is not None:
            if not math.isfinite(tail_limit) or not math.isclose(
                self.d_star, tail_limit, rel_tol=1e-12, abs_tol=1e-12
            ):
                raise ValueError(
                    f"declared d_star={self.d_star} does not match tail limit {tail_limit}"
                )
        elif math.isfinite(tail_limit):
            object.__setattr__(self, "d_star", tail_limit)
        b_div = _limit(self.b) == math.inf
        if self.b_to_infinity is None:
            object.__setattr__(self, "b_to_infinity", b_div)
        elif self.b_to_infinity != b_div:
            raise ValueError("declared b_to_infinity contradicts the b family")

    # -- evaluation ----------------------------------------------------------

    def rate(self, which: str, i: int) -> float:
        """Override value if present, else family value.  Total function."""
        fam, ov = (self.b, self.b_overrides) if which == "birth" else (self.d, self.d_overrides)
        if i in ov:
            return float(ov[i])
        return float(_family_at(fam, np.asarray([i]))[0])

    def rates(self, which: str, lo: int, hi: int) -> np.ndarray:
        """Vectorised rates on ``[lo, hi)`` with overrides applied."""
        fam, ov = (self.b, self.b_overrides) if which == "birth" else (self.d, self.d_overrides)
        out = np.asarray(_family_at(fam, np.arange(lo, hi, dtype=np.int64)), dtype=float)
        for k, v in ov.items():
            if lo <= k < hi:
                out[k - lo] = v
        return out

    # -- asymptotic metadata ---------------------------------------------------

    def irregular_end(self) -> int:
        """First index beyond which both sequences follow their tail families."""
        m = max(_prefix_len(self.b), _prefix_len(self.d))
        if self.b_overrides:
            m = max(m, max(self.b_overrides) + 1)
        if self.d_overrides:
            m = max(m, max(self.d_overrides) + 1)
        return m

    def b_exponent(self) -> float:
        return _exponent(self.b)

    def d_exponent(self) -> float:
        return 0.0 if _is_zero_tail(self.d) else _exponent(self.d)

    def d_limit(self) -> float:
        """Limit of d(i) as i grows (possibly inf); exists for every builtin tail."""
        return _limit(self.d)

    def d_zero_tail_start(self) -> Optional[int]:
        """Index from which d is exactly zero, or None if d never vanishes."""
        if not _is_zero_tail(self.d):
            return None
        span = max(_prefix_len(self.d), self.irregular_end(), 1)
        vals = self.rates("death", 0, span)
        nz = np.nonzero(vals)[0]
        return int(nz[-1]) + 1 if nz.size else 0


def rate_at(model: RateModel, which: str, i: int) -> float:
    """Rate value ``b(i)`` or ``d(i)`` including overrides."""
    if i < 0:
        raise ValueError("index must be non-negative")
    return model.rate(which, i)


# ---------------------------------------------------------------------------
# Derived prefix sums
# ---------------------------------------------------------------------------


class _Snapshot:
    """Immutable bundle of prefix arrays covering indices [0, m)."""

    __slots__ = ("m", "w", "b", "d", "phi1", "phi2", "rho1", "rho2", "alpha", "dbar")

    def __init__(self, m, w, b, d, phi1, phi2, rho1, rho2, alpha, dbar):
        self.m = m
        self.w = w
        self.b = b
        self.d = d
        self.phi1 = phi1
        self.phi2 = phi2
        self.rho1 = rho1
        self.rho2 = rho2
        self.alpha = alpha
        self.dbar = dbar


class DerivedSequences:
    """Memoised prefix sums phi1, phi2, rho1, rho2, alpha plus running sup of d.

    Prefix arrays use the convention ``phi1[k] = sum_{i<k} 1/(b(i)+d(i))``,
    so index k of the array is the exact k-term sum.  Growth is
    single-writer under a lock; readers pick up an immutable snapshot, so
    concurrent reads always see consistent prefixes.
    """

    def __init__(self, model: RateModel, initial: int = 1024, max_index: int = 1 << 23):
        self.model = model
        self.max_index = max_index
        self._lock = threading.Lock()
        self._snap = self._extended(None, max(16, initial))

    def _extended(self, old: Optional[_Snapshot], new_m: int) -> _Snapshot:
        old_m = old.m if old is not None else 0
        b_new = self.model.rates("birth", old_m, new_m)
        d_new = self.model.rates("death", old_m, new_m)
        w_new = b_new + d_new
        inv = 1.0 / w_new
        q = d_new * inv

        def extend(prev, terms):
            if prev is None:
                out = np.empty(len(terms) + 1)
                out[0] = 0.0
                out[1:] = np.cumsum(terms)
            else:
                out = np.empty(len(prev) + len(terms))
                out[: len(prev)] = prev
                out[len(prev):] = prev[-1] + np.cumsum(terms)
            return out

        phi1 = extend(old.phi1 if old else None, inv)
        phi2 = extend(old.phi2 if old else None, inv * inv)
        rho1 = extend(old.rho1 if old else None, q)
        rho2 = extend(old.rho2 if old else None, q * q)
        d_star = self.model.d_star
        alpha = None
        if d_star is not None:
            alpha = extend(old.alpha if old else None, (d_new - d_star) * inv)
        dbar_new = np.maximum.accumulate(d_new)
        if old is not None:
            w = np.concatenate([old.w, w_new])
            b = np.concatenate([old.b, b_new])
            d = np.concatenate([old.d, d_new])
            np.maximum(dbar_new, old.dbar[-1] if old_m else 0.0, out=dbar_new)
            dbar = np.concatenate([old.dbar, dbar_new])
        else:
            w, b, d, dbar = w_new, b_new, d_new, dbar_new
        return _Snapshot(new_m, w, b, d, phi1, phi2, rho1, rho2, alpha, dbar)

    def ensure(self, k: int) -> _Snapshot:
        """Return a snapshot covering index k (arrays of length > k)."""
        snap = self._snap
        if k < snap.m:
            return snap
        if k >= self.max_index:
            raise IndexBudgetExceeded(
                f"index {k} exceeds the memoisation budget {self.max_index}"
            )
        with self._lock:
            snap = self._snap
            if k < snap.m:
                return snap
            new_m = snap.m
            while new_m <= k:
                new_m *= 2
            self._snap = self._extended(snap, new_m)
            return self._snap

    # -- raw rate access -------------------------------------------------------

    def rate_sums(self, lo: int, hi: int) -> np.ndarray:
        return self.ensure(hi - 1).w[lo:hi] if hi > lo else np.empty(0)

    def rate_window(self, lo: int, hi: int) -> tuple:
        """(b+d, d) on [lo, hi) without growing the memoised prefix.

        Deep chain excursions need rates at indices far beyond any prefix
        sum; serving them from the family closed forms keeps the
        memoisation budget for the quantities that genuinely accumulate.
        """
        snap = self._snap
        if hi <= snap.m:
            return snap.w[lo:hi], snap.d[lo:hi]
        b = self.model.rates("birth", lo, hi)
        d = self.model.rates("death", lo, hi)
        return b + d, d

    def birth_rates(self, lo: int, hi: int) -> np.ndarray:
        return self.ensure(hi - 1).b[lo:hi] if hi > lo else np.empty(0)

    def death_rates(self, lo: int, hi: int) -> np.ndarray:
        return self.ensure(hi - 1).d[lo:hi] if hi > lo else np.empty(0)

    # -- interpolated evaluation -------------------------------------------------

    def _interp(self, arr_name: str, t: float) -> float:
        if t < 0:
            raise ValueError("t must be non-negative")
        k = int(math.floor(t))
        frac = t - k
        snap = self.ensure(k)
        arr = getattr(snap, arr_name)
        exact = float(arr[k])
        if frac == 0.0:
            return exact
        # the continuous extension integrates the floor of the argument
        if arr_name == "phi1":
            slope = 1.0 / snap.w[k]
        elif arr_name == "phi2":
            slope = 1.0 / snap.w[k] ** 2
        elif arr_name == "rho1":
            slope = snap.d[k] / snap.w[k]
        elif arr_name == "rho2":
            slope = (snap.d[k] / snap.w[k]) ** 2
        else:
            slope = (snap.d[k] - self.model.d_star) / snap.w[k]
        return exact + frac * slope

    def phi1(self, t: float) -> float:
        return self._interp("phi1", t)

    def phi2(self, t: float) -> float:
        return self._interp("phi2", t)

    def rho1(self, t: float) -> float:
        return self._interp("rho1", t)

    def rho2(self, t: float) -> float:
        return self._interp("rho2", t)

    def alpha(self, t: float) -> float:
        """alpha(k) = sum (d(i)-d*)/(b(i)+d(i)); equals rho1 when rho1 converges."""
        if self.model.d_star is not None:
            return self._interp("alpha", t)
        if _finite_degree_verdict(self.model) == FAILS:
            return self._interp("rho1", t)
        raise AlphaUndefined("no declared d* and divergence of rho1 unknown")

    def dbar(self, i: int) -> float:
        """Running supremum of d over indices <= i."""
        return float(self.ensure(i).dbar[i])

    # -- inverse and transforms ---------------------------------------------------

    def phi1_upper_estimate(self, m: Optional[int] = None) -> float:
        """Certified upper bound on sup phi1 (inf when (N-E) holds)."""
        if _non_explosion_verdict(self.model) == HOLDS:
            return math.inf
        if m is None:
            m = max(self.model.irregular_end() + 1, 4096)
        snap = self.ensure(m)
        head = float(snap.phi1[m])
        # only a Power tail with exponent > 1 can break (N-E); bound the
        # remaining sum by the integral of the dominant family
        if self.model.b_exponent() > 1.0:
            t = _tail_family(self.model.b)
        else:
            t = _tail_family(self.model.d)
        e, a = t.exponent, t.scale
        return head + (m + 1.0) ** (1.0 - e) / (a * (e - 1.0))

    def phi1_inverse(self, t: float) -> float:
        """Unique s >= 0 with phi1(s) = t on the piecewise-linear extension."""
        if t < 0:
            raise ValueError("t must be non-negative")
        if t == 0.0:
            return 0.0
        bounded = _non_explosion_verdict(self.model) != HOLDS
        snap = self._snap
        while snap.phi1[snap.m] < t:
            if bounded and t > self.phi1_upper_estimate(snap.m):
                raise OutOfRange(f"t={t} exceeds the certified supremum of phi1")
            snap = self.ensure(snap.m * 2)
        k = int(np.searchsorted(snap.phi1, t, side="right")) - 1
        base = float(snap.phi1[k])
        if base == t:
            return float(k)
        return k + (t - base) * float(snap.w[k])

    def K(self, t: float) -> float:
        return self.phi2(self.phi1_inverse(t))

    def K_alpha(self, t: float) -> float:
        return self.alpha(self.phi1_inverse(t))

    def infimum_rate(self) -> tuple:
        """R = inf_i (b(i)+d(i)) with the smallest attaining index.

        Scans a prefix of length max(1e4, irregular prefix + 1); builtin
        tail families are non-decreasing beyond the prefix, which
        certifies the scan covers the infimum.
        """
        scan = max(10_000, self.model.irregular_end() + 1)
        snap = self.ensure(scan)
        w = snap.w[:scan]
        idx = int(np.argmin(w))
        r = float(w[idx])
        if float(snap.w[scan]) < r:
            raise Uncertified("tail dips below the scanned prefix; no certificate")
        return r, idx


def derived_sequence(seqs: DerivedSequences, kind: str, t: float) -> float:
    """Evaluate phi1/phi2/rho1/rho2/alpha at t >= 0 with linear interpolation."""
    fn = {
        "phi1": seqs.phi1,
        "phi2": seqs.phi2,
        "rho1": seqs.rho1,
        "rho2": seqs.rho2,
        "alpha": seqs.alpha,
    }[kind]
    return fn(t)


def phi1_inverse(seqs: DerivedSequences, t: float) -> float:
    return seqs.phi1_inverse(t)


def k_transform(seqs: DerivedSequences, kind: str, t: float) -> float:
    if kind == "K":
        return seqs.K(t)
    if kind == "K_alpha":
        return seqs.K_alpha(t)
    raise ValueError(f"unknown transform {kind!r}")


def infimum_rate(seqs: DerivedSequences) -> tuple:
    return seqs.infimum_rate()


# ---------------------------------------------------------------------------
# Assumption verdicts and regime classification
# ---------------------------------------------------------------------------


def _non_explosion_verdict(model: RateModel) -> str:
    # sum 1/(b+d) = inf  iff  the growth exponent of b+d is at most 1
    e = max(model.b_exponent(), model.d_exponent())
    return HOLDS if e <= 1.0 else FAILS


def _diverging_variance_verdict(model: RateModel) -> str:
    e = max(model.b_exponent(), model.d_exponent())
    return HOLDS if e <= 0.5 else FAILS


def _finite_degree_verdict(model: RateModel) -> str:
    # sum d/(b+d) diverges unless d dies out or b outgrows d by more than one power
    if _is_zero_tail(model.d):
        return FAILS
    eb, ed = model.b_exponent(), model.d_exponent()
    if ed >= eb:
        return HOLDS
    return HOLDS if eb - ed <= 1.0 else FAILS


@dataclass(frozen=True)
class RegimeReport:
    non_explosion: str
    diverging_variance: str
    finite_degree: str
    R: float
    attained_at: Optional[int]
    d_star: Optional[float]
    regime: str

    def as_dict(self) -> dict:
        return {
            "N-E": self.non_explosion,
            "D-V": self.diverging_variance,
            "F-D": self.finite_degree,
            "R": self.R,
            "attained_at": self.attained_at,
            "d_star": self.d_star,
            "regime": self.regime,
        }


def assumption_report(model: RateModel) -> RegimeReport:
    """Assumption verdicts plus the rich-are-old / rich-die-young dichotomy."""
    seqs = DerivedSequences(model)
    r, at = seqs.infimum_rate()
    fd = _finite_degree_verdict(model)
    d_lim = model.d_limit()  # builtin tails are monotone: liminf d == d_lim
    if fd == FAILS:
        regime = RICH_ARE_OLD
    elif d_lim > r:
        regime = RICH_DIE_YOUNG
    elif d_lim < r:
        regime = RICH_ARE_OLD
    else:
        regime = BOUNDARY
    return RegimeReport(
        non_explosion=_non_explosion_verdict(model),
        diverging_variance=_diverging_variance_verdict(model),
        finite_degree=fd,
        R=r,
        attained_at=at,
        d_star=model.d_star,
        regime=regime,
    )


# ---------------------------------------------------------------------------
# JSON serialisation
# ---------------------------------------------------------------------------

_FAMILY_KEYS = {
    "constant": {"value"},
    "affine": {"slope", "intercept"},
    "power": {"scale", "exponent"},
    "table": {"values", "tail"},
}


def _family_to_json(fam: Family) -> dict:
    if isinstance(fam, Constant):
        return {"family": "constant", "value": fam.value}
    if isinstance(fam, Affine):
        return {"family": "affine", "slope": fam.slope, "intercept": fam.intercept}
    if isinstance(fam, Power):
        return {"family": "power", "scale": fam.scale, "exponent": fam.exponent}
    return {"family": "table", "values": list(fam.values), "tail": _family_to_json(fam.tail)}


def _family_from_json(obj: dict, name: str) -> Family:
    if not isinstance(obj, dict) or "family" not in obj:
        raise ValueError(f"{name}: expected a family object with a 'family' key")
    kind = obj["family"]
    if kind not in _FAMILY_KEYS:
        raise ValueError(f"{name}: unknown family {kind!r}")
    extra = set(obj) - _FAMILY_KEYS[kind] - {"family", "overrides"}
    if extra:
        raise ValueError(f"{name}: unknown keys {sorted(extra)}")
    if kind == "constant":
        return Constant(float(obj["value"]))
    if kind == "affine":
        return Affine(float(obj["slope"]), float(obj["intercept"]))
    if kind == "power":
        return Power(float(obj["scale"]), float(obj["exponent"]))
    tail = _family_from_json(obj["tail"], f"{name}.tail")
    return Table(tuple(float(v) for v in obj["values"]), tail)


def model_to_json(model: RateModel) -> dict:
    out = {"b": _family_to_json(model.b), "d": _family_to_json(model.d)}
    if model.b_overrides:
        out["b"]["overrides"] = {str(k): v for k, v in sorted(model.b_overrides.items())}
    if model.d_overrides:
        out["d"]["overrides"] = {str(k): v for k, v in sorted(model.d_overrides.items())}
    if model.d_star is not None:
        out["d_star"] = model.d_star
    if model.b_to_infinity is not None:
        out["b_to_infinity"] = model.b_to_infinity
    return out


def model_from_json(obj: Union[dict, str]) -> RateModel:
    if isinstance(obj, str):
        obj = json.loads(obj)
    extra = set(obj) - {"b", "d", "d_star", "b_to_infinity"}
    if extra:
        raise ValueError(f"unknown model keys {sorted(extra)}")
    if "b" not in obj or "d" not in obj:
        raise ValueError("model JSON requires 'b' and 'd'")

    def overrides(spec: dict, name: str) -> dict:
        ov = spec.get("overrides", {})
        try:
            return {int(k): float(v) for k, v in ov.items()}
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{name}: bad overrides {ov!r}") from exc

    b = _family_from_json(obj["b"], "b")
    d = _family_from_json(obj["d"], "d")
    return RateModel(
        b=b,
        d=d,
        b_overrides=overrides(obj["b"], "b"),
        d_overrides=overrides(obj["d"], "d"),
        d_star=obj.get("d_star"),
        b_to_infinity=obj.get("b_to_infinity"),
    )


# ---------------------------------------------------------------------------
# Reference fixtures (the worked example models)
# ---------------------------------------------------------------------------


def rao_model() -> RateModel:
    """b = (1,2,3,...), d = (1, 2, 3/2, 3/2, ...): rich are old."""
    return RateModel(b=Affine(1.0, 1.0), d=Table((1.0, 2.0), Constant(1.5)))


def rdy1_model() -> RateModel:
    """The rich-are-old fixture with d(0) lowered to 1/4: rich die young."""
    return RateModel(
        b=Affine(1.0, 1.0),
        d=Table((1.0, 2.0), Constant(1.5)),
        d_overrides={0: 0.25},
    )


def rdy2_model() -> RateModel:
    """The rich-are-old fixture with b(0) lowered to 1/4: rich die young."""
    return RateModel(
        b=Affine(1.0, 1.0),
        d=Table((1.0, 2.0), Constant(1.5)),
        b_overrides={0: 0.25},
    )


def constant_model(c: float, d: float = 1.0) -> RateModel:
    """Constant birth rate c and constant death rate d."""
    return RateModel(b=Constant(c), d=Constant(d))
