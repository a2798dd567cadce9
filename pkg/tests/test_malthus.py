import math

import numpy as np
import pytest

from pavd import analysis, malthus, rates, sim_cmj
from pavd.malthus import (
    NoBracket,
    OffspringDistribution,
    Subcritical,
    lambda_underline,
    limiting_degree_distribution,
    mu_hat,
    predicted_constants,
    solve_malthusian,
)
from pavd.rates import Affine, Constant, DerivedSequences, Power, RateModel, Table, assumption_report


def direct_mu_hat(model, lam, terms):
    """Independent high-precision partial-sum oracle."""
    i = np.arange(terms)
    b = model.rates("birth", 0, terms)
    d = model.rates("death", 0, terms)
    return float(np.sum(np.cumprod(b / (lam + b + d))))


# ---------------------------------------------------------------------------
# mu_hat
# ---------------------------------------------------------------------------


def test_mu_hat_constant_identity(b2d1):
    # closed form c/(lam+1) for b = c, d = 1
    seqs = DerivedSequences(b2d1)
    for lam in (0.5, 1.0, 2.0, 5.0):
        res = mu_hat(seqs, lam, tol=1e-12)
        assert res.is_finite
        assert res.value == pytest.approx(2.0 / (lam + 1.0), abs=1e-10)
    assert mu_hat(seqs, 2.0).value == pytest.approx(2.0 / 3.0, abs=1e-10)


def test_mu_hat_diverges_at_zero_without_death(affine_nodeath):
    assert mu_hat(DerivedSequences(affine_nodeath), 0.0).status == malthus.DIVERGES


def test_mu_hat_affine_against_partial_sum_oracle(affine_nodeath):
    seqs = DerivedSequences(affine_nodeath)
    res = mu_hat(seqs, 2.0, tol=1e-10)
    assert res.is_finite
    oracle = direct_mu_hat(affine_nodeath, 2.0, 1_000_000)
    # oracle truncation: terms ~ 2/k^2, remainder ~ 2e-6
    assert res.value == pytest.approx(oracle, abs=1e-5)
    assert res.value == pytest.approx(1.0, abs=1e-10)  # telescoping exact value


def test_mu_hat_monotone_in_lambda(rao):
    seqs = DerivedSequences(rao)
    vals = [mu_hat(seqs, lam).value for lam in (0.1, 0.5, 1.0, 2.0, 4.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_mu_hat_uncertain_not_produced_for_fixtures(rao, rdy1, b2d1):
    for m in (rao, rdy1, b2d1):
        seqs = DerivedSequences(m)
        for lam in (0.25, 1.0, 3.0):
            assert mu_hat(seqs, lam).is_finite


# ---------------------------------------------------------------------------
# lambda_underline
# ---------------------------------------------------------------------------


def test_lambda_underline_constant(b2d1):
    assert lambda_underline(DerivedSequences(b2d1)) == 0.0


def test_lambda_underline_affine_numeric(affine_nodeath):
    seqs = DerivedSequences(affine_nodeath)
    assert lambda_underline(seqs) == 1.0
    assert mu_hat(seqs, 1.2).is_finite
    assert mu_hat(seqs, 0.9).status == malthus.DIVERGES


def test_lambda_underline_sqrt_power():
    m = RateModel(b=Power(1.0, 0.5), d=Constant(0.0))
    seqs = DerivedSequences(m)
    assert lambda_underline(seqs) == 0.0
    assert mu_hat(seqs, 0.05).is_finite


def test_lambda_underline_affine_with_death():
    # slope 2, d -> 0.5: abscissa at 1.5
    m = RateModel(b=Affine(2.0, 1.0), d=Constant(0.5))
    seqs = DerivedSequences(m)
    assert lambda_underline(seqs) == 1.5
    assert mu_hat(seqs, 1.7).is_finite
    assert mu_hat(seqs, 1.3).status == malthus.DIVERGES


# ---------------------------------------------------------------------------
# solve_malthusian
# ---------------------------------------------------------------------------


def test_solve_constant_rates():
    for c in (2.0, 5.0):
        sol = solve_malthusian(DerivedSequences(rates.constant_model(c)), tol=1e-11)
        assert sol.lambda_star == pytest.approx(c - 1.0, abs=1e-9)
        assert sol.residual <= 1e-11
        assert sol.lambda_underline == 0.0
        assert sol.lambda_star > sol.lambda_underline


def test_solve_rdy1_against_independent_oracle(rdy1):
    sol = solve_malthusian(DerivedSequences(rdy1), tol=1e-12)

    def oracle_root():
        lo, hi = 1e-9, 8.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if direct_mu_hat(rdy1, mid, 1_000_000) > 1.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    assert sol.lambda_star == pytest.approx(oracle_root(), abs=1e-6)


def test_solve_subcritical():
    m = RateModel(b=Constant(0.5), d=Constant(1.0))  # mu_hat(0) = 1/2 < 1
    with pytest.raises(Subcritical):
        solve_malthusian(DerivedSequences(m))


def test_solve_no_bracket_for_explosive():
    m = RateModel(b=Power(1.0, 2.0), d=Constant(1.0))  # diverges for every lam
    with pytest.raises(NoBracket):
        solve_malthusian(DerivedSequences(m))


# ---------------------------------------------------------------------------
# offspring distribution
# ---------------------------------------------------------------------------


def test_offspring_tail_constant(b2d1):
    dist = OffspringDistribution(DerivedSequences(b2d1))
    assert dist.tail(3) == pytest.approx((2.0 / 3.0) ** 3, rel=1e-13)
    assert dist.tail(0) == 1.0
    tails = dist.tail_array(50)
    assert np.all(np.diff(tails) <= 0)


def test_offspring_zero_death(affine_nodeath):
    dist = OffspringDistribution(DerivedSequences(affine_nodeath))
    assert dist.tail(100) == 1.0
    assert dist.p_infinite() == 1.0


def test_offspring_rao_pmf_and_monte_carlo(rao, rng):
    dist = OffspringDistribution(DerivedSequences(rao))
    # b0/(b0+d0) * d1/(b1+d1) = (1/2) * (2/4)
    assert dist.pmf(1) == pytest.approx(0.25, rel=1e-13)
    n = 1_000_000
    counts = sim_cmj.sample_offspring_counts(rao, n, rng, k_cap=32)
    emp = float(np.mean(counts == 1))
    se = math.sqrt(0.25 * 0.75 / n)
    assert abs(emp - 0.25) < 3 * se


def test_pmf_matches_tail_difference(rao, rdy1, b2d1):
    for m in (rao, rdy1, b2d1):
        dist = OffspringDistribution(DerivedSequences(m))
        for k in range(0, 30):
            diff = dist.tail(k) - dist.tail(k + 1)
            assert dist.pmf(k) == pytest.approx(diff, rel=1e-12, abs=1e-15)


def test_telescoping_mass(rao, rdy1, b2d1):
    for m in (rao, rdy1, b2d1):
        dist = OffspringDistribution(DerivedSequences(m))
        for K in (5, 50, 500):
            total = math.fsum(dist.pmf(k) for k in range(K + 1)) + dist.tail(K + 1)
            assert abs(total - 1.0) < 1e-12


def test_p_infinite_positive_when_fd_fails():
    # d nonzero on a prefix then exactly zero
    m = RateModel(b=Affine(1.0, 1.0), d=Table((1.0, 0.5), Constant(0.0)))
    dist = OffspringDistribution(DerivedSequences(m))
    exact = (1.0 / (1.0 + 1.0)) * (2.0 / (2.0 + 0.5))
    assert dist.p_infinite() == pytest.approx(exact, rel=1e-13)
    total = math.fsum(dist.pmf(k) for k in range(100)) + dist.p_infinite()
    assert abs(total - 1.0) < 1e-12


def test_dtail_bound_examples(b2d1, affine_nodeath):
    dist = OffspringDistribution(DerivedSequences(b2d1))
    rep = dist.dtail_bound_check(100)
    assert rep["ok"]
    # hand slack at k=1: log(2/3) <= -(1/3) - 1/18
    lhs = math.log(2.0 / 3.0)
    rhs = -(1.0 / 3.0) - 1.0 / 18.0
    assert lhs <= rhs
    dist0 = OffspringDistribution(DerivedSequences(affine_nodeath))
    rep0 = dist0.dtail_bound_check(50)
    assert rep0["ok"] and rep0["max_slack"] == 0.0  # both sides identically zero


def test_dtail_bound_power_death_sweep():
    m = RateModel(b=Power(1.0, 0.4), d=Constant(0.1))
    rep = OffspringDistribution(DerivedSequences(m)).dtail_bound_check(10_000)
    assert rep["ok"]


# ---------------------------------------------------------------------------
# limiting degree distributions
# ---------------------------------------------------------------------------


def test_limiting_degree_closed_form_constant(b2d1):
    # constant rates: alive and born limits are both geometric(1/2)
    seqs = DerivedSequences(b2d1)
    sol = solve_malthusian(seqs, tol=1e-12)
    dist = OffspringDistribution(seqs)
    pa, tail_a = limiting_degree_distribution(sol, dist, "alive", k_max=20)
    pb, tail_b = limiting_degree_distribution(sol, dist, "born", k_max=20)
    expected = 0.5 ** (np.arange(21) + 1)
    assert np.allclose(pa, expected, rtol=1e-8)
    assert np.allclose(pb, expected, rtol=1e-8)
    assert abs(np.sum(pa) + tail_a - 1.0) < 1e-8


def test_limiting_degree_equal_when_no_death(affine_nodeath):
    seqs = DerivedSequences(affine_nodeath)
    sol = solve_malthusian(seqs, tol=1e-12)
    dist = OffspringDistribution(seqs)
    pa, _ = limiting_degree_distribution(sol, dist, "alive", k_max=40)
    pb, _ = limiting_degree_distribution(sol, dist, "born", k_max=40)
    assert np.allclose(pa, pb, rtol=1e-9, atol=1e-12)


def test_limiting_degree_normalisation(rao, rdy1):
    for m in (rao, rdy1):
        seqs = DerivedSequences(m)
        sol = solve_malthusian(seqs)
        dist = OffspringDistribution(seqs)
        pa, tail = limiting_degree_distribution(sol, dist, "alive", k_max=400, tol=1e-10)
        assert np.all(pa >= 0)
        assert abs(np.sum(pa) + tail - 1.0) < 1e-8


# ---------------------------------------------------------------------------
# Monte Carlo identity for the transform
# ---------------------------------------------------------------------------


def test_mu_hat_monte_carlo_identity(rao, rng):
    seqs = DerivedSequences(rao)
    exact = mu_hat(seqs, 2.0, tol=1e-12).value
    est, se = analysis.mu_hat_mc_estimate(rao, 2.0, 100_000, rng, seqs)
    assert abs(est - exact) < 3 * se


# ---------------------------------------------------------------------------
# predicted constants
# ---------------------------------------------------------------------------


def test_predicted_constants_no_finite_degree():
    # d identically zero with sub-linear power birth rates
    m = RateModel(b=Power(1.0, 0.4), d=Constant(0.0))
    seqs = DerivedSequences(m)
    sol = solve_malthusian(seqs)
    rep = assumption_report(m)
    pc = predicted_constants(sol, seqs, rep, 1e6)
    lam = sol.lambda_star
    assert pc.theorem == "no-finite-degree"
    assert pc.scalings["log_I"]["limit"] == pytest.approx(lam * lam / 2.0)
    assert pc.scalings["log_I"]["scale"] == pytest.approx(seqs.K(math.log(1e6) / lam))
    assert pc.scalings["phi1_maxdeg"]["limit"] == pytest.approx(lam / 2.0)


def test_predicted_constants_b2d1(b2d1):
    seqs = DerivedSequences(b2d1)
    sol = solve_malthusian(seqs, tol=1e-12)
    pc = predicted_constants(sol, seqs, assumption_report(b2d1), 1e6)
    assert pc.exponents["O_exponent"] == pytest.approx(0.5, abs=1e-10)
    assert pc.exponents["I_exponent"] == pytest.approx(1.0 - 1.0 / (4.0 * math.log(2.0)), abs=1e-10)
    assert pc.exponents["maxdeg_over_logn"] == pytest.approx(1.0 / math.log(2.0), abs=1e-10)


def test_predicted_constants_rdy1(rdy1):
    seqs = DerivedSequences(rdy1)
    sol = solve_malthusian(seqs, tol=1e-11)
    pc = predicted_constants(sol, seqs, assumption_report(rdy1), 1e6)
    lam = sol.lambda_star
    assert pc.exponents["O_exponent"] == pytest.approx(1.25 / (lam + 1.25), rel=1e-12)


def test_predicted_constants_rao(rao):
    seqs = DerivedSequences(rao)
    sol = solve_malthusian(seqs)
    pc = predicted_constants(sol, seqs, assumption_report(rao), 1e6)
    lam = sol.lambda_star
    assert pc.theorem == "converging-death"
    assert pc.exponents["O_exponent"] == pytest.approx(1.5 / (lam + 1.5), rel=1e-12)
    assert pc.scalings["log_I"]["limit"] == pytest.approx(lam * (lam + 1.5) / 2.0)
    # the variance transform is bounded for affine birth rates
    assert any("diverging-variance" in note for note in pc.notes)
