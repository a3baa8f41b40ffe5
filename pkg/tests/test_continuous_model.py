import math

import numpy as np
import pytest
from scipy import integrate

from cascade_lab import continuous_model as cm
from cascade_lab.continuous_model import Mechanism, RateCurve, RateKind
from cascade_lab.core import BudgetSpec, ParameterError, PublicBelief, logistic

import oracles

SQRT2 = math.sqrt(2.0)
# frozen from oracles.growth_constant_direct
C_1_1 = 0.96878960265636

ALL_MECHS = [
    Mechanism.truthful(1.0),
    Mechanism.constant_flip(0.3, 1.3),
    Mechanism.smooth(1.0, 1.0),
    Mechanism.smooth(0.3, 2.0),
    Mechanism.staircase(1.0, 0.5, 1.0),
    Mechanism.staircase(0.4, 2.0, 0.7),
    Mechanism.hetero_smooth(0.0, 1.0, 1.0),
]


def probs(mech, l, theta):
    lm, lp = cm.report_logprobs(mech, l, theta)
    return math.exp(lm), math.exp(lp)


def test_threshold():
    assert cm.threshold(0.0, 1.0) == 0.0
    assert cm.threshold(2.0, 1.0) == -1.0
    assert cm.threshold(1.0, SQRT2) == pytest.approx(-1.0, abs=1e-15)
    assert cm.threshold(PublicBelief(2.0), 1.0) == -1.0
    with pytest.raises(ParameterError):
        cm.threshold(math.inf, 1.0)


def test_flip_probability_examples():
    sm = Mechanism.smooth(1.0, 1.0)
    assert cm.flip_probability(sm, cm.threshold(0.7, 1.0), 0.7) == 0.5
    assert cm.flip_probability(sm, 1.0, 0.0) == pytest.approx(0.5 * math.exp(-1), abs=1e-15)
    assert cm.flip_probability(Mechanism.truthful(1.0), 0.2, 0.0) == 0.0
    st = Mechanism.staircase(1.0, 0.5, 1.0)
    base = 1 / (1 + math.e)
    assert cm.flip_probability(st, 0.25, 0.0) == pytest.approx(base, abs=1e-15)
    assert cm.flip_probability(st, -0.75, 0.0) == pytest.approx(base / math.e, abs=1e-15)
    # right-closed steps: exactly a away is still step 0
    assert cm.flip_probability(st, 0.5, 0.0) == pytest.approx(base, abs=1e-15)
    with pytest.raises(ParameterError):
        cm.flip_probability(Mechanism.hetero_smooth(0, 1, 1.0), 0.1, 0.0)


def test_mechanism_validation():
    with pytest.raises(ParameterError):
        Mechanism.constant_flip(0.6, 1.0)
    with pytest.raises(ParameterError):
        Mechanism.smooth(0.0, 1.0)
    with pytest.raises(ParameterError):
        Mechanism.smooth(math.inf, 1.0)
    with pytest.raises(ParameterError):
        Mechanism.staircase(1.0, 0.0, 1.0)
    assert Mechanism.from_budget(BudgetSpec.infinite(), 1.0).kind is cm.MechanismKind.TRUTHFUL
    assert Mechanism.from_budget(BudgetSpec.uniform(0, 1), 1.0).kind is cm.MechanismKind.HETERO_SMOOTH


@pytest.mark.parametrize("mech", ALL_MECHS, ids=lambda m: m.describe())
def test_normalization(mech):
    for l in np.linspace(-20, 20, 17):
        for theta in (-1, 1):
            pm, pp = probs(mech, l, theta)
            assert pm + pp == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("mech", ALL_MECHS, ids=lambda m: m.describe())
def test_reflection_symmetry(mech):
    for l in np.linspace(-15, 15, 13):
        assert probs(mech, l, 1)[1] == pytest.approx(probs(mech, -l, -1)[0], abs=1e-12)
        assert cm.llr_update(mech, l, 1).l == pytest.approx(-cm.llr_update(mech, -l, -1).l, abs=1e-10)


@pytest.mark.parametrize("mech", ALL_MECHS[2:], ids=lambda m: m.describe())
def test_martingale_identity(mech):
    for l in np.linspace(-10, 10, 9):
        plus = probs(mech, l, 1)
        minus = probs(mech, l, -1)
        total = sum(p / q * q for p, q in zip(plus, minus))
        assert total == pytest.approx(1.0, abs=1e-12)


def test_smooth_closed_form_matches_quadrature():
    for eps, sigma, l in [(1.0, 1.0, 0.0), (0.5, SQRT2, 2.0), (2.0, 0.5, -3.0), (0.1, 3.0, 0.7)]:
        mech = Mechanism.smooth(eps, sigma)
        for theta in (-1, 1):
            for x in (-1, 1):
                ref = oracles.smooth_report_prob(eps, sigma, l, theta, x)
                assert cm.action_likelihood(mech, x, l, theta) == pytest.approx(ref, abs=1e-10)


def test_staircase_closed_form_matches_quadrature():
    for eps, a, sigma, l in [(1.0, 0.5, 1.0, 0.3), (0.4, 2.0, 0.7, -1.0), (3.0, 0.1, 1.0, 5.0)]:
        mech = Mechanism.staircase(eps, a, sigma)
        for theta in (-1, 1):
            ref = oracles.staircase_report_prob(eps, a, sigma, l, theta, 1)
            assert cm.action_likelihood(mech, 1, l, theta) == pytest.approx(ref, abs=1e-10)


def test_smooth_limit_is_certain():
    mech = Mechanism.smooth(1.0, 1.0)
    assert cm.action_likelihood(mech, -1, -60.0, -1) == pytest.approx(1.0, abs=1e-12)


def test_llr_update_matches_quadrature():
    mech = Mechanism.smooth(1.0, 1.0)
    ref = math.log(oracles.smooth_report_prob(1, 1, 0, 1, 1) / oracles.smooth_report_prob(1, 1, 0, -1, 1))
    assert cm.llr_update(mech, 0.0, 1).l == pytest.approx(ref, abs=1e-9)
    with pytest.raises(ParameterError):
        cm.llr_update(mech, 0.0, 0)


@pytest.mark.parametrize("mech", ALL_MECHS, ids=lambda m: m.describe())
def test_update_sign_lemma(mech):
    # a +1 report never lowers the belief, so a belief at or above 1/2 stays there
    for l in np.linspace(-30, 30, 61):
        up = cm.llr_update(mech, l, 1).l
        down = cm.llr_update(mech, l, -1).l
        assert up >= l and down <= l
        if l >= 0:
            assert up >= 0 and logistic(up) >= 0.5
        if l <= 0:
            assert down <= 0 and logistic(down) <= 0.5


def test_informativeness_smooth():
    for eps in (0.05, 0.5, 1.0, 3.0):
        for sigma in (0.5, 1.0, 2.0):
            mech = Mechanism.smooth(eps, sigma)
            for l in np.linspace(-12, 12, 25):
                # log domain keeps the comparison strict where both round to 1
                assert cm.report_logprobs(mech, l, 1)[0] < cm.report_logprobs(mech, l, -1)[0]


def test_staircase_sandwich():
    for eps, a in [(1.0, 0.5), (0.3, 2.0), (2.0, 1.0)]:
        mech = Mechanism.staircase(eps, a, 1.0)
        s = np.linspace(-10, 10, 10_000)
        d = np.abs(s - cm.threshold(0.4, 1.0))
        u = cm.flip_probability(mech, s, 0.4)
        decay = np.exp(-(eps / a) * d)
        assert np.all(decay / (1 + math.exp(eps)) <= u * (1 + 1e-12))
        assert np.all(u <= math.exp(eps) / (1 + math.exp(eps)) * decay * (1 + 1e-12))


def test_asymptotic_increment():
    assert cm.asymptotic_increment(1.0, 1.0, 0.0) == pytest.approx(1.937579, abs=1e-6)
    assert cm.asymptotic_increment(1.0, 1.0, 0.0) == pytest.approx(0.5 * (math.exp(1.5) - math.exp(-0.5)), rel=1e-14)
    for eps, sigma, l in [(1.0, 1.0, 3.0), (0.5, SQRT2, 10.0)]:
        shift = 2 / (eps * sigma**2) * math.log(2)
        assert cm.asymptotic_increment(eps, sigma, l + shift) == pytest.approx(
            cm.asymptotic_increment(eps, sigma, l) / 2, rel=1e-12
        )


def test_increment_ratio_tends_to_one():
    mech = Mechanism.smooth(1.0, 1.0)
    ratios = [cm.increment_plus(mech, l) / cm.asymptotic_increment(1, 1, l) for l in (10, 20, 30, 40)]
    assert abs(ratios[0] - 1) > abs(ratios[1] - 1) > abs(ratios[2] - 1)
    for l in (30, 35, 40, 50):
        assert abs(cm.increment_plus(mech, l) / cm.asymptotic_increment(1, 1, l) - 1) <= 0.01


def test_growth_constant():
    assert cm.growth_constant(1, 1) == pytest.approx(C_1_1, abs=1e-13)
    assert cm.growth_constant(0.5, SQRT2) == pytest.approx(oracles.growth_constant_direct(0.5, SQRT2), rel=1e-14)
    # the two written forms of the constant are the same number
    s2 = 1.0
    G = 0.5 * (math.exp(1.5) - math.exp(-0.5))
    assert (1 * s2 / 2) * G == pytest.approx(C_1_1, rel=1e-14)


def test_rate_curves():
    assert RateCurve(RateKind.UPPER_BOUND_SQRT, 1.0)(math.e) == pytest.approx(2.0, abs=1e-14)
    f = RateCurve(RateKind.HOMOGENEOUS_LOG, 1.0, eps=1.0)
    ratios = [f(n * n) / f(n) for n in (1e2, 1e4, 1e8, 1e16)]
    assert all(abs(b - 2) < abs(a - 2) for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(2, abs=1e-3)
    assert f(100) == pytest.approx(2 * math.log(C_1_1 * 100), rel=1e-14)
    h = RateCurve(RateKind.HETERO_SQRT, 1.0, c_tilde=0.5)
    assert h(100) == pytest.approx(10.0, rel=1e-14)
    assert RateCurve(RateKind.HETERO_SQRT, 2.0).c_tilde == pytest.approx(2 / math.e)
    assert RateCurve(RateKind.NONPRIVATE_SQRT_LOG, 1.0, kappa=2)(math.e**4) == pytest.approx(4.0)
    with pytest.raises(ParameterError):
        f(0)


def test_pufferfish_curve_bounds():
    lo, hi = cm.pufferfish_constant_bounds(1.0, 0.5, 1.0)
    assert hi == pytest.approx(lo * math.e)
    mid = RateCurve(RateKind.PUFFERFISH_LOG, 1.0, eps=1.0, a=0.5)
    assert mid.constant == pytest.approx(0.5 * (lo + hi))
    low = RateCurve(RateKind.PUFFERFISH_LOG, 1.0, eps=1.0, a=0.5, bound="lower")
    assert low(1000) < mid(1000)
    with pytest.raises(ParameterError):
        RateCurve(RateKind.PUFFERFISH_LOG, 1.0, eps=1.0, a=0.5, bound="best")


def test_expected_stopping_series():
    r = cm.expected_stopping_series(2 / 1.5**2, 1.5)
    assert not r.finite and r.value_shape is None
    assert not cm.expected_stopping_series(1.0, 1.5).finite
    assert not cm.expected_stopping_series(1.0, SQRT2).finite
    r = cm.expected_stopping_series(0.5, SQRT2)
    assert r.finite and r.exponent == pytest.approx(2.0)
    C = oracles.growth_constant_direct(0.5, SQRT2)
    assert r.value_shape == pytest.approx(C**-2 * math.pi**2 / 6, rel=1e-11)
    assert r.value_shape == pytest.approx(C**-2 * oracles.zeta_bruteforce(2.0, 10**6), rel=1e-6)


def test_pufferfish_series():
    for eps, sigma in [(0.5, SQRT2), (0.3, 1.0)]:
        assert cm.pufferfish_stopping_series(eps, 1.0, sigma).exponent == pytest.approx(
            cm.expected_stopping_series(eps, sigma).exponent
        )
        assert cm.pufferfish_stopping_series(eps, 2.0, sigma).exponent == pytest.approx(
            2 * cm.pufferfish_stopping_series(eps, 1.0, sigma).exponent
        )
    assert not cm.pufferfish_stopping_series(2 * 0.7 / 1.0, 0.7, 1.0).finite
    assert cm.pufferfish_stopping_series(0.5, 0.7, 1.0).finite


def test_optimal_epsilon_local_minimum_certificate():
    eps, obj = cm.optimal_epsilon(SQRT2, 0.05, 0.99)
    assert obj == pytest.approx(cm.stopping_objective(eps, SQRT2), rel=1e-12)
    assert obj < cm.stopping_objective(eps - 0.1, SQRT2)
    assert obj < cm.stopping_objective(eps + 0.1, SQRT2)


def test_objective_blows_up_at_edge():
    vals = [cm.stopping_objective(1 - d, SQRT2) for d in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert cm.stopping_objective(1.0, SQRT2) == math.inf
    with pytest.raises(ParameterError):
        cm.optimal_epsilon(SQRT2, 0.05, 1.0)
    with pytest.raises(ParameterError):
        cm.optimal_epsilon(SQRT2, 0.5, 0.4)


def _hetero_quad(x, l, theta, lo, hi, sigma):
    f = lambda e: cm.action_likelihood(Mechanism.smooth(e, sigma), x, l, theta) if e > 0 else (
        cm.action_likelihood(Mechanism.smooth(1e-300, sigma), x, l, theta)
    )
    val, _ = integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val / (hi - lo)


def test_hetero_likelihood_matches_quadrature():
    budget = BudgetSpec.uniform(0, 1)
    for l, theta in [(0.0, 1), (3.0, -1), (-8.0, 1), (25.0, -1)]:
        got = cm.hetero_action_likelihood(1, l, theta, budget, 1.0)
        assert got == pytest.approx(_hetero_quad(1, l, theta, 0, 1, 1.0), abs=1e-10)
        other = cm.hetero_action_likelihood(-1, l, theta, budget, 1.0)
        assert got + other == pytest.approx(1.0, abs=1e-10)
        assert got == pytest.approx(cm.hetero_action_likelihood(-1, -l, -theta, budget, 1.0), abs=1e-10)


def test_hetero_degenerate_budget():
    for d in (1e-2, 1e-4):
        got = cm.hetero_action_likelihood(1, 1.5, -1, BudgetSpec.uniform(0.7, 0.7 + d), 1.0)
        ref = cm.action_likelihood(Mechanism.smooth(0.7, 1.0), 1, 1.5, -1)
        assert abs(got - ref) < d
    with pytest.raises(ParameterError):
        cm.hetero_action_likelihood(1, 0.0, 1, BudgetSpec.fixed(1.0), 1.0)


def test_uniform_mgf_identity():
    for sigma, l in [(1.0, 2.0), (1.0, 40.0), (0.5, 3.0)]:
        c = -(sigma**2) * l / 2
        assert cm.uniform_mgf(c) == pytest.approx((1 - math.exp(c)) / (-c), abs=1e-12)
    assert cm.uniform_mgf(0.0) == 1.0
