import math

import numpy as np
import pytest

from cascade_lab.core import (
    BinaryParams,
    BudgetKind,
    BudgetSpec,
    GaussianParams,
    ParameterError,
    PublicBelief,
    WorldState,
    logistic,
    logit,
)


def test_logit_endpoints_are_sentinels():
    assert logit(0.5) == 0.0
    assert logit(1.0) == math.inf
    assert logit(0.0) == -math.inf


def test_logit_logistic_round_trip():
    assert logit(logistic(3.7)) == pytest.approx(3.7, abs=1e-12)
    for x in np.linspace(-30, 30, 241):
        assert abs(logit(logistic(x)) - x) <= 1e-9


def test_plain_float_logit_accuracy():
    # no stored log-odds: accuracy is limited by how well 1 - pi is represented
    for x in np.linspace(-15, 15, 61):
        assert abs(logit(float(logistic(x))) - x) <= 1e-9


def test_logistic_saturates_without_overflow():
    assert logistic(0.0) == 0.5
    assert logistic(math.inf) == 1.0
    assert logistic(-math.inf) == 0.0
    assert logistic(1000.0) == 1.0
    assert logistic(1e6) == 1.0
    assert logistic(-1e6) == 0.0


def test_logistic_antisymmetry():
    for l in np.linspace(-40, 40, 161):
        assert logistic(-l) == pytest.approx(1.0 - logistic(l), abs=1e-15)


def test_logit_rejects_out_of_range():
    for bad in (-0.1, 1.1, math.nan):
        with pytest.raises(ParameterError):
            logit(bad)


@pytest.mark.parametrize("p", [0.5, 1.0, 0.3, 1.2, math.nan])
def test_binary_params_reject_p(p):
    with pytest.raises(ParameterError):
        BinaryParams(p)


@pytest.mark.parametrize("sigma", [0.0, -1.0, math.nan])
def test_gaussian_params_reject_sigma(sigma):
    with pytest.raises(ParameterError):
        GaussianParams(sigma)


@pytest.mark.parametrize("eps", [0.0, -0.5, math.nan])
def test_fixed_budget_rejects_nonpositive(eps):
    with pytest.raises(ParameterError):
        BudgetSpec.fixed(eps)


def test_budget_constructors():
    assert BudgetSpec.fixed(math.inf).kind is BudgetKind.INFINITE
    u = BudgetSpec.uniform(0, 1)
    assert u.is_distributional
    assert list(u.draw([0.0, 0.5])) == [0.0, 0.5]
    with pytest.raises(ParameterError):
        BudgetSpec.uniform(1, 1)
    with pytest.raises(ParameterError):
        BudgetSpec.uniform(0, math.inf)


def test_world_state_coerce():
    assert WorldState.coerce(-1) is WorldState.MINUS
    assert WorldState.coerce("1") is WorldState.PLUS
    with pytest.raises(ParameterError):
        WorldState.coerce(0)


def test_public_belief():
    b = PublicBelief.from_probability(0.75)
    assert b.l == pytest.approx(math.log(3))
    assert b.pi == pytest.approx(0.75)
    assert PublicBelief(math.inf).is_absorbed
    with pytest.raises(ParameterError):
        PublicBelief(math.nan)
