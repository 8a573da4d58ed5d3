import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regmdp import mdp as core
from regmdp import reduction as rd
from regmdp.regularizers import Regularizer

ENT = Regularizer("shifted-entropy")
L2 = Regularizer("squared-l2")


def test_prop1_examples():
    rule = rd.StoppingRule("prop1")
    assert rd.prop1_certify(1.0, 0.25, rule)
    assert not rd.prop1_certify(1.0, 0.26, rule)
    assert rd.prop1_certify(0.0, 0.0, rd.StoppingRule("prop1", epsilon_hat=0.3))
    with pytest.raises(ValueError):
        rd.prop1_certify(-1.0, 0.0, rule)


def test_prop2_target_examples():
    assert rd.prop2_target(1.0, math.log(4), 0.9, 0) == pytest.approx(10 * math.log(4))
    assert rd.prop2_target(2.0, 1.0, 0.5, 3) == 0.5
    for t in range(30):
        assert rd.prop2_target(1.0, 0.7, 0.9, t + 1) == rd.prop2_target(1.0, 0.7, 0.9, t) / 2


def test_pga_budget_examples():
    assert rd.pga_epoch_budget((10, 3), 2.0, 100.0, 1.0, 1.0, 0.9, 0) == 51200
    # t -> t+1 multiplies by 2 L_{t+1} / L_t
    b0 = rd.pga_epoch_budget(10, 2.0, 100.0, 1.0, 1.0, 0.9, 4)
    b1 = rd.pga_epoch_budget(10, 2.0, 80.0, 1.0, 1.0, 0.9, 5)
    assert b1 == pytest.approx(b0 * 2 * 80 / 100, abs=1)


def test_pga_budget_total_is_geometric():
    # sum over epochs with a fixed L equals the closed form c (2^T - 1)
    c = 128 * 10 * 4 * 100 * 0.1
    T = 12
    total = sum(rd.pga_epoch_budget(10, 2.0, 100.0, 1.0, 1.0, 0.9, t) for t in range(T))
    assert total == pytest.approx(c * (2**T - 1), rel=1e-12)


def test_rmpi_budget():
    assert rd.rmpi_epoch_budget(1.0, 0.9) == math.ceil(math.log(80) / math.log(1 / 0.9))
    assert rd.rmpi_epoch_budget(3.0, 0.0) == 1


def test_closed_form_bounds():
    assert rd.theorem1_bound(1.0, 1.0, 1.0, 0.5, 0.0, 4) == 0.75390625
    assert rd.theorem1_bound(2.0, 1.0, 0.5, 0.9, 0.0, 0) == pytest.approx(2.0 + 30.0)
    assert rd.theorem1_bound(2.0, 1.0, 0.5, 0.9, 0.3, math.inf) == pytest.approx(0.4)
    assert rd.theorem1_bound(2.0, 1.0, 0.5, 0.9, 0.3, 200) == pytest.approx(0.4)
    assert rd.theorem2_bound(1.0, 1.0, 0.5, 0.1, math.inf) == 0.1


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(0.01, 4), st.floats(0.01, 3), st.floats(0, 0.99), st.floats(0, 1),
       st.integers(1, 30))
def test_recursion_unrolls_below_closed_form(d0, lam0, c, g, eps, T):
    d = d0
    for t in range(1, T + 1):
        d = rd.recursion_bound(d, lam0, c, g, eps, t)
    assert d <= rd.theorem1_bound(d0, lam0, c, g, eps, T) * (1 + 1e-12)


def test_epochs_for_accuracy():
    T = rd.epochs_for_accuracy(0.05, 1.0, 0.5, 0.9)
    assert rd.theorem2_bound(1.0, 0.5, 0.9, 0.0, T) <= 0.05 < rd.theorem2_bound(1.0, 0.5, 0.9, 0.0, T - 1)


def test_binding_validation():
    with pytest.raises(rd.ReductionConfigError):
        rd.SubSolverBinding(solver="newton")
    with pytest.raises(rd.ReductionConfigError):
        rd.SubSolverBinding(budget="certified", certification="theoretical-budget")
    with pytest.raises(rd.ReductionConfigError):
        rd.SubSolverBinding(solver="softmax_pg", budget="formula")
    with pytest.raises(rd.ReductionConfigError):
        rd.SubSolverBinding(solver="mdpo").check_regularizer(L2)


def test_t_zero(seed7):
    init = core.uniform_policy(seed7)
    pi, rep = rd.adapt_reduce(seed7, ENT, 1.0, init, rd.SubSolverBinding(), T=0)
    assert np.array_equal(pi, init) and rep.epochs == []


def test_rmpi_reduction_bound(seed7):
    b = rd.SubSolverBinding(solver="rmpi", budget="formula", certification="theoretical-budget")
    _, rep = rd.adapt_reduce(seed7, ENT, 1.0, core.uniform_policy(seed7), b, T=20)
    bound = rep.d0 / 4**20 + 6 * math.log(3) / (0.1 * 2**20)
    assert rep.final_gap <= bound
    assert len(rep.epochs) == 20 and rep.epochs[1].lam == 0.5


def test_certified_prop1_epochs(seed7):
    b = rd.SubSolverBinding(solver="rmpi", budget="certified", iterations=50)
    _, rep = rd.adapt_reduce(seed7, ENT, 1.0, core.uniform_policy(seed7), b, T=8)
    assert rep.all_certified and rep.measured_eps_hat == 0.0
    assert rep.final_gap <= rep.bound


def test_pga_prop2(seed7):
    rule = rd.StoppingRule("prop2")
    b = rd.SubSolverBinding(solver="pga", budget="certified", iterations=20000, record_every=1000)
    _, rep = rd.adapt_reduce(seed7, L2, 1.0, core.uniform_policy(seed7), b, rule, T=6)
    eps_hat = rep.measured_eps_hat
    assert rep.final_gap <= rd.theorem2_bound(1.0, 0.5, 0.9, eps_hat, 6)


def test_fixed_budget_uncertified_never_aborts(seed7):
    b = rd.SubSolverBinding(solver="pga", budget="certified", iterations=1)
    _, rep = rd.adapt_reduce(seed7, L2, 1.0, core.uniform_policy(seed7), b, rd.StoppingRule("prop1"), T=4)
    assert len(rep.epochs) == 4
    assert any(e.status == "uncertified" for e in rep.epochs)
    assert rep.measured_eps_hat > 0
    assert rep.to_dict()["total_iterations"] == rep.total_iterations


@pytest.mark.parametrize("solver", ["softmax_pg", "mdpo"])
def test_entropy_subsolvers(seed7, solver):
    b = rd.SubSolverBinding(solver=solver, budget="fixed", iterations=5, certification="theoretical-budget")
    _, rep = rd.adapt_reduce(seed7, ENT, 1.0, core.uniform_policy(seed7), b, T=3)
    assert rep.total_iterations == 15
    assert np.isfinite(rep.final_gap)
