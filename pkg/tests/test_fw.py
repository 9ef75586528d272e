import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mnldemand import EstimationConfig, SalesPanel, armijo_step, estimate_fw, fw_direction, gradient_reduced
from mnldemand.fixtures import load_fixture
from mnldemand.fw import fw_objective
from mnldemand.model import binding_mask, outside_weights, reduced_objective
from mnldemand.reproduce import run_table2, run_table13_fw

from conftest import random_panel

S = 0.7
R = (1 - S) / S


def fd_gradient(panel, v, alpha, L, B, h=1e-6):
    Lf = np.where(B, L, np.inf)

    def f(x):
        return reduced_objective(panel, x, outside_weights(panel, x, R, alpha), Lf)

    return np.array([(f(v + h * e) - f(v - h * e)) / (2 * h) for e in np.eye(v.size)])


def test_gradient_unbounded_closed_form():
    panel = load_fixture("partial")
    v = np.linspace(1, 0.3, panel.n)
    o = panel.open_pct
    ss = v @ o
    expected = panel.K / v - o @ (panel.m / ss)
    np.testing.assert_allclose(gradient_reduced(panel, v, R, 0.0, None), expected, rtol=1e-12)


def test_gradient_alpha_one_binding_factor():
    # one binding period: with alpha = 1 the r(1-a) terms vanish
    panel = SalesPanel(np.array([[6.0], [4.0]]), np.array([[1.0], [0.5]]))
    v = np.array([1.0, 1.0])
    ss = 1.5
    d = (1 + R) * ss
    g = gradient_reduced(panel, v, R, 1.0, [5.0])
    expected = panel.K / v - panel.open_pct[:, 0] * 10.0 * (R + 1) / d
    np.testing.assert_allclose(g, expected, rtol=1e-12)


@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.3, 1.0]))
def test_gradient_matches_finite_differences(seed, alpha):
    rng = np.random.default_rng(seed)
    panel = random_panel(rng, 3, 4, offered_all=bool(rng.random() < 0.5))
    v = rng.uniform(0.2, 1, 3)
    v /= v.sum()
    L = panel.m * rng.uniform(1.0, 2.5, 4)
    B = binding_mask(panel, v, outside_weights(panel, v, R, alpha), L)
    g = gradient_reduced(panel, v, R, alpha, L, B)
    fd = fd_gradient(panel, v, alpha, L, B)
    assert np.max(np.abs(g - fd) / np.maximum(1, np.abs(fd))) <= 1e-6


def test_gradient_rejects_zero_weight_with_sales():
    panel = SalesPanel(np.array([[1.0]]), np.ones((1, 1)))
    with pytest.raises(ValueError):
        gradient_reduced(panel, [0.0], R, 0.0, None)


def test_direction_examples():
    assert fw_direction([1, 3, 2]) == 1
    assert fw_direction([5, 5]) == 0
    assert fw_direction([2, 2, 2]) == 0
    assert fw_direction([9, 1, 2], eligible=[False, True, True]) == 2


def test_armijo_accepts_full_step_on_easy_problem():
    # single product: any simplex point is v = 1, so every trial is accepted
    panel = SalesPanel(np.array([[3.0, 1.0], [2.0, 0.0]]), np.ones((2, 2)))
    v = np.array([0.5, 0.5])
    g = gradient_reduced(panel, v, R, 0.0, None)
    y = fw_direction(g)
    ls = armijo_step(panel, v, y, g, R, 0.0, None, gamma0=1e-3)
    assert ls.accepted and ls.gamma == 1e-3 and ls.trials == 1


def test_armijo_halves_until_sufficient_increase():
    panel = load_fixture("partial")
    v = panel.K / panel.K.sum()
    g = gradient_reduced(panel, v, R, 0.0, None)
    y = fw_direction(g)
    ls = armijo_step(panel, v, y, g, R, 0.0, None)
    assert ls.accepted
    assert ls.gamma == 0.5 ** (ls.trials - 1)
    d = -v.copy()
    d[y] += 1
    f0 = fw_objective(panel, v, R, 0.0, None)
    assert ls.value >= f0 + ls.gamma * 1e-3 * g @ d
    if ls.trials > 1:
        bigger = 2 * ls.gamma
        assert fw_objective(panel, v + bigger * d, R, 0.0, None) < f0 + bigger * 1e-3 * g @ d


def test_armijo_argument_checks():
    panel = load_fixture("partial")
    v = np.full(5, 0.2)
    g = gradient_reduced(panel, v, R, 0.0, None)
    with pytest.raises(ValueError):
        armijo_step(panel, v, 0, g, R, 0.0, None, beta=1.5)
    worst = int(np.argmin(g))
    with pytest.raises(ValueError):
        armijo_step(panel, v, worst, g, R, 0.0, None)


def test_simplex_preserved_and_monotone():
    res = run_table13_fw()
    assert abs(res.v.sum() - 1) <= 1e-12 and np.all(res.v >= 0)
    tr = res.objective_trace
    assert np.all(np.diff(tr) >= -1e-9)
    assert tr.size == res.iterations + 1


@given(st.integers(0, 10_000), st.floats(0, 1))
def test_simplex_and_monotone_on_random_panels(seed, alpha):
    rng = np.random.default_rng(seed)
    panel = random_panel(rng, int(rng.integers(1, 5)), int(rng.integers(1, 6)), offered_all=False)
    cfg = EstimationConfig(S, alpha=alpha, bound_multiplier=float(rng.uniform(1.05, 3)), max_iters=300)
    res = estimate_fw(panel, cfg)
    assert abs(res.v.sum() - 1) <= 1e-12 and np.all(res.v >= 0)
    assert np.all(np.diff(res.objective_trace) >= -1e-9)
    # per-period share constraint holds by construction
    v0t = outside_weights(panel, res.v, cfg.r, alpha)
    np.testing.assert_allclose(res.params.v0t, v0t)


def test_table2_total_demand():
    res = run_table2()
    assert res.total_demand == pytest.approx(1194.6, abs=1.0)


def test_default_step_reaches_armijo_objective():
    panel = load_fixture("partial")
    armijo = estimate_fw(panel, EstimationConfig(S, fw_gap_tol=0.0, max_iters=60))
    budget = 100 * armijo.iterations
    default = estimate_fw(panel, EstimationConfig(S, step="default", fw_gap_tol=0.0, max_iters=budget))
    assert default.extras["steps"][0] == pytest.approx(2 / 3)
    assert abs(default.objective - armijo.objective) <= 1e-4 * abs(armijo.objective)


def test_iteration_cap_reported():
    res = estimate_fw(load_fixture("partial"), EstimationConfig(S, max_iters=3, fw_gap_tol=0.0))
    assert not res.converged and res.iterations == 3 and "cap" in res.message
