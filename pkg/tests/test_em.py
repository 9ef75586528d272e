import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mnldemand import (
    ConvergenceError,
    EstimationConfig,
    PanelError,
    SalesPanel,
    e_step,
    estimate_em,
    m_step_closed_form,
    m_step_fixed_point,
)
from mnldemand.fixtures import load_fixture
from mnldemand.reproduce import run_table9, run_table12

from conftest import random_panel

S = 0.7


@given(st.integers(0, 10_000), st.floats(0, 1))
def test_e_step_invariants(seed, alpha):
    rng = np.random.default_rng(seed)
    panel = random_panel(rng, int(rng.integers(1, 5)), int(rng.integers(1, 6)), binary=True, offered_all=False)
    v = rng.uniform(0.1, 2, panel.n)
    dec = e_step(panel, v, S, alpha)
    S_ = panel.available
    np.testing.assert_allclose((dec.X + dec.Y)[S_], panel.sales[S_], atol=1e-9)
    r = (1 - S) / S
    np.testing.assert_allclose(dec.X0, r * (dec.X * panel.offered).sum(axis=0), atol=1e-9)
    assert np.all(dec.X >= -1e-12)


def test_e_step_fully_open_period_keeps_sales():
    panel = SalesPanel(np.array([[3.0], [5.0]]), np.ones((2, 1)))
    for alpha in (0.0, 0.4, 1.0):
        dec = e_step(panel, [0.3, 0.7], S, alpha)
        np.testing.assert_allclose(dec.X[:, 0], [3, 5], atol=1e-12)
        np.testing.assert_allclose(dec.Y[:, 0], [0, 0], atol=1e-12)


def test_e_step_closed_product_formula():
    # products 0 and 1 share a weight; product 1 is closed
    panel = SalesPanel(np.array([[4.0], [0.0], [2.0]]), np.array([[1.0], [0.0], [1.0]]))
    v = np.array([0.5, 0.5, 0.25])
    r = (1 - S) / S
    dec = e_step(panel, v, S, 0.0)
    si, ss = v.sum(), v[[0, 2]].sum()
    v0 = r * si
    expected = v[1] / ((1 + r) * si) * (ss + v0) / ss * 6.0
    assert dec.X[1, 0] == pytest.approx(expected, rel=1e-14)


def test_e_step_requires_binary():
    with pytest.raises(PanelError):
        e_step(load_fixture("partial"), np.ones(5), S, 0.0)


def test_m_step_closed_form_examples():
    np.testing.assert_allclose(m_step_closed_form([[1, 1], [3, 3]]), [0.25, 0.75])
    np.testing.assert_allclose(m_step_closed_form([[2, 2], [2, 2]]), [0.5, 0.5])
    np.testing.assert_allclose(m_step_closed_form([[0, 0], [1, 2]]), [0, 1])
    with pytest.raises(ValueError):
        m_step_closed_form([[0, 0]])


@given(st.integers(0, 10_000))
def test_fixed_point_matches_closed_form_on_homogeneous(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.1, 10, (4, 6))
    fp = m_step_fixed_point(X, np.ones((4, 6), dtype=bool), rng.uniform(0.1, 1, 4))
    np.testing.assert_allclose(fp / fp.sum(), m_step_closed_form(X), rtol=1e-8)


def test_fixed_point_first_order_conditions():
    rng = np.random.default_rng(5)
    I = rng.random((4, 8)) < 0.7
    I[:, 0] = True
    X = np.where(I, rng.uniform(0.5, 5, (4, 8)), 0.0)
    v = m_step_fixed_point(X, I, np.ones(4))
    colX = (X * I).sum(axis=0)
    grad = (I * (X / v[:, None] - colX / (v @ I))).sum(axis=1)
    assert np.max(np.abs(grad) / X.sum(axis=1)) < 1e-8


def test_fixed_point_disjoint_regimes():
    # two regimes: {0,1} offered in period 0, {1,2} offered in period 1
    X = np.array([[2.0, 0.0], [4.0, 3.0], [0.0, 6.0]])
    I = np.array([[1, 0], [1, 1], [0, 1]], dtype=bool)
    v = m_step_fixed_point(X, I, np.ones(3))
    assert v[1] / v[0] == pytest.approx(2.0, rel=1e-8)
    assert v[2] / v[1] == pytest.approx(2.0, rel=1e-8)


def test_fixed_point_reports_nonconvergence():
    X = np.array([[2.0, 0.0], [4.0, 3.0], [0.0, 6.0]])
    I = np.array([[1, 0], [1, 1], [0, 1]], dtype=bool)
    with pytest.raises(ConvergenceError) as exc:
        m_step_fixed_point(X, I, np.array([1.0, 5.0, 0.1]), tol=1e-15, max_inner=2)
    assert exc.value.residual > 0


def test_table9_values():
    res = run_table9()
    np.testing.assert_allclose(res.normalized_v, [1.000, 0.801, 0.391, 0.233, 0.055], atol=1e-3)
    lam_desc = res.lam[::-1]  # printed from period 15 down to 1
    np.testing.assert_allclose(
        lam_desc,
        [42.86, 47.14, 38.57, 48.57, 53.26, 42.95, 46.19, 38.50, 51.33, 56.37, 42.28, 65.76, 40.78, 61.18, 61.18],
        atol=1e-2,
    )
    np.testing.assert_allclose(res.primary_demand.sum(axis=0) * (1 / S), res.lam, rtol=1e-9)


def test_table12_flight_weights():
    v = run_table12().v
    np.testing.assert_allclose(v[5:10] / v[:5], 1.0, rtol=1e-6)
    np.testing.assert_allclose(v[10:15] / v[:5], 2.0, rtol=1e-6)


@pytest.mark.parametrize("name", ["vvrr", "schedule"])
def test_alpha_one_gives_m_over_s(name):
    panel = load_fixture(name)
    res = estimate_em(panel, EstimationConfig(S, alpha=1.0))
    np.testing.assert_allclose(res.lam, panel.m / S, atol=1e-9)


def test_duplication_equivariance():
    panel = load_fixture("vvrr")
    twice = SalesPanel(np.hstack([panel.sales, panel.sales]), np.hstack([panel.open_pct, panel.open_pct]))
    a = estimate_em(panel, EstimationConfig(S))
    b = estimate_em(twice, EstimationConfig(S))
    np.testing.assert_allclose(b.normalized_v, a.normalized_v, rtol=1e-7)
    np.testing.assert_allclose(b.lam, np.concatenate([a.lam, a.lam]), rtol=1e-7)


def test_doubling_sales_doubles_lambda():
    panel = load_fixture("vvrr")
    a = estimate_em(panel, EstimationConfig(S))
    b = estimate_em(panel.replace(sales=2 * panel.sales), EstimationConfig(S))
    np.testing.assert_allclose(b.lam, 2 * a.lam, rtol=1e-7)
    np.testing.assert_allclose(b.normalized_v, a.normalized_v, rtol=1e-7)


def test_zero_sales_product_dropped():
    panel = load_fixture("vvrr")
    sales = panel.sales.copy()
    sales[4] = 0
    res = estimate_em(panel.replace(sales=sales), EstimationConfig(S))
    assert res.v[4] == 0 and np.all(res.primary_demand[4] == 0)


def test_result_shape_invariants():
    res = run_table9()
    assert res.objective_trace.size == res.iterations + 1
    assert np.all(res.primary_demand >= 0)


def test_em_rejects_fractional_and_bounds():
    with pytest.raises(PanelError):
        estimate_em(load_fixture("partial"), EstimationConfig(S))
    with pytest.raises(ValueError):
        estimate_em(load_fixture("vvrr"), EstimationConfig(S, bound_multiplier=2))


def test_selldown_growth_flagged_at_default_cap():
    res = estimate_em(load_fixture("selldown"), EstimationConfig(S, max_iters=2000))
    assert res.diverged and not res.converged
    assert np.all(np.diff(res.extras["lambda_sums"][-100:]) > 0)


def test_em_does_not_reach_the_likelihood_maximum():
    # the printed M-step ignores how spilled customers re-choose, so its
    # fixed point is not a stationary point of the profiled likelihood
    from mnldemand import estimate_fw

    panel = load_fixture("vvrr")
    cfg = EstimationConfig(S, fw_gap_tol=1e-10, max_iters=5000)
    assert estimate_fw(panel, cfg).objective > estimate_em(panel, cfg).objective + 0.1
