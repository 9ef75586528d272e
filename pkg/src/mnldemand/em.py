"""EM estimation with non-homogeneous offer sets and outside-alternative control."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, PanelError
from .model import (
    EstimateResult,
    EstimationConfig,
    ModelParams,
    SalesPanel,
    outside_weights,
    recover_lambda,
    reduced_objective,
)

__all__ = [
    "DemandDecomposition",
    "e_step",
    "m_step_closed_form",
    "m_step_fixed_point",
    "estimate_em",
]


@dataclass(frozen=True, eq=False)
class DemandDecomposition:
    """Latent quantities of one E-step.

    ``X[j, t]`` is the expected primary demand for product ``j``; ``Y[j, t]``
    the part of observed sales of an open product that came from customers
    whose first choice was closed. ``X0``/``Y0`` are the outside-alternative
    counterparts.
    """

    X: np.ndarray
    Y: np.ndarray
    X0: np.ndarray
    Y0: np.ndarray
    v0t: np.ndarray


def e_step(panel: SalesPanel, v, s: float, alpha: float) -> DemandDecomposition:
    """Expected primary demand given weights ``v``.

    Requires 0/1 availability.
    """
    if not panel.is_binary:
        raise PanelError("EM needs 0/1 availability; split the panel first")
    v = np.asarray(v, dtype=float)
    r = (1.0 - s) / s
    S = panel.available
    I = panel.offered
    z = panel.sales
    m = panel.m
    si = (v[:, None] * I).sum(axis=0)
    ss = (v[:, None] * S).sum(axis=0)
    v0 = r * ((1 - alpha) * si + alpha * ss)
    bad = (m > 0) & (ss <= 0)
    if bad.any():
        raise ValueError(f"periods {[panel.periods[t] for t in np.flatnonzero(bad)]} have sales but zero open weight")

    act = m > 0
    # scale converting observed sales into primary demand
    scale = np.zeros(panel.T)
    scale[act] = (ss[act] + v0[act]) / ((1 + r) * si[act])
    lam_over = np.zeros(panel.T)  # lambda_t / ((1+r) sum_I v)
    lam_over[act] = m[act] * (ss[act] + v0[act]) / (ss[act] * (1 + r) * si[act])

    closed = I & ~S
    X = np.where(closed, v[:, None] * lam_over[None, :], 0.0)
    X = np.where(S, scale[None, :] * z, X)
    Y = np.where(S, z - X, 0.0)
    X0 = r * X.sum(axis=0)
    Y0 = np.zeros(panel.T)
    Y0[act] = v0[act] / (ss[act] + v0[act]) * (X * closed).sum(axis=0)[act]
    return DemandDecomposition(X, Y, X0, Y0, v0)


def m_step_closed_form(X) -> np.ndarray:
    """Weights proportional to total primary demand per product (sum 1)."""
    X = np.asarray(X, dtype=float)
    tot = X.sum()
    if not tot > 0:
        raise ValueError("primary demand matrix is all zero")
    return X.sum(axis=1) / tot


def m_step_fixed_point(X, offered, v_init, tol: float = 1e-12, max_inner: int = 100000) -> np.ndarray:
    """M-step for changing offer sets by fixed-point iteration.

    Iterates ``v_i <- sum_t X_it / sum_t (sum_{k in I_t} X_kt / sum_{k in I_t} v_k)``
    (sums over periods where ``i`` is offered) until the largest relative
    change is below ``tol``. The result is scaled to sum 1.
    """
    X = np.asarray(X, dtype=float)
    I = np.asarray(offered, dtype=bool)
    v = np.asarray(v_init, dtype=float).copy()
    num = (X * I).sum(axis=1)
    pos = num > 0
    if not pos.any():
        raise ValueError("primary demand matrix is all zero")
    v = np.where(pos, v, 0.0)
    if np.any(v[pos] <= 0):
        raise ValueError("v_init must be positive where demand is positive")
    v /= v.sum()
    colX = (X * I).sum(axis=0)
    live = colX > 0
    Il = I[:, live].astype(float)
    cX = colX[live]
    for _ in range(max_inner):
        ratio = cX / (v @ Il)
        den = Il @ ratio
        new = np.where(pos, num / np.where(pos, den, 1.0), 0.0)
        new /= new.sum()
        change = np.max(np.abs(new[pos] - v[pos]) / new[pos])
        v = new
        if change < tol:
            return v
    ratio = cX / (v @ Il)
    resid = np.max(np.abs(num[pos] - v[pos] * (Il @ ratio)[pos]) / num[pos])
    raise ConvergenceError(f"fixed-point M-step did not converge (residual {resid:.3e})", resid)


def estimate_em(panel: SalesPanel, config: EstimationConfig, naive: bool = False) -> EstimateResult:
    """Run the EM algorithm on a 0/1-availability panel.

    ``naive=True`` ignores offer sets (every product treated as offered in
    every period), which reproduces the behaviour of the original
    homogeneous EM on data with schedule changes.

    Products with no sales are dropped and reported with ``v = 0``. The
    returned ``primary_demand`` is the E-step matrix ``X`` at the final
    weights; ``lambda`` is recovered without bounds.
    """
    t0 = time.perf_counter()
    if not panel.is_binary:
        raise PanelError("EM needs 0/1 availability; split the panel first")
    if config.bound_multiplier is not None or (config.bounds is not None and np.isfinite(config.bounds).any()):
        raise ValueError("arrival-rate bounds are not supported by EM; use the mm or fw solver")
    full = panel.replace(offered=np.ones_like(panel.offered)) if naive else panel
    keep = full.K > 0
    if not keep.any():
        raise ValueError("panel has no sales")
    sub = full.select_products(keep)
    s, a, r = config.market_share, config.alpha, config.r
    homogeneous = sub.is_homogeneous
    z_total = sub.sales.sum()
    threshold = config.divergence_factor * z_total / s

    K = sub.K
    v = np.maximum(K / K.max(), 1e-6)
    v /= v.sum()

    def objective(w):
        return reduced_objective(sub, w, outside_weights(sub, w, r, a), None)

    trace = [objective(v)]
    lam_sums = [float(recover_lambda(sub, v, outside_weights(sub, v, r, a), None).sum())]
    converged = diverged = False
    message = ""
    k = 0
    for k in range(1, config.max_iters + 1):
        dec = e_step(sub, v, s, a)
        if homogeneous:
            new = m_step_closed_form(dec.X)
        else:
            new = m_step_fixed_point(dec.X, sub.offered, v, config.fixed_point_tol, config.fixed_point_max_iter)
        f = objective(new)
        lam_sum = float(recover_lambda(sub, new, outside_weights(sub, new, r, a), None).sum())
        dv = float(np.max(np.abs(new - v) / new))
        df = abs(f - trace[-1]) / max(abs(f), 1e-300)
        v = new
        trace.append(f)
        lam_sums.append(lam_sum)
        if lam_sum > threshold:
            diverged = True
            message = f"arrival rates diverging: sum(lambda) = {lam_sum:.6g} exceeds {threshold:.6g}"
            break
        if df < config.tol_obj and dv < config.tol_param:
            converged = True
            break
    else:
        window = np.asarray(lam_sums[-min(len(lam_sums), 100):])
        if window.size > 1 and np.all(np.diff(window) > 0) and config.max_iters > 0:
            diverged = True
            message = "iteration cap reached with sum(lambda) still increasing"
        else:
            message = "iteration cap reached"

    v0t = outside_weights(sub, v, r, a)
    lam = recover_lambda(sub, v, v0t, None)
    X = e_step(sub, v, s, a).X
    v_full = np.zeros(panel.n)
    v_full[keep] = v
    X_full = np.zeros((panel.n, panel.T))
    X_full[keep] = X
    v0t = np.where(np.isfinite(v0t), v0t, 1.0)
    return EstimateResult(
        solver="em",
        params=ModelParams(v_full, v0t, lam),
        primary_demand=X_full,
        objective_trace=np.asarray(trace),
        iterations=k,
        wall_time=time.perf_counter() - t0,
        converged=converged,
        binding_periods=frozenset(),
        config=config,
        diverged=diverged,
        message=message,
        product_ids=panel.product_ids,
        periods=panel.periods,
        extras={"lambda_sums": np.asarray(lam_sums), "naive": naive, "homogeneous": homogeneous},
    )
