"""Frank-Wolfe solver with per-period market-share constraints.

Preference weights live on the unit simplex and the outside weights are
substituted from ``v0t = r[(1-a) sum_{I_t} v + a sum_{S_t} v o]``, so the
reduced objective depends on ``v`` only. The linear subproblem over the
simplex picks a single vertex, which makes each step a coordinate move.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .model import (
    EstimateResult,
    EstimationConfig,
    ModelParams,
    SalesPanel,
    binding_mask,
    demand_matrix,
    outside_weights,
    recover_lambda,
    reduced_objective,
)

__all__ = [
    "FWState",
    "LineSearch",
    "fw_objective",
    "gradient_reduced",
    "fw_direction",
    "armijo_step",
    "estimate_fw",
]


@dataclass(frozen=True, eq=False)
class FWState:
    v: np.ndarray
    k: int
    gradient: np.ndarray
    gamma: float
    binding: frozenset[int]


@dataclass(frozen=True)
class LineSearch:
    gamma: float
    value: float
    trials: int
    accepted: bool


def fw_objective(panel: SalesPanel, v, r: float, alpha: float, bounds) -> float:
    """Reduced objective with the outside weights substituted."""
    return reduced_objective(panel, v, outside_weights(panel, v, r, alpha), bounds)


def gradient_reduced(panel: SalesPanel, v, r: float, alpha: float, bounds, binding=None) -> np.ndarray:
    """Analytic gradient of :func:`fw_objective` for a fixed binding set.

    Written as ``K/v + O @ c_S + I @ c_I`` where ``O`` and ``I`` are the
    open-fraction and offer matrices and the per-period coefficients are

    * non-binding: ``c_S = -m/S``
    * binding:     ``c_S = -m(r a + 1)/D - L r(1-a) S_I / D^2``,
                   ``c_I = -m r(1-a)/D + L r(1-a) S / D^2``

    with ``S = sum_{S_t} v o``, ``S_I = sum_{I_t} v`` and ``D = v0t + S``.
    """
    v = np.asarray(v, dtype=float)
    K = panel.K
    if np.any((K > 0) & (v <= 0)):
        raise ValueError("gradient undefined: zero weight on a product with sales")
    L = np.broadcast_to(np.asarray(np.inf if bounds is None else bounds, dtype=float), (panel.T,))
    o = panel.open_pct
    I = panel.offered.astype(float)
    m = panel.m
    ss = (v[:, None] * o).sum(axis=0)
    si = v @ I
    v0t = r * ((1 - alpha) * si + alpha * ss)
    d = v0t + ss
    B = binding_mask(panel, v, v0t, L) if binding is None else np.asarray(binding, dtype=bool)
    nb = (m > 0) & ~B
    q = r * (1 - alpha)
    cS = np.zeros(panel.T)
    cI = np.zeros(panel.T)
    cS[nb] = -m[nb] / ss[nb]
    cS[B] = -m[B] * (r * alpha + 1) / d[B] - L[B] * q * si[B] / d[B] ** 2
    cI[B] = -m[B] * q / d[B] + L[B] * q * ss[B] / d[B] ** 2
    g = np.zeros(panel.n)
    pos = K > 0
    g[pos] = K[pos] / v[pos]
    return g + o @ cS + I @ cI


def fw_direction(gradient, eligible=None) -> int:
    """Index of the largest gradient entry (lowest index on ties)."""
    g = np.asarray(gradient, dtype=float)
    if eligible is not None:
        g = np.where(np.asarray(eligible, dtype=bool), g, -np.inf)
    if not np.all(np.isfinite(g) | np.isneginf(g)):
        raise ValueError("gradient must be finite")
    return int(np.argmax(g))


def armijo_step(
    panel: SalesPanel,
    v,
    y: int,
    gradient,
    r: float,
    alpha: float,
    bounds,
    beta: float = 1e-3,
    tau: float = 0.5,
    gamma0: float = 1.0,
    f0: float | None = None,
    min_gamma: float = 1e-12,
) -> LineSearch:
    """Backtracking line search towards vertex ``y`` (maximization).

    Accepts the first ``gamma`` in ``gamma0, tau*gamma0, ...`` with
    ``f(v + gamma (e_y - v)) >= f(v) + gamma * beta * <grad, e_y - v>``.
    The binding set is recomputed at every trial point.
    """
    if not (0 < beta < 1 and 0 < tau < 1 and 0 < gamma0 <= 1):
        raise ValueError("need beta, tau in (0, 1) and gamma0 in (0, 1]")
    v = np.asarray(v, dtype=float)
    g = np.asarray(gradient, dtype=float)
    d = -v.copy()
    d[y] += 1.0
    slope = float(g @ d)
    if slope < 0:
        raise ValueError("direction is not an ascent direction")
    if f0 is None:
        f0 = fw_objective(panel, v, r, alpha, bounds)
    gamma = gamma0
    trials = 0
    while gamma >= min_gamma:
        trials += 1
        val = fw_objective(panel, v + gamma * d, r, alpha, bounds)
        if val >= f0 + gamma * beta * slope:
            return LineSearch(gamma, val, trials, True)
        gamma *= tau
    return LineSearch(0.0, f0, trials, False)


def estimate_fw(panel: SalesPanel, config: EstimationConfig) -> EstimateResult:
    """Run Frank-Wolfe from ``v`` proportional to product sales.

    Stops when the Frank-Wolfe gap ``<grad, e_l - v>`` falls below
    ``config.fw_gap_tol * |f|``, when a line search fails, or at
    ``config.max_iters``. With ``config.step == "default"`` the step is
    ``2/(k+2)`` counted from ``k = 1`` (``k = 0`` would collapse onto a
    vertex and zero out products with sales).
    """
    t0 = time.perf_counter()
    L = config.resolve_bounds(panel)
    keep = panel.K > 0
    if not keep.any():
        raise ValueError("panel has no sales")
    r, a = config.r, config.alpha
    v = np.where(keep, panel.K, 0.0)
    v = v / v.sum()
    f = fw_objective(panel, v, r, a, L)
    trace = [f]
    gaps, steps = [], []
    converged = False
    message = ""
    k = 0
    while k < config.max_iters:
        g = gradient_reduced(panel, v, r, a, L)
        l = fw_direction(g, keep)
        gap = float(g[l] - g @ v)
        gaps.append(gap)
        if gap <= config.fw_gap_tol * abs(f):
            converged = True
            break
        if config.step == "armijo":
            ls = armijo_step(
                panel, v, l, g, r, a, L,
                config.armijo_beta, config.armijo_tau, config.armijo_gamma0, f0=f,
            )
            if not ls.accepted:
                message = "line search found no improving step"
                break
            gamma, f_new = ls.gamma, ls.value
        else:
            gamma = 2.0 / (k + 3)
            f_new = None
        k += 1
        v = (1 - gamma) * v
        v[l] += gamma
        v /= v.sum()
        f = fw_objective(panel, v, r, a, L) if f_new is None else f_new
        trace.append(f)
        steps.append(gamma)
    else:
        message = "iteration cap reached"

    v0t = outside_weights(panel, v, r, a)
    lam = recover_lambda(panel, v, v0t, L)
    B = binding_mask(panel, v, v0t, L)
    v0t = np.where(np.isfinite(v0t), v0t, 1.0)
    return EstimateResult(
        solver="fw",
        params=ModelParams(v, v0t, lam),
        primary_demand=demand_matrix(panel, v, v0t, lam),
        objective_trace=np.asarray(trace),
        iterations=k,
        wall_time=time.perf_counter() - t0,
        converged=converged,
        binding_periods=frozenset(int(t) for t in np.flatnonzero(B)),
        config=config,
        message=message,
        product_ids=panel.product_ids,
        periods=panel.periods,
        extras={"gaps": np.asarray(gaps), "steps": np.asarray(steps), "bounds": L, "step_rule": config.step},
    )
