"""Minorization-maximization under an aggregate market-share constraint.

The outside weights ``v0t`` are treated as known. Each iteration maximizes
a separable minorizer of the reduced objective subject to
``sum_t [(1-a) sum_{I_t} v + a sum_{S_t} v o] = s_tilde * sum_t v0t``,
whose solution is ``v_j = K_j / (A_j + eta * w_j)`` for a scalar multiplier
``eta`` found by Newton's method.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .model import (
    EstimateResult,
    EstimationConfig,
    ModelParams,
    SalesPanel,
    binding_mask,
    demand_matrix,
    recover_lambda,
    reduced_objective,
)

__all__ = ["MMState", "mm_coefficients", "eta_residual", "solve_eta_newton", "estimate_mm"]


@dataclass(frozen=True, eq=False)
class MMState:
    """Snapshot of one MM iteration."""

    v: np.ndarray
    A: np.ndarray
    K: np.ndarray
    n_count: np.ndarray
    o_sum: np.ndarray
    eta: float
    binding: frozenset[int]


def mm_coefficients(panel: SalesPanel, v, v0t, bounds, binding=None) -> np.ndarray:
    """Linear coefficients ``A_j`` of the minorizer at ``v``.

    ``binding`` may be a boolean mask or a collection of period indices;
    by default it is computed from ``v``.
    """
    v = np.asarray(v, dtype=float)
    v0t = np.asarray(v0t, dtype=float)
    L = np.broadcast_to(np.asarray(np.inf if bounds is None else bounds, dtype=float), (panel.T,))
    if binding is None:
        B = binding_mask(panel, v, v0t, L)
    else:
        binding = np.asarray(list(binding) if isinstance(binding, (set, frozenset)) else binding)
        if binding.dtype == bool:
            B = binding
        else:
            B = np.zeros(panel.T, dtype=bool)
            B[binding.astype(int)] = True
    o = panel.open_pct
    m = panel.m
    ss = (v[:, None] * o).sum(axis=0)
    d = v0t + ss
    act = m > 0
    nb = act & ~B
    coef = np.zeros(panel.T)
    coef[nb] = m[nb] / ss[nb]
    coef[B] = m[B] / d[B] + L[B] * v0t[B] / d[B] ** 2
    return o @ coef


def eta_residual(eta: float, K, A, w, target: float) -> float:
    """``f(eta) = sum_j K_j w_j / (A_j + eta w_j) - target``."""
    K, A, w = (np.asarray(x, dtype=float) for x in (K, A, w))
    return float(np.sum(K * w / (A + eta * w)) - target)


def solve_eta_newton(
    K,
    A,
    n_count,
    o_sum,
    alpha: float,
    s_tilde: float,
    v0_total: float,
    eps: float = 1e-10,
    eta0: float = 0.0,
    max_iter: int = 200,
) -> float:
    """Root of ``f(eta) = sum_j K_j w_j/(A_j + eta w_j) - s_tilde * v0_total``.

    ``w_j = (1-alpha) n_j + alpha o_j``. ``f`` is decreasing and convex on
    its domain ``eta > max_j(-A_j/w_j)``. Newton steps that would leave the
    domain are halved (up to 60 times) before falling back to bisection.
    """
    K = np.asarray(K, dtype=float)
    A = np.asarray(A, dtype=float)
    w = (1 - alpha) * np.asarray(n_count, dtype=float) + alpha * np.asarray(o_sum, dtype=float)
    use = K > 0
    if not use.any():
        raise ValueError("at least one product must have positive sales")
    if not v0_total > 0:
        raise ValueError("sum of outside weights must be positive")
    K, A, w = K[use], A[use], w[use]
    if np.any(w < 0) or np.any(A < 0):
        raise ValueError("coefficients must be non-negative")
    target = s_tilde * v0_total
    # near-ulp floor so huge targets remain solvable
    tol = max(eps, 4 * np.finfo(float).eps * target)
    wp = w > 0
    lo = float(np.max(-A[wp] / w[wp])) if wp.any() else -np.inf

    def f_and_g(e):
        den = A + e * w
        return float(np.sum(K * w / den) - target), float(-np.sum(K * w * w / den**2))

    eta = float(eta0)
    if not eta > lo:
        eta = 0.0 if lo < 0 else lo + 1.0
    for _ in range(max_iter):
        f, g = f_and_g(eta)
        if abs(f) <= tol:
            return eta
        if g == 0:
            break
        step = f / g
        t = 1.0
        for _ in range(60):
            cand = eta - t * step
            if cand > lo and np.all(A + cand * w > 0):
                break
            t *= 0.5
        else:
            break
        if cand == eta:
            break
        eta = cand
    return _bisect_eta(K, A, w, target, lo, tol)


def _bisect_eta(K, A, w, target, lo, tol) -> float:
    def f(e):
        return float(np.sum(K * w / (A + e * w)) - target)

    if not np.isfinite(lo):
        raise ConvergenceError("multiplier has no bracketing interval")
    span = max(1.0, abs(lo))
    left = lo + span * 1e-15
    while f(left) < 0:
        span *= 0.5
        left = lo + span * 1e-15
        if span < 1e-300:
            raise ConvergenceError("no sign change near domain boundary")
    right = max(lo + 1.0, 1.0)
    for _ in range(2000):
        if f(right) < 0:
            break
        right = lo + 2 * (right - lo)
    else:
        raise ConvergenceError("could not bracket the multiplier")
    for _ in range(4000):
        mid = 0.5 * (left + right)
        fm = f(mid)
        if abs(fm) <= tol:
            return mid
        if fm > 0:
            left = mid
        else:
            right = mid
        if right - left <= 1e-16 * max(1.0, abs(mid)):
            break
    fm = f(0.5 * (left + right))
    if abs(fm) <= tol:
        return 0.5 * (left + right)
    raise ConvergenceError(f"multiplier solve stalled at residual {abs(fm):.3e}", abs(fm))


def estimate_mm(panel: SalesPanel, config: EstimationConfig, v0t_input=None) -> EstimateResult:
    """Run the MM algorithm with known outside weights (default all ones)."""
    t0 = time.perf_counter()
    v0t = np.ones(panel.T) if v0t_input is None else np.asarray(v0t_input, dtype=float)
    if v0t.shape != (panel.T,) or np.any(v0t <= 0):
        raise ValueError("v0t must hold one positive value per period")
    L = config.resolve_bounds(panel)
    keep = panel.K > 0
    if not keep.any():
        raise ValueError("panel has no sales")
    sub = panel.select_products(keep)
    a, st = config.alpha, config.s_tilde
    K = sub.K
    n_count = sub.offered.sum(axis=1).astype(float)
    o_sum = sub.open_pct.sum(axis=1)
    w = (1 - a) * n_count + a * o_sum
    target = st * v0t.sum()

    v = K * target / np.sum(K * w)
    trace = [reduced_objective(sub, v, v0t, L)]
    residuals, etas = [], []
    eta = 0.0
    converged = False
    k = 0
    for k in range(1, config.max_iters + 1):
        B = binding_mask(sub, v, v0t, L)
        A = mm_coefficients(sub, v, v0t, L, B)
        eta = solve_eta_newton(K, A, n_count, o_sum, a, st, v0t.sum(), config.newton_eps, eta0=eta)
        residuals.append(abs(eta_residual(eta, K, A, w, target)))
        etas.append(eta)
        new = K / (A + eta * w)
        f = reduced_objective(sub, new, v0t, L)
        dv = float(np.max(np.abs(new - v) / new))
        df = abs(f - trace[-1]) / max(abs(f), 1e-300)
        v = new
        trace.append(f)
        if df < config.tol_obj and dv < config.tol_param:
            converged = True
            break

    lam = recover_lambda(sub, v, v0t, L)
    B = binding_mask(sub, v, v0t, L)
    v_full = np.zeros(panel.n)
    v_full[keep] = v
    share_resid = abs(float(np.sum(w * v)) - target)
    return EstimateResult(
        solver="mm",
        params=ModelParams(v_full, v0t, lam),
        primary_demand=demand_matrix(panel, v_full, v0t, lam),
        objective_trace=np.asarray(trace),
        iterations=k,
        wall_time=time.perf_counter() - t0,
        converged=converged,
        binding_periods=frozenset(int(t) for t in np.flatnonzero(B)),
        config=config,
        message="" if converged else "iteration cap reached",
        product_ids=panel.product_ids,
        periods=panel.periods,
        extras={
            "newton_residuals": np.asarray(residuals),
            "etas": np.asarray(etas),
            "share_residual": share_resid,
            "share_target": target,
            "bounds": L,
        },
    )
