"""Data model, MNL choice probabilities and likelihood evaluators.

Conventions used throughout the package:

* Arrays are indexed ``[product, period]`` with 0-based positions.
* ``S_t`` (the assortment) is ``{i : open_pct[i, t] > 0}``; ``I_t`` (the
  offer set) is ``{i : offered[i, t]}``.
* Likelihood values omit the multinomial coefficients and ``log z!``
  terms. ``reduced_objective`` additionally omits ``sum z log o``, so that
  values from EM, MM and Frank-Wolfe are directly comparable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import PanelError

__all__ = [
    "SalesPanel",
    "ModelParams",
    "EstimationConfig",
    "SellDownSpec",
    "EstimateResult",
    "choice_probability",
    "choice_probability_partial",
    "choice_probability_selldown",
    "loglik_basic",
    "loglik_partial",
    "loglik_selldown",
    "binding_set",
    "binding_mask",
    "reduced_objective",
    "recover_lambda",
    "outside_weight",
    "outside_weights",
    "demand_matrix",
    "natural_key",
]


def natural_key(label: str):
    """Sort key that orders embedded integers numerically ("2" < "10")."""
    parts = re.split(r"(\d+)", str(label))
    return tuple((0, int(p)) if p.isdigit() else (1, p) for p in parts if p != "")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SalesPanel:
    """Observed sales for ``n`` products over ``T`` periods.

    Parameters
    ----------
    sales : array (n, T)
        Units sold, real-valued so split fractions are allowed.
    open_pct : array (n, T)
        Fraction of each period the product was purchasable, in [0, 1].
    offered : array (n, T) of bool, optional
        Whether the product exists in the offer set. Defaults to all True.
    product_ids, periods : sequence of str, optional
        Labels used for reporting and serialization.
    """

    sales: np.ndarray
    open_pct: np.ndarray
    offered: np.ndarray | None = None
    product_ids: tuple[str, ...] | None = None
    periods: tuple[str, ...] | None = None

    def __post_init__(self):
        z = np.array(self.sales, dtype=float, ndmin=2, copy=True)
        o = np.array(self.open_pct, dtype=float, ndmin=2, copy=True)
        if z.ndim != 2 or o.shape != z.shape:
            raise PanelError(f"sales shape {z.shape} and open_pct shape {o.shape} differ")
        n, T = z.shape
        if self.offered is None:
            off = np.ones((n, T), dtype=bool)
        else:
            off = np.array(self.offered, dtype=bool, ndmin=2, copy=True)
            if off.shape != z.shape:
                raise PanelError(f"offered shape {off.shape} does not match sales {z.shape}")
        pids = tuple(str(p) for p in self.product_ids) if self.product_ids is not None else tuple(
            str(i + 1) for i in range(n)
        )
        pers = tuple(str(p) for p in self.periods) if self.periods is not None else tuple(
            str(t + 1) for t in range(T)
        )
        if len(pids) != n or len(pers) != T:
            raise PanelError("label count does not match panel dimensions")

        if not np.all(np.isfinite(z)) or np.any(z < 0):
            raise PanelError(f"sales must be finite and >= 0; bad cells {_cells(~np.isfinite(z) | (z < 0), pids, pers)}")
        if not np.all(np.isfinite(o)) or np.any((o < 0) | (o > 1)):
            raise PanelError(f"open_pct outside [0, 1] at {_cells(~np.isfinite(o) | (o < 0) | (o > 1), pids, pers)}")
        bad = (z > 0) & (o <= 0)
        if bad.any():
            raise PanelError(f"sales recorded while closed at {_cells(bad, pids, pers)}")
        bad = (o > 0) & ~off
        if bad.any():
            raise PanelError(f"open but not offered at {_cells(bad, pids, pers)}")

        object.__setattr__(self, "sales", _readonly(z))
        object.__setattr__(self, "open_pct", _readonly(o))
        object.__setattr__(self, "offered", _readonly(off))
        object.__setattr__(self, "product_ids", pids)
        object.__setattr__(self, "periods", pers)

    @property
    def n(self) -> int:
        return self.sales.shape[0]

    @property
    def T(self) -> int:
        return self.sales.shape[1]

    @property
    def available(self) -> np.ndarray:
        """Boolean mask of ``S_t`` membership."""
        return self.open_pct > 0

    @property
    def m(self) -> np.ndarray:
        """Total sales per period."""
        return self.sales.sum(axis=0)

    @property
    def K(self) -> np.ndarray:
        """Total sales per product."""
        return self.sales.sum(axis=1)

    @property
    def is_binary(self) -> bool:
        return bool(np.all((self.open_pct == 0) | (self.open_pct == 1)))

    @property
    def is_homogeneous(self) -> bool:
        return bool(self.offered.all())

    def replace(self, **changes) -> "SalesPanel":
        return replace(self, **changes)

    def select_products(self, mask: np.ndarray) -> "SalesPanel":
        mask = np.asarray(mask, dtype=bool)
        return SalesPanel(
            self.sales[mask],
            self.open_pct[mask],
            self.offered[mask],
            tuple(p for p, k in zip(self.product_ids, mask) if k),
            self.periods,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, SalesPanel):
            return NotImplemented
        return (
            np.array_equal(self.sales, other.sales)
            and np.array_equal(self.open_pct, other.open_pct)
            and np.array_equal(self.offered, other.offered)
            and self.product_ids == other.product_ids
            and self.periods == other.periods
        )


def _cells(mask, pids, pers, limit: int = 10) -> str:
    idx = np.argwhere(mask)
    out = [f"(product {pids[i]}, period {pers[t]})" for i, t in idx[:limit]]
    if len(idx) > limit:
        out.append(f"... {len(idx) - limit} more")
    return ", ".join(out)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Preference weights ``v``, outside weights ``v0t`` and arrival rates."""

    v: np.ndarray
    v0t: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=float, ndmin=1, copy=True)
        v0t = np.array(self.v0t, dtype=float, ndmin=1, copy=True)
        lam = np.array(self.lam, dtype=float, ndmin=1, copy=True)
        if np.any(v < 0):
            raise ValueError("preference weights must be >= 0")
        if np.any(v0t <= 0):
            raise ValueError("outside weights must be > 0")
        if np.any(lam < 0):
            raise ValueError("arrival rates must be >= 0")
        if v0t.shape != lam.shape:
            raise ValueError("v0t and lambda must have one entry per period")
        object.__setattr__(self, "v", _readonly(v))
        object.__setattr__(self, "v0t", _readonly(v0t))
        object.__setattr__(self, "lam", _readonly(lam))

    @property
    def normalized_v(self) -> np.ndarray:
        return normalize_first(self.v)


def normalize_first(v: np.ndarray) -> np.ndarray:
    """Scale ``v`` so its first positive entry equals 1."""
    v = np.asarray(v, dtype=float)
    pos = np.flatnonzero(v > 0)
    if pos.size == 0:
        return v.copy()
    return v / v[pos[0]]


BOUND_MODES = ("sales", "share")


@dataclass(frozen=True)
class EstimationConfig:
    """Model and solver settings.

    ``bounds`` gives ``L_t`` directly (``inf`` = unconstrained).
    Alternatively ``bound_multiplier`` C generates ``L_t = C * m_t``
    (``bound_mode="sales"``) or ``L_t = C * m_t / s`` (``bound_mode="share"``).
    """

    market_share: float
    alpha: float = 0.0
    bounds: tuple[float, ...] | None = None
    bound_multiplier: float | None = None
    bound_mode: str = "sales"
    max_iters: int = 10000
    tol_obj: float = 1e-9
    tol_param: float = 1e-8
    newton_eps: float = 1e-10
    step: str = "armijo"
    armijo_beta: float = 1e-3
    armijo_tau: float = 0.5
    armijo_gamma0: float = 1.0
    fw_gap_tol: float = 1e-4
    divergence_factor: float = 1e6
    fixed_point_tol: float = 1e-12
    fixed_point_max_iter: int = 100000

    def __post_init__(self):
        if not 0.0 < self.market_share < 1.0:
            raise ValueError("market_share must lie strictly inside (0, 1)")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.bound_multiplier is not None and not self.bound_multiplier > 0:
            raise ValueError("bound_multiplier must be > 0")
        if self.bound_mode not in BOUND_MODES:
            raise ValueError(f"bound_mode must be one of {BOUND_MODES}")
        if self.bounds is not None:
            b = tuple(float(x) for x in self.bounds)
            if any(not (x >= 0) for x in b):
                raise ValueError("bounds must be >= 0 (inf allowed)")
            object.__setattr__(self, "bounds", b)
        for name in ("tol_obj", "tol_param", "newton_eps", "fixed_point_tol", "divergence_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.fw_gap_tol < 0:
            raise ValueError("fw_gap_tol must be >= 0")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.step not in ("armijo", "default"):
            raise ValueError("step must be 'armijo' or 'default'")
        if not (0 < self.armijo_beta < 1 and 0 < self.armijo_tau < 1 and 0 < self.armijo_gamma0 <= 1):
            raise ValueError("Armijo parameters out of range")

    @property
    def r(self) -> float:
        return (1.0 - self.market_share) / self.market_share

    @property
    def s_tilde(self) -> float:
        return self.market_share / (1.0 - self.market_share)

    def resolve_bounds(self, panel: SalesPanel) -> np.ndarray:
        """Per-period upper bounds ``L_t`` for ``panel``."""
        if self.bounds is not None:
            L = np.asarray(self.bounds, dtype=float)
            if L.shape != (panel.T,):
                raise ValueError(f"expected {panel.T} bounds, got {L.size}")
            return L
        if self.bound_multiplier is not None:
            L = self.bound_multiplier * panel.m
            return L / self.market_share if self.bound_mode == "share" else L
        return np.full(panel.T, np.inf)


@dataclass(frozen=True)
class SellDownSpec:
    """Excess attraction ``l`` for the lowest available product per period.

    ``lowest[t]`` is a 0-based product index, or -1 when nothing is open.
    """

    l: float
    lowest: tuple[int, ...]

    def __post_init__(self):
        if not self.l >= 0:
            raise ValueError("l must be >= 0")
        object.__setattr__(self, "lowest", tuple(int(i) for i in self.lowest))

    @classmethod
    def from_panel(cls, panel: SalesPanel, l: float) -> "SellDownSpec":
        """Lowest available product = highest index in each assortment."""
        lowest = []
        for t in range(panel.T):
            idx = np.flatnonzero(panel.available[:, t])
            lowest.append(int(idx[-1]) if idx.size else -1)
        return cls(l, tuple(lowest))

    def check(self, panel: SalesPanel) -> None:
        if len(self.lowest) != panel.T:
            raise ValueError("lowest must have one entry per period")
        for t, j in enumerate(self.lowest):
            has_open = panel.available[:, t].any()
            if has_open and not (0 <= j < panel.n and panel.available[j, t]):
                raise ValueError(f"lowest product {j} is not available in period {panel.periods[t]}")
            if not has_open and j != -1:
                raise ValueError(f"period {panel.periods[t]} has no open product; lowest must be -1")


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """Output of a solver run.

    ``primary_demand`` is a (n, T) matrix in the layout of the published
    demand tables; ``objective_trace`` has ``iterations + 1`` entries.
    """

    solver: str
    params: ModelParams
    primary_demand: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    wall_time: float
    converged: bool
    binding_periods: frozenset[int]
    config: EstimationConfig | None = None
    diverged: bool = False
    message: str = ""
    product_ids: tuple[str, ...] = ()
    periods: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)

    @property
    def v(self) -> np.ndarray:
        return self.params.v

    @property
    def lam(self) -> np.ndarray:
        return self.params.lam

    @property
    def normalized_v(self) -> np.ndarray:
        return self.params.normalized_v

    @property
    def total_demand(self) -> float:
        """Sum of arrival rates over the horizon."""
        return float(self.params.lam.sum())

    @property
    def objective(self) -> float:
        return float(self.objective_trace[-1])


# ---------------------------------------------------------------------------
# Choice probabilities
# ---------------------------------------------------------------------------


def _check_v(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("weight vector must be a non-empty 1-d array")
    return v


def choice_probability(assortment: Iterable[int], v, v0: float) -> np.ndarray:
    """MNL probabilities over an assortment.

    Returns a vector of length ``n + 1``: entry 0 is the outside
    alternative and entry ``i + 1`` is product ``i``.
    """
    v = _check_v(v)
    if not v0 > 0:
        raise ValueError("v0 must be > 0")
    idx = np.unique(np.fromiter(assortment, dtype=int))
    if idx.size and (idx.min() < 0 or idx.max() >= v.size):
        raise ValueError("assortment index out of range")
    if np.any(v[idx] <= 0):
        raise ValueError("weights must be positive on the assortment")
    w = np.zeros(v.size + 1)
    w[0] = v0
    w[idx + 1] = v[idx]
    return w / w.sum()


def choice_probability_partial(o_t, v, v0t: float) -> np.ndarray:
    """Probabilities with each weight scaled by its open fraction."""
    v = _check_v(v)
    o = np.asarray(o_t, dtype=float)
    if o.shape != v.shape:
        raise ValueError("open_pct row and v differ in length")
    if np.any((o < 0) | (o > 1)):
        raise ValueError("open_pct entries must lie in [0, 1]")
    if not v0t > 0:
        raise ValueError("v0t must be > 0")
    w = np.concatenate(([v0t], v * o))
    return w / w.sum()


def choice_probability_selldown(assortment: Iterable[int], lowest_index: int, v, v0: float, l: float) -> np.ndarray:
    """Probabilities with excess attraction ``l`` on the lowest product."""
    v = _check_v(v)
    idx = np.unique(np.fromiter(assortment, dtype=int))
    if lowest_index not in set(idx.tolist()):
        raise ValueError("lowest_index must belong to the assortment")
    if not l >= 0:
        raise ValueError("l must be >= 0")
    if not v0 > 0:
        raise ValueError("v0 must be > 0")
    if np.any(v[idx] <= 0):
        raise ValueError("weights must be positive on the assortment")
    w = np.zeros(v.size + 1)
    w[0] = v0
    w[idx + 1] = v[idx]
    w[lowest_index + 1] += l
    return w / w.sum()


# ---------------------------------------------------------------------------
# Likelihoods
# ---------------------------------------------------------------------------


def _xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """x*log(y) with 0*log(anything) = 0 and x>0, y=0 -> -inf."""
    x = np.asarray(x, dtype=float)
    y = np.broadcast_to(np.asarray(y, dtype=float), x.shape)
    out = np.zeros(x.shape)
    pos = x > 0
    with np.errstate(divide="ignore"):
        out[pos] = x[pos] * np.log(y[pos])
    return out


def _poisson_part(m: np.ndarray, lam: np.ndarray, num: np.ndarray, den: np.ndarray) -> float:
    """sum_t m log(lam/den) - lam * num/den, with empty terms dropped."""
    total = 0.0
    for mt, lt, nt, dt in zip(m, lam, num, den):
        if mt > 0:
            if lt <= 0 or nt <= 0:
                return -math.inf
            total += mt * math.log(lt / dt)
        if lt > 0 and nt > 0:
            total -= lt * nt / dt
    return total


def _check_params(panel: SalesPanel, params: ModelParams) -> None:
    if params.v.shape != (panel.n,) or params.lam.shape != (panel.T,):
        raise ValueError("parameter dimensions do not match the panel")


def loglik_basic(panel: SalesPanel, params: ModelParams) -> float:
    """Incomplete-data log-likelihood of the basic attraction model.

    Returns ``-inf`` when a period with sales has ``lambda_t = 0``.
    """
    _check_params(panel, params)
    S = panel.available
    ss = (params.v[:, None] * S).sum(axis=0)
    head = _poisson_part(panel.m, params.lam, ss, params.v0t + ss)
    return head + float(_xlogy(panel.sales, params.v[:, None]).sum())


def loglik_partial(panel: SalesPanel, params: ModelParams, drop_open_constant: bool = False) -> float:
    """Log-likelihood with open-percentage scaled weights.

    With ``drop_open_constant=True`` the parameter-free ``sum z log o``
    term is left out.
    """
    _check_params(panel, params)
    o = panel.open_pct
    vo = params.v[:, None] * o
    ss = vo.sum(axis=0)
    head = _poisson_part(panel.m, params.lam, ss, params.v0t + ss)
    tail = _xlogy(panel.sales, params.v[:, None]).sum()
    if not drop_open_constant:
        tail += _xlogy(panel.sales, o).sum()
    return head + float(tail)


def loglik_selldown(panel: SalesPanel, params: ModelParams, spec: SellDownSpec) -> float:
    """Log-likelihood with excess attraction on the lowest open product."""
    _check_params(panel, params)
    spec.check(panel)
    S = panel.available
    veff = np.where(S, params.v[:, None], 0.0)
    for t, j in enumerate(spec.lowest):
        if j >= 0:
            veff[j, t] += spec.l
    ss = veff.sum(axis=0)
    head = _poisson_part(panel.m, params.lam, ss, params.v0t + ss)
    return head + float(_xlogy(panel.sales, veff).sum())


# ---------------------------------------------------------------------------
# KKT-reduced objective
# ---------------------------------------------------------------------------


def outside_weight(v, offered_t, open_t, r: float, alpha: float) -> float:
    """Outside-alternative weight ``r[(1-a) sum_I v + a sum_S v o]``."""
    v = np.asarray(v, dtype=float)
    off = np.asarray(offered_t, dtype=bool)
    o = np.asarray(open_t, dtype=float)
    if not r > 0 or not 0 <= alpha <= 1:
        raise ValueError("need r > 0 and alpha in [0, 1]")
    if not off.any():
        raise ValueError("offer set is empty; outside weight would be 0")
    return float(r * ((1 - alpha) * v[off].sum() + alpha * (v * o).sum()))


def outside_weights(panel: SalesPanel, v, r: float, alpha: float) -> np.ndarray:
    """Vectorised :func:`outside_weight` over all periods.

    Periods with an empty offer set get ``nan``.
    """
    v = np.asarray(v, dtype=float)
    si = (v[:, None] * panel.offered).sum(axis=0)
    ss = (v[:, None] * panel.open_pct).sum(axis=0)
    v0t = r * ((1 - alpha) * si + alpha * ss)
    v0t[~panel.offered.any(axis=0)] = np.nan
    return v0t


def _bounds_array(panel: SalesPanel, bounds) -> np.ndarray:
    if bounds is None:
        return np.full(panel.T, np.inf)
    L = np.asarray(bounds, dtype=float)
    if L.ndim == 0:
        L = np.full(panel.T, float(L))
    if L.shape != (panel.T,):
        raise ValueError("bounds must have one entry per period")
    return L


def binding_mask(panel: SalesPanel, v, v0t, bounds) -> np.ndarray:
    """Boolean mask of periods whose arrival-rate bound is active."""
    v = np.asarray(v, dtype=float)
    L = _bounds_array(panel, bounds)
    ss = (v[:, None] * panel.open_pct).sum(axis=0)
    m = panel.m
    ok = (m > 0) & (ss > 0)
    out = np.zeros(panel.T, dtype=bool)
    d = np.asarray(v0t, dtype=float) + ss
    out[ok] = L[ok] < m[ok] * d[ok] / ss[ok]
    return out


def binding_set(panel: SalesPanel, v, v0t, bounds) -> frozenset[int]:
    """0-based indices of periods in the binding set."""
    return frozenset(int(t) for t in np.flatnonzero(binding_mask(panel, v, v0t, bounds)))


def reduced_objective(panel: SalesPanel, v, v0t, bounds) -> float:
    """Log-likelihood with arrival rates profiled out under ``lambda <= L``.

    Equals :func:`loglik_partial` at ``lambda = recover_lambda(...)`` minus
    the constant ``sum z log o``. Binding periods contribute
    ``m log L - m log D - L * S/D`` so the value is continuous when a
    period enters or leaves the binding set.
    """
    v = np.asarray(v, dtype=float)
    v0t = np.asarray(v0t, dtype=float)
    L = _bounds_array(panel, bounds)
    K = panel.K
    if np.any((K > 0) & (v <= 0)):
        return -math.inf
    val = float(_xlogy(K, v).sum())
    m = panel.m
    ss = (v[:, None] * panel.open_pct).sum(axis=0)
    act = m > 0
    if np.any(ss[act] <= 0):
        return -math.inf
    d = v0t + ss
    B = binding_mask(panel, v, v0t, L)
    nb = act & ~B
    val -= float(np.sum(m[nb] * np.log(ss[nb])))
    val += float(np.sum(m[nb] * np.log(m[nb]) - m[nb]))
    if B.any():
        val -= float(np.sum(m[B] * np.log(d[B]) + L[B] * ss[B] / d[B]))
        val += float(np.sum(m[B] * np.log(L[B])))
    return val


def recover_lambda(panel: SalesPanel, v, v0t, bounds) -> np.ndarray:
    """Arrival rates ``min(L_t, m_t (v0t + S_t) / S_t)``; 0 where ``m_t = 0``."""
    v = np.asarray(v, dtype=float)
    v0t = np.asarray(v0t, dtype=float)
    L = _bounds_array(panel, bounds)
    m = panel.m
    ss = (v[:, None] * panel.open_pct).sum(axis=0)
    act = m > 0
    if np.any(ss[act] <= 0):
        bad = [panel.periods[t] for t in np.flatnonzero(act & (ss <= 0))]
        raise ValueError(f"periods {bad} have sales but zero effective open weight")
    lam = np.zeros(panel.T)
    lam[act] = m[act] * (v0t[act] + ss[act]) / ss[act]
    return np.minimum(lam, L)


def demand_matrix(panel: SalesPanel, v, v0t, lam) -> np.ndarray:
    """``lambda_t * P_j(I_t)``: demand if every offered product were open."""
    v = np.asarray(v, dtype=float)
    w = v[:, None] * panel.offered
    den = np.asarray(v0t, dtype=float) + w.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(w > 0, np.asarray(lam)[None, :] * w / den, 0.0)
    return out
