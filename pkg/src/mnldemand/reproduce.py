"""Regenerate the published example tables and diff them against golden CSVs."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .csvio import demand_rows, fmt, read_table
from .em import estimate_em
from .fixtures import FIXTURE_MARKET_SHARE, golden_dir, load_fixture
from .fw import estimate_fw
from .mm import estimate_mm
from .model import EstimateResult, EstimationConfig, ModelParams, SalesPanel, choice_probability_selldown
from .split import disaggregate_panel, split_sales

__all__ = ["TARGETS", "Reproduction", "reproduce", "diff_tables", "projection_panel"]

S = FIXTURE_MARKET_SHARE


@dataclass
class Reproduction:
    target: str
    header: list[str]
    rows: list[list[str]]
    diffs: list[str] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.diffs


# ---------------------------------------------------------------------------
# computations shared with the acceptance tests
# ---------------------------------------------------------------------------


def run_table2(fw_gap_tol: float = 1e-7) -> EstimateResult:
    # the unconstrained problem converges quickly, so tighten the gap test
    return estimate_fw(load_fixture("partial"), EstimationConfig(S, alpha=0.0, fw_gap_tol=fw_gap_tol))


def run_split_em() -> tuple[EstimateResult, SalesPanel, np.ndarray, np.ndarray]:
    """EM on the split panel; returns the result plus aggregated demand and lambda."""
    panel = load_fixture("partial")
    fine, pmap = disaggregate_panel(panel)
    res = estimate_em(fine, EstimationConfig(S, alpha=0.0))
    return res, panel, pmap.aggregate(res.primary_demand), pmap.aggregate(res.lam)


def projection_panel(panel: SalesPanel) -> SalesPanel:
    """Sales divided by open percentage, availability rounded up to 1."""
    o = panel.open_pct
    z = np.divide(panel.sales, o, out=np.zeros_like(panel.sales), where=o > 0)
    return panel.replace(sales=z, open_pct=(o > 0).astype(float))


def run_projection() -> EstimateResult:
    return estimate_em(projection_panel(load_fixture("partial")), EstimationConfig(S, alpha=0.0))


def run_table9() -> EstimateResult:
    return estimate_em(load_fixture("vvrr"), EstimationConfig(S, alpha=0.0))


def run_table10() -> EstimateResult:
    return estimate_em(load_fixture("vvrr"), EstimationConfig(S, alpha=1.0))


def run_table12(alpha: float = 0.0, naive: bool = False) -> EstimateResult:
    return estimate_em(load_fixture("schedule"), EstimationConfig(S, alpha=alpha), naive=naive)


def run_table13(**overrides) -> EstimateResult:
    cfg = EstimationConfig(S, alpha=0.0, bound_multiplier=2.0, bound_mode="sales", **overrides)
    return estimate_mm(load_fixture("schedule"), cfg)


def run_table13_fw(**overrides) -> EstimateResult:
    cfg = EstimationConfig(S, alpha=0.0, bound_multiplier=2.0, bound_mode="sales", **overrides)
    return estimate_fw(load_fixture("schedule"), cfg)


SELLDOWN_V = (0.4, 0.7, 0.1)
SELLDOWN_L = 10.0


def selldown_probabilities() -> list[tuple[int, int, float]]:
    """(lowest class, outcome, probability) with outcome 0 = outside."""
    out = []
    for k in (1, 2, 3):
        p = choice_probability_selldown(range(k), k - 1, SELLDOWN_V, 1.0, SELLDOWN_L)
        out.extend((k, j, float(p[j])) for j in range(k + 1))
    return out


# ---------------------------------------------------------------------------
# table builders
# ---------------------------------------------------------------------------


def _demand_table(res: EstimateResult, panel: SalesPanel, demand=None, lam=None):
    if demand is not None:
        res = EstimateResult(
            res.solver, ModelParams(res.v, np.ones(lam.size), lam), demand, res.objective_trace,
            res.iterations, res.wall_time, res.converged, frozenset(), res.config,
            product_ids=panel.product_ids, periods=panel.periods,
        )
    return demand_rows(res, panel.offered)


def _t1():
    p = load_fixture("partial")
    rows = [[pid, per, fmt(p.sales[i, t]), fmt(p.open_pct[i, t])]
            for i, pid in enumerate(p.product_ids) for t, per in enumerate(p.periods)]
    return ["product_id", "period", "sales", "open_pct"], rows, {}


def _t2():
    res = run_table2()
    h, r = _demand_table(res, load_fixture("partial"))
    return h, r, {"result": res}


def _t3():
    p = load_fixture("partial")
    rows = []
    for t, per in enumerate(p.periods):
        for k, seg in enumerate(split_sales(p.sales[:, t], p.open_pct[:, t]), start=1):
            for i in np.flatnonzero(seg.open):
                rows.append([per, str(k), p.product_ids[i], fmt(seg.sales[i])])
    return ["period", "segment", "product_id", "sales"], rows, {}


def _t5():
    res, panel, demand, lam = run_split_em()
    h, r = _demand_table(res, panel, demand, lam)
    return h, r, {"result": res, "total": float(lam.sum())}


def _t8():
    rows = [[str(k), str(j), fmt(100 * p)] for k, j, p in selldown_probabilities()]
    return ["lowest", "outcome", "percent"], rows, {}


def _em_table(runner, fixture):
    def build():
        res = runner()
        h, r = _demand_table(res, load_fixture(fixture))
        return h, r, {"result": res}
    return build


def _totals():
    values = {
        "partial_direct": run_table2().total_demand,
        "split_em": float(run_split_em()[3].sum()),
        "projection": run_projection().total_demand,
        "schedule_extended": run_table12().total_demand,
        "schedule_naive": run_table12(naive=True).total_demand,
        "schedule_alpha1": run_table12(alpha=1.0).total_demand,
    }
    return ["name", "value"], [[k, fmt(v)] for k, v in values.items()], {"values": values}


def _projection():
    res = run_projection()
    return ["name", "value"], [["projection", fmt(res.total_demand)]], {"result": res}


@dataclass(frozen=True)
class Target:
    build: Callable
    golden: str
    kind: str  # "matrix", "long" or "scalar"
    cell_tol: float
    v_tol: float = 0.0
    lam_tol: float = 0.0
    key_cols: int = 1


TARGETS: dict[str, Target] = {
    "table1": Target(_t1, "table1.csv", "long", 0.0, key_cols=2),
    "table2": Target(_t2, "table2.csv", "matrix", 0.02, 0.005, 0.02),
    "table3": Target(_t3, "table3.csv", "long", 0.005, key_cols=3),
    "table5": Target(_t5, "table5.csv", "matrix", 0.01, 0.001, 0.01),
    "table8": Target(_t8, "table8.csv", "long", 0.05, key_cols=2),
    "table9": Target(_em_table(run_table9, "vvrr"), "table9.csv", "matrix", 0.01, 0.001, 0.01),
    "table10": Target(_em_table(run_table10, "vvrr"), "table10.csv", "matrix", 0.01, 0.001, 0.01),
    "table12": Target(_em_table(run_table12, "schedule"), "table12.csv", "matrix", 0.01, 0.001, 0.01),
    "table13": Target(_em_table(run_table13, "schedule"), "table13.csv", "matrix", 0.01, 0.001, 0.01),
    "totals": Target(_totals, "totals.csv", "scalar", 0.5),
    "table-projection": Target(_projection, "totals.csv", "scalar", 0.5),
}


def _num(text: str) -> float | None:
    return None if text == "" else float(text)


def diff_tables(target: Target, header, rows, gheader, grows) -> list[str]:
    """Cell-wise numeric comparison against a golden table."""
    diffs = []
    if target.kind == "scalar":
        gold = {r[0]: (float(r[1]), float(r[2]) if len(r) > 2 and r[2] else target.cell_tol) for r in grows}
        for name, val in rows:
            if name not in gold:
                diffs.append(f"{name}: no golden value")
                continue
            exp, tol = gold[name]
            if abs(float(val) - exp) > tol + 1e-9:
                diffs.append(f"{name}: expected {exp} +/- {tol}, got {float(val):.6f}")
        return diffs
    if target.kind == "long":
        nkey = target.key_cols
        got = {tuple(r[:nkey]): r[nkey:] for r in rows}
        exp = {tuple(r[:nkey]): r[nkey:] for r in grows}
        for key in sorted(set(got) | set(exp)):
            if key not in got:
                diffs.append(f"{','.join(key)}: missing (expected {','.join(exp[key])})")
            elif key not in exp:
                diffs.append(f"{','.join(key)}: unexpected cell {','.join(got[key])}")
            else:
                for g, e in zip(got[key], exp[key]):
                    if abs(float(g) - float(e)) > target.cell_tol + 1e-9:
                        diffs.append(f"{','.join(key)}: expected {e}, got {float(g):.6f}")
        return diffs
    if header != gheader:
        return [f"header mismatch: {header} vs {gheader}"]
    gmap = {r[0]: r for r in grows}
    for r in rows:
        if r[0] not in gmap:
            diffs.append(f"row {r[0]}: not in golden file")
            continue
        g = gmap[r[0]]
        for col, a, b in zip(header[1:], r[1:], g[1:]):
            x, y = _num(a), _num(b)
            if (x is None) != (y is None):
                diffs.append(f"row {r[0]}, column {col}: expected '{b}', got '{a}'")
                continue
            if x is None:
                continue
            tol = target.v_tol if col == "v" else target.lam_tol if r[0] == "lambda" else target.cell_tol
            if abs(x - y) > tol + 1e-9:
                diffs.append(f"row {r[0]}, column {col}: expected {b}, got {x:.6f}")
    for key in gmap.keys() - {r[0] for r in rows}:
        diffs.append(f"row {key}: missing")
    return diffs


def reproduce(target_name: str) -> Reproduction:
    """Regenerate one table and diff it against its golden file."""
    if target_name not in TARGETS:
        raise KeyError(f"unknown target '{target_name}'; choose from {sorted(TARGETS)} or 'all'")
    target = TARGETS[target_name]
    header, rows, extras = target.build()
    gheader, grows = read_table(golden_dir() / target.golden)
    if target.kind == "scalar":
        names = {r[0] for r in rows}
        grows = [r for r in grows if r[0] in names]
    diffs = diff_tables(target, header, rows, gheader, grows)
    return Reproduction(target_name, header, rows, diffs, extras)


def reproduce_all(jobs: int = 1) -> list[Reproduction]:
    names = list(TARGETS)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(reproduce, names))
    return [reproduce(n) for n in names]
