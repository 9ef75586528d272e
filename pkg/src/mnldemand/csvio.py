"""CSV ingestion and result serialization.

Schemas (header row required):

* sales:        ``product_id,period,sales``
* availability: ``product_id,period,open_pct``
* offered:      ``product_id,period``
* bounds:       ``period,bound`` (``inf`` allowed)
* v0t:          ``period,v0t``

Numbers are written with 12 significant digits. All writes go to a
temporary file in the target directory which is then renamed.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PanelError
from .model import EstimateResult, EstimationConfig, SalesPanel, natural_key, normalize_first

__all__ = [
    "PanelFileSet",
    "load_panel",
    "write_panel",
    "write_result",
    "read_table",
    "read_period_vector",
    "write_period_vector",
    "load_config",
    "atomic_write_text",
    "fmt",
]

PRECISION = 12


def fmt(x: float) -> str:
    """Format a float with the interchange precision."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0:
        return "0"
    return f"{x:.{PRECISION}g}"


@dataclass(frozen=True)
class PanelFileSet:
    sales: Path
    availability: Path
    offered: Path | None = None
    bounds: Path | None = None


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def read_table(path) -> tuple[list[str], list[list[str]]]:
    """Read a CSV file into its header and stripped string rows."""
    with open(path, newline="") as fh:
        rows = [[c.strip() for c in r] for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        return [], []
    return rows[0], rows[1:]


def _records(path, columns: tuple[str, ...]) -> list[list[str]]:
    header, rows = read_table(path)
    if not header:
        return []
    idx = {}
    for c in columns:
        if c not in header:
            raise PanelError(f"{path}: missing column '{c}' (expected {','.join(columns)})")
        idx[c] = header.index(c)
    out = []
    for lineno, r in enumerate(rows, start=2):
        if len(r) < len(header):
            raise PanelError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
        out.append([r[idx[c]] for c in columns] + [lineno])
    return out


def _number(path, lineno, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise PanelError(f"{path}:{lineno}: '{text}' is not a number") from None


def load_panel(files: PanelFileSet | None = None, *, sales=None, availability=None, offered=None) -> SalesPanel:
    """Load and validate a panel.

    Without an offered file, product ``i`` is offered in exactly the periods
    for which it has an availability record; a product with no records at
    all is offered in every period. Missing sales default to 0 and missing
    availability of offered products to 0 (closed).
    """
    if files is None:
        files = PanelFileSet(Path(sales), Path(availability), Path(offered) if offered else None)
    srec = _records(files.sales, ("product_id", "period", "sales"))
    arec = _records(files.availability, ("product_id", "period", "open_pct"))
    orec = _records(files.offered, ("product_id", "period")) if files.offered else None

    products, periods = set(), set()
    for recs in (srec, arec, orec or []):
        for r in recs:
            products.add(r[0])
            periods.add(r[1])
    pids = sorted(products, key=natural_key)
    pers = sorted(periods, key=natural_key)
    pi = {p: k for k, p in enumerate(pids)}
    ti = {p: k for k, p in enumerate(pers)}
    n, T = len(pids), len(pers)

    def fill(recs, path, what):
        mat = np.zeros((n, T))
        seen = np.zeros((n, T), dtype=bool)
        for pid, per, val, lineno in recs:
            i, t = pi[pid], ti[per]
            if seen[i, t]:
                raise PanelError(f"{path}:{lineno}: duplicate {what} row for product {pid}, period {per}")
            seen[i, t] = True
            mat[i, t] = _number(path, lineno, val)
        return mat, seen

    z, _ = fill(srec, files.sales, "sales")
    o, has_a = fill(arec, files.availability, "availability")
    bad = np.argwhere((o < 0) | (o > 1) | ~np.isfinite(o))
    if bad.size:
        cells = ", ".join(f"(product {pids[i]}, period {pers[t]}) = {o[i, t]}" for i, t in bad[:10])
        raise PanelError(f"{files.availability}: open_pct outside [0, 1] at {cells}")
    if orec is not None:
        off = np.zeros((n, T), dtype=bool)
        for pid, per, lineno in orec:
            i, t = pi[pid], ti[per]
            if off[i, t]:
                raise PanelError(f"{files.offered}:{lineno}: duplicate offered row for product {pid}, period {per}")
            off[i, t] = True
    else:
        off = has_a.copy()
        off[~has_a.any(axis=1)] = True
    return SalesPanel(z, o, off, tuple(pids), tuple(pers))


def write_panel(panel: SalesPanel, directory, prefix: str = "") -> dict[str, Path]:
    """Write ``sales``, ``availability`` and ``offered`` CSVs for a panel."""
    d = Path(directory)
    paths = {k: d / f"{prefix}{k}.csv" for k in ("sales", "availability", "offered")}
    srows, arows, orows = [], [], []
    for i, pid in enumerate(panel.product_ids):
        for t, per in enumerate(panel.periods):
            if panel.sales[i, t] != 0:
                srows.append([pid, per, fmt(panel.sales[i, t])])
            if panel.offered[i, t]:
                arows.append([pid, per, fmt(panel.open_pct[i, t])])
                orows.append([pid, per])
    atomic_write_text(paths["sales"], _csv_text(["product_id", "period", "sales"], srows))
    atomic_write_text(paths["availability"], _csv_text(["product_id", "period", "open_pct"], arows))
    atomic_write_text(paths["offered"], _csv_text(["product_id", "period"], orows))
    return paths


def read_period_vector(path, column: str, periods) -> np.ndarray:
    """Read a ``period,<column>`` file aligned to ``periods``."""
    recs = _records(path, ("period", column))
    pos = {p: k for k, p in enumerate(periods)}
    out = np.full(len(periods), np.nan)
    for per, val, lineno in recs:
        if per not in pos:
            raise PanelError(f"{path}:{lineno}: unknown period {per}")
        if not np.isnan(out[pos[per]]):
            raise PanelError(f"{path}:{lineno}: duplicate period {per}")
        out[pos[per]] = _number(path, lineno, val)
    if np.isnan(out).any():
        missing = [periods[k] for k in np.flatnonzero(np.isnan(out))]
        raise PanelError(f"{path}: no {column} for periods {missing[:10]}")
    return out


def write_period_vector(path, column: str, periods, values) -> None:
    atomic_write_text(path, _csv_text(["period", column], [[p, fmt(x)] for p, x in zip(periods, values)]))


def demand_rows(result: EstimateResult, offered=None, digits: int | None = None):
    """Header and rows of the demand-matrix layout.

    Cells of products outside the offer set are left blank. The ``v``
    column is normalized so the first product with sales has weight 1.
    """
    f = fmt if digits is None else (lambda x: f"{x:.{digits}f}")
    periods = result.periods or tuple(str(t + 1) for t in range(result.lam.size))
    pids = result.product_ids or tuple(str(i + 1) for i in range(result.v.size))
    vn = normalize_first(result.v)
    header = ["product_id", *periods, "v"]
    rows = []
    for i, pid in enumerate(pids):
        cells = []
        for t in range(len(periods)):
            if offered is not None and not offered[i, t]:
                cells.append("")
            else:
                cells.append(f(result.primary_demand[i, t]))
        rows.append([pid, *cells, f(vn[i])])
    rows.append(["lambda", *(f(x) for x in result.lam), ""])
    return header, rows


def result_metadata(result: EstimateResult, bounds_mode: str | None = None) -> dict:
    cfg = result.config
    meta = {
        "solver": result.solver,
        "market_share": cfg.market_share if cfg else None,
        "alpha": cfg.alpha if cfg else None,
        "bounds_mode": bounds_mode or _bounds_mode(cfg),
        "iterations": result.iterations,
        "wall_time": result.wall_time,
        "converged": result.converged,
        "diverged": result.diverged,
        "message": result.message,
        "total_demand": result.total_demand,
        "objective": result.objective,
        "binding_periods": [result.periods[t] for t in sorted(result.binding_periods)] if result.periods else sorted(result.binding_periods),
        "v": [float(x) for x in result.v],
        "v0t": [float(x) for x in result.params.v0t],
        "lambda": [float(x) for x in result.lam],
        "likelihood_convention": "multinomial coefficients and sum z*log(open_pct) omitted",
    }
    if cfg is not None:
        meta["config"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(cfg).items()}
    return meta


def _bounds_mode(cfg: EstimationConfig | None) -> str:
    if cfg is None:
        return "none"
    if cfg.bounds is not None:
        return "file"
    if cfg.bound_multiplier is not None:
        return cfg.bound_mode
    return "none"


def write_result(result: EstimateResult, path, offered=None, bounds_mode: str | None = None) -> tuple[Path, Path]:
    """Write the demand matrix CSV and a ``<path>.meta.json`` sidecar."""
    path = Path(path)
    header, rows = demand_rows(result, offered)
    atomic_write_text(path, _csv_text(header, rows))
    meta_path = path.with_name(path.name + ".meta.json")
    meta = result_metadata(result, bounds_mode)
    atomic_write_text(meta_path, json.dumps(meta, indent=2, default=_json_default, allow_nan=True) + "\n")
    return path, meta_path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(EstimationConfig)}


def _convert(name: str, text: str):
    text = text.strip()
    if name == "bounds":
        return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    if name in ("bound_mode", "step"):
        return text
    if name in ("max_iters", "fixed_point_max_iter"):
        return int(text)
    if name == "bound_multiplier" and text.lower() in ("", "none"):
        return None
    return float(text)


def load_config(path) -> dict:
    """Parse ``key=value`` lines (``#`` comments) into config keyword args."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, val = (x.strip() for x in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "s":
                key = "market_share"
            if key not in _CONFIG_FIELDS:
                raise ValueError(f"{path}:{lineno}: unknown setting '{key}'")
            try:
                out[key] = _convert(key, val)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: '{val}'") from None
    return out
