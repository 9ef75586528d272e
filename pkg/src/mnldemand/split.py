"""Sales splitting for partially available products.

A period in which product ``j`` was open for a fraction ``o_j`` of the time
is cut into sub-periods with fully open or fully closed products. Sales are
assumed to arrive uniformly in time, so each sub-period receives a share of
``b_j`` proportional to its length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PanelError
from .model import SalesPanel

__all__ = [
    "SplitSegment",
    "PeriodMap",
    "compute_time_proportions",
    "split_sales",
    "disaggregate_panel",
    "merge_identical_assortments",
]


@dataclass(frozen=True, eq=False)
class SplitSegment:
    """One fully-open/closed slice of a period."""

    weight: float
    sales: np.ndarray
    open: np.ndarray


@dataclass(frozen=True, eq=False)
class PeriodMap:
    """Maps fine periods onto coarse periods.

    ``source[k]`` is the coarse period that fine period ``k`` belongs to and
    ``weight[k]`` its share of that period's time.
    """

    source: np.ndarray
    weight: np.ndarray
    n_coarse: int

    def aggregate(self, values) -> np.ndarray:
        """Sum the last axis of ``values`` over sibling fine periods."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.source.size:
            raise ValueError("last axis must match the number of fine periods")
        out = np.zeros(values.shape[:-1] + (self.n_coarse,))
        for k, c in enumerate(self.source):
            out[..., c] += values[..., k]
        return out

    def expand(self, values) -> np.ndarray:
        """Broadcast per-coarse-period values to fine periods."""
        values = np.asarray(values)
        return values[..., self.source]

    def groups(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.source == c) for c in range(self.n_coarse)]


def compute_time_proportions(o) -> np.ndarray:
    """Segment lengths ``alpha_i = o_i - o_{i+1}`` (``alpha_n = o_n``).

    ``o`` must already be sorted in non-increasing order.
    """
    o = np.asarray(o, dtype=float)
    if o.ndim != 1:
        raise ValueError("expected a 1-d availability vector")
    if np.any((o < 0) | (o > 1)):
        raise ValueError("availability must lie in [0, 1]")
    if np.any(np.diff(o) > 0):
        raise ValueError("availability vector must be sorted non-increasing")
    return o - np.append(o[1:], 0.0)


def split_sales(b, o) -> list[SplitSegment]:
    """Split one period's sales ``b`` observed under availability ``o``.

    Products are ordered by decreasing availability (ties keep their
    original order). Segment ``i`` opens the first ``i`` products in that
    order and receives ``alpha_i / o_j`` of each open product's sales.
    Zero-length segments are skipped. Outputs use the original product
    order.
    """
    b = np.asarray(b, dtype=float)
    o = np.asarray(o, dtype=float)
    if b.shape != o.shape or b.ndim != 1:
        raise ValueError("sales and availability must be 1-d of equal length")
    bad = np.flatnonzero((b > 0) & (o <= 0))
    if bad.size:
        raise PanelError(f"sales recorded for closed products {bad.tolist()}")
    order = np.argsort(-o, kind="stable")
    alpha = compute_time_proportions(o[order])
    segments = []
    for i, a in enumerate(alpha):
        if a <= 0:
            continue
        members = order[: i + 1]
        sales = np.zeros_like(b)
        sales[members] = a / o[members] * b[members]
        opened = np.zeros_like(b)
        opened[members] = 1.0
        segments.append(SplitSegment(float(a), sales, opened))
    return segments


def disaggregate_panel(panel: SalesPanel) -> tuple[SalesPanel, PeriodMap]:
    """Replace every fractional-availability period by its split segments.

    Periods whose availability is already 0/1 pass through unchanged. Time
    in which no product was open is dropped. Segment labels are
    ``"<period>_<k>"``.
    """
    cols_z, cols_o, cols_i, labels, source, weight = [], [], [], [], [], []
    for t in range(panel.T):
        o = panel.open_pct[:, t]
        if np.all((o == 0) | (o == 1)):
            cols_z.append(panel.sales[:, t])
            cols_o.append(o)
            cols_i.append(panel.offered[:, t])
            labels.append(panel.periods[t])
            source.append(t)
            weight.append(1.0)
            continue
        for k, seg in enumerate(split_sales(panel.sales[:, t], o), start=1):
            cols_z.append(seg.sales)
            cols_o.append(seg.open)
            cols_i.append(panel.offered[:, t])
            labels.append(f"{panel.periods[t]}_{k}")
            source.append(t)
            weight.append(seg.weight)
    new = SalesPanel(
        np.column_stack(cols_z) if cols_z else np.zeros((panel.n, 0)),
        np.column_stack(cols_o) if cols_o else np.zeros((panel.n, 0)),
        np.column_stack(cols_i) if cols_i else np.zeros((panel.n, 0), dtype=bool),
        panel.product_ids,
        tuple(labels),
    )
    return new, PeriodMap(np.asarray(source, dtype=int), np.asarray(weight), panel.T)


def merge_identical_assortments(panel: SalesPanel) -> tuple[SalesPanel, PeriodMap]:
    """Merge periods that share the same offer set and assortment.

    Sales are summed; merged periods appear in order of first occurrence
    and are labelled by joining the source labels with ``+``. The returned
    map sends each original period to its merged period.
    """
    if not panel.is_binary:
        raise PanelError("merging requires 0/1 availability; split the panel first")
    keys: dict[bytes, int] = {}
    source = np.empty(panel.T, dtype=int)
    for t in range(panel.T):
        key = panel.offered[:, t].tobytes() + panel.open_pct[:, t].tobytes()
        source[t] = keys.setdefault(key, len(keys))
    pmap = PeriodMap(source, np.ones(panel.T), len(keys))
    firsts = [int(np.flatnonzero(source == c)[0]) for c in range(len(keys))]
    labels = tuple("+".join(panel.periods[t] for t in np.flatnonzero(source == c)) for c in range(len(keys)))
    merged = SalesPanel(
        pmap.aggregate(panel.sales),
        panel.open_pct[:, firsts],
        panel.offered[:, firsts],
        panel.product_ids,
        labels,
    )
    return merged, pmap
