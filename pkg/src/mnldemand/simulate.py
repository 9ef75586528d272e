"""Synthetic sales panels drawn from the Poisson-MNL model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, SalesPanel, choice_probability

__all__ = ["SimulationSpec", "simulate_panel"]

POLICIES = ("open", "random", "nested")


@dataclass(frozen=True)
class SimulationSpec:
    """Inputs for :func:`simulate_panel`.

    ``policy`` controls availability:

    * ``"open"``: every product open in every period;
    * ``"random"``: each product closed independently with ``close_prob``
      (at least one product stays open);
    * ``"nested"``: products ``0..k-1`` open with ``k`` uniform on ``1..n``,
      mimicking fare classes closing from the top of the index range.
    """

    n: int
    T: int
    v: tuple[float, ...]
    lam: tuple[float, ...] | float
    v0: float = 1.0
    policy: str = "open"
    close_prob: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if len(self.v) != self.n or any(x <= 0 for x in self.v):
            raise ValueError("v must hold n positive weights")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}")
        if not self.v0 > 0:
            raise ValueError("v0 must be > 0")
        if not 0 <= self.close_prob < 1:
            raise ValueError("close_prob must lie in [0, 1)")

    def lam_vector(self) -> np.ndarray:
        lam = np.broadcast_to(np.asarray(self.lam, dtype=float), (self.T,)).copy()
        if np.any(lam < 0):
            raise ValueError("arrival rates must be >= 0")
        return lam


def simulate_panel(spec: SimulationSpec) -> tuple[SalesPanel, ModelParams]:
    """Draw a panel: Poisson arrivals, each customer choosing by MNL.

    Only sales of the retailer's products are recorded. The output is a
    deterministic function of ``spec``.
    """
    rng = np.random.default_rng(spec.seed)
    v = np.asarray(spec.v, dtype=float)
    lam = spec.lam_vector()
    n, T = spec.n, spec.T
    open_ = np.ones((n, T))
    sales = np.zeros((n, T))
    for t in range(T):
        if spec.policy == "random":
            row = rng.random(n) >= spec.close_prob
            if not row.any():
                row[rng.integers(n)] = True
            open_[:, t] = row
        elif spec.policy == "nested":
            k = rng.integers(1, n + 1)
            open_[:, t] = np.arange(n) < k
        arrivals = rng.poisson(lam[t])
        p = choice_probability(np.flatnonzero(open_[:, t]), v, spec.v0)
        sales[:, t] = rng.multinomial(arrivals, p)[1:]
    truth = ModelParams(v, np.full(T, spec.v0), lam)
    return SalesPanel(sales, open_), truth
