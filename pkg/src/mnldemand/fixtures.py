"""Shipped example panels and golden tables.

Set ``MNLDEMAND_FIXTURE_DIR`` to read fixture CSVs from another directory
(same file names).
"""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

from .csvio import PanelFileSet, load_panel
from .model import SalesPanel

__all__ = ["FIXTURES", "FIXTURE_MARKET_SHARE", "fixture_dir", "golden_dir", "fixture_files", "load_fixture"]

ENV_VAR = "MNLDEMAND_FIXTURE_DIR"

# Market share used for every shipped example; lambda_t = m_t / s in the
# fully-open periods of the five-product example gives s = 0.7.
FIXTURE_MARKET_SHARE = 0.7

FIXTURES = {
    "partial": "five products with fractional open percentages",
    "vvrr": "five products, nested 0/1 closures over 15 periods",
    "schedule": "three flights over 30 periods with a schedule change",
    "selldown": "three classes, all sales at the lowest open class",
}


def _data_root() -> Path:
    return Path(str(resources.files("mnldemand") / "data"))


def fixture_dir() -> Path:
    override = os.environ.get(ENV_VAR)
    return Path(override) if override else _data_root() / "fixtures"


def golden_dir() -> Path:
    return _data_root() / "golden"


def fixture_files(name: str) -> PanelFileSet:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture '{name}'; choose from {sorted(FIXTURES)}")
    d = fixture_dir()
    offered = d / f"{name}_offered.csv"
    return PanelFileSet(
        d / f"{name}_sales.csv",
        d / f"{name}_availability.csv",
        offered if offered.exists() else None,
    )


def load_fixture(name: str) -> SalesPanel:
    return load_panel(fixture_files(name))
