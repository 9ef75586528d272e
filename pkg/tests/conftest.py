import numpy as np
import pytest
from hypothesis import settings

from mnldemand import SalesPanel

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# criterion id -> list of (test name, passed)
_CRITERIA: dict[str, list[tuple[str, bool]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        key = marker.args[0]
        _CRITERIA.setdefault(key, [])
        _CRITERIA[key].append((item.name, rep.passed))
        item.config._criterion_titles = getattr(item.config, "_criterion_titles", {})
        item.config._criterion_titles[key] = marker.args[1]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    titles = getattr(config, "_criterion_titles", {})
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int(k.rstrip("abcde")), k)):
        results = _CRITERIA[key]
        ok = all(p for _, p in results)
        failed = [n for n, p in results if not p]
        line = f"criterion {key:<4} {'PASS' if ok else 'FAIL'}  {titles.get(key, '')}"
        if failed:
            line += f"  (failing: {', '.join(failed)})"
        terminalreporter.write_line(line)


def random_panel(rng, n, T, binary=False, offered_all=True, min_sales=1):
    """Small valid panel with sales in every period."""
    while True:
        if binary:
            o = (rng.random((n, T)) < 0.7).astype(float)
        else:
            o = np.where(rng.random((n, T)) < 0.2, 0.0, rng.uniform(0.2, 1.0, (n, T)))
            o[rng.random((n, T)) < 0.3] = 1.0
        for t in range(T):
            if not o[:, t].any():
                o[rng.integers(n), t] = 1.0
        z = np.where(o > 0, rng.integers(0, 20, (n, T)).astype(float), 0.0)
        for t in range(T):
            if z[:, t].sum() < min_sales:
                i = np.flatnonzero(o[:, t])[0]
                z[i, t] = float(min_sales)
        if (z.sum(axis=1) > 0).all():
            offered = np.ones((n, T), dtype=bool) if offered_all else (o > 0) | (rng.random((n, T)) < 0.5)
            return SalesPanel(z, o, offered)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
