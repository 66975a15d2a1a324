"""Shared fixtures and the acceptance-criterion report.

Tests marked ``@pytest.mark.criterion(n, "label")`` are collected into a
pass/fail table printed at the end of the run, one line per criterion.
Measured values can be attached with ``record_property("detail", text)``.
"""

import pytest

from stgfdm import cli, problems
from stgfdm.geometry import generate_cloud
from stgfdm.stencil import build_stencils

_CRITERIA = {}

# about a second end to end; no graded band, side 2 refined once
SMALL = cli.RunConfig(example=1, nx=8, m=30, band=0, level=1)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, label): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, label = mark.args
    entry = _CRITERIA.setdefault(n, {"label": label, "ok": True, "ran": False, "details": []})
    if rep.when == "call":
        entry["ran"] = True
        details = [v for k, v in item.user_properties if k == "detail"]
        entry["details"].extend(details)
    if rep.failed:
        entry["ok"] = False
        if rep.when == "call":
            entry["details"].append(f"{item.name} failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        detail = "; ".join(e["details"])
        tr.write_line(f"CRITERION {n:>2}: {status}  {e['label']}" + (f"  [{detail}]" if detail else ""))


@pytest.fixture(scope="session")
def ex1():
    return problems.example(1)


@pytest.fixture(scope="session")
def ex1_cloud16(ex1):
    return generate_cloud(ex1.domain(16), ex1.interface, ex1.refine, m=60)


@pytest.fixture(scope="session")
def ex1_stencils16(ex1_cloud16):
    return build_stencils(ex1_cloud16, 60)


@pytest.fixture(scope="session")
def ex1_run16():
    """Default Example 1 solve at nx = 16, shared by several criteria."""
    return cli.run(cli.RunConfig(example=1, nx=16), write=False)


@pytest.fixture(scope="session")
def small_run():
    """A cheap coarse run for plumbing tests."""
    return cli.run(SMALL, write=False)
