import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from loglinear import Baselines, ModelSpec, build_design, fit  # noqa: E402
from loglinear.ingest import load_fixture  # noqa: E402
from reference_values import BASELINES, HOMOGENEOUS  # noqa: E402


@pytest.fixture(scope="session")
def table_a7():
    return load_fixture("A7")


@pytest.fixture(scope="session")
def table_b12():
    return load_fixture("B12")


def fit_model(table, label, baselines=BASELINES):
    spec = ModelSpec.parse(label)
    design = build_design(table, spec, Baselines.for_table(table, baselines))
    return fit(table, design)


@pytest.fixture(scope="session")
def model1(table_a7):
    return fit_model(table_a7, HOMOGENEOUS)


@pytest.fixture(scope="session")
def model2(table_b12):
    return fit_model(table_b12, HOMOGENEOUS)


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.get_closest_marker("acceptance") and report.when == "call":
        doc = (item.function.__doc__ or "").strip().splitlines()[0]
        _ACCEPTANCE[item.name] = ("PASS" if report.passed else "FAIL", doc)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        status, doc = _ACCEPTANCE[name]
        number = int(name.split("_")[2])
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {doc}")
