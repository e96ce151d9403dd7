"""Shared fixtures: bundled scenario paths and cached end-to-end runs.

The full simulations are expensive (tens of seconds), so each bundled
scenario is run at most once per session and its outputs are shared by the
module tests and the acceptance tests.
"""

import json
from pathlib import Path

import pytest

import dptco

SCEN_DIR = Path(dptco.__file__).parent / "scenarios"

# one verdict line per acceptance criterion, re-emitted after the test
# summary so they survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def scenario_path(name: str) -> str:
    return str(SCEN_DIR / f"{name}.json")


@pytest.fixture(scope="session")
def out_root(tmp_path_factory):
    return tmp_path_factory.mktemp("runs")


def _run(name: str, out_root: Path, **kwargs) -> dict:
    from dptco.cli import run_scenario

    code, manifest = run_scenario(scenario_path(name),
                                  str(out_root / name), **kwargs)
    return {"code": code, "manifest": manifest,
            "out": out_root / name, "name": name}


@pytest.fixture(scope="session")
def ring_run(out_root):
    return _run("ring", out_root)


@pytest.fixture(scope="session")
def e2gen_run(out_root):
    return _run("example2_generator", out_root)


@pytest.fixture(scope="session")
def example1_run(out_root):
    return _run("example1", out_root)


@pytest.fixture(scope="session")
def example2_run(out_root):
    return _run("example2", out_root)


@pytest.fixture(scope="session")
def all_runs(ring_run, e2gen_run, example1_run, example2_run):
    return [ring_run, e2gen_run, example1_run, example2_run]


def modified_scenario(name: str, tmp: Path, edits) -> str:
    """Copy a bundled scenario with an edit callback applied; returns path."""
    raw = json.loads(Path(scenario_path(name)).read_text())
    edits(raw)
    p = tmp / f"{name}_mod.json"
    p.write_text(json.dumps(raw))
    return str(p)
