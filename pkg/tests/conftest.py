import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from neuromia.data import load_iris, load_wdbc, normalize  # noqa: E402
from neuromia.prepare import prepare_data  # noqa: E402


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    env = os.environ.get("NEUROMIA_DATA")
    if env and (Path(env) / "iris.data").is_file() and (Path(env) / "mnist").is_dir():
        return Path(env)
    return prepare_data(tmp_path_factory.mktemp("data"))


@pytest.fixture(scope="session")
def iris(data_dir):
    return normalize(load_iris(data_dir / "iris.data"))


@pytest.fixture(scope="session")
def wdbc(data_dir):
    return normalize(load_wdbc(data_dir / "wdbc.data"))


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(config.acceptance_lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record and print ``CRITERION n: PASS|FAIL detail``; returns the verdict."""

    def record(n, ok, detail):
        line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        request.config.acceptance_lines.append(line)
        return ok

    return record
