from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from curvecast.dataset_io import ResultsTable


def write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def random_results(rng: np.random.Generator, n_datasets: int, n_methods: int,
                   prefix: str = "d") -> ResultsTable:
    methods = tuple(f"m{j}" for j in range(n_methods))
    datasets = tuple(f"{prefix}{i:03d}" for i in range(n_datasets))
    values = rng.uniform(0.5, 1.0, size=(n_datasets, n_methods))
    hib = rng.random(n_datasets) < 0.7
    return ResultsTable(methods, datasets, values, hib)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
