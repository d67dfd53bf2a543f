import functools

import numpy as np
import pytest

from screening.core import NuclearConfig
from screening.optimize import OptimizeOptions, minimize

_CRITERIA: dict[int, tuple[bool, str]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    _CRITERIA[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@functools.lru_cache(maxsize=None)
def cached_run(N: int, positions: tuple, charges: tuple, d: float, restarts: int, seed: int = 0):
    nuc = NuclearConfig(np.array(positions, dtype=float), np.array(charges, dtype=float), d)
    return nuc, minimize(N, nuc, OptimizeOptions(restarts=restarts, seed=seed))


@pytest.fixture(scope="session")
def run():
    return cached_run


@pytest.fixture(scope="session")
def criteria():
    return record
