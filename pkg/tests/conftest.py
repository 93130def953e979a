from __future__ import annotations

from functools import lru_cache

import pytest

from smpstop.cli import resolve_model_path
from smpstop.model import load_model
from smpstop.moments import compute_moments
from support import random_model


@pytest.fixture(scope="session")
def maintenance():
    return load_model(resolve_model_path("maintenance.json"))


@pytest.fixture(scope="session")
def maintenance_moments(maintenance):
    return compute_moments(maintenance)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@lru_cache(maxsize=None)
def seeded(seed: int, n_max: int = 8):
    model = random_model(seed, n_max=n_max)
    return model, compute_moments(model)


@pytest.fixture(scope="session")
def seeded_model():
    return seeded
