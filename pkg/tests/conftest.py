from __future__ import annotations

import random

import pytest

from cosbandit.presets import holder_family


@pytest.fixture
def rng():
    return random.Random(12345)


@pytest.fixture(scope="session")
def small_holder_log():
    from cosbandit import run

    return run(holder_family(T=3000, seed=7))


def pytest_terminal_summary(terminalreporter):
    from reconstruct import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE, key=lambda e: e[0]):
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
