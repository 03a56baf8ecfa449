import dataclasses
import os

import numpy as np
import pytest

from hfelsim.config import load_config
from hfelsim.harness import run

CONFIG_PATH = os.path.join(os.path.dirname(__file__), "..", "configs",
                           "canonical.yaml")


def canonical_config(**overrides):
    cfg = load_config(CONFIG_PATH)
    schedule = overrides.pop("schedule", None)
    if schedule:
        merged = {**dataclasses.asdict(cfg.schedule), **schedule}
        cfg = cfg.replace(schedule=merged)
    if overrides:
        cfg = cfg.replace(**overrides)
    return cfg


@pytest.fixture(scope="session")
def canonical_runs():
    """Memoized full canonical runs, shared across acceptance criteria."""
    cache = {}

    def get(method, seed, **overrides):
        key = (method, seed, tuple(sorted(overrides.items())))
        if key not in cache:
            cfg = canonical_config(method=method, seed=seed)
            if overrides:
                cfg = cfg.replace(**overrides)
            cache[key] = run(cfg)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance criteria verdicts after the test run."""
    from . import test_acceptance
    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.VERDICTS:
            terminalreporter.write_line(line)
