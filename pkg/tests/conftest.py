import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dshgcn.data import SyntheticConfig, generate_synthetic  # noqa: E402

SMALL_DIMS = {"emotional": 10, "attentional": 7, "upper_body": 5}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dataset():
    return generate_synthetic(SyntheticConfig(n_students=4, snapshots=12, n_classes=2, seed=3,
                                              dims=SMALL_DIMS, distractors=2))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
