import sys
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from aeprob.model import Cohort, Group  # noqa: E402

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def hand_cohort():
    # 1:AE, 2:CE, 3:censored, 4:AE
    return Cohort.from_arrays([1.0, 2.0, 3.0, 4.0], [1, 2, 0, 1])


@pytest.fixture
def trial_csv():
    with resources.as_file(resources.files("aeprob") / "data" / "synthetic_trial.csv") as p:
        yield Path(p)


@st.composite
def cohort_arrays(draw, min_size=1, max_size=30, max_time=12, statuses=(0, 1, 2)):
    """(times, status) with integer-valued times so that ties are common."""
    n = draw(st.integers(min_size, max_size))
    times = draw(st.lists(st.integers(1, max_time), min_size=n, max_size=n))
    status = draw(st.lists(st.sampled_from(statuses), min_size=n, max_size=n))
    return np.asarray(times, dtype=float), np.asarray(status)


def cohorts(**kw):
    return cohort_arrays(**kw).map(lambda ts: Cohort.from_arrays(*ts))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
