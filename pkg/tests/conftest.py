import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from ich_estimands import Dataset  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_full_dataset(rng, n=None, t_star=None, tie_grid=True, intercurrent=True):
    """Small full-form trial with optional coarse time grid to force ties."""
    n = int(rng.integers(4, 51)) if n is None else n
    arm = np.zeros(n, dtype=int)
    arm[: n // 2] = 1
    rng.shuffle(arm)
    if tie_grid:
        T = rng.integers(1, 12, n) / 2.0
        R = rng.integers(1, 12, n) / 2.0
        C = rng.integers(1, 14, n) / 2.0
    else:
        T, R, C = rng.exponential(3.0, n), rng.exponential(4.0, n), rng.exponential(5.0, n)
    if not intercurrent:
        R = np.full(n, np.inf)
    t_obs = np.minimum(T, C)
    r_obs = np.minimum(R, C)
    t_star = float(t_star if t_star is not None else max(t_obs.max(), 1.0))
    return Dataset.from_arrays(
        arm,
        t_star=t_star,
        t_obs=t_obs,
        delta_t=(T <= C).astype(int),
        r_obs=r_obs,
        delta_r=(R <= C).astype(int),
    )


@st.composite
def full_datasets(draw, max_n=50, intercurrent=True):
    n = draw(st.integers(2, max_n))
    times = st.integers(1, 10).map(lambda k: k / 2.0)
    rows = draw(st.lists(st.tuples(times, times, times), min_size=n, max_size=n))
    arm = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    arm[0], arm[1] = 0, 1
    T = np.array([r[0] for r in rows])
    R = np.array([r[1] for r in rows]) if intercurrent else np.full(n, np.inf)
    C = np.array([r[2] for r in rows])
    t_obs, r_obs = np.minimum(T, C), np.minimum(R, C)
    t_star = draw(st.sampled_from([2.5, 4.0, 5.0]))
    return Dataset.from_arrays(
        arm,
        t_star=t_star,
        t_obs=t_obs,
        delta_t=(T <= C).astype(int),
        r_obs=r_obs,
        delta_r=(R <= C).astype(int),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def reduced_example():
    """Arm 1 is the three-subject arm {(2, J=1), (3, J=2), (5, J=0)}."""
    return Dataset.from_arrays(
        [1, 1, 1, 0, 0, 0],
        t_star=5.0,
        time=[2.0, 3.0, 5.0, 1.0, 4.0, 5.0],
        cause=[1, 2, 0, 1, 0, 0],
    )
