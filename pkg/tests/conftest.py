import numpy as np
import pytest

from interpolab import seeding
from interpolab.core_net import Architecture, WeightVector
from interpolab.risk import Dataset

# criterion number -> (passed, detail), filled by the acceptance tests
ACCEPTANCE: dict[str, tuple[bool, str]] = {}
CRITERIA = [str(i) for i in range(1, 12)]


@pytest.fixture
def record():
    def _record(criterion: str, passed: bool, detail: str) -> None:
        ACCEPTANCE[criterion] = (bool(passed), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in CRITERIA + sorted(set(ACCEPTANCE) - set(CRITERIA)):
        if key not in ACCEPTANCE:
            continue
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_weights(rng, arch: Architecture, scale: float = 1.0) -> WeightVector:
    return WeightVector(arch, rng.uniform(-scale, scale, arch.n_weights))


def random_data(rng, d: int, m: int) -> Dataset:
    return Dataset(rng.uniform(-1, 1, (m, d)), rng.uniform(-1, 1, m))


def grid_data(n: int, seed: int = 0, d: int = 1) -> Dataset:
    """x_i = (i/n, 0, ..., 0) with fair +-1 responses."""
    xs = np.zeros((n, d))
    xs[:, 0] = np.arange(1, n + 1) / n
    ys = seeding.derive_rng(seed, seeding.DATA).choice([-1.0, 1.0], size=n)
    return Dataset(xs, ys)
