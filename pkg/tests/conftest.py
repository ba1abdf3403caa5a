import numpy as np
import pytest

from ccpmsp.instances import GenConfig, make_instance
from ccpmsp.model import Scenario
from ccpmsp.oracle import brute_optimal


@pytest.fixture(scope="session")
def uniform_scenario():
    """Three jobs with t = (2, 6, 3) and every setup time 1: the hand-checked
    example used throughout the diagram tests (T = 5 makes {2} and {1,3} the
    minimal infeasible sets, total time 14)."""
    setup = np.ones((4, 4))
    np.fill_diagonal(setup, 0.0)
    return Scenario(exec=np.array([2.0, 6.0, 3.0]), setup=setup)


def random_scenario(rng, n):
    """Euclidean setup times (triangle inequality holds) and positive
    execution times."""
    pts = rng.uniform(0.0, 3.0, size=(n + 1, 2))
    diff = pts[:, None, :] - pts[None, :, :]
    setup = np.sqrt((diff**2).sum(axis=-1))
    return Scenario(exec=rng.uniform(0.5, 3.0, size=n), setup=setup)


def regression_configs(count=100):
    rng = np.random.default_rng(20240817)
    kinds = ["ors", "vrp", "equal"]
    cfgs = []
    for i in range(count):
        n = int(rng.integers(4, 9))
        m = int(rng.integers(2, 4))
        cfgs.append(
            GenConfig(
                dataset_kind=kinds[i % 3],
                n_jobs=n,
                n_machines=m,
                n_scenarios=int(rng.integers(3, 11)),
                dif=float(rng.choice([-6.0, -3.0, -1.0, 0.0, 2.0])),
                seed=9000 + i,
                capacity=-(-n // m),
                epsilon=float(rng.choice([0.05, 0.2, 0.34])),
            )
        )
    return cfgs


@pytest.fixture(scope="session")
def regression_set():
    """100 tiny instances with mixed datasets, sizes and difficulty."""
    return [make_instance(cfg) for cfg in regression_configs()]


@pytest.fixture(scope="session")
def regression_optima(regression_set):
    """Oracle optimum objective for every regression instance."""
    return [brute_optimal(inst)[1] for inst in regression_set]
