import numpy as np
import pytest

from fgen.distributions import JointLossMaskDistribution
from fgen.supersample import SupersampleLossTensor


def bernoulli_tensor(p_num=1, p_den=4):
    """Exact interpolating channel: with probability p the test loss is 1 and the train loss 0.

    One draw, one row, ``2 * p_den`` masks, so the empirical joint equals the
    population joint.
    """
    k2 = 2 * p_den
    losses = np.zeros((1, k2, 1, 2))
    masks = np.zeros((1, k2, 1), dtype=int)
    masks[0, p_den:, 0] = 1
    for m in range(p_num):
        losses[0, m, 0] = (0.0, 1.0)  # U=0 trains on column 0, tests on 1
        losses[0, p_den + m, 0] = (1.0, 0.0)
    return SupersampleLossTensor(losses, masks, "zero_one")


def bernoulli_joint(p=0.25):
    support = np.array([-1.0, 0.0, 1.0])
    return JointLossMaskDistribution.from_conditionals(support, [0.0, 1 - p, p], [p, 1 - p, 0.0])


DETERMINISTIC = JointLossMaskDistribution(np.array([-1.0, 1.0]), np.array([[0.0, 0.5], [0.5, 0.0]]))


@pytest.fixture
def det_joint():
    return DETERMINISTIC


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
