import pytest

import voxtend as vx
from voxtend.estimators import TrainConfig, train_estimator

TOY_SEED = 0


@pytest.fixture(scope="session")
def sched200():
    return vx.build_schedule("linear", 200)


@pytest.fixture(scope="session")
def toy_world():
    return vx.ToyWorld(vx.SeedStream(TOY_SEED).derive("world"))


@pytest.fixture(scope="session")
def trained(toy_world, sched200):
    """Conditionally-trained toy estimator plus its loss curve (trained once)."""
    master = vx.SeedStream(TOY_SEED)
    net = vx.SmallNetEstimator(8, 8, 4, 200, hidden=(512, 512), seed=master.derive("init"))
    trained_net, losses = train_estimator(toy_world, net, TrainConfig(), sched200,
                                          master.derive("train"))
    return trained_net, losses


@pytest.fixture(scope="session")
def trained_net(trained):
    return trained[0]
