import numpy as np
import pytest

from firedetect.network import build_classifier
from firedetect.synthetic import make_blob_samples
from firedetect.training import TrainConfig, train


@pytest.fixture(scope="session")
def blob_training():
    """One training run on the 40-image synthetic blob set, shared by the suite.

    Early-stops the moment train accuracy hits 100% so the run doubles as the
    capacity check (epochs otherwise default, cap raised to 200).
    """
    samples = make_blob_samples(40, 64, seed=11)
    net = build_classifier(64, seed=11)
    config = TrainConfig(epochs=200, seed=11, stop_at_train_accuracy=1.0)
    net, curves = train(net, samples, config)
    return net, curves, samples


@pytest.fixture(scope="session")
def always_fire_net():
    """A network whose eval output is exactly [0.5, 0.5]: with the >= 0.5
    threshold rule it predicts fire on every input."""
    net = build_classifier(24, seed=0)
    for arr in net.param_arrays():
        arr[...] = 0.0
    return net


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
