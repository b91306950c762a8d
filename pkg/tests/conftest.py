import os
from pathlib import Path

import numpy as np
import pytest

import boundvol as bv
from boundvol.layers import LayerSpec

DATA_DIR = Path(os.environ.get("BOUNDVOL_DATA_DIR", Path(__file__).parent.parent / "data"))

MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
CIFAR_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))


def _require(files):
    missing = [f for f in files if not (DATA_DIR / f).exists()]
    if missing:
        pytest.skip(f"dataset files not present under {DATA_DIR}: {missing}")


@pytest.fixture(scope="session")
def mnist_train():
    _require(MNIST_FILES)
    return bv.load_idx(DATA_DIR / MNIST_FILES[0], DATA_DIR / MNIST_FILES[1], name="mnist")


@pytest.fixture(scope="session")
def cifar10_train():
    _require(CIFAR_FILES)
    return bv.load_cifar10([DATA_DIR / f for f in CIFAR_FILES])


def random_dense_net(rng, n_in=None, n_hidden=None, n_out=None, precision="double"):
    n_in = n_in or int(rng.integers(2, 7))
    n_hidden = n_hidden or int(rng.integers(2, 8))
    n_out = n_out or int(rng.integers(2, 5))
    act = rng.choice(["relu", "tanh"])
    net = bv.build_network(
        [
            LayerSpec("dense", in_units=n_in, out_units=n_hidden, activation=act),
            LayerSpec("dense", in_units=n_hidden, out_units=n_out, activation="softmax"),
        ],
        precision,
    )
    return bv.init_he_normal(net, int(rng.integers(0, 2**32)))


def random_conv_net(rng, precision="double"):
    c1 = int(rng.integers(1, 3))
    side = 6
    net = bv.build_network(
        [
            LayerSpec("conv2d", in_channels=1, out_channels=c1, kernel_size=3,
                      stride=1, padding="same", activation="relu"),
            LayerSpec("maxpool2d", pool_size=2, stride=2),
            LayerSpec("flatten"),
            LayerSpec("dense", in_units=c1 * (side // 2) ** 2, out_units=3,
                      activation="softmax"),
        ],
        precision,
        input_shape=(side, side, 1),
    )
    return bv.init_he_normal(net, int(rng.integers(0, 2**32)))


def linear_margin_net(offset=0.5, dim=2):
    """Dense dim->2 softmax net whose logit difference is x[0] - offset.

    The positive side is class 1, so a point pushed exactly onto the
    boundary ties and resolves to class 0 (a flip).
    """
    net = bv.build_network(
        [LayerSpec("dense", in_units=dim, out_units=2, activation="softmax")], "double"
    )
    w = np.zeros((dim, 2))
    w[0] = (-0.5, 0.5)
    net.weights[0] = w
    net.biases[0] = np.array([offset / 2, -offset / 2])
    return net
