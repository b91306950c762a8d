import json

import numpy as np
import pytest

import boundvol as bv
from boundvol.network import CheckpointError

from conftest import random_conv_net, random_dense_net


class TestCheckpointRoundTrip:
    @pytest.mark.parametrize("precision", ["single", "double"])
    def test_dense_round_trip(self, tmp_path, precision):
        net = random_dense_net(np.random.default_rng(0), precision=precision)
        path = tmp_path / "net.json"
        bv.checkpoint_save(net, path)
        loaded = bv.checkpoint_load(path)
        assert loaded.specs == net.specs
        assert loaded.precision == net.precision
        for a, b in zip(loaded.weights, net.weights):
            assert np.array_equal(a, b)

    def test_conv_round_trip(self, tmp_path):
        net = random_conv_net(np.random.default_rng(1))
        path = tmp_path / "net.json"
        bv.checkpoint_save(net, path)
        loaded = bv.checkpoint_load(path)
        assert loaded.input_shape == net.input_shape
        for a, b in zip(loaded.weights, net.weights):
            if a is not None:
                assert np.array_equal(a, b)

    def test_truncated_file(self, tmp_path):
        net = random_dense_net(np.random.default_rng(2))
        path = tmp_path / "net.json"
        bv.checkpoint_save(net, path)
        path.write_bytes(path.read_bytes()[: path.stat().st_size // 2])
        with pytest.raises(CheckpointError, match="malformed"):
            bv.checkpoint_load(path)

    def test_version_mismatch(self, tmp_path):
        net = random_dense_net(np.random.default_rng(3))
        path = tmp_path / "net.json"
        bv.checkpoint_save(net, path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="version"):
            bv.checkpoint_load(path)

    def test_shape_mismatch(self, tmp_path):
        net = random_dense_net(np.random.default_rng(4))
        path = tmp_path / "net.json"
        bv.checkpoint_save(net, path)
        doc = json.loads(path.read_text())
        doc["weights"][0] = [[0.0]]
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError):
            bv.checkpoint_load(path)
