import numpy as np
import pytest

from flowpiclab.nn import (
    NetworkConfig,
    build_network,
    checkpoint_from,
    load_checkpoint,
    save_checkpoint,
)
from flowpiclab.nn.network import _flatten_size


class TestParameterCounts:
    @pytest.mark.parametrize("config,total", [
        (NetworkConfig(32, 5, True, "supervised"), 61281),
        (NetworkConfig(32, 5, False, "supervised"), 61281),
        (NetworkConfig(32, 5, False, "simclr_pretrain", 30), 68842),
        (NetworkConfig(32, 5, False, "simclr_pretrain", 84), 75376),
        (NetworkConfig(32, 5, False, "finetune", 30), 51297),
    ])
    def test_totals(self, config, total):
        assert build_network(config).param_count() == total

    def test_finetune_trainable_only_classifier(self):
        net = build_network(NetworkConfig(32, 5, False, "finetune", 30))
        assert net.trainable_count() == 605
        assert set(net.trainable_parameters()) == {
            "classifier.weight", "classifier.bias"}

    def test_64_flatten_size(self):
        assert _flatten_size(64) == 16 * 13 * 13
        net = build_network(NetworkConfig(64, 5, False, "supervised"))
        assert net.parameters()["fc1.weight"].shape == (120, 2704)


class TestConfigValidation:
    def test_unsupported_dim(self):
        with pytest.raises(ValueError):
            NetworkConfig(48, 5)

    def test_projection_requirements(self):
        with pytest.raises(ValueError):
            NetworkConfig(32, 5, mode="simclr_pretrain")
        with pytest.raises(ValueError):
            NetworkConfig(32, 5, mode="supervised", projection_dim=30)


class TestForward:
    def test_zero_network_uniform_logits(self):
        net = build_network(NetworkConfig(32, 5, False, "supervised"))
        for p in net.parameters().values():
            p[...] = 0.0
        x = np.random.default_rng(0).random((4, 1, 32, 32)).astype(np.float32)
        logits = net.forward(x)
        assert np.all(logits == 0.0)
        from flowpiclab.nn import cross_entropy, softmax
        assert np.allclose(softmax(logits), 0.2)
        loss, _ = cross_entropy(logits, np.zeros(4, dtype=np.int64))
        assert loss == pytest.approx(np.log(5), abs=1e-6)

    def test_eval_deterministic_with_dropout_config(self):
        net = build_network(NetworkConfig(32, 5, True, "supervised"), seed=1)
        x = np.random.default_rng(1).random((3, 1, 32, 32)).astype(np.float32)
        a = net.forward(x, train=False)
        b = net.forward(x, train=False)
        assert np.array_equal(a, b)

    def test_shape_mismatch(self):
        net = build_network(NetworkConfig(32, 5, False, "supervised"))
        with pytest.raises(ValueError):
            net.forward(np.zeros((2, 1, 64, 64), dtype=np.float32))

    def test_output_shapes(self):
        x = np.random.default_rng(2).random((3, 1, 32, 32)).astype(np.float32)
        sup = build_network(NetworkConfig(32, 7, False, "supervised"))
        assert sup.forward(x).shape == (3, 7)
        sim = build_network(NetworkConfig(32, 7, False, "simclr_pretrain", 30))
        assert sim.forward(x).shape == (3, 30)

    def test_matches_naive_layer_oracle(self):
        """Independent per-layer reference: plain loops, no shared code."""
        net = build_network(NetworkConfig(32, 3, False, "supervised"), seed=3)
        params = net.parameters()
        rng = np.random.default_rng(3)
        x = rng.random((2, 1, 32, 32)).astype(np.float32)
        got = net.forward(x)

        def conv(inp, w, b):
            n, _, h, wdt = inp.shape
            o, c, k, _ = w.shape
            out = np.zeros((n, o, h - k + 1, wdt - k + 1))
            for ni in range(n):
                for oi in range(o):
                    for i in range(h - k + 1):
                        for j in range(wdt - k + 1):
                            out[ni, oi, i, j] = b[oi] + np.sum(
                                inp[ni, :, i:i + k, j:j + k] * w[oi])
            return out

        def pool(inp):
            n, c, h, wdt = inp.shape
            out = np.zeros((n, c, h // 2, wdt // 2))
            for i in range(h // 2):
                for j in range(wdt // 2):
                    out[:, :, i, j] = inp[:, :, 2 * i:2 * i + 2,
                                          2 * j:2 * j + 2].max(axis=(2, 3))
            return out

        a = np.maximum(conv(x.astype(np.float64), params["conv1.weight"],
                            params["conv1.bias"]), 0)
        a = pool(a)
        a = np.maximum(conv(a, params["conv2.weight"], params["conv2.bias"]), 0)
        a = pool(a)
        a = a.reshape(2, -1)
        a = np.maximum(a @ params["fc1.weight"].T + params["fc1.bias"], 0)
        a = np.maximum(a @ params["fc2.weight"].T + params["fc2.bias"], 0)
        a = a @ params["fc3.weight"].T + params["fc3.bias"]
        assert np.abs(got - a).max() < 1e-5


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        net = build_network(NetworkConfig(32, 5, False, "simclr_pretrain", 30),
                            seed=11)
        ckpt = checkpoint_from(net, {"seed": 11, "epoch": 0})
        path = tmp_path / "ckpt.bin"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.config == ckpt.config
        assert loaded.metadata == ckpt.metadata
        assert list(loaded.parameters) == list(ckpt.parameters)
        for name in ckpt.parameters:
            assert np.array_equal(loaded.parameters[name], ckpt.parameters[name])

    def test_loaded_network_forward_identical(self, tmp_path):
        net = build_network(NetworkConfig(32, 5, False, "supervised"), seed=4)
        x = np.random.default_rng(4).random((3, 1, 32, 32)).astype(np.float32)
        expected = net.forward(x)
        path = tmp_path / "ckpt.bin"
        save_checkpoint(checkpoint_from(net), path)
        again = load_checkpoint(path).to_network()
        assert np.array_equal(again.forward(x), expected)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTACKPT" + b"\0" * 32)
        with pytest.raises(ValueError, match="not a checkpoint"):
            load_checkpoint(path)
