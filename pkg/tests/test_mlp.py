"""Network training, forward passes, and the model container format.

The quantized datapath is checked against a scalar oracle that redoes the
whole forward pass in exact rational arithmetic, quantizing once per
multiply-accumulate exactly as a fixed-width pipeline would.
"""

from __future__ import annotations

import math
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest

from ari.mlp import (
    FULL_FLOAT,
    FULL_STOCHASTIC,
    FloatBackend,
    MlpModel,
    ModelFileError,
    ScoreVector,
    StochasticBackend,
    Topology,
    accuracy,
    forward,
    forward_batch,
    forward_real,
    forward_real_batch,
    load_model,
    loss_and_gradients,
    save_model,
    train,
)
from ari.qfloat import FP8, FP10, FP16, QFormat, quantize
from ari.scsim import ScNetwork


def oracle_quantize(x: Fraction, fmt: QFormat) -> float:
    """Exact-rational quantizer: round half to even, clear low bits."""
    if x == 0:
        return 0.0
    sign = -1.0 if x < 0 else 1.0
    ax = -x if x < 0 else x
    e = ax.numerator.bit_length() - ax.denominator.bit_length()
    if Fraction(2) ** e > ax:
        e -= 1
    ulp = Fraction(2) ** (-24 if e < -14 else e - 10)
    val = round(ax / ulp) * ulp
    if val > Fraction(65504):
        return sign * fmt.max_finite
    bits = int(np.float16(float(val)).view(np.uint16))
    bits &= 0xFFFF ^ ((1 << (10 - fmt.mantissa_bits)) - 1)
    return sign * float(np.uint16(bits).view(np.float16))


def oracle_forward(model: MlpModel, x: np.ndarray, fmt: QFormat) -> np.ndarray:
    """Scalar reference for the reduced datapath: quantize after every MAC,
    accumulators seeded with the quantized bias, fan-in in index order."""
    act = [oracle_quantize(Fraction(float(v)), fmt) for v in x]
    last = model.topology.n_weight_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        wq = [
            [oracle_quantize(Fraction(float(w[i, j])), fmt) for j in range(w.shape[1])]
            for i in range(w.shape[0])
        ]
        out = [oracle_quantize(Fraction(float(v)), fmt) for v in b]
        for j in range(w.shape[1]):
            acc = Fraction(out[j])
            for i in range(w.shape[0]):
                acc = Fraction(
                    oracle_quantize(acc + Fraction(act[i]) * Fraction(wq[i][j]), fmt)
                )
            out[j] = float(acc)
        if l < last:
            alpha = oracle_quantize(Fraction(float(model.prelu_alphas[l])), fmt)
            out = [
                v if v >= 0 else oracle_quantize(Fraction(alpha) * Fraction(v), fmt)
                for v in out
            ]
        act = out
    return np.array(act)


def tiny_model(seed: int = 0, sizes=(3, 4, 2)) -> MlpModel:
    rng = np.random.default_rng(seed)
    topo = Topology(sizes)
    weights = tuple(
        rng.uniform(-1, 1, size=(sizes[l], sizes[l + 1]))
        for l in range(topo.n_weight_layers)
    )
    biases = tuple(rng.uniform(-0.5, 0.5, size=sizes[l + 1]) for l in range(topo.n_weight_layers))
    alphas = rng.uniform(0.1, 0.5, size=topo.n_hidden)
    return MlpModel(topo, weights, biases, alphas)


class TestTopology:
    def test_properties_and_str(self):
        t = Topology((8, 16, 4))
        assert (t.n_inputs, t.n_classes) == (8, 4)
        assert (t.n_weight_layers, t.n_hidden) == (2, 1)
        assert str(t) == "8-16-4"

    def test_validation(self):
        with pytest.raises(ValueError):
            Topology((5,))
        with pytest.raises(ValueError):
            Topology((5, 0, 2))


class TestBackends:
    def test_labels_and_levels(self):
        assert FloatBackend(FP10).label == "FP10"
        assert FloatBackend(FP10).level == 10
        assert StochasticBackend(1024).label == "SC1024"
        assert StochasticBackend(1024).level == 1024
        assert FULL_FLOAT.fmt is FP16
        assert FULL_STOCHASTIC.length == 4096

    def test_stochastic_length_bounds(self):
        for bad in (32, 100, 8192):
            with pytest.raises(ValueError):
                StochasticBackend(bad)


class TestModelContainer:
    def test_shape_validation(self):
        topo = Topology((3, 4, 2))
        rng = np.random.default_rng(0)
        w = (rng.normal(size=(3, 4)), rng.normal(size=(4, 2)))
        b = (np.zeros(4), np.zeros(2))
        with pytest.raises(ValueError):
            MlpModel(topo, w[:1], b[:1], np.array([0.25]))
        with pytest.raises(ValueError):
            MlpModel(topo, (w[0].T, w[1]), b, np.array([0.25]))
        with pytest.raises(ValueError):
            MlpModel(topo, w, (np.zeros(3), np.zeros(2)), np.array([0.25]))
        with pytest.raises(ValueError):
            MlpModel(topo, w, b, np.array([0.25, 0.25]))
        with pytest.raises(ValueError):
            MlpModel(topo, w, b, np.array([-0.1]))

    def test_parameters_frozen(self):
        m = tiny_model()
        with pytest.raises(ValueError):
            m.weights[0][0, 0] = 1.0


class TestForwardReal:
    def test_single_layer_is_affine(self):
        topo = Topology((2, 2))
        m = MlpModel(
            topo,
            (np.array([[1.0, -2.0], [0.5, 3.0]]),),
            (np.array([0.25, -1.0]),),
            np.zeros(0),
        )
        x = np.array([0.4, 0.8])
        expected = x @ m.weights[0] + m.biases[0]
        assert np.allclose(forward_real(m, x), expected, rtol=0, atol=0)

    def test_hidden_layer_applies_leaky_arm(self):
        topo = Topology((1, 1, 1))
        m = MlpModel(
            topo,
            (np.array([[1.0]]), np.array([[1.0]])),
            (np.array([-2.0]), np.array([0.0])),
            np.array([0.25]),
        )
        # pre-activation 0.5 - 2 = -1.5, leaky arm gives -0.375
        assert forward_real(m, np.array([0.5]))[0] == -0.375

    def test_input_validation(self):
        m = tiny_model()
        with pytest.raises(ValueError):
            forward_real(m, np.zeros(5))
        with pytest.raises(ValueError):
            forward_real(m, np.array([np.nan, 0.0, 0.0]))
        with pytest.raises(ValueError):
            forward_batch(m, np.zeros((2, 5)), FULL_FLOAT)


class TestQuantizedForward:
    @pytest.mark.parametrize("fmt", [FP8, FP10, FP16], ids=lambda f: f.label)
    def test_matches_exact_arithmetic_oracle(self, fmt):
        m = tiny_model(seed=3)
        rng = np.random.default_rng(4)
        xs = rng.uniform(0, 1, size=(5, 3))
        got = forward_batch(m, xs, FloatBackend(fmt))
        for row, x in enumerate(xs):
            expected = oracle_forward(m, x, fmt)
            assert np.array_equal(got[row], expected)

    def test_full_width_path_is_exact_on_dyadic_parameters(self):
        # Every parameter, input, and intermediate lies on a coarse dyadic
        # grid well inside 11 significand bits, so the widest reduced
        # datapath must reproduce the real-valued pass bit for bit.
        rng = np.random.default_rng(9)
        topo = Topology((4, 3))
        w = (rng.integers(-4, 5, size=(4, 3)) / 4.0,)
        b = (rng.integers(-2, 3, size=3) / 4.0,)
        m = MlpModel(topo, w, b, np.zeros(0))
        xs = rng.integers(0, 5, size=(8, 4)) / 4.0
        assert np.array_equal(
            forward_batch(m, xs, FULL_FLOAT), forward_real_batch(m, xs)
        )

    def test_narrower_formats_change_scores(self):
        m = tiny_model(seed=5)
        rng = np.random.default_rng(6)
        xs = rng.uniform(0, 1, size=(20, 3))
        full = forward_batch(m, xs, FULL_FLOAT)
        narrow = forward_batch(m, xs, FloatBackend(FP8))
        assert not np.array_equal(full, narrow)


class TestStochasticForward:
    def test_maps_unit_interval_onto_bipolar_circuit(self):
        m = tiny_model(seed=7)
        rng = np.random.default_rng(8)
        xs = rng.uniform(0, 1, size=(3, 3))
        backend = StochasticBackend(128, master_seed=11, lfsr_width=9)
        got = forward_batch(m, xs, backend)
        net = ScNetwork(m.weights, m.biases, master_seed=11, lfsr_width=9)
        assert np.array_equal(got, net.run_batch(2.0 * xs - 1.0, 128))

    def test_forward_wraps_scores_with_backend(self):
        m = tiny_model(seed=7)
        backend = StochasticBackend(64)
        sv = forward(m, np.array([0.1, 0.5, 0.9]), backend)
        assert isinstance(sv, ScoreVector)
        assert sv.backend == backend
        assert len(sv) == 2
        with pytest.raises(AttributeError):
            sv.scores = np.zeros(2)


class TestLossAndGradients:
    def test_loss_matches_independent_cross_entropy(self):
        m = tiny_model(seed=1)
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, size=(16, 3))
        labels = rng.integers(0, 2, size=16)
        loss, _, _, _ = loss_and_gradients(m, x, labels)
        scores = forward_real_batch(m, x)
        z = scores - scores.max(axis=1, keepdims=True)
        log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        expected = -log_p[np.arange(16), labels].mean()
        assert math.isclose(loss, expected, rel_tol=1e-12)

    def test_gradients_match_central_differences(self):
        m = tiny_model(seed=10)
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 1, size=(8, 3))
        labels = rng.integers(0, 2, size=8)
        _, dws, dbs, dalpha = loss_and_gradients(m, x, labels)
        eps = 1e-6

        def loss_with(weights, biases, alphas) -> float:
            probe = MlpModel(m.topology, weights, biases, alphas)
            return loss_and_gradients(probe, x, labels)[0]

        def check(numeric, analytic):
            denom = max(1e-8, abs(numeric) + abs(analytic))
            assert abs(numeric - analytic) / denom < 1e-5

        for l, dw in enumerate(dws):
            for idx in np.ndindex(dw.shape):
                w_hi = [w.copy() for w in m.weights]
                w_lo = [w.copy() for w in m.weights]
                w_hi[l][idx] += eps
                w_lo[l][idx] -= eps
                numeric = (
                    loss_with(w_hi, m.biases, m.prelu_alphas)
                    - loss_with(w_lo, m.biases, m.prelu_alphas)
                ) / (2 * eps)
                check(numeric, dw[idx])
        for l, db in enumerate(dbs):
            for j in range(db.shape[0]):
                b_hi = [b.copy() for b in m.biases]
                b_lo = [b.copy() for b in m.biases]
                b_hi[l][j] += eps
                b_lo[l][j] -= eps
                numeric = (
                    loss_with(m.weights, b_hi, m.prelu_alphas)
                    - loss_with(m.weights, b_lo, m.prelu_alphas)
                ) / (2 * eps)
                check(numeric, db[j])
        for k in range(dalpha.shape[0]):
            a_hi = m.prelu_alphas.copy()
            a_lo = m.prelu_alphas.copy()
            a_hi[k] += eps
            a_lo[k] -= eps
            numeric = (
                loss_with(m.weights, m.biases, a_hi)
                - loss_with(m.weights, m.biases, a_lo)
            ) / (2 * eps)
            check(numeric, dalpha[k])


class TestTraining:
    def test_learns_separable_clusters(self, blobs_split, model_small):
        train_ds, _, test_ds = blobs_split
        assert accuracy(model_small, train_ds) >= 0.99
        assert accuracy(model_small, test_ds) >= 0.95

    def test_same_seed_reproduces_the_model_bit_for_bit(self, blobs_split):
        train_ds = blobs_split[0]
        kwargs = dict(epochs=2, learning_rate=0.1, batch_size=32)
        a = train(train_ds, Topology((8, 8, 4)), seed=3, **kwargs)
        b = train(train_ds, Topology((8, 8, 4)), seed=3, **kwargs)
        c = train(train_ds, Topology((8, 8, 4)), seed=4, **kwargs)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        assert any(
            not np.array_equal(wa, wc) for wa, wc in zip(a.weights, c.weights)
        )

    def test_epoch_callback_reports_every_epoch(self, blobs_split):
        train_ds = blobs_split[0]
        seen: list[tuple[int, float]] = []
        train(
            train_ds,
            Topology((8, 8, 4)),
            epochs=5,
            learning_rate=0.3,
            seed=0,
            epoch_callback=lambda e, loss: seen.append((e, loss)),
        )
        assert [e for e, _ in seen] == [0, 1, 2, 3, 4]
        assert all(math.isfinite(loss) for _, loss in seen)
        assert seen[-1][1] < seen[0][1]

    def test_argument_validation(self, blobs_split):
        train_ds = blobs_split[0]
        with pytest.raises(ValueError):
            train(train_ds, Topology((8, 4)), epochs=0)
        with pytest.raises(ValueError):
            train(train_ds, Topology((9, 4)), epochs=1)
        with pytest.raises(ValueError):
            train(train_ds, Topology((8, 3)), epochs=1)  # labels reach 3

    def test_divergence_is_reported(self, blobs_split):
        with pytest.raises(ValueError, match="diverged"):
            train(blobs_split[0], Topology((8, 4)), epochs=3, learning_rate=1e12)

    def test_weight_clip_bounds_parameters(self, blobs_split):
        m = train(
            blobs_split[0],
            Topology((8, 8, 4)),
            epochs=2,
            learning_rate=0.3,
            weight_clip=0.5,
        )
        for arr in (*m.weights, *m.biases):
            assert np.abs(arr).max() <= 0.5


class TestAccuracy:
    def test_counts_argmax_matches(self):
        m = MlpModel(
            Topology((2, 2)),
            (np.eye(2),),
            (np.zeros(2),),
            np.zeros(0),
        )
        ds = SimpleNamespace(
            inputs=np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]),
            labels=np.array([0, 1, 1]),
        )
        assert accuracy(m, ds) == pytest.approx(2 / 3)

    def test_backend_argument_is_honoured(self, blobs_split, model_small):
        test_ds = blobs_split[2]
        assert accuracy(model_small, test_ds, FULL_FLOAT) >= 0.95

    def test_empty_dataset_rejected(self, model_small):
        ds = SimpleNamespace(inputs=np.zeros((0, 8)), labels=np.zeros(0, dtype=int))
        with pytest.raises(ValueError):
            accuracy(model_small, ds)


class TestModelFile:
    def test_round_trip_is_bit_exact(self, model_small, tmp_path):
        path = tmp_path / "model.bin"
        save_model(model_small, path)
        back = load_model(path)
        assert back.topology == model_small.topology
        assert back.trained_epochs == model_small.trained_epochs
        assert np.array_equal(back.prelu_alphas, model_small.prelu_alphas)
        for a, b in zip(back.weights, model_small.weights):
            assert np.array_equal(a, b)
        for a, b in zip(back.biases, model_small.biases):
            assert np.array_equal(a, b)

    def test_file_starts_with_magic(self, model_small, tmp_path):
        path = tmp_path / "model.bin"
        save_model(model_small, path)
        assert path.read_bytes()[:4] == b"ARIM"

    def test_flipped_byte_is_detected(self, model_small, tmp_path):
        path = tmp_path / "model.bin"
        save_model(model_small, path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ModelFileError, match="checksum"):
            load_model(path)

    def test_truncation_is_detected(self, model_small, tmp_path):
        path = tmp_path / "model.bin"
        save_model(model_small, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(ModelFileError):
            load_model(path)

    def test_too_short_file_is_detected(self, tmp_path):
        path = tmp_path / "model.bin"
        path.write_bytes(b"AR")
        with pytest.raises(ModelFileError, match="short"):
            load_model(path)

    @staticmethod
    def _rewrite_with_valid_crc(path, mutate) -> None:
        import struct
        import zlib

        body = bytearray(path.read_bytes()[:-4])
        mutate(body)
        path.write_bytes(bytes(body) + struct.pack("<I", zlib.crc32(bytes(body))))

    def test_bad_magic_is_detected(self, model_small, tmp_path):
        path = tmp_path / "model.bin"
        save_model(model_small, path)
        self._rewrite_with_valid_crc(path, lambda b: b.__setitem__(slice(0, 4), b"XXXX"))
        with pytest.raises(ModelFileError, match="magic"):
            load_model(path)

    def test_unknown_version_is_detected(self, model_small, tmp_path):
        path = tmp_path / "model.bin"
        save_model(model_small, path)
        self._rewrite_with_valid_crc(path, lambda b: b.__setitem__(4, 0xFF))
        with pytest.raises(ModelFileError, match="version"):
            load_model(path)

    def test_trailing_bytes_are_detected(self, model_small, tmp_path):
        path = tmp_path / "model.bin"
        save_model(model_small, path)
        self._rewrite_with_valid_crc(path, lambda b: b.extend(b"\x00\x00"))
        with pytest.raises(ModelFileError, match="trailing"):
            load_model(path)
