import numpy as np
import pytest

from oracles import naive_dft

from scratchq.errors import EmptyTrainingSet, LengthMismatch
from scratchq.features import (FeatureVector, MinMaxScaler, Task, dft,
                               extract_feature_matrix, extract_features,
                               single_sided_amplitude)
from scratchq.signal_core import SensorWindow
from scratchq.synth import gen_sensor_window


class TestDft:
    def test_unit_impulse(self):
        signal = np.zeros(64)
        signal[0] = 1.0
        np.testing.assert_allclose(dft(signal), np.ones(64), atol=1e-12)

    def test_constant_signal(self):
        out = dft(np.full(50, 3.0))
        assert out[0] == pytest.approx(150.0)
        np.testing.assert_allclose(out[1:], 0.0, atol=1e-10)

    def test_matches_naive_oracle_512(self):
        rng = np.random.default_rng(6)
        signal = rng.normal(size=512)
        diff = np.abs(dft(signal) - naive_dft(signal))
        assert diff.max() < 1e-9 * 512

    def test_parseval(self):
        rng = np.random.default_rng(7)
        for n in (400, 512, 1000):
            g = rng.normal(size=n)
            d = dft(g)
            lhs = np.sum(np.abs(g) ** 2)
            rhs = np.sum(np.abs(d) ** 2) / n
            assert abs(lhs - rhs) / lhs < 1e-9

    def test_inverse_round_trip(self):
        rng = np.random.default_rng(8)
        g = rng.normal(size=400)
        back = np.fft.ifft(dft(g)).real
        np.testing.assert_allclose(back, g, rtol=0, atol=1e-9)


class TestSingleSidedAmplitude:
    def test_pure_tone_recovers_amplitude(self):
        fs, n, a = 8000, 8000, 2.5
        t = np.arange(n) / fs
        amps = single_sided_amplitude(a * np.sin(2 * np.pi * 50 * t), n)
        assert amps[50] == pytest.approx(a, abs=1e-9)
        others = np.delete(amps, 50)
        assert others.max() < 1e-9

    def test_constant_doubles_at_dc(self):
        # uniform 2/B scaling applies to bin 0 as well
        amps = single_sided_amplitude(np.full(8000, 1.5), 8000)
        assert amps[0] == pytest.approx(3.0)

    def test_two_tone_superposition(self):
        n = 8000
        t = np.arange(n) / n
        sig = 1.25 * np.sin(2 * np.pi * 30 * t) + 0.75 * np.sin(2 * np.pi * 120 * t)
        amps = single_sided_amplitude(sig, n)
        assert amps[30] == pytest.approx(1.25, abs=1e-9)
        assert amps[120] == pytest.approx(0.75, abs=1e-9)

    def test_returns_single_sided_bins(self):
        assert single_sided_amplitude(np.zeros(400), 400).shape == (201,)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            single_sided_amplitude(np.zeros(512), 8000)


class TestExtractFeatures:
    def test_intensity_dimension(self):
        fv = extract_features(gen_sensor_window([(50, 1.0)]), Task.INTENSITY)
        assert fv.values.shape == (575,)
        assert fv.cm.shape == (400,)
        assert fv.acc.shape == (175,)

    def test_detection_dimension(self):
        fv = extract_features(gen_sensor_window([(50, 1.0)]), Task.DETECTION)
        assert fv.values.shape == (475,)
        assert fv.cm.shape == (275,)
        assert fv.acc.shape == (200,)

    def test_zero_window_gives_zero_vector(self):
        window = SensorWindow(np.zeros(8000), np.zeros(400), 0.0)
        for task in Task:
            np.testing.assert_array_equal(extract_features(window, task).values,
                                          np.zeros(task.dim))

    def test_layout_cm_block_then_accel(self):
        window = gen_sensor_window([(50, 3.0)])
        fv = extract_features(window, Task.INTENSITY)
        assert fv.values[50] == pytest.approx(3.0, abs=1e-9)       # CM bin 50
        assert fv.values[400 + 50] == pytest.approx(3.0, abs=1e-9)  # accel bin 50

    def test_deterministic_and_order_independent(self):
        windows = [gen_sensor_window([(20 + i, 1.0)], seed=i) for i in range(4)]
        full = extract_feature_matrix(windows, Task.DETECTION)
        rev = extract_feature_matrix(windows[::-1], Task.DETECTION)
        np.testing.assert_array_equal(full, rev[::-1])
        np.testing.assert_array_equal(full,
                                      extract_feature_matrix(windows, Task.DETECTION))

    def test_vector_length_enforced(self):
        with pytest.raises(ValueError):
            FeatureVector(np.zeros(500), Task.INTENSITY)


class TestMinMaxScaler:
    def test_midpoint(self):
        scaler = MinMaxScaler.fit(np.array([[0.0], [10.0]]))
        assert scaler.transform(np.array([5.0])) == pytest.approx(0.5)

    def test_training_extrema_map_to_unit_interval(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(30, 8))
        scaler = MinMaxScaler.fit(x)
        scaled = scaler.transform(x)
        np.testing.assert_allclose(scaled.min(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(scaled.max(axis=0), 1.0, atol=1e-12)

    def test_out_of_range_unclamped(self):
        scaler = MinMaxScaler.fit(np.array([[0.0], [10.0]]))
        assert scaler.transform(np.array([12.0])) == pytest.approx(1.2)
        assert scaler.transform(np.array([-5.0])) == pytest.approx(-0.5)

    def test_constant_dimension_maps_to_zero(self):
        x = np.array([[1.0, 2.0], [1.0, 4.0]])
        scaler = MinMaxScaler.fit(x)
        out = scaler.transform(np.array([[1.0, 3.0], [9.0, 3.0]]))
        np.testing.assert_allclose(out[:, 0], 0.0)

    def test_empty_training_set(self):
        with pytest.raises(EmptyTrainingSet):
            MinMaxScaler.fit(np.empty((0, 5)))
