import numpy as np
import pytest

from oracles import dense_path_speed, polyfit_savgol, scalar_mean

from scratchq.errors import Degenerate, NoContact, TooFewCriticalPoints, TooShort
from scratchq.labeling import (ContactTrace, CriticalPoints, WindowDiagnostics,
                               REASON_NO_CONTACT, REASON_NON_ALTERNATING,
                               REASON_POSITION_JUMP, REASON_POWER_EXCEEDS_MAX,
                               REASON_TOO_FEW_CRITICAL_POINTS,
                               filter_outliers, find_critical_points, label_block,
                               mean_force, mean_velocity, power_label,
                               savgol_coefficients, savgol_smooth)

RATE = 150.0


def tablet_time(duration_s):
    return np.arange(int(round(duration_s * RATE))) / RATE


class TestMeanForce:
    def test_constant(self):
        assert mean_force(np.full(150, 0.5)) == 0.5

    def test_discards_missing(self):
        assert mean_force(np.array([1.0, 2.0, 3.0, np.nan])) == 2.0

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(0)
        forces = rng.uniform(0, 3, 150)
        forces[rng.choice(150, 30, replace=False)] = np.nan
        assert mean_force(forces) == pytest.approx(scalar_mean(forces), abs=1e-12)

    def test_no_contact(self):
        with pytest.raises(NoContact):
            mean_force(np.full(150, np.nan))


class TestSavgolCoefficients:
    def test_order_zero_is_moving_average(self):
        np.testing.assert_allclose(savgol_coefficients(0, 3), [1 / 3] * 3,
                                   atol=1e-12)

    @pytest.mark.parametrize("order,window", [(0, 3), (2, 5), (3, 11), (5, 31)])
    def test_weights_sum_to_one(self, order, window):
        assert savgol_coefficients(order, window).sum() == pytest.approx(1.0, abs=1e-10)

    def test_degenerate(self):
        with pytest.raises(Degenerate):
            savgol_coefficients(5, 5)
        with pytest.raises(Degenerate):
            savgol_coefficients(5, 30)  # even window


class TestSavgolSmooth:
    def test_constant_unchanged(self):
        y = np.full(100, 7.5)
        np.testing.assert_allclose(savgol_smooth(y), y, atol=1e-12)

    def test_quartic_reproduced_exactly_interior(self):
        t = np.linspace(-1, 1, 101)
        y = 3 * t**4 - 2 * t**3 + t - 0.5
        smoothed = savgol_smooth(y)
        np.testing.assert_allclose(smoothed[15:-15], y[15:-15], atol=1e-9)

    def test_boundaries_pass_through(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=60)
        smoothed = savgol_smooth(y)
        np.testing.assert_array_equal(smoothed[:15], y[:15])
        np.testing.assert_array_equal(smoothed[-15:], y[-15:])

    def test_matches_per_window_least_squares_oracle(self):
        rng = np.random.default_rng(2)
        t = tablet_time(2.0)
        y = 30 * np.sin(2 * np.pi * 2.0 * t) + rng.normal(0, 1.0, len(t))
        diff = np.abs(savgol_smooth(y) - polyfit_savgol(y, 5, 31))
        assert diff.max() < 1e-9

    def test_too_short(self):
        with pytest.raises(TooShort):
            savgol_smooth(np.zeros(30))


def triangle(t, period, amp, base=50.0):
    phase = (t / (period / 2)) % 2.0
    return base + amp * np.where(phase < 1, phase, 2 - phase)


class TestFindCriticalPoints:
    def test_triangle_vertices(self):
        t = tablet_time(1.0)
        # vertices at 0.125, 0.375, 0.625, 0.875 s
        y = triangle(t + 0.125, period=0.5, amp=30.0)
        cps = find_critical_points(y, np.full_like(t, 100.0), t)
        assert len(cps) == 4
        np.testing.assert_allclose(cps.t, [0.125, 0.375, 0.625, 0.875], atol=0.01)
        kinds = cps.kinds
        assert all(a != b for a, b in zip(kinds, kinds[1:]))

    def test_constant_has_no_critical_points(self):
        t = tablet_time(1.0)
        cps = find_critical_points(np.full_like(t, 40.0), np.full_like(t, 100.0), t)
        assert len(cps) == 0

    def test_sawtooth_count_over_block(self):
        t = tablet_time(10.0)
        y = triangle(t, period=0.5, amp=20.0)
        cps = find_critical_points(y, np.full_like(t, 100.0), t)
        assert abs(len(cps) - 40) <= 1

    def test_low_prominence_wiggles_dropped(self):
        t = tablet_time(2.0)
        y = triangle(t, period=1.0, amp=30.0) + 0.5 * np.sin(2 * np.pi * 8 * t)
        cps = find_critical_points(y, np.full_like(t, 100.0), t, prominence_mm=2.0)
        assert len(cps) <= 5  # the 8 Hz ripple (1 mm prominence) is filtered


class TestMeanVelocity:
    def test_sawtooth_chords(self):
        # peak-to-peak 40 mm every 0.25 s -> 160 mm/s
        y = np.array([0.0, 40.0, 0.0, 40.0, 0.0])
        cp = CriticalPoints(y, np.full(5, 100.0), np.arange(5) * 0.25,
                            ["valley", "peak"] * 2 + ["valley"])
        assert mean_velocity(cp) == pytest.approx(160.0)

    def test_three_four_five_triangle(self):
        cp = CriticalPoints(np.array([0.0, 40.0]), np.array([0.0, 30.0]),
                            np.array([0.0, 0.5]), ["valley", "peak"])
        assert mean_velocity(cp) == pytest.approx(100.0)

    def test_against_dense_path_oracle(self):
        # gentle 2-D sinusoid: chord approximation within 10 % of path speed
        t = tablet_time(1.0)
        y = 60 + 20 * np.sin(2 * np.pi * 2.0 * t - np.pi / 2)
        x = 120 + 1.5 * np.sin(2 * np.pi * 0.5 * t)
        cps = find_critical_points(y, x, t)
        v = mean_velocity(cps)
        oracle = dense_path_speed(x, y, t, 0.0, 1.0)
        assert abs(v - oracle) / oracle < 0.10

    def test_too_few(self):
        cp = CriticalPoints(np.array([1.0]), np.array([1.0]), np.array([0.1]),
                            ["peak"])
        with pytest.raises(TooFewCriticalPoints):
            mean_velocity(cp)


class TestPowerLabel:
    def test_zero_force(self):
        assert power_label(0.0, 150.0) == 0.0

    def test_unit_arithmetic(self):
        assert power_label(1.0, 100.0) == 100.0

    def test_reported_high_high_means(self):
        # mean high-force x mean high-velocity lands in the high/high range
        p = power_label(1.56, 177.93)
        assert p == pytest.approx(277.6, abs=0.05)
        assert 0 <= p <= 600

    def test_linear_in_each_argument(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            f, v = rng.uniform(0.1, 3), rng.uniform(10, 250)
            assert power_label(2 * f, v) == 2 * power_label(f, v)
            assert power_label(f, 2 * v) == 2 * power_label(f, v)


def diag(has_contact=True, kinds=("peak", "valley", "peak"), max_jump=1.0,
         power=100.0):
    return WindowDiagnostics(has_contact, list(kinds), max_jump, power)


class TestFilterOutliers:
    def test_too_few_critical_points(self):
        assert filter_outliers([diag(kinds=("peak",))]) == \
            [(False, REASON_TOO_FEW_CRITICAL_POINTS)]

    def test_consecutive_peaks(self):
        assert filter_outliers([diag(kinds=("peak", "peak", "valley"))]) == \
            [(False, REASON_NON_ALTERNATING)]

    def test_consecutive_valleys(self):
        assert filter_outliers([diag(kinds=("peak", "valley", "valley"))]) == \
            [(False, REASON_NON_ALTERNATING)]

    def test_position_jump(self):
        assert filter_outliers([diag(max_jump=6.0)]) == \
            [(False, REASON_POSITION_JUMP)]

    def test_power_cap(self):
        assert filter_outliers([diag(power=700.0)]) == \
            [(False, REASON_POWER_EXCEEDS_MAX)]

    def test_no_contact(self):
        assert filter_outliers([diag(has_contact=False)]) == \
            [(False, REASON_NO_CONTACT)]

    def test_valid_window(self):
        assert filter_outliers([diag()]) == [(True, "")]


def eased_trace(v_mm_s=150.0, force=1.0, duration=10.0, period=0.5,
                liftoff=False, gap=0.15, seed=0, noise=0.0):
    from scratchq.synth import SyntheticScratchSpec, gen_contact_trace
    spec = SyntheticScratchSpec(
        style="liftoff" if liftoff else "continuous",
        stroke_amplitude_mm=v_mm_s * period / 2.0,
        stroke_period_s=period, force_n=force, duration_s=duration,
        contact_gap_fraction=gap if liftoff else 0.0, seed=seed,
        noise_sd_mm=noise)
    return gen_contact_trace(spec)


class TestLabelBlock:
    def test_continuous_contact_recovery(self):
        trace, _ = eased_trace(v_mm_s=150.0, force=1.0)
        labels = label_block(trace)
        powers = [lab.power for lab in labels if lab.valid]
        assert len(powers) >= 8
        assert all(abs(p - 150.0) / 150.0 < 0.10 for p in powers)

    def test_liftoff_recovery_with_gaps(self):
        trace, _ = eased_trace(v_mm_s=150.0, force=1.0, liftoff=True)
        assert np.isnan(trace.y).any()  # the style actually breaks contact
        labels = label_block(trace)
        powers = [lab.power for lab in labels if lab.valid]
        assert len(powers) >= 8
        assert all(abs(p - 150.0) / 150.0 < 0.10 for p in powers)

    def test_empty_trace_all_windows_invalid(self):
        trace = ContactTrace(np.array([]), np.array([]), np.array([]),
                             np.array([]), block_length_s=3.0)
        labels = label_block(trace)
        assert len(labels) == 3
        assert all(not lab.valid and lab.reason == REASON_NO_CONTACT
                   for lab in labels)

    def test_monotone_block_yields_no_valid_labels(self):
        t = tablet_time(5.0)
        y = 10 + 20 * t  # strictly increasing: no reversals anywhere
        trace = ContactTrace(t, np.full_like(t, 100.0), y, np.ones_like(t),
                             block_length_s=5.0)
        labels = label_block(trace)
        assert all(not lab.valid for lab in labels)
        assert all(lab.reason == REASON_TOO_FEW_CRITICAL_POINTS for lab in labels)

    def test_position_jump_rejection(self):
        trace, _ = eased_trace()
        x = trace.x.copy()
        x[200:] += 6.0  # 6 mm teleport between samples 199 and 200
        jumped = ContactTrace(trace.t, x, trace.y, trace.force,
                              trace.block_length_s)
        labels = label_block(jumped)
        w = labels[int(trace.t[200])]
        assert not w.valid and w.reason == REASON_POSITION_JUMP

    def test_power_cap_rejection(self):
        trace, _ = eased_trace(v_mm_s=200.0, force=4.0)  # ~800 mW
        labels = label_block(trace)
        assert any(lab.reason == REASON_POWER_EXCEEDS_MAX for lab in labels)
        assert all(not lab.valid for lab in labels
                   if lab.reason == REASON_POWER_EXCEEDS_MAX)

    def test_valid_powers_within_scale(self):
        trace, _ = eased_trace(v_mm_s=220.0, force=2.5, noise=0.4, seed=9)
        for lab in label_block(trace):
            if lab.valid:
                assert 0.0 <= lab.power <= 600.0

    def test_valid_windows_alternate(self):
        trace, _ = eased_trace(noise=0.3, seed=4)
        # reconstruct the critical sequence the pipeline judged
        labels = label_block(trace)
        assert any(lab.valid for lab in labels)
        for lab in labels:
            if lab.valid:
                assert lab.power == pytest.approx(
                    lab.mean_force * lab.mean_velocity)

    def test_deterministic(self):
        trace, _ = eased_trace(noise=0.5, seed=11)
        a = label_block(trace)
        b = label_block(trace)
        for la, lb in zip(a, b):
            assert (la.window_start, la.mean_force, la.mean_velocity,
                    la.power, la.valid, la.reason) == \
                   (lb.window_start, lb.mean_force, lb.mean_velocity,
                    lb.power, lb.valid, lb.reason)
