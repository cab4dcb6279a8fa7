"""Synthetic tablet traces and sensor windows with analytically known truth.

The contact-trace generator produces back-and-forth scratch trajectories at
150 Hz whose per-second power is known by construction: chord velocity is
stroke amplitude over half period, force is the specified profile. LiftOff
style holds each stroke endpoint briefly and blanks contact (NaN) during the
hold, so interpolation reconstructs the same trajectory and the true power
matches the ContinuousContact style exactly.

These generators and the dense path-integral oracle are deliberately
independent of the labeling pipeline (no smoothing, no peak detection) so
tests can cross-validate the two implementations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import AliasedTone, NoContact
from .labeling import ContactTrace, TABLET_X_MAX_MM, TABLET_Y_MAX_MM
from .signal_core import (ACC_RATE_HZ, ACC_SAMPLES_PER_WINDOW, CM_RATE_HZ,
                          CM_SAMPLES_PER_WINDOW, TABLET_RATE_HZ, Channel,
                          SensorWindow, TimeSeries, linear_interpolate)

STYLE_CONTINUOUS = "continuous"
STYLE_LIFTOFF = "liftoff"


@dataclass
class SyntheticScratchSpec:
    """Parameters of one synthetic scratching block.

    ``stroke_amplitude_mm`` is the distance covered by each half-stroke, so
    chord velocity is amplitude / (period/2). Force is constant plus an
    optional sinusoid. ``contact_gap_fraction`` (LiftOff only) is the
    fraction of each half-period spent holding at a reversal with contact
    broken.
    """

    style: str = STYLE_CONTINUOUS
    stroke_amplitude_mm: float = 40.0
    stroke_period_s: float = 0.5
    force_n: float = 1.0
    force_amp_n: float = 0.0
    force_freq_hz: float = 0.0
    duration_s: float = 10.0
    noise_sd_mm: float = 0.0
    noise_sd_n: float = 0.0
    contact_gap_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.style not in (STYLE_CONTINUOUS, STYLE_LIFTOFF):
            raise ValueError(f"unknown style {self.style!r}")
        if min(self.stroke_amplitude_mm, self.stroke_period_s, self.duration_s) <= 0:
            raise ValueError("amplitude, period, and duration must be positive")
        if not 0.0 <= self.contact_gap_fraction < 0.5:
            raise ValueError("contact_gap_fraction must be in [0, 0.5)")
        if self.stroke_amplitude_mm > TABLET_Y_MAX_MM - 10:
            raise ValueError("stroke amplitude exceeds the tablet sensing area")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticScratchSpec":
        return cls(**data)


def _trajectory(spec: SyntheticScratchSpec, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free y trajectory and contact mask.

    Each half-period eases from one stroke endpoint to the other along a
    half-cosine over (1-gap)*H seconds, then holds at the endpoint for
    gap*H (a finger decelerates into a reversal, so the trajectory is
    smooth there). ContinuousContact uses gap = 0 (a pure cosine wave) and
    full contact; LiftOff keeps the holds and breaks contact during them.
    Either way adjacent reversals are ``stroke_amplitude_mm`` apart and one
    half-period apart in time, so the chord velocity is identical.
    """
    gap = spec.contact_gap_fraction if spec.style == STYLE_LIFTOFF else 0.0
    half = spec.stroke_period_s / 2.0
    move = (1.0 - gap) * half
    amp = spec.stroke_amplitude_mm
    y_lo = (TABLET_Y_MAX_MM - amp) / 2.0

    phase = t / half
    k = np.floor(phase).astype(int)          # half-stroke index
    frac_t = (phase - k) * half              # seconds into the half-stroke
    progress = np.minimum(frac_t / move, 1.0)
    eased = 0.5 - 0.5 * np.cos(np.pi * progress)
    going_up = k % 2 == 0
    y = np.where(going_up, y_lo + amp * eased, y_lo + amp * (1.0 - eased))
    in_hold = frac_t >= move
    return y, ~in_hold if spec.style == STYLE_LIFTOFF else np.ones_like(t, bool)


def _force_profile(spec: SyntheticScratchSpec, t: np.ndarray) -> np.ndarray:
    f = np.full_like(t, spec.force_n)
    if spec.force_amp_n != 0.0:
        f = f + spec.force_amp_n * np.sin(2.0 * np.pi * spec.force_freq_hz * t)
    return np.maximum(f, 0.0)


def chord_velocity(spec: SyntheticScratchSpec) -> float:
    """Reversal-to-reversal chord speed: amplitude over half period."""
    return spec.stroke_amplitude_mm / (spec.stroke_period_s / 2.0)


def gen_contact_trace(spec: SyntheticScratchSpec) -> tuple[ContactTrace, np.ndarray]:
    """Synthesize a 150 Hz block and its analytic per-second true power.

    True power per window is the mean noise-free force over contact samples
    times the chord velocity, matching the labeling pipeline's definitions
    so recovery tolerance measures pipeline noise only.
    """
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * TABLET_RATE_HZ))
    t = np.arange(n) / TABLET_RATE_HZ
    y_clean, contact = _trajectory(spec, t)
    force_clean = _force_profile(spec, t)

    y = y_clean + rng.normal(0.0, spec.noise_sd_mm, n) if spec.noise_sd_mm else y_clean.copy()
    x = np.full(n, TABLET_X_MAX_MM / 2.0)
    if spec.noise_sd_mm:
        x = x + rng.normal(0.0, spec.noise_sd_mm, n)
    force = force_clean + rng.normal(0.0, spec.noise_sd_n, n) if spec.noise_sd_n else force_clean.copy()
    np.clip(y, 0.0, TABLET_Y_MAX_MM, out=y)
    np.clip(x, 0.0, TABLET_X_MAX_MM, out=x)
    np.clip(force, 0.0, None, out=force)

    x[~contact] = np.nan
    y[~contact] = np.nan
    force[~contact] = np.nan

    v = chord_velocity(spec)
    n_windows = int(math.floor(spec.duration_s + 1e-9))
    true_power = np.zeros(n_windows)
    for k in range(n_windows):
        sel = (t >= k) & (t < k + 1) & contact
        true_power[k] = float(force_clean[sel].mean()) * v if sel.any() else math.nan

    trace = ContactTrace(t, x, y, force, block_length_s=spec.duration_s)
    return trace, true_power


def brute_force_power(trace: ContactTrace) -> np.ndarray:
    """Per-second power by dense path integration, no smoothing, no peaks.

    Speed is total interpolated path length over elapsed time per window;
    power is that speed times the window's NaN-discarded mean force. Windows
    without contact yield NaN. On jittery traces this oracle counts the
    jitter path that the labeling pipeline smooths away; the two agree on
    smooth traces only.

    Raises:
        NoContact: the trace has no contact samples at all.
    """
    if len(trace) == 0 or np.isnan(trace.force).all():
        raise NoContact("trace has no contact anywhere")
    x = linear_interpolate(TimeSeries(trace.t, trace.x, Channel.TABLET_X,
                                      TABLET_RATE_HZ)).values
    y = linear_interpolate(TimeSeries(trace.t, trace.y, Channel.TABLET_Y,
                                      TABLET_RATE_HZ)).values
    seg_len = np.hypot(np.diff(x), np.diff(y))
    seg_dt = np.diff(trace.t)
    t0 = trace.t[0]
    n_windows = int(math.floor(trace.block_length_s + 1e-9))
    power = np.full(max(n_windows, 1), np.nan)
    for k in range(len(power)):
        w0, w1 = t0 + k, t0 + k + 1.0
        in_win = (trace.t >= w0) & (trace.t < w1)
        forces = trace.force[in_win]
        if forces.size == 0 or np.isnan(forces).all():
            continue
        seg_sel = in_win[:-1]
        if not seg_sel.any():
            continue
        speed = seg_len[seg_sel].sum() / seg_dt[seg_sel].sum()
        power[k] = np.nanmean(forces) * speed
    return power


def gen_sensor_window(tones: list[tuple[float, float]], noise_sd: float = 0.0,
                      seed: int = 0, start_time: float = 0.0,
                      participant_id: str = "", activity: str = "") -> SensorWindow:
    """One 1-second window: the same tone sum on both channels plus noise.

    Raises:
        AliasedTone: a tone at or above the accelerometer Nyquist (200 Hz).
    """
    nyquist = ACC_RATE_HZ / 2.0
    for freq, _ in tones:
        if freq >= nyquist:
            raise AliasedTone(f"{freq} Hz tone aliases on the accel channel "
                              f"(Nyquist {nyquist} Hz)")
    rng = np.random.default_rng(seed)
    t_cm = np.arange(CM_SAMPLES_PER_WINDOW) / CM_RATE_HZ
    t_acc = np.arange(ACC_SAMPLES_PER_WINDOW) / ACC_RATE_HZ
    cm = np.zeros(CM_SAMPLES_PER_WINDOW)
    acc = np.zeros(ACC_SAMPLES_PER_WINDOW)
    for freq, amp in tones:
        cm += amp * np.sin(2.0 * np.pi * freq * t_cm)
        acc += amp * np.sin(2.0 * np.pi * freq * t_acc)
    if noise_sd:
        cm = cm + rng.normal(0.0, noise_sd, CM_SAMPLES_PER_WINDOW)
        acc = acc + rng.normal(0.0, noise_sd, ACC_SAMPLES_PER_WINDOW)
    return SensorWindow(cm, acc, start_time, participant_id, activity)
