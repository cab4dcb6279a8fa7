"""Canonical time-series types, gap interpolation, and fixed-length windowing.

Missing samples (lost contact, dropped packets) are represented as NaN until
:func:`linear_interpolate` has run; every downstream stage works on dense
signals. One second of ring data is 8000 contact-microphone points and 400
accelerometer points, and :func:`window_stream` resamples each window onto
exactly those grids regardless of clock jitter in the raw stream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import AllMissing, DurationTooShort

CM_RATE_HZ = 8000.0
ACC_RATE_HZ = 400.0
TABLET_RATE_HZ = 150.0

CM_SAMPLES_PER_WINDOW = 8000
ACC_SAMPLES_PER_WINDOW = 400


class Channel(enum.Enum):
    CONTACT_MIC = "contact_mic"
    ACC_Z = "acc_z"
    TABLET_FORCE = "tablet_force"
    TABLET_X = "tablet_x"
    TABLET_Y = "tablet_y"


NOMINAL_RATES = {
    Channel.CONTACT_MIC: CM_RATE_HZ,
    Channel.ACC_Z: ACC_RATE_HZ,
    Channel.TABLET_FORCE: TABLET_RATE_HZ,
    Channel.TABLET_X: TABLET_RATE_HZ,
    Channel.TABLET_Y: TABLET_RATE_HZ,
}


@dataclass
class TimeSeries:
    """A single sensor channel: timestamps in seconds plus raw values.

    Values may contain NaN missing markers before interpolation. Timestamps
    are deduplicated (first occurrence wins) and must be strictly increasing
    afterwards.
    """

    timestamps: np.ndarray
    values: np.ndarray
    channel: Channel
    sample_rate_hz: float

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.timestamps.shape != self.values.shape or self.timestamps.ndim != 1:
            raise ValueError("timestamps and values must be 1-D arrays of equal length")
        if len(self.timestamps) > 1:
            keep = np.concatenate(([True], np.diff(self.timestamps) > 0))
            if not keep.all():
                self.timestamps = self.timestamps[keep]
                self.values = self.values[keep]
            if not (np.diff(self.timestamps) > 0).all():
                raise ValueError("timestamps must be non-decreasing")

    def __len__(self):
        return len(self.timestamps)

    @property
    def start(self) -> float:
        return float(self.timestamps[0])

    @property
    def coverage_end(self) -> float:
        """End of the span covered by the data, one sample period past the last stamp."""
        return float(self.timestamps[-1]) + 1.0 / self.sample_rate_hz

    def slice(self, t_start: float, t_end: float) -> "TimeSeries":
        """Samples with timestamp in [t_start, t_end)."""
        mask = (self.timestamps >= t_start) & (self.timestamps < t_end)
        return TimeSeries(self.timestamps[mask], self.values[mask],
                          self.channel, self.sample_rate_hz)


@dataclass
class SensorWindow:
    """One 1-second two-channel sample: 8000 CM points and 400 accel-z points."""

    cm: np.ndarray
    acc_z: np.ndarray
    start_time: float
    participant_id: str = ""
    activity: str = ""

    def __post_init__(self):
        self.cm = np.asarray(self.cm, dtype=np.float64)
        self.acc_z = np.asarray(self.acc_z, dtype=np.float64)
        if self.cm.shape != (CM_SAMPLES_PER_WINDOW,):
            raise ValueError(f"cm must have exactly {CM_SAMPLES_PER_WINDOW} values")
        if self.acc_z.shape != (ACC_SAMPLES_PER_WINDOW,):
            raise ValueError(f"acc_z must have exactly {ACC_SAMPLES_PER_WINDOW} values")
        if not (np.isfinite(self.cm).all() and np.isfinite(self.acc_z).all()):
            raise ValueError("sensor windows must not contain missing values")


def linear_interpolate(series: TimeSeries) -> TimeSeries:
    """Fill NaN gaps by linear interpolation between nearest observed neighbors.

    Leading and trailing gaps are filled with the nearest observed value.
    Observed samples pass through bit-exact, which also makes the operation
    idempotent.

    Raises:
        AllMissing: the series has no observed value at all.
    """
    missing = np.isnan(series.values)
    if not missing.any():
        return series
    if missing.all():
        raise AllMissing(f"{series.channel.value}: no observed values to interpolate from")
    observed = ~missing
    filled = series.values.copy()
    filled[missing] = np.interp(series.timestamps[missing],
                                series.timestamps[observed],
                                series.values[observed])
    return TimeSeries(series.timestamps, filled, series.channel, series.sample_rate_hz)


def window_count(duration_s: float, window_s: float = 1.0, stride_s: float = 0.25) -> int:
    """floor((T - window) / stride) + 1, guarded against float round-off."""
    if duration_s < window_s - 1e-9:
        return 0
    return int(np.floor((duration_s - window_s + 1e-9) / stride_s)) + 1


def window_stream(cm: TimeSeries, acc: TimeSeries, window_s: float = 1.0,
                  stride_s: float = 0.25, participant_id: str = "",
                  activity: str = "") -> list[SensorWindow]:
    """Cut the two ring channels into fixed-grid 1-second windows.

    Windows start at the common span start and advance by ``stride_s``; the
    last partial window is dropped. Each window is resampled by linear
    interpolation onto exactly 8000 CM and 400 accel points so the DFT length
    is fixed even under clock jitter.

    Raises:
        DurationTooShort: the common span is shorter than one window.
    """
    if stride_s <= 0:
        raise ValueError("stride_s must be positive")
    if len(cm) == 0 or len(acc) == 0:
        raise DurationTooShort("empty channel")
    cm = linear_interpolate(cm)
    acc = linear_interpolate(acc)

    t0 = max(cm.start, acc.start)
    t1 = min(cm.coverage_end, acc.coverage_end)
    n = window_count(t1 - t0, window_s, stride_s)
    if n == 0:
        raise DurationTooShort(
            f"span {t1 - t0:.4f} s is shorter than the {window_s} s window")

    cm_offsets = np.arange(CM_SAMPLES_PER_WINDOW) / CM_RATE_HZ
    acc_offsets = np.arange(ACC_SAMPLES_PER_WINDOW) / ACC_RATE_HZ
    windows = []
    for k in range(n):
        start = t0 + k * stride_s
        cm_vals = np.interp(start + cm_offsets, cm.timestamps, cm.values)
        acc_vals = np.interp(start + acc_offsets, acc.timestamps, acc.values)
        windows.append(SensorWindow(cm_vals, acc_vals, start,
                                    participant_id=participant_id,
                                    activity=activity))
    return windows
