"""Frequency-domain feature vectors from sensor windows.

Each 1-second window is transformed per channel with the DFT, scaled to a
single-sided amplitude spectrum (uniform 2/N scaling, DC bin included), and
truncated to the low-frequency bins each task uses:

* intensity: first 400 CM bins (0-399 Hz) + first 175 accel bins -> 575 dims
* detection: first 275 CM bins (0-274 Hz) + first 200 accel bins -> 475 dims

Vectors are laid out CM block first, then accel. Min-max normalization is
fitted on training folds only and never clamps test-time values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrainingSet, LengthMismatch
from .signal_core import ACC_SAMPLES_PER_WINDOW, CM_SAMPLES_PER_WINDOW, SensorWindow


class Task(enum.Enum):
    INTENSITY = "intensity"
    DETECTION = "detection"

    @property
    def cm_bins(self) -> int:
        return 400 if self is Task.INTENSITY else 275

    @property
    def acc_bins(self) -> int:
        return 175 if self is Task.INTENSITY else 200

    @property
    def dim(self) -> int:
        return self.cm_bins + self.acc_bins


@dataclass
class FeatureVector:
    """Concatenated single-sided amplitudes for one window."""

    values: np.ndarray
    task: Task

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.task.dim,):
            raise ValueError(
                f"{self.task.value} features must have {self.task.dim} values")

    @property
    def cm(self) -> np.ndarray:
        return self.values[:self.task.cm_bins]

    @property
    def acc(self) -> np.ndarray:
        return self.values[self.task.cm_bins:]


def dft(signal: np.ndarray) -> np.ndarray:
    """Unnormalized DFT, d_k = sum_n exp(-2*pi*i*k*n/N) g_n.

    Backed by numpy's FFT, which uses exactly this sign and normalization
    convention; correctness is pinned by the O(N^2) oracle in the tests.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.size == 0:
        raise LengthMismatch("cannot transform an empty signal")
    return np.fft.fft(signal)


def single_sided_amplitude(signal: np.ndarray, length: int) -> np.ndarray:
    """Single-sided amplitude spectrum with uniform 2/N scaling.

    Returns the first floor(N/2)+1 bins of (2/N)*|DFT|; with a 1 s window,
    bin k is k Hz. The DC bin gets the same 2/N factor as every other bin
    (min-max normalization downstream absorbs constant scale).

    Raises:
        LengthMismatch: the signal is not exactly ``length`` samples.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape != (length,):
        raise LengthMismatch(f"expected {length} samples, got {signal.shape}")
    spectrum = np.abs(dft(signal)) * (2.0 / length)
    return spectrum[:length // 2 + 1]


def extract_features(window: SensorWindow, task: Task) -> FeatureVector:
    """Per-channel amplitude spectra truncated to the task's bin counts."""
    cm_amp = single_sided_amplitude(window.cm, CM_SAMPLES_PER_WINDOW)
    acc_amp = single_sided_amplitude(window.acc_z, ACC_SAMPLES_PER_WINDOW)
    values = np.concatenate([cm_amp[:task.cm_bins], acc_amp[:task.acc_bins]])
    return FeatureVector(values, task)


def extract_feature_matrix(windows: list[SensorWindow], task: Task) -> np.ndarray:
    """Stack per-window feature vectors into an (n, dim) matrix."""
    return np.array([extract_features(w, task).values for w in windows],
                    dtype=np.float64).reshape(len(windows), task.dim)


class MinMaxScaler:
    """Per-dimension min-max normalization fitted on training data.

    Training extrema map to exactly 0 and 1; constant dimensions map to 0;
    out-of-range test values are NOT clamped.
    """

    def __init__(self, mins: np.ndarray, maxs: np.ndarray):
        self.mins = np.asarray(mins, dtype=np.float64)
        self.maxs = np.asarray(maxs, dtype=np.float64)
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise ValueError("mins and maxs must be 1-D arrays of equal length")
        if np.any(self.maxs < self.mins):
            raise ValueError("max must be >= min per dimension")

    @classmethod
    def fit(cls, train_features: np.ndarray) -> "MinMaxScaler":
        """Fit per-dimension extrema. Call on training folds only.

        Raises:
            EmptyTrainingSet: zero training rows.
        """
        train_features = np.atleast_2d(np.asarray(train_features, dtype=np.float64))
        if train_features.shape[0] == 0:
            raise EmptyTrainingSet("cannot fit a scaler on zero samples")
        return cls(train_features.min(axis=0), train_features.max(axis=0))

    def transform(self, features: np.ndarray) -> np.ndarray:
        """(x - min) / (max - min) per dimension, unclamped."""
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.mins.shape[0]:
            raise ValueError(
                f"expected {self.mins.shape[0]} dimensions, got {features.shape[-1]}")
        span = self.maxs - self.mins
        safe_span = np.where(span == 0, 1.0, span)
        scaled = (features - self.mins) / safe_span
        return np.where(span == 0, 0.0, scaled)

    def __eq__(self, other):
        return (isinstance(other, MinMaxScaler)
                and np.array_equal(self.mins, other.mins)
                and np.array_equal(self.maxs, other.maxs))


def fit_scaler(train_features: np.ndarray) -> MinMaxScaler:
    return MinMaxScaler.fit(train_features)


def apply_scaler(scaler: MinMaxScaler, features: np.ndarray) -> np.ndarray:
    return scaler.transform(features)
