"""Pressure-tablet contact traces to per-second scratch power labels.

A scratching block is a z-second trace of single-finger contacts
(timestamp, x, y, force) sampled at ~150 Hz, with NaN wherever contact is
broken. The label pipeline per block:

1. interpolate x and y across contact gaps,
2. smooth y with a quintic Savitzky-Golay filter (31-point window),
3. find stroke reversals (peaks/valleys of the smoothed y trajectory),
4. per 1-second window: mean force over observed samples, mean chord
   velocity between adjacent reversals, power = force x velocity
   (N * mm/s = mW),
5. invalidate outlier windows: fewer than two reversals, non-alternating
   reversal kinds, a >5 mm position jump between adjacent samples, or
   power above 600 mW.

Invalid windows are kept in the output with their rejection reason; a block
is never aborted because one window fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import Degenerate, NoContact, TooFewCriticalPoints, TooShort
from .signal_core import TABLET_RATE_HZ, Channel, TimeSeries, linear_interpolate

TABLET_X_MAX_MM = 240.0
TABLET_Y_MAX_MM = 139.0
MAX_POWER_MW = 600.0

SAVGOL_ORDER = 5
SAVGOL_WINDOW = 31

DEFAULT_PROMINENCE_MM = 2.0
DEFAULT_SEPARATION_S = 0.05
MAX_JUMP_MM = 5.0

PEAK = "peak"
VALLEY = "valley"

REASON_NO_CONTACT = "NoContact"
REASON_TOO_FEW_CRITICAL_POINTS = "TooFewCriticalPoints"
REASON_NON_ALTERNATING = "NonAlternating"
REASON_POSITION_JUMP = "PositionJump"
REASON_POWER_EXCEEDS_MAX = "PowerExceedsMax"


@dataclass
class ContactTrace:
    """One block of tablet contacts. NaN marks timesteps with no contact."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    force: np.ndarray
    block_length_s: float

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.force = np.asarray(self.force, dtype=np.float64)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.force) == n):
            raise ValueError("t, x, y, force must have equal length")
        with np.errstate(invalid="ignore"):
            if np.any((self.x < 0) | (self.x > TABLET_X_MAX_MM)):
                raise ValueError(f"x outside the 0..{TABLET_X_MAX_MM} mm sensing area")
            if np.any((self.y < 0) | (self.y > TABLET_Y_MAX_MM)):
                raise ValueError(f"y outside the 0..{TABLET_Y_MAX_MM} mm sensing area")

    def __len__(self):
        return len(self.t)


@dataclass
class CriticalPoints:
    """Stroke reversals: smoothed-y value, x, timestamp, and kind per point."""

    y: np.ndarray
    x: np.ndarray
    t: np.ndarray
    kinds: list[str]

    def __len__(self):
        return len(self.t)

    def in_window(self, t_start: float, t_end: float) -> "CriticalPoints":
        mask = (self.t >= t_start) & (self.t < t_end)
        return CriticalPoints(self.y[mask], self.x[mask], self.t[mask],
                              [k for k, m in zip(self.kinds, mask) if m])


@dataclass
class PowerLabel:
    """Per-second label: mean force (N), mean velocity (mm/s), power (mW)."""

    window_start: float
    mean_force: float
    mean_velocity: float
    power: float
    valid: bool
    reason: str = ""


@dataclass
class WindowDiagnostics:
    """What filter_outliers needs to judge one window."""

    has_contact: bool
    kinds: list[str]
    max_jump_mm: float
    power_mw: float


def mean_force(forces: np.ndarray) -> float:
    """Arithmetic mean of the observed (non-NaN) force values in one window.

    Raises:
        NoContact: every value in the window is missing.
    """
    forces = np.asarray(forces, dtype=np.float64)
    observed = forces[~np.isnan(forces)]
    if observed.size == 0:
        raise NoContact("no contact sensed in window")
    return float(observed.mean())


def savgol_coefficients(poly_order: int = SAVGOL_ORDER,
                        window_points: int = SAVGOL_WINDOW) -> np.ndarray:
    """Center-point Savitzky-Golay smoothing weights.

    Solves the least-squares normal equations on the integer stencil
    -h..h: the weights are the row of (A^T A)^{-1} A^T that evaluates the
    fitted polynomial at the window center.

    Raises:
        Degenerate: window not odd or not larger than the polynomial order.
    """
    if window_points % 2 != 1:
        raise Degenerate("window_points must be odd")
    if window_points <= poly_order:
        raise Degenerate("window_points must exceed poly_order")
    h = (window_points - 1) // 2
    stencil = np.arange(-h, h + 1, dtype=np.float64)
    design = np.vander(stencil, poly_order + 1, increasing=True)
    # Row 0 of the solution evaluates the fit at stencil position 0.
    normal = design.T @ design
    coeffs = np.linalg.solve(normal, design.T)
    return coeffs[0]


def savgol_smooth(y: np.ndarray, poly_order: int = SAVGOL_ORDER,
                  window_points: int = SAVGOL_WINDOW) -> np.ndarray:
    """Smooth the interior of a dense series; boundary points pass through.

    Raises:
        TooShort: series shorter than the filter window.
    """
    y = np.asarray(y, dtype=np.float64)
    if len(y) < window_points:
        raise TooShort(f"need at least {window_points} points, got {len(y)}")
    weights = savgol_coefficients(poly_order, window_points)
    h = (window_points - 1) // 2
    out = y.copy()
    out[h:len(y) - h] = np.correlate(y, weights, mode="valid")
    return out


def _local_extrema(y: np.ndarray) -> tuple[list[int], list[int]]:
    """Indices of strict local maxima and minima; plateaus yield their midpoint."""
    n = len(y)
    maxima, minima = [], []
    i = 1
    while i < n - 1:
        if y[i] == y[i - 1]:
            i += 1
            continue
        j = i
        while j < n - 1 and y[j + 1] == y[j]:
            j += 1
        if j >= n - 1:
            break
        mid = (i + j) // 2
        if y[i] > y[i - 1] and y[j] > y[j + 1]:
            maxima.append(mid)
        elif y[i] < y[i - 1] and y[j] < y[j + 1]:
            minima.append(mid)
        i = j + 1
    return maxima, minima


def _prominences(y: np.ndarray, peaks: list[int]) -> np.ndarray:
    """Topographic prominence of each peak of y (standard base definition)."""
    proms = np.empty(len(peaks))
    for idx, p in enumerate(peaks):
        height = y[p]
        left_base = height
        for i in range(p - 1, -1, -1):
            if y[i] > height:
                break
            left_base = min(left_base, y[i])
        right_base = height
        for i in range(p + 1, len(y)):
            if y[i] > height:
                break
            right_base = min(right_base, y[i])
        proms[idx] = height - max(left_base, right_base)
    return proms


def find_critical_points(y_smoothed: np.ndarray, x_interp: np.ndarray,
                         t: np.ndarray,
                         prominence_mm: float = DEFAULT_PROMINENCE_MM,
                         min_separation_s: float = DEFAULT_SEPARATION_S) -> CriticalPoints:
    """Peaks and valleys of the smoothed y trajectory, merged in time order.

    A reversal is kept when its prominence reaches ``prominence_mm``. Among
    critical points of either kind closer together than ``min_separation_s``
    only the most prominent survives (greedy, ties toward the earlier
    point), which is what lets jitter doublets produce the non-alternating
    sequences the outlier filter rejects. An empty result is allowed.
    """
    y_smoothed = np.asarray(y_smoothed, dtype=np.float64)
    x_interp = np.asarray(x_interp, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)

    maxima, minima = _local_extrema(y_smoothed)
    candidates = [(i, PEAK, p) for i, p in
                  zip(maxima, _prominences(y_smoothed, maxima))] + \
                 [(i, VALLEY, p) for i, p in
                  zip(minima, _prominences(-y_smoothed, minima))]
    candidates = [(i, kind, prom) for i, kind, prom in candidates
                  if prom >= prominence_mm]
    candidates.sort(key=lambda c: (-c[2], c[0]))
    kept: list[tuple[int, str]] = []
    for i, kind, _ in candidates:
        if all(abs(t[i] - t[j]) >= min_separation_s for j, _ in kept):
            kept.append((i, kind))
    kept.sort()
    idx = np.array([i for i, _ in kept], dtype=int)
    kinds = [k for _, k in kept]
    return CriticalPoints(y_smoothed[idx], x_interp[idx], t[idx], kinds)


def mean_velocity(cp: CriticalPoints) -> float:
    """Mean chord velocity over the window's reversal-to-reversal segments.

    Euclidean distances between adjacent critical points, divided
    elementwise by the timestep differences, averaged over the q-1 segments.

    Raises:
        TooFewCriticalPoints: fewer than two reversals in the window.
    """
    q = len(cp)
    if q < 2:
        raise TooFewCriticalPoints(f"need >= 2 critical points, got {q}")
    distances = np.hypot(np.diff(cp.y), np.diff(cp.x))
    dt = np.diff(cp.t)
    return float(np.mean(distances / dt))


def power_label(mean_force_n: float, mean_velocity_mm_s: float) -> float:
    """Scratch power in mW: 1 N x 1 mm/s = 1 mW."""
    return mean_force_n * mean_velocity_mm_s


def filter_outliers(diagnostics: list[WindowDiagnostics],
                    max_jump_mm: float = MAX_JUMP_MM,
                    max_power_mw: float = MAX_POWER_MW) -> list[tuple[bool, str]]:
    """Per-window validity decision with the first matching rejection reason.

    Rejections, in order of evaluation: no contact at all; fewer than two
    reversals; two consecutive same-kind reversals; an interpolated x or y
    jump above ``max_jump_mm`` between adjacent timesteps; power above
    ``max_power_mw``.
    """
    out = []
    for d in diagnostics:
        if not d.has_contact:
            out.append((False, REASON_NO_CONTACT))
        elif len(d.kinds) < 2:
            out.append((False, REASON_TOO_FEW_CRITICAL_POINTS))
        elif any(a == b for a, b in zip(d.kinds, d.kinds[1:])):
            out.append((False, REASON_NON_ALTERNATING))
        elif d.max_jump_mm > max_jump_mm:
            out.append((False, REASON_POSITION_JUMP))
        elif d.power_mw > max_power_mw:
            out.append((False, REASON_POWER_EXCEEDS_MAX))
        else:
            out.append((True, ""))
    return out


def _interp_positions(trace: ContactTrace) -> tuple[np.ndarray, np.ndarray]:
    x = linear_interpolate(TimeSeries(trace.t, trace.x, Channel.TABLET_X,
                                      TABLET_RATE_HZ)).values
    y = linear_interpolate(TimeSeries(trace.t, trace.y, Channel.TABLET_Y,
                                      TABLET_RATE_HZ)).values
    return x, y


def label_block(trace: ContactTrace,
                prominence_mm: float = DEFAULT_PROMINENCE_MM,
                min_separation_s: float = DEFAULT_SEPARATION_S,
                max_jump_mm: float = MAX_JUMP_MM,
                max_power_mw: float = MAX_POWER_MW) -> list[PowerLabel]:
    """Run the full labeling pipeline over one z-second block.

    Returns one PowerLabel per 1-second window, invalid windows included
    with their rejection reason. Windows partition the block back-to-back
    from the first timestamp (or 0 for an empty trace).
    """
    n_windows = max(1, int(math.floor(trace.block_length_s + 1e-9)))
    t0 = float(trace.t[0]) if len(trace) else 0.0

    have_contact = len(trace) > 0 and not np.isnan(trace.y).all()
    if have_contact:
        x_i, y_i = _interp_positions(trace)
        if len(trace) >= SAVGOL_WINDOW:
            y_s = savgol_smooth(y_i)
        else:
            y_s = y_i
        cps = find_critical_points(y_s, x_i, trace.t, prominence_mm, min_separation_s)
    else:
        x_i = y_i = np.array([])
        cps = CriticalPoints(np.array([]), np.array([]), np.array([]), [])

    labels = []
    diagnostics = []
    for k in range(n_windows):
        w_start, w_end = t0 + k, t0 + k + 1.0
        in_win = (trace.t >= w_start) & (trace.t < w_end) if len(trace) else np.array([], bool)
        forces = trace.force[in_win]
        window_has_contact = forces.size > 0 and not np.isnan(forces).all()

        f_bar = v_bar = p = math.nan
        kinds: list[str] = []
        max_jump = 0.0
        if window_has_contact:
            f_bar = mean_force(forces)
            cp_win = cps.in_window(w_start, w_end)
            kinds = cp_win.kinds
            if in_win.any():
                sel = np.flatnonzero(in_win)
                # Extend one sample past the window so a jump across the
                # window boundary is charged to the earlier window.
                lo, hi = sel[0], min(sel[-1] + 1, len(x_i) - 1)
                if hi > lo:
                    jumps_x = np.abs(np.diff(x_i[lo:hi + 1]))
                    jumps_y = np.abs(np.diff(y_i[lo:hi + 1]))
                    max_jump = float(max(jumps_x.max(), jumps_y.max()))
            if len(cp_win) >= 2:
                v_bar = mean_velocity(cp_win)
                p = power_label(f_bar, v_bar)

        diagnostics.append(WindowDiagnostics(window_has_contact, kinds, max_jump, p))
        labels.append(PowerLabel(w_start, f_bar, v_bar, p, valid=False))

    for label, (ok, reason) in zip(labels, filter_outliers(diagnostics,
                                                           max_jump_mm,
                                                           max_power_mw)):
        label.valid = ok
        label.reason = reason
    return labels
