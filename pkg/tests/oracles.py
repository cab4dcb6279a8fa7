"""Independent brute-force oracles used by the test suite.

Everything here is deliberately written from the defining formulas, not by
calling the library, so a bug in the implementation cannot hide in its own
test. Keep these slow and obvious.
"""

import itertools
import math

import numpy as np


def naive_dft(signal: np.ndarray) -> np.ndarray:
    """O(N^2) DFT straight from the definition, in row chunks to bound memory."""
    signal = np.asarray(signal, dtype=np.float64)
    n = len(signal)
    out = np.empty(n, dtype=np.complex128)
    grid = np.arange(n)
    chunk = max(1, 2_000_000 // max(n, 1))
    for k0 in range(0, n, chunk):
        k = np.arange(k0, min(k0 + chunk, n))
        out[k0:k0 + len(k)] = np.exp(-2j * np.pi * np.outer(k, grid) / n) @ signal
    return out


def scalar_mean(values) -> float:
    total = 0.0
    count = 0
    for v in values:
        if not math.isnan(v):
            total += v
            count += 1
    return total / count


def scalar_mae(y, y_hat) -> float:
    total = 0.0
    for a, b in zip(y, y_hat):
        total += abs(a - b)
    return total / len(y)


def polyfit_savgol(y: np.ndarray, order: int, window: int) -> np.ndarray:
    """Per-window polynomial least squares: fit each window, evaluate at its
    center. Interior points only; boundaries pass through."""
    y = np.asarray(y, dtype=np.float64)
    h = (window - 1) // 2
    stencil = np.arange(-h, h + 1, dtype=np.float64)
    out = y.copy()
    for j in range(h, len(y) - h):
        coeffs = np.polynomial.polynomial.polyfit(stencil, y[j - h:j + h + 1], order)
        out[j] = coeffs[0]
    return out


def finite_difference_gradient(f, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    grad = np.empty_like(params)
    for i in range(len(params)):
        bumped = params.copy()
        bumped[i] += h
        up = f(bumped)
        bumped[i] -= 2 * h
        down = f(bumped)
        grad[i] = (up - down) / (2 * h)
    return grad


def scalar_adam_trace(grad_fn, w0: float, lr: float, steps: int,
                      beta1: float = 0.9, beta2: float = 0.999,
                      eps: float = 1e-8) -> list[float]:
    """Hand-rolled scalar Adam; returns the weight after each step."""
    w, m, v = w0, 0.0, 0.0
    trace = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        w = w - lr * m_hat / (math.sqrt(v_hat) + eps)
        trace.append(w)
    return trace


def _rankdata_simple(values):
    values = list(values)
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def wilcoxon_enumeration_p(a, b) -> tuple[float, float]:
    """Exact two-sided signed-rank p by literally enumerating every sign
    assignment (itertools, no DP). Returns (W, p). Practical to n ~ 18."""
    d = [x - y for x, y in zip(a, b) if x != y]
    ranks = _rankdata_simple([abs(v) for v in d])
    w_plus = sum(r for r, v in zip(ranks, d) if v > 0)
    w_minus = sum(r for r, v in zip(ranks, d) if v < 0)
    w = min(w_plus, w_minus)
    n = len(d)
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        if sum(r for r, s in zip(ranks, signs) if s) <= w + 1e-12:
            hits += 1
    return w, min(1.0, 2.0 * hits / 2 ** n)


def spearman_permutation_p(x, y) -> float:
    """Two-sided permutation p for Spearman's rho by full enumeration."""
    rx = _rankdata_simple(x)
    ry = _rankdata_simple(y)

    def rho(ra, rb):
        ra, rb = np.asarray(ra), np.asarray(rb)
        ra = ra - ra.mean()
        rb = rb - rb.mean()
        return float((ra * rb).sum() / np.sqrt((ra * ra).sum() * (rb * rb).sum()))

    observed = abs(rho(rx, ry))
    hits = 0
    total = 0
    for perm in itertools.permutations(ry):
        total += 1
        if abs(rho(rx, perm)) >= observed - 1e-12:
            hits += 1
    return hits / total


def dense_path_speed(x, y, t, t_start, t_end) -> float:
    """Mean speed by dense path integration over one window."""
    x, y, t = np.asarray(x), np.asarray(y), np.asarray(t)
    sel = (t >= t_start) & (t < t_end)
    idx = np.flatnonzero(sel)
    path = 0.0
    for i in idx[:-1]:
        path += math.hypot(x[i + 1] - x[i], y[i + 1] - y[i])
    return path / (t[idx[-1]] - t[idx[0]])
