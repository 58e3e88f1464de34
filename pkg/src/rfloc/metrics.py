"""Localization and shape metrics for receptive fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOCALIZED, OSCILLATORY, FLAT = "localized", "oscillatory", "flat"
IPR_THRESHOLD = 0.3
FIT_TOLERANCE = 0.2


def _nonzero(w) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if not np.any(w):
        raise ValueError("zero weight vector")
    return w


def ipr(w) -> float:
    """Inverse participation ratio sum(w^4) / sum(w^2)^2, in [1/n, 1]."""
    w = _nonzero(w)
    w = w / np.max(np.abs(w))  # avoid under/overflow; IPR is scale-free
    w2 = w * w
    return float(np.sum(w2 * w2) / np.sum(w2) ** 2)


def excess_kurtosis(samples) -> float:
    """m4 / m2^2 - 3 from central sample moments (no bias correction)."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 4:
        raise ValueError("need at least 4 samples")
    d = x - x.mean()
    m2 = np.mean(d * d)
    if not m2 > 0:
        raise ValueError("zero variance")
    return float(np.mean(d ** 4) / m2 ** 2 - 3.0)


@dataclass(frozen=True)
class SinusoidFit:
    k: int
    a: float
    b: float
    rel_residual: float

    def evaluate(self, n: int) -> np.ndarray:
        x = np.arange(n) / n
        return self.a * np.cos(2 * np.pi * self.k * x) + self.b * np.sin(2 * np.pi * self.k * x)


def sinusoid_fit(w) -> SinusoidFit:
    """Best single-frequency fit ``a cos(2 pi k x) + b sin(2 pi k x)`` on ``x = i / n``.

    ``k`` is the argmax of the DFT magnitude over ``0..n//2`` (k = 0 is the mean).
    Magnitudes within a relative 1e-9 count as tied and the smallest ``k`` wins,
    so the choice does not depend on rounding (and the fit is shift invariant).
    """
    w = np.asarray(w, dtype=float).ravel()
    n = w.size
    if n < 4:
        raise ValueError("need n >= 4")
    norm = np.linalg.norm(w)
    if norm == 0:
        raise ValueError("zero weight vector")
    mag = np.abs(np.fft.rfft(w))
    k = int(np.argmax(mag >= mag.max() * (1 - 1e-9)))
    x = np.arange(n) / n
    if k == 0 or 2 * k == n:
        # only the cosine basis vector is nonzero at 0 and Nyquist
        basis = np.cos(2 * np.pi * k * x)
        a = float(basis @ w / (basis @ basis))
        b = 0.0
        fit = a * basis
    else:
        A = np.column_stack([np.cos(2 * np.pi * k * x), np.sin(2 * np.pi * k * x)])
        (a, b), *_ = np.linalg.lstsq(A, w, rcond=None)
        a, b = float(a), float(b)
        fit = A @ np.array([a, b])
    resid = float(np.linalg.norm(w - fit) / norm)
    return SinusoidFit(k, a, b, min(max(resid, 0.0), 1.0))


def peak_index(w) -> int:
    """Index of the largest |w_i|; ties go to the smallest index."""
    return int(np.argmax(np.abs(_nonzero(w))))


def circular_distance(i: int, j: int, n: int) -> int:
    d = abs(int(i) - int(j)) % n
    return min(d, n - d)


def localization_verdict(w, ipr_threshold: float = IPR_THRESHOLD) -> str:
    w = _nonzero(w)
    if ipr(w) >= ipr_threshold:
        return LOCALIZED
    fit = sinusoid_fit(w)
    if fit.rel_residual <= FIT_TOLERANCE:
        return OSCILLATORY if fit.k >= 1 else FLAT
    return OSCILLATORY


def metric_row(w, samples=None) -> dict:
    """Metric columns shared by experiment CSVs."""
    fit = sinusoid_fit(w)
    return {
        "ipr": ipr(w),
        "excess_kurtosis": float("nan") if samples is None else excess_kurtosis(samples),
        "fit_k": fit.k,
        "fit_rel_residual": fit.rel_residual,
        "peak": peak_index(w),
    }
