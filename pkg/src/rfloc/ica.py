"""Fixed-point ICA with symmetric decorrelation (logcosh or kurtosis contrast)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import peak_index


@dataclass
class Whitening:
    mean: np.ndarray
    K: np.ndarray        # whitening map, x_white = K (x - mean)
    K_inv: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) @ self.K.T

    def invert(self, Z):
        return np.asarray(Z, dtype=float) @ self.K_inv.T + self.mean


def whiten(X, rank_tol: float = 1e-10):
    """ZCA whitening with the full empirical covariance (no dimension reduction)."""
    X = np.asarray(X, dtype=float)
    m, N = X.shape
    if m < N + 1:
        raise ValueError(f"need at least N+1 = {N + 1} samples, got {m}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / m
    lam, V = np.linalg.eigh(cov)
    if lam[0] <= rank_tol * max(lam[-1], np.finfo(float).tiny):
        raise np.linalg.LinAlgError("covariance is rank deficient")
    K = (V / np.sqrt(lam)) @ V.T
    K_inv = (V * np.sqrt(lam)) @ V.T
    wh = Whitening(mean, K, K_inv)
    return Xc @ K.T, wh


def sym_decorrelate(W):
    """``W <- (W W')^{-1/2} W``; rows become orthonormal."""
    lam, V = np.linalg.eigh(W @ W.T)
    return (V / np.sqrt(lam)) @ V.T @ W


@dataclass
class IcaResult:
    components: np.ndarray    # (C, N) filters acting on raw inputs
    unmixing: np.ndarray      # (C, N) orthonormal rows in whitened space
    whitening: Whitening
    n_iter: int
    converged: bool

    def canonical(self) -> np.ndarray:
        """Components sorted by peak index with positive peaks."""
        comps = []
        for c in self.components:
            p = peak_index(c)
            comps.append((p, c if c[p] > 0 else -c))
        comps.sort(key=lambda t: t[0])
        return np.array([c for _, c in comps])


def _contrast(U, kind):
    if kind == "logcosh":
        g = np.tanh(U)
        return g, 1.0 - g * g
    if kind == "kurtosis":
        return U ** 3, 3.0 * U * U
    raise ValueError(f"unknown contrast {kind!r}")


def fastica(X, n_components: int = 10, max_iter: int = 500, tol: float = 1e-6,
            rng: np.random.Generator | None = None, contrast: str = "logcosh") -> IcaResult:
    """Parallel fixed-point ICA.

    Update per row: ``w <- E[z g(w'z)] - E[g'(w'z)] w``, then symmetric
    decorrelation. Stops when ``max |1 - |<w_new, w_old>|| < tol``; a run
    that hits ``max_iter`` is returned with ``converged = False``.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[1]
    if not 1 <= n_components <= N:
        raise ValueError("need 1 <= n_components <= N")
    rng = np.random.default_rng(0) if rng is None else rng
    Z, wh = whiten(X)
    m = Z.shape[0]
    W = sym_decorrelate(rng.standard_normal((n_components, N)))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        U = Z @ W.T                                     # (m, C)
        g, dg = _contrast(U, contrast)
        W_new = sym_decorrelate(g.T @ Z / m - dg.mean(axis=0)[:, None] * W)
        delta = np.max(np.abs(1.0 - np.abs(np.sum(W_new * W, axis=1))))
        W = W_new
        if delta < tol:
            converged = True
            break
    return IcaResult(W @ wh.K, W, wh, it, converged)
