"""Singular spectrum analysis of a series' lag-covariance structure.

The series is embedded into length-``m`` sliding windows, the ``m x m``
lag-covariance matrix is diagonalised with cyclic Jacobi rotations, and
smoothed series are rebuilt from a chosen subset of principal components by
diagonal averaging.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import EmbeddingTooLarge, EmptySelection, IndexOutOfRange

DEFAULT_EMBEDDING = 10
DEFAULT_THRESHOLD = 0.9999


def jacobi_eigh(a, tol: float = 1e-15, max_sweeps: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a real symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns, in
    the order the rotations leave them (unsorted). Sweeps stop once the
    off-diagonal Frobenius norm drops below ``tol`` times the matrix norm.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    upper = np.triu_indices(n, 1)

    for _ in range(max_sweeps):
        off = math.sqrt(2.0) * np.linalg.norm(a[upper])
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                h = a[q, q] - a[p, p]
                if abs(apq) < 1e-18 * abs(h):
                    t = apq / h
                else:
                    theta = h / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                a[:, p] = c * col_p - s * a[:, q]
                a[:, q] = s * col_p + c * a[:, q]
                row_p = a[p, :].copy()
                a[p, :] = c * row_p - s * a[q, :]
                a[q, :] = s * row_p + c * a[q, :]
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    return np.diag(a).copy(), v


def _check_embedding(n: int, m: int) -> None:
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise EmbeddingTooLarge(f"embedding dimension must be a positive integer, got {m!r}")
    if not m < n / 2:
        raise EmbeddingTooLarge(f"embedding dimension {m} must be < n/2 = {n / 2}")


def delay_matrix(x, m: int) -> np.ndarray:
    """Trajectory matrix: entry ``(r, c)`` is ``x[r + c]``; shape ``m x (n - m + 1)``."""
    x = np.asarray(x, dtype=float)
    _check_embedding(len(x), m)
    return np.lib.stride_tricks.sliding_window_view(x, m).T.copy()


COVARIANCE_KINDS = ("trajectory", "toeplitz")


def lag_covariance(x, m: int, center: bool = False, kind: str = "trajectory") -> np.ndarray:
    """``m x m`` lag-covariance matrix of the series' delay embedding.

    ``kind="trajectory"`` is ``X @ X.T / K`` for the delay matrix ``X`` with
    ``K = n - m + 1`` columns: positive semidefinite, and exactly rank 2 for
    a pure sinusoid. ``kind="toeplitz"`` fills a Toeplitz matrix with the
    biased lag-d autocovariances ``s(0) .. s(m-1)``; its ``(n - d) / n``
    taper leaks a little energy out of low-rank signals.

    With ``center=False`` products are taken about zero rather than the
    sample mean, so a series' level shows up in the leading component.
    """
    if kind not in COVARIANCE_KINDS:
        raise ValueError(f"kind must be one of {COVARIANCE_KINDS}, got {kind!r}")
    x = np.asarray(x, dtype=float)
    _check_embedding(len(x), m)
    n = len(x)
    y = x - x.mean() if center else x
    if kind == "trajectory":
        X = delay_matrix(y, m)
        return X @ X.T / X.shape[1]
    s = np.array([np.dot(y[: n - d], y[d:]) / n for d in range(m)])
    idx = np.arange(m)
    return s[np.abs(idx[:, None] - idx[None, :])]


@dataclass
class SsaDecomposition:
    embedding_dim: int
    eigenvalues: np.ndarray
    eigenvalue_shares: np.ndarray
    eigenvectors: np.ndarray  # columns are E^k
    principal_components: np.ndarray  # (n - m + 1) x m, column k is a^k
    original_length: int
    covariance: np.ndarray
    mean: float = 0.0
    centered: bool = False
    degenerate: bool = False


def ssa_decompose(
    x, m: int = DEFAULT_EMBEDDING, center: bool = False, covariance: str = "trajectory"
) -> SsaDecomposition:
    """Decompose ``x`` into ``m`` eigen-components, largest first.

    A series with no energy to decompose (all zeros, or constant when
    ``center=True``) is not an error: it comes back flagged ``degenerate``
    with shares ``[1, 0, ..., 0]`` and identity eigenvectors.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    _check_embedding(n, m)
    mean = float(x.mean()) if center else 0.0
    y = x - mean
    if center and np.ptp(x) == 0.0:
        y = np.zeros_like(x)

    cov = lag_covariance(y, m, center=False, kind=covariance)
    if cov[0, 0] == 0.0:
        values = np.zeros(m)
        vectors = np.eye(m)
        shares = np.zeros(m)
        shares[0] = 1.0
        degenerate = True
    else:
        values, vectors = jacobi_eigh(cov)
        order = np.argsort(-values, kind="stable")
        values, vectors = values[order], vectors[:, order]
        # deterministic sign: each eigenvector's entries sum non-negative
        signs = np.where(vectors.sum(axis=0) < 0, -1.0, 1.0)
        vectors = vectors * signs
        shares = values / values.sum()
        degenerate = False

    pcs = delay_matrix(y, m).T @ vectors
    return SsaDecomposition(
        embedding_dim=int(m),
        eigenvalues=values,
        eigenvalue_shares=shares,
        eigenvectors=vectors,
        principal_components=pcs,
        original_length=n,
        covariance=cov,
        mean=mean,
        centered=center,
        degenerate=degenerate,
    )


def _diagonal_average(windows: np.ndarray, n: int) -> np.ndarray:
    m, k = windows.shape
    total = np.zeros(n)
    count = np.zeros(n)
    for j in range(m):
        total[j : j + k] += windows[j]
        count[j : j + k] += 1.0
    return total / count


def ssa_reconstruct(d: SsaDecomposition, selected: Iterable[int]) -> np.ndarray:
    """Rebuild a series from the 1-based component indices in ``selected``."""
    idx = sorted(set(int(i) for i in selected))
    if not idx:
        raise EmptySelection("at least one component must be selected")
    bad = [i for i in idx if i < 1 or i > d.embedding_dim]
    if bad:
        raise IndexOutOfRange(f"component indices {bad} outside [1, {d.embedding_dim}]")
    cols = np.array(idx) - 1
    windows = d.eigenvectors[:, cols] @ d.principal_components[:, cols].T
    return _diagonal_average(windows, d.original_length) + d.mean


def select_components(d: SsaDecomposition, threshold: float = DEFAULT_THRESHOLD) -> list[int]:
    """Smallest leading prefix ``[1..k]`` whose cumulative share reaches ``threshold``."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    cumulative = np.cumsum(d.eigenvalue_shares)
    hits = np.nonzero(cumulative >= threshold - 1e-12)[0]
    k = int(hits[0]) + 1 if len(hits) else d.embedding_dim
    return list(range(1, k + 1))


def ssa_denoise(
    x,
    m: int = DEFAULT_EMBEDDING,
    threshold: float = DEFAULT_THRESHOLD,
    center: bool = False,
    covariance: str = "trajectory",
) -> tuple[np.ndarray, SsaDecomposition, list[int]]:
    """Decompose, pick the leading components by ``threshold``, and reconstruct."""
    d = ssa_decompose(x, m, center=center, covariance=covariance)
    selected = select_components(d, threshold)
    return ssa_reconstruct(d, selected), d, selected
