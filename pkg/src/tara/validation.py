"""Input validation helpers shared by the estimator and evaluator."""

from __future__ import annotations

import numpy as np


def check_matrix(x, name: str = "X", dim: int | None = None) -> np.ndarray:
    """Coerce to a finite 2-D float64 array, optionally checking the width."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} has dim {arr.shape[1]}, expected {dim}")
    return arr


def check_unit_rows(x: np.ndarray, name: str = "X", tol: float = 1e-5) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    bad = np.where(np.abs(norms - 1.0) > tol)[0]
    if bad.size:
        raise ValueError(f"{name} row {bad[0]} has norm {norms[bad[0]]:.6f}, expected 1")
    return x


def unpack_triplets(X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Accept (A, P, N) tuples or a stacked (n, 3, d) array of triplets."""
    if isinstance(X, (tuple, list)) and len(X) == 3:
        a = check_matrix(X[0], "anchors")
        p = check_matrix(X[1], "positives", dim=a.shape[1])
        n = check_matrix(X[2], "negatives", dim=a.shape[1])
        if not (a.shape == p.shape == n.shape):
            raise ValueError("anchor/positive/negative arrays must share one shape")
        return a, p, n
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[1] == 3:
        return arr[:, 0, :], arr[:, 1, :], arr[:, 2, :]
    raise ValueError(
        "X must be an (anchors, positives, negatives) tuple or an (n, 3, d) array"
    )
