"""Dense embedding containers and the cosine similarity kernel.

Rows are stored as 32-bit floats; dot products accumulate in 64-bit so the
metric math downstream stays stable.
"""

from __future__ import annotations

import numpy as np

NORM_TOL = 1e-5


class EmbeddingError(ValueError):
    pass


class EmbeddingMatrix:
    """Id-indexed rows x dim float32 matrix, immutable after construction."""

    def __init__(self, ids, data, normalized: bool = False):
        ids = tuple(str(i) for i in ids)
        if len(set(ids)) != len(ids):
            raise EmbeddingError("ids must be unique")
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 2:
            raise EmbeddingError(f"data must be 2-D, got shape {data.shape}")
        if data.shape[0] != len(ids):
            raise EmbeddingError(
                f"{len(ids)} ids but {data.shape[0]} rows"
            )
        if data.shape[1] < 1:
            raise EmbeddingError("dim must be >= 1")
        if not np.all(np.isfinite(data)):
            raise EmbeddingError("data contains non-finite values")
        if normalized:
            norms = np.linalg.norm(data.astype(np.float64), axis=1)
            bad = np.where(np.abs(norms - 1.0) > NORM_TOL)[0]
            if bad.size:
                raise EmbeddingError(
                    f"normalized flag set but row {ids[bad[0]]!r} has norm {norms[bad[0]]:.6f}"
                )
        data = data.copy()
        data.flags.writeable = False
        self._ids = ids
        self._data = data
        self._normalized = bool(normalized)
        self._row_of = {i: k for k, i in enumerate(ids)}

    @property
    def ids(self) -> tuple[str, ...]:
        return self._ids

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def normalized(self) -> bool:
        return self._normalized

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def dim(self) -> int:
        return self._data.shape[1]

    def row(self, item_id: str) -> np.ndarray:
        return self._data[self._row_of[item_id]]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._row_of

    def take(self, ids) -> "EmbeddingMatrix":
        """Sub-matrix with the given ids, in the given order."""
        ids = list(ids)
        missing = [i for i in ids if i not in self._row_of]
        if missing:
            raise EmbeddingError(f"unknown ids: {missing[:5]!r}")
        rows = np.stack([self._data[self._row_of[i]] for i in ids]) if ids else \
            np.empty((0, self.dim), dtype=np.float32)
        return EmbeddingMatrix(ids, rows, normalized=self._normalized)

    def to_dict(self) -> dict[str, np.ndarray]:
        return {i: self._data[k] for k, i in enumerate(self._ids)}


def l2_normalize(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Divide each row by its Euclidean norm; errors name zero-norm rows."""
    data = m.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise EmbeddingError(f"zero-norm row {m.ids[zero[0]]!r} cannot be normalized")
    return EmbeddingMatrix(m.ids, data / norms[:, None], normalized=True)


def sim_matrix(queries: EmbeddingMatrix, gallery: EmbeddingMatrix) -> np.ndarray:
    """Cosine similarities: entry (i, j) = <queries row i, gallery row j>.

    Both inputs must be normalized; the result is float64.
    """
    if queries.dim != gallery.dim:
        raise EmbeddingError(
            f"dimension mismatch: queries dim {queries.dim}, gallery dim {gallery.dim}"
        )
    if not queries.normalized or not gallery.normalized:
        raise EmbeddingError("sim_matrix requires normalized inputs")
    q = queries.data.astype(np.float64)
    g = gallery.data.astype(np.float64)
    return q @ g.T
