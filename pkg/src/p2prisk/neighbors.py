"""Exact Euclidean k-nearest-neighbour search.

Brute force, chunked to bound memory. Results are ordered by distance with
ties broken by ascending point index, so every query is deterministic.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

from .errors import EmptyPointSet, KTooLarge

_CHUNK_CELLS = 4_000_000
_EXPANSION_ERR = 4 * np.finfo(np.float64).eps


class NeighborIndex:
    def __init__(self, points) -> None:
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise EmptyPointSet(f"need at least one point with one dimension, got shape {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("points must be finite")
        self.points = pts
        self._sq_norms = np.einsum("ij,ij->i", pts, pts)
        self._max_norm = float(np.sqrt(self._sq_norms.max()))

    def __len__(self) -> int:
        return self.points.shape[0]

    def query(self, point, k: int, exclude: int | None = None) -> list[tuple[int, float]]:
        """The ``k`` nearest points to ``point`` as ``(index, distance)`` pairs."""
        idx, dist = self.query_many(
            np.asarray(point, dtype=np.float64).reshape(1, -1),
            k,
            None if exclude is None else np.array([exclude]),
        )
        return [(int(i), float(d)) for i, d in zip(idx[0], dist[0])]

    def query_many(self, queries, k: int, exclude=None) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Batched queries.

        ``exclude`` is an optional per-query point index to leave out
        (typically the query's own index). Returns ``(indices, distances)``,
        both of shape ``(n_queries, k)``.
        """
        q = np.asarray(queries, dtype=np.float64)
        if q.ndim == 1:
            q = q.reshape(1, -1)
        n, d = self.points.shape
        if q.shape[1] != d:
            raise ValueError(f"query dimension {q.shape[1]} != index dimension {d}")
        available = n - (1 if exclude is not None else 0)
        if k < 1 or k > available:
            raise KTooLarge(f"k={k} but only {available} points are available")
        if exclude is not None:
            exclude = np.asarray(exclude, dtype=np.int64).reshape(-1)
            if exclude.shape[0] != q.shape[0]:
                raise ValueError("exclude must have one entry per query")

        out_idx = np.empty((q.shape[0], k), dtype=np.int64)
        out_dist = np.empty((q.shape[0], k), dtype=np.float64)
        chunk = max(1, _CHUNK_CELLS // max(1, n))
        for start in range(0, q.shape[0], chunk):
            stop = min(start + chunk, q.shape[0])
            block = q[start:stop]
            # expanded-norm distances only shortlist candidates; the ranking
            # itself uses distances recomputed from coordinate differences
            approx = self._sq_norms[None, :] + np.einsum("ij,ij->i", block, block)[:, None]
            approx -= 2.0 * (block @ self.points.T)
            scale = (np.sqrt(np.max(block * block, axis=1) * d) + self._max_norm) ** 2
            margin = 2.0 * _EXPANSION_ERR * (d + 2) * scale
            if exclude is not None:
                approx[np.arange(stop - start), exclude[start:stop]] = np.inf
            for row in range(stop - start):
                a = approx[row]
                kth = np.partition(a, k - 1)[k - 1] if k < n else np.inf
                cand = np.flatnonzero(a <= kth + margin[row])
                if exclude is not None:
                    cand = cand[cand != exclude[start + row]]
                diff = self.points[cand] - block[row]
                dist = np.sqrt(np.sum(diff * diff, axis=1))
                # cand is ascending, so a stable sort on distance breaks ties by index
                order = np.argsort(dist, kind="stable")[:k]
                out_idx[start + row] = cand[order]
                out_dist[start + row] = dist[order]
        return out_idx, out_dist

    def all_neighbors(self, k: int) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """k nearest neighbours of every indexed point, excluding itself."""
        n = len(self)
        return self.query_many(self.points, k, exclude=np.arange(n))


def build(points) -> NeighborIndex:
    return NeighborIndex(points)
