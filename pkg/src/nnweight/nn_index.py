"""Exact Euclidean nearest-neighbor index with a random tie-breaking policy.

The index is read-only after construction and safe for unlimited
concurrent queries.  Exact distance ties (bitwise-equal floating point
distances, which arise with duplicated or discretized coordinates) are
ordered by a pseudo-random permutation derived statelessly from
``(tie_seed, query point, tied indices)``, so results do not depend on
query order, batching, or worker count.

Backend selection: a k-d tree for moderate dimension and large point
counts, a vectorized scan otherwise (p > 16 or n < 256).  The backend
only proposes candidates; ordering and tie handling are canonical, so the
choice does not affect results.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

_BRUTE_MAX_DIM = 16
_BRUTE_MAX_N = 256


@dataclass(frozen=True, eq=False)
class PointSet:
    """An (n, p) array of finite reals, immutable once constructed."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must form a non-empty (n, p) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite (no NaN or inf entries)")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]


def _tie_permutation(tie_seed: int, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Deterministic pseudo-random permutation of a tied index group.

    Keyed on (tie_seed, query coordinates, sorted member indices) and
    nothing else, so the permutation is identical regardless of k, query
    order, or how the candidates were discovered.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<q", int(tie_seed)))
    h.update(np.ascontiguousarray(x, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(np.sort(indices), dtype=np.int64).tobytes())
    rng = np.random.default_rng(int.from_bytes(h.digest(), "little"))
    return rng.permutation(len(indices))


class NNIndex:
    """Exact k-NN queries over a fixed point set."""

    def __init__(self, points: PointSet, tie_seed: int = 0):
        if not isinstance(points, PointSet):
            points = PointSet(points)
        self.points = points
        self.tie_seed = int(tie_seed)
        use_tree = points.p <= _BRUTE_MAX_DIM and points.n >= _BRUTE_MAX_N
        self._tree = cKDTree(points.points) if use_tree else None

    @property
    def n(self) -> int:
        return self.points.n

    @property
    def p(self) -> int:
        return self.points.p

    # -- raw candidate search -------------------------------------------------

    def _distances_to(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        diff = self.points.points[indices] - x
        return np.sqrt((diff * diff).sum(axis=1))

    def _backend_knn(self, X: np.ndarray, k: int, workers: int = 1):
        """Top-k candidates per query row; distances from a canonical formula."""
        if self._tree is not None:
            dist, idx = self._tree.query(X, k=k, workers=workers)
            if k == 1:
                dist, idx = dist[:, None], idx[:, None]
            return dist, idx
        # vectorized scan, chunked to bound memory
        pts = self.points.points
        m = X.shape[0]
        idx = np.empty((m, k), dtype=np.int64)
        dist = np.empty((m, k))
        chunk = max(1, int(2_000_000 / max(1, self.n)))
        for s in range(0, m, chunk):
            block = X[s:s + chunk]
            diff = block[:, None, :] - pts[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            if k < self.n:
                part = np.argpartition(d2, k - 1, axis=1)[:, :k]
            else:
                part = np.broadcast_to(np.arange(self.n), (block.shape[0], self.n)).copy()
            part_d2 = np.take_along_axis(d2, part, axis=1)
            order = np.argsort(part_d2, axis=1, kind="stable")
            idx[s:s + chunk] = np.take_along_axis(part, order, axis=1)
            dist[s:s + chunk] = np.sqrt(np.take_along_axis(part_d2, order, axis=1))
        return dist, idx

    # -- public queries --------------------------------------------------------

    def query_knn(self, x, k: int) -> list[tuple[int, float]]:
        """Exact k nearest neighbors of a single point, ties randomized.

        Returns (index, distance) pairs with nondecreasing distances.
        Groups of bitwise-equal distances are ordered by the stateless tie
        permutation; because the permutation is keyed on the full tied
        group, the k-NN set is always a subset of the (k+1)-NN set.
        """
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.p:
            raise ValueError(f"query has dimension {x.shape[0]}, index has {self.p}")
        if not 1 <= k <= self.n:
            raise ValueError(f"k must be in [1, {self.n}], got {k}")

        # Expand the candidate pool until the k-th distance group is complete.
        kk = min(self.n, k + 8)
        while True:
            dist, idx = self._backend_knn(x[None, :], kk)
            cand = idx[0]
            d = self._distances_to(x, cand)
            order = np.argsort(d, kind="stable")
            cand, d = cand[order], d[order]
            dk = d[k - 1]
            if kk == self.n or d[-1] > dk:
                break
            kk = min(self.n, kk * 2)

        keep = d <= dk
        cand, d = cand[keep], d[keep]
        out_idx: list[int] = []
        out_d: list[float] = []
        start = 0
        while start < len(cand):
            stop = start
            while stop < len(cand) and d[stop] == d[start]:
                stop += 1
            group = cand[start:stop]
            if len(group) > 1:
                group = group[_tie_permutation(self.tie_seed, x, group)]
            out_idx.extend(int(i) for i in group)
            out_d.extend(float(v) for v in d[start:stop])
            start = stop
        return list(zip(out_idx[:k], out_d[:k]))

    def nearest(self, X, workers: int = 1) -> np.ndarray:
        """1NN index for each row of X; the hot path for Monte Carlo loops.

        Tie rows (bitwise-equal first and second distances) are rerouted
        through the canonical single-query path, so batched results match
        one-at-a-time queries exactly.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[1] != self.p:
            raise ValueError(f"queries have dimension {X.shape[1]}, index has {self.p}")
        if self.n == 1:
            return np.zeros(X.shape[0], dtype=np.int64)
        dist, idx = self._backend_knn(X, 2, workers=workers)
        out = idx[:, 0].astype(np.int64)
        tied = dist[:, 0] == dist[:, 1]
        for row in np.nonzero(tied)[0]:
            out[row] = self.query_knn(X[row], 1)[0][0]
        return out

    def nearest_two(self, X, workers: int = 1):
        """Indices and distances of the two nearest neighbors per row.

        The order within an exact tie is backend order; downstream uses
        treat the pair as unordered.
        """
        if self.n < 2:
            raise ValueError("nearest_two needs an index over at least 2 points")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[1] != self.p:
            raise ValueError(f"queries have dimension {X.shape[1]}, index has {self.p}")
        dist, idx = self._backend_knn(X, 2, workers=workers)
        return idx.astype(np.int64), dist


def build_index(ps: PointSet, tie_seed: int = 0) -> NNIndex:
    """Construct an immutable exact-NN index over ``ps``."""
    return NNIndex(ps, tie_seed=tie_seed)
