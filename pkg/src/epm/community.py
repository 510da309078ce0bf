"""Community summaries, node orderings and reordered matrix export."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CommunitySummary",
    "DenseExportError",
    "summarize",
    "permute_matrix",
    "export_reordered",
    "rank_size_curve",
    "write_summary",
    "DENSE_EXPORT_LIMIT",
    "LOG10_RANGE",
]

DENSE_EXPORT_LIMIT = 5000
LOG10_RANGE = (-2.0, 1.0)


class DenseExportError(ValueError):
    """Matrix too large for dense export."""


@dataclass(frozen=True)
class CommunitySummary:
    """Sizes of hard-assigned communities and the induced node order.

    ``sizes[k]`` is the number of nodes assigned to community ``k``;
    ``community_order`` lists communities by descending size (ties by lower
    id); ``order`` is the node permutation that groups nodes by community in
    that order (stable within a group), so ``order[p]`` is the node placed at
    position ``p``.
    """

    sizes: np.ndarray
    community_order: np.ndarray
    order: np.ndarray

    @property
    def n_active(self):
        return int(np.count_nonzero(self.sizes))

    @property
    def position(self):
        """Inverse of ``order``: ``position[node]`` is its permuted index."""
        pos = np.empty_like(self.order)
        pos[self.order] = np.arange(self.order.size)
        return pos


def summarize(assignments, n_communities=None):
    """Summarise hard assignments (one non-negative id per node)."""
    z = np.asarray(assignments, dtype=np.int64).reshape(-1)
    if z.size and z.min() < 0:
        raise ValueError("community ids must be non-negative")
    K = int(z.max()) + 1 if z.size else 0
    if n_communities is not None:
        if n_communities < K:
            raise ValueError("n_communities is smaller than the largest id")
        K = int(n_communities)
    sizes = np.bincount(z, minlength=K)
    comm_order = np.lexsort((np.arange(K), -sizes))
    rank = np.empty(K, np.int64)
    rank[comm_order] = np.arange(K)
    order = np.argsort(rank[z], kind="stable") if z.size else np.zeros(0, np.int64)
    return CommunitySummary(sizes, comm_order, order)


def permute_matrix(matrix, order):
    m = np.asarray(matrix)
    return m[np.ix_(order, order)]


def _to_dense(matrix):
    if hasattr(matrix, "to_dense"):
        return matrix.to_dense()
    if hasattr(matrix, "toarray"):
        return matrix.toarray()
    return np.asarray(matrix)


def export_reordered(matrix, summary: CommunitySummary, path=None, log10=False, fmt="%.6g"):
    """Permute rows and columns by ``summary.order``; optionally write CSV.

    ``log10=True`` maps probabilities to ``log10(p)`` clamped to [-2, 1].
    Returns the permuted dense matrix.
    """
    n = summary.order.size
    if n > DENSE_EXPORT_LIMIT:
        raise DenseExportError(f"refusing dense export of a {n} x {n} matrix (limit {DENSE_EXPORT_LIMIT})")
    m = _to_dense(matrix)
    if m.shape != (n, n):
        raise ValueError(f"matrix shape {m.shape} does not match {n} nodes")
    out = permute_matrix(m, summary.order).astype(float)
    if log10:
        with np.errstate(divide="ignore"):
            out = np.clip(np.log10(out), *LOG10_RANGE)
    if path is not None:
        np.savetxt(path, out, delimiter=",", fmt=fmt)
    return out


def rank_size_curve(summary: CommunitySummary):
    """``[(rank, size), ...]`` over non-empty communities, rank 1 the largest."""
    sizes = summary.sizes[summary.community_order]
    return [(r + 1, int(s)) for r, s in enumerate(sizes) if s > 0]


def write_summary(summary: CommunitySummary, out_dir, matrix=None, log10=False):
    """Write ``sizes.csv``, ``order.csv`` and, when ``matrix`` is given, ``blocks.csv``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "sizes.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["community", "size"])
        for k in summary.community_order:
            if summary.sizes[k] > 0:
                w.writerow([int(k), int(summary.sizes[k])])
    with open(os.path.join(out_dir, "order.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "permuted_index"])
        for node, p in enumerate(summary.position):
            w.writerow([node, int(p)])
    if matrix is not None:
        export_reordered(matrix, summary, os.path.join(out_dir, "blocks.csv"), log10=log10)
