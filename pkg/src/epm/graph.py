"""Sparse undirected binary graphs, edge-list I/O and the holdout protocol."""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .randkit import as_generator

__all__ = [
    "GraphFormatError",
    "HoldoutInfeasibleError",
    "SparseGraph",
    "HoldoutMask",
    "load_edge_list",
    "parse_edge_list",
    "write_edge_list",
    "make_holdout",
    "degree_stats",
    "load_pairs",
    "write_mask",
    "load_mask",
]


class GraphFormatError(ValueError):
    """Malformed graph input; the message names the offending line."""


class HoldoutInfeasibleError(RuntimeError):
    """Requested holdout fraction cannot be met under the degree guard."""

    def __init__(self, message, achieved_fraction):
        super().__init__(message)
        self.achieved_fraction = achieved_fraction


def _pair_keys(i, j, n_nodes):
    return np.asarray(i, dtype=np.int64) * n_nodes + np.asarray(j, dtype=np.int64)


def _canonical_edges(i, j, n_nodes):
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    keys = np.unique(_pair_keys(lo, hi, n_nodes))
    return np.stack([keys // n_nodes, keys % n_nodes], axis=1) if keys.size else np.zeros((0, 2), np.int64)


@dataclass(frozen=True)
class SparseGraph:
    """Undirected binary graph stored as a canonical ``i < j`` edge list.

    Use :meth:`from_edges` to build one; it sorts, deduplicates and orients
    the pairs. The CSR adjacency and per-node neighbour lists are derived.
    """

    n_nodes: int
    edges: np.ndarray
    adjacency: sp.csr_matrix = field(repr=False, compare=False)

    @classmethod
    def from_edges(cls, n_nodes, edges=(), allow_self_loops=False):
        n_nodes = int(n_nodes)
        if n_nodes < 1:
            raise ValueError(f"n_nodes must be positive, got {n_nodes}")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n_nodes):
            raise GraphFormatError("edge index out of range")
        loops = e[:, 0] == e[:, 1]
        if loops.any():
            if not allow_self_loops:
                raise GraphFormatError("self-edges are not allowed")
            e = e[~loops]
        canon = _canonical_edges(e[:, 0], e[:, 1], n_nodes)
        data = np.ones(2 * len(canon))
        rows = np.concatenate([canon[:, 0], canon[:, 1]])
        cols = np.concatenate([canon[:, 1], canon[:, 0]])
        adj = sp.csr_matrix((data, (rows, cols)), shape=(n_nodes, n_nodes))
        adj.sort_indices()
        canon.setflags(write=False)
        return cls(n_nodes, canon, adj)

    @classmethod
    def from_adjacency(cls, matrix):
        """Build from a symmetric 0/1 matrix (dense or scipy sparse)."""
        if sp.issparse(matrix):
            m = sp.coo_matrix(matrix)
            if (abs(m - m.T) > 0).nnz:
                raise GraphFormatError("adjacency matrix is not symmetric")
            if np.any(m.diagonal() != 0):
                raise GraphFormatError("adjacency matrix has a non-zero diagonal")
            keep = (m.row < m.col) & (m.data != 0)
            return cls.from_edges(m.shape[0], np.stack([m.row[keep], m.col[keep]], axis=1))
        a = np.asarray(matrix)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphFormatError(f"adjacency must be square, got shape {a.shape}")
        if not np.array_equal(a, a.T):
            raise GraphFormatError("adjacency matrix is not symmetric")
        if np.any(np.diag(a) != 0):
            raise GraphFormatError("adjacency matrix has a non-zero diagonal")
        if not np.all((a == 0) | (a == 1)):
            raise GraphFormatError("adjacency matrix must be binary")
        i, j = np.nonzero(np.triu(a, 1))
        return cls.from_edges(a.shape[0], np.stack([i, j], axis=1))

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def degrees(self):
        return np.diff(self.adjacency.indptr)

    def neighbors(self, i):
        a = self.adjacency
        return a.indices[a.indptr[i] : a.indptr[i + 1]]

    def has_edge(self, i, j):
        i, j = min(i, j), max(i, j)
        keys = _pair_keys(self.edges[:, 0], self.edges[:, 1], self.n_nodes)
        k = i * self.n_nodes + j
        pos = np.searchsorted(keys, k)
        return bool(pos < keys.size and keys[pos] == k)

    def to_dense(self):
        return self.adjacency.toarray().astype(np.int8)

    def __eq__(self, other):
        return (
            isinstance(other, SparseGraph)
            and self.n_nodes == other.n_nodes
            and np.array_equal(self.edges, other.edges)
        )

    __hash__ = None


@dataclass(frozen=True)
class HoldoutMask:
    """Held-out node pairs with their true labels.

    Pairs are stored canonically (``i < j``) and sorted, so two masks built
    from the same seed compare byte-for-byte.
    """

    n_nodes: int
    pairs: np.ndarray  # (H, 2) int64
    labels: np.ndarray  # (H,) int8

    @classmethod
    def empty(cls, n_nodes):
        return cls(int(n_nodes), np.zeros((0, 2), np.int64), np.zeros(0, np.int8))

    @classmethod
    def from_pairs(cls, n_nodes, pairs, labels):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        labels = np.asarray(labels, dtype=np.int8).reshape(-1)
        if len(pairs) != len(labels):
            raise ValueError("pairs and labels differ in length")
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise ValueError("held-out pairs must not be self-pairs")
        lo, hi = pairs.min(axis=1), pairs.max(axis=1)
        keys = _pair_keys(lo, hi, n_nodes)
        order = np.argsort(keys, kind="stable")
        if np.any(np.diff(keys[order]) == 0):
            raise ValueError("duplicate held-out pairs")
        pairs = np.stack([lo[order], hi[order]], axis=1)
        return cls(int(n_nodes), pairs, labels[order])

    def __len__(self):
        return len(self.pairs)

    @property
    def keys(self):
        return _pair_keys(self.pairs[:, 0], self.pairs[:, 1], self.n_nodes)

    def is_observed(self, i, j):
        """``o_ij``: False for held-out pairs, True otherwise. O(log H)."""
        if i == j:
            raise ValueError("self-pairs are undefined")
        i, j = min(i, j), max(i, j)
        keys = self.keys
        k = i * self.n_nodes + j
        pos = np.searchsorted(keys, k)
        return not (pos < keys.size and keys[pos] == k)

    def observed_mask(self, i, j):
        """Vectorised ``o_ij`` for arrays of pairs."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        k = _pair_keys(np.minimum(i, j), np.maximum(i, j), self.n_nodes)
        keys = self.keys
        if keys.size == 0:
            return np.ones(k.shape, dtype=bool)
        pos = np.clip(np.searchsorted(keys, k), 0, keys.size - 1)
        return keys[pos] != k

    def heldout_matrix(self):
        """Symmetric CSR indicator of held-out pairs, used for the rate corrections."""
        n = self.n_nodes
        p = self.pairs
        data = np.ones(2 * len(p))
        m = sp.csr_matrix(
            (data, (np.concatenate([p[:, 0], p[:, 1]]), np.concatenate([p[:, 1], p[:, 0]]))), shape=(n, n)
        )
        m.sort_indices()
        return m

    @property
    def n_observed_pairs(self):
        return self.n_nodes * (self.n_nodes - 1) // 2 - len(self.pairs)


# --------------------------------------------------------------------------- I/O


def parse_edge_list(text, n_nodes=None, fmt="tsv", one_based=False, strict=True):
    """Parse edge-list text. See :func:`load_edge_list`."""
    if fmt in ("tsv", "tsv-pairs"):
        return _parse_tsv(text, n_nodes, one_based, strict)
    if fmt in ("dense", "dense-01-matrix"):
        return _parse_dense(text)
    raise GraphFormatError(f"unknown format {fmt!r}")


def load_edge_list(path, n_nodes=None, fmt="tsv", one_based=False, strict=True):
    """Read a graph from ``path``.

    ``fmt`` is ``"tsv"`` (one ``i<TAB>j`` pair per line, ``#`` comments and an
    optional ``nodes=N`` header) or ``"dense"`` (whitespace-separated 0/1 rows).
    In strict mode self-edges raise :class:`GraphFormatError`; otherwise they
    are dropped.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_edge_list(text, n_nodes=n_nodes, fmt=fmt, one_based=one_based, strict=strict)


def _parse_tsv(text, n_nodes, one_based, strict):
    offset = 1 if one_based else 0
    header_n = None
    pairs = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("nodes="):
            try:
                header_n = int(line[len("nodes=") :])
            except ValueError:
                raise GraphFormatError(f"line {lineno}: bad header {line!r}") from None
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"line {lineno}: expected two node indices, got {line!r}")
        try:
            i, j = int(parts[0]) - offset, int(parts[1]) - offset
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer node index in {line!r}") from None
        if i < 0 or j < 0:
            raise GraphFormatError(f"line {lineno}: negative node index")
        if i == j:
            if strict:
                raise GraphFormatError(f"line {lineno}: self-edge {i}-{j} not allowed")
            continue
        pairs.append((i, j, lineno))
    n = n_nodes if n_nodes is not None else header_n
    if n is None:
        n = max((max(i, j) for i, j, _ in pairs), default=-1) + 1
        if n == 0:
            raise GraphFormatError("empty edge list needs nodes=N or an explicit node count")
    for i, j, lineno in pairs:
        if max(i, j) >= n:
            raise GraphFormatError(f"line {lineno}: node index {max(i, j)} >= n_nodes={n}")
    return SparseGraph.from_edges(n, [(i, j) for i, j, _ in pairs])


def _parse_dense(text):
    rows = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([int(x) for x in line.split()])
        except ValueError:
            raise GraphFormatError(f"line {lineno}: non-integer entry") from None
    if not rows:
        raise GraphFormatError("empty matrix")
    if any(len(r) != len(rows) for r in rows):
        raise GraphFormatError("matrix is not square")
    return SparseGraph.from_adjacency(np.array(rows))


def format_edge_list(graph):
    lines = [f"nodes={graph.n_nodes}\n"]
    lines.extend(f"{i}\t{j}\n" for i, j in graph.edges)
    return "".join(lines)


def write_edge_list(graph, path):
    """Write the canonical tsv form: ``nodes=N`` header then sorted ``i<TAB>j`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_edge_list(graph))


def load_pairs(path, n_nodes=None):
    """Read ``i<TAB>j`` pairs (extra columns ignored), preserving order."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                i, j = int(parts[0]), int(parts[1])
            except (ValueError, IndexError):
                raise GraphFormatError(f"line {lineno}: expected 'i j', got {line!r}") from None
            if n_nodes is not None and (min(i, j) < 0 or max(i, j) >= n_nodes):
                raise GraphFormatError(f"line {lineno}: pair ({i}, {j}) out of range for {n_nodes} nodes")
            if i == j:
                raise GraphFormatError(f"line {lineno}: self-pair ({i}, {j})")
            out.append((i, j))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def write_mask(mask, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes={mask.n_nodes}\n")
        for (i, j), lab in zip(mask.pairs, mask.labels):
            fh.write(f"{i}\t{j}\t{lab}\n")


def load_mask(path, n_nodes):
    pairs, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise GraphFormatError(f"line {lineno}: expected 'i j label'")
            pairs.append((int(parts[0]), int(parts[1])))
            labels.append(int(parts[2]))
    return HoldoutMask.from_pairs(n_nodes, np.array(pairs, np.int64).reshape(-1, 2), labels)


# ----------------------------------------------------------------------- holdout


def _unrank_pairs(idx, n):
    """Map linear indices over ``{(i, j): i < j}`` in row-major order to pairs."""
    rows = np.arange(n - 1, dtype=np.int64)
    starts = rows * n - rows * (rows + 1) // 2
    i = np.searchsorted(starts, idx, side="right") - 1
    j = idx - starts[i] + i + 1
    return i, j


def make_holdout(graph: SparseGraph, fraction: float, stream):
    """Hold out ``floor(fraction * N(N-1)/2)`` uniformly drawn node pairs.

    A held-out edge that would leave one of its endpoints without any training
    edge is kept in training and replaced by the next uniformly drawn pair.
    Returns ``(training_graph, mask)``.
    """
    if not (0.0 <= fraction < 1.0):
        raise ValueError(f"fraction must lie in [0, 1), got {fraction}")
    n = graph.n_nodes
    n_pairs = n * (n - 1) // 2
    quota = int(np.floor(fraction * n_pairs))
    if quota == 0:
        return graph, HoldoutMask.empty(n)

    gen = as_generator(stream)
    order = gen.permutation(n_pairs)
    edge_keys = _pair_keys(graph.edges[:, 0], graph.edges[:, 1], n)
    deg = graph.degrees.astype(np.int64).copy()

    accepted = []
    n_acc = 0
    pos = 0
    while n_acc < quota and pos < n_pairs:
        take = order[pos : pos + (quota - n_acc)]
        pos += take.size
        i, j = _unrank_pairs(take, n)
        keys = i * n + j
        if edge_keys.size:
            loc = np.clip(np.searchsorted(edge_keys, keys), 0, edge_keys.size - 1)
            is_edge = edge_keys[loc] == keys
        else:
            is_edge = np.zeros(keys.size, dtype=bool)
        keep = ~is_edge
        for t in np.flatnonzero(is_edge):
            a, b = i[t], j[t]
            if deg[a] >= 2 and deg[b] >= 2:
                deg[a] -= 1
                deg[b] -= 1
                keep[t] = True
        accepted.append(np.stack([i[keep], j[keep], is_edge[keep].astype(np.int64)], axis=1))
        n_acc += int(keep.sum())

    if n_acc < quota:
        raise HoldoutInfeasibleError(
            f"only {n_acc} of {quota} pairs could be held out without isolating a node "
            f"(achieved fraction {n_acc / n_pairs:.4f})",
            n_acc / n_pairs,
        )
    held = np.concatenate(accepted, axis=0)
    mask = HoldoutMask.from_pairs(n, held[:, :2], held[:, 2])
    pos_pairs = mask.pairs[mask.labels == 1]
    pos_keys = _pair_keys(pos_pairs[:, 0], pos_pairs[:, 1], n)
    train = graph.edges[~np.isin(edge_keys, pos_keys)]
    return SparseGraph.from_edges(n, train), mask


def degree_stats(graph: SparseGraph):
    """Mean degree ``2|E|/N`` and a ``{degree: count}`` histogram."""
    deg = graph.degrees
    return 2.0 * graph.n_edges / graph.n_nodes, dict(sorted(Counter(int(d) for d in deg).items()))
