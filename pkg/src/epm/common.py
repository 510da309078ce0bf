"""Machinery shared by the HGP-EPM, GP-EPM and AGM samplers."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .randkit import as_generator, sample_multinomial_counts, truncated_poisson_array

logger = logging.getLogger(__name__)

__all__ = [
    "RATE_FLOOR",
    "TINY",
    "NonFiniteStateError",
    "EdgeRateDecomposition",
    "LinkScoreSet",
    "edge_rate",
    "link_probability",
    "sample_edge_counts",
    "partition_edges",
    "categorical_rows",
    "update_scores",
]

# A positive edge whose Poisson rate is below this is treated as having rate RATE_FLOOR.
RATE_FLOOR = 1e-300
# Lower bound applied to every strictly positive parameter after it is drawn.
TINY = 1e-300


class NonFiniteStateError(FloatingPointError):
    """A sweep produced a non-finite or non-positive parameter."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path


@dataclass
class EdgeRateDecomposition:
    """Per-category Poisson rates of one node pair and their sum.

    ``categories`` is a K x K matrix for the HGP form (entry ``(k1, k2)`` is
    ``phi_i[k1] * lam[k1, k2] * phi_j[k2]``), a K-vector for the GP form, or a
    (K+1)-vector for the AGM form with the background rate last.
    """

    categories: np.ndarray
    total: float


def edge_rate(phi_i, phi_j, interaction, background=None):
    """Decompose the Poisson rate of pair ``(i, j)`` over its categories.

    ``interaction`` is either a symmetric K x K rate matrix or a K-vector of
    community weights (the diagonal-only form). ``background`` adds the AGM
    background category.
    """
    phi_i = np.asarray(phi_i, dtype=float)
    phi_j = np.asarray(phi_j, dtype=float)
    lam = np.asarray(interaction, dtype=float)
    if phi_i.shape != phi_j.shape or phi_i.ndim != 1:
        raise ValueError("feature vectors must be 1-d and equal length")
    for name, arr in (("phi_i", phi_i), ("phi_j", phi_j), ("interaction", lam)):
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError(f"{name} must be finite and non-negative")
    if lam.ndim == 2:
        if lam.shape != (phi_i.size, phi_i.size):
            raise ValueError("interaction matrix has the wrong shape")
        cats = phi_i[:, None] * lam * phi_j[None, :]
    elif lam.ndim == 1:
        if lam.size != phi_i.size:
            raise ValueError("interaction vector has the wrong length")
        cats = lam * phi_i * phi_j
    else:
        raise ValueError("interaction must be a vector or a square matrix")
    if background is not None:
        if background < 0:
            raise ValueError("background rate must be non-negative")
        cats = np.append(cats.ravel(), background)
    return EdgeRateDecomposition(cats, float(cats.sum()))


def link_probability(rate_total):
    """``P(b = 1) = 1 - exp(-rate)`` under the Bernoulli-Poisson link."""
    return -np.expm1(-np.asarray(rate_total, dtype=float))


def _floor_argmax_weights(w):
    """Rows with zero or non-finite mass become uniform over their largest entries."""
    tot = w.sum(axis=1)
    bad = ~(tot > 0) | ~np.isfinite(tot)
    if bad.any():
        sub = np.nan_to_num(w[bad], nan=0.0, posinf=1.0)
        w = w.copy()
        w[bad] = (sub == sub.max(axis=1, keepdims=True)).astype(float)
    return w


def categorical_rows(gen, weights):
    """One categorical draw per row, probability proportional to the row.

    Rows whose weights sum to zero draw uniformly among their largest entries.
    """
    w = _floor_argmax_weights(np.asarray(weights, dtype=float))
    cum = np.cumsum(w, axis=1)
    u = gen.random(w.shape[0]) * cum[:, -1]
    k = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(k, w.shape[1] - 1)


def sample_edge_counts(stream, b_ij, decomposition: EdgeRateDecomposition):
    """Latent per-category counts for a single pair.

    ``b_ij = 0`` gives all zeros. For ``b_ij = 1`` the total count is drawn from
    Po+(total) and split multinomially over the categories; the returned array
    has the shape of ``decomposition.categories``.
    """
    cats = np.asarray(decomposition.categories, dtype=float)
    if not b_ij:
        return np.zeros(cats.shape, dtype=np.int64)
    total = decomposition.total
    flat = cats.ravel()
    if not total > 0:
        logger.warning("positive edge with zero rate; flooring at %g", RATE_FLOOR)
        total = RATE_FLOOR
    if not flat.sum() > 0:
        flat = (flat == flat.max()).astype(float)
    m = int(truncated_poisson_array(stream, np.array([total]))[0])
    return sample_multinomial_counts(stream, m, flat).reshape(cats.shape)


def partition_edges(stream, totals, left_weights, right_weights_fn=None, full_weights_fn=None, unit_cap=64):
    """Draw ``m_ij ~ Po+(total)`` for every positive edge and split it over categories.

    Edges with ``m_ij <= unit_cap`` are split one unit at a time: ``k1`` from
    ``left_weights`` (the per-edge marginal of the first index) and, when
    ``right_weights_fn`` is given, ``k2`` from ``right_weights_fn(edge_idx, k1)``.
    Sequential categorical draws of each unit are a multinomial split of
    ``m_ij``. Larger counts use one multinomial draw over
    ``full_weights_fn(edge)`` (a K-vector or K x K matrix) so the cost does
    not grow with ``m_ij``.

    Returns ``(m, edge, k1, k2, count)``: one row per (edge, category) cell
    with ``count`` units. ``k2`` is None for single-index categories.
    """
    gen = as_generator(stream)
    tot = np.where(totals > RATE_FLOOR, totals, RATE_FLOOR)
    m = truncated_poisson_array(stream, tot)
    small = np.where(m <= unit_cap, m, 0)
    edge = np.repeat(np.arange(len(m)), small)
    k1 = categorical_rows(gen, left_weights[edge])
    k2 = None if right_weights_fn is None else categorical_rows(gen, right_weights_fn(edge, k1))
    count = np.ones(edge.size, dtype=np.int64)

    big = np.flatnonzero(m > unit_cap)
    if big.size:
        if full_weights_fn is None:
            full_weights_fn = lambda e: left_weights[e]  # noqa: E731
        parts = [(edge, k1, k2, count)]
        for e in big:
            w = np.asarray(full_weights_fn(e), dtype=float)
            shape = w.shape
            flat = _floor_argmax_weights(w.reshape(1, -1))[0]
            cnt = gen.multinomial(int(m[e]), flat / flat.sum())
            nz = np.flatnonzero(cnt)
            if len(shape) == 2:
                a, b = np.divmod(nz, shape[1])
            else:
                a, b = nz, None
            parts.append((np.full(nz.size, e), a, b, cnt[nz].astype(np.int64)))
        edge = np.concatenate([p[0] for p in parts])
        k1 = np.concatenate([p[1] for p in parts])
        k2 = None if right_weights_fn is None else np.concatenate([p[2] for p in parts])
        count = np.concatenate([p[3] for p in parts])
    return m, edge, k1, k2, count


@dataclass
class LinkScoreSet:
    """Running posterior mean of ``P(b_ij = 1)`` over collected sweeps."""

    pairs: np.ndarray
    scores: np.ndarray
    n_samples: int = 0

    @classmethod
    def for_pairs(cls, pairs):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(pairs, np.zeros(len(pairs)), 0)

    def add(self, probabilities):
        p = np.asarray(probabilities, dtype=float)
        if p.shape != self.scores.shape:
            raise ValueError("probability vector does not match the pair list")
        self.n_samples += 1
        self.scores += (p - self.scores) / self.n_samples
        return self


def update_scores(scores: LinkScoreSet, state, mask=None):
    """Fold the current state's link probabilities into ``scores``.

    ``state`` is any model state exposing ``pair_rates(i, j)`` (the total
    Poisson rate for arrays of pairs), or such a callable itself.
    """
    pair_rates_fn = getattr(state, "pair_rates", state)
    if mask is not None and mask.n_nodes and len(mask) and not np.array_equal(mask.pairs, scores.pairs):
        raise ValueError("score set and mask cover different pairs")
    p = scores.pairs
    rates = pair_rates_fn(p[:, 0], p[:, 1]) if len(p) else np.zeros(0)
    return scores.add(link_probability(rates))


class FitContext:
    """Training data as seen by a sampler: positive edges plus held-out pairs.

    All sufficient statistics sum over observed pairs only; held-out pairs
    enter through the symmetric indicator ``heldout`` which the samplers
    subtract from the all-pairs sums.
    """

    def __init__(self, graph, mask=None):
        from .graph import HoldoutMask

        self.n_nodes = graph.n_nodes
        if mask is None:
            mask = HoldoutMask.empty(graph.n_nodes)
        if mask.n_nodes != graph.n_nodes:
            raise ValueError("mask and graph disagree on the node count")
        if len(mask) and graph.n_edges:
            # Positive held-out pairs must not be present among training edges.
            if not np.all(mask.observed_mask(graph.edges[:, 0], graph.edges[:, 1])):
                raise ValueError("training graph contains held-out pairs")
        self.graph = graph
        self.mask = mask
        self.ei = np.ascontiguousarray(graph.edges[:, 0])
        self.ej = np.ascontiguousarray(graph.edges[:, 1])
        self.heldout = mask.heldout_matrix()
        self.has_heldout = len(mask) > 0
        self.n_observed_pairs = mask.n_observed_pairs

    def heldout_neighbors(self, i):
        h = self.heldout
        return h.indices[h.indptr[i] : h.indptr[i + 1]]

    def heldout_sum(self, phi):
        """Row ``i`` is the sum of ``phi[j]`` over pairs ``(i, j)`` that are held out."""
        if not self.has_heldout:
            return np.zeros_like(phi)
        return self.heldout @ phi
