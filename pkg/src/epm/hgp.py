"""Hierarchical gamma process edge partition model (HGP-EPM).

The truncated model with K atoms:

    b_ij = 1(m_ij >= 1),     m_ij = sum_{k1,k2} m_{i k1 k2 j}
    m_{i k1 k2 j} ~ Po(phi_{i k1} lam_{k1 k2} phi_{j k2})
    phi_ik ~ Gam(a_i, 1/c_i),            a_i ~ Gam(e0, 1/f0)
    lam_kk ~ Gam(xi r_k, 1/beta),         lam_{k1 k2} ~ Gam(r_k1 r_k2, 1/beta)
    r_k ~ Gam(gamma0/K, 1/c0),           xi ~ Gam(e0, 1/f0)

with Gamma priors on gamma0, c_i, c0 and beta. Gibbs updates follow the
negative-binomial augmentation: CRT auxiliaries for the dispersion-type
parameters, gamma-Poisson conjugacy for the rest, and an independence
Metropolis-Hastings step for gamma0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .common import (
    TINY,
    FitContext,
    NonFiniteStateError,
    partition_edges,
)
from .graph import SparseGraph
from .randkit import as_generator, crt_array

__all__ = [
    "HgpHyper",
    "HgpState",
    "HgpSuffStats",
    "init_state",
    "compute_omega",
    "compute_theta",
    "sample_edge_partition",
    "gibbs_sweep",
    "sample_gamma0",
    "gamma0_proposal_params",
    "lemma1_expectation",
    "sample_lambda_total",
    "simulate_network",
    "hard_and_overlapping_assignments",
    "log_likelihood",
]


@dataclass
class HgpHyper:
    """Hyperparameters. Priors given as (shape, rate) pairs."""

    n_components: int = 100
    e0: float = 0.01
    f0: float = 0.01
    gamma0_prior: tuple = (1.0, 1.0)
    c_prior: tuple = (1.0, 1.0)
    c0_prior: tuple = (1.0, 1.0)
    beta_prior: tuple = (1.0, 1.0)

    def __post_init__(self):
        if int(self.n_components) < 1:
            raise ValueError("n_components must be >= 1")
        vals = [self.e0, self.f0, *self.gamma0_prior, *self.c_prior, *self.c0_prior, *self.beta_prior]
        if any(not (v > 0 and np.isfinite(v)) for v in vals):
            raise ValueError("all hyperparameters must be positive and finite")


@dataclass
class HgpState:
    phi: np.ndarray  # (N, K)
    lam: np.ndarray  # (K, K) symmetric
    r: np.ndarray  # (K,)
    xi: float
    a: np.ndarray  # (N,)
    c: np.ndarray  # (N,)
    c0: float
    beta: float
    gamma0: float

    @property
    def n_components(self):
        return self.r.size

    @property
    def n_nodes(self):
        return self.phi.shape[0]

    def pair_rates(self, i, j):
        """Total Poisson rate ``phi_i^T Lambda phi_j`` for arrays of pairs."""
        i = np.asarray(i)
        j = np.asarray(j)
        out = np.empty(i.shape)
        for s in range(0, i.size, 65536):
            sl = slice(s, s + 65536)
            out[sl] = np.einsum("nk,nk->n", self.phi[i[sl]] @ self.lam, self.phi[j[sl]])
        return out

    def rate_matrix(self):
        return self.phi @ self.lam @ self.phi.T

    def check_finite(self):
        bad = []
        for name in ("phi", "lam", "r", "a", "c"):
            v = getattr(self, name)
            if not (np.all(np.isfinite(v)) and np.all(v > 0)):
                bad.append(name)
        for name in ("xi", "c0", "beta", "gamma0"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                bad.append(name)
        if not np.array_equal(self.lam, self.lam.T):
            bad.append("lam (asymmetric)")
        return bad

    def copy(self):
        return HgpState(
            self.phi.copy(), self.lam.copy(), self.r.copy(), self.xi, self.a.copy(),
            self.c.copy(), self.c0, self.beta, self.gamma0,
        )


@dataclass
class HgpSuffStats:
    """Aggregated latent counts of the current sweep.

    ``m_node[i, k]`` counts units of node i's edges routed through community k.
    ``m_comm[k1, k2]`` is symmetric; off the diagonal it holds
    ``m_{k1 k2} + m_{k2 k1}`` and on it ``m_{kk}``.
    """

    m_node: np.ndarray
    m_comm: np.ndarray
    omega: np.ndarray = field(default=None, repr=False)
    theta: np.ndarray = field(default=None, repr=False)
    m_edge: np.ndarray = field(default=None, repr=False)

    @classmethod
    def zeros(cls, n_nodes, n_components):
        return cls(
            np.zeros((n_nodes, n_components), np.int64),
            np.zeros((n_components, n_components), np.int64),
        )

    def consistency_errors(self):
        """Integer identities linking the node and community aggregates."""
        errs = []
        per_comm = self.m_node.sum(axis=0)
        expected = self.m_comm.sum(axis=1) + np.diag(self.m_comm)
        if not np.array_equal(per_comm, expected):
            errs.append("sum_i m_node[:, k] != sum_k2 m_comm[k, k2] (1 + delta)")
        total_units = int(np.triu(self.m_comm).sum())
        if int(self.m_node.sum()) != 2 * total_units:
            errs.append("sum m_node != 2 * sum_{k1<=k2} m_comm")
        if self.m_edge is not None and int(self.m_edge.sum()) != total_units:
            errs.append("sum_ij m_ij != number of partitioned units")
        if not np.array_equal(self.m_comm, self.m_comm.T):
            errs.append("m_comm not symmetric")
        return errs


def _gamma(gen, shape, rate):
    return np.maximum(gen.gamma(shape, 1.0 / rate), TINY)


def _symmetric_from_upper(upper):
    u = np.triu(upper)
    return u + np.triu(u, 1).T


def _lambda_shape(r, xi):
    shape = np.outer(r, r)
    np.fill_diagonal(shape, xi * r)
    return np.maximum(shape, TINY)


def init_state(n_nodes, hyper: HgpHyper, stream, init="prior", **fixed):
    """Draw every variable from its prior, top-down.

    Keyword overrides (``gamma0``, ``c0``, ``xi``, ``beta``) pin those
    scalars instead of drawing them.

    ``init="neutral"`` starts the chain away from the heavy tails of the
    default e0 = f0 = 0.01 priors: ``xi = 1``, ``a_i = 1`` and
    ``phi_ik ~ Gam(1, 1/c_i)``. Prior draws under those priors often put
    ``xi`` and most ``a_i`` near zero, where the sampler needs thousands of
    sweeps to escape.
    """
    if init not in ("prior", "neutral"):
        raise ValueError(f"init must be 'prior' or 'neutral', got {init!r}")
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    unknown = set(fixed) - {"gamma0", "c0", "xi", "beta"}
    if unknown:
        raise TypeError(f"unknown fixed parameters: {sorted(unknown)}")
    gen = as_generator(stream)
    K = int(hyper.n_components)
    gamma0 = fixed.get("gamma0") or float(_gamma(gen, hyper.gamma0_prior[0], hyper.gamma0_prior[1]))
    c0 = fixed.get("c0") or float(_gamma(gen, *hyper.c0_prior))
    r = _gamma(gen, np.full(K, gamma0 / K), c0)
    xi = fixed.get("xi") or float(_gamma(gen, hyper.e0, hyper.f0))
    if init == "neutral" and "xi" not in fixed:
        xi = 1.0
    beta = fixed.get("beta") or float(_gamma(gen, *hyper.beta_prior))
    lam = _symmetric_from_upper(_gamma(gen, _lambda_shape(r, xi), beta))
    a = _gamma(gen, np.full(n_nodes, hyper.e0), hyper.f0)
    c = _gamma(gen, np.full(n_nodes, hyper.c_prior[0]), hyper.c_prior[1])
    if init == "neutral":
        a[:] = 1.0
    phi = _gamma(gen, np.repeat(a[:, None], K, axis=1), c[:, None])
    return HgpState(phi, lam, r, xi, a, c, c0, beta, gamma0)


def compute_omega(state: HgpState, ctx: FitContext | None = None):
    """``omega[i, k] = sum_{j != i, o_ij = 1} sum_k' phi[j, k'] lam[k, k']``."""
    phi = state.phi
    total = phi.sum(axis=0)[None, :] - phi
    if ctx is not None and ctx.has_heldout:
        total = total - ctx.heldout_sum(phi)
    return np.maximum(total @ state.lam, 0.0)


def compute_theta(state: HgpState, ctx: FitContext | None = None, phi=None):
    """``theta[k1, k2] = 2^-delta sum_i sum_{j != i, o_ij = 1} phi[i, k1] phi[j, k2]``."""
    phi = state.phi if phi is None else phi
    s = phi.sum(axis=0)
    t = np.outer(s, s) - phi.T @ phi
    if ctx is not None and ctx.has_heldout:
        t = t - phi.T @ ctx.heldout_sum(phi)
    t = np.maximum(0.5 * (t + t.T), 0.0)
    t[np.diag_indices_from(t)] *= 0.5
    return t


def sample_edge_partition(state: HgpState, ctx: FitContext, stream):
    """Draw ``m_ij`` for every training edge and route each unit to ``(k1, k2)``.

    Only the node-community and community-community aggregates are kept.
    """
    N, K = state.phi.shape
    ei, ej = ctx.ei, ctx.ej
    stats = HgpSuffStats.zeros(N, K)
    if ei.size == 0:
        stats.m_edge = np.zeros(0, np.int64)
        return stats
    left = state.phi[ei]
    right = state.phi[ej] @ state.lam
    w1 = left * right
    totals = w1.sum(axis=1)

    def k2_weights(edge_of_unit, k1):
        return state.lam[k1] * state.phi[ej[edge_of_unit]]

    def full_weights(e):
        return state.phi[ei[e]][:, None] * state.lam * state.phi[ej[e]][None, :]

    m, unit_edge, k1, k2, cnt = partition_edges(stream, totals, w1, k2_weights, full_weights)
    ui, uj = ei[unit_edge], ej[unit_edge]
    stats.m_node = (
        np.bincount(ui * K + k1, weights=cnt, minlength=N * K)
        + np.bincount(uj * K + k2, weights=cnt, minlength=N * K)
    ).astype(np.int64).reshape(N, K)
    pair = np.bincount(k1 * K + k2, weights=cnt, minlength=K * K).astype(np.int64).reshape(K, K)
    m_comm = pair + pair.T
    m_comm[np.diag_indices(K)] //= 2
    stats.m_comm = m_comm
    stats.m_edge = m
    stats.units_per_edge = np.bincount(unit_edge, weights=cnt, minlength=len(m)).astype(np.int64)
    return stats


def _node_updates(state: HgpState, stats: HgpSuffStats, ctx: FitContext, gen, hyper: HgpHyper):
    """Sequential (a_i, phi_i) updates; omega_i always uses the latest phi."""
    phi, lam = state.phi, state.lam
    N, K = phi.shape
    ell = crt_array(gen, stats.m_node, np.repeat(state.a[:, None], K, axis=1)).sum(axis=1)
    s = phi.sum(axis=0)
    omega = np.empty_like(phi)
    h = ctx.heldout
    for i in range(N):
        rest = s - phi[i]
        if ctx.has_heldout:
            nb = h.indices[h.indptr[i] : h.indptr[i + 1]]
            if nb.size:
                rest = rest - phi[nb].sum(axis=0)
        om = np.maximum(rest @ lam, 0.0)
        omega[i] = om
        ci = state.c[i]
        rate_a = hyper.f0 + np.log1p(om / ci).sum()
        ai = max(gen.gamma(hyper.e0 + ell[i], 1.0 / rate_a), TINY)
        state.a[i] = ai
        new = np.maximum(gen.gamma(ai + stats.m_node[i], 1.0 / (ci + om)), TINY)
        s += new - phi[i]
        phi[i] = new
    stats.omega = omega


def _r_coefficients(r, xi):
    """``xi^delta r_k2^(1-delta)``: the r_k-free part of each shape parameter."""
    coef = np.repeat(r[None, :], r.size, axis=0)
    np.fill_diagonal(coef, xi)
    return coef


def gamma0_proposal_params(l_tilde, q, c0, hyper: HgpHyper):
    """Shape and rate of the proposal ``Q``.

    ``Q = Gam(e1 + sum_k l~_k, 1 / (f1 - (1/K) sum_k ln(1 - p~~_k)))`` with
    ``-ln(1 - p~~_k) = ln(1 + q_k / c0)``; ``(e1, f1)`` is the gamma0 prior.
    """
    q = np.asarray(q, dtype=float)
    g_shape, g_rate = hyper.gamma0_prior
    return g_shape + float(np.sum(l_tilde)), g_rate + float(np.log1p(q / c0).sum()) / q.size


def sample_gamma0(state: HgpState, aux, stream, hyper: HgpHyper | None = None, proposal=None):
    """Independence-chain Metropolis-Hastings update of ``gamma0``.

    ``aux`` holds ``l_sum`` (``sum_k2 l_{k k2}`` per k) and ``q`` (the
    per-community log-rate ``-sum_k2 xi^delta r_k2^(1-delta) ln(1 - p~_{k k2})``).
    A fixed ``proposal`` may be passed for testing.

    Returns ``(gamma0, accepted, log_ratio)``.
    """
    gen = as_generator(stream)
    hyper = hyper or HgpHyper(n_components=state.n_components)
    g_shape, g_rate = hyper.gamma0_prior
    K = state.n_components
    g0 = state.gamma0
    l_tilde = crt_array(gen, np.asarray(aux["l_sum"], dtype=np.int64), np.full(K, g0 / K))
    q_shape, q_rate = gamma0_proposal_params(l_tilde, aux["q"], state.c0, hyper)
    if proposal is None:
        proposal = max(gen.gamma(q_shape, 1.0 / q_rate), TINY)

    def log_target(g):
        a = g / K
        log_r = np.log(state.r)
        lik = np.sum(a * np.log(state.c0) - gammaln(a) + (a - 1.0) * log_r - state.c0 * state.r)
        return lik + (g_shape - 1.0) * np.log(g) - g_rate * g

    def log_q(g):
        return (q_shape - 1.0) * np.log(g) - q_rate * g

    log_ratio = log_target(proposal) - log_target(g0) + log_q(g0) - log_q(proposal)
    if proposal == g0:
        log_ratio = 0.0
    accepted = bool(np.log(gen.random()) < log_ratio)
    return (float(proposal) if accepted else g0), accepted, float(log_ratio)


def gibbs_sweep(state: HgpState, ctx: FitContext, stream, hyper: HgpHyper, check=False):
    """One full Gibbs sweep, in place. Returns ``(state, stats, info)``.

    Order: edge counts and their partition; (a_i, phi_i) per node; r_k with
    CRT auxiliaries; xi; Lambda; beta, c_i, c0; gamma0 by MH.
    ``check=True`` asserts the integer count identities.
    """
    gen = as_generator(stream)
    K = state.n_components

    stats = sample_edge_partition(state, ctx, stream)
    if check:
        if not np.array_equal(getattr(stats, "units_per_edge", stats.m_edge), stats.m_edge):
            raise AssertionError("edge partition does not sum to m_ij")
        errs = stats.consistency_errors()
        if errs:
            raise AssertionError("; ".join(errs))

    _node_updates(state, stats, ctx, gen, hyper)

    theta = compute_theta(state, ctx)
    stats.theta = theta
    log_q = np.log1p(theta / state.beta)  # -ln(1 - p~)
    iu = np.triu_indices(K)

    # r_k, with l_{k k2} drawn from the current shapes.
    shape = _lambda_shape(state.r, state.xi)
    l_mat = np.zeros((K, K), np.int64)
    l_mat[iu] = crt_array(gen, stats.m_comm[iu], shape[iu])
    l_mat = l_mat + np.triu(l_mat, 1).T
    g_over_k = state.gamma0 / K
    for k in range(K):
        coef = state.r.copy()
        coef[k] = state.xi
        rate = state.c0 + np.dot(coef, log_q[k])
        state.r[k] = max(gen.gamma(g_over_k + l_mat[k].sum(), 1.0 / rate), TINY)

    # xi, after refreshing the diagonal auxiliaries.
    diag_shape = np.maximum(state.xi * state.r, TINY)
    l_diag = crt_array(gen, np.diag(stats.m_comm), diag_shape)
    l_mat[np.diag_indices(K)] = l_diag
    xi_rate = hyper.f0 + np.dot(state.r, np.diag(log_q))
    state.xi = max(gen.gamma(hyper.e0 + l_diag.sum(), 1.0 / xi_rate), TINY)

    # Lambda.
    shape = _lambda_shape(state.r, state.xi)
    up = _gamma(gen, shape[iu] + stats.m_comm[iu], state.beta + theta[iu])
    lam = np.zeros((K, K))
    lam[iu] = up
    state.lam = lam + np.triu(lam, 1).T

    # beta, c_i, c0.
    b_shape, b_rate = hyper.beta_prior
    state.beta = float(_gamma(gen, b_shape + shape[iu].sum(), b_rate + state.lam[iu].sum()))
    c_shape, c_rate = hyper.c_prior
    state.c = _gamma(gen, c_shape + K * state.a, c_rate + state.phi.sum(axis=1))
    c0_shape, c0_rate = hyper.c0_prior
    state.c0 = float(_gamma(gen, c0_shape + state.gamma0, c0_rate + state.r.sum()))

    # gamma0.
    log_q = np.log1p(theta / state.beta)
    q = (_r_coefficients(state.r, state.xi) * log_q).sum(axis=1)
    state.gamma0, accepted, _ = sample_gamma0(state, {"l_sum": l_mat.sum(axis=1), "q": q}, gen, hyper)

    bad = state.check_finite()
    if bad:
        raise NonFiniteStateError(f"non-finite or non-positive values in: {', '.join(bad)}")
    info = {
        "gamma0_accepted": accepted,
        "active": int(np.count_nonzero(stats.m_node.sum(axis=0))),
        "lambda_sum": float(state.lam.sum()),
    }
    return state, stats, info


def log_likelihood(state: HgpState, ctx: FitContext):
    """Bernoulli log-likelihood of all observed pairs, in O(|E| K + N K^2)."""
    theta = compute_theta(state, ctx)
    iu = np.triu_indices(state.n_components)
    all_pairs = float((state.lam[iu] * theta[iu]).sum())
    if ctx.ei.size == 0:
        return -all_pairs
    rate = state.pair_rates(ctx.ei, ctx.ej)
    return float(np.sum(np.log(-np.expm1(-np.maximum(rate, 1e-300))) + rate)) - all_pairs


def lemma1_expectation(gamma0, xi, c0, beta):
    """Closed-form prior mean of ``sum_{k1,k2} lam_{k1 k2}`` for the untruncated process."""
    for name, v in (("gamma0", gamma0), ("xi", xi), ("c0", c0), ("beta", beta)):
        if not v > 0:
            raise ValueError(f"{name} must be > 0")
    return xi * gamma0 / (c0 * beta) + gamma0**2 / (c0**2 * beta)


def sample_lambda_total(stream, n_draws, n_components, gamma0, xi, c0, beta):
    """Monte Carlo draws of ``sum_{k1,k2} lam_{k1 k2}`` under the truncated prior.

    Given r, a sum of independent gammas with a shared scale is itself gamma
    distributed, so each draw costs O(K) rather than O(K^2). Off-diagonal
    entries are counted twice, as ``lam`` is symmetric.
    """
    gen = as_generator(stream)
    K = int(n_components)
    out = np.empty(n_draws)
    for t in range(n_draws):
        r = gen.gamma(gamma0 / K, 1.0 / c0, size=K)
        sr = r.sum()
        off_shape = 0.5 * (sr * sr - np.dot(r, r))
        diag = gen.gamma(xi * sr, 1.0 / beta) if sr > 0 else 0.0
        off = gen.gamma(off_shape, 1.0 / beta) if off_shape > 0 else 0.0
        out[t] = diag + 2.0 * off
    return out


@dataclass
class SimulatedNetwork:
    graph: SparseGraph
    state: HgpState
    tail_mass: float


def simulate_network(n_nodes, hyper: HgpHyper, stream, **fixed):
    """Draw a state from the prior and then a binary network from it.

    ``tail_mass`` is the share of ``sum(r)`` held by the smallest 10% of atoms;
    values above 1% suggest the truncation level is too low.
    """
    gen = as_generator(stream)
    state = init_state(n_nodes, hyper, gen, **fixed)
    edges = []
    block = max(1, 2**22 // max(n_nodes, 1))
    for s in range(0, n_nodes, block):
        rows = np.arange(s, min(s + block, n_nodes))
        rate = (state.phi[rows] @ state.lam) @ state.phi.T
        p = -np.expm1(-rate)
        draw = gen.random(p.shape) < p
        ii, jj = np.nonzero(draw)
        ii = rows[ii]
        keep = jj > ii
        edges.append(np.stack([ii[keep], jj[keep]], axis=1))
    graph = SparseGraph.from_edges(n_nodes, np.concatenate(edges) if edges else ())
    r_sorted = np.sort(state.r)
    n_tail = max(1, state.n_components // 10)
    total = r_sorted.sum()
    tail = float(r_sorted[:n_tail].sum() / total) if total > 0 else 0.0
    return SimulatedNetwork(graph, state, tail)


def hard_and_overlapping_assignments(m_node, affinity):
    """Hard community per node plus its overlapping membership set.

    Hard id is ``argmax_k m_node[i, k]``; ties (including the all-zero rows of
    isolated nodes) go to the largest ``affinity[i, k]`` and then the lowest
    index. The overlapping set is ``{k : m_node[i, k] >= 1}``. Ids are 0-based.
    """
    m = np.asarray(m_node)
    aff = np.asarray(affinity, dtype=float)
    top = m == m.max(axis=1, keepdims=True)
    masked = np.where(top, aff, -np.inf)
    hard = np.argmax(masked, axis=1)
    overlap = [np.flatnonzero(row >= 1) for row in m]
    return hard, overlap
