"""Gamma process EPM and the nonparametric AGM.

GP-EPM drops the inter-community rates of the HGP-EPM:

    m_ijk ~ Po(r_k phi_ik phi_jk),  phi_ik ~ Gam(a_i, 1/c_i),  r_k ~ Gam(gamma0/K, 1/c0)

The AGM variant restricts ``phi_ik`` to {0, 1} with ``phi_ik ~ Ber(pi_i)``,
``pi_i ~ Beta(a1, b1)``, and adds a background count ``u_ij ~ Po(eps)``.

AGM membership update when ``m_{i.k} = 0``: conditioning on all latent counts,
the only terms that involve ``phi_ik`` are the zero counts ``m_ijk = 0`` for
observed pairs (i, j), each with probability ``exp(-r_k phi_ik phi_jk)``, and
the prior. Hence

    P(phi_ik = 1 | -) / P(phi_ik = 0 | -) = pi_i / (1 - pi_i) * exp(-r_k sum_{j: o_ij = 1} phi_jk).

When ``m_{i.k} > 0`` the likelihood vanishes at ``phi_ik = 0`` so ``phi_ik = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .common import TINY, FitContext, NonFiniteStateError, partition_edges
from .hgp import hard_and_overlapping_assignments
from .randkit import as_generator, crt_array

__all__ = [
    "GpHyper",
    "GpState",
    "AgmHyper",
    "AgmState",
    "GpSuffStats",
    "gp_init_state",
    "agm_init_state",
    "gp_gibbs_sweep",
    "agm_gibbs_sweep",
    "gp_omega",
    "gp_theta",
    "gp_assignments",
    "gp_log_likelihood",
    "agm_membership_probability",
    "pi_posterior_params",
]

PI_BOUNDS = (1e-300, 1.0 - 1e-16)


def _validate_hyper(hyper, values):
    if int(hyper.n_components) < 1:
        raise ValueError("n_components must be >= 1")
    if any(not (v > 0 and np.isfinite(v)) for v in values):
        raise ValueError("all hyperparameters must be positive and finite")


@dataclass
class GpHyper:
    n_components: int = 100
    e0: float = 0.01
    f0: float = 0.01
    gamma0_prior: tuple = (1.0, 1.0)
    c_prior: tuple = (1.0, 1.0)
    c0_prior: tuple = (1.0, 1.0)

    def __post_init__(self):
        _validate_hyper(self, [self.e0, self.f0, *self.gamma0_prior, *self.c_prior, *self.c0_prior])


@dataclass
class AgmHyper:
    n_components: int = 100
    gamma0_prior: tuple = (1.0, 1.0)
    c0_prior: tuple = (1.0, 1.0)
    pi_prior: tuple = (0.01, 0.01)
    eps_prior: tuple = (0.01, 0.01)  # shape, rate

    def __post_init__(self):
        _validate_hyper(self, [*self.gamma0_prior, *self.c0_prior, *self.pi_prior, *self.eps_prior])


@dataclass
class GpState:
    phi: np.ndarray
    r: np.ndarray
    a: np.ndarray
    c: np.ndarray
    c0: float
    gamma0: float

    @property
    def n_components(self):
        return self.r.size

    def pair_rates(self, i, j):
        return np.einsum("nk,nk->n", self.phi[np.asarray(i)] * self.r, self.phi[np.asarray(j)])

    def rate_matrix(self):
        return (self.phi * self.r) @ self.phi.T

    def check_finite(self):
        bad = [n for n in ("phi", "r", "a", "c") if not np.all(np.isfinite(getattr(self, n)) & (getattr(self, n) > 0))]
        bad += [n for n in ("c0", "gamma0") if not (np.isfinite(getattr(self, n)) and getattr(self, n) > 0)]
        return bad

    def copy(self):
        return GpState(self.phi.copy(), self.r.copy(), self.a.copy(), self.c.copy(), self.c0, self.gamma0)


@dataclass
class AgmState:
    phi: np.ndarray  # binary, stored as float
    pi: np.ndarray
    eps: float
    r: np.ndarray
    c0: float
    gamma0: float

    @property
    def n_components(self):
        return self.r.size

    def pair_rates(self, i, j):
        return self.eps + np.einsum("nk,nk->n", self.phi[np.asarray(i)] * self.r, self.phi[np.asarray(j)])

    def rate_matrix(self):
        out = (self.phi * self.r) @ self.phi.T + self.eps
        np.fill_diagonal(out, 0.0)
        return out

    def check_finite(self):
        bad = []
        if not np.all((self.phi == 0) | (self.phi == 1)):
            bad.append("phi (non-binary)")
        if not np.all((self.pi > 0) & (self.pi < 1)):
            bad.append("pi")
        if not np.all(np.isfinite(self.r) & (self.r > 0)):
            bad.append("r")
        bad += [n for n in ("eps", "c0", "gamma0") if not (np.isfinite(getattr(self, n)) and getattr(self, n) > 0)]
        return bad

    def copy(self):
        return AgmState(self.phi.copy(), self.pi.copy(), self.eps, self.r.copy(), self.c0, self.gamma0)


@dataclass
class GpSuffStats:
    """``m_node[i, k]`` is m_{i.k}; ``m_comm[k]`` is m_{..k}; ``background`` counts u_ij units."""

    m_node: np.ndarray
    m_comm: np.ndarray
    background: int = 0
    omega: np.ndarray = field(default=None, repr=False)
    theta: np.ndarray = field(default=None, repr=False)
    m_edge: np.ndarray = field(default=None, repr=False)
    units_per_edge: np.ndarray = field(default=None, repr=False)

    def consistency_errors(self):
        errs = []
        if not np.array_equal(2 * self.m_comm, self.m_node.sum(axis=0)):
            errs.append("m_..k != 1/2 sum_i m_i.k")
        if self.m_edge is not None and int(self.m_edge.sum()) != int(self.m_comm.sum()) + int(self.background):
            errs.append("sum_ij m_ij != partitioned units")
        return errs


def _gamma(gen, shape, rate):
    return np.maximum(gen.gamma(shape, 1.0 / rate), TINY)


def _check_init(init):
    if init not in ("prior", "neutral"):
        raise ValueError(f"init must be 'prior' or 'neutral', got {init!r}")


def gp_init_state(n_nodes, hyper: GpHyper, stream, gamma0=None, init="prior"):
    """Prior draws; ``init="neutral"`` sets ``a_i = 1`` before drawing ``phi``."""
    _check_init(init)
    gen = as_generator(stream)
    K = int(hyper.n_components)
    g0 = gamma0 or float(_gamma(gen, *hyper.gamma0_prior))
    c0 = float(_gamma(gen, *hyper.c0_prior))
    r = _gamma(gen, np.full(K, g0 / K), c0)
    a = _gamma(gen, np.full(n_nodes, hyper.e0), hyper.f0)
    c = _gamma(gen, np.full(n_nodes, hyper.c_prior[0]), hyper.c_prior[1])
    if init == "neutral":
        a[:] = 1.0
    phi = _gamma(gen, np.repeat(a[:, None], K, axis=1), c[:, None])
    return GpState(phi, r, a, c, c0, g0)


def agm_init_state(n_nodes, hyper: AgmHyper, stream, gamma0=None, init="prior"):
    """Prior draws.

    ``init="neutral"`` replaces the near-0/1 Beta(0.01, 0.01) draws of
    ``pi_i`` with ``1/2``, gives every community the weight ``r_k = 1/K``
    and starts ``eps`` at ``1e-3``.
    """
    _check_init(init)
    gen = as_generator(stream)
    K = int(hyper.n_components)
    g0 = gamma0 or float(_gamma(gen, *hyper.gamma0_prior))
    c0 = float(_gamma(gen, *hyper.c0_prior))
    r = _gamma(gen, np.full(K, g0 / K), c0)
    pi = np.clip(gen.beta(hyper.pi_prior[0], hyper.pi_prior[1], size=n_nodes), *PI_BOUNDS)
    eps = float(_gamma(gen, *hyper.eps_prior))
    if init == "neutral":
        pi[:] = 0.5
        r[:] = 1.0 / K
        eps = 1e-3
    phi = (gen.random((n_nodes, K)) < pi[:, None]).astype(float)
    return AgmState(phi, pi, eps, r, c0, g0)


def _rest_sum(phi, ctx, i, s):
    """``sum_{j != i, o_ij = 1} phi_j``."""
    rest = s - phi[i]
    if ctx is not None and ctx.has_heldout:
        nb = ctx.heldout_neighbors(i)
        if nb.size:
            rest = rest - phi[nb].sum(axis=0)
    return rest


def gp_omega(state, ctx=None):
    """``omega[i, k] = r_k sum_{j != i, o_ij = 1} phi_jk``."""
    phi = state.phi
    total = phi.sum(axis=0)[None, :] - phi
    if ctx is not None and ctx.has_heldout:
        total = total - ctx.heldout_sum(phi)
    return np.maximum(total, 0.0) * state.r


def gp_theta(phi, ctx=None):
    """``theta[k] = 1/2 sum_i sum_{j != i, o_ij = 1} phi_ik phi_jk``."""
    s = phi.sum(axis=0)
    t = s * s - np.einsum("nk,nk->k", phi, phi)
    if ctx is not None and ctx.has_heldout:
        t = t - np.einsum("nk,nk->k", phi, ctx.heldout_sum(phi))
    return np.maximum(0.5 * t, 0.0)


def _partition(state, ctx, stream, background=None):
    N, K = state.phi.shape
    ei, ej = ctx.ei, ctx.ej
    if ei.size == 0:
        return GpSuffStats(np.zeros((N, K), np.int64), np.zeros(K, np.int64), 0, m_edge=np.zeros(0, np.int64),
                           units_per_edge=np.zeros(0, np.int64))
    w = state.phi[ei] * state.r * state.phi[ej]
    if background is not None:
        w = np.concatenate([w, np.full((len(ei), 1), background)], axis=1)
    totals = w.sum(axis=1)
    m, unit_edge, k, _, cnt = partition_edges(stream, totals, w)
    comm = k < K
    ui, uj, kc, cc = ei[unit_edge[comm]], ej[unit_edge[comm]], k[comm], cnt[comm]
    m_node = (
        np.bincount(ui * K + kc, weights=cc, minlength=N * K) + np.bincount(uj * K + kc, weights=cc, minlength=N * K)
    ).astype(np.int64).reshape(N, K)
    return GpSuffStats(
        m_node,
        np.bincount(kc, weights=cc, minlength=K).astype(np.int64),
        int(cnt[~comm].sum()),
        m_edge=m,
        units_per_edge=np.bincount(unit_edge, weights=cnt, minlength=len(m)).astype(np.int64),
    )


def _check(stats):
    if not np.array_equal(stats.units_per_edge, stats.m_edge):
        raise AssertionError("edge partition does not sum to m_ij")
    errs = stats.consistency_errors()
    if errs:
        raise AssertionError("; ".join(errs))


def _gamma0_and_r(state, stats, theta, gen, gamma0_prior):
    """gamma0 with r marginalised (NB likelihood of m_..k), then r | gamma0."""
    K = state.n_components
    log_q = np.log1p(theta / state.c0)  # -ln(1 - p~_k)
    ell = crt_array(gen, stats.m_comm, np.full(K, max(state.gamma0 / K, TINY)))
    e1, f1 = gamma0_prior
    state.gamma0 = float(_gamma(gen, e1 + ell.sum(), f1 + log_q.sum() / K))
    state.r = _gamma(gen, state.gamma0 / K + stats.m_comm, state.c0 + theta)


def gp_gibbs_sweep(state: GpState, ctx: FitContext, stream, hyper: GpHyper, check=False):
    """One Gibbs sweep of the GP-EPM, in place. Returns ``(state, stats, info)``."""
    gen = as_generator(stream)
    K = state.n_components
    stats = _partition(state, ctx, stream)
    if check:
        _check(stats)

    phi = state.phi
    ell = crt_array(gen, stats.m_node, np.repeat(state.a[:, None], K, axis=1)).sum(axis=1)
    s = phi.sum(axis=0)
    omega = np.empty_like(phi)
    for i in range(phi.shape[0]):
        om = state.r * np.maximum(_rest_sum(phi, ctx, i, s), 0.0)
        omega[i] = om
        ci = state.c[i]
        ai = max(gen.gamma(hyper.e0 + ell[i], 1.0 / (hyper.f0 + np.log1p(om / ci).sum())), TINY)
        state.a[i] = ai
        new = np.maximum(gen.gamma(ai + stats.m_node[i], 1.0 / (ci + om)), TINY)
        s += new - phi[i]
        phi[i] = new
    stats.omega = omega

    theta = gp_theta(phi, ctx)
    stats.theta = theta
    _gamma0_and_r(state, stats, theta, gen, hyper.gamma0_prior)
    c0_shape, c0_rate = hyper.c0_prior
    state.c0 = float(_gamma(gen, c0_shape + state.gamma0, c0_rate + state.r.sum()))
    c_shape, c_rate = hyper.c_prior
    state.c = _gamma(gen, c_shape + K * state.a, c_rate + phi.sum(axis=1))

    bad = state.check_finite()
    if bad:
        raise NonFiniteStateError(f"non-finite or non-positive values in: {', '.join(bad)}")
    return state, stats, {"active": int(np.count_nonzero(stats.m_comm)), "lambda_sum": float(state.r.sum())}


def agm_membership_probability(pi_i, omega_i):
    """``P(phi_ik = 1 | m_{i.k} = 0, -)`` for each k; ``omega_i[k] = r_k sum_{j: o_ij = 1} phi_jk``."""
    return expit(np.log(pi_i) - np.log1p(-pi_i) - np.asarray(omega_i))


def pi_posterior_params(phi, pi_prior):
    """Beta parameters of ``pi_i | phi_i``: ``(a1 + sum_k phi_ik, b1 + K - sum_k phi_ik)``."""
    phi = np.atleast_2d(phi)
    n_on = phi.sum(axis=1)
    return pi_prior[0] + n_on, pi_prior[1] + phi.shape[1] - n_on


def agm_gibbs_sweep(state: AgmState, ctx: FitContext, stream, hyper: AgmHyper, check=False):
    """One Gibbs sweep of the nonparametric AGM, in place."""
    gen = as_generator(stream)
    K = state.n_components
    stats = _partition(state, ctx, stream, background=state.eps)
    if check:
        _check(stats)

    phi = state.phi
    s = phi.sum(axis=0)
    omega = np.empty_like(phi)
    for i in range(phi.shape[0]):
        om = state.r * np.maximum(_rest_sum(phi, ctx, i, s), 0.0)
        omega[i] = om
        p_on = agm_membership_probability(state.pi[i], om)
        new = np.where(stats.m_node[i] > 0, 1.0, (gen.random(K) < p_on).astype(float))
        s += new - phi[i]
        phi[i] = new
    stats.omega = omega

    state.pi = np.clip(gen.beta(*pi_posterior_params(phi, hyper.pi_prior)), *PI_BOUNDS)
    a0, b0 = hyper.eps_prior
    state.eps = float(_gamma(gen, a0 + stats.background, b0 + ctx.n_observed_pairs))

    theta = gp_theta(phi, ctx)
    stats.theta = theta
    _gamma0_and_r(state, stats, theta, gen, hyper.gamma0_prior)
    c0_shape, c0_rate = hyper.c0_prior
    state.c0 = float(_gamma(gen, c0_shape + state.gamma0, c0_rate + state.r.sum()))

    bad = state.check_finite()
    if bad:
        raise NonFiniteStateError(f"non-finite or invalid values in: {', '.join(bad)}")
    return state, stats, {"active": int(np.count_nonzero(stats.m_comm)), "lambda_sum": float(state.r.sum())}


def gp_log_likelihood(state, ctx: FitContext):
    """Bernoulli log-likelihood over observed pairs for GP or AGM states."""
    all_pairs = float(np.dot(state.r, gp_theta(state.phi, ctx)))
    if isinstance(state, AgmState):
        all_pairs += state.eps * ctx.n_observed_pairs
    if ctx.ei.size == 0:
        return -all_pairs
    rate = state.pair_rates(ctx.ei, ctx.ej)
    return float(np.sum(np.log(-np.expm1(-np.maximum(rate, 1e-300))) + rate)) - all_pairs


def gp_assignments(state, stats, ctx=None):
    """Hard and overlapping communities from m_{i.k}; fallback ``r_k phi_ik sum_{j!=i} phi_jk``."""
    affinity = state.phi * gp_omega(state, ctx)
    return hard_and_overlapping_assignments(stats.m_node, affinity)
