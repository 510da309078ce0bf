"""scikit-learn style estimators wrapping the three samplers.

    >>> model = HGPEPM(n_components=50, n_sweeps=500, n_collect=250, random_state=0)
    >>> model.fit(graph, mask=mask)                   # doctest: +SKIP
    >>> model.heldout_scores_                         # doctest: +SKIP

``X`` may be a :class:`~epm.graph.SparseGraph`, a square 0/1 array or a
scipy sparse adjacency matrix.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .common import link_probability
from .graph import HoldoutMask, SparseGraph
from .models import Chain, get_kind

__all__ = ["HGPEPM", "GPEPM", "AGMEPM", "as_graph"]


def as_graph(X) -> SparseGraph:
    if isinstance(X, SparseGraph):
        return X
    if sp.issparse(X):
        return SparseGraph.from_adjacency(X)
    arr = np.asarray(X)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square adjacency matrix, got shape {arr.shape}")
    return SparseGraph.from_adjacency(arr)


class _EPMBase(BaseEstimator, ClusterMixin, TransformerMixin):
    _kind = None
    _hyper_params = ()

    def _hyper(self):
        kw = {"n_components": self.n_components}
        for name in self._hyper_params:
            kw[name] = getattr(self, name)
        return get_kind(self._kind).make_hyper(**kw)

    def _validate(self):
        if int(self.n_components) < 1:
            raise ValueError("n_components must be >= 1")
        if int(self.n_sweeps) < 1:
            raise ValueError("n_sweeps must be >= 1")
        if not 0 <= int(self.n_collect) <= int(self.n_sweeps):
            raise ValueError("n_collect must lie in [0, n_sweeps]")
        if self.init not in ("prior", "neutral"):
            raise ValueError("init must be 'prior' or 'neutral'")

    def _make_chain(self, graph, mask):
        seed = 0 if self.random_state is None else int(self.random_state)
        return Chain(self._kind, self._hyper(), graph, mask, seed=seed, n_sweeps=self.n_sweeps,
                     n_collect=self.n_collect, init=self.init)

    def fit(self, X, y=None, mask=None, callback=None):
        """Run the sampler on the training graph ``X``.

        ``mask`` (a :class:`~epm.graph.HoldoutMask`) lists pairs treated as
        unobserved; their posterior-mean link probabilities end up in
        ``heldout_scores_``.
        """
        self._validate()
        graph = as_graph(X)
        if mask is None:
            mask = HoldoutMask.empty(graph.n_nodes)
        chain = self._make_chain(graph, mask)
        chain.run(callback=callback)
        return self._absorb(chain)

    @classmethod
    def from_chain(cls, chain):
        """Wrap a (possibly resumed) :class:`~epm.models.Chain` as a fitted estimator."""
        est = cls(n_components=chain.state.n_components, n_sweeps=chain.n_sweeps, n_collect=chain.n_collect,
                  random_state=chain.seed)
        for name in est._hyper_params:
            setattr(est, name, getattr(chain.hyper, name))
        return est._absorb(chain)

    def _absorb(self, chain):
        self.chain_ = chain
        self.state_ = chain.state
        self.n_nodes_ = chain.graph.n_nodes
        self.mask_ = chain.mask
        self.heldout_scores_ = chain.scores.scores.copy()
        self.n_samples_collected_ = chain.scores.n_samples
        self.trace_ = chain.trace_array()
        hard, overlap = chain.assignments()
        self.labels_ = hard
        self.memberships_ = overlap
        return self

    def transform(self, X=None):
        """Node features ``phi`` (N x K) of the final state."""
        check_is_fitted(self, "state_")
        return self.state_.phi.copy()

    def fit_predict(self, X, y=None, mask=None):
        return self.fit(X, mask=mask).labels_

    def _check_pairs(self, pairs):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= self.n_nodes_):
            raise IndexError(f"pair index out of range for {self.n_nodes_} nodes")
        if np.any(pairs[:, 0] == pairs[:, 1]):
            raise ValueError("self-pairs have no link probability")
        return pairs

    def predict_proba(self, pairs):
        """``P(b_ij = 1)`` for each row ``(i, j)`` of ``pairs``.

        Pairs covered by the held-out mask return the posterior mean collected
        during fitting; all others are scored from the final state.
        """
        check_is_fitted(self, "state_")
        pairs = self._check_pairs(pairs)
        out = link_probability(self.state_.pair_rates(pairs[:, 0], pairs[:, 1]))
        if self.n_samples_collected_ and len(self.mask_):
            lo, hi = pairs.min(axis=1), pairs.max(axis=1)
            keys = lo * self.n_nodes_ + hi
            ref = self.mask_.keys
            pos = np.clip(np.searchsorted(ref, keys), 0, max(ref.size - 1, 0))
            hit = ref[pos] == keys
            out[hit] = self.heldout_scores_[pos[hit]]
            if not hit.all():
                warnings.warn("some pairs were not collected during fitting; scored from the final state",
                              stacklevel=2)
        elif len(pairs):
            warnings.warn("no posterior scores were collected; scoring from the final state", stacklevel=2)
        return out

    def predict(self, pairs, threshold=0.5):
        return (self.predict_proba(pairs) >= threshold).astype(np.int8)

    def log_likelihood(self):
        check_is_fitted(self, "state_")
        return self.chain_.kind.loglik(self.state_, self.chain_.ctx)


class HGPEPM(_EPMBase):
    """Hierarchical gamma process edge partition model."""

    _kind = "hgp"
    _hyper_params = ("e0", "f0", "gamma0_prior", "c_prior", "c0_prior", "beta_prior")

    def __init__(self, n_components=100, n_sweeps=3000, n_collect=1500, e0=0.01, f0=0.01,
                 gamma0_prior=(1.0, 1.0), c_prior=(1.0, 1.0), c0_prior=(1.0, 1.0), beta_prior=(1.0, 1.0),
                 init="neutral", random_state=None):
        self.n_components = n_components
        self.n_sweeps = n_sweeps
        self.n_collect = n_collect
        self.e0 = e0
        self.f0 = f0
        self.gamma0_prior = gamma0_prior
        self.c_prior = c_prior
        self.c0_prior = c0_prior
        self.beta_prior = beta_prior
        self.init = init
        self.random_state = random_state

    @property
    def interaction_(self):
        check_is_fitted(self, "state_")
        return self.state_.lam.copy()


class GPEPM(_EPMBase):
    """Gamma process edge partition model (no inter-community rates)."""

    _kind = "gp"
    _hyper_params = ("e0", "f0", "gamma0_prior", "c_prior", "c0_prior")

    def __init__(self, n_components=100, n_sweeps=3000, n_collect=1500, e0=0.01, f0=0.01,
                 gamma0_prior=(1.0, 1.0), c_prior=(1.0, 1.0), c0_prior=(1.0, 1.0), init="neutral",
                 random_state=None):
        self.n_components = n_components
        self.n_sweeps = n_sweeps
        self.n_collect = n_collect
        self.e0 = e0
        self.f0 = f0
        self.gamma0_prior = gamma0_prior
        self.c_prior = c_prior
        self.c0_prior = c0_prior
        self.init = init
        self.random_state = random_state

    @property
    def interaction_(self):
        check_is_fitted(self, "state_")
        return np.diag(self.state_.r)


class AGMEPM(_EPMBase):
    """Nonparametric affiliation graph model with binary memberships."""

    _kind = "agm"
    _hyper_params = ("gamma0_prior", "c0_prior", "pi_prior", "eps_prior")

    def __init__(self, n_components=100, n_sweeps=3000, n_collect=1500, gamma0_prior=(1.0, 1.0),
                 c0_prior=(1.0, 1.0), pi_prior=(0.01, 0.01), eps_prior=(0.01, 0.01), init="neutral",
                 random_state=None):
        self.n_components = n_components
        self.n_sweeps = n_sweeps
        self.n_collect = n_collect
        self.gamma0_prior = gamma0_prior
        self.c0_prior = c0_prior
        self.pi_prior = pi_prior
        self.eps_prior = eps_prior
        self.init = init
        self.random_state = random_state

    @property
    def interaction_(self):
        check_is_fitted(self, "state_")
        return np.diag(self.state_.r)


ESTIMATORS = {"hgp": HGPEPM, "gp": GPEPM, "agm": AGMEPM}
