"""Uniform access to the three samplers plus the chain driver used by fitting.

Each model kind bundles its hyperparameter class, state class, initializer,
sweep, log-likelihood and assignment rule. :class:`Chain` runs sweeps,
collects posterior-mean link scores and records a trace; everything it holds
can be written to and restored from a checkpoint, so a resumed chain is
bit-identical to an uninterrupted one.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np

from . import gp, hgp
from .common import FitContext, LinkScoreSet, NonFiniteStateError, update_scores
from .graph import HoldoutMask
from .randkit import RngStream

__all__ = ["ModelKind", "MODEL_KINDS", "get_kind", "Chain", "TRACE_COLUMNS"]

TRACE_COLUMNS = ("sweep", "active", "lambda_sum", "loglik")


@dataclass(frozen=True)
class ModelKind:
    name: str
    hyper_cls: type
    state_cls: type
    init: object
    sweep: object
    loglik: object
    assign: object

    def make_hyper(self, **overrides):
        fields = {f.name for f in dataclasses.fields(self.hyper_cls)}
        unknown = set(overrides) - fields
        if unknown:
            raise ValueError(f"unknown {self.name} hyperparameter(s): {', '.join(sorted(unknown))}")
        return self.hyper_cls(**overrides)


def _hgp_assign(state, stats, ctx):
    return hgp.hard_and_overlapping_assignments(stats.m_node, state.phi * hgp.compute_omega(state, ctx))


MODEL_KINDS = {
    "hgp": ModelKind("hgp", hgp.HgpHyper, hgp.HgpState, hgp.init_state, hgp.gibbs_sweep,
                     hgp.log_likelihood, _hgp_assign),
    "gp": ModelKind("gp", gp.GpHyper, gp.GpState, gp.gp_init_state, gp.gp_gibbs_sweep,
                    gp.gp_log_likelihood, gp.gp_assignments),
    "agm": ModelKind("agm", gp.AgmHyper, gp.AgmState, gp.agm_init_state, gp.agm_gibbs_sweep,
                     gp.gp_log_likelihood, gp.gp_assignments),
}


def get_kind(name) -> ModelKind:
    try:
        return MODEL_KINDS[name]
    except KeyError:
        raise ValueError(f"model kind must be one of {sorted(MODEL_KINDS)}, got {name!r}") from None


class Chain:
    """A single MCMC chain over a training graph.

    Scores for the mask's held-out pairs are averaged over the last
    ``n_collect`` of ``n_sweeps`` sweeps.
    """

    def __init__(self, kind, hyper, graph, mask=None, seed=0, n_sweeps=3000, n_collect=1500,
                 init="neutral", check=False):
        self.kind = get_kind(kind) if isinstance(kind, str) else kind
        self.hyper = hyper
        self.graph = graph
        self.mask = mask if mask is not None else HoldoutMask.empty(graph.n_nodes)
        self.ctx = FitContext(graph, self.mask)
        if n_collect > n_sweeps:
            raise ValueError("n_collect must not exceed n_sweeps")
        self.n_sweeps = int(n_sweeps)
        self.n_collect = int(n_collect)
        self.check = check
        self.seed = int(seed)
        self.stream = RngStream(self.seed)
        self.state = self.kind.init(graph.n_nodes, hyper, self.stream, init=init)
        self.sweep_index = 0
        self.scores = LinkScoreSet.for_pairs(self.mask.pairs)
        self.trace = []
        self.last_stats = None
        self.gamma0_accepts = 0
        self.dump_dir = None

    @property
    def done(self):
        return self.sweep_index >= self.n_sweeps

    @property
    def collecting(self):
        return self.sweep_index >= self.n_sweeps - self.n_collect

    def step(self):
        """Run one sweep and fold it into scores and trace.

        If the sweep produces a non-finite state and ``dump_dir`` is set, the
        offending state is written there and the error carries its path.
        """
        try:
            self.state, stats, info = self.kind.sweep(self.state, self.ctx, self.stream, self.hyper,
                                                      check=self.check)
        except NonFiniteStateError as exc:
            if getattr(self, "dump_dir", None):
                exc.dump_path = self._dump(exc)
            raise
        self.last_stats = stats
        self.gamma0_accepts += int(info.get("gamma0_accepted", 0))
        if self.collecting:
            update_scores(self.scores, self.state)
        self.sweep_index += 1
        ll = self.kind.loglik(self.state, self.ctx)
        self.trace.append((self.sweep_index, info["active"], info["lambda_sum"], ll))
        return info

    def _dump(self, exc):
        os.makedirs(self.dump_dir, exist_ok=True)
        path = os.path.join(self.dump_dir, f"nonfinite_sweep{self.sweep_index + 1}.npz")
        arrays = {f.name: np.asarray(getattr(self.state, f.name)) for f in dataclasses.fields(self.state)}
        np.savez(path, message=np.asarray(str(exc)), **arrays)
        return path

    def run(self, stop_at=None, callback=None):
        """Sweep until ``n_sweeps`` (or ``stop_at``) is reached.

        ``callback(chain)`` runs after every sweep.
        """
        end = self.n_sweeps if stop_at is None else min(int(stop_at), self.n_sweeps)
        while self.sweep_index < end:
            self.step()
            if callback is not None:
                callback(self)
        return self

    def ensure_stats(self):
        """Sufficient statistics for the current state, drawing a sweep-free partition if needed."""
        if self.last_stats is None:
            probe = RngStream(self.seed).child(1, self.sweep_index)
            if self.kind.name == "hgp":
                self.last_stats = hgp.sample_edge_partition(self.state, self.ctx, probe)
            else:
                bg = getattr(self.state, "eps", None)
                self.last_stats = gp._partition(self.state, self.ctx, probe, background=bg)
        return self.last_stats

    def assignments(self):
        return self.kind.assign(self.state, self.ensure_stats(), self.ctx)

    def trace_array(self):
        if not self.trace:
            return np.zeros((0, len(TRACE_COLUMNS)))
        return np.asarray(self.trace, dtype=float)
