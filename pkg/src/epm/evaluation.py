"""Link-prediction metrics and the repeated random-holdout protocol."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .graph import make_holdout
from .models import Chain, get_kind
from .randkit import RngStream

__all__ = ["UndefinedMetricError", "auc_roc", "auc_pr", "MetricReport", "partition_seeds", "run_protocol"]


class UndefinedMetricError(ValueError):
    """The metric is undefined for the given labels."""


def _check(scores, labels):
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if np.any(np.isnan(s)):
        raise ValueError("scores contain NaN")
    return s, y.astype(bool)


def auc_roc(scores, labels):
    """P(score of a random positive > score of a random negative), ties counted 1/2."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC-ROC needs at least one positive and one negative label")
    ranks = rankdata(s)  # average ranks: a tie contributes 1/2
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_pr(scores, labels):
    """Area under the precision-recall step curve.

    Scores are swept in descending order; tied scores form one threshold.
    Each threshold contributes ``(recall gain) * precision``.
    """
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUC-PR needs at least one positive label")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    n_pred = last + 1
    precision = tp / n_pred
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(recall_gain * precision))


@dataclass
class MetricReport:
    """Per-partition AUCs plus summary statistics."""

    model: str
    auc_roc: np.ndarray
    auc_pr: np.ndarray
    seconds: np.ndarray
    n_sweeps: int
    heldout_pairs: list = field(default_factory=list, repr=False)

    @property
    def n_partitions(self):
        return len(self.auc_roc)

    @staticmethod
    def _std(x):
        return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0

    @property
    def single_partition(self):
        """True when the std is reported as 0 only because there is one partition."""
        return self.n_partitions < 2

    def summary(self):
        return {
            "auc_roc_mean": float(np.mean(self.auc_roc)),
            "auc_roc_std": self._std(self.auc_roc),
            "auc_pr_mean": float(np.mean(self.auc_pr)),
            "auc_pr_std": self._std(self.auc_pr),
            "seconds_per_1000_sweeps": float(np.mean(self.seconds) * 1000.0 / max(self.n_sweeps, 1)),
        }

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["partition", "model", "auc_roc", "auc_pr", "seconds"])
        for p in range(self.n_partitions):
            w.writerow([p, self.model, f"{self.auc_roc[p]:.6f}", f"{self.auc_pr[p]:.6f}", f"{self.seconds[p]:.3f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary_table(self):
        s = self.summary()
        lines = [
            f"model       {self.model}",
            f"partitions  {self.n_partitions}",
            f"AUC-ROC     {s['auc_roc_mean']:.4f} +/- {s['auc_roc_std']:.4f}",
            f"AUC-PR      {s['auc_pr_mean']:.4f} +/- {s['auc_pr_std']:.4f}",
            f"sec/1000    {s['seconds_per_1000_sweeps']:.2f}",
        ]
        if self.single_partition:
            lines.append("note        std is 0 because only one partition was run")
        return "\n".join(lines) + "\n"


def partition_seeds(seed, n_partitions):
    """``(holdout_seed, chain_seed)`` per partition; independent of the model kind."""
    ss = np.random.SeedSequence(int(seed))
    out = []
    for child in ss.spawn(n_partitions):
        a, b = child.generate_state(2, np.uint64)
        out.append((int(a), int(b)))
    return out


def _one_partition(graph, kind, hyper, fraction, sweeps, collect, seeds, init):
    hold_seed, chain_seed = seeds
    train, mask = make_holdout(graph, fraction, RngStream(hold_seed))
    t0 = time.perf_counter()
    chain = Chain(kind, hyper, train, mask, seed=chain_seed, n_sweeps=sweeps, n_collect=collect, init=init)
    chain.run()
    elapsed = time.perf_counter() - t0
    scores = chain.scores.scores
    return auc_roc(scores, mask.labels), auc_pr(scores, mask.labels), elapsed, mask.pairs


def run_protocol(graph, kind, hyper=None, n_partitions=5, fraction=0.2, sweeps=3000, collect=1500, seed=0,
                 init="neutral", n_jobs=1):
    """Repeated random holdout: fit on each training split, score held-out pairs.

    Partitions depend only on ``seed`` and ``graph``, so two model kinds run
    with the same seed see identical held-out pairs.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1); with no held-out pairs there is nothing to evaluate")
    if n_partitions < 1:
        raise ValueError("n_partitions must be >= 1")
    mk = get_kind(kind)
    hyper = hyper if hyper is not None else mk.make_hyper()
    seeds = partition_seeds(seed, n_partitions)
    args = [(graph, kind, hyper, fraction, sweeps, collect, s, init) for s in seeds]
    if n_jobs == 1:
        results = [_one_partition(*a) for a in args]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(_one_partition)(*a) for a in args)
    roc, pr, sec, pairs = zip(*results)
    return MetricReport(kind, np.array(roc), np.array(pr), np.array(sec), sweeps, list(pairs))
