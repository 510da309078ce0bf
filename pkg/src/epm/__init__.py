"""Edge partition models for overlapping community detection and link prediction.

Three Gibbs samplers share one representation of binary undirected networks:
the hierarchical gamma process EPM (:class:`HGPEPM`), the gamma process EPM
(:class:`GPEPM`) and a nonparametric affiliation graph model (:class:`AGMEPM`).
"""

from .common import LinkScoreSet, NonFiniteStateError, edge_rate, link_probability
from .estimators import AGMEPM, GPEPM, HGPEPM
from .evaluation import MetricReport, auc_pr, auc_roc, run_protocol
from .graph import HoldoutMask, SparseGraph, load_edge_list, make_holdout
from .randkit import RngStream

__version__ = "0.1.0"

__all__ = [
    "AGMEPM",
    "GPEPM",
    "HGPEPM",
    "HoldoutMask",
    "LinkScoreSet",
    "MetricReport",
    "NonFiniteStateError",
    "RngStream",
    "SparseGraph",
    "auc_pr",
    "auc_roc",
    "edge_rate",
    "link_probability",
    "load_edge_list",
    "make_holdout",
    "run_protocol",
]
