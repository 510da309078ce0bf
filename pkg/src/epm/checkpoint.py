"""Checkpoint container for MCMC chains.

A checkpoint is a single ``.npz`` archive. Array members hold the state and
the running link scores; the ``meta`` member is a JSON document with the
magic string, model kind, hyperparameters, sweep index and the RNG state.
No pickled objects are stored, so loading never executes code.
"""

from __future__ import annotations

import dataclasses
import io
import json
import os
import types

import numpy as np

from .common import FitContext, LinkScoreSet
from .graph import HoldoutMask, SparseGraph
from .models import Chain, get_kind
from .randkit import RngStream

__all__ = ["MAGIC", "CheckpointError", "save_checkpoint", "load_checkpoint", "state_to_arrays"]

MAGIC = "EPM-CKPT-1"


class CheckpointError(ValueError):
    """The file is not a readable checkpoint of this version."""


def state_to_arrays(state):
    return {f.name: np.asarray(getattr(state, f.name)) for f in dataclasses.fields(state)}


def _state_from_arrays(kind, arrays):
    kw = {}
    for f in dataclasses.fields(kind.state_cls):
        v = arrays[f"state.{f.name}"]
        kw[f.name] = float(v) if v.ndim == 0 else v.copy()
    return kind.state_cls(**kw)


def _hyper_to_json(hyper):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(hyper).items()}


def _hyper_from_json(kind, d):
    return kind.hyper_cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def save_checkpoint(chain: Chain, path, extra=None):
    """Write ``chain`` atomically to ``path``."""
    meta = {
        "magic": MAGIC,
        "kind": chain.kind.name,
        "hyper": _hyper_to_json(chain.hyper),
        "sweep_index": chain.sweep_index,
        "n_sweeps": chain.n_sweeps,
        "n_collect": chain.n_collect,
        "seed": chain.seed,
        "check": bool(chain.check),
        "gamma0_accepts": chain.gamma0_accepts,
        "score_samples": chain.scores.n_samples,
        "rng": chain.stream.get_state(),
        "extra": extra or {},
    }
    arrays = {f"state.{k}": v for k, v in state_to_arrays(chain.state).items()}
    arrays.update(
        {
            "graph.edges": chain.graph.edges,
            "graph.n_nodes": np.asarray(chain.graph.n_nodes),
            "mask.pairs": chain.mask.pairs,
            "mask.labels": chain.mask.labels,
            "scores.values": chain.scores.scores,
            "trace": chain.trace_array(),
        }
    )
    if chain.last_stats is not None:
        arrays["stats.m_node"] = chain.last_stats.m_node
        arrays["stats.m_comm"] = chain.last_stats.m_comm
    buf = io.BytesIO()
    np.savez_compressed(buf, meta=np.asarray(json.dumps(meta)), **arrays)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> Chain:
    """Rebuild the chain stored at ``path``; it continues exactly where it stopped."""
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta" not in arrays:
        raise CheckpointError(f"{path} has no metadata block")
    meta = json.loads(str(arrays["meta"]))
    if meta.get("magic") != MAGIC:
        raise CheckpointError(f"{path}: expected magic {MAGIC!r}, found {meta.get('magic')!r}")
    kind = get_kind(meta["kind"])
    graph = SparseGraph.from_edges(int(arrays["graph.n_nodes"]), arrays["graph.edges"])
    mask = HoldoutMask(graph.n_nodes, arrays["mask.pairs"].astype(np.int64), arrays["mask.labels"])
    hyper = _hyper_from_json(kind, meta["hyper"])

    chain = Chain.__new__(Chain)
    chain.kind = kind
    chain.hyper = hyper
    chain.graph = graph
    chain.mask = mask
    chain.ctx = FitContext(graph, mask)
    chain.n_sweeps = int(meta["n_sweeps"])
    chain.n_collect = int(meta["n_collect"])
    chain.check = bool(meta.get("check", False))
    chain.seed = int(meta["seed"])
    chain.stream = RngStream.from_state(meta["rng"])
    chain.state = _state_from_arrays(kind, arrays)
    chain.sweep_index = int(meta["sweep_index"])
    chain.scores = LinkScoreSet(mask.pairs, arrays["scores.values"].astype(float), int(meta["score_samples"]))
    chain.trace = [tuple(row) for row in arrays["trace"].tolist()]
    chain.gamma0_accepts = int(meta.get("gamma0_accepts", 0))
    chain.last_stats = None
    chain.dump_dir = None
    if "stats.m_node" in arrays:
        chain.last_stats = types.SimpleNamespace(m_node=arrays["stats.m_node"], m_comm=arrays["stats.m_comm"])
    chain.extra = meta.get("extra", {})
    return chain
