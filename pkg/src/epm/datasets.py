"""Benchmark network download and conversion.

Sources are fetched over HTTP (or read from a local mirror directory),
converted to the tsv-pairs format with dense integer ids, and checked
against the expected node and edge counts. A sidecar ``<name>.names.tsv``
maps ids back to the original labels; ``<name>.sha256`` records the
checksum of the converted file.

The original URLs date from 2015 and may no longer resolve; ``mirror``
replaces the base location. Checksums of converted files are recorded but
not enforced, since mirrors may repackage the raw data; node and edge counts
are always enforced.
"""

from __future__ import annotations

import hashlib
import io
import logging
import os
import re
import tarfile
import urllib.error
import urllib.request
import zipfile
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import SparseGraph, write_edge_list

logger = logging.getLogger(__name__)

__all__ = ["DatasetInfo", "REGISTRY", "FetchError", "fetch", "data_dir", "parse_pajek", "graph_from_mat",
           "convert_raw", "dataset_path"]


class FetchError(RuntimeError):
    """Download failed or the converted data does not match the registry."""


@dataclass(frozen=True)
class DatasetInfo:
    name: str
    url: str
    member: str | None  # file inside an archive, or None for a plain file
    kind: str  # 'pajek', 'mat' (square adjacency) or 'mat-bipartite' (author x paper)
    n_nodes: int
    n_edges: int
    variable: str | None = None


_ILA = "http://mlg.eng.cam.ac.uk/konstantina/ILA/ILA_code(v1).tar.gz"

REGISTRY = {
    "protein230": DatasetInfo("protein230", _ILA, "protein230.mat", "mat", 230, 595),
    "nips234": DatasetInfo("nips234", _ILA, "nips234.mat", "mat", 234, 598),
    "yeast": DatasetInfo("yeast", "http://vlado.fmf.uni-lj.si/pub/networks/data/bio/Yeast/yeast.zip",
                         "YeastS.net", "pajek", 2361, 6646),
    "nips12": DatasetInfo("nips12", "http://www.cs.nyu.edu/~roweis/data/nips12raw_str602.mat", None,
                          "mat-bipartite", 2037, 3134, variable="apapers"),
}


def data_dir(path=None):
    return path or os.environ.get("EPM_DATA_DIR") or os.path.join(os.path.expanduser("~"), ".epm_data")


def dataset_path(name, path=None):
    return os.path.join(data_dir(path), f"{name}.tsv")


def _download(url, timeout):
    if os.path.exists(url):
        with open(url, "rb") as fh:
            return fh.read()
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise FetchError(f"cannot download {url}: {exc}") from exc


def _extract(blob, member, url):
    if member is None:
        return blob
    base = os.path.basename(member)
    if url.endswith(".zip") or blob[:2] == b"PK":
        try:
            with zipfile.ZipFile(io.BytesIO(blob)) as zf:
                for n in zf.namelist():
                    if os.path.basename(n).lower() == base.lower():
                        return zf.read(n)
        except zipfile.BadZipFile as exc:
            raise FetchError(f"{url} is not a readable archive: {exc}") from exc
    else:
        try:
            with tarfile.open(fileobj=io.BytesIO(blob)) as tf:
                for m in tf.getmembers():
                    if m.isfile() and os.path.basename(m.name).lower() == base.lower():
                        return tf.extractfile(m).read()
        except tarfile.TarError as exc:
            raise FetchError(f"{url} is not a readable archive: {exc}") from exc
    raise FetchError(f"{member} not found inside {url}")


def parse_pajek(text):
    """Parse a Pajek ``.net`` file into ``(graph, names)``; self-loops are dropped."""
    names = []
    edges = []
    section = None
    n = None
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("*"):
            head = line.split()[0].lower()
            if head == "*vertices":
                n = int(line.split()[1])
                names = [str(i + 1) for i in range(n)]
                section = "v"
            elif head in ("*edges", "*arcs"):
                section = "e"
            elif head in ("*edgeslist", "*arcslist"):
                section = "l"
            else:
                section = None
            continue
        if section == "v":
            m = re.match(r'(\d+)\s+"([^"]*)"', line) or re.match(r"(\d+)\s+(\S+)", line)
            if m:
                names[int(m.group(1)) - 1] = m.group(2)
        elif section == "e":
            parts = line.split()
            edges.append((int(parts[0]) - 1, int(parts[1]) - 1))
        elif section == "l":
            parts = [int(p) - 1 for p in line.split()]
            edges.extend((parts[0], q) for q in parts[1:])
    if n is None:
        raise FetchError("Pajek file has no *Vertices section")
    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    e = e[e[:, 0] != e[:, 1]]
    return SparseGraph.from_edges(n, e), names


def graph_from_mat(blob, variable=None, bipartite=False):
    """Adjacency from a MATLAB file.

    With ``bipartite=True`` the variable is a node x item incidence matrix and
    two nodes are linked when they share an item.
    """
    from scipy.io import loadmat

    data = loadmat(io.BytesIO(blob))
    if variable is not None:
        if variable not in data:
            raise FetchError(f"variable {variable!r} not found in MATLAB file")
        m = data[variable]
    else:
        cands = [v for k, v in data.items() if not k.startswith("__") and getattr(v, "ndim", 0) == 2
                 and v.shape[0] == v.shape[1] and v.shape[0] > 1]
        if not cands:
            raise FetchError("no square matrix found in MATLAB file")
        m = max(cands, key=lambda v: v.shape[0])
    m = sp.csr_matrix(m)
    if bipartite:
        inc = (m != 0).astype(np.int64)
        m = inc @ inc.T
    m = ((m + m.T) != 0).astype(np.int8).tolil()
    m.setdiag(0)
    return SparseGraph.from_adjacency(m.tocsr())


def convert_raw(info: DatasetInfo, raw):
    if info.kind == "pajek":
        return parse_pajek(raw.decode("utf-8", errors="replace"))
    if info.kind in ("mat", "mat-bipartite"):
        g = graph_from_mat(raw, info.variable, bipartite=info.kind == "mat-bipartite")
        return g, [str(i) for i in range(g.n_nodes)]
    raise FetchError(f"unknown converter {info.kind!r}")


def fetch(name, out_dir=None, mirror=None, timeout=60):
    """Download, convert and verify a registered dataset; returns the tsv path."""
    if name not in REGISTRY:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(REGISTRY)}")
    info = REGISTRY[name]
    url = info.url
    if mirror:
        url = os.path.join(mirror, os.path.basename(info.url)) if os.path.isdir(mirror) else \
            mirror.rstrip("/") + "/" + os.path.basename(info.url)
    raw = _extract(_download(url, timeout), info.member, url)
    try:
        graph, names = convert_raw(info, raw)
    except (ValueError, IndexError, UnicodeError) as exc:
        raise FetchError(f"{name}: cannot convert {url}: {exc}") from exc
    if (graph.n_nodes, graph.n_edges) != (info.n_nodes, info.n_edges):
        raise FetchError(
            f"{name}: expected {info.n_nodes} nodes / {info.n_edges} edges, "
            f"got {graph.n_nodes} / {graph.n_edges}"
        )
    out = data_dir(out_dir)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"{name}.tsv")
    write_edge_list(graph, path)
    with open(os.path.join(out, f"{name}.names.tsv"), "w") as fh:
        for i, label in enumerate(names):
            fh.write(f"{i}\t{label}\n")
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()
    with open(os.path.join(out, f"{name}.sha256"), "w") as fh:
        fh.write(f"{digest}  {name}.tsv\n")
    logger.info("wrote %s (%d nodes, %d edges, sha256 %s)", path, graph.n_nodes, graph.n_edges, digest)
    return path
