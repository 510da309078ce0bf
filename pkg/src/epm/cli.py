"""Command-line interface: ``epm fit|predict|eval|simulate|communities|fetch``.

Exit codes: 0 success, 2 usage or input error, 3 numerical abort,
4 network or data-integrity failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .common import NonFiniteStateError, link_probability
from .community import DenseExportError, summarize, write_summary
from .datasets import REGISTRY, FetchError, fetch
from .evaluation import run_protocol
from .graph import (
    GraphFormatError,
    HoldoutInfeasibleError,
    load_edge_list,
    load_pairs,
    make_holdout,
    write_edge_list,
    write_mask,
)
from .models import TRACE_COLUMNS, Chain, get_kind
from .randkit import ParameterDomainError, RngStream

logger = logging.getLogger("epm")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_NETWORK = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- configuration


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use flag names."""
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _hyper_overrides(values):
    """``--hyper e0=0.1 --hyper beta_prior=1,2`` into keyword arguments."""
    out = {}
    for item in values or []:
        if "=" not in item:
            raise UsageError(f"--hyper expects name=value, got {item!r}")
        k, v = item.split("=", 1)
        nums = tuple(float(x) for x in v.split(","))
        out[k.strip()] = nums[0] if len(nums) == 1 else nums
    return out


def _add_common(p, *names):
    if "model" in names:
        p.add_argument("--model", choices=sorted(("hgp", "gp", "agm")), default="hgp")
    if "models" in names:
        p.add_argument("--model", default="hgp", help="model kind, or a comma-separated list of kinds")
    if "kmax" in names:
        p.add_argument("--kmax", type=int, default=None, help="truncation level (default 100, or 256 if N >= 500)")
    if "sweeps" in names:
        p.add_argument("--sweeps", type=int, default=3000)
        p.add_argument("--collect", type=int, default=1500, help="final sweeps averaged into link scores")
    if "seed" in names:
        p.add_argument("--seed", type=int, default=0)
    if "fraction" in names:
        p.add_argument("--fraction", type=float, default=0.0, help="share of node pairs held out")
    if "input" in names:
        p.add_argument("--input", help="edge list file")
        p.add_argument("--format", choices=("tsv", "dense"), default="tsv")
        p.add_argument("--one-based", action="store_true", help="node ids in the input start at 1")
        p.add_argument("--nodes", type=int, default=None, help="node count (overrides the file header)")
    if "out" in names:
        p.add_argument("--out", default="epm_out")
    if "threads" in names:
        p.add_argument("--threads", type=int, default=1)
    if "hyper" in names:
        p.add_argument("--hyper", action="append", metavar="NAME=VALUE",
                       help="hyperparameter override, e.g. e0=0.01 or c_prior=1,1")
        p.add_argument("--init", choices=("neutral", "prior"), default="neutral")
    p.add_argument("--config", help="flat key=value file; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="epm", description="Edge partition models for binary networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model and write checkpoints and a trace")
    _add_common(p, "model", "kmax", "sweeps", "seed", "fraction", "input", "out", "threads", "hyper")
    p.add_argument("--resume", help="continue from this checkpoint")
    p.add_argument("--stop-at", type=int, default=None, help="stop after this sweep (for staged runs)")
    p.add_argument("--checkpoint-every", type=int, default=None)

    p = sub.add_parser("predict", help="score node pairs with a fitted checkpoint")
    p.add_argument("--checkpoint", required=False)
    p.add_argument("--pairs", required=False, help="file of 'i j' rows")
    _add_common(p, "out")

    p = sub.add_parser("eval", help="repeated random-holdout evaluation")
    _add_common(p, "models", "kmax", "sweeps", "seed", "input", "out", "threads", "hyper")
    p.add_argument("--fraction", type=float, default=0.2)
    p.add_argument("--partitions", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1, help="partitions run in parallel")

    p = sub.add_parser("simulate", help="draw a network from the HGP-EPM prior")
    _add_common(p, "kmax", "seed", "out", "hyper")
    p.add_argument("--n", "--num-nodes", dest="num_nodes", type=int, default=100)
    p.add_argument("--gamma0", type=float, default=None)

    p = sub.add_parser("communities", help="community sizes, node order and reordered matrix")
    p.add_argument("--checkpoint", required=False)
    p.add_argument("--matrix", choices=("probability", "adjacency", "none"), default="probability")
    p.add_argument("--log10", action="store_true", help="emit log10 probabilities clamped to [-2, 1]")
    _add_common(p, "out")

    p = sub.add_parser("fetch", help="download a benchmark network")
    p.add_argument("name", choices=sorted(REGISTRY))
    p.add_argument("--mirror", default=None, help="base URL or local directory replacing the original source")
    p.add_argument("--timeout", type=float, default=60.0)
    _add_common(p, "out")
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        conf = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        dests = {a.dest for a in sub._actions}
        unknown = set(conf) - dests
        if unknown:
            raise UsageError(f"unknown config key(s) for '{args.command}': {', '.join(sorted(unknown))}")
        typed = {}
        for action in sub._actions:
            if action.dest in conf:
                raw = conf[action.dest]
                if action.nargs == 0:
                    typed[action.dest] = raw.lower() in ("1", "true", "yes", "on")
                elif action.dest == "hyper":
                    typed[action.dest] = [s.strip() for s in raw.split(";") if s.strip()]
                else:
                    try:
                        typed[action.dest] = action.type(raw) if action.type else raw
                    except ValueError:
                        raise UsageError(f"config key {action.dest!r}: bad value {raw!r}") from None
                    if action.choices and typed[action.dest] not in action.choices:
                        raise UsageError(f"config key {action.dest!r}: {raw!r} not in {sorted(action.choices)}")
        sub.set_defaults(**typed)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------- helpers


def _load_graph(args):
    if not args.input:
        raise UsageError("--input is required")
    try:
        return load_edge_list(args.input, n_nodes=args.nodes, fmt=args.format, one_based=args.one_based)
    except FileNotFoundError as exc:
        raise UsageError(f"cannot read input: {exc}") from exc


def _default_kmax(n_nodes):
    return 100 if n_nodes < 500 else 256


def _make_hyper(args, n_nodes):
    kmax = args.kmax if args.kmax is not None else _default_kmax(n_nodes)
    if kmax < 1:
        raise UsageError("--kmax must be >= 1")
    kw = _hyper_overrides(getattr(args, "hyper", None))
    kw["n_components"] = kmax
    return get_kind(args.model).make_hyper(**kw)


def _limit_threads(n):
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def write_trace(chain, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for s, act, lam, ll in chain.trace:
            w.writerow([int(s), int(act), f"{lam:.10g}", f"{ll:.10g}"])


# --------------------------------------------------------------------- commands


def cmd_fit(args):
    os.makedirs(args.out, exist_ok=True)
    if args.resume:
        chain = load_checkpoint(args.resume)
    else:
        if args.collect > args.sweeps:
            raise UsageError("--collect must not exceed --sweeps")
        if not 0 <= args.fraction < 1:
            raise UsageError("--fraction must lie in [0, 1)")
        graph = _load_graph(args)
        hyper = _make_hyper(args, graph.n_nodes)
        train, mask = make_holdout(graph, args.fraction, RngStream(args.seed).child(0))
        if len(mask):
            write_mask(mask, os.path.join(args.out, "mask.tsv"))
        chain = Chain(args.model, hyper, train, mask, seed=args.seed, n_sweeps=args.sweeps,
                      n_collect=args.collect, init=args.init)
    chain.dump_dir = args.out
    ckpt = os.path.join(args.out, "checkpoint.npz")
    every = args.checkpoint_every or max(1, chain.n_sweeps // 10)

    def on_sweep(c):
        if c.sweep_index % every == 0 or c.sweep_index == c.n_sweeps:
            save_checkpoint(c, ckpt)
            write_trace(c, os.path.join(args.out, "trace.csv"))
        if args.verbose:
            s, act, lam, ll = c.trace[-1]
            logger.info("sweep %d active %d lambda_sum %.4g loglik %.6g", s, act, lam, ll)

    with _limit_threads(args.threads):
        chain.run(stop_at=args.stop_at, callback=on_sweep)
    save_checkpoint(chain, ckpt)
    write_trace(chain, os.path.join(args.out, "trace.csv"))
    hard, overlap = chain.assignments()
    with open(os.path.join(args.out, "assignments.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "community", "memberships"])
        for i, (h, ov) in enumerate(zip(hard, overlap)):
            w.writerow([i, int(h), " ".join(str(int(k)) for k in ov)])
    print(f"fit {chain.kind.name}: {chain.sweep_index}/{chain.n_sweeps} sweeps, checkpoint {ckpt}")
    return EXIT_OK


def cmd_predict(args):
    if not args.checkpoint or not args.pairs:
        raise UsageError("predict needs --checkpoint and --pairs")
    chain = load_checkpoint(args.checkpoint)
    n = chain.graph.n_nodes
    try:
        pairs = load_pairs(args.pairs, n_nodes=n)
    except FileNotFoundError as exc:
        raise UsageError(f"cannot read pairs: {exc}") from exc
    probs = link_probability(chain.state.pair_rates(pairs[:, 0], pairs[:, 1])) if len(pairs) else np.zeros(0)
    source = np.full(len(pairs), "state", dtype=object)
    if chain.scores.n_samples and len(chain.mask):
        lo, hi = pairs.min(axis=1), pairs.max(axis=1)
        keys = lo * n + hi
        ref = chain.mask.keys
        pos = np.clip(np.searchsorted(ref, keys), 0, ref.size - 1)
        hit = ref[pos] == keys
        probs[hit] = chain.scores.scores[pos[hit]]
        source[hit] = "posterior_mean"
    if np.any(source == "state"):
        print("warning: some pairs scored from the final state (no collected posterior mean)", file=sys.stderr)
    observed = [chain.graph.has_edge(int(i), int(j)) for i, j in pairs]
    out = args.out if args.out.endswith((".tsv", ".txt", ".csv")) else os.path.join(args.out, "scores.tsv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w") as fh:
        fh.write("i\tj\tprobability\tsource\tflag\n")
        for (i, j), p, src, obs in zip(pairs, probs, source, observed):
            fh.write(f"{i}\t{j}\t{p:.10g}\t{src}\t{'observed' if obs else '-'}\n")
    print(f"wrote {len(pairs)} scores to {out}")
    return EXIT_OK


def cmd_eval(args):
    if args.collect > args.sweeps:
        raise UsageError("--collect must not exceed --sweeps")
    if not 0 < args.fraction < 1:
        raise UsageError("--fraction must lie in (0, 1) for evaluation")
    graph = _load_graph(args)
    os.makedirs(args.out, exist_ok=True)
    models = [m.strip() for m in args.model.split(",") if m.strip()]
    for m in models:
        get_kind(m)
    rows, summaries = [], []
    with _limit_threads(args.threads):
        for m in models:
            args.model = m
            hyper = _make_hyper(args, graph.n_nodes)
            rep = run_protocol(graph, m, hyper, n_partitions=args.partitions, fraction=args.fraction,
                               sweeps=args.sweeps, collect=args.collect, seed=args.seed, init=args.init,
                               n_jobs=args.jobs)
            text = rep.to_csv()
            rows.extend(text.splitlines()[1:])
            summaries.append(rep.summary_table())
    with open(os.path.join(args.out, "report.csv"), "w") as fh:
        fh.write("partition,model,auc_roc,auc_pr,seconds\n")
        fh.write("".join(r + "\n" for r in rows))
    summary = "\n".join(summaries)
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(summary)
    print(summary, end="")
    return EXIT_OK


def cmd_simulate(args):
    from .hgp import HgpHyper, simulate_network

    if args.num_nodes < 2:
        raise UsageError("--n must be >= 2")
    kw = _hyper_overrides(args.hyper)
    kw["n_components"] = args.kmax if args.kmax is not None else _default_kmax(args.num_nodes)
    hyper = HgpHyper(**kw)
    fixed = {"gamma0": args.gamma0} if args.gamma0 is not None else {}
    sim = simulate_network(args.num_nodes, hyper, RngStream(args.seed), **fixed)
    out = args.out if args.out.endswith(".tsv") else os.path.join(args.out, "simulated.tsv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    write_edge_list(sim.graph, out)
    print(f"simulated {sim.graph.n_nodes} nodes, {sim.graph.n_edges} edges; tail mass {sim.tail_mass:.4g}; -> {out}")
    if sim.tail_mass > 0.01:
        print("warning: smallest 10% of atoms hold more than 1% of sum(r); consider a larger --kmax",
              file=sys.stderr)
    return EXIT_OK


def cmd_communities(args):
    if not args.checkpoint:
        raise UsageError("communities needs --checkpoint")
    chain = load_checkpoint(args.checkpoint)
    hard, _ = chain.assignments()
    summary = summarize(hard, chain.state.n_components)
    matrix = None
    if args.matrix == "probability":
        matrix = link_probability(chain.state.rate_matrix())
        np.fill_diagonal(matrix, 0.0)
    elif args.matrix == "adjacency":
        matrix = chain.graph.to_dense()
    write_summary(summary, args.out, matrix=matrix, log10=args.log10)
    print(f"{summary.n_active} active communities over {len(hard)} nodes -> {args.out}")
    return EXIT_OK


def cmd_fetch(args):
    out_dir = None if args.out == "epm_out" else args.out
    path = fetch(args.name, out_dir=out_dir, mirror=args.mirror, timeout=args.timeout)
    print(path)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "communities": cmd_communities,
    "fetch": cmd_fetch,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"epm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, GraphFormatError, CheckpointError, HoldoutInfeasibleError, ParameterDomainError,
            DenseExportError, IndexError, ValueError) as exc:
        print(f"epm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteStateError as exc:
        where = f" (state dump: {exc.dump_path})" if exc.dump_path else ""
        print(f"epm: numerical abort: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERIC
    except FetchError as exc:
        print(f"epm: fetch failed: {exc}", file=sys.stderr)
        return EXIT_NETWORK


if __name__ == "__main__":
    sys.exit(main())
