import csv
import dataclasses

import numpy as np
import pytest

from epm import models
from epm.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from epm.cli import main
from epm.common import NonFiniteStateError
from epm.graph import write_edge_list
from epm.models import Chain
from epm.gp import GpHyper

from conftest import planted_graph


@pytest.fixture
def edge_file(tmp_path):
    g, _, _ = planted_graph([10, 10], 0.5, 0.05, 0)
    p = tmp_path / "g.tsv"
    write_edge_list(g, p)
    return p, g


def _fit(tmp_path, edge_file, out, *extra):
    argv = ["fit", "--input", str(edge_file), "--out", str(tmp_path / out), "--model", "gp", "--kmax", "4",
            "--sweeps", "10", "--collect", "5", "--seed", "3", *extra]
    return main(argv)


def test_fit_writes_outputs(tmp_path, edge_file, capsys):
    assert _fit(tmp_path, edge_file[0], "o", "--fraction", "0.2") == 0
    out = tmp_path / "o"
    for name in ("checkpoint.npz", "trace.csv", "assignments.csv", "mask.tsv"):
        assert (out / name).exists()
    rows = list(csv.reader(open(out / "trace.csv")))
    assert rows[0] == ["sweep", "active", "lambda_sum", "loglik"] and len(rows) == 11
    assert load_checkpoint(out / "checkpoint.npz").sweep_index == 10


def test_resume_is_identical_to_uninterrupted(tmp_path, edge_file):
    p = edge_file[0]
    assert _fit(tmp_path, p, "full", "--fraction", "0.2") == 0
    assert _fit(tmp_path, p, "part", "--fraction", "0.2", "--stop-at", "4") == 0
    assert load_checkpoint(tmp_path / "part" / "checkpoint.npz").sweep_index == 4
    assert main(["fit", "--resume", str(tmp_path / "part" / "checkpoint.npz"), "--out", str(tmp_path / "part")]) == 0
    a = load_checkpoint(tmp_path / "full" / "checkpoint.npz")
    b = load_checkpoint(tmp_path / "part" / "checkpoint.npz")
    assert np.array_equal(a.state.phi, b.state.phi) and np.array_equal(a.state.r, b.state.r)
    assert np.array_equal(a.scores.scores, b.scores.scores)
    assert (tmp_path / "full" / "trace.csv").read_text() == (tmp_path / "part" / "trace.csv").read_text()


def test_checkpoint_round_trip_continues_chain(tmp_path):
    g, _, _ = planted_graph([6, 6], 0.6, 0.1, 1)
    c1 = Chain("hgp", models.get_kind("hgp").make_hyper(n_components=3), g, seed=5, n_sweeps=6, n_collect=3)
    c1.run(stop_at=3)
    save_checkpoint(c1, tmp_path / "c.npz")
    c2 = load_checkpoint(tmp_path / "c.npz")
    c1.run()
    c2.run()
    assert np.array_equal(c1.state.lam, c2.state.lam) and c1.state.gamma0 == c2.state.gamma0


def test_bad_checkpoint_magic(tmp_path):
    bad = tmp_path / "x.npz"
    np.savez(bad, meta=np.asarray('{"magic": "OTHER"}'))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bad)
    assert main(["predict", "--checkpoint", str(bad), "--pairs", str(bad), "--out", str(tmp_path)]) == 2


def test_usage_errors_exit_2(tmp_path, edge_file):
    assert main(["fit", "--out", str(tmp_path / "o")]) == 2
    assert main(["fit", "--input", str(tmp_path / "missing.tsv"), "--out", str(tmp_path / "o")]) == 2
    assert _fit(tmp_path, edge_file[0], "o", "--collect", "50") == 2
    assert _fit(tmp_path, edge_file[0], "o", "--fraction", "1.0") == 2
    assert _fit(tmp_path, edge_file[0], "o", "--hyper", "nonsense=1") == 2
    assert main(["fit", "--model", "xyz"]) == 2
    bad = tmp_path / "bad.tsv"
    bad.write_text("0 0\n")
    assert main(["fit", "--input", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_numerical_abort_exit_3_with_dump(tmp_path, edge_file, monkeypatch, capsys):
    def broken(state, ctx, stream, hyper, check=False):
        raise NonFiniteStateError("phi")

    monkeypatch.setitem(models.MODEL_KINDS, "gp", dataclasses.replace(models.MODEL_KINDS["gp"], sweep=broken))
    assert _fit(tmp_path, edge_file[0], "o") == 3
    err = capsys.readouterr().err
    assert "state dump" in err
    assert (tmp_path / "o" / "nonfinite_sweep1.npz").exists()


def test_fetch_offline_exit_4(tmp_path):
    assert main(["fetch", "protein230", "--mirror", "http://127.0.0.1:9", "--timeout", "2",
                 "--out", str(tmp_path)]) == 4


def test_config_file_and_flag_precedence(tmp_path, edge_file):
    conf = tmp_path / "run.conf"
    conf.write_text(f"# run\ninput = {edge_file[0]}\nmodel = gp\nkmax = 3\nsweeps = 7\ncollect = 2\nhyper = e0=0.5;f0=0.5\n")
    assert main(["fit", "--config", str(conf), "--out", str(tmp_path / "a")]) == 0
    a = load_checkpoint(tmp_path / "a" / "checkpoint.npz")
    assert a.n_sweeps == 7 and a.hyper.n_components == 3 and a.hyper.e0 == 0.5
    assert main(["fit", "--config", str(conf), "--sweeps", "5", "--out", str(tmp_path / "b")]) == 0
    assert load_checkpoint(tmp_path / "b" / "checkpoint.npz").n_sweeps == 5
    conf.write_text("sweeps = many\n")
    assert main(["fit", "--config", str(conf)]) == 2
    conf.write_text("colour = blue\n")
    assert main(["fit", "--config", str(conf)]) == 2


def test_predict_rows_sources_and_flags(tmp_path, edge_file, capsys):
    p, g = edge_file
    assert _fit(tmp_path, p, "o", "--fraction", "0.2") == 0
    ck = load_checkpoint(tmp_path / "o" / "checkpoint.npz")
    held = ck.mask.pairs[:3]
    train_edge = ck.graph.edges[0]
    pairs = [tuple(held[2][::-1]), tuple(train_edge), tuple(held[0]), tuple(held[1])]
    pf = tmp_path / "pairs.tsv"
    pf.write_text("".join(f"{i} {j}\n" for i, j in pairs))
    out = tmp_path / "scores.tsv"
    assert main(["predict", "--checkpoint", str(tmp_path / "o" / "checkpoint.npz"), "--pairs", str(pf),
                 "--out", str(out)]) == 0
    rows = [r.split("\t") for r in out.read_text().splitlines()]
    assert rows[0] == ["i", "j", "probability", "source", "flag"]
    assert [(int(r[0]), int(r[1])) for r in rows[1:]] == [tuple(map(int, x)) for x in pairs]
    assert [r[3] for r in rows[1:]] == ["posterior_mean", "state", "posterior_mean", "posterior_mean"]
    assert rows[2][4] == "observed" and rows[1][4] == "-"
    assert float(rows[3][2]) == pytest.approx(ck.scores.scores[0], rel=1e-9)
    assert "warning" in capsys.readouterr().err
    pf.write_text("0 99\n")
    assert main(["predict", "--checkpoint", str(tmp_path / "o" / "checkpoint.npz"), "--pairs", str(pf),
                 "--out", str(out)]) == 2


def test_empty_graph_fit_and_isolated_pair(tmp_path):
    e = tmp_path / "e.tsv"
    e.write_text("nodes=6\n")
    assert main(["fit", "--input", str(e), "--out", str(tmp_path / "o"), "--kmax", "3", "--sweeps", "5",
                 "--collect", "2"]) == 0
    ck = load_checkpoint(tmp_path / "o" / "checkpoint.npz")
    assert ck.last_stats.m_node.sum() == 0 and ck.last_stats.m_comm.sum() == 0
    pf = tmp_path / "p.tsv"
    pf.write_text("0 1\n")
    assert main(["predict", "--checkpoint", str(tmp_path / "o" / "checkpoint.npz"), "--pairs", str(pf),
                 "--out", str(tmp_path / "s.tsv")]) == 0
    row = (tmp_path / "s.tsv").read_text().splitlines()[1].split("\t")
    expected = 1 - np.exp(-ck.state.pair_rates([0], [1])[0])
    assert float(row[2]) == pytest.approx(expected, rel=1e-9) and row[3] == "state"


def test_single_component_fit_and_communities(tmp_path, edge_file):
    assert _fit(tmp_path, edge_file[0], "o", "--kmax", "1") == 0
    assert main(["communities", "--checkpoint", str(tmp_path / "o" / "checkpoint.npz"), "--out",
                 str(tmp_path / "c"), "--log10"]) == 0
    assert (tmp_path / "c" / "sizes.csv").read_text().splitlines() == ["community,size", "0,20"]
    blocks = np.loadtxt(tmp_path / "c" / "blocks.csv", delimiter=",")
    assert blocks.shape == (20, 20) and blocks.min() >= -2 and blocks.max() <= 1


def test_eval_single_partition_and_determinism(tmp_path, edge_file):
    base = ["eval", "--input", str(edge_file[0]), "--model", "gp,hgp", "--kmax", "3", "--sweeps", "6",
            "--collect", "3", "--partitions", "1", "--seed", "2"]
    assert main(base + ["--out", str(tmp_path / "a")]) == 0
    assert main(base + ["--out", str(tmp_path / "b")]) == 0
    summary = (tmp_path / "a" / "summary.txt").read_text()
    assert "only one partition" in summary and "+/- 0.0000" in summary
    ra = list(csv.reader(open(tmp_path / "a" / "report.csv")))
    rb = list(csv.reader(open(tmp_path / "b" / "report.csv")))
    assert ra[0] == ["partition", "model", "auc_roc", "auc_pr", "seconds"] and len(ra) == 3
    # Wall-clock seconds differ between runs; every other column is seeded.
    assert [r[:4] for r in ra] == [r[:4] for r in rb]
    assert main(base[:4] + ["gp,bogus"] + base[5:] + ["--out", str(tmp_path / "c")]) == 2


def test_simulate_is_deterministic(tmp_path, capsys):
    args = ["simulate", "--n", "30", "--kmax", "10", "--seed", "4", "--hyper", "e0=1", "--hyper", "f0=1"]
    assert main(args + ["--out", str(tmp_path / "a.tsv")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.tsv")]) == 0
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    assert main(["simulate", "--n", "100", "--gamma0", "1e-6", "--out", str(tmp_path / "z.tsv")]) == 0
    assert "0 edges" in capsys.readouterr().out
