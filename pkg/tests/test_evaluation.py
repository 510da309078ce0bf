import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epm.evaluation import MetricReport, UndefinedMetricError, auc_pr, auc_roc, partition_seeds, run_protocol
from epm.graph import make_holdout
from epm.randkit import RngStream

from conftest import planted_graph
from pr_fixtures import PR_FIXTURES, brute_auc_roc


def test_auc_roc_examples():
    assert auc_roc([0.9, 0.1], [1, 0]) == 1.0
    assert auc_roc([0.1, 0.9], [1, 0]) == 0.0
    assert auc_roc([0.5, 0.5, 0.2], [1, 0, 0]) == 0.75


def test_auc_pr_examples():
    assert auc_pr([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(0.8333333333333334, abs=1e-15)
    assert auc_pr([0.3] * 10, [1, 1, 1] + [0] * 7) == pytest.approx(0.3, abs=1e-15)
    y = np.r_[np.ones(3), np.zeros(40)]
    assert auc_pr(np.linspace(1, 0, 43), y) == 1.0


@pytest.mark.parametrize("scores,labels,expected", PR_FIXTURES)
def test_auc_pr_fixtures(scores, labels, expected):
    assert auc_pr(scores, labels) == pytest.approx(float(expected), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    data=st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=40),
)
def test_auc_roc_matches_pair_counting(data):
    s, y = map(list, zip(*data))
    if 0 < sum(y) < len(y):
        assert auc_roc(s, y) == pytest.approx(brute_auc_roc(s, y), abs=1e-12)


def test_auc_roc_complement_and_monotone_invariance():
    rng = np.random.default_rng(0)
    s = rng.random(200)
    y = rng.integers(0, 2, 200)
    assert auc_roc(s, y) + auc_roc(-s, y) == pytest.approx(1.0, abs=1e-12)
    t = np.exp(3 * s) + 7
    assert auc_roc(t, y) == pytest.approx(auc_roc(s, y), abs=1e-15)
    assert auc_pr(t, y) == pytest.approx(auc_pr(s, y), abs=1e-15)


def test_metrics_reject_degenerate_labels():
    with pytest.raises(UndefinedMetricError):
        auc_roc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        auc_roc([0.1, 0.2], [0, 0])
    with pytest.raises(UndefinedMetricError):
        auc_pr([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        auc_roc([0.1, 0.2], [0, 2])


def test_report_uses_sample_std_and_notes_single_partition(tmp_path):
    r = MetricReport("gp", np.array([0.9, 0.8, 0.7]), np.array([0.5, 0.5, 0.5]), np.ones(3), 100)
    assert r.summary()["auc_roc_std"] == pytest.approx(0.1)
    assert r.summary()["seconds_per_1000_sweeps"] == pytest.approx(10.0)
    one = MetricReport("gp", np.array([0.9]), np.array([0.5]), np.ones(1), 100)
    assert one.summary()["auc_roc_std"] == 0.0 and "only one partition" in one.summary_table()
    text = r.to_csv(tmp_path / "r.csv")
    assert text.splitlines()[0] == "partition,model,auc_roc,auc_pr,seconds"
    assert (tmp_path / "r.csv").read_text() == text


def test_protocol_refuses_empty_holdout():
    g, _, _ = planted_graph([10, 10], 0.5, 0.05, 0)
    with pytest.raises(ValueError):
        run_protocol(g, "gp", fraction=0.0)


def test_partitions_identical_across_model_kinds():
    g, _, _ = planted_graph([15, 15], 0.4, 0.05, 1)
    a = run_protocol(g, "gp", n_partitions=2, sweeps=4, collect=2, seed=9)
    b = run_protocol(g, "hgp", n_partitions=2, sweeps=4, collect=2, seed=9)
    for pa, pb in zip(a.heldout_pairs, b.heldout_pairs):
        assert pa.tobytes() == pb.tobytes()
    assert not np.array_equal(a.heldout_pairs[0], a.heldout_pairs[1])
    assert partition_seeds(9, 2) == partition_seeds(9, 2)


def test_protocol_parallel_matches_serial():
    g, _, _ = planted_graph([12, 12], 0.4, 0.05, 2)
    a = run_protocol(g, "gp", n_partitions=2, sweeps=6, collect=3, seed=3)
    b = run_protocol(g, "gp", n_partitions=2, sweeps=6, collect=3, seed=3, n_jobs=2)
    assert np.array_equal(a.auc_roc, b.auc_roc) and np.array_equal(a.auc_pr, b.auc_pr)
