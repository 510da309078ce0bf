import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from epm.common import (
    EdgeRateDecomposition,
    LinkScoreSet,
    categorical_rows,
    edge_rate,
    link_probability,
    partition_edges,
    sample_edge_counts,
    update_scores,
)
from epm.randkit import RngStream


def test_edge_rate_examples():
    assert edge_rate(np.zeros(3), np.ones(3), np.ones((3, 3))).total == 0.0
    assert edge_rate([2.0], [3.0], [[0.5]]).total == pytest.approx(3.0)
    d = edge_rate([1.0, 1.0], [1.0, 0.0], [1.0, 2.0])
    assert d.categories.tolist() == [1.0, 0.0] and d.total == 1.0


def test_edge_rate_background_category():
    d = edge_rate([1.0, 1.0], [1.0, 1.0], [0.5, 0.25], background=0.1)
    assert d.categories.tolist() == [0.5, 0.25, 0.1]
    assert d.total == pytest.approx(0.85)


def test_edge_rate_domain_errors():
    with pytest.raises(ValueError):
        edge_rate([-1.0], [1.0], [[1.0]])
    with pytest.raises(ValueError):
        edge_rate([1.0, 1.0], [1.0, 1.0], np.ones((3, 3)))
    with pytest.raises(ValueError):
        edge_rate([1.0], [1.0], [[1.0]], background=-1.0)


@settings(max_examples=50, deadline=None)
@given(k=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_edge_rate_symmetry_and_total(k, seed):
    rng = np.random.default_rng(seed)
    phi_i, phi_j = rng.gamma(1.0, size=k), rng.gamma(1.0, size=k)
    lam = rng.gamma(1.0, size=(k, k))
    lam = lam + lam.T
    a, b = edge_rate(phi_i, phi_j, lam), edge_rate(phi_j, phi_i, lam)
    assert np.allclose(a.categories, b.categories.T, rtol=1e-14)
    assert a.total == pytest.approx(b.total, rel=1e-12)
    assert a.total == pytest.approx(a.categories.sum(), rel=1e-12)
    assert np.all(a.categories >= 0)


def test_link_probability_examples():
    assert link_probability(0.0) == 0.0
    assert link_probability(math.log(2)) == pytest.approx(0.5, rel=1e-15)
    assert link_probability(1e6) == 1.0


@pytest.mark.parametrize("lam", [0.1, 1.0, 10.0])
def test_berpo_marginal_law(lam):
    m = RngStream(0).gen.poisson(lam, size=100_000)
    p = 1 - math.exp(-lam)
    se = math.sqrt(p * (1 - p) / m.size)
    assert abs(np.mean(m >= 1) - link_probability(lam)) <= 3 * se + 1e-12


def test_edge_counts_zero_edge():
    d = edge_rate([1.0, 2.0], [1.0, 1.0], [1.0, 1.0])
    assert sample_edge_counts(RngStream(0), 0, d).tolist() == [0, 0]


def test_edge_counts_single_support():
    out = sample_edge_counts(RngStream(0), 1, EdgeRateDecomposition(np.array([0.0, 2.5]), 2.5))
    assert out[0] == 0 and out[1] >= 1


def test_edge_counts_thinning_oracle():
    """Per-category count of a Po+(2) total split 50/50: compare with exact thinning pmf."""
    s = RngStream(1)
    d = EdgeRateDecomposition(np.array([1.0, 1.0]), 2.0)
    draws = np.array([sample_edge_counts(s, 1, d)[0] for _ in range(100_000)])
    kmax = 8
    pmf = np.zeros(kmax + 1)
    norm = 1 - math.exp(-2.0)
    for m in range(1, 60):
        pm = stats.poisson.pmf(m, 2.0) / norm
        for k in range(min(m, kmax) + 1):
            pmf[k] += pm * stats.binom.pmf(k, m, 0.5)
    obs = np.bincount(np.minimum(draws, kmax + 1), minlength=kmax + 2)[: kmax + 1]
    exp_counts = pmf * draws.size
    keep = exp_counts > 5
    chi2 = np.sum((obs[keep] - exp_counts[keep]) ** 2 / exp_counts[keep])
    assert chi2 < stats.chi2.ppf(0.99, keep.sum() - 1)


def test_edge_counts_zero_rate_positive_edge_is_floored(caplog):
    out = sample_edge_counts(RngStream(0), 1, EdgeRateDecomposition(np.zeros(3), 0.0))
    assert out.sum() >= 1
    assert "flooring" in caplog.text


def test_partition_edges_integrity_small_and_large_counts():
    rng = np.random.default_rng(0)
    E, K = 200, 5
    w = rng.gamma(0.5, size=(E, K))
    w[:5] *= 1e3  # counts well above the unit-by-unit cap
    m, edge, k1, _, cnt = partition_edges(RngStream(2), w.sum(axis=1), w)
    per_edge = np.bincount(edge, weights=cnt, minlength=E).astype(int)
    assert np.array_equal(per_edge, m)
    assert m[:5].min() > 64
    assert np.all(w[edge, k1] > 0)


def test_categorical_rows_zero_mass_falls_back_to_argmax():
    w = np.array([[0.0, 0.0, 0.0], [0.0, 5.0, 0.0]])
    k = categorical_rows(RngStream(0).gen, w)
    assert k[1] == 1 and 0 <= k[0] < 3


def test_link_score_set_running_mean():
    sc = LinkScoreSet.for_pairs([(0, 1), (1, 2)])
    sc.add([0.2, 0.0])
    sc.add([0.6, 1.0])
    assert np.allclose(sc.scores, [0.4, 0.5]) and sc.n_samples == 2


def test_update_scores_zero_rate_and_counter():
    sc = LinkScoreSet.for_pairs([(0, 1), (2, 3)])
    update_scores(sc, lambda i, j: np.zeros(len(i)))
    assert sc.scores.tolist() == [0.0, 0.0] and sc.n_samples == 1
    update_scores(sc, lambda i, j: np.full(len(i), math.log(2)))
    assert np.allclose(sc.scores, [0.25, 0.25]) and sc.n_samples == 2
