from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freqmark import metrics
from freqmark.errors import DegenerateGroundTruth, EmptyClass


def brute_auc(pos, neg):
    s = 0.0
    for p in pos:
        for n in neg:
            s += 1.0 if p > n else 0.5 if p == n else 0.0
    return s / (len(pos) * len(neg))


def test_auc_examples():
    assert metrics.auc([0.9, 0.8], [0.1, 0.2]) == 1.0
    assert metrics.auc([0.5], [0.5]) == 0.5
    rng = np.random.default_rng(1)
    pos, neg = rng.random(20), rng.random(20)
    assert metrics.auc(pos, neg) == pytest.approx(brute_auc(pos, neg), abs=1e-12)
    with pytest.raises(EmptyClass):
        metrics.auc([], [1.0])


@given(st.lists(st.integers(0, 8), min_size=1, max_size=60), st.lists(st.integers(0, 8), min_size=1, max_size=60))
def test_auc_brute_force_with_ties(pos, neg):
    assert metrics.auc(pos, neg) == pytest.approx(brute_auc(pos, neg), abs=1e-12)


def test_perfect_predictor():
    m = metrics.classification_metrics([1, 0, 1, 0], [1, 0, 1, 0])
    assert (m.precision, m.recall, m.f1, m.fpr, m.fnr) == (1.0, 1.0, 1.0, 0.0, 0.0)


def test_flag_all_predictor():
    m = metrics.classification_metrics([True] * 5 + [False] * 5, [True] * 10)
    assert m.precision == 0.5 and m.recall == 1.0
    assert m.f1 == pytest.approx(2 / 3)
    assert m.fpr == 1.0 and m.fnr == 0.0


def test_degenerate_truth():
    with pytest.raises(DegenerateGroundTruth):
        metrics.classification_metrics([False, False], [True, False])


@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=2, max_size=80))
def test_symmetry_and_f1_bounds(pairs):
    y = [a for a, _ in pairs]
    p = [b for _, b in pairs]
    if all(y) or not any(y):
        return
    m = metrics.classification_metrics(y, p)
    inv = metrics.classification_metrics([not a for a in y], [not b for b in p])
    assert m.fpr == pytest.approx(inv.fnr) and m.fnr == pytest.approx(inv.fpr)
    assert m.f1 <= min(2 * m.precision, 2 * m.recall) + 1e-12
    assert m.f1 <= max(m.precision, m.recall) + 1e-12


def test_spearman_and_boundaries():
    assert metrics.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert metrics.spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    truth = [False] * 10 + [True] * 10 + [False] * 10
    pred = [False] * 12 + [True] * 12 + [False] * 6
    assert metrics.boundary_hits(truth, pred, 5) == (2, 2)
    assert metrics.boundary_hits(truth, pred, 1) == (0, 2)
