"""Precision-recall step-curve fixtures with hand-checkable exact areas.

Each threshold (a block of tied scores) adds recall_gain * precision.
"""

from fractions import Fraction

PR_FIXTURES = [
    ([0.9, 0.8, 0.7], [1, 0, 1], Fraction(5, 6)),
    ([0.5, 0.5, 0.5, 0.5], [1, 0, 0, 0], Fraction(1, 4)),
    ([0.9, 0.1], [1, 0], Fraction(1, 1)),
    ([0.1, 0.9], [1, 0], Fraction(1, 2)),
    ([3, 2, 1, 0], [1, 1, 0, 0], Fraction(1, 1)),
    ([3, 2, 1, 0], [0, 0, 1, 1], Fraction(5, 12)),
    ([1, 1, 0, 0], [1, 0, 1, 0], Fraction(1, 2)),
    ([0.2, 0.2, 0.9, 0.1, 0.9], [1, 0, 1, 0, 0], Fraction(1, 2)),
    ([2, 0, 0, 1], [0, 1, 1, 1], Fraction(2, 3)),
    ([0, 0, 3, 0, 0, 0, 3, 1], [0, 0, 0, 1, 1, 1, 1, 0], Fraction(1, 2)),
    ([2, 2, 0, 0, 1], [0, 1, 1, 1, 1], Fraction(83, 120)),
    ([1, 1, 0, 0, 3, 1], [1, 0, 1, 1, 1, 0], Fraction(17, 24)),
    ([1, 3, 3, 1, 1], [0, 0, 0, 0, 1], Fraction(1, 5)),
    ([3, 1, 1, 3, 2], [0, 0, 1, 0, 0], Fraction(1, 5)),
    ([1, 1, 3, 0, 3], [0, 0, 0, 0, 1], Fraction(1, 2)),
    ([0, 3, 3, 2], [1, 0, 0, 1], Fraction(5, 12)),
    ([0, 2, 2], [0, 1, 0], Fraction(1, 2)),
    ([1, 2, 1, 2, 2, 3, 1, 0], [0, 1, 0, 1, 1, 0, 1, 1], Fraction(193, 280)),
    ([2, 1, 3, 3, 2], [0, 0, 0, 1, 1], Fraction(1, 2)),
    ([2, 0, 0], [0, 0, 1], Fraction(1, 3)),
]


def brute_auc_roc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))
