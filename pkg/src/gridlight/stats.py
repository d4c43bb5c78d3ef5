"""Goodness-of-fit tests for shot histograms."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DomainError

MIN_EXPECTED = 5.0
# acceptance level for every goodness-of-fit comparison
P_VALUE_THRESHOLD = 1e-3


@dataclass(frozen=True)
class ChiSquare:
    statistic: float
    p_value: float
    dof: int
    categories: int     # after merging sparse bins

    def as_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "dof": self.dof,
                "categories": self.categories}


def merge_groups(expected, min_expected: float = MIN_EXPECTED) -> list[list[int]]:
    """Runs of adjacent categories whose pooled expectation reaches ``min_expected``.

    A short remainder at the end joins the last full run.
    """
    groups, run, acc = [], [], 0.0
    for i, e in enumerate(expected):
        run.append(i)
        acc += e
        if acc >= min_expected:
            groups.append(run)
            run, acc = [], 0.0
    if run:
        if groups:
            groups[-1].extend(run)
        else:
            groups.append(run)
    return groups


def chi_square(observed, expected_probs, *, min_expected: float = MIN_EXPECTED) -> ChiSquare:
    """Pearson statistic of counts against probabilities, merging adjacent sparse bins."""
    obs = np.asarray(observed, float)
    p = np.asarray(expected_probs, float)
    if obs.shape != p.shape or obs.ndim != 1:
        raise DomainError("observed and expected must be matching 1-D sequences")
    if len(obs) < 2:
        raise DomainError("chi-square needs at least two categories")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise DomainError("expected probabilities must be non-negative and sum to 1")
    if np.any(obs < 0):
        raise DomainError("counts must be non-negative")
    n = obs.sum()
    if n <= 0:
        raise DomainError("no observations")
    exp = n * p
    groups = merge_groups(exp, min_expected)
    if len(groups) < 2:
        raise DomainError("degenerate categories: fewer than two bins after merging")
    o = np.array([obs[g].sum() for g in groups])
    e = np.array([exp[g].sum() for g in groups])
    stat = float(((o - e) ** 2 / e).sum())
    dof = len(groups) - 1
    return ChiSquare(stat, float(stats.chi2.sf(stat, dof)), dof, len(groups))


def two_sample_chi_square(first, second, *, min_expected: float = MIN_EXPECTED) -> ChiSquare:
    """Homogeneity test of two count vectors over the same categories."""
    a = np.asarray(first, float)
    b = np.asarray(second, float)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("samples must be matching 1-D count vectors")
    na, nb = a.sum(), b.sum()
    if na <= 0 or nb <= 0:
        raise DomainError("both samples need observations")
    pooled = a + b
    # merge on the smaller sample's expected counts
    groups = merge_groups(pooled * min(na, nb) / (na + nb), min_expected)
    if len(groups) < 2:
        raise DomainError("degenerate categories: fewer than two bins after merging")
    table = np.array([[a[g].sum() for g in groups], [b[g].sum() for g in groups]])
    stat, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return ChiSquare(float(stat), float(p), int(dof), len(groups))


def binomial_sigma(n: int, p: float) -> float:
    return math.sqrt(n * p * (1.0 - p))


def within_sigma(count: int, n: int, p: float, k: float = 3.0) -> bool:
    """|count - n p| <= k binomial standard deviations (exact match when p is 0 or 1)."""
    return abs(count - n * p) <= k * binomial_sigma(n, p)


__all__ = ["ChiSquare", "P_VALUE_THRESHOLD", "chi_square", "two_sample_chi_square", "merge_groups", "binomial_sigma", "within_sigma"]
