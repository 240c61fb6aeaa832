"""Rank-based group comparison of acoustic features.

The group test is the Kruskal-Wallis H with tie correction,

    H = [12 / (N(N+1)) * sum_i R_i^2 / n_i - 3(N+1)] / C
    C = 1 - sum_t (t^3 - t) / (N^3 - N)   over tie groups of size t

with the p-value from the chi-square survival function at k-1 degrees of
freedom. The chi-square approximation is used for all group sizes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaincc

from .audio_io import CONSISTENCIES, LABELS
from .errors import (
    DegenerateDataError,
    DomainError,
    GroupingError,
    ParameterError,
)
from .features import FEATURE_NAMES, N_FEATURES, FeatureMatrix
from .ioutil import atomic_write_text

SIGNIFICANCE_LEVEL = 0.05

GROUPINGS = ("by_label", "by_consistency_within_label")


def rank_with_ties(values) -> np.ndarray:
    """Ranks 1..n with tied values sharing the mean of their positions."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ParameterError("rank_with_ties needs a nonempty 1-D vector")
    if not np.all(np.isfinite(x)):
        raise DomainError("rank_with_ties requires finite values")
    order = np.argsort(x, kind="stable")
    sorted_x = x[order]
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    return ranks


@dataclass(frozen=True)
class KruskalResult:
    h_statistic: float
    degrees_of_freedom: int
    p_value: float


def chi_square_sf(x: float, df: int) -> float:
    """Chi-square survival function via the regularized incomplete gamma."""
    if x < 0:
        raise DomainError("chi_square_sf requires x >= 0")
    if int(df) < 1:
        raise ParameterError("chi_square_sf requires df >= 1")
    return float(gammaincc(df / 2.0, x / 2.0))


def kruskal_wallis(groups) -> KruskalResult:
    """Tie-corrected Kruskal-Wallis test over two or more groups."""
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(arrays) < 2:
        raise ParameterError("kruskal_wallis needs at least 2 groups")
    if any(a.size == 0 for a in arrays):
        raise ParameterError("kruskal_wallis groups must be nonempty")
    pooled = np.concatenate(arrays)
    n_total = pooled.size
    if n_total < 3:
        raise ParameterError("kruskal_wallis needs at least 3 observations")

    ranks = rank_with_ties(pooled)
    h = 0.0
    start = 0
    for a in arrays:
        r = ranks[start : start + a.size].sum()
        h += r * r / a.size
        start += a.size
    h = 12.0 / (n_total * (n_total + 1)) * h - 3.0 * (n_total + 1)

    sorted_pooled = np.sort(pooled)
    boundaries = np.flatnonzero(np.diff(sorted_pooled) != 0)
    sizes = np.diff(np.concatenate([[-1], boundaries, [n_total - 1]]))
    tie_sum = float((sizes.astype(np.float64) ** 3 - sizes).sum())
    correction = 1.0 - tie_sum / (n_total**3 - n_total)
    if correction <= 0.0:
        raise DegenerateDataError("all values are identical; H is undefined")

    h = max(h / correction, 0.0)
    df = len(arrays) - 1
    return KruskalResult(h, df, chi_square_sf(h, df))


@dataclass(frozen=True)
class FeatureTest:
    """One Kruskal-Wallis row of a significance table; index is 1-based."""

    feature: str
    index: int
    h_statistic: float
    degrees_of_freedom: int
    p_value: float
    significant: bool


def _test_rows(X: np.ndarray, groups_idx: list[np.ndarray]) -> list[FeatureTest]:
    rows = []
    for j in range(N_FEATURES):
        result = kruskal_wallis([X[idx, j] for idx in groups_idx])
        rows.append(
            FeatureTest(
                FEATURE_NAMES[j],
                j + 1,
                result.h_statistic,
                result.degrees_of_freedom,
                result.p_value,
                result.p_value < SIGNIFICANCE_LEVEL,
            )
        )
    return rows


def feature_significance_table(
    features: FeatureMatrix, grouping: str
) -> dict[str, list[FeatureTest]]:
    """Per-feature Kruskal-Wallis tables under the requested grouping.

    by_label compares normal vs dysphagic over all rows and returns
    {"label": table}. by_consistency_within_label compares consistencies
    separately inside each label and returns one table per label. Every
    group must have at least 2 members.
    """
    if grouping not in GROUPINGS:
        raise ParameterError(f"grouping must be one of {GROUPINGS}")

    if grouping == "by_label":
        groups_idx = []
        for label in LABELS:
            idx = np.flatnonzero(features.labels == label)
            if idx.size < 2:
                raise GroupingError(f"group {label!r} has fewer than 2 members")
            groups_idx.append(idx)
        return {"label": _test_rows(features.X, groups_idx)}

    tables = {}
    for label in LABELS:
        in_label = np.flatnonzero(features.labels == label)
        if in_label.size == 0:
            raise GroupingError(f"group {label!r} is empty")
        present = [
            c for c in CONSISTENCIES if np.any(features.consistencies[in_label] == c)
        ]
        if len(present) < 2:
            raise GroupingError(
                f"label {label!r} has fewer than 2 consistency groups"
            )
        groups_idx = []
        for c in present:
            idx = in_label[features.consistencies[in_label] == c]
            if idx.size < 2:
                raise GroupingError(
                    f"group {label!r}/{c!r} has fewer than 2 members"
                )
            groups_idx.append(idx)
        tables[label] = _test_rows(features.X, groups_idx)
    return tables


def write_significance_csv(rows: list[FeatureTest], path) -> Path:
    """Write a significance table as CSV: feature,index,H,df,p,significant."""
    lines = ["feature,index,H,df,p,significant"]
    for r in rows:
        lines.append(
            f"{r.feature},{r.index},{r.h_statistic:.9g},{r.degrees_of_freedom},"
            f"{r.p_value:.9g},{'true' if r.significant else 'false'}"
        )
    return atomic_write_text(path, "\n".join(lines) + "\n")
