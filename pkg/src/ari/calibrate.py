"""Threshold calibration from reduced/full disagreements.

Calibration replays a labeled held-out split through both backends and
keeps every element where the two argmax answers differ. The margins the
reduced model showed on those flipped elements bound how confident a
wrong-looking answer can be, so a threshold chosen from them separates
safe acceptances from inputs that need the full model.

Two policies:

* max-margin: the largest disagreement margin observed. Replaying the
  calibration split through the cascade then matches the full model on
  every element, the zero-loss setting.
* percentile(p): the nearest-rank p-th percentile of the disagreement
  margins, the smallest observed margin with at least p percent of
  samples at or below it. Cheaper, and the few disagreements above the
  threshold are the quantified residual risk.

No disagreements at all means the reduced model is already faithful and
the threshold collapses to zero, accepting everything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .cascade import margins_of
from .mlp import Backend, MlpModel, forward_batch

__all__ = [
    "MarginSample",
    "MaxMargin",
    "Percentile",
    "ThresholdPolicy",
    "CalibrationResult",
    "parse_policy",
    "collect_disagreements",
    "nearest_rank",
    "threshold",
    "fallback_fraction",
    "residual_risk",
    "margin_histogram",
]


@dataclass(frozen=True)
class MarginSample:
    """One calibration element whose reduced and full answers differ."""

    element_id: int
    margin_reduced: float
    margin_full: float
    class_reduced: int
    class_full: int

    def __post_init__(self) -> None:
        if self.class_reduced == self.class_full:
            raise ValueError("a margin sample must record a disagreement")
        if self.margin_reduced < 0 or self.margin_full < 0:
            raise ValueError("margins are non-negative by construction")


@dataclass(frozen=True)
class MaxMargin:
    """Cover every observed disagreement."""

    @property
    def label(self) -> str:
        return "mmax"


@dataclass(frozen=True)
class Percentile:
    """Cover the lowest p percent of observed disagreement margins."""

    p: float

    def __post_init__(self) -> None:
        if not 0 < self.p <= 100:
            raise ValueError(f"percentile must be in (0, 100], got {self.p}")

    @property
    def label(self) -> str:
        text = f"{self.p:g}"
        return f"p{text}"


ThresholdPolicy = Union[MaxMargin, Percentile]


def parse_policy(text: str) -> ThresholdPolicy:
    """Parse a policy label: 'mmax', or 'p<percentile>' such as 'p99'."""
    t = text.strip().lower()
    if t == "mmax":
        return MaxMargin()
    if t.startswith("p"):
        try:
            return Percentile(float(t[1:]))
        except ValueError as exc:
            raise ValueError(f"bad policy {text!r}") from exc
    raise ValueError(f"bad policy {text!r}: expected 'mmax' or 'p<percent>'")


@dataclass(frozen=True)
class CalibrationResult:
    """A chosen threshold plus the order statistics behind it."""

    policy: ThresholdPolicy
    threshold: float
    m_max: float
    m_99: float
    m_95: float
    sample_count: int
    uncovered_count: int

    def __post_init__(self) -> None:
        if not self.m_95 <= self.m_99 <= self.m_max:
            raise ValueError("percentiles must be ordered: m_95 <= m_99 <= m_max")
        if not 0 <= self.uncovered_count <= max(self.sample_count, 0):
            raise ValueError("uncovered_count out of range")


def collect_disagreements(
    model: MlpModel,
    dataset,
    reduced: Backend,
    full: Backend,
) -> list[MarginSample]:
    """Replay a dataset through both backends, keep the argmax flips.

    Element ids are row indices into the dataset, so every sample can be
    traced back to its input.
    """
    x = np.asarray(dataset.inputs, dtype=np.float64)
    if x.shape[0] == 0:
        return []
    scores_r = forward_batch(model, x, reduced)
    scores_f = forward_batch(model, x, full)
    pred_r = scores_r.argmax(axis=1)
    pred_f = scores_f.argmax(axis=1)
    m_r = margins_of(scores_r)
    m_f = margins_of(scores_f)
    flips = np.flatnonzero(pred_r != pred_f)
    return [
        MarginSample(
            element_id=int(i),
            margin_reduced=float(m_r[i]),
            margin_full=float(m_f[i]),
            class_reduced=int(pred_r[i]),
            class_full=int(pred_f[i]),
        )
        for i in flips
    ]


def nearest_rank(sorted_values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile of ascending values.

    The smallest element with at least p percent of the sample at or
    below it, i.e. the value at 1-indexed rank ceil(p/100 * n).
    """
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty sample")
    rank = max(1, math.ceil(p / 100.0 * n))
    return float(sorted_values[rank - 1])


def threshold(
    samples: Sequence[MarginSample], policy: ThresholdPolicy
) -> CalibrationResult:
    """Choose a threshold from disagreement margins under a policy.

    An empty sample list collapses everything to zero: the reduced model
    never disagreed, so nothing needs covering.
    """
    margins = sorted(s.margin_reduced for s in samples)
    n = len(margins)
    if n == 0:
        m_max = m_99 = m_95 = 0.0
    else:
        m_max = margins[-1]
        m_99 = nearest_rank(margins, 99)
        m_95 = nearest_rank(margins, 95)
    if isinstance(policy, MaxMargin):
        t = m_max
    elif isinstance(policy, Percentile):
        t = nearest_rank(margins, policy.p) if n else 0.0
    else:
        raise TypeError(f"unknown policy {policy!r}")
    uncovered = sum(1 for m in margins if m > t)
    return CalibrationResult(
        policy=policy,
        threshold=t,
        m_max=m_max,
        m_99=m_99,
        m_95=m_95,
        sample_count=n,
        uncovered_count=uncovered,
    )


def fallback_fraction(
    model: MlpModel, dataset, reduced: Backend, thresh: float
) -> float:
    """Fraction of the dataset the cascade would send to the full model.

    Counts elements whose reduced margin is at or below the threshold;
    the same strict comparison the cascade itself uses.
    """
    x = np.asarray(dataset.inputs, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("empty dataset")
    margins = margins_of(forward_batch(model, x, reduced))
    return float(np.mean(margins <= thresh))


def residual_risk(
    samples: Sequence[MarginSample], thresh: float, dataset_size: int
) -> tuple[int, float]:
    """Disagreements a threshold leaves uncovered, count and loss bound.

    Returns ``(uncovered, worst_case_loss)``: the number of calibration
    disagreements whose margin exceeds the threshold, and that count over
    the dataset size, the worst-case accuracy the cascade can give up
    versus always running the full model.
    """
    if dataset_size < 1:
        raise ValueError(f"dataset_size must be >= 1, got {dataset_size}")
    if len(samples) > dataset_size:
        raise ValueError("more samples than dataset elements")
    uncovered = sum(1 for s in samples if s.margin_reduced > thresh)
    return uncovered, uncovered / dataset_size


def margin_histogram(
    margins: Sequence[float], bin_count: int = 20
) -> dict[str, list[float]]:
    """Fixed-width histogram of margins for reports.

    Density is the element count in each interval divided by the interval
    width. Empty input yields empty lists.
    """
    m = np.asarray(list(margins), dtype=np.float64)
    if m.size == 0:
        return {"bin_edges": [], "counts": [], "density": []}
    hi = float(m.max())
    if hi <= 0.0:
        hi = 1.0
    counts, edges = np.histogram(m, bins=bin_count, range=(0.0, hi))
    width = edges[1] - edges[0]
    return {
        "bin_edges": [float(e) for e in edges],
        "counts": [int(c) for c in counts],
        "density": [float(c / width) for c in counts],
    }
