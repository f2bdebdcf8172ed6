"""Margin-gated two-level inference cascade.

Every input runs the cheap reduced backend first. The gap between the two
highest scores, the margin, measures how sure the reduced model is: a
reduced-precision run can only change the winner when precision loss
pushes the runner-up past the leader, so a comfortably large margin means
the full model would agree. Inputs whose margin clears a calibrated
threshold keep the reduced answer; the rest fall back to the full backend
and return its argmax.

With the threshold set to the largest margin any reduced/full
disagreement showed on a calibration set, replaying that set through the
cascade reproduces the full model's answer on every element: accepted
elements all sit above every disagreement margin ever observed, so they
agree by construction, and fallbacks are answered by the full model
itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import Backend, FloatBackend, MlpModel, ScoreVector, StochasticBackend, forward_batch

__all__ = [
    "margin",
    "margins_of",
    "flip_magnitudes",
    "AriConfig",
    "AriResult",
    "BatchStats",
    "infer",
    "batch_infer",
]


def margin(s) -> float:
    """Difference between the two highest scores, >= 0, 0 on an exact tie.

    Accepts a ScoreVector or any score array of at least two classes. The
    winner on a tie is the lowest class index, which matches argmax.
    """
    scores = np.asarray(getattr(s, "scores", s), dtype=np.float64)
    if scores.ndim != 1 or scores.shape[0] < 2:
        raise ValueError(f"need a vector of >= 2 scores, got shape {scores.shape}")
    top2 = np.partition(scores, -2)[-2:]
    return float(top2[1] - top2[0])


def margins_of(scores: np.ndarray) -> np.ndarray:
    """Row-wise :func:`margin` for an (n, n_classes) score matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ValueError(f"need an (n, >=2) score matrix, got shape {scores.shape}")
    part = np.partition(scores, -2, axis=1)
    return part[:, -1] - part[:, -2]


def flip_magnitudes(full_scores, reduced_scores) -> tuple[float, float]:
    """Score movements behind an argmax flip.

    For a (full, reduced) score pair whose winners differ, returns
    ``(mag_winner, mag_loser)``: how far the full model's winner dropped
    and how far the usurper rose. Their sum always equals
    ``margin(full) + margin(reduced)`` computed over the two classes
    involved, which ties observed margins to the size of the underlying
    perturbation.
    """
    f = np.asarray(getattr(full_scores, "scores", full_scores), dtype=np.float64)
    r = np.asarray(getattr(reduced_scores, "scores", reduced_scores), dtype=np.float64)
    if f.shape != r.shape or f.ndim != 1 or f.shape[0] < 2:
        raise ValueError("need two equal-length score vectors of >= 2 classes")
    a = int(f.argmax())
    b = int(r.argmax())
    if a == b:
        raise ValueError("no flip: both backends pick the same class")
    return float(f[a] - r[a]), float(r[b] - f[b])


@dataclass(frozen=True)
class AriConfig:
    """Cascade wiring: reduced backend, full backend, margin threshold.

    The two backends must come from one family with the reduced level
    strictly below the full level, which makes the reduced run strictly
    cheaper under any cost profile that grows with precision. The
    threshold is compared strictly: margins above it accept the reduced
    answer, margins at or below it fall back.
    """

    reduced: Backend
    full: Backend
    threshold: float

    def __post_init__(self) -> None:
        r, f = self.reduced, self.full
        same_family = (
            isinstance(r, FloatBackend)
            and isinstance(f, FloatBackend)
            or isinstance(r, StochasticBackend)
            and isinstance(f, StochasticBackend)
        )
        if not same_family:
            raise ValueError(
                f"backends must share a family, got {r!r} and {f!r}"
            )
        if r.level >= f.level:
            raise ValueError(
                f"reduced backend must sit strictly below the full one, "
                f"got {r.level} vs {f.level}"
            )
        t = float(self.threshold)
        if np.isnan(t) or t < 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        object.__setattr__(self, "threshold", t)


@dataclass(frozen=True)
class AriResult:
    """Outcome for one input. Full scores exist exactly when it fell back."""

    predicted_class: int
    margin_reduced: float
    fell_back: bool
    scores_reduced: ScoreVector
    scores_full: ScoreVector | None = None

    def __post_init__(self) -> None:
        if self.fell_back != (self.scores_full is not None):
            raise ValueError("scores_full must be present exactly on fallback")


@dataclass(frozen=True)
class BatchStats:
    """Aggregate cascade behavior over one batch."""

    total: int
    fallbacks: int
    fraction_full: float
    disagreement_with_full: int | None = None

    def __post_init__(self) -> None:
        if self.total < 1:
            raise ValueError("empty batch")
        if not 0 <= self.fallbacks <= self.total:
            raise ValueError(f"fallbacks {self.fallbacks} out of [0, {self.total}]")
        if self.fraction_full != self.fallbacks / self.total:
            raise ValueError("fraction_full must equal fallbacks / total")


def infer(x: np.ndarray, model: MlpModel, cfg: AriConfig) -> AriResult:
    """Classify one unit-interval input through the cascade."""
    results, _ = batch_infer(np.asarray(x, dtype=np.float64)[None, :], model, cfg)
    return results[0]


def batch_infer(
    inputs: np.ndarray,
    model: MlpModel,
    cfg: AriConfig,
    audit: bool = False,
) -> tuple[list[AriResult], BatchStats]:
    """Classify a batch, running the full backend only where needed.

    With ``audit=True`` the full backend runs on every element anyway and
    the stats count how often the two backends' raw argmax answers
    disagree, which is the quantity a calibration threshold has to cover.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    reduced_scores = forward_batch(model, x, cfg.reduced)
    reduced_pred = reduced_scores.argmax(axis=1)
    margins = margins_of(reduced_scores)
    fell_back = margins <= cfg.threshold

    disagreements: int | None = None
    if audit:
        full_all = forward_batch(model, x, cfg.full)
        disagreements = int(np.sum(full_all.argmax(axis=1) != reduced_pred))
        full_scores = full_all[fell_back]
    elif fell_back.any():
        full_scores = forward_batch(model, x[fell_back], cfg.full)
    else:
        full_scores = np.empty((0, reduced_scores.shape[1]))

    full_pred = full_scores.argmax(axis=1) if full_scores.shape[0] else np.empty(0, int)

    results: list[AriResult] = []
    k = 0
    for i in range(x.shape[0]):
        if fell_back[i]:
            sv_full = ScoreVector(full_scores[k], cfg.full)
            results.append(
                AriResult(
                    predicted_class=int(full_pred[k]),
                    margin_reduced=float(margins[i]),
                    fell_back=True,
                    scores_reduced=ScoreVector(reduced_scores[i], cfg.reduced),
                    scores_full=sv_full,
                )
            )
            k += 1
        else:
            results.append(
                AriResult(
                    predicted_class=int(reduced_pred[i]),
                    margin_reduced=float(margins[i]),
                    fell_back=False,
                    scores_reduced=ScoreVector(reduced_scores[i], cfg.reduced),
                )
            )
    n_fb = int(fell_back.sum())
    stats = BatchStats(
        total=x.shape[0],
        fallbacks=n_fb,
        fraction_full=n_fb / x.shape[0],
        disagreement_with_full=disagreements,
    )
    return results, stats
