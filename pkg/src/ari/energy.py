"""Energy accounting for the two-level cascade.

The expected per-inference cost of the cascade is

    e_ari = e_reduced + fraction_full * e_full

because every input pays for the reduced pass and the fallback fraction
additionally pays for the full pass. Relative savings against always
running the full model is

    savings = (1 - fraction_full) - e_reduced / e_full

which equals 1 - e_ari / e_full. Savings fall as either the fallback
fraction or the relative cost of the reduced pass grows, so a precision
sweep typically peaks strictly inside the range: very high precision
barely costs less than the full model, very low precision falls back too
often.

Costs come from an :class:`EnergyProfile`, a per-level energy table bound
to one backend family. The built-in tables are 45 nm synthesis estimates
for a reference fully connected classifier; they also carry area or
latency figures as metadata. Profiles are per-topology, so applying one
to a different network is allowed but flagged in reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .calibrate import (
    ThresholdPolicy,
    collect_disagreements,
    threshold,
)
from .cascade import AriConfig, margins_of
from .mlp import (
    Backend,
    FloatBackend,
    FULL_FLOAT,
    FULL_STOCHASTIC,
    MlpModel,
    StochasticBackend,
    forward_batch,
)
from .qfloat import QFormat

__all__ = [
    "EnergyProfile",
    "SavingsReport",
    "e_ari",
    "savings",
    "default_profile",
    "load_profile",
    "backend_for",
    "check_cascade_ordering",
    "sweep_report",
    "FULL_LEVELS",
]

PROFILE_SCHEMA_VERSION = 1

FULL_LEVELS = {"float": 16, "stochastic": 4096}

_DEFAULT_FLOAT_ENERGY = {16: 0.70, 14: 0.57, 12: 0.46, 10: 0.36, 8: 0.25}
_DEFAULT_FLOAT_AREA = {16: 0.41, 14: 0.34, 12: 0.28, 10: 0.21, 8: 0.14}
_DEFAULT_SC_ENERGY = {4096: 2.15, 2048: 1.08, 1024: 0.54, 512: 0.27, 256: 0.14, 128: 0.07}
_DEFAULT_SC_LATENCY = {4096: 4.10, 2048: 2.05, 1024: 1.03, 512: 0.52, 256: 0.26, 128: 0.13}


@dataclass(frozen=True)
class EnergyProfile:
    """Per-inference energy by precision level for one backend family.

    Levels are format widths for the float family and sequence lengths
    for the stochastic one; energies are microjoules. The family's full
    level must be present since every cascade cost is relative to it.
    """

    backend_kind: str
    energy_uj: Mapping[int, float]
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.backend_kind not in FULL_LEVELS:
            raise ValueError(
                f"backend_kind must be one of {sorted(FULL_LEVELS)}, "
                f"got {self.backend_kind!r}"
            )
        entries = {int(k): float(v) for k, v in dict(self.energy_uj).items()}
        if not entries:
            raise ValueError("profile has no energy entries")
        for level, e in entries.items():
            if not np.isfinite(e) or e <= 0:
                raise ValueError(f"energy for level {level} must be > 0, got {e}")
            backend_for(self.backend_kind, level)  # validates the level itself
        full = FULL_LEVELS[self.backend_kind]
        if full not in entries:
            raise ValueError(f"profile lacks the full level {full}")
        object.__setattr__(self, "energy_uj", entries)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def full_level(self) -> int:
        return FULL_LEVELS[self.backend_kind]

    @property
    def full_energy(self) -> float:
        return self.energy_uj[self.full_level]

    def energy_at(self, level: int) -> float:
        try:
            return self.energy_uj[int(level)]
        except KeyError:
            raise KeyError(
                f"profile has no level {level}; available: "
                f"{sorted(self.energy_uj)}"
            ) from None

    def as_dict(self) -> dict:
        return {
            "schema_version": PROFILE_SCHEMA_VERSION,
            "backend_kind": self.backend_kind,
            "energy_uj": {str(k): v for k, v in sorted(self.energy_uj.items())},
            "metadata": dict(self.metadata),
        }


def default_profile(backend_kind: str) -> EnergyProfile:
    """Built-in 45 nm synthesis table for the given backend family."""
    if backend_kind == "float":
        return EnergyProfile(
            "float",
            dict(_DEFAULT_FLOAT_ENERGY),
            {
                "area_mm2": {str(k): v for k, v in _DEFAULT_FLOAT_AREA.items()},
                "topology": [784, 1024, 512, 256, 256, 10],
                "source": "45 nm synthesis estimates, reference MLP",
            },
        )
    if backend_kind == "stochastic":
        return EnergyProfile(
            "stochastic",
            dict(_DEFAULT_SC_ENERGY),
            {
                "latency_us": {str(k): v for k, v in _DEFAULT_SC_LATENCY.items()},
                "topology": [784, 100, 200, 10],
                "source": "45 nm synthesis estimates, reference MLP",
            },
        )
    raise ValueError(f"unknown backend_kind {backend_kind!r}")


def load_profile(path) -> EnergyProfile:
    """Read a profile JSON file (see ``EnergyProfile.as_dict`` for layout)."""
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    try:
        version = raw.get("schema_version", PROFILE_SCHEMA_VERSION)
        if version != PROFILE_SCHEMA_VERSION:
            raise ValueError(f"unsupported profile schema_version {version}")
        return EnergyProfile(
            backend_kind=raw["backend_kind"],
            energy_uj={int(k): float(v) for k, v in raw["energy_uj"].items()},
            metadata=raw.get("metadata", {}),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValueError(f"{path}: malformed energy profile: {exc}") from exc


def backend_for(backend_kind: str, level: int) -> Backend:
    """Backend instance for a profile level."""
    level = int(level)
    if backend_kind == "float":
        return FloatBackend(QFormat.from_width(level))
    if backend_kind == "stochastic":
        return StochasticBackend(level)
    raise ValueError(f"unknown backend_kind {backend_kind!r}")


def e_ari(e_reduced: float, e_full: float, fraction_full: float) -> float:
    """Expected cascade energy per inference."""
    e_reduced = float(e_reduced)
    e_full = float(e_full)
    fraction_full = float(fraction_full)
    if not np.isfinite(e_reduced) or e_reduced <= 0:
        raise ValueError(f"e_reduced must be > 0, got {e_reduced}")
    if not np.isfinite(e_full) or e_full <= 0:
        raise ValueError(f"e_full must be > 0, got {e_full}")
    if not 0.0 <= fraction_full <= 1.0:
        raise ValueError(f"fraction_full must be in [0, 1], got {fraction_full}")
    return e_reduced + fraction_full * e_full


def savings(e_reduced: float, e_full: float, fraction_full: float) -> float:
    """Relative energy saved versus always running the full model.

    Negative when the reduced level is too expensive or falls back too
    often to pay for itself.
    """
    cost = e_ari(e_reduced, e_full, fraction_full)  # validates arguments
    del cost
    return (1.0 - float(fraction_full)) - float(e_reduced) / float(e_full)


def check_cascade_ordering(cfg: AriConfig, profile: EnergyProfile) -> None:
    """Reject cascades whose reduced level is not cheaper under a profile."""
    family = "float" if isinstance(cfg.reduced, FloatBackend) else "stochastic"
    if family != profile.backend_kind:
        raise ValueError(
            f"profile is for {profile.backend_kind} backends, cascade uses {family}"
        )
    e_r = profile.energy_at(cfg.reduced.level)
    e_f = profile.energy_at(cfg.full.level)
    if not e_r < e_f:
        raise ValueError(
            f"reduced level {cfg.reduced.level} ({e_r} uJ) is not cheaper than "
            f"full level {cfg.full.level} ({e_f} uJ)"
        )


@dataclass(frozen=True)
class SavingsReport:
    """One sweep row: a precision level under one threshold policy."""

    level: int
    policy_label: str
    threshold: float
    e_reduced: float
    e_full: float
    fraction_full: float
    e_ari: float
    savings: float
    is_best: bool = False


def sweep_report(
    model: MlpModel,
    calib_dataset,
    levels: Sequence[int],
    policies: Sequence[ThresholdPolicy],
    profile: EnergyProfile,
    eval_dataset=None,
    backend_factory=None,
) -> list[SavingsReport]:
    """Calibrate and cost every requested level under every policy.

    Thresholds come from the calibration dataset; the fallback fraction is
    measured on ``eval_dataset`` when given, else on the calibration set.
    ``backend_factory(kind, level)`` overrides backend construction, e.g.
    to pin stochastic seeds; the default is :func:`backend_for`. The
    savings-maximizing row per policy is flagged ``is_best`` (first one on
    an exact tie).
    """
    if not levels:
        raise ValueError("no levels requested")
    if not policies:
        raise ValueError("no policies requested")
    kind = profile.backend_kind
    make_backend = backend_factory if backend_factory is not None else backend_for
    full_backend = make_backend(kind, profile.full_level)
    e_full = profile.full_energy
    measure_dataset = eval_dataset if eval_dataset is not None else calib_dataset

    rows: list[SavingsReport] = []
    for level in levels:
        e_reduced = profile.energy_at(level)
        reduced = make_backend(kind, level)
        if int(level) == profile.full_level:
            samples = []  # a backend never disagrees with itself
        else:
            samples = collect_disagreements(model, calib_dataset, reduced, full_backend)
        eval_margins = margins_of(
            forward_batch(
                model,
                np.asarray(measure_dataset.inputs, dtype=np.float64),
                reduced,
            )
        )
        for policy in policies:
            result = threshold(samples, policy)
            frac = float(np.mean(eval_margins <= result.threshold))
            rows.append(
                SavingsReport(
                    level=int(level),
                    policy_label=policy.label,
                    threshold=result.threshold,
                    e_reduced=e_reduced,
                    e_full=e_full,
                    fraction_full=frac,
                    e_ari=e_ari(e_reduced, e_full, frac),
                    savings=savings(e_reduced, e_full, frac),
                    is_best=False,
                )
            )

    for policy in policies:
        label = policy.label
        group = [i for i, r in enumerate(rows) if r.policy_label == label]
        best = max(group, key=lambda i: rows[i].savings)
        rows[best] = replace(rows[best], is_best=True)
    return rows
