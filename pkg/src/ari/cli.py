"""Command line harness for the adaptive-resolution pipeline.

Five subcommands walk the pipeline over one dataset and one model file:

    train      fit a model on the train split; model.bin + train_log.json
    calibrate  disagreement margins and thresholds per level; calibration.json
    eval       fallback fraction and accuracies per level/policy; evaluation.csv
    energy     cascade cost and savings under a profile; energy.csv
    sc-bench   stochastic multiplier error sweep; sc_bench.csv

Runs are configured by a JSON object (--config) whose keys are the long
flag names with underscores; explicit flags override file values. Outputs
land in --out-dir, every file is written atomically (temp + rename), and
every CSV/JSON payload carries schema_version so parsers can pin the
layout. Unless --no-figures is given, each report also renders its figures
as PNG files next to the tabular output.

The dataset, split fractions, and seed together determine the exact
train/calibration/test partition, so separate invocations that share a
config see identical splits and every emitted number can be recomputed
from the persisted inputs alone.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import os
import sys
import tempfile
import zlib
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .calibrate import (
    collect_disagreements,
    margin_histogram,
    parse_policy,
    residual_risk,
    threshold,
)
from .cascade import margins_of
from .data import Dataset, load_cifar10, load_idx, split, synth_blobs
from .energy import EnergyProfile, default_profile, load_profile, sweep_report
from .figures import (
    accuracy_drop_figure,
    fallback_curve_figure,
    margin_histogram_figure,
    savings_curve_figure,
    sc_error_figure,
    training_loss_figure,
)
from .mlp import (
    Backend,
    FloatBackend,
    StochasticBackend,
    Topology,
    accuracy,
    forward_batch,
    load_model,
    save_model,
    train,
)
from .qfloat import FORMATS
from .scsim import (
    DEFAULT_SC_LFSR_WIDTH,
    DEFAULT_SC_SEED,
    MAXIMAL_TAPS,
    LfsrConfig,
    decode_bipolar,
    default_lfsr_width,
    encode_bipolar,
    xnor_mul,
)

__all__ = ["main", "UsageError", "SCHEMA_VERSION"]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EVAL_CSV_HEADER = [
    "schema_version",
    "split",
    "level",
    "backend",
    "policy",
    "threshold",
    "fraction_full",
    "accuracy_ari",
    "accuracy_full",
    "accuracy_reduced",
    "accuracy_drop",
    "count",
]

ENERGY_CSV_HEADER = [
    "schema_version",
    "level",
    "backend",
    "policy",
    "threshold",
    "e_reduced_uj",
    "e_full_uj",
    "fraction_full",
    "e_ari_uj",
    "savings_fraction",
    "is_best",
    "note",
]

SC_BENCH_CSV_HEADER = [
    "schema_version",
    "length",
    "lfsr_width",
    "pairs",
    "median_abs_error",
    "p95_abs_error",
    "within_bound_fraction",
    "error_bound",
]

_FLOAT_SWEEP = [14, 12, 10, 8]
_SC_SWEEP = [2048, 1024, 512, 256, 128]

# Config schema: one entry per key, shared by the JSON file and the flags.
_DEFAULTS: dict[str, Any] = {
    "dataset": "blobs",
    "images": None,
    "labels": None,
    "cifar_batches": [],
    "blob_classes": 10,
    "blob_dims": 16,
    "blob_per_class": 120,
    "blob_separation": 6.0,
    "topology": None,
    "backend": "float",
    "sweep": None,
    "policies": ["mmax", "p99", "p95"],
    "profile": None,
    "split_fractions": [0.81, 0.09, 0.10],
    "seed": 0,
    "epochs": 5,
    "learning_rate": 0.05,
    "batch_size": 32,
    "weight_clip": None,
    "out_dir": "runs/ari",
    "model": None,
    "figures": True,
    "sc_seed": DEFAULT_SC_SEED,
    "lfsr_width": DEFAULT_SC_LFSR_WIDTH,
    "measure_split": "test",
    "bench_lengths": [64, 128, 256, 512, 1024, 2048, 4096],
    "bench_pairs": 1000,
}


class UsageError(Exception):
    """Bad flags or config; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); keep codes honest
        raise UsageError(message)


def _parse_ints(value) -> list[int]:
    if isinstance(value, str):
        parts: Sequence[Any] = [p for p in value.replace(",", " ").split() if p]
    elif isinstance(value, (list, tuple)):
        parts = value
    else:
        raise UsageError(f"expected a comma list or JSON array, got {value!r}")
    try:
        return [int(p) for p in parts]
    except (TypeError, ValueError):
        raise UsageError(f"not an integer list: {value!r}") from None


def _parse_floats(value) -> list[float]:
    if isinstance(value, str):
        parts: Sequence[Any] = [p for p in value.replace(",", " ").split() if p]
    elif isinstance(value, (list, tuple)):
        parts = value
    else:
        raise UsageError(f"expected a comma list or JSON array, got {value!r}")
    try:
        return [float(p) for p in parts]
    except (TypeError, ValueError):
        raise UsageError(f"not a number list: {value!r}") from None


def _parse_names(value) -> list[str]:
    if isinstance(value, str):
        return [p for p in value.replace(",", " ").split() if p]
    if isinstance(value, (list, tuple)):
        return [str(p) for p in value]
    raise UsageError(f"expected a comma list or JSON array, got {value!r}")


def _load_config_file(path: str) -> dict[str, Any]:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p}: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config file {p} must hold a JSON object")
    unknown = sorted(set(obj) - set(_DEFAULTS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return obj


def _merge(args: argparse.Namespace) -> dict[str, Any]:
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_load_config_file(args.config))
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "no_figures", False):
        cfg["figures"] = False
    return cfg


def _check_level(family: str, level: int) -> int:
    if family == "float":
        if level not in FORMATS:
            raise UsageError(
                f"float width {level} unsupported; choose from {sorted(FORMATS)}"
            )
    else:
        if level < 64 or level > 4096 or level & (level - 1):
            raise UsageError(
                f"sequence length {level} unsupported; need a power of two in [64, 4096]"
            )
    return level


def _validate(cfg: dict[str, Any], command: str) -> dict[str, Any]:
    """Normalize the merged config in place; UsageError on any bad value."""
    if cfg["dataset"] not in ("blobs", "idx", "cifar10"):
        raise UsageError(f"unknown dataset kind {cfg['dataset']!r}")
    if cfg["backend"] not in ("float", "stochastic"):
        raise UsageError(f"unknown backend family {cfg['backend']!r}")

    if cfg["dataset"] == "idx":
        for key in ("images", "labels"):
            if not cfg[key]:
                raise UsageError(f"dataset 'idx' needs --{key}")
            if not Path(cfg[key]).is_file():
                raise UsageError(f"{key} file not found: {cfg[key]}")
    elif cfg["dataset"] == "cifar10":
        batches = cfg["cifar_batches"]
        if not batches:
            raise UsageError("dataset 'cifar10' needs at least one --cifar-batch")
        for p in batches:
            if not Path(p).is_file():
                raise UsageError(f"batch file not found: {p}")
    else:
        if cfg["blob_classes"] < 2:
            raise UsageError("blob_classes must be >= 2")
        if cfg["blob_dims"] < 1 or cfg["blob_per_class"] < 1:
            raise UsageError("blob_dims and blob_per_class must be >= 1")
        if not cfg["blob_separation"] > 0:
            raise UsageError("blob_separation must be > 0")

    fractions = _parse_floats(cfg["split_fractions"])
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError(
            "split_fractions must be three non-negative numbers summing to 1"
        )
    cfg["split_fractions"] = tuple(fractions)

    family = cfg["backend"]
    sweep = cfg["sweep"]
    if sweep is None:
        sweep = _FLOAT_SWEEP if family == "float" else _SC_SWEEP
    levels = [_check_level(family, lv) for lv in _parse_ints(sweep)]
    if not levels:
        raise UsageError("sweep must name at least one level")
    cfg["sweep"] = levels

    policies = _parse_names(cfg["policies"])
    if not policies:
        raise UsageError("at least one threshold policy required")
    for name in policies:
        try:
            parse_policy(name)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    cfg["policies"] = policies

    if cfg["epochs"] < 1:
        raise UsageError("epochs must be >= 1")
    if cfg["batch_size"] < 1:
        raise UsageError("batch_size must be >= 1")
    if not cfg["learning_rate"] > 0:
        raise UsageError("learning_rate must be > 0")
    if cfg["weight_clip"] is not None and not cfg["weight_clip"] > 0:
        raise UsageError("weight_clip must be > 0 when set")
    if cfg["lfsr_width"] not in MAXIMAL_TAPS:
        raise UsageError(f"lfsr_width must be one of {sorted(MAXIMAL_TAPS)}")
    if cfg["topology"] is not None:
        sizes = _parse_ints(cfg["topology"])
        if len(sizes) < 2 or min(sizes) < 1:
            raise UsageError("topology needs at least two positive layer sizes")
        cfg["topology"] = sizes
    if cfg["measure_split"] not in ("calibration", "test"):
        raise UsageError("measure_split must be 'calibration' or 'test'")

    bench_lengths = sorted(set(_parse_ints(cfg["bench_lengths"])))
    for length in bench_lengths:
        if length < 16 or length > 65536 or length & (length - 1):
            raise UsageError(
                f"bench length {length} unsupported; need a power of two in [16, 65536]"
            )
    if not bench_lengths:
        raise UsageError("bench_lengths must name at least one length")
    cfg["bench_lengths"] = bench_lengths
    if cfg["bench_pairs"] < 1:
        raise UsageError("bench_pairs must be >= 1")

    if cfg["profile"] is not None and not Path(cfg["profile"]).is_file():
        raise UsageError(f"profile file not found: {cfg['profile']}")

    out_dir = Path(cfg["out_dir"])
    cfg["out_dir"] = out_dir
    cfg["model"] = Path(cfg["model"]) if cfg["model"] else out_dir / "model.bin"
    if command in ("calibrate", "eval", "energy") and not cfg["model"].is_file():
        raise UsageError(f"model file not found: {cfg['model']} (run `ari train` first)")
    return cfg


def _resolve_dataset(cfg: Mapping[str, Any]) -> Dataset:
    kind = cfg["dataset"]
    if kind == "blobs":
        return synth_blobs(
            classes=cfg["blob_classes"],
            dims=cfg["blob_dims"],
            n_per_class=cfg["blob_per_class"],
            separation=cfg["blob_separation"],
            seed=cfg["seed"],
        )
    if kind == "idx":
        return load_idx(cfg["images"], cfg["labels"])
    return load_cifar10(cfg["cifar_batches"])


def _splits(cfg: Mapping[str, Any], dataset: Dataset) -> tuple[Dataset, Dataset, Dataset]:
    return split(dataset, cfg["split_fractions"], seed=cfg["seed"])


def _full_backend(cfg: Mapping[str, Any]) -> Backend:
    if cfg["backend"] == "float":
        return FloatBackend(FORMATS[16])
    return StochasticBackend(
        4096, master_seed=cfg["sc_seed"], lfsr_width=cfg["lfsr_width"]
    )


def _reduced_backend(cfg: Mapping[str, Any], level: int) -> Backend:
    if cfg["backend"] == "float":
        return FloatBackend(FORMATS[level])
    return StochasticBackend(
        level, master_seed=cfg["sc_seed"], lfsr_width=cfg["lfsr_width"]
    )


def _level_axis_name(cfg: Mapping[str, Any]) -> str:
    return "total width (bits)" if cfg["backend"] == "float" else "sequence length (ticks)"


def _resolve_profile(cfg: Mapping[str, Any]) -> EnergyProfile:
    if cfg["profile"] is None:
        return default_profile(cfg["backend"])
    try:
        profile = load_profile(cfg["profile"])
    except (OSError, ValueError) as exc:
        raise UsageError(f"profile {cfg['profile']}: {exc}") from None
    if profile.backend_kind != cfg["backend"]:
        raise UsageError(
            f"profile is for {profile.backend_kind!r} backends, run uses {cfg['backend']!r}"
        )
    return profile


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _write_json(path: Path, payload: Mapping[str, Any]) -> None:
    _atomic_write(path, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())
    log.info("wrote %s", path)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buf.getvalue().encode())
    log.info("wrote %s", path)


def _dataset_summary(
    cfg: Mapping[str, Any],
    dataset: Dataset,
    parts: tuple[Dataset, Dataset, Dataset],
) -> dict[str, Any]:
    train_ds, calib_ds, test_ds = parts
    return {
        "kind": cfg["dataset"],
        "n_elements": len(dataset),
        "n_features": dataset.n_features,
        "n_classes": dataset.n_classes,
        "split_sizes": {
            "train": len(train_ds),
            "calibration": len(calib_ds),
            "test": len(test_ds),
        },
    }


def cmd_train(cfg: dict[str, Any]) -> int:
    dataset = _resolve_dataset(cfg)
    parts = _splits(cfg, dataset)
    train_ds, _, test_ds = parts
    if len(train_ds) == 0:
        raise ValueError("train split is empty; raise the first split fraction")
    sizes = cfg["topology"] or [dataset.n_features, 64, 32, dataset.n_classes]
    topology = Topology(tuple(sizes))

    losses: list[float] = []
    model = train(
        train_ds,
        topology,
        epochs=cfg["epochs"],
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
        weight_clip=cfg["weight_clip"],
        epoch_callback=lambda _epoch, loss: losses.append(float(loss)),
    )
    model_path: Path = cfg["model"]
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, model_path)
    log.info("wrote %s", model_path)

    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "train",
        "dataset": _dataset_summary(cfg, dataset, parts),
        "topology": list(topology.sizes),
        "seed": cfg["seed"],
        "epochs": cfg["epochs"],
        "learning_rate": cfg["learning_rate"],
        "batch_size": cfg["batch_size"],
        "weight_clip": cfg["weight_clip"],
        "epoch_losses": losses,
        "train_accuracy": accuracy(model, train_ds),
        "test_accuracy": accuracy(model, test_ds) if len(test_ds) else None,
        "model_path": str(model_path),
        "model_crc32": f"{zlib.crc32(model_path.read_bytes()):08x}",
    }
    _write_json(cfg["out_dir"] / "train_log.json", payload)
    if cfg["figures"]:
        training_loss_figure(losses, cfg["out_dir"] / "loss_curve.png")
    return 0


def cmd_calibrate(cfg: dict[str, Any]) -> int:
    model = load_model(cfg["model"])
    dataset = _resolve_dataset(cfg)
    parts = _splits(cfg, dataset)
    calib_ds = parts[1]
    if len(calib_ds) == 0:
        raise ValueError("calibration split is empty; raise the second split fraction")
    full = _full_backend(cfg)
    policies = [parse_policy(name) for name in cfg["policies"]]

    levels_payload = []
    for level in cfg["sweep"]:
        reduced = _reduced_backend(cfg, level)
        if level == full.level:
            samples = []  # a backend never disagrees with itself
        else:
            samples = collect_disagreements(model, calib_ds, reduced, full)
        hist = margin_histogram([s.margin_reduced for s in samples])
        per_policy = {}
        stats = None
        for policy in policies:
            result = threshold(samples, policy)
            stats = result
            uncovered, worst_loss = residual_risk(
                samples, result.threshold, len(calib_ds)
            )
            per_policy[policy.label] = {
                "threshold": result.threshold,
                "uncovered_count": uncovered,
                "worst_case_loss": worst_loss,
            }
        levels_payload.append(
            {
                "level": level,
                "backend": reduced.label,
                "sample_count": stats.sample_count,
                "m_max": stats.m_max,
                "m_99": stats.m_99,
                "m_95": stats.m_95,
                "histogram": {
                    "bin_edges": np.asarray(hist["bin_edges"]).tolist(),
                    "counts": np.asarray(hist["counts"]).tolist(),
                    "density": np.asarray(hist["density"]).tolist(),
                },
                "policies": per_policy,
            }
        )
        if cfg["figures"]:
            marks = {label: p["threshold"] for label, p in per_policy.items()}
            margin_histogram_figure(
                hist,
                marks,
                f"disagreement margins, {reduced.label} vs {full.label}",
                cfg["out_dir"] / f"margins_{reduced.label}.png",
            )

    payload = {
        "schema_version": SCHEMA_VERSION,
        "command": "calibrate",
        "backend_family": cfg["backend"],
        "full_level": full.level,
        "split": "calibration",
        "dataset": _dataset_summary(cfg, dataset, parts),
        "seed": cfg["seed"],
        "levels": levels_payload,
    }
    _write_json(cfg["out_dir"] / "calibration.json", payload)
    return 0


def cmd_eval(cfg: dict[str, Any]) -> int:
    model = load_model(cfg["model"])
    dataset = _resolve_dataset(cfg)
    _, calib_ds, test_ds = _splits(cfg, dataset)
    if len(calib_ds) == 0:
        raise ValueError("calibration split is empty; raise the second split fraction")
    full = _full_backend(cfg)
    policies = [parse_policy(name) for name in cfg["policies"]]

    eval_splits = [("calibration", calib_ds)]
    if len(test_ds):
        eval_splits.append(("test", test_ds))
    curve_split = "test" if len(test_ds) else "calibration"

    # The full model's scores do not depend on the sweep level; run it once
    # per split up front.
    prepared = []
    for split_name, ds in eval_splits:
        x = np.asarray(ds.inputs, dtype=np.float64)
        labels = np.asarray(ds.labels)
        prepared.append((split_name, x, labels, forward_batch(model, x, full)))

    rows = []
    fallback_curve: dict[str, list] = {p.label: [] for p in policies}
    drop_curve: dict[str, list] = {p.label: [] for p in policies}
    for level in cfg["sweep"]:
        reduced = _reduced_backend(cfg, level)
        if level == full.level:
            samples = []
        else:
            samples = collect_disagreements(model, calib_ds, reduced, full)
        thresholds = {p.label: threshold(samples, p).threshold for p in policies}
        for split_name, x, labels, scores_f in prepared:
            scores_r = scores_f if level == full.level else forward_batch(model, x, reduced)
            preds_r = scores_r.argmax(axis=1)
            preds_f = scores_f.argmax(axis=1)
            margins = margins_of(scores_r)
            acc_full = float(np.mean(preds_f == labels))
            acc_reduced = float(np.mean(preds_r == labels))
            for policy in policies:
                t = thresholds[policy.label]
                mask = margins <= t
                ari_preds = np.where(mask, preds_f, preds_r)
                frac = float(np.mean(mask))
                acc_ari = float(np.mean(ari_preds == labels))
                drop = acc_full - acc_ari
                rows.append(
                    [
                        SCHEMA_VERSION,
                        split_name,
                        level,
                        reduced.label,
                        policy.label,
                        t,
                        frac,
                        acc_ari,
                        acc_full,
                        acc_reduced,
                        drop,
                        len(labels),
                    ]
                )
                if split_name == curve_split:
                    fallback_curve[policy.label].append((level, frac))
                    drop_curve[policy.label].append((level, drop))

    _write_csv(cfg["out_dir"] / "evaluation.csv", EVAL_CSV_HEADER, rows)
    if cfg["figures"]:
        level_name = _level_axis_name(cfg)
        fallback_curve_figure(
            {k: sorted(v) for k, v in fallback_curve.items()},
            level_name,
            cfg["out_dir"] / "fallback_fraction.png",
        )
        accuracy_drop_figure(
            {k: sorted(v) for k, v in drop_curve.items()},
            level_name,
            cfg["out_dir"] / "accuracy_drop.png",
        )
    return 0


def cmd_energy(cfg: dict[str, Any]) -> int:
    model = load_model(cfg["model"])
    dataset = _resolve_dataset(cfg)
    _, calib_ds, test_ds = _splits(cfg, dataset)
    if len(calib_ds) == 0:
        raise ValueError("calibration split is empty; raise the second split fraction")
    profile = _resolve_profile(cfg)
    for level in cfg["sweep"]:
        try:
            profile.energy_at(level)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    policies = [parse_policy(name) for name in cfg["policies"]]

    if cfg["measure_split"] == "test":
        if len(test_ds) == 0:
            raise UsageError("test split is empty; use --measure-split calibration")
        eval_ds = test_ds
    else:
        eval_ds = None  # fall back to the calibration split

    reports = sweep_report(
        model,
        calib_ds,
        cfg["sweep"],
        policies,
        profile,
        eval_dataset=eval_ds,
        backend_factory=lambda _kind, level: _reduced_backend(cfg, level),
    )

    note = ""
    meta_topology = profile.metadata.get("topology")
    if meta_topology is not None and list(meta_topology) != list(model.topology.sizes):
        note = "profile-topology-mismatch"
        log.warning(
            "profile topology %s differs from model topology %s; energies are "
            "per-inference constants for the profile's network",
            meta_topology,
            list(model.topology.sizes),
        )

    rows = [
        [
            SCHEMA_VERSION,
            r.level,
            _reduced_backend(cfg, r.level).label,
            r.policy_label,
            r.threshold,
            r.e_reduced,
            r.e_full,
            r.fraction_full,
            r.e_ari,
            r.savings,
            int(r.is_best),
            note,
        ]
        for r in reports
    ]
    _write_csv(cfg["out_dir"] / "energy.csv", ENERGY_CSV_HEADER, rows)
    if cfg["figures"]:
        curves: dict[str, list] = {}
        for r in reports:
            curves.setdefault(r.policy_label, []).append((r.level, r.savings))
        savings_curve_figure(
            {k: sorted(v) for k, v in curves.items()},
            _level_axis_name(cfg),
            cfg["out_dir"] / "savings_curve.png",
        )
    return 0


def cmd_sc_bench(cfg: dict[str, Any]) -> int:
    rng = np.random.default_rng(cfg["seed"])
    pairs = cfg["bench_pairs"]
    rows = []
    medians: list[float] = []
    p95s: list[float] = []
    for length in cfg["bench_lengths"]:
        width = default_lfsr_width(length)
        period = (1 << width) - 1
        errors = np.empty(pairs)
        for i in range(pairs):
            a, b = rng.uniform(-1.0, 1.0, size=2)
            seed_a = int(rng.integers(1, period + 1))
            seed_b = int(rng.integers(1, period + 1))
            while seed_b == seed_a:
                seed_b = int(rng.integers(1, period + 1))
            stream_a = encode_bipolar(a, length, LfsrConfig(width=width, seed=seed_a))
            stream_b = encode_bipolar(b, length, LfsrConfig(width=width, seed=seed_b))
            product = decode_bipolar(xnor_mul(stream_a, stream_b))
            errors[i] = abs(product - a * b)
        bound = 4.0 / float(np.sqrt(length))
        median = float(np.median(errors))
        p95 = float(np.quantile(errors, 0.95))
        within = float(np.mean(errors <= bound))
        rows.append([SCHEMA_VERSION, length, width, pairs, median, p95, within, bound])
        medians.append(median)
        p95s.append(p95)
        log.info(
            "length %d: median %.4f, p95 %.4f, within-bound %.3f", length, median, p95, within
        )

    _write_csv(cfg["out_dir"] / "sc_bench.csv", SC_BENCH_CSV_HEADER, rows)
    if cfg["figures"]:
        sc_error_figure(
            cfg["bench_lengths"], medians, p95s, cfg["out_dir"] / "sc_mul_error.png"
        )
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="ari", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run configuration")
    g.add_argument("--config", metavar="JSON", help="config file; flags override its keys")
    g.add_argument("--out-dir", dest="out_dir", help="output directory (default runs/ari)")
    g.add_argument("--seed", type=int, help="master seed for data, splits, and training")
    g.add_argument("--dataset", choices=("blobs", "idx", "cifar10"), help="dataset kind")
    g.add_argument("--images", help="IDX image file (dataset=idx)")
    g.add_argument("--labels", help="IDX label file (dataset=idx)")
    g.add_argument(
        "--cifar-batch",
        dest="cifar_batches",
        action="append",
        metavar="PATH",
        help="CIFAR-10 batch file; repeat for more batches",
    )
    g.add_argument("--blob-classes", dest="blob_classes", type=int, help="synthetic class count")
    g.add_argument("--blob-dims", dest="blob_dims", type=int, help="synthetic feature count")
    g.add_argument(
        "--blob-per-class", dest="blob_per_class", type=int, help="synthetic elements per class"
    )
    g.add_argument(
        "--blob-separation",
        dest="blob_separation",
        type=float,
        help="synthetic centroid spacing in noise units",
    )
    g.add_argument("--backend", choices=("float", "stochastic"), help="model family")
    g.add_argument(
        "--sweep", help="comma-separated reduced levels: float widths or sequence lengths"
    )
    g.add_argument("--policies", help="comma-separated threshold policies, e.g. mmax,p99,p95")
    g.add_argument("--profile", help="energy profile JSON (default: built-in for the family)")
    g.add_argument(
        "--split-fractions",
        dest="split_fractions",
        help="train,calibration,test fractions (default 0.81,0.09,0.10)",
    )
    g.add_argument("--model", help="model file path (default <out-dir>/model.bin)")
    g.add_argument(
        "--no-figures", dest="no_figures", action="store_true", help="skip PNG rendering"
    )
    g.add_argument("--sc-seed", dest="sc_seed", type=int, help="stochastic stream master seed")
    g.add_argument(
        "--lfsr-width", dest="lfsr_width", type=int, help="stochastic register width (bits)"
    )
    g.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p_train = sub.add_parser("train", parents=[common], help="fit a model and write it to disk")
    p_train.add_argument("--topology", help="comma-separated layer sizes, e.g. 784,128,64,10")
    p_train.add_argument("--epochs", type=int, help="training passes (default 5)")
    p_train.add_argument("--learning-rate", dest="learning_rate", type=float)
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument(
        "--weight-clip",
        dest="weight_clip",
        type=float,
        help="clip weights to [-c, c] after each step (stochastic runs want c <= 1)",
    )
    p_train.set_defaults(func=cmd_train)

    p_cal = sub.add_parser(
        "calibrate", parents=[common], help="measure disagreement margins and thresholds"
    )
    p_cal.set_defaults(func=cmd_calibrate)

    p_eval = sub.add_parser(
        "eval", parents=[common], help="accuracy and fallback fraction per level/policy"
    )
    p_eval.set_defaults(func=cmd_eval)

    p_energy = sub.add_parser(
        "energy", parents=[common], help="cascade energy and savings under a profile"
    )
    p_energy.add_argument(
        "--measure-split",
        dest="measure_split",
        choices=("calibration", "test"),
        help="split on which the fallback fraction is measured (default test)",
    )
    p_energy.set_defaults(func=cmd_energy)

    p_bench = sub.add_parser(
        "sc-bench", parents=[common], help="stochastic multiplier error sweep"
    )
    p_bench.add_argument(
        "--bench-lengths", dest="bench_lengths", help="comma-separated sequence lengths"
    )
    p_bench.add_argument(
        "--bench-pairs", dest="bench_pairs", type=int, help="random pairs per length"
    )
    p_bench.set_defaults(func=cmd_sc_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        cfg = _validate(_merge(args), args.command)
        cfg["out_dir"].mkdir(parents=True, exist_ok=True)
        return args.func(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        log.debug("unhandled failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
