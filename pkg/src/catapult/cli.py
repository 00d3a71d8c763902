"""Command-line reproduction harness: train, sweep, bounds, check.

One JSON configuration document describes the model family, the data source
and the training schedule; the subcommands turn it into trajectory CSVs,
per-learning-rate sweep tables, bound reports, or an invariant check run.
Every output embeds the seed, a digest of the fully normalized
configuration, and the artifact version; runs with equal digests produce
byte-identical files (no timestamps are ever written).  Floats are
serialized with 17 significant digits so values round-trip exactly.

Exit codes: 0 success, 1 configuration error, 2 invariant failure,
3 I/O or data-format error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

import catapult
from catapult.analysis import SweepRecord, run_sweep_point
from catapult.bounds import collect_bound_reports
from catapult.datasets import (
    DataFormatError,
    Dataset,
    EigenScheme,
    MetaFeatureSpec,
    TeacherStudentSpec,
    assemble_quadratic,
    build_meta_features,
    load_two_class_images,
    make_random,
    make_teacher_student,
    make_toy,
    make_toy_relu,
    zeta_for,
)
from catapult.models import DeepReluNet, HomogenousNet, linear_net_with_bias_embedding
from catapult.numerics import Rng, lambda_max_symmetric
from catapult.selfcheck import run_default_suite
from catapult.training import TrainConfig, Trajectory, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2
EXIT_IO = 3

MODEL_FAMILIES = (
    "pure_quadratic",
    "quadratic_with_bias",
    "linear_net_with_bias",
    "homogenous",
    "deep_relu",
)
DATASET_KINDS = ("toy", "toy_relu", "random", "teacher_student", "image_two_class")


class ConfigError(ValueError):
    """Configuration problem; the message starts with the offending field path."""


# ---------------------------------------------------------------------------
# Deterministic serialization
# ---------------------------------------------------------------------------


def format_float(value: float) -> str:
    """17 significant digits: enough to reproduce any double exactly."""
    return f"{float(value):.17g}"


def _json_fragment(value, pieces: list[str]) -> None:
    if value is None:
        pieces.append("null")
    elif isinstance(value, (bool, np.bool_)):
        pieces.append("true" if value else "false")
    elif isinstance(value, (int, np.integer)):
        pieces.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        pieces.append(format_float(value))
    elif isinstance(value, str):
        pieces.append(json.dumps(value))
    elif isinstance(value, dict):
        pieces.append("{")
        for i, key in enumerate(sorted(value)):
            if i:
                pieces.append(",")
            pieces.append(json.dumps(str(key)))
            pieces.append(":")
            _json_fragment(value[key], pieces)
        pieces.append("}")
    elif isinstance(value, (list, tuple)):
        pieces.append("[")
        for i, item in enumerate(value):
            if i:
                pieces.append(",")
            _json_fragment(item, pieces)
        pieces.append("]")
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")


def dumps_json(value) -> str:
    """Canonical JSON: sorted keys, 17-significant-digit floats, no spaces."""
    pieces: list[str] = []
    _json_fragment(value, pieces)
    return "".join(pieces)


def config_digest(normalized: dict) -> str:
    return hashlib.sha256(dumps_json(normalized).encode()).hexdigest()


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_csv_cell(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Configuration parsing and normalization
# ---------------------------------------------------------------------------


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name)
    if value is None:
        raise ConfigError(f"{name}: section is required")
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: must be an object")
    return value


def _field(section: dict, path: str, key: str, kind, default="__required__", allowed=None):
    if key not in section or section[key] is None:
        if default == "__required__":
            raise ConfigError(f"{path}.{key}: field is required")
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is int and isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected an integer")
    if not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}")
    if allowed is not None and value not in allowed:
        raise ConfigError(f"{path}.{key}: must be one of {sorted(allowed)}")
    return value


def _eigen_scheme_config(section: dict, path: str) -> dict:
    raw = section.get("eigen_scheme")
    if raw is None:
        return {"kind": "uniform", "low": 1.0, "high": 2.0}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}.eigen_scheme: must be an object")
    kind = _field(raw, f"{path}.eigen_scheme", "kind", str, allowed={"pm_one", "uniform"})
    if kind == "pm_one":
        return {"kind": "pm_one", "low": 1.0, "high": 1.0}
    low = _field(raw, f"{path}.eigen_scheme", "low", float, 1.0)
    high = _field(raw, f"{path}.eigen_scheme", "high", float, 2.0)
    if not low < high:
        raise ConfigError(f"{path}.eigen_scheme.low: must be below high")
    return {"kind": "uniform", "low": low, "high": high}


def _normalize_model(raw: dict, teacher_student: bool) -> dict:
    section = _section(raw, "model")
    family = _field(section, "model", "family", str, allowed=set(MODEL_FAMILIES))
    out = {
        "family": family,
        "init_seed": _field(section, "model", "init_seed", int, 0),
    }
    if teacher_student:
        # Dimensions, eigenvalue scheme and activation come from the
        # teacher-student dataset section; the model keeps only an optional
        # coupling override.
        if family in ("pure_quadratic", "quadratic_with_bias"):
            out["zeta"] = _field(section, "model", "zeta", float, None)
        return out
    if family in ("pure_quadratic", "quadratic_with_bias"):
        out["n_psi"] = _field(section, "model", "n_psi", int)
        out["n_phi"] = (
            _field(section, "model", "n_phi", int)
            if family == "quadratic_with_bias"
            else 0
        )
        if out["n_psi"] < 2 or out["n_psi"] % 2:
            raise ConfigError("model.n_psi: must be a positive even number")
        if out["n_phi"] < 0:
            raise ConfigError("model.n_phi: must be non-negative")
        zeta = _field(section, "model", "zeta", float, None)
        zeta_rule = _field(
            section,
            "model",
            "zeta_rule",
            str,
            None,
            allowed={"2_over_n", "1_over_n_psi"},
        )
        if (zeta is None) == (zeta_rule is None):
            raise ConfigError("model.zeta: give exactly one of zeta or zeta_rule")
        out["zeta"] = zeta
        out["zeta_rule"] = zeta_rule
        out["eigen_scheme"] = _eigen_scheme_config(section, "model")
        out["activation"] = _field(
            section, "model", "activation", str, "identity", {"identity", "tanh"}
        )
    elif family == "linear_net_with_bias":
        out["width"] = _field(section, "model", "width", int)
        out["bias0"] = _field(section, "model", "bias0", float, 0.0)
    elif family == "homogenous":
        out["width"] = _field(section, "model", "width", int)
        out["a_minus"] = _field(section, "model", "a_minus", float)
        out["a_plus"] = _field(section, "model", "a_plus", float)
        if not 0.0 <= out["a_minus"] <= out["a_plus"]:
            raise ConfigError("model.a_minus: slopes must satisfy 0 <= a_minus <= a_plus")
    else:  # deep_relu
        out["width"] = _field(section, "model", "width", int)
        out["depth"] = _field(section, "model", "depth", int, 0, {0, 1})
    if "width" in out and out["width"] < 1:
        raise ConfigError("model.width: must be at least 1")
    return out


def _normalize_dataset(raw: dict, base_dir: Path) -> dict:
    section = _section(raw, "dataset")
    kind = _field(section, "dataset", "kind", str, allowed=set(DATASET_KINDS))
    out = {"kind": kind, "seed": _field(section, "dataset", "seed", int, 0)}
    if kind == "random":
        out["d"] = _field(section, "dataset", "d", int, 1)
        out["size"] = _field(section, "dataset", "size", int)
        out["half_width"] = _field(section, "dataset", "half_width", float, 0.5)
        if out["size"] < 1:
            raise ConfigError("dataset.size: must be at least 1")
    elif kind == "teacher_student":
        for key in ("n_psi_teacher", "n_psi_student"):
            out[key] = _field(section, "dataset", key, int)
        out["n_phi_teacher"] = _field(section, "dataset", "n_phi_teacher", int, 0)
        out["n_phi_student"] = _field(section, "dataset", "n_phi_student", int, 0)
        out["d"] = _field(section, "dataset", "d", int, 1)
        out["train_size"] = _field(section, "dataset", "train_size", int, 32)
        out["test_size"] = _field(section, "dataset", "test_size", int, 1000)
        out["input_half_width"] = _field(
            section, "dataset", "input_half_width", float, 0.5
        )
        out["eigen_scheme"] = _eigen_scheme_config(section, "dataset")
        out["activation"] = _field(
            section, "dataset", "activation", str, "tanh", {"identity", "tanh"}
        )
    elif kind == "image_two_class":
        fmt = _field(section, "dataset", "format", str, allowed={"idx", "cifar_binary"})
        out["format"] = fmt
        out["class_a"] = _field(section, "dataset", "class_a", int)
        out["class_b"] = _field(section, "dataset", "class_b", int)
        out["train_size"] = _field(section, "dataset", "train_size", int, 128)
        if fmt == "idx":
            keys = ("train_images", "train_labels", "test_images", "test_labels")
            for key in keys:
                value = _field(section, "dataset", key, str)
                resolved = (base_dir / value).resolve() if not Path(value).is_absolute() else Path(value)
                if not resolved.exists():
                    raise ConfigError(f"dataset.{key}: file does not exist: {resolved}")
                out[key] = str(resolved)
        else:
            for key in ("train_files", "test_files"):
                value = section.get(key)
                if not isinstance(value, list) or not value:
                    raise ConfigError(f"dataset.{key}: expected a non-empty list of paths")
                resolved_list = []
                for item in value:
                    resolved = (base_dir / item).resolve() if not Path(str(item)).is_absolute() else Path(str(item))
                    if not resolved.exists():
                        raise ConfigError(f"dataset.{key}: file does not exist: {resolved}")
                    resolved_list.append(str(resolved))
                out[key] = resolved_list
    return out


def _normalize_training(raw: dict) -> dict:
    section = _section(raw, "training")
    grids = [
        key
        for key in ("eta", "eta_grid", "eta_lambda0_grid")
        if section.get(key) is not None
    ]
    if len(grids) != 1:
        raise ConfigError(
            "training.eta: give exactly one of eta, eta_grid, eta_lambda0_grid"
        )
    out = {
        "eta": None,
        "eta_grid": None,
        "eta_lambda0_grid": None,
        "max_steps": _field(section, "training", "max_steps", int, 100_000),
        "convergence_tol": _field(section, "training", "convergence_tol", float, 1e-8),
        "divergence_threshold": _field(
            section, "training", "divergence_threshold", float, 1e10
        ),
        "ntk_eval_interval": _field(section, "training", "ntk_eval_interval", int, 1),
        "record_outputs": _field(section, "training", "record_outputs", bool, False),
    }
    key = grids[0]
    if key == "eta":
        value = _field(section, "training", "eta", float)
        if value <= 0:
            raise ConfigError("training.eta: must be positive")
        out["eta"] = value
    else:
        value = section[key]
        if not isinstance(value, list) or not value:
            raise ConfigError(f"training.{key}: expected a non-empty list")
        numbers = []
        for item in value:
            if not isinstance(item, (int, float)) or isinstance(item, bool) or item <= 0:
                raise ConfigError(f"training.{key}: entries must be positive numbers")
            numbers.append(float(item))
        out[key] = numbers
    if out["max_steps"] < 1:
        raise ConfigError("training.max_steps: must be at least 1")
    if out["convergence_tol"] <= 0:
        raise ConfigError("training.convergence_tol: must be positive")
    if out["divergence_threshold"] <= out["convergence_tol"]:
        raise ConfigError("training.divergence_threshold: must exceed convergence_tol")
    if out["ntk_eval_interval"] < 1:
        raise ConfigError("training.ntk_eval_interval: must be at least 1")
    return out


def normalize_config(
    raw: dict, base_dir: Path, seed_override: Optional[int] = None
) -> dict:
    """Validate a raw configuration document and fill in every default.

    The normalized form is what gets digested and embedded in outputs, so
    parsing it again yields an identical resolved configuration.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    known = {"model", "dataset", "training", "output"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown section")
    dataset_cfg = _normalize_dataset(raw, base_dir)
    normalized = {
        "model": _normalize_model(raw, dataset_cfg["kind"] == "teacher_student"),
        "dataset": dataset_cfg,
        "training": _normalize_training(raw),
        "output": {
            "per_eta_trajectories": _field(
                raw.get("output") or {}, "output", "per_eta_trajectories", bool, False
            )
        },
    }
    if seed_override is not None:
        normalized["model"]["init_seed"] = int(seed_override)
        normalized["dataset"]["seed"] = int(seed_override)
    _validate_combination(normalized)
    return normalized


def _validate_combination(cfg: dict) -> None:
    family = cfg["model"]["family"]
    kind = cfg["dataset"]["kind"]
    if family == "linear_net_with_bias" and kind != "toy":
        raise ConfigError(
            "dataset.kind: the linear net with bias is input-independent and "
            "only trains on the toy dataset"
        )
    if kind == "teacher_student" and family not in (
        "pure_quadratic",
        "quadratic_with_bias",
    ):
        raise ConfigError(
            "model.family: teacher_student datasets require a quadratic family"
        )
    if kind == "image_two_class" and family in (
        "pure_quadratic",
        "quadratic_with_bias",
        "linear_net_with_bias",
    ):
        raise ConfigError(
            "model.family: quadratic families are not supported on image datasets"
        )
    if kind == "teacher_student":
        has_phi = cfg["dataset"]["n_phi_student"] > 0
        if has_phi != (family == "quadratic_with_bias"):
            raise ConfigError(
                "model.family: must match the teacher_student feature block "
                "(with_bias exactly when n_phi_student > 0)"
            )


# ---------------------------------------------------------------------------
# Experiment resolution
# ---------------------------------------------------------------------------


class Experiment:
    """Materialized dataset plus a deterministic model factory."""

    def __init__(
        self,
        dataset: Dataset,
        model_factory: Callable[[], object],
        evaluate_outputs: Optional[Callable] = None,
        sparsity_layers: int = 0,
    ):
        self.dataset = dataset
        self.model_factory = model_factory
        self.evaluate_outputs = evaluate_outputs
        self.sparsity_layers = sparsity_layers


def _build_dataset(cfg: dict) -> Dataset:
    section = cfg["dataset"]
    kind = section["kind"]
    if kind == "toy":
        return make_toy()
    if kind == "toy_relu":
        return make_toy_relu()
    if kind == "random":
        return make_random(
            section["d"], section["size"], section["half_width"], Rng(section["seed"])
        )
    if kind == "image_two_class":
        if section["format"] == "idx":
            paths = {
                key: section[key]
                for key in ("train_images", "train_labels", "test_images", "test_labels")
            }
        else:
            paths = {key: section[key] for key in ("train_files", "test_files")}
        return load_two_class_images(
            section["format"],
            paths,
            section["class_a"],
            section["class_b"],
            section["train_size"],
        )
    raise ConfigError(f"dataset.kind: cannot build {kind!r} here")


def resolve_experiment(cfg: dict) -> Experiment:
    model_cfg = cfg["model"]
    family = model_cfg["family"]
    seed = model_cfg["init_seed"]
    theta_rng = Rng(seed).child(2)

    if cfg["dataset"]["kind"] == "teacher_student":
        ds_cfg = cfg["dataset"]
        spec = TeacherStudentSpec(
            n_psi_teacher=ds_cfg["n_psi_teacher"],
            n_psi_student=ds_cfg["n_psi_student"],
            n_phi_teacher=ds_cfg["n_phi_teacher"],
            n_phi_student=ds_cfg["n_phi_student"],
            d=ds_cfg["d"],
            train_size=ds_cfg["train_size"],
            test_size=ds_cfg["test_size"],
            input_half_width=ds_cfg["input_half_width"],
            eigen_scheme=EigenScheme(**ds_cfg["eigen_scheme"]),
            activation=ds_cfg["activation"],
        )
        setup = make_teacher_student(spec, Rng(ds_cfg["seed"]).child(3))
        feature_map = setup.student_map
        zeta = (
            model_cfg["zeta"]
            if model_cfg.get("zeta") is not None
            else setup.zeta_student
        )
        dataset = setup.dataset

        def factory():
            return assemble_quadratic(feature_map, dataset, zeta, theta_rng.child(0))

        return Experiment(
            dataset,
            factory,
            evaluate_outputs=lambda m, x: feature_map.outputs_at(m.theta, zeta, x),
        )

    dataset = _build_dataset(cfg)

    if family in ("pure_quadratic", "quadratic_with_bias"):
        spec = MetaFeatureSpec(
            n_psi=model_cfg["n_psi"],
            n_phi=model_cfg["n_phi"],
            d=dataset.dim,
            eigen_scheme=EigenScheme(**model_cfg["eigen_scheme"]),
            activation=model_cfg["activation"],
        )
        feature_map = build_meta_features(spec, Rng(seed).child(1))
        zeta = (
            model_cfg["zeta"]
            if model_cfg["zeta"] is not None
            else zeta_for(model_cfg["zeta_rule"], model_cfg["n_psi"])
        )

        def factory():
            return assemble_quadratic(feature_map, dataset, zeta, theta_rng.child(0))

        return Experiment(
            dataset,
            factory,
            evaluate_outputs=lambda m, x: feature_map.outputs_at(m.theta, zeta, x),
        )

    if family == "linear_net_with_bias":
        width = model_cfg["width"]
        bias0 = model_cfg["bias0"]
        return Experiment(
            dataset,
            lambda: linear_net_with_bias_embedding(width, theta_rng.child(0), bias0),
        )

    if family == "homogenous":
        width = model_cfg["width"]
        a_minus, a_plus = model_cfg["a_minus"], model_cfg["a_plus"]
        dim = dataset.dim
        return Experiment(
            dataset,
            lambda: HomogenousNet.init_random(
                width, theta_rng.child(0), a_minus, a_plus, input_dim=dim
            ),
            sparsity_layers=1,
        )

    width = model_cfg["width"]
    depth = model_cfg["depth"]
    dim = dataset.dim
    return Experiment(
        dataset,
        lambda: DeepReluNet.init_random(width, dim, depth, theta_rng.child(0)),
        sparsity_layers=depth + 1,
    )


def _train_config(cfg: dict, eta: float) -> TrainConfig:
    section = cfg["training"]
    return TrainConfig(
        eta=eta,
        max_steps=section["max_steps"],
        convergence_tol=section["convergence_tol"],
        divergence_threshold=section["divergence_threshold"],
        ntk_eval_interval=section["ntk_eval_interval"],
        record_outputs=section["record_outputs"],
    )


def resolve_eta_grid(cfg: dict, experiment: Experiment) -> tuple[list[float], float]:
    """Raw learning rates plus the initial kernel eigenvalue they were
    resolved against (rates given as eta * lambda0 divide it out)."""
    lambda0 = lambda_max_symmetric(
        experiment.model_factory().ntk(experiment.dataset.inputs)
    )
    training = cfg["training"]
    if training["eta"] is not None:
        return [training["eta"]], lambda0
    if training["eta_grid"] is not None:
        return list(training["eta_grid"]), lambda0
    return [value / lambda0 for value in training["eta_lambda0_grid"]], lambda0


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------


def _trajectory_rows(trajectory: Trajectory) -> tuple[list[str], list[list]]:
    header = ["step", "loss", "weight_norm"]
    include_reduced = trajectory.reduced_weight_norms is not None
    if include_reduced:
        header.append("reduced_weight_norm")
    header.append("eta_lambda_max")
    lam_by_step = dict(zip(trajectory.ntk_steps.tolist(), trajectory.eta_lambda_max))
    rows = []
    for step in range(trajectory.steps_taken + 1):
        row: list = [step, trajectory.losses[step], trajectory.weight_norms[step]]
        if include_reduced:
            row.append(trajectory.reduced_weight_norms[step])
        row.append(lam_by_step.get(step))
        rows.append(row)
    return header, rows


def write_trajectory_csv(path: Path, trajectory: Trajectory) -> None:
    header, rows = _trajectory_rows(trajectory)
    write_csv(path, header, rows)


def _sweep_header(sparsity_layers: int) -> list[str]:
    header = [
        "eta",
        "eta_lambda0",
        "status",
        "phase",
        "steps_taken",
        "final_eta_lambda_max",
        "weight_ratio",
        "train_loss_final",
        "test_loss_final",
        "generalization_gap",
        "accuracy",
    ]
    header.extend(f"sparsity_{i}" for i in range(sparsity_layers))
    header.append("message")
    return header


def _sweep_row(record: SweepRecord, sparsity_layers: int) -> list:
    row = [
        record.eta,
        record.eta_lambda0,
        record.status,
        record.phase,
        record.steps_taken,
        record.final_eta_lambda_max,
        record.weight_ratio,
        record.train_loss_final,
        record.test_loss_final,
        record.generalization_gap,
        record.accuracy,
    ]
    for i in range(sparsity_layers):
        value = None
        if record.sparsity is not None and i < len(record.sparsity):
            value = record.sparsity[i]
        row.append(value)
    row.append(record.message)
    return row


def _base_metadata(cfg: dict, command: str) -> dict:
    return {
        "command": command,
        "version": catapult.__version__,
        "seed": cfg["model"]["init_seed"],
        "dataset_seed": cfg["dataset"]["seed"],
        "config_digest": config_digest(cfg),
        "config": cfg,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(dumps_json(payload) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_train(cfg: dict, out_dir: Path) -> None:
    experiment = resolve_experiment(cfg)
    etas, lambda0 = resolve_eta_grid(cfg, experiment)
    if len(etas) != 1:
        raise ConfigError("training.eta: the train command requires a single rate")
    eta = etas[0]
    model = experiment.model_factory()
    trajectory = train(model, experiment.dataset, _train_config(cfg, eta))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out_dir / "trajectory.csv", trajectory)
    meta = _base_metadata(cfg, "train")
    meta.update(
        {
            "eta": eta,
            "lambda0": lambda0,
            "eta_lambda0": eta * lambda0,
            "termination": trajectory.termination,
            "steps_taken": trajectory.steps_taken,
            "final_loss": float(trajectory.losses[-1]),
            "final_weight_norm": float(trajectory.weight_norms[-1]),
        }
    )
    _write_json(out_dir / "trajectory.meta.json", meta)


def _sweep_worker(args: tuple) -> tuple:
    cfg, eta, lambda0 = args
    experiment = resolve_experiment(cfg)
    record, trajectory = run_sweep_point(
        experiment.model_factory,
        experiment.dataset,
        eta,
        _train_config(cfg, eta),
        lambda0,
        experiment.evaluate_outputs,
    )
    return record, trajectory


def cmd_sweep(cfg: dict, out_dir: Path, jobs: int = 1) -> None:
    experiment = resolve_experiment(cfg)
    etas, lambda0 = resolve_eta_grid(cfg, experiment)
    tasks = [(cfg, eta, lambda0) for eta in etas]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_worker, tasks))
    else:
        results = [_sweep_worker(task) for task in tasks]

    out_dir.mkdir(parents=True, exist_ok=True)
    layers = experiment.sparsity_layers
    rows = [_sweep_row(record, layers) for record, _ in results]
    write_csv(out_dir / "sweep.csv", _sweep_header(layers), rows)
    if cfg["output"]["per_eta_trajectories"]:
        for index, (_, trajectory) in enumerate(results):
            write_trajectory_csv(out_dir / f"trajectory_{index:03d}.csv", trajectory)
    meta = _base_metadata(cfg, "sweep")
    meta.update({"lambda0": lambda0, "eta_grid": [float(e) for e in etas]})
    _write_json(out_dir / "sweep.meta.json", meta)


def cmd_bounds(cfg: dict, out_dir: Path) -> None:
    experiment = resolve_experiment(cfg)
    model = experiment.model_factory()
    lambda0 = lambda_max_symmetric(model.ntk(experiment.dataset.inputs))
    reports, skipped = collect_bound_reports(model, experiment.dataset)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = _base_metadata(cfg, "bounds")
    meta.update(
        {
            "lambda_max_h0": lambda0,
            "lazy_threshold": 2.0 / lambda0,
            "reports": [report.to_dict() for report in reports],
            "skipped": skipped,
        }
    )
    _write_json(out_dir / "bounds.json", meta)


def cmd_check(seed: int, out_dir: Optional[Path]) -> bool:
    results = run_default_suite(seed)
    payload = {
        "command": "check",
        "version": catapult.__version__,
        "seed": seed,
        "results": [result.to_dict() for result in results],
        "all_passed": all(result.passed for result in results),
    }
    for result in results:
        status = "pass" if result.passed else "FAIL"
        print(
            f"{status}  {result.name}: residual {format_float(result.residual)} "
            f"(threshold {format_float(result.threshold)})"
        )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "check.json", payload)
    else:
        print(dumps_json(payload))
    return payload["all_passed"]


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _load_config(path_text: str, seed_override: Optional[int]) -> dict:
    path = Path(path_text)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config: file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON: {exc}") from exc
    return normalize_config(raw, path.resolve().parent, seed_override)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catapult",
        description=(
            "Simulate full-batch gradient descent across the lazy, catapult "
            "and divergent phases; certify learning-rate windows; run the "
            "invariant checks."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("train", True),
        ("sweep", True),
        ("bounds", True),
        ("check", False),
    ):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=needs_config, help="path to the JSON config")
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.add_argument("--seed", type=int, default=None, help="override every seed")
        cmd.add_argument(
            "--jobs", type=int, default=1, help="parallel workers (sweep only)"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "check":
            seed = 0
            if args.config is not None:
                try:
                    raw = json.loads(Path(args.config).read_text())
                except FileNotFoundError as exc:
                    raise ConfigError(f"config: file not found: {args.config}") from exc
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"config: invalid JSON: {exc}") from exc
                if not isinstance(raw, dict):
                    raise ConfigError("config: top level must be an object")
                seed = raw.get("seed", 0)
                if not isinstance(seed, int):
                    raise ConfigError("seed: expected an integer")
            if args.seed is not None:
                seed = args.seed
            out_dir = Path(args.out) if args.out else None
            passed = cmd_check(seed, out_dir)
            return EXIT_OK if passed else EXIT_INVARIANT
        cfg = _load_config(args.config, args.seed)
        out_dir = Path(args.out) if args.out else Path("out")
        if args.command == "train":
            cmd_train(cfg, out_dir)
        elif args.command == "sweep":
            cmd_sweep(cfg, out_dir, jobs=max(1, args.jobs))
        elif args.command == "bounds":
            cmd_bounds(cfg, out_dir)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
