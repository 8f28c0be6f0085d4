"""Command line interface: fit, evaluate, sample, and ensemble runs.

Datasets are CSV files with reserved columns ``time``, ``time2`` (optional,
interval upper bounds), and ``status`` (one of exact/right/left/interval);
every remaining column is a numeric covariate.  Each run writes a manifest
with the fully resolved configuration and seed, so reruns reproduce outputs
bit for bit.  Failures exit nonzero and leave a machine-readable
``error.json`` with a stable error code.

The ``TRAMSURV_LOG`` environment variable sets the log level (e.g. DEBUG,
INFO, WARNING).
"""

import argparse
import csv
import dataclasses
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .core import (
    SCHEMA_VERSION,
    CensoringKind,
    ModelSpec,
    Observation,
    Parameterization,
    SurvivalDataset,
    deserialize_model,
    serialize_model,
    validate_dataset,
)
from .errors import (
    BadConfig,
    BadStatusValue,
    DataNotFound,
    MissingColumn,
    ModelNotFound,
    NonNumericCovariate,
    TramsurvError,
)
from .feature import ExtractorSpec
from .fit import TrainConfig, fit, fit_ensemble
from .metrics import evaluate
from .sample import SynthConfig, generate_semisynthetic
from .target import TargetFamily
from .transform import conditional_distribution

logger = logging.getLogger(__name__)

RESERVED_COLUMNS = ("time", "time2", "status")
_STATUS_TO_KIND = {k.value: k for k in CensoringKind}
CDF_GRID_POINTS = 200


# ---------------------------------------------------------------------------
# Dataset CSV handling


def parse_dataset_csv(path) -> SurvivalDataset:
    """Read a dataset CSV; errors carry the row and column of the first problem."""
    path = Path(path)
    if not path.is_file():
        raise DataNotFound(f"dataset file not found: {path}")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: file is empty") from None
        rows = list(reader)
    header = [column.strip() for column in header]
    for required in ("time", "status"):
        if required not in header:
            raise MissingColumn(f"{path}: required column {required!r} is missing")
    time_col = header.index("time")
    status_col = header.index("status")
    time2_col = header.index("time2") if "time2" in header else None
    feature_cols = [i for i, name in enumerate(header) if name not in RESERVED_COLUMNS]
    feature_names = [header[i] for i in feature_cols]

    observations = []
    for r, row in enumerate(rows, start=2):  # header is line 1
        status = row[status_col].strip().lower()
        if status not in _STATUS_TO_KIND:
            raise BadStatusValue(
                f"{path}: line {r}: status {row[status_col]!r} is not one of "
                f"{sorted(_STATUS_TO_KIND)}"
            )
        kind = _STATUS_TO_KIND[status]
        try:
            t = float(row[time_col])
        except ValueError:
            raise NonNumericCovariate(
                f"{path}: line {r}: time value {row[time_col]!r} is not numeric"
            ) from None
        if kind == CensoringKind.INTERVAL:
            raw_t2 = row[time2_col].strip() if time2_col is not None else ""
            if time2_col is None or not raw_t2:
                raise MissingColumn(
                    f"{path}: line {r}: interval-censored row needs a time2 value"
                )
            try:
                t2 = float(raw_t2)
            except ValueError:
                raise NonNumericCovariate(
                    f"{path}: line {r}: time2 value {raw_t2!r} is not numeric"
                ) from None
            obs = Observation.interval(t, t2, _covariates(path, r, header, row, feature_cols))
        elif kind == CensoringKind.RIGHT:
            obs = Observation.right_censored(t, _covariates(path, r, header, row, feature_cols))
        elif kind == CensoringKind.LEFT:
            obs = Observation.left_censored(t, _covariates(path, r, header, row, feature_cols))
        else:
            obs = Observation.exact(t, _covariates(path, r, header, row, feature_cols))
        observations.append(obs)
    return SurvivalDataset(observations, feature_names=feature_names)


def _covariates(path, line, header, row, feature_cols):
    values = []
    for i in feature_cols:
        try:
            values.append(float(row[i]))
        except (ValueError, IndexError):
            cell = row[i] if i < len(row) else ""
            raise NonNumericCovariate(
                f"{path}: line {line}: column {header[i]!r} value {cell!r} is not numeric"
            ) from None
    return np.array(values)


def _format_value(x: float) -> str:
    return repr(float(x))


def write_dataset_csv(dataset: SurvivalDataset, path):
    """Write a dataset CSV that :func:`parse_dataset_csv` reads back unchanged."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time", "time2", "status", *dataset.feature_names])
        for obs in dataset.observations:
            time2 = ""
            if obs.censoring == CensoringKind.INTERVAL:
                time2 = _format_value(obs.time_upper)
            writer.writerow(
                [
                    _format_value(obs.time_lower),
                    time2,
                    obs.censoring.value,
                    *(_format_value(v) for v in obs.covariates),
                ]
            )


# ---------------------------------------------------------------------------
# Run configuration


_SPEC_KEYS = {
    "family": str,
    "parameterization": str,
    "bernstein_order": int,
    "hidden_dims": None,  # list of ints
    "activation": str,
    "init_scale": float,
    "lr_extractor": float,
    "lr_head": float,
    "epochs": int,
    "batch_size": int,
    "early_stopping_patience": int,
    "validation_fraction": float,
    "seed": int,
}


def load_spec_config(path, overrides: dict) -> dict:
    """Flat key-value spec config from a JSON file plus CLI overrides."""
    path = Path(path)
    if not path.is_file():
        raise BadConfig(f"spec config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise BadConfig(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise BadConfig(f"{path}: spec config must be a JSON object")
    unknown = set(doc) - set(_SPEC_KEYS)
    if unknown:
        raise BadConfig(f"{path}: unknown spec keys {sorted(unknown)}")
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if "family" not in doc or "parameterization" not in doc:
        raise BadConfig(f"{path}: spec config needs 'family' and 'parameterization'")
    return doc


def build_model_spec(config: dict, n_features: int) -> ModelSpec:
    try:
        family = TargetFamily(config["family"])
    except ValueError:
        raise BadConfig(
            f"unknown family {config['family']!r}; expected one of "
            f"{[f.value for f in TargetFamily]}"
        ) from None
    try:
        parameterization = Parameterization(config["parameterization"])
    except ValueError:
        raise BadConfig(
            f"unknown parameterization {config['parameterization']!r}; expected one of "
            f"{[p.value for p in Parameterization]}"
        ) from None
    order = int(config.get("bernstein_order", 6))
    extractor = None
    if parameterization != Parameterization.BASELINE:
        hidden = tuple(int(h) for h in config.get("hidden_dims", ()))
        if parameterization == Parameterization.BERNSTEIN_FLEXIBLE:
            output_dim = order + 1
        else:
            output_dim = n_features
        extractor = ExtractorSpec(
            input_dim=n_features,
            hidden_dims=hidden,
            output_dim=output_dim,
            activation=config.get("activation", "tanh"),
            init_scale=float(config.get("init_scale", 1.0)),
        )
    return ModelSpec(
        family=family,
        parameterization=parameterization,
        bernstein_order=order,
        extractor=extractor,
        lr_extractor=config.get("lr_extractor"),
        lr_head=config.get("lr_head"),
        epochs=int(config.get("epochs", 200)),
        early_stopping_patience=int(config.get("early_stopping_patience", 10)),
        seed=int(config.get("seed", 0)),
    )


def build_train_config(config: dict, spec: ModelSpec) -> TrainConfig:
    overrides = {}
    if "batch_size" in config:
        overrides["batch_size"] = int(config["batch_size"])
    if "validation_fraction" in config:
        overrides["validation_fraction"] = float(config["validation_fraction"])
    return TrainConfig.from_model_spec(spec, **overrides)


# ---------------------------------------------------------------------------
# Output artifacts


def _write_json(path, doc):
    with open(path, "w") as handle:
        json.dump(doc, handle, indent=2, allow_nan=False)
        handle.write("\n")


def write_manifest(out_dir: Path, command: str, resolved: dict):
    manifest = {
        "tool": "tramsurv",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": resolved,
    }
    _write_json(out_dir / "manifest.json", manifest)


def _load_model(path):
    path = Path(path)
    if not path.is_file():
        raise ModelNotFound(f"model artifact not found: {path}")
    return deserialize_model(path.read_bytes())


def write_cdf_grid(model, dataset: SurvivalDataset, path):
    """Per-subject conditional CDF on a fixed grid spanning the training range."""
    scaler = model.scaler
    grid = np.exp(np.linspace(scaler.a_lo, scaler.b_hi, CDF_GRID_POINTS))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["subject", "time", "cdf"])
        for i, obs in enumerate(dataset.observations):
            dist = conditional_distribution(model, obs.covariates)
            values = dist.cdf(grid)
            for t, v in zip(grid, values):
                writer.writerow([i, _format_value(t), _format_value(v)])


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_fit(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = validate_dataset(parse_dataset_csv(args.data), for_fitting=True)
    overrides = {k: getattr(args, k, None) for k in _SPEC_KEYS}
    spec_config = load_spec_config(args.spec, overrides)
    spec = build_model_spec(spec_config, dataset.p)
    config = build_train_config(spec_config, spec)
    write_manifest(
        out_dir,
        "fit",
        {"data": str(args.data), "spec": spec_config, "train": dataclasses.asdict(config)},
    )
    log_path = out_dir / "training_log.csv"
    with open(log_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "train_nll", "val_nll", "grad_norm", "clipped"])
        model = fit(
            dataset,
            spec,
            config,
            callback=lambda s: writer.writerow(
                [s.epoch, _format_value(s.train_nll), _format_value(s.val_nll),
                 _format_value(s.grad_norm), s.clipped]
            ),
        )
    (out_dir / "model.json").write_bytes(serialize_model(model))
    logger.info("fit: wrote %s", out_dir / "model.json")
    return 0


def _cmd_evaluate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = parse_dataset_csv(args.data)
    model = _load_model(args.model)
    write_manifest(out_dir, "evaluate", {"data": str(args.data), "model": str(args.model)})
    report = evaluate(model, dataset)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    with open(out_dir / "scores.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["subject", "nll", "crps"])
        for i, score in enumerate(report.per_subject):
            writer.writerow([i, _format_value(score.nll), _format_value(score.crps)])
    write_cdf_grid(model, dataset, out_dir / "cdf_grid.csv")
    logger.info("evaluate: wrote %s", out_dir / "report.json")
    return 0


def _cmd_sample(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = parse_dataset_csv(args.data)
    model = _load_model(args.model)
    config = SynthConfig(replication=args.replication, seed=args.seed)
    write_manifest(
        out_dir,
        "sample",
        {
            "data": str(args.data),
            "model": str(args.model),
            "synth": dataclasses.asdict(config),
        },
    )
    synthetic = generate_semisynthetic(model, dataset, config)
    write_dataset_csv(synthetic, out_dir / "synthetic.csv")
    logger.info("sample: wrote %s", out_dir / "synthetic.csv")
    return 0


def _cmd_ensemble(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = validate_dataset(parse_dataset_csv(args.data), for_fitting=True)
    overrides = {k: getattr(args, k, None) for k in _SPEC_KEYS}
    spec_config = load_spec_config(args.spec, overrides)
    spec = build_model_spec(spec_config, dataset.p)
    config = build_train_config(spec_config, spec)
    write_manifest(
        out_dir,
        "ensemble",
        {
            "data": str(args.data),
            "spec": spec_config,
            "train": dataclasses.asdict(config),
            "members": args.members,
            "top": args.top,
            "jobs": args.jobs,
        },
    )
    ensemble = fit_ensemble(
        dataset, spec, config, n_members=args.members, top_m=args.top, jobs=args.jobs
    )
    member_paths = []
    for rank, model in enumerate(ensemble.members):
        path = out_dir / f"member_{rank:03d}.json"
        path.write_bytes(serialize_model(model))
        member_paths.append(path.name)
    _write_json(
        out_dir / "selection.json",
        {
            "pool_validation_nlls": [float(v) for v in ensemble.pool_validation_nlls],
            "selected_indices": list(ensemble.selected_indices),
            "selected_validation_nlls": [float(v) for v in ensemble.member_validation_nlls],
            "members": member_paths,
        },
    )
    report = evaluate(ensemble, dataset)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    logger.info("ensemble: wrote %d members to %s", len(member_paths), out_dir)
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tramsurv",
        description="Conditional transformation models for censored time-to-event data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_spec_flags(p):
        p.add_argument("--spec", required=True, help="JSON spec config file")
        p.add_argument("--family", choices=[f.value for f in TargetFamily])
        p.add_argument(
            "--parameterization", choices=[p.value for p in Parameterization]
        )
        p.add_argument("--bernstein_order", type=int)
        p.add_argument("--activation", choices=["tanh", "relu"])
        p.add_argument("--init_scale", type=float)
        p.add_argument("--lr_extractor", type=float)
        p.add_argument("--lr_head", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch_size", type=int)
        p.add_argument("--early_stopping_patience", type=int)
        p.add_argument("--validation_fraction", type=float)
        p.add_argument("--seed", type=int)

    p_fit = sub.add_parser("fit", help="fit a model and write its artifact")
    p_fit.add_argument("--data", required=True)
    add_spec_flags(p_fit)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(handler=_cmd_fit)

    p_eval = sub.add_parser("evaluate", help="score a model artifact on a dataset")
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(handler=_cmd_evaluate)

    p_sample = sub.add_parser("sample", help="generate semi-synthetic data from a model")
    p_sample.add_argument("--data", required=True)
    p_sample.add_argument("--model", required=True)
    p_sample.add_argument("--replication", type=int, default=10)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--out", required=True)
    p_sample.set_defaults(handler=_cmd_sample)

    p_ens = sub.add_parser("ensemble", help="fit a bootstrap ensemble")
    p_ens.add_argument("--data", required=True)
    add_spec_flags(p_ens)
    p_ens.add_argument("--members", type=int, default=10)
    p_ens.add_argument("--top", type=int, default=5)
    p_ens.add_argument("--jobs", type=int, default=1)
    p_ens.add_argument("--out", required=True)
    p_ens.set_defaults(handler=_cmd_ensemble)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("TRAMSURV_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        status = args.handler(args)
        out = getattr(args, "out", None)
        if out is not None:
            stale = Path(out) / "error.json"
            if stale.exists():
                stale.unlink()
        return status
    except TramsurvError as exc:
        record = {"error": exc.code, "message": str(exc)}
        out = getattr(args, "out", None)
        if out is not None:
            try:
                Path(out).mkdir(parents=True, exist_ok=True)
                _write_json(Path(out) / "error.json", record)
            except OSError:
                pass
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
