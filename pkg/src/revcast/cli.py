"""Command-line entry point: synth, train, evaluate, interpret, tune.

Every run takes a flat key=value config file (any key overridable with
``--set key=value``; --seed/--horizon/--model are shortcuts), writes its
outputs into a fresh run directory (existing directories get a -1, -2, ...
suffix instead of being overwritten), and drops a manifest recording the
resolved config, seeds, input hashes, and output files. Reruns with the same
manifest inputs produce byte-identical CSVs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import subprocess
import sys
from dataclasses import fields as dataclass_fields
from datetime import date, datetime, timedelta, timezone
from pathlib import Path


from . import __version__
from . import data as D
from . import plots
from .errors import (
    CapabilityError,
    ConfigError,
    ContractError,
    DataError,
    NumericError,
    RevcastError,
    ShapeError,
)
from .models import (
    ModelConfig,
    build_model,
    ensure_schema_match,
    extract_attention_profile,
    extract_variable_importance,
    load_checkpoint,
    save_checkpoint,
)
from .synthgen import GeneratorSpec, generate_panel
from .training import (
    SearchSpace,
    TrainConfig,
    default_search_space,
    evaluate,
    evaluate_seasonal_naive,
    hparam_search,
    train,
)

# ---------------------------------------------------------------------------
# flat key=value configs

def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ConfigError(f"expected an ISO date, got {text!r}") from None


def _parse_optional_str(text: str):
    return None if text.strip().lower() in ("none", "") else text.strip()


CONFIG_TYPES = {
    # generator
    "publishers": int, "categories": int, "days": int, "start_date": _parse_date,
    "base_log_traffic": float, "base_spread": float, "weekly_amplitude": float,
    "annual_amplitude": float, "category_strength": float, "ar_coeff": float,
    "weekly_ar_coeff": float, "noise_std": float, "ctr_base": float, "ctr_std": float, "cpc_base": float,
    "cpc_std": float, "zero_prob": float, "distractor": _parse_optional_str,
    # data pipeline
    "lookback": int, "horizon": int, "val_start": _parse_date, "test_start": _parse_date,
    "min_avg_revenue": float, "max_zero_run": int, "use_category_mean": _parse_bool,
    # model
    "model": str, "hidden_size": int, "heads": int, "dropout": float, "layers": int,
    "quantiles": lambda s: tuple(float(x) for x in s.split(",")),
    "cat_embed_dim": int, "static_embed_dim": int,
    "decoder_hidden_size": int, "decoder_dropout": float,
    "nbeats_blocks": int, "nbeats_width": int, "n_samples": int,
    # training
    "batch_size": int, "epochs": int, "learning_rate": float, "clip_norm": float,
    "patience": int, "seed": int,
    # tuning
    "trials": int, "trial_epochs": int,
}


def parse_config_file(path) -> dict:
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def coerce_config(raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in CONFIG_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            try:
                out[key] = CONFIG_TYPES[key](value)
            except (ValueError, TypeError):
                raise ConfigError(f"bad value {value!r} for config key {key!r}") from None
        else:
            out[key] = value
    return out


def resolve_config(args, defaults: dict | None = None) -> dict:
    cfg = dict(defaults or {})
    if getattr(args, "config", None):
        cfg.update(parse_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = value.strip()
    for key in ("seed", "horizon", "lookback", "model", "epochs", "trials"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return coerce_config(cfg)


# ---------------------------------------------------------------------------
# run directories and manifests

def resolve_run_dir(path) -> Path:
    base = Path(path)
    candidate = base
    suffix = 0
    while candidate.exists():
        suffix += 1
        candidate = base.with_name(f"{base.name}-{suffix}")
    candidate.mkdir(parents=True)
    return candidate


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=10,
        )
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


class RunManifest:
    def __init__(self, command: str, config: dict, inputs):
        self.payload = {
            "command": command,
            "version": __version__,
            "config": {k: self._jsonable(v) for k, v in sorted(config.items())},
            "seed": config.get("seed", 0),
            "git_describe": _git_describe(),
            "started_at": datetime.now(timezone.utc).isoformat(),
            "input_hashes": {str(p): _sha256(p) for p in inputs},
            "outputs": [],
        }

    @staticmethod
    def _jsonable(value):
        if isinstance(value, date):
            return value.isoformat()
        if isinstance(value, tuple):
            return list(value)
        return value

    def add_output(self, path) -> None:
        self.payload["outputs"].append(str(path))

    def write(self, path) -> None:
        self.payload["finished_at"] = datetime.now(timezone.utc).isoformat()
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.payload, handle, indent=2, sort_keys=True)
            handle.write("\n")


def write_csv_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(row[col]) for col in header])


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# shared pipeline

PIPELINE_KEYS = ("lookback", "horizon", "val_start", "test_start",
                 "min_avg_revenue", "max_zero_run", "use_category_mean")

PIPELINE_DEFAULTS = {
    "lookback": 89, "horizon": 7, "min_avg_revenue": 5.0, "max_zero_run": 10,
    "use_category_mean": True,
}


def prepare_splits(csv_path, cfg: dict):
    """ingest -> filter -> scale -> category mean -> windows -> chronological split."""
    panel = D.ingest_csv(csv_path)
    panel = D.filter_publishers(panel, max_zero_run=cfg["max_zero_run"],
                                min_avg_revenue=cfg["min_avg_revenue"])
    if len(panel) == 0:
        raise DataError("no publishers left after filtering")
    first, last = panel.date_bounds()
    span = (last - first).days + 1
    val_start = cfg.get("val_start") or first + timedelta(days=round(span * 0.70))
    test_start = cfg.get("test_start") or first + timedelta(days=round(span * 0.85))
    normalized, scalers = D.fit_transform(panel, val_start)
    if cfg["use_category_mean"]:
        normalized = D.add_category_mean(normalized)
    windows = D.make_windows(normalized, lookback=cfg["lookback"], horizon=cfg["horizon"])
    splits = D.chrono_split(windows, val_start, test_start)
    resolved = dict(cfg)
    resolved["val_start"] = val_start
    resolved["test_start"] = test_start
    return splits, scalers, resolved


def pipeline_config(cfg: dict) -> dict:
    out = dict(PIPELINE_DEFAULTS)
    for key in PIPELINE_KEYS:
        if key in cfg:
            out[key] = cfg[key]
    return out


def model_config_from(cfg: dict) -> ModelConfig:
    if "model" not in cfg:
        raise ConfigError("config must name a model (model=tft|lstm|seq2seq|deepar|nbeats)")
    allowed = {f.name for f in dataclass_fields(ModelConfig)}
    kwargs = {k: v for k, v in cfg.items() if k in allowed and k != "kind"}
    return ModelConfig(kind=cfg["model"], **kwargs)


def train_config_from(cfg: dict) -> TrainConfig:
    allowed = {f.name for f in dataclass_fields(TrainConfig)}
    return TrainConfig(**{k: v for k, v in cfg.items() if k in allowed})


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args) -> int:
    cfg = resolve_config(args, defaults={"seed": 0})
    lookback = cfg.get("lookback", 89)
    horizon = cfg.get("horizon", 7)
    spec_kwargs = {}
    renames = {"publishers": "n_publishers", "categories": "n_categories", "days": "n_days",
               "distractor": "distractor_column"}
    for key, value in cfg.items():
        if key in renames:
            spec_kwargs[renames[key]] = value
        elif key in GeneratorSpec.__dataclass_fields__:
            spec_kwargs[key] = value
    spec = GeneratorSpec(**spec_kwargs)
    if spec.n_days < lookback + horizon + 1:
        raise ConfigError(
            f"days ({spec.n_days}) must be at least lookback + horizon + 1 "
            f"({lookback + horizon + 1})"
        )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("synth", cfg, inputs=[args.config] if args.config else [])
    panel = generate_panel(spec)
    D.export_csv(panel, out_path)
    manifest.add_output(out_path)
    manifest.write(out_path.with_suffix(out_path.suffix + ".manifest.json"))
    print(f"wrote {out_path} ({len(panel)} publishers x {spec.n_days} days)")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args, defaults={**PIPELINE_DEFAULTS, "seed": 0})
    run_dir = resolve_run_dir(args.out)
    manifest = RunManifest("train", cfg, inputs=[args.data] + ([args.config] if args.config else []))
    (train_windows, val_windows, _), scalers, resolved = prepare_splits(args.data, pipeline_config(cfg))
    model_config = model_config_from({**cfg, "lookback": resolved["lookback"],
                                      "horizon": resolved["horizon"]})
    seed = cfg.get("seed", 0)
    model = build_model(model_config, train_windows.schema, seed=seed)
    result = train(model, train_windows, val_windows, train_config_from(cfg))
    checkpoint = run_dir / "checkpoint.json"
    save_checkpoint(model, checkpoint, extra={
        "pipeline": {k: RunManifest._jsonable(v) for k, v in resolved.items()},
        "seed": seed,
        "best_epoch": result.best_epoch,
    })
    history_csv = run_dir / "history.csv"
    write_csv_rows(history_csv, ["epoch", "train_loss", "val_loss"], result.history)
    manifest.add_output(checkpoint)
    manifest.add_output(history_csv)
    manifest.write(run_dir / "manifest.json")
    print(f"trained {model_config.kind} (horizon {model_config.horizon}) -> {run_dir}")
    print(f"best epoch {result.best_epoch}, "
          f"val loss {result.history[result.best_epoch]['val_loss']:.6f}")
    return 0


def _load_for_data(checkpoint_path, data_path, cfg_overrides: dict):
    model, extra = load_checkpoint(checkpoint_path)
    pipeline = dict(extra.get("pipeline", {}))
    for key in ("val_start", "test_start"):
        if isinstance(pipeline.get(key), str):
            pipeline[key] = date.fromisoformat(pipeline[key])
    pipeline = {**PIPELINE_DEFAULTS, **pipeline, **cfg_overrides}
    splits, scalers, resolved = prepare_splits(data_path, pipeline_config(pipeline))
    ensure_schema_match(model.schema, splits[0].schema)
    return model, splits, scalers, resolved


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args, defaults={"seed": 0})
    run_dir = resolve_run_dir(args.out)
    manifest = RunManifest("evaluate", cfg,
                           inputs=[args.checkpoint, args.data] + ([args.config] if args.config else []))
    overrides = {k: v for k, v in cfg.items() if k in PIPELINE_KEYS}
    model, (train_w, val_w, test_w), scalers, _ = _load_for_data(args.checkpoint, args.data, overrides)
    if len(test_w) == 0:
        raise DataError("test split is empty; check val_start/test_start against the data range")
    report = evaluate(model, test_w, scalers, seed=cfg.get("seed", 0))
    rows = report.rows(model.kind)
    naive = evaluate_seasonal_naive(test_w, scalers)
    rows += naive.rows("seasonal_naive")
    metrics_csv = run_dir / "metrics.csv"
    write_csv_rows(metrics_csv, ["model", "horizon", "MAE", "MAPE", "SMAPE"], rows)
    pub_rows = [
        {"model": name, "publisher_id": pid, "MAE": vals["mae"],
         "MAPE": vals["mape"], "SMAPE": vals["smape"]}
        for name, rep in ((model.kind, report), ("seasonal_naive", naive))
        for pid, vals in rep.per_publisher.items()
    ]
    pub_csv = run_dir / "metrics_by_publisher.csv"
    write_csv_rows(pub_csv, ["model", "publisher_id", "MAE", "MAPE", "SMAPE"], pub_rows)
    extras_csv = run_dir / "extras.csv"
    write_csv_rows(extras_csv, ["model", "quantile_crossing_rate", "n_windows"],
                   [{"model": model.kind, "quantile_crossing_rate": report.crossing_rate,
                     "n_windows": report.n_windows}])
    for out in (metrics_csv, pub_csv, extras_csv):
        manifest.add_output(out)
    manifest.write(run_dir / "manifest.json")
    print(f"evaluated {model.kind} on {report.n_windows} test windows -> {run_dir}")
    print(f"aggregate: MAE {report.mae:.4f}  MAPE {report.mape:.4f}  SMAPE {report.smape:.4f} "
          f"(seasonal naive SMAPE {naive.smape:.4f})")
    return 0


def cmd_interpret(args) -> int:
    cfg = resolve_config(args, defaults={"seed": 0})
    run_dir = resolve_run_dir(args.out)
    manifest = RunManifest("interpret", cfg,
                           inputs=[args.checkpoint, args.data] + ([args.config] if args.config else []))
    overrides = {k: v for k, v in cfg.items() if k in PIPELINE_KEYS}
    model, (_, _, test_w), scalers, _ = _load_for_data(args.checkpoint, args.data, overrides)
    if model.kind != "tft":
        raise CapabilityError(f"interpret requires a tft checkpoint, got {model.kind!r}")
    if len(test_w) == 0:
        raise DataError("test split is empty; nothing to interpret")
    importance = extract_variable_importance(model, test_w)
    profile = extract_attention_profile(model, test_w)
    outputs = []
    for name, labels, values in (
        ("encoder_importance", importance.encoder_names, importance.encoder),
        ("decoder_importance", importance.decoder_names, importance.decoder),
        ("static_importance", importance.static_names, importance.static),
    ):
        path = run_dir / f"{name}.csv"
        write_csv_rows(path, ["variable", "importance"],
                       [{"variable": l, "importance": float(v)} for l, v in zip(labels, values)])
        outputs.append(path)
        svg = run_dir / f"{name}.svg"
        plots.bar_chart(labels, values, name.replace("_", " "), svg)
        outputs.append(svg)
    profile_csv = run_dir / "attention_profile.csv"
    write_csv_rows(profile_csv, ["lag", "mean_attention"],
                   [{"lag": lag, "mean_attention": float(v)} for lag, v in enumerate(profile)])
    outputs.append(profile_csv)
    profile_svg = run_dir / "attention_profile.svg"
    plots.line_chart(range(len(profile)), profile, "mean attention by lag", profile_svg,
                     x_label="lag (days before forecast step)", y_label="mean attention")
    outputs.append(profile_svg)
    for out in outputs:
        manifest.add_output(out)
    manifest.write(run_dir / "manifest.json")
    print(f"interpretability payload for {len(test_w)} windows -> {run_dir}")
    return 0


def cmd_tune(args) -> int:
    cfg = resolve_config(args, defaults={**PIPELINE_DEFAULTS, "seed": 0})
    run_dir = resolve_run_dir(args.out)
    inputs = [args.data] + [p for p in (args.config, args.space) if p]
    manifest = RunManifest("tune", cfg, inputs=inputs)
    (train_w, val_w, _), scalers, resolved = prepare_splits(args.data, pipeline_config(cfg))
    base = model_config_from({**cfg, "lookback": resolved["lookback"],
                              "horizon": resolved["horizon"]})
    if args.space:
        raw_space = parse_config_file(args.space)
        trials = int(raw_space.pop("trials", cfg.get("trials", 20)))
        epochs = int(raw_space.pop("epochs", raw_space.pop("trial_epochs", cfg.get("trial_epochs", 5))))
        parameters = {}
        for key, value in raw_space.items():
            if key not in CONFIG_TYPES:
                raise ConfigError(f"unknown search parameter {key!r}")
            parameters[key] = tuple(coerce_config({key: v.strip()})[key] for v in value.split(","))
        space = SearchSpace(parameters=parameters, trials=trials, epochs_per_trial=epochs)
    else:
        space = default_search_space(base.kind)
        space = SearchSpace(parameters=space.parameters,
                            trials=cfg.get("trials", space.trials),
                            epochs_per_trial=cfg.get("trial_epochs", space.epochs_per_trial))
    result = hparam_search(base, space, train_w, val_w, seed=cfg.get("seed", 0),
                           batch_size=cfg.get("batch_size", 32))
    trial_columns = ["trial", "seed", "val_loss", "learning_rate"] + sorted(
        k for k in result.trials[0] if k not in ("trial", "seed", "val_loss", "learning_rate"))
    trials_csv = run_dir / "trials.csv"
    write_csv_rows(trials_csv, trial_columns, result.trials)
    best_path = run_dir / "best_config.txt"
    with open(best_path, "w", encoding="utf-8") as handle:
        handle.write(f"model={base.kind}\n")
        handle.write(f"lookback={resolved['lookback']}\n")
        handle.write(f"horizon={resolved['horizon']}\n")
        for key in sorted(result.best_params):
            if key == "seed":
                continue
            handle.write(f"{key}={result.best_params[key]}\n")
    manifest.add_output(trials_csv)
    manifest.add_output(best_path)
    manifest.write(run_dir / "manifest.json")
    print(f"{space.trials} trials -> best val loss {result.best_val_loss:.6f} -> {run_dir}")
    return 0


# ---------------------------------------------------------------------------
# entry point

ERROR_CODES = (
    (ShapeError, "E_SHAPE"),
    (ContractError, "E_CONTRACT"),
    (DataError, "E_DATA"),
    (NumericError, "E_NUMERIC"),
    (ConfigError, "E_CONFIG"),
    (CapabilityError, "E_CAPABILITY"),
    (RevcastError, "E_ERROR"),
    (LookupError, "E_LOOKUP"),
    (FileNotFoundError, "E_IO"),
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="revcast",
        description="Interpretable multi-horizon forecasting of publisher ad revenue",
    )
    parser.add_argument("--version", action="version", version=f"revcast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--lookback", type=int)
        if needs_out:
            p.add_argument("--out", required=True, help="output run directory")

    p_synth = sub.add_parser("synth", help="generate a synthetic revenue panel CSV")
    common(p_synth, needs_out=False)
    p_synth.add_argument("--out", required=True, help="output CSV path")
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train a forecasting model")
    common(p_train)
    p_train.add_argument("--data", required=True, help="input panel CSV")
    p_train.add_argument("--model", choices=("tft", "lstm", "seq2seq", "deepar", "nbeats"))
    p_train.add_argument("--epochs", type=int)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_interp = sub.add_parser("interpret", help="extract importances and attention profile")
    common(p_interp)
    p_interp.add_argument("--checkpoint", required=True)
    p_interp.add_argument("--data", required=True)
    p_interp.set_defaults(func=cmd_interpret)

    p_tune = sub.add_parser("tune", help="budgeted random hyperparameter search")
    common(p_tune)
    p_tune.add_argument("--data", required=True)
    p_tune.add_argument("--space", help="key=value file of comma-separated choices")
    p_tune.add_argument("--model", choices=("tft", "lstm", "seq2seq", "deepar", "nbeats"))
    p_tune.add_argument("--trials", type=int)
    p_tune.set_defaults(func=cmd_tune)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except tuple(cls for cls, _ in ERROR_CODES) as exc:
        code = next(code for cls, code in ERROR_CODES if isinstance(exc, cls))
        print(f"{code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
