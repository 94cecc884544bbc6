"""Reproducible experiment runs: config parsing, orchestration, reports.

A run is described by a flat INI config (sections ``run``, ``dataset``,
``model``, ``train``, ``eval``).  ``run_experiment`` trains the model,
evaluates clean error, the corruption sweep, the attack sweep, and
calibration, then emits a canonical-JSON report plus a CSV row.  The run
id is a stable hash of the canonicalized config (output location
excluded), so identical configs produce byte-identical reports.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import ATTACK_FAMILIES, AttackConfig, run_attack
from .augment import CORRUPTION_IDS, TRAINABLE_OPS, CorruptionSpec, apply_corruption
from .checkpoint import load_weights, save_weights
from .data_io import Dataset, concat_datasets, derived_seed, load_cifar_binary, \
    subset, synthesize_shapes
from .errors import ConfigError, DataError, ValidationError
from .metrics import CALIBRATION_MODES, EvalReport, calibration_errors, error_rate, \
    corruption_errors, prediction_records
from .models import ModelConfig, MtlModelConfig, build_model, build_mtl_model, \
    masked_class_prediction
from .training import REGIMES, TrainConfig, epoch_log_rows, train

DATA_SOURCES = ("synthetic", "cifar10", "cifar100_fine")

ARTIFACT_NAMES = {
    "manifest": "manifest.json",
    "checkpoint": "model.lakt",
    "epoch_log": "epochs.csv",
    "report_json": "report.json",
    "report_csv": "report.csv",
}

_SYNTH_TRAIN_STREAM = 11
_SYNTH_TEST_STREAM = 12
_SUBSET_TRAIN_STREAM = 13
_SUBSET_TEST_STREAM = 14
_CORRUPTION_STREAM = 21
_ATTACK_EVAL_STREAM = 22

_SCHEMA = {
    "run": {"name", "seed", "out"},
    "dataset": {"source", "train_files", "test_files", "train_size", "test_size",
                "classes"},
    "model": {"arch", "hidden", "channels", "init_seed"},
    "train": {"regime", "epochs", "batch_size", "lr0", "eta_min_factor", "momentum",
              "ops", "identity_prob", "delta_low", "delta_high", "delta_mode",
              "attack_family", "attack_epsilon", "attack_steps", "attack_step_size",
              "attack_random_start", "checkpoint_every"},
    "eval": {"corruptions", "severities", "attacks", "pgd_steps", "attack_step_size",
             "pgd_random_start", "logit_mode", "calibration_bins", "calibration_mode",
             "attack_subset"},
}


@dataclass
class ExperimentConfig:
    """Parsed and validated experiment description."""

    name: str = "run"
    seed: int = 0
    out: str = "runs"
    # dataset
    source: str = "synthetic"
    train_files: tuple[str, ...] = ()
    test_files: tuple[str, ...] = ()
    train_size: int | None = None
    test_size: int | None = None
    classes: int = 4
    # model
    arch: str = "small_cnn"
    hidden: tuple[int, ...] = (128,)
    channels: tuple[int, ...] = (16, 32)
    init_seed: int | None = None
    # train
    regime: str = "standard"
    epochs: int = 25
    batch_size: int = 128
    lr0: float = 0.1
    eta_min_factor: float = 1e-4
    momentum: float = 0.9
    ops: tuple[str, ...] = ()
    identity_prob: float = 0.5
    delta_low: float = 0.05
    delta_high: float = 0.1
    delta_mode: str = "per_sample"
    attack_family: str = "fgsm"
    attack_epsilon: float = 0.3
    attack_steps: int = 10
    attack_step_size: float | None = None
    attack_random_start: bool = True
    checkpoint_every: int | None = None
    # eval
    corruptions: tuple[str, ...] = CORRUPTION_IDS
    severities: tuple[int, ...] = (1, 2, 3, 4, 5)
    attacks: tuple[tuple[str, float], ...] = (("fgsm", 0.03),)
    pgd_steps: int = 40
    eval_attack_step_size: float | None = None
    pgd_random_start: bool = True
    logit_mode: str = "masked_k"
    calibration_bins: int = 15
    calibration_mode: str = "equal_count"
    attack_subset: int | None = 512

    def validate(self):
        if self.source not in DATA_SOURCES:
            raise ConfigError(f"dataset.source {self.source!r}: expected one of {DATA_SOURCES}")
        if self.regime not in REGIMES:
            raise ConfigError(f"train.regime {self.regime!r}: expected one of {REGIMES}")
        for op in self.ops:
            if op not in TRAINABLE_OPS:
                raise ConfigError(f"train.ops entry {op!r}: expected one of {TRAINABLE_OPS}")
        for cid in self.corruptions:
            if cid not in CORRUPTION_IDS:
                raise ConfigError(
                    f"eval.corruptions entry {cid!r}: expected one of {CORRUPTION_IDS}"
                )
        if tuple(self.severities) != (1, 2, 3, 4, 5):
            raise ConfigError("eval.severities must be 1, 2, 3, 4, 5")
        for family, eps in self.attacks:
            if family not in ATTACK_FAMILIES:
                raise ConfigError(f"eval.attacks family {family!r} unknown")
            if eps < 0:
                raise ConfigError(f"eval.attacks epsilon {eps} must be >= 0")
        if self.calibration_mode not in CALIBRATION_MODES:
            raise ConfigError(f"eval.calibration_mode {self.calibration_mode!r} unknown")
        if self.source != "synthetic":
            if not self.train_files or not self.test_files:
                raise ConfigError(f"dataset.source {self.source!r} requires train_files "
                                  f"and test_files")

    # -- canonical identity ------------------------------------------------

    def canonical_items(self) -> list[tuple[str, str]]:
        """Stable (key, value) pairs; the output location is excluded so the
        run id describes the experiment, not where it lands on disk."""
        skip = {"out"}
        items = []
        for key, value in sorted(vars(self).items()):
            if key in skip:
                continue
            items.append((key, repr(value)))
        return items

    def canonical_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.canonical_items()) + "\n"

    @property
    def run_id(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]

    @property
    def run_dir(self) -> Path:
        return Path(self.out) / self.name


def _split_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _parse_attacks(raw: str) -> tuple[tuple[str, float], ...]:
    parsed = []
    for item in _split_list(raw):
        family, sep, eps = item.partition("@")
        if not sep:
            raise ConfigError(f"eval.attacks entry {item!r}: expected family@epsilon")
        try:
            parsed.append((family.strip(), float(eps)))
        except ValueError as e:
            raise ConfigError(f"eval.attacks entry {item!r}: bad epsilon") from e
    return tuple(parsed)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse an INI experiment config; ``overrides`` (e.g. CLI flags) win."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from e

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown option {key!r} in [{section}]")

    cfg = ExperimentConfig()

    def grab(section, key, cast, current):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                return cast(raw)
            except (ValueError, TypeError) as e:
                raise ConfigError(f"{path}: [{section}] {key} = {raw!r}: {e}") from e
        return current

    as_bool = lambda raw: {"true": True, "false": False}[raw.strip().lower()]
    as_opt_int = lambda raw: None if not raw.strip() else int(raw)
    as_opt_float = lambda raw: None if not raw.strip() else float(raw)
    as_tuple = lambda raw: tuple(_split_list(raw))
    as_int_tuple = lambda raw: tuple(int(v) for v in _split_list(raw))

    cfg.name = grab("run", "name", str, cfg.name)
    cfg.seed = grab("run", "seed", int, cfg.seed)
    cfg.out = grab("run", "out", str, cfg.out)

    cfg.source = grab("dataset", "source", str, cfg.source)
    cfg.train_files = grab("dataset", "train_files", as_tuple, cfg.train_files)
    cfg.test_files = grab("dataset", "test_files", as_tuple, cfg.test_files)
    cfg.train_size = grab("dataset", "train_size", as_opt_int, cfg.train_size)
    cfg.test_size = grab("dataset", "test_size", as_opt_int, cfg.test_size)
    cfg.classes = grab("dataset", "classes", int, cfg.classes)

    cfg.arch = grab("model", "arch", str, cfg.arch)
    cfg.hidden = grab("model", "hidden", as_int_tuple, cfg.hidden)
    cfg.channels = grab("model", "channels", as_int_tuple, cfg.channels)
    cfg.init_seed = grab("model", "init_seed", as_opt_int, cfg.init_seed)

    cfg.regime = grab("train", "regime", str, cfg.regime)
    cfg.epochs = grab("train", "epochs", int, cfg.epochs)
    cfg.batch_size = grab("train", "batch_size", int, cfg.batch_size)
    cfg.lr0 = grab("train", "lr0", float, cfg.lr0)
    cfg.eta_min_factor = grab("train", "eta_min_factor", float, cfg.eta_min_factor)
    cfg.momentum = grab("train", "momentum", float, cfg.momentum)
    cfg.ops = grab("train", "ops", as_tuple, cfg.ops)
    cfg.identity_prob = grab("train", "identity_prob", float, cfg.identity_prob)
    cfg.delta_low = grab("train", "delta_low", float, cfg.delta_low)
    cfg.delta_high = grab("train", "delta_high", float, cfg.delta_high)
    cfg.delta_mode = grab("train", "delta_mode", str, cfg.delta_mode)
    cfg.attack_family = grab("train", "attack_family", str, cfg.attack_family)
    cfg.attack_epsilon = grab("train", "attack_epsilon", float, cfg.attack_epsilon)
    cfg.attack_steps = grab("train", "attack_steps", int, cfg.attack_steps)
    cfg.attack_step_size = grab("train", "attack_step_size", as_opt_float,
                                cfg.attack_step_size)
    cfg.attack_random_start = grab("train", "attack_random_start", as_bool,
                                   cfg.attack_random_start)
    cfg.checkpoint_every = grab("train", "checkpoint_every", as_opt_int,
                                cfg.checkpoint_every)

    cfg.corruptions = grab("eval", "corruptions", as_tuple, cfg.corruptions)
    cfg.severities = grab("eval", "severities", as_int_tuple, cfg.severities)
    cfg.attacks = grab("eval", "attacks", _parse_attacks, cfg.attacks)
    cfg.pgd_steps = grab("eval", "pgd_steps", int, cfg.pgd_steps)
    cfg.eval_attack_step_size = grab("eval", "attack_step_size", as_opt_float,
                                     cfg.eval_attack_step_size)
    cfg.pgd_random_start = grab("eval", "pgd_random_start", as_bool, cfg.pgd_random_start)
    cfg.logit_mode = grab("eval", "logit_mode", str, cfg.logit_mode)
    cfg.calibration_bins = grab("eval", "calibration_bins", int, cfg.calibration_bins)
    cfg.calibration_mode = grab("eval", "calibration_mode", str, cfg.calibration_mode)
    cfg.attack_subset = grab("eval", "attack_subset", as_opt_int, cfg.attack_subset)

    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# pieces of the pipeline
# ---------------------------------------------------------------------------

def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.source == "synthetic":
        train_n = cfg.train_size or 2000
        test_n = cfg.test_size or 500
        train_ds = synthesize_shapes(train_n, cfg.classes,
                                     derived_seed(cfg.seed, _SYNTH_TRAIN_STREAM))
        test_ds = synthesize_shapes(test_n, cfg.classes,
                                    derived_seed(cfg.seed, _SYNTH_TEST_STREAM))
        return train_ds, test_ds
    train_ds = concat_datasets([load_cifar_binary(p, cfg.source) for p in cfg.train_files])
    test_ds = concat_datasets([load_cifar_binary(p, cfg.source) for p in cfg.test_files])
    if cfg.train_size:
        train_ds = subset(train_ds, cfg.train_size, derived_seed(cfg.seed, _SUBSET_TRAIN_STREAM))
    if cfg.test_size:
        test_ds = subset(test_ds, cfg.test_size, derived_seed(cfg.seed, _SUBSET_TEST_STREAM))
    return train_ds, test_ds


def build_model_config(cfg: ExperimentConfig, class_count: int):
    init_seed = cfg.init_seed if cfg.init_seed is not None else cfg.seed
    common = dict(arch=cfg.arch, input_shape=(3, 32, 32), num_classes=class_count,
                  num_ops=len(cfg.ops), hidden=cfg.hidden, channels=cfg.channels,
                  init_seed=init_seed)
    if cfg.regime == "mtl":
        return MtlModelConfig(**common)
    return ModelConfig(**common)


def build_train_config(cfg: ExperimentConfig) -> TrainConfig:
    attack = None
    if cfg.regime in ("adv_fgsm", "adv_pgd"):
        attack = AttackConfig(
            family=cfg.attack_family,
            epsilon=cfg.attack_epsilon,
            steps=cfg.attack_steps if cfg.attack_family == "pgd" else 1,
            step_size=cfg.attack_step_size,
            random_start=cfg.attack_random_start and cfg.attack_family == "pgd",
            logit_mode=cfg.logit_mode,
        )
    return TrainConfig(
        regime=cfg.regime, epochs=cfg.epochs, batch_size=cfg.batch_size, lr0=cfg.lr0,
        eta_min=cfg.eta_min_factor * cfg.lr0, momentum=cfg.momentum, seed=cfg.seed,
        ops=cfg.ops, identity_prob=cfg.identity_prob, delta_low=cfg.delta_low,
        delta_high=cfg.delta_high, delta_mode=cfg.delta_mode, attack=attack,
    )


def load_model(cfg: ExperimentConfig, class_count: int, run_dir: Path):
    """Rebuild the architecture from config and restore checkpoint weights."""
    ckpt = run_dir / ARTIFACT_NAMES["checkpoint"]
    if not ckpt.exists():
        raise DataError(f"no checkpoint at {ckpt}; run `labelaug train` first")
    model_cfg = build_model_config(cfg, class_count)
    model = build_mtl_model(model_cfg) if cfg.regime == "mtl" else build_model(model_cfg)
    weights = load_weights(ckpt)
    if set(weights) != set(model.params):
        raise DataError(f"checkpoint {ckpt} does not match the configured architecture")
    for name, arr in weights.items():
        if arr.shape != model.params[name].shape:
            raise DataError(f"checkpoint tensor {name!r} has shape {arr.shape}, "
                            f"expected {model.params[name].shape}")
        model.params[name] = arr
    return model


def evaluate_clean(model, test_ds: Dataset, cfg: ExperimentConfig):
    """Clean error plus calibration from masked predictions."""
    logits = model.predict_logits(test_ds.images)
    preds, probs = masked_class_prediction(logits, test_ds.class_count)
    clean = error_rate(preds, test_ds.labels)
    records = prediction_records(probs, preds, test_ds.labels)
    ece, rms = calibration_errors(records, cfg.calibration_bins, cfg.calibration_mode)
    return {"clean_error": clean, "ece": 100.0 * ece, "rms": 100.0 * rms}


def evaluate_corruptions(model, test_ds: Dataset, cfg: ExperimentConfig):
    """Per-severity errors for every configured corruption, plus CE_c and mCE."""
    severity_errors: dict[str, list[float]] = {}
    for c_idx, cid in enumerate(cfg.corruptions):
        errors = []
        for severity in cfg.severities:
            spec = CorruptionSpec(cid, severity)
            corrupted = np.empty_like(test_ds.images)
            for i in range(len(test_ds)):
                corrupted[i] = apply_corruption(
                    test_ds.images[i], spec,
                    derived_seed(cfg.seed, _CORRUPTION_STREAM, c_idx, severity, i),
                )
            preds, _ = masked_class_prediction(
                model.predict_logits(corrupted), test_ds.class_count
            )
            errors.append(error_rate(preds, test_ds.labels))
        severity_errors[cid] = errors
    ce, mce = corruption_errors(severity_errors)
    return {"severity_errors": severity_errors, "ce": ce, "mce": mce}


def _eval_attack_config(cfg: ExperimentConfig, family: str, eps: float) -> AttackConfig:
    if family == "fgsm":
        return AttackConfig("fgsm", eps, logit_mode=cfg.logit_mode)
    return AttackConfig("pgd", eps, steps=cfg.pgd_steps,
                        step_size=cfg.eval_attack_step_size,
                        random_start=cfg.pgd_random_start, logit_mode=cfg.logit_mode)


def evaluate_attacks(model, test_ds: Dataset, cfg: ExperimentConfig,
                     batch_size: int = 128, dump_dir=None):
    """Adversarial error for each configured (family, epsilon) pair.

    With ``dump_dir`` the generated examples are also written out as raw
    tensor files (one ``.npy`` per attack) for inspection.
    """
    n = len(test_ds) if cfg.attack_subset is None else min(cfg.attack_subset, len(test_ds))
    images, truth = test_ds.images[:n], test_ds.labels[:n]
    results: dict[str, float] = {}
    for a_idx, (family, eps) in enumerate(cfg.attacks):
        attack_cfg = _eval_attack_config(cfg, family, eps)
        preds = []
        examples = []
        for b_idx, start in enumerate(range(0, n, batch_size)):
            xb = images[start:start + batch_size]
            yb = truth[start:start + batch_size]
            adv = run_attack(model, xb, yb, attack_cfg,
                             derived_seed(cfg.seed, _ATTACK_EVAL_STREAM, a_idx, b_idx)).examples
            p, _ = masked_class_prediction(model.predict_logits(adv), test_ds.class_count)
            preds.append(p)
            if dump_dir is not None:
                examples.append(adv)
        results[f"{family}@{eps!r}"] = error_rate(np.concatenate(preds), truth)
        if dump_dir is not None:
            dump_dir = Path(dump_dir)
            dump_dir.mkdir(parents=True, exist_ok=True)
            np.save(dump_dir / f"{family}_{eps!r}.npy", np.concatenate(examples))
    return results


# ---------------------------------------------------------------------------
# manifest and full runs
# ---------------------------------------------------------------------------

def _write_manifest(cfg: ExperimentConfig, run_dir: Path, timings: dict | None):
    manifest = {
        "run_id": cfg.run_id,
        "toolkit_version": __version__,
        "config": cfg.canonical_text(),
        "artifacts": {key: name for key, name in ARTIFACT_NAMES.items() if key != "manifest"},
        "timings_seconds": timings or {},
    }
    (run_dir / ARTIFACT_NAMES["manifest"]).write_text(json.dumps(manifest, indent=2) + "\n")


def _refuse_existing(run_dir: Path, force: bool, names: list[str]):
    if force:
        return
    existing = [n for n in names if (run_dir / n).exists()]
    if existing:
        raise RuntimeError(
            f"{run_dir} already contains {', '.join(existing)}; rerun with --force to overwrite"
        )


def _periodic_checkpointer(cfg: ExperimentConfig, run_dir: Path):
    if not cfg.checkpoint_every:
        return None

    def callback(stats, model):
        if (stats.epoch + 1) % cfg.checkpoint_every == 0:
            save_weights(run_dir / f"model_epoch{stats.epoch + 1}.lakt", model.params)

    return callback


def run_training(cfg: ExperimentConfig, force: bool = False):
    """Train stage: manifest, checkpoint, and epoch log."""
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    _refuse_existing(run_dir, force, [ARTIFACT_NAMES["checkpoint"]])
    _write_manifest(cfg, run_dir, None)

    timings = {}
    start = time.perf_counter()
    train_ds, _ = load_datasets(cfg)
    model_cfg = build_model_config(cfg, train_ds.class_count)
    model, log = train(build_train_config(cfg), model_cfg, train_ds,
                       epoch_callback=_periodic_checkpointer(cfg, run_dir))
    timings["train"] = time.perf_counter() - start

    save_weights(run_dir / ARTIFACT_NAMES["checkpoint"], model.params)
    with open(run_dir / ARTIFACT_NAMES["epoch_log"], "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(epoch_log_rows(log))
    _write_manifest(cfg, run_dir, timings)
    return model, log


def run_experiment(cfg: ExperimentConfig, force: bool = False) -> EvalReport:
    """Full pipeline: train, evaluate everything, emit the report files."""
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    _refuse_existing(run_dir, force, list(ARTIFACT_NAMES.values())[1:])
    _write_manifest(cfg, run_dir, None)

    timings = {}
    start = time.perf_counter()
    train_ds, test_ds = load_datasets(cfg)
    model_cfg = build_model_config(cfg, train_ds.class_count)
    model, log = train(build_train_config(cfg), model_cfg, train_ds,
                       epoch_callback=_periodic_checkpointer(cfg, run_dir))
    timings["train"] = time.perf_counter() - start

    save_weights(run_dir / ARTIFACT_NAMES["checkpoint"], model.params)
    with open(run_dir / ARTIFACT_NAMES["epoch_log"], "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(epoch_log_rows(log))

    start = time.perf_counter()
    clean = evaluate_clean(model, test_ds, cfg)
    timings["eval_clean"] = time.perf_counter() - start

    corruption = {"severity_errors": {}, "ce": {}, "mce": None}
    if cfg.corruptions:
        start = time.perf_counter()
        corruption = evaluate_corruptions(model, test_ds, cfg)
        timings["eval_corruptions"] = time.perf_counter() - start

    attack_errors = {}
    if cfg.attacks:
        start = time.perf_counter()
        attack_errors = evaluate_attacks(model, test_ds, cfg)
        timings["eval_attacks"] = time.perf_counter() - start

    report = EvalReport(
        run_id=cfg.run_id,
        clean_error=clean["clean_error"],
        ece=clean["ece"],
        rms=clean["rms"],
        corruption_severity_errors=corruption["severity_errors"],
        corruption_ce=corruption["ce"],
        mce=corruption["mce"],
        attack_errors=attack_errors,
        calibration_bins=cfg.calibration_bins,
        calibration_mode=cfg.calibration_mode,
        attack_settings={
            "logit_mode": cfg.logit_mode,
            "pgd_steps": cfg.pgd_steps,
            "pgd_random_start": cfg.pgd_random_start,
            "step_size_rule": ("epsilon/4" if cfg.eval_attack_step_size is None
                               else cfg.eval_attack_step_size),
            "attack_subset": cfg.attack_subset,
        },
    )
    (run_dir / ARTIFACT_NAMES["report_json"]).write_text(report.to_json())
    (run_dir / ARTIFACT_NAMES["report_csv"]).write_text(report.to_csv_row())
    _write_manifest(cfg, run_dir, timings)
    return report


def load_report(run_dir) -> EvalReport:
    path = Path(run_dir) / ARTIFACT_NAMES["report_json"]
    if not path.exists():
        raise DataError(f"no report at {path}")
    return EvalReport.from_json(path.read_text())


def compare_runs(run_dirs) -> str:
    """Comparison CSV: one row per metric, one column per run, plus percent
    change of every run against the first (negative = improvement)."""
    if len(run_dirs) < 2:
        raise ValidationError("compare needs at least two runs")
    reports = [load_report(d) for d in run_dirs]
    names = [Path(d).name for d in run_dirs]
    base_rows = reports[0].metric_rows()
    metric_names = [name for name, _ in base_rows]
    for rep, run_name in zip(reports[1:], names[1:]):
        if [name for name, _ in rep.metric_rows()] != metric_names:
            raise ConfigError(
                f"run {run_name} has incompatible metrics; re-run with matching eval sections"
            )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["metric"] + names + [f"pct_change_{n}_vs_{names[0]}" for n in names[1:]]
    writer.writerow(header)
    for row_idx, metric in enumerate(metric_names):
        values = [rep.metric_rows()[row_idx][1] for rep in reports]
        base = values[0]
        changes = [repr(percent_change(v, base)) if base != 0 else "" for v in values[1:]]
        writer.writerow([metric] + [repr(v) for v in values] + changes)
    return buf.getvalue()


def percent_change(value: float, baseline: float) -> float:
    """Signed percent change vs baseline; negative means improvement."""
    return 100.0 * (value - baseline) / baseline
