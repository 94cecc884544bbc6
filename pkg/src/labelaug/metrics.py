"""Robustness and calibration measures, plus the evaluation report schema.

Error rates are percentages in [0, 100].  Calibration errors are returned
as fractions by ``calibration_errors`` (matching their definitions) and
stored as percentages in ``EvalReport`` alongside everything else.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

CALIBRATION_BINS = 15
CALIBRATION_MODES = ("equal_count", "equal_width")


@dataclass
class PredictionRecord:
    """One test prediction: winning softmax score plus predicted/true class."""

    confidence: float
    predicted: int
    true: int

    def __post_init__(self):
        if not 0.0 < self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside (0, 1]")


def prediction_records(probs: np.ndarray, predicted: np.ndarray,
                       truths: np.ndarray) -> list[PredictionRecord]:
    """Build records from masked-softmax probabilities and labels."""
    return [PredictionRecord(float(probs[i, predicted[i]]), int(predicted[i]), int(truths[i]))
            for i in range(len(predicted))]


def error_rate(predicted, truths) -> float:
    """Percent misclassified: 100 * (1 - accuracy)."""
    predicted = np.asarray(predicted)
    truths = np.asarray(truths)
    if predicted.shape != truths.shape:
        raise ValidationError(f"length mismatch: {predicted.shape} vs {truths.shape}")
    if predicted.size == 0:
        raise ValidationError("error_rate needs at least one prediction")
    wrong = int(np.count_nonzero(predicted != truths))
    return 100.0 * wrong / predicted.size


def corruption_errors(per_severity_errors: dict) -> tuple[dict, float]:
    """Average the five severity errors per corruption, then across corruptions.

    Returns ``({corruption: CE_c}, mCE)`` with plain sum-then-divide
    arithmetic in the given order.
    """
    if not per_severity_errors:
        raise ValidationError("no corruption errors supplied")
    ce = {}
    for cid, errors in per_severity_errors.items():
        errors = list(errors)
        if len(errors) != 5:
            raise ValidationError(f"corruption {cid!r} has {len(errors)} severities, expected 5")
        total = 0.0
        for e in errors:
            total += float(e)
        ce[cid] = total / 5.0
    mce_total = 0.0
    for v in ce.values():
        mce_total += v
    return ce, mce_total / len(ce)


def _binned_errors(conf: np.ndarray, correct: np.ndarray, sizes: list[int],
                   order: np.ndarray) -> tuple[float, float]:
    n = len(conf)
    ece = 0.0
    rms = 0.0
    start = 0
    for size in sizes:
        if size == 0:
            continue
        idx = order[start:start + size]
        gap = float(correct[idx].mean() - conf[idx].mean())
        weight = size / n
        ece += weight * abs(gap)
        rms += weight * gap * gap
        start += size
    return ece, math.sqrt(rms)


def calibration_errors(records, bins: int = CALIBRATION_BINS,
                       mode: str = "equal_count") -> tuple[float, float]:
    """Expected (L1) and RMS (L2) calibration error over binned predictions.

    ``equal_count`` (the default) sorts by confidence and splits into
    ``bins`` contiguous groups of near-equal size (the first ``n mod bins``
    groups take one extra record).  ``equal_width`` partitions [0, 1] into
    fixed-width bins; empty bins contribute zero.  Both results are
    fractions in [0, 1].
    """
    if mode not in CALIBRATION_MODES:
        raise ValidationError(f"unknown binning mode {mode!r}; expected {CALIBRATION_MODES}")
    if bins < 1:
        raise ValidationError(f"bins must be >= 1, got {bins}")
    records = list(records)
    if not records:
        raise ValidationError("calibration_errors needs at least one record")
    conf = np.array([r.confidence for r in records], dtype=np.float64)
    correct = np.array([r.predicted == r.true for r in records], dtype=np.float64)
    n = len(records)

    if mode == "equal_count":
        if bins > n:
            raise ValidationError(f"equal_count binning needs bins <= n ({bins} > {n})")
        # stable: ties broken by original record index
        order = np.lexsort((np.arange(n), conf))
        base, extra = divmod(n, bins)
        sizes = [base + 1] * extra + [base] * (bins - extra)
        return _binned_errors(conf, correct, sizes, order)

    bin_idx = np.minimum((conf * bins).astype(int), bins - 1)
    order = np.lexsort((np.arange(n), bin_idx))
    sizes = [int(np.count_nonzero(bin_idx == b)) for b in range(bins)]
    return _binned_errors(conf, correct, sizes, order)


# ---------------------------------------------------------------------------
# evaluation report
# ---------------------------------------------------------------------------

REPORT_SCHEMA_VERSION = 1


def _check_rate(name: str, value: float):
    if not 0.0 <= value <= 100.0:
        raise ValidationError(f"{name} = {value} outside [0, 100] percent")


@dataclass
class EvalReport:
    """Row schema behind the result tables: one trained model, all metrics.

    Every rate is a percentage.  ``attack_errors`` is keyed by
    ``"family@epsilon"`` (e.g. ``"fgsm@0.03"``).
    """

    run_id: str
    clean_error: float
    ece: float
    rms: float
    corruption_severity_errors: dict = field(default_factory=dict)
    corruption_ce: dict = field(default_factory=dict)
    mce: float | None = None
    attack_errors: dict = field(default_factory=dict)
    calibration_bins: int = CALIBRATION_BINS
    calibration_mode: str = "equal_count"
    attack_settings: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def __post_init__(self):
        _check_rate("clean_error", self.clean_error)
        _check_rate("ece", self.ece)
        _check_rate("rms", self.rms)
        for cid, errs in self.corruption_severity_errors.items():
            for s, e in enumerate(errs, start=1):
                _check_rate(f"{cid}@s{s}", e)
        for key, e in self.attack_errors.items():
            _check_rate(key, e)
        if self.corruption_ce:
            mean = sum(self.corruption_ce.values()) / len(self.corruption_ce)
            if self.mce is None or abs(self.mce - mean) > 1e-9:
                raise ValidationError(
                    f"mce {self.mce} is not the mean of the corruption errors ({mean})"
                )

    def metric_rows(self) -> list[tuple[str, float]]:
        """Canonical (metric name, value) pairs used by reports and comparisons."""
        rows = [("clean_error", self.clean_error)]
        if self.mce is not None:
            rows.append(("mce", self.mce))
        rows.append(("ece", self.ece))
        rows.append(("rms", self.rms))
        rows.extend((key, self.attack_errors[key]) for key in sorted(self.attack_errors))
        return rows

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "run_id": self.run_id,
            "clean_error": self.clean_error,
            "mce": self.mce,
            "ece": self.ece,
            "rms": self.rms,
            "corruption_ce": {k: self.corruption_ce[k] for k in sorted(self.corruption_ce)},
            "corruption_severity_errors": {
                k: list(self.corruption_severity_errors[k])
                for k in sorted(self.corruption_severity_errors)
            },
            "attack_errors": {k: self.attack_errors[k] for k in sorted(self.attack_errors)},
            "calibration_bins": self.calibration_bins,
            "calibration_mode": self.calibration_mode,
            "attack_settings": {k: self.attack_settings[k] for k in sorted(self.attack_settings)},
        }

    def to_json(self) -> str:
        """Canonical serialization: fixed key order, shortest-round-trip floats."""
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        if data.get("schema_version") != REPORT_SCHEMA_VERSION:
            raise ValidationError(
                f"unsupported report schema {data.get('schema_version')!r}"
            )
        return cls(
            run_id=data["run_id"],
            clean_error=data["clean_error"],
            ece=data["ece"],
            rms=data["rms"],
            corruption_severity_errors=data.get("corruption_severity_errors", {}),
            corruption_ce=data.get("corruption_ce", {}),
            mce=data.get("mce"),
            attack_errors=data.get("attack_errors", {}),
            calibration_bins=data.get("calibration_bins", CALIBRATION_BINS),
            calibration_mode=data.get("calibration_mode", "equal_count"),
            attack_settings=data.get("attack_settings", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))

    def csv_header(self) -> list[str]:
        cols = ["run_id", "clean_error", "mce", "ece", "rms"]
        cols.extend(sorted(self.attack_errors))
        cols.extend(f"ce_{c}" for c in sorted(self.corruption_ce))
        return cols

    def to_csv_row(self) -> str:
        """Header + one data row (comma, UTF-8, LF)."""
        values = [self.run_id, repr(self.clean_error),
                  "" if self.mce is None else repr(self.mce),
                  repr(self.ece), repr(self.rms)]
        values.extend(repr(self.attack_errors[k]) for k in sorted(self.attack_errors))
        values.extend(repr(self.corruption_ce[c]) for c in sorted(self.corruption_ce))
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.csv_header())
        writer.writerow(values)
        return buf.getvalue()
