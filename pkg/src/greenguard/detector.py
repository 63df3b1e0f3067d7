"""Zero-day verdicts from reconstruction error: threshold sweep, classification, scoring."""

import csv
import enum
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write
from .autoenc import reconstruction_error, row_errors
from .errors import DimensionMismatch, EmptyTestSet, EmptyValidationSet
from .schema import AttackClass

SWEEP_LO = 0.05
SWEEP_HI = 0.95
SWEEP_STEP = 0.05
REFERENCE_THRESHOLD = 0.15


class Decision(enum.Enum):
    NORMAL = "Normal"
    ZERO_DAY = "ZeroDay"


@dataclass(frozen=True)
class DetectorConfig:
    threshold: float = REFERENCE_THRESHOLD
    metric: str = "mse"

    def __post_init__(self):
        if not SWEEP_LO <= self.threshold <= SWEEP_HI:
            raise ValueError(f"threshold {self.threshold} outside [{SWEEP_LO}, {SWEEP_HI}]")
        if self.metric.lower() not in ("mse", "mae"):
            raise ValueError(f"unknown metric {self.metric!r}")
        object.__setattr__(self, "metric", self.metric.lower())

    @classmethod
    def from_model(cls, model, default=REFERENCE_THRESHOLD):
        theta = model.threshold if model.threshold is not None else default
        return cls(theta, model.metric or "mse")


@dataclass(frozen=True)
class DetectionVerdict:
    decision: Decision
    error: float
    threshold: float

    @property
    def is_zero_day(self):
        return self.decision is Decision.ZERO_DAY


def decide(error, threshold):
    """Strictly greater than the threshold is a zero-day; equal is still normal."""
    return Decision.ZERO_DAY if error > threshold else Decision.NORMAL


def classify(model, cfg, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.input_dim:
        raise DimensionMismatch(f"expected a vector of {model.input_dim} features, got shape {x.shape}")
    err = float(row_errors(model, x, cfg.metric)[0])
    return DetectionVerdict(decide(err, cfg.threshold), err, cfg.threshold)


def classify_errors(errors, threshold):
    """Boolean zero-day flags for an array of errors."""
    return np.asarray(errors, dtype=np.float64) > threshold


def sweep_grid(lo=SWEEP_LO, hi=SWEEP_HI, step=SWEEP_STEP):
    n = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    tpr: float
    tnr: float
    balanced_accuracy: float


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)

    def best(self):
        """Highest balanced accuracy; the first (smallest) threshold wins ties."""
        best = self.rows[0]
        for row in self.rows[1:]:
            if row.balanced_accuracy > best.balanced_accuracy:
                best = row
        return best

    def write_csv(self, path):
        with atomic_write(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "tpr", "tnr", "balanced_accuracy"])
            for r in self.rows:
                writer.writerow([f"{r.threshold:.2f}", repr(r.tpr), repr(r.tnr), repr(r.balanced_accuracy)])


def calibrate_from_errors(benign_errors, attack_errors, lo=SWEEP_LO, hi=SWEEP_HI, step=SWEEP_STEP):
    benign = np.asarray(benign_errors, dtype=np.float64)
    attack = np.asarray(attack_errors, dtype=np.float64)
    if benign.size == 0 or attack.size == 0:
        raise EmptyValidationSet("calibration needs both benign and attack validation rows")
    table = SweepTable()
    for theta in sweep_grid(lo, hi, step):
        tpr = int(np.count_nonzero(attack > theta)) / attack.size
        tnr = int(np.count_nonzero(benign <= theta)) / benign.size
        table.rows.append(SweepRow(theta, tpr, tnr, (tpr + tnr) / 2))
    return table.best().threshold, table


def calibrate_threshold(model, val_benign, val_attack, lo=SWEEP_LO, hi=SWEEP_HI,
                        step=SWEEP_STEP, metric="mse"):
    """Pick the grid threshold maximizing balanced accuracy on validation rows.

    Returns:
        ``(theta, sweep_table)``.
    """
    if len(val_benign) == 0 or len(val_attack) == 0:
        raise EmptyValidationSet("calibration needs both benign and attack validation rows")
    return calibrate_from_errors(row_errors(model, val_benign, metric),
                                 row_errors(model, val_attack, metric), lo, hi, step)


@dataclass
class EvalReport:
    """Binary detection accuracy per class (Benign counts as correct when Normal)."""

    per_class: dict
    support: dict
    confusion: dict
    threshold: float
    metric: str = "mse"

    @property
    def mean_accuracy(self):
        return float(np.mean(list(self.per_class.values())))

    @property
    def worst_case_accuracy(self):
        return min(self.per_class.values())

    @property
    def worst_class(self):
        return min(self.per_class, key=lambda c: (self.per_class[c], c.value))

    @property
    def false_positive_rate(self):
        benign = self.confusion["fp"] + self.confusion["tn"]
        return self.confusion["fp"] / benign if benign else float("nan")

    @property
    def detection_rate(self):
        attacks = self.confusion["tp"] + self.confusion["fn"]
        return self.confusion["tp"] / attacks if attacks else float("nan")

    @property
    def total(self):
        return sum(self.confusion.values())

    def to_text(self):
        lines = [f"{'class':<12} {'n':>8} {'accuracy':>9}"]
        for c in AttackClass:
            if c in self.per_class:
                lines.append(f"{c.value:<12} {self.support[c]:>8d} {self.per_class[c]:>9.3f}")
        lines.append(f"{'mean':<12} {'':>8} {self.mean_accuracy:>9.3f}")
        lines.append(f"{'worst-case':<12} {'':>8} {self.worst_case_accuracy:>9.3f}")
        lines.append(f"benign false-positive rate: {self.false_positive_rate:.3f}")
        lines.append(f"attack detection rate: {self.detection_rate:.3f}")
        lines.append(f"threshold: {self.threshold:g} ({self.metric}); accuracy is binary normal/zero-day per class")
        return "\n".join(lines) + "\n"

    def to_kv(self):
        kv = {
            "threshold": f"{self.threshold:g}",
            "metric": self.metric,
            "mean_accuracy": f"{self.mean_accuracy:.6f}",
            "worst_case_accuracy": f"{self.worst_case_accuracy:.6f}",
            "worst_class": self.worst_class.value,
            "false_positive_rate": f"{self.false_positive_rate:.6f}",
            "detection_rate": f"{self.detection_rate:.6f}",
        }
        for c in AttackClass:
            if c in self.per_class:
                kv[f"accuracy.{c.value}"] = f"{self.per_class[c]:.6f}"
                kv[f"support.{c.value}"] = str(self.support[c])
        for k in ("tp", "fp", "tn", "fn"):
            kv[f"confusion.{k}"] = str(self.confusion[k])
        return "".join(f"{k}={v}\n" for k, v in kv.items())


def evaluate_errors(errors, labels, threshold, metric="mse"):
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise EmptyTestSet("no test rows")
    if errors.shape[0] != len(labels):
        raise DimensionMismatch("errors and labels differ in length")
    flagged = classify_errors(errors, threshold)
    correct, support = {}, {}
    confusion = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for flag, lab in zip(flagged, labels):
        support[lab] = support.get(lab, 0) + 1
        ok = bool(flag) == lab.is_attack
        correct[lab] = correct.get(lab, 0) + ok
        if lab.is_attack:
            confusion["tp" if flag else "fn"] += 1
        else:
            confusion["fp" if flag else "tn"] += 1
    per_class = {c: correct[c] / support[c] for c in AttackClass if c in support}
    return EvalReport(per_class, {c: support[c] for c in per_class}, confusion, threshold, metric)


def evaluate(model, cfg, test):
    if len(test) == 0:
        raise EmptyTestSet("no test rows")
    return evaluate_errors(row_errors(model, test.X, cfg.metric), test.labels, cfg.threshold, cfg.metric)


__all__ = [
    "Decision", "DetectorConfig", "DetectionVerdict", "EvalReport", "SweepRow", "SweepTable",
    "calibrate_from_errors", "calibrate_threshold", "classify", "classify_errors", "decide",
    "evaluate", "evaluate_errors", "reconstruction_error", "sweep_grid",
]
