"""Accuracy, corruption-error, and precision-recall metrics.

Corruption error for one corruption is the model's severity-summed top-1
error divided by the baseline's, times 100; the relative variant subtracts
each model's clean error from every severity term first.  The baseline
therefore scores exactly 100, and means over the 15 corruptions give mCE and
mRCE.  Average precision uses step-wise (rectangle) integration over the
distinct score thresholds; macro-AP averages it over classes that have at
least one positive.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corruption.severity import CORRUPTION_KINDS, SEVERITY_LEVELS
from .errors import ContractError, DataError, UndefinedMetricError


def topk_accuracy(ranked: np.ndarray, labels: np.ndarray, k: int) -> float:
    """Fraction of samples whose label appears within the first k ranks."""
    ranked = np.atleast_2d(np.asarray(ranked))
    labels = np.asarray(labels)
    if ranked.shape[0] != labels.shape[0]:
        raise ContractError(
            f"got {ranked.shape[0]} prediction rows for {labels.shape[0]} labels"
        )
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    k = min(k, ranked.shape[1])
    if labels.size == 0:
        raise ContractError("cannot compute accuracy over zero samples")
    hits = (ranked[:, :k] == labels[:, None]).any(axis=1)
    return float(hits.mean())


# ---------------------------------------------------------------------------
# error tables and corruption errors
# ---------------------------------------------------------------------------


@dataclass
class ErrorTable:
    """Clean top-1 error plus the complete 15 x 5 per-corruption error grid."""

    model: str
    clean_error: float
    grid: dict[str, list[float]]  # kind -> [e1..e5]

    def __post_init__(self) -> None:
        missing = [kind for kind in CORRUPTION_KINDS if kind not in self.grid]
        if missing:
            raise DataError(f"error table {self.model!r} missing corruptions: {missing}")
        unknown = [kind for kind in self.grid if kind not in CORRUPTION_KINDS]
        if unknown:
            raise DataError(f"error table {self.model!r} has unknown corruptions: {unknown}")
        for kind, errors in self.grid.items():
            if len(errors) != len(SEVERITY_LEVELS):
                raise DataError(f"{self.model!r}/{kind}: expected 5 severity errors")
            if any(not 0.0 <= e <= 1.0 for e in errors):
                raise DataError(f"{self.model!r}/{kind}: errors must lie in [0, 1]")
        if not 0.0 <= self.clean_error <= 1.0:
            raise DataError(f"{self.model!r}: clean error must lie in [0, 1]")

    @classmethod
    def from_json(cls, path: str | Path) -> "ErrorTable":
        path = Path(path)
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read error table {path}: {exc}") from exc
        try:
            return cls(model=obj["model"], clean_error=obj["clean_error"], grid=obj["grid"])
        except KeyError as exc:
            raise DataError(f"{path}: missing field {exc}") from exc

    def to_json(self, path: str | Path) -> None:
        obj = {"model": self.model, "clean_error": self.clean_error, "grid": self.grid}
        Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def corruption_error(model: ErrorTable, baseline: ErrorTable, kind: str) -> float:
    """CE for one corruption: ratio of severity-summed errors, in percent."""
    if kind not in CORRUPTION_KINDS:
        raise DataError(f"unknown corruption kind {kind!r}")
    num = float(np.sum(model.grid[kind]))
    den = float(np.sum(baseline.grid[kind]))
    if den <= 0.0:
        raise UndefinedMetricError(
            f"baseline {baseline.model!r} has zero summed error for {kind!r}"
        )
    return 100.0 * num / den

def relative_corruption_error(model: ErrorTable, baseline: ErrorTable, kind: str) -> float:
    """RCE: clean-subtracted severity sums; may be negative if corruption helps."""
    if kind not in CORRUPTION_KINDS:
        raise DataError(f"unknown corruption kind {kind!r}")
    num = float(np.sum(np.asarray(model.grid[kind]) - model.clean_error))
    den = float(np.sum(np.asarray(baseline.grid[kind]) - baseline.clean_error))
    if den == 0.0:
        raise UndefinedMetricError(
            f"baseline {baseline.model!r} has zero clean-subtracted sum for {kind!r}"
        )
    return 100.0 * num / den


def mean_ce(per_corruption: list[float] | np.ndarray) -> float:
    values = np.asarray(per_corruption, dtype=np.float64)
    if values.shape != (len(CORRUPTION_KINDS),):
        raise ContractError(f"expected exactly {len(CORRUPTION_KINDS)} values, got {values.shape}")
    return float(values.mean())


mean_rce = mean_ce  # same arithmetic over the 15 relative errors


# ---------------------------------------------------------------------------
# precision-recall
# ---------------------------------------------------------------------------


@dataclass
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    average_precision: float


@dataclass
class PRResult:
    curves: dict[int, PRCurve]
    macro_ap: float
    skipped_classes: list[int] = field(default_factory=list)


def _binary_pr(scores: np.ndarray, positives: np.ndarray) -> PRCurve:
    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    positives = positives[order]
    # distinct-threshold boundaries (last index of each tied block)
    distinct = np.nonzero(np.diff(scores))[0]
    boundaries = np.concatenate([distinct, [scores.size - 1]])
    tp = np.cumsum(positives)[boundaries]
    counts = boundaries + 1.0
    precision = tp / counts
    recall = tp / positives.sum()
    thresholds = scores[boundaries]
    recall_prev = np.concatenate([[0.0], recall[:-1]])
    ap = float(np.sum((recall - recall_prev) * precision))
    return PRCurve(thresholds, precision, recall, ap)


def pr_curve(scores: np.ndarray, labels: np.ndarray) -> PRResult:
    """One-vs-rest precision/recall per class plus macro-averaged precision.

    Classes without a single positive sample are excluded from the macro
    mean and reported in ``skipped_classes``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ContractError(
            f"scores must be (n_samples, n_classes) aligned with labels, got {scores.shape}"
        )
    if not np.all(np.isfinite(scores)):
        raise ContractError("scores contain non-finite values")

    curves: dict[int, PRCurve] = {}
    skipped: list[int] = []
    for cls in range(scores.shape[1]):
        positives = (labels == cls).astype(np.float64)
        if positives.sum() == 0:
            skipped.append(cls)
            continue
        curves[cls] = _binary_pr(scores[:, cls], positives)
    if not curves:
        raise UndefinedMetricError("no class has a positive sample; AP is undefined")
    macro_ap = float(np.mean([curve.average_precision for curve in curves.values()]))
    return PRResult(curves=curves, macro_ap=macro_ap, skipped_classes=skipped)


# ---------------------------------------------------------------------------
# evaluation report
# ---------------------------------------------------------------------------


def round_report(value: float) -> float:
    """Round-half-even to one decimal, the convention for reported tables."""
    return float(round(value, 1))


@dataclass
class EvalReport:
    provenance: dict
    clean: dict[str, float]  # top1/top3/top5 on the clean subset
    grid: dict[str, dict[int, dict[str, float]]]  # kind -> level -> topk accs
    ce: dict[str, float]
    rce: dict[str, float]
    mce: float
    mrce: float
    macro_ap: float
    pr_curves: dict[int, PRCurve] = field(default_factory=dict)
    skipped_classes: list[int] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "schema": "scene-robust/eval-report/v1",
            "provenance": self.provenance,
            "clean": self.clean,
            "grid": {
                kind: {str(level): accs for level, accs in levels.items()}
                for kind, levels in self.grid.items()
            },
            "ce": self.ce,
            "rce": self.rce,
            "mce": self.mce,
            "mrce": self.mrce,
            "pr": {
                "macro_ap": self.macro_ap,
                "skipped_classes": self.skipped_classes,
                "curves": {
                    str(cls): {
                        "thresholds": curve.thresholds.tolist(),
                        "precision": curve.precision.tolist(),
                        "recall": curve.recall.tolist(),
                        "average_precision": curve.average_precision,
                    }
                    for cls, curve in self.pr_curves.items()
                },
            },
        }

    def save_json(self, path: str | Path) -> None:
        # canonical form: sorted keys, no trailing whitespace
        Path(path).write_text(
            json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load_json(cls, path: str | Path) -> "EvalReport":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if obj.get("schema") != "scene-robust/eval-report/v1":
            raise DataError(f"{path}: not an eval report")
        curves = {
            int(cls): PRCurve(
                thresholds=np.asarray(data["thresholds"]),
                precision=np.asarray(data["precision"]),
                recall=np.asarray(data["recall"]),
                average_precision=data["average_precision"],
            )
            for cls, data in obj["pr"]["curves"].items()
        }
        return cls(
            provenance=obj["provenance"],
            clean=obj["clean"],
            grid={
                kind: {int(level): accs for level, accs in levels.items()}
                for kind, levels in obj["grid"].items()
            },
            ce=obj["ce"],
            rce=obj["rce"],
            mce=obj["mce"],
            mrce=obj["mrce"],
            macro_ap=obj["pr"]["macro_ap"],
            pr_curves=curves,
            skipped_classes=obj["pr"]["skipped_classes"],
        )

    def write_grid_csv(self, path: str | Path) -> None:
        """Accuracy grid CSV: rows are severities, columns corruptions, plus
        the severity average; cells are top-1 percentages, one decimal."""
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["severity", *CORRUPTION_KINDS, "avg"])
            for level in SEVERITY_LEVELS:
                accs = [self.grid[kind][level]["top1"] * 100.0 for kind in CORRUPTION_KINDS]
                writer.writerow(
                    [level]
                    + [f"{round_report(a):.1f}" for a in accs]
                    + [f"{round_report(float(np.mean(accs))):.1f}"]
                )

    def write_pr_csv(self, path: str | Path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class_id", "threshold", "recall", "precision"])
            for cls in sorted(self.pr_curves):
                curve = self.pr_curves[cls]
                for t, r, p in zip(curve.thresholds, curve.recall, curve.precision):
                    writer.writerow([cls, repr(float(t)), repr(float(r)), repr(float(p))])
