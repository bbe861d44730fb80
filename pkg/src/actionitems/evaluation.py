"""Positive-class F1, multi-seed aggregation, and report tables."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

DECISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class PredictionRecord:
    meeting_id: str
    sentence_id: int
    gold: int
    predicted: int
    positive_probability: float

    def __post_init__(self):
        if self.gold not in (0, 1) or self.predicted not in (0, 1):
            raise ValueError("gold and predicted must be binary")
        if not 0.0 <= self.positive_probability <= 1.0:
            raise ValueError("positive_probability must be in [0, 1]")


@dataclass(frozen=True)
class MetricReport:
    precision: float
    recall: float
    positive_f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    zero_division: bool = False


@dataclass(frozen=True)
class AggregateReport:
    """Cross-seed aggregate: mean and sample (n-1) standard deviation."""

    values: tuple[float, ...]
    mean: float
    std: float
    single_run: bool = False

    def format(self, scale: float = 1.0, digits: int = 2) -> str:
        return f"{self.mean * scale:.{digits}f} ±{self.std * scale:.{digits}f}"


def positive_f1(records: Sequence[PredictionRecord]) -> MetricReport:
    """Precision/recall/F1 of the positive class.

    Zero-denominator cases (no predicted positives, no gold positives, or
    p + r = 0) report 0 with the zero_division flag set.
    """
    if not records:
        raise ValueError("no prediction records")
    tp = sum(1 for r in records if r.gold == 1 and r.predicted == 1)
    fp = sum(1 for r in records if r.gold == 0 and r.predicted == 1)
    fn = sum(1 for r in records if r.gold == 1 and r.predicted == 0)
    tn = len(records) - tp - fp - fn
    zero_division = False
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision, zero_division = 0.0, True
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall, zero_division = 0.0, True
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, zero_division = 0.0, True
    return MetricReport(precision, recall, f1, tp, fp, fn, tn, zero_division)


def aggregate(per_seed_f1: Sequence[float]) -> AggregateReport:
    """Arithmetic mean and sample std (n-1) of per-seed best results."""
    if not per_seed_f1:
        raise ValueError("no values to aggregate")
    values = tuple(float(v) for v in per_seed_f1)
    n = len(values)
    mean = sum(values) / n
    if n == 1:
        return AggregateReport(values=values, mean=mean, std=0.0, single_run=True)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return AggregateReport(values=values, mean=mean, std=math.sqrt(var))


# ---------------------------------------------------------------------------
# Prediction dumps
# ---------------------------------------------------------------------------

def write_predictions(records: Iterable[PredictionRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                json.dumps(
                    {
                        "meeting_id": r.meeting_id,
                        "sentence_id": r.sentence_id,
                        "gold": r.gold,
                        "predicted": r.predicted,
                        "positive_probability": r.positive_probability,
                    }
                )
                + "\n"
            )


def read_predictions(path: str | Path) -> list[PredictionRecord]:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                PredictionRecord(
                    meeting_id=obj["meeting_id"],
                    sentence_id=obj["sentence_id"],
                    gold=obj["gold"],
                    predicted=obj["predicted"],
                    positive_probability=obj["positive_probability"],
                )
            )
    return out


# ---------------------------------------------------------------------------
# Report tables
# ---------------------------------------------------------------------------

LAYOUTS = ("table2", "table3", "table4")

_GROUP_LABELS = {
    "sentence": "sentence",
    "local": "+ local context",
    "global": "+ global context",
    "local_and_global": "+ local & global context",
}

_VARIANT_LABELS = {
    "ce_only": None,  # the group's own baseline row
    "r_drop": "w/ R-Drop",
    "r_drop_sentence": "w/ R-Drop",
    "r_drop_context": "w/ R-Drop",
    "context_drop_fixed": "w/ Context-Drop (Fixed)",
    "context_drop_dynamic": "w/ Context-Drop (Dynamic)",
}


def _row(cells: Sequence[str], widths: Sequence[int]) -> str:
    padded = [c.ljust(w) for c, w in zip(cells, widths)]
    return "| " + " | ".join(padded) + " |"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [
        max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
        for i in range(len(header))
    ]
    lines = [_row(header, widths)]
    lines.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    for r in rows:
        lines.append(_row(r, widths))
    return "\n".join(lines)


def render_report(
    results: Mapping[str, AggregateReport], layout: str = "table2", scale: float = 1.0
) -> str:
    """Markdown table of mean ± std cells, one row per configuration.

    Keys are plain labels for table2; ``context_group/loss_variant`` for
    table3 (rows grouped by context, the ce_only variant labels the group
    row); ``encoder/pooler`` for table4.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    if layout == "table3":
        rows = []
        seen_groups: list[str] = []
        grouped: dict[str, list[tuple[str, AggregateReport]]] = {}
        for key, report in results.items():
            group, _, variant = key.partition("/")
            if group not in grouped:
                grouped[group] = []
                seen_groups.append(group)
            grouped[group].append((variant, report))
        for group in seen_groups:
            group_label = _GROUP_LABELS.get(group, group)
            for variant, report in grouped[group]:
                label = _VARIANT_LABELS.get(variant, variant or None)
                rows.append([group_label if label is None else f"  {label}", report.format(scale)])
        return _table(["Input Method", "Positive F1"], rows)
    if layout == "table4":
        rows = []
        for key, report in results.items():
            encoder, _, pooler = key.partition("/")
            rows.append([encoder, pooler or encoder, report.format(scale)])
        return _table(["Model Layers", "Pooler Layer", "Positive F1"], rows)
    rows = [[key, report.format(scale)] for key, report in results.items()]
    return _table(["Model", "Positive F1"], rows)
