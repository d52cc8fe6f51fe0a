"""Containment-accuracy scoring, aggregation, and report rendering.

A prediction is correct when it contains the ground-truth answer. Three match
policies grade how forgiving "contains" is:

    strict_containment         raw substring test
    normalized_containment     substring test after normalize() on both sides (default)
    normalized_plus_numeric    normalized containment OR a numeric-token match

Percentages are reported to 2 decimals, half-up.
"""

from __future__ import annotations

import json
import math
import re
import unicodedata
from dataclasses import dataclass
from datetime import datetime, timezone
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional, Sequence

from .dataset import DatasetManifest

MODES = ("strict_containment", "normalized_containment", "normalized_plus_numeric")

_CURRENCY = re.compile(r"[$€£]")
_DIGIT_COMMA = re.compile(r"(?<=\d),(?=\d)")
_WHITESPACE = re.compile(r"\s+")
_NUMBER = re.compile(r"-?\d+(?:\.\d+)?")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class MatchPolicy:
    mode: str = "normalized_containment"
    numeric_rel_tol: float = 1e-6

    def __post_init__(self):
        if self.mode not in MODES:
            raise EvalError(f"unknown match mode {self.mode!r}")
        if self.numeric_rel_tol <= 0:
            raise EvalError("numeric_rel_tol must be positive")


def normalize(text: str) -> str:
    """Compatibility-normalize, lowercase, strip currency symbols and
    thousands-separating commas, collapse whitespace. Idempotent."""
    text = unicodedata.normalize("NFKC", text)
    text = text.lower()
    text = _CURRENCY.sub("", text)
    text = _DIGIT_COMMA.sub("", text)
    text = _WHITESPACE.sub(" ", text)
    return text.strip()


def _numeric_tokens(text: str) -> list[float]:
    return [float(tok) for tok in _NUMBER.findall(text)]


def is_correct(prediction: str, gt: str, policy: MatchPolicy) -> tuple[bool, str]:
    """Score one prediction. Returns (correct, matched_by) where matched_by is
    one of strict / normalized / numeric / none."""
    if not gt:
        raise EvalError("ground-truth answer is empty")
    if gt in prediction:
        return True, "strict"
    if policy.mode == "strict_containment":
        return False, "none"

    norm_pred = normalize(prediction)
    norm_gt = normalize(gt)
    if norm_gt and norm_gt in norm_pred:
        return True, "normalized"
    if policy.mode == "normalized_plus_numeric":
        gt_numbers = _numeric_tokens(norm_gt)
        if len(gt_numbers) == 1:
            target = gt_numbers[0]
            for value in _numeric_tokens(norm_pred):
                if math.isclose(value, target, rel_tol=policy.numeric_rel_tol, abs_tol=0.0) or (
                    target == 0.0 and value == 0.0
                ):
                    return True, "numeric"
    return False, "none"


@dataclass
class EvalReport:
    items: list[dict]
    overall_accuracy: float
    total: int
    correct: int
    by_strategy: dict[str, dict]
    by_category: dict[str, dict]
    by_config: dict[str, dict]
    config: dict
    created_at: str = ""

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "total": self.total,
            "correct": self.correct,
            "by_strategy": self.by_strategy,
            "by_category": self.by_category,
            "by_config": self.by_config,
            "items": self.items,
            "config": self.config,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalReport":
        return cls(
            items=data["items"],
            overall_accuracy=data["overall_accuracy"],
            total=data["total"],
            correct=data["correct"],
            by_strategy=data["by_strategy"],
            by_category=data["by_category"],
            by_config=data.get("by_config", {}),
            config=data.get("config", {}),
            created_at=data.get("created_at", ""),
        )


def round_pct(numerator: int, denominator: int) -> float:
    pct = Decimal(numerator) * 100 / Decimal(denominator)
    return float(pct.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _bucket(buckets: dict[str, dict], key: str, correct: bool) -> None:
    entry = buckets.setdefault(key, {"total": 0, "correct": 0})
    entry["total"] += 1
    entry["correct"] += int(correct)


def _finalize(buckets: dict[str, dict]) -> dict[str, dict]:
    out = {}
    for key in sorted(buckets):
        entry = buckets[key]
        out[key] = {
            "total": entry["total"],
            "correct": entry["correct"],
            "accuracy": round_pct(entry["correct"], entry["total"]),
        }
    return out


def _config_label(config: dict) -> Optional[str]:
    endpoints = config.get("endpoints") or {}
    vlm_size = (endpoints.get("vlm") or {}).get("model_size_b")
    llm_size = (endpoints.get("llm") or {}).get("model_size_b")
    if vlm_size is None and llm_size is None:
        return None

    def label(size) -> str:
        if size is None:
            return "?"
        return f"{size:g}B"

    return f"{label(vlm_size)}-{label(llm_size)}"


def evaluate(
    predictions: Sequence[dict],
    manifest: DatasetManifest,
    policy: MatchPolicy = MatchPolicy(),
    config: Optional[dict] = None,
) -> EvalReport:
    """Score a predictions list (pipeline JSONL objects) against the manifest.

    Item order does not affect the report. Zero scoreable items is an error,
    never a vacuous 0/0 accuracy.
    """
    config = dict(config or {})
    config.setdefault("policy", {"mode": policy.mode, "numeric_rel_tol": policy.numeric_rel_tol})

    qa_by_id = {qa.qa_id: qa for qa in manifest.qa_pairs}
    table_by_id = {r.table_id: r for r in manifest.records}

    scoreable = [p for p in predictions if "prediction" in p]
    failures = [p for p in predictions if "prediction" not in p]
    if not scoreable:
        raise EvalError("empty evaluation: no predictions to score")

    seen: set[tuple[str, str]] = set()
    items = []
    strategy_buckets: dict[str, dict] = {}
    category_buckets: dict[str, dict] = {}
    config_buckets: dict[str, dict] = {}
    config_label = _config_label(config)
    correct_count = 0

    for pred in sorted(scoreable, key=lambda p: (p.get("strategy", ""), p.get("qa_id", ""))):
        qa_id = pred.get("qa_id")
        strategy = pred.get("strategy", "")
        qa = qa_by_id.get(qa_id)
        if qa is None:
            raise EvalError(f"prediction references unknown qa_id {qa_id!r}")
        key = (qa_id, strategy)
        if key in seen:
            raise EvalError(f"duplicate prediction for qa_id={qa_id!r} strategy={strategy!r}")
        seen.add(key)

        correct, matched_by = is_correct(pred["prediction"], qa.answer, policy)
        correct_count += int(correct)
        category = table_by_id[qa.table_id].category
        items.append(
            {
                "qa_id": qa_id,
                "strategy": strategy,
                "correct": correct,
                "matched_by": matched_by,
                "category": category,
            }
        )
        _bucket(strategy_buckets, strategy, correct)
        _bucket(category_buckets, category, correct)
        if config_label is not None:
            _bucket(config_buckets, config_label, correct)

    for failure in sorted(failures, key=lambda p: (p.get("strategy", ""), p.get("qa_id", ""))):
        items.append(
            {
                "qa_id": failure.get("qa_id"),
                "strategy": failure.get("strategy", ""),
                "correct": False,
                "matched_by": "error",
                "error": failure.get("error", "item failed"),
            }
        )

    return EvalReport(
        items=items,
        overall_accuracy=round_pct(correct_count, len(scoreable)),
        total=len(scoreable),
        correct=correct_count,
        by_strategy=_finalize(strategy_buckets),
        by_category=_finalize(category_buckets),
        by_config=_finalize(config_buckets),
        config=config,
        created_at=datetime.now(timezone.utc).isoformat(),
    )


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, ensure_ascii=False, sort_keys=True)
    if fmt != "markdown":
        raise EvalError(f"unknown report format {fmt!r}")
    return _render_markdown(report)


def _render_markdown(report: EvalReport) -> str:
    endpoints = report.config.get("endpoints") or {}
    vlm_name = (endpoints.get("vlm") or {}).get("model", "-")
    llm_name = (endpoints.get("llm") or {}).get("model", "-")

    lines = ["# Evaluation report", ""]
    lines.append(
        f"Overall accuracy: {report.overall_accuracy:.2f}% ({report.correct}/{report.total})"
    )
    lines.append("")

    lines.append("| Method | VLM | LLM | Accuracy (%) |")
    lines.append("| --- | --- | --- | --- |")
    for strategy, entry in report.by_strategy.items():
        uses_vlm = strategy != "perfect_ocr"
        uses_llm = strategy != "direct_prompt"
        lines.append(
            f"| {strategy} | {vlm_name if uses_vlm else '-'} | "
            f"{llm_name if uses_llm else '-'} | {entry['accuracy']:.2f} |"
        )
    lines.append("")

    if report.by_category:
        lines.append("| Category | Items | Accuracy (%) |")
        lines.append("| --- | --- | --- |")
        for category, entry in report.by_category.items():
            lines.append(f"| {category} | {entry['total']} | {entry['accuracy']:.2f} |")
        lines.append("")

    if report.by_config:
        # one endpoint pair per run, so per-strategy rows share the config label
        label = next(iter(report.by_config))
        lines.append("| Approach | Model Configuration | Accuracy (%) |")
        lines.append("| --- | --- | --- |")
        for strategy, entry in report.by_strategy.items():
            lines.append(f"| {strategy} | {label} | {entry['accuracy']:.2f} |")
        lines.append("")

    lines.append("## Run configuration")
    lines.append("")
    lines.append("```json")
    lines.append(json.dumps(report.config, indent=2, ensure_ascii=False, sort_keys=True))
    lines.append("```")
    return "\n".join(lines) + "\n"
