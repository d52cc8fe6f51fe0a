"""Benchmark manifest loading, validation, stats, and item selection.

A manifest is a JSON Lines file (one object per line, discriminated by a
"type" field) or a single JSON array of the same objects:

    {"type": "meta", "name": ..., "kind": ..., "declared_counts": {...}}   # optional, first
    {"type": "table", "table_id": ..., "image_path": ..., "category": ..., "gt_table_text": ...}
    {"type": "qa", "qa_id": ..., "table_id": ..., "question": ..., "answer": ..., "reasoning_tag": ...}

Image paths are relative to the manifest file's directory. Manifests are
immutable after load and safe to share across worker threads.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

CATEGORIES = (
    "financial_reports",
    "sports_statistics",
    "survey_results",
    "scientific_tables",
)

KINDS = ("tablevqa_bench_like", "retabvqa")
REASONING_TAGS = ("lookup", "multi_step")


class ManifestError(ValueError):
    """Malformed or inconsistent manifest content."""


@dataclass(frozen=True)
class TableRecord:
    table_id: str
    image_path: str
    category: str
    gt_table_text: Optional[str] = None
    source_split: str = ""
    # Absolute path resolved against the manifest directory at load time;
    # not part of the serialized form or of equality.
    abs_image_path: Optional[Path] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class QAPair:
    qa_id: str
    table_id: str
    question: str
    answer: str
    reasoning_tag: str = "lookup"


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    kind: str
    records: tuple[TableRecord, ...]
    qa_pairs: tuple[QAPair, ...]
    declared_counts: Optional[dict] = None
    base_dir: Optional[Path] = field(default=None, compare=False, repr=False)

    def table(self, table_id: str) -> TableRecord:
        rec = self._by_id().get(table_id)
        if rec is None:
            raise ManifestError(f"unknown table_id {table_id!r}")
        return rec

    def _by_id(self) -> dict[str, TableRecord]:
        return {r.table_id: r for r in self.records}


def _table_from_obj(obj: dict, line_no: int, base_dir: Path) -> TableRecord:
    for key in ("table_id", "image_path", "category"):
        if not obj.get(key):
            raise ManifestError(f"line {line_no}: table record missing {key!r}")
    abs_path = (base_dir / obj["image_path"]).resolve()
    return TableRecord(
        table_id=obj["table_id"],
        image_path=obj["image_path"],
        category=obj["category"],
        gt_table_text=obj.get("gt_table_text"),
        source_split=obj.get("source_split", ""),
        abs_image_path=abs_path,
    )


def _qa_from_obj(obj: dict, line_no: int) -> QAPair:
    for key in ("qa_id", "table_id", "question", "answer"):
        if not obj.get(key):
            raise ManifestError(f"line {line_no}: qa record missing or empty {key!r}")
    tag = obj.get("reasoning_tag") or "lookup"
    if tag not in REASONING_TAGS:
        raise ManifestError(f"line {line_no}: unknown reasoning_tag {tag!r}")
    return QAPair(
        qa_id=obj["qa_id"],
        table_id=obj["table_id"],
        question=obj["question"],
        answer=obj["answer"],
        reasoning_tag=tag,
    )


def _iter_objects(path: Path) -> Iterable[tuple[int, dict]]:
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            array = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid JSON array: {exc}") from exc
        for i, obj in enumerate(array, 1):
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}: element {i} is not an object")
            yield i, obj
        return
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: line {line_no}: {exc}") from exc
        if not isinstance(obj, dict):
            raise ManifestError(f"{path}: line {line_no}: expected an object")
        yield line_no, obj


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and fully validate a manifest file.

    Checks id uniqueness, reference integrity, image file existence (decode
    is deferred to the imaging layer), category membership for retabvqa
    manifests, and declared counts when present.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    base_dir = path.parent.resolve()

    name = path.stem
    kind = "tablevqa_bench_like"
    declared_counts: Optional[dict] = None
    records: list[TableRecord] = []
    qa_pairs: list[QAPair] = []

    for line_no, obj in _iter_objects(path):
        otype = obj.get("type")
        if otype == "meta":
            name = obj.get("name", name)
            kind = obj.get("kind", kind)
            if kind not in KINDS:
                raise ManifestError(f"line {line_no}: unknown manifest kind {kind!r}")
            declared_counts = obj.get("declared_counts")
        elif otype == "table":
            records.append(_table_from_obj(obj, line_no, base_dir))
        elif otype == "qa":
            qa_pairs.append(_qa_from_obj(obj, line_no))
        else:
            raise ManifestError(f"line {line_no}: unknown record type {otype!r}")

    manifest = DatasetManifest(
        name=name,
        kind=kind,
        records=tuple(records),
        qa_pairs=tuple(qa_pairs),
        declared_counts=declared_counts,
        base_dir=base_dir,
    )
    validate_manifest(manifest)
    return manifest


def validate_manifest(manifest: DatasetManifest) -> None:
    seen_tables: set[str] = set()
    for rec in manifest.records:
        if rec.table_id in seen_tables:
            raise ManifestError(f"duplicate table_id {rec.table_id!r}")
        seen_tables.add(rec.table_id)
        if manifest.kind == "retabvqa" and rec.category not in CATEGORIES:
            raise ManifestError(
                f"table {rec.table_id!r}: category {rec.category!r} is not a retabvqa category"
            )
        if rec.abs_image_path is not None and not rec.abs_image_path.exists():
            raise ManifestError(
                f"table {rec.table_id!r}: image file not found: {rec.abs_image_path}"
            )

    seen_qa: set[str] = set()
    for qa in manifest.qa_pairs:
        if qa.qa_id in seen_qa:
            raise ManifestError(f"duplicate qa_id {qa.qa_id!r}")
        seen_qa.add(qa.qa_id)
        if qa.table_id not in seen_tables:
            raise ManifestError(
                f"qa {qa.qa_id!r} references unknown table_id {qa.table_id!r}"
            )

    if manifest.kind == "retabvqa" and manifest.declared_counts:
        _check_declared_counts(manifest)


def _check_declared_counts(manifest: DatasetManifest) -> None:
    per_cat = manifest.declared_counts.get("tables_per_category")
    per_table = manifest.declared_counts.get("qa_per_table")
    stats = manifest_stats(manifest)
    if per_cat is not None:
        for cat in CATEGORIES:
            actual = stats["categories"].get(cat, {}).get("table_count", 0)
            if actual != per_cat:
                raise ManifestError(
                    f"declared {per_cat} tables per category but {cat!r} has {actual}"
                )
    if per_table is not None:
        qa_by_table: dict[str, int] = {r.table_id: 0 for r in manifest.records}
        for qa in manifest.qa_pairs:
            qa_by_table[qa.table_id] += 1
        for table_id, n in qa_by_table.items():
            if n != per_table:
                raise ManifestError(
                    f"declared {per_table} qa per table but {table_id!r} has {n}"
                )


def manifest_stats(manifest: DatasetManifest) -> dict:
    """Per-category table/QA counts plus totals. Counts partition the manifest."""
    cat_of = {r.table_id: r.category for r in manifest.records}
    categories: dict[str, dict[str, int]] = {}
    for rec in manifest.records:
        entry = categories.setdefault(rec.category, {"table_count": 0, "qa_count": 0})
        entry["table_count"] += 1
    for qa in manifest.qa_pairs:
        entry = categories.setdefault(cat_of[qa.table_id], {"table_count": 0, "qa_count": 0})
        entry["qa_count"] += 1
    return {
        "categories": categories,
        "total_tables": len(manifest.records),
        "total_qa": len(manifest.qa_pairs),
    }


def select_items(
    manifest: DatasetManifest,
    categories: Optional[Iterable[str]] = None,
    qa_ids: Optional[Iterable[str]] = None,
    limit: Optional[int] = None,
    seed: Optional[int] = None,
) -> list[tuple[TableRecord, QAPair]]:
    """Deterministic item selection: sort by qa_id, optional seeded shuffle, then limit."""
    by_table = {r.table_id: r for r in manifest.records}
    known_qa = {qa.qa_id for qa in manifest.qa_pairs}
    known_cats = {r.category for r in manifest.records}

    if qa_ids is not None:
        wanted = set(qa_ids)
        unknown = wanted - known_qa
        if unknown:
            raise ManifestError(f"unknown qa_id in filter: {sorted(unknown)}")
    else:
        wanted = None
    if categories is not None:
        cats = set(categories)
        unknown = cats - known_cats
        if unknown:
            raise ManifestError(f"unknown category in filter: {sorted(unknown)}")
    else:
        cats = None

    pairs = [
        (by_table[qa.table_id], qa)
        for qa in sorted(manifest.qa_pairs, key=lambda q: q.qa_id)
        if (wanted is None or qa.qa_id in wanted)
        and (cats is None or by_table[qa.table_id].category in cats)
    ]
    if seed is not None:
        random.Random(seed).shuffle(pairs)
    if limit is not None:
        pairs = pairs[:limit]
    return pairs


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write the JSON Lines form. Reloading yields a field-wise equal manifest."""
    path = Path(path)
    lines = []
    meta: dict = {"type": "meta", "name": manifest.name, "kind": manifest.kind}
    if manifest.declared_counts is not None:
        meta["declared_counts"] = manifest.declared_counts
    lines.append(json.dumps(meta, ensure_ascii=False))
    for rec in manifest.records:
        obj = {
            "type": "table",
            "table_id": rec.table_id,
            "image_path": rec.image_path,
            "category": rec.category,
        }
        if rec.gt_table_text is not None:
            obj["gt_table_text"] = rec.gt_table_text
        if rec.source_split:
            obj["source_split"] = rec.source_split
        lines.append(json.dumps(obj, ensure_ascii=False))
    for qa in manifest.qa_pairs:
        obj = {
            "type": "qa",
            "qa_id": qa.qa_id,
            "table_id": qa.table_id,
            "question": qa.question,
            "answer": qa.answer,
            "reasoning_tag": qa.reasoning_tag,
        }
        lines.append(json.dumps(obj, ensure_ascii=False))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
