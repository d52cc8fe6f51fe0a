from __future__ import annotations

import json
from pathlib import Path

import pytest
from PIL import Image

from talent import client as tc
from talent.dataset import load_manifest
from talent.imaging import ResolutionPreset, load_image, resize_to_preset, to_data_url
from talent.prompts import PromptLibrary, default_prompts

CATEGORIES = (
    "financial_reports",
    "sports_statistics",
    "survey_results",
    "scientific_tables",
)


def make_png(path: Path, size=(4, 4), color=(255, 255, 255)) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("RGB", size, color).save(path, format="PNG")
    return path


def vlm_endpoint(base_url="http://replay.invalid", **kwargs) -> tc.EndpointConfig:
    kwargs.setdefault("model_size_b", 3.0)
    return tc.EndpointConfig(
        name="vlm-test", role="vlm", base_url=base_url, model="vlm-model", **kwargs
    )


def llm_endpoint(base_url="http://replay.invalid", **kwargs) -> tc.EndpointConfig:
    kwargs.setdefault("model_size_b", 7.0)
    return tc.EndpointConfig(
        name="llm-test", role="llm", base_url=base_url, model="llm-model", **kwargs
    )


def write_manifest_file(path: Path, lines: list[dict]) -> Path:
    path.write_text(
        "\n".join(json.dumps(obj, ensure_ascii=False) for obj in lines) + "\n",
        encoding="utf-8",
    )
    return path


@pytest.fixture(scope="session")
def retabvqa_manifest_path(tmp_path_factory) -> Path:
    """60 tables / 120 QA, 15 tables and 30 QA per category, with gt text."""
    root = tmp_path_factory.mktemp("retabvqa")
    lines = [
        {
            "type": "meta",
            "name": "retabvqa-fixture",
            "kind": "retabvqa",
            "declared_counts": {"tables_per_category": 15, "qa_per_table": 2},
        }
    ]
    idx = 0
    for cat in CATEGORIES:
        for i in range(15):
            table_id = f"t{idx:03d}"
            rel = f"images/{table_id}.png"
            make_png(root / rel, color=(idx % 256, (idx * 7) % 256, 200))
            lines.append(
                {
                    "type": "table",
                    "table_id": table_id,
                    "image_path": rel,
                    "category": cat,
                    "gt_table_text": f"| year | value |\n| 2010 | {100 + idx} |",
                }
            )
            for q in range(2):
                lines.append(
                    {
                        "type": "qa",
                        "qa_id": f"{table_id}-q{q}",
                        "table_id": table_id,
                        "question": f"What is the value in row {q} of table {idx}?",
                        "answer": str(100 + idx),
                        "reasoning_tag": "multi_step" if q else "lookup",
                    }
                )
            idx += 1
    return write_manifest_file(root / "manifest.jsonl", lines)


@pytest.fixture(scope="session")
def ten_item_manifest_path(tmp_path_factory) -> Path:
    """10 tables / 10 QA across categories, distinct images, gt text everywhere."""
    root = tmp_path_factory.mktemp("tenitems")
    lines = [{"type": "meta", "name": "ten-fixture", "kind": "tablevqa_bench_like"}]
    for i in range(10):
        table_id = f"tbl{i}"
        rel = f"img/{table_id}.png"
        make_png(root / rel, color=(20 * i, 255 - 20 * i, 99))
        lines.append(
            {
                "type": "table",
                "table_id": table_id,
                "image_path": rel,
                "category": CATEGORIES[i % 4],
                "gt_table_text": f"| item | count |\n| widget | {i * 11} |",
            }
        )
        lines.append(
            {
                "type": "qa",
                "qa_id": f"q{i:02d}",
                "table_id": table_id,
                "question": f"How many widgets in table {i}?",
                "answer": str(i * 11),
            }
        )
    return write_manifest_file(root / "manifest.jsonl", lines)


class FixtureSeeder:
    """Builds replay fixtures by constructing the same exchanges the pipeline
    issues; a mismatch surfaces as a replay miss in the test."""

    def __init__(
        self,
        fixture_dir: Path,
        vlm: tc.EndpointConfig,
        llm: tc.EndpointConfig,
        prompts: PromptLibrary | None = None,
        resolution: ResolutionPreset = ResolutionPreset(),
    ):
        self.dir = Path(fixture_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.vlm = vlm
        self.llm = llm
        self.prompts = prompts or default_prompts()
        self.resolution = resolution

    def _write(self, endpoint: tc.EndpointConfig, messages, text: str) -> str:
        digest = tc.request_digest(endpoint, messages)
        tc.write_fixture(
            self.dir, endpoint, digest, tc.ChatResponse(text=text), tc.prompt_summary(messages)
        )
        return digest

    def image_part(self, image_path: Path) -> tc.ImagePart:
        buf = resize_to_preset(load_image(image_path), self.resolution)
        return tc.ImagePart(to_data_url(buf))

    def seed_ocr(self, image_path: Path, text: str) -> str:
        messages = [
            tc.system_message(self.prompts.ocr_system),
            tc.user_message(self.image_part(image_path)),
        ]
        return self._write(self.vlm, messages, text)

    def seed_narration(self, image_path: Path, text: str) -> str:
        messages = [
            tc.system_message(self.prompts.narration_system),
            tc.user_message(self.image_part(image_path)),
        ]
        return self._write(self.vlm, messages, text)

    def seed_direct(self, image_path: Path, question: str, text: str) -> str:
        messages = [
            tc.system_message(self.prompts.direct_system),
            tc.user_message(self.image_part(image_path), question),
        ]
        return self._write(self.vlm, messages, text)

    def seed_reason(
        self, question: str, text: str, ocr=None, narration=None, gt_table=None
    ) -> str:
        rendered = self.prompts.render_qa_user(
            question, ocr=ocr, narration=narration, gt_table=gt_table
        )
        messages = [tc.system_message(self.prompts.qa_system), tc.user_message(rendered)]
        return self._write(self.llm, messages, text)

    def seed_all_strategies(self, table, qa) -> dict[str, str]:
        """Seed every exchange all five strategies need for one item."""
        image = table.abs_image_path
        ocr_text = f"| ocr | of {table.table_id} |"
        narration_text = f"Narration of {table.table_id}."
        answer = f"The answer is {qa.answer}."
        digests = {
            "ocr": self.seed_ocr(image, ocr_text),
            "narration": self.seed_narration(image, narration_text),
            "direct": self.seed_direct(image, qa.question, answer),
            "talent": self.seed_reason(
                qa.question, answer, ocr=ocr_text, narration=narration_text
            ),
            "generated_ocr": self.seed_reason(qa.question, answer, ocr=ocr_text),
            "language_description": self.seed_reason(qa.question, answer, narration=narration_text),
        }
        if table.gt_table_text:
            digests["perfect_ocr"] = self.seed_reason(
                qa.question, answer, gt_table=table.gt_table_text
            )
        return digests


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One line per acceptance criterion at the end of every run."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            name = nodeid.split("::", 1)[1]
            status = "PASS" if outcome == "passed" else "FAIL"
            if lines.get(name) != "FAIL":
                lines[name] = status
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name in sorted(lines):
            terminalreporter.write_line(f"{lines[name]:4s} {name}")


@pytest.fixture()
def seeded_ten_items(tmp_path, ten_item_manifest_path):
    """Manifest + replay fixture dir covering all strategies for all 10 items."""
    manifest = load_manifest(ten_item_manifest_path)
    fixture_dir = tmp_path / "fixtures"
    seeder = FixtureSeeder(fixture_dir, vlm_endpoint(), llm_endpoint())
    for qa in manifest.qa_pairs:
        seeder.seed_all_strategies(manifest.table(qa.table_id), qa)
    return manifest, fixture_dir, seeder
