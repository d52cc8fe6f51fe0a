#!/usr/bin/env python3
"""Build a self-contained replay demo: a table image, a small manifest, and the
replay fixtures every strategy needs, so the service and web UI run with zero
model endpoints.

Usage:
    python3 scripts/seed_replay_demo.py DEMO_DIR
    talent serve --transport replay --fixtures-dir DEMO_DIR/fixtures \
        --vlm-base-url http://replay.invalid --vlm-model vlm-model \
        --llm-base-url http://replay.invalid --llm-model llm-model
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from PIL import Image

from talent import client as tc
from talent.dataset import load_manifest
from talent.imaging import load_image, to_data_url
from talent.prompts import default_prompts

VLM = tc.EndpointConfig(
    name="vlm", role="vlm", base_url="http://replay.invalid", model="vlm-model"
)
LLM = tc.EndpointConfig(
    name="llm", role="llm", base_url="http://replay.invalid", model="llm-model"
)

OCR_TEXT = "| Item | December 31, 2010 |\n| --- | --- |\n| Warranty reserve | 11,832 |"
NARRATION_TEXT = (
    "A two-column balance table. The unit marker (in thousands) sits in the "
    "top-left corner, so all amounts are thousands of dollars."
)
QUESTION = "What was the value of the Warranty reserve as of December 31, 2010?"
ANSWER_TEXT = "The value of the Warranty reserve on December 31, 2010, was $11,832,000."


def write_fixture(fixture_dir: Path, endpoint, messages, text: str) -> None:
    digest = tc.request_digest(endpoint, messages)
    tc.write_fixture(
        fixture_dir, endpoint, digest, tc.ChatResponse(text=text), tc.prompt_summary(messages)
    )


def main(out_dir: str) -> None:
    root = Path(out_dir)
    fixtures = root / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    prompts = default_prompts()

    image_path = root / "demo_table.png"
    Image.new("RGB", (64, 40), (245, 245, 235)).save(image_path, format="PNG")
    image_part = tc.ImagePart(to_data_url(load_image(image_path)))

    write_fixture(
        fixtures, VLM, [tc.system_message(prompts.ocr_system), tc.user_message(image_part)], OCR_TEXT
    )
    write_fixture(
        fixtures,
        VLM,
        [tc.system_message(prompts.narration_system), tc.user_message(image_part)],
        NARRATION_TEXT,
    )
    write_fixture(
        fixtures,
        VLM,
        [tc.system_message(prompts.direct_system), tc.user_message(image_part, QUESTION)],
        "11,832",
    )
    reasoning_cases = [
        ({"ocr": OCR_TEXT, "narration": NARRATION_TEXT}, ANSWER_TEXT),
        ({"ocr": OCR_TEXT}, "It was 11,832."),  # unit-omitted: OCR lacks the marker
        ({"narration": NARRATION_TEXT}, ANSWER_TEXT),
    ]
    for inputs, answer in reasoning_cases:
        rendered = prompts.render_qa_user(QUESTION, **inputs)
        write_fixture(
            fixtures, LLM, [tc.system_message(prompts.qa_system), tc.user_message(rendered)], answer
        )

    manifest_path = root / "manifest.jsonl"
    lines = [
        {"type": "meta", "name": "replay-demo", "kind": "tablevqa_bench_like"},
        {
            "type": "table",
            "table_id": "warranty",
            "image_path": "demo_table.png",
            "category": "financial_reports",
            "gt_table_text": OCR_TEXT,
        },
        {
            "type": "qa",
            "qa_id": "warranty-q1",
            "table_id": "warranty",
            "question": QUESTION,
            "answer": "11,832,000",
        },
    ]
    manifest_path.write_text("\n".join(json.dumps(o) for o in lines) + "\n", encoding="utf-8")
    # perfect_ocr reasoning fixture needs the manifest's gt text
    manifest = load_manifest(manifest_path)
    rendered = prompts.render_qa_user(QUESTION, gt_table=manifest.records[0].gt_table_text)
    write_fixture(
        fixtures, LLM, [tc.system_message(prompts.qa_system), tc.user_message(rendered)], ANSWER_TEXT
    )

    print(f"demo dir: {root}")
    print(f"manifest: {manifest_path}")
    print(f"fixtures: {fixtures}")
    print(
        "serve with:\n  talent serve --transport replay "
        f"--fixtures-dir {fixtures} "
        "--vlm-base-url http://replay.invalid --vlm-model vlm-model "
        "--llm-base-url http://replay.invalid --llm-model llm-model"
    )


if __name__ == "__main__":
    if len(sys.argv) != 2:
        print(__doc__)
        sys.exit(2)
    main(sys.argv[1])
