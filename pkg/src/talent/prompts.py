"""Prompt library: auditable prompt data, loaded from JSON, never hardcoded in code paths.

The QA user template is a sequence of blocks separated by blank lines; a block
is kept only when every placeholder it mentions was supplied, so one template
serves every strategy (dual, OCR-only, narration-only, ground-truth table).
"""

from __future__ import annotations

import hashlib
import json
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

_FORMATTER = string.Formatter()
_KNOWN_SLOTS = {"ocr", "narration", "gt_table", "question"}


class PromptLibraryError(ValueError):
    pass


@dataclass(frozen=True)
class PromptLibrary:
    ocr_system: str
    narration_system: str
    direct_system: str
    qa_system: str
    qa_user_template: str

    def __post_init__(self):
        for name in ("ocr_system", "narration_system", "direct_system", "qa_system", "qa_user_template"):
            if not getattr(self, name):
                raise PromptLibraryError(f"prompt field {name!r} is empty")
        slots = _template_fields(self.qa_user_template)
        unknown = slots - _KNOWN_SLOTS
        if unknown:
            raise PromptLibraryError(f"qa_user_template has unknown slots: {sorted(unknown)}")
        if "question" not in slots:
            raise PromptLibraryError("qa_user_template must include the {question} slot")

    def render_qa_user(
        self,
        question: str,
        ocr: Optional[str] = None,
        narration: Optional[str] = None,
        gt_table: Optional[str] = None,
    ) -> str:
        """Render the QA user message with exactly the supplied inputs.

        Blocks whose placeholders were not supplied are dropped; the result
        never contains an unfilled slot.
        """
        values = {"question": question}
        if ocr is not None:
            values["ocr"] = ocr
        if narration is not None:
            values["narration"] = narration
        if gt_table is not None:
            values["gt_table"] = gt_table

        blocks = []
        for block in self.qa_user_template.split("\n\n"):
            fields = _template_fields(block)
            if fields and not fields.issubset(values.keys()):
                continue
            blocks.append(block.format(**values))
        return "\n\n".join(blocks)

    def sha256(self) -> str:
        blob = json.dumps(
            {
                "ocr_system": self.ocr_system,
                "narration_system": self.narration_system,
                "direct_system": self.direct_system,
                "qa_system": self.qa_system,
                "qa_user_template": self.qa_user_template,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _template_fields(template: str) -> set[str]:
    return {name for _, name, _, _ in _FORMATTER.parse(template) if name}


def load_prompts(path: str | Path) -> PromptLibrary:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return _from_dict(data, str(path))


def default_prompts() -> PromptLibrary:
    data = json.loads(
        resources.files("talent").joinpath("data/prompts.json").read_text(encoding="utf-8")
    )
    return _from_dict(data, "built-in prompts.json")


def _from_dict(data: dict, source: str) -> PromptLibrary:
    try:
        return PromptLibrary(
            ocr_system=data["ocr_system"],
            narration_system=data["narration_system"],
            direct_system=data["direct_system"],
            qa_system=data["qa_system"],
            qa_user_template=data["qa_user_template"],
        )
    except KeyError as exc:
        raise PromptLibraryError(f"{source}: missing prompt field {exc}") from exc
