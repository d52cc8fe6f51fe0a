"""Answer strategies over table images: the dual-representation pipeline and four baselines.

Call structure per strategy (VLM calls + LLM calls):

    talent               2 + 1   (OCR + narration, then reasoning over both)
    direct_prompt        1 + 0   (image and question in a single VLM exchange)
    perfect_ocr          0 + 1   (ground-truth table text + question)
    generated_ocr        1 + 1   (OCR + question)
    language_description 1 + 1   (narration + question)

Every model exchange is stateless; prompts render byte-identically for fixed
inputs, so request digests are stable and caching/replay are sound.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

from .client import (
    ChatMessage,
    EndpointConfig,
    ImagePart,
    Transport,
    complete,
    prompt_summary,
    request_digest,
    system_message,
    user_message,
)
from .dataset import QAPair, TableRecord
from .imaging import ImageBuffer, ResolutionPreset, load_image, resize_to_preset, to_data_url
from .prompts import PromptLibrary, default_prompts

STRATEGIES = (
    "talent",
    "direct_prompt",
    "perfect_ocr",
    "generated_ocr",
    "language_description",
)


class PipelineError(RuntimeError):
    pass


class StageError(PipelineError):
    def __init__(self, stage: str, cause: Exception | str):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class DualRepresentation:
    ocr_markdown: str
    narration: str


@dataclass(frozen=True)
class StageRecord:
    stage: str
    endpoint: str
    role: str
    digest: str
    response_text: str
    latency: float
    cache_hit: bool


@dataclass
class PipelineTrace:
    stages: list[StageRecord] = field(default_factory=list)

    @property
    def vlm_calls(self) -> int:
        return sum(1 for s in self.stages if s.role == "vlm")

    @property
    def llm_calls(self) -> int:
        return sum(1 for s in self.stages if s.role == "llm")

    def summary(self) -> dict:
        """Deterministic subset for the predictions file (no wall-clock fields)."""
        return {
            "vlm_calls": self.vlm_calls,
            "llm_calls": self.llm_calls,
            "stages": [
                {"stage": s.stage, "endpoint": s.endpoint, "digest": s.digest}
                for s in self.stages
            ],
        }


@dataclass(frozen=True)
class Prediction:
    qa_id: str
    strategy: str
    text: str


def _settle(call):
    try:
        return call(), None
    except StageError as exc:
        return None, exc


class Runner:
    """Executes strategies against configured VLM/LLM endpoints over one transport."""

    def __init__(
        self,
        vlm: Optional[EndpointConfig],
        llm: Optional[EndpointConfig],
        transport: Transport,
        prompts: Optional[PromptLibrary] = None,
        resolution: ResolutionPreset = ResolutionPreset(),
        concurrent_dual: bool = False,
        partial_dual: bool = False,
    ):
        self.vlm = vlm
        self.llm = llm
        self.transport = transport
        self.prompts = prompts or default_prompts()
        self.resolution = resolution
        self.concurrent_dual = concurrent_dual
        # opt-in: tolerate one failed side of the dual representation
        self.partial_dual = partial_dual

    # -- stage plumbing ----------------------------------------------------

    def _endpoint(self, role: str) -> EndpointConfig:
        endpoint = self.vlm if role == "vlm" else self.llm
        if endpoint is None:
            raise PipelineError(f"no {role} endpoint configured")
        return endpoint

    def _call(
        self,
        role: str,
        stage: str,
        messages: Sequence[ChatMessage],
        trace: PipelineTrace,
        lock: Optional[threading.Lock] = None,
    ) -> str:
        endpoint = self._endpoint(role)
        digest = request_digest(endpoint, messages)
        try:
            response = complete(endpoint, messages, self.transport)
        except Exception as exc:
            raise StageError(stage, exc) from exc
        if not response.text.strip():
            raise StageError(stage, "empty completion (endpoint misconfiguration?)")
        record = StageRecord(
            stage=stage,
            endpoint=endpoint.name,
            role=role,
            digest=digest,
            response_text=response.text,
            latency=response.latency,
            cache_hit=response.from_cache,
        )
        if lock is None:
            trace.stages.append(record)
        else:
            with lock:
                trace.stages.append(record)
        return response.text

    def _prepared_image(self, image: ImageBuffer) -> ImagePart:
        return ImagePart(to_data_url(resize_to_preset(image, self.resolution)))

    # -- perception stages ---------------------------------------------------

    def extract_ocr(self, image: ImageBuffer, trace: Optional[PipelineTrace] = None) -> str:
        trace = trace if trace is not None else PipelineTrace()
        messages = [
            system_message(self.prompts.ocr_system),
            user_message(self._prepared_image(image)),
        ]
        return self._call("vlm", "ocr", messages, trace)

    def extract_narration(self, image: ImageBuffer, trace: Optional[PipelineTrace] = None) -> str:
        trace = trace if trace is not None else PipelineTrace()
        messages = [
            system_message(self.prompts.narration_system),
            user_message(self._prepared_image(image)),
        ]
        return self._call("vlm", "narration", messages, trace)

    def build_dual(
        self, image: ImageBuffer, trace: Optional[PipelineTrace] = None
    ) -> DualRepresentation:
        """Both table views; the two VLM calls may run concurrently, same result.

        Fails if either sub-call fails unless partial_dual was opted into, in
        which case the surviving side is kept and the failed one left empty.
        """
        trace = trace if trace is not None else PipelineTrace()
        if self.concurrent_dual:
            part = self._prepared_image(image)
            lock = threading.Lock()
            ocr_messages = [system_message(self.prompts.ocr_system), user_message(part)]
            narr_messages = [system_message(self.prompts.narration_system), user_message(part)]
            with ThreadPoolExecutor(max_workers=2) as pool:
                ocr_future = pool.submit(self._call, "vlm", "ocr", ocr_messages, trace, lock)
                narr_future = pool.submit(
                    self._call, "vlm", "narration", narr_messages, trace, lock
                )
                ocr, ocr_err = _settle(ocr_future.result)
                narration, narr_err = _settle(narr_future.result)
            # stable stage order regardless of completion order
            trace.stages.sort(key=lambda s: 0 if s.stage == "ocr" else 1)
        else:
            ocr, ocr_err = _settle(lambda: self.extract_ocr(image, trace))
            narration, narr_err = _settle(lambda: self.extract_narration(image, trace))

        failures = [e for e in (ocr_err, narr_err) if e is not None]
        if failures and (not self.partial_dual or len(failures) == 2):
            raise failures[0]
        return DualRepresentation(ocr_markdown=ocr or "", narration=narration or "")

    # -- reasoning stage -----------------------------------------------------

    def reason(
        self,
        question: str,
        trace: PipelineTrace,
        ocr: Optional[str] = None,
        narration: Optional[str] = None,
        gt_table: Optional[str] = None,
    ) -> str:
        """One LLM exchange over whichever table views the caller supplies.

        This is the follow-up path for stored representations: no VLM call.
        """
        rendered = self.prompts.render_qa_user(
            question, ocr=ocr, narration=narration, gt_table=gt_table
        )
        messages = [system_message(self.prompts.qa_system), user_message(rendered)]
        return self._call("llm", "reason", messages, trace)

    # -- strategies ------------------------------------------------------------

    def answer(
        self,
        strategy: str,
        table: TableRecord,
        qa: QAPair,
        resolution: Optional[ResolutionPreset] = None,
    ) -> tuple[Prediction, PipelineTrace]:
        if strategy not in STRATEGIES:
            raise PipelineError(f"unknown strategy {strategy!r}")
        if resolution is not None and resolution != self.resolution:
            runner = Runner(
                self.vlm,
                self.llm,
                self.transport,
                prompts=self.prompts,
                resolution=resolution,
                concurrent_dual=self.concurrent_dual,
            )
            return runner.answer(strategy, table, qa)

        trace = PipelineTrace()
        if strategy == "perfect_ocr":
            if not table.gt_table_text:
                raise PipelineError(
                    f"strategy perfect_ocr needs gt_table_text on table {table.table_id!r}"
                )
            text = self.reason(qa.question, trace, gt_table=table.gt_table_text)
            return Prediction(qa.qa_id, strategy, text), trace

        image = self._load_table_image(table)
        if strategy == "talent":
            dual = self.build_dual(image, trace)
            text = self.reason(
                qa.question, trace, ocr=dual.ocr_markdown, narration=dual.narration
            )
        elif strategy == "direct_prompt":
            messages = [
                system_message(self.prompts.direct_system),
                user_message(self._prepared_image(image), qa.question),
            ]
            text = self._call("vlm", "direct", messages, trace)
        elif strategy == "generated_ocr":
            ocr = self.extract_ocr(image, trace)
            text = self.reason(qa.question, trace, ocr=ocr)
        else:  # language_description
            narration = self.extract_narration(image, trace)
            text = self.reason(qa.question, trace, narration=narration)
        return Prediction(qa.qa_id, strategy, text), trace

    def _load_table_image(self, table: TableRecord) -> ImageBuffer:
        if table.abs_image_path is None:
            raise PipelineError(
                f"table {table.table_id!r} has no resolved image path (load via a manifest)"
            )
        return load_image(table.abs_image_path)


# -- batch execution ------------------------------------------------------------


@dataclass(frozen=True)
class BatchItem:
    table: TableRecord
    qa: QAPair
    strategy: str


@dataclass
class ItemResult:
    item: BatchItem
    prediction: Optional[Prediction] = None
    trace: Optional[PipelineTrace] = None
    error: Optional[str] = None
    elapsed: float = 0.0


def run_batch(
    runner: Runner,
    items: Sequence[BatchItem],
    width: int = 4,
    fail_fast: bool = False,
    progress: Optional[Callable[[int, int], None]] = None,
) -> list[ItemResult]:
    """Run items over a bounded worker pool; results come back in input order.

    Per-item failures are recorded, not raised, unless fail_fast is set.
    """
    results: list[Optional[ItemResult]] = [None] * len(items)
    done = 0
    lock = threading.Lock()

    def work(index: int, item: BatchItem) -> ItemResult:
        started = time.monotonic()
        try:
            prediction, trace = runner.answer(item.strategy, item.table, item.qa)
            return ItemResult(
                item, prediction=prediction, trace=trace, elapsed=time.monotonic() - started
            )
        except Exception as exc:
            if fail_fast:
                raise
            return ItemResult(item, error=str(exc), elapsed=time.monotonic() - started)

    with ThreadPoolExecutor(max_workers=max(1, width)) as pool:
        futures = {pool.submit(work, i, item): i for i, item in enumerate(items)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
            with lock:
                done += 1
                if progress is not None:
                    progress(done, len(items))
    return [r for r in results if r is not None]


def write_predictions(path: str | Path, results: Sequence[ItemResult]) -> None:
    """JSON Lines, one line per item in input order; deterministic bytes."""
    lines = []
    for res in results:
        obj: dict = {"qa_id": res.item.qa.qa_id, "strategy": res.item.strategy}
        if res.prediction is not None:
            obj["prediction"] = res.prediction.text
            obj["trace"] = res.trace.summary() if res.trace is not None else None
        else:
            obj["error"] = res.error
        lines.append(json.dumps(obj, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def write_timings(path: str | Path, results: Sequence[ItemResult]) -> None:
    """Wall-clock sidecar, kept out of predictions.jsonl so re-runs stay byte-identical."""
    lines = []
    for res in results:
        obj = {
            "qa_id": res.item.qa.qa_id,
            "strategy": res.item.strategy,
            "elapsed_ms": round(res.elapsed * 1000, 3),
        }
        lines.append(json.dumps(obj, ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def read_predictions(path: str | Path) -> list[dict]:
    items = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            items.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise PipelineError(f"{path}: line {line_no}: {exc}") from exc
    return items
