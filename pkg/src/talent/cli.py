"""Command-line entry point for the whole harness.

Subcommands: validate, ingest, run, eval, report, fit-scaling, ask, serve,
sweep, cache purge. Flags mirror RunConfig fields (kebab-case); precedence is
defaults < --config file < TALENT_* environment < flags. Exit codes: 0 on
success, 1 on operational error, 2 on usage error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import cache as cache_mod
from . import scaling
from .client import transport_of
from .config import ConfigError, RunConfig, resolve_config
from .dataset import ManifestError, load_manifest, manifest_stats, save_manifest, select_items
from .dataset import DatasetManifest, QAPair, TableRecord
from .evaluation import EvalError, EvalReport, evaluate, render_report
from .imaging import ImageError
from .pipeline import (
    BatchItem,
    PipelineError,
    PipelineTrace,
    Runner,
    run_batch,
    read_predictions,
    write_predictions,
    write_timings,
)
from .prompts import default_prompts, load_prompts

OPERATIONAL_ERRORS = (
    ManifestError,
    ConfigError,
    EvalError,
    ImageError,
    PipelineError,
    scaling.ScalingError,
    OSError,
)


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


ENDPOINT_FLAGS = [
    ("base-url", str),
    ("model", str),
    ("api-key", str),
    ("temperature", float),
    ("top-p", float),
    ("max-tokens", int),
    ("timeout", float),
    ("max-retries", int),
    ("requests-per-minute", int),
    ("size-b", float),
]


def endpoint_options(role: str):
    def wrap(fn):
        for flag, kind in reversed(ENDPOINT_FLAGS):
            fn = click.option(f"--{role}-{flag}", type=kind, default=None)(fn)
        return fn

    return wrap


def common_run_options(fn):
    options = [
        click.option("--config", "config_file", type=click.Path(), default=None),
        click.option("--manifest", type=click.Path(), default=None),
        click.option("--strategies", type=str, default=None, help="comma-separated"),
        click.option("--resolution", type=click.Choice(["r512", "r1024", "native"]), default=None),
        click.option("--allow-upscale/--no-allow-upscale", default=None),
        click.option("--pad-to-square/--no-pad-to-square", default=None),
        click.option(
            "--match-mode",
            type=click.Choice(
                ["strict_containment", "normalized_containment", "normalized_plus_numeric"]
            ),
            default=None,
        ),
        click.option("--numeric-rel-tol", type=float, default=None),
        click.option("--concurrency", type=int, default=None),
        click.option("--cache-dir", type=click.Path(), default=None),
        click.option("--transport", type=click.Choice(["live", "record", "replay"]), default=None),
        click.option("--fixtures-dir", type=click.Path(), default=None),
        click.option("--output-dir", type=click.Path(), default=None),
        click.option("--seed", type=int, default=None),
        click.option("--limit", type=int, default=None),
        click.option("--categories", type=str, default=None, help="comma-separated"),
        click.option("--prompts", type=click.Path(), default=None),
        click.option("--fail-fast/--no-fail-fast", default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return endpoint_options("llm")(endpoint_options("vlm")(fn))


def gather_config(config_file, **kwargs) -> RunConfig:
    flags: dict = {}
    endpoints: dict[str, dict] = {"vlm": {}, "llm": {}}
    for key, value in kwargs.items():
        if value is None:
            continue
        for role in ("vlm", "llm"):
            prefix = role + "_"
            if key.startswith(prefix):
                ep_key = key[len(prefix) :]
                if ep_key == "size_b":
                    ep_key = "model_size_b"
                endpoints[role][ep_key] = value
                break
        else:
            flags[key] = value
    for role in ("vlm", "llm"):
        if endpoints[role]:
            flags[role] = endpoints[role]
    return resolve_config(config_file=config_file, flags=flags)


def _load_prompt_library(config: RunConfig):
    return load_prompts(config.prompts) if config.prompts else default_prompts()


def build_runner(config: RunConfig) -> Runner:
    transport = transport_of(config.transport, config.fixtures_dir)
    if config.cache_dir is not None:
        transport = cache_mod.wrap(transport, cache_mod.ResponseCache(config.cache_dir))
    return Runner(
        config.vlm,
        config.llm,
        transport,
        prompts=_load_prompt_library(config),
        resolution=config.resolution_preset(),
    )


@click.group()
def main():
    """Table VQA harness: datasets, strategies, evaluation, scaling, service."""


@main.command()
@click.argument("manifest_path", type=click.Path(exists=True))
def validate(manifest_path):
    """Check a manifest and print its per-category statistics."""
    try:
        manifest = load_manifest(manifest_path)
    except ManifestError as exc:
        _fail(str(exc))
    stats = manifest_stats(manifest)
    click.echo(f"manifest: {manifest.name} (kind={manifest.kind})")
    click.echo("| Category | Tables | QA Pairs |")
    click.echo("| --- | --- | --- |")
    for category in sorted(stats["categories"]):
        entry = stats["categories"][category]
        click.echo(f"| {category} | {entry['table_count']} | {entry['qa_count']} |")
    click.echo(f"| total | {stats['total_tables']} | {stats['total_qa']} |")


@main.command()
@click.argument("source", type=click.Path(exists=True))
@click.argument("dest", type=click.Path())
@click.option("--name", default=None)
@click.option("--kind", type=click.Choice(["tablevqa_bench_like", "retabvqa"]), default=None)
def ingest(source, dest, name, kind):
    """Convert a flat JSON/JSONL export into the canonical manifest layout.

    Accepts objects with {table_id?, image_path, category?, gt_table_text?,
    qa_id?, question, answer, reasoning_tag?}; one table line is emitted per
    distinct image.
    """
    src = Path(source)
    try:
        text = src.read_text(encoding="utf-8")
        rows = (
            json.loads(text)
            if text.lstrip().startswith("[")
            else [json.loads(line) for line in text.splitlines() if line.strip()]
        )
        records: dict[str, TableRecord] = {}
        qa_pairs = []
        for i, row in enumerate(rows, 1):
            image_path = row["image_path"]
            table_id = row.get("table_id") or Path(image_path).stem
            if table_id not in records:
                records[table_id] = TableRecord(
                    table_id=table_id,
                    image_path=image_path,
                    category=row.get("category", "other"),
                    gt_table_text=row.get("gt_table_text"),
                )
            qa_pairs.append(
                QAPair(
                    qa_id=row.get("qa_id") or f"{table_id}-q{i}",
                    table_id=table_id,
                    question=row["question"],
                    answer=row["answer"],
                    reasoning_tag=row.get("reasoning_tag", "lookup"),
                )
            )
        manifest = DatasetManifest(
            name=name or src.stem,
            kind=kind or "tablevqa_bench_like",
            records=tuple(records.values()),
            qa_pairs=tuple(qa_pairs),
        )
        save_manifest(manifest, dest)
    except (KeyError, ValueError, OSError) as exc:
        _fail(f"cannot ingest {source}: {exc}")
    click.echo(f"wrote {dest}: {len(records)} tables, {len(qa_pairs)} qa pairs")


@main.command()
@common_run_options
def run(config_file, **kwargs):
    """Run strategies over a manifest; write predictions and a scored report."""
    try:
        config = gather_config(config_file, **kwargs)
        if config.manifest is None:
            raise ConfigError("a manifest is required (--manifest)")
        manifest = load_manifest(config.manifest)
        pairs = select_items(
            manifest, categories=config.categories, limit=config.limit, seed=config.seed
        )
        items = [
            BatchItem(table, qa, strategy)
            for strategy in config.strategies
            for (table, qa) in pairs
        ]
        if "perfect_ocr" in config.strategies:
            missing = [t.table_id for t, _ in pairs if not t.gt_table_text]
            if missing:
                raise ConfigError(
                    f"perfect_ocr selected but gt_table_text missing for tables: {missing[:5]}"
                )
        runner = build_runner(config)
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        results = run_batch(
            runner, items, width=config.concurrency, fail_fast=config.fail_fast
        )
        write_predictions(out_dir / "predictions.jsonl", results)
        write_timings(out_dir / "timings.jsonl", results)

        predictions = read_predictions(out_dir / "predictions.jsonl")
        prompts = _load_prompt_library(config)
        report = evaluate(
            predictions, manifest, config.match_policy(), config.echo(prompts.sha256())
        )
        (out_dir / "report.json").write_text(render_report(report, "json"), encoding="utf-8")
        (out_dir / "report.md").write_text(render_report(report, "markdown"), encoding="utf-8")
        click.echo(
            f"{len(results)} items -> {out_dir}/predictions.jsonl; "
            f"accuracy {report.overall_accuracy:.2f}%"
        )
    except OPERATIONAL_ERRORS as exc:
        _fail(str(exc))


@main.command(name="eval")
@click.option("--predictions", "predictions_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option(
    "--match-mode",
    type=click.Choice(["strict_containment", "normalized_containment", "normalized_plus_numeric"]),
    default="normalized_containment",
)
@click.option("--numeric-rel-tol", type=float, default=1e-6)
@click.option("--output-dir", type=click.Path(), default=None)
def eval_cmd(predictions_path, manifest_path, match_mode, numeric_rel_tol, output_dir):
    """Score an existing predictions file against a manifest."""
    from .evaluation import MatchPolicy

    try:
        manifest = load_manifest(manifest_path)
        predictions = read_predictions(predictions_path)
        policy = MatchPolicy(mode=match_mode, numeric_rel_tol=numeric_rel_tol)
        report = evaluate(predictions, manifest, policy)
        if output_dir:
            out_dir = Path(output_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "report.json").write_text(render_report(report, "json"), encoding="utf-8")
            (out_dir / "report.md").write_text(render_report(report, "markdown"), encoding="utf-8")
        click.echo(render_report(report, "markdown"))
    except OPERATIONAL_ERRORS as exc:
        _fail(str(exc))


@main.command(name="report")
@click.option("--report", "report_path", type=click.Path(exists=True), required=True)
@click.option("--format", "fmt", type=click.Choice(["json", "markdown"]), default="markdown")
def report_cmd(report_path, fmt):
    """Re-render a stored report.json."""
    try:
        data = json.loads(Path(report_path).read_text(encoding="utf-8"))
        report = EvalReport.from_dict(data)
        click.echo(render_report(report, fmt))
    except (EvalError, KeyError, ValueError, OSError) as exc:
        _fail(f"cannot render {report_path}: {exc}")


@main.command(name="fit-scaling")
@click.option("--points", "points_path", type=click.Path(exists=True), default=None)
@click.option("--output", type=click.Path(), default=None, help="write fit JSON here")
def fit_scaling(points_path, output):
    """Fit the log-linear size-accuracy model and print coefficients."""
    try:
        points = scaling.load_points(points_path) if points_path else scaling.builtin_grid()
        fit = scaling.fit_log_linear(points)
        ratio = scaling.coefficient_ratio(fit)
        click.echo(
            f"accuracy = {fit.beta0:.2f} + {fit.beta_v:.2f}*ln(vlm_size_b) "
            f"+ {fit.beta_l:.2f}*ln(llm_size_b)"
        )
        click.echo(f"r_squared = {fit.r_squared:.3f}  (n = {fit.n})")
        click.echo(f"llm/vlm coefficient ratio = {ratio:.2f}")
        click.echo("")
        click.echo("| s_v (B) | s_l (B) | actual | predicted |")
        click.echo("| --- | --- | --- | --- |")
        for row in scaling.actual_vs_predicted(fit, points):
            click.echo(
                f"| {row['s_v']:g} | {row['s_l']:g} | {row['actual']:.2f} | {row['predicted']:.2f} |"
            )
        if output:
            payload = fit.to_dict()
            payload["actual_vs_predicted"] = scaling.actual_vs_predicted(fit, points)
            Path(output).write_text(
                json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8"
            )
    except OPERATIONAL_ERRORS as exc:
        _fail(str(exc))


@main.command()
@click.option("--image", "image_path", type=click.Path(exists=True), required=True)
@click.option("--question", required=True)
@click.option(
    "--strategy",
    type=click.Choice(["talent", "direct_prompt", "generated_ocr", "language_description"]),
    default="talent",
)
@common_run_options
def ask(image_path, question, strategy, config_file, **kwargs):
    """Answer one question about one table image and print answer + trace."""
    try:
        config = gather_config(config_file, **kwargs)
        runner = build_runner(config)
        table = TableRecord(
            table_id=Path(image_path).stem,
            image_path=str(image_path),
            category="other",
            abs_image_path=Path(image_path).resolve(),
        )
        qa = QAPair(qa_id="adhoc", table_id=table.table_id, question=question, answer="-")
        prediction, trace = runner.answer(strategy, table, qa)
        click.echo(prediction.text)
        click.echo("")
        click.echo(
            f"trace: {trace.vlm_calls} VLM call(s), {trace.llm_calls} LLM call(s)", err=False
        )
        for stage in trace.stages:
            cached = " (cached)" if stage.cache_hit else ""
            click.echo(f"  {stage.stage}: {stage.endpoint} {stage.digest[:12]}{cached}")
    except OPERATIONAL_ERRORS as exc:
        _fail(str(exc))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8080)
@click.option("--cors-origin", "cors_origins", multiple=True, default=("*",))
@click.option("--session-ttl", type=float, default=3600.0)
@common_run_options
def serve(host, port, cors_origins, session_ttl, config_file, **kwargs):
    """Start the interactive session service."""
    import uvicorn

    from .service import ServiceSettings, create_app

    try:
        config = gather_config(config_file, **kwargs)
        settings = ServiceSettings(
            vlm=config.vlm,
            llm=config.llm,
            transport=config.transport,
            fixtures_dir=config.fixtures_dir,
            cache_dir=config.cache_dir,
            prompts_path=config.prompts,
            resolution=config.resolution,
            concurrency=config.concurrency,
            session_ttl=session_ttl,
            cors_origins=tuple(cors_origins),
        )
        app = create_app(settings)
    except OPERATIONAL_ERRORS as exc:
        _fail(str(exc))
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--grid", "grid_path", type=click.Path(exists=True), required=True,
              help="JSON file: {cells: [{vlm: {...}, llm: {...}}, ...]}")
@common_run_options
def sweep(grid_path, config_file, **kwargs):
    """Run every (vlm, llm) endpoint pair in a grid; emit per-cell reports plus
    a merged size-matrix and a points file ready for fit-scaling."""
    try:
        base = gather_config(config_file, **kwargs)
        if base.manifest is None:
            raise ConfigError("a manifest is required (--manifest)")
        grid = json.loads(Path(grid_path).read_text(encoding="utf-8"))
        cells = grid.get("cells") or []
        if not cells:
            raise ConfigError(f"{grid_path}: grid has no cells")

        from .config import _endpoint_from  # same validation as config resolution

        out_root = Path(base.output_dir)
        out_root.mkdir(parents=True, exist_ok=True)
        matrix: dict[tuple[float, float], float] = {}
        points_rows = []
        manifest = load_manifest(base.manifest)
        pairs = select_items(
            manifest, categories=base.categories, limit=base.limit, seed=base.seed
        )
        prompts = _load_prompt_library(base)

        for i, cell in enumerate(cells):
            config = RunConfig(**{**base.__dict__})
            config.vlm = _endpoint_from(cell.get("vlm") or {}, "vlm")
            config.llm = _endpoint_from(cell.get("llm") or {}, "llm")
            cell_dir = out_root / f"cell_{i:02d}"
            cell_dir.mkdir(parents=True, exist_ok=True)
            runner = build_runner(config)
            items = [
                BatchItem(table, qa, strategy)
                for strategy in config.strategies
                for (table, qa) in pairs
            ]
            results = run_batch(runner, items, width=config.concurrency)
            write_predictions(cell_dir / "predictions.jsonl", results)
            predictions = read_predictions(cell_dir / "predictions.jsonl")
            report = evaluate(
                predictions, manifest, config.match_policy(), config.echo(prompts.sha256())
            )
            (cell_dir / "report.json").write_text(
                render_report(report, "json"), encoding="utf-8"
            )
            (cell_dir / "report.md").write_text(
                render_report(report, "markdown"), encoding="utf-8"
            )
            sv = config.vlm.model_size_b if config.vlm else None
            sl = config.llm.model_size_b if config.llm else None
            if sv is not None and sl is not None:
                matrix[(sv, sl)] = report.overall_accuracy
                points_rows.append(f"{sv:g},{sl:g},{report.overall_accuracy:.2f}")
            click.echo(f"cell {i}: accuracy {report.overall_accuracy:.2f}% -> {cell_dir}")

        if matrix:
            sv_values = sorted({k[0] for k in matrix})
            sl_values = sorted({k[1] for k in matrix})
            lines = ["| VLM size \\ LLM size | " + " | ".join(f"{v:g}B" for v in sl_values) + " |"]
            lines.append("| --- |" + " --- |" * len(sl_values))
            for sv in sv_values:
                cells_fmt = [
                    f"{matrix[(sv, sl)]:.2f}" if (sv, sl) in matrix else "-" for sl in sl_values
                ]
                lines.append(f"| {sv:g}B | " + " | ".join(cells_fmt) + " |")
            (out_root / "sweep_matrix.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
            (out_root / "sweep_points.csv").write_text(
                "s_v,s_l,accuracy\n" + "\n".join(points_rows) + "\n", encoding="utf-8"
            )
            click.echo(f"matrix -> {out_root}/sweep_matrix.md")
    except OPERATIONAL_ERRORS as exc:
        _fail(str(exc))


@main.group()
def cache():
    """Response-cache maintenance."""


@cache.command()
@click.option("--cache-dir", type=click.Path(exists=True), required=True)
def purge(cache_dir):
    """Delete all cached responses under the given directory."""
    removed = cache_mod.ResponseCache(cache_dir).purge()
    click.echo(f"removed {removed} cache entries")


if __name__ == "__main__":
    main()
