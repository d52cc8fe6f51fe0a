"""Table VQA harness: dual-representation pipeline, baselines, evaluation, and tooling."""

__version__ = "0.1.0"
