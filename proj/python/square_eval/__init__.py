"""Python bindings for the SQuARE prompting evaluation harness."""

from pathlib import Path

from ._core import (
    ContextPassage,
    ExtractionResult,
    QueryRecord,
    SquareError,
    aggregate_percent,
    assemble_prompt,
    build_system_prompt,
    cache_key,
    capture_rate,
    extract_answer,
    load_dataset,
    normalize_text,
    recall_em,
    render_percent,
    run_config,
    sample_records,
    strategy_label,
    sub_em,
    take_top_k_contexts,
)


def templates_dir() -> Path:
    """Directory of the prompt templates shipped with the package."""
    return Path(__file__).resolve().parent / "templates"


__all__ = [
    "ContextPassage",
    "ExtractionResult",
    "QueryRecord",
    "SquareError",
    "aggregate_percent",
    "assemble_prompt",
    "build_system_prompt",
    "cache_key",
    "capture_rate",
    "extract_answer",
    "load_dataset",
    "normalize_text",
    "recall_em",
    "render_percent",
    "run_config",
    "sample_records",
    "strategy_label",
    "sub_em",
    "take_top_k_contexts",
    "templates_dir",
]
