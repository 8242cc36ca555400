"""Reflective two-pass machine translation pipeline and evaluation harness."""

from .corpus import LanguagePair, SentencePair, load_corpus, sample_corpus
from .llm_client import CompletionResult, LlmClient, MockProvider, ModelSpec, mock_from_fixture
from .metrics import BleuConfig, BleuScore, SemanticScore, corpus_bleu, semantic_score, sentence_bleu
from .pipeline import (
    RunConfig,
    SweepResult,
    TranslationRecord,
    emit_tuple_dataset,
    load_config,
    read_record_log,
    run_pipeline,
    run_threshold_sweep,
    sweep_records,
)
from .prompts import (
    FewShotExample,
    PromptBundle,
    Strategy,
    parse_translation,
    render_first_pass,
    render_second_pass,
)
from .reflection import (
    MASK_TOKEN,
    RakeConfig,
    Reflection,
    default_rake_config,
    generate_reflection,
    mask_reflection,
    rake_extract,
)
from .report import ScoreReport, build_score_report, render_figure_data, render_significance_table
from .stats import GainSummary, PairedSample, WilcoxonResult, summarize_gains, wilcoxon_signed_rank

__version__ = "0.1.0"

__all__ = [
    "BleuConfig",
    "BleuScore",
    "CompletionResult",
    "FewShotExample",
    "GainSummary",
    "LanguagePair",
    "LlmClient",
    "MASK_TOKEN",
    "MockProvider",
    "ModelSpec",
    "PairedSample",
    "PromptBundle",
    "RakeConfig",
    "Reflection",
    "RunConfig",
    "ScoreReport",
    "SemanticScore",
    "SentencePair",
    "Strategy",
    "SweepResult",
    "TranslationRecord",
    "WilcoxonResult",
    "build_score_report",
    "corpus_bleu",
    "default_rake_config",
    "emit_tuple_dataset",
    "generate_reflection",
    "load_config",
    "load_corpus",
    "mask_reflection",
    "mock_from_fixture",
    "parse_translation",
    "rake_extract",
    "read_record_log",
    "render_figure_data",
    "render_significance_table",
    "render_first_pass",
    "render_second_pass",
    "run_pipeline",
    "run_threshold_sweep",
    "sample_corpus",
    "semantic_score",
    "sentence_bleu",
    "summarize_gains",
    "sweep_records",
    "wilcoxon_signed_rank",
]
