"""Per-sentence orchestration of the reflective loop, plus sweeps and emission.

Each sampled sentence goes through: first-pass prompt, parse, draft scoring,
a threshold gate, and (when gated in) critique generation, masking, and a
second pass. Everything lands in an append-only record log, one
self-contained JSON object per line, written strictly in corpus order so an
interrupted run resumes to a byte-identical log.

The threshold sweep never issues new model calls: it re-reads a base run in
which every sentence was refined and derives, per threshold, which sentences
would have been gated in and how their scores moved.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .corpus import CORPUS_FORMATS, LanguagePair, SentencePair, load_corpus, sample_corpus
from .errors import (
    ConfigError,
    LlmError,
    DelimiterMissing,
    EmptyTranslation,
    MissingBaseRun,
    ResumeMismatch,
    SectionMissing,
)
from .llm_client import CassetteRecorder, LlmClient, ModelSpec, mock_from_fixture, provider_for_spec
from .metrics import BleuConfig, BleuScore, HttpScorer, SemanticScore, semantic_score, sentence_bleu
from .prompts import (
    DEFAULT_FEW_SHOT_EXAMPLES,
    FewShotExample,
    Strategy,
    parse_translation,
    render_first_pass,
    render_second_pass,
)
from .reflection import RakeConfig, Reflection, default_rake_config, generate_reflection, mask_reflection

GATE_METRICS = ("bleu", "semantic", "always", "never")

RECORD_LOG_NAME = "records.jsonl"

# Fixed field order of one record-log / tuple-dataset line.
LOG_FIELDS = (
    "id", "source", "reference", "draft", "critique_raw", "critique_masked",
    "revision", "draft_bleu", "revision_bleu", "draft_semantic",
    "revision_semantic", "gated", "strategy", "model", "error",
)


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    strategy: Strategy
    pair: LanguagePair
    corpus_path: Path
    corpus_format: str
    sample_size: int
    seed: int
    output_dir: Path
    gate_metric: str = "always"
    gate_threshold: float = 0.0
    bleu: BleuConfig = field(default_factory=BleuConfig)
    scorer_url: str | None = None
    max_parallel: int = 1
    few_shot_examples: tuple[FewShotExample, ...] | None = None
    mock_fixture: Path | None = None
    cassette: Path | None = None

    def validate(self) -> None:
        if self.corpus_format not in CORPUS_FORMATS:
            raise ConfigError("corpus_format", f"must be one of {CORPUS_FORMATS}")
        if self.sample_size < 1:
            raise ConfigError("sample_size", "must be >= 1")
        if self.gate_metric not in GATE_METRICS:
            raise ConfigError("gate_metric", f"must be one of {GATE_METRICS}")
        if self.gate_metric in ("bleu", "semantic") and not 0.0 <= self.gate_threshold <= 1.0:
            raise ConfigError("gate_threshold", f"must be in [0, 1], got {self.gate_threshold}")
        if self.max_parallel < 1:
            raise ConfigError("max_parallel", "must be >= 1")
        if self.gate_metric == "semantic" and not self.scorer_url:
            raise ConfigError("scorer_url", "required when gate_metric is 'semantic'")
        if self.model.provider == "mock" and self.mock_fixture is None:
            raise ConfigError("mock_fixture", "required when model.provider is 'mock'")


def load_config(path: str | Path) -> RunConfig:
    """Read a run configuration from a YAML file.

    Relative paths inside the file resolve against the file's directory.
    Raises ConfigError naming the offending field.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be a mapping")
    base = path.parent

    def resolve(key: str, value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base / p

    try:
        model_raw = dict(raw["model"])
        model = ModelSpec(
            provider=model_raw["provider"],
            model_name=model_raw["model_name"],
            temperature=float(model_raw.get("temperature", 0.0)),
            max_output_tokens=int(model_raw.get("max_output_tokens", 1024)),
            request_timeout=float(model_raw.get("request_timeout", 60.0)),
        )
    except KeyError as exc:
        raise ConfigError(f"model.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from None

    try:
        strategy = Strategy.parse(raw.get("strategy", "baseline"))
    except ValueError as exc:
        raise ConfigError("strategy", str(exc)) from None
    try:
        pair = LanguagePair(raw["source_lang"], raw["target_lang"])
    except KeyError as exc:
        raise ConfigError(exc.args[0], "missing") from None
    except ValueError as exc:
        raise ConfigError("source_lang/target_lang", str(exc)) from None

    bleu_raw = raw.get("bleu") or {}
    try:
        bleu = BleuConfig(
            max_order=int(bleu_raw.get("max_order", 4)),
            weights=tuple(bleu_raw["weights"]) if "weights" in bleu_raw else None,
            smoothing=bleu_raw.get("smoothing", "floor-half"),
            tokenizer=bleu_raw.get("tokenizer", "intl-punct"),
        )
    except ValueError as exc:
        raise ConfigError("bleu", str(exc)) from None

    examples = None
    if raw.get("few_shot_examples"):
        examples = tuple(
            FewShotExample(e["source_lang_label"], e["source_text"], e["translation"])
            for e in raw["few_shot_examples"]
        )

    for required in ("corpus_path", "corpus_format", "sample_size", "seed", "output_dir"):
        if required not in raw:
            raise ConfigError(required, "missing")

    try:
        config = RunConfig(
            model=model,
            strategy=strategy,
            pair=pair,
            corpus_path=resolve("corpus_path", raw["corpus_path"]),
            corpus_format=str(raw["corpus_format"]),
            sample_size=int(raw["sample_size"]),
            seed=int(raw["seed"]),
            output_dir=resolve("output_dir", raw["output_dir"]),
            gate_metric=str(raw.get("gate_metric", "always")),
            gate_threshold=float(raw.get("gate_threshold", 0.0)),
            bleu=bleu,
            scorer_url=raw.get("scorer_url") or None,
            max_parallel=int(raw.get("max_parallel", 1)),
            few_shot_examples=examples,
            mock_fixture=resolve("mock_fixture", raw["mock_fixture"]) if raw.get("mock_fixture") else None,
            cassette=resolve("cassette", raw["cassette"]) if raw.get("cassette") else None,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("config", str(exc)) from None
    config.validate()
    return config


@dataclass
class TranslationRecord:
    """Everything recorded about one sentence's trip through the loop."""

    id: str
    source: str
    reference: str
    strategy: str
    model: str
    draft: str | None = None
    draft_bleu: BleuScore | None = None
    draft_semantic: SemanticScore | None = None
    gated: bool = False
    critique_raw: str | None = None
    critique_masked: str | None = None
    revision: str | None = None
    revision_bleu: BleuScore | None = None
    revision_semantic: SemanticScore | None = None
    error: str | None = None
    # in-memory only; never serialized
    reflection: Reflection | None = None
    started_at: float | None = None
    finished_at: float | None = None


def _bleu_to_dict(score: BleuScore | None) -> dict | None:
    if score is None:
        return None
    return {
        "score": score.score,
        "precisions": list(score.precisions),
        "brevity_penalty": score.brevity_penalty,
        "hyp_len": score.hyp_len,
        "ref_len": score.ref_len,
    }


def _bleu_from_dict(raw: dict | None) -> BleuScore | None:
    if raw is None:
        return None
    return BleuScore(
        score=raw["score"],
        precisions=tuple(raw["precisions"]),
        brevity_penalty=raw["brevity_penalty"],
        hyp_len=raw["hyp_len"],
        ref_len=raw["ref_len"],
    )


def _semantic_to_dict(score: SemanticScore | None) -> dict | None:
    if score is None:
        return None
    return {"score": score.score, "scorer_id": score.scorer_id, "reference_used": score.reference_used}


def _semantic_from_dict(raw: dict | None) -> SemanticScore | None:
    if raw is None:
        return None
    return SemanticScore(score=raw["score"], scorer_id=raw["scorer_id"], reference_used=raw["reference_used"])


def record_to_dict(record: TranslationRecord) -> dict:
    return {
        "id": record.id,
        "source": record.source,
        "reference": record.reference,
        "draft": record.draft,
        "critique_raw": record.critique_raw,
        "critique_masked": record.critique_masked,
        "revision": record.revision,
        "draft_bleu": _bleu_to_dict(record.draft_bleu),
        "revision_bleu": _bleu_to_dict(record.revision_bleu),
        "draft_semantic": _semantic_to_dict(record.draft_semantic),
        "revision_semantic": _semantic_to_dict(record.revision_semantic),
        "gated": record.gated,
        "strategy": record.strategy,
        "model": record.model,
        "error": record.error,
    }


def record_from_dict(raw: dict) -> TranslationRecord:
    return TranslationRecord(
        id=raw["id"],
        source=raw["source"],
        reference=raw["reference"],
        strategy=raw["strategy"],
        model=raw["model"],
        draft=raw["draft"],
        draft_bleu=_bleu_from_dict(raw["draft_bleu"]),
        draft_semantic=_semantic_from_dict(raw["draft_semantic"]),
        gated=raw["gated"],
        critique_raw=raw["critique_raw"],
        critique_masked=raw["critique_masked"],
        revision=raw["revision"],
        revision_bleu=_bleu_from_dict(raw["revision_bleu"]),
        revision_semantic=_semantic_from_dict(raw["revision_semantic"]),
        error=raw["error"],
    )


def record_log_line(record: TranslationRecord) -> str:
    return json.dumps(record_to_dict(record), ensure_ascii=False, separators=(",", ":"))


def read_record_log(path: str | Path) -> list[TranslationRecord]:
    """Parse a record log; a trailing partially-written line is ignored."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    complete, trailing = lines[:-1], lines[-1]
    records = [record_from_dict(json.loads(line)) for line in complete if line]
    if trailing.strip():
        try:
            records.append(record_from_dict(json.loads(trailing)))
        except (json.JSONDecodeError, KeyError):
            pass  # interrupted mid-write; the resume logic redoes this sentence
    return records


def emit_tuple_dataset(records: list[TranslationRecord], path: str | Path) -> int:
    """Write the released tuples, one JSON object per line.

    Records without a revision are written with explicit nulls so the
    dataset always has one line per input sentence.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record_log_line(record) + "\n")
    return len(records)


read_tuple_dataset = read_record_log  # the emitted dataset uses the log schema


# --- the per-sentence loop ---------------------------------------------------


def _complete_and_parse(client, spec, bundle, request_key):
    """One completion plus delimiter parsing; one identical-prompt retry on
    a malformed reply. Returns (text, error_message)."""
    last_error = None
    for _ in range(2):
        try:
            result = client.complete(spec, bundle, request_key=request_key)
        except LlmError as exc:
            return None, f"provider: {exc}"
        try:
            return parse_translation(result.text), None
        except (DelimiterMissing, EmptyTranslation) as exc:
            last_error = f"parse: {exc}"
    return None, last_error


def _gate_score(record: TranslationRecord, gate_metric: str) -> float | None:
    if gate_metric == "semantic":
        return record.draft_semantic.score if record.draft_semantic else None
    return record.draft_bleu.score if record.draft_bleu else None


def _should_refine(config: RunConfig, record: TranslationRecord) -> bool:
    if config.gate_metric == "always":
        return True
    if config.gate_metric == "never":
        return False
    score = _gate_score(record, config.gate_metric)
    return score is not None and score < config.gate_threshold


def _resolve_examples(config: RunConfig) -> tuple[FewShotExample, ...]:
    if config.strategy is not Strategy.FEW_SHOT:
        return ()
    if config.few_shot_examples:
        return config.few_shot_examples
    defaults = DEFAULT_FEW_SHOT_EXAMPLES.get(config.pair.source_lang)
    if not defaults:
        raise ConfigError(
            "few_shot_examples",
            f"no built-in examples for source language {config.pair.source_lang!r}",
        )
    return defaults


def _process_pair(
    pair: SentencePair,
    config: RunConfig,
    client: LlmClient,
    scorer,
    examples: tuple[FewShotExample, ...],
    rake: RakeConfig,
) -> TranslationRecord:
    strategy = config.strategy
    record = TranslationRecord(
        id=pair.id,
        source=pair.source_text,
        reference=pair.reference_text,
        strategy=strategy.value,
        model=config.model.model_name,
        started_at=time.time(),
    )

    first_bundle = render_first_pass(pair, strategy, examples)
    draft, error = _complete_and_parse(
        client, config.model, first_bundle, f"{strategy.value}|1|{pair.id}"
    )
    if draft is None:
        record.error = f"draft {error}"
        record.finished_at = time.time()
        return record
    record.draft = draft
    record.draft_bleu = sentence_bleu(draft, pair.reference_text, config.bleu)
    if scorer is not None:
        record.draft_semantic = semantic_score(pair.source_text, draft, pair.reference_text, scorer)

    record.gated = _should_refine(config, record)
    if not record.gated:
        record.finished_at = time.time()
        return record

    try:
        reflection = generate_reflection(
            config.model, pair, draft,
            client=client, strategy=strategy,
            request_key=f"{strategy.value}|reflection|{pair.id}",
        )
    except (SectionMissing, LlmError) as exc:
        record.error = f"reflection: {exc}"
        record.finished_at = time.time()
        return record
    reflection = mask_reflection(reflection, rake)
    record.reflection = reflection
    record.critique_raw = reflection.raw_text
    record.critique_masked = reflection.masked_text

    second_bundle = render_second_pass(pair, strategy, reflection.masked_text)
    revision, error = _complete_and_parse(
        client, config.model, second_bundle, f"{strategy.value}|2|{pair.id}"
    )
    if revision is None:
        record.error = f"revision {error}"
        record.finished_at = time.time()
        return record
    record.revision = revision
    record.revision_bleu = sentence_bleu(revision, pair.reference_text, config.bleu)
    if scorer is not None:
        record.revision_semantic = semantic_score(pair.source_text, revision, pair.reference_text, scorer)
    record.finished_at = time.time()
    return record


def build_provider(config: RunConfig):
    if config.model.provider == "mock":
        provider = mock_from_fixture(config.mock_fixture)
    else:
        provider = provider_for_spec(config.model)
    if config.cassette:
        provider = CassetteRecorder(provider, config.cassette)
    return provider


def run_pipeline(config: RunConfig, *, provider=None, scorer=None, rake: RakeConfig | None = None):
    """Run the full loop over the configured sample.

    Returns (records, report). Per-sentence provider and parse failures are
    recorded on their TranslationRecord and never abort the run; config
    problems raise ConfigError before any model call.

    Records append to ``<output_dir>/records.jsonl`` as they complete, in
    corpus order. If the log already holds a prefix of this run, those
    sentences are skipped and the run resumes after them.
    """
    config.validate()
    pairs = load_corpus(config.corpus_path, config.corpus_format, config.pair)
    sampled = sample_corpus(pairs, config.sample_size, config.seed)

    if provider is None:
        provider = build_provider(config)
    elif config.cassette:
        provider = CassetteRecorder(provider, config.cassette)
    client = LlmClient(provider)
    if scorer is None and config.scorer_url:
        scorer = HttpScorer(config.scorer_url)
    rake = rake or default_rake_config()
    examples = _resolve_examples(config)

    config.output_dir.mkdir(parents=True, exist_ok=True)
    log_path = config.output_dir / RECORD_LOG_NAME
    existing: list[TranslationRecord] = read_record_log(log_path) if log_path.exists() else []
    if len(existing) > len(sampled):
        raise ResumeMismatch(
            f"log already has {len(existing)} records but the sample has {len(sampled)}"
        )
    for record, pair in zip(existing, sampled):
        if record.id != pair.id:
            raise ResumeMismatch(
                f"log record {record.id!r} does not match sampled pair {pair.id!r}; "
                "refusing to resume into a different run"
            )

    records = list(existing)
    todo = sampled[len(existing):]
    executor = ThreadPoolExecutor(max_workers=config.max_parallel)
    try:
        with log_path.open("a", encoding="utf-8") as log:
            futures = [
                executor.submit(_process_pair, pair, config, client, scorer, examples, rake)
                for pair in todo
            ]
            for future in futures:
                record = future.result()
                records.append(record)
                log.write(record_log_line(record) + "\n")
                log.flush()
    finally:
        executor.shutdown(wait=False, cancel_futures=True)

    from .report import build_score_report  # deferred: report depends on this module

    report = build_score_report(records)
    return records, report


# --- threshold sweep ---------------------------------------------------------


@dataclass(frozen=True)
class SweepResult:
    threshold: float
    coverage: float
    n_refined: int
    avg_before: dict[str, float | None]
    avg_after: dict[str, float | None]


def _record_metrics(records: list[TranslationRecord]) -> list[str]:
    metrics = ["bleu"]
    if any(r.draft_semantic is not None for r in records):
        metrics.append("semantic")
    return metrics


def _metric_scores(record: TranslationRecord, metric: str) -> tuple[float | None, float | None]:
    if metric == "bleu":
        before = record.draft_bleu.score if record.draft_bleu else None
        after = record.revision_bleu.score if record.revision_bleu else None
    else:
        before = record.draft_semantic.score if record.draft_semantic else None
        after = record.revision_semantic.score if record.revision_semantic else None
    return before, after


def sweep_records(
    records: list[TranslationRecord],
    thresholds: list[float],
    *,
    gate_metric: str = "bleu",
) -> list[SweepResult]:
    """Derive per-threshold coverage and before/after averages from a base run.

    The base run must have refined every sentence that has a gate score
    (gate_metric "always"); otherwise the sweep would understate the high
    thresholds.
    """
    if sorted(thresholds) != list(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    if gate_metric not in ("bleu", "semantic"):
        raise ValueError("sweep gate_metric must be 'bleu' or 'semantic'")
    eligible = [r for r in records if _gate_score(r, gate_metric) is not None]
    if not eligible:
        raise MissingBaseRun("no records with a usable gate score")
    if any(not r.gated for r in eligible):
        raise MissingBaseRun(
            "base run must have gate_metric 'always' so every sentence was refined"
        )
    metrics = _record_metrics(eligible)
    results = []
    for threshold in thresholds:
        refined = [r for r in eligible if _gate_score(r, gate_metric) < threshold]
        avg_before: dict[str, float | None] = {}
        avg_after: dict[str, float | None] = {}
        for metric in metrics:
            pairs = [
                (before, after)
                for before, after in (_metric_scores(r, metric) for r in refined)
                if before is not None and after is not None
            ]
            if pairs:
                avg_before[metric] = sum(b for b, _ in pairs) / len(pairs)
                avg_after[metric] = sum(a for _, a in pairs) / len(pairs)
            else:
                avg_before[metric] = None
                avg_after[metric] = None
        results.append(
            SweepResult(
                threshold=threshold,
                coverage=len(refined) / len(eligible),
                n_refined=len(refined),
                avg_before=avg_before,
                avg_after=avg_after,
            )
        )
    return results


def run_threshold_sweep(
    config: RunConfig,
    thresholds: list[float],
    *,
    provider=None,
    scorer=None,
) -> list[SweepResult]:
    """Sweep over an existing base run, producing it first if absent."""
    log_path = config.output_dir / RECORD_LOG_NAME
    if log_path.exists():
        records = read_record_log(log_path)
    else:
        base_config = replace(config, gate_metric="always")
        records, _ = run_pipeline(base_config, provider=provider, scorer=scorer)
    gate = config.gate_metric if config.gate_metric in ("bleu", "semantic") else "bleu"
    return sweep_records(records, thresholds, gate_metric=gate)
