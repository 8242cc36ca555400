"""Loading, validation, and sampling of parallel sentence pairs from local files.

Supported on-disk layouts:

* ``tsv``        one pair per line, ``source<TAB>reference``, no header
* ``jsonl``      one JSON object per line with string fields ``source``,
                 ``reference`` and an optional ``id``
* ``moses-pair`` two aligned plain-text files ``<base>.<source_lang>`` and
                 ``<base>.<target_lang>``; pass ``<base>`` as the path

Texts are trimmed of leading/trailing whitespace; interior whitespace is
preserved byte for byte because the metrics tokenize on it downstream.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import AlignmentError, EmptyCorpus, FormatError

CORPUS_FORMATS = ("tsv", "jsonl", "moses-pair")


@dataclass(frozen=True)
class LanguagePair:
    """A translation direction between two ISO-style language codes."""

    source_lang: str
    target_lang: str

    def __post_init__(self) -> None:
        for code in (self.source_lang, self.target_lang):
            if not (2 <= len(code) <= 3 and code.isascii() and code.isalpha() and code.islower()):
                raise ValueError(f"language code must be 2-3 lowercase letters, got {code!r}")
        if self.source_lang == self.target_lang:
            raise ValueError("source and target language must differ")

    @property
    def direction(self) -> str:
        return f"{self.source_lang}→{self.target_lang}"


@dataclass(frozen=True)
class SentencePair:
    """One parallel (source, reference) unit with corpus provenance."""

    id: str
    source_text: str
    reference_text: str
    pair: LanguagePair
    corpus_name: str

    def __post_init__(self) -> None:
        for label, text in (("source_text", self.source_text), ("reference_text", self.reference_text)):
            if not text.strip():
                raise ValueError(f"{label} is empty")
            if "\n" in text or "\r" in text:
                raise ValueError(f"{label} contains a newline")


def _validated_texts(source: str, reference: str) -> tuple[str, str] | str:
    """Trim and check one pair of texts; return them or a rejection reason."""
    source, reference = source.strip(), reference.strip()
    if not source:
        return "empty source text"
    if not reference:
        return "empty reference text"
    for label, text in (("source", source), ("reference", reference)):
        if "\n" in text or "\r" in text:
            return f"{label} text contains a newline"
    return source, reference


def load_corpus(
    path: str | Path,
    format: str,
    pair: LanguagePair,
    corpus_name: str | None = None,
) -> list[SentencePair]:
    """Load sentence pairs from ``path`` in file order.

    Ids are assigned deterministically as ``<corpus>:<0-based line index>``.
    Malformed lines are collected and reported through :class:`FormatError`
    (carrying the first offending 1-based line number and the total count);
    they are never silently dropped.
    """
    if format not in CORPUS_FORMATS:
        raise ValueError(f"unknown corpus format {format!r}; expected one of {CORPUS_FORMATS}")
    path = Path(path)
    name = corpus_name if corpus_name is not None else path.stem

    if format == "moses-pair":
        return _load_moses(path, pair, name)

    lines = path.read_text(encoding="utf-8").splitlines()
    pairs: list[SentencePair] = []
    bad: list[tuple[int, str]] = []
    seen_ids: set[str] = set()
    for index, line in enumerate(lines):
        line_no = index + 1
        if format == "tsv":
            parsed = _parse_tsv_line(line)
        else:
            parsed = _parse_jsonl_line(line)
        if isinstance(parsed, str):
            bad.append((line_no, parsed))
            continue
        source, reference, explicit_id = parsed
        checked = _validated_texts(source, reference)
        if isinstance(checked, str):
            bad.append((line_no, checked))
            continue
        pair_id = explicit_id if explicit_id is not None else f"{name}:{index}"
        if pair_id in seen_ids:
            bad.append((line_no, f"duplicate id {pair_id!r}"))
            continue
        seen_ids.add(pair_id)
        pairs.append(SentencePair(pair_id, checked[0], checked[1], pair, name))
    if bad:
        raise FormatError(bad[0][0], bad[0][1], total_bad=len(bad))
    return pairs


def _parse_tsv_line(line: str) -> tuple[str, str, None] | str:
    if line.count("\t") != 1:
        return f"expected exactly one tab separator, found {line.count(chr(9))}"
    source, reference = line.split("\t")
    return source, reference, None


def _parse_jsonl_line(line: str) -> tuple[str, str, str | None] | str:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        return f"invalid JSON ({exc.msg})"
    if not isinstance(record, dict):
        return "record is not an object"
    for field in ("source", "reference"):
        if field not in record:
            return f"missing field {field!r}"
        if not isinstance(record[field], str):
            return f"field {field!r} is not a string"
    explicit_id = record.get("id")
    if explicit_id is not None and not isinstance(explicit_id, str):
        return "field 'id' is not a string"
    return record["source"], record["reference"], explicit_id


def _load_moses(base: Path, pair: LanguagePair, name: str) -> list[SentencePair]:
    source_path = base.with_name(base.name + f".{pair.source_lang}")
    target_path = base.with_name(base.name + f".{pair.target_lang}")
    for p in (source_path, target_path):
        if not p.exists():
            raise FileNotFoundError(f"moses-pair file not found: {p}")
    source_lines = source_path.read_text(encoding="utf-8").splitlines()
    target_lines = target_path.read_text(encoding="utf-8").splitlines()
    if len(source_lines) != len(target_lines):
        raise AlignmentError(
            f"{source_path.name} has {len(source_lines)} lines "
            f"but {target_path.name} has {len(target_lines)}"
        )
    pairs: list[SentencePair] = []
    bad: list[tuple[int, str]] = []
    for index, (source, reference) in enumerate(zip(source_lines, target_lines)):
        checked = _validated_texts(source, reference)
        if isinstance(checked, str):
            bad.append((index + 1, checked))
            continue
        pairs.append(SentencePair(f"{name}:{index}", checked[0], checked[1], pair, name))
    if bad:
        raise FormatError(bad[0][0], bad[0][1], total_bad=len(bad))
    return pairs


def sample_corpus(pairs: list[SentencePair], n: int, seed: int) -> list[SentencePair]:
    """Draw ``n`` pairs without replacement, preserving original order.

    Deterministic for a fixed (pairs, n, seed). When ``n`` covers the whole
    corpus the input is returned unchanged (as a copy).
    """
    if not pairs:
        raise EmptyCorpus("cannot sample from an empty corpus")
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    if n >= len(pairs):
        return list(pairs)
    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(pairs)), n))
    return [pairs[i] for i in picked]
