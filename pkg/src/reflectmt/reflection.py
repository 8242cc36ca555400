"""Structured self-critique generation, RAKE phrase extraction, and masking.

A critique has three headed sections (ERRORS / FIXES / CRITICAL). Salient
phrases are extracted from the critical-content section with RAKE and then
replaced throughout the whole critique with the literal token ``<MASK>`` so
the second pass has to apply the guidance semantically instead of copying
wording verbatim.

Masking replaces phrases at word boundaries; the leakage check in
:func:`find_leaks` mirrors those exact boundary semantics, so a masked
phrase can never be found where the masker was required to remove it.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .corpus import SentencePair
from .errors import SectionMissing
from .llm_client import LlmClient, ModelSpec, provider_for_spec
from .prompts import PromptBundle, Strategy, language_name, load_template, substitute

MASK_TOKEN = "<MASK>"

SECTION_NAMES = ("errors", "fixes", "critical")

# Word characters for RAKE tokenization: letters, digits, hyphen, apostrophe.
# Everything else is punctuation and splits candidate phrases.
_EXTRA_WORD_CHARS = "-'’"


@dataclass(frozen=True)
class Reflection:
    """The structured critique in raw and mask-protected form."""

    error_identification: str
    high_level_fixes: str
    critical_content: str
    raw_text: str
    masked_text: str = ""
    masked_phrases: tuple[str, ...] = ()


@dataclass(frozen=True)
class RakeConfig:
    stopwords: frozenset[str]
    min_phrase_chars: int = 3
    top_fraction: float = 1.0 / 3.0
    max_phrases: int = 8

    def __post_init__(self) -> None:
        if not 0.0 < self.top_fraction <= 1.0:
            raise ValueError("top_fraction must be in (0, 1]")
        if self.max_phrases < 1:
            raise ValueError("max_phrases must be >= 1")


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Read a stopword file: one lowercase word per line, '#' comments."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.lower())
    return frozenset(words)


@lru_cache(maxsize=1)
def smart_stopwords() -> frozenset[str]:
    text = resources.files("reflectmt").joinpath("data", "smart_stopwords.txt").read_text(encoding="utf-8")
    return frozenset(
        line.strip().lower()
        for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    )


def default_rake_config() -> RakeConfig:
    return RakeConfig(stopwords=smart_stopwords())


# --- tokenization and candidate extraction ---------------------------------


def _is_word_char(ch: str) -> bool:
    return ch.isalpha() or ch.isdigit() or ch in _EXTRA_WORD_CHARS


def _token_stream(text: str):
    """Yield ("token", word) and ("break", None) events in reading order.

    Whitespace ends a token but does not break a candidate phrase; any
    punctuation character emits a break. Tokens are lowercased and stripped
    of leading/trailing hyphens/apostrophes so quoted words stay clean while
    interior apostrophes (contractions) survive.
    """
    current: list[str] = []

    def flush():
        if current:
            word = "".join(current).strip(_EXTRA_WORD_CHARS).lower()
            current.clear()
            if word:
                yield ("token", word)

    for ch in text:
        if _is_word_char(ch):
            current.append(ch)
        elif ch.isspace():
            yield from flush()
        else:
            yield from flush()
            yield ("break", None)
    yield from flush()


def _candidate_phrases(text: str, stopwords: frozenset[str]) -> list[list[str]]:
    """Maximal runs of non-stopword tokens, split at stopwords and punctuation."""
    candidates: list[list[str]] = []
    current: list[str] = []
    for kind, word in _token_stream(text):
        if kind == "break" or word in stopwords:
            if current:
                candidates.append(current)
                current = []
        else:
            current.append(word)
    if current:
        candidates.append(current)
    return candidates


def rake_word_scores(candidates: list[list[str]]) -> dict[str, float]:
    """degree(w)/frequency(w) over the candidate set.

    Each occurrence of a word contributes the full length of its phrase to
    its degree, so words living in long phrases score high.
    """
    frequency: Counter[str] = Counter()
    degree: Counter[str] = Counter()
    for phrase in candidates:
        for word in phrase:
            frequency[word] += 1
            degree[word] += len(phrase)
    return {word: degree[word] / frequency[word] for word in frequency}


def rake_extract(text: str, config: RakeConfig) -> list[tuple[str, float]]:
    """Score candidate phrases and return the top slice, best first.

    Duplicate candidates collapse to one entry (their repetition is already
    reflected in the word frequencies). Ties keep first-occurrence order.
    The list is truncated to min(max_phrases, ceil(top_fraction * distinct
    candidate count)).
    """
    candidates = [
        phrase
        for phrase in _candidate_phrases(text, config.stopwords)
        if len(" ".join(phrase)) >= config.min_phrase_chars
    ]
    if not candidates:
        return []
    word_scores = rake_word_scores(candidates)
    phrase_scores: dict[str, float] = {}
    for phrase in candidates:
        key = " ".join(phrase)
        if key not in phrase_scores:
            phrase_scores[key] = sum(word_scores[word] for word in phrase)
    limit = min(config.max_phrases, math.ceil(config.top_fraction * len(phrase_scores)))
    ranked = sorted(
        enumerate(phrase_scores.items()),
        key=lambda item: (-item[1][1], item[0]),
    )
    return [(phrase, score) for _, (phrase, score) in ranked[:limit]]


# --- masking ----------------------------------------------------------------

_LETTER_OR_DIGIT = r"[^\W_]"


def _phrase_pattern(phrase: str) -> re.Pattern:
    """Case-insensitive pattern for a phrase at word boundaries.

    A match may not extend a surrounding word (no letter or digit directly
    before or after), but quotes, hyphens, and other punctuation around or
    between the tokens are tolerated because the tokenizer strips them
    during extraction.
    """
    inner = r"[\W_]+".join(re.escape(token) for token in phrase.split(" "))
    return re.compile(
        rf"(?<!{_LETTER_OR_DIGIT}){inner}(?!{_LETTER_OR_DIGIT})",
        re.IGNORECASE,
    )


def mask_reflection(reflection: Reflection, config: RakeConfig) -> Reflection:
    """Replace RAKE-selected phrases from the critical content everywhere.

    Replacement goes longest phrase first so contained phrases (e.g. "York"
    inside "New York") never leave partial leftovers. With nothing to
    extract the critique passes through unmasked. Re-masking an already
    masked reflection recomputes from the raw text, so it changes nothing.
    """
    extracted = (
        rake_extract(reflection.critical_content, config)
        if reflection.critical_content.strip()
        else []
    )
    masked = reflection.raw_text
    applied: list[str] = []
    for phrase, _ in sorted(extracted, key=lambda item: -len(item[0])):
        replaced = _phrase_pattern(phrase).sub(MASK_TOKEN, masked)
        if replaced != masked:
            applied.append(phrase)
            masked = replaced
    return replace(reflection, masked_text=masked, masked_phrases=tuple(applied))


def find_leaks(masked_text: str, phrases) -> list[str]:
    """Phrases still present (at word boundaries) outside the mask token."""
    neutral = masked_text.replace(MASK_TOKEN, " ")
    return [phrase for phrase in phrases if _phrase_pattern(phrase).search(neutral)]


# --- critique generation ----------------------------------------------------

_SECTION_HEADER_RE = re.compile(
    r"^[ \t]*(errors|fixes|critical)[ \t]*:", re.IGNORECASE | re.MULTILINE
)


def parse_reflection_sections(text: str) -> dict[str, str]:
    """Split model output into its three headed sections.

    Headers match case-insensitively at line starts; the first occurrence of
    each header wins. Raises SectionMissing naming the first absent section.
    """
    matches = list(_SECTION_HEADER_RE.finditer(text))
    sections: dict[str, str] = {}
    for index, match in enumerate(matches):
        name = match.group(1).lower()
        if name in sections:
            continue
        end = matches[index + 1].start() if index + 1 < len(matches) else len(text)
        sections[name] = text[match.end():end].strip()
    for name in SECTION_NAMES:
        if name not in sections:
            raise SectionMissing(name)
    return sections


def reflection_prompt(pair: SentencePair, draft: str, strategy: Strategy = Strategy.BASELINE) -> PromptBundle:
    template = load_template("reflection.txt")
    user_text = substitute(template, {
        "lang_name": language_name(pair.pair.source_lang),
        "source_text": pair.source_text,
        "draft_text": draft,
    })
    return PromptBundle(system_text="", user_text=user_text, pass_number=1, strategy=strategy)


def generate_reflection(
    spec: ModelSpec,
    pair: SentencePair,
    draft: str,
    *,
    client: LlmClient | None = None,
    strategy: Strategy = Strategy.BASELINE,
    request_key: str | None = None,
) -> Reflection:
    """Ask the model to critique ``draft`` and parse the three sections.

    A malformed critique is re-requested once with the identical prompt;
    a second malformed reply raises SectionMissing.
    """
    if not draft.strip():
        raise ValueError("draft must be non-empty")
    if client is None:
        client = LlmClient(provider_for_spec(spec))
    bundle = reflection_prompt(pair, draft, strategy)
    last_error: SectionMissing | None = None
    for _ in range(2):
        result = client.complete(spec, bundle, request_key=request_key)
        try:
            sections = parse_reflection_sections(result.text)
        except SectionMissing as exc:
            last_error = exc
            continue
        return Reflection(
            error_identification=sections["errors"],
            high_level_fixes=sections["fixes"],
            critical_content=sections["critical"],
            raw_text=result.text,
        )
    assert last_error is not None
    raise last_error
