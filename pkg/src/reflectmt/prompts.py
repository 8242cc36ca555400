"""Prompt template rendering and delimiter-based output parsing.

Templates live as plain text files under ``templates/``, one per
(strategy, pass) named ``<strategy>_<pass>.txt``, so they can be audited
byte for byte. Placeholders are ``{lang_name}``, ``{source_text}``,
``{reflection}``, and ``{examples}``; substitution happens in a single
pass so placeholder-like text inside values is never re-expanded.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .corpus import SentencePair
from .errors import (
    DelimiterMissing,
    EmptyReflection,
    EmptyTranslation,
    MissingExamples,
    UnknownLanguage,
)

START_DELIMITER = "<START_TRANSLATION>"
END_DELIMITER = "<END_TRANSLATION>"

LANGUAGE_NAMES = {
    "zu": "isiZulu",
    "xh": "isiXhosa",
    "en": "English",
}


class Strategy(enum.Enum):
    BASELINE = "baseline"
    BRIEF_REASONING = "brief_reasoning"
    FEW_SHOT = "few_shot"

    @classmethod
    def parse(cls, label: str) -> "Strategy":
        for member in cls:
            if member.value == label:
                return member
        raise ValueError(f"unknown strategy {label!r}; expected one of "
                         f"{[m.value for m in cls]}")


@dataclass(frozen=True)
class FewShotExample:
    source_lang_label: str
    source_text: str
    translation: str

    def __post_init__(self) -> None:
        for label, value in (("source_lang_label", self.source_lang_label),
                             ("source_text", self.source_text),
                             ("translation", self.translation)):
            if not value:
                raise ValueError(f"few-shot example field {label} is empty")


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    pass_number: int
    strategy: Strategy


# The in-context examples printed for isiZulu; other source languages
# need user-supplied examples.
DEFAULT_FEW_SHOT_EXAMPLES: dict[str, tuple[FewShotExample, ...]] = {
    "zu": (
        FewShotExample("isiZulu", "Ngiyabonga kakhulu.", "Thank you very much."),
        FewShotExample("isiZulu", "Unjani namhlanje?", "How are you today?"),
    ),
}


def language_name(code: str) -> str:
    try:
        return LANGUAGE_NAMES[code]
    except KeyError:
        raise UnknownLanguage(f"no language name registered for code {code!r}") from None


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read a template file shipped with the package, without its final newline."""
    text = resources.files("reflectmt").joinpath("templates", name).read_text(encoding="utf-8")
    return text.rstrip("\n")


_PLACEHOLDER_RE = re.compile(r"\{(lang_name|source_text|reflection|examples|draft_text)\}")


def substitute(template: str, values: dict[str, str]) -> str:
    """Replace placeholders in one pass; values are never re-scanned."""
    def replace(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise KeyError(f"template placeholder {{{key}}} has no value")
        return values[key]

    return _PLACEHOLDER_RE.sub(replace, template)


def format_examples(examples: tuple[FewShotExample, ...] | list[FewShotExample]) -> str:
    lines = []
    for example in examples:
        lines.append(f"Source ({example.source_lang_label}): {example.source_text}")
        lines.append(f"Translation: {example.translation}")
    return "\n".join(lines)


def render_first_pass(
    pair: SentencePair,
    strategy: Strategy,
    examples: tuple[FewShotExample, ...] | list[FewShotExample] = (),
) -> PromptBundle:
    """Render the first-attempt prompt for ``pair`` under ``strategy``."""
    lang = language_name(pair.pair.source_lang)
    template = load_template(f"{strategy.value}_1.txt")
    values = {"lang_name": lang, "source_text": pair.source_text}
    if strategy is Strategy.FEW_SHOT:
        if not examples:
            raise MissingExamples("few-shot strategy needs at least one example")
        values["examples"] = format_examples(examples)
    user_text = substitute(template, values)
    return PromptBundle(system_text="", user_text=user_text, pass_number=1, strategy=strategy)


def render_second_pass(pair: SentencePair, strategy: Strategy, masked_reflection: str) -> PromptBundle:
    """Render the improvement prompt that embeds the masked reflection verbatim."""
    if not masked_reflection or not masked_reflection.strip():
        raise EmptyReflection("second pass needs a non-empty reflection")
    lang = language_name(pair.pair.source_lang)
    template = load_template(f"{strategy.value}_2.txt")
    user_text = substitute(template, {
        "lang_name": lang,
        "source_text": pair.source_text,
        "reflection": masked_reflection,
    })
    return PromptBundle(system_text="", user_text=user_text, pass_number=2, strategy=strategy)


def parse_translation(raw_model_output: str) -> str:
    """Extract the text between the first delimiter pair, trimmed.

    Only the first ``<START_TRANSLATION>`` and the first subsequent
    ``<END_TRANSLATION>`` count; anything after them is ignored.
    """
    start = raw_model_output.find(START_DELIMITER)
    if start < 0:
        raise DelimiterMissing(f"{START_DELIMITER} not found in model output")
    end = raw_model_output.find(END_DELIMITER, start + len(START_DELIMITER))
    if end < 0:
        raise DelimiterMissing(f"{END_DELIMITER} not found after {START_DELIMITER}")
    text = raw_model_output[start + len(START_DELIMITER):end].strip()
    if not text:
        raise EmptyTranslation("translation span between delimiters is empty")
    return text


def validate_bundle(bundle: PromptBundle) -> None:
    """Check the structural guarantees every rendered bundle must satisfy."""
    if bundle.pass_number not in (1, 2):
        raise ValueError(f"pass_number must be 1 or 2, got {bundle.pass_number}")
    if START_DELIMITER not in bundle.user_text or END_DELIMITER not in bundle.user_text:
        raise ValueError("prompt is missing a translation delimiter")
    if bundle.pass_number == 2 and "Reflection:" not in bundle.user_text:
        raise ValueError("second-pass prompt is missing the Reflection: slot")
