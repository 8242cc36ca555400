"""Sentence- and corpus-level BLEU, plus the pluggable semantic-metric client.

BLEU here is the clipped n-gram precision formulation with a brevity
penalty. Scores are reported in [0, 1]. The optional "floor-half"
smoothing replaces a zero precision of order n >= 2 with
1 / (2 * total n-grams of that order) so per-sentence comparisons are not
degenerate; unigram precision is never smoothed.

The semantic metric stays out of process behind a small wire protocol:
POST /score with a list of {src, mt, ref?} returns a list of {score} in
the same order, and GET /health reports {status, scorer_id}.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import httpx

from .errors import EmptyBatch, EmptyReference, ScorerProtocolError, ScorerUnavailable

TOKENIZERS = ("whitespace", "intl-punct")
SMOOTHING_MODES = ("none", "floor-half")


@dataclass(frozen=True)
class BleuConfig:
    max_order: int = 4
    weights: tuple[float, ...] | None = None
    smoothing: str = "floor-half"
    tokenizer: str = "intl-punct"

    def __post_init__(self) -> None:
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")
        if self.smoothing not in SMOOTHING_MODES:
            raise ValueError(f"unknown smoothing {self.smoothing!r}")
        if self.tokenizer not in TOKENIZERS:
            raise ValueError(f"unknown tokenizer {self.tokenizer!r}")
        if self.weights is None:
            uniform = tuple(1.0 / self.max_order for _ in range(self.max_order))
            object.__setattr__(self, "weights", uniform)
        else:
            weights = tuple(float(w) for w in self.weights)
            if len(weights) != self.max_order:
                raise ValueError("need exactly one weight per n-gram order")
            if abs(sum(weights) - 1.0) > 1e-9:
                raise ValueError(f"weights must sum to 1, got {sum(weights)}")
            object.__setattr__(self, "weights", weights)


@dataclass(frozen=True)
class BleuScore:
    score: float
    precisions: tuple[float, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int


@dataclass(frozen=True)
class SemanticScore:
    score: float
    scorer_id: str
    reference_used: bool

    def __post_init__(self) -> None:
        if not self.scorer_id:
            raise ValueError("scorer_id must be non-empty")


def tokenize(text: str, tokenizer: str = "intl-punct") -> list[str]:
    """Whitespace tokenization, optionally isolating punctuation first."""
    if tokenizer == "whitespace":
        return text.split()
    if tokenizer != "intl-punct":
        raise ValueError(f"unknown tokenizer {tokenizer!r}")
    parts: list[str] = []
    for ch in text:
        if unicodedata.category(ch)[0] in ("P", "S"):
            parts.append(f" {ch} ")
        else:
            parts.append(ch)
    return "".join(parts).split()


def _ngram_counts(tokens: Sequence[str], order: int) -> Counter:
    return Counter(tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1))


def _match_totals(
    hyp_tokens: Sequence[str], ref_tokens: Sequence[str], max_order: int
) -> tuple[list[int], list[int]]:
    """Clipped match count and hypothesis n-gram total per order."""
    matches = [0] * max_order
    totals = [0] * max_order
    for order in range(1, max_order + 1):
        hyp_counts = _ngram_counts(hyp_tokens, order)
        if not hyp_counts:
            continue
        ref_counts = _ngram_counts(ref_tokens, order)
        totals[order - 1] = sum(hyp_counts.values())
        matches[order - 1] = sum(
            min(count, ref_counts[gram]) for gram, count in hyp_counts.items()
        )
    return matches, totals


def _compose(matches: list[int], totals: list[int], hyp_len: int, ref_len: int,
             config: BleuConfig) -> BleuScore:
    precisions: list[float] = []
    for order, (m, t) in enumerate(zip(matches, totals), start=1):
        if t > 0 and m > 0:
            precisions.append(m / t)
        elif t > 0 and order >= 2 and config.smoothing == "floor-half":
            precisions.append(1.0 / (2.0 * t))
        else:
            precisions.append(0.0)
    if hyp_len == 0:
        bp = 0.0  # limit of exp(1 - r/c) as c -> 0
    elif hyp_len > ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    if all(p > 0.0 for p in precisions):
        score = bp
        for weight, p in zip(config.weights, precisions):
            score *= p ** weight
    else:
        score = 0.0
    return BleuScore(
        score=score,
        precisions=tuple(precisions),
        brevity_penalty=bp,
        hyp_len=hyp_len,
        ref_len=ref_len,
    )


def sentence_bleu(hypothesis: str, reference: str, config: BleuConfig = BleuConfig()) -> BleuScore:
    """Score one hypothesis against one reference."""
    ref_tokens = tokenize(reference, config.tokenizer)
    if not ref_tokens:
        raise EmptyReference("reference tokenizes to nothing")
    hyp_tokens = tokenize(hypothesis, config.tokenizer)
    matches, totals = _match_totals(hyp_tokens, ref_tokens, config.max_order)
    return _compose(matches, totals, len(hyp_tokens), len(ref_tokens), config)


def corpus_bleu(pairs: Sequence[tuple[str, str]], config: BleuConfig = BleuConfig()) -> BleuScore:
    """Pool n-gram counts over all (hypothesis, reference) pairs, then score.

    Counts are summed before precisions are formed, so the result is not the
    mean of per-sentence scores.
    """
    if not pairs:
        raise EmptyBatch("corpus_bleu needs at least one pair")
    matches = [0] * config.max_order
    totals = [0] * config.max_order
    hyp_len = 0
    ref_len = 0
    for hypothesis, reference in pairs:
        ref_tokens = tokenize(reference, config.tokenizer)
        if not ref_tokens:
            raise EmptyReference("reference tokenizes to nothing")
        hyp_tokens = tokenize(hypothesis, config.tokenizer)
        pair_matches, pair_totals = _match_totals(hyp_tokens, ref_tokens, config.max_order)
        for i in range(config.max_order):
            matches[i] += pair_matches[i]
            totals[i] += pair_totals[i]
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
    return _compose(matches, totals, hyp_len, ref_len, config)


# --- semantic scorer --------------------------------------------------------


@dataclass(frozen=True)
class ScoreItem:
    src: str
    mt: str
    ref: str | None = None


class HttpScorer:
    """Client for the scorer wire protocol (POST /score, GET /health)."""

    def __init__(self, base_url: str, *, timeout: float | None = 60.0, http: httpx.Client | None = None) -> None:
        self.base_url = base_url.rstrip("/")
        # injected clients (e.g. an in-process test transport) own their timeout
        self._timeout_kwargs = {} if http is not None or timeout is None else {"timeout": timeout}
        self._http = http or httpx.Client()
        self._scorer_id: str | None = None

    def health(self) -> dict:
        try:
            response = self._http.get(f"{self.base_url}/health", **self._timeout_kwargs)
        except httpx.HTTPError as exc:
            raise ScorerUnavailable(f"scorer health check failed: {exc}") from None
        if response.status_code != 200:
            raise ScorerUnavailable(f"scorer not ready (status {response.status_code})")
        data = response.json()
        self._scorer_id = data.get("scorer_id") or self._scorer_id
        return data

    @property
    def scorer_id(self) -> str:
        if self._scorer_id is None:
            self.health()
        assert self._scorer_id is not None
        return self._scorer_id

    def score_batch(self, items: Sequence[ScoreItem]) -> list[float]:
        payload = []
        for item in items:
            body = {"src": item.src, "mt": item.mt}
            if item.ref is not None:
                body["ref"] = item.ref
            payload.append(body)
        try:
            response = self._http.post(f"{self.base_url}/score", json=payload, **self._timeout_kwargs)
        except httpx.HTTPError as exc:
            raise ScorerUnavailable(f"scorer request failed: {exc}") from None
        if response.status_code == 503:
            raise ScorerUnavailable("scorer is still loading its model")
        if response.status_code != 200:
            raise ScorerProtocolError(f"scorer returned status {response.status_code}")
        try:
            data = response.json()
            scores = [float(entry["score"]) for entry in data]
        except (ValueError, TypeError, KeyError) as exc:
            raise ScorerProtocolError(f"malformed scorer response: {exc}") from None
        if len(scores) != len(items):
            raise ScorerProtocolError(
                f"scorer returned {len(scores)} scores for {len(items)} items"
            )
        return scores


def semantic_score(source: str, hypothesis: str, reference: str | None, scorer) -> SemanticScore:
    """Fetch one segment-level score from a scorer handle, verbatim."""
    scores = scorer.score_batch([ScoreItem(src=source, mt=hypothesis, ref=reference)])
    if len(scores) != 1:
        raise ScorerProtocolError(f"expected one score, got {len(scores)}")
    return SemanticScore(score=scores[0], scorer_id=scorer.scorer_id, reference_used=reference is not None)
