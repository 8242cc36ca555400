from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reflectmt.corpus import LanguagePair, SentencePair

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def zu_en() -> LanguagePair:
    return LanguagePair("zu", "en")


@pytest.fixture
def pair(zu_en) -> SentencePair:
    return SentencePair("opus:0", "Ngiyabonga.", "Thank you.", zu_en, "opus")


def make_pair(source: str, reference: str, pair_id: str = "opus:0") -> SentencePair:
    return SentencePair(pair_id, source, reference, LanguagePair("zu", "en"), "opus")


class StubScorer:
    """In-process stand-in for the semantic scorer wire protocol."""

    def __init__(self, fn=None, scorer_id="stub-scorer"):
        self._fn = fn or (lambda item, index: 0.5)
        self.scorer_id = scorer_id
        self.seen = []

    def score_batch(self, items):
        start = len(self.seen)
        self.seen.extend(items)
        return [float(self._fn(item, start + i)) for i, item in enumerate(items)]
