"""Scoring backends: wrappers around published translation-quality models.

A backend is constructed cheaply, loads its checkpoint in ``load()`` (which
may download and take minutes), and then scores batches deterministically.
``scorer_id`` always reports exactly which model is serving, because scores
from different checkpoints are not comparable.

Model ids select the backend by scheme:

* ``comet:<checkpoint>`` or a bare HuggingFace id -> CometBackend
  (reference-based learned metric; needs the ``comet`` extra)
* ``embed:<checkpoint>``                          -> EmbeddingSimilarityBackend
  (bi-encoder cosine similarity; needs the ``embed`` extra)
"""

from __future__ import annotations

from typing import Protocol, Sequence


class ScoreRequestItem(Protocol):
    src: str
    mt: str
    ref: str | None


class ScoringBackend(Protocol):
    scorer_id: str

    def load(self) -> None: ...

    def score_batch(self, items: Sequence) -> list[float]: ...


class CometBackend:
    """Segment-level scores from a COMET checkpoint, raw and unrescaled."""

    def __init__(self, model_id: str) -> None:
        self.scorer_id = model_id
        self._model = None

    def load(self) -> None:
        from comet import download_model, load_from_checkpoint

        path = download_model(self.scorer_id)
        self._model = load_from_checkpoint(path)
        self._model.eval()

    def score_batch(self, items: Sequence) -> list[float]:
        assert self._model is not None, "load() must complete first"
        data = []
        for item in items:
            entry = {"src": item.src, "mt": item.mt}
            if item.ref is not None:
                entry["ref"] = item.ref
            data.append(entry)
        output = self._model.predict(data, batch_size=len(data), gpus=0, progress_bar=False)
        return [float(score) for score in output.scores]


class EmbeddingSimilarityBackend:
    """Cosine similarity between the hypothesis and the reference embedding.

    Falls back to similarity against the source when no reference is sent,
    which only makes sense for multilingual encoders.
    """

    def __init__(self, model_id: str) -> None:
        self.scorer_id = f"embed:{model_id}"
        self._checkpoint = model_id
        self._model = None

    def load(self) -> None:
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(self._checkpoint, device="cpu")

    def score_batch(self, items: Sequence) -> list[float]:
        assert self._model is not None, "load() must complete first"
        hypotheses = [item.mt for item in items]
        anchors = [item.ref if item.ref is not None else item.src for item in items]
        hyp_vectors = self._model.encode(hypotheses, normalize_embeddings=True)
        anchor_vectors = self._model.encode(anchors, normalize_embeddings=True)
        return [float((h * a).sum()) for h, a in zip(hyp_vectors, anchor_vectors)]


DEFAULT_MODEL_ID = "Unbabel/wmt22-comet-da"


def backend_for(model_id: str) -> ScoringBackend:
    if model_id.startswith("embed:"):
        return EmbeddingSimilarityBackend(model_id.split(":", 1)[1])
    if model_id.startswith("comet:"):
        return CometBackend(model_id.split(":", 1)[1])
    return CometBackend(model_id)
