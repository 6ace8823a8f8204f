"""Scikit-learn style facade over the tokenizer + model + trainer pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import DatasetSplit, Sample
from .gloss import render_gloss
from .model import ModelConfig, predict_batch
from .schema import SLOT_NAMES, CsfFrame
from .tokenizer import BpeTokenizer
from .trainer import TrainConfig, train


def check_texts(X) -> list[str]:
    texts = list(X)
    if not texts:
        raise ValueError("X must contain at least one text")
    for i, t in enumerate(texts):
        if not isinstance(t, str) or not t:
            raise ValueError(f"X[{i}] must be a non-empty string, got {t!r}")
    return texts


def check_frames(y, n: int) -> list[CsfFrame]:
    frames = [f if isinstance(f, CsfFrame) else CsfFrame.from_dict(f) for f in y]
    if len(frames) != n:
        raise ValueError(f"X and y length mismatch: {n} != {len(frames)}")
    return frames


class CsfExtractor(BaseEstimator):
    """Multilingual nine-slot extractor: fit on (texts, frames), predict frames.

    fit() trains a byte-level BPE tokenizer (unless one is supplied) and the
    transformer from scratch. Languages are not declared anywhere; the model
    infers everything from surface text.
    """

    def __init__(
        self,
        hidden: int = 256,
        heads: int = 4,
        layers: int = 4,
        ffn: int = 1024,
        vocab_size: int = 8000,
        max_len: int = 64,
        dropout: float = 0.1,
        epochs: int = 15,
        batch_size: int = 64,
        learning_rate: float = 2e-4,
        weight_decay: float = 0.01,
        warmup_fraction: float = 0.10,
        clip_norm: float = 1.0,
        seed: int = 42,
        tokenizer: BpeTokenizer | None = None,
    ):
        self.hidden = hidden
        self.heads = heads
        self.layers = layers
        self.ffn = ffn
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.dropout = dropout
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.warmup_fraction = warmup_fraction
        self.clip_norm = clip_norm
        self.seed = seed
        self.tokenizer = tokenizer

    def _model_config(self, vocab: int) -> ModelConfig:
        return ModelConfig(
            hidden=self.hidden,
            heads=self.heads,
            layers=self.layers,
            ffn=self.ffn,
            vocab=vocab,
            max_len=self.max_len,
            dropout=self.dropout,
        )

    def fit(self, X, y, eval_set: tuple | None = None) -> "CsfExtractor":
        """eval_set: optional (texts, frames) used for per-epoch validation;
        defaults to the training data."""
        texts = check_texts(X)
        frames = check_frames(y, len(texts))
        if self.tokenizer is not None:
            tokenizer = self.tokenizer
        else:
            tokenizer = BpeTokenizer(vocab_size=self.vocab_size, max_len=self.max_len).fit(texts)
        if eval_set is not None:
            val_texts = check_texts(eval_set[0])
            val_frames = check_frames(eval_set[1], len(val_texts))
        else:
            val_texts, val_frames = texts, frames
        dataset = DatasetSplit(
            train=[Sample(t, "und", f) for t, f in zip(texts, frames)],
            val=[Sample(t, "und", f) for t, f in zip(val_texts, val_frames)],
        )
        train_cfg = TrainConfig(
            batch=self.batch_size,
            max_lr=self.learning_rate,
            epochs=self.epochs,
            weight_decay=self.weight_decay,
            warmup_fraction=self.warmup_fraction,
            clip_norm=self.clip_norm,
            seed=self.seed,
        )
        config = self._model_config(tokenizer.achieved_vocab_size_)
        result = train(config, train_cfg, dataset, tokenizer)
        self.tokenizer_ = tokenizer
        self.config_ = config
        self.params_ = result.params
        self.history_ = result.history
        self.n_steps_ = result.steps
        self.n_parameters_ = result.params.param_count()
        return self

    def predict(self, X) -> list[CsfFrame]:
        check_is_fitted(self, "params_")
        return predict_batch(self.params_, self.config_, self.tokenizer_, check_texts(X))

    def predict_gloss(self, X) -> list[str]:
        return [render_gloss(frame) for frame in self.predict(X)]

    def score(self, X, y) -> float:
        """Average per-slot accuracy (the mean of the nine slot accuracies)."""
        texts = check_texts(X)
        frames = check_frames(y, len(texts))
        predictions = self.predict(texts)
        per_slot = np.zeros(len(SLOT_NAMES))
        for gold, pred in zip(frames, predictions):
            per_slot += np.array(gold.to_indices()) == np.array(pred.to_indices())
        return float((per_slot / len(texts)).mean())
