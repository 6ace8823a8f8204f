"""Compact pre-LN transformer encoder with nine classification heads.

Pipeline per forward pass: token + learned position embeddings, four
pre-layer-norm blocks (multi-head attention then GELU feed-forward, both with
residual additions), a final layer norm, then nine independent linear heads
over the position-0 ([CLS]) representation.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from . import tensor as tk
from .schema import HEAD_CLASS_COUNTS, SLOT_NAMES, CsfFrame
from .tensor import Tensor

ATTENTION_MASK_FILL = -1e9


class InvalidConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 256
    heads: int = 4
    layers: int = 4
    ffn: int = 1024
    vocab: int = 8000
    max_len: int = 64
    head_class_counts: tuple[int, ...] = field(default_factory=lambda: HEAD_CLASS_COUNTS)
    dropout: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "head_class_counts", tuple(self.head_class_counts))
        if self.hidden <= 0 or self.heads <= 0 or self.layers <= 0 or self.ffn <= 0:
            raise InvalidConfigError("all dimensions must be positive")
        if self.hidden % self.heads != 0:
            raise InvalidConfigError(
                f"hidden ({self.hidden}) must be divisible by heads ({self.heads})"
            )
        if self.vocab < 260 or self.max_len < 2:
            raise InvalidConfigError("vocab must be >= 260 and max_len >= 2")
        if len(self.head_class_counts) != len(SLOT_NAMES):
            raise InvalidConfigError(
                f"expected {len(SLOT_NAMES)} head class counts, got {len(self.head_class_counts)}"
            )
        if any(c < 1 for c in self.head_class_counts):
            raise InvalidConfigError("head class counts must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head_class_counts"] = list(self.head_class_counts)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{**d, "head_class_counts": tuple(d["head_class_counts"])})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))


class ModelParameters:
    """Named tensor table with a stable iteration order."""

    def __init__(self, tensors: "OrderedDict[str, Tensor]"):
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def __len__(self) -> int:
        return len(self.tensors)

    def names(self) -> list[str]:
        return list(self.tensors)

    def param_count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self) -> "ModelParameters":
        out = OrderedDict()
        for name, t in self.tensors.items():
            out[name] = Tensor(t.data.copy(), requires_grad=t.requires_grad, name=name)
        return ModelParameters(out)


def parameter_shapes(config: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    h, f = config.hidden, config.ffn
    shapes: "OrderedDict[str, tuple[int, ...]]" = OrderedDict()
    shapes["tok_emb"] = (config.vocab, h)
    shapes["pos_emb"] = (config.max_len, h)
    for i in range(config.layers):
        p = f"layer{i}."
        shapes[p + "ln1.gain"] = (h,)
        shapes[p + "ln1.bias"] = (h,)
        for proj in ("q", "k", "v", "o"):
            shapes[p + f"attn.w{proj}"] = (h, h)
            shapes[p + f"attn.b{proj}"] = (h,)
        shapes[p + "ln2.gain"] = (h,)
        shapes[p + "ln2.bias"] = (h,)
        shapes[p + "ffn.w1"] = (h, f)
        shapes[p + "ffn.b1"] = (f,)
        shapes[p + "ffn.w2"] = (f, h)
        shapes[p + "ffn.b2"] = (h,)
    shapes["final_ln.gain"] = (h,)
    shapes["final_ln.bias"] = (h,)
    for slot, n_classes in zip(SLOT_NAMES, config.head_class_counts):
        shapes[f"head.{slot}.w"] = (h, n_classes)
        shapes[f"head.{slot}.b"] = (n_classes,)
    return shapes


def expected_param_count(config: ModelConfig) -> int:
    return sum(int(np.prod(s)) for s in parameter_shapes(config).values())


INIT_STD = 0.02


def init_parameters(config: ModelConfig, seed: int) -> ModelParameters:
    """Weights ~ N(0, 0.02); biases 0; layer-norm gains 1, biases 0."""
    rng = np.random.default_rng(seed)
    tensors: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".gain"):
            data = np.ones(shape, dtype=np.float32)
        elif name.endswith((".bias", ".b", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2")):
            data = np.zeros(shape, dtype=np.float32)
        else:
            data = rng.normal(0.0, INIT_STD, size=shape).astype(np.float32)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return ModelParameters(tensors)


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return tk.add(tk.matmul(x, w), b)


def forward(
    params: ModelParameters,
    config: ModelConfig,
    ids: np.ndarray,
    attention_mask: np.ndarray,
    training: bool = False,
    dropout_rng: Optional[np.random.Generator] = None,
) -> list[Tensor]:
    """Per-slot logits for a batch.

    ids, attention_mask: int arrays [batch, seq_len] with seq_len <= max_len.
    PAD key positions are removed from attention by an additive -1e9 before
    the softmax. Returns nine logits tensors in canonical slot order.
    """
    ids = np.asarray(ids)
    mask = np.asarray(attention_mask)
    if ids.ndim != 2 or mask.shape != ids.shape:
        raise tk.ShapeMismatchError(
            f"ids and attention_mask must share a [batch, seq] shape, got {ids.shape} / {mask.shape}"
        )
    batch, seq = ids.shape
    if seq > config.max_len:
        raise tk.ShapeMismatchError(f"sequence length {seq} exceeds max_len {config.max_len}")
    use_dropout = training and config.dropout > 0.0
    if use_dropout and dropout_rng is None:
        raise ValueError("training forward with dropout needs a dropout_rng")

    h, n_heads, dh = config.hidden, config.heads, config.head_dim
    additive_mask = ((1.0 - mask.astype(np.float32)) * ATTENTION_MASK_FILL)[:, None, None, :]
    scale_qk = 1.0 / float(np.sqrt(dh))

    x = tk.add(tk.embedding(params["tok_emb"], ids), tk.narrow(params["pos_emb"], 0, 0, seq))
    for i in range(config.layers):
        p = f"layer{i}."
        # attention sublayer
        normed = tk.layer_norm(x, params[p + "ln1.gain"], params[p + "ln1.bias"])
        flat = tk.reshape(normed, (batch * seq, h))
        q = tk.reshape(_linear(flat, params[p + "attn.wq"], params[p + "attn.bq"]), (batch, seq, n_heads, dh))
        k = tk.reshape(_linear(flat, params[p + "attn.wk"], params[p + "attn.bk"]), (batch, seq, n_heads, dh))
        v = tk.reshape(_linear(flat, params[p + "attn.wv"], params[p + "attn.bv"]), (batch, seq, n_heads, dh))
        q = tk.transpose(q, (0, 2, 1, 3))
        k = tk.transpose(k, (0, 2, 1, 3))
        v = tk.transpose(v, (0, 2, 1, 3))
        scores = tk.scale(tk.matmul(q, tk.transpose(k, (0, 1, 3, 2))), scale_qk)
        scores = tk.add_const(scores, additive_mask)
        attn = tk.softmax(scores, axis=-1)
        if use_dropout:
            attn = tk.dropout(attn, config.dropout, dropout_rng)
        ctx = tk.matmul(attn, v)
        ctx = tk.reshape(tk.transpose(ctx, (0, 2, 1, 3)), (batch * seq, h))
        attn_out = _linear(ctx, params[p + "attn.wo"], params[p + "attn.bo"])
        x = tk.add(x, tk.reshape(attn_out, (batch, seq, h)))
        # feed-forward sublayer
        normed = tk.layer_norm(x, params[p + "ln2.gain"], params[p + "ln2.bias"])
        flat = tk.reshape(normed, (batch * seq, h))
        inner = tk.gelu(_linear(flat, params[p + "ffn.w1"], params[p + "ffn.b1"]))
        ffn_out = _linear(inner, params[p + "ffn.w2"], params[p + "ffn.b2"])
        if use_dropout:
            ffn_out = tk.dropout(ffn_out, config.dropout, dropout_rng)
        x = tk.add(x, tk.reshape(ffn_out, (batch, seq, h)))

    x = tk.layer_norm(x, params["final_ln.gain"], params["final_ln.bias"])
    cls = tk.take(x, 0, axis=1)
    return [
        _linear(cls, params[f"head.{slot}.w"], params[f"head.{slot}.b"])
        for slot in SLOT_NAMES
    ]


def _trim(encoding) -> tuple[np.ndarray, np.ndarray]:
    """Drop trailing PAD (logits are invariant to it) for a faster forward."""
    n = int(encoding.attention_mask.sum())
    return encoding.ids[None, :n], encoding.attention_mask[None, :n]


def logits_to_frame(logit_rows: list[np.ndarray]) -> CsfFrame:
    """Per-slot argmax (ties break to the lowest index) to a frame."""
    indices = [int(np.argmax(row)) for row in logit_rows]
    return CsfFrame.from_indices(indices)


def predict(params: ModelParameters, config: ModelConfig, tokenizer, text: str) -> CsfFrame:
    enc = tokenizer.encode(text)
    ids, mask = _trim(enc)
    logits = forward(params, config, ids, mask)
    return logits_to_frame([t.data[0] for t in logits])


def predict_batch(
    params: ModelParameters,
    config: ModelConfig,
    tokenizer,
    texts: list[str],
    batch_size: int = 256,
) -> list[CsfFrame]:
    """Batched prediction; sequences are trimmed to the longest in each batch."""
    encs = [tokenizer.encode(t) for t in texts]
    frames: list[Optional[CsfFrame]] = [None] * len(texts)
    order = sorted(range(len(encs)), key=lambda i: int(encs[i].attention_mask.sum()))
    for start in range(0, len(order), batch_size):
        chunk = order[start : start + batch_size]
        width = max(int(encs[i].attention_mask.sum()) for i in chunk)
        ids = np.stack([encs[i].ids[:width] for i in chunk])
        mask = np.stack([encs[i].attention_mask[:width] for i in chunk])
        logits = [t.data for t in forward(params, config, ids, mask)]
        for row, i in enumerate(chunk):
            frames[i] = logits_to_frame([l[row] for l in logits])
    return frames  # type: ignore[return-value]
