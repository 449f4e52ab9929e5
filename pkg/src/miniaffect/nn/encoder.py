"""Micro transformer encoder with pluggable output heads.

Architecture: learned token + position embeddings, then n_layers of pre-norm
blocks (multi-head self-attention with PAD masking, residual; GELU feed-forward,
residual), a final layer norm, and the position-0 (CLS) hidden state as the
sequence summary. Heads map that vector to one scalar (regression_single), two
independent scalars (regression_dual) or 7 class logits (classify7).

Parameters live in a plain name -> float64 ndarray dict so the optimizer and
checkpoint code can stay shape-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape

HEAD_KINDS = ("regression_single", "regression_dual", "classify7")

Parameters = dict[str, np.ndarray]


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int = 0  # 0 = fill in from the built vocabulary
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 64
    dropout_rate: float = 0.1
    head_kind: str = "classify7"

    def validate(self) -> None:
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate {self.dropout_rate} outside [0, 1)")
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"unknown head_kind {self.head_kind!r}")


def param_shapes(cfg: EncoderConfig) -> list[tuple[str, tuple[int, ...], str]]:
    """Ordered (name, shape, init kind) manifest; kinds: xavier, zeros, ones."""
    d, f = cfg.d_model, cfg.d_ff
    shapes: list[tuple[str, tuple[int, ...], str]] = [
        ("tok_emb", (cfg.vocab_size, d), "xavier"),
        ("pos_emb", (cfg.max_len, d), "xavier"),
    ]
    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        shapes += [
            (p + "attn_norm.gain", (d,), "ones"),
            (p + "attn_norm.bias", (d,), "zeros"),
            (p + "attn.wq", (d, d), "xavier"),
            (p + "attn.bq", (d,), "zeros"),
            (p + "attn.wk", (d, d), "xavier"),
            (p + "attn.bk", (d,), "zeros"),
            (p + "attn.wv", (d, d), "xavier"),
            (p + "attn.bv", (d,), "zeros"),
            (p + "attn.wo", (d, d), "xavier"),
            (p + "attn.bo", (d,), "zeros"),
            (p + "ff_norm.gain", (d,), "ones"),
            (p + "ff_norm.bias", (d,), "zeros"),
            (p + "ff.w1", (d, f), "xavier"),
            (p + "ff.b1", (f,), "zeros"),
            (p + "ff.w2", (f, d), "xavier"),
            (p + "ff.b2", (d,), "zeros"),
        ]
    shapes += [
        ("final_norm.gain", (d,), "ones"),
        ("final_norm.bias", (d,), "zeros"),
    ]
    if cfg.head_kind == "regression_single":
        shapes += [("head.w", (d, 1), "xavier"), ("head.b", (1,), "zeros")]
    elif cfg.head_kind == "regression_dual":
        shapes += [
            ("head_empathy.w", (d, 1), "xavier"),
            ("head_empathy.b", (1,), "zeros"),
            ("head_distress.w", (d, 1), "xavier"),
            ("head_distress.b", (1,), "zeros"),
        ]
    else:
        shapes += [("head.w", (d, 7), "xavier"), ("head.b", (7,), "zeros")]
    return shapes


def init_params(cfg: EncoderConfig, seed: int) -> Parameters:
    """Seeded Xavier-uniform weights (PCG64); biases zero, norm gains one."""
    cfg.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    params: Parameters = {}
    for name, shape, kind in param_shapes(cfg):
        if kind == "xavier":
            fan_in, fan_out = shape[0], shape[-1]
            a = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-a, a, size=shape)
        elif kind == "zeros":
            params[name] = np.zeros(shape)
        else:
            params[name] = np.ones(shape)
    return params


def wrap_params(params: Parameters) -> dict[str, Node]:
    return {name: Node(arr) for name, arr in params.items()}


def collect_grads(pnodes: dict[str, Node], params: Parameters) -> Parameters:
    """Gradients per tensor after backward; unused tensors get exact zeros."""
    return {
        name: pnodes[name].grad if pnodes[name].grad is not None else np.zeros_like(arr)
        for name, arr in params.items()
    }


def _linear(tape: Tape, x: Node, w: Node, b: Node) -> Node:
    batch_shape = x.value.shape[:-1]
    flat = ad.reshape(tape, x, (-1, x.value.shape[-1]))
    out = ad.add(tape, ad.matmul(tape, flat, w), b)
    return ad.reshape(tape, out, (*batch_shape, w.value.shape[-1]))


def forward(
    pnodes: dict[str, Node],
    cfg: EncoderConfig,
    ids: np.ndarray,
    lengths: np.ndarray,
    tape: Tape,
    train_mode: bool = False,
    attn_sink: list | None = None,
) -> Node:
    """Encode a [batch, max_len] id matrix to per-example CLS vectors [batch, d_model].

    Internally the batch is trimmed to its longest true length: PAD keys are
    masked out of every attention row, so positions beyond the longest real
    token cannot influence any output and dropping them is exact.

    With train_mode, dropout (rate cfg.dropout_rate) is applied to the embedding
    sum, the attention probabilities and each sublayer output, drawing noise
    from the tape's rng. attn_sink, when given, receives one [batch, heads,
    seq, seq] probability array per layer.
    """
    batch, width = ids.shape
    if width != cfg.max_len:
        raise ValueError(f"sequence length {width} != configured max_len {cfg.max_len}")
    seq_len = max(1, int(lengths.max()))
    ids = ids[:, :seq_len]
    key_mask = np.arange(seq_len)[None, :] < lengths[:, None]  # [batch, seq]

    drop = train_mode and cfg.dropout_rate > 0.0

    def dropped(node: Node) -> Node:
        return ad.dropout(tape, node, cfg.dropout_rate) if drop else node

    x = ad.add(
        tape,
        ad.embedding(tape, pnodes["tok_emb"], ids),
        ad.first_rows(tape, pnodes["pos_emb"], seq_len),
    )
    x = dropped(x)

    n_heads = cfg.n_heads
    d_head = cfg.d_model // n_heads
    scale = 1.0 / np.sqrt(d_head)
    attn_mask = key_mask[:, None, None, :]  # broadcast over heads and query rows

    for i in range(cfg.n_layers):
        p = f"layers.{i}."
        h = ad.layer_norm(tape, x, pnodes[p + "attn_norm.gain"], pnodes[p + "attn_norm.bias"])

        def split_heads(node: Node) -> Node:
            r = ad.reshape(tape, node, (batch, seq_len, n_heads, d_head))
            return ad.transpose(tape, r, (0, 2, 1, 3))  # [batch, heads, seq, d_head]

        q = split_heads(_linear(tape, h, pnodes[p + "attn.wq"], pnodes[p + "attn.bq"]))
        k = split_heads(_linear(tape, h, pnodes[p + "attn.wk"], pnodes[p + "attn.bk"]))
        v = split_heads(_linear(tape, h, pnodes[p + "attn.wv"], pnodes[p + "attn.bv"]))

        scores = ad.mul(tape, ad.matmul(tape, q, ad.transpose(tape, k, (0, 1, 3, 2))), scale)
        probs = ad.masked_softmax(tape, scores, attn_mask)
        if attn_sink is not None:
            attn_sink.append(probs.value.copy())
        probs = dropped(probs)

        ctx = ad.transpose(tape, ad.matmul(tape, probs, v), (0, 2, 1, 3))
        ctx = ad.reshape(tape, ctx, (batch, seq_len, cfg.d_model))
        attn_out = dropped(_linear(tape, ctx, pnodes[p + "attn.wo"], pnodes[p + "attn.bo"]))
        x = ad.add(tape, x, attn_out)

        h = ad.layer_norm(tape, x, pnodes[p + "ff_norm.gain"], pnodes[p + "ff_norm.bias"])
        f = _linear(tape, h, pnodes[p + "ff.w1"], pnodes[p + "ff.b1"])
        f = ad.gelu(tape, f)
        f = _linear(tape, f, pnodes[p + "ff.w2"], pnodes[p + "ff.b2"])
        x = ad.add(tape, x, dropped(f))

    x = ad.layer_norm(tape, x, pnodes["final_norm.gain"], pnodes["final_norm.bias"])
    return ad.select_cls(tape, x)


def head_apply(pnodes: dict[str, Node], cfg: EncoderConfig, cls_vectors: Node, tape: Tape):
    """Map CLS vectors to raw head outputs.

    regression_single -> Node [batch]; regression_dual -> (empathy Node,
    distress Node), each [batch]; classify7 -> Node [batch, 7] of logits.
    Regression outputs are raw and unclipped.
    """
    batch = cls_vectors.value.shape[0]

    def scalar_head(prefix: str) -> Node:
        out = ad.add(tape, ad.matmul(tape, cls_vectors, pnodes[prefix + ".w"]), pnodes[prefix + ".b"])
        return ad.reshape(tape, out, (batch,))

    if cfg.head_kind == "regression_single":
        return scalar_head("head")
    if cfg.head_kind == "regression_dual":
        return scalar_head("head_empathy"), scalar_head("head_distress")
    return ad.add(tape, ad.matmul(tape, cls_vectors, pnodes["head.w"]), pnodes["head.b"])


def run_model(params: Parameters, cfg: EncoderConfig, ids: np.ndarray, lengths: np.ndarray):
    """Eval-mode forward + head on raw parameter arrays; returns plain ndarrays."""
    tape = Tape()
    pnodes = wrap_params(params)
    cls = forward(pnodes, cfg, ids, lengths, tape, train_mode=False)
    out = head_apply(pnodes, cfg, cls, tape)
    if isinstance(out, tuple):
        return out[0].value, out[1].value
    return out.value
