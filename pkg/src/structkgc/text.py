"""Corpus tokenizer and a from-scratch transformer text encoder.

The encoder is deliberately small.  Its one non-standard feature is the
structural key/value prefix: at every layer one extra key vector and one
extra value vector (projected from structural embeddings) are prepended
to that layer's keys and values before self-attention.  Sequence
positions never include the prefix, so pooling is automatically over
token positions only.

When a layer's prefix value vector is exactly zero the prefix position
is masked out entirely instead of being attended with a zero value.
This makes "no structural prefix" an exact special case of the same code
path (a zero key would otherwise still soak up uniform attention mass).
Gradients do not flow to a masked prefix; the mask only ever triggers
for exactly-zero values, which in practice means the feature is off.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
_SPECIALS = (PAD, UNK, CLS, SEP)
_WORD_RE = re.compile(r"[a-z0-9]+")


def split_text(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _WORD_RE.findall(text.lower())


class Tokenizer:
    """Whitespace/punctuation tokenizer over a fixed vocabulary."""

    def __init__(self, token_to_id: dict[str, int]):
        for i, s in enumerate(_SPECIALS):
            if token_to_id.get(s) != i:
                raise ValueError(f"special token {s} must have id {i}")
        ids = sorted(token_to_id.values())
        if ids != list(range(len(token_to_id))):
            raise ValueError("token ids must be contiguous from 0")
        self.token_to_id = dict(token_to_id)
        self.id_to_token = {i: t for t, i in token_to_id.items()}
        self.pad_id, self.unk_id, self.cls_id, self.sep_id = range(4)

    @classmethod
    def build(cls, texts, min_freq: int = 2) -> "Tokenizer":
        """Count tokens over a text stream (with multiplicity) and keep the
        ones seen at least ``min_freq`` times, alphabetically ordered."""
        counts: dict[str, int] = {}
        for text in texts:
            for tok in split_text(text):
                counts[tok] = counts.get(tok, 0) + 1
        vocab = {s: i for i, s in enumerate(_SPECIALS)}
        for tok in sorted(counts):
            if counts[tok] >= min_freq:
                vocab[tok] = len(vocab)
        return cls(vocab)

    def __len__(self) -> int:
        return len(self.token_to_id)

    def encode_words(self, text: str) -> list[int]:
        return [self.token_to_id.get(t, self.unk_id) for t in split_text(text)]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for i in range(len(self.id_to_token)):
                f.write(f"{self.id_to_token[i]}\t{i}\n")

    @classmethod
    def load(cls, path) -> "Tokenizer":
        vocab: dict[str, int] = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                token, idx = line.rstrip("\n").split("\t")
                vocab[token] = int(idx)
        return cls(vocab)


def _fit_segments(segments: list[list[int]], drop_order: list[int], budget: int):
    """Trim segments (from the tail of each) in drop_order until they fit."""
    total = sum(len(s) for s in segments)
    for seg_idx in drop_order:
        if total <= budget:
            break
        overflow = total - budget
        seg = segments[seg_idx]
        removed = min(overflow, len(seg))
        if removed:
            del seg[len(seg) - removed:]
            total -= removed
    return segments


def tokenize_hr(tokenizer: Tokenizer, entity, relation, max_len: int) -> list[int]:
    """([CLS], head name, head description, [SEP], relation name,
    relation description, [SEP]), truncated to ``max_len``.

    The head description is truncated first so the relation segment
    survives; the trailing separators are always kept.
    """
    segments = [
        tokenizer.encode_words(entity.name),
        tokenizer.encode_words(entity.description),
        tokenizer.encode_words(relation.name),
        tokenizer.encode_words(getattr(relation, "description", "")),
    ]
    budget = max_len - 3  # [CLS] and two [SEP]
    # head description, then head name, then relation description, then name
    _fit_segments(segments, [1, 0, 3, 2], budget)
    head, head_desc, rel, rel_desc = segments
    return (
        [tokenizer.cls_id] + head + head_desc + [tokenizer.sep_id]
        + rel + rel_desc + [tokenizer.sep_id]
    )


def tokenize_entity(tokenizer: Tokenizer, entity, max_len: int) -> list[int]:
    """([CLS], name, description, [SEP]) for the tail side."""
    segments = [
        tokenizer.encode_words(entity.name),
        tokenizer.encode_words(entity.description),
    ]
    _fit_segments(segments, [1, 0], max_len - 2)
    name, desc = segments
    return [tokenizer.cls_id] + name + desc + [tokenizer.sep_id]


# ---------------------------------------------------------------------------
# encoder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TextEncoderConfig:
    layers: int
    hidden_dim: int
    heads: int
    max_len: int
    vocab_size: int

    def __post_init__(self):
        if self.hidden_dim % self.heads != 0:
            raise ValueError(
                f"hidden dim {self.hidden_dim} not divisible by {self.heads} heads"
            )


def _linear_init(rng, rows, cols):
    return rng.normal(0.0, 0.02, size=(rows, cols))


class TextEncoder:
    """Toy BERT-style encoder producing unit-norm mean-pooled embeddings."""

    def __init__(self, config: TextEncoderConfig, rng: np.random.Generator,
                 name: str = "enc"):
        self.config = config
        self.name = name
        d = config.hidden_dim
        self._params: dict[str, Node] = {}

        def param(key, value):
            node = Node(value)
            self._params[f"{name}.{key}"] = node
            return node

        self.tok_emb = param("tok_emb", _linear_init(rng, config.vocab_size, d))
        self.pos_emb = param("pos_emb", _linear_init(rng, config.max_len, d))
        self.layers = []
        for i in range(config.layers):
            layer = {
                "wq": param(f"l{i}.wq", _linear_init(rng, d, d)),
                "bq": param(f"l{i}.bq", np.zeros((1, d))),
                "wk": param(f"l{i}.wk", _linear_init(rng, d, d)),
                "bk": param(f"l{i}.bk", np.zeros((1, d))),
                "wv": param(f"l{i}.wv", _linear_init(rng, d, d)),
                "bv": param(f"l{i}.bv", np.zeros((1, d))),
                "wo": param(f"l{i}.wo", _linear_init(rng, d, d)),
                "bo": param(f"l{i}.bo", np.zeros((1, d))),
                "ln1_g": param(f"l{i}.ln1_g", np.ones((1, d))),
                "ln1_b": param(f"l{i}.ln1_b", np.zeros((1, d))),
                "w1": param(f"l{i}.w1", _linear_init(rng, d, 4 * d)),
                "b1": param(f"l{i}.b1", np.zeros((1, 4 * d))),
                "w2": param(f"l{i}.w2", _linear_init(rng, 4 * d, d)),
                "b2": param(f"l{i}.b2", np.zeros((1, d))),
                "ln2_g": param(f"l{i}.ln2_g", np.ones((1, d))),
                "ln2_b": param(f"l{i}.ln2_b", np.zeros((1, d))),
            }
            self.layers.append(layer)

    def parameters(self) -> dict[str, Node]:
        return dict(self._params)

    def copy_values_from(self, other: "TextEncoder"):
        """Overwrite parameter values with another encoder's (same config)."""
        mine, theirs = self._params, other._params
        for key, node in mine.items():
            node.value = theirs[key.replace(self.name, other.name, 1)].value.copy()

    def encode(self, tokens, prefixes=None) -> Node:
        """Encode one token sequence to a unit-norm (1, d) embedding.

        ``prefixes`` is an optional per-layer list of (key, value) Nodes of
        shape (1, d) from a prefix projector.
        """
        cfg = self.config
        tokens = list(tokens)
        if len(tokens) > cfg.max_len:
            raise ValueError(
                f"sequence length {len(tokens)} exceeds max_len {cfg.max_len}"
            )
        if not tokens:
            raise ValueError("cannot encode an empty token sequence")
        if prefixes is not None and len(prefixes) != cfg.layers:
            raise ValueError(
                f"got {len(prefixes)} prefix layers for a {cfg.layers}-layer encoder"
            )

        d = cfg.hidden_dim
        d_k = d // cfg.heads
        scale = 1.0 / np.sqrt(d_k)
        x = ad.add(
            ad.gather_rows(self.tok_emb, tokens),
            ad.gather_rows(self.pos_emb, range(len(tokens))),
        )
        for i, layer in enumerate(self.layers):
            prefix = None
            if prefixes is not None:
                k_pre, v_pre = prefixes[i]
                # exact-zero value vector means "prefix off" at this layer
                if np.any(v_pre.value != 0.0):
                    prefix = (k_pre, v_pre)
            q = ad.add(ad.matmul(x, layer["wq"]), layer["bq"])
            k = ad.add(ad.matmul(x, layer["wk"]), layer["bk"])
            v = ad.add(ad.matmul(x, layer["wv"]), layer["bv"])
            head_outs = []
            for h in range(cfg.heads):
                cols = range(h * d_k, (h + 1) * d_k)
                qh = ad.gather_cols(q, cols)
                kh = ad.gather_cols(k, cols)
                vh = ad.gather_cols(v, cols)
                if prefix is not None:
                    kh = ad.concat_rows([ad.gather_cols(prefix[0], cols), kh])
                    vh = ad.concat_rows([ad.gather_cols(prefix[1], cols), vh])
                logits = ad.smul(ad.matmul(qh, ad.transpose(kh)), scale)
                head_outs.append(ad.transpose(ad.matmul(ad.softmax_rows(logits), vh)))
            attn = ad.add(
                ad.matmul(ad.transpose(ad.concat_rows(head_outs)), layer["wo"]),
                layer["bo"],
            )
            x = ad.layer_norm_rows(ad.add(x, attn), layer["ln1_g"], layer["ln1_b"])
            ffn = ad.add(
                ad.matmul(
                    ad.gelu(ad.add(ad.matmul(x, layer["w1"]), layer["b1"])),
                    layer["w2"],
                ),
                layer["b2"],
            )
            x = ad.layer_norm_rows(ad.add(x, ffn), layer["ln2_g"], layer["ln2_b"])

        mask = [1.0 if t != 0 else 0.0 for t in tokens]  # exclude [PAD]
        pooled = ad.masked_mean_rows(x, mask)
        return ad.l2_normalize_rows(pooled)

    def encode_batch(self, token_seqs, prefix_seqs=None) -> Node:
        """Encode a batch of sequences into a (B, d) node, one row each."""
        rows = []
        for b, tokens in enumerate(token_seqs):
            prefixes = None if prefix_seqs is None else prefix_seqs[b]
            rows.append(self.encode(tokens, prefixes))
        return ad.concat_rows(rows)


def score(h_hr: np.ndarray, h_t: np.ndarray) -> float:
    """Dot product of two pooled embeddings; equals cosine by unit norm."""
    a = np.asarray(h_hr, dtype=np.float64).ravel()
    b = np.asarray(h_t, dtype=np.float64).ravel()
    return float(a @ b)
