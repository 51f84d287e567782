"""Aggregate of the trainable components and their wiring.

A model owns the structural tables, the optional KV-prefix projectors,
the optional pair of text encoders (query side and tail side, separate
weights unless sharing is requested) and the learnable log-temperature.
Parameter order is fixed by construction order, which checkpointing
relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .losses import make_log_tau
from .structural import (
    AseKind,
    PrefixProjector,
    StructuralTable,
    ase_apply_node,
    struct_score_matrix_node,
    struct_scores_all_tails,
)
from .text import TextEncoder, TextEncoderConfig


@dataclass(frozen=True)
class ModelConfig:
    num_entities: int
    num_base_relations: int
    struct_dim: int = 64
    layers: int = 2
    hidden_dim: int = 64
    heads: int = 4
    max_len: int = 64
    vocab_size: int = 0
    ase_kind: AseKind = AseKind.ADDITIVE
    share_text_encoders: bool = False
    use_text: bool = True
    use_ase: bool = True
    tau_init: float = 0.05

    def __post_init__(self):
        if not self.use_text and not self.use_ase:
            raise ValueError("at least one of the text and structural paths must be on")
        if self.use_text and self.vocab_size <= 4:
            raise ValueError("text path needs a tokenizer vocabulary")
        if self.use_text and self.hidden_dim % self.heads != 0:
            raise ValueError(
                f"hidden dim {self.hidden_dim} not divisible by {self.heads} heads"
            )
        if self.ase_kind is AseKind.ROTATION and self.struct_dim % 2 != 0:
            raise ValueError(
                f"rotation combiner needs an even struct dim, got {self.struct_dim}"
            )


class Model:
    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.struct = StructuralTable(
            config.num_entities, config.num_base_relations, config.struct_dim,
            config.ase_kind, rng,
        )
        self.hr_projector = None
        self.tail_projector = None
        self.hr_encoder = None
        self.tail_encoder = None
        if config.use_text:
            enc_cfg = TextEncoderConfig(
                layers=config.layers, hidden_dim=config.hidden_dim,
                heads=config.heads, max_len=config.max_len,
                vocab_size=config.vocab_size,
            )
            self.hr_encoder = TextEncoder(enc_cfg, rng, name="hr")
            if config.share_text_encoders:
                self.tail_encoder = self.hr_encoder
            else:
                self.tail_encoder = TextEncoder(enc_cfg, rng, name="tail")
            if config.use_ase:
                self.hr_projector = PrefixProjector(
                    config.struct_dim, config.layers, config.hidden_dim, rng,
                    name="hr_prefix",
                )
                self.tail_projector = PrefixProjector(
                    config.struct_dim, config.layers, config.hidden_dim, rng,
                    name="tail_prefix",
                )
        self.log_tau = make_log_tau(config.tau_init)

    def parameters(self) -> dict[str, Node]:
        out: dict[str, Node] = {}
        out.update(self.struct.parameters())
        if self.hr_projector is not None:
            out.update(self.hr_projector.parameters())
            out.update(self.tail_projector.parameters())
        if self.hr_encoder is not None:
            out.update(self.hr_encoder.parameters())
            if self.tail_encoder is not self.hr_encoder:
                out.update(self.tail_encoder.parameters())
        out["log_tau"] = self.log_tau
        return out

    @property
    def tau(self) -> float:
        return float(np.exp(self.log_tau.value[0, 0]))

    # ------------------------------------------------------------------
    # prefix plumbing
    # ------------------------------------------------------------------

    def hr_prefixes(self, head: int, relation: int):
        if self.hr_projector is None:
            return None
        e_h = ad.gather_rows(self.struct.entity_embeddings, [head])
        e_r = ad.gather_rows(self.struct.relation_embeddings, [relation])
        combined = ase_apply_node(self.config.ase_kind, e_h, e_r)
        return self.hr_projector.project(combined)

    def tail_prefixes(self, tail: int):
        if self.tail_projector is None:
            return None
        e_t = ad.gather_rows(self.struct.entity_embeddings, [tail])
        return self.tail_projector.project(e_t)

    # ------------------------------------------------------------------
    # batch encoding
    # ------------------------------------------------------------------

    def encode_queries(self, token_seqs, pairs) -> Node:
        """Encode (head, relation) text with structural prefixes; (B, d)."""
        prefix_seqs = None
        if self.hr_projector is not None:
            prefix_seqs = [self.hr_prefixes(h, r) for h, r in pairs]
        return self.hr_encoder.encode_batch(token_seqs, prefix_seqs)

    def encode_tails(self, token_seqs, tail_ids) -> Node:
        prefix_seqs = None
        if self.tail_projector is not None:
            prefix_seqs = [self.tail_prefixes(t) for t in tail_ids]
        return self.tail_encoder.encode_batch(token_seqs, prefix_seqs)

    # ------------------------------------------------------------------
    # structural scoring
    # ------------------------------------------------------------------

    def struct_score_matrix(self, heads, relations, tails) -> Node:
        return struct_score_matrix_node(
            self.struct, self.config.ase_kind, heads, relations, tails
        )

    def struct_scores_all_tails(self, head: int, relation: int) -> np.ndarray:
        return struct_scores_all_tails(
            self.struct, self.config.ase_kind, head, relation
        )
