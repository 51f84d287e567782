"""Epoch loop wiring encoders, samplers and the contrastive objectives.

One step: encode the query side with structural prefixes, encode the
batch tails, gather in-batch / intra-relation / momentum-hard negatives,
compute the combined loss, backprop, take an AdamW step, clamp the
temperature, EMA-update the momentum encoder and push its features for
the batch tails into the queue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .graph import KnowledgeGraph, Triple
from .losses import (
    LossConfig,
    clamp_log_tau,
    contrastive_loss,
    structural_loss,
    total_loss,
)
from .model import Model
from .negatives import (
    MomentumEncoder,
    MomentumQueue,
    in_batch_mask,
    mix_hard_negatives,
    sample_intra_relation,
)
from .optim import AdamW
from .text import Tokenizer, tokenize_entity, tokenize_hr


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 5e-4
    weight_decay: float = 0.01
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    clip_norm: float = 1.0
    seed: int = 0
    use_mh: bool = True
    use_ir: bool = True
    queue_capacity: int = 256
    hardest_k: int = 32
    mh_count: int = 64
    ir_count: int = 3
    momentum: float = 0.999

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.queue_capacity < 1 or self.hardest_k < 2 or self.mh_count < 1:
            raise ValueError("queue capacity, hardest-k (>= 2) and mix count must be positive")
        if self.ir_count < 0:
            raise ValueError("intra-relation count must be non-negative")


@dataclass
class EpochMetrics:
    epoch: int
    mean_loss: float
    tau: float
    lr: float
    queue_fill: float
    irns_fallback_rate: float
    mh_fallbacks: int = 0

    def as_log_line(self) -> str:
        return "\t".join(
            [
                str(self.epoch),
                f"{self.mean_loss:.6f}",
                f"{self.tau:.6f}",
                f"{self.lr:.6e}",
                f"{self.queue_fill:.4f}",
                f"{self.irns_fallback_rate:.4f}",
            ]
        )


class Trainer:
    def __init__(self, graph: KnowledgeGraph, model: Model,
                 tokenizer: Tokenizer | None, loss_cfg: LossConfig,
                 cfg: TrainConfig):
        if model.config.use_text and tokenizer is None:
            raise ValueError("the text path needs a tokenizer")
        if cfg.use_mh and not model.config.use_text:
            raise ValueError("momentum hard negatives need the text path")
        self.graph = graph
        self.model = model
        self.tokenizer = tokenizer
        self.loss_cfg = loss_cfg
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)

        self.train_triples = list(graph.triples("train"))
        if not self.train_triples:
            raise ValueError("no training triples")
        steps_per_epoch = math.ceil(len(self.train_triples) / cfg.batch_size)
        self.optimizer = AdamW(
            model.parameters(), cfg.lr, total_steps=cfg.epochs * steps_per_epoch,
            betas=cfg.adam_betas, eps=cfg.adam_eps,
            weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm,
        )

        self.queue = None
        self.momentum_encoder = None
        if cfg.use_mh:
            self.queue = MomentumQueue(cfg.queue_capacity, model.config.hidden_dim)
            self.momentum_encoder = MomentumEncoder(
                model.tail_encoder, model.tail_projector,
                model.struct.entity_embeddings, momentum=cfg.momentum,
            )

        self._hr_tokens: dict[tuple[int, int], list[int]] = {}
        self._tail_tokens: dict[int, list[int]] = {}
        self.telemetry = {"irns_queries": 0, "irns_fallbacks": 0, "mh_fallbacks": 0}

    # ------------------------------------------------------------------
    def _hr_token_seq(self, head: int, relation: int) -> list[int]:
        key = (head, relation)
        if key not in self._hr_tokens:
            self._hr_tokens[key] = tokenize_hr(
                self.tokenizer,
                self.graph.entities[head],
                self.graph.relations[relation],
                self.model.config.max_len,
            )
        return self._hr_tokens[key]

    def _tail_token_seq(self, tail: int) -> list[int]:
        if tail not in self._tail_tokens:
            self._tail_tokens[tail] = tokenize_entity(
                self.tokenizer, self.graph.entities[tail], self.model.config.max_len
            )
        return self._tail_tokens[tail]

    def _irns_pool_empty(self, head: int, relation: int) -> bool:
        return not (
            self.graph.tails_by_relation(relation, ("train",))
            - self.graph.tails_by_pair(head, relation, ("train",))
        )

    # ------------------------------------------------------------------
    def _in_batch_mask(self, batch: list[Triple]) -> np.ndarray:
        queries = [(t.head, t.relation) for t in batch]
        tails = [t.tail for t in batch]
        return in_batch_mask(queries, tails, self.graph)

    def _step(self, batch: list[Triple]) -> float:
        model, cfg = self.model, self.cfg
        heads = [t.head for t in batch]
        rels = [t.relation for t in batch]
        tails = [t.tail for t in batch]
        mask = self._in_batch_mask(batch)

        loss_cl = None
        h_hr = None
        tail_tokens = None
        if model.config.use_text:
            hr_tokens = [self._hr_token_seq(h, r) for h, r in zip(heads, rels)]
            tail_tokens = [self._tail_token_seq(t) for t in tails]
            h_hr = model.encode_queries(hr_tokens, list(zip(heads, rels)))
            h_t = model.encode_tails(tail_tokens, tails)

            mh_features = None
            if cfg.use_mh and self.queue is not None and len(self.queue) >= 2:
                mh_features = []
                tau_now = model.tau
                for q in range(len(batch)):
                    hardest = self.queue.hardest(
                        h_hr.value[q], tau_now, cfg.hardest_k
                    )
                    mixed, fallback = mix_hard_negatives(hardest, cfg.mh_count, self.rng)
                    if fallback:
                        self.telemetry["mh_fallbacks"] += 1
                    mh_features.append(mixed)

            ir_features = None
            if cfg.use_ir and cfg.ir_count > 0:
                ir_features = []
                unique_tails: list[int] = []
                index_of: dict[int, int] = {}
                per_query: list[list[int]] = []
                for h, r in zip(heads, rels):
                    self.telemetry["irns_queries"] += 1
                    if self._irns_pool_empty(h, r):
                        self.telemetry["irns_fallbacks"] += 1
                    sampled = sample_intra_relation(self.graph, h, r, cfg.ir_count, self.rng)
                    rows = []
                    for t in sampled:
                        if t not in index_of:
                            index_of[t] = len(unique_tails)
                            unique_tails.append(t)
                        rows.append(index_of[t])
                    per_query.append(rows)
                if unique_tails:
                    ir_batch = model.encode_tails(
                        [self._tail_token_seq(t) for t in unique_tails], unique_tails
                    )
                    for rows in per_query:
                        ir_features.append(
                            ad.gather_rows(ir_batch, rows) if rows else None
                        )
                else:
                    ir_features = None

            loss_cl = contrastive_loss(
                h_hr, h_t, mask, model.log_tau, self.loss_cfg.margin,
                mh_features=mh_features, ir_features=ir_features,
            )

        loss_dis = None
        if model.config.use_ase:
            score_mat = model.struct_score_matrix(heads, rels, tails)
            loss_dis = structural_loss(
                score_mat, mask, model.log_tau, self.loss_cfg.margin
            )

        if loss_cl is not None and loss_dis is not None:
            loss = total_loss(loss_cl, loss_dis, self.loss_cfg.beta)
        elif loss_cl is not None:
            loss = loss_cl
        else:
            loss = loss_dis

        loss_value = float(loss.value[0, 0])
        if not np.isfinite(loss_value):
            ids = [(t.head, t.relation, t.tail) for t in batch]
            raise TrainingError(f"non-finite loss on batch triples {ids}")

        ad.backward(loss)
        self.optimizer.step()
        clamp_log_tau(model.log_tau, self.loss_cfg.tau_min, self.loss_cfg.tau_max)

        if cfg.use_mh and self.momentum_encoder is not None:
            self.momentum_encoder.ema_update()
            feats = self.momentum_encoder.encode_tails(tail_tokens, tails)
            self.queue.push(feats)
        return loss_value

    # ------------------------------------------------------------------
    def train_epoch(self, epoch: int) -> EpochMetrics:
        order = self.rng.permutation(len(self.train_triples))
        losses = []
        bs = self.cfg.batch_size
        for start in range(0, len(order), bs):
            batch = [self.train_triples[i] for i in order[start:start + bs]]
            losses.append(self._step(batch))
        queries = max(1, self.telemetry["irns_queries"])
        return EpochMetrics(
            epoch=epoch,
            mean_loss=float(np.mean(losses)),
            tau=self.model.tau,
            lr=self.optimizer.current_lr(),
            queue_fill=(len(self.queue) / self.queue.capacity) if self.queue else 0.0,
            irns_fallback_rate=self.telemetry["irns_fallbacks"] / queries,
            mh_fallbacks=self.telemetry["mh_fallbacks"],
        )

    def train(self) -> list[EpochMetrics]:
        return [self.train_epoch(e) for e in range(1, self.cfg.epochs + 1)]

    def parameter_checksum(self) -> str:
        """Stable digest of every parameter, for determinism checks."""
        import hashlib

        h = hashlib.sha256()
        for name, node in self.model.parameters().items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(node.value).tobytes())
        return h.hexdigest()
