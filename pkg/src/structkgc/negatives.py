"""The three negative sources for contrastive training.

* in-batch negatives with false-negative masking,
* momentum-queue hard negatives with pairwise mixing,
* intra-relation negatives drawn from e(r) - e(h, r).

Sampling operations are pure given an explicit RNG; the queue and the
momentum encoder are single-writer (the training loop).
"""

from __future__ import annotations

import numpy as np

from .graph import KnowledgeGraph
from .structural import PrefixProjector
from .text import TextEncoder

UNIT_NORM_TOL = 1e-4


class MomentumQueue:
    """Fixed-capacity FIFO of unit-norm feature vectors."""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError("queue capacity must be positive")
        self.capacity = capacity
        self.dim = dim
        self._features: list[np.ndarray] = []
        self._insert_ids: list[int] = []
        self._counter = 0

    def __len__(self) -> int:
        return len(self._features)

    def push(self, features: np.ndarray):
        """Append unit-norm rows, evicting the oldest beyond capacity."""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if features.shape[1] != self.dim:
            raise ValueError(
                f"feature dim {features.shape[1]} does not match queue dim {self.dim}"
            )
        norms = np.linalg.norm(features, axis=1)
        bad = np.abs(norms - 1.0) > UNIT_NORM_TOL
        if np.any(bad):
            raise ValueError(
                f"queue features must be unit norm, got norm {norms[bad][0]:.6f}"
            )
        for row in features:
            self._features.append(row.copy())
            self._insert_ids.append(self._counter)
            self._counter += 1
        if len(self._features) > self.capacity:
            drop = len(self._features) - self.capacity
            del self._features[:drop]
            del self._insert_ids[:drop]

    def features(self) -> np.ndarray:
        """Queue contents in insertion order, oldest first, as (n, dim)."""
        if not self._features:
            return np.zeros((0, self.dim))
        return np.stack(self._features)

    def hardest(self, query: np.ndarray, tau: float, k: int) -> np.ndarray:
        """The k members with the largest logits query.p / tau, hardest first.

        Logit ties break toward the more recently inserted member.  A
        queue smaller than k returns all members, sorted.
        """
        if tau <= 0:
            raise ValueError("temperature must be positive")
        if not self._features:
            return np.zeros((0, self.dim))
        mat = self.features()
        logits = mat @ np.asarray(query, dtype=np.float64).ravel() / tau
        ids = np.asarray(self._insert_ids)
        # primary: logits descending; secondary: insertion id descending
        order = np.lexsort((-ids, -logits))
        return mat[order[: min(k, len(order))]]


def hardest_k(queue: MomentumQueue, h_hr: np.ndarray, tau: float, k: int) -> np.ndarray:
    return queue.hardest(h_hr, tau, k)


def mix_hard_negatives(hardest: np.ndarray, count: int,
                       rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """Blend random pairs from the hardest set into unit-norm negatives.

    Each output is (lam * p_i + (1 - lam) * p_j) / ||.|| with lam drawn
    per negative from Uniform(0, 1) and i != j.  With fewer than two
    members there is nothing to mix: the raw members are returned and the
    fallback flag is set for telemetry.
    """
    hardest = np.atleast_2d(np.asarray(hardest, dtype=np.float64))
    n = hardest.shape[0]
    if n < 2:
        return hardest.copy(), True
    out = np.empty((count, hardest.shape[1]))
    for m in range(count):
        i, j = rng.choice(n, size=2, replace=False)
        lam = rng.uniform(0.0, 1.0)
        mixed = lam * hardest[i] + (1.0 - lam) * hardest[j]
        norm = np.linalg.norm(mixed)
        out[m] = mixed / (norm if norm > 1e-12 else 1e-12)
    return out, False


def sample_intra_relation(graph: KnowledgeGraph, head: int, relation: int,
                          count: int, rng: np.random.Generator) -> list[int]:
    """Up to ``count`` distinct tails from e(r) - e(h, r) in the train split.

    When the difference is empty, falls back to uniform entities outside
    e(h, r).  Sampled tails are never train-true for (head, relation).
    """
    true_tails = graph.tails_by_pair(head, relation, ("train",))
    pool = sorted(graph.tails_by_relation(relation, ("train",)) - true_tails)
    if not pool:
        pool = sorted(set(range(graph.num_entities)) - true_tails)
    if not pool:
        return []
    take = min(count, len(pool))
    picks = rng.choice(len(pool), size=take, replace=False)
    return [pool[i] for i in picks]


def in_batch_mask(queries: list[tuple[int, int]], batch_tails: list[int],
                  graph: KnowledgeGraph) -> np.ndarray:
    """(B, B) boolean matrix; True marks tails excluded from S_neg.

    Entry (q, j) is masked when tail_j is query q's positive or when
    (h_q, r_q, tail_j) is a training-true triple (a false negative).
    """
    n = len(queries)
    if len(batch_tails) != n:
        raise ValueError("queries and tails must align")
    mask = np.zeros((n, n), dtype=bool)
    for q, (h, r) in enumerate(queries):
        true_tails = graph.tails_by_pair(h, r, ("train",))
        positive = batch_tails[q]
        for j, t in enumerate(batch_tails):
            mask[q, j] = (t == positive) or (t in true_tails)
    return mask


class MomentumEncoder:
    """EMA shadow of the tail-side encoders producing stable queue features.

    Shadows the tail text encoder, the tail prefix projector and the
    structural entity table.  After every optimizer step
    ``theta_key <- m * theta_key + (1 - m) * theta_online``.
    """

    def __init__(self, tail_encoder: TextEncoder, tail_projector: PrefixProjector | None,
                 entity_table, momentum: float = 0.999):
        if not 0.0 <= momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        self.momentum = momentum
        self._online_encoder = tail_encoder
        self._online_projector = tail_projector
        self._online_entities = entity_table

        self.encoder = TextEncoder(
            tail_encoder.config, np.random.default_rng(0), name="momentum"
        )
        self.encoder.copy_values_from(tail_encoder)
        self.projector = None
        if tail_projector is not None:
            self.projector = PrefixProjector(
                tail_projector.struct_dim, tail_projector.layers,
                tail_projector.hidden_dim, np.random.default_rng(0),
                name="momentum_prefix",
            )
            self.projector.weight.value = tail_projector.weight.value.copy()
        self.entity_table = None
        if entity_table is not None:
            from .autodiff import Node
            self.entity_table = Node(entity_table.value.copy())

    def _pairs(self):
        online = self._online_encoder.parameters()
        shadow = self.encoder.parameters()
        for key, node in shadow.items():
            online_key = key.replace("momentum", self._online_encoder.name, 1)
            yield node, online[online_key]
        if self.projector is not None:
            yield self.projector.weight, self._online_projector.weight
        if self.entity_table is not None:
            yield self.entity_table, self._online_entities

    def ema_update(self):
        m = self.momentum
        for shadow, online in self._pairs():
            shadow.value = m * shadow.value + (1.0 - m) * online.value

    def encode_tails(self, token_seqs, tail_ids=None) -> np.ndarray:
        """Momentum features for a batch of tails, as a plain (B, d) array."""
        from . import autodiff as ad

        rows = []
        for b, tokens in enumerate(token_seqs):
            prefixes = None
            if self.projector is not None and self.entity_table is not None and tail_ids is not None:
                e_t = ad.gather_rows(self.entity_table, [tail_ids[b]])
                prefixes = self.projector.project(e_t)
            rows.append(self.encoder.encode(tokens, prefixes).value[0])
        return np.stack(rows)
