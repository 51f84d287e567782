"""Filtered entity ranking, relation-based re-ranking and MIOU diagnostics.

Ranks are filtered: every known-true candidate other than the queried
gold tail is ignored.  Ties are pessimistic: the gold entity ranks last
among equal scores.  Reports average over both query directions (tail
prediction and head prediction via inverse relations) and carry
per-direction and per-relation breakdowns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import KnowledgeGraph, Triple
from .model import Model
from .text import Tokenizer, tokenize_entity, tokenize_hr

SCORE_MODES = ("text", "struct", "combined")
DEFAULT_FILTER_SPLITS = ("train", "valid", "test")


def filtered_rank(scores: np.ndarray, gold: int, filter_ids) -> int:
    """1 + the number of unfiltered non-gold candidates at or above gold.

    Candidates in ``filter_ids`` are ignored entirely.  Score ties count
    against the gold entity (pessimistic tie-breaking).
    """
    scores = np.asarray(scores, dtype=np.float64)
    filter_ids = set(filter_ids)
    if gold in filter_ids:
        raise ValueError(f"gold entity {gold} is in the filter set")
    gold_score = scores[gold]
    rank = 1
    for i, s in enumerate(scores):
        if i == gold or i in filter_ids:
            continue
        if s >= gold_score:
            rank += 1
    return rank


def aggregate(ranks) -> dict[str, float]:
    """MRR and Hits@{1,3,10} of a non-empty rank list."""
    ranks = np.asarray(list(ranks), dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("cannot aggregate an empty rank list")
    return {
        "mrr": float(np.mean(1.0 / ranks)),
        "hits1": float(np.mean(ranks <= 1)),
        "hits3": float(np.mean(ranks <= 3)),
        "hits10": float(np.mean(ranks <= 10)),
    }


def rerank(scores: np.ndarray, neighbor_ids, alpha: float) -> np.ndarray:
    """score'(t) = score(t) - alpha * 1(t not in N_r); pure, input untouched."""
    if alpha < 0:
        raise ValueError(f"re-ranking penalty must be non-negative, got {alpha}")
    out = np.array(scores, dtype=np.float64, copy=True)
    if alpha == 0.0:
        return out
    neighbor_ids = set(neighbor_ids)
    penalty = np.full(out.shape, alpha)
    if neighbor_ids:
        penalty[sorted(neighbor_ids)] = 0.0
    return out - penalty


def miou(graph: KnowledgeGraph, test_triples=None) -> tuple[float, dict[int, float]]:
    """Mean intersection-over-union of per-relation tail sets.

    The per-relation sets e(r, train) and e(r, test) come from the
    graph's splits; the mean runs over the given triples (defaulting to
    the whole test split), so relations count with multiplicity.  A
    relation absent from train contributes 0.
    """
    if test_triples is None:
        test_triples = graph.triples("test")
    test_triples = [Triple(*t) for t in test_triples]
    per_relation: dict[int, float] = {}
    for _, r, _ in test_triples:
        if r in per_relation:
            continue
        train_tails = graph.tails_by_relation(r, ("train",))
        test_tails = graph.tails_by_relation(r, ("test",))
        if not train_tails:
            per_relation[r] = 0.0
            continue
        union = train_tails | test_tails
        per_relation[r] = len(train_tails & test_tails) / len(union) if union else 0.0
    if not test_triples:
        return 0.0, per_relation
    mean = float(np.mean([per_relation[t.relation] for t in test_triples]))
    return mean, per_relation


# ---------------------------------------------------------------------------
# scoring backends
# ---------------------------------------------------------------------------

class ModelScorer:
    """Scores every entity as tail candidate for (head, relation) queries.

    Tail text encodings are precomputed once per snapshot; query encodings
    are cached by (head, relation).
    """

    def __init__(self, model: Model, graph: KnowledgeGraph,
                 tokenizer: Tokenizer | None, mode: str = "text",
                 beta: float = 0.5):
        if mode not in SCORE_MODES:
            raise ValueError(f"score mode must be one of {SCORE_MODES}, got {mode!r}")
        if mode in ("text", "combined") and not model.config.use_text:
            raise ValueError(f"{mode!r} scoring needs a model with the text path")
        if mode in ("struct", "combined") and not model.config.use_ase:
            raise ValueError(f"{mode!r} scoring needs structural embeddings")
        if mode in ("text", "combined") and tokenizer is None:
            raise ValueError("text scoring needs a tokenizer")
        self.model = model
        self.graph = graph
        self.tokenizer = tokenizer
        self.mode = mode
        self.beta = beta
        self._tail_matrix: np.ndarray | None = None
        self._query_cache: dict[tuple[int, int], np.ndarray] = {}
        if mode in ("text", "combined"):
            rows = []
            for ent in graph.entities:
                tokens = tokenize_entity(tokenizer, ent, model.config.max_len)
                rows.append(model.encode_tails([tokens], [ent.id]).value[0])
            self._tail_matrix = np.stack(rows)

    def _text_scores(self, head: int, relation: int) -> np.ndarray:
        key = (head, relation)
        if key not in self._query_cache:
            tokens = tokenize_hr(
                self.tokenizer, self.graph.entities[head],
                self.graph.relations[relation], self.model.config.max_len,
            )
            self._query_cache[key] = self.model.encode_queries(
                [tokens], [key]
            ).value[0]
        return self._tail_matrix @ self._query_cache[key]

    def scores(self, head: int, relation: int) -> np.ndarray:
        if self.mode == "text":
            return self._text_scores(head, relation)
        if self.mode == "struct":
            return self.model.struct_scores_all_tails(head, relation)
        return self._text_scores(head, relation) + self.beta * (
            self.model.struct_scores_all_tails(head, relation)
        )


class TableScorer:
    """Scores straight out of a fixed (num_queries implicit) lookup.

    Useful for oracle evaluations: maps (head, relation) to a precomputed
    score vector.
    """

    def __init__(self, table: dict[tuple[int, int], np.ndarray]):
        self.table = table

    def scores(self, head: int, relation: int) -> np.ndarray:
        return self.table[(head, relation)]


# ---------------------------------------------------------------------------
# evaluation driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RerankConfig:
    alpha: float = 0.0
    splits: tuple[str, ...] = ("train",)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"re-ranking penalty must be non-negative, got {self.alpha}")


@dataclass
class QueryResult:
    head: int
    relation: int
    gold: int
    rank: int
    direction: str                      # "tail" or "head"
    top: list[tuple[int, float]] = field(default_factory=list)


@dataclass
class RankingReport:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    num_queries: int
    by_direction: dict[str, dict[str, float]]
    by_relation: dict[int, dict[str, float]]

    def summary_lines(self) -> list[str]:
        lines = [
            "metric\tvalue",
            f"MRR\t{self.mrr:.4f}",
            f"Hits@1\t{self.hits1:.4f}",
            f"Hits@3\t{self.hits3:.4f}",
            f"Hits@10\t{self.hits10:.4f}",
            f"queries\t{self.num_queries}",
        ]
        for direction, metrics in sorted(self.by_direction.items()):
            lines.append(
                f"direction[{direction}]\tMRR={metrics['mrr']:.4f}"
                f"\tH@1={metrics['hits1']:.4f}"
            )
        return lines


def build_report(results: list[QueryResult]) -> RankingReport:
    if not results:
        raise ValueError("cannot report on zero queries")
    overall = aggregate([r.rank for r in results])
    by_direction = {}
    for direction in ("tail", "head"):
        ranks = [r.rank for r in results if r.direction == direction]
        if ranks:
            by_direction[direction] = aggregate(ranks)
    by_relation = {}
    for rel in sorted({r.relation for r in results}):
        by_relation[rel] = aggregate([r.rank for r in results if r.relation == rel])
    return RankingReport(
        mrr=overall["mrr"], hits1=overall["hits1"], hits3=overall["hits3"],
        hits10=overall["hits10"], num_queries=len(results),
        by_direction=by_direction, by_relation=by_relation,
    )


def evaluate(
    scorer,
    graph: KnowledgeGraph,
    split: str,
    filter_splits=DEFAULT_FILTER_SPLITS,
    rerank_config: RerankConfig | None = None,
    collect_details: bool = False,
    top_k: int = 10,
) -> tuple[RankingReport, list[QueryResult]]:
    """Rank the gold tail of every triple in ``split``.

    Splits loaded through the dataset layer already contain inverse
    triples, so head prediction is covered by the inverse-relation
    queries of the same split.
    """
    rerank_config = rerank_config or RerankConfig()
    results: list[QueryResult] = []
    for h, r, t in graph.triples(split):
        raw = np.asarray(scorer.scores(h, r), dtype=np.float64)
        if rerank_config.alpha > 0:
            neighbors = graph.tails_by_relation(r, rerank_config.splits)
            adjusted = rerank(raw, neighbors, rerank_config.alpha)
        else:
            adjusted = raw
        filter_ids = set(graph.tails_by_pair(h, r, filter_splits))
        filter_ids.discard(t)
        rank = filtered_rank(adjusted, t, filter_ids)
        direction = "head" if graph.is_inverse_relation(r) else "tail"
        result = QueryResult(h, r, t, rank, direction)
        if collect_details:
            order = np.lexsort((np.arange(len(adjusted)), -adjusted))
            kept = [i for i in order if i not in filter_ids][:top_k]
            result.top = [(int(i), float(adjusted[i])) for i in kept]
        results.append(result)
    return build_report(results), results
