"""Immutable knowledge-graph data model with adjacency indexes.

Entities and relations carry dense 0-based integer ids.  When inverse
relations are in play they occupy the upper half of the relation id
space: ``id(r_inverse) = id(r) + num_base_relations``.  All indexes are
built eagerly at construction; graphs never mutate afterwards, so they
are safe for unrestricted shared reads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

SPLITS = ("train", "valid", "test")


class GraphError(ValueError):
    """Raised for inconsistent vocabulary/triple inputs."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class EntityRecord:
    name: str
    description: str
    id: int


@dataclass(frozen=True)
class RelationRecord:
    name: str
    description: str
    id: int


def add_inverse_triples(triples: Sequence[Triple], num_base_relations: int) -> list[Triple]:
    """Append the inverse triple (t, r + R, h) for every (h, r, t).

    Originals come first, inverses follow in matching order.  Input
    relations must be base relations (id < num_base_relations).
    """
    out = [Triple(*t) for t in triples]
    inverses = []
    for t in out:
        if t.relation >= num_base_relations:
            raise GraphError(
                f"triple {tuple(t)} already uses an inverse relation id "
                f"(base relation count is {num_base_relations})"
            )
        inverses.append(Triple(t.tail, t.relation + num_base_relations, t.head))
    return out + inverses


def inverse_relation_id(relation: int, num_base_relations: int) -> int:
    """Map a relation id to its inverse (an involution)."""
    if relation < num_base_relations:
        return relation + num_base_relations
    return relation - num_base_relations


def inverse_relation_records(base: Sequence[RelationRecord]) -> list[RelationRecord]:
    """Records for the inverse relations, rendered as 'inverse of: <name>'."""
    n = len(base)
    return [
        RelationRecord(f"inverse of: {r.name}", r.description, r.id + n)
        for r in base
    ]


class KnowledgeGraph:
    """Entities, relations and per-split triples with eager indexes.

    Exposes the tail-neighbor sets the samplers and re-ranker need:
    ``tails_by_relation(r)`` is e(r) (also written N_r) and
    ``tails_by_pair(h, r)`` is e(h, r), both per split with unions over
    a split selection.
    """

    def __init__(
        self,
        entities: Sequence[EntityRecord],
        relations: Sequence[RelationRecord],
        split_triples: Mapping[str, Sequence[Triple]],
        num_base_relations: int | None = None,
    ):
        self.entities = tuple(sorted(entities, key=lambda e: e.id))
        self.relations = tuple(sorted(relations, key=lambda r: r.id))
        for seq, kind in ((self.entities, "entity"), (self.relations, "relation")):
            ids = [rec.id for rec in seq]
            if ids != list(range(len(seq))):
                raise GraphError(f"{kind} ids are not contiguous from 0: {ids[:8]}...")
        if num_base_relations is None:
            num_base_relations = len(self.relations)
        if len(self.relations) not in (num_base_relations, 2 * num_base_relations):
            raise GraphError(
                f"{len(self.relations)} relation records do not match a base "
                f"count of {num_base_relations} (with or without inverses)"
            )
        self.num_base_relations = num_base_relations

        self._splits: dict[str, tuple[Triple, ...]] = {}
        for split in SPLITS:
            triples = tuple(Triple(*t) for t in split_triples.get(split, ()))
            for t in triples:
                self._validate_triple(t, split)
            self._splits[split] = triples
        unknown = set(split_triples) - set(SPLITS)
        if unknown:
            raise GraphError(f"unknown splits: {sorted(unknown)}")

        # eager adjacency indexes, one per split
        self._tails_by_relation: dict[str, dict[int, frozenset[int]]] = {}
        self._tails_by_pair: dict[str, dict[tuple[int, int], frozenset[int]]] = {}
        self._triple_sets: dict[str, frozenset[Triple]] = {}
        for split, triples in self._splits.items():
            by_rel: dict[int, set[int]] = {}
            by_pair: dict[tuple[int, int], set[int]] = {}
            for h, r, t in triples:
                by_rel.setdefault(r, set()).add(t)
                by_pair.setdefault((h, r), set()).add(t)
            self._tails_by_relation[split] = {
                r: frozenset(s) for r, s in by_rel.items()
            }
            self._tails_by_pair[split] = {
                p: frozenset(s) for p, s in by_pair.items()
            }
            self._triple_sets[split] = frozenset(triples)

    def _validate_triple(self, t: Triple, split: str):
        if not (0 <= t.head < len(self.entities)) or not (
            0 <= t.tail < len(self.entities)
        ):
            raise GraphError(
                f"{split} triple {tuple(t)} references an unknown entity id "
                f"(have {len(self.entities)} entities)"
            )
        if not 0 <= t.relation < len(self.relations):
            raise GraphError(
                f"{split} triple {tuple(t)} references an unknown relation id "
                f"(have {len(self.relations)} relations)"
            )

    # ------------------------------------------------------------------
    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def triples(self, split: str) -> tuple[Triple, ...]:
        return self._splits[split]

    def is_inverse_relation(self, relation: int) -> bool:
        return relation >= self.num_base_relations

    def tails_by_relation(self, relation: int, splits: Iterable[str] = ("train",)) -> frozenset[int]:
        """e(r): every tail linked to ``relation`` in the selected splits."""
        acc: frozenset[int] = frozenset()
        for split in splits:
            acc = acc | self._tails_by_relation[split].get(relation, frozenset())
        return acc

    def tails_by_pair(self, head: int, relation: int, splits: Iterable[str] = ("train",)) -> frozenset[int]:
        """e(h, r): tails linked to this exact (head, relation) pair."""
        acc: frozenset[int] = frozenset()
        for split in splits:
            acc = acc | self._tails_by_pair[split].get((head, relation), frozenset())
        return acc

    def known_true(self, splits: Iterable[str]) -> frozenset[Triple]:
        acc: frozenset[Triple] = frozenset()
        for split in splits:
            acc = acc | self._triple_sets[split]
        return acc

    def is_known_true(self, head: int, relation: int, tail: int, splits: Iterable[str]) -> bool:
        t = Triple(head, relation, tail)
        return any(t in self._triple_sets[s] for s in splits)


def build_graph(
    entity_records: Sequence[EntityRecord],
    relation_records: Sequence[RelationRecord],
    split_triples: Mapping[str, Sequence[Triple]],
    num_base_relations: int | None = None,
) -> KnowledgeGraph:
    """Construct an immutable graph, validating every referenced id."""
    return KnowledgeGraph(
        entity_records, relation_records, split_triples, num_base_relations
    )
