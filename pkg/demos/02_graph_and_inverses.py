"""
Knowledge-graph data model: adjacency indexes and inverse triples
=================================================================

Shows the tail-neighbor indexes e(r) and e(h, r), the inverse-triple
reformulation that turns head prediction into tail prediction, and
split-scoped known-true filtering.
"""

from structkgc.graph import (
    EntityRecord,
    RelationRecord,
    Triple,
    add_inverse_triples,
    build_graph,
    inverse_relation_records,
)

entities = [
    EntityRecord("ship", "a large watercraft", 0),
    EntityRecord("hull", "the body of a ship", 1),
    EntityRecord("mast", "a tall upright post", 2),
    EntityRecord("sail", "fabric catching wind", 3),
]
base = [RelationRecord("has part", "", 0)]
train = [Triple(0, 0, 1), Triple(0, 0, 2), Triple(2, 0, 3)]

doubled = add_inverse_triples(train, num_base_relations=1)
print("with inverses:", doubled)

graph = build_graph(
    entities,
    base + inverse_relation_records(base),
    {"train": doubled, "test": add_inverse_triples([Triple(0, 0, 3)], 1)},
    num_base_relations=1,
)

print("\ne(has part)      =", sorted(graph.tails_by_relation(0)))
print("e(ship, has part) =", sorted(graph.tails_by_pair(0, 0)))
print("inverse rendering:", graph.relations[1].name)

print("\n(ship, has part, hull) known in train? ",
      graph.is_known_true(0, 0, 1, ["train"]))
print("(ship, has part, sail) known in train?  ",
      graph.is_known_true(0, 0, 3, ["train"]))
print("(ship, has part, sail) known anywhere?  ",
      graph.is_known_true(0, 0, 3, ["train", "valid", "test"]))
