import numpy as np
import pytest

from structkgc.graph import EntityRecord, RelationRecord, Triple, build_graph
from structkgc.negatives import (
    MomentumEncoder,
    MomentumQueue,
    hardest_k,
    in_batch_mask,
    mix_hard_negatives,
    sample_intra_relation,
)
from structkgc.structural import PrefixProjector
from structkgc.text import TextEncoder, TextEncoderConfig


def unit(vec):
    v = np.asarray(vec, dtype=np.float64)
    return v / np.linalg.norm(v)


def random_units(rng, n, d):
    x = rng.normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


class TestMomentumQueue:
    def test_fifo_eviction(self):
        q = MomentumQueue(2, 2)
        a, b, c = unit([1, 0]), unit([0, 1]), unit([1, 1])
        for v in (a, b, c):
            q.push(v)
        np.testing.assert_allclose(q.features(), np.stack([b, c]))

    def test_push_into_empty(self):
        q = MomentumQueue(5, 3)
        q.push(unit([1, 2, 3]))
        assert len(q) == 1

    def test_thousand_pushes_match_list_slicing_oracle(self):
        rng = np.random.default_rng(0)
        q = MomentumQueue(100, 4)
        pushed = []
        for _ in range(1000):
            v = unit(rng.normal(size=4))
            pushed.append(v)
            q.push(v)
        assert len(q) == 100
        np.testing.assert_array_equal(q.features(), np.stack(pushed[-100:]))

    def test_non_unit_rejected(self):
        q = MomentumQueue(4, 2)
        with pytest.raises(ValueError, match="unit norm"):
            q.push(np.array([1.0, 1.0]))

    def test_slightly_off_unit_accepted(self):
        q = MomentumQueue(4, 2)
        q.push(unit([3, 4]) * (1 + 5e-5))
        assert len(q) == 1


class TestHardestK:
    def test_aligned_vector_wins(self):
        q = MomentumQueue(4, 2)
        e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        q.push(e1)
        q.push(e2)
        out = hardest_k(q, np.array([1.0, 0.0]), tau=0.05, k=1)
        np.testing.assert_array_equal(out, e1.reshape(1, 2))

    def test_k_equals_size_returns_full_sorted(self):
        rng = np.random.default_rng(1)
        q = MomentumQueue(8, 3)
        feats = random_units(rng, 8, 3)
        q.push(feats)
        h = unit(rng.normal(size=3))
        out = hardest_k(q, h, tau=0.1, k=8)
        logits = out @ h
        assert np.all(np.diff(logits) <= 1e-12)
        assert out.shape == (8, 3)

    def test_matches_brute_force_sort(self):
        rng = np.random.default_rng(2)
        q = MomentumQueue(64, 6)
        feats = random_units(rng, 50, 6)
        q.push(feats)
        h = unit(rng.normal(size=6))
        out = hardest_k(q, h, tau=0.07, k=8)
        order = np.argsort(-(feats @ h), kind="stable")
        np.testing.assert_allclose(out, feats[order[:8]])

    def test_selected_set_independent_of_tau(self):
        rng = np.random.default_rng(3)
        q = MomentumQueue(32, 4)
        q.push(random_units(rng, 20, 4))
        h = unit(rng.normal(size=4))
        sets = []
        for tau in (0.01, 0.05, 1.0):
            out = hardest_k(q, h, tau=tau, k=5)
            sets.append({tuple(np.round(row, 12)) for row in out})
        assert sets[0] == sets[1] == sets[2]

    def test_smaller_queue_returns_all_sorted(self):
        rng = np.random.default_rng(4)
        q = MomentumQueue(16, 3)
        q.push(random_units(rng, 3, 3))
        out = hardest_k(q, unit(rng.normal(size=3)), tau=0.05, k=10)
        assert out.shape == (3, 3)

    def test_ties_prefer_newer(self):
        q = MomentumQueue(4, 2)
        v = unit([1.0, 1.0])
        q.push(v)
        q.push(np.array([1.0, 0.0]))
        q.push(v)  # same logit as the first member, but newer
        out = hardest_k(q, v, tau=0.05, k=3)
        # both copies of v sort first; the orthogonal-ish one last
        np.testing.assert_allclose(out[0], v)
        np.testing.assert_allclose(out[1], v)


class TestMixHardNegatives:
    def test_symmetric_mix(self):
        rng = FixedLam(0.5)
        out, fallback = mix_hard_negatives(
            np.array([[1.0, 0.0], [0.0, 1.0]]), 1, rng
        )
        assert not fallback
        np.testing.assert_allclose(out, [[np.sqrt(0.5), np.sqrt(0.5)]], atol=1e-12)

    def test_lambda_one_returns_first_parent(self):
        rng = FixedLam(1.0)
        out, _ = mix_hard_negatives(np.array([[1.0, 0.0], [0.0, 1.0]]), 1, rng)
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-12)

    def test_statistical_span_and_norms(self):
        rng = np.random.default_rng(5)
        pair = np.array([[1.0, 0.0], [0.0, 1.0]])
        out, fallback = mix_hard_negatives(pair, 10_000, rng)
        assert not fallback
        norms = np.linalg.norm(out, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)
        angles = np.degrees(np.arctan2(out[:, 1], out[:, 0]))
        assert angles.min() < 5.0 and angles.max() > 85.0
        assert np.all(angles > 0.0) and np.all(angles < 90.0)

    def test_outputs_in_convex_cone_of_parents(self):
        rng = np.random.default_rng(6)
        parents = random_units(rng, 2, 3)
        out, _ = mix_hard_negatives(parents, 64, rng)
        for row in out:
            # two independent parents: the expansion is unique
            coef, *_ = np.linalg.lstsq(parents.T, row, rcond=None)
            np.testing.assert_allclose(parents.T @ coef, row, atol=1e-9)
            assert coef.min() > -1e-9

    def test_single_member_falls_back(self):
        rng = np.random.default_rng(7)
        single = np.array([[1.0, 0.0]])
        out, fallback = mix_hard_negatives(single, 5, rng)
        assert fallback
        np.testing.assert_array_equal(out, single)


class FixedLam:
    """Deterministic stand-in RNG for the mixing coefficient."""

    def __init__(self, lam):
        self.lam = lam

    def choice(self, n, size, replace):
        return np.arange(size)

    def uniform(self, lo, hi):
        return self.lam


A, B, X, Y, Z = range(5)
R = 0


def irns_graph():
    ents = [EntityRecord(f"e{i}", "", i) for i in range(5)]
    rels = [RelationRecord("r", "", 0), RelationRecord("s", "", 1)]
    train = [Triple(A, R, X), Triple(A, R, Y), Triple(B, R, Z)]
    return build_graph(ents, rels, {"train": train})


class TestIntraRelationSampling:
    def test_set_difference(self):
        g = irns_graph()
        rng = np.random.default_rng(8)
        out = sample_intra_relation(g, A, R, 3, rng)
        assert out == [Z]

    def test_never_returns_true_tail(self):
        g = irns_graph()
        rng = np.random.default_rng(9)
        for _ in range(50):
            out = sample_intra_relation(g, B, R, 1, rng)
            assert out and out[0] in {X, Y}

    def test_fallback_when_difference_empty(self):
        ents = [EntityRecord(f"e{i}", "", i) for i in range(4)]
        rels = [RelationRecord("r", "", 0)]
        g = build_graph(ents, rels, {"train": [Triple(0, 0, 1)]})
        rng = np.random.default_rng(10)
        for _ in range(20):
            out = sample_intra_relation(g, 0, 0, 2, rng)
            assert out
            assert 1 not in out  # the only true tail
            assert not any(g.is_known_true(0, 0, t, ["train"]) for t in out)

    def test_soundness_over_many_draws(self):
        rng = np.random.default_rng(11)
        ents = [EntityRecord(f"e{i}", "", i) for i in range(12)]
        rels = [RelationRecord(f"r{i}", "", i) for i in range(3)]
        train = [
            Triple(int(rng.integers(0, 12)), int(rng.integers(0, 3)), int(rng.integers(0, 12)))
            for _ in range(40)
        ]
        g = build_graph(ents, rels, {"train": train})
        for h, r, _ in g.triples("train"):
            for t in sample_intra_relation(g, h, r, 3, rng):
                assert not g.is_known_true(h, r, t, ["train"])


class TestInBatchMask:
    def test_diagonal_masked(self):
        g = irns_graph()
        queries = [(A, R), (B, R)]
        tails = [X, Z]
        mask = in_batch_mask(queries, tails, g)
        assert mask[0, 0] and mask[1, 1]

    def test_duplicate_true_triple_masked_off_diagonal(self):
        # self-loop style batch: tail of row 0 is also true for row 1's query
        ents = [EntityRecord("dress", "", 0), EntityRecord("shirt", "", 1),
                EntityRecord("coat", "", 2)]
        rels = [RelationRecord("style name", "", 0)]
        train = [Triple(0, 0, 0), Triple(1, 0, 0), Triple(1, 0, 2)]
        g = build_graph(ents, rels, {"train": train})
        mask = in_batch_mask([(0, 0), (1, 0)], [0, 2], g)
        assert mask[1, 0]  # (shirt, style, dress) is train-true
        assert not mask[0, 1]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(12)
        ents = [EntityRecord(f"e{i}", "", i) for i in range(8)]
        rels = [RelationRecord(f"r{i}", "", i) for i in range(2)]
        train = [
            Triple(int(rng.integers(0, 8)), int(rng.integers(0, 2)), int(rng.integers(0, 8)))
            for _ in range(25)
        ]
        g = build_graph(ents, rels, {"train": train})
        batch = [g.triples("train")[i] for i in rng.integers(0, len(g.triples("train")), 6)]
        queries = [(t.head, t.relation) for t in batch]
        tails = [t.tail for t in batch]
        mask = in_batch_mask(queries, tails, g)
        for q in range(6):
            for j in range(6):
                brute = tails[j] == tails[q] or g.is_known_true(
                    queries[q][0], queries[q][1], tails[j], ["train"]
                )
                assert mask[q, j] == brute


class TestMomentumEncoder:
    def _setup(self):
        cfg = TextEncoderConfig(layers=1, hidden_dim=8, heads=2, max_len=8,
                                vocab_size=12)
        rng = np.random.default_rng(13)
        tail = TextEncoder(cfg, rng, name="tail")
        proj = PrefixProjector(4, 1, 8, rng, name="tail_prefix")
        from structkgc.autodiff import Node
        table = Node(rng.normal(size=(5, 4)))
        return tail, proj, table

    def test_initial_copy_matches_online(self):
        tail, proj, table = self._setup()
        mom = MomentumEncoder(tail, proj, table, momentum=0.999)
        tokens = [[2, 5, 3], [2, 7, 3]]
        np.testing.assert_allclose(
            mom.encode_tails(tokens, [0, 1]),
            np.stack([
                tail.encode(t, proj.project(_gather(table, i))).value[0]
                for t, i in zip(tokens, [0, 1])
            ]),
        )

    def test_ema_update_exact(self):
        tail, proj, table = self._setup()
        mom = MomentumEncoder(tail, proj, table, momentum=0.999)
        rng = np.random.default_rng(14)
        before = {k: v.value.copy() for k, v in mom.encoder.parameters().items()}
        proj_before = mom.projector.weight.value.copy()
        table_before = mom.entity_table.value.copy()
        # pretend an optimizer step happened on the online weights
        for node in tail.parameters().values():
            node.value = node.value + rng.normal(size=node.value.shape) * 0.01
        proj.weight.value = proj.weight.value + 0.01
        table.value = table.value + 0.02
        mom.ema_update()
        m = 0.999
        for key, node in mom.encoder.parameters().items():
            online_key = key.replace("momentum", "tail", 1)
            expected = m * before[key] + (1 - m) * tail.parameters()[online_key].value
            assert np.abs(node.value - expected).max() == 0.0
        assert np.abs(
            mom.projector.weight.value - (m * proj_before + (1 - m) * proj.weight.value)
        ).max() == 0.0
        assert np.abs(
            mom.entity_table.value - (m * table_before + (1 - m) * table.value)
        ).max() == 0.0


def _gather(table, idx):
    from structkgc import autodiff as ad
    return ad.gather_rows(table, [idx])
