import numpy as np
import pytest

from structkgc import autodiff as ad

from gradcheck import assert_gradients_match, random_weighting

N_SEEDS = 20


def _weighted_sum(node, w):
    return ad.sum_all(ad.mul(node, ad.Node(w)))


class TestMatmul:
    def test_identity(self):
        out = ad.matmul(ad.Node(np.eye(2)), ad.Node([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.value, [[3.0], [4.0]])

    def test_hand_product(self):
        out = ad.matmul(ad.Node([[1.0, 2.0]]), ad.Node([[3.0], [4.0]]))
        assert out.value[0, 0] == 11.0

    def test_shape_mismatch_names_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\) x \(2, 2\)"):
            ad.matmul(ad.Node(np.zeros((2, 3))), ad.Node(np.zeros((2, 2))))

    def test_gradient_random_3x4_4x2(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        assert_gradients_match(
            lambda ls: ad.sum_all(ad.matmul(ls[0], ls[1])), [a, b]
        )


class TestSoftmaxRows:
    def test_symmetric_row(self):
        out = ad.softmax_rows(ad.Node([[0.0, 0.0]]))
        np.testing.assert_allclose(out.value, [[0.5, 0.5]])

    def test_large_logits_no_overflow(self):
        out = ad.softmax_rows(ad.Node([[1000.0, 0.0]]))
        assert np.all(np.isfinite(out.value))
        np.testing.assert_allclose(out.value, [[1.0, 0.0]], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        out = ad.softmax_rows(ad.Node(rng.normal(size=(7, 9)) * 10))
        np.testing.assert_allclose(out.value.sum(axis=1), 1.0, atol=1e-12)

    def test_gradient_random_2x5(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 5))
        w = random_weighting(rng, (2, 5))
        assert_gradients_match(
            lambda ls: _weighted_sum(ad.softmax_rows(ls[0]), w), [x]
        )


class TestL2NormalizeRows:
    def test_three_four_five(self):
        out = ad.l2_normalize_rows(ad.Node([[3.0, 4.0]]))
        np.testing.assert_allclose(out.value, [[0.6, 0.8]])

    def test_already_unit(self):
        out = ad.l2_normalize_rows(ad.Node([[1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(out.value, [[1.0, 0.0, 0.0]])

    def test_unit_norm_invariant(self):
        rng = np.random.default_rng(3)
        out = ad.l2_normalize_rows(ad.Node(rng.normal(size=(6, 8))))
        norms = np.linalg.norm(out.value, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    def test_tiny_row_scaled_by_inverse_eps(self):
        x = np.array([[1e-15, 0.0]])
        out = ad.l2_normalize_rows(ad.Node(x), eps=1e-12)
        np.testing.assert_allclose(out.value, x / 1e-12)

    def test_gradient(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 5)) + 0.5
        w = random_weighting(rng, (3, 5))
        assert_gradients_match(
            lambda ls: _weighted_sum(ad.l2_normalize_rows(ls[0]), w), [x]
        )


class TestBackward:
    def test_sum_gives_ones(self):
        x = ad.Node(np.zeros((2, 3)))
        ad.backward(ad.sum_all(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_sum_of_squares(self):
        x = ad.Node([[1.0, 2.0]])
        ad.backward(ad.sum_all(ad.mul(x, x)))
        np.testing.assert_allclose(x.grad, [[2.0, 4.0]])

    def test_diamond_graph_matches_fd(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 2))

        def build(ls):
            (leaf,) = ls
            left = ad.exp(leaf)
            right = ad.mul(leaf, leaf)
            return ad.sum_all(ad.add(left, right))

        assert_gradients_match(build, [x])

    def test_non_scalar_root_rejected(self):
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(ad.Node(np.zeros((2, 2))))

    def test_repeated_backward_accumulates(self):
        x = ad.Node([[1.0, 2.0]])
        out = ad.sum_all(x)
        ad.backward(out)
        ad.backward(out)
        np.testing.assert_array_equal(x.grad, 2 * np.ones((1, 2)))

    def test_leaf_used_twice_sums_paths(self):
        x = ad.Node([[3.0]])
        out = ad.sum_all(ad.add(ad.smul(x, 2.0), ad.mul(x, x)))
        ad.backward(out)
        # d/dx (2x + x^2) = 2 + 2x = 8
        assert x.grad[0, 0] == pytest.approx(8.0)


class TestPairedRotation:
    def test_quarter_turn(self):
        out = ad.paired_rotation(ad.Node([[1.0, 0.0]]), ad.Node([[0.0, 1.0]]))
        np.testing.assert_allclose(out.value, [[0.0, 1.0]], atol=1e-12)

    def test_isometry(self):
        rng = np.random.default_rng(6)
        h = rng.normal(size=(4, 8))
        r = rng.normal(size=(4, 8)) + 0.1
        out = ad.paired_rotation(ad.Node(h), ad.Node(r))
        np.testing.assert_allclose(
            np.linalg.norm(out.value, axis=1),
            np.linalg.norm(h, axis=1),
            atol=1e-9,
        )

    def test_unnormalized_phases_are_renormalized(self):
        # phase pair (0, 2) has modulus 2; rotation must still be 90 degrees
        out = ad.paired_rotation(ad.Node([[1.0, 0.0]]), ad.Node([[0.0, 2.0]]))
        np.testing.assert_allclose(out.value, [[0.0, 1.0]], atol=1e-12)

    def test_gradient_both_inputs(self):
        rng = np.random.default_rng(7)
        h = rng.normal(size=(3, 6))
        r = rng.normal(size=(3, 6)) + 0.3
        w = random_weighting(rng, (3, 6))
        assert_gradients_match(
            lambda ls: _weighted_sum(ad.paired_rotation(ls[0], ls[1]), w), [h, r]
        )


class TestShapedOps:
    def test_concat_rows_backward_split(self):
        a = ad.Node(np.ones((2, 3)))
        b = ad.Node(np.ones((1, 3)))
        out = ad.concat_rows([a, b])
        assert out.value.shape == (3, 3)
        ad.backward(ad.sum_all(ad.mul(out, ad.Node(np.arange(9.0).reshape(3, 3)))))
        np.testing.assert_array_equal(a.grad, np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal(b.grad, [[6.0, 7.0, 8.0]])

    def test_gather_rows_repeated_indices_accumulate(self):
        table = ad.Node(np.zeros((4, 2)))
        out = ad.gather_rows(table, [1, 1, 3])
        ad.backward(ad.sum_all(out))
        expected = np.zeros((4, 2))
        expected[1] = 2.0
        expected[3] = 1.0
        np.testing.assert_array_equal(table.grad, expected)

    def test_masked_mean_rows(self):
        x = ad.Node(np.array([[1.0, 2.0], [3.0, 4.0], [10.0, 10.0]]))
        out = ad.masked_mean_rows(x, [1, 1, 0])
        np.testing.assert_allclose(out.value, [[2.0, 3.0]])

    def test_masked_mean_requires_selection(self):
        with pytest.raises(ValueError, match="at least one"):
            ad.masked_mean_rows(ad.Node(np.ones((2, 2))), [0, 0])

    def test_layer_norm_standardizes(self):
        rng = np.random.default_rng(8)
        x = ad.Node(rng.normal(size=(5, 16)) * 3 + 1)
        out = ad.layer_norm_rows(
            x, ad.Node(np.ones((1, 16))), ad.Node(np.zeros((1, 16)))
        )
        np.testing.assert_allclose(out.value.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.value.std(axis=1), 1.0, atol=1e-3)


def _rand_shape(rng, max_dim=6):
    return (int(rng.integers(1, max_dim)), int(rng.integers(1, max_dim)))


def _primitive_cases(rng):
    """One FD scenario per differentiable primitive, at a random shape."""
    m, n = _rand_shape(rng)
    k = int(rng.integers(1, 5))
    x = rng.normal(size=(m, n))
    y = rng.normal(size=(m, n))
    cases = {
        "add": (lambda ls: ad.sum_all(ad.add(ls[0], ls[1])), [x, y]),
        "sub": (lambda ls: ad.sum_all(ad.sub(ls[0], ls[1])), [x, y]),
        "mul": (lambda ls: ad.sum_all(ad.mul(ls[0], ls[1])), [x, y]),
        "mul_broadcast_row": (
            lambda ls: ad.sum_all(ad.mul(ls[0], ls[1])),
            [x, rng.normal(size=(1, n))],
        ),
        "mul_broadcast_col": (
            lambda ls: ad.sum_all(ad.mul(ls[0], ls[1])),
            [x, rng.normal(size=(m, 1))],
        ),
        "add_broadcast_scalar": (
            lambda ls: ad.sum_all(ad.add(ls[0], ls[1])),
            [x, rng.normal(size=(1, 1))],
        ),
        "smul": (lambda ls: ad.sum_all(ad.smul(ls[0], -1.7)), [x]),
        "exp": (lambda ls: ad.sum_all(ad.exp(ls[0])), [x]),
        "log": (lambda ls: ad.sum_all(ad.log(ls[0])), [np.abs(x) + 0.5]),
        "power": (lambda ls: ad.sum_all(ad.power(ls[0], 1.5)), [np.abs(x) + 0.5]),
        "gelu": (lambda ls: ad.sum_all(ad.gelu(ls[0])), [x]),
        "matmul": (
            lambda ls: ad.sum_all(ad.matmul(ls[0], ls[1])),
            [rng.normal(size=(m, k)), rng.normal(size=(k, n))],
        ),
        "transpose": (
            lambda ls: ad.sum_all(ad.mul(ad.transpose(ls[0]), ad.Node(y.T))),
            [x],
        ),
        "reshape": (
            lambda ls: ad.sum_all(
                ad.mul(ad.reshape(ls[0], 1, m * n), ad.Node(y.reshape(1, -1)))
            ),
            [x],
        ),
        "concat_rows": (
            lambda ls, w=rng.normal(size=(2 * m, n)): ad.sum_all(
                ad.mul(ad.concat_rows(ls), ad.Node(w))
            ),
            [x, y],
        ),
        "gather_rows": (
            lambda ls, idx=rng.integers(0, m, size=m + 2): ad.sum_all(
                ad.gather_rows(ls[0], idx)
            ),
            [x],
        ),
        "gather_cols": (
            lambda ls, idx=rng.integers(0, n, size=n + 1): ad.sum_all(
                ad.gather_cols(ls[0], idx)
            ),
            [x],
        ),
        "sum_axis0": (
            lambda ls: ad.sum_all(ad.mul(ad.sum_axis(ls[0], 0), ad.Node(y[:1]))),
            [x],
        ),
        "sum_axis1": (
            lambda ls: ad.sum_all(ad.mul(ad.sum_axis(ls[0], 1), ad.Node(y[:, :1]))),
            [x],
        ),
        "softmax_rows": (
            lambda ls: ad.sum_all(ad.mul(ad.softmax_rows(ls[0]), ad.Node(y))),
            [x],
        ),
        "l2_normalize_rows": (
            lambda ls: ad.sum_all(ad.mul(ad.l2_normalize_rows(ls[0]), ad.Node(y))),
            [x + np.sign(x) * 0.2],
        ),
        "masked_mean_rows": (
            lambda ls: ad.sum_all(
                ad.mul(ad.masked_mean_rows(ls[0], np.ones(m)), ad.Node(y[:1]))
            ),
            [x],
        ),
        "layer_norm_rows": (
            lambda ls: ad.sum_all(ad.layer_norm_rows(ls[0], ls[1], ls[2])),
            [x, rng.normal(size=(1, n)), rng.normal(size=(1, n))],
        ),
    }
    if n % 2 == 0:
        cases["paired_rotation"] = (
            lambda ls: ad.sum_all(ad.mul(ad.paired_rotation(ls[0], ls[1]), ad.Node(y))),
            [x, rng.normal(size=(m, n)) + np.sign(rng.normal(size=(m, n))) * 0.3],
        )
        cases["l2_normalize_pairs"] = (
            lambda ls: ad.sum_all(ad.mul(ad.l2_normalize_pairs(ls[0]), ad.Node(y))),
            [x + np.sign(x) * 0.3],
        )
    return cases


@pytest.mark.parametrize("seed", range(N_SEEDS))
def test_every_primitive_matches_finite_differences(seed):
    rng = np.random.default_rng(1000 + seed)
    for name, (build, arrays) in _primitive_cases(rng).items():
        try:
            assert_gradients_match(build, arrays)
        except AssertionError as e:  # pragma: no cover - diagnostic path
            raise AssertionError(f"primitive {name} failed FD check: {e}") from e
