"""
Reverse-mode differentiation on the float64 tape
================================================

Build a small expression graph, run backward, and confirm the gradients
against central finite differences computed by hand.
"""

import numpy as np

from structkgc import autodiff as ad

rng = np.random.default_rng(0)

# d/dx sum(x * x) = 2x
x = ad.Node([[1.0, 2.0, -3.0]])
loss = ad.sum_all(ad.mul(x, x))
ad.backward(loss)
print("value:", loss.value[0, 0])
print("grad :", x.grad, "(expected 2x)")

# a two-consumer (diamond) graph: gradients sum over both paths
y = ad.Node([[0.5, -0.25]])
out = ad.sum_all(ad.add(ad.exp(y), ad.mul(y, y)))
ad.backward(out)
print("\ndiamond grad:", y.grad, "(expected exp(y) + 2y =",
      np.exp(y.value) + 2 * y.value, ")")

# softmax rows sum to one and stay finite for huge logits
s = ad.softmax_rows(ad.Node([[1000.0, 0.0, -5.0]]))
print("\nsoftmax of [1000, 0, -5]:", s.value, "row sum:", s.value.sum())

# a quick finite-difference spot check on matmul
a = ad.Node(rng.normal(size=(3, 4)))
b = ad.Node(rng.normal(size=(4, 2)))
loss = ad.sum_all(ad.matmul(a, b))
ad.backward(loss)
eps = 1e-5
i, j = 1, 2
perturbed = a.value.copy()
perturbed[i, j] += eps
up = (perturbed @ b.value).sum()
perturbed[i, j] -= 2 * eps
down = (perturbed @ b.value).sum()
numeric = (up - down) / (2 * eps)
print(f"\nmatmul dA[{i},{j}]: analytic {a.grad[i, j]:.8f}  numeric {numeric:.8f}")
