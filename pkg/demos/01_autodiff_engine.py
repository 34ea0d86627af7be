#!/usr/bin/env python3
"""Walk through the tensor engine: broadcasting, the tape, and the checker.

Everything in this package is built on a small float64 tensor type with
reverse-mode differentiation, so we start there.
"""

import numpy as np

from tvadapt import tensor as T
from tvadapt.tensor import ParamStore, Tensor, fd_check, rng_for

print("=== tensors and broadcasting ===")
a = Tensor(np.arange(6.0).reshape(2, 3))
b = Tensor(np.array([[10.0], [100.0]]))
print("a * b (column broadcast):")
print(T.mul(a, b).data)

print("\nmatmul with batched leading axes:")
x = Tensor(rng_for(0, "demo").normal(size=(4, 2, 3)))
w = Tensor(rng_for(1, "demo").normal(size=(3, 5)))
print("(4,2,3) @ (3,5) ->", T.matmul(x, w).shape)

print("\n=== the tape ===")
p = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
loss = T.tsum(p * p * p)  # sum of cubes: gradient is 3 p^2
loss.backward()
print("d/dp sum(p^3) =", p.grad, " (expect 3p^2 =", 3 * p.data**2, ")")

print("\nfrozen tensors never receive gradients:")
store = ParamStore()
frozen = store.add("backbone/w", Tensor(np.ones(3)), frozen=True)
live = store.add("adapter/w", Tensor(np.ones(3)))
T.tsum(frozen * live * live).backward()
print("frozen grad:", frozen.grad, "   adapter grad:", live.grad)

print("\n=== softmax stability ===")
s = T.softmax(Tensor(np.array([1000.0, 0.0, -1000.0])), axis=0)
print("softmax([1000, 0, -1000]) =", s.data, " sum:", s.data.sum())

print("\n=== the finite-difference oracle ===")
# every differentiable path in the package is validated against this
check_store = ParamStore()
check_store.add("m", Tensor(rng_for(2, "demo").normal(size=(3, 4))))


def scalar_fn(st):
    h = T.softmax(st["m"], axis=1)
    return T.tsum(T.gelu(h) * h)


err = fd_check(scalar_fn, check_store, eps=1e-5)
print(f"max relative error analytic vs central differences: {err:.2e}")
