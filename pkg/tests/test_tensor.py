"""Engine tests: forward oracles, broadcast rules, and gradient checks."""

import numpy as np
import pytest

from tvadapt import tensor as T
from tvadapt.exceptions import ContractError, DimensionError, NumericError
from tvadapt.tensor import ParamStore, Tensor, fd_check, rng_for


def test_matmul_identity():
    m = Tensor(np.arange(9.0).reshape(3, 3))
    out = T.matmul(Tensor(np.eye(3)), m)
    np.testing.assert_array_equal(out.data, m.data)


def test_matmul_hand_oracle():
    out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_empty_contraction():
    out = T.matmul(Tensor(np.zeros((2, 0))), Tensor(np.zeros((0, 3))))
    np.testing.assert_array_equal(out.data, np.zeros((2, 3)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError) as err:
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)


def test_matmul_batched_broadcast_grad():
    rng = rng_for(0, "mmb")
    a = Tensor(rng.normal(size=(3, 1, 2, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(5, 4, 3)), requires_grad=True)
    out = T.matmul(a, b)
    assert out.shape == (3, 5, 2, 3)
    T.tsum(out * out).backward()
    assert a.grad.shape == a.shape and b.grad.shape == b.shape


def test_softmax_uniform():
    out = T.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
    np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)


def test_softmax_stability():
    out = T.softmax(Tensor([1000.0, 0.0]), axis=0)
    assert np.isfinite(out.data).all()
    np.testing.assert_allclose(out.data, [1.0, 0.0], atol=1e-12)


def test_softmax_closed_form():
    out = T.softmax(Tensor(np.log([1.0, 2.0, 3.0])), axis=0)
    np.testing.assert_allclose(out.data, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)


def test_softmax_rejects_nonfinite():
    with pytest.raises(NumericError):
        T.softmax(Tensor([np.nan, 0.0]), axis=0)


def test_softmax_rows_sum_to_one_and_permutation_equivariant():
    rng = rng_for(1, "smx")
    for _ in range(25):
        x = rng.normal(size=(4, 7)) * rng.uniform(0.1, 50)
        s = T.softmax(Tensor(x), axis=1).data
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
        perm = rng.permutation(7)
        sp = T.softmax(Tensor(x[:, perm]), axis=1).data
        np.testing.assert_allclose(sp, s[:, perm], atol=1e-15)


def test_elementwise_mul_identity_and_broadcast_shapes():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(T.elementwise("mul", Tensor(np.ones((2, 3))), x).data, x.data)
    out = T.elementwise("add", Tensor(np.zeros((3, 1, 4))), Tensor(np.zeros((1, 5, 4))))
    assert out.shape == (3, 5, 4)


def test_elementwise_scalar_broadcast_oracle():
    out = T.elementwise("mul", Tensor([[2.0]]), Tensor([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(out.data, [[2.0, 4.0], [6.0, 8.0]])


def test_elementwise_rejects_non_broadcastable():
    with pytest.raises(DimensionError):
        T.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))


def test_broadcast_reduce_matches_materialized_loop():
    # broadcast-mul then full reduction vs an explicit index loop
    rng = rng_for(2, "bcast")
    for _ in range(40):
        nd = int(rng.integers(1, 5))
        shape_a, shape_b = [], []
        for _ in range(nd):
            n = int(rng.integers(1, 5))
            ka, kb = n, n
            pick = rng.integers(0, 3)
            if pick == 0:
                ka = 1
            elif pick == 1:
                kb = 1
            shape_a.append(ka)
            shape_b.append(kb)
        a = rng.normal(size=shape_a)
        b = rng.normal(size=shape_b)
        got = T.tsum(T.mul(Tensor(a), Tensor(b))).data
        full = np.broadcast_shapes(tuple(shape_a), tuple(shape_b))
        want = 0.0
        for idx in np.ndindex(full):
            ia = tuple(0 if sa == 1 else i for i, sa in zip(idx, shape_a))
            ib = tuple(0 if sb == 1 else i for i, sb in zip(idx, shape_b))
            want += a[ia] * b[ib]
        np.testing.assert_allclose(got, want, rtol=1e-12)


def test_backward_linear_and_quadratic():
    p = Tensor(np.ones(4), requires_grad=True)
    T.tsum(p).backward()
    np.testing.assert_array_equal(p.grad, np.ones(4))

    q = Tensor([1.0, 2.0], requires_grad=True)
    T.tsum(q * q).backward()
    np.testing.assert_array_equal(q.grad, [2.0, 4.0])


def test_backward_accumulates_without_reset():
    p = Tensor([3.0], requires_grad=True)
    T.tsum(p * p).backward()
    T.tsum(p * p).backward()
    np.testing.assert_array_equal(p.grad, [12.0])


def test_backward_rejects_nonscalar():
    p = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        (p * p).backward()


def test_frozen_tensor_never_gets_grad():
    store = ParamStore()
    w = store.add("frozen/w", Tensor(np.ones(3)), frozen=True)
    p = store.add("adapter/p", Tensor(np.ones(3)))
    T.tsum(w * p).backward()
    assert w.grad is None
    np.testing.assert_array_equal(p.grad, np.ones(3))


def test_no_grad_context_suppresses_tape():
    p = Tensor([2.0], requires_grad=True)
    with T.no_grad():
        out = T.tsum(p * p)
    assert not out.requires_grad
    assert out._parents == ()


def test_fd_check_linear_exact():
    store = ParamStore()
    store.add("p", Tensor(np.array([1.0, -2.0, 0.5])))
    err = fd_check(lambda s: T.tsum(s["p"]), store, eps=1e-5)
    assert err < 1e-10


def test_fd_check_cubic():
    store = ParamStore()
    store.add("p", Tensor(np.array([1.0])))
    err = fd_check(lambda s: T.tsum(s["p"] * s["p"] * s["p"]), store, eps=1e-5)
    assert err < 1e-8


def test_fd_check_rejects_nondeterministic_fn():
    store = ParamStore()
    store.add("p", Tensor(np.array([1.0])))
    state = {"n": 0}

    def fn(s):
        state["n"] += 1
        return T.tsum(s["p"]) * float(state["n"])

    with pytest.raises(ContractError):
        fd_check(fn, store, eps=1e-5)


def test_fd_check_rejects_bad_eps():
    store = ParamStore()
    store.add("p", Tensor(np.array([1.0])))
    with pytest.raises(ContractError):
        fd_check(lambda s: T.tsum(s["p"]), store, eps=1e-2)


def test_registered_ops_match_central_differences():
    # every differentiable op exercised at random points, 1e-4 relative
    rng = rng_for(3, "ops")

    def build(s):
        a, b, c = s["a"], s["b"], s["c"]
        h = T.matmul(a, b)
        h = T.softmax(h, axis=1) + T.tanh(h) * 0.3
        h = T.gelu(h) + T.exp(c * 0.1) - T.log(c * c + 1.5)
        h = T.layer_norm(h, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        h = T.concat([h, h * c], axis=0)
        h = T.take(h, [1, 0, 1], axis=0)
        h = T.clip(h, -0.75, 0.75)
        h = T.where_const(np.arange(4) % 2 == 0, h, h * 2.0)
        h = T.l2_normalize(h, axis=-1)
        return T.tsum(h * h * h) + T.logsumexp(T.reshape(h, (-1,)), axis=0)

    worst = 0.0
    for trial in range(10):
        store = ParamStore()
        store.add("a", Tensor(rng.normal(size=(3, 5))))
        store.add("b", Tensor(rng.normal(size=(5, 4))))
        store.add("c", Tensor(rng.normal(size=(3, 4)) + 3.0))
        worst = max(worst, fd_check(build, store, eps=1e-5))
    assert worst < 1e-4


def test_getitem_fancy_grad_scatter():
    p = Tensor(np.zeros((3, 3)), requires_grad=True)
    rows = np.array([0, 1, 1])
    cols = np.array([2, 0, 0])
    T.tsum(p[rows, cols]).backward()
    want = np.zeros((3, 3))
    want[0, 2] = 1.0
    want[1, 0] = 2.0  # repeated index accumulates
    np.testing.assert_array_equal(p.grad, want)


def test_take_repeated_indices_grad():
    p = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    out = T.take(p, [2, 2, 0], axis=0)
    assert out.shape == (3, 2)
    T.tsum(out).backward()
    np.testing.assert_array_equal(p.grad, [[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]])


def test_param_store_order_and_counts():
    store = ParamStore()
    store.add("b/x", Tensor(np.zeros(2)))
    store.add("a/y", Tensor(np.zeros(3)), frozen=True)
    store.add("a/b", Tensor(np.zeros(5)))
    assert store.names() == ["a/b", "a/y", "b/x"]
    assert store.trainable_count + store.frozen_count == len(store)
    assert store.num_elements(trainable=True) == 7
    assert store.num_elements(prefix="a/") == 8
    store.freeze("a/")
    assert store.num_elements(trainable=True) == 2
    with pytest.raises(ContractError):
        store.add("a/b", Tensor(np.zeros(1)))


def test_rng_for_is_deterministic_and_stream_independent():
    a1 = rng_for(7, "x").normal(size=4)
    a2 = rng_for(7, "x").normal(size=4)
    b = rng_for(7, "y").normal(size=4)
    np.testing.assert_array_equal(a1, a2)
    assert not np.allclose(a1, b)
