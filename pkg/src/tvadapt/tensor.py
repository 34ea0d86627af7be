"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every tensor stores a numpy array plus an optional gradient slot. Ops
executed while gradients are enabled record a closure that scatters the
output adjoint back into the operands; ``Tensor.backward`` replays the
tape in reverse topological order. Frozen tensors (``requires_grad``
False) never receive a grad array and are skipped by the tape.

Also hosts the deterministic counter-based RNG helper, the named
parameter store, and the central-difference gradient checker used as the
independent oracle for every differentiable path in the package.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import erf as _erf

from .exceptions import ContractError, DimensionError, NumericError

_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)

_grad_enabled = True


class no_grad:
    """Context manager that disables tape recording inside its block."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def rng_for(seed, *tags):
    """Counter-based generator derived from a seed and a tag path.

    Philox keyed by (seed, blake2(tags)) so every consumer gets an
    independent stream whose draws do not depend on call order elsewhere.
    """
    digest = hashlib.blake2b("/".join(str(t) for t in tags).encode(), digest_size=8)
    tag_key = int.from_bytes(digest.digest(), "little")
    key = ((int(seed) & 0xFFFFFFFFFFFFFFFF) << 64) | tag_key
    return np.random.Generator(np.random.Philox(key=key))


class Tensor:
    """A dense multi-axis f64 array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def item(self):
        return float(self.data)

    def detach(self):
        """Value-only view of this tensor, cut off from the tape."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # -- autodiff core --------------------------------------------------

    def backward(self):
        """Reverse sweep from a scalar output.

        Accumulates into ``grad`` of every trainable tensor on the path;
        repeated calls without ``zero_grad`` keep accumulating.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward requires a scalar loss, got shape {self.data.shape}"
            )
        if not self.requires_grad:
            return
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def astensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    """Wrap an op result, recording the tape only when it can matter."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g, shape):
    """Sum adjoint ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, (gs, ts) in enumerate(zip(g.shape, shape)):
        if ts == 1 and gs != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------


def add(a, b):
    a, b = astensor(a), astensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise DimensionError(f"add: cannot broadcast {a.shape} with {b.shape}")

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), _bw)


def sub(a, b):
    a, b = astensor(a), astensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise DimensionError(f"sub: cannot broadcast {a.shape} with {b.shape}")

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), _bw)


def mul(a, b):
    a, b = astensor(a), astensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise DimensionError(f"mul: cannot broadcast {a.shape} with {b.shape}")

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), _bw)


def div(a, b):
    a, b = astensor(a), astensor(b)
    try:
        data = a.data / b.data
    except ValueError:
        raise DimensionError(f"div: cannot broadcast {a.shape} with {b.shape}")

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(data, (a, b), _bw)


def neg(a):
    a = astensor(a)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(-g)

    return _make(-a.data, (a,), _bw)


def power(a, p):
    """Elementwise ``a ** p`` for a constant real exponent ``p``."""
    a = astensor(a)
    p = float(p)
    data = a.data**p

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * p * a.data ** (p - 1.0))

    return _make(data, (a,), _bw)


def elementwise(op, a, b):
    """Named elementwise dispatch with standard trailing-axis broadcast."""
    if op == "add":
        return add(a, b)
    if op == "mul":
        return mul(a, b)
    raise ContractError(f"elementwise: unknown op {op!r}")


# -- transcendental -----------------------------------------------------


def exp(a):
    a = astensor(a)
    data = np.exp(a.data)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * data)

    return _make(data, (a,), _bw)


def log(a):
    a = astensor(a)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), _bw)


def sqrt(a):
    a = astensor(a)
    data = np.sqrt(a.data)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * 0.5 / data)

    return _make(data, (a,), _bw)


def tanh(a):
    a = astensor(a)
    data = np.tanh(a.data)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - data * data))

    return _make(data, (a,), _bw)


def erf(a):
    a = astensor(a)
    data = _erf(a.data)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * 2.0 * _INV_SQRT_PI * np.exp(-a.data * a.data))

    return _make(data, (a,), _bw)


# -- contraction and reduction ------------------------------------------


def matmul(a, b):
    """Batched matrix product; leading axes broadcast, last two contract."""
    a, b = astensor(a), astensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul needs >=2-D operands, got {a.shape} and {b.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul: contracted axes differ for shapes {a.shape} and {b.shape}"
        )
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(
            f"matmul: batch axes do not broadcast for {a.shape} and {b.shape}"
        )

    def _bw(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), _bw)


def tsum(a, axis=None, keepdims=False):
    a = astensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def _bw(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            return
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(ax % a.data.ndim for ax in axes):
                g = np.expand_dims(g, ax)
        a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _make(data, (a,), _bw)


def mean(a, axis=None, keepdims=False):
    a = astensor(a)
    n = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / float(n))


def softmax(a, axis):
    """Stable softmax along ``axis``; rows sum to 1 within 1e-12."""
    a = astensor(a)
    if not np.isfinite(a.data).all():
        raise NumericError("softmax: input contains NaN or Inf")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def _bw(g):
        if a.requires_grad:
            inner = (g * data).sum(axis=axis, keepdims=True)
            a._accumulate(data * (g - inner))

    return _make(data, (a,), _bw)


def logsumexp(a, axis, keepdims=False):
    """log-sum-exp with a detached max shift; gradient is the softmax."""
    a = astensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    body = log(tsum(exp(a - Tensor(m)), axis=axis, keepdims=True)) + Tensor(m)
    if keepdims:
        return body
    return reshape(body, np.squeeze(body.data, axis=axis).shape)


# -- shape manipulation --------------------------------------------------


def reshape(a, shape):
    a = astensor(a)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), _bw)


def transpose(a, axes=None):
    a = astensor(a)
    data = np.transpose(a.data, axes)

    def _bw(g):
        if a.requires_grad:
            inv = None if axes is None else np.argsort(axes)
            a._accumulate(np.transpose(g, inv))

    return _make(data, (a,), _bw)


def swapaxes(a, ax1, ax2):
    a = astensor(a)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(np.swapaxes(g, ax1, ax2))

    return _make(np.swapaxes(a.data, ax1, ax2), (a,), _bw)


def concat(parts, axis):
    parts = [astensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def _bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p._accumulate(g[tuple(sl)])

    return _make(data, tuple(parts), _bw)


def broadcast_to(a, shape):
    a = astensor(a)
    data = np.broadcast_to(a.data, shape).copy()

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))

    return _make(data, (a,), _bw)


def getitem(a, key):
    """Basic or integer-array indexing; adjoints scatter-add back."""
    a = astensor(a)
    data = a.data[key]

    def _bw(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            np.add.at(ga, key, g)
            a._accumulate(ga)

    return _make(data, (a,), _bw)


def take(a, indices, axis):
    """Gather slices at integer ``indices`` along ``axis`` (repeats allowed)."""
    a = astensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    data = np.take(a.data, idx, axis=axis)

    def _bw(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            np.add.at(np.moveaxis(ga, axis, 0), idx, np.moveaxis(g, axis, 0))
            a._accumulate(ga)

    return _make(data, (a,), _bw)


def where_const(mask, a, b):
    """Select ``a`` where the constant boolean ``mask`` holds, else ``b``.

    Pure selection: chosen entries pass through bitwise untouched, unlike
    a mask-weighted sum which can perturb signed zeros.
    """
    a, b = astensor(a), astensor(b)
    mask = np.asarray(mask, dtype=bool)
    data = np.where(mask, a.data, b.data)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * mask, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * ~mask, b.data.shape))

    return _make(data, (a, b), _bw)


def value_override(a, data):
    """Forward the given values while keeping ``a``'s gradient path.

    Straight-through substitution: the output holds ``data`` exactly,
    and the full adjoint flows to ``a`` unchanged.
    """
    a = astensor(a)
    data = np.asarray(data, dtype=np.float64)
    if data.shape != a.data.shape:
        raise DimensionError(
            f"value_override: shapes differ, {data.shape} vs {a.data.shape}"
        )

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g)

    return _make(data, (a,), _bw)


def clip(a, lo, hi):
    """Clamp to [lo, hi]; gradient passes inside the (inclusive) bounds."""
    a = astensor(a)
    data = np.clip(a.data, lo, hi)
    passes = (a.data >= lo) & (a.data <= hi)

    def _bw(g):
        if a.requires_grad:
            a._accumulate(g * passes)

    return _make(data, (a,), _bw)


# -- small composites ----------------------------------------------------


def l2_normalize(a, axis=-1):
    a = astensor(a)
    norm = sqrt(tsum(a * a, axis=axis, keepdims=True))
    return a / norm


def linear(x, w, b=None):
    out = matmul(x, w)
    return out if b is None else out + b


def gelu(x):
    """Exact Gaussian-error GELU (smooth, so central differences apply)."""
    x = astensor(x)
    return 0.5 * x * (erf(x * (1.0 / np.sqrt(2.0))) + 1.0)


def layer_norm(x, gain, bias, eps=1e-5):
    mu = mean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = mean(centered * centered, axis=-1, keepdims=True)
    return gain * (centered / sqrt(var + eps)) + bias


# -- parameter store -----------------------------------------------------


class ParamStore:
    """Named map of parameters with per-entry frozen flags.

    Names are unique; all iteration is in lexicographic order so that
    optimizer sweeps and serialization are deterministic.
    """

    def __init__(self):
        self._params = {}

    def add(self, name, tensor, frozen=False):
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = not frozen
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def trainable_items(self):
        for name, t in self.items():
            if t.requires_grad:
                yield name, t

    @property
    def trainable_count(self):
        return sum(1 for _, t in self.items() if t.requires_grad)

    @property
    def frozen_count(self):
        return len(self._params) - self.trainable_count

    def num_elements(self, trainable=None, prefix=""):
        total = 0
        for name, t in self.items():
            if not name.startswith(prefix):
                continue
            if trainable is None or t.requires_grad == trainable:
                total += t.data.size
        return total

    def freeze(self, prefix=""):
        """Flag every entry under ``prefix`` frozen; grads are dropped."""
        for name, t in self.items():
            if name.startswith(prefix):
                t.requires_grad = False
                t.grad = None

    def zero_grad(self):
        for _, t in self.items():
            t.grad = None

    def hash_bytes(self, prefix=""):
        """Content hash of all entries under ``prefix`` (order-stable)."""
        h = hashlib.blake2b(digest_size=16)
        for name, t in self.items():
            if name.startswith(prefix):
                h.update(name.encode())
                h.update(np.ascontiguousarray(t.data).tobytes())
        return h.hexdigest()


def backward(loss, store=None):
    """Run the reverse sweep from ``loss`` into a store's trainable entries."""
    loss = astensor(loss)
    loss.backward()
    return None


def fd_check(fn, store, eps=1e-5):
    """Max relative error between analytic and central-difference grads.

    ``fn`` maps the store to a scalar Tensor and must be deterministic:
    it is evaluated twice at the base point and any disagreement raises.
    Central differences perturb each trainable coordinate by +/- eps.
    """
    if not (0.0 < eps <= 1e-3):
        raise ContractError(f"fd_check: eps must lie in (0, 1e-3], got {eps}")
    base = fn(store)
    repeat = fn(store)
    if base.data != repeat.data:
        raise ContractError("fd_check: fn is not deterministic across evaluations")

    store.zero_grad()
    loss = fn(store)
    loss.backward()

    worst = 0.0
    for _, t in store.trainable_items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        grad_flat = analytic.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(fn(store).data)
            flat[i] = orig - eps
            f_minus = float(fn(store).data)
            flat[i] = orig
            cd = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(grad_flat[i]), abs(cd), 1e-8)
            worst = max(worst, abs(grad_flat[i] - cd) / denom)
    store.zero_grad()
    return worst
