"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Deliberately small: exactly the closure of operations the distortion-aware
operators and the multi-task objective need, each with a hand-written exact
adjoint.  No broadcasting tricks beyond numpy's own, no dtype zoo (float64
only), no graphs that outlive one backward pass.

Gradients accumulate into ``Tensor.grad``; tensors created with
``requires_grad=False`` (including everything behind ``stop_gradient``)
never receive one, which is what makes "exactly zero" gradient statements
testable rather than approximate.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError


def _as_array(value):
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """A value in the computation graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, _coerce(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _coerce(-1.0))

    def __sub__(self, other):
        return add(self, -_coerce(other))

    def __rsub__(self, other):
        return add(_coerce(other), -self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    # -- reverse pass ------------------------------------------------------
    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ContractError(
                    "backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        topo = []
        seen = set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for parent in node._parents:
                visit(parent)
            topo.append(node)

        visit(self)
        for node in topo:
            if node.requires_grad:
                node.grad = np.zeros_like(node.data)
        if self.requires_grad:
            self.grad = self.grad + _as_array(grad)
        for node in reversed(topo):
            if node._backward is not None and node.requires_grad:
                node._backward(node.grad)


def _coerce(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data, parents, backward):
    out = Tensor(data)
    live = tuple(p for p in parents if p.requires_grad)
    if live:
        out.requires_grad = True
        out._parents = live
        out._backward = backward
    return out


def _accumulate(tensor: Tensor, grad):
    if tensor.requires_grad:
        tensor.grad = tensor.grad + grad


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ContractError("matmul is defined for 2-D tensors")
    data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    a = _coerce(a)
    if a.data.ndim != 2:
        raise ContractError("transpose is defined for 2-D tensors")

    def backward(g):
        _accumulate(a, g.T)

    return _make(a.data.T, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    a = _coerce(a)
    old = a.data.shape

    def backward(g):
        _accumulate(a, g.reshape(old))

    return _make(a.data.reshape(shape), (a,), backward)


def concat(tensors, axis=0) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    sizes = [t.data.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        start = 0
        for t, size in zip(tensors, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, start + size)
            _accumulate(t, g[tuple(index)])
            start += size

    return _make(data, tuple(tensors), backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    a = _coerce(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        _accumulate(a, full)

    return _make(a.data[index], (a,), backward)


def tanh(a: Tensor) -> Tensor:
    a = _coerce(a)
    data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - data * data))

    return _make(data, (a,), backward)


def absolute(a: Tensor) -> Tensor:
    a = _coerce(a)

    def backward(g):
        _accumulate(a, g * np.sign(a.data))

    return _make(np.abs(a.data), (a,), backward)


def softmax(a: Tensor, axis=-1) -> Tensor:
    a = _coerce(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(a, (g - inner) * data)

    return _make(data, (a,), backward)


def stop_gradient(a: Tensor) -> Tensor:
    """Identity forward, zero backward: the result is a graph constant."""
    a = _coerce(a)
    return Tensor(a.data.copy())


# ---------------------------------------------------------------------------
# raster ops


def erp_pad(x: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Cylinder padding: circular columns, then replicated pole rows."""
    x = _coerce(x)
    if x.data.ndim != 3:
        raise ContractError("erp_pad wants (channels, height, width)")
    c, h, w = x.data.shape
    if pad_w >= w:
        raise ContractError("horizontal padding must be narrower than the raster")
    wrapped = np.pad(x.data, ((0, 0), (0, 0), (pad_w, pad_w)), mode="wrap")
    data = np.pad(wrapped, ((0, 0), (pad_h, pad_h), (0, 0)), mode="edge")

    def backward(g):
        # Adjoint of edge rows: fold the replicated rows onto the poles.
        gm = g[:, pad_h:pad_h + h, :].copy()
        if pad_h > 0:
            gm[:, 0, :] += g[:, :pad_h, :].sum(axis=1)
            gm[:, h - 1, :] += g[:, pad_h + h:, :].sum(axis=1)
        # Adjoint of wrapped columns: fold the copies back around.
        gx = gm[:, :, pad_w:pad_w + w].copy()
        if pad_w > 0:
            gx[:, :, w - pad_w:] += gm[:, :, :pad_w]
            gx[:, :, :pad_w] += gm[:, :, pad_w + w:]
        _accumulate(x, gx)

    return _make(data, (x,), backward)


def conv2d_valid(x: Tensor, kernel: Tensor) -> Tensor:
    """Per-channel (depthwise) valid correlation.

    ``x`` is (C, H, W), ``kernel`` (C, kh, kw); output is
    (C, H - kh + 1, W - kw + 1).  Differentiable in both arguments.
    """
    x, kernel = _coerce(x), _coerce(kernel)
    if x.data.ndim != 3 or kernel.data.ndim != 3:
        raise ContractError("conv2d_valid wants (C,H,W) input and (C,kh,kw) kernel")
    c, h, w = x.data.shape
    ck, kh, kw = kernel.data.shape
    if ck != c:
        raise ContractError(f"kernel channels {ck} != input channels {c}")
    if kh > h or kw > w:
        raise ContractError("kernel larger than input")
    oh, ow = h - kh + 1, w - kw + 1
    data = np.zeros((c, oh, ow))
    for i in range(kh):
        for j in range(kw):
            data += kernel.data[:, i, j][:, None, None] * \
                x.data[:, i:i + oh, j:j + ow]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for i in range(kh):
                for j in range(kw):
                    gx[:, i:i + oh, j:j + ow] += \
                        kernel.data[:, i, j][:, None, None] * g
            _accumulate(x, gx)
        if kernel.requires_grad:
            gk = np.zeros_like(kernel.data)
            for i in range(kh):
                for j in range(kw):
                    gk[:, i, j] = (g * x.data[:, i:i + oh, j:j + ow]).sum(axis=(1, 2))
            _accumulate(kernel, gk)

    return _make(data, (x, kernel), backward)


# ---------------------------------------------------------------------------
# reductions and losses


def masked_mean(a: Tensor, mask) -> Tensor:
    """Mean over pixels where ``mask`` holds; an empty mask contributes 0."""
    a = _coerce(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape:
        raise ContractError(
            f"mask shape {mask.shape} != tensor shape {a.data.shape}")
    count = int(mask.sum())
    value = a.data[mask].sum() / count if count else 0.0

    def backward(g):
        if count:
            grad = np.zeros_like(a.data)
            grad[mask] = float(g) / count
            _accumulate(a, grad)

    return _make(np.float64(value), (a,), backward)


def l1_loss(pred: Tensor, target, mask) -> Tensor:
    """Masked mean absolute error; ``target`` is a constant."""
    return masked_mean(absolute(pred - _coerce(target)), mask)


def cross_entropy(logits: Tensor, target, mask) -> Tensor:
    """Masked mean cross-entropy.

    ``logits`` has classes on axis 0 ((K, ...)); ``target`` holds integer
    class indices shaped like the trailing axes.  Fused log-softmax keeps
    the op closure small and the backward numerically tidy.
    """
    logits = _coerce(logits)
    target = np.asarray(target)
    mask = np.asarray(mask, dtype=bool)
    if logits.data.ndim < 2:
        raise ContractError("cross_entropy wants (K, ...) logits")
    k = logits.data.shape[0]
    if target.shape != logits.data.shape[1:] or mask.shape != target.shape:
        raise ContractError("cross_entropy target/mask shape mismatch")
    if mask.any() and (target[mask].min() < 0 or target[mask].max() >= k):
        raise ContractError(f"class index outside [0, {k})")

    shifted = logits.data - logits.data.max(axis=0, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=0))
    picked = np.take_along_axis(
        shifted, np.clip(target, 0, k - 1)[None], axis=0)[0]
    nll = log_z - picked
    count = int(mask.sum())
    value = nll[mask].sum() / count if count else 0.0

    def backward(g):
        if count:
            p = np.exp(shifted) / np.exp(shifted).sum(axis=0, keepdims=True)
            onehot = np.zeros_like(p)
            np.put_along_axis(onehot, np.clip(target, 0, k - 1)[None], 1.0, axis=0)
            grad = (p - onehot) * (float(g) / count)
            grad *= mask[None]
            _accumulate(logits, grad)

    return _make(np.float64(value), (logits,), backward)
