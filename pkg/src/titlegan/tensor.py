"""Dense float64 tensors with tape-based reverse-mode differentiation.

The graph is define-by-run: ops execute eagerly on numpy arrays and, when a
GradTape is active on the current thread, append a backward closure to it.
Tapes are rebuilt every forward pass, which keeps variable-length RNN
unrolling trivial. There is no broadcasting except matrix + row-vector
bias addition.
"""

from __future__ import annotations

import threading

import numpy as np


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class DomainError(ValueError):
    """Operand values outside an op's domain (e.g. log of a non-positive)."""


class Tensor:
    """A dense float64 array node. Values are row-major numpy arrays."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    # thin sugar over the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)


_local = threading.local()


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def _active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class GradTape:
    """Ordered record of executed ops for one forward pass.

    Execution order is a topological order of the graph, so backward walks
    the entries exactly once, in reverse. A tape is confined to the thread
    that opened it.
    """

    def __init__(self):
        self._entries = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self, "GradTape stack corrupted (crossed threads?)"
        return False

    def _record(self, out, inputs, backward):
        self._entries.append((out, inputs, backward))

    def __len__(self):
        return len(self._entries)

    def gradients(self, loss: Tensor, sources: dict) -> dict:
        """Backpropagate from a scalar loss to every named source tensor.

        Returns {name: dLoss/dTensor}; sources unreachable from the loss get
        zero arrays of the matching shape.
        """
        if loss.data.shape != ():
            raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
        acc = {id(loss): np.ones(())}
        for out, inputs, backward in reversed(self._entries):
            grad_out = acc.pop(id(out), None)
            if grad_out is None:
                continue
            for inp, grad_in in zip(inputs, backward(grad_out)):
                if grad_in is None:
                    continue
                key = id(inp)
                held = acc.get(key)
                acc[key] = grad_in if held is None else held + grad_in
        return {
            name: acc.get(id(t), np.zeros(t.data.shape)) for name, t in sources.items()
        }


def _emit(out_data, inputs, backward) -> Tensor:
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None:
        tape._record(out, inputs, backward)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product with numpy @ semantics for 1-D and 2-D operands."""
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != (bd.shape[0] if bd.ndim >= 1 else None):
        raise ShapeError(f"matmul inner dimensions disagree: {ad.shape} @ {bd.shape}")

    def backward(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return g @ bd.T, np.outer(ad, g)
        # 2-D @ 1-D
        return np.outer(g, bd), g @ ad

    return _emit(ad @ bd, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of equal shapes, or matrix + row-vector bias."""
    ad, bd = a.data, b.data
    if ad.shape == bd.shape:
        return _emit(ad + bd, (a, b), lambda g: (g, g))
    if ad.ndim == 2 and bd.ndim == 1 and ad.shape[1] == bd.shape[0]:
        return _emit(ad + bd, (a, b), lambda g: (g, g.sum(axis=0)))
    raise ShapeError(f"add shapes incompatible: {ad.shape} + {bd.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.shape != bd.shape:
        raise ShapeError(f"mul shapes differ: {ad.shape} vs {bd.shape}")
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def neg(a: Tensor) -> Tensor:
    return _emit(-a.data, (a,), lambda g: (-g,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _emit(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    t = np.exp(-np.abs(a.data))  # never overflows
    y = np.where(a.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t))
    return _emit(y, (a,), lambda g: (g * y * (1.0 - y),))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError(f"log requires strictly positive input, min={a.data.min()}")
    return _emit(np.log(a.data), (a,), lambda g: (g / a.data,))


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a non-differentiated Python scalar."""
    factor = float(factor)
    return _emit(a.data * factor, (a,), lambda g: (g * factor,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    ad = a.data
    if not -ad.ndim <= axis < ad.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {ad.shape}")
    shifted = ad - ad.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - inner),)

    return _emit(y, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    datas = [t.data for t in tensors]
    ndim = datas[0].ndim
    for d in datas[1:]:
        if d.ndim != ndim or any(
            d.shape[i] != datas[0].shape[i] for i in range(ndim) if i != axis % ndim
        ):
            raise ShapeError(
                f"concat non-concat dims differ: {[d.shape for d in datas]}"
            )
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _emit(np.concatenate(datas, axis=axis), tuple(tensors), backward)


def lookup(table: Tensor, ids) -> Tensor:
    """Row gather from a 2-D table. A scalar id yields a 1-D row, a list of
    ids an (len, d) matrix. Backward scatter-adds into the table."""
    td = table.data
    if td.ndim != 2:
        raise ShapeError(f"lookup table must be 2-D, got {td.shape}")
    vocab = td.shape[0]
    single = np.isscalar(ids) or isinstance(ids, (int, np.integer))
    id_list = [int(ids)] if single else [int(i) for i in ids]
    for i in id_list:
        if not 0 <= i < vocab:
            raise IndexError(f"lookup id {i} out of range for table of {vocab} rows")
    idx = np.asarray(id_list, dtype=np.intp)

    def backward(g):
        gt = np.zeros_like(td)
        np.add.at(gt, idx, g.reshape(len(id_list), td.shape[1]))
        return (gt,)

    out = td[idx[0]].copy() if single else td[idx].copy()
    return _emit(out, (table,), backward)


def slice_vec(a: Tensor, lo: int, hi: int) -> Tensor:
    """Contiguous slice of a 1-D tensor; backward zero-pads."""
    ad = a.data
    if ad.ndim != 1:
        raise ShapeError(f"slice_vec needs a 1-D tensor, got {ad.shape}")
    if not 0 <= lo <= hi <= ad.shape[0]:
        raise ShapeError(f"slice [{lo}:{hi}] invalid for length {ad.shape[0]}")

    def backward(g):
        gz = np.zeros_like(ad)
        gz[lo:hi] = g
        return (gz,)

    return _emit(ad[lo:hi].copy(), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),))


def pick(a: Tensor, index: int) -> Tensor:
    """Extract one element of a 1-D tensor as a scalar."""
    ad = a.data
    if ad.ndim != 1:
        raise ShapeError(f"pick needs a 1-D tensor, got {ad.shape}")
    index = int(index)
    if not 0 <= index < ad.shape[0]:
        raise IndexError(f"pick index {index} out of range for length {ad.shape[0]}")

    def backward(g):
        gz = np.zeros_like(ad)
        gz[index] = g
        return (gz,)

    return _emit(ad[index], (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes only where unclamped."""
    inside = (a.data >= lo) & (a.data <= hi)
    return _emit(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def tsum(a: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    return _emit(a.data.sum(), (a,), lambda g: (np.full(a.data.shape, float(g)),))
