"""
Tensor engine for faultsynth
----------------------------
Dense numpy-backed tensors with reverse-mode automatic differentiation.

Every operation that produces a Tensor from inputs that require gradients
records its parents and a backward closure. `backward(loss)` walks the
recorded graph in reverse topological order, returns the gradient of every
requested parameter and then releases the graph so it cannot be replayed.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from src.errors import GraphError, NumericError

_state = {"dtype": np.float32, "grad_enabled": True}


def default_dtype():
    """The floating dtype new tensors are created with."""
    return _state["dtype"]


@contextmanager
def precision(dtype):
    """
    Temporarily switch the default dtype.

    64-bit mode exists for gradient checking; training runs in 32-bit.
    """
    previous = _state["dtype"]
    _state["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _state["dtype"] = previous


@contextmanager
def no_grad():
    """Evaluate without recording graph nodes."""
    previous = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = previous


def grad_enabled():
    return _state["grad_enabled"]


def check_finite(array, where):
    if not np.all(np.isfinite(array)):
        raise NumericError(f"non-finite value produced by {where}")


class Tensor:
    """
    A dense n-dimensional array plus the bookkeeping autodiff needs.

    Tensors are value-semantic: operations never mutate their inputs, so a
    tensor's data may be handed to another worker freely.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        if isinstance(data, Tensor):
            data = data.data
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating) or array.dtype != default_dtype():
            array = array.astype(default_dtype())
        self.data = array
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = None
        self._consumed = False

    @classmethod
    def _result(cls, data, parents, backward, op):
        check_finite(data, op)
        out = cls.__new__(cls)
        out.data = data
        out.name = None
        out.grad = None
        out._consumed = False
        out.requires_grad = grad_enabled() and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
            out._op = op
        else:
            out._parents = ()
            out._backward = None
            out._op = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data.copy()

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor._result(self.data, (), None, "detach")

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __len__(self):
        return self.shape[0]

    # Arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other, like=self), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def abs(self):
        return absolute(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)


def as_tensor(value, like=None):
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else default_dtype()
    t = Tensor.__new__(Tensor)
    t.data = np.asarray(value, dtype=dtype)
    t.requires_grad = False
    t.name = None
    t.grad = None
    t._parents = ()
    t._backward = None
    t._op = None
    t._consumed = False
    return t


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Elementwise and structural ops ------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b, like=as_tensor(a))

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return Tensor._result(a.data / b.data, (a, b), backward, "div")


def power(a, exponent):
    exponent = float(exponent)

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return Tensor._result(a.data ** exponent, (a,), backward, "pow")


def exp(a):
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return Tensor._result(out, (a,), backward, "exp")


def log(a):
    def backward(g):
        return (g / a.data,)

    return Tensor._result(np.log(a.data), (a,), backward, "log")


def sqrt(a):
    out = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / out,)

    return Tensor._result(out, (a,), backward, "sqrt")


def absolute(a):
    def backward(g):
        return (g * np.sign(a.data),)

    return Tensor._result(np.abs(a.data), (a,), backward, "abs")


def matmul(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._result(a.data @ b.data, (a, b), backward, "matmul")


def reduce_sum(a, axis=None, keepdims=False):
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return Tensor._result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward, "sum")


def reduce_mean(a, axis=None, keepdims=False):
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((np.broadcast_to(g, a.shape) / count).astype(a.dtype),)

    return Tensor._result(np.mean(a.data, axis=axis, keepdims=keepdims), (a,), backward, "mean")


def reshape(a, shape):
    def backward(g):
        return (g.reshape(a.shape),)

    return Tensor._result(a.data.reshape(shape), (a,), backward, "reshape")


def transpose(a, axes=None):
    inverse = None if axes is None else tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return Tensor._result(np.transpose(a.data, axes), (a,), backward, "transpose")


def _is_basic(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (slice, int, type(None), type(Ellipsis))) for p in parts)


def getitem(a, index):
    basic = _is_basic(index)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor._result(a.data[index], (a,), backward, "getitem")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._result(data, tensors, backward, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    data = np.stack([t.data for t in tensors], axis=axis)
    return Tensor._result(data, tensors, backward, "stack")


# Graph and backward ------------------------------------------------------

@dataclass
class Graph:
    """
    The operation records reachable from one loss node.

    `nodes` is in construction (topological) order, leaves included;
    `parameters` names the leaf tensors that gradients are reported for.
    """

    nodes: list
    parameters: dict = field(default_factory=dict)
    mode: str = "train"

    @classmethod
    def trace(cls, loss, parameters=None, mode="train"):
        order, seen = [], set()
        stack_ = [(loss, False)]
        while stack_:
            node, expanded = stack_.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack_.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack_.append((parent, False))
        return cls(order, dict(parameters or {}), mode)


def backward(loss, parameters=None):
    """
    Reverse-mode gradients of a scalar loss.

    Args:
        loss: scalar Tensor produced by a recorded forward pass
        parameters: mapping name -> leaf Tensor; when omitted every leaf
            that requires a gradient is reported under its `name`

    Returns:
        dict: name -> gradient array. Parameters the loss does not depend
        on receive exact zeros. Each parameter's `.grad` is set as well.
    """
    if loss.size != 1:
        raise GraphError(f"loss must be scalar, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("graph already consumed by backward(); run a new forward pass")

    graph = Graph.trace(loss, parameters)
    grads = {id(loss): np.ones_like(loss.data)}
    leaf_grads = {}
    for node in reversed(graph.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._consumed and node is not loss:
            raise GraphError(f"node {node._op} belongs to a consumed graph")
        if node._backward is None:
            if node.requires_grad:
                leaf_grads[id(node)] = leaf_grads.get(id(node), 0) + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            check_finite(pg, f"backward of {node._op}")
            if id(parent) in grads:
                grads[id(parent)] = grads[id(parent)] + pg
            else:
                grads[id(parent)] = pg

    for node in graph.nodes:
        if node._backward is not None:
            node._consumed = True
            node._backward = None
            node._parents = ()
    loss._consumed = True

    if parameters is None:
        parameters = {node.name or f"leaf{i}": node for i, node in enumerate(graph.nodes)
                      if node.requires_grad and node._op is None}
    result = {}
    for name, param in parameters.items():
        g = leaf_grads.get(id(param))
        g = np.zeros_like(param.data) if g is None else np.asarray(g, dtype=param.dtype).reshape(param.shape)
        param.grad = g
        result[name] = g
    return result
