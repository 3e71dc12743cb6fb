"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every primitive applied to an input with requires_grad=True records a Node (inputs, output, backward rule)
on its output. Tape.from_loss collects the recorded nodes reachable from a scalar loss in topological order;
backward walks that order in reverse, visiting each node once and summing gradients over fan-out.

Broadcasting is restricted to the leading batch dimensions: the shapes of the two operands of a binary
elementwise op must be equal, or one of them must be a suffix of the other (this includes scalars).
"""
import numpy as np


class DimensionError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


class Node:
    __slots__ = ("op", "inputs", "output", "backward")

    def __init__(self, op, inputs, output, backward):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward = backward

    def __repr__(self):
        return f"Node({self.op}, out={self.output.shape})"


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node = None
        self.name = name

    # --- properties ---------------------------------------------------------------------------------------------------
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
    def flat(self):
        return self.data.reshape(-1)

    @property
    def T(self):  # noqa
        return transpose_last(self)

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        s = f"Tensor(shape={self.shape}"
        if self.name is not None:
            s += f", name={self.name}"
        if self.requires_grad:
            s += ", requires_grad=True"
        return s + ")"

    # --- operators ----------------------------------------------------------------------------------------------------
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

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, requires_grad=False)


def _record(op, inputs, data, backward_fun) -> Tensor:
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = Node(op=op, inputs=inputs, output=out, backward=backward_fun)
    return out


# Tape
# ----------------------------------------------------------------------------------------------------------------------
class Tape:
    """Recorded primitives reachable from one output, inputs before consumers."""

    def __init__(self, nodes):
        self.nodes = nodes

    def __len__(self):
        return len(self.nodes)

    @classmethod
    def from_loss(cls, loss: Tensor):
        order = []
        visited = set()
        if loss.node is None:
            return cls(order)

        stack = [(loss.node, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for t in node.inputs:
                if t.node is not None and id(t.node) not in visited:
                    stack.append((t.node, False))

        return cls(order)

    def backward(self, loss: Tensor):
        grads = {id(loss): np.ones_like(loss.data)}
        tensors = {id(loss): loss}

        for node in reversed(self.nodes):
            g = grads.get(id(node.output))
            if g is None:
                continue

            input_grads = node.backward(g)
            for t, gt in zip(node.inputs, input_grads):
                if gt is None or not t.requires_grad:
                    continue
                if gt.shape != t.shape:
                    raise DimensionError(f"Backward of '{node.op}' produced gradient {gt.shape} for input {t.shape}")
                if id(t) in grads:
                    grads[id(t)] = grads[id(t)] + gt
                else:
                    grads[id(t)] = gt
                    tensors[id(t)] = t

        for k, t in tensors.items():
            if t.grad is None:
                t.grad = grads[k].copy()
            else:
                t.grad = t.grad + grads[k]


def backward(loss: Tensor):
    if loss.size != 1:
        raise GraphError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("backward called on a loss that is not connected to any tensor with requires_grad")

    Tape.from_loss(loss).backward(loss)


# Broadcasting helpers
# ----------------------------------------------------------------------------------------------------------------------
def _check_broadcast(op, a_shape, b_shape):
    if a_shape == b_shape:
        return
    n = min(len(a_shape), len(b_shape))
    if n == 0 or a_shape[len(a_shape)-n:] == b_shape[len(b_shape)-n:]:
        return
    raise DimensionError(f"{op}: shapes {a_shape} and {b_shape} differ beyond the leading batch dimensions")


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    return g.reshape(shape)


# Binary elementwise
# ----------------------------------------------------------------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a.shape, b.shape)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", (a, b), a.data + b.data, _backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a.shape, b.shape)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", (a, b), a.data - b.data, _backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a.shape, b.shape)

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record("mul", (a, b), a.data * b.data, _backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a.shape, b.shape)

    def _backward(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _record("div", (a, b), a.data / b.data, _backward)


def minimum(a, b) -> Tensor:
    """Elementwise min; ties send the gradient to the first operand."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("minimum", a.shape, b.shape)
    first = a.data <= b.data

    def _backward(g):
        return _unbroadcast(np.where(first, g, 0.), a.shape), _unbroadcast(np.where(first, 0., g), b.shape)

    return _record("minimum", (a, b), np.where(first, a.data, b.data), _backward)


# Unary elementwise
# ----------------------------------------------------------------------------------------------------------------------
def neg(x) -> Tensor:
    x = as_tensor(x)
    return _record("neg", (x,), -x.data, lambda g: (-g,))


def square(x) -> Tensor:
    x = as_tensor(x)
    return _record("square", (x,), x.data * x.data, lambda g: (2 * g * x.data,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _record("tanh", (x,), y, lambda g: (g * (1 - y * y),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    active = x.data > 0
    return _record("relu", (x,), np.where(active, x.data, 0.), lambda g: (np.where(active, g, 0.),))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _record("exp", (x,), y, lambda g: (g * y,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return _record("log", (x,), np.log(x.data), lambda g: (g / x.data,))


def clamp(x, low=None, high=None) -> Tensor:
    """Gradient passes only strictly inside (low, high); subgradient 0 on the boundaries."""
    x = as_tensor(x)
    lo = -np.inf if low is None else low
    hi = +np.inf if high is None else high
    if lo > hi:
        raise ValueError(f"clamp: low {lo} > high {hi}")

    inside = (x.data > lo) & (x.data < hi)
    return _record("clamp", (x,), np.clip(x.data, lo, hi), lambda g: (np.where(inside, g, 0.),))


# Reductions
# ----------------------------------------------------------------------------------------------------------------------
def _normalize_axis(axis, ndim):
    if axis is None:
        return None
    if not -ndim <= axis < ndim:
        raise DimensionError(f"axis {axis} out of range for rank {ndim}")
    return axis % ndim


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: builtin shadowing, used as tensor.sum
    x = as_tensor(x)
    axis = _normalize_axis(axis, x.ndim)
    y = x.data.sum(axis=axis, keepdims=keepdims)

    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record("sum", (x,), y, _backward)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axis_ = _normalize_axis(axis, x.ndim)
    n = x.size if axis_ is None else x.shape[axis_]
    if n == 0:
        raise DimensionError(f"mean over an empty axis of shape {x.shape}")
    return mul(sum(x, axis=axis_, keepdims=keepdims), 1.0 / n)


def softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    axis = _normalize_axis(axis, x.ndim)
    if x.shape[axis] == 0:
        raise DimensionError(f"softmax over an empty axis of shape {x.shape}")

    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _record("softmax", (x,), s, _backward)


def logsumexp(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    axis = _normalize_axis(axis, x.ndim)
    if x.shape[axis] == 0:
        raise DimensionError(f"logsumexp over an empty axis of shape {x.shape}")

    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    se = e.sum(axis=axis, keepdims=True)
    y = (m + np.log(se)).squeeze(axis=axis)
    s = e / se

    def _backward(g):
        return (np.expand_dims(g, axis) * s,)

    return _record("logsumexp", (x,), y, _backward)


# Linear algebra
# ----------------------------------------------------------------------------------------------------------------------
def matmul(a, b) -> Tensor:
    """
    a[..., m, k] @ b[k, n] -> [..., m, n]  (shared right operand, e.g. weights)
    a[..., m, k] @ b[..., k, n] -> [..., m, n]  (identical leading batch dimensions)
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul expects operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul batch dimensions disagree: {a.shape} @ {b.shape}")

    y = a.data @ b.data

    def _backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if b.ndim == 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _record("matmul", (a, b), y, _backward)


def transpose_last(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"transpose_last expects rank >= 2, got {x.shape}")
    return _record("transpose", (x,), np.swapaxes(x.data, -1, -2), lambda g: (np.swapaxes(g, -1, -2),))


# Shape manipulation
# ----------------------------------------------------------------------------------------------------------------------
def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}")
    return _record("reshape", (x,), y, lambda g: (g.reshape(x.shape),))


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if len(tensors) == 0:
        raise DimensionError("concat of an empty list")
    axis = _normalize_axis(axis, tensors[0].ndim)
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or \
                t.shape[:axis] + t.shape[axis+1:] != tensors[0].shape[:axis] + tensors[0].shape[axis+1:]:
            raise DimensionError(f"concat: incompatible shapes {[t.shape for t in tensors]} along axis {axis}")

    y = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record("concat", tuple(tensors), y, _backward)


def index(x, key) -> Tensor:
    """Basic indexing only (ints, slices, Ellipsis), so the backward scatter never overlaps."""
    x = as_tensor(x)
    key_t = key if isinstance(key, tuple) else (key,)
    for k in key_t:
        if not (k is Ellipsis or k is None or isinstance(k, (int, np.integer, slice))):
            raise TypeError(f"index supports basic indexing only, got {type(k).__name__}")

    y = x.data[key]

    def _backward(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _record("index", (x,), np.array(y, copy=True), _backward)
