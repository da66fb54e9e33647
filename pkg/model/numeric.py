"""
Dense float64 tensors with reverse-mode differentiation.

Every primitive is a Function subclass. Applying a Function while a Tape is active
and at least one input requires gradients records the node on that tape; Tape.backward
replays the recorded nodes in reverse order to accumulate adjoints.

Tensors are immutable: their numpy buffer is marked read-only on creation.
"""
import logging
import threading
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from helpers.errors import DimensionError, InvalidInputError, NumericOverflowError

logger = logging.getLogger(__name__)

_local = threading.local()

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]


class Tensor:
    __slots__ = ("data", "requires_grad", "_node", "__weakref__")
    # Makes numpy defer to Tensor operators when an ndarray is on the left.
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, _node=None):
        if isinstance(data, Tensor):
            data = data.data
        array = np.array(data, dtype=np.float64)
        array.setflags(write=False)
        self.data = array
        self.requires_grad = requires_grad
        self._node = _node

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidInputError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __add__(self, other):
        return Add.apply(self, other)

    def __radd__(self, other):
        return Add.apply(other, self)

    def __sub__(self, other):
        return Add.apply(self, Neg.apply(other))

    def __rsub__(self, other):
        return Add.apply(other, Neg.apply(self))

    def __mul__(self, other):
        return Mul.apply(self, other)

    def __rmul__(self, other):
        return Mul.apply(other, self)

    def __truediv__(self, other):
        return Div.apply(self, other)

    def __rtruediv__(self, other):
        return Div.apply(other, self)

    def __neg__(self):
        return Neg.apply(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# Tape ###############################################################################

def _tape_stack() -> List["Tape"]:
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


def current_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """
    Ordered record of primitive operations.

    Usage:
        with Tape() as tape:
            loss = ...
        grads = tape.backward(loss, wrt=params)

    A tape is confined to the thread that created it. Backward never mutates the
    record, so replaying the same tape twice gives bit-identical gradients.
    """

    def __init__(self):
        self._nodes: List[Function] = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        _tape_stack().remove(self)

    def __len__(self):
        return len(self._nodes)

    def record(self, node: "Function") -> int:
        self._nodes.append(node)
        return len(self._nodes) - 1

    def leaves(self) -> List[Tensor]:
        """Tensors requiring gradients that entered the tape without being produced on it."""
        seen = set()
        found = []
        for node in self._nodes:
            for parent in node.parents:
                if parent.requires_grad and parent._node is None and id(parent) not in seen:
                    seen.add(id(parent))
                    found.append(parent)
        return found

    def backward(self, loss: Tensor, wrt: Optional[Iterable[Tensor]] = None) -> Dict[Tensor, np.ndarray]:
        """
        :param loss: scalar tensor produced on this tape
        :param wrt: leaves to return gradients for, default every leaf seen on the tape
        :return: dict leaf tensor -> gradient array; leaves off the loss path get zeros
        :raise InvalidInputError: if loss is not a scalar or was not recorded here
        """
        if loss.size != 1:
            raise InvalidInputError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._node is None or loss._node.tape is not self:
            raise InvalidInputError("Loss is not reachable from this tape")

        adjoints: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self._nodes[:loss._node.index + 1]):
            grad = adjoints.get(id(node.output))
            if grad is None:
                continue
            parent_grads = node.backward(grad)
            for parent, parent_grad in zip(node.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoints:
                    adjoints[key] = adjoints[key] + parent_grad
                else:
                    adjoints[key] = np.array(parent_grad, dtype=np.float64)

        targets = list(wrt) if wrt is not None else self.leaves()
        gradients = {}
        for leaf in targets:
            grad = adjoints.get(id(leaf))
            gradients[leaf] = np.zeros_like(leaf.data) if grad is None else grad.reshape(leaf.shape)
        return gradients


def backward(loss: Tensor, wrt: Optional[Iterable[Tensor]] = None) -> Dict[Tensor, np.ndarray]:
    """Backward pass on the tape that recorded loss."""
    if loss._node is None:
        raise InvalidInputError("Loss is not reachable from a recorded tape")
    return loss._node.tape.backward(loss, wrt)


# Primitives #########################################################################

class Function:
    parents: Tuple[Tensor, ...] = ()
    tape: Optional[Tape] = None
    output: Optional[Tensor] = None
    index: int = -1

    @classmethod
    def apply(cls, *inputs, **kwargs) -> Tensor:
        node = cls()
        node.parents = tuple(as_tensor(x) for x in inputs)
        out = node.forward(*[p.data for p in node.parents], **kwargs)
        if not np.all(np.isfinite(out)):
            raise NumericOverflowError(f"{cls.__name__} produced non-finite values")
        tape = current_tape()
        if tape is None or not any(p.requires_grad for p in node.parents):
            return Tensor(out)
        result = Tensor(out, requires_grad=True, _node=node)
        node.tape = tape
        node.output = result
        node.index = tape.record(node)
        return result

    def forward(self, *arrays, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(name: str, a: np.ndarray, b: np.ndarray):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError.for_shapes(name, a.shape, b.shape)


class Add(Function):
    def forward(self, a, b):
        _check_broadcast("add", a, b)
        self.shapes = a.shape, b.shape
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.shapes[0]), _unbroadcast(grad, self.shapes[1])


class Mul(Function):
    def forward(self, a, b):
        _check_broadcast("mul", a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return _unbroadcast(grad * self.b, self.a.shape), _unbroadcast(grad * self.a, self.b.shape)


class Div(Function):
    def forward(self, a, b):
        _check_broadcast("div", a, b)
        if np.any(b == 0):
            raise InvalidInputError("Division by zero")
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        return (_unbroadcast(grad / self.b, self.a.shape),
                _unbroadcast(-grad * self.a / (self.b * self.b), self.b.shape))


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError.for_shapes("matmul", a.shape, b.shape)
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class Relu(Function):
    def forward(self, x):
        # Subgradient at exactly zero is zero.
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad):
        return (grad * self.mask,)


class Exp(Function):
    def forward(self, x):
        with np.errstate(over="ignore"):
            self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x):
        if np.any(x <= 0):
            raise InvalidInputError("log of a non-positive value")
        self.x = x
        return np.log(x)

    def backward(self, grad):
        return (grad / self.x,)


class Sigmoid(Function):
    def forward(self, x):
        positive = x >= 0
        exp_neg = np.exp(-np.abs(x))
        self.out = np.where(positive, 1.0 / (1.0 + exp_neg), exp_neg / (1.0 + exp_neg))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Clip(Function):
    def forward(self, x, low, high):
        self.mask = (x > low) & (x < high)
        return np.clip(x, low, high)

    def backward(self, grad):
        return (grad * self.mask,)


class Sum(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(np.sum(x, axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Function):
    def forward(self, x, axis=None, keepdims=False):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        if x.size == 0:
            raise InvalidInputError("mean of an empty tensor")
        self.count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
        return np.asarray(np.mean(x, axis=axis, keepdims=keepdims))

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape) / self.count,)


class Softmax(Function):
    def forward(self, x, axis=-1):
        if x.ndim == 0 or x.shape[axis] == 0:
            raise InvalidInputError("softmax of an empty vector")
        shifted = np.exp(x - np.max(x, axis=axis, keepdims=True))
        self.axis = axis
        self.out = shifted / np.sum(shifted, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        inner = np.sum(grad * self.out, axis=self.axis, keepdims=True)
        return (self.out * (grad - inner),)


class LogSoftmax(Function):
    def forward(self, x, axis=-1):
        if x.ndim == 0 or x.shape[axis] == 0:
            raise InvalidInputError("log_softmax of an empty vector")
        shifted = x - np.max(x, axis=axis, keepdims=True)
        out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
        self.axis = axis
        self.softmax = np.exp(out)
        return out

    def backward(self, grad):
        return (grad - self.softmax * np.sum(grad, axis=self.axis, keepdims=True),)


class Concat(Function):
    def forward(self, *arrays, axis=0):
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError:
            raise DimensionError.for_shapes("concat", *[a.shape for a in arrays])
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return out

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class TakeRows(Function):
    def forward(self, x, indices=None):
        self.shape = x.shape
        self.indices = np.asarray(indices, dtype=np.int64)
        return x[self.indices]

    def backward(self, grad):
        full = np.zeros(self.shape)
        np.add.at(full, self.indices, grad)
        return (full,)


class SegmentSum(Function):
    def forward(self, x, segments=None, n_segments=0):
        self.segments = np.asarray(segments, dtype=np.int64)
        out = np.zeros((n_segments,) + x.shape[1:])
        # Fixed reduction order: np.add.at accumulates in index order.
        np.add.at(out, self.segments, x)
        return out

    def backward(self, grad):
        return (grad[self.segments],)


class Transpose(Function):
    def forward(self, x):
        return x.T

    def backward(self, grad):
        return (grad.T,)


class Reshape(Function):
    def forward(self, x, shape=None):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


# Kernel functions ###################################################################

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product of two 2-D tensors."""
    return MatMul.apply(a, b)


def relu(x: ArrayLike) -> Tensor:
    return Relu.apply(x)


def exp(x: ArrayLike) -> Tensor:
    return Exp.apply(x)


def log(x: ArrayLike) -> Tensor:
    return Log.apply(x)


def sigmoid(x: ArrayLike) -> Tensor:
    return Sigmoid.apply(x)


def clip(x: ArrayLike, low: float, high: float) -> Tensor:
    return Clip.apply(x, low=low, high=high)


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    """Softmax along the last axis, computed with max-subtraction."""
    return Softmax.apply(x, axis=axis)


def log_softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(x, axis=axis)


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def take_rows(x: ArrayLike, indices) -> Tensor:
    return TakeRows.apply(x, indices=indices)


def segment_sum(x: ArrayLike, segments, n_segments: int) -> Tensor:
    """Row i of the result is the sum of the rows of x whose segment id is i."""
    return SegmentSum.apply(x, segments=segments, n_segments=n_segments)


def transpose(x: ArrayLike) -> Tensor:
    return Transpose.apply(x)


def reshape(x: ArrayLike, shape) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def square_sum(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    return (x * x).sum()


def gaussian_sample(mu: ArrayLike, sigma: ArrayLike, noise: ArrayLike) -> Tensor:
    """
    Reparameterized draw mu + sigma * noise. The noise is treated as a constant,
    so gradients reach mu and sigma only.
    :raise DimensionError: if the three shapes differ
    :raise InvalidInputError: if sigma has a non-positive entry
    """
    mu, sigma = as_tensor(mu), as_tensor(sigma)
    noise = Tensor(as_tensor(noise).data)
    if not (mu.shape == sigma.shape == noise.shape):
        raise DimensionError.for_shapes("gaussian_sample", mu.shape, sigma.shape, noise.shape)
    if np.any(sigma.data <= 0):
        raise InvalidInputError("gaussian_sample needs strictly positive sigma")
    return mu + sigma * noise


def kl_diag_normal(mu: ArrayLike, sigma_sq: ArrayLike) -> Tensor:
    """
    KL(N(mu, diag(sigma_sq)) || N(0, I)) summed over all entries:
    0.5 * sum(mu^2 + sigma_sq - 1 - ln sigma_sq).
    """
    mu, sigma_sq = as_tensor(mu), as_tensor(sigma_sq)
    if mu.shape != sigma_sq.shape:
        raise DimensionError.for_shapes("kl_diag_normal", mu.shape, sigma_sq.shape)
    if np.any(sigma_sq.data <= 0):
        raise InvalidInputError("kl_diag_normal needs strictly positive variance")
    return 0.5 * (mu * mu + sigma_sq - 1.0 - log(sigma_sq)).sum()


def _check_ratio(p: float):
    if not 0.0 <= p < 1.0:
        raise InvalidInputError(f"Dropout ratio must be in [0, 1), got {p}")


def dropout(x: ArrayLike, p: float, training: bool, rng: "RngStream") -> Tensor:
    """
    Zeroes each entry with probability p and scales survivors by 1/(1-p) in training
    mode; identity in evaluation mode or when p is 0.
    """
    _check_ratio(p)
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * Tensor(mask)


def node_dropout(x: ArrayLike, p: float, training: bool, rng: "RngStream") -> Tensor:
    """Same as dropout but drops whole rows (nodes) at once."""
    _check_ratio(p)
    x = as_tensor(x)
    if not training or p == 0.0:
        return x
    mask = (rng.random((x.shape[0],) + (1,) * (x.ndim - 1)) >= p) / (1.0 - p)
    return x * Tensor(mask)


# Random streams #####################################################################

class RngStream:
    """
    Named, seedable random stream. The generator is seeded from (seed, crc32(name))
    so that streams with different names never share draws.
    """

    def __init__(self, name: str, seed: int):
        self.name = name
        self.seed = int(seed)
        sequence = np.random.SeedSequence([self.seed, zlib.crc32(name.encode("utf-8"))])
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self):
        return f"RngStream({self.name!r}, seed={self.seed})"

    def normal(self, size, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self._generator.normal(loc, scale, size)

    def random(self, size) -> np.ndarray:
        return self._generator.random(size)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._generator.integers(low, high, size)

    def bernoulli(self, p, size=None) -> np.ndarray:
        return (self._generator.random(size if size is not None else np.shape(p)) < p).astype(np.float64)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._generator.choice(n, size=size, replace=replace)

    def permutation(self, values) -> np.ndarray:
        return self._generator.permutation(values)

    def get_state(self) -> dict:
        return self._generator.bit_generator.state

    def set_state(self, state: dict):
        self._generator.bit_generator.state = state


class RngStreams:
    """Registry of named streams derived from one run seed, created on first use."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, RngStream] = {}

    def __getitem__(self, name: str) -> RngStream:
        if name not in self._streams:
            self._streams[name] = RngStream(name, self.seed)
        return self._streams[name]

    def __contains__(self, name: str) -> bool:
        return name in self._streams

    def states(self) -> Dict[str, dict]:
        return {name: stream.get_state() for name, stream in sorted(self._streams.items())}

    def restore(self, states: Mapping[str, dict]):
        for name, state in states.items():
            self[name].set_state(state)


# Parameters and optimizer ###########################################################

class ModelParams(Mapping):
    """Ordered, immutable mapping of parameter name -> leaf tensor requiring gradients."""

    def __init__(self, tensors: Mapping[str, ArrayLike]):
        self._tensors = OrderedDict(
            (name, Tensor(as_tensor(value).data, requires_grad=True)) for name, value in tensors.items())

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self):
        shapes = ", ".join(f"{name}={tensor.shape}" for name, tensor in self._tensors.items())
        return f"ModelParams({shapes})"

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: tensor.shape for name, tensor in self._tensors.items()}

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self._tensors.items()}

    def replace(self, updates: Mapping[str, ArrayLike]) -> "ModelParams":
        merged = OrderedDict(self._tensors)
        merged.update(updates)
        return ModelParams(merged)


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ModelParams, grads: Mapping[str, np.ndarray],
              state: AdamState) -> Tuple[ModelParams, AdamState]:
    """
    One Adam update with bias correction. Inputs are not mutated.
    :param params: current parameters
    :param grads: gradient array per parameter name
    :param state: optimizer state; moments are created on the first step
    :return: (updated params, updated state)
    :raise DimensionError: if a gradient or moment does not match its parameter
    """
    step = state.step + 1
    first, second, updates = {}, {}, {}
    for name, tensor in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        m = state.first_moments.get(name, np.zeros_like(tensor.data))
        v = state.second_moments.get(name, np.zeros_like(tensor.data))
        if not (grad.shape == m.shape == v.shape == tensor.shape):
            raise DimensionError.for_shapes(f"adam_step[{name}]", tensor.shape, grad.shape, m.shape)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        first[name], second[name] = m, v
        if state.learning_rate == 0.0:
            continue
        m_hat = m / (1.0 - state.beta1 ** step)
        v_hat = v / (1.0 - state.beta2 ** step)
        updates[name] = tensor.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)

    new_state = AdamState(learning_rate=state.learning_rate, beta1=state.beta1, beta2=state.beta2,
                          epsilon=state.epsilon, step=step, first_moments=first, second_moments=second)
    return (params.replace(updates) if updates else params), new_state


def glorot_uniform(shape: Tuple[int, ...], rng: RngStream) -> np.ndarray:
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)
