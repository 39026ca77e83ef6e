# svl/autodiff.py
"""
Minimal reverse-mode automatic differentiation over dense float64 tensors.

Operations record onto a per-thread tape when any input requires a gradient.
``backward`` walks the tape once, in reverse recording order, and frees it.
Spike nonlinearities supply their own local gradient through ``apply_custom``.

Broadcasting is limited to scalar-vs-tensor; callers reshape explicitly.
"""

import itertools
import logging
import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import (
    EW_ADD,
    EW_KINDS,
    EW_MUL,
    EW_SCALE,
    EW_SQUARE,
    EW_SUB,
    NORM_EPS,
    REDUCE_KINDS,
    REDUCE_MAX,
    REDUCE_MEAN,
)
from .exceptions import DegenerateInputError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

_node_ids = itertools.count(1)
_local = threading.local()

Scalar = Union[int, float]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    Immutable n-dimensional float64 array taking part in the autodiff graph.

    ``data`` is read-only; every operation returns a new Tensor. ``grad`` is
    filled in on leaves by ``backward``.
    """

    __slots__ = ("shape", "data", "requires_grad", "grad", "node_id", "_tape")

    def __init__(self, shape: Sequence[int], values, requires_grad: bool = False):
        shape = tuple(int(d) for d in shape)
        if any(d < 1 for d in shape):
            raise ShapeError(f"all dimensions must be >= 1, got {list(shape)}")

        data = np.array(values, dtype=np.float64)
        expected = math.prod(shape)
        if data.size != expected:
            raise ShapeError(
                f"{data.size} values cannot fill shape {list(shape)} ({expected} expected)"
            )
        data = data.reshape(shape)
        data.flags.writeable = False

        self.shape = shape
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.node_id = next(_node_ids)
        self._tape: Optional["Tape"] = None

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got {list(self.shape)}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{flag})"

    # Operator sugar; all of it routes through ew/matmul

    def __add__(self, other):
        return ew(EW_ADD, self, other)

    def __radd__(self, other):
        return ew(EW_ADD, self, other)

    def __sub__(self, other):
        return ew(EW_SUB, self, other)

    def __mul__(self, other):
        return ew(EW_MUL, self, other)

    def __rmul__(self, other):
        return ew(EW_MUL, self, other)

    def __neg__(self):
        return ew(EW_SCALE, self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor_new(shape: Sequence[int], values, requires_grad: bool = False) -> Tensor:
    """Create a leaf tensor; ``values`` are read in row-major order."""
    return Tensor(shape, values, requires_grad=requires_grad)


def tensor(values, requires_grad: bool = False) -> Tensor:
    """Create a leaf tensor, taking the shape from an array-like."""
    array = np.asarray(values, dtype=np.float64)
    return Tensor(array.shape, array, requires_grad=requires_grad)


def zeros(shape: Sequence[int], requires_grad: bool = False) -> Tensor:
    return Tensor(shape, np.zeros(tuple(shape)), requires_grad=requires_grad)


def as_tensor(value) -> Tensor:
    """Pass tensors through; wrap anything else as a constant."""
    if isinstance(value, Tensor):
        return value
    return tensor(value)


def detach(t: Tensor) -> Tensor:
    return Tensor(t.shape, t.data)


# ============================================================================
# Tape
# ============================================================================


@dataclass
class TapeEntry:
    name: str
    inputs: Tuple[Tensor, ...]
    output_id: int
    rule: BackwardRule


@dataclass
class Tape:
    """Ordered record of operations for one forward pass."""

    entries: List[TapeEntry] = field(default_factory=list)
    released: bool = False
    _produced: set = field(default_factory=set, repr=False)

    def record(self, name: str, inputs: Sequence[Tensor], output: Tensor, rule: BackwardRule):
        self.entries.append(TapeEntry(name, tuple(inputs), output.node_id, rule))
        self._produced.add(output.node_id)
        output._tape = self

    def is_topological(self) -> bool:
        """Every recorded input is a leaf or the output of an earlier entry."""
        seen = set()
        for entry in self.entries:
            for t in entry.inputs:
                if t.node_id in self._produced and t.node_id not in seen:
                    return False
            seen.add(entry.output_id)
        return True

    def release(self):
        self.entries.clear()
        self._produced.clear()
        self.released = True

    def __len__(self) -> int:
        return len(self.entries)


def current_tape() -> Tape:
    """
    The calling thread's active tape, created on first use.

    Recording only stops with ``backward`` or ``fresh_tape``; a forward pass
    that is never differentiated belongs under ``no_grad``.
    """
    tape = getattr(_local, "tape", None)
    if tape is None or tape.released:
        tape = Tape()
        _local.tape = tape
    return tape


def fresh_tape() -> Tape:
    """Drop any unconsumed recording in the calling thread and start a new tape."""
    tape = getattr(_local, "tape", None)
    if tape is not None and not tape.released:
        if len(tape):
            logger.debug("discarding %d tape entries never passed to backward", len(tape))
        tape.release()
    _local.tape = Tape()
    return _local.tape


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording in the calling thread (inference)."""
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


def _result(name: str, inputs: Sequence[Tensor], values: np.ndarray, rule: BackwardRule) -> Tensor:
    needs_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(values.shape, values, requires_grad=needs_grad)
    if needs_grad:
        current_tape().record(name, inputs, out, rule)
    return out


def backward(loss: Tensor) -> Dict[int, np.ndarray]:
    """
    Accumulate gradients of a scalar loss into every reachable leaf.

    Visits each tape entry exactly once, newest first. Leaves that require a
    gradient get ``.grad`` set; leaves the loss does not depend on keep
    ``grad = None``. The tape is released afterwards.

    Returns:
        Map from node id to gradient array, covering leaves and interior nodes
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {list(loss.shape)}")

    grads: Dict[int, np.ndarray] = {loss.node_id: np.ones(loss.shape)}
    if not loss.requires_grad:
        return {}

    tape = loss._tape
    if tape is None:
        loss.grad = _frozen(grads[loss.node_id])
        return grads
    if tape.released:
        raise ShapeError("loss tape was already consumed by an earlier backward")

    leaves: Dict[int, Tensor] = {}
    for entry in reversed(tape.entries):
        g = grads.get(entry.output_id)
        if g is None:
            continue
        for t, input_grad in zip(entry.inputs, entry.rule(g)):
            if input_grad is None or not t.requires_grad:
                continue
            input_grad = np.asarray(input_grad, dtype=np.float64)
            if input_grad.shape != t.shape:
                input_grad = input_grad.reshape(t.shape)
            previous = grads.get(t.node_id)
            grads[t.node_id] = input_grad if previous is None else previous + input_grad
            if t._tape is not tape:
                leaves[t.node_id] = t

    for node_id, leaf in leaves.items():
        leaf.grad = _frozen(grads[node_id])

    logger.debug("backward visited %d tape entries, %d leaves", len(tape), len(leaves))
    tape.release()
    return grads


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64)
    out.flags.writeable = False
    return out


# ============================================================================
# Linear algebra
# ============================================================================


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of a (...×m×k, batched left operand allowed) and b (k×n).

    Backward: grad_a = grad·bᵀ, grad_b = aᵀ·grad summed over the batch.
    """
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {list(a.shape)} @ {list(b.shape)}")

    def rule(g):
        grad_a = g @ b.data.T
        grad_b = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return grad_a, grad_b

    return _result("matmul", (a, b), a.data @ b.data, rule)


def batch_matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched product where both operands carry the same leading dims."""
    if (
        a.ndim < 2
        or a.ndim != b.ndim
        or a.shape[:-2] != b.shape[:-2]
        or a.shape[-1] != b.shape[-2]
    ):
        raise ShapeError(f"batch_matmul shapes differ: {list(a.shape)} @ {list(b.shape)}")

    def rule(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return _result("batch_matmul", (a, b), np.matmul(a.data, b.data), rule)


# ============================================================================
# Elementwise
# ============================================================================


def ew(op_kind: str, a: Tensor, b: Union[Tensor, Scalar, None] = None) -> Tensor:
    """
    Elementwise add/sub/mul/scale/square.

    ``b`` must match ``a``'s shape, or be a python scalar or a 0-d tensor
    broadcast over every element. ``scale`` takes a python scalar; ``square``
    ignores ``b``.
    """
    if op_kind not in EW_KINDS:
        raise ValueError(f"unknown elementwise op '{op_kind}'")

    if op_kind == EW_SQUARE:
        return _result("square", (a,), a.data * a.data, lambda g: (2.0 * a.data * g,))

    if op_kind == EW_SCALE:
        if isinstance(b, Tensor):
            raise ShapeError("scale takes a python scalar; use mul for tensors")
        factor = float(b)
        return _result("scale", (a,), a.data * factor, lambda g: (g * factor,))

    if not isinstance(b, Tensor):
        constant = float(b)
        if op_kind == EW_ADD:
            return _result("add", (a,), a.data + constant, lambda g: (g,))
        if op_kind == EW_SUB:
            return _result("sub", (a,), a.data - constant, lambda g: (g,))
        return _result("mul", (a,), a.data * constant, lambda g: (g * constant,))

    if b.shape != a.shape and b.shape != ():
        raise ShapeError(f"{op_kind} shapes differ: {list(a.shape)} vs {list(b.shape)}")
    broadcast = b.shape != a.shape

    def fold(grad_b):
        return grad_b.sum() if broadcast else grad_b

    if op_kind == EW_ADD:
        return _result("add", (a, b), a.data + b.data, lambda g: (g, fold(g)))
    if op_kind == EW_SUB:
        return _result("sub", (a, b), a.data - b.data, lambda g: (g, fold(-g)))
    return _result(
        "mul", (a, b), a.data * b.data, lambda g: (g * b.data, fold(g * a.data))
    )


def add(a: Tensor, b) -> Tensor:
    return ew(EW_ADD, a, b)


def sub(a: Tensor, b) -> Tensor:
    return ew(EW_SUB, a, b)


def mul(a: Tensor, b) -> Tensor:
    return ew(EW_MUL, a, b)


def scale(a: Tensor, factor: Scalar) -> Tensor:
    return ew(EW_SCALE, a, factor)


def square(a: Tensor) -> Tensor:
    return ew(EW_SQUARE, a)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a length-C vector to every row along the trailing axis of x."""
    if b.ndim != 1 or x.ndim < 1 or x.shape[-1] != b.shape[0]:
        raise ShapeError(f"bias {list(b.shape)} does not fit trailing axis of {list(x.shape)}")
    width = b.shape[0]
    return _result(
        "add_bias", (x, b), x.data + b.data, lambda g: (g, g.reshape(-1, width).sum(axis=0))
    )


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)
    return _result("exp", (t,), out, lambda g: (g * out,))


def apply_custom(name: str, t: Tensor, values: np.ndarray, local_grad: np.ndarray) -> Tensor:
    """Record a unary op whose backward is ``grad · local_grad``."""
    values = np.asarray(values, dtype=np.float64)
    local_grad = np.asarray(local_grad, dtype=np.float64)
    if values.shape != t.shape or local_grad.shape != t.shape:
        raise ShapeError(f"{name}: custom rule shapes must match input {list(t.shape)}")
    return _result(name, (t,), values, lambda g: (g * local_grad,))


# ============================================================================
# Reductions and normalizations
# ============================================================================


def _check_axis(t: Tensor, axis: int) -> int:
    if not -t.ndim <= axis < t.ndim:
        raise ShapeError(f"axis {axis} out of range for rank-{t.ndim} tensor")
    return axis % t.ndim


def reduce(t: Tensor, axis: int, kind: str) -> Tensor:
    """
    Sum, mean, or max along one axis.

    Max routes the whole gradient to the first maximal element along the axis.
    """
    if kind not in REDUCE_KINDS:
        raise ValueError(f"unknown reduction '{kind}'")
    axis = _check_axis(t, axis)
    n = t.shape[axis]

    if kind == REDUCE_MAX:
        winners = np.expand_dims(np.argmax(t.data, axis=axis), axis)
        mask = np.zeros(t.shape)
        np.put_along_axis(mask, winners, 1.0, axis=axis)
        return _result(
            "max",
            (t,),
            np.max(t.data, axis=axis),
            lambda g: (np.expand_dims(g, axis) * mask,),
        )

    factor = 1.0 / n if kind == REDUCE_MEAN else 1.0
    values = t.data.sum(axis=axis) * factor
    return _result(
        kind,
        (t,),
        values,
        lambda g: (np.broadcast_to(np.expand_dims(g, axis) * factor, t.shape),),
    )


def sum_all(t: Tensor) -> Tensor:
    return reduce(reshape(t, (t.size,)), 0, "sum")


def mean(t: Tensor, axis: int) -> Tensor:
    return reduce(t, axis, REDUCE_MEAN)


def normalize_l2(t: Tensor, axis: int) -> Tensor:
    """Scale every slice along ``axis`` to unit L2 norm."""
    axis = _check_axis(t, axis)
    norms = np.sqrt(np.sum(t.data * t.data, axis=axis, keepdims=True))
    if np.any(norms <= NORM_EPS):
        raise DegenerateInputError("cannot normalize a slice with near-zero L2 norm")
    y = t.data / norms

    def rule(g):
        return ((g - y * np.sum(g * y, axis=axis, keepdims=True)) / norms,)

    return _result("normalize_l2", (t,), y, rule)


def _check_finite(t: Tensor, name: str):
    if not np.all(np.isfinite(t.data)):
        raise NonFiniteError(f"{name} received NaN or Inf entries")


def softmax(t: Tensor, axis: int) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    _check_finite(t, "softmax")
    axis = _check_axis(t, axis)
    shifted = np.exp(t.data - np.max(t.data, axis=axis, keepdims=True))
    s = shifted / np.sum(shifted, axis=axis, keepdims=True)

    def rule(g):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return _result("softmax", (t,), s, rule)


def log_softmax(t: Tensor, axis: int) -> Tensor:
    _check_finite(t, "log_softmax")
    axis = _check_axis(t, axis)
    shifted = t.data - np.max(t.data, axis=axis, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - log_z
    probs = np.exp(out)

    def rule(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return _result("log_softmax", (t,), out, rule)


# ============================================================================
# Shape plumbing
# ============================================================================


def reshape(t: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if math.prod(shape) != t.size:
        raise ShapeError(f"cannot reshape {list(t.shape)} into {list(shape)}")
    return _result("reshape", (t,), t.data.reshape(shape), lambda g: (g.reshape(t.shape),))


def swap_last(t: Tensor) -> Tensor:
    """Transpose the two trailing axes."""
    if t.ndim < 2:
        raise ShapeError("swap_last needs rank >= 2")
    return _result(
        "swap_last", (t,), np.swapaxes(t.data, -1, -2), lambda g: (np.swapaxes(g, -1, -2),)
    )


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    axis = _check_axis(tensors[0], axis)
    sizes = [t.shape[axis] for t in tensors]
    values = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result("concat", tuple(tensors), values, rule)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("stack needs at least one tensor")
    shape = tensors[0].shape
    if any(t.shape != shape for t in tensors):
        raise ShapeError("stack needs tensors of identical shape")
    values = np.stack([t.data for t in tensors], axis=axis)

    def rule(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result("stack", tuple(tensors), values, rule)


def slice_axis(t: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = _check_axis(t, axis)
    if not 0 <= start < stop <= t.shape[axis]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis size {t.shape[axis]}")
    index = [slice(None)] * t.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def rule(g):
        full = np.zeros(t.shape)
        full[index] = g
        return (full,)

    return _result("slice", (t,), t.data[index], rule)


# ============================================================================
# Gradient checking
# ============================================================================


@dataclass
class GradCheckReport:
    """Per-parameter relative error between autodiff and central differences."""

    errors: List[float]

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_error < tolerance


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    diff = np.linalg.norm(analytic - numeric)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom < NORM_EPS:
        return float(diff)
    return float(diff / denom)


def grad_check(
    fn: Callable[..., Tensor], params: Sequence, eps: float = 1e-5
) -> GradCheckReport:
    """
    Compare autodiff gradients with central finite differences.

    ``fn`` takes one Tensor per parameter and returns a scalar Tensor. The
    checked path must be smooth (no spike nonlinearity on it).
    """
    arrays = [np.array(p.data if isinstance(p, Tensor) else p, dtype=np.float64) for p in params]
    leaves = [Tensor(a.shape, a, requires_grad=True) for a in arrays]
    backward(fn(*leaves))
    analytic = [leaf.grad if leaf.grad is not None else np.zeros(leaf.shape) for leaf in leaves]

    errors = []
    with no_grad():
        for i, base in enumerate(arrays):
            numeric = np.zeros(base.shape)
            for j in range(base.size):
                shifted = []
                for sign in (1.0, -1.0):
                    moved = base.copy()
                    moved.flat[j] += sign * eps
                    args = [tensor(a) for a in arrays]
                    args[i] = tensor(moved)
                    shifted.append(fn(*args).item())
                numeric.flat[j] = (shifted[0] - shifted[1]) / (2.0 * eps)
            errors.append(_relative_error(np.asarray(analytic[i]), numeric))
    return GradCheckReport(errors)
