"""Scalar reverse-mode differentiation on an append-only tape.

Each ``Node`` records its value and the local partial derivative with
respect to each parent at creation time. ``Tape.backward`` then sweeps the
tape once in reverse creation order.

Arithmetic helpers accept plain floats as well as nodes and only touch the
tape when a node is involved, so the same forecasting code runs with or
without gradients.
"""

import math
from collections.abc import Iterable, Sequence

from ac_forecast.errors import DifferentiationError

DEFAULT_SQRT_EPS = 1e-12


class Node:
    """A scalar value on a tape."""

    __slots__ = ("adjoint", "index", "name", "parents", "tape", "value")

    def __init__(self, tape: "Tape", value: float, parents: tuple, name: str | None = None):
        self.tape = tape
        self.value = float(value)
        self.parents = parents
        self.adjoint = 0.0
        self.name = name
        self.index = len(tape.nodes)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Node({self.value!r}{label})"

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
        return self.tape.push(-self.value, ((self, -1.0),))

    def __pow__(self, exponent):
        if exponent != 2:
            raise DifferentiationError(f"Only squaring is supported, got power {exponent}")
        return mul(self, self)


class Tape:
    """Ordered record of nodes in creation order."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.parameters: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def push(self, value: float, parents: tuple, name: str | None = None) -> Node:
        """Append a node whose parents must already be on this tape."""
        node = Node(self, value, parents, name)
        for parent, _ in parents:
            if parent.tape is not self or parent.index >= node.index:
                raise DifferentiationError("Parent node is not earlier on this tape")
        self.nodes.append(node)
        return node

    def lift(self, value: float) -> Node:
        """Record a constant."""
        return self.push(value, ())

    def parameter(self, value: float, name: str) -> Node:
        """Record a leaf whose gradient ``backward`` reports."""
        node = self.push(value, (), name)
        self.parameters.append(node)
        return node

    def backward(self, root: Node) -> dict[str, float]:
        """Propagate adjoints from ``root`` and return parameter gradients.

        Adjoints are reset at the start of every pass, so repeated calls do
        not accumulate.

        Raises:
            DifferentiationError: If ``root`` belongs to another tape.

        """
        if not isinstance(root, Node) or root.tape is not self:
            raise DifferentiationError("Root must be a node on this tape")
        for node in self.nodes:
            node.adjoint = 0.0
        root.adjoint = 1.0
        for node in reversed(self.nodes[: root.index + 1]):
            adjoint = node.adjoint
            if adjoint == 0.0:
                continue
            for parent, local in node.parents:
                parent.adjoint += adjoint * local
        return {p.name: p.adjoint for p in self.parameters}


def value_of(x) -> float:
    """Plain float value of a node or number."""
    return x.value if isinstance(x, Node) else float(x)


def _tape_of(*items) -> "Tape | None":
    for item in items:
        if isinstance(item, Node):
            return item.tape
    return None


def add(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return float(a) + float(b)
    parents = tuple((x, 1.0) for x in (a, b) if isinstance(x, Node))
    return tape.push(value_of(a) + value_of(b), parents)


def sub(a, b):
    tape = _tape_of(a, b)
    if tape is None:
        return float(a) - float(b)
    parents = []
    if isinstance(a, Node):
        parents.append((a, 1.0))
    if isinstance(b, Node):
        parents.append((b, -1.0))
    return tape.push(value_of(a) - value_of(b), tuple(parents))


def mul(a, b):
    tape = _tape_of(a, b)
    va, vb = value_of(a), value_of(b)
    if tape is None:
        return va * vb
    parents = []
    if isinstance(a, Node):
        parents.append((a, vb))
    if isinstance(b, Node):
        parents.append((b, va))
    return tape.push(va * vb, tuple(parents))


def div(a, b):
    va, vb = value_of(a), value_of(b)
    if vb == 0.0:
        raise DifferentiationError("Division by zero")
    tape = _tape_of(a, b)
    if tape is None:
        return va / vb
    parents = []
    if isinstance(a, Node):
        parents.append((a, 1.0 / vb))
    if isinstance(b, Node):
        parents.append((b, -va / (vb * vb)))
    return tape.push(va / vb, tuple(parents))


def sqrt(a):
    """Square root; the derivative at exactly zero is taken as zero."""
    va = value_of(a)
    if va < 0.0:
        raise DifferentiationError(f"Square root of negative value {va}")
    out = math.sqrt(va)
    if not isinstance(a, Node):
        return out
    local = 0.5 / out if out > 0.0 else 0.0
    return a.tape.push(out, ((a, local),))


def abs_smooth(a, eps: float = DEFAULT_SQRT_EPS):
    """``sqrt(a**2 + eps)``, a differentiable stand-in for ``|a|``."""
    va = value_of(a)
    out = math.sqrt(va * va + eps)
    if not isinstance(a, Node):
        return out
    return a.tape.push(out, ((a, va / out),))


def sum_nodes(items: Iterable):
    """Sum of nodes and numbers recorded as a single node."""
    items = list(items)
    tape = _tape_of(*items)
    total = math.fsum(value_of(x) for x in items)
    if tape is None:
        return total
    parents = tuple((x, 1.0) for x in items if isinstance(x, Node))
    return tape.push(total, parents)


def linear_combination(coefficients: Sequence, values: Sequence):
    """``sum(c * x)`` recorded as one node.

    Either side of each product may be a node or a number.
    """
    tape = _tape_of(*coefficients, *values)
    total = 0.0
    parents = []
    for c, x in zip(coefficients, values, strict=True):
        vc, vx = value_of(c), value_of(x)
        total += vc * vx
        if tape is not None:
            if isinstance(c, Node):
                parents.append((c, vx))
            if isinstance(x, Node):
                parents.append((x, vc))
    if tape is None:
        return total
    return tape.push(total, tuple(parents))


def weighted_norm(diffs: Sequence, weights: Sequence[float], eps: float = DEFAULT_SQRT_EPS):
    """``sqrt(sum(w * d**2) + eps)`` recorded as one node.

    The ``eps`` inside the radical keeps the gradient finite at ``d = 0``.
    """
    values = [value_of(d) for d in diffs]
    squared = 0.0
    for w, v in zip(weights, values, strict=True):
        squared += w * v * v
    out = math.sqrt(squared + eps)
    tape = _tape_of(*diffs)
    if tape is None:
        return out
    parents = tuple(
        (d, w * v / out)
        for d, w, v in zip(diffs, weights, values, strict=True)
        if isinstance(d, Node)
    )
    return tape.push(out, parents)


def weighted_distance(a: Sequence, b: Sequence, weights: Sequence[float], eps: float = DEFAULT_SQRT_EPS):
    """``sqrt(sum(w * (a - b)**2) + eps)`` recorded as one node."""
    diffs = [value_of(x) - value_of(y) for x, y in zip(a, b, strict=True)]
    squared = 0.0
    for w, v in zip(weights, diffs, strict=True):
        squared += w * v * v
    out = math.sqrt(squared + eps)
    tape = _tape_of(*a, *b)
    if tape is None:
        return out
    parents = []
    for x, y, w, v in zip(a, b, weights, diffs, strict=True):
        local = w * v / out
        if isinstance(x, Node):
            parents.append((x, local))
        if isinstance(y, Node):
            parents.append((y, -local))
    return tape.push(out, tuple(parents))
