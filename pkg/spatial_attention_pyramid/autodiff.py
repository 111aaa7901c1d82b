"""Tape-based reverse-mode automatic differentiation.

Every differentiable operation is registered once as a pair of numpy
functions: ``forward(*values, **attributes) -> (value, saved)`` and
``backward(grad, saved) -> tuple of parent gradients``. A Tape records the
nodes in creation order, so parents always precede their consumers and the
backward pass simply walks the tape in reverse.

Usage examples
--------------

.. code:: python

    from spatial_attention_pyramid.autodiff import Tape, Parameter, grad_reverse
    from spatial_attention_pyramid import operations as F

    weight = Parameter("weight", np.ones((1, 2)))
    tape = Tape()
    x = tape.constant(np.array([2.0, 3.0]))
    y = F.fully_connected(x, tape.watch(weight))
    loss = F.sum(grad_reverse(y, lam=0.1))
    tape.backward(loss)
    weight.grad  # [[-0.2, -0.3]]
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigurationError, ShapeError

__all__ = [
    "Parameter",
    "Node",
    "Operation",
    "Variable",
    "Tape",
    "OPERATIONS",
    "register_operation",
    "grad_reverse",
    "GradientReport",
    "finite_difference_check"
]


class Parameter:
    """Learnable tensor with a gradient buffer and a stable name."""

    def __init__(self, name: str, value: np.ndarray):
        """Create a new parameter.

        Parameters
        ----------
        name: str,
            Identifier used in checkpoints, unique within a model.
        value: np.ndarray,
            Initial value. The gradient buffer is created with its shape.
        """
        self.name = name
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> Tuple[int, ...]:
        """Return the parameter shape."""
        return self.value.shape

    def zero_grad(self):
        """Reset the gradient buffer."""
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return "Parameter({name}, shape={shape})".format(
            name=self.name,
            shape=self.shape
        )


@dataclass
class Node:
    """Record of one value computed on a tape."""
    op: str
    parents: Tuple[int, ...]
    value: np.ndarray
    saved: Dict[str, Any] = field(default_factory=dict)
    parameter: Optional[Parameter] = None


@dataclass(frozen=True)
class Operation:
    """A differentiable operation: forward values and vector-Jacobian product."""
    name: str
    forward: Callable[..., Tuple[np.ndarray, Dict[str, Any]]]
    backward: Callable[[np.ndarray, Dict[str, Any]], Tuple[Optional[np.ndarray], ...]]


OPERATIONS: Dict[str, Operation] = {}


def register_operation(name: str, forward: Callable, backward: Callable) -> Operation:
    """Register a differentiable operation under given name.

    Raises
    ------
    ConfigurationError:
        If an operation with the same name is already registered.
    """
    if name in OPERATIONS:
        raise ConfigurationError(
            "Operation {name} is already registered.".format(name=name)
        )
    OPERATIONS[name] = Operation(name, forward, backward)
    return OPERATIONS[name]


class Variable:
    """Handle to a node of a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def node(self) -> Node:
        """Return the node this variable refers to."""
        return self.tape.nodes[self.index]

    @property
    def value(self) -> np.ndarray:
        """Return the forward value."""
        return self.node.value

    @property
    def shape(self) -> Tuple[int, ...]:
        """Return the forward value shape."""
        return self.value.shape

    @property
    def ndim(self) -> int:
        """Return the forward value rank."""
        return self.value.ndim

    def _lift(self, other) -> "Variable":
        if isinstance(other, Variable):
            return other
        return self.tape.constant(np.full(self.shape, other, dtype=self.value.dtype))

    def __add__(self, other) -> "Variable":
        return self.tape.apply("add", self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Variable":
        return self.tape.apply("sub", self, self._lift(other))

    def __rsub__(self, other) -> "Variable":
        return self.tape.apply("sub", self._lift(other), self)

    def __mul__(self, other) -> "Variable":
        if isinstance(other, Variable):
            return self.tape.apply("mul", self, other)
        return self.tape.apply("scale", self, factor=float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Variable":
        return self.tape.apply("scale", self, factor=-1.0)

    def __repr__(self) -> str:
        return "Variable({op}, shape={shape})".format(
            op=self.node.op,
            shape=self.shape
        )


class Tape:
    """Ordered record of the nodes of one forward computation.

    A tape is single-owner: build it, call backward once, drop it.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self._watched: Dict[int, int] = {}

    def __len__(self) -> int:
        """Return the number of recorded nodes."""
        return len(self.nodes)

    def _append(self, node: Node) -> Variable:
        self.nodes.append(node)
        return Variable(self, len(self.nodes) - 1)

    def constant(self, value: np.ndarray) -> Variable:
        """Return a leaf that receives no gradient."""
        return self._append(Node("constant", (), np.asarray(value)))

    def watch(self, parameter: Parameter) -> Variable:
        """Return the leaf of given parameter, recording it at first use."""
        if id(parameter) not in self._watched:
            self._watched[id(parameter)] = self._append(Node(
                "parameter",
                (),
                parameter.value,
                parameter=parameter
            )).index
        return Variable(self, self._watched[id(parameter)])

    def parameters(self) -> List[Parameter]:
        """Return the parameters watched by this tape, in recording order."""
        return [
            self.nodes[index].parameter
            for index in sorted(self._watched.values())
        ]

    def apply(self, op: str, *inputs: Variable, **attributes) -> Variable:
        """Run a registered operation on given inputs and record it.

        Raises
        ------
        ConfigurationError:
            If the operation is unknown.
        ValueError:
            If an input belongs to another tape.
        """
        if op not in OPERATIONS:
            raise ConfigurationError(
                "Unknown operation {op}.".format(op=op)
            )
        for variable in inputs:
            if variable.tape is not self:
                raise ValueError(
                    "Operation {op} received a variable recorded on another tape.".format(
                        op=op
                    )
                )
        value, saved = OPERATIONS[op].forward(
            *(variable.value for variable in inputs),
            **attributes
        )
        return self._append(Node(
            op,
            tuple(variable.index for variable in inputs),
            value,
            saved
        ))

    def backward(self, loss: Variable) -> Dict[str, np.ndarray]:
        """Propagate the gradient of a scalar loss back to every watched parameter.

        Gradients are added to each ``Parameter.grad`` buffer.

        Parameters
        ----------
        loss: Variable,
            Scalar node of this tape.

        Raises
        ------
        ShapeError:
            If the loss is not a scalar.

        Returns
        -------
        Dictionary mapping parameter names to the gradient of this loss.
        """
        if loss.tape is not self:
            raise ValueError("The loss was recorded on another tape.")
        if loss.ndim != 0:
            raise ShapeError(
                "Backward needs a scalar loss, got shape {shape}.".format(
                    shape=loss.shape
                )
            )
        grads: List[Optional[np.ndarray]] = [None]*len(self.nodes)
        grads[loss.index] = np.ones_like(loss.value)
        gradients = {}
        for index in range(loss.index, -1, -1):
            grad = grads[index]
            if grad is None:
                continue
            node = self.nodes[index]
            if node.parameter is not None:
                node.parameter.grad = node.parameter.grad + grad
                gradients[node.parameter.name] = grad
                continue
            if not node.parents:
                continue
            parent_grads = OPERATIONS[node.op].backward(grad, node.saved)
            for parent, parent_grad in zip(node.parents, parent_grads):
                if parent_grad is None:
                    continue
                if grads[parent] is None:
                    grads[parent] = parent_grad
                else:
                    grads[parent] = grads[parent] + parent_grad
        return gradients


def _grad_reverse_forward(x: np.ndarray, lam: float):
    return x, {"lam": lam}


def _grad_reverse_backward(grad: np.ndarray, saved: Dict):
    return (-saved["lam"]*grad,)


register_operation("grad_reverse", _grad_reverse_forward, _grad_reverse_backward)


def grad_reverse(x: Variable, lam: float) -> Variable:
    """Return the gradient reversal of x: identity forward, −λ·gradient backward.

    Raises
    ------
    ConfigurationError:
        If λ is negative.
    """
    if lam < 0:
        raise ConfigurationError(
            "Gradient reversal factor must be non-negative, got {lam}.".format(lam=lam)
        )
    return x.tape.apply("grad_reverse", x, lam=float(lam))


@dataclass
class GradientReport:
    """Outcome of a finite-difference gradient check."""
    max_relative_error: float
    errors: Dict[str, float]
    failing: List[str]
    samples: int

    @property
    def passed(self) -> bool:
        """Return whether every checked parameter is within tolerance."""
        return not self.failing


def finite_difference_check(
    loss_function: Callable[[Tape], Variable],
    parameters: Sequence[Parameter],
    epsilon: float = 1e-5,
    tolerance: float = 1e-6,
    samples: int = 16,
    floor: float = 1e-3,
    seed: int = 0
) -> GradientReport:
    """Compare analytic gradients with central finite differences.

    Parameters
    ----------
    loss_function: Callable[[Tape], Variable],
        Builds the scalar loss on the given fresh tape. It must be
        deterministic, so any batch normalisation should run in eval mode.
    parameters: Sequence[Parameter],
        Parameters whose gradients are checked.
    epsilon: float = 1e-5,
        Perturbation used by the central differences.
    tolerance: float = 1e-6,
        Largest accepted relative error. Entries whose analytic and numeric
        gradients are both below the floor are held to the absolute bound
        tolerance·floor instead, 1e-9 with the defaults.
    samples: int = 16,
        Number of elements checked per parameter, drawn without replacement;
        parameters with fewer elements are checked exhaustively.
    floor: float = 1e-3,
        Lower bound of the relative error denominator max(|a|, |n|, floor).
        Central differences with ε = 1e-5 in f64 carry an absolute error
        near 1e-10, which sets how low the floor can go.
    seed: int = 0,
        Seed of the element sampling.

    Returns
    -------
    A GradientReport; tolerance violations are reported, not raised.
    """
    for parameter in parameters:
        parameter.zero_grad()
    tape = Tape()
    tape.backward(loss_function(tape))
    state = np.random.RandomState(seed=seed)
    errors = {}
    for parameter in parameters:
        analytic = parameter.grad.copy()
        original = parameter.value
        size = original.size
        indices = np.arange(size) if size <= samples else state.choice(
            size,
            size=samples,
            replace=False
        )
        worst = 0.0
        for flat in indices:
            values = []
            for step in (epsilon, -epsilon):
                perturbed = original.copy()
                perturbed.flat[flat] += step
                parameter.value = perturbed
                values.append(float(loss_function(Tape()).value))
            parameter.value = original
            numeric = (values[0] - values[1])/(2*epsilon)
            exact = float(analytic.flat[flat])
            worst = max(worst, abs(exact - numeric)/max(abs(exact), abs(numeric), floor))
        errors[parameter.name] = worst
    return GradientReport(
        max_relative_error=max(errors.values(), default=0.0),
        errors=errors,
        failing=[name for name, error in errors.items() if error > tolerance],
        samples=samples
    )
