from __future__ import annotations

import threading
from collections.abc import Callable, Iterable, Iterator, Sequence
from contextlib import contextmanager
from typing import Any

import numpy as np

from precursormil._exceptions import NonFiniteLoss, ShapeMismatch
from precursormil._types import FloatArray

GradFn = Callable[[FloatArray], Sequence[FloatArray | None]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, 'enabled', True)


@contextmanager
def no_grad() -> Iterator[None]:
    '''
    Disable graph recording for the current thread.
    '''
    previous = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor:
    '''
    Dense double precision array with an optional gradient.

    A tensor produced by an op keeps references to its parents and a
    closure mapping the upstream gradient to one gradient per parent.
    Leaves (parameters, inputs) accumulate into `grad` on `backward`.
    '''

    __slots__ = ('_backward', '_parents', 'data', 'grad', 'name', 'requires_grad')

    def __init__(
        self,
        data: Any,
        *,
        requires_grad: bool = False,
        name: str = '',
    ) -> None:
        self.data: FloatArray = np.asarray(data, dtype=np.float64)
        self.grad: FloatArray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: GradFn | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> FloatArray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = f' {self.name!r}' if self.name else ''
        return f'Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})'

    def __add__(self, other: Tensor | float) -> Tensor:
        from precursormil.engine._ops import add
        return add(self, _lift(other))

    __radd__ = __add__

    def __mul__(self, other: Tensor | float) -> Tensor:
        from precursormil.engine._ops import mul
        return mul(self, _lift(other))

    __rmul__ = __mul__

    def sum(self, axis: int | tuple[int, ...] | None = None) -> Tensor:
        from precursormil.engine._ops import sum_
        return sum_(self, axis=axis)

    def reshape(self, *shape: int) -> Tensor:
        from precursormil.engine._ops import reshape
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        from precursormil.engine._ops import transpose
        return transpose(self, axes)


def _lift(value: Tensor | float) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_result(data: FloatArray, parents: Sequence[Tensor], grad_fn: GradFn) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = grad_fn
    return out


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, parameters: Iterable[Tensor] | None = None) -> None:
    '''
    Reverse-mode differentiation from a scalar loss.

    Parameters
    ----------
    loss : Tensor
        Scalar produced by a recorded forward pass.
    parameters : Iterable[Tensor], optional
        Leaves that must end up with a gradient; any of them the graph
        does not reach gets an exact zero gradient.

    Raises
    ------
    NonFiniteLoss
        If the loss is NaN or infinite.
    ShapeMismatch
        If the loss is not a scalar.
    '''
    if loss.data.size != 1:
        raise ShapeMismatch('loss', (), loss.shape)
    value = float(loss.data.reshape(()))
    if not np.isfinite(value):
        raise NonFiniteLoss(value)

    pending: dict[int, FloatArray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad), strict=True):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    for param in parameters or ():
        if param.grad is None:
            param.grad = np.zeros_like(param.data)
