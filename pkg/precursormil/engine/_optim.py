from __future__ import annotations

import dataclasses as dc
from collections.abc import Iterable, Mapping

import numpy as np

from precursormil._exceptions import ConfigInvalid, ShapeMismatch
from precursormil._types import FloatArray
from precursormil.engine._tensor import Tensor


@dc.dataclass(slots=True, kw_only=True)
class AdamState:
    '''
    ADAM moments and hyperparameters.

    Weight decay is the coupled L2 form: `weight_decay * param` is added to
    the gradient before the moment updates.
    '''

    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, FloatArray] = dc.field(default_factory=dict)
    v: dict[str, FloatArray] = dc.field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigInvalid('learning_rate', f'{self.learning_rate} must be > 0')
        if self.weight_decay < 0:
            raise ConfigInvalid('weight_decay', f'{self.weight_decay} must be >= 0')


def adam_step(
    state: AdamState,
    params: Mapping[str, Tensor],
    grads: Mapping[str, FloatArray] | None = None,
) -> AdamState:
    '''
    Apply one bias corrected ADAM update to `params` in place.

    Parameters
    ----------
    state : AdamState
        Moments, lazily created per parameter name; updated in place.
    params : Mapping[str, Tensor]
        Named parameters.
    grads : Mapping[str, FloatArray], optional
        Gradients by name; defaults to each parameter's `grad`, with a
        missing gradient treated as zero.

    Returns
    -------
    AdamState
        The same state object, advanced by one step.
    '''
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    for name, param in params.items():
        grad = grads[name] if grads is not None else param.grad
        if grad is None:
            grad = np.zeros_like(param.data)
        if grad.shape != param.shape:
            raise ShapeMismatch(f'gradient `{name}`', param.shape, grad.shape)
        if state.weight_decay:
            grad = grad + state.weight_decay * param.data

        m = state.m.setdefault(name, np.zeros_like(param.data))
        v = state.v.setdefault(name, np.zeros_like(param.data))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad

        m_hat = m / correction1
        v_hat = v / correction2
        param.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)

    return state


class Adam:
    def __init__(
        self,
        named_parameters: Iterable[tuple[str, Tensor]],
        *,
        learning_rate: float = 1e-3,
        weight_decay: float = 0.0,
    ) -> None:
        self.params = dict(named_parameters)
        self.state = AdamState(learning_rate=learning_rate, weight_decay=weight_decay)

    def step(self) -> None:
        adam_step(self.state, self.params)

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.grad = None
