from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from precursormil._types import FloatArray
from precursormil.engine._tensor import Tensor, backward, no_grad

_DENOMINATOR_FLOOR = 1e-6


def gradcheck(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    *,
    h: float = 1e-5,
) -> list[FloatArray]:
    '''
    Compare analytic gradients with central finite differences.

    Parameters
    ----------
    fn : Callable[[], Tensor]
        Rebuilds the scalar loss from the current tensor values.
    tensors : Sequence[Tensor]
        Leaves to check; their `data` is perturbed in place and restored.
    h : float, optional
        Finite difference step.

    Returns
    -------
    list[FloatArray]
        Per element relative errors `|a - n| / max(|a|, |n|, 1e-6)`, one
        array per tensor.
    '''
    for tensor in tensors:
        tensor.data = np.ascontiguousarray(tensor.data)
        tensor.grad = None
    backward(fn(), tensors)
    analytic = [tensor.grad.copy() for tensor in tensors]  # type: ignore[union-attr]

    errors: list[FloatArray] = []
    with no_grad():
        for tensor, grad in zip(tensors, analytic, strict=True):
            numeric = np.empty_like(tensor.data)
            flat = tensor.data.reshape(-1)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + h
                plus = fn().item()
                flat[i] = saved - h
                minus = fn().item()
                flat[i] = saved
                numeric.reshape(-1)[i] = (plus - minus) / (2.0 * h)
            denominator = np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), _DENOMINATOR_FLOOR)
            errors.append(np.abs(grad - numeric) / denominator)
    return errors
