from __future__ import annotations

from collections.abc import Iterator
from typing import Any, ClassVar

import numpy as np

from precursormil._exceptions import CheckpointError, ShapeMismatch
from precursormil._types import FloatArray
from precursormil.engine import _ops
from precursormil.engine._tensor import Tensor


def init_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, name: str) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class Module:
    '''
    Base class for layers and networks.

    Parameters are the `Tensor` attributes with `requires_grad`, buffers the
    numpy arrays listed in `buffer_names`; both are discovered in attribute
    definition order, so names are stable across runs.
    '''

    buffer_names: ClassVar[tuple[str, ...]] = ()

    def __init__(self) -> None:
        self.training = True

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        return self.forward(*args, **kwargs)

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def _children(self) -> Iterator[tuple[str, Any]]:
        for name, value in vars(self).items():
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and isinstance(value[0], Module):
                for i, child in enumerate(value):
                    yield f'{name}.{i}', child

    def named_parameters(self, prefix: str = '') -> Iterator[tuple[str, Tensor]]:
        for name, value in self._children():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield f'{prefix}{name}', value
            else:
                yield from value.named_parameters(f'{prefix}{name}.')

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = '') -> Iterator[tuple[str, FloatArray]]:
        for name in self.buffer_names:
            yield f'{prefix}{name}', getattr(self, name)
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(f'{prefix}{name}.')

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for _, value in self._children():
            if isinstance(value, Module):
                value.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.grad = None

    def state_dict(self) -> dict[str, FloatArray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, FloatArray]) -> None:
        targets: dict[str, FloatArray] = {name: p.data for name, p in self.named_parameters()}
        targets.update(dict(self.named_buffers()))
        missing = sorted(set(targets) - set(state))
        unexpected = sorted(set(state) - set(targets))
        if missing or unexpected:
            raise CheckpointError(f'State mismatch; missing={missing} unexpected={unexpected}')
        for name, target in targets.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != target.shape:
                raise ShapeMismatch(f'state `{name}`', target.shape, value.shape)
            target[...] = value


def _as_grouped(x: Tensor, heads: int) -> tuple[Tensor, bool]:
    if x.ndim == 3 and heads == 1:
        n, c, length = x.shape
        return x.reshape(n, 1, c, length), True
    return x, False


class Conv1D(Module):
    '''
    Stride 1, same padded 1-D convolution with `heads` independent groups.

    Input (N, heads, in_channels, L), or (N, in_channels, L) when
    `heads == 1`; the length is preserved.
    '''

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        *,
        heads: int = 1,
        rng: np.random.Generator,
    ) -> None:
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.heads = heads
        fan_in = in_channels * kernel_size
        self.weight = init_uniform(rng, (heads, out_channels, in_channels, kernel_size), fan_in, 'weight')
        self.bias = init_uniform(rng, (heads, out_channels), fan_in, 'bias')

    def forward(self, x: Tensor) -> Tensor:
        grouped, squeeze = _as_grouped(x, self.heads)
        out = _ops.conv1d(grouped, self.weight, self.bias)
        if squeeze:
            n, _, c, length = out.shape
            return out.reshape(n, c, length)
        return out


class BatchNorm1D(Module):
    buffer_names = ('running_mean', 'running_var')

    def __init__(
        self,
        num_channels: int,
        *,
        heads: int = 1,
        momentum: float = 0.1,
        eps: float = 1e-5,
    ) -> None:
        super().__init__()
        self.heads = heads
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones((heads, num_channels)), requires_grad=True, name='gamma')
        self.beta = Tensor(np.zeros((heads, num_channels)), requires_grad=True, name='beta')
        self.running_mean = np.zeros((heads, num_channels))
        self.running_var = np.ones((heads, num_channels))

    def forward(self, x: Tensor) -> Tensor:
        grouped, squeeze = _as_grouped(x, self.heads)
        out = _ops.batch_norm(
            grouped,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )
        if squeeze:
            n, _, c, length = out.shape
            return out.reshape(n, c, length)
        return out


class GRU(Module):
    def __init__(self, input_size: int, hidden_size: int, *, rng: np.random.Generator) -> None:
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        gates = 3 * hidden_size
        self.w_ih = init_uniform(rng, (input_size, gates), hidden_size, 'w_ih')
        self.w_hh = init_uniform(rng, (hidden_size, gates), hidden_size, 'w_hh')
        self.b_ih = init_uniform(rng, (gates,), hidden_size, 'b_ih')
        self.b_hh = init_uniform(rng, (gates,), hidden_size, 'b_hh')

    def forward(self, x: Tensor) -> Tensor:
        return _ops.gru(x, self.w_ih, self.w_hh, self.b_ih, self.b_hh)


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, *, rng: np.random.Generator) -> None:
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = init_uniform(rng, (in_features, out_features), in_features, 'weight')
        self.bias = init_uniform(rng, (out_features,), in_features, 'bias')

    def forward(self, x: Tensor) -> Tensor:
        return _ops.linear(x, self.weight, self.bias)
