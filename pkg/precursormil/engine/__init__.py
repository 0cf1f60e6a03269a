from precursormil.engine._checkpoint import decode_array, dump_checkpoint, encode_array, read_checkpoint
from precursormil.engine._gradcheck import gradcheck
from precursormil.engine._layers import GRU, BatchNorm1D, Conv1D, Dense, Module, init_uniform
from precursormil.engine._ops import (
    add,
    batch_norm,
    binary_cross_entropy,
    conv1d,
    gru,
    linear,
    max_over_time,
    mul,
    relu,
    reshape,
    same_padding,
    sigmoid,
    sigmoid_array,
    sum_,
    tanh,
    transpose,
)
from precursormil.engine._optim import Adam, AdamState, adam_step
from precursormil.engine._tensor import Tensor, backward, is_grad_enabled, no_grad

__all__ = (
    'GRU',
    'Adam',
    'AdamState',
    'BatchNorm1D',
    'Conv1D',
    'Dense',
    'Module',
    'Tensor',
    'adam_step',
    'add',
    'backward',
    'batch_norm',
    'binary_cross_entropy',
    'conv1d',
    'decode_array',
    'dump_checkpoint',
    'encode_array',
    'gradcheck',
    'gru',
    'init_uniform',
    'is_grad_enabled',
    'linear',
    'max_over_time',
    'mul',
    'no_grad',
    'read_checkpoint',
    'relu',
    'reshape',
    'same_padding',
    'sigmoid',
    'sigmoid_array',
    'sum_',
    'tanh',
    'transpose',
)
