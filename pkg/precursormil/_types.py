from __future__ import annotations

from typing import Literal, TypedDict

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
BoolArray = npt.NDArray[np.bool_]

SplitTag = Literal['train', 'valid', 'test']
ModelKind = Literal['binary', 'multi_output']
TrialStatus = Literal['ok', 'failed']

KernelSizes = tuple[int, int, int]
Channels = tuple[int, int, int]


class GridAxes(TypedDict, total=False):
    kernel_sizes: list[KernelSizes]
    channels: list[Channels]
    learning_rate: list[float]
    weight_decay: list[float]


class EpochRecord(TypedDict):
    epoch: int
    train_loss: float
    valid_f1: float | None


class SplitCounts(TypedDict):
    train: int
    valid: int
    test: int
