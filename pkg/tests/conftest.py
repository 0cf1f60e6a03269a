from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from precursormil.dataset import FlightDataset, build_dataset
from precursormil.flights import ResampledFlight, resample_all
from precursormil.model import ModelConfig
from precursormil.synth import create_spec, generate


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        kernel_sizes=(3, 2, 2),
        channels=(2, 3, 2),
        gru_hidden=4,
        epochs=2,
        minibatch_fraction=0.25,
        seed=3,
    )


@pytest.fixture(scope='session')
def small_flights() -> list[ResampledFlight]:
    spec = create_spec(n_per_class=12, num_features=4, events={'HighSpeed': 1}, seed=5)
    return resample_all(generate(spec))


@pytest.fixture(scope='session')
def small_dataset(small_flights: list[ResampledFlight]) -> FlightDataset:
    return build_dataset(small_flights)


def write_flight(path: Path, distance: list[float], **columns: list[float | str]) -> Path:
    frame = pd.DataFrame({'dist_nm': distance, **columns})
    frame.to_csv(path, index=False)
    return path


def write_labels(path: Path, rows: list[tuple[str, str, int]]) -> Path:
    pd.DataFrame(rows, columns=['flight_id', 'label', 'severity']).to_csv(path, index=False)
    return path
