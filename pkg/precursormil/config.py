from __future__ import annotations

import dataclasses as dc
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import yaml

from precursormil._exceptions import ConfigInvalid
from precursormil._model import DataclassMixin
from precursormil._types import GridAxes
from precursormil.features import DEFAULT_THRESHOLD
from precursormil.flights import FilterPolicy
from precursormil.model import ModelConfig
from precursormil.synth import SynthSpec
from precursormil.training import SplitConfig

_PATH_KEYS = ('data', 'out', 'reference')
_GRID_KEYS = ('kernel_sizes', 'channels', 'learning_rate', 'weight_decay')


@dc.dataclass(frozen=True)
class RunConfig(DataclassMixin):
    '''
    Everything one CLI run resolves to.

    Nested sections (`model`, `split`, `synth`, `grid`) accept mappings
    and are turned into their dataclasses on construction.
    '''

    data: Path | None = None
    out: Path | None = None
    seed: int = 0
    event: str | None = None
    classes: tuple[str, ...] | None = None
    trivial_features: tuple[str, ...] = ()
    correlation_threshold: float = DEFAULT_THRESHOLD
    keep_severities: tuple[int, ...] = (0, 3)
    keep_labels: tuple[str, ...] | None = None
    strict: bool = True
    split: SplitConfig = dc.field(default_factory=SplitConfig)
    model: ModelConfig = dc.field(default_factory=ModelConfig)
    grid: GridAxes | None = None
    reference: Path | None = None
    synth: SynthSpec | None = None
    jobs: int = 1

    def __post_init__(self) -> None:
        for key in _PATH_KEYS:
            value = getattr(self, key)
            if value is not None and not isinstance(value, Path):
                object.__setattr__(self, key, Path(value))
        object.__setattr__(self, 'trivial_features', tuple(self.trivial_features))
        object.__setattr__(self, 'keep_severities', tuple(int(s) for s in self.keep_severities))
        if self.classes is not None:
            object.__setattr__(self, 'classes', tuple(self.classes))
        if self.keep_labels is not None:
            object.__setattr__(self, 'keep_labels', tuple(self.keep_labels))
        if isinstance(self.split, Mapping):
            object.__setattr__(self, 'split', SplitConfig.from_dict(dict(self.split)))
        if isinstance(self.model, Mapping):
            object.__setattr__(self, 'model', ModelConfig.from_dict(dict(self.model)))
        if isinstance(self.synth, Mapping):
            object.__setattr__(self, 'synth', SynthSpec.from_dict(dict(self.synth)))
        if self.grid is not None:
            object.__setattr__(self, 'grid', _grid_axes(self.grid))
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.correlation_threshold <= 1.0:
            raise ConfigInvalid('correlation_threshold', f'{self.correlation_threshold} is outside (0, 1]')
        if self.jobs < 1:
            raise ConfigInvalid('jobs', f'{self.jobs} must be >= 1')

    @classmethod
    def from_file(cls, path: str | Path) -> RunConfig:
        '''
        Read a YAML run config.

        Raises
        ------
        ConfigInvalid
            If the file does not parse, is not a mapping or names an
            unknown key.
        '''
        path = Path(path)
        if not path.is_file():
            raise ConfigInvalid('config', f'`{path}` is not a file')
        try:
            data = yaml.safe_load(path.read_text(encoding='utf-8')) or {}
        except yaml.YAMLError as exc:
            raise ConfigInvalid('config', f'`{path}` is not valid YAML: {exc}') from exc
        if not isinstance(data, dict):
            raise ConfigInvalid('config', f'`{path}` must hold a mapping')
        config = cls.from_dict(data)
        for section in ('model', 'split'):
            if 'seed' in data and 'seed' not in (data.get(section) or {}):
                config = config.copy_with(**{section: getattr(config, section).copy_with(seed=config.seed)})
        return config

    def with_overrides(self, overrides: Mapping[str, Any]) -> RunConfig:
        '''
        Apply flag values on top of this config; `None` means not given.

        Keys `model.<field>` and `split.<field>` reach into the nested
        sections.
        '''
        top: dict[str, Any] = {}
        nested: dict[str, dict[str, Any]] = {'model': {}, 'split': {}}
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, field = key.partition('.')
            if field:
                if section not in nested:
                    raise ConfigInvalid(key, 'unknown config section')
                nested[section][field] = value
            else:
                top[key] = value

        updated = self.copy_with(**top) if top else self
        if 'seed' in top:
            nested['model'].setdefault('seed', top['seed'])
            nested['split'].setdefault('seed', top['seed'])
        if nested['model']:
            updated = updated.copy_with(model=updated.model.copy_with(**nested['model']))
        if nested['split']:
            updated = updated.copy_with(split=updated.split.copy_with(**nested['split']))
        return updated

    def filter_policy(self) -> FilterPolicy:
        return FilterPolicy(
            keep_severities=frozenset(self.keep_severities),
            keep_labels=frozenset(self.keep_labels) if self.keep_labels is not None else None,
        )

    def require(self, *keys: str) -> None:
        for key in keys:
            if getattr(self, key) is None:
                raise ConfigInvalid(key, 'is required for this command')

    def check_paths(self) -> None:
        '''Existence checks for inputs, run before any compute.'''
        if self.data is not None and not self.data.exists():
            raise ConfigInvalid('data', f'`{self.data}` does not exist')
        if self.reference is not None and not self.reference.is_file():
            raise ConfigInvalid('reference', f'`{self.reference}` is not a file')
        if self.out is not None and self.out.exists() and not self.out.is_dir():
            raise ConfigInvalid('out', f'`{self.out}` exists and is not a directory')


def _grid_axes(data: Mapping[str, Any]) -> GridAxes:
    axes = GridAxes()
    for key, values in data.items():
        if key not in _GRID_KEYS:
            raise ConfigInvalid(f'grid.{key}', 'unknown grid axis')
        if not isinstance(values, (list, tuple)) or not values:
            raise ConfigInvalid(f'grid.{key}', 'must be a non-empty list')
        if key in ('kernel_sizes', 'channels'):
            axes[key] = [tuple(int(v) for v in item) for item in values]  # type: ignore[literal-required]
        else:
            axes[key] = [float(v) for v in values]  # type: ignore[literal-required]
    return axes


def create_run_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    config = RunConfig.from_file(path) if path is not None else RunConfig()
    return config.with_overrides(overrides or {})
