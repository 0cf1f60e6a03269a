from __future__ import annotations

import dataclasses as dc
import enum
import functools
from pathlib import Path
from typing import Any, ClassVar, Self, cast

import numpy as np

from precursormil._exceptions import ConfigInvalid


@functools.lru_cache
def _fields_for(cls: type) -> tuple[dc.Field[Any], ...]:
    if not dc.is_dataclass(cls):
        raise TypeError(f'{cls.__name__} must be a dataclass to use DataclassMixin.')
    return cast('tuple[dc.Field[Any], ...]', dc.fields(cls))


def _is_dc_instance(obj: object) -> bool:
    return dc.is_dataclass(obj) and not isinstance(obj, type)


def to_plain(obj: Any) -> Any:
    '''
    Convert a value into plain python containers and scalars.

    Dataclasses become dicts, tuples and arrays become lists, enums their
    value and paths strings, so the result can go straight to YAML or JSON.
    '''
    if _is_dc_instance(obj):
        if isinstance(obj, DataclassMixin):
            return obj.to_dict()
        return {f.name: to_plain(getattr(obj, f.name)) for f in _fields_for(type(obj))}

    if isinstance(obj, enum.Enum):
        return to_plain(obj.value)

    if isinstance(obj, Path):
        return str(obj)

    if isinstance(obj, np.ndarray):
        return obj.tolist()

    if isinstance(obj, np.generic):
        return obj.item()

    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}

    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]

    if isinstance(obj, (set, frozenset)):
        return sorted(to_plain(v) for v in obj)

    return obj


class DataclassMixin:
    __slots__: ClassVar[tuple[str, ...]] = ()

    @classmethod
    def get_field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in _fields_for(cls))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Self:
        '''
        Build an instance from a mapping, rejecting unknown keys.

        Parameters
        ----------
        data : dict[str, Any]
            Field values; missing fields fall back to their defaults.

        Raises
        ------
        ConfigInvalid
            If the mapping names a field the dataclass does not have.
        '''
        names = set(cls.get_field_names())
        for key in data:
            if key not in names:
                raise ConfigInvalid(key, f'unknown field for {cls.__name__}')
        return cls(**data)

    def to_dict(
        self,
        *,
        exclude_none: bool = False,
        extras: dict[str, Any] | None = None,
    ) -> dict[str, Any]:
        out: dict[str, Any] = {}

        for f in _fields_for(type(self)):
            val = getattr(self, f.name)
            if exclude_none and val is None:
                continue
            out[f.name] = to_plain(val)

        if extras:
            out.update(to_plain(extras))

        return out

    def copy_with(self, **updates: Any) -> Self:
        cls = type(self)
        names = {f.name for f in _fields_for(cls)}
        for key in updates:
            if key not in names:
                raise ConfigInvalid(key, f'unknown field for {cls.__name__}')
        return dc.replace(self, **updates)  # type: ignore[type-var]
