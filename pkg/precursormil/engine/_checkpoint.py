from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Any

import numpy as np

from precursormil._exceptions import CheckpointError
from precursormil._io import FORMAT_VERSION, atomic_open
from precursormil._types import FloatArray

_DTYPE = '<f8'


def encode_array(array: FloatArray) -> dict[str, Any]:
    data = np.ascontiguousarray(array, dtype=_DTYPE)
    return {
        'shape': list(data.shape),
        'dtype': _DTYPE,
        'data': base64.b64encode(data.tobytes()).decode('ascii'),
    }


def decode_array(entry: dict[str, Any]) -> FloatArray:
    if entry.get('dtype') != _DTYPE:
        raise CheckpointError(f'Unsupported array dtype `{entry.get("dtype")}`.')
    raw = base64.b64decode(entry['data'])
    shape = tuple(int(s) for s in entry['shape'])
    array = np.frombuffer(raw, dtype=_DTYPE).astype(np.float64)
    if array.size != int(np.prod(shape)):
        raise CheckpointError(f'Array payload does not match shape {shape}.')
    return array.reshape(shape)


def dump_checkpoint(path: str | Path, meta: dict[str, Any], arrays: dict[str, FloatArray]) -> Path:
    '''
    Write metadata and named arrays as a single JSON document.

    Keys are sorted and arrays are stored as base64 little-endian float64,
    so equal inputs give byte-identical files and arrays reload bit-exactly.
    '''
    document = {
        'format_version': FORMAT_VERSION,
        'meta': meta,
        'arrays': {name: encode_array(array) for name, array in arrays.items()},
    }
    with atomic_open(path) as handle:
        json.dump(document, handle, sort_keys=True, separators=(',', ':'))
        handle.write('\n')
    return Path(path)


def read_checkpoint(path: str | Path) -> tuple[dict[str, Any], dict[str, FloatArray]]:
    try:
        with open(path, encoding='utf-8') as handle:
            document = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f'Cannot read checkpoint `{path}`: {exc}') from exc

    version = document.get('format_version')
    if version != FORMAT_VERSION:
        raise CheckpointError(f'Checkpoint `{path}` has format_version {version!r}, expected {FORMAT_VERSION}.')
    arrays = {name: decode_array(entry) for name, entry in document['arrays'].items()}
    return document['meta'], arrays
