from __future__ import annotations

import hashlib
import os
import tempfile
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import IO

import pandas as pd

FORMAT_VERSION = 1


@contextmanager
def atomic_open(path: str | Path, mode: str = 'w') -> Iterator[IO]:
    '''
    Open a temporary sibling of `path` and move it into place on success.

    The temporary file lives in the destination directory so the final
    `os.replace` never crosses a filesystem boundary.
    '''
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    encoding = None if 'b' in mode else 'utf-8'
    newline = None if 'b' in mode else '\n'
    fd, tmp = tempfile.mkstemp(prefix=f'.{path.name}.', dir=path.parent)
    try:
        with open(fd, mode, encoding=encoding, newline=newline) as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_text(path: str | Path, text: str) -> Path:
    with atomic_open(path) as handle:
        handle.write(text)
    return Path(path)


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    with atomic_open(path) as handle:
        frame.to_csv(handle, index=False, float_format='%.17g', lineterminator='\n')
    return Path(path)


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()
