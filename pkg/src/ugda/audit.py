"""File-access audit used to prove hidden evaluation masks stay hidden.

Every file read performed by this package goes through :func:`open_for_read`
(or registers itself via :func:`record_read`).  Wrapping a code region in
:func:`recording` collects the set of paths read inside it, which lets tests
assert that no training code path ever opens a hidden-mask file.
"""

from __future__ import annotations

import gzip
import threading
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterator

_lock = threading.Lock()
_active_logs: list[list[str]] = []


def record_read(path: str | Path) -> None:
    """Register a read of ``path`` with every active recording."""
    p = str(Path(path).resolve())
    with _lock:
        for log in _active_logs:
            log.append(p)


@contextmanager
def recording() -> Iterator[list[str]]:
    """Collect all package file reads performed inside the block."""
    log: list[str] = []
    with _lock:
        _active_logs.append(log)
    try:
        yield log
    finally:
        with _lock:
            for i, entry in enumerate(_active_logs):
                if entry is log:
                    del _active_logs[i]
                    break


def open_for_read(path: str | Path, mode: str = "rb") -> IO:
    """Open ``path`` for reading, transparently ungzipping ``.gz`` files."""
    record_read(path)
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)
