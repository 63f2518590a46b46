"""Shared domain types: validated series, counter-addressed random streams,
and the containers returned by the changepoint sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
import os
import tempfile
from typing import Sequence

import numpy as np

_SEED_MASK = (1 << 64) - 1


class SeriesError(ValueError):
    pass


class NonFinite(SeriesError):
    def __init__(self, index: int):
        super().__init__(f"non-finite value at index {index}")
        self.index = index


class TooShort(SeriesError):
    def __init__(self, n: int):
        super().__init__(f"series needs at least 2 observations, got {n}")
        self.n = n


class IndexOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class Series:
    """An ordered, finite, float64 sequence of length >= 2.

    The underlying array is read-only so a Series can be shared freely.
    """

    values: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.n

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)


def validate_series(values: Sequence[float] | np.ndarray) -> Series:
    """Check finiteness and length and wrap ``values`` as a :class:`Series`.

    Raises
    ------
    NonFinite
        If any entry is NaN or infinite; ``index`` is the first offender.
    TooShort
        If fewer than two observations are given.
    """
    if isinstance(values, Series):
        return values
    arr = np.array(values, dtype=np.float64).reshape(-1)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise NonFinite(int(bad[0]))
    if arr.size < 2:
        raise TooShort(int(arr.size))
    arr.flags.writeable = False
    return Series(arr)


def as_array(values) -> np.ndarray:
    """float64 view of ``values``; complex input (paired records) is kept."""
    if isinstance(values, Series):
        return values.values
    arr = np.asarray(values)
    if np.iscomplexobj(arr):
        return arr.astype(np.complex128, copy=False)
    return np.asarray(arr, dtype=np.float64)


@dataclass(frozen=True)
class RandomStream:
    """A deterministic substream addressed by ``(root_seed, path)``.

    Streams carry no mutable state: each call to :meth:`generator` builds a
    fresh generator from the address, so draws never depend on the order in
    which other streams were consumed.
    """

    root_seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "root_seed", int(self.root_seed) & _SEED_MASK)
        path = tuple(int(p) for p in self.path)
        if any(p < 0 for p in path):
            raise ValueError("stream path labels must be non-negative")
        object.__setattr__(self, "path", path)

    def child(self, *labels: int) -> "RandomStream":
        return RandomStream(self.root_seed, self.path + tuple(labels))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.root_seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))

    def uniforms(self, size: int) -> np.ndarray:
        """The first ``size`` U(0,1) draws of this stream; draw ``i`` is fixed
        by the address alone, whatever ``size`` is requested."""
        return self.generator().random(size)


@dataclass(frozen=True)
class ConfCurve:
    """Per-split statistics for t = 1..n-1 (index ``t - 1`` in each array)."""

    w_left: np.ndarray
    w_right: np.ndarray
    p_left: np.ndarray
    p_right: np.ndarray
    p_conf: np.ndarray

    def __len__(self) -> int:
        return int(self.p_conf.shape[0])

    @property
    def n(self) -> int:
        return len(self) + 1

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, len(self) + 1)

    def records(self) -> list[dict]:
        return [
            {"t": int(t), "p_left": float(pl), "p_right": float(pr), "p_conf": float(pc)}
            for t, pl, pr, pc in zip(self.t, self.p_left, self.p_right, self.p_conf)
        ]


@dataclass(frozen=True)
class ChangepointResult:
    tau_hat: int
    alpha: float
    conf_set: np.ndarray
    curve: ConfCurve = field(repr=False)

    @property
    def empty(self) -> bool:
        return self.conf_set.size == 0

    @property
    def length(self) -> int:
        return int(self.conf_set.size)


def write_atomic(path, text: str) -> None:
    """Write ``text`` to a sibling temp file, then rename it over ``path``."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
