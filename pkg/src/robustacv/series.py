"""Finite real-valued sample paths and coercion helpers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class TimeSeries:
    """A finite real-valued series with optional provenance metadata.

    Parameters
    ----------
    values : array_like
        One-dimensional sequence of finite floats, length >= 1.
    meta : dict, optional
        Free-form provenance metadata (seeds, contamination manifests, ...).
    """

    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValidationError("series values must be one-dimensional")
        if arr.size < 1:
            raise ValidationError("series must contain at least one value")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValidationError(f"series contains a non-finite value at index {bad}")
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    def with_meta(self, **extra) -> "TimeSeries":
        merged = dict(self.meta)
        merged.update(extra)
        return TimeSeries(self.values, merged)


def as_series(x) -> TimeSeries:
    """Coerce an array-like or TimeSeries into a validated TimeSeries."""
    if isinstance(x, TimeSeries):
        return x
    return TimeSeries(np.asarray(x, dtype=float))
