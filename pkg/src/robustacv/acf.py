"""Robust and classical autocovariance / autocorrelation estimation.

The robust autocovariance at lag h compares the robust scales of the
elementwise sum and difference of the series with its lag-h shift:
``0.25 * (Q^2(x[:n-h] + x[h:]) - Q^2(x[:n-h] - x[h:]))``.  The robust
autocorrelation defaults to the bounded ratio
``(Q+^2 - Q-^2) / (Q+^2 + Q-^2)`` which lies in [-1, 1] by construction;
the covariance ratio ``gamma_Q(h)/gamma_Q(0)`` is available as an option.

Neither robust variant is guaranteed positive semi-definite across lags;
no projection or repair is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RangeError, ValidationError
from .scale import qn_scale
from .series import as_series

__all__ = [
    "AcvEstimate",
    "AcfSequence",
    "robust_autocov",
    "classical_autocov",
    "robust_acf",
    "classical_acf",
]


@dataclass(frozen=True)
class AcvEstimate:
    """A single-lag autocovariance estimate."""

    lag: int
    value: float
    estimator: str  # "robust_q" or "classical"
    n_effective: int

    def __post_init__(self):
        if self.lag < 0:
            raise ValidationError("lag must be nonnegative")
        if self.estimator == "robust_q" and self.lag == 0 and self.value < 0:
            raise ValidationError("robust variance estimate cannot be negative")

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class AcfSequence:
    """Autocovariance or autocorrelation values at lags 0..K."""

    lags: np.ndarray
    values: np.ndarray
    normalization: str  # "covariance" or "correlation"
    estimator: str = "classical"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if lags.shape != values.shape or lags.ndim != 1:
            raise ValidationError("lags and values must be 1-d arrays of equal length")
        if lags[0] != 0 or np.any(np.diff(lags) <= 0):
            raise ValidationError("lags must increase strictly from 0")
        if self.normalization not in ("covariance", "correlation"):
            raise ValidationError(f"unknown normalization {self.normalization!r}")
        if self.normalization == "correlation":
            if abs(values[0] - 1.0) > 1e-12:
                raise ValidationError("correlation at lag 0 must equal 1")
            # the covariance-ratio variant is the one form not bounded by 1
            if self.meta.get("method") != "covariance_ratio" and \
                    np.any(np.abs(values) > 1.0 + 1e-12):
                raise ValidationError("correlations must lie in [-1, 1]")
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "values", values)

    def value_at(self, lag: int) -> float:
        idx = np.flatnonzero(self.lags == lag)
        if idx.size == 0:
            raise ValidationError(f"lag {lag} not present in sequence")
        return float(self.values[idx[0]])


def _sum_diff(values: np.ndarray, h: int):
    if h == 0:
        return 2.0 * values, np.zeros_like(values)
    lead, lag = values[:-h], values[h:]
    return lead + lag, lead - lag


def _qn2_pair(values: np.ndarray, h: int, method: str = "auto"):
    s, d = _sum_diff(values, h)
    qs = qn_scale(s, method=method).value
    qd = 0.0 if h == 0 else qn_scale(d, method=method).value
    return qs * qs, qd * qd


def robust_autocov(x, h: int, method: str = "auto") -> AcvEstimate:
    """Robust autocovariance at lag h from sum/difference robust scales.

    Uses exactly n-h terms in each of the sum and difference vectors; no
    tapering or padding.  At h=0 the value reduces to the squared robust
    scale of the series.
    """
    s = as_series(x)
    n = s.n
    if not 0 <= h <= n - 3:
        raise RangeError(f"lag h={h} outside 0..{n - 3} for n={n}")
    qp2, qm2 = _qn2_pair(s.values, h, method)
    return AcvEstimate(h, 0.25 * (qp2 - qm2), "robust_q", n - h)


def classical_autocov(x, h: int) -> AcvEstimate:
    """Biased (1/n) sample autocovariance about the sample mean."""
    s = as_series(x)
    n = s.n
    if not 0 <= h <= n - 1:
        raise RangeError(f"lag h={h} outside 0..{n - 1} for n={n}")
    c = s.values - s.values.mean()
    if h == 0:
        value = float(c @ c) / n
    else:
        value = float(c[:-h] @ c[h:]) / n
    return AcvEstimate(h, value, "classical", n - h)


def robust_acf(x, max_lag: int, normalization: str = "correlation",
               correlation_method: str = "bounded",
               method: str = "auto") -> AcfSequence:
    """Robust autocorrelation (or autocovariance) sequence for lags 0..K.

    Parameters
    ----------
    normalization : {"correlation", "covariance"}
    correlation_method : {"bounded", "covariance_ratio"}
        "bounded" returns (Q+^2 - Q-^2)/(Q+^2 + Q-^2), guaranteed in [-1, 1];
        "covariance_ratio" returns gamma_Q(h)/gamma_Q(0), which is not.
    """
    s = as_series(x)
    n = s.n
    if not 0 <= max_lag <= n - 3:
        raise RangeError(f"max_lag={max_lag} outside 0..{n - 3} for n={n}")
    if correlation_method not in ("bounded", "covariance_ratio"):
        raise ValidationError(f"unknown correlation_method {correlation_method!r}")
    lags = np.arange(max_lag + 1)
    qn2 = [_qn2_pair(s.values, int(h), method) for h in lags]
    gammas = np.array([0.25 * (p - m) for p, m in qn2])
    if normalization == "covariance":
        return AcfSequence(lags, gammas, "covariance", "robust_q",
                           {"method": "covariance"})
    if normalization != "correlation":
        raise ValidationError(f"unknown normalization {normalization!r}")
    if correlation_method == "bounded":
        values = np.array([1.0 if h == 0 else (p - m) / (p + m)
                           for h, (p, m) in zip(lags, qn2)])
    else:
        if gammas[0] <= 0:
            raise ValidationError("robust variance is zero; cannot normalize")
        values = gammas / gammas[0]
    return AcfSequence(lags, values, "correlation", "robust_q",
                       {"method": correlation_method})


def classical_acf(x, max_lag: int,
                  normalization: str = "correlation") -> AcfSequence:
    """Classical autocovariance/autocorrelation sequence for lags 0..K."""
    s = as_series(x)
    n = s.n
    if not 0 <= max_lag <= n - 1:
        raise RangeError(f"max_lag={max_lag} outside 0..{n - 1} for n={n}")
    c = s.values - s.values.mean()
    gammas = np.array([float(c @ c) / n if h == 0 else float(c[:-h] @ c[h:]) / n
                       for h in range(max_lag + 1)])
    lags = np.arange(max_lag + 1)
    if normalization == "covariance":
        return AcfSequence(lags, gammas, "covariance", "classical")
    if normalization != "correlation":
        raise ValidationError(f"unknown normalization {normalization!r}")
    if gammas[0] <= 0:
        raise ValidationError("sample variance is zero; cannot normalize")
    return AcfSequence(lags, gammas / gammas[0], "correlation", "classical",
                       {"method": "sample"})
