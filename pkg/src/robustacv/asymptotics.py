"""Influence functions, Hermite expansions and asymptotic variances.

The influence function of the robust scale at the standard normal has
Hermite rank 2; expansions against the probabilists' (monic) Hermite basis
turn cross expectations ``E[f(X) f(Y)]`` over correlated standard normal
pairs into power series in the correlation.  That machinery yields closed
evaluations of the limiting variances of both scale estimators and both
autocovariance estimators under short-range dependence (or long-range with
D > 1/2), and the scalar limit-law constants for D < 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import gammaln, ndtr

from .errors import (DomainError, NumericError, RangeError, RegimeError,
                     ValidationError)
from .scale import GAUSSIAN_CONSISTENCY

__all__ = [
    "HermiteExpansion",
    "AcvFunction",
    "LongMemoryLimit",
    "influence_q",
    "influence_q_general",
    "hermite_coefficients",
    "influence_expansion",
    "if_cross_expectation",
    "asymp_var_qn",
    "asymp_var_classical_scale",
    "are_scale",
    "psi_value",
    "asymp_var_robust_autocov",
    "asymp_var_classical_autocov",
    "are_autocov",
    "beta_d",
    "long_memory_limits",
    "bivariate_hermite_alpha",
]

_R0 = 1.0 / GAUSSIAN_CONSISTENCY
# closed form of int phi(y) phi(y + r0) dy: the N(0, 2) density at r0
_DENOM = np.exp(-_R0 * _R0 / 4.0) / (2.0 * np.sqrt(np.pi))

_SQRT2 = np.sqrt(2.0)


def _phi(x):
    return np.exp(-np.square(x) / 2.0) / np.sqrt(2.0 * np.pi)


# ---------------------------------------------------------------------------
# influence functions
# ---------------------------------------------------------------------------

def influence_q(x):
    """Influence function of the robust scale at the standard normal.

    Bounded, even, mean zero, with Hermite rank 2.  Accepts scalars or
    arrays; returns the same shape.
    """
    x = np.asarray(x, dtype=float)
    out = GAUSSIAN_CONSISTENCY * (0.25 - ndtr(x + _R0) + ndtr(x - _R0)) / _DENOM
    return float(out) if out.ndim == 0 else out


def influence_q_general(x, mu: float, sigma: float):
    """Influence function at a general normal N(mu, sigma^2): sigma * IF((x - mu)/sigma)."""
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    return sigma * influence_q((np.asarray(x, dtype=float) - mu) / sigma)


# ---------------------------------------------------------------------------
# Hermite expansions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HermiteExpansion:
    """Coefficients of a function against monic probabilists' Hermite polynomials.

    ``coefficients[q]`` holds ``alpha_q = E[f(Z) H_q(Z)]`` for Z standard
    normal; the L2 expansion is ``f = sum_q alpha_q H_q / q!`` and
    ``sum_q alpha_q^2 / q!`` converges to ``E[f^2]`` (stored as
    ``mean_square``, estimated by the same quadrature).
    """

    coefficients: np.ndarray
    q_max: int
    hermite_rank: int | None
    mean_square: float
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.shape != (self.q_max + 1,):
            raise ValidationError("coefficient array must cover q = 0..q_max")
        object.__setattr__(self, "coefficients", coeffs)

    def norm_sq_partial(self, q_max: int | None = None) -> float:
        qm = self.q_max if q_max is None else min(q_max, self.q_max)
        return float(sum(self.coefficients[q] ** 2 / factorial(q)
                         for q in range(qm + 1)))


@lru_cache(maxsize=16)
def _gh_rule(nodes: int):
    """Probabilists' Gauss-Hermite rule from the physicists' one."""
    t, w = np.polynomial.hermite.hermgauss(nodes)
    return _SQRT2 * t, w / np.sqrt(np.pi)


def _monic_hermite_rows(q_max: int, z: np.ndarray) -> np.ndarray:
    rows = np.empty((q_max + 1, z.size))
    rows[0] = 1.0
    if q_max >= 1:
        rows[1] = z
    for q in range(1, q_max):
        rows[q + 1] = z * rows[q] - q * rows[q - 1]
    return rows


def hermite_coefficients(f, q_max: int = 30, nodes: int = 128,
                         rank_tol: float = 1e-7) -> HermiteExpansion:
    """Expand ``f`` in monic Hermite polynomials by Gauss-Hermite quadrature.

    ``f`` must be square integrable against the standard normal; divergence
    (non-finite values or a non-finite mean square) raises NumericError.
    The Hermite rank is the first q whose normalised coefficient
    ``|alpha_q| / sqrt(q!)`` exceeds ``rank_tol`` times the L2 scale.
    """
    if q_max < 2:
        raise ValidationError("q_max must be at least 2")
    if nodes < 64:
        raise ValidationError("need at least 64 quadrature nodes")
    z, w = _gh_rule(nodes)
    fv = np.asarray(f(z), dtype=float)
    if fv.shape != z.shape:
        fv = np.asarray([f(float(zi)) for zi in z], dtype=float)
    if not np.all(np.isfinite(fv)):
        raise NumericError("function is non-finite at quadrature nodes")
    mean_square = float(np.dot(w, fv * fv))
    if not np.isfinite(mean_square):
        raise NumericError("quadrature for E[f^2] diverged")
    rows = _monic_hermite_rows(q_max, z)
    coeffs = rows @ (w * fv)
    if not np.all(np.isfinite(coeffs)):
        raise NumericError("quadrature for Hermite coefficients diverged")
    scale = max(1.0, np.sqrt(mean_square))
    normalised = np.abs(coeffs) / np.sqrt([factorial(q) for q in range(q_max + 1)])
    above = np.flatnonzero(normalised > rank_tol * scale)
    rank = int(above[0]) if above.size else None
    return HermiteExpansion(coeffs, q_max, rank, mean_square,
                            {"nodes": nodes, "rank_tol": rank_tol})


@lru_cache(maxsize=8)
def influence_expansion(q_max: int = 30, nodes: int = 128) -> HermiteExpansion:
    """Cached Hermite expansion of ``influence_q``."""
    return hermite_coefficients(influence_q, q_max=q_max, nodes=nodes)


def if_cross_expectation(rho, expansion: HermiteExpansion | None = None):
    """E[f(X) f(Y)] for standard bivariate normal (X, Y) with correlation rho.

    Valid for centred f of Hermite rank >= 2 expanded in ``expansion``
    (default: the influence function); evaluates
    ``sum_{q >= 2} alpha_q^2 / q! * rho^q``.  Vectorised in rho.
    """
    rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(np.abs(rho_arr) > 1.0 + 1e-12):
        raise ValidationError("correlations must lie in [-1, 1]")
    exp = influence_expansion() if expansion is None else expansion
    qs = np.arange(2, exp.q_max + 1)
    weights = np.array([exp.coefficients[q] ** 2 / factorial(q) for q in qs])
    powers = np.power.outer(rho_arr, qs)
    out = powers @ weights
    return float(out[0]) if np.isscalar(rho) or np.ndim(rho) == 0 else out


# ---------------------------------------------------------------------------
# autocovariance functions (theoretical inputs)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcvFunction:
    """Theoretical autocovariance sequence gamma(0..K) with a memory tag.

    ``regime`` is "short_memory" or "long_memory"; long memory carries the
    decay exponent D in (0, 1) (gamma(k) ~ k^{-D} L(k)) and an optional
    description of the slowly varying factor L.
    """

    gamma: np.ndarray
    regime: str = "short_memory"
    D: float | None = None
    L_description: str | None = None

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 1 or g.size < 1:
            raise ValidationError("gamma must be a 1-d array with lag 0 first")
        if not np.all(np.isfinite(g)):
            raise ValidationError("gamma contains non-finite values")
        if g[0] <= 0:
            raise ValidationError("gamma(0) must be positive")
        if np.any(np.abs(g[1:]) > g[0] * (1 + 1e-12)):
            raise ValidationError("|gamma(k)| cannot exceed gamma(0)")
        if self.regime not in ("short_memory", "long_memory"):
            raise ValidationError(f"unknown regime {self.regime!r}")
        if self.regime == "long_memory":
            if self.D is None or not 0 < self.D < 1:
                raise ValidationError("long memory requires D in (0, 1)")
        object.__setattr__(self, "gamma", g)

    @property
    def max_lag(self) -> int:
        return self.gamma.size - 1

    def at(self, k: int) -> float:
        """gamma(|k|), reading beyond the stored range as 0."""
        k = abs(int(k))
        return float(self.gamma[k]) if k < self.gamma.size else 0.0

    def correlations(self, K: int) -> np.ndarray:
        ks = np.arange(1, K + 1)
        vals = np.array([self.at(k) for k in ks])
        return vals / self.gamma[0]


def _require_sqrt_n_regime(acv: AcvFunction, what: str):
    if acv.regime == "long_memory" and acv.D is not None and acv.D <= 0.5:
        raise RegimeError(
            f"{what} requires short memory or long memory with D > 1/2; "
            f"got D={acv.D}. Use long_memory_limits for D < 1/2.")


def _geometric_tail(prev: float, last: float) -> float:
    """Bound a positive-term tail by geometric extrapolation of the last ratio."""
    if last == 0.0:
        return 0.0
    if prev == 0.0 or abs(last) >= abs(prev):
        return float("inf")
    r = abs(last) / abs(prev)
    return abs(last) * r / (1.0 - r)


def _effective_K(acv: AcvFunction, K_max: int, extra: int = 0) -> int:
    return max(0, min(K_max, acv.max_lag - extra))


def asymp_var_qn(acv: AcvFunction, q_max: int = 30, K_max: int = 10_000,
                 return_tail: bool = False):
    """Limiting variance of sqrt(n) (Qn - sigma) under sqrt(n) asymptotics.

    Evaluates ``gamma(0) * [g(1) + 2 sum_{k>=1} g(rho_k)]`` where g is the
    cross expectation of the influence function and rho_k the correlations.
    With ``return_tail=True`` also returns a bound on the truncated tail.
    """
    _require_sqrt_n_regime(acv, "asymp_var_qn")
    exp = influence_expansion(q_max=q_max)
    K = _effective_K(acv, K_max)
    rho = acv.correlations(K)
    terms = if_cross_expectation(rho, exp) if K else np.array([])
    g0 = float(acv.gamma[0])
    value = g0 * (if_cross_expectation(1.0, exp) + 2.0 * float(np.sum(terms)))
    # |g(rho)| <= E[f^2] rho^2, so bound the tail through the rho_k^2 tail
    if K >= 2:
        tail_sq = _geometric_tail(rho[-2] ** 2, rho[-1] ** 2)
    elif K == 1:
        tail_sq = float("inf") if rho[-1] != 0 else 0.0
    else:
        tail_sq = 0.0
    tail = 2.0 * g0 * exp.mean_square * tail_sq
    return (value, tail) if return_tail else value


def asymp_var_classical_scale(acv: AcvFunction, K_max: int = 10_000,
                              return_tail: bool = False):
    """Limiting variance of sqrt(n) (sigma_hat - sigma):
    ``(2 gamma(0))^{-1} (gamma(0)^2 + 2 sum_{k>=1} gamma(k)^2)``."""
    _require_sqrt_n_regime(acv, "asymp_var_classical_scale")
    K = _effective_K(acv, K_max)
    g0 = float(acv.gamma[0])
    gk2 = np.array([acv.at(k) ** 2 for k in range(1, K + 1)])
    value = (g0 * g0 + 2.0 * float(gk2.sum())) / (2.0 * g0)
    if K >= 2:
        tail = _geometric_tail(gk2[-2], gk2[-1]) / g0
    else:
        tail = 0.0 if K == 0 or gk2[-1] == 0 else float("inf")
    return (value, tail) if return_tail else value


def are_scale(acv: AcvFunction, q_max: int = 30, K_max: int = 10_000) -> float:
    """Asymptotic relative efficiency of the robust scale vs the classical."""
    return (asymp_var_classical_scale(acv, K_max)
            / asymp_var_qn(acv, q_max, K_max))


# ---------------------------------------------------------------------------
# autocovariance estimator asymptotics
# ---------------------------------------------------------------------------

def psi_value(x, y, gamma0: float, gammah: float):
    """Influence kernel of the robust autocovariance at lag h.

    ``psi(x, y) = (g0 + gh) IF((x+y)/sqrt(2(g0+gh)))
                 - (g0 - gh) IF((x-y)/sqrt(2(g0-gh)))``

    which equals ``(1/2) [Q(F+) IF(x+y; F+) - Q(F-) IF(x-y; F-)]`` once the
    general-normal influence identity ``IF(x; N(0, s^2)) = s IF(x/s)`` and
    ``Q^2(F+-) = 2 (g0 +- gh)`` are substituted.  Requires g0 > |gh|.
    """
    if not gamma0 > abs(gammah):
        raise ValidationError(
            f"need gamma0 > |gammah|, got gamma0={gamma0}, gammah={gammah}")
    sp2 = gamma0 + gammah
    sm2 = gamma0 - gammah
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    out = (sp2 * influence_q((xa + ya) / np.sqrt(2.0 * sp2))
           - sm2 * influence_q((xa - ya) / np.sqrt(2.0 * sm2)))
    return float(out) if np.ndim(out) == 0 else out


def _uv_correlations(acv: AcvFunction, h: int, ks: np.ndarray):
    """Correlations among the standardised sum/difference variables.

    U_i = (X_i + X_{i+h})/sqrt(2(g0+gh)), V_i = (X_i - X_{i+h})/sqrt(2(g0-gh));
    at equal index corr(U_i, V_i) = 0.
    """
    g = acv.at
    g0, gh = g(0), g(h)
    sp2, sm2 = g0 + gh, g0 - gh
    num_uu = np.array([2 * g(k) + g(k + h) + g(abs(k - h)) for k in ks])
    num_vv = np.array([2 * g(k) - g(k + h) - g(abs(k - h)) for k in ks])
    num_uv = np.array([g(abs(k - h)) - g(k + h) for k in ks])
    r_uu = num_uu / (2.0 * sp2)
    r_vv = num_vv / (2.0 * sm2)
    r_uv = num_uv / (2.0 * np.sqrt(sp2 * sm2))
    return r_uu, r_vv, r_uv


def asymp_var_robust_autocov(acv: AcvFunction, h: int, q_max: int = 30,
                             K_max: int = 10_000,
                             return_tail: bool = False):
    """Limiting variance of sqrt(n) (gamma_Q_hat(h) - gamma(h)).

    Decomposes psi over the independent standardised sum/difference pair and
    reduces every cross term to ``if_cross_expectation`` at the appropriate
    correlation; corr(V_1, U_{1+k}) = -corr(U_1, V_{1+k}).
    """
    _require_sqrt_n_regime(acv, "asymp_var_robust_autocov")
    if h < 0:
        raise RangeError("lag h must be nonnegative")
    g0, gh = acv.at(0), acv.at(h)
    if not g0 > abs(gh):
        raise ValidationError(
            f"need gamma(0) > |gamma(h)|, got {g0} and {gh} at h={h}")
    exp = influence_expansion(q_max=q_max)
    sp2, sm2 = g0 + gh, g0 - gh
    e_psi_sq = (sp2 ** 2 + sm2 ** 2) * exp.mean_square
    K = _effective_K(acv, K_max, extra=h)
    if K >= 1:
        ks = np.arange(1, K + 1)
        r_uu, r_vv, r_uv = _uv_correlations(acv, h, ks)
        g_uu = if_cross_expectation(r_uu, exp)
        g_vv = if_cross_expectation(r_vv, exp)
        g_uv = if_cross_expectation(r_uv, exp)
        g_vu = if_cross_expectation(-r_uv, exp)
        cross = (sp2 ** 2 * g_uu + sm2 ** 2 * g_vv
                 - sp2 * sm2 * (g_uv + g_vu))
        value = e_psi_sq + 2.0 * float(cross.sum())
        terms = np.abs(cross)
        if K >= 2:
            tail = 2.0 * _geometric_tail(terms[-2], terms[-1])
        else:
            tail = 0.0 if terms[-1] == 0 else float("inf")
    else:
        value, tail = e_psi_sq, 0.0
    return (value, tail) if return_tail else value


def asymp_var_classical_autocov(acv: AcvFunction, h: int,
                                K_max: int = 10_000,
                                return_tail: bool = False):
    """Limiting variance of sqrt(n) (gamma_hat(h) - gamma(h)):
    ``gamma(0)^2 + gamma(h)^2 + 2 sum gamma(k)^2 + 2 sum gamma(k+h) gamma(k-h)``
    with gamma at negative lags read as gamma(|k|)."""
    _require_sqrt_n_regime(acv, "asymp_var_classical_autocov")
    if h < 0:
        raise RangeError("lag h must be nonnegative")
    g = acv.at
    K = _effective_K(acv, K_max, extra=h)
    ks = np.arange(1, K + 1)
    sq = np.array([g(k) ** 2 for k in ks])
    cr = np.array([g(k + h) * g(abs(k - h)) for k in ks])
    value = g(0) ** 2 + g(h) ** 2 + 2.0 * float(sq.sum()) + 2.0 * float(cr.sum())
    if K >= 2:
        terms = sq + np.abs(cr)
        tail = 2.0 * _geometric_tail(terms[-2], terms[-1])
    elif K == 1:
        tail = 0.0 if sq[-1] + abs(cr[-1]) == 0 else float("inf")
    else:
        tail = 0.0
    return (value, tail) if return_tail else value


def are_autocov(acv: AcvFunction, h: int, q_max: int = 30,
                K_max: int = 10_000) -> float:
    """Per-lag asymptotic relative efficiency of the autocovariance estimators."""
    return (asymp_var_classical_autocov(acv, h, K_max)
            / asymp_var_robust_autocov(acv, h, q_max, K_max))


# ---------------------------------------------------------------------------
# long-memory limit constants
# ---------------------------------------------------------------------------

def beta_d(D: float) -> float:
    """Beta-function constant B((1-D)/2, D) normalising the slow limit laws."""
    if not 0 < D < 1:
        raise DomainError(f"D must lie in (0, 1), got {D}")
    return float(np.exp(gammaln((1.0 - D) / 2.0) + gammaln(D)
                        - gammaln((1.0 + D) / 2.0)))


@dataclass(frozen=True)
class LongMemoryLimit:
    """Scalar constants of the non-Gaussian limit law for D < 1/2.

    ``limit_mean_scale`` is the limiting mean of ``n^D / L(n) (Qn - sigma)``
    (equivalently: the normalised statistic scaled by beta(D) has limit mean
    ``beta_D * limit_mean_scale``); ``limit_mean_autocov`` is the analogue for
    the robust autocovariance with its own normaliser described by
    ``L_tilde_description``.  Only these scalars are modelled; the limiting
    second-chaos process itself is out of scope.
    """

    D: float
    beta_D: float
    rate_description: str
    limit_mean_scale: float
    limit_mean_autocov: float
    L_tilde_description: str

    def __post_init__(self):
        if self.rate_description == "sqrt_n":
            if not self.D > 0.5:
                raise ValidationError("sqrt_n rate requires D > 1/2")
        elif self.rate_description == "nD_over_L":
            if not 0 < self.D < 0.5:
                raise ValidationError("nD_over_L rate requires D < 1/2")
        else:
            raise ValidationError(f"unknown rate {self.rate_description!r}")
        if self.beta_D <= 0:
            raise ValidationError("beta_D must be positive")


def long_memory_limits(sigma: float, gamma_h: float, D: float,
                       h: int = 0) -> LongMemoryLimit:
    """Limit-law constants for the slow regime D < 1/2.

    The limiting mean of ``n^D / L(n) (Qn - sigma)`` equals
    ``-sigma / ((1 - D)(2 - D))``; the robust autocovariance analogue carries
    the prefactor ``(gamma(0) + gamma(h)) / 2`` and the normaliser
    ``L_tilde(n) = 2 L(n) + L(n+h)(1+h/n)^{-D} + L(n-h)(1-h/n)^{-D}``.
    """
    if not 0 < D < 1:
        raise DomainError(f"D must lie in (0, 1), got {D}")
    if D >= 0.5:
        raise RegimeError(
            "D >= 1/2 follows sqrt(n) asymptotics; use asymp_var_qn")
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    if h < 0:
        raise RangeError("lag h must be nonnegative")
    gamma0 = sigma * sigma
    if abs(gamma_h) > gamma0:
        raise ValidationError("|gamma(h)| cannot exceed sigma^2")
    bd = beta_d(D)
    mean_factor = -2.0 * bd / ((1.0 - D) * (2.0 - D))
    # mean of the beta(D)-normalised statistic is (prefactor) * mean_factor;
    # dividing by beta(D) gives the L-free convention stored here
    mean_scale = (sigma / 2.0) * mean_factor / bd
    mean_autocov = ((gamma0 + gamma_h) / 2.0) * mean_factor / bd
    l_tilde = ("2*L(n) + L(n+h)*(1+h/n)^(-D) + L(n-h)*(1-h/n)^(-D) "
               f"with D={D}, h={h}")
    return LongMemoryLimit(D, bd, "nD_over_L", mean_scale, mean_autocov,
                           l_tilde)


# ---------------------------------------------------------------------------
# bivariate Hermite coefficients of the distance kernel
# ---------------------------------------------------------------------------

def _inner_indicator_moment(x: np.ndarray, q: int, r: float) -> np.ndarray:
    """Closed form of ``int 1{|x - y| <= r} H_q(y) phi(y) dy``.

    Antiderivative identity: d/dy [-H_{q-1}(y) phi(y)] = H_q(y) phi(y).
    """
    if q == 0:
        return ndtr(x + r) - ndtr(x - r)
    lo, hi = x - r, x + r
    h_lo = _monic_hermite_rows(q - 1, lo)[q - 1]
    h_hi = _monic_hermite_rows(q - 1, hi)[q - 1]
    return h_lo * _phi(lo) - h_hi * _phi(hi)


def bivariate_hermite_alpha(p: int, q: int, r: float,
                            nodes: int = 128) -> float:
    """``E[1{|X - Y| <= r} H_p(X) H_q(Y)]`` for independent standard normals.

    The inner integral over y is substituted in closed form (the indicator
    breaks polynomial quadrature accuracy), leaving one numerical dimension.
    """
    if p < 0 or q < 0:
        raise ValidationError("Hermite orders must be nonnegative")
    if r < 0:
        raise ValidationError("distance threshold r must be nonnegative")
    z, w = _gh_rule(nodes)
    hp = _monic_hermite_rows(p, z)[p]
    return float(np.dot(w, hp * _inner_indicator_moment(z, q, r)))
