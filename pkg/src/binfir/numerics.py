"""Gaussian special functions and the quantized correlation integrals.

Both correlation integrals reduce, after standardizing the input, to

    G(k) = int_0^inf Phi(k s) phi(s) ds,

with ``k`` the ratio of the regression slope to the conditional noise scale.
A single one-dimensional table of G therefore serves both the known-input
integral ``F(b, Vy)`` and the plug-in integral ``h(cy, cty, cu, ctu, b)``.
The closed form ``1/4 + arcsin(rho)/(2 pi)`` is kept separate in
:func:`orthant_oracle` and is only used to check the quadrature.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import integrate, special

from .exceptions import DomainError

SQRT2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

#: One-sigma upper tail used by the threshold recursions, as rounded in the
#: original simulations.
PAPER_ONE_SIGMA_TAIL = 0.1587
#: ``1 - Phi(1)`` to double precision.
EXACT_ONE_SIGMA_TAIL = 0.5 * math.erfc(1.0 / SQRT2)

# integrand beyond 10 standard deviations is below 1e-22
_CUTOFF = 10.0
# fixed-node rule used inside compiled loops when a query leaves the table
_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class GaussianParams:
    mean: float
    variance: float

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise DomainError(f"variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / SQRT2)


def gaussian_pdf(u: float, p: GaussianParams) -> float:
    z = (u - p.mean) / p.std
    return INV_SQRT_2PI * math.exp(-0.5 * z * z) / p.std


def truncated_gaussian_mean(p: GaussianParams, c: float) -> float:
    """E[u | u > c] for u ~ N(mean, variance).

    The inverse Mills ratio is evaluated as ``sqrt(2/pi) / erfcx(z/sqrt(2))``,
    which stays finite for any ``z``; there is no separate asymptotic branch.
    """
    z = (c - p.mean) / p.std
    mills = math.sqrt(2.0 / math.pi) / float(special.erfcx(z / SQRT2))
    return p.mean + p.std * mills


def orthant_oracle(rho: float) -> float:
    """P(X > 0, Y > 0) for standard bivariate normals with correlation rho."""
    if not -1.0 <= rho <= 1.0:
        raise DomainError(f"correlation must lie in [-1, 1], got {rho}")
    return 0.25 + math.asin(rho) / (2.0 * math.pi)


def orthant_integral(kappa: float) -> float:
    """G(kappa) by adaptive quadrature on [0, 10]."""
    def integrand(s):
        return 0.5 * math.erfc(-kappa * s / SQRT2) * INV_SQRT_2PI * math.exp(-0.5 * s * s)

    points = None
    if abs(kappa) > 1.0:
        # Phi(kappa s) switches over a width of order 1/|kappa| near s = 0
        points = [8.0 / abs(kappa)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, _ = integrate.quad(
            integrand, 0.0, _CUTOFF, points=points, epsabs=1e-13, epsrel=1e-11, limit=200
        )
    return min(max(value, 0.0), 0.5)


def _kappa(b: float, slope_var: float, total_var: float) -> float | None:
    """Standardized slope, or None when b is on a saturation branch."""
    resid = total_var - b * b * slope_var
    if resid <= 0.0:
        return None
    return b * math.sqrt(slope_var) / math.sqrt(resid)


def f_correlation(b: float, vy: float, p: GaussianParams, table: CorrelationTable | None = None) -> float:
    """Limit of the empirical mean of 1(u_{t-n} > mu) 1(y_t > E y) given b_n = b.

    Saturates at 1/2 for ``b >= sqrt(vy/var_u)`` and at 0 for
    ``b <= -sqrt(vy/var_u)``. Evaluated through ``table`` when one is given,
    otherwise by direct quadrature.
    """
    if not vy > 0:
        raise DomainError(f"Vy must be positive, got {vy}")
    bound = math.sqrt(vy / p.variance)
    if b >= bound:
        return 0.5
    if b <= -bound:
        return 0.0
    kappa = _kappa(b, p.variance, vy)
    if kappa is None:
        return 0.5 if b > 0 else 0.0
    return table_lookup(table, kappa) if table is not None else orthant_integral(kappa)


def h_correlation(
    cy: float, cty: float, cu: float, ctu: float, b: float, table: CorrelationTable | None = None
) -> float:
    """Plug-in version of :func:`f_correlation` with the input and output
    means and one-sigma points replaced by quantizer thresholds."""
    vy = (cty - cy) ** 2
    vu = (ctu - cu) ** 2
    if vy == 0.0 or vu == 0.0:
        raise DomainError("degenerate thresholds: need cty != cy and ctu != cu")
    bound = math.sqrt(vy / vu)
    if b >= bound:
        return 0.5
    if b <= -bound:
        return 0.0
    kappa = _kappa(b, vu, vy)
    if kappa is None:
        return 0.5 if b > 0 else 0.0
    return table_lookup(table, kappa) if table is not None else orthant_integral(kappa)


@dataclass(frozen=True, eq=False)
class CorrelationTable:
    """Precomputed G on a uniform grid, linearly interpolated."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise DomainError("grid and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise DomainError("grid must be strictly increasing")
        if np.any(np.diff(values) < 0) or values.min() < 0 or values.max() > 0.5:
            raise DomainError("values must be nondecreasing within [0, 0.5]")
        grid.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def lo(self) -> float:
        return float(self.grid[0])

    @property
    def hi(self) -> float:
        return float(self.grid[-1])

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.grid.size - 1)

    def is_uniform(self) -> bool:
        return bool(np.allclose(np.diff(self.grid), self.step, rtol=1e-9, atol=0.0))


def build_table(lo: float = -20.0, hi: float = 20.0, points: int = 8001) -> CorrelationTable:
    if points < 2:
        raise DomainError(f"need at least 2 points, got {points}")
    if not hi > lo:
        raise DomainError(f"empty range [{lo}, {hi}]")
    # the default step of 0.005 keeps linear-interpolation error below 4e-7
    grid = np.linspace(lo, hi, points)
    values = np.array([orthant_integral(k) for k in grid])
    # quadrature noise can break monotonicity in the last ulp near saturation
    values = np.maximum.accumulate(values)
    return CorrelationTable(grid, values)


@functools.lru_cache(maxsize=None)
def default_table() -> CorrelationTable:
    return build_table()


def table_lookup(table: CorrelationTable, x: float) -> float:
    if x < table.lo or x > table.hi:
        return orthant_integral(x)
    return float(np.interp(x, table.grid, table.values))


def kernel_table(table: CorrelationTable | None) -> tuple[float, float, np.ndarray]:
    """Flatten a table into the ``(lo, step, values)`` triple used by the
    compiled loops. ``None`` gives an empty table, so every query falls back to
    quadrature."""
    if table is None:
        return 1.0, 1.0, np.zeros(0)
    if not table.is_uniform():
        raise DomainError("compiled lookup needs a uniformly spaced table")
    return table.lo, table.step, np.ascontiguousarray(table.values)


# -- compiled counterparts -------------------------------------------------


@njit(cache=True)
def _phi_cdf(x):
    return 0.5 * math.erfc(-x / SQRT2)


@njit(cache=True)
def _gl_segment(kappa, a, b, gl_x, gl_w):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    acc = 0.0
    for k in range(gl_x.size):
        s = mid + half * gl_x[k]
        acc += gl_w[k] * _phi_cdf(kappa * s) * INV_SQRT_2PI * math.exp(-0.5 * s * s)
    return acc * half


@njit(cache=True)
def _orthant_gl(kappa, gl_x, gl_w):
    split = _CUTOFF
    if abs(kappa) > 0.8:
        split = 8.0 / abs(kappa)
    if split >= _CUTOFF:
        val = _gl_segment(kappa, 0.0, _CUTOFF, gl_x, gl_w)
    else:
        val = _gl_segment(kappa, 0.0, split, gl_x, gl_w) + _gl_segment(kappa, split, _CUTOFF, gl_x, gl_w)
    return min(max(val, 0.0), 0.5)


@njit(cache=True)
def _g_lookup(kappa, lo, step, values, gl_x, gl_w):
    n = values.size
    if n == 0:
        return _orthant_gl(kappa, gl_x, gl_w)
    pos = (kappa - lo) / step
    if pos < 0.0 or pos > n - 1:
        return _orthant_gl(kappa, gl_x, gl_w)
    i = int(pos)
    if i >= n - 1:
        return values[n - 1]
    frac = pos - i
    return values[i] + frac * (values[i + 1] - values[i])


@njit(cache=True)
def _saturated_corr(b, slope_var, total_var, lo, step, values, gl_x, gl_w):
    bound = math.sqrt(total_var / slope_var)
    if b >= bound:
        return 0.5
    if b <= -bound:
        return 0.0
    resid = total_var - b * b * slope_var
    if resid <= 0.0:
        return 0.5 if b > 0 else 0.0
    kappa = b * math.sqrt(slope_var) / math.sqrt(resid)
    return _g_lookup(kappa, lo, step, values, gl_x, gl_w)


def gl_nodes() -> tuple[np.ndarray, np.ndarray]:
    return _GL_X, _GL_W
