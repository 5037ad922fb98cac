"""Orthonormal ultraspherical polynomials for the weight (1 - t^2)^(q/2 - 1).

The family {p_l} is orthonormal on [-1, 1] with positive leading
coefficients; it is evaluated through the symmetric three-term recurrence
whose coefficients are known in closed form for this weight.  The module
also carries the even-degree expansion of |t| in this family, which drives
every zonal spectral operator downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

__all__ = [
    "UltrasphericalBasis",
    "build_basis",
    "eval_p",
    "eval_all",
    "special_values",
    "weight_mass",
    "gauss_rule",
    "half_gauss_rule",
    "abs_series_coefficients",
    "truncated_abs",
]


def weight_mass(q: int) -> float:
    """Total mass of (1 - t^2)^(q/2-1) on [-1, 1]."""
    a = q / 2.0 - 1.0
    return math.sqrt(math.pi) * math.gamma(a + 1.0) / math.gamma(a + 1.5)


@dataclass(frozen=True)
class UltrasphericalBasis:
    """Recurrence data for the orthonormal family up to max_degree."""

    q: int
    max_degree: int
    mass: float = field(repr=False, default=0.0)
    beta: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("dimension parameter q must be >= 1")
        if self.max_degree < 0:
            raise ValueError("max_degree must be >= 0")


def build_basis(q: int, max_degree: int) -> UltrasphericalBasis:
    """Precompute the orthonormal recurrence for dimension parameter q."""
    a = q / 2.0 - 1.0
    b = np.empty(max_degree + 1)
    b[0] = np.nan
    if max_degree >= 1:
        b[1] = 1.0 / (2.0 * a + 3.0)
    if max_degree >= 2:
        k = np.arange(2, max_degree + 1, dtype=float)
        b[2:] = k * (k + 2.0 * a) / ((2.0 * k + 2.0 * a + 1.0) * (2.0 * k + 2.0 * a - 1.0))
    return UltrasphericalBasis(q=q, max_degree=max_degree, mass=weight_mass(q), beta=np.sqrt(b))


def eval_all(basis: UltrasphericalBasis, t, degree: int) -> np.ndarray:
    """Evaluate p_0 .. p_degree at t; result has shape (degree+1,) + t.shape."""
    if degree < 0 or degree > basis.max_degree:
        raise ValueError(f"degree {degree} outside [0, {basis.max_degree}]")
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise ValueError("argument outside [-1, 1]")
    t = np.clip(t, -1.0, 1.0)
    out = np.empty((degree + 1,) + t.shape)
    out[0] = 1.0 / math.sqrt(basis.mass)
    if degree >= 1:
        out[1] = t * out[0] / basis.beta[1]
    for k in range(1, degree):
        out[k + 1] = (t * out[k] - basis.beta[k] * out[k - 1]) / basis.beta[k + 1]
    return out


def eval_p(basis: UltrasphericalBasis, ell: int, t):
    """Value of the orthonormal degree-ell polynomial at t (scalar or array)."""
    return eval_all(basis, t, ell)[ell]


def special_values(basis: UltrasphericalBasis, ell: int) -> tuple[float, float]:
    """(p_ell(0), p_ell(1)); the value at 0 vanishes for odd ell by parity."""
    at0 = float(eval_p(basis, ell, 0.0))
    if ell % 2 == 1:
        at0 = 0.0
    return at0, float(eval_p(basis, ell, 1.0))


def gauss_rule(q: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule with n nodes for the weight (1 - t^2)^(q/2-1) on [-1, 1]."""
    a = q / 2.0 - 1.0
    return roots_jacobi(n, a, a)


def half_gauss_rule(q: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-type rule on [0, 1] for the same weight, with the t=1 endpoint built in.

    Splitting at 0 keeps integrands with a kink at the origin (such as |t|
    against the weight) spectrally accurate.
    """
    a = q / 2.0 - 1.0
    y, w = roots_jacobi(n, a, 0.0)
    t = (y + 1.0) / 2.0
    w_full = 2.0 ** (-a - 1.0) * w * (1.0 + t) ** a
    return t, w_full


def abs_series_coefficients(basis: UltrasphericalBasis, l_max: int) -> np.ndarray:
    """Coefficients c_l of |t| = sum_l c_l * p_{2l}(t), l = 0 .. l_max.

    Odd-degree coefficients vanish by parity and are not stored.  For l >= 1
    the coefficient is -p_{2l}(0) / ((2l - 1)(l + q/2)); the constant term is
    computed as the weighted inner product of |t| with p_0.
    """
    if 2 * l_max > basis.max_degree:
        raise ValueError("basis max_degree too small for requested expansion length")
    q = basis.q
    coeffs = np.empty(l_max + 1)
    t, w = half_gauss_rule(q, 40)
    coeffs[0] = 2.0 * float(np.sum(w * t)) / math.sqrt(basis.mass)
    if l_max >= 1:
        at0 = eval_all(basis, np.array(0.0), 2 * l_max)
        for ell in range(1, l_max + 1):
            coeffs[ell] = -at0[2 * ell] / ((2.0 * ell - 1.0) * (ell + q / 2.0))
    return coeffs


def truncated_abs(basis: UltrasphericalBasis, l_max: int, t):
    """Partial sum of the |t| expansion through degree 2*l_max."""
    coeffs = abs_series_coefficients(basis, l_max)
    table = eval_all(basis, t, 2 * l_max)
    return np.tensordot(coeffs, table[0 : 2 * l_max + 1 : 2], axes=(0, 0))
