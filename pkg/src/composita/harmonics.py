"""Harmonic analysis on S^q: quadrature, projections, filtered approximation,
and the zonal spectral operators built from the absolute-value kernel.

Conventions.  All integrals are taken against the normalized (probability)
surface measure mu*.  Under mu*, the degree-l reproducing kernel is

    K_l(t) = (omega_q / omega_{q-1}) * p_l(1) * p_l(t),

with {p_l} the orthonormal ultraspherical family and omega_d the surface
area of S^d; K_l(1) equals the dimension of the degree-l harmonic space.
The convolution operator f -> integral of |x.u| f(u) dmu*(u) acts on a
degree-l component as multiplication by

    m_l = (omega_{q-1} / omega_q) * c_l / p_l(1),

where c_l is the coefficient of p_l in the expansion of |t|.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import ultraspherical as us
from .errors import NodeBudgetError, SpectralDomainError
from .sphere import PointSet, surface_area

__all__ = [
    "QuadratureRule",
    "build_quadrature",
    "harmonic_dimension",
    "projection_kernel",
    "project_degree",
    "HarmonicExpansion",
    "expand",
    "lowpass",
    "FilteredApproximation",
    "filtered_approx",
    "estimate_degree_of_approximation",
    "abs_multipliers",
    "abs_kernel_mean",
    "abs_convolve",
    "abs_deconvolve",
    "real_harmonics_s2",
]

_BASIS_CACHE: dict[tuple[int, int], "us.UltrasphericalBasis"] = {}


def _basis(q: int, max_degree: int) -> us.UltrasphericalBasis:
    key = (q, max(max_degree, 32))
    hit = _BASIS_CACHE.get(key)
    if hit is None:
        hit = us.build_basis(q, key[1])
        _BASIS_CACHE[key] = hit
    return hit


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Positive-weight rule on S^q with weights summing to one."""

    q: int
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __post_init__(self):
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")

    def __len__(self) -> int:
        return self.points.shape[0]

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.dot(self.weights, a * b))


def _product_rule(q: int, exactness: int) -> tuple[np.ndarray, np.ndarray]:
    if q == 1:
        m = exactness + 1
        theta = 2.0 * math.pi * np.arange(m) / m
        return np.stack([np.cos(theta), np.sin(theta)], axis=1), np.full(m, 1.0 / m)
    sub_pts, sub_w = _product_rule(q - 1, exactness)
    n_t = exactness // 2 + 1
    t, wt = us.gauss_rule(q, n_t)
    wt = wt / np.sum(wt)
    s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    pts = np.concatenate(
        [np.concatenate([si * sub_pts, np.full((len(sub_pts), 1), ti)], axis=1) for ti, si in zip(t, s)]
    )
    wts = np.concatenate([wi * sub_w for wi in wt])
    return pts, wts


def build_quadrature(q: int, exactness_degree: int, node_limit: int = 2_000_000) -> QuadratureRule:
    """Product Gauss rule on S^q exact for spherical polynomials up to the given degree.

    The polar variable uses a Gauss rule for the projection weight of mu*,
    tensored with a recursively built rule on S^(q-1); the base case is an
    equispaced rule on the circle.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if exactness_degree < 0:
        raise ValueError("exactness_degree must be >= 0")
    count = exactness_degree + 1
    for qq in range(2, q + 1):
        count *= exactness_degree // 2 + 1
    if count > node_limit:
        raise NodeBudgetError(f"rule would need {count} nodes, above the limit {node_limit}")
    pts, wts = _product_rule(q, exactness_degree)
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    wts = wts / np.sum(wts)
    return QuadratureRule(q=q, points=pts, weights=wts, exactness_degree=exactness_degree)


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

def harmonic_dimension(q: int, ell: int) -> int:
    """Dimension of the space of degree-ell spherical harmonics on S^q."""
    if ell == 0:
        return 1
    if ell == 1:
        return q + 1
    return math.comb(ell + q, q) - math.comb(ell + q - 2, q)


def _kernel_constants(q: int, max_degree: int) -> np.ndarray:
    """Per-degree factor a_l with K_l(t) = a_l * p_l(t)."""
    basis = _basis(q, max_degree)
    p_at_1 = us.eval_all(basis, np.array(1.0), max_degree)
    return (surface_area(q) / surface_area(q - 1)) * p_at_1


def projection_kernel(q: int, ell: int, t):
    """Values of the degree-ell reproducing kernel K_l at cosine argument t."""
    basis = _basis(q, ell)
    return _kernel_constants(q, ell)[ell] * us.eval_p(basis, ell, t)


def _kernel_apply(q: int, coeffs: np.ndarray, cosines: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Compute sum_l coeffs[l] * K_l(cosines) @ data with one recurrence sweep.

    cosines has shape (nx, nodes) and data shape (nodes,); returns (nx,).
    Row blocks are processed in chunks to bound the recurrence workspace.
    """
    degree = len(coeffs) - 1
    basis = _basis(q, degree)
    consts = _kernel_constants(q, degree)
    weights = coeffs * consts[: degree + 1]
    out = np.empty(cosines.shape[0])
    chunk = max(1, 20_000_000 // max(1, cosines.shape[1] * (degree + 1)))
    for i in range(0, cosines.shape[0], chunk):
        t = cosines[i : i + chunk]
        table = us.eval_all(basis, t, degree)
        kernel = np.tensordot(weights, table, axes=(0, 0))
        out[i : i + chunk] = kernel @ data
    return out


def project_degree(f: Callable, ell: int, rule: QuadratureRule) -> Callable:
    """Degree-ell harmonic projection of f, returned as an evaluable function.

    Requires rule exactness >= 2*ell plus the band of f when f is itself a
    polynomial whose projection should be exact.
    """
    if 2 * ell > rule.exactness_degree:
        raise ValueError(f"rule exactness {rule.exactness_degree} insufficient for degree {ell}")
    data = rule.weights * np.asarray(f(rule.points), dtype=float)
    coeffs = np.zeros(ell + 1)
    coeffs[ell] = 1.0

    def component(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return _kernel_apply(rule.q, coeffs, x @ rule.points.T, data)

    return component


# ---------------------------------------------------------------------------
# Expansions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicExpansion:
    """Degree-indexed components of a function, sampled on quadrature nodes.

    components[l, j] holds the value of the degree-l projection at node j.
    Components can be re-evaluated anywhere on the sphere through the
    reproducing kernel, so no explicit harmonic basis is required.
    """

    rule: QuadratureRule
    n_max: int
    components: np.ndarray

    def __post_init__(self):
        if self.components.shape != (self.n_max + 1, len(self.rule)):
            raise ValueError("components must have shape (n_max+1, n_nodes)")

    def values_at_nodes(self) -> np.ndarray:
        return self.components.sum(axis=0)

    def component_at(self, ell: int, x) -> np.ndarray:
        coeffs = np.zeros(ell + 1)
        coeffs[ell] = 1.0
        x = np.atleast_2d(np.asarray(x, dtype=float))
        data = self.rule.weights * self.components[ell]
        return _kernel_apply(self.rule.q, coeffs, x @ self.rule.points.T, data)

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cos = x @ self.rule.points.T
        total = np.zeros(x.shape[0])
        for ell in range(self.n_max + 1):
            coeffs = np.zeros(ell + 1)
            coeffs[ell] = 1.0
            total += _kernel_apply(self.rule.q, coeffs, cos, self.rule.weights * self.components[ell])
        return total

    def degree_norms(self) -> np.ndarray:
        """Quadrature L2 norm of each component."""
        return np.sqrt(np.clip((self.components**2) @ self.rule.weights, 0.0, None))

    def scaled(self, factors: np.ndarray) -> "HarmonicExpansion":
        return HarmonicExpansion(
            rule=self.rule, n_max=self.n_max, components=factors[:, None] * self.components
        )

    def to_csv(self, path_or_buffer) -> None:
        """Rows (degree, node_index, value)."""
        buf = io.StringIO()
        buf.write("degree,node_index,value\n")
        for ell in range(self.n_max + 1):
            for j, v in enumerate(self.components[ell]):
                buf.write(f"{ell},{j},{format(v, '.17g')}\n")
        data = buf.getvalue()
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(data)
        else:
            with open(path_or_buffer, "w", newline="\n") as fh:
                fh.write(data)


def expand(f: Callable, n_max: int, rule: QuadratureRule) -> HarmonicExpansion:
    """Project f onto degrees 0..n_max.

    Projections are exact when the rule's exactness covers n_max plus the
    band of f; for non-polynomial f they are the usual quadrature
    (hyperinterpolation style) approximations.
    """
    if 2 * n_max > rule.exactness_degree:
        raise ValueError("rule exactness insufficient for requested n_max")
    fvals = np.asarray(f(rule.points), dtype=float)
    data = rule.weights * fvals
    basis = _basis(rule.q, n_max)
    consts = _kernel_constants(rule.q, n_max)
    comps = np.empty((n_max + 1, len(rule)))
    chunk = max(1, 40_000_000 // max(1, len(rule) * (n_max + 1)))
    for i in range(0, len(rule), chunk):
        gram = rule.points[i : i + chunk] @ rule.points.T
        table = us.eval_all(basis, gram, n_max)
        for ell in range(n_max + 1):
            comps[ell, i : i + chunk] = consts[ell] * (table[ell] @ data)
    return HarmonicExpansion(rule=rule, n_max=n_max, components=comps)


# ---------------------------------------------------------------------------
# Filtered approximation
# ---------------------------------------------------------------------------

def lowpass(x: np.ndarray) -> np.ndarray:
    """C^2 low-pass profile: 1 on [0, 1/2], 0 on [1, inf), monotone between."""
    x = np.asarray(x, dtype=float)
    u = np.clip(2.0 * x - 1.0, 0.0, 1.0)
    bridge = 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    return np.where(x <= 0.5, 1.0, np.where(x >= 1.0, 0.0, bridge))


@dataclass(frozen=True)
class FilteredApproximation:
    """A spherical polynomial of degree <= n, evaluable at arbitrary points."""

    rule: QuadratureRule
    n: int
    filter_coeffs: np.ndarray = field(repr=False)
    node_data: np.ndarray = field(repr=False)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return _kernel_apply(self.rule.q, self.filter_coeffs, x @ self.rule.points.T, self.node_data)


def filtered_approx(f: Callable, n: int, rule: QuadratureRule) -> FilteredApproximation:
    """Low-pass filtered projection of f onto spherical polynomials of degree <= n.

    Degrees up to n/2 pass unchanged, so any polynomial of degree < m is
    reproduced exactly once n >= 2m (given sufficient rule exactness).
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if 2 * n > rule.exactness_degree:
        raise ValueError(
            f"rule exactness {rule.exactness_degree} insufficient for filtered degree {n}"
        )
    ells = np.arange(n + 1)
    coeffs = lowpass(ells / max(n, 1))
    fvals = np.asarray(f(rule.points), dtype=float)
    return FilteredApproximation(rule=rule, n=n, filter_coeffs=coeffs, node_data=rule.weights * fvals)


def estimate_degree_of_approximation(
    f: Callable, n: int, rule: QuadratureRule, probes: PointSet
) -> float:
    """Sup distance between f and its filtered degree-n approximation over probes.

    An upper proxy (up to the filtered operator's constant) for the true
    degree of approximation by polynomials of degree <= n; report the probe
    set's mesh norm alongside when quoting it.
    """
    approx = filtered_approx(f, n, rule)
    fv = np.asarray(f(probes.points), dtype=float)
    return float(np.max(np.abs(fv - approx(probes.points))))


# ---------------------------------------------------------------------------
# Zonal spectral operators from the absolute-value kernel
# ---------------------------------------------------------------------------

def abs_multipliers(q: int, max_degree: int) -> np.ndarray:
    """Convolution multipliers of the kernel |x.u| under mu*, degrees 0..max_degree.

    Odd degrees are annihilated.  Even degrees 2l carry
    (omega_{q-1}/omega_q) * c_{2l} / p_{2l}(1) with c the |t| expansion
    coefficients.
    """
    basis = _basis(q, max_degree)
    coeffs = us.abs_series_coefficients(basis, max_degree // 2)
    p_at_1 = us.eval_all(basis, np.array(1.0), max_degree)
    ratio = surface_area(q - 1) / surface_area(q)
    m = np.zeros(max_degree + 1)
    for ell in range(0, max_degree // 2 + 1):
        m[2 * ell] = ratio * coeffs[ell] / p_at_1[2 * ell]
    return m


def abs_kernel_mean(q: int) -> float:
    """Mean of |x.e| over S^q under mu*; the degree-0 convolution multiplier."""
    return float(abs_multipliers(q, 0)[0])


def abs_convolve(exp: HarmonicExpansion) -> HarmonicExpansion:
    """Spherical convolution with |x.u| against mu*, applied degree-wise."""
    return exp.scaled(abs_multipliers(exp.rule.q, exp.n_max))


def abs_deconvolve(exp: HarmonicExpansion, degree2_tol: float = 1e-8) -> HarmonicExpansion:
    """Spectral inverse of the |.|-convolution on its admissible domain.

    Degree 0 passes through unchanged; odd degrees are annihilated; each even
    degree >= 4 is divided by its convolution multiplier.  Functions with a
    degree-2 component above degree2_tol (sup over nodes) are rejected: this
    operator's domain excludes them, and no degree-2 output is produced.
    """
    deg2_size = 0.0
    if exp.n_max >= 2:
        deg2_size = float(np.max(np.abs(exp.components[2])))
        if deg2_size > degree2_tol:
            raise SpectralDomainError(
                f"degree-2 component has sup {deg2_size:.3g} > {degree2_tol:.3g}; "
                "input lies outside the operator's domain"
            )
    m = abs_multipliers(exp.rule.q, exp.n_max)
    factors = np.zeros(exp.n_max + 1)
    factors[0] = 1.0
    for deg in range(4, exp.n_max + 1, 2):
        factors[deg] = 1.0 / m[deg]
    return exp.scaled(factors)


# ---------------------------------------------------------------------------
# Explicit real harmonics on S^2 (surface-measure orthonormal)
# ---------------------------------------------------------------------------

def real_harmonics_s2(ell: int, points: np.ndarray) -> np.ndarray:
    """The 2*ell+1 real degree-ell harmonics on S^2, orthonormal in L2(dS).

    Returns an array of shape (2*ell+1, n) for points of shape (n, 3).
    """
    from scipy.special import sph_harm_y

    points = np.atleast_2d(np.asarray(points, dtype=float))
    theta = np.arccos(np.clip(points[:, 2], -1.0, 1.0))
    phi = np.arctan2(points[:, 1], points[:, 0])
    rows = []
    for m in range(-ell, ell + 1):
        y = sph_harm_y(ell, abs(m), theta, phi)
        if m < 0:
            rows.append(math.sqrt(2.0) * (-1.0) ** m * y.imag)
        elif m == 0:
            rows.append(y.real)
        else:
            rows.append(math.sqrt(2.0) * (-1.0) ** m * y.real)
    return np.array(rows)


def s2_coefficients(exp: HarmonicExpansion) -> dict[tuple[int, int], float]:
    """Explicit coefficients against the mu*-orthonormal real basis (q = 2 only)."""
    if exp.rule.q != 2:
        raise ValueError("explicit coefficients are provided for S^2 only")
    scale = math.sqrt(surface_area(2))
    out: dict[tuple[int, int], float] = {}
    for ell in range(exp.n_max + 1):
        ys = real_harmonics_s2(ell, exp.rule.points) * scale
        for k in range(2 * ell + 1):
            out[(ell, k)] = float(np.dot(exp.rule.weights, ys[k] * exp.components[ell]))
    return out
