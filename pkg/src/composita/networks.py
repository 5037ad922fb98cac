"""Zonal function networks on S^q and their linear least-squares fitting.

A network is x -> sum_k a_k * kappa(x . w_k) with centers w_k on the sphere
and kappa either the absolute dot product or the smoothed kernel obtained by
convolving the absolute value with itself over the sphere.  Coefficients are
fitted by ridge least squares on point samples; the fitting map is linear in
the sampled values and the centers never depend on the target function.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import ultraspherical as us
from .errors import RankDeficiencyError
from .harmonics import _basis, _kernel_constants, abs_multipliers
from .sphere import PointSet, generate_quasi_uniform

__all__ = [
    "AbsDot",
    "ConvKernel",
    "ZonalNetwork",
    "conv_kernel_phi",
    "kernel_values",
    "eval_network",
    "choose_centers",
    "centers_for_separation",
    "fit_shallow",
    "from_biased_units",
    "network_to_json",
    "network_from_json",
]


@dataclass(frozen=True)
class AbsDot:
    """Kernel kappa(t) = |t|."""


@dataclass(frozen=True)
class ConvKernel:
    """Spherically smoothed kernel, truncated after even degree 2*l_max."""

    l_max: int

    def __post_init__(self):
        if self.l_max < 2:
            raise ValueError("ConvKernel needs l_max >= 2")


Kernel = Union[AbsDot, ConvKernel]


def conv_kernel_phi(q: int, t, l_max: int) -> np.ndarray:
    """Iterated absolute-value kernel phi(t) = integral of |x.u||u.y| dmu*(u).

    Evaluated through its even spectral series: the squared convolution
    multipliers of |.| against the degree-wise reproducing kernels, truncated
    after degree 2*l_max.  phi is even and phi(1) tends to 1/(q+1).
    """
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise ValueError("argument outside [-1, 1]")
    degree = 2 * l_max
    m = abs_multipliers(q, degree)
    consts = _kernel_constants(q, degree)  # K_l(t) = consts[l] * p_l(t)
    basis = _basis(q, degree)
    coeffs = m * m * consts[: degree + 1]  # m is zero on odd degrees
    table = us.eval_all(basis, np.clip(t, -1.0, 1.0), degree)
    return np.tensordot(coeffs, table, axes=(0, 0))


def kernel_values(kernel: Kernel, q: int, t) -> np.ndarray:
    if isinstance(kernel, AbsDot):
        return np.abs(np.asarray(t, dtype=float))
    return conv_kernel_phi(q, t, kernel.l_max)


def _abs_cos_average(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(1/pi) * integral over [0, pi] of |a + b cos(theta)| d(theta)."""
    a = np.asarray(a, dtype=float)
    b = np.abs(np.asarray(b, dtype=float))
    inside = np.abs(a) < b
    theta0 = np.arccos(np.clip(-np.where(inside, a, 0.0) / np.where(b > 0, b, 1.0), -1.0, 1.0))
    split = (2.0 * a * theta0 + 2.0 * b * np.sin(theta0) - a * math.pi) / math.pi
    return np.where(inside, split, np.abs(a))


def _abs_linear_average(a: float, b: float, q_inner: int, n: int = 48) -> float:
    """Average of |a + b s| against the polar weight of S^q_inner over s in [-1, 1]."""
    from scipy.special import roots_jacobi

    from .ultraspherical import weight_mass

    beta = (q_inner - 2) / 2.0  # exponent of (1 - s^2) in the polar density of S^q_inner
    total = 0.0
    cut = -a / b if b != 0 else 2.0
    segments = [(-1.0, cut), (cut, 1.0)] if -1.0 < cut < 1.0 else [(-1.0, 1.0)]
    for lo, hi in segments:
        # fold the (1 -+ s)^beta endpoint factors into one-sided Gauss rules
        alpha_right = beta if hi == 1.0 else 0.0
        alpha_left = beta if lo == -1.0 else 0.0
        y, w = roots_jacobi(n, alpha_right, alpha_left)
        s = (hi + lo) / 2.0 + (hi - lo) / 2.0 * y
        scale = ((hi - lo) / 2.0) ** (1.0 + alpha_right + alpha_left)
        rest = np.ones_like(s)
        if hi != 1.0:
            rest = rest * (1.0 - s) ** beta
        if lo != -1.0:
            rest = rest * (1.0 + s) ** beta
        total += scale * float(np.sum(w * np.abs(a + b * s) * rest))
    return total / weight_mass(q_inner)


def conv_kernel_quadrature(q: int, t, n: int = 60) -> np.ndarray:
    """Direct integration of phi(x.y) = integral of |x.u||u.y| dmu*(u).

    Independent of the spectral series: the sphere integral is reduced to a
    polar integral (split at the kink of |t|) times a one-dimensional average
    over the orthogonal circle/sphere, each handled by Gauss rules of the
    matching weight.  Accurate to near machine precision for q >= 2.
    """
    if q < 2:
        raise ValueError("the quadrature reduction needs q >= 2")
    t = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t).ravel()
    tp, wp = us.half_gauss_rule(q, n)
    sin_tp = np.sqrt(np.clip(1.0 - tp * tp, 0.0, None))
    out = np.empty(flat.shape)
    for i, c in enumerate(flat):
        s = math.sqrt(max(0.0, 1.0 - c * c))
        a = tp * c
        b = sin_tp * s
        if q == 2:
            inner = _abs_cos_average(a, b)
        else:
            inner = np.array([_abs_linear_average(ai, bi, q - 1) for ai, bi in zip(a, b)])
        out[i] = 2.0 * float(np.sum(wp * tp * inner)) / us.weight_mass(q)
    return out.reshape(np.shape(t)) if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class ZonalNetwork:
    """Centers, coefficients, and kernel tag of a zonal network on S^dim."""

    dim: int
    kernel: Kernel
    centers: PointSet
    coefficients: np.ndarray

    def __post_init__(self):
        if self.centers.dim != self.dim:
            raise ValueError("centers live on the wrong sphere")
        coeffs = np.asarray(self.coefficients, dtype=float)
        if coeffs.shape != (len(self.centers),):
            raise ValueError("need one coefficient per center")
        object.__setattr__(self, "coefficients", coeffs)

    def __call__(self, x) -> np.ndarray:
        return eval_network(self, x)


def eval_network(net: ZonalNetwork, x) -> np.ndarray:
    """Evaluate sum_k a_k kappa(x . w_k); accepts a point or a batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != net.dim + 1:
        raise ValueError(f"points have {pts.shape[1] - 1}-sphere dimension, network is on S^{net.dim}")
    values = kernel_values(net.kernel, net.dim, pts @ net.centers.points.T) @ net.coefficients
    return float(values[0]) if single else values


def choose_centers(q: int, n: int, seed: int) -> PointSet:
    """Quasi-uniform centers, independent of any data."""
    return generate_quasi_uniform(q, n, seed)


def centers_for_separation(q: int, eta: float, seed: int) -> PointSet:
    """Centers whose minimal separation is close to a requested value.

    The count scales like eta^(-q); the construction delegates to the
    quasi-uniform generator with the matching point budget.
    """
    if not 0 < eta < math.pi:
        raise ValueError("eta must lie in (0, pi)")
    if q == 1:
        n = max(2, int(round(2.0 * math.pi / eta)))
    elif q == 2:
        n = max(4, int(round((3.0 / eta) ** 2)))
    else:
        n = max(4, int(round((2.5 / eta) ** q)))
    return generate_quasi_uniform(q, n, seed)


def fit_shallow(
    f: Callable,
    centers: PointSet,
    samples: PointSet,
    ridge: float | None = None,
    kernel: Kernel = AbsDot(),
) -> ZonalNetwork:
    """Fit coefficients by ridge least squares on sampled values of f.

    Solves min_a |A a - y|^2 + ridge * |a|^2 with A_jk = kappa(x_j . w_k) and
    y_j = f(x_j).  When ridge is None it defaults to 1e-8 times the squared
    spectral norm of A.  With ridge = 0 a rank-deficient system raises
    RankDeficiencyError instead of silently picking a minimum-norm solution.
    """
    if samples.dim != centers.dim:
        raise ValueError("samples and centers must live on the same sphere")
    if len(samples) < len(centers):
        raise ValueError("need at least as many samples as centers")
    if ridge is not None and ridge < 0:
        raise ValueError("ridge must be >= 0")
    a_mat = kernel_values(kernel, centers.dim, samples.points @ centers.points.T)
    y = np.asarray(f(samples.points), dtype=float)
    if y.shape != (len(samples),):
        raise ValueError("f must return one value per sample point")
    if not np.all(np.isfinite(y)):
        raise ValueError("f produced non-finite sample values")
    if ridge is None:
        ridge = 1e-8 * np.linalg.norm(a_mat, 2) ** 2
    if ridge == 0.0:
        coeffs, _, rank, _ = np.linalg.lstsq(a_mat, y, rcond=None)
        if rank < len(centers):
            raise RankDeficiencyError(
                f"collocation matrix rank {rank} < {len(centers)} centers; use a positive ridge"
            )
    else:
        aug = np.vstack([a_mat, math.sqrt(ridge) * np.eye(len(centers))])
        rhs = np.concatenate([y, np.zeros(len(centers))])
        coeffs = np.linalg.lstsq(aug, rhs, rcond=None)[0]
    return ZonalNetwork(dim=centers.dim, kernel=kernel, centers=centers, coefficients=coeffs)


def from_biased_units(a: np.ndarray, directions: np.ndarray, biases: np.ndarray) -> ZonalNetwork:
    """Convert units t -> a_k |x . y_k + b_k| on R^q into normalized sphere form.

    Each unit maps to the center w_k = (y_k, b_k) / sqrt(|y_k|^2 + b_k^2) on
    S^q with coefficient a_k * sqrt(|y_k|^2 + b_k^2).  Evaluating the result
    at the lifted point of x recovers the original value up to the common
    factor 1 / sqrt(|x|^2 + 1):

        sum_k a_k |x . y_k + b_k| = sqrt(|x|^2 + 1) * G(lift(x)).
    """
    a = np.asarray(a, dtype=float)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    biases = np.asarray(biases, dtype=float)
    if not (len(a) == directions.shape[0] == len(biases)):
        raise ValueError("a, directions and biases must have matching lengths")
    scales = np.sqrt(np.sum(directions * directions, axis=1) + biases * biases)
    if np.any(scales == 0):
        raise ValueError("a unit with zero direction and zero bias cannot be normalized")
    centers = np.concatenate([directions, biases[:, None]], axis=1) / scales[:, None]
    q = directions.shape[1]
    return ZonalNetwork(
        dim=q,
        kernel=AbsDot(),
        centers=PointSet(dim=q, points=centers),
        coefficients=a * scales,
    )


def network_to_json(net: ZonalNetwork) -> str:
    kernel: dict = {"kind": "abs"}
    if isinstance(net.kernel, ConvKernel):
        kernel = {"kind": "conv", "l_max": net.kernel.l_max}
    payload = {
        "dim": net.dim,
        "kernel": kernel,
        "centers": [[format(c, ".17g") for c in row] for row in net.centers.points],
        "coefficients": [format(c, ".17g") for c in net.coefficients],
    }
    return json.dumps(payload, indent=2)


def network_from_json(text: str) -> ZonalNetwork:
    payload = json.loads(text)
    kernel: Kernel = AbsDot()
    if payload["kernel"]["kind"] == "conv":
        kernel = ConvKernel(l_max=int(payload["kernel"]["l_max"]))
    elif payload["kernel"]["kind"] != "abs":
        raise ValueError(f"unknown kernel kind {payload['kernel']['kind']!r}")
    dim = int(payload["dim"])
    centers = PointSet(dim=dim, points=np.array([[float(c) for c in row] for row in payload["centers"]]))
    coefficients = np.array([float(c) for c in payload["coefficients"]])
    return ZonalNetwork(dim=dim, kernel=kernel, centers=centers, coefficients=coefficients)
