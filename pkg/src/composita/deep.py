"""Per-node shallow approximation of compositional targets, and rate studies.

Every constituent f_v of a compositional target is approximated by a zonal
network on the sphere S^{d(v)}: child outputs are affinely compressed into a
box, the box is carried onto the upper hemisphere by the standard lift, and
the network is fitted there.  Composing the per-node networks along the same
graph yields the deep approximant; fitting one network on S^{q0} to the
composite target gives the shallow baseline the studies compare against.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DegenerateStudyError
from .gfunction import DagGraph, GFunction, evaluate, propagation_bound, topological_order
from .networks import AbsDot, Kernel, ZonalNetwork, choose_centers, fit_shallow
from .sphere import PointSet, lift_to_sphere, pairwise_geodesic

__all__ = [
    "soft_clip",
    "NodeNormalizer",
    "lifted_constituent",
    "FitConfig",
    "DeepApproximation",
    "lift_to_deep",
    "sink_errors_with_bound",
    "max_internal_in_degree",
    "RateRow",
    "RateTable",
    "rate_study",
    "fit_loglog_slope",
    "binary_tree_target",
]


def soft_clip(u: np.ndarray, radius: float) -> np.ndarray:
    """Identity on [-radius, radius], saturating smoothly (C^2) to 2*radius beyond."""
    u = np.asarray(u, dtype=float)
    s = np.clip((np.abs(u) - radius) / radius, 0.0, None)
    tail = radius + radius * s / np.sqrt(1.0 + s * s)
    return np.where(np.abs(u) <= radius, u, np.sign(u) * tail)


@dataclass(frozen=True)
class NodeNormalizer:
    """Invertible affine compression of per-child ranges into [-radius, radius]^d."""

    lo: np.ndarray
    hi: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-d arrays of equal length")
        if np.any(hi <= lo):
            raise ValueError("every range must have positive width")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def normalize(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return self.radius * (2.0 * y - (self.hi + self.lo)) / (self.hi - self.lo)

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return ((self.hi - self.lo) * z / self.radius + (self.hi + self.lo)) / 2.0

    def lift(self, y: np.ndarray) -> np.ndarray:
        """Map raw child-value tuples (n, d) onto S^d through the hemisphere lift."""
        return lift_to_sphere(self.normalize(y))


def lifted_constituent(f: Callable, norm: NodeNormalizer) -> Callable:
    """View a box function as an even function on the whole sphere S^d.

    On the lift of the box the value agrees with f; elsewhere the point is
    reflected to the upper hemisphere, pulled back to the plane, and softly
    saturated into (twice) the box before f is applied.  The result is even
    and Lipschitz whenever f is.
    """
    d = norm.dim

    def on_sphere(z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        last = z[:, d]
        flip = np.where(last >= 0.0, 1.0, -1.0)
        safe_last = np.maximum(np.abs(last), 1e-12)
        plane = (z[:, :d] * flip[:, None]) / safe_last[:, None]
        boxed = soft_clip(plane, norm.radius)
        args = norm.denormalize(boxed)
        return np.asarray(f(*(args[:, i] for i in range(d))), dtype=float)

    return on_sphere


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the per-node fitting pipeline."""

    samples_per_center: int = 4
    ridge: float | None = None
    kernel: Kernel = field(default_factory=AbsDot)
    radius: float = 1.0
    node_probes: int = 2048
    seed: int = 0


def _cell_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


def _box_samples(ranges: np.ndarray, count: int, seed: int) -> np.ndarray:
    """Deterministic low-discrepancy samples of a box given as (d, 2) bounds."""
    from scipy.stats import qmc

    d = ranges.shape[0]
    m = 1 << max(3, math.ceil(math.log2(max(count, 2))))
    unit = qmc.Sobol(d, scramble=True, seed=seed).random(m)[:count]
    return ranges[:, 0] + unit * (ranges[:, 1] - ranges[:, 0])


def _node_ranges(gf: GFunction, v: str) -> np.ndarray:
    """Per-argument (lo, hi) rows for node v: child ranges then input ranges."""
    rows = []
    for c in gf.graph.children[v]:
        if c not in gf.output_range:
            raise ValueError(f"node {c!r} has no declared output range")
        rows.append(gf.output_range[c])
    for i in gf.graph.external_inputs[v]:
        rows.append(gf.input_ranges[i])
    return np.asarray(rows, dtype=float)


@dataclass(frozen=True)
class DeepApproximation:
    """Per-node zonal networks composed along the target's graph."""

    graph: DagGraph
    networks: dict[str, ZonalNetwork]
    normalizers: dict[str, NodeNormalizer]
    node_errors: dict[str, float]
    bound: float

    def node_outputs(self, x) -> dict[str, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        trace: dict[str, np.ndarray] = {}
        for v in topological_order(self.graph):
            cols = [trace[c] for c in self.graph.children[v]]
            cols.extend(x[:, i] for i in self.graph.external_inputs[v])
            raw = np.stack(cols, axis=1)
            trace[v] = self.networks[v](self.normalizers[v].lift(raw))
        return trace

    def __call__(self, x) -> np.ndarray:
        return self.node_outputs(x)[self.graph.sink()]


def lift_to_deep(gf: GFunction, n_centers: int, config: FitConfig = FitConfig()) -> DeepApproximation:
    """Fit one zonal network per node and compose them along the graph.

    Per-node sup errors are measured on low-discrepancy probes of the node's
    declared input box; the returned bound feeds them through the recursive
    error-propagation formula with the declared Lipschitz constants.
    """
    networks: dict[str, ZonalNetwork] = {}
    normalizers: dict[str, NodeNormalizer] = {}
    errors: dict[str, float] = {}
    for k, v in enumerate(topological_order(gf.graph)):
        ranges = _node_ranges(gf, v)
        norm = NodeNormalizer(lo=ranges[:, 0], hi=ranges[:, 1], radius=config.radius)
        target = gf.functions[v]
        d = norm.dim
        try:
            centers = choose_centers(d, n_centers, _cell_seed(config.seed, 1, k))
            samples_raw = _box_samples(
                ranges, config.samples_per_center * n_centers, _cell_seed(config.seed, 2, k)
            )
            lifted = lifted_constituent(target, norm)
            net = fit_shallow(
                lifted,
                centers,
                PointSet(dim=d, points=norm.lift(samples_raw)),
                ridge=config.ridge,
                kernel=config.kernel,
            )
        except Exception as exc:
            raise RuntimeError(f"fit failed at node {v!r}: {exc}") from exc
        probes_raw = _box_samples(ranges, config.node_probes, _cell_seed(config.seed, 3, k))
        exact = np.asarray(target(*(probes_raw[:, i] for i in range(d))), dtype=float)
        errors[v] = float(np.max(np.abs(exact - net(norm.lift(probes_raw)))))
        networks[v] = net
        normalizers[v] = norm
    bound, _ = propagation_bound(gf.graph, errors, gf.lipschitz)
    return DeepApproximation(
        graph=gf.graph, networks=networks, normalizers=normalizers, node_errors=errors, bound=bound
    )


def sink_errors_with_bound(
    gf: GFunction, deep: DeepApproximation, x: np.ndarray
) -> tuple[np.ndarray, float]:
    """Observed |target - deep| per probe, with the matching propagation bound.

    The per-node errors behind the bound are enlarged to cover the child
    tuples actually encountered while evaluating the approximant on x, so
    the comparison observed <= bound is meaningful probe-by-probe.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    exact_sink, _ = evaluate(gf, x)
    trace = deep.node_outputs(x)
    errors = dict(deep.node_errors)
    for v in topological_order(deep.graph):
        cols = [trace[c] for c in deep.graph.children[v]]
        cols.extend(x[:, i] for i in deep.graph.external_inputs[v])
        raw = np.stack(cols, axis=1)
        exact_here = np.asarray(gf.functions[v](*(raw[:, i] for i in range(raw.shape[1]))), dtype=float)
        seen = float(np.max(np.abs(exact_here - trace[v])))
        errors[v] = max(errors[v], seen)
    bound, _ = propagation_bound(deep.graph, errors, gf.lipschitz)
    return np.abs(exact_sink - trace[deep.graph.sink()]), bound


def max_internal_in_degree(g: DagGraph) -> int:
    """Largest in-degree over the non-source nodes; sets the deep rate exponent."""
    internal = g.internal()
    if not internal:
        raise ValueError("graph has no internal nodes")
    return max(g.in_degree(v) for v in internal)


# ---------------------------------------------------------------------------
# Rate studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateRow:
    n: int
    seed: int
    shallow_err: float
    deep_err: float
    bound: float
    probe_mesh: float


@dataclass(frozen=True)
class RateTable:
    rows: tuple[RateRow, ...]
    shallow_slope: tuple[float, float] | None
    deep_slope: tuple[float, float] | None
    diagnostics: tuple[str, ...] = ()

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def fit_loglog_slope(n_values, errors) -> tuple[float, float]:
    """Least-squares slope of log(error) against log(n), with its standard error."""
    n_values = np.asarray(n_values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(n_values) < 3:
        raise DegenerateStudyError("need at least three rows for a slope fit")
    if np.any(errors <= 0.0):
        raise DegenerateStudyError(
            "nonpositive errors in the table; target is reproduced exactly and the study is degenerate"
        )
    lx = np.log(n_values)
    ly = np.log(errors)
    xbar = lx.mean()
    sxx = np.sum((lx - xbar) ** 2)
    slope = float(np.sum((lx - xbar) * (ly - ly.mean())) / sxx)
    intercept = ly.mean() - slope * xbar
    resid = ly - (intercept + slope * lx)
    dof = max(len(lx) - 2, 1)
    stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx))
    return slope, stderr


def _lifted_probe_mesh(lifted_probes: np.ndarray, lifted_dense: np.ndarray) -> float:
    """Covering radius of the probe set relative to a denser reference cloud."""
    dists = pairwise_geodesic(lifted_dense, lifted_probes)
    return float(np.max(np.min(dists, axis=1)))


def _composite_ranges(gf: GFunction) -> np.ndarray:
    return np.asarray(gf.input_ranges, dtype=float)


def _study_cell(gf: GFunction, n: int, seed: int, probe_count: int, config: FitConfig) -> RateRow:
    q0 = gf.graph.n_inputs()
    box = _composite_ranges(gf)
    cell_cfg = replace(config, seed=_cell_seed(config.seed, n, seed))

    probes = _box_samples(box, probe_count, _cell_seed(config.seed, n, seed, 7))
    dense = _box_samples(box, 4 * probe_count, _cell_seed(config.seed, n, seed, 8))
    shallow_norm = NodeNormalizer(lo=box[:, 0], hi=box[:, 1], radius=config.radius)
    lifted_probes = shallow_norm.lift(probes)
    probe_mesh = _lifted_probe_mesh(lifted_probes, shallow_norm.lift(dense))

    # shallow baseline: one network on S^q0 for the whole composite
    composite = lifted_constituent(lambda *args: gf(np.stack(args, axis=1)), shallow_norm)
    centers = choose_centers(q0, n, _cell_seed(cell_cfg.seed, 4))
    samples_raw = _box_samples(box, config.samples_per_center * n, _cell_seed(cell_cfg.seed, 5))
    shallow_net = fit_shallow(
        composite,
        centers,
        PointSet(dim=q0, points=shallow_norm.lift(samples_raw)),
        ridge=config.ridge,
        kernel=config.kernel,
    )
    exact, _ = evaluate(gf, probes)
    shallow_err = float(np.max(np.abs(exact - shallow_net(lifted_probes))))

    deep = lift_to_deep(gf, n, cell_cfg)
    deep_errors, bound = sink_errors_with_bound(gf, deep, probes)
    return RateRow(
        n=n,
        seed=seed,
        shallow_err=shallow_err,
        deep_err=float(np.max(deep_errors)),
        bound=bound,
        probe_mesh=probe_mesh,
    )


def rate_study(
    gf: GFunction,
    n_list: list[int],
    seeds: list[int],
    probe_count: int = 2048,
    config: FitConfig = FitConfig(),
    threads: int = 1,
) -> RateTable:
    """Shallow and deep sup errors over a grid of network sizes and seeds.

    Every (n, seed) cell is independent and deterministic given the config
    seed, so the table is identical for any thread count.
    """
    if len(n_list) < 4:
        raise ValueError("need at least four network sizes")
    if sorted(n_list) != list(n_list) or len(set(n_list)) != len(n_list):
        raise ValueError("n_list must be strictly increasing")
    cells = [(n, s) for n in n_list for s in seeds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {c: pool.submit(_study_cell, gf, c[0], c[1], probe_count, config) for c in cells}
            results = {c: futures[c].result() for c in cells}
    else:
        results = {c: _study_cell(gf, c[0], c[1], probe_count, config) for c in cells}
    rows = tuple(results[c] for c in cells)

    diagnostics: list[str] = []
    ns = np.array([r.n for r in rows], dtype=float)
    shallow = np.array([r.shallow_err for r in rows])
    deep = np.array([r.deep_err for r in rows])
    shallow_slope = deep_slope = None
    try:
        shallow_slope = fit_loglog_slope(ns, shallow)
    except DegenerateStudyError as exc:
        diagnostics.append(f"shallow slope skipped: {exc}")
    try:
        deep_slope = fit_loglog_slope(ns, deep)
    except DegenerateStudyError as exc:
        diagnostics.append(f"deep slope skipped: {exc}")
    return RateTable(
        rows=rows,
        shallow_slope=shallow_slope,
        deep_slope=deep_slope,
        diagnostics=tuple(diagnostics),
    )


# ---------------------------------------------------------------------------
# Benchmark target: a binary tree over four inputs
# ---------------------------------------------------------------------------

def binary_tree_target(frequency: float = 1.2, pad: float = 0.1) -> GFunction:
    """Four external inputs feeding two bivariate sources and one combining sink.

    Constituents are smooth with analytically bounded Lipschitz constants;
    declared output ranges carry `pad` of slack so that child values produced
    by imperfect approximants stay inside the boxes the parents were fitted
    on.
    """
    w = frequency

    def left(u, v):
        return np.exp(-((u - 0.2) ** 2 + (v + 0.1) ** 2)) * np.cos(w * (u + v))

    def right(u, v):
        return np.exp(-0.5 * ((u + 0.3) ** 2 + (v - 0.2) ** 2)) * np.sin(w * (u - v))

    def top(a, b):
        return a * b + 0.5 * np.cos(w * (a - b))

    # max |partial| bounds on the padded boxes: the gaussian factor and its
    # slope are <= 1 and ~0.86 sqrt(s), the trig factor contributes w
    lip_source = w + 1.0
    r = 1.0 + pad
    lip_top = r + 0.5 * w

    graph = DagGraph(
        children={"s_left": (), "s_right": (), "top": ("s_left", "s_right")},
        external_inputs={"s_left": (0, 1), "s_right": (2, 3), "top": ()},
    )
    return GFunction(
        graph=graph,
        functions={"s_left": left, "s_right": right, "top": top},
        output_range={"s_left": (-r, r), "s_right": (-r, r), "top": (-r * r - 0.5, r * r + 0.5)},
        lipschitz={"s_left": lip_source, "s_right": lip_source, "top": lip_top},
        input_ranges=((-1.0, 1.0),) * 4,
    )
