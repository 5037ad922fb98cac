"""Compositional functions over directed acyclic graphs.

A compositional target is a DAG with one sink, where every node carries a
real-valued constituent function of its in-edges.  Source nodes read the
external inputs; internal nodes read the outputs of their children.  The
module provides structural validation, shared-subexpression evaluation,
sampled Lipschitz estimation, and the recursive worst-case bound that turns
per-node approximation errors into a bound at the sink.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DagGraph",
    "GFunction",
    "validate_dag",
    "topological_order",
    "insert_identity_sources",
    "variables_seen",
    "evaluate",
    "estimate_lipschitz",
    "propagation_bound",
    "example_nine_variable_graph",
    "example_nine_variable_gfunction",
    "gfunction_from_dict",
    "gfunction_to_dict",
    "random_lipschitz_instance",
]


@dataclass(frozen=True)
class DagGraph:
    """Node structure: ordered children and external input indices per node.

    Sources are the nodes without children; in normal form only sources read
    external inputs (one index each or several), and the index sets of the
    sources partition 0..q0-1.  d(v) is the number of children plus the
    number of direct external inputs.
    """

    children: dict[str, tuple[str, ...]]
    external_inputs: dict[str, tuple[int, ...]]

    def __post_init__(self):
        object.__setattr__(
            self, "children", {v: tuple(cs) for v, cs in self.children.items()}
        )
        ext = {v: tuple(self.external_inputs.get(v, ())) for v in self.children}
        object.__setattr__(self, "external_inputs", ext)

    def nodes(self) -> tuple[str, ...]:
        return tuple(self.children.keys())

    def sources(self) -> tuple[str, ...]:
        return tuple(v for v, cs in self.children.items() if not cs)

    def internal(self) -> tuple[str, ...]:
        return tuple(v for v, cs in self.children.items() if cs)

    def in_degree(self, v: str) -> int:
        return len(self.children[v]) + len(self.external_inputs[v])

    def sinks(self) -> tuple[str, ...]:
        referenced = {c for cs in self.children.values() for c in cs}
        return tuple(v for v in self.children if v not in referenced)

    def sink(self) -> str:
        sinks = self.sinks()
        if len(sinks) != 1:
            raise ValueError(f"expected exactly one sink, found {list(sinks)}")
        return sinks[0]

    def n_inputs(self) -> int:
        return sum(len(ix) for ix in self.external_inputs.values())


def validate_dag(g: DagGraph) -> list[str]:
    """Structural diagnostics; an empty list means the graph is valid."""
    issues: list[str] = []
    nodes = set(g.children)
    for v, cs in g.children.items():
        for c in cs:
            if c not in nodes:
                issues.append(f"node {v!r} references unknown child {c!r}")
    if issues:
        return issues

    order = topological_order(g, strict=False)
    if order is None:
        issues.append("graph contains a cycle")
        return issues

    sinks = g.sinks()
    if len(sinks) != 1:
        issues.append(f"graph must have exactly one sink, found {sorted(sinks)}")

    for v in g.nodes():
        if g.in_degree(v) < 1:
            issues.append(f"node {v!r} has no inputs")
        if g.children[v] and g.external_inputs[v]:
            issues.append(
                f"node {v!r} mixes children with direct external inputs; "
                "insert identity sources instead"
            )

    if len(sinks) == 1:
        reach = {sinks[0]}
        for v in reversed(order):
            if v in reach:
                reach.update(g.children[v])
        for v in g.nodes():
            if v not in reach:
                issues.append(f"node {v!r} has no path to the sink")

    seen_ix = [i for v in g.nodes() for i in g.external_inputs[v]]
    if sorted(seen_ix) != list(range(len(seen_ix))):
        issues.append("external input indices must partition 0..q0-1 without repeats")
    return issues


def topological_order(g: DagGraph, strict: bool = True) -> list[str] | None:
    """Children-first order; None (or ValueError when strict) on a cycle."""
    state: dict[str, int] = {}
    order: list[str] = []

    def visit(v: str) -> bool:
        if state.get(v) == 2:
            return True
        if state.get(v) == 1:
            return False
        state[v] = 1
        for c in g.children[v]:
            if not visit(c):
                return False
        state[v] = 2
        order.append(v)
        return True

    for v in g.nodes():
        if not visit(v):
            if strict:
                raise ValueError("graph contains a cycle")
            return None
    return order


def insert_identity_sources(g: DagGraph) -> DagGraph:
    """Rewrite direct external inputs of non-source nodes as identity sources.

    Every external input of a node that also has children is replaced by a
    fresh single-input source node spliced into the child list at the same
    argument position, which restores the normal form the validator expects.
    The new sources are named ``<node>__in<i>`` after the input index.
    """
    children = {v: list(cs) for v, cs in g.children.items()}
    externals = {v: g.external_inputs[v] for v in g.children}
    for v in g.nodes():
        if g.children[v] and g.external_inputs[v]:
            for i in g.external_inputs[v]:
                name = f"{v}__in{i}"
                children[name] = []
                externals[name] = (i,)
                children[v].append(name)
            externals[v] = ()
    return DagGraph(
        children={v: tuple(cs) for v, cs in children.items()},
        external_inputs=externals,
    )


def variables_seen(g: DagGraph, v: str) -> tuple[int, ...]:
    """External input indices reachable from v, concatenated in child order.

    Sources report their own inputs; other nodes concatenate the variables
    seen by each child in order, followed by any direct external inputs.
    """
    if v not in g.children:
        raise KeyError(f"unknown node {v!r}")
    memo: dict[str, tuple[int, ...]] = {}

    def seen(u: str) -> tuple[int, ...]:
        if u not in memo:
            parts: list[int] = []
            for c in g.children[u]:
                parts.extend(seen(c))
            parts.extend(g.external_inputs[u])
            memo[u] = tuple(parts)
        return memo[u]

    return seen(v)


@dataclass(frozen=True)
class GFunction:
    """A DAG together with one constituent function per node.

    Each constituent maps its d(v) inputs (numpy arrays broadcast
    elementwise) to one output array.  Declared output ranges and Lipschitz
    constants travel with the function; both may be None when unknown.
    """

    graph: DagGraph
    functions: dict[str, Callable]
    output_range: dict[str, tuple[float, float]] = field(default_factory=dict)
    lipschitz: dict[str, float] = field(default_factory=dict)
    input_ranges: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        missing = [v for v in self.graph.nodes() if v not in self.functions]
        if missing:
            raise ValueError(f"missing constituent functions for {missing}")
        if not self.input_ranges:
            object.__setattr__(
                self, "input_ranges", tuple((-1.0, 1.0) for _ in range(self.graph.n_inputs()))
            )

    def __call__(self, x):
        return evaluate(self, x)[0]


def evaluate(gf: GFunction, x) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Evaluate the sink over a batch of inputs, sharing node values.

    x has shape (q0,) or (n, q0).  Returns the sink values together with a
    per-node trace; every node is computed exactly once per batch.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = np.atleast_2d(x)
    if batch.shape[1] != gf.graph.n_inputs():
        raise ValueError(f"expected {gf.graph.n_inputs()} inputs, got {batch.shape[1]}")
    trace: dict[str, np.ndarray] = {}
    for v in topological_order(gf.graph):
        args = [trace[c] for c in gf.graph.children[v]]
        args.extend(batch[:, i] for i in gf.graph.external_inputs[v])
        value = np.asarray(gf.functions[v](*args), dtype=float)
        value = np.broadcast_to(value, (batch.shape[0],)).copy()
        if not np.all(np.isfinite(value)):
            raise ArithmeticError(f"constituent at node {v!r} produced a non-finite value")
        trace[v] = value
    sink = trace[gf.graph.sink()]
    if single:
        return float(sink[0]), {v: float(t[0]) for v, t in trace.items()}
    return sink, trace


def estimate_lipschitz(
    f: Callable,
    n_args: int,
    sampler: Callable[[np.random.Generator], np.ndarray],
    pairs: int,
    rng: np.random.Generator,
    metric: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
) -> float:
    """Max sampled ratio |f(a) - f(b)| / rho(a, b); a lower estimate of the true constant.

    rho defaults to the coordinatewise absolute-difference sum.  The sampler
    maps an rng to one argument tuple of shape (n_args,).
    """
    if pairs < 1:
        raise ValueError("need at least one pair")
    if metric is None:
        metric = lambda a, b: np.sum(np.abs(a - b), axis=-1)
    a = np.array([sampler(rng) for _ in range(pairs)], dtype=float).reshape(pairs, n_args)
    b = np.array([sampler(rng) for _ in range(pairs)], dtype=float).reshape(pairs, n_args)
    # nudge half the pairs close together to catch the local slope
    half = pairs // 2
    b[:half] = a[:half] + 1e-4 * (b[:half] - a[:half])
    fa = np.asarray(f(*(a[:, i] for i in range(n_args))), dtype=float)
    fb = np.asarray(f(*(b[:, i] for i in range(n_args))), dtype=float)
    dist = metric(a, b)
    good = dist > 0
    if not np.any(good):
        return 0.0
    return float(np.max(np.abs(fa[good] - fb[good]) / dist[good]))


def propagation_bound(
    g: DagGraph, node_errors: dict[str, float], node_lipschitz: dict[str, float]
) -> tuple[float, dict[str, float]]:
    """Recursive worst-case bound on the sink deviation.

    B_v = eps_v for sources and B_v = eps_v + L_v * sum over children of B_u
    otherwise; the first return value is the bound at the sink.  eps_v is the
    sup error of the node-v approximation over its own sphere/domain and L_v
    a Lipschitz constant of the exact constituent at v.
    """
    bounds: dict[str, float] = {}
    for v in topological_order(g):
        eps = float(node_errors[v])
        if eps < 0:
            raise ValueError(f"negative error at node {v!r}")
        if g.children[v]:
            lip = float(node_lipschitz[v])
            if lip < 0:
                raise ValueError(f"negative Lipschitz constant at node {v!r}")
            bounds[v] = eps + lip * sum(bounds[c] for c in g.children[v])
        else:
            bounds[v] = eps
    return bounds[g.sink()], bounds


# ---------------------------------------------------------------------------
# Reference graph with shared subexpressions (nine external inputs)
# ---------------------------------------------------------------------------

def example_nine_variable_graph() -> DagGraph:
    """A ten-node DAG over nine inputs with shared children and one sink.

    Externals enter through identity sources ``x0`` .. ``x8``; the nodes
    ``h10`` and ``h12`` read several of them, ``h16`` is shared three ways.
    """
    children = {
        **{f"x{i}": () for i in range(9)},
        "h10": ("x0", "x1", "x2", "h16"),
        "h11": ("x3", "x4"),
        "h12": ("x5", "x6", "x7", "x8"),
        "h13": ("h10", "h11"),
        "h14": ("h10", "h11"),
        "h15": ("h11", "h12"),
        "h16": ("h12",),
        "h17": ("h13", "h14", "h16"),
        "h18": ("h15", "h16"),
        "h19": ("h17", "h18"),
    }
    externals = {f"x{i}": (i,) for i in range(9)}
    return DagGraph(children=children, external_inputs=externals)


def example_nine_variable_gfunction() -> GFunction:
    """The reference graph with every constituent equal to the sum of its inputs."""
    g = example_nine_variable_graph()
    functions = {v: (lambda *args: sum(args)) for v in g.nodes()}
    return GFunction(graph=g, functions=functions)


# ---------------------------------------------------------------------------
# Constituent builtins and (de)serialization
# ---------------------------------------------------------------------------

def _builtin_affine(params):
    coeffs = np.asarray(params["coeffs"], dtype=float)
    const = float(params.get("const", 0.0))

    def f(*args):
        return const + sum(c * a for c, a in zip(coeffs, args))

    return f


def _builtin_product(params):
    scale = float(params.get("scale", 1.0))

    def f(*args):
        out = scale
        for a in args:
            out = out * a
        return out

    return f


def _builtin_bump(params):
    center = np.asarray(params["center"], dtype=float)
    width = float(params["width"])

    def f(*args):
        ss = sum((a - c) ** 2 for a, c in zip(args, center))
        return np.exp(-ss / (width * width))

    return f


def _builtin_tanh_affine(params):
    inner = _builtin_affine(params)
    scale = float(params.get("outer_scale", 1.0))

    def f(*args):
        return scale * np.tanh(inner(*args))

    return f


def _builtin_zonal_network(params):
    from .networks import network_from_json
    from .sphere import lift_to_sphere

    net = network_from_json(json.dumps(params["network"]))

    def f(*args):
        stacked = np.stack([np.asarray(a, dtype=float) for a in args], axis=-1)
        return net(lift_to_sphere(stacked))

    return f


_BUILTINS = {
    "affine": _builtin_affine,
    "product": _builtin_product,
    "smooth-bump": _builtin_bump,
    "tanh-affine": _builtin_tanh_affine,
    "zonal-network": _builtin_zonal_network,
}


def gfunction_from_dict(spec: dict) -> GFunction:
    """Build a GFunction from its JSON-style description.

    Node entries carry ``children``, optional ``inputs`` (external indices),
    a ``function`` descriptor (one of the named builtins with parameters),
    and optional ``range`` / ``lipschitz`` declarations.
    """
    nodes = spec["nodes"]
    children = {v: tuple(nd.get("children", ())) for v, nd in nodes.items()}
    externals = {v: tuple(nd.get("inputs", ())) for v, nd in nodes.items()}
    graph = DagGraph(children=children, external_inputs=externals)
    functions = {}
    output_range = {}
    lipschitz = {}
    for v, nd in nodes.items():
        desc = nd["function"]
        kind = desc["kind"]
        if kind not in _BUILTINS:
            raise ValueError(f"unknown constituent kind {kind!r} at node {v!r}")
        functions[v] = _BUILTINS[kind](desc)
        if "range" in nd:
            lo, hi = nd["range"]
            output_range[v] = (float(lo), float(hi))
        if "lipschitz" in nd:
            lipschitz[v] = float(nd["lipschitz"])
    input_ranges = tuple(
        (float(lo), float(hi)) for lo, hi in spec.get("input_ranges", ())
    )
    gf = GFunction(
        graph=graph,
        functions=functions,
        output_range=output_range,
        lipschitz=lipschitz,
        input_ranges=input_ranges,
    )
    issues = validate_dag(graph)
    if issues:
        raise ValueError("invalid graph: " + "; ".join(issues))
    return gf


def gfunction_to_dict(gf: GFunction, descriptors: dict[str, dict]) -> dict:
    """Serialize structure plus caller-supplied function descriptors."""
    nodes = {}
    for v in gf.graph.nodes():
        entry: dict = {"function": descriptors[v]}
        if gf.graph.children[v]:
            entry["children"] = list(gf.graph.children[v])
        if gf.graph.external_inputs[v]:
            entry["inputs"] = list(gf.graph.external_inputs[v])
        if v in gf.output_range:
            entry["range"] = list(gf.output_range[v])
        if v in gf.lipschitz:
            entry["lipschitz"] = gf.lipschitz[v]
        nodes[v] = entry
    return {"nodes": nodes, "input_ranges": [list(r) for r in gf.input_ranges]}


# ---------------------------------------------------------------------------
# Random instances with analytically known Lipschitz constants
# ---------------------------------------------------------------------------

def random_lipschitz_instance(
    rng: np.random.Generator, max_internal: int = 6
) -> tuple[GFunction, GFunction, dict[str, float]]:
    """A random compositional function, a perturbed copy, and per-node sup errors.

    Constituents are affine or saturating maps whose exact Lipschitz
    constants (coordinatewise-sum metric) are recorded on the instance.  The
    perturbed copy adds delta_v * sin(.) at each node, so its sup deviation
    from the original node function is exactly bounded by delta_v.
    """
    n_sources = int(rng.integers(1, 4))
    n_internal = int(rng.integers(1, max_internal + 1))
    names_s = [f"s{i}" for i in range(n_sources)]
    names_v = [f"v{i}" for i in range(n_internal)]

    children: dict[str, tuple[str, ...]] = {}
    externals: dict[str, tuple[int, ...]] = {}
    next_input = 0
    for s in names_s:
        k = int(rng.integers(1, 4))
        externals[s] = tuple(range(next_input, next_input + k))
        children[s] = ()
        next_input += k

    available = list(names_s)
    for i, v in enumerate(names_v):
        k = int(rng.integers(1, min(3, len(available)) + 1))
        picked = list(rng.choice(len(available), size=k, replace=False))
        children[v] = tuple(available[j] for j in picked)
        externals[v] = ()
        if i == n_internal - 1:
            # the last node absorbs everything still dangling so one sink remains
            used = {c for cs in children.values() for c in cs}
            dangling = [u for u in available if u not in used and u != v]
            children[v] = tuple(dict.fromkeys(children[v] + tuple(dangling)))
        available.append(v)

    graph = DagGraph(children=children, external_inputs=externals)

    functions: dict[str, Callable] = {}
    perturbed: dict[str, Callable] = {}
    lipschitz: dict[str, float] = {}
    errors: dict[str, float] = {}
    for v in graph.nodes():
        d = graph.in_degree(v)
        coeffs = rng.uniform(-2.0, 2.0, size=d)
        const = float(rng.uniform(-1.0, 1.0))
        kind = rng.integers(0, 3)
        if kind == 0:
            f = _builtin_affine({"coeffs": coeffs, "const": const})
            lip = float(np.max(np.abs(coeffs)))
        elif kind == 1:
            scale = float(rng.uniform(0.2, 2.0))
            f = _builtin_tanh_affine({"coeffs": coeffs, "const": const, "outer_scale": scale})
            lip = scale * float(np.max(np.abs(coeffs)))
        else:
            scale = float(rng.uniform(0.2, 2.0))
            inner = _builtin_affine({"coeffs": coeffs, "const": const})
            f = (lambda inner, scale: lambda *args: scale * np.sin(inner(*args)))(inner, scale)
            lip = scale * float(np.max(np.abs(coeffs)))
        delta = float(10.0 ** rng.uniform(-4.0, -1.0))
        wiggle = rng.uniform(-1.5, 1.5, size=d)
        phase = float(rng.uniform(0.0, 2.0 * math.pi))

        def g(*args, _f=f, _delta=delta, _w=wiggle, _phi=phase):
            bump = np.sin(sum(w * a for w, a in zip(_w, args)) + _phi)
            return _f(*args) + _delta * bump

        functions[v] = f
        perturbed[v] = g
        lipschitz[v] = lip
        errors[v] = delta

    exact = GFunction(graph=graph, functions=functions, lipschitz=lipschitz)
    approx = GFunction(graph=graph, functions=perturbed)
    return exact, approx, errors
