import json
import math

import numpy as np
import pytest

from composita.gfunction import (
    DagGraph,
    GFunction,
    estimate_lipschitz,
    evaluate,
    example_nine_variable_gfunction,
    example_nine_variable_graph,
    gfunction_from_dict,
    gfunction_to_dict,
    propagation_bound,
    random_lipschitz_instance,
    topological_order,
    validate_dag,
    variables_seen,
)


def naive_recursive_eval(gf: GFunction, x: np.ndarray, node: str | None = None):
    """Memoization-free oracle: recompute every shared subtree from scratch."""
    node = node or gf.graph.sink()
    args = [naive_recursive_eval(gf, x, c) for c in gf.graph.children[node]]
    args.extend(x[i] for i in gf.graph.external_inputs[node])
    return float(gf.functions[node](*[np.asarray(a) for a in args]))


# ---------------------------------------------------------------------------
# Structure
# ---------------------------------------------------------------------------

def test_reference_graph_is_valid():
    assert validate_dag(example_nine_variable_graph()) == []


def test_cycle_is_diagnosed():
    g = DagGraph(children={"a": ("b",), "b": ("a",)}, external_inputs={})
    issues = validate_dag(g)
    assert any("cycle" in msg for msg in issues)


def test_two_sinks_are_diagnosed():
    g = DagGraph(
        children={"x": (), "a": ("x",), "b": ("x",)},
        external_inputs={"x": (0,)},
    )
    issues = validate_dag(g)
    assert any("sink" in msg for msg in issues)


def test_mixed_inputs_are_diagnosed():
    g = DagGraph(
        children={"x": (), "top": ("x",)},
        external_inputs={"x": (0,), "top": (1,)},
    )
    issues = validate_dag(g)
    assert any("identity sources" in msg for msg in issues)


def test_insert_identity_sources_restores_normal_form():
    from composita.gfunction import insert_identity_sources

    g = DagGraph(
        children={"x": (), "top": ("x",)},
        external_inputs={"x": (0,), "top": (1,)},
    )
    fixed = insert_identity_sources(g)
    assert validate_dag(fixed) == []
    assert variables_seen(fixed, "top") == (0, 1)
    assert fixed.children["top"] == ("x", "top__in1")


def test_unknown_child_is_diagnosed():
    g = DagGraph(children={"a": ("ghost",)}, external_inputs={})
    assert any("unknown child" in msg for msg in validate_dag(g))


def test_input_partition_is_checked():
    g = DagGraph(
        children={"x": (), "y": (), "top": ("x", "y")},
        external_inputs={"x": (0,), "y": (0,)},
    )
    assert any("partition" in msg for msg in validate_dag(g))


# ---------------------------------------------------------------------------
# Variables seen
# ---------------------------------------------------------------------------

def test_variables_seen_reference_nodes():
    g = example_nine_variable_graph()
    assert variables_seen(g, "h11") == (3, 4)
    assert variables_seen(g, "h12") == (5, 6, 7, 8)
    assert variables_seen(g, "h10") == (0, 1, 2, 5, 6, 7, 8)


def test_variables_seen_single_source():
    g = DagGraph(children={"s": ()}, external_inputs={"s": (0, 1)})
    assert variables_seen(g, "s") == (0, 1)


def test_variables_seen_chain():
    g = DagGraph(
        children={"a": (), "b": ("a",), "c": ("b",)},
        external_inputs={"a": (0,)},
    )
    assert variables_seen(g, "c") == (0,)


def test_variables_seen_unknown_node():
    with pytest.raises(KeyError):
        variables_seen(example_nine_variable_graph(), "nope")


def test_tree_sink_sees_every_input_once():
    rng = np.random.default_rng(0)
    for _ in range(20):
        # random binary trees are the tree-shaped case
        depth = int(rng.integers(1, 4))
        children = {}
        externals = {}
        counter = [0]

        def build(level, name):
            if level == 0:
                children[name] = ()
                externals[name] = (counter[0],)
                counter[0] += 1
                return
            children[name] = (name + "l", name + "r")
            externals[name] = ()
            build(level - 1, name + "l")
            build(level - 1, name + "r")

        build(depth, "n")
        g = DagGraph(children=children, external_inputs=externals)
        seen = variables_seen(g, "n")
        assert sorted(seen) == list(range(counter[0]))
        assert len(set(seen)) == len(seen)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def test_identity_chain():
    g = DagGraph(
        children={"a": (), "b": ("a",), "c": ("b",)},
        external_inputs={"a": (0,)},
    )
    gf = GFunction(graph=g, functions={v: (lambda u: u) for v in g.nodes()})
    value, _ = evaluate(gf, np.array([0.37]))
    assert value == 0.37


def test_three_node_tree_matches_manual_composition():
    g = DagGraph(
        children={"l": (), "r": (), "top": ("l", "r")},
        external_inputs={"l": (0,), "r": (1,)},
    )
    gf = GFunction(
        graph=g,
        functions={"l": lambda u: u**2, "r": lambda u: u**2, "top": lambda a, b: a + b},
    )
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 2))
    values, _ = evaluate(gf, x)
    assert np.allclose(values, x[:, 0] ** 2 + x[:, 1] ** 2)


def test_reference_graph_matches_hand_expansion():
    gf = example_nine_variable_gfunction()
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.normal(size=9)
        got, _ = evaluate(gf, x)
        s = x.sum()  # identity sources, then sums of sums
        h10 = x[0] + x[1] + x[2] + (x[5] + x[6] + x[7] + x[8])
        h11 = x[3] + x[4]
        h12 = x[5] + x[6] + x[7] + x[8]
        h16 = h12
        h13 = h10 + h11
        h14 = h10 + h11
        h15 = h11 + h12
        h17 = h13 + h14 + h16
        h18 = h15 + h16
        assert got == pytest.approx(h17 + h18)


def test_memoized_equals_naive_recursion():
    gf = example_nine_variable_gfunction()
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.normal(size=9)
        fast, trace = evaluate(gf, x)
        assert fast == naive_recursive_eval(gf, x)
    # shared node evaluated once: the trace carries exactly one entry per node
    assert set(trace) == set(gf.graph.nodes())


def test_non_finite_constituent_is_reported():
    g = DagGraph(children={"a": (), "b": ("a",)}, external_inputs={"a": (0,)})
    gf = GFunction(graph=g, functions={"a": lambda u: u, "b": lambda u: np.log(u)})
    with np.errstate(invalid="ignore"):
        with pytest.raises(ArithmeticError, match="'b'"):
            evaluate(gf, np.array([-1.0]))


# ---------------------------------------------------------------------------
# Lipschitz estimation
# ---------------------------------------------------------------------------

def test_lipschitz_constant_of_constant_function():
    rng = np.random.default_rng(4)
    est = estimate_lipschitz(
        lambda u: np.zeros_like(u) + 5.0, 1, lambda r: r.uniform(-1, 1, 1), 100, rng
    )
    assert est == 0.0


def test_lipschitz_of_lifted_first_coordinate():
    rng = np.random.default_rng(5)
    f = lambda u: u / np.sqrt(u * u + 1.0)
    est = estimate_lipschitz(f, 1, lambda r: r.uniform(-2, 2, 1), 10_000, rng)
    assert 0.9 <= est <= 1.0 + 1e-9


def test_lipschitz_homogeneity():
    rng_a = np.random.default_rng(6)
    rng_b = np.random.default_rng(6)
    f = lambda u, v: np.sin(u) + v
    est1 = estimate_lipschitz(f, 2, lambda r: r.uniform(-3, 3, 2), 500, rng_a)
    est3 = estimate_lipschitz(
        lambda u, v: 3.0 * f(u, v), 2, lambda r: r.uniform(-3, 3, 2), 500, rng_b
    )
    assert est3 == pytest.approx(3.0 * est1, rel=1e-12)


# ---------------------------------------------------------------------------
# Propagation bound
# ---------------------------------------------------------------------------

def test_bound_single_node():
    g = DagGraph(children={"s": ()}, external_inputs={"s": (0,)})
    bound, per_node = propagation_bound(g, {"s": 0.25}, {})
    assert bound == 0.25
    assert per_node == {"s": 0.25}


def test_bound_two_level_chain():
    g = DagGraph(children={"u": (), "v": ("u",)}, external_inputs={"u": (0,)})
    bound, _ = propagation_bound(g, {"u": 0.1, "v": 0.05}, {"v": 2.0})
    assert bound == pytest.approx(0.05 + 2.0 * 0.1)


def test_bound_zero_errors():
    g = example_nine_variable_graph()
    zero = {v: 0.0 for v in g.nodes()}
    lips = {v: 1.0 for v in g.nodes()}
    assert propagation_bound(g, zero, lips)[0] == 0.0


def test_bound_rejects_negative_inputs():
    g = DagGraph(children={"u": (), "v": ("u",)}, external_inputs={"u": (0,)})
    with pytest.raises(ValueError):
        propagation_bound(g, {"u": -0.1, "v": 0.0}, {"v": 1.0})
    with pytest.raises(ValueError):
        propagation_bound(g, {"u": 0.1, "v": 0.0}, {"v": -1.0})


def test_bound_monotone_in_errors_and_constants():
    g = example_nine_variable_graph()
    rng = np.random.default_rng(7)
    eps = {v: float(rng.uniform(0, 0.2)) for v in g.nodes()}
    lips = {v: float(rng.uniform(0.1, 2.0)) for v in g.nodes()}
    base, _ = propagation_bound(g, eps, lips)
    for v in ("h10", "h16", "h19"):
        bumped = dict(eps)
        bumped[v] = eps[v] + 0.05
        assert propagation_bound(g, bumped, lips)[0] >= base
    for v in ("h13", "h17"):
        heavier = dict(lips)
        heavier[v] = lips[v] + 0.5
        assert propagation_bound(g, eps, heavier)[0] >= base


def test_bound_sound_on_random_instances():
    rng = np.random.default_rng(8)
    for _ in range(25):
        exact, approx, errors = random_lipschitz_instance(rng)
        assert validate_dag(exact.graph) == []
        bound, _ = propagation_bound(exact.graph, errors, exact.lipschitz)
        x = rng.uniform(-3, 3, size=(100, exact.graph.n_inputs()))
        fx, _ = evaluate(exact, x)
        gx, _ = evaluate(approx, x)
        assert np.max(np.abs(fx - gx)) <= bound + 1e-9


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def test_gfunction_dict_round_trip():
    spec = {
        "nodes": {
            "a": {"inputs": [0, 1], "function": {"kind": "affine", "coeffs": [1.0, -1.0]},
                  "range": [-2.0, 2.0], "lipschitz": 1.0},
            "b": {"inputs": [2], "function": {"kind": "tanh-affine", "coeffs": [2.0]},
                  "range": [-1.0, 1.0], "lipschitz": 2.0},
            "top": {"children": ["a", "b"], "function": {"kind": "product", "scale": 0.5},
                    "range": [-2.0, 2.0], "lipschitz": 1.0},
        },
        "input_ranges": [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]],
    }
    gf = gfunction_from_dict(spec)
    x = np.array([0.3, -0.4, 0.8])
    value, _ = evaluate(gf, x)
    expected = 0.5 * (0.3 - (-0.4)) * math.tanh(2 * 0.8)
    assert value == pytest.approx(expected)

    descriptors = {v: spec["nodes"][v]["function"] for v in gf.graph.nodes()}
    back = gfunction_to_dict(gf, descriptors)
    gf2 = gfunction_from_dict(json.loads(json.dumps(back)))
    value2, _ = evaluate(gf2, x)
    assert value2 == pytest.approx(value)


def test_gfunction_dict_rejects_unknown_kind():
    spec = {"nodes": {"a": {"inputs": [0], "function": {"kind": "mystery"}}}}
    with pytest.raises(ValueError, match="mystery"):
        gfunction_from_dict(spec)


def test_bump_and_network_builtins():
    from composita.networks import AbsDot, ZonalNetwork, network_to_json
    from composita.sphere import PointSet, fibonacci_sphere, lift_to_sphere

    net = ZonalNetwork(2, AbsDot(), PointSet(2, fibonacci_sphere(5)), np.linspace(-1, 1, 5))
    spec = {
        "nodes": {
            "bump": {"inputs": [0, 1],
                     "function": {"kind": "smooth-bump", "center": [0.2, -0.1], "width": 0.8}},
            "planted": {"inputs": [2, 3],
                        "function": {"kind": "zonal-network", "network": json.loads(network_to_json(net))}},
            "top": {"children": ["bump", "planted"],
                    "function": {"kind": "affine", "coeffs": [1.0, 1.0]}},
        }
    }
    gf = gfunction_from_dict(spec)
    x = np.array([0.3, 0.1, -0.4, 0.9])
    value, trace = evaluate(gf, x)
    bump = math.exp(-((0.3 - 0.2) ** 2 + (0.1 + 0.1) ** 2) / 0.8**2)
    planted = float(net(lift_to_sphere(np.array([-0.4, 0.9]))))
    assert trace["bump"] == pytest.approx(bump)
    assert trace["planted"] == pytest.approx(planted)
    assert value == pytest.approx(bump + planted)


def test_topological_order_children_first():
    g = example_nine_variable_graph()
    order = topological_order(g)
    pos = {v: i for i, v in enumerate(order)}
    for v in g.nodes():
        for c in g.children[v]:
            assert pos[c] < pos[v]
