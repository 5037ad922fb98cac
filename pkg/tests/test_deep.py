import math

import numpy as np
import pytest

from composita.deep import (
    FitConfig,
    NodeNormalizer,
    binary_tree_target,
    fit_loglog_slope,
    lift_to_deep,
    lifted_constituent,
    max_internal_in_degree,
    rate_study,
    sink_errors_with_bound,
    soft_clip,
    _box_samples,
)
from composita.errors import DegenerateStudyError
from composita.gfunction import DagGraph, GFunction, evaluate, example_nine_variable_graph
from composita.networks import AbsDot, ZonalNetwork
from composita.sphere import PointSet, fibonacci_sphere


# ---------------------------------------------------------------------------
# Normalization and lifting
# ---------------------------------------------------------------------------

def test_soft_clip_identity_inside_and_bounded_outside():
    u = np.linspace(-0.99, 0.99, 21)
    assert np.array_equal(soft_clip(u, 1.0), u)
    big = np.array([-50.0, -3.0, 3.0, 50.0])
    clipped = soft_clip(big, 1.0)
    assert np.all(np.abs(clipped) <= 2.0)
    assert np.all(np.sign(clipped) == np.sign(big))


def test_normalizer_round_trip():
    norm = NodeNormalizer(lo=np.array([-2.0, 0.5]), hi=np.array([3.0, 1.5]))
    rng = np.random.default_rng(0)
    y = rng.uniform([-2.0, 0.5], [3.0, 1.5], size=(100, 2))
    back = norm.denormalize(norm.normalize(y))
    assert np.max(np.abs(back - y)) < 1e-12
    z = norm.normalize(y)
    assert np.all(np.abs(z) <= 1.0 + 1e-12)


def test_normalizer_rejects_empty_ranges():
    with pytest.raises(ValueError):
        NodeNormalizer(lo=np.array([0.0]), hi=np.array([0.0]))


def test_lifted_constituent_matches_on_box_and_is_even():
    norm = NodeNormalizer(lo=np.array([-1.0, -1.0]), hi=np.array([1.0, 1.0]))
    f = lambda u, v: u * v + np.cos(u - v)
    lifted = lifted_constituent(f, norm)
    rng = np.random.default_rng(1)
    y = rng.uniform(-1, 1, size=(200, 2))
    z = norm.lift(y)
    assert np.max(np.abs(lifted(z) - f(y[:, 0], y[:, 1]))) < 1e-12
    sphere_pts = fibonacci_sphere(300)
    assert np.max(np.abs(lifted(sphere_pts) - lifted(-sphere_pts))) < 1e-12


# ---------------------------------------------------------------------------
# Deep lifting
# ---------------------------------------------------------------------------

def tiny_tree(fn_left, fn_right, fn_top, ranges=(-1.2, 1.2)):
    g = DagGraph(
        children={"l": (), "r": (), "top": ("l", "r")},
        external_inputs={"l": (0, 1), "r": (2, 3), "top": ()},
    )
    return GFunction(
        graph=g,
        functions={"l": fn_left, "r": fn_right, "top": fn_top},
        output_range={"l": ranges, "r": ranges, "top": (-3.0, 3.0)},
        lipschitz={"l": 2.0, "r": 2.0, "top": 2.0},
        input_ranges=((-1.0, 1.0),) * 4,
    )


def test_constant_constituents_fit_improves_with_size():
    # a finite absolute-dot sum is never exactly constant (its kernel carries
    # every even harmonic), so constants fit like any other smooth target
    gf = tiny_tree(
        lambda u, v: np.full_like(u, 0.4),
        lambda u, v: np.full_like(u, -0.3),
        lambda a, b: np.full_like(a, 1.1),
    )
    x = _box_samples(np.array(gf.input_ranges, float), 200, 42)
    errs = []
    for n in (8, 32, 128):
        deep = lift_to_deep(gf, n, FitConfig(seed=1))
        errs.append(np.max(np.abs(deep(x) - 1.1)))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 5e-3


def test_planted_networks_recovered():
    # constituents that are zonal networks on the very centers the lift picks;
    # coefficient mass keeps child outputs inside the declared unit boxes
    from composita.deep import _cell_seed
    from composita.networks import choose_centers

    norm = NodeNormalizer(lo=np.array([-1.0, -1.0]), hi=np.array([1.0, 1.0]))
    n_centers, seed = 24, 2

    def planted(node_index, coeff_seed):
        centers = choose_centers(2, n_centers, _cell_seed(seed, 1, node_index))
        idx = np.random.default_rng(coeff_seed).choice(n_centers, 6, replace=False)
        net = ZonalNetwork(2, AbsDot(), PointSet(2, centers.points[idx]),
                           np.random.default_rng(coeff_seed).uniform(-0.15, 0.15, 6))
        return lambda u, v: net(norm.lift(np.stack([u, v], axis=1)))

    # topological order of the tiny tree is (l, r, top)
    gf = tiny_tree(planted(0, 10), planted(1, 11), planted(2, 12), ranges=(-1.0, 1.0))
    deep = lift_to_deep(gf, n_centers, FitConfig(seed=seed, ridge=1e-12))
    x = _box_samples(np.array(gf.input_ranges, float), 400, 43)
    exact, _ = evaluate(gf, x)
    assert np.max(np.abs(deep(x) - exact)) < 1e-6


def test_observed_error_within_bound_for_tree():
    gf = binary_tree_target()
    deep = lift_to_deep(gf, 48, FitConfig(seed=4, samples_per_center=6))
    x = _box_samples(np.array(gf.input_ranges, float), 1500, 44)
    errs, bound = sink_errors_with_bound(gf, deep, x)
    assert np.all(errs <= bound + 1e-9)


def test_fit_failure_names_the_node():
    gf = tiny_tree(
        lambda u, v: u + v,
        lambda u, v: u - v,
        lambda a, b: a * b,
    )
    bad = GFunction(
        graph=gf.graph,
        functions={"l": gf.functions["l"], "r": gf.functions["r"],
                   "top": lambda a, b: np.full_like(a, np.nan)},
        output_range=gf.output_range,
        lipschitz=gf.lipschitz,
        input_ranges=gf.input_ranges,
    )
    with pytest.raises(RuntimeError, match="top"):
        lift_to_deep(bad, 8, FitConfig(seed=5))


def test_max_internal_in_degree():
    assert max_internal_in_degree(binary_tree_target().graph) == 2
    g = DagGraph(
        children={"s": (), "top": ("s",) },
        external_inputs={"s": (0, 1, 2, 3, 4)},
    )
    assert max_internal_in_degree(g) == 1
    assert max_internal_in_degree(example_nine_variable_graph()) == 4


# ---------------------------------------------------------------------------
# Slope fitting
# ---------------------------------------------------------------------------

def test_slope_exact_power_law():
    n = np.array([8, 16, 32, 64, 128])
    slope, stderr = fit_loglog_slope(n, 1.0 / n)
    assert slope == pytest.approx(-1.0, abs=1e-6)
    assert stderr < 1e-6


def test_slope_intercept_invariance():
    n = np.array([10, 20, 40, 80])
    for c in (0.1, 7.3):
        slope, _ = fit_loglog_slope(n, c * n**-0.5)
        assert slope == pytest.approx(-0.5, abs=1e-6)


def test_slope_under_multiplicative_noise():
    n = np.array([8, 16, 32, 64, 128, 256])
    for seed in range(100):
        rng = np.random.default_rng(seed)
        noisy = (1.0 / n) * rng.uniform(0.9, 1.1, size=n.shape)
        slope, _ = fit_loglog_slope(n, noisy)
        assert -1.15 <= slope <= -0.85


def test_slope_rejects_degenerate_input():
    with pytest.raises(DegenerateStudyError):
        fit_loglog_slope([8, 16, 32], [1e-3, 0.0, 1e-5])
    with pytest.raises(DegenerateStudyError):
        fit_loglog_slope([8, 16], [1e-3, 1e-4])


# ---------------------------------------------------------------------------
# Rate study plumbing
# ---------------------------------------------------------------------------

def test_rate_study_validates_n_list():
    gf = binary_tree_target()
    with pytest.raises(ValueError):
        rate_study(gf, [16, 32, 64], [0])
    with pytest.raises(ValueError):
        rate_study(gf, [64, 32, 16, 8], [0])


def test_rate_study_deterministic_across_threads():
    gf = binary_tree_target()
    cfg = FitConfig(seed=6, samples_per_center=6, node_probes=512)
    kwargs = dict(probe_count=256, config=cfg)
    t1 = rate_study(gf, [8, 16, 32, 64], [0], threads=1, **kwargs)
    t8 = rate_study(gf, [8, 16, 32, 64], [0], threads=8, **kwargs)
    assert t1.rows == t8.rows
    assert t1.shallow_slope == t8.shallow_slope


def test_rate_study_degenerate_when_target_reproduced():
    # a zero target is fitted exactly, so both error columns vanish and the
    # study must flag itself as degenerate instead of reporting a rate
    zero = lambda u, v: np.zeros_like(u)
    gf = tiny_tree(zero, zero, lambda a, b: np.zeros_like(a))
    table = rate_study(gf, [6, 8, 12, 16], [0], probe_count=128,
                       config=FitConfig(seed=7, ridge=1e-10, node_probes=256))
    assert table.shallow_slope is None
    assert table.deep_slope is None
    assert any("degenerate" in d for d in table.diagnostics)


def test_rate_rows_carry_probe_mesh():
    gf = binary_tree_target()
    cfg = FitConfig(seed=8, samples_per_center=4, node_probes=256)
    table = rate_study(gf, [8, 12, 16, 24], [0], probe_count=128, config=cfg)
    assert np.all(table.column("probe_mesh") > 0)
    assert np.all(table.column("probe_mesh") < math.pi)
