"""Command-line front end: run studies from JSON configs and write artifacts.

Subcommands: rates, propagation-check, kernel-table, dag-eval, demo-D-plot.
All randomness flows from the config (or the --seed override); identical
configs produce byte-identical CSV and SVG outputs.  Exit codes: 0 success,
2 config/validation failure, 3 numerical contract failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .deep import FitConfig, binary_tree_target, rate_study
from .errors import ContractError
from .gfunction import (
    evaluate,
    gfunction_from_dict,
    propagation_bound,
    random_lipschitz_instance,
    validate_dag,
)
from .harmonics import abs_deconvolve, build_quadrature, expand
from .networks import conv_kernel_phi, conv_kernel_quadrature
from .svgplot import Series, heatmap_svg, loglog_plot_svg

log = logging.getLogger("composita")

_STUDIES = ("rates", "propagation-check", "kernel-table", "dag-eval", "demo-D-plot")

# --seed and --threads are accepted everywhere; studies that are inherently
# sequential or deterministic simply ignore them
_COMMON_KEYS = {"study", "seed", "threads"}
_ALLOWED_KEYS = {
    "rates": _COMMON_KEYS | {
        "n_list", "seeds", "probe_count", "samples_per_center",
        "ridge", "frequency", "out_csv", "out_svg",
    },
    "propagation-check": _COMMON_KEYS | {"instances", "probes", "out_csv"},
    "kernel-table": _COMMON_KEYS | {"q", "l_max", "t_points", "out_csv"},
    "dag-eval": _COMMON_KEYS | {"dag", "inputs", "out_csv"},
    "demo-D-plot": _COMMON_KEYS | {
        "band", "exactness", "grid", "pole", "offset", "exponent", "out_svg", "out_csv",
    },
}


class ConfigError(ValueError):
    pass


def _load_config(path: str, overrides: dict) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    config.update({k: v for k, v in overrides.items() if v is not None})
    study = config.get("study")
    if study not in _STUDIES:
        raise ConfigError(f"study must be one of {_STUDIES}, got {study!r}")
    unknown = set(config) - _ALLOWED_KEYS[study]
    if unknown:
        raise ConfigError(f"unknown config keys for {study}: {sorted(unknown)}")
    return config


def _config_hash(config: dict) -> str:
    # thread count never changes the numbers, so it stays out of the identity
    hashed = {k: v for k, v in config.items() if k != "threads"}
    canon = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _header(config: dict) -> str:
    return f"composita {__version__} config {_config_hash(config)}"


def _atomic_write(path: str, data: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-composita-")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g17(v: float) -> str:
    return format(float(v), ".17g")


def _run_rates(config: dict, out_dir: str) -> str:
    n_list = config.get("n_list", [16, 32, 64, 128, 256])
    seeds = config.get("seeds", [0])
    if not isinstance(n_list, list) or len(n_list) < 4:
        raise ConfigError("n_list must hold at least four network sizes")
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a nonempty list")
    probe_count = int(config.get("probe_count", 1024))
    if not 16 <= probe_count <= 100_000:
        raise ConfigError("probe_count out of range [16, 100000]")
    threads = int(config.get("threads", 1))
    gf = binary_tree_target(frequency=float(config.get("frequency", 1.2)))
    fit = FitConfig(
        samples_per_center=int(config.get("samples_per_center", 6)),
        ridge=config.get("ridge"),
        seed=int(config.get("seed", 0)),
    )
    log.info("rate study: %d cells on %d threads", len(n_list) * len(seeds), threads)
    table = rate_study(gf, [int(n) for n in n_list], [int(s) for s in seeds],
                       probe_count=probe_count, config=fit, threads=threads)

    buf = io.StringIO()
    buf.write(f"# {_header(config)}\n")
    buf.write("N,shallow_err,deep_err,bound,probe_mesh,seed\n")
    for r in table.rows:
        buf.write(
            f"{r.n},{_g17(r.shallow_err)},{_g17(r.deep_err)},{_g17(r.bound)},"
            f"{_g17(r.probe_mesh)},{r.seed}\n"
        )
    _atomic_write(os.path.join(out_dir, config.get("out_csv", "rates.csv")), buf.getvalue())

    series = []
    for label, col, slope in (
        ("shallow", "shallow_err", table.shallow_slope),
        ("deep", "deep_err", table.deep_slope),
    ):
        series.append(
            Series(
                label=label,
                x=table.column("n"),
                y=table.column(col),
                slope=None if slope is None else slope[0],
                stderr=None if slope is None else slope[1],
            )
        )
    svg = loglog_plot_svg(series, "shallow vs deep approximation error", _header(config))
    _atomic_write(os.path.join(out_dir, config.get("out_svg", "rates.svg")), svg)

    if table.shallow_slope and table.deep_slope:
        return (
            f"rates: shallow slope {table.shallow_slope[0]:.3f}+-{table.shallow_slope[1]:.3f}, "
            f"deep slope {table.deep_slope[0]:.3f}+-{table.deep_slope[1]:.3f}, "
            f"{len(table.rows)} rows"
        )
    return "rates: degenerate study, " + "; ".join(table.diagnostics)


def _run_propagation_check(config: dict, out_dir: str) -> str:
    instances = int(config.get("instances", 100))
    probes = int(config.get("probes", 200))
    if not 1 <= instances <= 10_000:
        raise ConfigError("instances out of range [1, 10000]")
    if not 1 <= probes <= 100_000:
        raise ConfigError("probes out of range [1, 100000]")
    rng = np.random.default_rng(int(config.get("seed", 0)))
    violations = 0
    buf = io.StringIO()
    buf.write(f"# {_header(config)}\n")
    buf.write("instance,max_deviation,bound,violations\n")
    for k in range(instances):
        exact, approx, errors = random_lipschitz_instance(rng)
        bound, _ = propagation_bound(exact.graph, errors, exact.lipschitz)
        x = rng.uniform(-3.0, 3.0, size=(probes, exact.graph.n_inputs()))
        fx, _ = evaluate(exact, x)
        gx, _ = evaluate(approx, x)
        dev = np.abs(fx - gx)
        bad = int(np.sum(dev > bound + 1e-9))
        violations += bad
        buf.write(f"{k},{_g17(np.max(dev))},{_g17(bound)},{bad}\n")
    _atomic_write(os.path.join(out_dir, config.get("out_csv", "propagation.csv")), buf.getvalue())
    if violations:
        raise ContractError(f"propagation bound violated {violations} times")
    return f"propagation-check: {instances} instances x {probes} probes, 0 violations"


def _run_kernel_table(config: dict, out_dir: str) -> str:
    q = int(config.get("q", 2))
    if not 2 <= q <= 8:
        raise ConfigError("q out of range [2, 8]")
    l_max = int(config.get("l_max", 200))
    t_points = int(config.get("t_points", 37))
    if not 3 <= t_points <= 10_000:
        raise ConfigError("t_points out of range [3, 10000]")
    grid = np.linspace(-0.9, 0.9, t_points)
    series = conv_kernel_phi(q, grid, l_max)
    quad = conv_kernel_quadrature(q, grid)
    buf = io.StringIO()
    buf.write(f"# {_header(config)}\n")
    buf.write("t,series,quadrature,abs_diff\n")
    for t, s, qd in zip(grid, series, quad):
        buf.write(f"{_g17(t)},{_g17(s)},{_g17(qd)},{_g17(abs(s - qd))}\n")
    _atomic_write(os.path.join(out_dir, config.get("out_csv", "kernel.csv")), buf.getvalue())
    return f"kernel-table: q={q}, max |series - quadrature| = {np.max(np.abs(series - quad)):.3e}"


def _run_dag_eval(config: dict, out_dir: str) -> str:
    dag_spec = config.get("dag")
    if isinstance(dag_spec, str):
        with open(dag_spec) as fh:
            dag_spec = json.load(fh)
    if not isinstance(dag_spec, dict):
        raise ConfigError("dag must be an inline object or a path to a JSON file")
    gf = gfunction_from_dict(dag_spec)
    issues = validate_dag(gf.graph)
    if issues:
        raise ConfigError("invalid graph: " + "; ".join(issues))
    inputs = np.asarray(config.get("inputs", []), dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[None, :]
    if inputs.size == 0 or inputs.shape[1] != gf.graph.n_inputs():
        raise ConfigError(f"inputs must be rows of {gf.graph.n_inputs()} numbers")
    values, trace = evaluate(gf, inputs)
    nodes = sorted(trace)
    buf = io.StringIO()
    buf.write(f"# {_header(config)}\n")
    buf.write("row,sink," + ",".join(nodes) + "\n")
    for i in range(inputs.shape[0]):
        cells = ",".join(_g17(trace[v][i]) for v in nodes)
        buf.write(f"{i},{_g17(values[i])},{cells}\n")
    _atomic_write(os.path.join(out_dir, config.get("out_csv", "dag_eval.csv")), buf.getvalue())
    return f"dag-eval: {inputs.shape[0]} rows, sink[0] = {values[0]:.10g}"


def _run_demo_plot(config: dict, out_dir: str) -> str:
    """Heat map of the inverse-convolution operator applied to a zonal bump pair.

    The zonal profile is t -> (t - offset)_+^exponent + (-t - offset)_+^exponent
    around a configurable pole; its degree-2 component is removed before the
    operator is applied, since that lies outside the operator's domain.
    """
    band = int(config.get("band", 24))
    exactness = int(config.get("exactness", 2 * band + 10))
    grid = int(config.get("grid", 72))
    offset = float(config.get("offset", 0.1))
    exponent = int(config.get("exponent", 8))
    if not 4 <= band <= 64:
        raise ConfigError("band out of range [4, 64]")
    if not 16 <= grid <= 400:
        raise ConfigError("grid out of range [16, 400]")
    if not 0.0 <= offset < 1.0:
        raise ConfigError("offset must lie in [0, 1)")
    if not 1 <= exponent <= 16:
        raise ConfigError("exponent out of range [1, 16]")
    rule = build_quadrature(2, exactness)
    pole = np.asarray(config.get("pole", [1.0, 1.0, 1.0]), dtype=float)
    if pole.shape != (3,) or not np.linalg.norm(pole) > 0:
        raise ConfigError("pole must be a nonzero 3-vector")
    pole = pole / np.linalg.norm(pole)

    def sample_f(x):
        t = np.atleast_2d(x) @ pole
        return np.clip(t - offset, 0.0, None) ** exponent + np.clip(-t - offset, 0.0, None) ** exponent

    log.info("demo plot: band %d, %d quadrature nodes", band, len(rule))
    exp = expand(sample_f, band, rule)
    # the operator's domain excludes degree-2 content; drop that component
    exp.components[2] = 0.0
    sharp = abs_deconvolve(exp)
    lat = np.linspace(math.pi / grid / 2, math.pi - math.pi / grid / 2, grid)
    lon = np.linspace(0.0, 2.0 * math.pi, 2 * grid, endpoint=False)
    llat, llon = np.meshgrid(lat, lon, indexing="ij")
    pts = np.stack(
        [np.sin(llat) * np.cos(llon), np.sin(llat) * np.sin(llon), np.cos(llat)], axis=-1
    ).reshape(-1, 3)
    values = sharp.evaluate(pts).reshape(grid, 2 * grid)
    svg = heatmap_svg(values, "inverse absolute-value convolution of a bump pair", _header(config))
    _atomic_write(os.path.join(out_dir, config.get("out_svg", "demo_D.svg")), svg)
    if "out_csv" in config:
        buf = io.StringIO()
        buf.write(f"# {_header(config)}\n")
        sharp.to_csv(buf)
        _atomic_write(os.path.join(out_dir, config["out_csv"]), buf.getvalue())
    return f"demo-D-plot: band {band}, grid {grid}x{2 * grid}, value range [{values.min():.4g}, {values.max():.4g}]"


_RUNNERS = {
    "rates": _run_rates,
    "propagation-check": _run_propagation_check,
    "kernel-table": _run_kernel_table,
    "dag-eval": _run_dag_eval,
    "demo-D-plot": _run_demo_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="composita",
        description="Compositional function approximation studies on spheres.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STUDIES:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads where supported")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, os.environ.get("COMPOSITA_LOG", "WARNING").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )

    overrides: dict = {"study": args.command, "seed": args.seed}
    if args.threads is not None:
        overrides["threads"] = args.threads
    try:
        config = _load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = _RUNNERS[args.command](config, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ContractError as exc:
        print(f"numerical contract failure: {exc}", file=sys.stderr)
        return 3
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
