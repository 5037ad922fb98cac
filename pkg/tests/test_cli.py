import json

from composita.cli import main


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def read(path):
    with open(path) as fh:
        return fh.read()


def test_kernel_table_runs_and_is_accurate(tmp_path):
    cfg = write_config(tmp_path, "k.json", {"study": "kernel-table", "q": 2, "l_max": 150, "t_points": 9})
    assert main(["kernel-table", "--config", cfg, "--out", str(tmp_path)]) == 0
    text = read(tmp_path / "kernel.csv")
    lines = text.splitlines()
    assert lines[0].startswith("# composita")
    assert lines[1] == "t,series,quadrature,abs_diff"
    diffs = [float(line.split(",")[3]) for line in lines[2:]]
    assert max(diffs) < 1e-4


def test_propagation_check_reports_zero_violations(tmp_path, capsys):
    cfg = write_config(
        tmp_path, "p.json", {"study": "propagation-check", "instances": 10, "probes": 40, "seed": 3}
    )
    assert main(["propagation-check", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert "0 violations" in capsys.readouterr().out
    body = read(tmp_path / "propagation.csv").splitlines()
    assert len(body) == 2 + 10


def test_dag_eval_traces_nodes(tmp_path):
    dag = {
        "nodes": {
            "a": {"inputs": [0, 1], "function": {"kind": "affine", "coeffs": [1.0, 2.0], "const": 0.5}},
            "b": {"inputs": [2], "function": {"kind": "affine", "coeffs": [3.0]}},
            "top": {"children": ["a", "b"], "function": {"kind": "product", "scale": 2.0}},
        }
    }
    cfg = write_config(
        tmp_path, "d.json", {"study": "dag-eval", "dag": dag, "inputs": [[1.0, 1.0, 1.0]]}
    )
    assert main(["dag-eval", "--config", cfg, "--out", str(tmp_path)]) == 0
    lines = read(tmp_path / "dag_eval.csv").splitlines()
    header = lines[1].split(",")
    row = lines[2].split(",")
    assert float(row[header.index("sink")]) == 21.0


def test_dag_eval_from_file(tmp_path):
    dag_path = tmp_path / "dag.json"
    dag_path.write_text(
        json.dumps(
            {"nodes": {"s": {"inputs": [0], "function": {"kind": "affine", "coeffs": [2.0]}}}}
        )
    )
    cfg = write_config(
        tmp_path, "d2.json", {"study": "dag-eval", "dag": str(dag_path), "inputs": [[4.0]]}
    )
    assert main(["dag-eval", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert read(tmp_path / "dag_eval.csv").splitlines()[2].split(",")[1] == "8"


def test_demo_plot_writes_svg(tmp_path):
    cfg = write_config(tmp_path, "demo.json", {"study": "demo-D-plot", "band": 12, "grid": 24})
    assert main(["demo-D-plot", "--config", cfg, "--out", str(tmp_path)]) == 0
    svg = read(tmp_path / "demo_D.svg")
    assert svg.startswith('<?xml version="1.0"')
    assert "<!-- composita" in svg
    assert "</svg>" in svg


def test_rates_outputs_and_determinism(tmp_path):
    payload = {
        "study": "rates",
        "n_list": [8, 12, 16, 24],
        "seeds": [0],
        "probe_count": 128,
        "samples_per_center": 4,
        "seed": 11,
    }
    cfg = write_config(tmp_path, "r.json", payload)
    out1 = tmp_path / "out1"
    out8 = tmp_path / "out8"
    assert main(["rates", "--config", cfg, "--out", str(out1), "--threads", "1"]) == 0
    assert main(["rates", "--config", cfg, "--out", str(out8), "--threads", "8"]) == 0
    assert read(out1 / "rates.csv") == read(out8 / "rates.csv")
    assert read(out1 / "rates.svg") == read(out8 / "rates.svg")
    header = read(out1 / "rates.csv").splitlines()[1]
    assert header == "N,shallow_err,deep_err,bound,probe_mesh,seed"


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, "bad.json", {"study": "rates", "bogus": 1})
    assert main(["rates", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_short_n_list_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, "bad2.json", {"study": "rates", "n_list": [8, 16]})
    assert main(["rates", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "n_list" in capsys.readouterr().err


def test_missing_config_is_validation_failure(tmp_path):
    assert main(["rates", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2


def test_study_mismatch_uses_command(tmp_path):
    # the subcommand wins over the study field in the file
    cfg = write_config(tmp_path, "k2.json", {"study": "rates", "q": 2, "t_points": 5, "l_max": 40})
    assert main(["kernel-table", "--config", cfg, "--out", str(tmp_path)]) == 0


def test_seed_override_changes_outputs(tmp_path):
    payload = {
        "study": "rates",
        "n_list": [8, 12, 16, 24],
        "seeds": [0],
        "probe_count": 128,
        "seed": 1,
    }
    cfg = write_config(tmp_path, "r2.json", payload)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["rates", "--config", cfg, "--out", str(out_a)]) == 0
    assert main(["rates", "--config", cfg, "--out", str(out_b), "--seed", "2"]) == 0
    assert read(out_a / "rates.csv") != read(out_b / "rates.csv")
