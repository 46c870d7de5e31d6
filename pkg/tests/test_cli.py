import json

import numpy as np
import pytest

from refine.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from refine.data import load_csv

CONFIG = """
simulate: {n: 120, d: 3, q: 1, T: 2, seed: 4}
learner: {forest: {n_trees: 5}}
eval: {n_boot: 2}
rates: {sizes: [100, 300, 1000], replicates: 2}
bench: {n_sizes: [100, 200, 400], repeats: 1, base: {n: 100, d: 3, q: 1}, learner: {forest: {n_trees: 2}}}
"""


@pytest.fixture
def workdir(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(CONFIG)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    return tmp_path, cfg


def test_simulate_writes_dataset(workdir):
    out, _ = workdir
    ds = load_csv(out / "data.csv")
    assert ds.n == 120 and ds.schema.T == 2
    assert json.loads((out / "schema.json").read_text())["d"] == 3


def test_fit_then_predict(workdir):
    out, cfg = workdir
    assert main(["fit", "--config", str(cfg), "--data", str(out / "data.csv"), "--out", str(out)]) == EXIT_OK
    assert main(["predict", "--model", str(out / "model.bin"), "--data", str(out / "data.csv"),
                 "--out", str(out), "--format", "json", "--time", "2"]) == EXIT_OK
    rows = json.loads((out / "predictions.json").read_text())
    assert len(rows) == 120 and rows[0]["time"] == "2"


def test_ablate_outputs_and_determinism(workdir):
    out, cfg = workdir
    args = ["ablate", "--config", str(cfg), "--data", str(out / "data.csv"), "--seed", "3"]
    assert main(args + ["--out", str(out / "a")]) == EXIT_OK
    assert main(args + ["--out", str(out / "b")]) == EXIT_OK
    assert (out / "a" / "report.json").read_bytes() == (out / "b" / "report.json").read_bytes()
    for name in ("frontier.csv", "metrics_refine.csv", "metrics_refit_ols.csv", "metrics_linear.csv", "timings.json"):
        assert (out / "a" / name).exists()
    header = (out / "a" / "metrics_refine.csv").read_text().splitlines()[0]
    assert header == "variant,time,metric,replicate,value"


def test_evaluate_defaults_to_refine_only(workdir):
    out, cfg = workdir
    assert main(["evaluate", "--config", str(cfg), "--data", str(out / "data.csv"), "--out", str(out / "e")]) == EXIT_OK
    assert list(json.loads((out / "e" / "report.json").read_text())["variants"]) == ["refine"]


def test_rates_and_bench(workdir):
    out, cfg = workdir
    assert main(["rates", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert (out / "rates.csv").read_text().startswith("n,mode,")
    assert main(["bench", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert "n_slope" in json.loads((out / "bench_summary.json").read_text())


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["fit"])
    assert err.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == EXIT_USAGE
    bad = tmp_path / "bad.yaml"
    bad.write_text("simulate: [1, 2\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_USAGE


def test_data_errors(tmp_path):
    assert main(["fit", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_DATA
    p = tmp_path / "x.csv"
    p.write_text("subject_id,x0_a,xt1_a\ns1,,1\n")
    assert main(["fit", "--data", str(p), "--out", str(tmp_path)]) == EXIT_DATA
    cfg = tmp_path / "c.yaml"
    cfg.write_text("simulate: {n: 5, d: 3}\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_DATA


def test_numerical_error_exit_code(tmp_path):
    rng = np.random.default_rng(0)
    rows = ["subject_id,x0_a,x0_b,xt1_a,xt1_b"]
    for i in range(40):
        a, b, y = rng.standard_normal(3)
        rows.append(f"s{i},{a},{b},{y},{2 * y}")
    p = tmp_path / "collinear.csv"
    p.write_text("\n".join(rows) + "\n")
    assert main(["fit", "--data", str(p), "--out", str(tmp_path)]) == EXIT_NUMERICAL
