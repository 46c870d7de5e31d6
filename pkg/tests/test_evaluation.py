import json

import numpy as np
import pytest

from refine import EvalConfig, ForestConfig, SyntheticSpec, Variant, bootstrap_evaluate, simulate
from refine.errors import InvalidSpec
from refine.evaluation import (
    LINEAR,
    REFINE,
    REFIT_OLS,
    _draw_resample,
    complexity_probe,
    loglog_slope,
    rate_experiment,
    smooth_perturbation,
    summarize,
)
from refine.nonlinear_learner import LearnerSpec

FAST = ForestConfig(n_trees=10)


@pytest.fixture(scope="module")
def report(small_module):
    ds = small_module
    return ds, bootstrap_evaluate(ds, EvalConfig(n_boot=4, seed=7, forest=FAST))


@pytest.fixture(scope="module")
def small_module():
    from refine import MARRule

    ds, _ = simulate(SyntheticSpec(n=200, d=4, q=2, T=2, seed=1, mar=MARRule(0.2)))
    return ds


def test_accounting_balances(report):
    ds, rep = report
    for (v, t), acct in rep.accounting.items():
        assert acct["attempted"] == acct["succeeded"] + acct["failed"] + acct["redrawn"]
        assert acct["succeeded"] == 4


def test_summary_statistics(report):
    _, rep = report
    vals = rep.series("refine", 1, "forward")
    s = summarize(vals)
    assert s["mean"] == pytest.approx(np.mean(vals))
    assert s["sd"] == pytest.approx(np.std(vals, ddof=1))
    assert s["p2_5"] <= s["mean"] <= s["p97_5"]


def test_shared_preprocessor_gives_equal_backward(report):
    _, rep = report
    for t in rep.time_labels:
        assert rep.series("refine", t, "backward") == rep.series("refit_ols", t, "backward")


def test_deterministic_json(report, small_module):
    _, rep = report
    again = bootstrap_evaluate(small_module, EvalConfig(n_boot=4, seed=7, forest=FAST))
    assert json.dumps(rep.to_dict()) == json.dumps(again.to_dict())


def test_variant_order_does_not_matter(report, small_module):
    _, rep = report
    cfg = EvalConfig(n_boot=4, seed=7, forest=FAST, variants=(LINEAR, REFIT_OLS, REFINE))
    flipped = bootstrap_evaluate(small_module, cfg)
    for key, vals in rep.values.items():
        assert flipped.values[key] == vals


def test_resample_depends_only_on_seed_and_replicate():
    a = _draw_resample(50, 3, 5, 10)
    b = _draw_resample(50, 3, 5, 10)
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[0], _draw_resample(50, 3, 6, 10)[0])
    idx, oob, _ = a
    assert set(oob).isdisjoint(idx) and len(set(oob) | set(idx)) == 50


def test_linear_data_forest_close_to_linear():
    # forest bias on a linear target shrinks slowly with n; 0.02 is reached near n = 6000
    ds, _ = simulate(SyntheticSpec(n=6000, d=4, q=1, T=1, nonlinearity="linear", noise_sd=0.5, seed=4))
    rep = bootstrap_evaluate(ds, EvalConfig(n_boot=5, seed=1, variants=(REFINE, LINEAR), forest=ForestConfig(n_trees=100)))
    assert abs(rep.mean("refine", 1, "forward") - rep.mean("linear", 1, "forward")) <= 0.02


def test_failed_replicates_recorded():
    # 40 subjects with d = 19: in-bag complete cases rarely exceed d after masking
    from refine import MARRule

    ds, _ = simulate(SyntheticSpec(n=200, d=19, q=0, T=1, seed=2, mar=MARRule(0.9, 0.0)))
    rep = bootstrap_evaluate(ds, EvalConfig(n_boot=3, variants=(LINEAR,), forest=FAST))
    acct = rep.accounting[("linear", "1")]
    assert acct["failed"] >= 1
    assert acct["attempted"] == acct["succeeded"] + acct["failed"] + acct["redrawn"]
    assert len(rep.failures) == acct["failed"]


def test_config_validation():
    with pytest.raises(InvalidSpec):
        EvalConfig(n_boot=0)
    with pytest.raises(InvalidSpec):
        EvalConfig(variants=())
    with pytest.raises(InvalidSpec):
        EvalConfig(metrics=("auc",))
    with pytest.raises(InvalidSpec):
        Variant("x", mode="magic")
    cfg = EvalConfig(n_boot=3, forest=FAST, variants=(REFINE,))
    assert EvalConfig.from_dict(cfg.to_dict()) == cfg


def test_long_rows_and_frontier(report):
    _, rep = report
    rows = rep.long_rows("linear")
    metrics = {r[2] for r in rows}
    assert metrics == {"forward", "backward", "cosine", "runtime_seconds"}
    assert len(rep.frontier()) == 3 * 2


def test_loglog_slope_exact():
    n = np.array([10, 100, 1000])
    assert loglog_slope(n, 3 * n**-0.5) == pytest.approx(-0.5)


def test_smooth_perturbation_unit_rms(rng):
    G = smooth_perturbation(rng.standard_normal((500, 4)), 3, rng)
    np.testing.assert_allclose(np.sqrt(np.mean(G**2, axis=0)), 1.0)
    np.testing.assert_allclose(G.mean(axis=0), 0.0, atol=1e-12)


def test_rate_experiment_small():
    table = rate_experiment(sizes=(300, 1000, 3000), replicates=6)
    assert table.beta_error["invert"].shape == (3, 6)
    assert table.slope("invert") < 0
    assert table.median("invert")[-1] < table.median("refit_ols")[-1]
    assert len(table.rows()) == 6


def test_rate_experiment_zero_perturbation_exact():
    spec = SyntheticSpec(n=500, d=3, q=0, nonlinearity="linear", noise_sd=0.0, param_seed=1)
    table = rate_experiment(sizes=(100, 300, 1000), replicates=2, spec=spec, perturbation_scale=0.0, learner=LearnerSpec(kind="linear"))
    for mode in table.beta_error:
        assert table.beta_error[mode].max() <= 1e-8
        assert table.end_to_end[mode].max() <= 1e-8


def test_rate_grid_validation():
    with pytest.raises(InvalidSpec):
        rate_experiment(sizes=(100, 200, 400))


def test_complexity_probe_shape():
    base = SyntheticSpec(n=200, d=3, q=1)
    table = complexity_probe(n_sizes=(200, 400, 800), T_sizes=(1, 2, 3), base=base,
                             learner=LearnerSpec(forest=ForestConfig(n_trees=3)), repeats=1)
    summary = table.summary()
    assert {"n_slope", "n_ratio", "T_ratio"} <= set(summary)
    with pytest.raises(InvalidSpec):
        complexity_probe(n_sizes=(100, 200), base=base)
