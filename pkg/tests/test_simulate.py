import numpy as np
import pytest
from scipy import special

from refine import MARRule, SyntheticSpec, fit_ols, oracle_mse, simulate
from refine.errors import InvalidSpec, ShapeMismatch, UnknownTimePoint
from refine.simulate import _mar_intercept, build_oracle


def test_reproducible():
    spec = SyntheticSpec(n=200, d=4, T=2, seed=3, mar=MARRule(0.3))
    a, _ = simulate(spec)
    b, _ = simulate(spec)
    assert a.equals(b)
    c, _ = simulate(spec.replace(seed=4))
    assert not c.equals(a)


def test_param_seed_fixes_population():
    o1 = build_oracle(SyntheticSpec(n=100, d=3, seed=1, param_seed=9))
    o2 = build_oracle(SyntheticSpec(n=100, d=3, seed=2, param_seed=9))
    np.testing.assert_array_equal(o1.mixing(1), o2.mixing(1))
    np.testing.assert_array_equal(o1.G, o2.G)


def test_mixing_singular_values_clamped():
    o = build_oracle(SyntheticSpec(n=200, d=8, T=4, mixing=2.0))
    for t in o.labels:
        s = np.linalg.svd(o.mixing(t), compute_uv=False)
        assert s.min() >= 0.5 - 1e-12 and s.max() <= 2.0 + 1e-12


def test_noiseless_followups_equal_oracle_mean():
    ds, o = simulate(SyntheticSpec(n=100, d=3, noise_sd=0.0, nonlinearity="piecewise"))
    np.testing.assert_allclose(ds.followups["1"], o.mean(1, ds.X0, ds.Z))
    assert oracle_mse(o, ds.followups["1"], ds.X0, ds.Z, 1) == 0.0


def test_residual_noise_level():
    ds, o = simulate(SyntheticSpec(n=20000, d=3, noise_sd=0.5))
    resid = ds.followups["1"] - o.mean(1, ds.X0, ds.Z)
    np.testing.assert_allclose(resid.std(axis=0), 0.5, rtol=0.03)


def test_linear_population_reconstruction_matches_large_sample():
    spec = SyntheticSpec(n=200_000, d=3, q=2, nonlinearity="linear", noise_sd=0.7, seed=5)
    ds, o = simulate(spec)
    B_hat = fit_ols(ds.followups["1"], ds.X0).values
    np.testing.assert_allclose(B_hat, o.population_reconstruction(1), atol=0.01)


def test_tanh_population_reconstruction_monte_carlo_agrees():
    spec = SyntheticSpec(n=200_000, d=3, q=1, nonlinearity="tanh", noise_sd=0.5, seed=6)
    ds, o = simulate(spec)
    B_hat = fit_ols(ds.followups["1"], ds.X0).values
    np.testing.assert_allclose(B_hat, o.population_reconstruction(1), atol=0.015)


def test_mar_intercept_hits_rate():
    for rate, strength in [(0.3, 1.0), (0.1, 2.0), (0.5, 0.0)]:
        a = _mar_intercept(rate, strength)
        z = np.random.default_rng(0).standard_normal(400_000)
        assert special.expit(a + strength * z).mean() == pytest.approx(rate, abs=2e-3)


def test_mar_missing_share_and_dependence():
    ds, _ = simulate(SyntheticSpec(n=20000, d=4, q=2, T=1, mar=MARRule(0.3, 1.5), seed=8))
    miss = ~ds.masks["1"]
    assert miss.mean() == pytest.approx(0.3, abs=0.015)
    # missingness depends on baseline only: some baseline column separates the groups
    gaps = np.abs(ds.features[miss].mean(0) - ds.features[~miss].mean(0))
    assert gaps.max() > 0.1


def test_spec_validation():
    with pytest.raises(InvalidSpec):
        SyntheticSpec(n=50, d=10)
    with pytest.raises(InvalidSpec):
        SyntheticSpec(nonlinearity="cubic")
    with pytest.raises(InvalidSpec):
        SyntheticSpec(noise_sd=-1)
    with pytest.raises(InvalidSpec):
        MARRule(missing_rate=1.0)
    with pytest.raises(InvalidSpec):
        SyntheticSpec(T=2, time_labels=(1,))


def test_spec_dict_round_trip():
    spec = SyntheticSpec(n=300, d=3, T=2, mar=MARRule(0.2, 0.5), time_labels=(0.5, 2))
    assert SyntheticSpec.from_dict(spec.to_dict()) == spec.replace(time_labels=[0.5, 2])


def test_oracle_errors():
    ds, o = simulate(SyntheticSpec(n=100, d=3))
    with pytest.raises(UnknownTimePoint):
        o.mixing(5)
    with pytest.raises(ShapeMismatch):
        oracle_mse(o, np.zeros((3, 3)), ds.X0, ds.Z, 1)
