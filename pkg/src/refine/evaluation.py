"""Bootstrap evaluation, ablation runs, decoder-rate and timing experiments."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import LongitudinalDataset
from .errors import InvalidSpec, NoOutOfBag, RefineError, ZeroDiagonal
from .linear_core import fit_ols
from .metrics import backward_correlation, contribution_matrix, cosine_diagonal, forward_correlation, skipped_items
from .model import DECODER_MODES, decoder_by_inversion, decoder_by_refit, fit_refine, fit_time_point
from .nonlinear_learner import KINDS, ForestConfig, LearnerSpec, fit_learner, predict_learner
from .simulate import SyntheticSpec, simulate

log = logging.getLogger(__name__)


class InsufficientHeldOut(RefineError):
    pass


METRICS = ("forward", "backward", "cosine")


@dataclass(frozen=True)
class Variant:
    name: str
    kind: str = "random_forest"
    mode: str = "invert"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown learner kind {self.kind!r}")
        if self.mode not in DECODER_MODES:
            raise InvalidSpec(f"unknown decoder mode {self.mode!r}")


REFINE = Variant("refine", "random_forest", "invert")
REFIT_OLS = Variant("refit_ols", "random_forest", "refit_ols")
LINEAR = Variant("linear", "linear", "invert")
ABLATION_VARIANTS = (REFINE, REFIT_OLS, LINEAR)


@dataclass(frozen=True)
class EvalConfig:
    n_boot: int = 100
    seed: int = 0
    variants: Tuple[Variant, ...] = ABLATION_VARIANTS
    metrics: Tuple[str, ...] = METRICS
    ridge_lambda: float = 1.0
    forest: ForestConfig = field(default_factory=ForestConfig)
    max_redraws: int = 1000

    def __post_init__(self):
        if self.n_boot < 1:
            raise InvalidSpec("n_boot must be >= 1")
        if not self.variants:
            raise InvalidSpec("at least one variant is required")
        names = [v.name for v in self.variants]
        if len(set(names)) != len(names):
            raise InvalidSpec("variant names must be unique")
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise InvalidSpec(f"unknown metrics {sorted(bad)}")
        if self.ridge_lambda < 0:
            raise InvalidSpec("ridge_lambda must be nonnegative")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["variants"] = [asdict(v) for v in self.variants]
        out["metrics"] = list(self.metrics)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "EvalConfig":
        data = dict(data)
        if "variants" in data:
            data["variants"] = tuple(Variant(**v) if isinstance(v, dict) else v for v in data["variants"])
        if "metrics" in data:
            data["metrics"] = tuple(data["metrics"])
        if isinstance(data.get("forest"), dict):
            data["forest"] = ForestConfig(**data["forest"])
        return cls(**data)


def summarize(values: Sequence[float]) -> dict:
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return {"mean": None, "sd": None, "p2_5": None, "p97_5": None, "count": 0}
    lo, hi = np.percentile(v, [2.5, 97.5])
    return {
        "mean": float(v.mean()),
        "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "p2_5": float(lo),
        "p97_5": float(hi),
        "count": int(v.size),
    }


@dataclass
class EvaluationReport:
    config: EvalConfig
    n_subjects: int
    time_labels: Tuple[str, ...]
    # (variant, t, metric) -> list of (replicate, value or None)
    values: Dict[Tuple[str, str, str], List[Tuple[int, Optional[float]]]]
    accounting: Dict[Tuple[str, str], Dict[str, int]]
    skipped: Dict[Tuple[str, str], int]
    failures: List[dict]
    redraws: List[int]
    train_seconds: Dict[Tuple[str, str], List[float]]
    eval_seconds: Dict[Tuple[str, str], List[float]]

    def series(self, variant: str, t, metric: str) -> List[Optional[float]]:
        return [v for _, v in self.values[(variant, str(t), metric)]]

    def mean(self, variant: str, t, metric: str) -> Optional[float]:
        return summarize(self.series(variant, t, metric))["mean"]

    def frontier(self) -> List[dict]:
        rows = []
        for v in self.config.variants:
            for t in self.time_labels:
                rows.append(
                    {
                        "variant": v.name,
                        "time": t,
                        "forward_mean": self.mean(v.name, t, "forward") if "forward" in self.config.metrics else None,
                        "backward_mean": self.mean(v.name, t, "backward") if "backward" in self.config.metrics else None,
                    }
                )
        return rows

    def to_dict(self, include_timings: bool = False) -> dict:
        variants = {}
        for v in self.config.variants:
            times = {}
            for t in self.time_labels:
                entry = {}
                for metric in self.config.metrics:
                    pairs = self.values[(v.name, t, metric)]
                    entry[metric] = {
                        "replicates": [r for r, _ in pairs],
                        "values": [x for _, x in pairs],
                        "n_null": sum(x is None for _, x in pairs),
                        **summarize([x for _, x in pairs]),
                    }
                entry["accounting"] = dict(self.accounting[(v.name, t)])
                entry["skipped_items"] = self.skipped[(v.name, t)]
                times[t] = entry
            variants[v.name] = {"kind": v.kind, "mode": v.mode, "times": times}
        out = {
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "n_subjects": self.n_subjects,
            "time_labels": list(self.time_labels),
            "variants": variants,
            "redraws_per_replicate": list(self.redraws),
            "failures": list(self.failures),
            "frontier": self.frontier(),
        }
        if include_timings:
            out["timings"] = self.timings()
        return out

    def timings(self) -> dict:
        out = {}
        for v in self.config.variants:
            train = [s for t in self.time_labels for s in self.train_seconds[(v.name, t)]]
            ev = [s for t in self.time_labels for s in self.eval_seconds[(v.name, t)]]
            per_rep = np.zeros(self.config.n_boot)
            for t in self.time_labels:
                for (r, _), s in zip(self.values.get((v.name, t, self.config.metrics[0]), []), self.train_seconds[(v.name, t)]):
                    per_rep[r] += s
            out[v.name] = {
                "train_seconds_total": float(np.sum(train)),
                "eval_seconds_total": float(np.sum(ev)),
                "train_seconds_per_replicate": summarize(per_rep.tolist()),
            }
        return out

    def long_rows(self, variant: str) -> List[tuple]:
        """``(variant, time, metric, replicate, value)`` rows, runtime included."""
        rows = []
        for t in self.time_labels:
            for metric in self.config.metrics:
                for r, x in self.values[(variant, t, metric)]:
                    rows.append((variant, t, metric, r, x))
            first = self.values[(variant, t, self.config.metrics[0])]
            for (r, _), s in zip(first, self.train_seconds[(variant, t)]):
                rows.append((variant, t, "runtime_seconds", r, s))
        return rows


def _replicate_seed(seed: int, r: int, *extra: int) -> int:
    return int(np.random.SeedSequence([seed, r, *extra]).generate_state(1, dtype=np.uint32)[0])


def _draw_resample(n, seed, r, max_redraws):
    rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
    for redraw in range(max_redraws + 1):
        idx = rng.integers(0, n, size=n)
        in_bag = np.zeros(n, dtype=bool)
        in_bag[idx] = True
        oob = np.flatnonzero(~in_bag)
        if oob.size:
            return idx, oob, redraw
    raise NoOutOfBag(f"replicate {r}: no out-of-bag subjects after {max_redraws} redraws")


def bootstrap_evaluate(dataset: LongitudinalDataset, config: EvalConfig, backend="auto", progress=None) -> EvaluationReport:
    """Out-of-bootstrap evaluation of every variant at every time point.

    Replicate ``r`` resamples subjects with indices drawn only from
    ``(config.seed, r)``; variants are trained on the in-bag subjects and
    scored on the subjects never drawn. Variants that share a learner kind
    share the fitted preprocessor within a replicate, so the ordering of
    variants cannot change any value.
    """
    labels = dataset.schema.time_labels
    keys = [(v.name, t) for v in config.variants for t in labels]
    values = {(v, t, m): [] for v, t in keys for m in config.metrics}
    accounting = {k: {"attempted": 0, "succeeded": 0, "failed": 0, "redrawn": 0} for k in keys}
    skipped = {k: 0 for k in keys}
    train_s = {k: [] for k in keys}
    eval_s = {k: [] for k in keys}
    failures, redraws = [], []

    for r in range(config.n_boot):
        idx, oob, n_redraw = _draw_resample(dataset.n, config.seed, r, config.max_redraws)
        redraws.append(n_redraw)
        train, test = dataset.subset(idx), dataset.subset(oob)
        for ti, t in enumerate(labels):
            X0_tr, Z_tr, Xt_tr = train.complete_cases(t)
            X0_te, Z_te, Xt_te = test.complete_cases(t)
            F_tr = np.hstack([X0_tr, Z_tr])
            F_te = np.hstack([X0_te, Z_te])
            cache = {}
            for v in config.variants:
                acct = accounting[(v.name, t)]
                acct["attempted"] += 1 + n_redraw
                acct["redrawn"] += n_redraw
                spec = LearnerSpec(kind=v.kind, forest=config.forest, seed=_replicate_seed(config.seed, r, ti))
                try:
                    t0 = time.perf_counter()
                    shared = cache.get(v.kind)
                    tm = fit_time_point(
                        X0_tr, Z_tr, Xt_tr, spec=spec, mode=v.mode, label=t, backend=backend,
                        preprocessor=None if shared is None else shared[0],
                    )
                    seconds = time.perf_counter() - t0
                    if shared is None:
                        cache[v.kind] = (tm.preprocessor, seconds)
                    else:
                        # charge the shared fit to every variant that uses it
                        seconds += shared[1]
                    if Xt_te.shape[0] < 3:
                        raise InsufficientHeldOut(f"{Xt_te.shape[0]} held-out subjects observed at {t}")
                    t1 = time.perf_counter()
                    H_te = predict_learner(tm.preprocessor, F_te, backend=backend)
                    pred = tm.decoder.predict(H_te)
                    scores = {}
                    if "forward" in config.metrics:
                        scores["forward"] = forward_correlation(pred, Xt_te)
                    if "backward" in config.metrics:
                        H_tr = predict_learner(tm.preprocessor, F_tr, backend=backend)
                        scores["backward"] = backward_correlation(H_tr, Xt_tr, H_te, Xt_te, lam=config.ridge_lambda)
                    if "cosine" in config.metrics:
                        try:
                            scores["cosine"] = cosine_diagonal(contribution_matrix(X0_te, pred))
                        except ZeroDiagonal:
                            scores["cosine"] = None
                    t2 = time.perf_counter()
                except RefineError as exc:
                    acct["failed"] += 1
                    failures.append({"variant": v.name, "time": t, "replicate": r, "error": f"{type(exc).__name__}: {exc}"})
                    continue
                acct["succeeded"] += 1
                skipped[(v.name, t)] += skipped_items(Xt_te)
                for m, x in scores.items():
                    values[(v.name, t, m)].append((r, x))
                train_s[(v.name, t)].append(seconds)
                eval_s[(v.name, t)].append(t2 - t1)
        if progress is not None:
            progress(r + 1, config.n_boot)

    return EvaluationReport(
        config=config,
        n_subjects=dataset.n,
        time_labels=labels,
        values=values,
        accounting=accounting,
        skipped=skipped,
        failures=failures,
        redraws=redraws,
        train_seconds=train_s,
        eval_seconds=eval_s,
    )


# -- decoder convergence ----------------------------------------------------


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def smooth_perturbation(Y0, d, rng) -> np.ndarray:
    """A fixed random smooth function of the baseline with unit RMS per column.

    The direction ``W`` is Gaussian; the map ``tanh(Y0 W)`` is correlated
    with the stabilizer, as a learner's systematic error would be.
    """
    Y0 = np.asarray(Y0, dtype=np.float64)
    W = rng.standard_normal((Y0.shape[1], d)) / math.sqrt(Y0.shape[1])
    G = np.tanh(Y0 @ W)
    G -= G.mean(axis=0)
    return G / np.sqrt(np.mean(G * G, axis=0))


@dataclass
class RateTable:
    sizes: Tuple[int, ...]
    replicates: int
    perturbation_scale: float
    # mode -> array (len(sizes), replicates)
    beta_error: Dict[str, np.ndarray]
    end_to_end: Dict[str, np.ndarray]
    perturbation_rms: np.ndarray

    def median(self, mode: str, which: str = "beta") -> np.ndarray:
        table = self.beta_error if which == "beta" else self.end_to_end
        return np.median(table[mode], axis=1)

    def slope(self, mode: str, which: str = "beta") -> float:
        return loglog_slope(self.sizes, self.median(mode, which))

    def win_fraction(self) -> np.ndarray:
        """Per size: share of replicates where inversion beats the refit."""
        return np.mean(self.beta_error["invert"] < self.beta_error["refit_ols"], axis=1)

    def rows(self) -> List[dict]:
        out = []
        wins = self.win_fraction()
        for i, n in enumerate(self.sizes):
            for mode in self.beta_error:
                out.append(
                    {
                        "n": n,
                        "mode": mode,
                        "median_beta_error": float(self.median(mode)[i]),
                        "median_end_to_end": float(self.median(mode, "end")[i]),
                        "median_perturbation_rms": float(np.median(self.perturbation_rms[i])),
                        "invert_win_fraction": float(wins[i]),
                    }
                )
        return out

    def summary(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "replicates": self.replicates,
            "perturbation_scale": self.perturbation_scale,
            "slopes": {m: self.slope(m) for m in self.beta_error},
            "end_to_end_slopes": {m: self.slope(m, "end") for m in self.beta_error},
            "invert_win_fraction": self.win_fraction().tolist(),
            "rows": self.rows(),
        }


DEFAULT_RATE_SPEC = SyntheticSpec(n=500, d=5, q=2, T=1, nonlinearity="linear", noise_sd=1.0, seed=0, param_seed=7)


def rate_experiment(
    sizes: Sequence[int] = (500, 2000, 8000, 32000),
    replicates: int = 50,
    spec: SyntheticSpec = DEFAULT_RATE_SPEC,
    perturbation_scale: float = 1.0,
    learner: Optional[LearnerSpec] = None,
    seed: int = 0,
) -> RateTable:
    """Decoder error versus sample size for inversion and same-sample refit.

    The preprocessor estimate is the population stabilizer (or, when
    ``learner`` is given, that learner's fit to the proxy) plus a systematic
    error of RMS ``perturbation_scale * n**(-1/4)``, mimicking a learner that
    converges slower than root-n. Inversion never sees the preprocessor, so
    its error should shrink like ``n**(-1/2)``; the refit inherits the slower
    rate.
    """
    sizes = tuple(int(n) for n in sizes)
    if len(sizes) < 3 or max(sizes) < 10 * min(sizes):
        raise InvalidSpec("need at least 3 sizes spanning at least one decade")
    base = simulate(spec.replace(n=max(10 * spec.d, 10)))[1]
    t = base.labels[0]
    B_pop = base.population_reconstruction(t)
    beta_pop = np.linalg.inv(B_pop)

    shape = (len(sizes), replicates)
    beta_err = {m: np.zeros(shape) for m in DECODER_MODES}
    e2e = {m: np.zeros(shape) for m in DECODER_MODES}
    pert_rms = np.zeros(shape)
    for i, n in enumerate(sizes):
        for rep in range(replicates):
            rs = _replicate_seed(seed, n, rep)
            ds, oracle = simulate(spec.replace(n=n, seed=rs, param_seed=spec.population_seed))
            X0, Z, Xt = ds.complete_cases(t)
            Y0 = np.hstack([X0, Z])
            truth = oracle.mean(t, X0, Z)

            B = fit_ols(Xt, X0)
            if learner is None:
                H = oracle.preprocessor(t, X0, Z, B=B_pop)
            else:
                H = predict_learner(fit_learner(learner, Y0, B.predict(Xt)), Y0)
            rng = np.random.default_rng(np.random.SeedSequence([seed, n, rep, 1]))
            R = perturbation_scale * n ** -0.25 * smooth_perturbation(Y0, spec.d, rng)
            H_hat = H + R
            pert_rms[i, rep] = float(np.sqrt(np.mean(np.sum(R * R, axis=1))))

            for mode, dec in (("invert", decoder_by_inversion(B)), ("refit_ols", decoder_by_refit(H_hat, Xt))):
                beta_err[mode][i, rep] = np.linalg.norm(dec.values - beta_pop)
                diff = dec.predict(H_hat) - truth
                e2e[mode][i, rep] = float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))
    return RateTable(sizes, replicates, perturbation_scale, beta_err, e2e, pert_rms)


# -- timing -----------------------------------------------------------------


@dataclass
class TimingTable:
    rows: List[dict]

    def _sweep(self, axis):
        pts = sorted((r[axis], r["seconds"]) for r in self.rows if r["sweep"] == axis)
        return [p[0] for p in pts], [p[1] for p in pts]

    def slope(self, axis: str) -> float:
        x, y = self._sweep(axis)
        return loglog_slope(x, y)

    def ratio(self, axis: str) -> float:
        """Fitted time ratio for a doubling of ``axis`` (``2 ** slope``)."""
        return float(2.0 ** self.slope(axis))

    def summary(self) -> dict:
        out = {"rows": self.rows}
        for axis in ("n", "d"):
            if any(r["sweep"] == axis for r in self.rows):
                out[f"{axis}_slope"] = self.slope(axis)
        for axis in ("n", "d", "T"):
            if any(r["sweep"] == axis for r in self.rows):
                out[f"{axis}_ratio"] = self.ratio(axis)
        return out


def _time_fit(spec: SyntheticSpec, learner: LearnerSpec, repeats: int, backend) -> float:
    ds, _ = simulate(spec)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fit_refine(ds, learner, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def complexity_probe(
    n_sizes: Sequence[int] = (1000, 2000, 4000, 8000),
    d_sizes: Sequence[int] = (),
    T_sizes: Sequence[int] = (),
    base: SyntheticSpec = SyntheticSpec(n=1000, d=5, q=2, T=1, nonlinearity="tanh", noise_sd=0.5),
    learner: LearnerSpec = LearnerSpec(forest=ForestConfig(n_trees=50)),
    repeats: int = 3,
    backend="auto",
) -> TimingTable:
    """Wall-clock ``fit_refine`` times along n, d and T sweeps (best of ``repeats``)."""
    for sizes, name in ((n_sizes, "n"), (d_sizes, "d"), (T_sizes, "T")):
        if sizes and len(sizes) < 3:
            raise InvalidSpec(f"{name} sweep needs at least 3 sizes")
    # compile kernels outside the timed region
    _time_fit(base.replace(n=max(10 * base.d, 50)), learner, 1, backend)
    rows = []
    for n in n_sizes:
        rows.append({"sweep": "n", "n": n, "d": base.d, "T": base.T, "seconds": _time_fit(base.replace(n=n), learner, repeats, backend)})
    for d in d_sizes:
        rows.append({"sweep": "d", "n": base.n, "d": d, "T": base.T, "seconds": _time_fit(base.replace(d=d, n=max(base.n, 10 * d)), learner, repeats, backend)})
    for T in T_sizes:
        rows.append({"sweep": "T", "n": base.n, "d": base.d, "T": T, "seconds": _time_fit(base.replace(T=T), learner, repeats, backend)})
    return TimingTable(rows)
