"""Deterministic data generators and the replication experiments.

Every random stream is keyed by ``(seed, replication, role)`` so a
replication draws the same numbers whichever thread runs it and in
whatever order.
"""

from __future__ import annotations

import json
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.special import expit, ndtri

from .detection import (
    DetectionConfig,
    autocorr_distance,
    plugin_score,
    pre_score,
    prior_ratio_delta,
    roc_auc,
    roc_points,
    sst_distance,
)
from .errors import DataFileError, InvalidInputError, PostRatioError, SolverFailureError
from .estimator import fit
from .explain import direction_cosine, extract_local_linear, surrogate_baseline
from .features import FeatureMap
from .inference import asymptotic_report, chi2_quantile, consistency_diagnostics
from .io import write_csv, write_json
from .likelihood import GaussianLinearLikelihood
from .problem import PreProblem, PriorSampleSet


def stream(seed: int, replication: int, role: str) -> np.random.Generator:
    """Independent generator for one (replication, role) cell."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replication), zlib.crc32(role.encode())])


def parallel_map(func, items, threads: int = 1) -> list:
    """``[func(x) for x in items]`` with optional threads; results keep input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


class ARSequence(NamedTuple):
    latent: np.ndarray
    observed: np.ndarray
    nonstationary: bool


def gen_ar_sequence(
    alpha: float,
    steps: int,
    burn_in: int = 50,
    process_sd: float = math.sqrt(0.1),
    obs_sd: float = math.sqrt(0.02),
    seed=0,
) -> ARSequence:
    """Simulate ``x_t = alpha x_{t-1} + e_t`` and ``y_t = x_t + e'_t`` from ``x_0 = 0``.

    Returns the ``steps`` values after the first ``burn_in``.  ``seed`` may be
    an int or a ``numpy.random.Generator``.
    """
    if steps < 1 or burn_in < 0:
        raise InvalidInputError("steps must be positive and burn_in nonnegative")
    if process_sd < 0 or obs_sd < 0:
        raise InvalidInputError("noise scales must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    total = burn_in + steps
    eps = rng.standard_normal(total) * process_sd
    x = np.empty(total)
    prev = 0.0
    for t in range(total):
        prev = alpha * prev + eps[t]
        x[t] = prev
    y = x + rng.standard_normal(total) * obs_sd
    return ARSequence(x[burn_in:], y[burn_in:], bool(abs(alpha) >= 1.0))


def _ar_batch(alphas, steps, burn_in, process_sd, rng):
    """Latent AR paths for a vector of coefficients, one row each."""
    n = alphas.size
    eps = rng.standard_normal((n, burn_in + steps)) * process_sd
    x = np.empty_like(eps)
    prev = np.zeros(n)
    for t in range(eps.shape[1]):
        prev = alphas * prev + eps[:, t]
        x[:, t] = prev
    return x[:, burn_in:]


def gen_prior_bank(
    alpha_mean: float,
    alpha_sd: float,
    n_sequences: int,
    steps: int = 50,
    burn_in: int = 50,
    process_sd: float = math.sqrt(0.1),
    seed=0,
) -> PriorSampleSet:
    """Latent windows of AR processes whose coefficient is drawn per sequence."""
    if n_sequences < 1:
        raise InvalidInputError("n_sequences must be positive")
    if alpha_sd < 0:
        raise InvalidInputError("alpha_sd must be nonnegative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    alphas = alpha_mean + alpha_sd * rng.standard_normal(n_sequences)
    return PriorSampleSet(_ar_batch(alphas, steps, burn_in, process_sd, rng))


# ---------------------------------------------------------------- experiments

DESK_DEFAULTS = {
    "normality": {
        "replications": 2000,
        "n_obs": 100,
        "n_prior": 500,
        "latent_dim": 2,
        "obs_mean": 0.5,
        "obs_sd": 0.1,
        "sigma": 10.0,
        "level": 0.95,
    },
    "consistency": {
        "replications": 50,
        "n_grid": [100, 200, 400, 800, 1600],
        "sigma": 1.0,
        "radius_scale": 10.0,
        "n_restarts": 8,
    },
    "detection": {
        "replications": 100,
        "n_prior": 2000,
        "window_len": 50,
        "burn_in": 50,
        "alpha_background": 0.5,
        "alpha_signal": -0.2,
        "prior_p_alpha": [0.5, 0.1],
        "prior_q_alpha": [0.0, 0.5],
        "process_var": 0.1,
        "obs_var": 0.02,
        "sigma": 1.0,
        "ar_order": 20,
        "sst_window": 25,
        "sst_rank": 10,
        "score_mode": "kl",
    },
    "extraction": {
        "replications": 10,
        "n_loc": 200,
        "loc_sd": 1.5,
        "mu_pos": [1.0, 0.0],
        "mu_neg": [-1.0, 0.0],
        "outlier_fraction": 0.05,
        "pocket_center": [3.0, 3.0],
        "pocket_width": 0.5,
        "pocket_spread": 0.2,
    },
}

FULL_SCALE = {
    "normality": {"replications": 5000},
    "consistency": {"replications": 500},
    "detection": {"n_prior": 100000},
    "extraction": {},
}


@dataclass
class ExperimentSpec:
    """Which experiment to run and how.

    ``params`` overrides the desk-scale defaults of the named experiment;
    ``full_scale`` switches to the full-scale sizes first.
    """

    name: str
    seed: int = 0
    replications: int | None = None
    threads: int = 1
    full_scale: bool = False
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in DESK_DEFAULTS:
            raise InvalidInputError(f"unknown experiment {self.name!r}; expected one of {sorted(DESK_DEFAULTS)}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be an integer in [0, 2**64)")
        if self.replications is not None and self.replications < 1:
            raise InvalidInputError("replications must be at least 1")
        if self.threads < 1:
            raise InvalidInputError("threads must be at least 1")
        unknown = set(self.params) - set(DESK_DEFAULTS[self.name])
        if unknown:
            raise InvalidInputError(f"unknown parameters for {self.name}: {sorted(unknown)}")

    def resolved(self) -> dict:
        cfg = dict(DESK_DEFAULTS[self.name])
        if self.full_scale:
            cfg.update(FULL_SCALE[self.name])
        cfg.update(self.params)
        if self.replications is not None:
            cfg["replications"] = self.replications
        return cfg

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentSpec:
        data = dict(data)
        if "name" not in data:
            raise InvalidInputError("experiment spec needs a 'name'")
        top = {k: data.pop(k) for k in ("name", "seed", "replications", "threads", "full_scale") if k in data}
        params = dict(data.pop("params", {}))
        params.update(data)  # remaining top-level keys are parameters too
        return cls(params=params, **top)

    @classmethod
    def from_json(cls, path) -> ExperimentSpec:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise DataFileError(f"{path}: cannot read ({exc.strerror})", path=path) from None
        except json.JSONDecodeError as exc:
            raise DataFileError(f"{path}: invalid JSON at line {exc.lineno}", path=path, row=exc.lineno) from None
        if not isinstance(data, dict):
            raise DataFileError(f"{path}: expected a JSON object", path=path)
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentReport:
    """Summary numbers plus named CSV tables ``{name: (header, rows)}``."""

    name: str
    summary: dict
    tables: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "summary": self.summary}

    def write(self, out_dir) -> list:

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / f"{self.name}_summary.json"]
        write_json(written[0], self.to_dict())
        for table, (header, rows) in self.tables.items():
            path = out / f"{self.name}_{table}.csv"
            write_csv(path, header, rows)
            written.append(path)
        return written


def _mean_sd(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    mean = math.fsum(v) / v.size
    sd = math.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1)) if v.size > 1 else 0.0
    return mean, sd


def run_normality_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Coverage of the asymptotic 95% ellipse for replicated Gaussian-mean problems.

    Each replication draws fresh observations and prior samples, fits, and
    checks whether ``sqrt(n_p) delta_hat`` falls outside the ellipse predicted
    by that replication's own plug-in covariance, centered at zero.
    """


    cfg = spec.resolved()
    reps = int(cfg["replications"])
    d = int(cfg["latent_dim"])
    n_obs = int(cfg["n_obs"])
    if n_obs % d:
        raise InvalidInputError("n_obs must be a multiple of latent_dim")
    copies = n_obs // d
    n_prior = int(cfg["n_prior"])
    sigma = float(cfg["sigma"])
    threshold = chi2_quantile(float(cfg["level"]), d)
    feature = FeatureMap.identity(d)

    def one(r):
        y_p = cfg["obs_mean"] + cfg["obs_sd"] * stream(spec.seed, r, "y_p").standard_normal(n_obs)
        y_q = cfg["obs_mean"] + cfg["obs_sd"] * stream(spec.seed, r, "y_q").standard_normal(n_obs)
        xp = stream(spec.seed, r, "x_p").standard_normal((n_prior, d))
        xq = stream(spec.seed, r, "x_q").standard_normal((n_prior, d))
        lp = GaussianLinearLikelihood.replicated(y_p, d, copies, sigma)
        lq = GaussianLinearLikelihood.replicated(y_q, d, copies, sigma)

        problem = PreProblem(lp, lq, xp, xq, feature)
        try:
            res = fit(problem)
            if not res.converged:
                return None
            rep = asymptotic_report(problem, res)
        except PostRatioError:
            return None
        scaled = math.sqrt(problem.n_p) * res.delta_hat
        d2 = float(scaled @ np.linalg.solve(rep.avar, scaled))
        z = scaled / np.sqrt(np.diag(rep.avar))
        return scaled, d2, z

    results = parallel_map(one, range(reps), spec.threads)
    ok = [r for r in results if r is not None]
    failures = reps - len(ok)
    if failures > 0.01 * reps:

        raise SolverFailureError(f"{failures} of {reps} replications failed (limit 1%)")
    outside = [r[1] > threshold for r in ok]
    frac = sum(outside) / len(ok)
    Z = np.array([r[2] for r in ok])
    m = Z.shape[0]
    theo = ndtri((np.arange(1, m + 1) - 0.5) / m)
    qq_rows = [[theo[i]] + [float(v) for v in np.sort(Z, axis=0)[i]] for i in range(m)]
    point_rows = [[i] + [float(v) for v in r[0]] + [r[1], int(r[1] > threshold)] for i, r in enumerate(ok)]
    summary = {
        "replications": reps,
        "failures": failures,
        "level": cfg["level"],
        "chi2_threshold": threshold,
        "outside_fraction": frac,
        "n_prior": n_prior,
        "sigma": sigma,
        "seed": spec.seed,
    }
    tables = {
        "qq": (["normal_quantile"] + [f"z{k + 1}" for k in range(d)], qq_rows),
        "points": (["replication"] + [f"sqrt_n_delta{k + 1}" for k in range(d)] + ["mahalanobis2", "outside"], point_rows),
    }
    return ExperimentReport("normality", summary, tables)


def run_consistency_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Minimum Hessian eigenvalue over the shrinking ball and the ratio statistic.

    Both sides observe ``y = 0`` in two dimensions through ``N(x, sigma^2 I)``
    with standard-normal priors, so the true parameter is zero and serves as
    the reference point.
    """

    cfg = spec.resolved()
    reps = int(cfg["replications"])
    grid = [int(n) for n in cfg["n_grid"]]
    d = 2
    like = GaussianLinearLikelihood(np.zeros(d), float(cfg["sigma"]))
    feature = FeatureMap.identity(d)

    def one(job):
        gi, r = job
        n = grid[gi]
        xp = stream(spec.seed, gi * 1_000_000 + r, "x_p").standard_normal((n, d))
        xq = stream(spec.seed, gi * 1_000_000 + r, "x_q").standard_normal((n, d))
        problem = PreProblem(like, like, xp, xq, feature)
        diag = consistency_diagnostics(
            problem, np.zeros(d), cfg["radius_scale"] / math.sqrt(n), int(cfg["n_restarts"]), seed=r
        )
        return diag.min_eig_over_ball, diag.weyl_lower_bound, diag.ratio_stat

    jobs = [(gi, r) for gi in range(len(grid)) for r in range(reps)]
    results = parallel_map(one, jobs, spec.threads)
    rows, raw = [], []
    for gi, n in enumerate(grid):
        block = np.array(results[gi * reps : (gi + 1) * reps])
        me, se = _mean_sd(block[:, 0])
        mw, sw = _mean_sd(block[:, 1])
        mr, sr = _mean_sd(block[:, 2])
        rows.append([n, me, se, mw, sw, mr, sr, int(np.all(block[:, 1] <= block[:, 0] + 1e-8))])
        raw.extend([n, r] + list(block[r]) for r in range(reps))
    header = ["n", "min_eig_mean", "min_eig_sd", "weyl_mean", "weyl_sd", "ratio_mean", "ratio_sd", "weyl_below"]
    summary = {
        "replications": reps,
        "seed": spec.seed,
        "rows": [dict(zip(header, row)) for row in rows],
    }
    tables = {"table": (header, rows), "runs": (["n", "run", "min_eig", "weyl_bound", "ratio_stat"], raw)}
    return ExperimentReport("consistency", summary, tables)


def run_detection_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Background versus signal window pairs scored by four distance measures.

    A pair's reference window always comes from the background regime; the
    test window comes from the background (negative) or signal (positive)
    regime.  AUC treats larger scores as evidence of a signal.
    """

    cfg = spec.resolved()
    pairs = int(cfg["replications"])
    L = int(cfg["window_len"])
    burn = int(cfg["burn_in"])
    psd = math.sqrt(cfg["process_var"])
    osd = math.sqrt(cfg["obs_var"])
    bank_p = gen_prior_bank(*cfg["prior_p_alpha"], int(cfg["n_prior"]), L, burn, psd, stream(spec.seed, 0, "bank_p"))
    bank_q = gen_prior_bank(*cfg["prior_q_alpha"], int(cfg["n_prior"]), L, burn, psd, stream(spec.seed, 0, "bank_q"))
    config = DetectionConfig(
        L, FeatureMap.autocorr(L, int(cfg["ar_order"])), bank_p, bank_q, float(cfg["sigma"]),
        score_mode=cfg["score_mode"],
    )
    prior_ratio_delta(config)  # fill the cache before threads share the config

    def one(job):
        i, label = job
        alpha_q = cfg["alpha_signal"] if label else cfg["alpha_background"]
        y_p = gen_ar_sequence(cfg["alpha_background"], L, burn, psd, osd, stream(spec.seed, i, f"ref{label}")).observed
        y_q = gen_ar_sequence(alpha_q, L, burn, psd, osd, stream(spec.seed, i, f"test{label}")).observed
        out = []
        for scorer in (
            lambda: pre_score(y_p, y_q, config),
            lambda: plugin_score(y_p, y_q, config),
            lambda: autocorr_distance(y_p, y_q, int(cfg["ar_order"])),
            lambda: sst_distance(y_p, y_q, int(cfg["sst_window"]), int(cfg["sst_rank"])),
        ):
            try:
                out.append(float(scorer()))
            except PostRatioError:
                out.append(math.nan)
        return out

    jobs = [(i, label) for label in (0, 1) for i in range(pairs)]
    scores = np.array(parallel_map(one, jobs, spec.threads))
    labels = np.array([label for _, label in jobs])
    methods = ["pre", "plugin", "autocorr", "sst"]
    auc, roc_rows, failures = {}, [], {}
    for m, name in enumerate(methods):
        col = scores[:, m]
        good = ~np.isnan(col)
        failures[name] = int(np.sum(~good))
        pos, neg = col[good & (labels == 1)], col[good & (labels == 0)]
        if pos.size and neg.size:
            auc[name] = roc_auc(pos, neg)
            roc_rows.extend([name, fpr, tpr] for fpr, tpr in roc_points(pos, neg))
        else:
            auc[name] = math.nan
    score_rows = [[i, label] + list(scores[j]) for j, (i, label) in enumerate(jobs)]
    summary = {
        "pairs_per_class": pairs,
        "n_prior": int(cfg["n_prior"]),
        "score_mode": cfg["score_mode"],
        "seed": spec.seed,
        "auc": auc,
        "failures": failures,
    }
    tables = {
        "scores": (["pair", "signal"] + methods, score_rows),
        "roc": (["method", "fpr", "tpr"], roc_rows),
    }
    return ExperimentReport("detection", summary, tables)


def gaussian_bayes_blackbox(mu_pos, mu_neg, pocket_center=None, pocket_width=0.5):
    """``P(+1 | x)`` for unit-covariance Gaussian classes with equal priors.

    With a pocket, the probability is multiplied by
    ``1 - exp(-|x - c|^2 / (2 w^2))`` so the classifier confidently says -1
    near ``c`` whatever the Gaussian rule says.
    """

    mu_pos = np.asarray(mu_pos, dtype=float)
    mu_neg = np.asarray(mu_neg, dtype=float)
    slope = mu_pos - mu_neg
    offset = 0.5 * (mu_pos @ mu_pos - mu_neg @ mu_neg)
    center = None if pocket_center is None else np.asarray(pocket_center, dtype=float)

    def prob(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p = expit(X @ slope - offset)
        if center is not None:
            p = p * -np.expm1(-np.sum((X - center) ** 2, axis=1) / (2.0 * pocket_width**2))
        return p

    return prob


def run_extraction_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Direction recovery of local linear explanations with and without outliers.

    The outliers sit in the pocket where the black box contradicts the
    Gaussian rule.  The reference direction is ``mu_neg - mu_pos``.
    """


    cfg = spec.resolved()
    reps = int(cfg["replications"])
    n = int(cfg["n_loc"])
    mu_pos = np.asarray(cfg["mu_pos"], dtype=float)
    mu_neg = np.asarray(cfg["mu_neg"], dtype=float)
    d = mu_pos.size
    truth = mu_neg - mu_pos
    center = np.asarray(cfg["pocket_center"], dtype=float)
    bb = gaussian_bayes_blackbox(mu_pos, mu_neg, center, float(cfg["pocket_width"]))
    m = round(cfg["outlier_fraction"] * n)

    def one(r):
        X = float(cfg["loc_sd"]) * stream(spec.seed, r, "x_loc").standard_normal((n, d))
        Xo = X.copy()
        Xo[:m] = center + float(cfg["pocket_spread"]) * stream(spec.seed, r, "outliers").standard_normal((m, d))
        out = []
        for data in (X, Xo):
            out.append(direction_cosine(extract_local_linear(bb, data, warn=False).delta, truth))
            out.append(direction_cosine(surrogate_baseline(bb, data, warn=False).delta, truth))
        return out

    res = np.array(parallel_map(one, range(reps), spec.threads))
    cols = ["pre_clean", "surrogate_clean", "pre_outliers", "surrogate_outliers"]
    means = {c: _mean_sd(res[:, i])[0] for i, c in enumerate(cols)}
    summary = {
        "replications": reps,
        "n_loc": n,
        "outliers": m,
        "seed": spec.seed,
        "mean_cosine": means,
        "pre_degradation": means["pre_clean"] - means["pre_outliers"],
        "surrogate_degradation": means["surrogate_clean"] - means["surrogate_outliers"],
    }
    rows = [[r] + list(res[r]) for r in range(reps)]
    return ExperimentReport("extraction", summary, {"runs": (["run"] + cols, rows)})


RUNNERS = {
    "normality": run_normality_experiment,
    "consistency": run_consistency_experiment,
    "detection": run_detection_experiment,
    "extraction": run_extraction_experiment,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    return RUNNERS[spec.name](spec)
