from __future__ import annotations

import json
import math

import numpy as np
import pytest

from postratio.errors import DataFileError, InvalidInputError
from postratio.simulation import (
    DESK_DEFAULTS,
    ExperimentSpec,
    gen_ar_sequence,
    gen_prior_bank,
    parallel_map,
    run_experiment,
    stream,
)


class TestGenerators:
    def test_noise_free_is_zero(self):
        seq = gen_ar_sequence(0.7, 100, process_sd=0.0, obs_sd=0.0, seed=1)
        assert not seq.latent.any() and not seq.observed.any()

    def test_white_noise_variance(self):
        x = gen_ar_sequence(0.0, 100_000, process_sd=0.5, obs_sd=0.0, seed=2).latent
        se = 0.25 * math.sqrt(2 / x.size)
        assert abs(x.var() - 0.25) <= 3 * se

    def test_lag1_autocorrelation(self):
        x = gen_ar_sequence(0.5, 100_000, seed=3).latent
        x = x - x.mean()
        r1 = float(x[1:] @ x[:-1] / (x @ x))
        assert abs(r1 - 0.5) <= 3 * math.sqrt((1 - 0.25) / x.size)

    def test_gaussian_sanity(self):
        z = stream(0, 0, "check").standard_normal(20000)
        assert abs(z.mean()) <= 5 / math.sqrt(z.size)
        assert abs(z.var() - 1) <= 5 * math.sqrt(2 / z.size)

    def test_lengths_and_flag(self):
        seq = gen_ar_sequence(1.2, 7, burn_in=3, seed=0)
        assert seq.latent.shape == (7,) and seq.nonstationary
        assert not gen_ar_sequence(0.3, 7, seed=0).nonstationary

    def test_bad_steps(self):
        with pytest.raises(InvalidInputError):
            gen_ar_sequence(0.5, 0)

    def test_bank_shapes(self):
        assert gen_prior_bank(0.5, 0.1, 1, 10, seed=0).samples.shape == (1, 10)
        assert gen_prior_bank(0.5, 0.1, 30, 12, seed=0).samples.shape == (30, 12)

    def test_bank_autocorrelation_centered(self):
        X = gen_prior_bank(0.5, 0.1, 2000, 200, seed=4).samples
        Xc = X - X.mean(axis=1, keepdims=True)
        r1 = np.sum(Xc[:, 1:] * Xc[:, :-1], axis=1) / np.sum(Xc * Xc, axis=1)
        assert abs(np.median(r1) - 0.5) <= 0.03

    def test_stream_independent_of_order(self):
        a = stream(5, 3, "x").standard_normal(4)
        stream(5, 2, "x").standard_normal(100)
        np.testing.assert_array_equal(a, stream(5, 3, "x").standard_normal(4))
        assert not np.array_equal(a, stream(5, 3, "y").standard_normal(4))

    def test_parallel_map_order(self):
        assert parallel_map(lambda x: x * x, range(20), threads=4) == [x * x for x in range(20)]


class TestExperimentSpec:
    def test_defaults(self):
        spec = ExperimentSpec("normality")
        assert spec.resolved()["replications"] == 2000

    def test_full_scale(self):
        assert ExperimentSpec("normality", full_scale=True).resolved()["replications"] == 5000

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            ExperimentSpec("unknown")
        with pytest.raises(InvalidInputError):
            ExperimentSpec("normality", replications=0)
        with pytest.raises(InvalidInputError):
            ExperimentSpec("normality", params={"nonsense": 1})
        with pytest.raises(InvalidInputError):
            ExperimentSpec("normality", seed=-1)

    def test_top_level_params(self):
        spec = ExperimentSpec.from_dict({"name": "detection", "n_prior": 50, "replications": 4})
        assert spec.params == {"n_prior": 50} and spec.replications == 4

    def test_json(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"name": "extraction", "seed": 3, "params": {"n_loc": 40}}))
        spec = ExperimentSpec.from_json(path)
        assert spec.seed == 3 and spec.resolved()["n_loc"] == 40
        path.write_text("{oops")
        with pytest.raises(DataFileError):
            ExperimentSpec.from_json(path)

    def test_every_experiment_has_defaults(self):
        assert set(DESK_DEFAULTS) == {"normality", "consistency", "detection", "extraction"}


SMALL = {
    "normality": {"replications": 12, "n_prior": 200},
    "consistency": {"replications": 3, "n_grid": [50, 100]},
    "detection": {"replications": 6, "n_prior": 150, "window_len": 30, "ar_order": 5, "sst_window": 15, "sst_rank": 3},
    "extraction": {"replications": 3, "n_loc": 60},
}


def _files(report, out):
    return {p.name: p.read_bytes() for p in report.write(out)}


class TestExperiments:
    @pytest.mark.parametrize("name", sorted(SMALL))
    def test_thread_count_determinism(self, name, tmp_path):
        params = dict(SMALL[name])
        reps = params.pop("replications")
        one = run_experiment(ExperimentSpec(name, seed=7, replications=reps, threads=1, params=params))
        four = run_experiment(ExperimentSpec(name, seed=7, replications=reps, threads=4, params=params))
        assert _files(one, tmp_path / "a") == _files(four, tmp_path / "b")

    def test_seed_changes_output(self):
        params = dict(SMALL["normality"])
        reps = params.pop("replications")
        a = run_experiment(ExperimentSpec("normality", seed=1, replications=reps, params=params))
        b = run_experiment(ExperimentSpec("normality", seed=2, replications=reps, params=params))
        assert a.tables["points"] != b.tables["points"]

    def test_normality_single_replication(self):
        rep = run_experiment(ExperimentSpec("normality", replications=1, params={"n_prior": 200}))
        assert len(rep.tables["points"][1]) == 1
        assert rep.summary["outside_fraction"] in (0.0, 1.0)

    def test_consistency_weyl_rows(self):
        params = dict(SMALL["consistency"])
        rep = run_experiment(ExperimentSpec("consistency", replications=params.pop("replications"), params=params))
        assert [row["n"] for row in rep.summary["rows"]] == [50, 100]
        assert all(row["weyl_below"] == 1 for row in rep.summary["rows"])

    def test_detection_identical_pairs(self):
        # equal signal and background regimes leave no signal to rank
        params = dict(SMALL["detection"])
        params["alpha_signal"] = params.get("alpha_background", 0.5)
        rep = run_experiment(ExperimentSpec("detection", replications=params.pop("replications"), params=params))
        assert set(rep.summary["auc"]) == {"pre", "plugin", "autocorr", "sst"}
        assert all(0.0 <= v <= 1.0 for v in rep.summary["auc"].values())

    def test_extraction_summary(self):
        params = dict(SMALL["extraction"])
        rep = run_experiment(ExperimentSpec("extraction", replications=params.pop("replications"), params=params))
        assert rep.summary["outliers"] == 3
        assert set(rep.summary["mean_cosine"]) == {"pre_clean", "surrogate_clean", "pre_outliers", "surrogate_outliers"}
