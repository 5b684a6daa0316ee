import json

import numpy as np
import pytest

from chipteleport import experiments as ex
from chipteleport.channel import NoiseConfig
from chipteleport.experiments import ConfigError, ExperimentConfig, run_experiment


def run(experiment, **kw):
    opts = kw.pop("options", {})
    opts.setdefault("resamples", 20)
    return run_experiment(ExperimentConfig.from_json({"experiment": experiment, "options": opts, **kw}))


class TestCalibrateNoise:
    def test_perfect_target(self):
        fit = ex.calibrate_noise({"state": 1.0, "process": 1.0})
        assert fit.noise.source_visibility == 1.0
        assert fit.noise.phase_jitter_sigma == 0.0
        assert fit.feasible

    def test_werner_inversion(self):
        f = 0.9576
        fit = ex.calibrate_noise({"state": f}, fixed={"phase_jitter_sigma": 0.0})
        assert fit.noise.source_visibility == pytest.approx((f - 0.25) / 0.75, abs=1e-9)

    def test_inconsistent_targets(self):
        fit = ex.calibrate_noise({"state": 1.0, "process": 0.5})
        assert not fit.feasible
        assert fit.provenance()["feasible"] is False
        assert fit.worst_error > ex.FIT_TOLERANCE

    def test_unknown_target(self):
        with pytest.raises(ConfigError):
            ex.calibrate_noise({"visibility": 0.95})

    def test_model_closed_forms(self):
        v, sigma = 0.96, 0.35
        p = (1 - np.exp(-sigma**2 / 2)) / 2
        m = ex.model_metrics(NoiseConfig(v, phase_jitter_sigma=sigma))
        f = v * (1 - p) + (1 - v) / 4
        for k in ("state", "entangled", "process"):
            assert m[k] == pytest.approx(f, abs=1e-9)
        assert m["truth_table"] == pytest.approx(v + (1 - v) / 2, abs=1e-12)

    @pytest.mark.parametrize("name", ex.PRESETS)
    def test_shipped_presets_match_refit(self, name):
        fit = ex.fit_preset(name)
        shipped = ex.load_preset(name)
        assert fit.feasible
        assert fit.noise.source_visibility == pytest.approx(shipped.source_visibility, abs=1e-6)
        assert fit.noise.phase_jitter_sigma == pytest.approx(shipped.phase_jitter_sigma, abs=1e-6)
        assert shipped.fiber_km == ex.PRESET_FIT[name]["fiber_km"]

    @pytest.mark.parametrize("name", ex.PRESETS)
    def test_presets_hit_targets_exactly(self, name):
        m = ex.model_metrics(ex.load_preset(name))
        for k, v in ex.PAPER_TARGETS[name].items():
            assert abs(m[k] - v) <= 0.01

    def test_write_presets(self, tmp_path):
        ex.write_presets(tmp_path)
        doc = json.loads((tmp_path / "paper-1km.json").read_text())
        assert doc["name"] == "paper-1km"
        prov = json.loads((tmp_path / "paper-1km.provenance.json").read_text())
        assert prov["free_parameters"] == ["phase_jitter_sigma"]

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            ex.load_preset("paper-10km")


class TestConfig:
    def test_parse_shots(self):
        assert ex.parse_shots("exact") is None
        assert ex.parse_shots(100) == 100
        for bad in (0, -3, "many", 2.5):
            with pytest.raises(ConfigError):
                ex.parse_shots(bad)

    @pytest.mark.parametrize("obj", [
        {"experiment": "teleport"},
        {"experiment": "truth-table", "mode": "both"},
        {"experiment": "truth-table", "seed": -1},
        {"experiment": "truth-table", "seed": 2**64},
        {"experiment": "truth-table", "colour": "red"},
        {"experiment": "truth-table", "noise": {"source_visibility": 2}},
        {"experiment": "truth-table", "noise": "/nonexistent.json"},
        {"experiment": "truth-table", "fiber_km": -1},
        {},
    ])
    def test_invalid(self, obj):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(obj)

    def test_preset_by_name(self):
        cfg = ExperimentConfig.from_json({"experiment": "truth-table", "noise": "paper-1km"})
        assert cfg.preset == "paper-1km" and cfg.noise == ex.load_preset("paper-1km")

    def test_fiber_override(self):
        cfg = ExperimentConfig.from_json({"experiment": "truth-table", "preset": "paper-5m"}, {"fiber_km": 2.0})
        assert cfg.noise.fiber_km == 2.0

    def test_input_hash(self):
        a = ExperimentConfig.from_json({"experiment": "truth-table", "seed": 1})
        b = ExperimentConfig.from_json({"experiment": "truth-table", "seed": 2})
        assert len(a.input_hash()) == 40 and a.input_hash() != b.input_hash()

    def test_blob_hash_matches_git(self):
        assert ex.git_blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


class TestExperiments:
    def test_truth_table_ideal(self):
        res = run("truth-table")
        assert res.metric("truth_table_fidelity") == pytest.approx(1.0, abs=1e-12)
        assert res.report["exact_mode"] is True

    @pytest.mark.parametrize("name", ex.EXPERIMENTS)
    def test_every_report_validates(self, name):
        kw = {"options": {"trials": 5}} if name == "netlab-session" else {}
        res = run(name, **kw)
        ex.validate_report(res.report)
        json.dumps(res.report, allow_nan=False)

    def test_process_tomo_presets(self):
        for name, target in (("paper-5m", 0.9481), ("paper-1km", 0.9304)):
            res = run("process-tomo", preset=name)
            m = res.report["metrics"]["process_fidelity"]
            assert abs(m["value"] - target) <= 0.02 and m["target"] == target
            assert ex.CALIBRATION_NOTE in res.report["notes"]

    def test_sampled_reports_identical(self, tmp_path):
        outs = []
        for k in range(2):
            res = run("entangle", preset="paper-5m", shots=2000, seed=9)
            ex.write_outputs(res, tmp_path / str(k))
            outs.append(sorted((p.relative_to(tmp_path / str(k)), p.read_bytes())
                               for p in (tmp_path / str(k)).rglob("*") if p.is_file()))
        assert outs[0] == outs[1]

    def test_seed_changes_counts(self):
        a = run("state-tomo", preset="paper-5m", shots=1000, seed=1)
        b = run("state-tomo", preset="paper-5m", shots=1000, seed=2)
        assert a.counts != b.counts

    def test_outputs_layout(self, tmp_path):
        res = run("process-tomo")
        ex.write_outputs(res, tmp_path)
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "matrices" / "chi_re.csv").exists()
        lines = (tmp_path / "counts.jsonl").read_text().splitlines()
        assert len(lines) == 256
        chi = np.loadtxt(tmp_path / "matrices" / "chi_re.csv", delimiter=",")
        assert chi.shape == (16, 16)

    def test_state_tomo_input_option(self):
        res = run("state-tomo", options={"input_state": "10"})
        assert res.metric("output_fidelity") == pytest.approx(1, abs=1e-10)
        with pytest.raises(ConfigError):
            run("state-tomo", options={"input_state": "qq"})

    def test_calibrate_fiber(self):
        res = run("calibrate-fiber", seed=4)
        assert res.metric("isolation_reached") == 1.0
        assert res.metric("compensated_channel_fidelity") >= 1 - 1 / 201

    def test_visibility_exact(self):
        res = run("visibility")
        assert res.metric("visibility") == pytest.approx(1, abs=1e-10)

    def test_netlab_experiment(self):
        res = run("netlab-session", seed=3, preset="paper-5m", options={"trials": 30})
        assert res.report["replay_identical"] is True
        assert res.report["locc_violations"] == [] and res.report["message_count_violations"] == []

    def test_bad_resamples(self):
        with pytest.raises(ConfigError):
            run("truth-table", options={"resamples": 1})

    def test_schema_rejects_missing_hash(self):
        import jsonschema

        rep = run("truth-table").report
        rep.pop("input_hash")
        with pytest.raises(jsonschema.ValidationError):
            ex.validate_report(rep)
