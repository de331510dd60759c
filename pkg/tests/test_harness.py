import filecmp
import json

import numpy as np
import pytest

from resectsim.errors import ConfigError, TooFewTumorTags
from resectsim.harness import (
    PROFILES,
    ExperimentConfig,
    run_end_to_end,
    run_marker_experiment,
    run_roi_experiment,
    run_trajectory_experiment,
    truth_calibration,
)

NO_TUMOR_SCENE = {
    "primitives": [{"kind": "plane", "z": 3.0}],
    "regions": [],
    "albedo": {"default": 0.9},
}

TINY_DISC_SCENE = {
    "primitives": [{"kind": "plane", "z": 3.0}],
    "regions": [
        {"label": "tumor", "kind": "disc", "center": [6.3, 6.4], "radius": 0.5}
    ],
    "albedo": {"default": 0.9, "tumor": 0.35},
}


class TestConfig:
    def test_seed_required(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"profile": "diode"})

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seed": 1, "lasers": 3})

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(seed=1, profile="maser")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(tmp_path / "nope.json")

    def test_roundtrip_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 9, "scan_points": 64,
                                    "profile": "fiber"}))
        cfg = ExperimentConfig.from_json(path)
        assert cfg.seed == 9
        assert cfg.scan_points == 64

    def test_counts_floor(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(seed=1, scan_points=2)


class TestProfiles:
    def test_three_profiles(self):
        assert set(PROFILES) == {"diode", "tumorid", "fiber"}

    def test_truth_calibration_tilt_override(self):
        calib = truth_calibration(PROFILES["diode"], tilt_deg=40.0)
        angle = np.degrees(np.arccos(-calib.v_w[2]))
        assert abs(angle - 40.0) < 1e-9

    def test_fiber_quietest(self):
        assert PROFILES["fiber"].spot_sigma < PROFILES["diode"].spot_sigma
        assert PROFILES["fiber"].spot_sigma < PROFILES["tumorid"].spot_sigma


class TestMarker:
    @pytest.mark.parametrize("profile", ["diode", "tumorid", "fiber"])
    def test_noiseless_submicron(self, tmp_path, profile):
        cfg = ExperimentConfig(seed=1, profile=profile, noiseless=True)
        r = run_marker_experiment(cfg, tmp_path)
        assert r.report["mean_mm"] < 1e-6
        assert len(r.report["errors_mm"]) == 9

    def test_noisy_band(self, tmp_path):
        means = []
        for seed in range(3):
            cfg = ExperimentConfig(seed=seed, profile="diode", noiseless=False)
            r = run_marker_experiment(cfg, tmp_path / str(seed))
            means.append(r.report["mean_mm"])
        assert all(0.1 <= m <= 1.0 for m in means)

    def test_artifacts_written(self, tmp_path):
        cfg = ExperimentConfig(seed=1, noiseless=False)
        r = run_marker_experiment(cfg, tmp_path)
        for path in r.artifacts.values():
            assert path.exists()
        assert "observations" in r.artifacts


class TestTrajectory:
    def test_noiseless(self, tmp_path):
        cfg = ExperimentConfig(seed=2, noiseless=True)
        r = run_trajectory_experiment(cfg, tmp_path)
        assert r.report["rmse_mm"] < 1e-6

    def test_error_bounded_by_actual_spacing(self, tmp_path):
        # actual samples lie on the target curve, so each is within half a
        # (dense) target spacing of its nearest target
        cfg = ExperimentConfig(seed=2, noiseless=True)
        r = run_trajectory_experiment(cfg, tmp_path)
        assert r.report["max_mm"] < 0.5 * 15.0 / 80

    def test_noisy_reports_summary(self, tmp_path):
        cfg = ExperimentConfig(seed=5, noiseless=False, profile="tumorid")
        r = run_trajectory_experiment(cfg, tmp_path)
        for key in ("mean_mm", "std_mm", "rmse_mm", "max_mm"):
            assert key in r.report
        assert r.report["rmse_mm"] > 0


class TestRoi:
    def test_noiseless_closed_loop(self, tmp_path):
        cfg = ExperimentConfig(seed=4, noiseless=True, classifier="perfect",
                               scan_points=100)
        r = run_roi_experiment(cfg, tmp_path)
        regs = r.report["regions"]
        assert regs["calibration"]["iou"] == 1.0
        assert regs["algorithm"]["mean"] <= 13.0 / 9
        assert regs["algorithm"]["undercut"] >= regs["algorithm"]["overcut"]

    def test_threshold_classifier_perfect_separation(self, tmp_path):
        cfg = ExperimentConfig(seed=4, noiseless=True, classifier="threshold",
                               scan_points=100)
        r = run_roi_experiment(cfg, tmp_path)
        assert r.report["classification"]["accuracy"] == 1.0

    def test_tiny_disc_degenerate(self, tmp_path):
        cfg = ExperimentConfig(seed=4, noiseless=True, classifier="perfect",
                               scene=TINY_DISC_SCENE, scan_points=64)
        with pytest.raises(TooFewTumorTags):
            run_roi_experiment(cfg, tmp_path)

    def test_byte_identical_reports(self, tmp_path):
        cfg = ExperimentConfig(seed=6, noiseless=False, classifier="threshold",
                               scan_points=64)
        r1 = run_roi_experiment(cfg, tmp_path / "a")
        r2 = run_roi_experiment(cfg, tmp_path / "b")
        for name in r1.artifacts:
            assert filecmp.cmp(r1.artifacts[name], r2.artifacts[name],
                               shallow=False), name

    def test_no_tumor_region_config_error(self, tmp_path):
        cfg = ExperimentConfig(seed=4, scene=NO_TUMOR_SCENE,
                               classifier="perfect")
        with pytest.raises(ConfigError):
            run_roi_experiment(cfg, tmp_path)


class TestEndToEnd:
    def test_noiseless_64_points(self, tmp_path):
        cfg = ExperimentConfig(seed=3, noiseless=True, scan_points=64,
                               classifier="threshold")
        r = run_end_to_end(cfg, tmp_path)
        assert r.report["regions"]["algorithm"]["iou"] >= 0.5
        assert r.report["regions"]["calibration"]["iou"] >= 0.999
        expected = {"laser_calibration", "camera_extrinsics", "volume",
                    "volume_sidecar", "surface", "spectra", "tumor_map",
                    "boundary", "cut_plan", "actual_spots", "post_surface",
                    "ledger", "report"}
        assert expected <= set(r.artifacts)
        for path in r.artifacts.values():
            assert path.exists()

    def test_all_healthy_degenerate(self, tmp_path):
        cfg = ExperimentConfig(seed=3, noiseless=True, scan_points=64,
                               classifier="perfect", scene=NO_TUMOR_SCENE)
        with pytest.raises(TooFewTumorTags):
            run_end_to_end(cfg, tmp_path)

    def test_stage_truncation(self, tmp_path):
        cfg = ExperimentConfig(seed=3, noiseless=True, scan_points=64)
        r = run_end_to_end(cfg, tmp_path, through_stage="calibrate")
        assert "laser_calibration" in r.artifacts
        assert "volume" not in r.artifacts
        r = run_end_to_end(cfg, tmp_path, through_stage="scan")
        assert "volume" in r.artifacts
        assert "tumor_map" not in r.artifacts

    def test_mlp_classifier_path(self, tmp_path):
        cfg = ExperimentConfig(seed=3, noiseless=True, scan_points=64,
                               classifier="mlp", mlp_epochs=3,
                               mlp_train_per_class=40)
        r = run_end_to_end(cfg, tmp_path)
        assert "model" in r.artifacts
        assert r.report["classification"]["accuracy"] >= 0.9
