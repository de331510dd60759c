"""Experiment drivers: phantom studies and the full scan-to-report loop.

Every run is a pure function of (config, seed): noise streams are derived
from the seed with per-stage salts, file writers are deterministic, and
wall-clock timings stay in memory (TrialResult.timings) so artifacts are
byte-identical across repeats.

Noise model. Each laser profile carries a synthetic ground-truth calibration
plus two sigmas: ``calib_sigma`` perturbs the measured spot centers on the
calibration boards (so the estimated calibration is imperfect), and
``spot_sigma`` perturbs executed spot centers laterally (so the traced
region differs from the commanded one). The three profiles differ only in
these synthetic parameters. With ``noiseless: true`` the phantom runners
calibrate from exact board data, while the region-tracking runners
(roi, e2e) use the ground-truth calibration directly, which is what
"perfect calibration" means for their closed-loop checks.

Region comparisons follow the three-way convention: system = actual vs
true, algorithm = predicted vs true, calibration = actual vs predicted,
with edge errors directed from the achieved outline to the reference one.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as rio
from .calibration import (
    AxisObservation,
    Correspondence2D3D,
    LaserCalibration,
    beam_from_angles,
    calibrate_laser_axes,
    calibrate_laser_orientation,
    estimate_camera_extrinsics,
    synthesize_spot_observations,
    waypoint_position,
)
from .errors import ConfigError, NoRayHit
from .geometry import Ray, SurfaceCloud, nearest_neighbor, triangulate_grid
from .kinematics import plan_trajectory, raster_pattern, solve_ik
from .mapping import (
    SpotLocator,
    boundary_from_tags,
    build_tumor_tags,
    colorize_surface,
    convex_hull,
    select_cut_targets,
)
from .metrics import (
    Region2D,
    compare_regions,
    disc_polygon,
    summarize,
)
from .sensors import (
    OctConfig,
    PinholeCamera,
    ScenePhantom,
    SpectrumConfig,
    intersect_scene,
    project_points,
    project_world_to_image,
    render_oct_volume,
    segment_surface,
    synth_spectrum,
)
from .spectra import (
    HEALTHY,
    TUMOR,
    PreprocessConfig,
    ThresholdClassifier,
    TrainConfig,
    classification_metrics,
    mlp_predict,
    mlp_train,
    preprocess,
    threshold_classify,
)

WORKING_DISTANCE = 56.3  # mm

# fixed band and cutoff of the phantom threshold rule
PHANTOM_RULE = ThresholdClassifier(((495.0, 570.0),), 0.50, 0.0, "low")

REGION_COLORS = {HEALTHY: (205, 180, 170), TUMOR: (70, 60, 150)}
IMAGE_BACKGROUND = (15, 15, 15)

# rng salts, one stream per noise source
_SALT_CALIB = 1
_SALT_SPOT = 2
_SALT_PIXELS = 3
_SALT_EXTRINSICS = 4
_SALT_OCT = 5


@dataclass(frozen=True)
class LaserProfile:
    """Synthetic rig: ground-truth calibration plus noise sigmas (mm)."""

    name: str
    tilt_deg: tuple[float, float]  # beam tilt angles (about x, about y)
    alpha: tuple[float, float]
    axis_skew_deg: float  # angle between the two commanded axes
    spot_sigma: float
    calib_sigma: float
    pixel_sigma: float


PROFILES = {
    "diode": LaserProfile("diode", (4.0, -2.5), (1.5, -2.0), 88.0, 0.30, 0.10, 0.5),
    "tumorid": LaserProfile("tumorid", (-3.0, 2.0), (-2.0, 1.0), 91.5, 0.28, 0.10, 0.5),
    "fiber": LaserProfile("fiber", (2.0, 1.0), (0.8, 0.5), 90.0, 0.08, 0.04, 0.3),
}


def truth_calibration(profile: LaserProfile,
                      tilt_deg: float | None = None) -> LaserCalibration:
    """Ground-truth rig for a profile; ``tilt_deg`` overrides the beam tilt."""
    if tilt_deg is not None:
        theta, phi = np.radians(tilt_deg), 0.0
    else:
        theta, phi = np.radians(profile.tilt_deg)
    skew = np.radians(profile.axis_skew_deg)
    frame = calibrate_laser_axes(
        [0.0, 0.0, WORKING_DISTANCE],
        AxisObservation("x", [0, 0, WORKING_DISTANCE], [10, 0, WORKING_DISTANCE]),
        AxisObservation("y", [0, 0, WORKING_DISTANCE],
                        [10 * np.cos(skew), 10 * np.sin(skew), WORKING_DISTANCE]),
    )
    return LaserCalibration(frame, profile.alpha, beam_from_angles(theta, phi))


DEFAULT_SCENE = {
    "primitives": [{"kind": "plane", "z": 3.0}],
    "regions": [
        {"label": "tumor", "kind": "disc", "center": [6.3, 6.4], "radius": 5.0}
    ],
    "albedo": {"default": 0.9, "tumor": 0.35},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Run description; everything needed to reproduce a trial byte-for-byte."""

    seed: int
    scene: dict = field(default_factory=lambda: dict(DEFAULT_SCENE))
    scan_extent: tuple[float, float] = (13.0, 13.0)
    scan_points: int = 100
    profile: str = "diode"
    classifier: str = "threshold"  # threshold | mlp | perfect
    noiseless: bool = True
    tilt_deg: float | None = None
    spot_diameter: float = 0.4
    uncertain_policy: str = HEALTHY
    oct_noise: float = 0.0
    mlp_epochs: int = 150
    mlp_train_per_class: int = 120

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile '{self.profile}'")
        if self.classifier not in ("threshold", "mlp", "perfect"):
            raise ConfigError(f"unknown classifier '{self.classifier}'")
        if self.scan_points < 4:
            raise ConfigError("scan_points must be >= 4")
        if self.uncertain_policy not in (HEALTHY, TUMOR):
            raise ConfigError("uncertain_policy must map to a hard label")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "seed" not in d:
            raise ConfigError("config must set a seed (reproducibility)")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "scan_extent" in d:
            d["scan_extent"] = tuple(d["scan_extent"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc


@dataclass
class TrialResult:
    """Artifact paths plus the top-level report; timings never hit disk."""

    artifacts: dict
    report: dict
    timings: dict


def _rng(cfg: ExperimentConfig, salt: int):
    return np.random.default_rng([cfg.seed, salt])


def _scene(cfg: ExperimentConfig) -> ScenePhantom:
    return ScenePhantom.from_dict(cfg.scene)


def _scan_center(cfg: ExperimentConfig) -> tuple[float, float]:
    oct_cfg = OctConfig()
    return oct_cfg.extent_x / 2.0, oct_cfg.extent_y / 2.0


BOARD_BETAS = [(-4.0, -4.0), (4.0, -4.0), (4.0, 4.0), (-4.0, 4.0)]
BOARD_HEIGHTS = [0.0, 2.0, 4.0, 6.0]


def calibrate_laser_from_boards(cfg: ExperimentConfig,
                                truth: LaserCalibration):
    """Step-1 axis fit plus step-2 orientation fit from synthesized boards."""
    rng = _rng(cfg, _SALT_CALIB)
    sigma = 0.0 if cfg.noiseless else PROFILES[cfg.profile].calib_sigma

    def tip(beta):
        p = waypoint_position(truth.frame, truth.alpha, beta)
        return p if sigma == 0 else p + rng.normal(0.0, sigma, 3)

    frame = calibrate_laser_axes(
        [0.0, 0.0, WORKING_DISTANCE],
        AxisObservation("x", tip((0.0, 0.0)), tip((10.0, 0.0))),
        AxisObservation("y", tip((0.0, 0.0)), tip((0.0, 10.0))),
    )
    observations = synthesize_spot_observations(
        truth, BOARD_BETAS, BOARD_HEIGHTS, noise_sigma=sigma, rng=rng)
    estimated = calibrate_laser_orientation(frame, observations)
    return estimated, observations


def _effective_calibrations(cfg, perfect_when_noiseless: bool):
    truth = truth_calibration(PROFILES[cfg.profile], cfg.tilt_deg)
    if cfg.noiseless and perfect_when_noiseless:
        return truth, truth, []
    estimated, observations = calibrate_laser_from_boards(cfg, truth)
    return truth, estimated, observations


def _execute_spot(cfg, truth, beta, scene, rng):
    """Where the real beam lands for a commanded waypoint (plus spot noise)."""
    ray = Ray(waypoint_position(truth.frame, truth.alpha, beta), truth.v_w)
    spot = intersect_scene(ray, scene)
    if not cfg.noiseless:
        sigma = PROFILES[cfg.profile].spot_sigma
        spot = spot + np.array([*rng.normal(0.0, sigma, 2), 0.0])
    return spot


def _classify_spectrum(cfg, spectrum, model=None):
    if cfg.classifier == "threshold":
        verdict = threshold_classify(PHANTOM_RULE, preprocess(spectrum))
        return cfg.uncertain_policy if verdict == "uncertain" else verdict
    if cfg.classifier == "mlp":
        x = preprocess(spectrum).intensities
        return TUMOR if mlp_predict(model, x) == 1 else HEALTHY
    raise ValueError("perfect classifier has no spectrum path")


def _train_scan_classifier(cfg):
    """Seeded corpus + training for the e2e 'mlp' classifier choice."""
    per_class = cfg.mlp_train_per_class
    rows, labels = [], []
    for c, label in enumerate((HEALTHY, TUMOR)):
        for k in range(per_class):
            s = synth_spectrum(label, seed=cfg.seed * 1_000_000 + 2 * k + c)
            rows.append(preprocess(s).intensities)
            labels.append(c)
    x = np.array(rows)
    y = np.array(labels)
    model, history = mlp_train(
        x, y, TrainConfig(epochs=cfg.mlp_epochs, seed=cfg.seed))
    return model, history


# ---------------------------------------------------------------------------
# Phantom experiments
# ---------------------------------------------------------------------------


def run_marker_experiment(cfg: ExperimentConfig, out_dir) -> TrialResult:
    """Nine fiducials on a 3x3 grid at varied heights; fire and measure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    truth, estimated, observations = _effective_calibrations(
        cfg, perfect_when_noiseless=False)
    timings["calibrate"] = time.perf_counter() - t0

    cx, cy = _scan_center(cfg)
    xs = np.linspace(cx - 5.0, cx + 5.0, 3)
    ys = np.linspace(cy - 5.0, cy + 5.0, 3)
    targets = []
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            targets.append([x, y, 2.0 + 1.25 * ((i + j) % 3)])
    targets = np.array(targets)

    t0 = time.perf_counter()
    plan = plan_trajectory(estimated, targets)
    rng = _rng(cfg, _SALT_SPOT)
    errors = []
    actuals = []
    for k in range(len(plan)):
        ray = Ray(waypoint_position(truth.frame, truth.alpha, plan.waypoints[k]),
                  truth.v_w)
        plane_hit = ray.at(
            (targets[k][2] - ray.origin[2]) / ray.direction[2])
        if not cfg.noiseless:
            plane_hit = plane_hit + np.array([
                *rng.normal(0.0, PROFILES[cfg.profile].spot_sigma, 2), 0.0])
        actuals.append(plane_hit)
        errors.append(float(np.linalg.norm(plane_hit[:2] - targets[k][:2])))
    timings["execute"] = time.perf_counter() - t0

    mean, std, rmse = summarize(errors)
    report = {
        "experiment": "marker",
        "profile": cfg.profile,
        "noiseless": cfg.noiseless,
        "seed": cfg.seed,
        "errors_mm": errors,
        "mean_mm": mean,
        "std_mm": std,
        "rmse_mm": rmse,
        "calibration_residual_rms_mm": estimated.residual_rms,
    }
    artifacts = {
        "report": rio.write_json(out / "marker_report.json", report),
        "plan": rio.write_cut_plan_csv(out / "marker_plan.csv", plan),
        "calibration": rio.write_json(
            out / "laser_calibration.json",
            rio.laser_calibration_to_dict(estimated)),
    }
    if observations:
        artifacts["observations"] = rio.write_spot_observations_csv(
            out / "calibration_observations.csv", observations)
    return TrialResult(artifacts, report, timings)


def s_curve_targets(cfg: ExperimentConfig, scene: ScenePhantom,
                    n: int = 80) -> np.ndarray:
    """S-shaped path on the surface across the scan window."""
    cx, cy = _scan_center(cfg)
    t = np.linspace(0.0, 1.0, n)
    x = cx + 3.5 * np.sin(2.0 * np.pi * t)
    y = cy - 5.0 + 10.0 * t
    z = scene.height(x, y)
    return np.column_stack([x, y, z])


def run_trajectory_experiment(cfg: ExperimentConfig, out_dir) -> TrialResult:
    """Trace an S-curve; report nearest-neighbor edge errors to the targets."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    scene = _scene(cfg)
    t0 = time.perf_counter()
    truth, estimated, _ = _effective_calibrations(
        cfg, perfect_when_noiseless=False)
    timings["calibrate"] = time.perf_counter() - t0

    targets = s_curve_targets(cfg, scene)
    t0 = time.perf_counter()
    plan = plan_trajectory(estimated, targets)
    rng = _rng(cfg, _SALT_SPOT)
    actuals = np.array([
        _execute_spot(cfg, truth, plan.waypoints[k], scene, rng)
        for k in range(len(plan))
    ])
    timings["execute"] = time.perf_counter() - t0

    errors = [
        nearest_neighbor(a[:2], targets[:, :2])[1] for a in actuals
    ]
    mean, std, rmse = summarize(errors)
    report = {
        "experiment": "trajectory",
        "profile": cfg.profile,
        "noiseless": cfg.noiseless,
        "seed": cfg.seed,
        "errors_mm": [float(e) for e in errors],
        "mean_mm": mean,
        "std_mm": std,
        "rmse_mm": rmse,
        "max_mm": float(np.max(errors)),
    }
    artifacts = {
        "report": rio.write_json(out / "trajectory_report.json", report),
        "plan": rio.write_cut_plan_csv(out / "trajectory_plan.csv", plan),
        "calibration": rio.write_json(
            out / "laser_calibration.json",
            rio.laser_calibration_to_dict(estimated)),
    }
    return TrialResult(artifacts, report, timings)


def _true_region(scene: ScenePhantom) -> Region2D:
    for reg in scene.regions:
        if reg["label"] == TUMOR:
            if reg["kind"] == "disc":
                return Region2D.from_polygon(
                    disc_polygon(reg["center"], reg["radius"]), role="true")
            return Region2D.from_polygon(np.asarray(reg["vertices"]),
                                         role="true")
    raise ConfigError("scene declares no tumor region")


def _region_reports(true_region, predicted_poly, actual_poly):
    predicted = Region2D.from_polygon(predicted_poly, role="predicted")
    actual = Region2D.from_polygon(actual_poly, role="actual")
    return [
        compare_regions("system", true_region, actual),
        compare_regions("algorithm", true_region, predicted),
        compare_regions("calibration", predicted, actual),
    ]


def run_roi_experiment(cfg: ExperimentConfig, out_dir) -> TrialResult:
    """Raster-scan a demarcated region, classify, map, cut, and evaluate."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    scene = _scene(cfg)
    true_region = _true_region(scene)

    t0 = time.perf_counter()
    truth, estimated, _ = _effective_calibrations(
        cfg, perfect_when_noiseless=True)
    timings["calibrate"] = time.perf_counter() - t0

    model = None
    if cfg.classifier == "mlp":
        t0 = time.perf_counter()
        model, _ = _train_scan_classifier(cfg)
        timings["train"] = time.perf_counter() - t0

    # center the commanded grid on the scan window center
    cx, cy = _scan_center(cfg)
    center_target = [cx, cy, float(scene.height(cx, cy))]
    beta_c = solve_ik(estimated, center_target).beta
    pattern = raster_pattern(cfg.scan_extent, points=cfg.scan_points,
                             origin=(beta_c[0] - cfg.scan_extent[0] / 2.0,
                                     beta_c[1] - cfg.scan_extent[1] / 2.0))

    t0 = time.perf_counter()
    rng = _rng(cfg, _SALT_SPOT)
    predicted_spots = []
    labels = []
    true_labels = []
    for k, beta in enumerate(pattern.waypoints):
        ray_est = Ray(
            waypoint_position(estimated.frame, estimated.alpha, beta),
            estimated.v_w)
        predicted_spots.append(intersect_scene(ray_est, scene))
        measured = _execute_spot(cfg, truth, beta, scene, rng)
        true_label = scene.label_at(measured[0], measured[1])
        true_labels.append(true_label)
        if cfg.classifier == "perfect":
            labels.append(true_label)
        else:
            spectrum = synth_spectrum(
                true_label, seed=cfg.seed * 1_000_000 + k)
            labels.append(_classify_spectrum(cfg, spectrum, model))
    timings["scan"] = time.perf_counter() - t0

    tags = build_tumor_tags(predicted_spots, labels)
    boundary = boundary_from_tags(tags)
    region = select_cut_targets(tags, boundary)
    plan = plan_trajectory(estimated, region.targets)

    t0 = time.perf_counter()
    actual_spots = np.array([
        _execute_spot(cfg, truth, plan.waypoints[k], scene, rng)
        for k in range(len(plan))
    ])
    timings["execute"] = time.perf_counter() - t0

    reports = _region_reports(true_region, boundary.vertices,
                              convex_hull(actual_spots[:, :2]))
    cls = classification_metrics(
        [1 if l == TUMOR else 0 for l in labels],
        [1 if l == TUMOR else 0 for l in true_labels],
    )
    report = {
        "experiment": "roi",
        "profile": cfg.profile,
        "noiseless": cfg.noiseless,
        "seed": cfg.seed,
        "classifier": cfg.classifier,
        "scan_points": cfg.scan_points,
        "step_mm": list(pattern.step),
        "classification": cls.as_dict(),
        "regions": {r.kind: r.as_dict() for r in reports},
    }
    artifacts = {
        "report": rio.write_json(out / "roi_report.json", report),
        "tags": rio.write_ply_cloud(
            out / "roi_tags.ply",
            [t.position for t in tags],
            label=[1 if t.label == TUMOR else 0 for t in tags]),
        "boundary": rio.write_json(
            out / "roi_boundary.json",
            {"vertices": boundary.vertices.tolist(), "shrink": boundary.shrink}),
        "plan": rio.write_cut_plan_csv(out / "roi_plan.csv", plan),
        "ledger": rio.append_region_reports_csv(
            out / "region_ledger.csv", f"roi-seed{cfg.seed}", reports),
        "calibration": rio.write_json(
            out / "laser_calibration.json",
            rio.laser_calibration_to_dict(estimated)),
    }
    return TrialResult(artifacts, report, timings)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

E2E_STAGES = ("calibrate", "scan", "classify", "map", "plan", "resect",
              "evaluate")


def _default_cameras():
    common = dict(fx=2000.0, fy=2000.0, cx=640.0, cy=360.0)
    left = PinholeCamera.look_at([-18.0, 6.4, 130.0], [6.3, 6.4, 3.0], **common)
    right = PinholeCamera.look_at([30.6, 6.4, 130.0], [6.3, 6.4, 3.0], **common)
    return left, right


def _camera_fiducials(cfg, scene):
    """Known 3D markers spanning the volume for extrinsic calibration."""
    pts = []
    for x in (1.0, 6.3, 11.6):
        for y in (1.0, 6.4, 11.8):
            pts.append([x, y, float(scene.height(x, y))])
    for k, (x, y) in enumerate(((2.5, 3.0), (10.0, 4.0), (4.0, 10.0))):
        pts.append([x, y, 6.0 + 0.5 * k])
    return np.array(pts)


def _estimate_cameras(cfg, scene):
    rng = _rng(cfg, _SALT_EXTRINSICS)
    sigma = 0.0 if cfg.noiseless else PROFILES[cfg.profile].pixel_sigma
    fiducials = _camera_fiducials(cfg, scene)
    estimated = []
    stats_out = []
    for cam in _default_cameras():
        corr = []
        for w in fiducials:
            uv = project_world_to_image(cam, w)
            if sigma > 0:
                uv = uv + rng.normal(0.0, sigma, 2)
            corr.append(Correspondence2D3D(uv, w))
        est, stats = estimate_camera_extrinsics(cam, corr)
        estimated.append(est)
        stats_out.append(stats)
    return estimated, stats_out


def render_camera_image(scene: ScenePhantom, camera: PinholeCamera,
                        oct_cfg: OctConfig = OctConfig()) -> np.ndarray:
    """Synthetic color view: project a fine surface grid and splat colors."""
    img = np.tile(np.array(IMAGE_BACKGROUND, dtype=np.uint8),
                  (camera.height, camera.width, 1))
    xs = np.arange(oct_cfg.n_lateral) * oct_cfg.pitch_x
    ys = np.arange(oct_cfg.n_bscans * 4) * (oct_cfg.pitch_y / 4.0)
    gx, gy = np.meshgrid(xs, ys)
    gz = scene.height(gx, gy)
    pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    uv, in_front = project_points(camera, pts)
    cols = np.round(uv[:, 0]).astype(np.int64, copy=False)
    rows = np.round(uv[:, 1]).astype(np.int64, copy=False)
    ok = in_front & (cols >= 0) & (cols < camera.width) & \
        (rows >= 0) & (rows < camera.height)
    colors = np.array([
        REGION_COLORS[scene.label_at(p[0], p[1])] for p in pts[ok]
    ], dtype=np.uint8)
    img[rows[ok], cols[ok]] = colors
    return img


def run_end_to_end(cfg: ExperimentConfig, out_dir,
                   through_stage: str = "evaluate") -> TrialResult:
    """Full loop: volume scan, colorize, classify, map, plan, cut, evaluate.

    ``through_stage`` truncates the pipeline after the named stage (used by
    the per-stage command surface); artifacts of every completed stage are
    written either way.
    """
    if through_stage not in E2E_STAGES:
        raise ConfigError(f"unknown stage '{through_stage}'")
    last = E2E_STAGES.index(through_stage)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    artifacts = {}
    report = {"experiment": "e2e", "seed": cfg.seed, "profile": cfg.profile,
              "classifier": cfg.classifier, "noiseless": cfg.noiseless}
    scene = _scene(cfg)

    # --- calibrate ---------------------------------------------------------
    t0 = time.perf_counter()
    truth, estimated, observations = _effective_calibrations(
        cfg, perfect_when_noiseless=True)
    cameras, cam_stats = _estimate_cameras(cfg, scene)
    timings["calibrate"] = time.perf_counter() - t0
    artifacts["laser_calibration"] = rio.write_json(
        out / "laser_calibration.json",
        rio.laser_calibration_to_dict(estimated))
    artifacts["camera_extrinsics"] = rio.write_json(
        out / "camera_extrinsics.json", [
            {"rotation": cam.rotation.tolist(),
             "translation": cam.translation.tolist(),
             "rms_px": st.rms_px, "rms_mm": st.rms_mm}
            for cam, st in zip(cameras, cam_stats)
        ])
    if observations:
        artifacts["observations"] = rio.write_spot_observations_csv(
            out / "calibration_observations.csv", observations)
    report["camera_rms_px"] = [st.rms_px for st in cam_stats]
    report["laser_residual_rms"] = estimated.residual_rms
    if last == 0:
        artifacts["report"] = rio.write_json(out / "e2e_report.json", report)
        return TrialResult(artifacts, report, timings)

    # --- scan: volume, surface, colorize -----------------------------------
    t0 = time.perf_counter()
    oct_cfg = OctConfig(noise_amplitude=cfg.oct_noise)
    volume = render_oct_volume(scene, (0.0, 0.0), oct_cfg,
                               seed=cfg.seed + _SALT_OCT)
    surface = segment_surface(volume)
    image = render_camera_image(scene, cameras[0], oct_cfg)
    colored, in_view = colorize_surface(surface, cameras[0], image)
    timings["scan"] = time.perf_counter() - t0
    artifacts["volume"], artifacts["volume_sidecar"] = rio.write_oct_volume(
        out / "oct_volume", volume)
    artifacts["surface"] = rio.write_surface_ply(out / "surface.ply", colored)
    report["surface_points"] = int(surface.valid_mask().sum())
    if last == 1:
        artifacts["report"] = rio.write_json(out / "e2e_report.json", report)
        return TrialResult(artifacts, report, timings)

    # --- classify: raster scan with spot estimation ------------------------
    t0 = time.perf_counter()
    model = None
    history = None
    if cfg.classifier == "mlp":
        model, history = _train_scan_classifier(cfg)
        artifacts["model"] = rio.write_mlp_json(out / "mlp_model.json", model)
        report["mlp_final_loss"] = history[-1]

    cx, cy = _scan_center(cfg)
    beta_c = solve_ik(estimated, [cx, cy, float(scene.height(cx, cy))]).beta
    pattern = raster_pattern(cfg.scan_extent, points=cfg.scan_points,
                             origin=(beta_c[0] - cfg.scan_extent[0] / 2.0,
                                     beta_c[1] - cfg.scan_extent[1] / 2.0))
    rng_spot = _rng(cfg, _SALT_SPOT)
    rng_px = _rng(cfg, _SALT_PIXELS)
    locator = SpotLocator(surface, cameras[0], cameras[1],
                          mesh=triangulate_grid(surface))
    spots = []
    labels = []
    true_labels = []
    wavelengths = None
    spectra_rows = []
    unmapped = 0  # scan exceeds the imaging field; edge spots have no geometry
    pixel_sigma = 0.0 if cfg.noiseless else PROFILES[cfg.profile].pixel_sigma
    for k, beta in enumerate(pattern.waypoints):
        measured = _execute_spot(cfg, truth, beta, scene, rng_spot)
        hits = []
        for cam in cameras:
            uv = project_world_to_image(cam, measured)
            if pixel_sigma > 0:
                uv = uv + rng_px.normal(0.0, pixel_sigma, 2)
            hits.append(uv)
        ray_est = Ray(
            waypoint_position(estimated.frame, estimated.alpha, beta),
            estimated.v_w)
        try:
            est = locator.locate(hits[0], hits[1], ray_est)
        except NoRayHit:
            unmapped += 1
            continue
        spots.append(est.fused)
        true_label = scene.label_at(measured[0], measured[1])
        true_labels.append(true_label)
        spectrum = synth_spectrum(true_label, seed=cfg.seed * 1_000_000 + k)
        if wavelengths is None:
            wavelengths = spectrum.wavelengths
        spectra_rows.append(spectrum.intensities)
        if cfg.classifier == "perfect":
            labels.append(true_label)
        else:
            labels.append(_classify_spectrum(cfg, spectrum, model))
    timings["classify"] = time.perf_counter() - t0
    report["unmapped_points"] = unmapped
    artifacts["spectra"], artifacts["spectra_sidecar"] = rio.write_spectra_csv(
        out / "scan_spectra", wavelengths, spectra_rows,
        subjects=[f"scan{cfg.seed}"] * len(spectra_rows), labels=labels)
    cls = classification_metrics(
        [1 if l == TUMOR else 0 for l in labels],
        [1 if l == TUMOR else 0 for l in true_labels])
    report["classification"] = cls.as_dict()
    if last == 2:
        artifacts["report"] = rio.write_json(out / "e2e_report.json", report)
        return TrialResult(artifacts, report, timings)

    # --- map: tags, boundary ------------------------------------------------
    t0 = time.perf_counter()
    colors = []
    valid_idx = np.flatnonzero(colored.valid_mask())
    valid_xy = colored.points[valid_idx][:, :2]
    for p in spots:
        idx, _ = nearest_neighbor(p[:2], valid_xy)
        colors.append(tuple(int(c) for c in colored.color[valid_idx[idx]]))
    tags = build_tumor_tags(spots, labels, colors=colors)
    boundary = boundary_from_tags(tags)
    timings["map"] = time.perf_counter() - t0
    artifacts["tumor_map"] = rio.write_ply_cloud(
        out / "tumor_map.ply", [t.position for t in tags],
        color=[t.color for t in tags],
        label=[1 if t.label == TUMOR else 0 for t in tags])
    artifacts["boundary"] = rio.write_json(
        out / "boundary.json",
        {"vertices": boundary.vertices.tolist(), "shrink": boundary.shrink})
    if last == 3:
        artifacts["report"] = rio.write_json(out / "e2e_report.json", report)
        return TrialResult(artifacts, report, timings)

    # --- plan ---------------------------------------------------------------
    t0 = time.perf_counter()
    region = select_cut_targets(tags, boundary)
    plan = plan_trajectory(estimated, region.targets)
    timings["plan"] = time.perf_counter() - t0
    artifacts["cut_plan"] = rio.write_cut_plan_csv(out / "cut_plan.csv", plan)
    report["cut_targets"] = len(plan)
    if last == 4:
        artifacts["report"] = rio.write_json(out / "e2e_report.json", report)
        return TrialResult(artifacts, report, timings)

    # --- resect: execute the plan, mark the footprint -----------------------
    t0 = time.perf_counter()
    actual_spots = np.array([
        _execute_spot(cfg, truth, plan.waypoints[k], scene, rng_spot)
        for k in range(len(plan))
    ])
    radius = cfg.spot_diameter / 2.0
    surf_xy = colored.points[:, :2]
    cut_mask = np.zeros(len(surf_xy), dtype=bool)
    for s in actual_spots:
        cut_mask |= np.sum((surf_xy - s[:2]) ** 2, axis=1) <= radius**2
    post_color = colored.color.copy()
    post_color[cut_mask] = (120, 120, 120)  # coagulation signature
    post = SurfaceCloud(colored.rows, colored.cols, colored.points,
                        color=post_color, valid=colored.valid)
    timings["resect"] = time.perf_counter() - t0
    artifacts["actual_spots"] = rio.write_ply_cloud(
        out / "actual_spots.ply", actual_spots)
    artifacts["post_surface"] = rio.write_surface_ply(
        out / "post_resection_surface.ply", post)
    report["resected_cells"] = int(cut_mask.sum())
    if last == 5:
        artifacts["report"] = rio.write_json(out / "e2e_report.json", report)
        return TrialResult(artifacts, report, timings)

    # --- evaluate ------------------------------------------------------------
    t0 = time.perf_counter()
    true_region = _true_region(scene)
    reports = _region_reports(true_region, boundary.vertices,
                              convex_hull(actual_spots[:, :2]))
    timings["evaluate"] = time.perf_counter() - t0
    report["regions"] = {r.kind: r.as_dict() for r in reports}
    artifacts["ledger"] = rio.append_region_reports_csv(
        out / "region_ledger.csv", f"e2e-seed{cfg.seed}", reports)
    artifacts["report"] = rio.write_json(out / "e2e_report.json", report)
    return TrialResult(artifacts, report, timings)
