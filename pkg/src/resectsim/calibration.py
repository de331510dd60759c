"""Camera extrinsic estimation and laser rig calibration.

Two estimators live here. The first recovers a camera pose from 2D-3D
correspondences: a direct linear estimate on normalized image coordinates
seeds a damped Gauss-Newton refinement of the pixel reprojection error. The
second recovers the laser rig parameters (frame offsets alpha and the beam
incidence direction) from commanded waypoints and the measured spot centers
they produced on boards at several heights.

The beam direction is parameterized by two tilt angles applied to the
canonical down vector (0, 0, -1); a roll angle would be unobservable for a
rotationally symmetric beam, so it is excluded by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateAxis,
    DegenerateConfiguration,
    EmptyObservations,
    IllConditioned,
    NonConvergence,
)
from .geometry import PlaneFrame, ReferenceFrame, as_vec3, normalize
from .optimize import levenberg_marquardt
from .sensors import PinholeCamera

CONDITION_LIMIT = 1e12
MIN_AXIS_LENGTH = 0.5  # mm
DEFAULT_WORKING_DISTANCE = 56.3  # mm, optics standoff along the beam


@dataclass(frozen=True)
class Correspondence2D3D:
    """One observed fiducial: pixel location and its world position."""

    image_point: np.ndarray
    world_point: np.ndarray

    def __post_init__(self):
        ip = np.asarray(self.image_point, dtype=float).reshape(2)
        wp = as_vec3(self.world_point)
        if not np.all(np.isfinite(ip)):
            raise ValueError("image point must be finite")
        object.__setattr__(self, "image_point", ip)
        object.__setattr__(self, "world_point", wp)


@dataclass(frozen=True)
class AxisObservation:
    """Fiducial pair delimiting one commanded axis of the motion frame."""

    axis: str  # "x" | "y"
    start_point: np.ndarray
    end_point: np.ndarray

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValueError("axis must be 'x' or 'y'")
        object.__setattr__(self, "start_point", as_vec3(self.start_point))
        object.__setattr__(self, "end_point", as_vec3(self.end_point))


@dataclass(frozen=True)
class LaserSpotObservation:
    """One calibration shot: commanded beta, board plane, measured spot center."""

    beta: np.ndarray
    plane: PlaneFrame
    spot_center: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float).reshape(2)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "spot_center", as_vec3(self.spot_center))


@dataclass(frozen=True)
class LaserCalibration:
    """Calibrated rig: motion frame, fixed offsets, and beam direction."""

    frame: ReferenceFrame
    alpha: np.ndarray
    v_w: np.ndarray
    residual_rms: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha",
                           np.asarray(self.alpha, dtype=float).reshape(2))
        v = as_vec3(self.v_w)
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            v = normalize(v)
        if v[2] >= 0:
            raise ValueError("beam direction must point downward (v_z < 0)")
        object.__setattr__(self, "v_w", v)


def waypoint_position(frame: ReferenceFrame, alpha, beta) -> np.ndarray:
    """Waypoint p = origin + (alpha_x + beta_x) v_x + (alpha_y + beta_y) v_y."""
    alpha = np.asarray(alpha, dtype=float).reshape(2)
    beta = np.asarray(beta, dtype=float).reshape(2)
    return (frame.origin
            + (alpha[0] + beta[0]) * frame.v_x
            + (alpha[1] + beta[1]) * frame.v_y)


def beam_from_angles(theta: float, phi: float) -> np.ndarray:
    """Tilted down vector: rotate (0,0,-1) by theta about x, then phi about y."""
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    return np.array([-sp * ct, st, -cp * ct])


def beam_angle_jacobian(theta: float, phi: float) -> np.ndarray:
    """(3, 2) derivative of beam_from_angles wrt (theta, phi)."""
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    return np.array([
        [sp * st, -cp * ct],
        [ct, 0.0],
        [cp * st, sp * ct],
    ])


def angles_from_beam(v_w) -> tuple[float, float]:
    """Inverse of beam_from_angles for downward unit vectors."""
    v = normalize(v_w)
    theta = float(np.arcsin(np.clip(v[1], -1.0, 1.0)))
    phi = float(np.arctan2(-v[0], -v[2]))
    return theta, phi


def _spot_prediction(frame, alpha, beta, theta, phi, plane):
    v = beam_from_angles(theta, phi)
    p_w = waypoint_position(frame, alpha, beta)
    d = float(np.dot(plane.normal, v))
    s = float(np.dot(plane.normal, p_w - plane.center))
    return p_w - (s / d) * v, v, d, s, p_w


def calibrate_laser_axes(origin, obs_x: AxisObservation,
                         obs_y: AxisObservation) -> ReferenceFrame:
    """Build the motion frame from one fiducial pair per axis.

    Axes are stored exactly as measured; orthogonality is not enforced.
    """
    axes = {}
    for obs in (obs_x, obs_y):
        delta = obs.end_point - obs.start_point
        length = float(np.linalg.norm(delta))
        if length <= MIN_AXIS_LENGTH:
            raise DegenerateAxis(
                f"axis '{obs.axis}' fiducials only {length:.3f} mm apart"
            )
        axes[obs.axis] = delta / length
    if "x" not in axes or "y" not in axes:
        raise ValueError("need one observation per axis")
    return ReferenceFrame(as_vec3(origin), axes["x"], axes["y"])


def calibrate_laser_orientation(frame: ReferenceFrame,
                                observations,
                                initial_v_w=None,
                                initial_alpha=(0.0, 0.0),
                                max_iter: int = 200) -> LaserCalibration:
    """Estimate (v_w, alpha) from measured spot centers.

    Solves min over (theta, phi, alpha) of the summed squared distances
    between predicted and measured spot centers, by damped Gauss-Newton
    with the analytic Jacobian. Boards must span at least two distinct
    heights; a single plane leaves the frame offsets and the beam tilt
    coupled along a one-parameter family.
    """
    obs = list(observations)
    if len(obs) < 3:
        raise ValueError("need at least 3 spot observations")
    heights = sorted(float(np.dot(o.plane.normal, o.plane.center)) for o in obs)
    distinct = 1 + sum(1 for a, b in zip(heights, heights[1:]) if b - a > 1e-9)
    if distinct < 2:
        raise IllConditioned(
            "all boards at one height: offsets and beam tilt are coupled"
        )

    if initial_v_w is None:
        theta0, phi0 = 0.0, 0.0
    else:
        theta0, phi0 = angles_from_beam(initial_v_w)
    x0 = np.array([theta0, phi0, initial_alpha[0], initial_alpha[1]])

    def residual(x):
        theta, phi, ax, ay = x
        out = np.empty(3 * len(obs))
        for k, o in enumerate(obs):
            pred, _, _, _, _ = _spot_prediction(
                frame, (ax, ay), o.beta, theta, phi, o.plane)
            out[3 * k:3 * k + 3] = pred - o.spot_center
        return out

    def jacobian(x):
        theta, phi, ax, ay = x
        jac = np.empty((3 * len(obs), 4))
        dv = beam_angle_jacobian(theta, phi)
        for k, o in enumerate(obs):
            _, v, d, s, _ = _spot_prediction(
                frame, (ax, ay), o.beta, theta, phi, o.plane)
            n = o.plane.normal
            t = s / d
            for col in range(2):  # theta, phi
                dvc = dv[:, col]
                dd = float(n @ dvc)
                jac[3 * k:3 * k + 3, col] = (s * dd / d**2) * v - t * dvc
            for col, axis in ((2, frame.v_x), (3, frame.v_y)):
                jac[3 * k:3 * k + 3, col] = axis - (float(n @ axis) / d) * v
        return jac

    result = levenberg_marquardt(residual, jacobian, x0, max_iter=max_iter)
    if not result.converged:
        raise NonConvergence(
            f"laser calibration did not converge in {max_iter} iterations"
        )
    cond = float(np.linalg.cond(result.jacobian))
    if cond > CONDITION_LIMIT:
        raise IllConditioned(f"Jacobian condition {cond:.2e} at solution")

    theta, phi, ax, ay = result.x
    r = residual(result.x).reshape(-1, 3)
    rms = float(np.sqrt(np.mean(np.sum(r * r, axis=1))))
    return LaserCalibration(frame, (ax, ay), beam_from_angles(theta, phi),
                            residual_rms=rms, iterations=result.iterations)


def reprojection_error(calibration: LaserCalibration, observations):
    """Per-observation distances between predicted and measured spots, plus RMS."""
    obs = list(observations)
    if not obs:
        raise EmptyObservations("no observations to evaluate")
    theta, phi = angles_from_beam(calibration.v_w)
    res = []
    for o in obs:
        pred, _, _, _, _ = _spot_prediction(
            calibration.frame, calibration.alpha, o.beta, theta, phi, o.plane)
        res.append(float(np.linalg.norm(pred - o.spot_center)))
    res = np.array(res)
    return res, float(np.sqrt(np.mean(res**2)))


def synthesize_spot_observations(calibration: LaserCalibration, betas,
                                 plane_heights, noise_sigma: float = 0.0,
                                 rng=None):
    """Forward-generate board observations from a known calibration.

    One observation per (height, beta) pair on horizontal boards; optional
    isotropic Gaussian noise on the measured spot centers.
    """
    theta, phi = angles_from_beam(calibration.v_w)
    if rng is None:
        rng = np.random.default_rng(0)
    out = []
    for h in plane_heights:
        plane = PlaneFrame([0.0, 0.0, float(h)], [0.0, 0.0, 1.0])
        for beta in betas:
            spot, _, _, _, _ = _spot_prediction(
                calibration.frame, calibration.alpha, beta, theta, phi, plane)
            if noise_sigma > 0:
                spot = spot + rng.normal(0.0, noise_sigma, 3)
            out.append(LaserSpotObservation(beta, plane, spot))
    return out


# ---------------------------------------------------------------------------
# Camera extrinsics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtrinsicStats:
    """Reprojection quality. Millimeter equivalents convert each pixel
    residual at that point's camera depth (err_px * Z / focal)."""

    pixel_residuals: np.ndarray
    rms_px: float
    mm_equivalents: np.ndarray
    rms_mm: float
    iterations: int
    cost_history: tuple


def _skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _rodrigues(w):
    angle = np.linalg.norm(w)
    if angle < 1e-16:
        return np.eye(3) + _skew(w)
    k = w / angle
    kx = _skew(k)
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


def _linear_pose_estimate(xn, world):
    """DLT for the normalized projection matrix; returns (R, t) candidates."""
    n = len(world)
    a = np.zeros((2 * n, 12))
    wh = np.column_stack([world, np.ones(n)])
    a[0::2, 0:4] = wh
    a[0::2, 8:12] = -xn[:, 0:1] * wh
    a[1::2, 4:8] = wh
    a[1::2, 8:12] = -xn[:, 1:2] * wh
    _, s, vt = np.linalg.svd(a)
    if s[-2] < 1e-10 * s[0]:
        raise DegenerateConfiguration(
            "correspondences do not determine a unique pose (rank-deficient)"
        )
    p = vt[-1].reshape(3, 4)

    candidates = []
    for sign in (1.0, -1.0):
        pm = sign * p
        u, sv, vt3 = np.linalg.svd(pm[:, :3])
        d = np.linalg.det(u @ vt3)
        r = u @ np.diag([1.0, 1.0, d]) @ vt3
        scale = sv.mean()
        t = pm[:, 3] / scale
        depth = world @ r[2] + t[2]
        candidates.append(((depth > 0).sum(), r, t))
    candidates.sort(key=lambda c: -c[0])
    _, r, t = candidates[0]
    return r, t


def estimate_camera_extrinsics(camera: PinholeCamera, correspondences,
                               max_iter: int = 200
                               ) -> tuple[PinholeCamera, ExtrinsicStats]:
    """Estimate the world-to-camera pose from pixel/world fiducial pairs.

    ``camera`` supplies the intrinsics (its pose fields are ignored).
    Returns a camera with the estimated pose plus reprojection statistics.
    """
    corr = list(correspondences)
    if len(corr) < 6:
        raise ValueError("need at least 6 correspondences")
    uv = np.array([c.image_point for c in corr])
    world = np.array([c.world_point for c in corr])

    xn = np.column_stack([
        (uv[:, 0] - camera.cx) / camera.fx,
        (uv[:, 1] - camera.cy) / camera.fy,
    ])
    r, t = _linear_pose_estimate(xn, world)

    focal = np.array([camera.fx, camera.fy])
    center = np.array([camera.cx, camera.cy])

    def residual(r, t):
        pc = world @ r.T + t
        z = pc[:, 2]
        proj = pc[:, :2] / z[:, None] * focal + center
        return (proj - uv).ravel(), pc

    def jacobian(pc):
        n = len(pc)
        jac = np.zeros((2 * n, 6))
        for i, p in enumerate(pc):
            x, y, z = p
            du = np.array([camera.fx / z, 0.0, -camera.fx * x / z**2])
            dv = np.array([0.0, camera.fy / z, -camera.fy * y / z**2])
            dp_dw = -_skew(p - t)
            jac[2 * i, 0:3] = du @ dp_dw
            jac[2 * i, 3:6] = du
            jac[2 * i + 1, 0:3] = dv @ dp_dw
            jac[2 * i + 1, 3:6] = dv
        return jac

    f, pc = residual(r, t)
    cost = float(f @ f)
    history = [cost]
    lam = 1e-6
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        jac = jacobian(pc)
        g = 2.0 * jac.T @ f
        if np.max(np.abs(g)) <= 1e-12:
            converged = True
            break
        jtj = jac.T @ jac
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + lam * np.eye(6), -(jac.T @ f))
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_trial = _rodrigues(step[0:3]) @ r
            t_trial = t + step[3:6]
            f_trial, pc_trial = residual(r_trial, t_trial)
            cost_trial = float(f_trial @ f_trial)
            if cost_trial < cost:
                r, t, f, pc, cost = r_trial, t_trial, f_trial, pc_trial, cost_trial
                lam = max(lam / 10.0, 1e-15)
                history.append(cost)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True
            break
        if np.linalg.norm(step) <= 1e-12 * (1.0 + np.linalg.norm(t)):
            converged = True
            break
    if not converged:
        raise NonConvergence(
            f"extrinsic refinement did not converge in {max_iter} iterations"
        )

    # re-orthonormalize after repeated composition
    u, _, vt3 = np.linalg.svd(r)
    r = u @ np.diag([1.0, 1.0, np.linalg.det(u @ vt3)]) @ vt3

    f, pc = residual(r, t)
    px = np.linalg.norm(f.reshape(-1, 2), axis=1)
    mm = px * pc[:, 2] / float(focal.mean())
    stats = ExtrinsicStats(
        pixel_residuals=px,
        rms_px=float(np.sqrt(np.mean(px**2))),
        mm_equivalents=mm,
        rms_mm=float(np.sqrt(np.mean(mm**2))),
        iterations=iterations,
        cost_history=tuple(history),
    )
    posed = PinholeCamera(camera.fx, camera.fy, camera.cx, camera.cy,
                          r, t, camera.width, camera.height)
    return posed, stats
