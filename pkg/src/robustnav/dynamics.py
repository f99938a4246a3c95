"""Transition model: nominal kinematics, Gaussian actuation noise, the four
dynamics corruptions, and swept-disc collision resolution."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .world import Pose

MOVE_AHEAD = "move_ahead"
ROTATE_LEFT = "rotate_left"
ROTATE_RIGHT = "rotate_right"
LOOK_UP = "look_up"
LOOK_DOWN = "look_down"
END = "end"

MOTION_ACTIONS = (MOVE_AHEAD, ROTATE_LEFT, ROTATE_RIGHT, LOOK_UP, LOOK_DOWN)

DYN_NONE = "none"
MOTION_BIAS_C = "motion_bias_c"
MOTION_BIAS_S = "motion_bias_s"
MOTION_DRIFT = "motion_drift"
MOTOR_FAILURE = "motor_failure"
CUSTOM = "custom"

BIAS_D_SET = (-0.15, -0.10, -0.05, 0.05, 0.10, 0.15)
BIAS_TH_SET = (-15.0, -10.0, -5.0, 5.0, 10.0, 15.0)

# stochastic Motion Bias replaces the standard actuation noise entirely
BIAS_S_TRANS = (0.25, 0.10)
BIAS_S_ROT = (30.0, 10.0)

DRIFT_ALPHA = 10.0

_SALT_DYN = 0xD1CE


class DynamicsError(Exception):
    pass


@dataclass(frozen=True)
class ActuationModel:
    trans_mean: float = 0.25
    trans_std: float = 0.005
    rot_mean: float = 30.0
    rot_std: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        if self.trans_std < 0 or self.rot_std < 0:
            raise DynamicsError("actuation noise stds must be >= 0")


@dataclass(frozen=True)
class DynCorruption:
    kind: str = DYN_NONE
    side: str | None = None  # motion_drift; sampled per episode when None
    alpha: float = DRIFT_ALPHA  # motion_drift
    which: str = ROTATE_LEFT  # motor_failure
    trans_mean: float = 0.25  # custom
    trans_std: float = 0.02
    rot_mean: float = 30.0
    rot_std: float = 1.5
    lateral_std: float = 0.01

    def __post_init__(self):
        if self.kind not in (DYN_NONE, MOTION_BIAS_C, MOTION_BIAS_S,
                             MOTION_DRIFT, MOTOR_FAILURE, CUSTOM):
            raise DynamicsError(f"unknown dynamics corruption {self.kind!r}")
        if self.kind == MOTION_DRIFT and self.side not in (None, "left", "right"):
            raise DynamicsError(f"bad drift side {self.side!r}")
        if self.kind == MOTOR_FAILURE and self.which not in (ROTATE_LEFT, ROTATE_RIGHT):
            raise DynamicsError(f"motor_failure target must be a rotation, got {self.which!r}")

    def label(self):
        return {
            DYN_NONE: "",
            MOTION_BIAS_C: "Motion Bias (C)",
            MOTION_BIAS_S: "Motion Bias (S)",
            MOTION_DRIFT: "Motion Drift",
            MOTOR_FAILURE: "Motor Failure",
            CUSTOM: "Custom Actuation",
        }[self.kind]


@dataclass(frozen=True)
class EpisodeDynamics:
    """Per-episode constants fixed at bind time."""
    corruption: DynCorruption
    bias_d: float = 0.0
    bias_th: float = 0.0
    drift_side: str = "left"
    failed_motor: str | None = None


@dataclass(frozen=True)
class StepOutcome:
    new_pose: Pose
    failed: bool
    applied_translation: float
    applied_rotation: float


def bind_episode_dynamics(corruption, episode_seed):
    """Fix the per-episode constants: constant-bias magnitudes are uniform over
    their six-element sets, the drift side is uniform over left/right unless
    pinned in the corruption spec, and the failed motor comes from the spec."""
    rng = np.random.default_rng(
        np.random.SeedSequence([int(episode_seed), _SALT_DYN]))
    if corruption.kind == MOTION_BIAS_C:
        return EpisodeDynamics(
            corruption=corruption,
            bias_d=float(rng.choice(BIAS_D_SET)),
            bias_th=float(rng.choice(BIAS_TH_SET)))
    if corruption.kind == MOTION_DRIFT:
        side = corruption.side or ("left" if rng.integers(2) == 0 else "right")
        return EpisodeDynamics(corruption=corruption, drift_side=side)
    if corruption.kind == MOTOR_FAILURE:
        return EpisodeDynamics(corruption=corruption, failed_motor=corruption.which)
    return EpisodeDynamics(corruption=corruption)


def sample_magnitudes(action, actuation, episode_dyn, rng):
    """Draw the translation or rotation magnitude for one action, applying the
    sampling-level corruption semantics (stochastic bias replaces actuation
    noise; constant bias shifts the magnitude)."""
    kind = episode_dyn.corruption.kind
    if action == MOVE_AHEAD:
        if kind == MOTION_BIAS_S:
            d = rng.normal(*BIAS_S_TRANS)
        elif kind == CUSTOM:
            c = episode_dyn.corruption
            d = rng.normal(c.trans_mean, c.trans_std)
        elif actuation.enabled:
            d = rng.normal(actuation.trans_mean, actuation.trans_std)
        else:
            d = actuation.trans_mean
        if kind == MOTION_BIAS_C:
            d += episode_dyn.bias_d
        return float(d)
    if action in (ROTATE_LEFT, ROTATE_RIGHT):
        if kind == MOTION_BIAS_S:
            th = rng.normal(*BIAS_S_ROT)
        elif kind == CUSTOM:
            c = episode_dyn.corruption
            th = rng.normal(c.rot_mean, c.rot_std)
        elif actuation.enabled:
            th = rng.normal(actuation.rot_mean, actuation.rot_std)
        else:
            th = actuation.rot_mean
        if kind == MOTION_BIAS_C:
            th += episode_dyn.bias_th
        return float(th)
    return 0.0


def sweep_collides(grid, x0, y0, x1, y1, radius):
    """Swept-disc collision test along a segment, sampled at quarter-cell
    resolution (endpoints included)."""
    length = math.hypot(x1 - x0, y1 - y0)
    n = max(int(math.ceil(length / (grid.cell_size / 4.0))), 1)
    for i in range(1, n + 1):
        f = i / n
        if grid.disc_collides(x0 + f * (x1 - x0), y0 + f * (y1 - y0), radius):
            return True
    return False


def apply_action(grid, pose, action, actuation, episode_dyn, rng):
    """Execute one motion action.  Collisions fail the action and leave the
    pose bit-identical; a failed motor turns its rotation into a strict no-op."""
    if action not in MOTION_ACTIONS:
        raise DynamicsError(f"unknown motion action {action!r}")

    if episode_dyn.failed_motor is not None and action == episode_dyn.failed_motor:
        return StepOutcome(pose, False, 0.0, 0.0)

    if action in (LOOK_UP, LOOK_DOWN):
        pitch = pose.pitch + (30.0 if action == LOOK_UP else -30.0)
        pitch = min(max(pitch, -30.0), 30.0)
        return StepOutcome(replace(pose, pitch=pitch), False, 0.0, 0.0)

    if action in (ROTATE_LEFT, ROTATE_RIGHT):
        th = sample_magnitudes(action, actuation, episode_dyn, rng)
        signed = th if action == ROTATE_LEFT else -th
        return StepOutcome(replace(pose, heading=(pose.heading + signed) % 360.0),
                           False, 0.0, float(signed))

    # move_ahead
    d = sample_magnitudes(action, actuation, episode_dyn, rng)
    direction = pose.heading
    if episode_dyn.corruption.kind == MOTION_DRIFT:
        alpha = episode_dyn.corruption.alpha
        direction = direction + (alpha if episode_dyn.drift_side == "left" else -alpha)
    rad = math.radians(direction)
    nx = pose.x + d * math.cos(rad)
    ny = pose.y + d * math.sin(rad)

    lateral = 0.0
    if episode_dyn.corruption.kind == CUSTOM:
        lateral = rng.normal(0.0, episode_dyn.corruption.lateral_std)
        lrad = math.radians(direction + 90.0)
        nx += lateral * math.cos(lrad)
        ny += lateral * math.sin(lrad)

    ex, ey = grid.extent
    if not (0.0 <= nx < ex and 0.0 <= ny < ey):
        return StepOutcome(pose, True, 0.0, 0.0)
    if sweep_collides(grid, pose.x, pose.y, nx, ny, grid.agent_radius):
        return StepOutcome(pose, True, 0.0, 0.0)
    return StepOutcome(replace(pose, x=nx, y=ny), False, float(d), 0.0)
