"""Benchmark harness for egocentric navigation under visual and dynamics
corruptions: procedural scenes, a deterministic raycaster, parameterized
corruption operators, PointNav/ObjectNav episode semantics, metrics, and a
wire protocol for external agents."""

__version__ = "0.1.0"

from .world import (  # noqa: F401
    GridMap, ObjectInstance, Pose, SceneParams, CATEGORIES,
    generate_scene, load_scene, save_scene, geodesic_distance, shortest_path,
    UNREACHABLE,
)
from .render import CameraIntrinsics, Frame, visible  # noqa: F401
from .render import render as render_frame  # noqa: F401
from .viscorrupt import (  # noqa: F401
    VisCorruption, CorruptionStack, bind_episode, distortion,
)
from .dynamics import (  # noqa: F401
    ActuationModel, DynCorruption, StepOutcome, bind_episode_dynamics,
    apply_action,
)
from .task import (  # noqa: F401
    EpisodeSpec, Observation, StepResult, EnvConfig, NavEnv,
    generate_suite, save_suite, load_suite, calibration_phase,
)
from .metrics import EpisodeRecord, spl, aggregate, emit_report  # noqa: F401
from .agents import make_agent  # noqa: F401
