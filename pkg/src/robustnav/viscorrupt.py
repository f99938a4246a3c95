"""Seeded visual corruption operators on RGB frames.

Five of the seven corruptions carry severity levels 1..5; lower-FOV is an
intrinsics change realized in the renderer, and camera-crack is a fixed
per-episode lens artifact.  Lens-attached state (spatter blobs, crack
polylines, motion-blur angle) is sampled once per episode at bind time and
stays fixed in image space; speckle noise is i.i.d. per frame.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

SPATTER = "spatter"
MOTION_BLUR = "motion_blur"
DEFOCUS_BLUR = "defocus_blur"
SPECKLE_NOISE = "speckle_noise"
LOW_LIGHTING = "low_lighting"
LOWER_FOV = "lower_fov"
CAMERA_CRACK = "camera_crack"

SEVERITY_KINDS = (SPATTER, MOTION_BLUR, DEFOCUS_BLUR, SPECKLE_NOISE, LOW_LIGHTING)
ALL_KINDS = SEVERITY_KINDS + (LOWER_FOV, CAMERA_CRACK)

SPECKLE_SIGMA = (0.10, 0.18, 0.26, 0.34, 0.45)
DEFOCUS_RADIUS = (2, 3, 5, 7, 9)
MOTION_LENGTH = (5, 9, 13, 17, 21)
LOWLIGHT_GAMMA_GAIN = ((1.1, 0.60), (1.2, 0.45), (1.3, 0.33), (1.4, 0.24), (1.5, 0.18))
SPATTER_FRACTION = (0.05, 0.10, 0.18, 0.28, 0.40)

MUD_COLOR = np.array([64, 48, 34], dtype=np.float64)
MUD_TINT = np.array([96, 74, 52], dtype=np.float64)

_SALT_SPATTER = 0x5A77E6
_SALT_CRACK = 0xC6ACC
_SALT_BLUR = 0xB10612
_SALT_SPECKLE = 0x57EC4E


class CorruptionError(Exception):
    pass


@dataclass(frozen=True)
class VisCorruption:
    kind: str
    severity: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise CorruptionError(f"unknown visual corruption {self.kind!r}")
        if self.kind in SEVERITY_KINDS:
            if self.severity is None or not 1 <= self.severity <= 5:
                raise CorruptionError(
                    f"{self.kind} requires severity in 1..5, got {self.severity}")
        elif self.severity is not None:
            raise CorruptionError(f"{self.kind} does not take a severity")

    def label(self):
        name = self.kind.replace("_", " ").title()
        if self.severity is not None:
            return f"{name} (S{self.severity})"
        return name


@dataclass(frozen=True)
class CorruptionStack:
    ops: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))

    @property
    def has_lower_fov(self):
        return any(op.kind == LOWER_FOV for op in self.ops)

    def label(self):
        labels = [op.label() for op in self.ops]
        return " + ".join(labels) if labels else "Clean"


def _disk_kernel(radius):
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    k = (yy * yy + xx * xx <= radius * radius).astype(np.float64)
    return k / k.sum()


def _line_kernel(length, angle_rad):
    k = np.zeros((length, length), dtype=np.float64)
    c = (length - 1) / 2.0
    for i in range(length):
        d = i - c
        px = int(round(c + d * math.cos(angle_rad)))
        py = int(round(c + d * math.sin(angle_rad)))
        k[py, px] += 1.0
    return k / k.sum()


def _random_walk_mask(rng, h, w, fraction):
    """Blob mask covering round(fraction*h*w) pixels: seeded random walks
    dilated to blobs, then trimmed back to the exact target count."""
    n = h * w
    target = max(int(round(fraction * n)), 1)
    mask = np.zeros((h, w), dtype=bool)
    walks = max(3, int(round(12 * fraction)))
    steps = max(12, target // (walks * 4))
    moves = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)])
    for _ in range(walks):
        r = int(rng.integers(h))
        c = int(rng.integers(w))
        for _ in range(steps):
            mask[r, c] = True
            dr, dc = moves[int(rng.integers(4))]
            r = min(max(r + dr, 0), h - 1)
            c = min(max(c + dc, 0), w - 1)
    while mask.sum() < target:
        grown = ndimage.binary_dilation(mask, structure=np.ones((3, 3)))
        ring = grown & ~mask
        need = target - int(mask.sum())
        ring_idx = np.nonzero(ring.ravel())[0]
        if ring_idx.size == 0:
            break
        if ring_idx.size > need:
            keep = rng.choice(ring_idx, size=need, replace=False)
            ring = np.zeros(n, dtype=bool)
            ring[keep] = True
            ring = ring.reshape(h, w)
        mask |= ring
    return mask


def _crack_masks(rng, h, w):
    """Polyline crack core + halo masks radiating from a random impact point."""
    core = np.zeros((h, w), dtype=bool)
    cy = int(rng.integers(int(0.2 * h), int(0.8 * h)))
    cx = int(rng.integers(int(0.2 * w), int(0.8 * w)))
    n_lines = int(rng.integers(3, 8))
    for _ in range(n_lines):
        ang = rng.uniform(0.0, 2 * math.pi)
        width_px = int(rng.integers(1, 4))
        r, c = float(cy), float(cx)
        segments = int(rng.integers(3, 7))
        for _ in range(segments):
            seg_len = rng.uniform(h / 10.0, h / 4.0)
            nr = r + seg_len * math.sin(ang)
            nc = c + seg_len * math.cos(ang)
            samples = max(int(seg_len * 2), 2)
            rr = np.clip(np.rint(np.linspace(r, nr, samples)).astype(int), 0, h - 1)
            cc = np.clip(np.rint(np.linspace(c, nc, samples)).astype(int), 0, w - 1)
            core[rr, cc] = True
            if width_px > 1:
                rad = width_px // 2
                for dr in range(-rad, rad + 1):
                    for dc in range(-rad, rad + 1):
                        core[np.clip(rr + dr, 0, h - 1), np.clip(cc + dc, 0, w - 1)] = True
            r, c = nr, nc
            ang += rng.uniform(-0.5, 0.5)
    halo = ndimage.binary_dilation(core, structure=np.ones((3, 3))) & ~core
    return core, halo


@dataclass
class _BoundOp:
    op: VisCorruption
    kernel: np.ndarray | None = None
    lut: np.ndarray | None = None
    core: np.ndarray | None = None
    halo: np.ndarray | None = None
    sigma: float = 0.0
    noise_seed: int = 0


@dataclass
class BoundStack:
    """Per-episode realization of a corruption stack; immutable after bind and
    pure on apply (speckle draws are keyed by episode seed + frame content)."""
    stack: CorruptionStack
    episode_seed: int
    height: int
    width: int
    bound: list = field(default_factory=list)

    def apply(self, rgb):
        if rgb.shape[:2] != (self.height, self.width):
            raise CorruptionError(
                f"frame dims {rgb.shape[:2]} do not match bind-time dims "
                f"({self.height}, {self.width})")
        if not self.bound:
            return rgb.copy()
        out = rgb
        for b in self.bound:
            out = _apply_one(b, out)
        return out


def _apply_one(b, rgb):
    kind = b.op.kind
    if kind == LOWER_FOV:
        return rgb
    if kind == LOW_LIGHTING:
        return b.lut[rgb]
    if kind == SPECKLE_NOISE:
        content = zlib.crc32(rgb.tobytes())
        rng = np.random.default_rng(
            np.random.SeedSequence([b.noise_seed, content]))
        noise = rng.normal(0.0, b.sigma, size=rgb.shape)
        out = rgb.astype(np.float64) * (1.0 + noise)
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    if kind in (DEFOCUS_BLUR, MOTION_BLUR):
        out = np.empty_like(rgb, dtype=np.float64)
        src = rgb.astype(np.float64)
        for ch in range(3):
            out[:, :, ch] = ndimage.convolve(src[:, :, ch], b.kernel, mode="nearest")
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    if kind == SPATTER:
        out = rgb.astype(np.float64)
        out[b.core] = MUD_COLOR
        out[b.halo] = 0.6 * out[b.halo] + 0.4 * MUD_TINT
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    if kind == CAMERA_CRACK:
        out = rgb.astype(np.float64)
        out[b.core] = out[b.core] * 0.15
        out[b.halo] = out[b.halo] * 1.15
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    raise CorruptionError(f"unhandled corruption kind {kind!r}")


def bind_episode(stack, episode_seed, height=224, width=224):
    """Sample the per-episode state (masks, blur angle) once from the episode
    seed; the result is held fixed for every frame of the episode."""
    episode_seed = int(episode_seed)
    bound = []
    for op in stack.ops:
        b = _BoundOp(op=op)
        if op.kind == DEFOCUS_BLUR:
            b.kernel = _disk_kernel(DEFOCUS_RADIUS[op.severity - 1])
        elif op.kind == MOTION_BLUR:
            rng = np.random.default_rng(
                np.random.SeedSequence([episode_seed, op.seed, _SALT_BLUR]))
            angle = rng.uniform(0.0, math.pi)
            b.kernel = _line_kernel(MOTION_LENGTH[op.severity - 1], angle)
        elif op.kind == LOW_LIGHTING:
            gamma, gain = LOWLIGHT_GAMMA_GAIN[op.severity - 1]
            v = np.arange(256) / 255.0
            b.lut = np.clip(np.rint(255.0 * np.power(v, gamma) * gain),
                            0, 255).astype(np.uint8)
        elif op.kind == SPECKLE_NOISE:
            b.sigma = SPECKLE_SIGMA[op.severity - 1]
            b.noise_seed = (episode_seed ^ _SALT_SPECKLE) + op.seed
        elif op.kind == SPATTER:
            rng = np.random.default_rng(
                np.random.SeedSequence([episode_seed, op.seed, _SALT_SPATTER]))
            core = _random_walk_mask(rng, height, width,
                                     SPATTER_FRACTION[op.severity - 1])
            b.core = core
            b.halo = ndimage.binary_dilation(core, np.ones((3, 3))) & ~core
        elif op.kind == CAMERA_CRACK:
            rng = np.random.default_rng(
                np.random.SeedSequence([episode_seed, op.seed, _SALT_CRACK]))
            b.core, b.halo = _crack_masks(rng, height, width)
        bound.append(b)
    return BoundStack(stack=stack, episode_seed=episode_seed,
                      height=height, width=width, bound=bound)


def distortion(a, b):
    """Mean absolute per-channel difference between two RGB images."""
    if a.shape != b.shape:
        raise CorruptionError(f"dimension mismatch {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a.astype(np.int16) - b.astype(np.int16))))
