"""Synthetic camera, scene and environment trajectories.

The camera model is deliberately simple: brightness is linear in
lux * exposure * gain, motion blur is a horizontal box filter whose length
grows with motion and exposure, and read noise is Gaussian with a standard
deviation proportional to sqrt(ISO / 100).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter, uniform_filter1d

from ._validation import check_finite_nonneg, check_positive, check_unit_interval
from .envelope import LightSample, MotionSample, SensorSetting, SettingGrids

LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)
SCENARIOS = ("constant", "lap_track", "alternating_light")


@dataclass(frozen=True)
class ScenePattern:
    pixels: np.ndarray
    object_id: str = "object"
    difficulty: float = 0.0
    # (row0, row1, col0, col1) of the object; None means the whole frame
    roi: Optional[tuple] = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or min(px.shape) < 16:
            raise ValueError(f"scene must be a 2-D image of at least 16x16, got {px.shape}")
        if px.min() < 0 or px.max() > 1:
            raise ValueError("scene pixels must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        check_unit_interval(self.difficulty, "difficulty")
        if self.roi is not None:
            r0, r1, c0, c1 = (int(v) for v in self.roi)
            if not (0 <= r0 < r1 <= px.shape[0] and 0 <= c0 < c1 <= px.shape[1]):
                raise ValueError(f"roi {self.roi} outside a {px.shape} scene")
            object.__setattr__(self, "roi", (r0, r1, c0, c1))

    def roi_slices(self) -> tuple:
        if self.roi is None:
            return slice(None), slice(None)
        r0, r1, c0, c1 = self.roi
        return slice(r0, r1), slice(c0, c1)


@dataclass(frozen=True)
class CameraModelParams:
    k_cam: float = 0.4
    c_blur: float = 120.0
    sigma0: float = 0.002
    sat_level: float = 0.98
    # scene reflectance the exposure calibration assumes (gray world)
    ref_reflectance: float = 0.5

    def __post_init__(self):
        check_positive(self.k_cam, "k_cam")
        check_positive(self.c_blur, "c_blur")
        check_finite_nonneg(self.sigma0, "sigma0")
        check_unit_interval(self.sat_level, "sat_level")
        if self.sat_level <= 0:
            raise ValueError("sat_level must be in (0, 1]")
        check_positive(self.ref_reflectance, "ref_reflectance")


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray
    timestamp: float
    setting: SensorSetting
    exposure_s: float
    iso: float
    object_id: str
    visible: bool
    difficulty: float = 0.0
    roi: Optional[tuple] = None
    lux: float = float("nan")
    blur_px: int = 0

    def roi_pixels(self) -> np.ndarray:
        if self.roi is None:
            return self.pixels
        r0, r1, c0, c1 = self.roi
        return self.pixels[r0:r1, c0:c1]


@dataclass(frozen=True)
class QualityVector:
    blur_score: float
    saturation_ratio: float
    est_lux: float

    def __post_init__(self):
        check_finite_nonneg(self.blur_score, "blur_score")
        check_unit_interval(self.saturation_ratio, "saturation_ratio")
        check_finite_nonneg(self.est_lux, "est_lux")


@dataclass(frozen=True)
class EnvTrajectory:
    scenario: str = "lap_track"
    lap_ms: float = 3000.0
    frame_period_ms: float = 100.0
    lux: float = 10.0
    dark_lux: float = 10.0
    bright_lux: float = 200.0
    acc_mean: float = 1.4
    acc_amp: float = 0.1
    gyro_mean: float = 0.5
    gyro_amp: float = 0.2
    visible_start: float = 0.3
    visible_end: float = 0.6

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        check_positive(self.frame_period_ms, "frame_period_ms")
        check_positive(self.lap_ms, "lap_ms")
        n = self.lap_ms / self.frame_period_ms
        if abs(n - round(n)) > 1e-9:
            raise ValueError("lap_ms must be a multiple of frame_period_ms")
        for name in ("lux", "dark_lux", "bright_lux", "acc_mean", "gyro_mean"):
            check_finite_nonneg(getattr(self, name), name)
        for name in ("acc_amp", "gyro_amp"):
            check_unit_interval(getattr(self, name), name)
        if not 0.0 <= self.visible_start < self.visible_end <= 1.0:
            raise ValueError("visibility window must satisfy 0 <= start < end <= 1")

    @property
    def frames_per_lap(self) -> int:
        return int(round(self.lap_ms / self.frame_period_ms))


def next_env(traj: EnvTrajectory, t: float) -> tuple[LightSample, MotionSample, bool]:
    """Ambient light, motion and object visibility at simulation time ``t`` (ms)."""
    if t < 0:
        raise ValueError("simulation time must be >= 0")
    if traj.scenario == "constant":
        return LightSample(traj.lux), MotionSample(traj.acc_mean, traj.gyro_mean), True

    lap, offset = divmod(t, traj.lap_ms)
    phase = offset / traj.lap_ms
    acc = traj.acc_mean * (1.0 + traj.acc_amp * math.sin(2 * math.pi * phase))
    gyro = traj.gyro_mean * (1.0 + traj.gyro_amp * math.cos(2 * math.pi * phase))
    visible = traj.visible_start <= phase < traj.visible_end
    if traj.scenario == "alternating_light":
        lux = traj.dark_lux if int(lap) % 2 == 0 else traj.bright_lux
    else:
        lux = traj.lux
    return LightSample(lux), MotionSample(acc, gyro), visible


def make_scene(object_id: str = "object", difficulty: float = 0.0, seed: int = 7,
               size: int = 64, object_mean: float = 0.25, texture_sd: float = 0.1,
               background: float = 0.8, object_cols: int = 36) -> ScenePattern:
    """A textured object band on a flat background.

    The object texture varies mostly along x (vertical structure), so
    horizontal motion blur removes most of its detail.
    """
    rng = np.random.default_rng(seed)
    field_ = gaussian_filter(rng.normal(size=(size, size)), (8.0, 1.5), mode="wrap")
    field_ = (field_ - field_.mean()) / field_.std()
    px = np.full((size, size), background, dtype=np.float64)
    c0 = (size - object_cols) // 2
    roi = (0, size, c0, c0 + object_cols)
    px[:, c0:c0 + object_cols] = np.clip(object_mean + texture_sd * field_[:, c0:c0 + object_cols], 0, 1)
    return ScenePattern(px, object_id=object_id, difficulty=difficulty, roi=roi)


@lru_cache(maxsize=1)
def _default_scene() -> ScenePattern:
    return make_scene()


def default_pattern() -> ScenePattern:
    return _default_scene()


def blur_length(m: MotionSample, exposure_s: float, p: CameraModelParams) -> int:
    return int(round(p.c_blur * max(m.acc_mag, m.gyro_mag) * exposure_s))


def box_blur(pixels: np.ndarray, k: int) -> np.ndarray:
    if k <= 1:
        return pixels
    return uniform_filter1d(pixels, size=k, axis=1, mode="reflect")


def capture_frame(scene: ScenePattern, setting: SensorSetting, m: MotionSample,
                  l: LightSample, p: CameraModelParams, g: SettingGrids,
                  rng: np.random.Generator, *, timestamp: float = 0.0,
                  visible: bool = True) -> Frame:
    exposure = g.exposure(setting.exp_idx)
    iso = g.iso(setting.iso_idx)
    brightness = l.lux * exposure * (iso / 100.0) * p.k_cam
    k = blur_length(m, exposure, p)
    blurred = box_blur(scene.pixels, k)
    # always draw so the noise stream does not depend on the setting
    noise = rng.standard_normal(scene.pixels.shape) * (p.sigma0 * math.sqrt(iso / 100.0))
    pixels = np.clip(brightness * blurred + noise, 0.0, 1.0)
    return Frame(pixels=pixels, timestamp=float(timestamp), setting=setting, exposure_s=exposure,
                 iso=iso, object_id=scene.object_id, visible=bool(visible),
                 difficulty=scene.difficulty, roi=scene.roi, lux=l.lux, blur_px=k)


def _area_matrix(src: int, dst: int) -> np.ndarray:
    """Row-stochastic matrix averaging ``src`` samples into ``dst`` equal-width bins."""
    edges = np.linspace(0.0, src, dst + 1)
    A = np.zeros((dst, src))
    for i in range(dst):
        lo, hi = edges[i], edges[i + 1]
        for j in range(int(math.floor(lo)), min(int(math.ceil(hi)), src)):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                A[i, j] = overlap
        A[i] /= hi - lo
    return A


@lru_cache(maxsize=16)
def _area_pair(shape: tuple, size: int) -> tuple:
    return _area_matrix(shape[0], size), _area_matrix(shape[1], size)


def downsample(pixels: np.ndarray, size: int = 32) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float64)
    if min(pixels.shape) < size:
        raise ValueError(f"image {pixels.shape} smaller than downsample target {size}")
    if pixels.shape == (size, size):
        return pixels
    Ar, Ac = _area_pair(pixels.shape, size)
    return Ar @ pixels @ Ac.T


def laplacian_variance(f, downsample_to: int = 32) -> float:
    """Variance of the 4-neighbour Laplacian on the area-downsampled image (0-255 scale)."""
    pixels = f.pixels if isinstance(f, Frame) else np.asarray(f, dtype=np.float64)
    d = downsample(pixels, downsample_to) * 255.0
    response = (d[:-2, 1:-1] + d[2:, 1:-1] + d[1:-1, :-2] + d[1:-1, 2:]) - 4.0 * d[1:-1, 1:-1]
    return float(response.var())


def estimate_lux(mean_pixel: float, exposure_s: float, iso: float, p: CameraModelParams) -> float:
    return mean_pixel / (exposure_s * (iso / 100.0) * p.k_cam * p.ref_reflectance)


def quality_vector(f: Frame, p: CameraModelParams, downsample_to: int = 32) -> QualityVector:
    return QualityVector(
        blur_score=laplacian_variance(f, downsample_to),
        saturation_ratio=float(np.mean(f.pixels >= p.sat_level)),
        est_lux=estimate_lux(float(f.pixels.mean()), f.exposure_s, f.iso, p),
    )


def write_pgm(path, frame) -> Path:
    """Dump a frame (or raw [0, 1] array) as a binary 8-bit portable graymap."""
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame)
    data = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
    return path
