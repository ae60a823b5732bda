"""Phantoms and raw-frame simulation for four-beam and two-beam SIM."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .illum import (IlluminationParams, PhaseTable, TwoBeamParams, pattern,
                    two_beam_pattern, check_aliasing)
from .optics import OpticalConfig, defocus_otf


def resolution_chart(n: int) -> np.ndarray:
    """Procedural resolution target: an off-centre Siemens star plus bar groups.

    The star's line pitch shrinks toward its centre; the bar groups to its
    right step down in period. The layout is deliberately not invariant
    under a quarter turn so a rotated copy is distinguishable.
    """
    y, x = np.mgrid[0:n, 0:n].astype(float)
    chart = np.zeros((n, n))

    cy, cx, radius = 0.5 * n, 0.3 * n, 0.22 * n
    r = np.hypot(y - cy, x - cx)
    theta = np.arctan2(y - cy, x - cx)
    spokes = 36
    star = (np.cos(spokes * theta) > 0) & (r < radius) & (r > 0.02 * n)
    chart[star] = 1.0

    # bar groups, each a square patch with vertical or horizontal lines
    x0, x1 = int(0.62 * n), int(0.94 * n)
    periods = [10, 8, 6, 5, 4, 3]
    patch_h = max(4, int(0.11 * n))
    gap = max(1, int(0.025 * n))
    top = int(0.12 * n)
    for i, period in enumerate(periods):
        y0 = top + i * (patch_h + gap)
        if y0 + patch_h > n:
            break
        ys, xs = np.mgrid[y0:y0 + patch_h, x0:x1]
        coord = xs if i % 2 == 0 else ys
        chart[y0:y0 + patch_h, x0:x1] = ((coord // (period / 2)) % 2 == 0).astype(float)
    return chart


def filaments(n: int, count: int = 40, seed: int = 0, width: float = 0.7) -> np.ndarray:
    """Random smooth curvilinear filaments, microtubule-like.

    Each filament is a persistent random walk with unit step; points are
    splatted with a Gaussian of ``width`` pixels so the lines are thin but
    not aliased.
    """
    rng = np.random.default_rng(seed)
    img = np.zeros((n, n))
    for _ in range(count):
        pos = rng.uniform(0.1 * n, 0.9 * n, size=2)
        ang = rng.uniform(0, 2 * np.pi)
        steps = int(rng.uniform(0.3, 0.8) * n)
        pts = np.empty((steps, 2))
        for s in range(steps):
            ang += rng.normal(0, 0.04)
            pos = pos + 0.5 * np.array([np.cos(ang), np.sin(ang)])
            pts[s] = pos
        pts = pts[(pts >= 0).all(1) & (pts < n - 1).all(1)]
        iy, ix = np.floor(pts).astype(int).T
        fy, fx = (pts - np.floor(pts)).T
        # bilinear deposit, then blur once at the end
        np.add.at(img, (iy, ix), (1 - fy) * (1 - fx))
        np.add.at(img, (iy + 1, ix), fy * (1 - fx))
        np.add.at(img, (iy, ix + 1), (1 - fy) * fx)
        np.add.at(img, (iy + 1, ix + 1), fy * fx)
    f = np.fft.fftfreq(n)
    g = np.exp(-2 * np.pi**2 * width**2 * (f[:, None] ** 2 + f[None, :] ** 2))
    img = np.clip(np.fft.ifft2(np.fft.fft2(img) * g).real, 0, None)
    return img / img.max()


_BUILTIN = {"chart": resolution_chart, "filaments": filaments}


@dataclass
class PhantomSpec:
    grid_xy: int = 512
    grid_z: int = 9
    pixel_size: float = 65.0
    z_step: float = 200.0
    # (z_index, source name or 2D array, rotation in radians)
    layers: list = field(default_factory=lambda: [(0, "chart", 0.0), (8, "chart", np.pi / 2)])
    base_pattern: str = "chart"

    def __post_init__(self):
        for z, _, _ in self.layers:
            if not 0 <= z < self.grid_z:
                raise ValueError(f"layer index {z} outside grid_z={self.grid_z}")

    def to_dict(self) -> dict:
        return {
            "grid_xy": self.grid_xy, "grid_z": self.grid_z, "pixel_size": self.pixel_size,
            "z_step": self.z_step, "base_pattern": self.base_pattern,
            "layers": [[int(z), src if isinstance(src, str) else "array", float(rot)]
                       for z, src, rot in self.layers],
        }


def phantom_two_layer(spec: PhantomSpec) -> np.ndarray:
    """Density stack of shape (grid_xy, grid_xy, grid_z)."""
    n = spec.grid_xy
    stack = np.zeros((n, n, spec.grid_z))
    for z, src, rot in spec.layers:
        img = _BUILTIN[src](n) if isinstance(src, str) else np.asarray(src, dtype=float)
        if img.shape[0] != img.shape[1]:
            raise ValueError("rotation requires a square layer")
        if img.shape != (n, n):
            raise ValueError(f"layer shape {img.shape} does not match grid {n}")
        if np.any(img < 0):
            raise ValueError("densities must be nonnegative")
        quarter = rot / (np.pi / 2)
        if not np.isclose(quarter, round(quarter)):
            raise ValueError("only multiples of pi/2 rotations are supported")
        stack[:, :, z] += np.rot90(img, k=int(round(quarter)))
    return stack


@dataclass
class NoiseSpec:
    photon_budget: float
    read_noise_sd: float = 0.0
    seed: int = 0


@dataclass
class RawFrameSet:
    frames: np.ndarray  # (9, ny, nx)
    table: PhaseTable | None
    mode: str = "fourbeam"
    noise_meta: dict | None = None
    pixel_size: float = 65.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.shape[0] != 9:
            raise ValueError(f"expected 9 frames, got {self.frames.shape[0]}")

    @property
    def widefield(self) -> np.ndarray:
        return self.frames.mean(axis=0)


def _layer_otfs(phantom: np.ndarray, config: OpticalConfig, focal_index: int):
    out = []
    for z in range(phantom.shape[2]):
        if np.any(phantom[:, :, z]):
            out.append((phantom[:, :, z], defocus_otf(config, (z - focal_index) * config.z_step)))
    return out


def _image(layers, illum: np.ndarray) -> np.ndarray:
    acc = np.zeros(illum.shape, dtype=complex)
    for rho, otf in layers:
        acc += np.fft.fft2(rho * illum) * otf
    return np.fft.ifft2(acc).real


def _check_grid(phantom, config):
    if phantom.shape[0] != config.grid_xy or phantom.shape[1] != config.grid_xy:
        raise ValueError("phantom grid does not match OpticalConfig.grid_xy")


def simulate_frames(phantom: np.ndarray, params: IlluminationParams, table: PhaseTable,
                    config: OpticalConfig, noise: NoiseSpec | None = None,
                    focal_index: int = 0) -> RawFrameSet:
    _check_grid(phantom, config)
    check_aliasing(params, config.pixel_size)
    layers = _layer_otfs(phantom, config, focal_index)
    n = config.grid_xy
    frames = np.stack([_image(layers, pattern(params, entry, n, config.pixel_size))
                       for entry in table.entries])
    meta = None
    if noise is not None:
        frames = add_noise(frames, noise.photon_budget, noise.read_noise_sd, noise.seed)
        meta = vars(noise).copy()
    return RawFrameSet(frames, table, "fourbeam", meta, config.pixel_size)


def simulate_widefield(phantom: np.ndarray, config: OpticalConfig, focal_index: int = 0) -> np.ndarray:
    _check_grid(phantom, config)
    layers = _layer_otfs(phantom, config, focal_index)
    return _image(layers, np.ones((config.grid_xy, config.grid_xy)))


def simulate_conventional_frames(phantom: np.ndarray, params: TwoBeamParams,
                                 config: OpticalConfig, noise: NoiseSpec | None = None,
                                 focal_index: int = 0) -> RawFrameSet:
    """Nine frames ordered orientation-major: frame 3·o + s."""
    _check_grid(phantom, config)
    layers = _layer_otfs(phantom, config, focal_index)
    n = config.grid_xy
    frames = np.stack([_image(layers, two_beam_pattern(params, o, s, n, config.pixel_size))
                       for o in range(3) for s in range(3)])
    meta = None
    if noise is not None:
        frames = add_noise(frames, noise.photon_budget, noise.read_noise_sd, noise.seed)
        meta = vars(noise).copy()
    return RawFrameSet(frames, None, "conventional", meta, config.pixel_size)


def add_noise(frames: np.ndarray, photon_budget: float, read_noise_sd: float = 0.0,
              seed: int = 0) -> np.ndarray:
    """Poisson shot noise scaled so the brightest pixel expects ``photon_budget``
    photons, plus Gaussian read noise. The scale is shared across the stack."""
    if photon_budget <= 0:
        raise ValueError("photon budget must be positive")
    frames = np.asarray(frames, dtype=float)
    rng = np.random.default_rng(seed)
    peak = frames.max()
    scale = photon_budget / peak if peak > 0 else 0.0
    out = rng.poisson(np.clip(frames * scale, 0, None)).astype(float)
    if read_noise_sd > 0:
        out += rng.normal(0.0, read_noise_sd, size=out.shape)
    return out
