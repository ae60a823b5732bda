"""Phantom comparison of the reconstruction modes, in memory.

Simulates four-beam, two-beam and widefield data from one phantom,
reconstructs every mode and scores each result. Two noise realizations
(seeds ``seed`` and ``seed + 1``) are drawn so that rFRC can use
independent pairs; the first realization is the one whose images are
returned and scored for contrast and leakage.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .demod import estimate_from_raw, pretreat, separate_components
from .forward import (NoiseSpec, PhantomSpec, phantom_two_layer, simulate_conventional_frames,
                      simulate_frames)
from .illum import IlluminationParams, TwoBeamParams, default_phase_table, mixing_matrix
from .metrics import band_limit, leakage, local_contrast, rfrc_map
from .optics import OpticalConfig, OtfModel
from .recon import MODES, ReconConfig, embed, reconstruct, reconstruct_conventional, separate_two_beam


@dataclass
class Comparison:
    grid: int = 512
    layers: list = field(default_factory=lambda: [(0, "chart", 0.0), (8, "chart", np.pi / 2)])
    focal_index: int = 0
    k_fraction: float = 0.45
    angle: float = 0.0
    m1: float = 1.0
    m2: float = 0.5
    photon_budget: float | None = 1e5
    seed: int = 0
    independent_pairs: bool = True  # second noise realization for paired rFRC
    estimate: bool = True
    taper_width: int = 16
    rl_iterations: int = 5
    modes: tuple = MODES
    recon: ReconConfig = field(default_factory=ReconConfig)
    rfrc_window: int = 128
    rfrc_stride: int = 64
    foreground_fraction: float = 0.05
    contrast_window: int = 64

    def optical(self) -> OpticalConfig:
        return OpticalConfig(grid_xy=self.grid)

    def four_beam(self, cfg: OpticalConfig) -> IlluminationParams:
        return IlluminationParams.orthogonal(self.k_fraction * cfg.cutoff, self.angle,
                                             m1_u=self.m1, m1_v=self.m1, m2_u=self.m2, m2_v=self.m2)

    def two_beam(self, cfg: OpticalConfig) -> TwoBeamParams:
        return TwoBeamParams(magnitude=2 * self.k_fraction * cfg.cutoff)


@dataclass
class ModeResult:
    image: np.ndarray
    partner: np.ndarray | None
    pixel_size: float
    params: object = None


def _noise(c: Comparison, offset: int):
    return None if c.photon_budget is None else NoiseSpec(c.photon_budget, 0.0, c.seed + offset)


def _upsample(image: np.ndarray, u: int) -> np.ndarray:
    return np.fft.ifft2(embed(np.fft.fft2(image), u)).real * u * u


def run(c: Comparison, otfs: OtfModel | None = None) -> dict[str, ModeResult]:
    """Reconstruct every requested mode plus the upsampled widefield."""
    cfg = c.optical()
    otfs = otfs or OtfModel(cfg)
    phantom = phantom_two_layer(PhantomSpec(grid_xy=c.grid, layers=list(c.layers)))
    table = default_phase_table()
    truth4, truth2 = c.four_beam(cfg), c.two_beam(cfg)
    u = c.recon.upsample
    realizations = (0, 1) if c.photon_budget is not None and c.independent_pairs else (0,)
    images: dict[str, list] = {}
    params: dict[str, object] = {}

    four = [m for m in c.modes if m != "conventional"]
    for r in realizations:
        frames = simulate_frames(phantom, truth4, table, cfg, _noise(c, r), c.focal_index)
        images.setdefault("widefield", []).append(_upsample(frames.widefield, u))
        if four:
            if c.estimate:
                p, linear = estimate_from_raw(frames, cfg, otfs, c.taper_width, c.rl_iterations)
            else:
                p, linear = truth4, pretreat(frames, c.taper_width, 0)
            comps = separate_components(linear, mixing_matrix(p, table), p)
            for mode in four:
                cfg_m = ReconConfig(**{**c.recon.to_dict(), "mode": mode})
                images.setdefault(mode, []).append(reconstruct(comps, otfs, cfg_m).pixels)
                params.setdefault(mode, p)
        if "conventional" in c.modes:
            frames2 = simulate_conventional_frames(phantom, truth2, cfg, _noise(c, 500 + r), c.focal_index)
            if c.estimate:
                p2, linear2 = estimate_from_raw(frames2, cfg, otfs, c.taper_width, c.rl_iterations)
            else:
                p2, linear2 = truth2, pretreat(frames2, c.taper_width, 0)
            comps2 = separate_two_beam(linear2.frames, p2)
            cfg_c = ReconConfig(**{**c.recon.to_dict(), "mode": "conventional"})
            images.setdefault("conventional", []).append(
                reconstruct_conventional(comps2, otfs, cfg_c).pixels)
            params.setdefault("conventional", p2)

    sr_px = cfg.pixel_size / u
    out = {}
    for name, imgs in images.items():
        if imgs[0].shape[0] != c.grid * u:
            raise ValueError(f"{name} reconstruction was auto-upsampled; set recon.upsample higher")
        out[name] = ModeResult(imgs[0], imgs[1] if len(imgs) > 1 else None, sr_px, params.get(name))
    out["_phantom"] = phantom
    return out


def score(c: Comparison, results: dict, rfrc: bool = True) -> dict[str, dict]:
    """rFRC (decimated and, with noise, independent), contrast and leakage per method."""
    phantom = results["_phantom"]
    cfg = c.optical()
    others = [z for z in range(phantom.shape[2]) if z != c.focal_index and phantom[:, :, z].any()]
    truth = None
    if others:
        far = max(others, key=lambda z: abs(z - c.focal_index))
        truth = band_limit(phantom[:, :, far], cfg.pixel_size, cfg.cutoff, c.recon.upsample)
    table = {}
    for name, res in results.items():
        if name.startswith("_"):
            continue
        row = {}
        if rfrc:
            kw = dict(pixel_size=res.pixel_size, window=c.rfrc_window, stride=c.rfrc_stride,
                      foreground_fraction=c.foreground_fraction)
            row["rfrc_decimated"] = rfrc_map(res.image, **kw).mean_resolution
            if res.partner is not None:
                row["rfrc_independent"] = rfrc_map(res.image, partner=res.partner, **kw).mean_resolution
        con = local_contrast(res.image, c.contrast_window, c.foreground_fraction)
        row["contrast_mean"] = float(con.mean())
        row["contrast_median"] = float(np.median(con))
        row["leakage"] = leakage(res.image, truth) if truth is not None else None
        table[name] = row
    return table
