"""Run configuration: JSON document, schema-validated, merged over defaults."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .forward import NoiseSpec, PhantomSpec
from .illum import IlluminationParams, PhaseTable, TwoBeamParams, default_phase_table
from .optics import OpticalConfig
from .recon import ReconConfig

DEFAULTS: dict = {
    "optical": OpticalConfig().to_dict(),
    "illumination": "estimate",
    "simulation": {
        # |k_u| as a fraction of the detection cutoff; 0.45 puts |2k_u| at 0.9·cutoff
        "k_fraction": 0.45,
        "angle": 0.0,
        "m1": 1.0,
        "m2": 0.5,
        "conventional": True,
        "noise": None,
    },
    "phantom": {"layers": [[0, "chart", 0.0], [8, "chart", float(np.pi / 2)]], "focal_index": 0},
    "pretreat": {"taper_width": 16, "rl_iterations": 5},
    "recon": ReconConfig().to_dict(),
    "metrics": {
        "rfrc": True,
        "rfrc_window": 128,
        "rfrc_stride": 64,
        "foreground_fraction": 0.05,
        "frc_smoothing": 3,
        "rsm": True,
        "contrast": True,
        "contrast_window": 64,
        "pair": "decimated",
    },
    "phase_table": None,
    "seed": 0,
    "io": {"out": None, "frames": None, "params": None, "reference": None, "partner": None},
}


class ConfigError(ValueError):
    pass


def schema() -> dict:
    text = resources.files("foursim").joinpath("schemas/run_config.schema.json").read_text()
    return json.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class RunConfig:
    optical: OpticalConfig
    illumination: IlluminationParams | str
    phantom: PhantomSpec
    recon: ReconConfig
    simulation: dict
    pretreat: dict
    metrics: dict
    seed: int = 0
    io: dict = field(default_factory=dict)
    focal_index: int = 0
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, user: dict | None = None) -> "RunConfig":
        user = user or {}
        try:
            jsonschema.validate(user, schema())
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"invalid config: {exc.message}") from None
        d = _merge(DEFAULTS, user)
        if isinstance(user.get("illumination"), dict):
            d["illumination"] = copy.deepcopy(user["illumination"])  # no merge with "estimate"
        try:
            optical = OpticalConfig(**d["optical"])
            illum = d["illumination"]
            if isinstance(illum, dict):
                illum = IlluminationParams.from_dict(illum)
            layers = [(int(z), src, float(rot)) for z, src, rot in d["phantom"]["layers"]]
            phantom = PhantomSpec(grid_xy=optical.grid_xy, grid_z=optical.grid_z,
                                  pixel_size=optical.pixel_size, z_step=optical.z_step, layers=layers)
            recon = ReconConfig(**d["recon"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        focal = d["phantom"]["focal_index"]
        if focal >= optical.grid_z:
            raise ConfigError("invalid config: focal_index outside the z grid")
        return cls(optical, illum, phantom, recon, d["simulation"], d["pretreat"], d["metrics"],
                   int(d["seed"]), d["io"], int(focal), d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def resolved(self) -> dict:
        """Fully expanded document; feeding it back reproduces this config."""
        d = copy.deepcopy(self.raw)
        d["seed"] = self.seed
        d["recon"] = self.recon.to_dict()
        if isinstance(self.illumination, IlluminationParams):
            d["illumination"] = self.illumination.to_dict()
        return d

    def table(self) -> PhaseTable:
        t = self.raw.get("phase_table")
        return default_phase_table() if t is None else PhaseTable(t)

    # simulation helpers

    def sim_params(self) -> IlluminationParams:
        s = self.simulation
        mag = s["k_fraction"] * self.optical.cutoff
        return IlluminationParams.orthogonal(mag, s["angle"], m1_u=s["m1"], m1_v=s["m1"],
                                             m2_u=s["m2"], m2_v=s["m2"])

    def sim_two_beam(self) -> TwoBeamParams:
        # same extended support as the four-beam second orders, full depth
        return TwoBeamParams(magnitude=2 * self.simulation["k_fraction"] * self.optical.cutoff)

    def noise(self, offset: int = 0) -> NoiseSpec | None:
        n = self.simulation.get("noise")
        if not n:
            return None
        return NoiseSpec(n["photon_budget"], n.get("read_noise_sd", 0.0), self.seed + offset)
