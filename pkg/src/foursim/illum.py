"""Four-beam composite illumination, asynchronous phase table and mixing matrix."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

TWO_PI = 2 * np.pi

COMPONENT_ORDER = ("0", "-(u-v)", "+(u-v)", "-(u+v)", "+(u+v)", "-2u", "+2u", "-2v", "+2v")
FIRST_ORDER = (1, 2, 3, 4)
SECOND_ORDER = (5, 6, 7, 8)


@dataclass
class IlluminationParams:
    k_u: tuple[float, float]
    k_v: tuple[float, float]
    m1_u: float = 1.0
    m1_v: float = 1.0
    m2_u: float = 0.5
    m2_v: float = 0.5
    phi1_u: float = 0.0
    phi1_v: float = 0.0
    phi2_u: float = 0.0
    phi2_v: float = 0.0

    def __post_init__(self):
        self.k_u = tuple(float(x) for x in self.k_u)
        self.k_v = tuple(float(x) for x in self.k_v)
        ku, kv = np.asarray(self.k_u), np.asarray(self.k_v)
        if np.linalg.norm(ku) == 0 or np.linalg.norm(kv) == 0:
            raise ValueError("wavevectors must be nonzero")
        for name in ("m1_u", "m1_v", "m2_u", "m2_v"):
            m = getattr(self, name)
            if not 0 < m <= 1.5:
                raise ValueError(f"{name}={m} outside (0, 1.5]")
        for name in ("phi1_u", "phi1_v", "phi2_u", "phi2_v"):
            setattr(self, name, float(np.mod(getattr(self, name), TWO_PI)))
        cosang = ku @ kv / (np.linalg.norm(ku) * np.linalg.norm(kv))
        if abs(np.degrees(np.arcsin(min(1.0, abs(cosang))))) > 2.0:
            warnings.warn("k_u and k_v are more than 2 degrees from orthogonal")

    @classmethod
    def orthogonal(cls, magnitude: float, angle: float = 0.0, **kw) -> "IlluminationParams":
        c, s = np.cos(angle), np.sin(angle)
        return cls(k_u=(magnitude * c, magnitude * s), k_v=(-magnitude * s, magnitude * c), **kw)

    def with_depths(self, m1: float, m2: float) -> "IlluminationParams":
        d = asdict(self)
        d.update(m1_u=m1, m1_v=m1, m2_u=m2, m2_v=m2)
        return IlluminationParams(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k_u"], d["k_v"] = list(self.k_u), list(self.k_v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IlluminationParams":
        return cls(**d)


@dataclass
class PhaseTable:
    entries: np.ndarray  # (9, 2) radians: (phi_u, phi_v)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float).reshape(-1, 2)

    def __len__(self):
        return len(self.entries)

    def to_list(self) -> list:
        return self.entries.tolist()


@dataclass
class MixingMatrix:
    values: np.ndarray
    component_order: tuple = field(default=COMPONENT_ORDER)


def default_phase_table() -> PhaseTable:
    n = np.arange(9)
    return PhaseTable(np.stack([TWO_PI * (n // 3) / 3, TWO_PI * (n % 3) / 3], axis=1))


def _terms(params: IlluminationParams, phi_u: float, phi_v: float):
    """(depth, frequency vector, phase) of the four cosine terms."""
    ku, kv = np.asarray(params.k_u), np.asarray(params.k_v)
    return [
        (params.m1_u, ku - kv, phi_u - phi_v + params.phi1_u),
        (params.m1_v, ku + kv, phi_u + phi_v - np.pi + params.phi1_v),
        (params.m2_u, 2 * ku, 2 * phi_u - np.pi + params.phi2_u),
        (params.m2_v, 2 * kv, 2 * phi_v - np.pi + params.phi2_v),
    ]


def check_aliasing(params: IlluminationParams, pixel_size: float) -> None:
    nyq = 0.5 / pixel_size
    ku, kv = np.asarray(params.k_u), np.asarray(params.k_v)
    for q in (2 * ku, 2 * kv, ku + kv, ku - kv):
        if np.max(np.abs(q)) >= nyq:
            raise ValueError("pattern aliased")


def pattern(params: IlluminationParams, phase_entry, grid: int, pixel_size: float,
            depths_zero: bool = False) -> np.ndarray:
    """Composite four-beam intensity on a ``grid × grid`` lattice (origin at pixel 0)."""
    check_aliasing(params, pixel_size)
    y, x = np.mgrid[0:grid, 0:grid] * pixel_size
    out = np.ones((grid, grid))
    if depths_zero:
        return out
    for m, q, ph in _terms(params, *phase_entry):
        out += m * np.cos(TWO_PI * (q[0] * x + q[1] * y) + ph)
    return out


def mixing_matrix(params: IlluminationParams, table: PhaseTable) -> MixingMatrix:
    rows = []
    for phi_u, phi_v in table.entries:
        row = [1.0 + 0j]
        for m, _, ph in _terms(params, phi_u, phi_v):
            row += [m / 2 * np.exp(-1j * ph), m / 2 * np.exp(1j * ph)]
        rows.append(row)
    values = np.array(rows)
    if np.linalg.cond(values) > 1e6:
        raise np.linalg.LinAlgError("phase table degenerate")
    return MixingMatrix(values)


def character_matrix(table: PhaseTable) -> np.ndarray:
    """Mixing matrix with every column scaled to unit modulus (phase encoding only)."""
    ones = IlluminationParams(k_u=(1.0, 0.0), k_v=(0.0, 1.0), m1_u=1, m1_v=1, m2_u=1, m2_v=1)
    values = mixing_matrix(ones, table).values.copy()
    values[:, 1:] *= 2
    return values


def component_shifts(params: IlluminationParams) -> np.ndarray:
    """(9, 2) array of lateral shifts (fx, fy) in component order."""
    ku, kv = np.asarray(params.k_u), np.asarray(params.k_v)
    out = [np.zeros(2)]
    for q in (ku - kv, ku + kv, 2 * ku, 2 * kv):
        out += [-q, q]
    return np.array(out)


# conventional two-beam SIM: 3 orientations × 3 phases


@dataclass
class TwoBeamParams:
    magnitude: float
    angles: tuple = (0.0, np.pi / 3, 2 * np.pi / 3)
    depths: tuple = (1.0, 1.0, 1.0)
    phases: tuple = (0.0, 0.0, 0.0)  # initial phase per orientation
    steps: tuple = (0.0, TWO_PI / 3, 2 * TWO_PI / 3)

    def wavevectors(self) -> np.ndarray:
        a = np.asarray(self.angles)
        return self.magnitude * np.stack([np.cos(a), np.sin(a)], axis=1)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def two_beam_pattern(params: TwoBeamParams, orientation: int, step: int, grid: int,
                     pixel_size: float) -> np.ndarray:
    k = params.wavevectors()[orientation]
    if np.max(np.abs(k)) >= 0.5 / pixel_size:
        raise ValueError("pattern aliased")
    y, x = np.mgrid[0:grid, 0:grid] * pixel_size
    ph = params.steps[step] + params.phases[orientation]
    return 1 + params.depths[orientation] * np.cos(TWO_PI * (k[0] * x + k[1] * y) + ph)


def two_beam_matrix(depth: float, phase: float, steps=(0.0, TWO_PI / 3, 2 * TWO_PI / 3)) -> np.ndarray:
    """3×3 matrix for orders (0, -1, +1) of one orientation."""
    return np.array([[1, depth / 2 * np.exp(-1j * (s + phase)), depth / 2 * np.exp(1j * (s + phase))]
                     for s in steps])
