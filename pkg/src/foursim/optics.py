"""Scalar pupil, 3D PSF / OTF and axial OTF projections.

All frequencies are in cycles/nm and all lengths in nm. Arrays are kept in
the unshifted FFT layout (DC at index 0) unless a function says otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np
from scipy.ndimage import map_coordinates


@dataclass(frozen=True)
class OpticalConfig:
    na: float = 1.45
    wavelength_em: float = 561.0
    wavelength_ex: float = 561.0
    pixel_size: float = 65.0
    z_step: float = 200.0
    refractive_index: float = 1.518
    grid_xy: int = 512
    grid_z: int = 9

    def __post_init__(self):
        if not 0 < self.na < self.refractive_index:
            raise ValueError(f"need 0 < na < refractive_index, got na={self.na}")
        for name in ("wavelength_em", "wavelength_ex", "pixel_size", "z_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.grid_xy < 8 or self.grid_z < 8:
            raise ValueError("grid sizes must be >= 8")

    @property
    def cutoff(self) -> float:
        """Incoherent lateral detection cutoff 2·NA/λ_em."""
        return 2 * self.na / self.wavelength_em

    @property
    def df(self) -> float:
        """Lateral frequency step of the grid."""
        return 1.0 / (self.grid_xy * self.pixel_size)

    def replace(self, **kw) -> "OpticalConfig":
        d = asdict(self)
        d.update(kw)
        return OpticalConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Otf3D:
    values: np.ndarray  # (ny, nx, nz), unshifted FFT layout
    freq_steps: tuple[float, float]  # (dk_xy, dk_z)


@dataclass
class Effective2DOtf:
    values: np.ndarray
    shift: tuple[float, float]


def freq_grid(n: int, pixel_size: float):
    """Return (fy, fx) frequency coordinate arrays for an n×n grid."""
    f = np.fft.fftfreq(n, d=pixel_size)
    return f[:, None], f[None, :]


def make_pupil(config: OpticalConfig) -> np.ndarray:
    fy, fx = freq_grid(config.grid_xy, config.pixel_size)
    kr = np.hypot(fx, fy)
    return (kr <= config.na / config.wavelength_em).astype(complex)


def _axial_wavenumber(config: OpticalConfig) -> np.ndarray:
    fy, fx = freq_grid(config.grid_xy, config.pixel_size)
    k2 = (config.refractive_index / config.wavelength_em) ** 2 - fx**2 - fy**2
    return np.sqrt(np.maximum(k2, 0.0))


def defocus_psf(config: OpticalConfig, dz: float, pupil=None) -> np.ndarray:
    """Un-normalized 2D PSF at defocus ``dz``, centred at pixel (N//2, N//2)."""
    if pupil is None:
        pupil = make_pupil(config)
    field = np.fft.ifft2(pupil * np.exp(2j * np.pi * dz * _axial_wavenumber(config)))
    return np.fft.fftshift(np.abs(field) ** 2)


def defocus_otf(config: OpticalConfig, dz: float) -> np.ndarray:
    """DC-normalized 2D OTF of the PSF slice at defocus ``dz`` (unshifted layout)."""
    psf = defocus_psf(config, dz)
    otf = np.fft.fft2(np.fft.ifftshift(psf))
    return otf / otf[0, 0].real


def z_positions(config: OpticalConfig) -> np.ndarray:
    return (np.arange(config.grid_z) - config.grid_z // 2) * config.z_step


def psf3d(config: OpticalConfig) -> np.ndarray:
    """Scalar angular-spectrum 3D PSF, shape (ny, nx, nz), total energy 1.

    The focal plane sits at z index ``grid_z // 2`` and the lateral peak at
    ``grid_xy // 2``.
    """
    fwhm = 0.51 * config.wavelength_em / config.na
    if fwhm > config.grid_xy * config.pixel_size / 4:
        raise ValueError("grid too small to contain the PSF main lobe")
    pupil = make_pupil(config)
    stack = np.stack([defocus_psf(config, z, pupil) for z in z_positions(config)], axis=-1)
    return stack / stack.sum()


def otf3d(psf: np.ndarray, config: OpticalConfig) -> Otf3D:
    total = psf.sum()
    if not np.any(psf) or total == 0:
        raise ValueError("psf is all zero")
    values = np.fft.fftn(np.fft.ifftshift(psf))
    values /= values[0, 0, 0].real
    dk_z = 1.0 / (psf.shape[2] * config.z_step)
    return Otf3D(values=values, freq_steps=(config.df, dk_z))


def project_otf(otf: Otf3D, shift=(0.0, 0.0), n: int | None = None,
                pixel_size: float | None = None) -> Effective2DOtf:
    """Axial projection of the 3D OTF taken at a lateral offset.

    ``values(k) = Σ_kz otf(k + shift, kz) · Δk_z``. Output is sampled on an
    ``n × n`` grid of pitch ``pixel_size`` (defaults: the OTF's own grid);
    ``shift`` is ``(fx, fy)``. Off-grid samples use bilinear interpolation and
    anything outside the stored OTF reads as zero.
    """
    dk, dkz = otf.freq_steps
    summed = otf.values.sum(axis=2) * dkz
    return _sample_projection(summed, dk, shift, n, pixel_size)


def _sample_projection(summed: np.ndarray, dk: float, shift, n, pixel_size) -> Effective2DOtf:
    ny, nx = summed.shape
    if n is None:
        n = nx
    if pixel_size is None:
        pixel_size = 1.0 / (nx * dk)
    fy, fx = freq_grid(n, pixel_size)
    sx, sy = float(shift[0]), float(shift[1])
    qx = np.broadcast_to(fx + sx, (n, n))
    qy = np.broadcast_to(fy + sy, (n, n))
    # exact on-grid fast path: same pitch and integer shift
    ix, iy = qx / dk, qy / dk
    if np.allclose(ix, np.round(ix), atol=1e-9) and np.allclose(iy, np.round(iy), atol=1e-9):
        ixr = np.round(ix).astype(int)
        iyr = np.round(iy).astype(int)
        inside = ((ixr >= -(nx // 2)) & (ixr <= (nx - 1) // 2)
                  & (iyr >= -(ny // 2)) & (iyr <= (ny - 1) // 2))
        vals = np.where(inside, summed[iyr % ny, ixr % nx], 0)
        return Effective2DOtf(values=vals.astype(complex), shift=(sx, sy))
    return Effective2DOtf(values=_interp(summed, ix, iy), shift=(sx, sy))


def _interp(summed: np.ndarray, ix, iy) -> np.ndarray:
    """Bilinear lookup at fractional frequency indices; zero outside."""
    ny, nx = summed.shape
    centred = np.fft.fftshift(summed)
    iy, ix = np.broadcast_arrays(np.asarray(iy, dtype=float), np.asarray(ix, dtype=float))
    coords = np.array([iy + ny // 2, ix + nx // 2])
    re = map_coordinates(centred.real, coords, order=1, mode="constant", cval=0.0)
    if np.abs(centred.imag).max() <= 1e-12 * np.abs(centred).max():
        return re.astype(complex)
    im = map_coordinates(centred.imag, coords, order=1, mode="constant", cval=0.0)
    return re + 1j * im


class OtfModel:
    """3D OTF plus its DC-normalized effective 2D projections.

    The axial grid only sets the k_z sampling of the stored OTF; the
    projections do not depend on it.
    """

    def __init__(self, config: OpticalConfig, grid_z: int = 16):
        self.config = config
        cfg = config.replace(grid_z=max(8, grid_z))
        self.otf = otf3d(psf3d(cfg), cfg)
        dk, dkz = self.otf.freq_steps
        self._summed = self.otf.values.sum(axis=2) * dkz
        self.norm = self._summed[0, 0].real

    def effective(self, shift=(0.0, 0.0), n: int | None = None,
                  pixel_size: float | None = None) -> np.ndarray:
        dk = self.otf.freq_steps[0]
        return _sample_projection(self._summed, dk, shift, n, pixel_size).values / self.norm

    def effective_at(self, shift, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
        """Effective OTF for ``shift`` evaluated only at the given frequencies."""
        dk = self.otf.freq_steps[0]
        return _interp(self._summed, (fx + shift[0]) / dk, (fy + shift[1]) / dk) / self.norm

    def widefield(self) -> np.ndarray:
        return self.effective()
