"""Super-resolved reconstruction: two-group OTF-weighted Wiener combination,
partial (first/second-order) reconstructions and the two-beam baseline."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .demod import ComponentSet, separate_components
from .illum import FIRST_ORDER, SECOND_ORDER, TwoBeamParams, two_beam_matrix
from .optics import OtfModel, freq_grid

MODES = ("full_4i", "first_only", "second_only", "conventional")
MISSING_CONE_GROUP = (0,) + SECOND_ORDER
COMPENSATING_GROUP = FIRST_ORDER


@dataclass
class ReconConfig:
    w_mis: float = 0.05
    w_com: float = 0.05
    upsample: int = 2
    apodization: str = "triangle"
    apod_cutoff: float | None = None  # cycles/nm; None = extended support edge
    mode: str = "full_4i"

    def __post_init__(self):
        if self.w_mis <= 0 or self.w_com <= 0:
            raise ValueError("Wiener constants must be positive")
        if self.upsample < 2:
            raise ValueError("upsample must be >= 2")
        if self.apodization not in ("triangle", "raised-cosine", "none"):
            raise ValueError(f"unknown apodization {self.apodization!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SrImage:
    pixels: np.ndarray
    pixel_size: float
    provenance: dict = field(default_factory=dict)


def embed(spectrum: np.ndarray, upsample: int) -> np.ndarray:
    """Zero-pad an unshifted spectrum onto an ``upsample``-times larger grid."""
    n = spectrum.shape[-1]
    m = n * upsample
    block = np.fft.fftshift(spectrum)
    if n % 2 == 0:
        # split the Nyquist row/column between ±n/2 so real inputs stay real
        block = np.pad(block, ((0, 1), (0, 1)))
        block[0] *= 0.5
        block[-1] = block[0]
        block[:, 0] *= 0.5
        block[:, -1] = block[:, 0]
    out = np.zeros((m, m), dtype=complex)
    lo = m // 2 - n // 2
    out[lo:lo + block.shape[0], lo:lo + block.shape[1]] = block
    return np.fft.ifftshift(out)


def shift_spectrum(spectrum: np.ndarray, shift, pixel_size: float) -> np.ndarray:
    """Translate a spectrum so the output at ``k`` is the input at ``k + shift``.

    Works for off-grid shifts: the spectrum is multiplied by a complex ramp in
    the spatial domain.
    """
    shift = np.asarray(shift, dtype=float)
    if not np.any(shift):
        return spectrum.copy()
    m = spectrum.shape[-1]
    y, x = np.mgrid[0:m, 0:m] * pixel_size
    ramp = np.exp(-2j * np.pi * (shift[0] * x + shift[1] * y))
    return np.fft.fft2(np.fft.ifft2(spectrum) * ramp)


def place_component(spectrum: np.ndarray, shift, upsample: int, pixel_size: float) -> np.ndarray:
    """Embed a component on the SR grid and move it back by its (sub-pixel) shift."""
    sr_px = pixel_size / upsample
    if np.max(np.abs(shift)) >= 0.5 / sr_px:
        raise ValueError("shift beyond SR Nyquist")
    return shift_spectrum(embed(spectrum, upsample), shift, sr_px)


def required_upsample(shifts, cutoff: float, pixel_size: float, minimum: int = 2) -> int:
    """Smallest factor (at least ``minimum``) whose Nyquist covers cutoff + max shift."""
    reach = cutoff + float(np.max(np.linalg.norm(np.asarray(shifts, dtype=float), axis=-1)))
    return max(minimum, int(np.floor(2 * pixel_size * reach)) + 1)


def effective_otfs(otfs: OtfModel, shifts, n_sr: int, sr_pixel_size: float) -> np.ndarray:
    """Effective 2D OTF of each component, already at its true frequency position."""
    return np.stack([otfs.effective(tuple(s), n_sr, sr_pixel_size) for s in shifts])


def apodize(spectrum: np.ndarray, pixel_size: float, kind: str = "triangle",
            cutoff: float | None = None) -> np.ndarray:
    if kind == "none":
        return spectrum
    if cutoff is None or cutoff <= 0:
        raise ValueError("apodization needs a positive cutoff")
    fy, fx = freq_grid(spectrum.shape[-1], pixel_size)
    r = np.clip(np.hypot(fx, fy) / cutoff, 0, 1)
    if kind == "triangle":
        win = 1 - r
    elif kind == "raised-cosine":
        win = 0.5 * (1 + np.cos(np.pi * r))
    else:
        raise ValueError(f"unknown apodization {kind!r}")
    return spectrum * win


def _wiener_group(placed, otf, idx, w):
    num = np.zeros(placed.shape[1:], dtype=complex)
    den = np.full(placed.shape[1:], w * w)
    for i in idx:  # fixed order keeps the reduction deterministic
        num += placed[i] * np.conj(otf[i])
        den += np.abs(otf[i]) ** 2
    return num / den


def _finish(spectrum, sr_px, config, support, provenance):
    cutoff = config.apod_cutoff if config.apod_cutoff is not None else support
    spectrum = apodize(spectrum, sr_px, config.apodization, cutoff)
    img = np.fft.ifft2(spectrum)
    scale = np.abs(img).max() or 1.0
    if np.abs(img.imag).max() / scale > 1e-6:
        raise ArithmeticError("reconstruction spectrum is not Hermitian")
    return SrImage(img.real, sr_px, provenance)


def reconstruct(components: ComponentSet, otfs: OtfModel, config: ReconConfig,
                pixel_size: float | None = None) -> SrImage:
    """Two-group Wiener recombination of the nine normalized components.

    Each group (zeroth + second orders; first orders) is a generalized Wiener
    estimate with its own denominator; the group results are added.
    """
    if components.shifts is None:
        raise ValueError("components carry no shifts")
    spectra = components.spectra
    pixel_size = pixel_size or otfs.config.pixel_size
    if config.mode == "full_4i":
        groups = [(MISSING_CONE_GROUP, config.w_mis), (COMPENSATING_GROUP, config.w_com)]
    elif config.mode == "first_only":
        groups = [(COMPENSATING_GROUP, config.w_com)]
    elif config.mode == "second_only":
        groups = [(MISSING_CONE_GROUP, config.w_mis)]
    else:
        raise ValueError("use reconstruct_conventional for two-beam data")
    used = sorted(i for g, _ in groups for i in g)
    if spectra.shape[0] < 9 or any(not np.any(np.isfinite(spectra[i])) for i in used):
        raise ValueError(f"missing components for mode {config.mode}")

    shifts = np.asarray(components.shifts)
    u = required_upsample(shifts[used], otfs.config.cutoff, pixel_size, config.upsample)
    sr_px = pixel_size / u
    n_sr = spectra.shape[-1] * u
    placed = np.zeros((9, n_sr, n_sr), dtype=complex)
    for i in used:
        placed[i] = place_component(spectra[i], shifts[i], u, pixel_size)
    otf = np.zeros_like(placed)
    otf[used] = effective_otfs(otfs, shifts[used], n_sr, sr_px)

    total = sum(_wiener_group(placed, otf, g, w) for g, w in groups)
    support = otfs.config.cutoff + max(np.linalg.norm(shifts[i]) for i in used)
    prov = {"mode": config.mode, "recon": config.to_dict(), "upsample": u,
            "params": components.params_used.to_dict() if components.params_used else None}
    return _finish(total, sr_px, config, support, prov)


def separate_two_beam(frames: np.ndarray, params: TwoBeamParams) -> ComponentSet:
    """Orders (0, -1, +1) for each of the three orientations, 9 spectra total."""
    spectra, shifts = [], []
    kvec = params.wavevectors()
    for o in range(3):
        m = two_beam_matrix(params.depths[o], params.phases[o], params.steps)
        sep = separate_components(frames[3 * o:3 * o + 3], m)
        spectra.extend(sep.spectra)
        shifts.extend([np.zeros(2), -kvec[o], kvec[o]])
    return ComponentSet(np.array(spectra), np.array(shifts), None)


def reconstruct_conventional(components: ComponentSet, otfs: OtfModel, config: ReconConfig,
                             pixel_size: float | None = None) -> SrImage:
    """Standard generalized Wiener over all nine two-beam components."""
    spectra = components.spectra
    if spectra.shape[0] != 9 or components.shifts is None:
        raise ValueError("missing components for mode conventional")
    pixel_size = pixel_size or otfs.config.pixel_size
    shifts = np.asarray(components.shifts)
    u = required_upsample(shifts, otfs.config.cutoff, pixel_size, config.upsample)
    sr_px = pixel_size / u
    n_sr = spectra.shape[-1] * u
    placed = np.stack([place_component(spectra[i], shifts[i], u, pixel_size) for i in range(9)])
    otf = effective_otfs(otfs, shifts, n_sr, sr_px)
    total = _wiener_group(placed, otf, range(9), config.w_mis)
    support = otfs.config.cutoff + np.max(np.linalg.norm(shifts, axis=1))
    return _finish(total, sr_px, config, support, {"mode": "conventional", "recon": config.to_dict(), "upsample": u})


def wiener_widefield(image: np.ndarray, otfs: OtfModel, config: ReconConfig) -> SrImage:
    """Single-image Wiener deconvolution on the SR grid (the zero-modulation limit)."""
    u = config.upsample
    sr_px = otfs.config.pixel_size / u
    n_sr = image.shape[-1] * u
    placed = embed(np.fft.fft2(image), u)[None]
    otf = otfs.effective((0.0, 0.0), n_sr, sr_px)[None]
    total = _wiener_group(placed, otf, (0,), config.w_mis)
    return _finish(total, sr_px, config, otfs.config.cutoff,
                   {"mode": "widefield_wiener", "recon": config.to_dict(), "upsample": u})
