"""Frame pre-treatment, spectral separation and illumination-parameter estimation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .forward import RawFrameSet
from .illum import (IlluminationParams, MixingMatrix, PhaseTable, component_shifts,
                    default_phase_table, mixing_matrix)
from .optics import OpticalConfig, OtfModel, freq_grid


class EstimationError(ValueError):
    """Raised when illumination parameters cannot be recovered from the data."""


@dataclass
class ComponentSet:
    spectra: np.ndarray  # (9, ny, nx), unshifted FFT layout
    shifts: np.ndarray | None = None  # (9, 2) (fx, fy) cycles/nm
    params_used: IlluminationParams | None = None


# -- pre-treatment -----------------------------------------------------------

def taper_window(n: int, width: int) -> np.ndarray:
    """Separable raised-cosine border window, 1 in the interior."""
    w = np.ones(n)
    if width > 0:
        t = np.arange(width)
        ramp = 0.5 * (1 - np.cos(np.pi * (t + 0.5) / width))
        w[:width] = ramp
        w[-width:] = ramp[::-1]
    return w[:, None] * w[None, :]


def richardson_lucy(image: np.ndarray, otf: np.ndarray, iterations: int,
                    eps: float = 1e-12) -> np.ndarray:
    """FFT-based Richardson–Lucy with a DC-normalized OTF (flux conserving)."""
    data = np.clip(image, 0, None)
    est = data.copy()
    for _ in range(iterations):
        blurred = np.fft.ifft2(np.fft.fft2(est) * otf).real
        ratio = data / np.maximum(blurred, eps)
        est = est * np.fft.ifft2(np.fft.fft2(ratio) * np.conj(otf)).real
    return est


def pretreat(frames: RawFrameSet, taper_width: int = 16, rl_iterations: int = 5,
             otf2d: np.ndarray | None = None) -> RawFrameSet:
    n = frames.frames.shape[-1]
    if taper_width >= n / 4:
        raise ValueError("taper width must be below grid/4")
    if rl_iterations < 0:
        raise ValueError("rl_iterations must be >= 0")
    out = frames.frames
    if taper_width > 0:
        out = out * taper_window(n, taper_width)
    if rl_iterations > 0:
        if otf2d is None:
            raise ValueError("RL deconvolution needs the widefield OTF")
        out = np.stack([richardson_lucy(f, otf2d, rl_iterations) for f in out])
    return RawFrameSet(out, frames.table, frames.mode, frames.noise_meta, frames.pixel_size)


# -- separation --------------------------------------------------------------

def separate_components(frames, matrix: MixingMatrix | np.ndarray,
                        params: IlluminationParams | None = None) -> ComponentSet:
    data = frames.frames if isinstance(frames, RawFrameSet) else np.asarray(frames)
    m = matrix.values if isinstance(matrix, MixingMatrix) else np.asarray(matrix)
    if data.shape[0] != m.shape[0]:
        raise ValueError(f"expected {m.shape[0]} frames, got {data.shape[0]}")
    if np.linalg.cond(m) > 1e6:
        raise np.linalg.LinAlgError("mixing matrix is singular")
    spectra = np.fft.fft2(data)
    comps = np.einsum("ij,jyx->iyx", np.linalg.inv(m), spectra)
    shifts = component_shifts(params) if params is not None else None
    return ComponentSet(comps, shifts, params)


# -- estimation --------------------------------------------------------------

def _ramp(n: int, pixel_size: float, q) -> np.ndarray:
    y, x = np.mgrid[0:n, 0:n] * pixel_size
    return np.exp(2j * np.pi * (q[0] * x + q[1] * y))


def _phase_slope(vec: np.ndarray) -> float:
    """Amplitude-weighted mean phase increment (radians/sample) along ``vec``."""
    return float(np.angle(np.sum(vec[1:] * np.conj(vec[:-1]))))


def estimate_wavevector(component_spectrum: np.ndarray, zeroth_spectrum: np.ndarray,
                        config: OpticalConfig, radius: int = 15, min_snr: float = 3.0,
                        exclude: float | None = None, near=None) -> np.ndarray:
    """Sub-pixel lateral frequency (fx, fy) of one modulated component.

    Coarse step: peak of the spectrum of ``c · conj(c0)`` (the cross-correlation
    of the two spectra), optionally restricted to ``radius`` frequency pixels
    around ``near``. Refinement: isolate a disk around that peak, return to
    real space and read the frequency off the phase of the two dominant
    singular vectors.
    """
    n = component_spectrum.shape[-1]
    px = config.pixel_size
    df = 1.0 / (n * px)
    # round-off level: nothing to find
    if np.abs(component_spectrum).sum() <= 1e-9 * np.abs(zeroth_spectrum).sum():
        raise EstimationError("modulation undetectable")
    c = np.fft.ifft2(component_spectrum)
    c0 = np.fft.ifft2(zeroth_spectrum)
    xc = np.fft.fft2(c * np.conj(c0))
    mag = np.abs(xc)

    fy, fx = freq_grid(n, px)
    fr = np.hypot(fx, fy)
    if exclude is None:
        exclude = 0.1 * config.cutoff
    search = fr > exclude
    if near is not None:
        search &= np.hypot(fx - near[0], fy - near[1]) <= radius * df
    if not np.any(mag[search] > 0):
        raise EstimationError("modulation undetectable")
    masked = np.where(search, mag, 0)
    iy, ix = np.unravel_index(np.argmax(masked), masked.shape)
    peak = masked[iy, ix]
    background = np.median(mag[search])
    if peak <= 0 or (background > 0 and peak / background < min_snr):
        raise EstimationError("modulation undetectable")

    coarse = np.array([fx[0, ix], fy[iy, 0]])
    # disk mask around the coarse peak (index distance with wrap-around)
    dy = (np.arange(n)[:, None] - iy + n // 2) % n - n // 2
    dx = (np.arange(n)[None, :] - ix + n // 2) % n - n // 2
    disk = dx**2 + dy**2 <= radius**2
    plane = np.fft.ifft2(np.where(disk, xc, 0)) * np.conj(_ramp(n, px, coarse))
    u, s, vh = np.linalg.svd(plane)
    dfy = _phase_slope(u[:, 0]) / (2 * np.pi) * n
    dfx = _phase_slope(vh[0, :]) / (2 * np.pi) * n
    return coarse + np.array([dfx, dfy]) * df


def _overlap_region(h0, hs, fx, fy, k, otf_threshold, exclude):
    return ((np.abs(h0) > otf_threshold) & (np.abs(hs) > otf_threshold)
            & (np.hypot(fx, fy) > exclude) & (np.hypot(fx - k[0], fy - k[1]) > exclude))


def overlap_score(component: np.ndarray, zeroth: np.ndarray, q, otfs: OtfModel,
                  config: OpticalConfig, otf_threshold: float = 0.05) -> float:
    """Normalized overlap correlation (1 = perfect match) for a trial shift ``q``."""
    n = component.shape[-1]
    px = config.pixel_size
    q = np.asarray(q, dtype=float)
    fy, fx = freq_grid(n, px)
    h0 = otfs.effective((0.0, 0.0), n, px)
    hs = otfs.effective(-q, n, px)
    region = _overlap_region(h0, hs, fx, fy, q, otf_threshold, 0.15 * config.cutoff)
    if region.sum() < 100:
        return 0.0
    x = component[region] * hs[region]
    y = np.fft.fft2(np.fft.ifft2(zeroth) * _ramp(n, px, q))[region] * h0[region]
    return float(np.abs(np.vdot(y, x)) ** 2 / (np.vdot(x, x).real * np.vdot(y, y).real))


def scan_overlap(component: np.ndarray, zeroth: np.ndarray, centre, otfs: OtfModel,
                 config: OpticalConfig, reach: int = 4) -> tuple[float, np.ndarray]:
    """Best (score, shift) over the frequency bins within ``reach`` of ``centre``."""
    df = 1.0 / (component.shape[-1] * config.pixel_size)
    base = np.round(np.asarray(centre, dtype=float) / df)
    best = (-1.0, base * df)
    for dy in range(-reach, reach + 1):
        for dx in range(-reach, reach + 1):
            if dx * dx + dy * dy > reach * reach:
                continue
            q = (base + (dx, dy)) * df
            score = overlap_score(component, zeroth, q, otfs, config)
            if score > best[0]:
                best = (score, q)
    return best


def refine_wavevector(component: np.ndarray, zeroth: np.ndarray, k0, otfs: OtfModel,
                      config: OpticalConfig, otf_threshold: float = 0.05,
                      exclude: float | None = None) -> np.ndarray:
    """Polish ``k0`` by maximizing the normalized overlap correlation.

    For the true shift p, ``c_j(k)·h(k−p)`` is proportional to
    ``c0(k−p)·h(k)``, so the normalized correlation reaches its bound of 1.
    """
    n = component.shape[-1]
    px = config.pixel_size
    df = 1.0 / (n * px)
    k0 = np.asarray(k0, dtype=float)
    fy, fx = freq_grid(n, px)
    if exclude is None:
        exclude = 0.15 * config.cutoff
    h0 = otfs.effective((0.0, 0.0), n, px)
    region = _overlap_region(h0, otfs.effective(-k0, n, px), fx, fy, k0, otf_threshold, exclude)
    if region.sum() < 100:
        raise EstimationError("insufficient overlap")
    c0 = np.fft.ifft2(zeroth)
    comp = component[region]
    h0r = h0[region]
    rfx, rfy = (np.broadcast_to(a, region.shape)[region] for a in (fx, fy))

    def cost(dq):
        q = k0 + dq * df
        x = comp * otfs.effective_at(-q, rfx, rfy)
        y = np.fft.fft2(c0 * _ramp(n, px, q))[region] * h0r
        num = np.abs(np.vdot(y, x)) ** 2
        return -num / (np.vdot(x, x).real * np.vdot(y, y).real)

    res = minimize(cost, np.zeros(2), method="Nelder-Mead",
                   options={"initial_simplex": [[0, 0], [0.1, 0], [0, 0.1]],
                            "xatol": 1e-5, "fatol": 1e-14, "maxiter": 400})
    return k0 + res.x * df


def estimate_phase_and_depth(component: np.ndarray, zeroth: np.ndarray, k,
                             otfs: OtfModel, config: OpticalConfig,
                             otf_threshold: float = 0.05,
                             exclude: float | None = None) -> tuple[float, float]:
    """Phase and modulation depth of one component relative to the zeroth order.

    With ``c_j = m·e^{iφ}·C_j``, the products ``c_j(k)·h(k−p)`` and
    ``c0(k−p)·h(k)`` coincide up to ``m·e^{iφ}`` over the region where both
    OTFs are supported; the complex least-squares gain gives both numbers.
    Bins near the two DC positions, where defocused light dominates, are
    left out.
    """
    n = component.shape[-1]
    px = config.pixel_size
    k = np.asarray(k, dtype=float)
    h0 = otfs.effective((0.0, 0.0), n, px)
    hs = otfs.effective(-k, n, px)
    shifted0 = np.fft.fft2(np.fft.ifft2(zeroth) * _ramp(n, px, k))
    x = component * hs
    y = shifted0 * h0

    fy, fx = freq_grid(n, px)
    if exclude is None:
        exclude = 0.15 * config.cutoff
    region = _overlap_region(h0, hs, fx, fy, k, otf_threshold, exclude)
    if region.sum() < 100:
        raise EstimationError("insufficient overlap")
    g = np.sum(x[region] * np.conj(y[region])) / np.sum(np.abs(y[region]) ** 2)
    return float(np.mod(np.angle(g), 2 * np.pi)), float(np.abs(g))


def _nominal_params() -> IlluminationParams:
    return IlluminationParams(k_u=(1.0, 0.0), k_v=(0.0, 1.0), m1_u=1, m1_v=1, m2_u=1, m2_v=1)


def estimate_params(frames: RawFrameSet, config: OpticalConfig, otfs: OtfModel | None = None,
                    table: PhaseTable | None = None, radius: int = 15,
                    consistency_px: float = 0.1,
                    linear: RawFrameSet | None = None) -> IlluminationParams:
    """Wavevectors, phases and depths of all four pattern terms.

    ``linear`` optionally supplies frames without nonlinear pre-treatment:
    wavevectors are located on ``frames`` (e.g. RL-sharpened), then polished,
    together with phases and depths, on ``linear`` so deconvolution cannot
    bias them.
    """
    if frames.mode != "fourbeam":
        raise EstimationError("frames are not four-beam acquisitions")
    table = table if table is not None else (frames.table or default_phase_table())
    otfs = otfs or OtfModel(config)
    comps = separate_components(frames, mixing_matrix(_nominal_params(), table)).spectra
    n = comps.shape[-1]
    df = 1.0 / (n * config.pixel_size)

    def locate(j, near=None):
        # the correlation peak can sit a few bins off for line-like samples
        # or weak orders, so scan integer bins by overlap before polishing
        seeds = [(estimate_wavevector(comps[j], comps[0], config, radius, near=near), 4)]
        if near is not None:
            seeds.append((near, 1))
        best = max((scan_overlap(comps[j], comps[0], k, otfs, config, reach)
                    for k, reach in seeds), key=lambda t: t[0])
        return refine_wavevector(comps[j], comps[0], best[1], otfs, config)

    # + orders: (u-v) -> 2, (u+v) -> 4, 2u -> 6, 2v -> 8. The weaker second
    # orders are searched near the sum/difference of the first-order peaks.
    p = {j: locate(j) for j in (2, 4)}
    p[6] = locate(6, p[4] + p[2])
    p[8] = locate(8, p[4] - p[2])
    if linear is not None:
        comps = separate_components(linear, mixing_matrix(_nominal_params(), table)).spectra
        p = {j: refine_wavevector(comps[j], comps[0], p[j], otfs, config) for j in p}
    if (np.linalg.norm((p[6] + p[8]) / 2 - p[4]) / df > consistency_px
            or np.linalg.norm((p[6] - p[8]) / 2 - p[2]) / df > consistency_px):
        raise EstimationError("inconsistent orders")
    a = np.array([[1.0, -1.0], [1.0, 1.0], [2.0, 0.0], [0.0, 2.0]])
    rhs = np.stack([p[2], p[4], p[6], p[8]])
    sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
    ku, kv = sol[0], sol[1]

    shifts = component_shifts(IlluminationParams(k_u=ku, k_v=kv))
    est = {}
    for name, (jm, jp) in {"1_u": (1, 2), "1_v": (3, 4), "2_u": (5, 6), "2_v": (7, 8)}.items():
        ph_p, m_p = estimate_phase_and_depth(comps[jp], comps[0], shifts[jp], otfs, config)
        ph_m, m_m = estimate_phase_and_depth(comps[jm], comps[0], shifts[jm], otfs, config)
        phase = np.angle(np.exp(1j * ph_p) * m_p + np.exp(-1j * ph_m) * m_m)
        depth = float(np.clip(0.5 * (m_p + m_m), 1e-6, 1.5))
        est[name] = (float(np.mod(phase, 2 * np.pi)), depth)
    return IlluminationParams(
        k_u=tuple(ku), k_v=tuple(kv),
        m1_u=est["1_u"][1], m1_v=est["1_v"][1], m2_u=est["2_u"][1], m2_v=est["2_v"][1],
        phi1_u=est["1_u"][0], phi1_v=est["1_v"][0], phi2_u=est["2_u"][0], phi2_v=est["2_v"][0])


def estimate_two_beam(frames: RawFrameSet, config: OpticalConfig, otfs: OtfModel | None = None,
                      radius: int = 15, linear: RawFrameSet | None = None) -> "TwoBeamParams":
    """Per-orientation wavevector, phase and depth for three-phase two-beam data.

    ``linear`` plays the same role as in :func:`estimate_params`.
    """
    from .illum import TwoBeamParams, two_beam_matrix

    if frames.mode != "conventional":
        raise EstimationError("frames are not two-beam acquisitions")
    otfs = otfs or OtfModel(config)
    ks, phases, depths = [], [], []
    for o in range(3):
        c0, _, cp = separate_components(frames.frames[3 * o:3 * o + 3],
                                        two_beam_matrix(1.0, 0.0)).spectra
        _, k = scan_overlap(cp, c0, estimate_wavevector(cp, c0, config, radius), otfs, config)
        k = refine_wavevector(cp, c0, k, otfs, config)
        if linear is not None:
            c0, _, cp = separate_components(linear.frames[3 * o:3 * o + 3],
                                            two_beam_matrix(1.0, 0.0)).spectra
            k = refine_wavevector(cp, c0, k, otfs, config)
        ph, m = estimate_phase_and_depth(cp, c0, k, otfs, config)
        ks.append(k)
        phases.append(ph)
        depths.append(float(np.clip(m, 1e-6, 1.5)))
    ks = np.array(ks)
    return TwoBeamParams(magnitude=float(np.linalg.norm(ks, axis=1).mean()),
                         angles=tuple(float(a) for a in np.arctan2(ks[:, 1], ks[:, 0])),
                         depths=tuple(depths), phases=tuple(phases))


def estimate_from_raw(frames: RawFrameSet, config: OpticalConfig, otfs: OtfModel | None = None,
                      taper_width: int = 16, rl_iterations: int = 5):
    """Pre-treat and estimate: RL-sharpened frames for the peak search, taper-only
    frames for everything that must stay linear. Returns (params, linear frames)."""
    n = frames.frames.shape[-1]
    otfs = otfs or OtfModel(config)
    linear = pretreat(frames, taper_width, 0)
    wf = otfs.effective((0.0, 0.0), n, config.pixel_size).real
    sharp = pretreat(frames, taper_width, rl_iterations, wf)
    if frames.mode == "conventional":
        return estimate_two_beam(sharp, config, otfs, linear=linear), linear
    return estimate_params(sharp, config, otfs, frames.table, linear=linear), linear
