"""Resolution and fidelity metrics: FRC / rolling FRC, RSM and local contrast."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize


@dataclass
class FrcCurve:
    frequencies: np.ndarray  # ring radii, cycles per unit length
    correlations: np.ndarray  # smoothed
    ring_counts: np.ndarray
    cutoff: float
    raw: np.ndarray | None = None

    @property
    def resolution(self) -> float:
        return 1.0 / self.cutoff


@dataclass
class RfrcMap:
    values: np.ndarray  # per-window resolution, 0 = background
    centers: tuple[np.ndarray, np.ndarray]
    window: int
    stride: int
    mean_resolution: float
    label: str = "decimated-pair FRC"


@dataclass
class RsmResult:
    map: np.ndarray
    mu: float
    theta: float
    sigma_x: float
    sigma_y: float
    mean_error: float
    history: list = field(default_factory=list)


def ring_index(n: int) -> np.ndarray:
    """Integer ring radius (in frequency pixels) of each bin of an n×n FFT."""
    f = np.fft.fftfreq(n) * n
    return np.rint(np.hypot(f[:, None], f[None, :])).astype(int)


def moving_average(x: np.ndarray, width: int = 3) -> np.ndarray:
    """Centred moving average; the ends use the samples available."""
    if width <= 1:
        return x.copy()
    kernel = np.ones(width)
    num = np.convolve(x, kernel, mode="same")
    den = np.convolve(np.ones_like(x), kernel, mode="same")
    return num / den


def frc_threshold(ring_counts: np.ndarray) -> np.ndarray:
    return 3.0 / np.sqrt(ring_counts / 2.0)


def frc(img1: np.ndarray, img2: np.ndarray, pixel_size: float = 1.0, smooth: int = 3) -> FrcCurve:
    """Fourier ring correlation with a 3σ-style ring threshold.

    The crossing search starts at the first ring whose threshold is below 1
    and the crossing is interpolated linearly between the bracketing rings;
    when the curve never crosses, the cutoff is the Nyquist frequency.
    """
    img1 = np.asarray(img1, dtype=float)
    img2 = np.asarray(img2, dtype=float)
    if img1.shape != img2.shape or img1.ndim != 2 or img1.shape[0] != img1.shape[1]:
        raise ValueError("frc needs two square images of equal size")
    if not np.any(img1) or not np.any(img2):
        raise ValueError("frc input has zero energy")
    n = img1.shape[0]
    f1, f2 = np.fft.fft2(img1), np.fft.fft2(img2)
    rings = ring_index(n).ravel()
    nyq = n // 2
    keep = rings <= nyq
    rings = rings[keep]
    cross = np.bincount(rings, (f1 * np.conj(f2)).real.ravel()[keep], minlength=nyq + 1)
    p1 = np.bincount(rings, (np.abs(f1) ** 2).ravel()[keep], minlength=nyq + 1)
    p2 = np.bincount(rings, (np.abs(f2) ** 2).ravel()[keep], minlength=nyq + 1)
    counts = np.bincount(rings, minlength=nyq + 1)
    denom = np.sqrt(p1 * p2)
    raw = np.divide(cross, denom, out=np.zeros_like(cross), where=denom > 0)
    curve = moving_average(raw, smooth)
    thr = frc_threshold(counts)
    freqs = np.arange(nyq + 1) / (n * pixel_size)

    start = int(np.argmax(thr < 1.0))
    gap = curve - thr
    below = np.nonzero(gap[start:] < 0)[0]
    if not below.size:
        cutoff = freqs[-1]
    else:
        i = start + below[0]
        if i == 0:
            cutoff = freqs[0]
        else:
            # linear zero crossing of curve − threshold between rings i−1 and i
            t = gap[i - 1] / (gap[i - 1] - gap[i])
            cutoff = freqs[i - 1] + t * (freqs[i] - freqs[i - 1])
    return FrcCurve(freqs, curve, counts, float(cutoff), raw)


def split_for_frc(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Checkerboard decimation into two half-sampled images at full size.

    Each image keeps its own diagonal sublattice and fills the other sites
    with the mean of their four (periodic) neighbours.
    """
    image = np.asarray(image, dtype=float)
    yy, xx = np.indices(image.shape)
    even = (yy + xx) % 2 == 0
    nb = 0.25 * (np.roll(image, 1, 0) + np.roll(image, -1, 0)
                 + np.roll(image, 1, 1) + np.roll(image, -1, 1))
    a = np.where(even, image, nb)
    b = np.where(even, nb, image)
    return a, b


def hann2d(n: int) -> np.ndarray:
    w = np.hanning(n)
    return w[:, None] * w[None, :]


def rfrc_map(image: np.ndarray, pixel_size: float = 1.0, window: int = 128, stride: int = 64,
             foreground_fraction: float = 0.05, smooth: int = 3,
             partner: np.ndarray | None = None) -> RfrcMap:
    """Rolling FRC resolution map.

    With ``partner`` (an independent reconstruction of the same object) the
    pair is (image, partner); otherwise the image is split by checkerboard
    decimation. Windows whose mean is at or below ``foreground_fraction`` of
    the image 99th percentile are background (value 0). Each window is
    Hann-weighted before its FRC.
    """
    image = np.asarray(image, dtype=float)
    if window < 64:
        raise ValueError("window must be >= 64")
    if stride > window // 2:
        raise ValueError("stride must be <= window/2")
    ny, nx = image.shape
    if ny < window or nx < window:
        raise ValueError("image smaller than the rFRC window")
    if partner is None:
        a, b = split_for_frc(image)
        label = "decimated-pair FRC"
    else:
        a, b = image, np.asarray(partner, dtype=float)
        if a.shape != b.shape:
            raise ValueError("partner shape differs from image")
        label = "independent-pair FRC"
    thresh = foreground_fraction * np.percentile(image, 99)
    win = hann2d(window)
    ys = np.arange(0, ny - window + 1, stride)
    xs = np.arange(0, nx - window + 1, stride)
    values = np.zeros((len(ys), len(xs)))
    for i, y0 in enumerate(ys):
        for j, x0 in enumerate(xs):
            sl = (slice(y0, y0 + window), slice(x0, x0 + window))
            if image[sl].mean() <= thresh:
                continue
            wa = a[sl] - a[sl].mean()
            wb = b[sl] - b[sl].mean()
            if not np.any(wa) or not np.any(wb):
                continue
            values[i, j] = frc(wa * win, wb * win, pixel_size, smooth).resolution
    if not np.any(values):
        raise ValueError("no foreground")
    centers = (ys + window // 2, xs + window // 2)
    return RfrcMap(values, centers, window, stride, mean_resolution(values), label)


def mean_resolution(values: np.ndarray) -> float:
    nz = values != 0
    return float(values[nz].sum() / np.count_nonzero(nz))


def gaussian_blur(image: np.ndarray, sigma_x: float, sigma_y: float) -> np.ndarray:
    """Periodic Gaussian blur through its analytic transfer function (σ in pixels)."""
    fy = np.fft.fftfreq(image.shape[0])[:, None]
    fx = np.fft.fftfreq(image.shape[1])[None, :]
    h = np.exp(-2 * np.pi**2 * (sigma_x**2 * fx**2 + sigma_y**2 * fy**2))
    return np.fft.ifft2(np.fft.fft2(image) * h).real


def bin_to(image: np.ndarray, shape) -> np.ndarray:
    fy = image.shape[0] // shape[0]
    fx = image.shape[1] // shape[1]
    if fy * shape[0] != image.shape[0] or fx * shape[1] != image.shape[1]:
        raise ValueError("SR grid is not an integer multiple of the widefield grid")
    if fy == fx == 1:
        return image
    return image.reshape(shape[0], fy, shape[1], fx).mean(axis=(1, 3))


def rsm(sr_image: np.ndarray, widefield: np.ndarray, na: float = 1.45, wavelength: float = 561.0,
        pixel_size: float = 65.0, maxiter: int = 500, rtol: float = 1e-6) -> RsmResult:
    """Resolution-scaled error map |I_L − (μ·I_H + θ) ⊗ G(σx, σy)|.

    The four parameters are fitted jointly with Nelder–Mead. The search stops
    after ``maxiter`` iterations or once the best objective has improved by
    less than ``rtol`` (relative) over the last 40 iterations.
    """
    i_l = np.asarray(widefield, dtype=float)
    i_h = np.asarray(sr_image, dtype=float)
    if not (np.all(np.isfinite(i_l)) and np.all(np.isfinite(i_h))):
        raise ValueError("non-finite input")
    i_h = bin_to(i_h, i_l.shape)
    sigma0 = wavelength / (4 * na * pixel_size)
    mu0 = i_l.mean() / i_h.mean() if i_h.mean() != 0 else 1.0
    x0 = np.array([mu0, 0.0, sigma0, sigma0])
    fh = np.fft.fft2(i_h)
    fy = np.fft.fftfreq(i_l.shape[0])[:, None]
    fx = np.fft.fftfreq(i_l.shape[1])[None, :]
    n = i_l.size

    def model(p):
        mu, theta, sx, sy = p
        h = np.exp(-2 * np.pi**2 * (sx**2 * fx**2 + sy**2 * fy**2))
        return mu * np.fft.ifft2(fh * h).real + theta

    def objective(p):
        return float(np.sum((i_l - model(p)) ** 2))

    history: list[float] = []

    def callback(intermediate_result):
        history.append(float(intermediate_result.fun))
        if len(history) > 40:
            old = history[-41]
            if old - history[-1] <= rtol * abs(old):
                raise StopIteration

    scale = np.array([0.1 * abs(mu0) or 0.1, 0.1 * (np.abs(i_l).mean() or 1.0), 0.3 * sigma0, 0.3 * sigma0])
    simplex = np.vstack([x0] + [x0 + np.eye(4)[i] * scale[i] for i in range(4)])
    res = minimize(objective, x0, method="Nelder-Mead", callback=callback,
                   options={"maxiter": maxiter, "initial_simplex": simplex,
                            "xatol": 1e-12, "fatol": 0.0})
    mu, theta, sx, sy = res.x
    err = np.abs(i_l - model(res.x))
    return RsmResult(err, float(mu), float(theta), abs(float(sx)), abs(float(sy)),
                     float(err.mean()), history)


def local_contrast(image: np.ndarray, window: int = 64, foreground_fraction: float = 0.05) -> np.ndarray:
    """Robust Michelson contrast (P99 − P1)/(P99 + P1 + ε) per tile."""
    image = np.asarray(image, dtype=float)
    eps = 1e-6 * np.abs(image).max()
    thresh = foreground_fraction * np.percentile(image, 99)
    out = []
    ny, nx = image.shape
    for y0 in range(0, ny - window + 1, window):
        for x0 in range(0, nx - window + 1, window):
            tile = image[y0:y0 + window, x0:x0 + window]
            if tile.mean() <= thresh:
                continue
            p1, p99 = np.percentile(tile, [1, 99])
            out.append((p99 - p1) / (p99 + p1 + eps))
    return np.array(out)


def band_limit(image: np.ndarray, pixel_size: float, cutoff: float, upsample: int = 1) -> np.ndarray:
    """Ideal circular low-pass at ``cutoff`` (cycles/length), optionally Fourier-upsampled."""
    image = np.asarray(image, dtype=float)
    n = image.shape[0]
    f = np.fft.fftfreq(n, d=pixel_size)
    spec = np.fft.fft2(image) * (np.hypot(f[:, None], f[None, :]) <= cutoff)
    if upsample > 1:
        m = n * upsample
        big = np.zeros((m, m), dtype=complex)
        lo = m // 2 - n // 2
        big[lo:lo + n, lo:lo + n] = np.fft.fftshift(spec)
        return np.fft.ifft2(np.fft.ifftshift(big)).real * upsample**2
    return np.fft.ifft2(spec).real


def leakage(reconstruction: np.ndarray, layer_truth: np.ndarray) -> float:
    """Squared normalized cross-correlation with an out-of-focus layer's truth."""
    a = np.asarray(reconstruction, dtype=float).ravel()
    b = np.asarray(layer_truth, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("leakage inputs differ in size")
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        raise ValueError("leakage input has zero variance")
    return float((a @ b / denom) ** 2)
