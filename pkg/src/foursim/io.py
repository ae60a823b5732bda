"""Float32 multi-page TIFF stacks with JSON sidecars."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import tifffile


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (tuple, list)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    return obj


def write_json(path, data: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_stack(path, pages: np.ndarray, metadata: dict | None = None) -> Path:
    """Write pages (first axis) as little-endian float32; metadata goes to the sidecar."""
    path = Path(path)
    data = np.ascontiguousarray(np.asarray(pages, dtype="<f4"))
    if data.ndim == 2:
        data = data[None]
    # no description tag, so identical arrays give identical bytes
    tifffile.imwrite(path, data, photometric="minisblack", metadata=None, description=None)
    write_json(sidecar_path(path), metadata or {})
    return path


def read_stack(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    data = tifffile.imread(path).astype(np.float64)
    if data.ndim == 2:
        data = data[None]
    side = sidecar_path(path)
    meta = read_json(side) if side.exists() else {}
    return data, meta


def write_spectra(path, spectra: np.ndarray, metadata: dict | None = None) -> Path:
    """Complex spectra as interleaved real/imaginary page pairs."""
    spectra = np.asarray(spectra)
    if spectra.ndim == 2:
        spectra = spectra[None]
    pages = np.empty((2 * spectra.shape[0],) + spectra.shape[1:], dtype="<f4")
    pages[0::2] = spectra.real
    pages[1::2] = spectra.imag
    return write_stack(path, pages, {**(metadata or {}), "layout": "real/imag pairs"})


def read_spectra(path) -> tuple[np.ndarray, dict]:
    pages, meta = read_stack(path)
    if pages.shape[0] % 2:
        raise ValueError("spectrum file has an odd page count")
    return pages[0::2] + 1j * pages[1::2], meta


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
