"""Command-line front end: simulate, reconstruct, metrics, pipeline.

Exit codes: 0 success, 2 invalid input or config, 3 numerical failure, 4 file-system error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("foursim")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
RESOLVED = "resolved_config.json"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# output directory handling

def _prepare_out(out: Path, force: bool, resume: bool, resolved: dict) -> None:
    from .io import read_json

    if out.exists() and not out.is_dir():
        raise CliError(f"output path {out} is not a directory", EXIT_IO)
    if out.exists() and any(out.iterdir()):
        if resume:
            prev = out / RESOLVED
            if prev.exists() and _strip_io(read_json(prev)) != _strip_io(resolved):
                raise CliError("resume requested but the configuration changed", EXIT_VALIDATION)
        elif not force:
            raise CliError(f"output directory {out} is not empty (use --force or --resume)", EXIT_IO)
    out.mkdir(parents=True, exist_ok=True)


def _strip_io(d: dict) -> dict:
    return {k: v for k, v in d.items() if k not in ("io", "provenance")}


def _write_resolved(out: Path, cfg, extra: dict | None = None) -> None:
    from . import __version__
    from .io import write_json

    doc = cfg.resolved()
    doc["provenance"] = {"version": __version__, **(extra or {})}
    write_json(out / RESOLVED, doc)


def _load_config(args):
    from .config import RunConfig

    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


# ---------------------------------------------------------------------------
# steps shared by the commands and the pipeline

def simulate_step(cfg, out: Path, mode: str = "both", resume: bool = False) -> dict:
    """Write phantom, raw frames and widefield stacks; returns the written paths."""
    from .forward import phantom_two_layer, simulate_conventional_frames, simulate_frames
    from .io import write_stack

    paths = {"phantom": out / "phantom.tif", "widefield": out / "widefield.tif"}
    want_four = mode in ("both", "fourbeam")
    want_conv = mode == "conventional" or (mode == "both" and cfg.simulation["conventional"])
    if want_four:
        paths["frames"] = out / "frames.tif"
    if want_conv:
        paths["conventional"] = out / "conventional.tif"
    independent = cfg.metrics.get("pair") == "independent"
    if independent:
        if cfg.noise() is None:
            raise CliError("independent rFRC pairs need a noise model", EXIT_VALIDATION)
        paths["widefield_b"] = out / "widefield_b.tif"
        if want_four:
            paths["frames_b"] = out / "frames_b.tif"
        if want_conv:
            paths["conventional_b"] = out / "conventional_b.tif"
    if resume and all(p.exists() for p in paths.values()):
        log.info("simulation outputs present, skipping")
        return paths

    opt = cfg.optical
    phantom = phantom_two_layer(cfg.phantom)
    base = {"optical": opt.to_dict(), "phantom": cfg.phantom.to_dict(), "seed": cfg.seed,
            "focal_index": cfg.focal_index, "pixel_size": opt.pixel_size}
    write_stack(paths["phantom"], phantom.transpose(2, 0, 1), {**base, "z_step": opt.z_step})
    table = cfg.table()
    params = cfg.sim_params()
    two = cfg.sim_two_beam()
    for suffix, offset in [("", 0)] + ([("_b", 1000)] if independent else []):
        widefield = None
        if want_four:
            fs = simulate_frames(phantom, params, table, opt, cfg.noise(offset), cfg.focal_index)
            write_stack(paths["frames" + suffix], fs.frames,
                        {**base, "mode": "fourbeam", "phase_table": table.to_list(),
                         "true_params": params.to_dict(), "noise": fs.noise_meta})
            if widefield is None:
                widefield = fs.widefield
        if want_conv:
            cs = simulate_conventional_frames(phantom, two, opt, cfg.noise(offset + 500), cfg.focal_index)
            write_stack(paths["conventional" + suffix], cs.frames,
                        {**base, "mode": "conventional", "true_params": two.to_dict(),
                         "noise": cs.noise_meta})
            if widefield is None:
                widefield = cs.widefield
        write_stack(paths["widefield" + suffix], widefield, {**base, "kind": "widefield"})
    return paths


def load_frames(path: Path):
    from .forward import RawFrameSet
    from .illum import PhaseTable
    from .io import read_stack

    data, meta = read_stack(path)
    table = PhaseTable(meta["phase_table"]) if "phase_table" in meta else None
    fs = RawFrameSet(data, table, meta.get("mode", "fourbeam"), meta.get("noise"),
                     float(meta.get("pixel_size", 65.0)))
    return fs, meta


def _params_from_file(path, mode: str):
    from .illum import IlluminationParams, TwoBeamParams
    from .io import read_json

    d = read_json(path)
    d = d.get("params", d)
    if mode == "conventional":
        return TwoBeamParams(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})
    return IlluminationParams.from_dict(d)


def _in_freq_px(params, opt) -> dict:
    from .illum import IlluminationParams

    if isinstance(params, IlluminationParams):
        return {"k_u": [x / opt.df for x in params.k_u], "k_v": [x / opt.df for x in params.k_v]}
    return {"wavevectors": (params.wavevectors() / opt.df).tolist()}


def reconstruct_step(cfg, frames_path: Path, out: Path, mode: str, params=None,
                     suffix: str = "", otfs=None, save_spectra: bool = False):
    """pretreat → estimate (unless params given) → separate → reconstruct; writes sr_<mode>.tif."""
    from .demod import estimate_from_raw, pretreat, separate_components
    from .illum import component_shifts, mixing_matrix
    from .io import write_json, write_spectra, write_stack
    from .optics import OtfModel
    from .recon import ReconConfig, reconstruct, reconstruct_conventional, separate_two_beam

    frames, meta = load_frames(frames_path)
    expected = "conventional" if mode == "conventional" else "fourbeam"
    if frames.mode != expected:
        raise CliError(f"mode {mode} needs {expected} frames, got {frames.mode}", EXIT_VALIDATION)
    n = frames.frames.shape[-1]
    opt = cfg.optical.replace(grid_xy=n, pixel_size=frames.pixel_size)
    otfs = otfs or OtfModel(opt)
    pre = cfg.pretreat

    if params is None:
        params, data = estimate_from_raw(frames, opt, otfs, pre["taper_width"], pre["rl_iterations"])
        estimated = True
    else:
        log.info("estimation skipped")
        data = pretreat(frames, pre["taper_width"], 0)
        estimated = False

    rc = ReconConfig(**{**cfg.recon.to_dict(), "mode": mode})
    if mode == "conventional":
        comps = separate_two_beam(data.frames, params)
        sr = reconstruct_conventional(comps, otfs, rc, opt.pixel_size)
    else:
        table = frames.table or cfg.table()
        comps = separate_components(data, mixing_matrix(params, table), params)
        comps.shifts = component_shifts(params)
        sr = reconstruct(comps, otfs, rc, opt.pixel_size)

    sr_path = out / f"sr_{mode}{suffix}.tif"
    prov = {**sr.provenance, "params": params.to_dict(), "estimated": estimated,
            "frames": str(frames_path), "pixel_size": sr.pixel_size}
    write_stack(sr_path, sr.pixels, prov)
    write_json(out / f"params_{mode}{suffix}.json",
               {"mode": mode, "estimated": estimated, "params": params.to_dict(),
                "frequency_pixels": _in_freq_px(params, opt), "units": {
                    "wavevectors": "cycles/nm", "frequency_pixels": "1/(grid*pixel_size)",
                    "phases": "rad", "depths": "dimensionless"}})
    if save_spectra:
        write_spectra(out / f"components_{mode}{suffix}.tif", comps.spectra,
                      {"shifts": comps.shifts, "mode": mode})
    return sr_path, params


def metrics_step(cfg, sr_path: Path, out: Path, reference: Path | None = None,
                 partner: Path | None = None, stem: str | None = None) -> dict:
    from .io import read_stack, write_json, write_stack
    from .metrics import local_contrast, rfrc_map, rsm

    sr, meta = read_stack(sr_path)
    sr = sr[0]
    px = float(meta.get("pixel_size", cfg.optical.pixel_size / cfg.recon.upsample))
    m = cfg.metrics
    stem = stem or sr_path.stem
    report: dict = {"image": str(sr_path), "pixel_size": px}

    if m["rfrc"]:
        other = read_stack(partner)[0][0] if partner is not None else None
        rmap = rfrc_map(sr, px, m["rfrc_window"], m["rfrc_stride"], m["foreground_fraction"],
                        m["frc_smoothing"], partner=other)
        write_stack(out / f"{stem}_rfrc.tif", rmap.values,
                    {"centers_y": rmap.centers[0], "centers_x": rmap.centers[1],
                     "window": rmap.window, "stride": rmap.stride, "label": rmap.label})
        report.update(mean_resolution=rmap.mean_resolution, rfrc_label=rmap.label,
                      rfrc_map=rmap.values.tolist())
    if m["contrast"]:
        c = local_contrast(sr, m["contrast_window"], m["foreground_fraction"])
        with open(out / f"{stem}_contrast.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tile", "contrast"])
            w.writerows(enumerate(c.tolist()))
        report.update(contrast_mean=float(c.mean()) if c.size else None,
                      contrast_median=float(sorted(c)[len(c) // 2]) if c.size else None)
    if m["rsm"]:
        if reference is None:
            log.warning("RSM skipped: no widefield reference given")
            report["rsm_skipped"] = "no widefield reference"
        else:
            wf, wmeta = read_stack(reference)
            opt = cfg.optical
            res = rsm(sr, wf.mean(axis=0), opt.na, opt.wavelength_em,
                      float(wmeta.get("pixel_size", opt.pixel_size)))
            write_stack(out / f"{stem}_rsm.tif", res.map, {"mu": res.mu, "theta": res.theta,
                                                           "sigma_x": res.sigma_x, "sigma_y": res.sigma_y})
            report.update(rsm_mean=res.mean_error, rsm_sigma=[res.sigma_x, res.sigma_y])
    write_json(out / f"{stem}_metrics.json", report)
    return report


def _upsampled_widefield(cfg, wf_path: Path, out: Path, suffix: str = "") -> Path:
    import numpy as np

    from .io import read_stack, write_stack
    from .recon import embed

    wf, meta = read_stack(wf_path)
    u = cfg.recon.upsample
    img = np.fft.ifft2(embed(np.fft.fft2(wf[0]), u)).real * u * u
    path = out / f"widefield_sr_grid{suffix}.tif"
    write_stack(path, img, {**meta, "pixel_size": float(meta.get("pixel_size", 65.0)) / u,
                            "kind": "widefield, Fourier-upsampled"})
    return path


def _leakage_for(cfg, phantom_path: Path, image_path: Path) -> float | None:
    import numpy as np

    from .io import read_stack
    from .metrics import band_limit, leakage

    stack, _ = read_stack(phantom_path)
    filled = [z for z in range(stack.shape[0]) if np.any(stack[z])]
    others = [z for z in filled if z != cfg.focal_index]
    if not others:
        return None
    far = max(others, key=lambda z: abs(z - cfg.focal_index))
    truth = band_limit(stack[far], cfg.optical.pixel_size, cfg.optical.cutoff, cfg.recon.upsample)
    return leakage(read_stack(image_path)[0][0], truth)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> None:
    cfg = _load_config(args)
    out = Path(args.out)
    _prepare_out(out, args.force, args.resume, cfg.resolved())
    _write_resolved(out, cfg, {"command": "simulate"})
    mode = args.mode or "both"
    if mode not in ("both", "fourbeam", "conventional"):
        raise CliError(f"simulate mode must be both, fourbeam or conventional, got {mode}", EXIT_VALIDATION)
    for name, p in simulate_step(cfg, out, mode, args.resume).items():
        log.info("wrote %s: %s", name, p)


def cmd_reconstruct(args) -> None:
    from .io import file_hash

    cfg = _load_config(args)
    frames = args.frames or cfg.io.get("frames")
    if not frames:
        raise CliError("no frames file given", EXIT_VALIDATION)
    frames = Path(frames)
    if not frames.exists():
        raise CliError(f"frames file {frames} not found", EXIT_IO)
    mode = args.mode or cfg.recon.mode
    params = None
    if args.params or cfg.io.get("params"):
        params = _params_from_file(args.params or cfg.io["params"], mode)
    elif not isinstance(cfg.illumination, str) and mode != "conventional":
        params = cfg.illumination
    out = Path(args.out)
    _prepare_out(out, args.force, args.resume, cfg.resolved())
    _write_resolved(out, cfg, {"command": "reconstruct", "mode": mode,
                               "inputs": {str(frames): file_hash(frames)}})
    path, _ = reconstruct_step(cfg, frames, out, mode, params, save_spectra=args.save_spectra)
    log.info("wrote %s", path)


def cmd_metrics(args) -> None:
    from .io import file_hash

    cfg = _load_config(args)
    sr = Path(args.image)
    if not sr.exists():
        raise CliError(f"image {sr} not found", EXIT_IO)
    ref = args.reference or cfg.io.get("reference")
    partner = args.partner or cfg.io.get("partner")
    for p in (ref, partner):
        if p and not Path(p).exists():
            raise CliError(f"file {p} not found", EXIT_IO)
    out = Path(args.out)
    _prepare_out(out, args.force, args.resume, cfg.resolved())
    _write_resolved(out, cfg, {"command": "metrics", "inputs": {str(sr): file_hash(sr)}})
    rep = metrics_step(cfg, sr, out, Path(ref) if ref else None, Path(partner) if partner else None)
    if "mean_resolution" in rep:
        log.info("mean rFRC %.2f nm (%s)", rep["mean_resolution"], rep["rfrc_label"])


def cmd_pipeline(args) -> None:
    from .io import write_json
    from .optics import OtfModel
    from .recon import MODES

    cfg = _load_config(args)
    out = Path(args.out)
    _prepare_out(out, args.force, args.resume, cfg.resolved())
    _write_resolved(out, cfg, {"command": "pipeline"})
    sim_dir, rec_dir, met_dir = out / "simulate", out / "reconstruct", out / "metrics"
    for d in (sim_dir, rec_dir, met_dir):
        d.mkdir(exist_ok=True)

    paths = simulate_step(cfg, sim_dir, "both", args.resume)
    independent = cfg.metrics.get("pair") == "independent"
    modes = [args.mode] if args.mode else list(MODES)
    if "conventional" in modes and "conventional" not in paths:
        modes.remove("conventional")
    otfs = OtfModel(cfg.optical)
    given = None if isinstance(cfg.illumination, str) else cfg.illumination

    rows = []
    wf_sr = _upsampled_widefield(cfg, paths["widefield"], rec_dir)
    wf_b = _upsampled_widefield(cfg, paths["widefield_b"], rec_dir, "_b") if independent else None
    targets = [("widefield", wf_sr, wf_b)]
    for mode in modes:
        src = "conventional" if mode == "conventional" else "frames"
        suffixes = ["", "_b"] if independent else [""]
        made = []
        for sfx in suffixes:
            sr_path = rec_dir / f"sr_{mode}{sfx}.tif"
            if not (args.resume and sr_path.exists()):
                reconstruct_step(cfg, paths[src + sfx], rec_dir, mode,
                                 given if mode != "conventional" else None, sfx, otfs)
            made.append(sr_path)
        targets.append((mode, made[0], made[1] if independent else None))

    for name, img, partner in targets:
        rep = metrics_step(cfg, img, met_dir, paths["widefield"], partner, stem=name)
        rows.append({"method": name, "rfrc_mean_nm": rep.get("mean_resolution"),
                     "rfrc_pair": rep.get("rfrc_label"),
                     "contrast_mean": rep.get("contrast_mean"),
                     "contrast_median": rep.get("contrast_median"),
                     "rsm_mean": rep.get("rsm_mean"),
                     "leakage": _leakage_for(cfg, paths["phantom"], img)})
    write_json(out / "report.json", {"rows": rows, "config": cfg.resolved()})
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        log.info("%-13s rFRC %s contrast %s leakage %s", r["method"], _fmt(r["rfrc_mean_nm"]),
                 _fmt(r["contrast_mean"]), _fmt(r["leakage"]))


def _fmt(x):
    return "n/a" if x is None else f"{x:.4g}"


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="foursim", description="Four-beam SIM simulation and reconstruction")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--mode", help="simulation or reconstruction mode")
        sp.add_argument("--resume", action="store_true", help="reuse outputs already present")
        sp.add_argument("--force", action="store_true", help="write into a non-empty directory")
        sp.add_argument("--threads", type=int, help="thread count for numerical libraries")
        sp.add_argument("-q", "--quiet", action="store_true")

    sp = sub.add_parser("simulate", help="phantom and raw frames")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("reconstruct", help="estimate parameters and reconstruct")
    common(sp)
    sp.add_argument("frames", nargs="?", help="raw frame stack (TIFF)")
    sp.add_argument("--params", help="parameter JSON; skips estimation")
    sp.add_argument("--save-spectra", action="store_true", help="also write separated spectra")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("metrics", help="rFRC, RSM and local contrast of an image")
    common(sp)
    sp.add_argument("image", help="super-resolved image (TIFF)")
    sp.add_argument("--reference", help="widefield image for RSM")
    sp.add_argument("--partner", help="independent reconstruction for paired rFRC")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("pipeline", help="simulate, reconstruct every mode and compare")
    common(sp)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    if args.threads:
        if args.threads < 1:
            log.error("--threads must be positive")
            return EXIT_VALIDATION
        # honoured by BLAS/OpenMP pools that have not been started yet
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    import numpy as np

    from .config import ConfigError
    from .demod import EstimationError

    try:
        args.func(args)
    except CliError as exc:
        log.error("%s", exc)
        return exc.code
    except (EstimationError, np.linalg.LinAlgError, ArithmeticError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
