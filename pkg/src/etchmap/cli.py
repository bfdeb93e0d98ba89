"""Command line front end.

Subcommands::

    etchmap spectrum  --config run.cfg --out DIR
    etchmap synth     --config run.cfg --out DIR [--seed U64]
    etchmap solve     --config run.cfg --input h.txt --out DIR
    etchmap multibeam --config run.cfg --input h.txt --out DIR
    etchmap kernel-dump --config run.cfg --out DIR

Every command writes delimited text tables plus (unless disabled) PNG
figures rendered from those tables.  Exit codes: 0 success, 2 usage or
configuration error, 1 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import figures, matrixio
from .config import RunConfig, load_config
from .core import FieldMap, weighted_inner
from .errors import EtchmapError, InvalidInput, UsageError
from .kernels import assemble_normal_matrix
from .solvers import (
    SampleSet,
    assemble_multibeam,
    choose_truncation,
    dwell_from_coeffs,
    fit_truncated,
    multibeam_forward,
    multibeam_solve,
    pseudoinverse_apply,
    rbf_dwell,
    rbf_fit_nonnegative,
    reconstruct_filtered,
    rkhs_dwell,
    rkhs_fit,
    truncation_threshold,
)
from .spectral import (
    TensorSystem,
    decompose,
    fit_wavenumber,
    left_vectors,
    mode_parity,
    apply_forward,
    tail_decay_table,
)

SPECTRUM_TABLE_FLOOR = 1e-6


def _build_system(cfg: RunConfig, n_left: int | None = None):
    """Assemble and decompose the single-beam system for the configured
    geometry; returns (system-with-left-vectors, dwell, domain)."""
    beam = cfg.beams[0]
    dwell, domain = cfg.build_grids()
    kern = assemble_normal_matrix(beam, dwell, domain)
    system = decompose(kern)
    count = system.n_above_clamp if n_left is None \
        else min(n_left, system.n_above_clamp)
    system = left_vectors(system, beam, domain, count)
    return system, dwell, domain


def _resolve_n_tr(cfg: RunConfig, eigenvalues: np.ndarray) -> int:
    beam = cfg.beams[0]
    if cfg.l_noise is not None:
        if beam.family not in ("gaussian", "gaussian_aniso"):
            raise UsageError("l_noise-based truncation needs a Gaussian beam")
        sigma = beam.scale
        return choose_truncation(cfg.l_noise, sigma, eigenvalues)
    if cfg.n_tr is not None:
        return cfg.n_tr
    raise UsageError("[solver] needs n_tr or l_noise for this mode")


def cmd_spectrum(cfg: RunConfig, out: Path) -> int:
    beam = cfg.beams[0]
    dwell, domain = cfg.build_grids()
    kern = assemble_normal_matrix(beam, dwell, domain)
    system = decompose(kern)
    lam = system.eigenvalues
    rows = []
    fit_floor = SPECTRUM_TABLE_FLOOR * lam[0] if lam.size else 0.0
    half_width = float(domain.upper[0]) if domain.ndim == 1 else None
    for n in range(system.n_above_clamp):
        t = system.t_vec(n)
        parity = mode_parity(t)
        if domain.ndim == 1 and lam[n] >= fit_floor:
            k, _ = fit_wavenumber(t, parity, 0.8, half_width)
        else:
            k = float("nan")
        rows.append((n, lam[n], k, parity))
    matrixio.write_spectrum_table(out / "spectrum.txt", rows)
    mode_files = []
    for n in range(min(cfg.dump_modes, system.n_above_clamp)):
        path = out / f"eigvec_{n:03d}.txt"
        matrixio.write_field(path, system.t_vec(n))
        mode_files.append(path)
    matrixio.write_manifest(out / "manifest.txt", {
        "command": "spectrum",
        "beam_family": beam.family,
        "lambda_1": float(lam[0]) if lam.size else 0.0,
        "operator_norm_estimate": float(np.sqrt(lam[0])) if lam.size else 0.0,
        "n_modes_above_clamp": system.n_above_clamp,
        "clamp": float(system.clamp),
    })
    if domain.ndim == 1 and beam.family == "gaussian":
        # Informational dump of the far-field decay of the leading modes;
        # the conjectured tail law is reported, never asserted.
        lines = ["# n x t_n(x) ratio_to_conjectured_tail"]
        for n in range(min(3, system.n_above_clamp)):
            for x, t, ratio in tail_decay_table(system, beam.sigma,
                                                half_width, n):
                lines.append(f"{n} {x:.17g} {t:.17g} {ratio:.17g}")
        (out / "tail_diagnostics.txt").write_text("\n".join(lines) + "\n")
    if cfg.figures:
        figures.render_spectrum(out / "spectrum.txt", mode_files,
                                out / "spectrum.png")
    return 0


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    """Synthetic measurement: a seeded PCG64 combination of the leading
    left singular vectors plus white noise of configured amplitude."""
    beam = cfg.beams[0]
    dwell, domain = cfg.build_grids()
    if domain.ndim == 2 and domain.mask is None and beam.separable:
        tensor = TensorSystem.build(beam, dwell, domain, cfg.synth_modes)
        m = len(tensor.order)
        cols = tensor.left_columns(m)
    else:
        system, _, _ = _build_system(cfg, n_left=cfg.synth_modes)
        m = min(cfg.synth_modes, system.n_left)
        cols = system.left[:, :m]
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    coeffs = cfg.synth_amplitude * rng.standard_normal(m)
    vals = (cols @ coeffs).reshape(domain.shape)
    signal_rms = float(np.sqrt(np.mean(
        vals.ravel()[domain.flat_mask()] ** 2)))
    if cfg.synth_noise > 0:
        vals = vals + cfg.synth_noise * signal_rms * rng.standard_normal(
            domain.shape)
    field = FieldMap(domain, vals)
    matrixio.write_field(out / "measurement.txt", field)
    matrixio.write_manifest(out / "synth_manifest.txt", {
        "command": "synth",
        "generator": "numpy PCG64",
        "seed": cfg.seed,
        "modes": m,
        "noise": float(cfg.synth_noise),
        "signal_rms": signal_rms,
    }, coefficients=coeffs)
    if cfg.figures:
        figures.render_field(out / "measurement.txt", out / "measurement.png",
                             "synthetic measurement")
    return 0


def _write_solution(cfg, out, domain, measurement, filtered, dwell_map,
                    manifest):
    residual = FieldMap(domain, measurement.values - filtered.values)
    matrixio.write_field(out / "etch_map.txt", dwell_map)
    matrixio.write_field(out / "filtered.txt", filtered)
    matrixio.write_field(out / "residual.txt", residual)
    sel = domain.flat_mask()
    manifest["residual_rms"] = float(np.sqrt(np.mean(
        residual.flat[sel] ** 2)))
    manifest["max_dwell"] = float(np.max(np.abs(dwell_map.values)))
    coeffs = manifest.pop("_coefficients", None)
    matrixio.write_manifest(out / "manifest.txt", manifest, coefficients=coeffs)
    if cfg.figures:
        figures.render_fields(
            [out / "filtered.txt", out / "residual.txt"],
            ["filtered measurement", "residual"],
            out / "solution.png")
        figures.render_field(out / "etch_map.txt", out / "etch_map.png",
                             "etch map")
    return 0


def cmd_solve(cfg: RunConfig, input_path: Path, out: Path) -> int:
    if cfg.mode == "multibeam":
        return cmd_multibeam(cfg, input_path, out)
    beam = cfg.beams[0]
    dwell, domain = cfg.build_grids()
    measurement = matrixio.read_field(input_path, domain)
    manifest = {"command": "solve", "mode": cfg.mode,
                "beam_family": beam.family, "gamma": float(cfg.gamma)}

    if cfg.mode in ("pseudoinverse", "truncated-fit") and domain.ndim == 2 \
            and domain.mask is None:
        if cfg.mode == "pseudoinverse":
            raise UsageError("pseudoinverse mode supports 1D and masked "
                             "geometries; use truncated-fit on rectangles")
        count = cfg.n_tr if cfg.n_tr is not None else 400
        tensor = TensorSystem.build(beam, dwell, domain, count)
        n_tr = min(_resolve_n_tr(cfg, tensor.eigenvalues), len(tensor.order))
        samples = SampleSet.from_field(measurement)
        fit = fit_truncated(samples, tensor, n_tr, cfg.gamma)
        filtered = reconstruct_filtered(fit, tensor)
        dwell_map = dwell_from_coeffs(fit, tensor)
        manifest.update(n_tr=n_tr, lambda_1=float(tensor.eigenvalues[0]),
                        empirical_error=fit.empirical_error,
                        _coefficients=fit.coefficients)
        if cfg.l_noise is not None:
            manifest["l_noise"] = float(cfg.l_noise)
            manifest["truncation_threshold"] = truncation_threshold(
                cfg.l_noise, beam.scale)
        return _write_solution(cfg, out, domain, measurement, filtered,
                               dwell_map, manifest)

    if cfg.mode == "pseudoinverse":
        system, _, _ = _build_system(cfg)
        n_tr = _resolve_n_tr(cfg, system.eigenvalues)
        dwell_map = pseudoinverse_apply(system, measurement, n_tr)
        filtered = apply_forward(dwell_map, beam, domain)
        manifest.update(n_tr=n_tr, lambda_1=float(system.eigenvalues[0]))
        return _write_solution(cfg, out, domain, measurement, filtered,
                               dwell_map, manifest)

    if cfg.mode == "truncated-fit":
        system, _, _ = _build_system(cfg)
        n_tr = _resolve_n_tr(cfg, system.eigenvalues)
        samples = SampleSet.from_field(measurement)
        fit = fit_truncated(samples, system, n_tr, cfg.gamma)
        filtered = reconstruct_filtered(fit, system)
        dwell_map = dwell_from_coeffs(fit, system)
        manifest.update(n_tr=n_tr, lambda_1=float(system.eigenvalues[0]),
                        empirical_error=fit.empirical_error,
                        _coefficients=fit.coefficients)
        if cfg.l_noise is not None:
            manifest["l_noise"] = float(cfg.l_noise)
            manifest["truncation_threshold"] = truncation_threshold(
                cfg.l_noise, beam.scale)
        return _write_solution(cfg, out, domain, measurement, filtered,
                               dwell_map, manifest)

    samples = SampleSet.from_field(measurement)
    if cfg.mode == "rkhs":
        fit = rkhs_fit(samples, beam, cfg.gamma)
        evaluator = rkhs_dwell(fit, beam, samples)
        dwell_map = evaluator.sample(dwell)
        filtered_vals = evaluator.predicted_measurement(
            domain.points(masked=False)).reshape(domain.shape)
        filtered = FieldMap(domain, filtered_vals)
        manifest.update(n_tr=fit.n_tr, empirical_error=fit.empirical_error,
                        _coefficients=fit.coefficients)
        return _write_solution(cfg, out, domain, measurement, filtered,
                               dwell_map, manifest)

    if cfg.mode == "rbf-nonneg":
        centers = dwell.points()
        fit = rbf_fit_nonnegative(samples, centers, beam, cfg.gamma)
        evaluator = rbf_dwell(fit, beam, centers)
        dwell_map = FieldMap(dwell, fit.coefficients.reshape(dwell.shape))
        filtered_vals = evaluator.predicted_measurement(
            domain.points(masked=False)).reshape(domain.shape)
        filtered = FieldMap(domain, filtered_vals)
        manifest.update(n_tr=fit.n_tr, empirical_error=fit.empirical_error,
                        min_coefficient=float(fit.coefficients.min()),
                        _coefficients=fit.coefficients)
        return _write_solution(cfg, out, domain, measurement, filtered,
                               dwell_map, manifest)

    raise UsageError(f"unknown solver mode {cfg.mode!r}")


def cmd_multibeam(cfg: RunConfig, input_path: Path, out: Path) -> int:
    dwell, domain = cfg.build_grids()
    measurement = matrixio.read_field(input_path, domain)
    mb = assemble_multibeam(cfg.beams, dwell, domain)
    maps = multibeam_solve(mb, measurement, cfg.gamma, nonneg=cfg.nonneg)
    for i, t in enumerate(maps):
        matrixio.write_field(out / f"etch_map_beam{i + 1}.txt", t)
    combined = multibeam_forward(mb, maps)
    residual = FieldMap(domain, measurement.values - combined.values)
    matrixio.write_field(out / "filtered.txt", combined)
    matrixio.write_field(out / "residual.txt", residual)
    sel = domain.flat_mask()
    matrixio.write_manifest(out / "manifest.txt", {
        "command": "multibeam",
        "n_beams": mb.n_beams,
        "gamma": float(cfg.gamma),
        "nonneg": str(cfg.nonneg).lower(),
        "residual_rms": float(np.sqrt(np.mean(residual.flat[sel] ** 2))),
        "max_dwell": max(float(np.max(np.abs(t.values))) for t in maps),
    })
    if cfg.figures:
        paths = [out / f"etch_map_beam{i + 1}.txt" for i in range(mb.n_beams)]
        figures.render_fields(paths + [out / "residual.txt"],
                              [f"etch map, beam {i + 1}"
                               for i in range(mb.n_beams)] + ["residual"],
                              out / "multibeam.png")
    return 0


def cmd_kernel_dump(cfg: RunConfig, out: Path) -> int:
    beam = cfg.beams[0]
    dwell, domain = cfg.build_grids()
    kern = assemble_normal_matrix(beam, dwell, domain)
    origin = ",".join(f"{ax[0]:.17g}" for ax in dwell.axes)
    header = f"origin={origin} spacing={dwell.spacing:.17g} mask=0"
    matrixio.write_matrix(out / "kernel.txt", kern.matrix, header)
    matrixio.write_manifest(out / "manifest.txt", {
        "command": "kernel-dump",
        "beam_family": beam.family,
        "side": kern.matrix.shape[0],
    })
    if cfg.figures:
        figures.render_matrix(out / "kernel.txt", out / "kernel.png",
                              "normal operator")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etchmap",
        description="Etch-map computation for ion beam figuring")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "solve", "synth", "multibeam", "kernel-dump"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="64-bit seed override")
        if name in ("solve", "multibeam"):
            p.add_argument("--input", default=None,
                           help="measurement matrix file")
    return parser


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise UsageError("--seed must fit in 64 bits")
            cfg.seed = args.seed
        out = Path(args.out) if args.out else cfg.base_dir / cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        if args.command in ("solve", "multibeam"):
            raw = getattr(args, "input", None) or cfg.input
            if raw is None:
                raise UsageError(f"{args.command} needs --input or [io] input")
            input_path = Path(raw)
            if not input_path.is_absolute():
                candidate = cfg.base_dir / input_path
                input_path = candidate if candidate.exists() else input_path
            if not input_path.exists():
                raise UsageError(f"input file not found: {input_path}")
        if args.command == "spectrum":
            return cmd_spectrum(cfg, out)
        if args.command == "synth":
            return cmd_synth(cfg, out)
        if args.command == "solve":
            return cmd_solve(cfg, input_path, out)
        if args.command == "multibeam":
            return cmd_multibeam(cfg, input_path, out)
        if args.command == "kernel-dump":
            return cmd_kernel_dump(cfg, out)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, InvalidInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EtchmapError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
