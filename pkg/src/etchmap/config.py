"""Run configuration: a flat INI-style file with named sections.

Unknown sections or keys are errors (fail fast, so archived configs stay
reproducible).  Example::

    [beam]
    family = gaussian
    sigma = 2.0

    [geometry]
    half_width = 80
    spacing = 0.5

    [solver]
    mode = truncated-fit
    n_tr = 50
    gamma = 0.0

    [io]
    output_dir = out
    seed = 12345

Multi-beam runs add ``[beam2]``, ``[beam3]``, ... sections.  Geometry is an
interval (``half_width``), a rectangle (``half_width_x``/``half_width_y``),
a built-in stadium (``stadium_width``), or an arbitrary mask read from a
matrix file of zeros and ones (``mask_file``).
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beams import BeamSpec
from .core import (
    DomainGrid,
    DwellGrid,
    make_dwell_for_domain,
    make_interval_grids,
    make_rect_grids,
    make_stadium_mask,
)
from .errors import UsageError

SOLVER_MODES = ("pseudoinverse", "truncated-fit", "rkhs", "rbf-nonneg",
                "multibeam")

_BEAM_KEYS = {"family", "dimension", "sigma", "cutoff", "r_inner", "r_outer",
              "cov"}
_GEOMETRY_KEYS = {"half_width", "half_width_x", "half_width_y",
                  "stadium_width", "mask_file", "spacing", "margin"}
_SOLVER_KEYS = {"mode", "n_tr", "l_noise", "gamma", "nonneg"}
_IO_KEYS = {"input", "output_dir", "seed", "dump_modes", "figures"}
_SYNTH_KEYS = {"modes", "noise", "amplitude"}


@dataclass
class RunConfig:
    beams: list[BeamSpec]
    spacing: float
    half_width: float | None = None
    half_widths: tuple[float, float] | None = None
    stadium_width: float | None = None
    mask_file: str | None = None
    margin: float | None = None
    mode: str = "truncated-fit"
    n_tr: int | None = None
    l_noise: float | None = None
    gamma: float = 0.0
    nonneg: bool = False
    input: str | None = None
    output_dir: str = "out"
    seed: int = 0
    dump_modes: int = 6
    figures: bool = True
    synth_modes: int = 8
    synth_noise: float = 0.0
    synth_amplitude: float = 1.0
    base_dir: Path = field(default_factory=Path)

    @property
    def ndim(self) -> int:
        if self.half_widths is not None or self.stadium_width is not None:
            return 2
        if self.mask_file is not None:
            return 2
        return 1

    def build_grids(self) -> tuple[DwellGrid, DomainGrid]:
        scale = max(b.scale for b in self.beams)
        if self.half_width is not None:
            if self.margin is None:
                return make_interval_grids(self.half_width, scale, self.spacing)
            dwell_margin = self.margin
            _, domain = make_interval_grids(self.half_width, scale, self.spacing)
            return (make_dwell_for_domain(domain, scale, self.spacing,
                                          dwell_margin), domain)
        if self.half_widths is not None:
            if self.margin is None:
                return make_rect_grids(self.half_widths, scale, self.spacing)
            _, domain = make_rect_grids(self.half_widths, scale, self.spacing)
            return (make_dwell_for_domain(domain, scale, self.spacing,
                                          self.margin), domain)
        if self.stadium_width is not None:
            domain = make_stadium_mask(self.stadium_width, self.spacing)
        else:
            domain = self._domain_from_mask_file()
        dwell = make_dwell_for_domain(domain, scale, self.spacing, self.margin)
        return dwell, domain

    def _domain_from_mask_file(self) -> DomainGrid:
        from .matrixio import read_matrix

        data, header = read_matrix(self.base_dir / self.mask_file)
        mask = ~np.isnan(data) & (data != 0)
        axes = tuple(o + self.spacing * np.arange(n)
                     for o, n in zip(header["origin"], mask.shape))
        return DomainGrid(axes=axes, spacing=header["spacing"], mask=mask)


def _parse_float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise UsageError(f"[{section}] {key}: not a number: {raw!r}") from exc


def _parse_beam(name: str, items: dict) -> BeamSpec:
    unknown = set(items) - _BEAM_KEYS
    if unknown:
        raise UsageError(f"[{name}] unknown keys: {sorted(unknown)}")
    if "family" not in items:
        raise UsageError(f"[{name}] misses required key 'family'")
    family = items["family"]
    dim = int(items.get("dimension", 1))
    kwargs = {}
    if "sigma" in items:
        kwargs["sigma"] = _parse_float(name, "sigma", items["sigma"])
    if "cutoff" in items:
        kwargs["cutoff"] = _parse_float(name, "cutoff", items["cutoff"])
    if "r_inner" in items:
        kwargs["r"] = _parse_float(name, "r_inner", items["r_inner"])
    if "r_outer" in items:
        kwargs["R"] = _parse_float(name, "r_outer", items["r_outer"])
    if "cov" in items:
        rows = [[float(v) for v in row.split(",")]
                for row in items["cov"].split(";")]
        kwargs["cov"] = np.array(rows)
        dim = kwargs["cov"].shape[0]
    try:
        return BeamSpec(family, dim=dim, **kwargs)
    except Exception as exc:
        raise UsageError(f"[{name}] invalid beam: {exc}") from exc


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration file."""
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from exc

    beam_sections = sorted(
        (s for s in parser.sections() if re.fullmatch(r"beam\d*", s)),
        key=lambda s: int(s[4:] or 1))
    known = set(beam_sections) | {"geometry", "solver", "io", "synth"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    if not beam_sections:
        raise UsageError("config needs at least one [beam] section")
    if "geometry" not in parser:
        raise UsageError("config needs a [geometry] section")

    beams = [_parse_beam(s, dict(parser[s])) for s in beam_sections]

    geo = dict(parser["geometry"])
    unknown = set(geo) - _GEOMETRY_KEYS
    if unknown:
        raise UsageError(f"[geometry] unknown keys: {sorted(unknown)}")
    if "spacing" not in geo:
        raise UsageError("[geometry] misses required key 'spacing'")
    shape_keys = [k for k in ("half_width", "stadium_width", "mask_file")
                  if k in geo]
    if "half_width_x" in geo or "half_width_y" in geo:
        if not ("half_width_x" in geo and "half_width_y" in geo):
            raise UsageError("[geometry] rectangle needs both half_width_x "
                             "and half_width_y")
        shape_keys.append("rect")
    if len(shape_keys) != 1:
        raise UsageError("[geometry] needs exactly one of half_width, "
                         "half_width_x/half_width_y, stadium_width, mask_file")

    cfg = RunConfig(beams=beams,
                    spacing=_parse_float("geometry", "spacing", geo["spacing"]),
                    base_dir=path.parent)
    if "half_width" in geo:
        cfg.half_width = _parse_float("geometry", "half_width", geo["half_width"])
    if "rect" in shape_keys:
        cfg.half_widths = (
            _parse_float("geometry", "half_width_x", geo["half_width_x"]),
            _parse_float("geometry", "half_width_y", geo["half_width_y"]))
    if "stadium_width" in geo:
        cfg.stadium_width = _parse_float("geometry", "stadium_width",
                                         geo["stadium_width"])
    if "mask_file" in geo:
        cfg.mask_file = geo["mask_file"]
        if not (cfg.base_dir / cfg.mask_file).exists():
            raise UsageError(f"[geometry] mask_file not found: {cfg.mask_file}")
    if "margin" in geo:
        cfg.margin = _parse_float("geometry", "margin", geo["margin"])

    if "solver" in parser:
        sol = dict(parser["solver"])
        unknown = set(sol) - _SOLVER_KEYS
        if unknown:
            raise UsageError(f"[solver] unknown keys: {sorted(unknown)}")
        if "mode" in sol:
            if sol["mode"] not in SOLVER_MODES:
                raise UsageError(f"[solver] unknown mode {sol['mode']!r}; "
                                 f"expected one of {SOLVER_MODES}")
            cfg.mode = sol["mode"]
        if "n_tr" in sol and "l_noise" in sol:
            raise UsageError("[solver] n_tr and l_noise are mutually exclusive")
        if "n_tr" in sol:
            cfg.n_tr = int(sol["n_tr"])
        if "l_noise" in sol:
            cfg.l_noise = _parse_float("solver", "l_noise", sol["l_noise"])
        if "gamma" in sol:
            cfg.gamma = _parse_float("solver", "gamma", sol["gamma"])
            if cfg.gamma < 0:
                raise UsageError("[solver] gamma must be nonnegative")
        if "nonneg" in sol:
            cfg.nonneg = sol["nonneg"].strip().lower() in ("1", "true", "yes")

    if "io" in parser:
        io = dict(parser["io"])
        unknown = set(io) - _IO_KEYS
        if unknown:
            raise UsageError(f"[io] unknown keys: {sorted(unknown)}")
        if "input" in io:
            cfg.input = io["input"]
        if "output_dir" in io:
            cfg.output_dir = io["output_dir"]
        if "seed" in io:
            try:
                cfg.seed = int(io["seed"])
            except ValueError as exc:
                raise UsageError("[io] seed must be an integer") from exc
            if not 0 <= cfg.seed < 2 ** 64:
                raise UsageError("[io] seed must fit in 64 bits")
        if "dump_modes" in io:
            cfg.dump_modes = int(io["dump_modes"])
        if "figures" in io:
            cfg.figures = io["figures"].strip().lower() in ("1", "true", "yes")

    if "synth" in parser:
        syn = dict(parser["synth"])
        unknown = set(syn) - _SYNTH_KEYS
        if unknown:
            raise UsageError(f"[synth] unknown keys: {sorted(unknown)}")
        if "modes" in syn:
            cfg.synth_modes = int(syn["modes"])
        if "noise" in syn:
            cfg.synth_noise = _parse_float("synth", "noise", syn["noise"])
        if "amplitude" in syn:
            cfg.synth_amplitude = _parse_float("synth", "amplitude",
                                               syn["amplitude"])
    return cfg
