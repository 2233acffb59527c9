"""Flat ``section.key = value`` run configuration with line-precise errors."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .observation import GeometryParams, kernel_build
from .pts_core import DiscreteGrid, PiecewiseConstant, Uniform, vph_to_rate

METHODS = ("grid", "map", "laplace", "is", "mcmc")


def _float_list(s):
    return [float(v) for v in s.split(",") if v.strip()]


def _range3(s):
    lo, hi, n = s.split(":")
    n = int(n)
    if n < 1 or float(hi) < float(lo):
        raise ValueError("need lo:hi:n with hi >= lo and n >= 1")
    return float(lo), float(hi), n


def _choice(options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return s
    return parse


def _optional_float(s):
    return None if s.lower() in ("", "none") else float(s)


# key -> (parser, default)
SCHEMA = {
    "run.seed": (int, 2024),
    "signal.delta_t_s": (float, 1.0),
    "signal.cycle_s": (float, 90.0),
    "signal.green_s": (float, 35.0),
    "signal.green_start_s": (_optional_float, None),
    "signal.warm_up_cycles": (int, 50),
    "geometry.v_f_mps": (float, 15.0),
    "geometry.s_jam_m": (float, 7.5),
    "geometry.lanes": (int, 2),
    "geometry.link_len_m": (float, 250.0),
    "kernel.sigma_veh": (float, 1.0),
    "kernel.half_width_veh": (int, 2),
    "demand.volume_vph": (float, 720.0),
    "demand.breakpoints_s": (_float_list, []),
    "demand.volumes_vph": (_float_list, []),
    "demand.phi": (float, 0.10),
    "experiment.hours": (float, 1.0),
    "experiment.replications": (int, 1),
    "experiment.report_hours": (_float_list, []),
    "experiment.curve_volumes_vph": (_float_list, [540.0]),
    "experiment.curve_phis": (_float_list, [0.05, 0.1, 0.2, 0.3, 0.5]),
    "experiment.curve_cycles": (int, 1000),
    "inference.method": (_choice(METHODS), "map"),
    "inference.init": (_choice(("stationary", "empty")), "stationary"),
    "inference.n_starts": (int, 5),
    "inference.n_is": (int, 1000),
    "inference.mcmc_chains": (int, 4),
    "inference.mcmc_samples": (int, 1000),
    "inference.mcmc_warmup": (int, 1000),
    "inference.grid_mu_vph": (_range3, (500.0, 1000.0, 41)),
    "inference.grid_phi": (_range3, (0.02, 0.3, 41)),
    "inputs.trajectories": (str, ""),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})
    source: str | None = None
    raw: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key, value):
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", self.source)
        self.values[key] = value

    @property
    def grid(self) -> DiscreteGrid:
        return self.grid_for_hours(self["experiment.hours"])

    def grid_for_hours(self, hours) -> DiscreteGrid:
        v = self.values
        n = hours * 3600.0 / v["signal.cycle_s"]
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ConfigError(f"{hours} h is not a whole number of {v['signal.cycle_s']} s cycles",
                              self.source)
        return self.grid_for_cycles(int(round(n)))

    def grid_for_cycles(self, n_cycles) -> DiscreteGrid:
        v = self.values
        return DiscreteGrid.from_seconds(v["signal.delta_t_s"], v["signal.cycle_s"],
                                         v["signal.green_s"], v["signal.green_start_s"],
                                         n_cycles=n_cycles,
                                         warm_up_cycles=v["signal.warm_up_cycles"])

    @property
    def geometry(self) -> GeometryParams:
        v = self.values
        return GeometryParams(v["geometry.v_f_mps"], v["geometry.s_jam_m"], v["geometry.lanes"],
                              v["geometry.link_len_m"])

    @property
    def kernel(self):
        v = self.values
        return kernel_build(v["kernel.sigma_veh"], v["kernel.half_width_veh"])

    @property
    def breakpoints_steps(self):
        bp = self["demand.breakpoints_s"]
        if not bp:
            return None
        dt = self["signal.delta_t_s"]
        out = []
        for b in bp:
            s = b / dt
            if abs(s - round(s)) > 1e-9:
                raise ConfigError(f"breakpoint {b} s is not a whole number of steps", self.source)
            out.append(int(round(s)))
        return out

    def profile(self):
        dt = self["signal.delta_t_s"]
        bp = self.breakpoints_steps
        if bp is None:
            return Uniform(float(vph_to_rate(self["demand.volume_vph"], dt)))
        vols = self["demand.volumes_vph"]
        if len(vols) != len(bp):
            raise ConfigError("demand.volumes_vph needs one value per breakpoint", self.source)
        return PiecewiseConstant(bp, vph_to_rate(vols, dt))

    def canonical(self) -> str:
        lines = []
        for k in SCHEMA:
            v = self.values[k]
            if isinstance(v, tuple):
                v = ":".join(repr(x) for x in v)
            elif isinstance(v, list):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{k} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def validate(self):
        """Cross-field checks; build every derived object once."""
        try:
            self.grid
            self.geometry
            self.kernel
            self.profile()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), self.source) from None
        if not 0.0 < self["demand.phi"] <= 1.0:
            raise ConfigError("demand.phi must lie in (0, 1]", self.source,
                              self.raw.get("demand.phi"))
        if self["experiment.replications"] < 1:
            raise ConfigError("experiment.replications must be >= 1", self.source,
                              self.raw.get("experiment.replications"))
        path = self["inputs.trajectories"]
        if path and not Path(path).exists():
            raise ConfigError(f"trajectory file {path} does not exist", self.source,
                              self.raw.get("inputs.trajectories"))
        return self


def parse_config(text: str, source="<config>") -> RunConfig:
    cfg = RunConfig(source=source)
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"expected 'key = value', got {s!r}", source, n)
        key, value = (p.strip() for p in s.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", source, n)
        if key in cfg.raw:
            raise ConfigError(f"duplicate key {key!r} (first set on line {cfg.raw[key]})",
                              source, n)
        parser = SCHEMA[key][0]
        try:
            cfg.values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})", source, n) from None
        cfg.raw[key] = n
    return cfg


def load_config(path=None) -> RunConfig:
    """Read and validate a config file; ``None`` gives the built-in defaults."""
    if path is None:
        return RunConfig(source="<defaults>").validate()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    return parse_config(p.read_text(encoding="utf-8"), str(p)).validate()
