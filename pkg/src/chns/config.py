"""Run configuration: a small INI-like format with typed, line-checked keys.

    # comment
    [section]
    key = value

Values are ints, floats, booleans (true/false), strings or comma-separated
lists.  Every error message carries the offending line number.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

KINDS = ("converge", "bubble1", "bubble2", "rayleigh-taylor")
WALLS = ("noslip", "slip", "none")


class ConfigError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass
class MeshConfig:
    nx: int | None = None
    ny: int | None = None
    resolution: int | None = None  # 1/h; sets nx, ny from the bounds
    bounds: list = field(default_factory=lambda: [0.0, 1.0, 0.0, 1.0])
    periodic_x: bool = False
    periodic_y: bool = False
    bottom: str = "noslip"
    right: str = "noslip"
    top: str = "noslip"
    left: str = "noslip"


@dataclass
class DiscConfig:
    k: int = 2
    alpha: float = 4.0
    quad_order: int | None = None  # Gauss points per direction, default k + 2
    contour_m: int | None = None  # marching-squares samples per element, default 2(k+1)
    region_points: int | None = None  # indicator quadrature per direction, default 2(k+1)
    solver: str = "auto"


@dataclass
class TimeConfig:
    cfl: float | None = None
    dt: float | None = None
    t_end: float = 3.0
    dt_max: float = 0.1
    v_floor: float = 1e-8
    sample_times: list = field(default_factory=list)


@dataclass
class PhysicsConfig:
    rho1: float = 1000.0
    rho2: float = 100.0
    nu1: float = 10.0
    nu2: float = 1.0
    sigma: float | None = 24.5
    g: list = field(default_factory=lambda: [0.0, -0.98])
    re: float | None = None  # sets nu1 = nu2 = sqrt(2)/re when given


@dataclass
class PhaseConfig:
    eps: float | None = None  # absolute width; overrides eps_factor
    eps_factor: float = 0.64  # eps = eps_factor * h
    gamma_factor: float = 1e-3  # gamma = gamma_factor * eps
    sigma_factor: float | None = None  # sigma = sigma_factor * eps, overrides physics.sigma
    mobility_floor: float = 1e-6


@dataclass
class ConvergenceConfig:
    resolutions: list = field(default_factory=lambda: [8, 16, 32])
    degrees: list = field(default_factory=lambda: [1, 2])
    t_end: float = 0.5
    dt_power: float | None = None  # dt = h^dt_power, default (k+1)/2


@dataclass
class OutputConfig:
    csv: str = "series.csv"
    vtk_every: int = 0  # steps between VTK snapshots, 0 = final state only
    series_every: int = 1


@dataclass
class RunConfig:
    kind: str
    mesh: MeshConfig = field(default_factory=MeshConfig)
    disc: DiscConfig = field(default_factory=DiscConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    phase: PhaseConfig = field(default_factory=PhaseConfig)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    # derived quantities ---------------------------------------------------
    @property
    def h(self) -> float:
        x0, x1, y0, y1 = self.mesh.bounds
        return min((x1 - x0) / self.mesh.nx, (y1 - y0) / self.mesh.ny)

    @property
    def eps(self) -> float:
        return self.phase.eps if self.phase.eps is not None else self.phase.eps_factor * self.h

    @property
    def gamma(self) -> float:
        return self.phase.gamma_factor * self.eps

    @property
    def sigma(self) -> float:
        if self.phase.sigma_factor is not None:
            return self.phase.sigma_factor * self.eps
        return self.physics.sigma

    @property
    def contour_m(self) -> int:
        return self.disc.contour_m or 2 * (self.disc.k + 1)


SECTIONS = {
    "problem": None,
    "mesh": MeshConfig,
    "discretization": DiscConfig,
    "time": TimeConfig,
    "physics": PhysicsConfig,
    "phase": PhaseConfig,
    "convergence": ConvergenceConfig,
    "output": OutputConfig,
}
_ATTR = {"discretization": "disc"}

# case defaults (overridable by the file)
CASE_DEFAULTS = {
    "bubble1": {
        "mesh": dict(bounds=[0.0, 1.0, 0.0, 2.0], bottom="noslip", top="noslip", left="slip", right="slip"),
        "time": dict(dt=0.005, t_end=3.0),
        "physics": dict(rho1=1000.0, rho2=100.0, nu1=10.0, nu2=1.0, sigma=24.5, g=[0.0, -0.98]),
        "phase": dict(eps_factor=0.64, gamma_factor=1e-3),
    },
    "bubble2": {
        "mesh": dict(bounds=[0.0, 1.0, 0.0, 2.0], bottom="noslip", top="noslip", left="slip", right="slip"),
        "time": dict(dt=0.005, t_end=3.0),
        "physics": dict(rho1=1000.0, rho2=1.0, nu1=10.0, nu2=0.1, sigma=1.96, g=[0.0, -0.98]),
        "phase": dict(eps_factor=0.64, gamma_factor=1e-3),
    },
    "rayleigh-taylor": {
        "mesh": dict(bounds=[0.0, 0.5, -2.0, 2.0], bottom="noslip", top="noslip", left="slip", right="slip"),
        "time": dict(cfl=0.1, t_end=2.5, sample_times=[1.0, 1.5, 1.75, 2.0, 2.25, 2.5]),
        "physics": dict(rho1=3.0, rho2=1.0, sigma=None, re=1000.0, g=[0.0, -2.0]),
        "phase": dict(eps_factor=1.28, gamma_factor=1e-3, sigma_factor=0.01),
    },
    "converge": {
        "mesh": dict(bounds=[0.0, 1.0, 0.0, 1.0], periodic_x=True, periodic_y=True),
        "physics": dict(rho1=100.0, rho2=10.0, nu1=10.0, nu2=1.0, sigma=10.0, g=[0.0, 0.0]),
        "phase": dict(eps=0.04, gamma_factor=1e-3),
    },
}


def _field_types(cls):
    return {f.name: f.type for f in fields(cls)}


def _parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        return t[1:-1]
    return t


def _coerce(value, typ: str, key: str, line: int):
    """Check a parsed value against a dataclass annotation string."""
    optional = "None" in typ
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{key} may not be empty", line)
    if typ.startswith("list"):
        return value
    if isinstance(value, list):
        raise ConfigError(f"{key} expects a single value, got a list", line)
    if typ.startswith("bool"):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} expects true/false, got {value!r}", line)
    if typ.startswith("int"):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key} expects an integer, got {value!r}", line)
    if typ.startswith("float"):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{key} expects a number, got {value!r}", line)
    if typ.startswith("str"):
        if isinstance(value, str):
            return value
        raise ConfigError(f"{key} expects a string, got {value!r}", line)
    raise ConfigError(f"{key}: unsupported type {typ}", line)


def read_entries(text: str):
    """[(section, key, raw value, line number)] in file order."""
    out, section = [], None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if section is None:
            raise ConfigError("key outside any [section]", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        out.append((section, key, val, lineno))
    return out


def parse_config(text: str) -> RunConfig:
    entries = read_entries(text)
    seen = {}
    kind = None
    for sec, key, val, ln in entries:
        if (sec, key) in seen:
            raise ConfigError(f"duplicate key {sec}.{key} (first set on line {seen[sec, key]})", ln)
        seen[sec, key] = ln
        if sec == "problem":
            if key != "kind":
                raise ConfigError(f"unknown key problem.{key}", ln)
            kind = _parse_scalar(val)
            if kind not in KINDS:
                raise ConfigError(f"problem.kind must be one of {', '.join(KINDS)}, got {kind!r}", ln)
    if kind is None:
        raise ConfigError("missing required key problem.kind")

    cfg = RunConfig(kind=kind)
    for sec, overrides in CASE_DEFAULTS[kind].items():
        obj = getattr(cfg, _ATTR.get(sec, sec))
        for k, v in overrides.items():
            setattr(obj, k, list(v) if isinstance(v, list) else v)

    lines = {}
    for sec, key, val, ln in entries:
        if sec == "problem":
            continue
        cls = SECTIONS[sec]
        types = _field_types(cls)
        if key not in types:
            raise ConfigError(f"unknown key {sec}.{key}", ln)
        if "," in val:
            value = [_parse_scalar(v) for v in val.split(",") if v.strip()]
            if not types[key].startswith("list"):
                raise ConfigError(f"{sec}.{key} expects a single value, got a list", ln)
            if any(not isinstance(v, (int, float)) or isinstance(v, bool) for v in value):
                raise ConfigError(f"{sec}.{key} expects a list of numbers", ln)
        else:
            value = _parse_scalar(val)
            if types[key].startswith("list") and value is not None:
                if not isinstance(value, (int, float)) or isinstance(value, bool):
                    raise ConfigError(f"{sec}.{key} expects a list of numbers", ln)
                value = [value]
        setattr(getattr(cfg, _ATTR.get(sec, sec)), key, _coerce(value, types[key], f"{sec}.{key}", ln))
        lines[sec, key] = ln

    # a value given in the file for one of cfl/dt replaces the case default for the other
    if ("time", "cfl") in lines and ("time", "dt") not in lines:
        cfg.time.dt = None
    elif ("time", "dt") in lines and ("time", "cfl") not in lines:
        cfg.time.cfl = None
    _validate(cfg, lines)
    return cfg


def _validate(cfg: RunConfig, lines: dict):
    def err(msg, *keys):
        ln = next((lines[k] for k in keys if k in lines), None)
        raise ConfigError(msg, ln)

    m, d, t, p, ph = cfg.mesh, cfg.disc, cfg.time, cfg.physics, cfg.phase
    if len(m.bounds) != 4 or not (m.bounds[1] > m.bounds[0] and m.bounds[3] > m.bounds[2]):
        err("mesh.bounds must be x0, x1, y0, y1 with x1 > x0 and y1 > y0", ("mesh", "bounds"))
    if cfg.kind != "converge":
        if m.resolution is not None:
            if m.resolution < 1:
                err("mesh.resolution must be >= 1", ("mesh", "resolution"))
            lx, ly = m.bounds[1] - m.bounds[0], m.bounds[3] - m.bounds[2]
            nx, ny = lx * m.resolution, ly * m.resolution
            if abs(nx - round(nx)) > 1e-9 or abs(ny - round(ny)) > 1e-9:
                err("mesh.resolution does not divide the domain into whole cells", ("mesh", "resolution"))
            if ("mesh", "nx") not in lines:
                m.nx = int(round(nx))
            if ("mesh", "ny") not in lines:
                m.ny = int(round(ny))
        if m.nx is None or m.ny is None:
            raise ConfigError("missing required key mesh.resolution (or mesh.nx and mesh.ny)")
        if m.nx < 1 or m.ny < 1:
            err("mesh.nx and mesh.ny must be >= 1", ("mesh", "nx"), ("mesh", "ny"))
    for side in ("bottom", "right", "top", "left"):
        if getattr(m, side) not in WALLS:
            err(f"mesh.{side} must be one of {', '.join(WALLS)}", ("mesh", side))
    if d.k < 1:
        err("discretization.k must be >= 1", ("discretization", "k"))
    if not d.alpha > 0:
        err("discretization.alpha must be positive", ("discretization", "alpha"))
    if d.quad_order is not None and d.quad_order < d.k + 1:
        err("discretization.quad_order must be >= k + 1", ("discretization", "quad_order"))
    if d.contour_m is not None and d.contour_m < 2:
        err("discretization.contour_m must be >= 2", ("discretization", "contour_m"))
    if d.region_points is not None and d.region_points < 1:
        err("discretization.region_points must be >= 1", ("discretization", "region_points"))
    if d.solver not in ("auto", "pardiso", "superlu"):
        err("discretization.solver must be auto, pardiso or superlu", ("discretization", "solver"))
    if cfg.kind != "converge":
        if (t.cfl is None) == (t.dt is None):
            err("set exactly one of time.cfl and time.dt", ("time", "cfl"), ("time", "dt"))
        for name in ("cfl", "dt"):
            v = getattr(t, name)
            if v is not None and not v > 0:
                err(f"time.{name} must be positive", ("time", name))
        if not t.t_end > 0:
            err("time.t_end must be positive", ("time", "t_end"))
    if not t.dt_max > 0 or not t.v_floor > 0:
        err("time.dt_max and time.v_floor must be positive", ("time", "dt_max"), ("time", "v_floor"))
    if p.re is not None:
        if not p.re > 0:
            err("physics.re must be positive", ("physics", "re"))
        p.nu1 = p.nu2 = math.sqrt(2.0) / p.re
    for name in ("rho1", "rho2", "nu1", "nu2"):
        if not getattr(p, name) > 0:
            err(f"physics.{name} must be positive", ("physics", name))
    if len(p.g) != 2:
        err("physics.g must have two components", ("physics", "g"))
    if ph.sigma_factor is None and (p.sigma is None or p.sigma < 0):
        err("physics.sigma must be non-negative", ("physics", "sigma"))
    if ph.sigma_factor is not None and ph.sigma_factor < 0:
        err("phase.sigma_factor must be non-negative", ("phase", "sigma_factor"))
    if ph.eps is not None and not ph.eps > 0:
        err("phase.eps must be positive", ("phase", "eps"))
    if not ph.eps_factor > 0 or not ph.gamma_factor > 0:
        err("phase.eps_factor and phase.gamma_factor must be positive",
            ("phase", "eps_factor"), ("phase", "gamma_factor"))
    if ph.mobility_floor < 0:
        err("phase.mobility_floor must be non-negative", ("phase", "mobility_floor"))
    c = cfg.convergence
    if cfg.kind == "converge":
        if len(c.resolutions) < 2 or any(int(r) != r or r < 1 for r in c.resolutions):
            err("convergence.resolutions needs at least two positive integers", ("convergence", "resolutions"))
        if not c.degrees or any(int(q) != q or q < 1 for q in c.degrees):
            err("convergence.degrees must be positive integers", ("convergence", "degrees"))
        c.resolutions = [int(r) for r in c.resolutions]
        c.degrees = [int(q) for q in c.degrees]
        if not c.t_end > 0:
            err("convergence.t_end must be positive", ("convergence", "t_end"))
    if cfg.output.vtk_every < 0 or cfg.output.series_every < 1:
        err("output.vtk_every must be >= 0 and output.series_every >= 1",
            ("output", "vtk_every"), ("output", "series_every"))


def dump_config(cfg: RunConfig) -> str:
    """Resolved configuration in the input format (re-parses to the same RunConfig)."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if v is None:
            return "none"
        if isinstance(v, list):
            return ", ".join(fmt(x) for x in v) if len(v) != 1 else fmt(v[0]) + ","
        if isinstance(v, float):
            return repr(v)
        return str(v)

    out = ["[problem]", f"kind = {cfg.kind}"]
    for sec in SECTIONS:
        if sec == "problem":
            continue
        out += ["", f"[{sec}]"]
        for k, v in asdict(getattr(cfg, _ATTR.get(sec, sec))).items():
            if isinstance(v, list) and not v:
                continue
            out.append(f"{k} = {fmt(v)}")
    return "\n".join(out) + "\n"
