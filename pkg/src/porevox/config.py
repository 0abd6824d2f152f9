"""``key = value`` simulation config with ``[material.N]`` sections.

Top-level keys set the geometry, physical parameters (SI units), time
stepping, solver tolerances and flags.  Each ``[material.N]`` section assigns
kinetics to solid code ``N``; ``[material.default]`` covers codes without a
section.  Rates may be given dimensionally (``kappa_a``, ``kappa_d``,
``m_inf``, ``slip``) or directly as groups (``da_a``, ``da_d``,
``m_inf_hat``, ``slip_hat``); the two forms cannot be mixed for one
quantity.  Unknown keys are errors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .kinetics import VARIANTS

SECTION_DEFAULT = "default"

# key -> (type, default); REQUIRED marks keys without a default
REQUIRED = object()
TOP_KEYS = {
    "geometry": (str, REQUIRED),
    "voxel_size": (float, REQUIRED),
    "flow_axis": (str, "z"),
    "padding": (int, 2),
    "L": (float, None),
    "rho": (float, REQUIRED),
    "mu": (float, REQUIRED),
    "V_in": (float, REQUIRED),
    "D": (float, REQUIRED),
    "c_in": (float, REQUIRED),
    "P_out": (float, 0.0),
    "T": (float, 293.15),
    "beta_frumkin": (float, 0.0),
    "dt": (float, None),
    "dt_hat": (float, None),
    "t_end": (float, None),
    "t_end_hat": (float, None),
    "save_every": (int, 0),
    "c0_hat": (float, 1.0),
    "m0_hat": (float, 0.0),
    "tol_steady": (float, 1e-6),
    "div_tol": (float, 1e-8),
    "flow_max_steps": (int, 2000),
    "flow_dt_hat": (float, None),
    "flow_linear_tol": (float, 1e-10),
    "anderson": (int, 8),
    "linear_tol": (float, 1e-12),
    "linear_max_iter": (int, 5000),
    "preconditioner": (str, "ilu"),
    "stokes_mode": (str, "auto"),
    "lateral_bc": (str, "wall"),
    "boundary": (str, "open"),
    "dimensional_mode": (bool, False),
    "dump_system": (bool, False),
    "deterministic": (bool, True),
    "threads": (int, 1),
    "output_dir": (str, "output"),
}

MATERIAL_KEYS = {
    "isotherm": (str, "inert"),
    "kappa_a": (float, None),
    "kappa_d": (float, None),
    "m_inf": (float, None),
    "slip": (float, None),
    "da_a": (float, None),
    "da_d": (float, None),
    "m_inf_hat": (float, None),
    "slip_hat": (float, None),
}
_PAIRS = (("kappa_a", "da_a"), ("kappa_d", "da_d"), ("m_inf", "m_inf_hat"), ("slip", "slip_hat"))


class ConfigError(ValueError):
    pass


def _convert(key: str, raw: str, typ, where: str):
    if typ is bool:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{where}: {key} expects true/false, got {raw!r}")
    if typ is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{where}: {key} expects an integer, got {raw!r}") from None
    if typ is float:
        if raw.lower() in ("inf", "infinity"):
            return math.inf
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{where}: {key} expects a number, got {raw!r}") from None
    return raw


@dataclass(frozen=True)
class MaterialSpec:
    """Kinetics and slip for one solid code (or the default)."""

    isotherm: str = "inert"
    kappa_a: float | None = None
    kappa_d: float | None = None
    m_inf: float | None = None
    slip: float | None = None
    da_a: float | None = None
    da_d: float | None = None
    m_inf_hat: float | None = None
    slip_hat: float | None = None

    def __post_init__(self):
        if self.isotherm not in VARIANTS:
            raise ConfigError(f"unknown isotherm {self.isotherm!r}; expected one of {VARIANTS}")
        for dim, hat in _PAIRS:
            if getattr(self, dim) is not None and getattr(self, hat) is not None:
                raise ConfigError(f"give either {dim} or {hat}, not both")


@dataclass(frozen=True)
class SimulationConfig:
    geometry: Path
    voxel_size: float
    rho: float
    mu: float
    V_in: float
    D: float
    c_in: float
    flow_axis: str = "z"
    padding: int = 2
    L: float | None = None
    P_out: float = 0.0
    T: float = 293.15
    beta_frumkin: float = 0.0
    dt: float | None = None
    dt_hat: float | None = None
    t_end: float | None = None
    t_end_hat: float | None = None
    save_every: int = 0
    c0_hat: float = 1.0
    m0_hat: float = 0.0
    tol_steady: float = 1e-6
    div_tol: float = 1e-8
    flow_max_steps: int = 2000
    flow_dt_hat: float | None = None
    flow_linear_tol: float = 1e-10
    anderson: int = 8
    linear_tol: float = 1e-12
    linear_max_iter: int = 5000
    preconditioner: str = "ilu"
    stokes_mode: str = "auto"
    lateral_bc: str = "wall"
    boundary: str = "open"
    dimensional_mode: bool = False
    dump_system: bool = False
    deterministic: bool = True
    threads: int = 1
    output_dir: Path = Path("output")
    materials: dict = field(default_factory=dict)   # code (int) or "default" -> MaterialSpec
    source: Path | None = None

    def __post_init__(self):
        if (self.dt is None) == (self.dt_hat is None):
            raise ConfigError("give exactly one of dt and dt_hat")
        if (self.t_end is None) == (self.t_end_hat is None):
            raise ConfigError("give exactly one of t_end and t_end_hat")
        end = self.t_end if self.t_end is not None else self.t_end_hat
        if not end > 0:
            raise ConfigError("t_end must be positive")
        step = self.dt if self.dt is not None else self.dt_hat
        if not step > 0:
            raise ConfigError("dt must be positive")
        if self.padding < 0 or self.save_every < 0 or self.threads < 1:
            raise ConfigError("padding and save_every must be >= 0, threads >= 1")
        if self.stokes_mode not in ("auto", "true", "false"):
            raise ConfigError("stokes_mode must be auto, true or false")
        if self.lateral_bc not in ("wall", "symmetry"):
            raise ConfigError("lateral_bc must be wall or symmetry")
        if self.boundary not in ("open", "closed"):
            raise ConfigError("boundary must be open or closed")
        if self.flow_axis.lower() not in ("x", "y", "z"):
            raise ConfigError("flow_axis must be x, y or z")

    @property
    def material_codes(self) -> list:
        """Sectioned codes in boundary-type order; ``default`` last if present."""
        codes = sorted(k for k in self.materials if k != SECTION_DEFAULT)
        if SECTION_DEFAULT in self.materials:
            codes.append(SECTION_DEFAULT)
        return codes

    def resolved(self) -> dict:
        """Every setting, defaults included, flattened for the manifest."""
        out = {}
        for f in fields(self):
            if f.name in ("materials", "source", "output_dir", "geometry"):
                continue
            out[f"config.{f.name}"] = getattr(self, f.name)
        out["config.geometry"] = self.geometry.name
        for code in self.material_codes:
            spec = self.materials[code]
            for f in fields(spec):
                out[f"material.{code}.{f.name}"] = getattr(spec, f.name)
        return out


def parse_config_text(text: str, base_dir: Path | None = None, source: Path | None = None) -> SimulationConfig:
    top: dict = {}
    materials: dict = {}
    section = None
    where_file = str(source) if source else "<config>"
    for lineno, line in enumerate(text.splitlines(), 1):
        where = f"{where_file}:{lineno}"
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {line!r}")
            name = line[1:-1].strip()
            kind, _, code = name.partition(".")
            if kind != "material" or not code:
                raise ConfigError(f"{where}: unknown section [{name}]")
            if code == SECTION_DEFAULT:
                section = SECTION_DEFAULT
            else:
                try:
                    section = int(code)
                except ValueError:
                    raise ConfigError(f"{where}: material code must be an integer, got {code!r}") from None
                if not 1 <= section <= 255:
                    raise ConfigError(f"{where}: material code must be in 1..255")
            if section in materials:
                raise ConfigError(f"{where}: duplicate section [{name}]")
            materials[section] = {}
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{where}: expected key = value, got {line!r}")
        key, value = key.strip(), value.strip()
        table, target = (TOP_KEYS, top) if section is None else (MATERIAL_KEYS, materials[section])
        if key not in table:
            scope = "top level" if section is None else f"[material.{section}]"
            raise ConfigError(f"{where}: unknown key {key!r} at {scope}")
        if key in target:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        target[key] = _convert(key, value, table[key][0], where)

    missing = [k for k, (_, d) in TOP_KEYS.items() if d is REQUIRED and k not in top]
    if missing:
        raise ConfigError(f"{where_file}: missing required key(s): {', '.join(missing)}")
    base = base_dir or Path(".")
    geometry = Path(top.pop("geometry"))
    if not geometry.is_absolute():
        geometry = base / geometry
    output_dir = Path(top.pop("output_dir", "output"))
    if not output_dir.is_absolute():
        output_dir = base / output_dir
    specs = {code: MaterialSpec(**vals) for code, vals in materials.items()}
    return SimulationConfig(geometry=geometry, output_dir=output_dir, materials=specs, source=source, **top)


def parse_config(path) -> SimulationConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), path.parent, path)
