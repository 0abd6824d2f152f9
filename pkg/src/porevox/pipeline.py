"""End-to-end run: load, pad, groups, steady flow, transport, export."""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import SECTION_DEFAULT, ConfigError, SimulationConfig
from .dimensionless import DimensionlessGroups, PhysicalParams, compute_groups, redimensionalize
from .flow import FlowField, FlowOptions, build_operators, flux_balance, solve_steady_flow
from .geometry import MaterialMap, VoxelGrid, content_hash, load_geometry, pad_inlet_outlet, porosity
from .io import write_budget_csv, write_manifest, write_residual_csv, write_surface_csv, write_vtk
from .kinetics import Isotherm
from .linalg import SparseSystem, write_matrix_market
from .transport import (TransportOptions, TransportProblem, TransportRun, adsorbed_per_cell,
                        assemble_transport_system, build_problem, initial_state, n_steps, run_transport)

log = logging.getLogger(__name__)

STAGES = ("load", "pad", "groups", "flow", "transport", "export")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class Setup:
    """Everything derived from the config before any solve."""

    config: SimulationConfig
    grid: VoxelGrid               # padded
    raw_hash: str
    L: float
    dx_hat: float
    groups: DimensionlessGroups
    isotherms: tuple[Isotherm, ...]
    material_map: MaterialMap
    dt_hat: float
    t_end_hat: float
    warnings: list[str] = field(default_factory=list)


@dataclass
class PipelineResult:
    setup: Setup
    flow: FlowField | None = None
    problem: TransportProblem | None = None
    run: TransportRun | None = None
    outputs: list[Path] = field(default_factory=list)
    manifest: Path | None = None


def material_layout(cfg: SimulationConfig) -> tuple[MaterialMap, list]:
    """Boundary-type index per configured code; unsectioned codes share the default type.

    Without a ``[material.default]`` section an inert default type is appended.
    """
    codes = cfg.material_codes
    explicit = {c: i for i, c in enumerate(codes) if c != SECTION_DEFAULT}
    if SECTION_DEFAULT in cfg.materials:
        default = codes.index(SECTION_DEFAULT)
        specs = [cfg.materials[c] for c in codes]
    else:
        default = len(codes)
        specs = [cfg.materials[c] for c in codes] + [None]
    return MaterialMap(explicit, default), specs


def _physical(cfg: SimulationConfig, L: float, specs) -> PhysicalParams:
    def pick(spec, dim, hat, scale, fallback):
        if spec is None:
            return fallback
        if getattr(spec, dim) is not None:
            return getattr(spec, dim)
        if getattr(spec, hat) is not None:
            return getattr(spec, hat) * scale
        return fallback

    cl = cfg.c_in * L
    return PhysicalParams(
        L=L, rho=cfg.rho, mu=cfg.mu, V_in=cfg.V_in, D=cfg.D, c_in=cfg.c_in, P_out=cfg.P_out,
        kappa_a=tuple(pick(s, "kappa_a", "da_a", cfg.V_in, 0.0) for s in specs),
        kappa_d=tuple(pick(s, "kappa_d", "da_d", cfg.V_in / L, 0.0) for s in specs),
        m_inf=tuple(pick(s, "m_inf", "m_inf_hat", cl, math.inf) for s in specs),
        slip_beta=tuple(pick(s, "slip", "slip_hat", L, 0.0) for s in specs),
        beta_frumkin=cfg.beta_frumkin, T=cfg.T)


def resolve_groups(cfg: SimulationConfig, L: float, specs) -> DimensionlessGroups:
    """Groups from the physical inputs; directly given dimensionless values are kept verbatim."""
    g = compute_groups(_physical(cfg, L, specs), require_finite_pe=False)
    da_a, da_d, m_hat, slip = list(g.da_a), list(g.da_d), list(g.m_inf_hat), list(g.slip_beta_hat)
    for i, s in enumerate(specs):
        if s is None:
            continue
        if s.da_a is not None:
            da_a[i] = s.da_a
        if s.da_d is not None:
            da_d[i] = s.da_d
        if s.m_inf_hat is not None:
            m_hat[i] = s.m_inf_hat
        if s.slip_hat is not None:
            slip[i] = s.slip_hat
    return dataclasses.replace(g, da_a=tuple(da_a), da_d=tuple(da_d), m_inf_hat=tuple(m_hat),
                               slip_beta_hat=tuple(slip))


def isotherms_for(groups: DimensionlessGroups, specs) -> tuple[Isotherm, ...]:
    out = []
    for i, s in enumerate(specs):
        variant = "inert" if s is None else s.isotherm
        if variant == "inert":
            if groups.da_a[i] or groups.da_d[i]:
                raise ConfigError(f"boundary type {i} is inert but has rate constants")
            out.append(Isotherm.inert())
        elif variant == "henry":
            out.append(Isotherm.henry(groups.da_a[i], groups.da_d[i]))
        elif variant == "langmuir":
            out.append(Isotherm.langmuir(groups.da_a[i], groups.da_d[i], groups.m_inf_hat[i]))
        else:
            out.append(Isotherm.frumkin(groups.da_a[i], groups.da_d[i], groups.m_inf_hat[i], groups.beta_hat))
    return tuple(out)


def prepare(cfg: SimulationConfig) -> Setup:
    stage = "load"
    try:
        mmap, specs = material_layout(cfg)
        raw = cfg.geometry.read_bytes()
        grid = load_geometry(cfg.geometry, mmap, voxel_size=cfg.voxel_size, flow_axis=cfg.flow_axis)
        warnings = []
        present = set(np.unique(grid.labels).tolist())
        for code in cfg.material_codes:
            if code != SECTION_DEFAULT and code not in present:
                msg = f"material {code} is configured but absent from the geometry"
                log.warning(msg)
                warnings.append(msg)
        stage = "pad"
        unpadded_extent = grid.dims[grid.flow_axis] * cfg.voxel_size
        grid = pad_inlet_outlet(grid, cfg.padding)
        grid.validate()
        stage = "groups"
        L = cfg.L if cfg.L is not None else unpadded_extent
        groups = resolve_groups(cfg, L, specs)
        if groups.infinite_pe:
            raise ConfigError("D = 0 gives an infinite Peclet number; transport needs D > 0")
        isos = isotherms_for(groups, specs)
        t_scale = L / cfg.V_in
        dt_hat = cfg.dt_hat if cfg.dt_hat is not None else cfg.dt / t_scale
        t_end_hat = cfg.t_end_hat if cfg.t_end_hat is not None else cfg.t_end / t_scale
    except Exception as exc:
        raise PipelineError(stage, exc) from exc
    return Setup(cfg, grid, content_hash(raw), L, cfg.voxel_size / L, groups, isos, mmap, dt_hat, t_end_hat,
                 warnings)


def flow_options(cfg: SimulationConfig) -> FlowOptions:
    stokes = None if cfg.stokes_mode == "auto" else cfg.stokes_mode == "true"
    return FlowOptions(tol_steady=cfg.tol_steady, div_tol=cfg.div_tol, max_steps=cfg.flow_max_steps,
                       stokes=stokes, lateral_bc=cfg.lateral_bc, dt=cfg.flow_dt_hat,
                       linear_tol=cfg.flow_linear_tol, linear_max_iter=cfg.linear_max_iter,
                       anderson=cfg.anderson)


def transport_options(cfg: SimulationConfig) -> TransportOptions:
    return TransportOptions(linear_tol=cfg.linear_tol, max_iter=cfg.linear_max_iter,
                            preconditioner=cfg.preconditioner, div_tol=cfg.div_tol, boundary=cfg.boundary)


def _flow_fields(setup: Setup, flow: FlowField) -> dict:
    sc = setup.groups.scales
    fluid = setup.grid.fluid
    p = np.where(fluid, flow.p, 0.0)
    v = flow.cell_velocity() * fluid[..., None]
    if setup.config.dimensional_mode:
        p = np.where(fluid, redimensionalize(p, "pressure", sc), 0.0)
        v = redimensionalize(v, "velocity", sc)
    return {"pressure": p, "velocity": v}


def _transport_fields(setup: Setup, problem: TransportProblem, c, m) -> dict:
    sc = setup.groups.scales
    conc = problem.cell_field(c)
    ads = problem.cell_field(adsorbed_per_cell(problem, m))
    if setup.config.dimensional_mode:
        # adsorbed per unit cell volume has the units of a concentration
        conc = redimensionalize(conc, "concentration", sc)
        ads = redimensionalize(ads, "concentration", sc)
    return {"concentration": conc, "adsorbed": ads}


def _manifest(result: PipelineResult, status: str, stage: str | None, error: str | None) -> dict:
    setup = result.setup
    cfg = setup.config
    g = setup.groups
    out = cfg.resolved()
    out.update({
        "porevox.version": __version__,
        "status": status,
        "partial": status != "ok",
        "failed_stage": stage,
        "error": error,
        "geometry.hash": setup.raw_hash,
        "geometry.dims": setup.grid.dims,
        "geometry.padding": setup.grid.padding,
        "geometry.porosity": porosity(setup.grid, exclude_padding=True),
        "geometry.n_fluid": setup.grid.n_fluid,
        "resolved.L": setup.L,
        "resolved.dx_hat": setup.dx_hat,
        "resolved.dt_hat": setup.dt_hat,
        "resolved.t_end_hat": setup.t_end_hat,
        "resolved.n_steps": n_steps(setup.t_end_hat, setup.dt_hat),
        "resolved.boundary_types": len(setup.isotherms),
        "resolved.isotherms": [iso.variant for iso in setup.isotherms],
        "groups.Re": g.Re,
        "groups.Pe": g.Pe,
        "groups.Da_a": g.da_a,
        "groups.Da_d": g.da_d,
        "groups.m_inf_hat": g.m_inf_hat,
        "groups.slip_beta_hat": g.slip_beta_hat,
        "groups.beta_hat": g.beta_hat,
        "warnings": len(setup.warnings),
        "outputs": [p.name for p in result.outputs],
    })
    if result.flow is not None:
        fin, fout = flux_balance(result.flow, setup.grid)
        out.update({"flow.steps": result.flow.steps, "flow.residual": result.flow.residual,
                    "flow.max_divergence": float(np.max(np.abs(result.flow.divergence()[setup.grid.fluid]),
                                                        initial=0.0)),
                    "flow.inlet_flux": fin, "flow.outlet_flux": fout})
    if result.run is not None:
        fin = result.run.final
        b = result.run.budget
        out.update({"transport.steps": fin.step, "transport.t_hat": fin.t,
                    "transport.snapshots": len(result.run.snapshots), "transport.reactive_faces": len(fin.m),
                    "transport.clamped_c": fin.clamped_c, "transport.clamped_m": fin.clamped_m,
                    "transport.dissolved": b.dissolved, "transport.adsorbed": b.adsorbed,
                    "transport.influx": b.influx, "transport.outflux": b.outflux})
    return out


def _finish(result: PipelineResult, status="ok", stage=None, error=None):
    out_dir = result.setup.config.output_dir
    result.manifest = write_manifest(_manifest(result, status, stage, error), out_dir / "manifest.txt")


def run_pipeline(cfg: SimulationConfig, flow_only: bool = False, output_dir: Path | None = None) -> PipelineResult:
    """Execute the configured run and write its artifacts.

    A failing stage raises PipelineError after a manifest marked partial has
    been written (when the output directory could be created).
    """
    if output_dir is not None:
        cfg = dataclasses.replace(cfg, output_dir=Path(output_dir))
    setup = prepare(cfg)
    result = PipelineResult(setup)
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = "flow"
    try:
        grid = setup.grid
        ops = build_operators(grid, setup.dx_hat, setup.groups.slip_beta_hat, cfg.lateral_bc)
        if cfg.dump_system:
            poisson = SparseSystem(-ops.poisson.tocsr(), np.zeros(ops.poisson.shape[0]))
            write_matrix_market(poisson, out_dir / "flow_poisson.mtx")
            result.outputs.append(out_dir / "flow_poisson.mtx")
        result.flow = solve_steady_flow(grid, setup.groups.Re, setup.dx_hat, setup.groups.slip_beta_hat,
                                        flow_options(cfg), ops)
        stage = "export"
        result.outputs.append(write_vtk(grid, out_dir / "flow.vtk", **_flow_fields(setup, result.flow)))
        result.outputs.append(write_residual_csv(result.flow.history, out_dir / "flow_residuals.csv"))
        if flow_only:
            _finish(result)
            return result

        stage = "transport"
        # sealed runs transport in a stagnant fluid
        tflow = None if cfg.boundary == "closed" else result.flow
        problem = build_problem(grid, tflow, setup.groups.Pe, setup.dt_hat, setup.isotherms,
                                transport_options(cfg), dx=setup.dx_hat)
        result.problem = problem
        state = initial_state(problem, cfg.c0_hat, cfg.m0_hat)
        if cfg.dump_system:
            write_matrix_market(assemble_transport_system(problem, state), out_dir / "transport_system.mtx")
            result.outputs.append(out_dir / "transport_system.mtx")
        save_every = cfg.save_every * setup.dt_hat if cfg.save_every else None
        result.run = run_transport(problem, state, setup.t_end_hat, save_every)

        stage = "export"
        m_scale = setup.groups.scales.factor("surface_concentration")
        for snap in result.run.snapshots:
            tag = f"{snap.step:06d}"
            fields = _flow_fields(setup, result.flow)
            fields.update(_transport_fields(setup, problem, snap.c, snap.m))
            result.outputs.append(write_vtk(grid, out_dir / f"snapshot_{tag}.vtk", **fields))
            result.outputs.append(write_surface_csv(problem.faces, snap.m, out_dir / f"surface_{tag}.csv",
                                                    grid.voxel_size, m_scale))
        result.outputs.append(write_budget_csv(result.run.budget.history, out_dir / "budget.csv"))
    except Exception as exc:
        _finish(result, "failed", stage, f"{type(exc).__name__}: {exc}")
        raise PipelineError(stage, exc) from exc
    _finish(result)
    return result
