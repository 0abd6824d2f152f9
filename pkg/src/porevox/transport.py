"""Implicit cell-centred transport of a dissolved species with reactive walls.

Each fluid cell carries one unknown.  Rows are written in concentration
units, ``c - c^k + (dt/dx) * sum(outward face fluxes) = 0``, with fluxes per
unit area: first-order upwind advection from the staggered face velocities
and central diffusion ``(c_l - c_r)/(Pe dx)``.  Reactive faces use the
linearised Robin relation from :mod:`porevox.kinetics`, eliminated into the
cell row, and are iterated to self-consistency each step so that the
adsorbed increment equals the diffusive flux the cell row used.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import VoxelGrid, reactive_face_arrays
from .kinetics import Isotherm, eliminate_face, face_concentration, robin_face_coefficients
from .linalg import LinearSolverError, SparseSystem, bicgstab, make_preconditioner

log = logging.getLogger(__name__)

NEGATIVE_ABORT = -1e-12
BOUNDARY_MODES = ("open", "closed")


class TransportError(RuntimeError):
    pass


@dataclass
class TransportOptions:
    linear_tol: float = 1e-12
    abs_tol: float = 1e-14        # on the concentration-unit residual norm
    max_iter: int = 5000
    preconditioner: str = "ilu"
    newton_tol: float = 1e-13     # face-concentration change between Robin iterations
    newton_max: int = 30
    div_tol: float = 1e-8
    boundary: str = "open"        # "closed" seals inlet and outlet

    def __post_init__(self):
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"boundary must be one of {BOUNDARY_MODES}, got {self.boundary!r}")


@dataclass
class TransportState:
    c: np.ndarray                 # per fluid cell
    m: np.ndarray                 # per reactive face
    t: float = 0.0
    step: int = 0
    c_face: np.ndarray | None = None
    clamped_c: int = 0
    clamped_m: int = 0

    def copy(self) -> "TransportState":
        return replace(self, c=self.c.copy(), m=self.m.copy(),
                       c_face=None if self.c_face is None else self.c_face.copy())


@dataclass
class MassBudget:
    dissolved: float
    adsorbed: float
    influx: float = 0.0           # cumulative
    outflux: float = 0.0          # cumulative
    history: list = field(default_factory=list)

    def record(self, step: int, t: float):
        self.history.append((step, t, self.dissolved, self.adsorbed, self.influx, self.outflux))

    def imbalance(self, i: int) -> float:
        """|change in stored mass - net inflow| over step ``i`` relative to the stored total."""
        _, _, d0, a0, in0, out0 = self.history[i - 1]
        _, _, d1, a1, in1, out1 = self.history[i]
        change = (d1 + a1) - (d0 + a0)
        net = (in1 - in0) - (out1 - out0)
        return abs(change - net) / max(d1 + a1, d0 + a0, 1e-300)


@dataclass(eq=False)
class TransportProblem:
    """Static operators for one grid, flow field, Peclet number and timestep."""

    grid: VoxelGrid
    pe: float
    dx: float
    dt: float
    isotherms: tuple[Isotherm, ...]
    row_of: np.ndarray            # flat x-fastest index -> row, -1 for solid
    cells: np.ndarray             # row -> flat index
    K: sp.csr_matrix              # transport operator (rows scaled by dt/dx)
    source: np.ndarray            # constant boundary inflow (scaled)
    inlet_rows: np.ndarray
    inlet_up: np.ndarray          # positive part of inflow velocity
    inlet_down: np.ndarray        # negative part
    outlet_rows: np.ndarray
    outlet_u: np.ndarray
    face_rows: np.ndarray         # reactive face -> row
    face_btype: np.ndarray
    faces: object                 # ReactiveFaces
    options: TransportOptions
    # preconditioner reused across solves while it stays effective
    _prec: object = field(default=None, repr=False)
    _prec_iters: int = field(default=0, repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.face_rows)

    @property
    def k(self) -> float:
        return self.dt / self.dx

    @property
    def g_half(self) -> float:
        """Half-cell diffusive conductance 2/(Pe dx)."""
        return 0.0 if math.isinf(self.pe) else 2.0 / (self.pe * self.dx)

    def cell_field(self, values, fill=0.0) -> np.ndarray:
        out = np.full(self.grid.n_voxels, fill, dtype=float)
        out[self.cells] = values
        return out.reshape(self.grid.dims, order="F")

    def dissolved(self, c) -> float:
        return float(np.sum(c)) * self.dx ** 3

    def adsorbed(self, m) -> float:
        return float(np.sum(m)) * self.dx ** 2


def _face_velocity(flow, axis: int, dims) -> np.ndarray:
    if flow is None:
        shape = list(dims)
        shape[axis] += 1
        return np.zeros(shape)
    return np.asarray(flow.u[axis], dtype=float)


def _check_divergence(flow, grid: VoxelGrid, tol: float):
    if flow is None:
        return
    div = np.abs(flow.divergence()[grid.fluid])
    worst = float(div.max(initial=0.0))
    if worst > tol:
        raise TransportError(f"flow field is not divergence-free (max |div| = {worst:.3e} > {tol:.1e})")


def build_problem(grid: VoxelGrid, flow, pe: float, dt: float, isotherms: Sequence[Isotherm] = (),
                  options: TransportOptions | None = None, dx: float | None = None) -> TransportProblem:
    """Assemble the state-independent part of the transport system.

    ``flow`` may be None for a stagnant fluid.  ``dx`` defaults to the flow
    field spacing.
    """
    opts = options or TransportOptions()
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not pe > 0:
        raise ValueError("Pe must be positive")
    if dx is None:
        if flow is None:
            raise ValueError("dx is required without a flow field")
        dx = flow.dx
    if opts.boundary == "closed" and flow is not None:
        if any(float(np.max(np.abs(u), initial=0.0)) > 0 for u in flow.u):
            raise TransportError("closed boundaries need a stagnant fluid")
    _check_divergence(flow, grid, opts.div_tol)

    fluid = grid.fluid
    flat = fluid.ravel(order="F")
    cells = np.flatnonzero(flat)
    row_of = np.full(flat.size, -1, dtype=np.int64)
    row_of[cells] = np.arange(len(cells))
    rows3 = row_of.reshape(grid.dims, order="F")
    n = len(cells)
    k = dt / dx
    diff = 0.0 if math.isinf(pe) else 1.0 / (pe * dx)
    g_half = 2.0 * diff

    I, J, V = [np.arange(n)], [np.arange(n)], [np.zeros(n)]
    source = np.zeros(n)
    a = grid.flow_axis
    inlet_rows = outlet_rows = np.zeros(0, dtype=np.int64)
    inlet_up = inlet_down = outlet_u = np.zeros(0)
    for ax in range(3):
        u = _face_velocity(flow, ax, grid.dims)
        nax = grid.dims[ax]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax], hi[ax] = slice(0, nax - 1), slice(1, nax)
        both = fluid[tuple(lo)] & fluid[tuple(hi)]
        rl = rows3[tuple(lo)][both]
        ru = rows3[tuple(hi)][both]
        uf = u[tuple(hi)][both]  # face i+1/2 sits at u index i+1
        up, un = np.maximum(uf, 0.0), np.minimum(uf, 0.0)
        I += [rl, rl, ru, ru]
        J += [rl, ru, rl, ru]
        V += [k * (up + diff), k * (un - diff), -k * (up + diff), -k * (un - diff)]
        if ax != a or opts.boundary == "closed":
            continue
        first = np.take(fluid, 0, axis=ax)
        inlet_rows = np.take(rows3, 0, axis=ax)[first]
        uin = np.take(u, 0, axis=ax)[first]
        inlet_up, inlet_down = np.maximum(uin, 0.0), np.minimum(uin, 0.0)
        I.append(inlet_rows)
        J.append(inlet_rows)
        V.append(k * (-inlet_down + g_half))
        np.add.at(source, inlet_rows, k * (inlet_up + g_half))
        last = np.take(fluid, nax - 1, axis=ax)
        outlet_rows = np.take(rows3, nax - 1, axis=ax)[last]
        outlet_u = np.take(u, nax, axis=ax)[last]
        I.append(outlet_rows)
        J.append(outlet_rows)
        V.append(k * outlet_u)
    K = sp.coo_matrix((np.concatenate(V), (np.concatenate(I), np.concatenate(J))), shape=(n, n)).tocsr()
    K.sum_duplicates()
    K.sort_indices()

    faces = reactive_face_arrays(grid)
    isos = tuple(isotherms)
    if len(faces) and len(isos) and faces.btype.max() >= len(isos):
        raise ValueError(f"geometry has boundary type {int(faces.btype.max())} but only {len(isos)} isotherms")
    return TransportProblem(grid, pe, dx, dt, isos, row_of, cells, K, source, inlet_rows, inlet_up, inlet_down,
                            outlet_rows, outlet_u, row_of[faces.cell], faces.btype.astype(np.int64), faces, opts)


def initial_state(problem: TransportProblem, c0=0.0, m0=0.0) -> TransportState:
    c = np.broadcast_to(np.asarray(c0, dtype=float), (problem.n_cells,)).copy()
    m = np.broadcast_to(np.asarray(m0, dtype=float), (problem.n_faces,)).copy()
    if np.any(c < 0) or np.any(m < 0):
        raise ValueError("initial concentrations must be nonnegative")
    return TransportState(c, m, 0.0, 0, c[problem.face_rows].copy())


def _isotherm_for(problem: TransportProblem, btype: int) -> Isotherm:
    if btype < len(problem.isotherms):
        return problem.isotherms[btype]
    return Isotherm.inert()


def robin_terms(problem: TransportProblem, c_lin, m_k):
    """Per-face ``(diag, const, a_face, a_cell, rhs)`` linearised about face values ``c_lin``."""
    nf = problem.n_faces
    a_face, a_cell, rhs = np.empty(nf), np.empty(nf), np.empty(nf)
    for b in np.unique(problem.face_btype):
        sel = problem.face_btype == b
        iso = _isotherm_for(problem, int(b))
        if iso.reactive:
            a_face[sel], a_cell[sel], rhs[sel] = robin_face_coefficients(
                iso, c_lin[sel], m_k[sel], problem.dt, problem.pe, problem.dx)
        else:
            a_face[sel], a_cell[sel], rhs[sel] = -problem.g_half, problem.g_half, 0.0
    diag, const = eliminate_face(a_face, a_cell, rhs)
    return diag, const, a_face, a_cell, rhs


def assemble_transport_system(problem: TransportProblem, state: TransportState, c_lin=None) -> SparseSystem:
    """Full system ``A c^{k+1} = b`` with the Robin faces linearised about ``c_lin``.

    ``c_lin`` defaults to the face concentrations stored in ``state``.
    """
    A, b, _ = _system(problem, state, state.c_face if c_lin is None else c_lin)
    return SparseSystem(A, b)


def _system(problem: TransportProblem, state: TransportState, c_lin):
    n = problem.n_cells
    k = problem.k
    A = (sp.identity(n, format="csr") + problem.K).tocsr()
    b = state.c + problem.source
    robin = None
    if problem.n_faces:
        robin = robin_terms(problem, c_lin, state.m)
        diag, const = robin[0], robin[1]
        wall_diag = np.bincount(problem.face_rows, weights=k * diag, minlength=n)
        b = b - np.bincount(problem.face_rows, weights=k * const, minlength=n)
        A = (A + sp.diags(wall_diag, format="csr")).tocsr()
    A.sort_indices()
    return A, b, robin


def _solve(problem: TransportProblem, A, b, c_k, step: int) -> np.ndarray:
    opts = problem.options
    rhs = b - A @ c_k
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return c_k.copy()
    tol = min(max(opts.linear_tol, opts.abs_tol / bnorm), 0.5)
    try:
        fresh = problem._prec is None
        if fresh:
            problem._prec = make_preconditioner(A, opts.preconditioner)
        delta, rep = bicgstab(SparseSystem(A, rhs), None, tol=tol, max_iter=opts.max_iter,
                              preconditioner=problem._prec)
        if not fresh and (not rep.converged or rep.iterations > 2 * problem._prec_iters + 10):
            # the matrix has drifted from the one the preconditioner was built for
            problem._prec = make_preconditioner(A, opts.preconditioner)
            fresh = True
            delta, rep = bicgstab(SparseSystem(A, rhs), delta, tol=tol, max_iter=opts.max_iter,
                                  preconditioner=problem._prec)
        if fresh:
            problem._prec_iters = rep.iterations
    except LinearSolverError as exc:
        raise TransportError(f"linear solve failed at step {step + 1}: {exc}") from exc
    # stalls at round-off are accepted if the residual is still tiny in absolute terms
    if not rep.converged and rep.residual > max(1e3 * opts.abs_tol, 1e-10 * bnorm):
        raise TransportError(f"linear solve did not converge at step {step + 1}: "
                             f"residual {rep.residual:.3e} (||b|| = {bnorm:.3e})")
    return c_k + delta


def advance_step(problem: TransportProblem, state: TransportState, budget: MassBudget | None = None) -> TransportState:
    """One implicit Euler step of the dissolved and adsorbed concentrations."""
    k = problem.k
    dt = problem.dt
    c_lin = state.c_face if state.c_face is not None else state.c[problem.face_rows]
    nonlinear = any(_isotherm_for(problem, int(b)).variant in ("langmuir", "frumkin")
                    for b in np.unique(problem.face_btype))
    c_new = state.c
    robin = None
    for it in range(problem.options.newton_max if nonlinear else 1):
        A, b, robin = _system(problem, state, c_lin)
        c_new = _solve(problem, A, b, state.c, state.step)
        if robin is None:
            break
        c_face = face_concentration(robin[2], robin[3], robin[4], c_new[problem.face_rows])
        change = float(np.max(np.abs(c_face - c_lin), initial=0.0))
        if not nonlinear or change <= problem.options.newton_tol * max(1.0, float(np.max(np.abs(c_face)))):
            break
        c_lin = np.maximum(c_face, 0.0)
    else:
        log.warning("reactive-face iteration did not settle at step %d (change %.3e)", state.step + 1, change)

    clamped_c = state.clamped_c
    worst = float(c_new.min(initial=0.0))
    if worst < NEGATIVE_ABORT:
        raise TransportError(f"negative concentration {worst:.3e} at step {state.step + 1}")
    neg = c_new < 0
    if neg.any():
        clamped_c += int(neg.sum())
    m_new = state.m
    c_face = state.c_face
    clamped_m = state.clamped_m
    if robin is not None:
        diag, const = robin[0], robin[1]
        flux = diag * c_new[problem.face_rows] + const   # outward, per unit area
        m_new = state.m + dt * flux
        c_face = np.maximum(face_concentration(robin[2], robin[3], robin[4], c_new[problem.face_rows]), 0.0)
        negm = m_new < 0
        if negm.any():
            clamped_m += int(negm.sum())
    if budget is not None:
        dx2 = problem.dx ** 2
        cin = c_new[problem.inlet_rows]
        influx = dt * dx2 * float(np.sum(problem.inlet_up + problem.inlet_down * cin + problem.g_half * (1.0 - cin)))
        outflux = dt * dx2 * float(np.sum(problem.outlet_u * c_new[problem.outlet_rows]))
        budget.influx += influx
        budget.outflux += outflux
        budget.dissolved = problem.dissolved(c_new)
        budget.adsorbed = problem.adsorbed(m_new)
        budget.record(state.step + 1, (state.step + 1) * dt)
    # clamping happens after the budget so that it reports the solver's own balance
    c_new = np.where(neg, 0.0, c_new)
    if robin is not None:
        m_new = np.maximum(m_new, 0.0)
    return TransportState(c_new, m_new, (state.step + 1) * dt, state.step + 1, c_face, clamped_c, clamped_m)


def new_budget(problem: TransportProblem, state: TransportState) -> MassBudget:
    b = MassBudget(problem.dissolved(state.c), problem.adsorbed(state.m))
    b.record(state.step, state.t)
    return b


@dataclass
class TransportRun:
    snapshots: list[TransportState]
    budget: MassBudget
    final: TransportState


def n_steps(t_end: float, dt: float) -> int:
    """Number of steps to reach ``t_end``; ``t_end`` within 1e-9 of a multiple of ``dt`` counts exactly."""
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    q = t_end / dt
    return int(round(q)) if abs(q - round(q)) < 1e-9 * max(1.0, q) else int(math.ceil(q))


def run_transport(problem: TransportProblem, state: TransportState, t_end: float, save_every: float | None = None,
                  callback=None) -> TransportRun:
    """March to ``t_end`` (dimensionless), keeping snapshots every ``save_every``.

    Snapshots are taken after every ``save_every`` worth of steps and after
    the final step; with ``t_end = 0`` the initial state is the only snapshot.
    ``callback(state)`` is called after each step.
    """
    q = n_steps(t_end, problem.dt)
    every = q if not save_every else max(1, int(round(save_every / problem.dt)))
    budget = new_budget(problem, state)
    if q == 0:
        return TransportRun([state.copy()], budget, state)
    snaps = []
    for i in range(q):
        state = advance_step(problem, state, budget)
        if callback is not None:
            callback(state)
        if state.step % every == 0 or i == q - 1:
            snaps.append(state.copy())
    return TransportRun(snaps, budget, state)


def adsorbed_per_cell(problem: TransportProblem, m) -> np.ndarray:
    """Sum of adjacent-face m dx^2 per fluid cell, divided by the cell volume."""
    per_row = np.bincount(problem.face_rows, weights=np.asarray(m, dtype=float), minlength=problem.n_cells)
    return per_row * problem.dx ** 2 / problem.dx ** 3
