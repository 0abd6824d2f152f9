"""Steady incompressible flow on a voxel MAC grid.

Velocities live on cell faces (component ``d`` on faces normal to axis
``d``), pressure at cell centres.  The steady state is reached by
pseudo-time marching with a fractional-step projection scheme: an implicit
viscous predictor with the lagged pressure gradient, a pressure-Poisson
projection, and a rotational pressure update.  The projection uses
``L_p = D G`` built from the same sparse divergence and gradient operators,
so the projected field is discretely divergence-free up to the Poisson
solver residual.

Only fluid cells connected to the outlet carry flow.  Inlet faces of cells
without a path to the outlet behave as walls.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .geometry import VoxelGrid, connectivity
from .linalg import SparseSystem, bicgstab

log = logging.getLogger(__name__)

# Stokes mode is switched on automatically below this Reynolds number
STOKES_RE = 1e-2
STOKES_DT_FACTOR = 0.05


class FlowError(RuntimeError):
    pass


@dataclass
class FlowOptions:
    tol_steady: float = 1e-6
    div_tol: float = 1e-8
    max_steps: int = 2000
    stokes: bool | None = None        # None: automatic from Re
    lateral_bc: str = "wall"          # or "symmetry"
    inflow: float = 1.0
    dt: float | None = None           # pseudo-timestep; default from geometry
    cfl: float = 0.5
    linear_tol: float = 1e-10
    linear_max_iter: int = 5000
    preconditioner: str | None = "jacobi"
    anderson: int = 8                 # mixing depth for the pseudo-time march, 0 disables


def slip_ghost_factor(beta_hat, dx):
    """Ghost-to-interior ratio for a tangential velocity half a cell from a wall.

    Imposes u_wall = beta * du/dn at the wall with u_wall the mean of ghost
    and interior values: beta = 0 gives -1 (no slip), beta -> inf gives +1.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    with np.errstate(invalid="ignore"):
        g = (beta_hat - 0.5 * dx) / (beta_hat + 0.5 * dx)
    return np.where(np.isinf(beta_hat), 1.0, g)


@dataclass
class _Neighbour:
    idx: np.ndarray    # unknown-face index of the neighbour, -1 if not an unknown
    coef: np.ndarray   # neighbour value = coef * own value + const when idx < 0
    const: np.ndarray


@dataclass
class _Component:
    shape: tuple[int, int, int]
    unknown: np.ndarray          # flat face ids of momentum unknowns
    fixed_value: np.ndarray      # full face array of prescribed values
    outlet: np.ndarray           # flat face ids of outlet faces (projectable, extrapolated)
    outlet_upstream: np.ndarray  # flat face ids one cell upstream of each outlet face
    neighbours: list[_Neighbour]
    laplacian: sp.csr_matrix     # on unknowns, includes ghost terms
    lap_const: np.ndarray


@dataclass(eq=False)
class FlowOperators:
    """Geometry-dependent operators for one grid / slip / boundary set-up."""

    grid: VoxelGrid
    dx: float
    active: np.ndarray            # cells that carry flow
    cell_id: np.ndarray           # active cell -> row index, -1 elsewhere
    comps: list[_Component]
    offsets: np.ndarray           # start of each component in the stacked face vector
    div: sp.csr_matrix            # active cells x all faces
    grad: sp.csr_matrix           # all faces x active cells (zero rows for non-projectable)
    projectable: np.ndarray       # global face ids
    poisson: sp.csr_matrix        # D G restricted to projectable faces
    inlet_faces: np.ndarray       # flat ids (flow-axis component) of active inlet faces
    inflow: float
    lateral_bc: str = "wall"

    @property
    def n_faces(self) -> int:
        return int(self.offsets[-1])


def _padded(a, fill):
    return np.pad(a, 1, constant_values=fill)


def build_operators(grid: VoxelGrid, dx: float, slip_beta_hat=(), lateral_bc: str = "wall",
                    inflow: float = 1.0) -> FlowOperators:
    if lateral_bc not in ("wall", "symmetry"):
        raise ValueError(f"lateral_bc must be 'wall' or 'symmetry', got {lateral_bc!r}")
    dims = grid.dims
    fa = grid.flow_axis
    conn = connectivity(grid)
    active = conn.to_outlet & grid.fluid
    solid = ~grid.fluid
    n_active = int(np.count_nonzero(active))
    cell_id = np.full(dims, -1, dtype=np.int64)
    cell_id[active] = np.arange(n_active)

    btypes = grid.boundary_types()
    betas = np.zeros(max(int(btypes.max(initial=-1)) + 1, len(slip_beta_hat), 1))
    betas[: len(slip_beta_hat)] = slip_beta_hat
    cell_beta = np.where(solid, betas[np.maximum(btypes, 0)], 0.0)

    actp = _padded(active, False)
    solp = _padded(solid, False)
    domp = _padded(np.ones(dims, dtype=bool), False)
    betap = _padded(cell_beta, 0.0)
    lateral_g = -1.0 if lateral_bc == "wall" else 1.0

    comps = []
    sizes = []
    for d in range(3):
        shape = list(dims)
        shape[d] += 1
        shape = tuple(shape)
        fi = np.indices(shape).reshape(3, -1)           # face coords, C order
        c2p = fi + 1                                     # padded coords of high cell
        c1p = c2p.copy()
        c1p[d] -= 1
        a1 = actp[tuple(c1p)]
        a2 = actp[tuple(c2p)]
        unknown_mask = a1 & a2
        fixed = np.zeros(shape)
        outlet_mask = np.zeros(fi.shape[1], dtype=bool)
        inlet_mask = np.zeros(fi.shape[1], dtype=bool)
        if d == fa:
            inlet_mask = (fi[d] == 0) & a2
            outlet_mask = (fi[d] == dims[d]) & a1
            fixed.reshape(-1)[inlet_mask] = inflow
        unknown = np.flatnonzero(unknown_mask)
        uid = np.full(fi.shape[1], -1, dtype=np.int64)
        uid[unknown] = np.arange(len(unknown))

        neighbours = []
        fu = fi[:, unknown]
        for e in range(3):
            for s in (1, -1):
                idx = np.full(len(unknown), -1, dtype=np.int64)
                coef = np.zeros(len(unknown))
                const = np.zeros(len(unknown))
                nb = fu.copy()
                nb[e] += s
                if e == d:
                    # neighbour along the component axis always exists in the face array
                    flat = np.ravel_multi_index(tuple(nb), shape)
                    idx = uid[flat]
                    is_out = outlet_mask[flat]
                    coef[is_out] = 1.0
                    const[(idx < 0) & ~is_out] = fixed.reshape(-1)[flat[(idx < 0) & ~is_out]]
                else:
                    n1 = fu + 1
                    n1[d] -= 1
                    n1[e] += s
                    n2 = fu + 1
                    n2[e] += s
                    inside = domp[tuple(n1)]
                    both_active = actp[tuple(n1)] & actp[tuple(n2)]
                    both_solid = solp[tuple(n1)] & solp[tuple(n2)]
                    nb_in = np.where(inside[None, :], nb, 0)
                    flat = np.ravel_multi_index(tuple(nb_in), shape)
                    idx = np.where(both_active, uid[flat], -1)
                    beta = 0.5 * (betap[tuple(n1)] + betap[tuple(n2)])
                    coef = np.where(both_solid, slip_ghost_factor(beta, dx), 0.0)
                    if e == fa:
                        coef[~inside] = -1.0 if s < 0 else 1.0
                    else:
                        coef[~inside] = lateral_g
                neighbours.append(_Neighbour(idx, coef, const))

        rows, cols, vals = [], [], []
        diag = np.zeros(len(unknown))
        lap_const = np.zeros(len(unknown))
        h2 = 1.0 / dx ** 2
        for nbr in neighbours:
            coupled = nbr.idx >= 0
            r = np.flatnonzero(coupled)
            rows.append(r)
            cols.append(nbr.idx[coupled])
            vals.append(np.full(len(r), h2))
            diag -= h2
            diag[~coupled] += h2 * nbr.coef[~coupled]
            lap_const[~coupled] += h2 * nbr.const[~coupled]
        rows.append(np.arange(len(unknown)))
        cols.append(np.arange(len(unknown)))
        vals.append(diag)
        lap = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(len(unknown),) * 2).tocsr()

        outlet = np.flatnonzero(outlet_mask)
        upstream = outlet.copy()
        if len(outlet):
            oc = fi[:, outlet].copy()
            oc[d] -= 1
            upstream = np.ravel_multi_index(tuple(oc), shape)
        comps.append(_Component(shape, unknown, fixed, outlet, upstream, neighbours, lap, lap_const))
        sizes.append(fi.shape[1])

    offsets = np.concatenate([[0], np.cumsum(sizes)])

    # divergence: active cells x stacked faces
    rows, cols, vals = [], [], []
    act_idx = np.nonzero(active)
    r = cell_id[act_idx]
    for d in range(3):
        shape = comps[d].shape
        lo = np.ravel_multi_index(act_idx, shape)
        hi_c = [a.copy() for a in act_idx]
        hi_c[d] = hi_c[d] + 1
        hi = np.ravel_multi_index(tuple(hi_c), shape)
        rows += [r, r]
        cols += [offsets[d] + hi, offsets[d] + lo]
        vals += [np.full(len(r), 1.0 / dx), np.full(len(r), -1.0 / dx)]
    div = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(n_active, offsets[-1])).tocsr()

    # gradient on projectable faces (momentum unknowns and outlet faces)
    rows, cols, vals = [], [], []
    proj = []
    for d, comp in enumerate(comps):
        fi = np.array(np.unravel_index(comp.unknown, comp.shape))
        c1 = fi.copy()
        c1[d] -= 1
        g = offsets[d] + comp.unknown
        rows += [g, g]
        cols += [cell_id[tuple(fi)], cell_id[tuple(c1)]]
        vals += [np.full(len(g), 1.0 / dx), np.full(len(g), -1.0 / dx)]
        proj.append(g)
        if len(comp.outlet):
            fo = np.array(np.unravel_index(comp.outlet, comp.shape))
            fo[d] -= 1
            go = offsets[d] + comp.outlet
            rows.append(go)
            cols.append(cell_id[tuple(fo)])
            vals.append(np.full(len(go), -2.0 / dx))
            proj.append(go)
    grad = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(offsets[-1], n_active)).tocsr()
    projectable = np.sort(np.concatenate(proj))
    poisson = (div[:, projectable] @ grad[projectable, :]).tocsr()
    poisson.sort_indices()

    fi = np.indices(comps[fa].shape).reshape(3, -1)
    inlet_faces = np.flatnonzero((fi[fa] == 0) & actp[tuple(fi + 1)])
    return FlowOperators(grid, dx, active, cell_id, comps, offsets, div, grad, projectable, poisson,
                         inlet_faces, inflow, lateral_bc)


@dataclass
class FlowField:
    """Face velocities ``u[d]`` (shape dims + e_d), cell pressure ``p``, dimensionless."""

    u: list[np.ndarray]
    p: np.ndarray
    dx: float
    residual: float = math.inf
    steps: int = 0
    history: list[tuple[int, float]] = field(default_factory=list)

    def stacked(self) -> np.ndarray:
        return np.concatenate([c.reshape(-1) for c in self.u])

    def divergence(self) -> np.ndarray:
        """Discrete divergence per cell (face-flux balance over cell volume)."""
        d = np.zeros(self.p.shape)
        for ax, comp in enumerate(self.u):
            d += np.diff(comp, axis=ax) / self.dx
        return d

    def cell_velocity(self) -> np.ndarray:
        """Face values averaged to cell centres, shape dims + (3,)."""
        out = np.empty(self.p.shape + (3,))
        for ax, comp in enumerate(self.u):
            n = comp.shape[ax]
            lo = np.take(comp, np.arange(n - 1), axis=ax)
            hi = np.take(comp, np.arange(1, n), axis=ax)
            out[..., ax] = 0.5 * (lo + hi)
        return out

    def plane_flux(self, axis: int, index: int) -> float:
        """Volumetric flux through face plane ``index`` normal to ``axis`` (dimensionless)."""
        return float(np.take(self.u[axis], index, axis=axis).sum() * self.dx ** 2)

    def copy(self) -> "FlowField":
        return FlowField([c.copy() for c in self.u], self.p.copy(), self.dx, self.residual, self.steps,
                         list(self.history))


def zero_flow(grid: VoxelGrid, dx: float) -> FlowField:
    u = []
    for d in range(3):
        shape = list(grid.dims)
        shape[d] += 1
        u.append(np.zeros(shape))
    return FlowField(u, np.zeros(grid.dims), dx)


def apply_slip_bc(flow: FlowField, ops: FlowOperators) -> FlowField:
    """Impose boundary values on a flow field.

    Normal velocity is zeroed on every face not carrying flow (solid
    interfaces, walls, blocked inlets); active inlet faces get the inflow
    value; outlet faces copy their upstream neighbour.  Tangential slip is
    carried by the ghost factors built into the operators, see
    :func:`slip_ghost_factor`.
    """
    out = flow.copy()
    for d, comp in enumerate(ops.comps):
        flat = out.u[d].reshape(-1)
        keep = np.zeros(flat.size, dtype=bool)
        keep[comp.unknown] = True
        new = comp.fixed_value.reshape(-1).copy()
        new[keep] = flat[keep]
        if len(comp.outlet):
            new[comp.outlet] = new[comp.outlet_upstream]
        out.u[d] = new.reshape(comp.shape)
    out.p = np.where(ops.active, out.p, 0.0)
    return out


def neighbour_values(nbr: _Neighbour, own: np.ndarray) -> np.ndarray:
    coupled = nbr.idx >= 0
    return np.where(coupled, own[np.where(coupled, nbr.idx, 0)], nbr.coef * own + nbr.const)


def advection(flow: FlowField, ops: FlowOperators) -> list[np.ndarray]:
    """First-order upwind (v . grad) u_d on the momentum unknowns of each component."""
    out = []
    dx = ops.dx
    for d, comp in enumerate(ops.comps):
        own = flow.u[d].reshape(-1)[comp.unknown]
        fi = np.unravel_index(comp.unknown, comp.shape)
        term = np.zeros(len(own))
        for e in range(3):
            if e == d:
                w = own
            else:
                # mean of the four e-faces of the two cells sharing this d-face
                ue = flow.u[e]
                c2 = list(fi)
                c1 = list(fi)
                c1[d] = c1[d] - 1
                acc = np.zeros(len(own))
                for c in (c1, c2):
                    acc += ue[tuple(c)]
                    hi = list(c)
                    hi[e] = hi[e] + 1
                    acc += ue[tuple(hi)]
                w = 0.25 * acc
            up = neighbour_values(comp.neighbours[2 * e + 1], own)
            dn = neighbour_values(comp.neighbours[2 * e], own)
            term += np.where(w > 0, w * (own - up), w * (dn - own)) / dx
        out.append(term)
    return out


def default_dt(ops: FlowOperators, stokes: bool, re: float, flow: FlowField | None = None, cfl: float = 0.5) -> float:
    if stokes:
        # viscous-scaled pseudo-time, a fraction of the pore diffusion time
        return STOKES_DT_FACTOR * pore_size(ops.grid, ops.lateral_bc, ops.active) ** 2 * ops.dx ** 2
    umax = abs(ops.inflow)
    if flow is not None:
        umax = max(umax, max(float(np.max(np.abs(c), initial=0.0)) for c in flow.u))
    return cfl * ops.dx / max(umax, 1e-300)


def pore_size(grid: VoxelGrid, lateral_bc: str = "wall", active=None) -> float:
    """Characteristic pore width in voxels: four times the mean wall distance over the flowing cells."""
    fluid = grid.fluid if active is None else active
    if not fluid.any():
        return 1.0
    pad = [(0, 0) if (ax == grid.flow_axis or lateral_bc != "wall") else (1, 1) for ax in range(3)]
    padded = np.pad(grid.fluid, pad, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)
    dist = dist[tuple(slice(a, a + n) for (a, _), n in zip(pad, grid.dims))]
    return max(4.0 * float(dist[fluid].mean()), 1.0)


class _Stepper:
    """Holds the assembled predictor and Poisson systems for a fixed pseudo-timestep."""

    def __init__(self, ops: FlowOperators, nu: float, dt: float, stokes: bool, opts: FlowOptions):
        self.ops, self.nu, self.dt, self.stokes, self.opts = ops, nu, dt, stokes, opts
        self.helmholtz = []
        for comp in ops.comps:
            n = len(comp.unknown)
            m = (sp.identity(n, format="csr") / dt - nu * comp.laplacian).tocsr()
            m.sort_indices()
            self.helmholtz.append(m)
        self.poisson = SparseSystem(-ops.poisson, np.zeros(ops.poisson.shape[0]))

    def solve(self, matrix, rhs, x0, tol):
        system = matrix.with_rhs(rhs) if isinstance(matrix, SparseSystem) else SparseSystem(matrix, rhs)
        return bicgstab(system, x0, tol=tol, max_iter=self.opts.linear_max_iter,
                        preconditioner=self.opts.preconditioner)

    def step(self, flow: FlowField) -> tuple[FlowField, float]:
        ops, dt, nu = self.ops, self.dt, self.nu
        nonlinear = None if self.stokes else advection(flow, ops)
        gp = ops.grad @ flow.p[ops.active] if len(flow.p[ops.active]) else np.zeros(ops.n_faces)
        star = []
        for d, comp in enumerate(ops.comps):
            own = flow.u[d].reshape(-1)[comp.unknown]
            rhs = own / dt + nu * comp.lap_const - gp[ops.offsets[d] + comp.unknown]
            if nonlinear is not None:
                rhs -= nonlinear[d]
            if len(own):
                # keep the solve error well below the steady-state threshold on du/dt
                bnorm = float(np.linalg.norm(rhs))
                tol = min(self.opts.linear_tol, max(0.01 * self.opts.tol_steady / max(bnorm, 1e-300), 1e-15))
                x, rep = self.solve(self.helmholtz[d], rhs, own, tol)
                if not rep.converged and rep.residual > 0.01 * self.opts.tol_steady:
                    raise FlowError(f"momentum predictor (component {d}) did not converge: "
                                    f"relative residual {rep.relative_residual:.3e}")
            else:
                x = own
            full = comp.fixed_value.reshape(-1).copy()
            full[comp.unknown] = x
            if len(comp.outlet):
                full[comp.outlet] = full[comp.outlet_upstream]
            star.append(full)
        ustar = np.concatenate(star)
        div_star = ops.div @ ustar
        phi = np.zeros(len(div_star))
        if len(div_star):
            rhs = -div_star / dt
            bnorm = float(np.linalg.norm(rhs))
            # |div| after projection <= dt * ||residual||
            tol = min(self.opts.linear_tol, max(0.1 * self.opts.div_tol / max(dt * bnorm, 1e-300), 1e-15))
            phi, rep = self.solve(self.poisson, rhs, None, tol)
            if not rep.converged and rep.residual * dt > self.opts.div_tol:
                raise FlowError(f"pressure Poisson solve did not converge: relative residual "
                                f"{rep.relative_residual:.3e}")
        unew = ustar.copy()
        unew[ops.projectable] -= dt * (ops.grad[ops.projectable] @ phi)
        new_u = [unew[ops.offsets[d]:ops.offsets[d + 1]].reshape(c.shape) for d, c in enumerate(ops.comps)]
        p = flow.p.copy()
        p[ops.active] += phi - nu * div_star
        change = max((float(np.max(np.abs(a - b), initial=0.0)) for a, b in zip(new_u, flow.u)), default=0.0)
        residual = change / dt
        if not math.isfinite(residual):
            raise FlowError("non-finite velocity encountered during flow stepping")
        out = FlowField(new_u, p, flow.dx, residual, flow.steps + 1, flow.history)
        return out, residual


def _pack(flow: FlowField) -> np.ndarray:
    return np.concatenate([flow.stacked(), flow.p.reshape(-1)])


def _unpack(x: np.ndarray, like: FlowField) -> FlowField:
    u, pos = [], 0
    for c in like.u:
        u.append(x[pos:pos + c.size].reshape(c.shape))
        pos += c.size
    return FlowField(u, x[pos:].reshape(like.p.shape), like.dx, like.residual, like.steps, like.history)


class _Anderson:
    """Anderson mixing for the fixed point ``x = g(x)`` of the pseudo-time march.

    Mixing weights sum to one, so affine constraints shared by every iterate
    (boundary values, zero divergence) carry over to the mixed state.
    """

    def __init__(self, depth: int):
        self.depth = depth
        self.prev_f = self.prev_g = None
        self.df, self.dg = [], []

    def mix(self, x: np.ndarray, gx: np.ndarray) -> np.ndarray:
        if self.depth <= 0:
            return gx
        f = gx - x
        if self.prev_f is not None:
            self.df.append(f - self.prev_f)
            self.dg.append(gx - self.prev_g)
            if len(self.df) > self.depth:
                self.df.pop(0)
                self.dg.pop(0)
        self.prev_f, self.prev_g = f, gx
        if not self.df:
            return gx
        dF = np.stack(self.df, axis=1)
        gamma, *_ = np.linalg.lstsq(dF, f, rcond=1e-12)
        return gx - np.stack(self.dg, axis=1) @ gamma


def chorin_step(flow: FlowField, ops: FlowOperators, re: float, dt: float, stokes: bool = False,
                opts: FlowOptions | None = None) -> FlowField:
    """Advance the flow by one fractional step of pseudo-time ``dt``.

    In Stokes mode the advective term is dropped and time is measured in
    viscous units (``nu = 1``), so ``p`` holds ``Re`` times the pressure.
    """
    opts = opts or FlowOptions()
    nu = 1.0 if stokes else 1.0 / re
    new, _ = _Stepper(ops, nu, dt, stokes, opts).step(flow)
    return new


def solve_steady_flow(grid: VoxelGrid, re: float, dx: float, slip_beta_hat=(), opts: FlowOptions | None = None,
                      ops: FlowOperators | None = None) -> FlowField:
    """March to the steady state and return the converged dimensionless field.

    Raises FlowError if ``opts.max_steps`` is exceeded; the residual history
    is attached to the exception as ``history``.
    """
    opts = opts or FlowOptions()
    stokes = opts.stokes if opts.stokes is not None else re < STOKES_RE
    ops = ops or build_operators(grid, dx, slip_beta_hat, opts.lateral_bc, opts.inflow)
    nu = 1.0 if stokes else 1.0 / re
    flow = apply_slip_bc(zero_flow(grid, dx), ops)
    dt = opts.dt or default_dt(ops, stokes, re, flow, opts.cfl)
    stepper = _Stepper(ops, nu, dt, stokes, opts)
    mixer = _Anderson(opts.anderson)
    history = []
    for n in range(opts.max_steps):
        new, res = stepper.step(flow)
        history.append((new.steps, res))
        log.debug("flow step %d residual %.3e", new.steps, res)
        if res <= opts.tol_steady:
            flow = new
            flow.history = history
            break
        flow = _unpack(mixer.mix(_pack(flow), _pack(new)), new)
        flow.history = history
        if not stokes and n % 10 == 9:
            new_dt = default_dt(ops, stokes, re, flow, opts.cfl) if opts.dt is None else dt
            if new_dt < 0.5 * dt or new_dt > 2.0 * dt:
                dt = new_dt
                stepper = _Stepper(ops, nu, dt, stokes, opts)
                mixer = _Anderson(opts.anderson)
    else:
        err = FlowError(f"steady state not reached in {opts.max_steps} steps (residual {flow.residual:.3e})")
        err.history = history
        raise err
    if stokes:
        flow.p = flow.p / re
    return flow


def flux_balance(flow: FlowField, grid: VoxelGrid) -> tuple[float, float]:
    a = grid.flow_axis
    return flow.plane_flux(a, 0), flow.plane_flux(a, grid.dims[a])
