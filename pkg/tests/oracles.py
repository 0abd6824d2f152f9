"""Independent reference computations shared by the tests.

None of these call into the package's solvers; they rebuild each answer by
a separate route (general ODE integration, dense LU, brute-force loops,
closed forms).
"""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def isotherm_rhs(variant, da_a, da_d, m_inf, beta, c):
    def f(t, y):
        m = y[0]
        if variant == "henry":
            return [da_a * c - da_d * m]
        uptake = da_a * c * (1.0 - m / m_inf)
        if variant == "langmuir":
            return [uptake - da_d * m]
        return [uptake - da_d * m * math.exp(-beta * m)]
    return f


def ode_oracle(variant, da_a, da_d, m_inf, beta, c, m0, dt):
    """Adaptive 8th-order Runge-Kutta integration of dm/dt at frozen c.

    A terminal event stops the march once the rate is below 1e-13 of the
    relaxation scale, after which the remaining change is under round-off.
    """
    f = isotherm_rhs(variant, da_a, da_d, m_inf, beta, c)
    lam = da_d + (da_a * c / m_inf if variant != "henry" else 0.0)

    def settled(t, y):
        return abs(f(t, y)[0]) - 1e-13 * max(lam, 1e-300) * max(abs(y[0]), 1e-300)
    settled.terminal = True
    sol = solve_ivp(f, (0.0, dt), [m0], method="DOP853", rtol=1e-13, atol=1e-20, events=settled)
    return float(sol.y[0, -1])


def langmuir_closed_box(da_a, da_d, m_inf, total, volume, area):
    """Equilibrium (c, m) of a sealed box: zero Langmuir rate and c V + m A = total.

    With m = a c / (a c / m_inf + d) the mass balance is the quadratic
    (a V / m_inf) c^2 + (d V + a A - a total / m_inf) c - d total = 0.
    """
    qa = da_a * volume / m_inf
    qb = da_d * volume + da_a * area - da_a * total / m_inf
    qc = -da_d * total
    if qa == 0:
        c = -qc / qb
    else:
        c = (-qb + math.sqrt(qb * qb - 4 * qa * qc)) / (2 * qa)
    m = da_a * c / (da_a * c / m_inf + da_d)
    return c, m


def single_cell_dae(iso_rate, c0, m0, t_end, g, area_over_volume):
    """Cell concentration and adsorbed amount for one closed cell with one reactive face.

    The face value c_j solves g (c - c_j) = rate(c_j, m); then
    dc/dt = -(A/V) g (c - c_j) and dm/dt = rate(c_j, m).
    """
    def face(c, m):
        h = lambda cj: g * (c - cj) - iso_rate(cj, m)
        lo, hi = 0.0, max(c, 1e-300)
        if h(lo) * h(hi) > 0:
            return lo if abs(h(lo)) < abs(h(hi)) else hi
        return brentq(h, lo, hi, xtol=1e-15, rtol=1e-15)

    def f(t, y):
        c, m = y
        cj = face(max(c, 0.0), m)
        flux = g * (c - cj)
        return [-area_over_volume * flux, flux]

    sol = solve_ivp(f, (0.0, t_end), [c0, m0], method="Radau", rtol=1e-11, atol=1e-14, dense_output=True)
    return sol


def dense_solve(A, b):
    return np.linalg.solve(np.asarray(A.todense() if hasattr(A, "todense") else A), b)


def brute_force_faces(labels, btype_of):
    """(flat x-fastest cell, direction index, btype) for every fluid face touching a solid."""
    dirs = ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1))
    nx, ny, nz = labels.shape
    out = []
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if labels[x, y, z] != 0:
                    continue
                for d, (ax, s) in enumerate(dirs):
                    q = [x, y, z]
                    q[ax] += s
                    if 0 <= q[ax] < labels.shape[ax] and labels[tuple(q)] != 0:
                        out.append((x + nx * (y + ny * z), d, btype_of(int(labels[tuple(q)]))))
    return sorted(out)


def duct_flow_rate(G, mu, a, terms=100):
    """Volumetric flow of pressure gradient G through a square duct of side a."""
    s = sum(math.tanh(n * math.pi / 2) / n ** 5 for n in range(1, 2 * terms, 2))
    return G * a ** 4 / (12 * mu) * (1 - 192 / math.pi ** 5 * s)


def slip_channel_ratio(beta_over_h):
    """Centreline / mean velocity of plane Poiseuille flow with Navier slip length beta."""
    return (1 / 8 + beta_over_h / 2) / (1 / 12 + beta_over_h / 2)
