"""Adsorption isotherms on reactive faces, in dimensionless form.

All functions broadcast over numpy arrays of face values.  ``c`` is the
dissolved concentration at the face, ``m`` the adsorbed concentration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VARIANTS = ("inert", "henry", "langmuir", "frumkin")

# Frumkin sub-step bound: h * (Da_a c / m_inf + Da_d) <= FRUMKIN_STEP
FRUMKIN_STEP = 0.01
_CSTEP = 1e-30


@dataclass(frozen=True)
class Isotherm:
    variant: str = "inert"
    da_a: float = 0.0
    da_d: float = 0.0
    m_inf: float = math.inf
    beta: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown isotherm {self.variant!r}; expected one of {VARIANTS}")
        if self.da_a < 0 or self.da_d < 0:
            raise ValueError("Damkohler numbers must be nonnegative")
        if self.variant in ("langmuir", "frumkin") and not 0 < self.m_inf < math.inf:
            raise ValueError(f"{self.variant} isotherm needs a finite positive m_inf")
        if self.variant == "inert" and (self.da_a or self.da_d):
            raise ValueError("inert isotherm takes no rate constants")

    @classmethod
    def inert(cls):
        return cls("inert")

    @classmethod
    def henry(cls, da_a, da_d):
        return cls("henry", da_a, da_d)

    @classmethod
    def langmuir(cls, da_a, da_d, m_inf):
        return cls("langmuir", da_a, da_d, m_inf)

    @classmethod
    def frumkin(cls, da_a, da_d, m_inf, beta):
        return cls("frumkin", da_a, da_d, m_inf, beta)

    @property
    def reactive(self) -> bool:
        return self.variant != "inert" and (self.da_a > 0 or self.da_d > 0)


def rate(iso: Isotherm, c, m):
    """dm/dt for the isotherm at face concentration ``c`` and adsorbed ``m``."""
    c = np.maximum(c, 0.0)
    m = np.maximum(m, 0.0)
    if iso.variant == "inert":
        return np.zeros(np.broadcast(c, m).shape)
    if iso.variant == "henry":
        return iso.da_a * c - iso.da_d * m
    uptake = iso.da_a * c * (1.0 - m / iso.m_inf)
    if iso.variant == "langmuir":
        return uptake - iso.da_d * m
    return uptake - iso.da_d * m * np.exp(-iso.beta * m)


def decay_rate(iso: Isotherm, c):
    """Linear relaxation rate of the adsorbed concentration at frozen ``c``."""
    c = np.maximum(c, 0.0)
    if iso.variant == "inert":
        return np.zeros(np.shape(c))
    if iso.variant == "henry":
        return np.full(np.shape(c), iso.da_d, dtype=float)
    return iso.da_a * c / iso.m_inf + iso.da_d


def equilibrium(iso: Isotherm, c):
    """Adsorbed concentration with zero net rate at fixed ``c`` (Henry/Langmuir)."""
    c = np.maximum(c, 0.0)
    if iso.variant == "henry":
        with np.errstate(divide="ignore"):
            return np.where(iso.da_d > 0, iso.da_a * c / max(iso.da_d, 1e-300), np.inf)
    if iso.variant == "langmuir":
        lam = decay_rate(iso, c)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(lam > 0, iso.da_a * c / np.where(lam > 0, lam, 1.0), 0.0)
    raise ValueError(f"no closed-form equilibrium for {iso.variant!r}")


def _linear_update(source, lam, m, dt):
    """Exact solution of dm/dt = source - lam*m after time dt, and dm/dsource."""
    growth = -np.expm1(-lam * dt)  # 1 - exp(-lam dt), accurate for small lam dt
    with np.errstate(invalid="ignore", divide="ignore"):
        gain = np.where(lam > 0, growth / np.where(lam > 0, lam, 1.0), dt)
    # exp directly: 1 - growth cancels once lam dt is large
    return m * np.exp(-lam * dt) + source * gain, gain


def _frumkin_rk4(iso: Isotherm, c, m, dt):
    lam_max = float(np.max(decay_rate(iso, np.real(c)), initial=0.0))
    nsub = max(1, math.ceil(dt * lam_max / FRUMKIN_STEP))
    h = dt / nsub

    def f(y):
        return iso.da_a * c * (1.0 - y / iso.m_inf) - iso.da_d * y * np.exp(-iso.beta * y)

    y = m
    for _ in range(nsub):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        # the ODE is autonomous at frozen c: a step that changes nothing is
        # repeated identically, so the remaining sub-steps can be skipped
        if np.array_equal(y_new, y):
            break
        y = y_new
    return y


def advance_with_sensitivity(iso: Isotherm, c, m, dt):
    """Adsorbed concentration after ``dt`` at frozen ``c``, and its derivative in ``c``.

    Henry and Langmuir use the exact exponential solution; Frumkin uses
    classical RK4 sub-steps with a complex-step derivative.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    c = np.maximum(np.asarray(c, dtype=float), 0.0)
    m = np.asarray(m, dtype=float)
    c, m = np.broadcast_arrays(c, m)
    if iso.variant == "inert":
        return m.astype(float, copy=True), np.zeros(c.shape)
    if iso.variant == "henry":
        lam = np.full(c.shape, iso.da_d)
        m_new, gain = _linear_update(iso.da_a * c, lam, m, dt)
        return np.maximum(m_new, 0.0), iso.da_a * gain
    if iso.variant == "langmuir":
        kappa = iso.da_a / iso.m_inf
        lam = kappa * c + iso.da_d
        m_new, gain = _linear_update(iso.da_a * c, lam, m, dt)
        # d/dc of m e^{-lam dt} + a c gain(lam), with dlam/dc = kappa
        decay = np.exp(-lam * dt)
        with np.errstate(invalid="ignore", divide="ignore"):
            dgain = np.where(lam > 0, (dt * decay - gain) / np.where(lam > 0, lam, 1.0), -0.5 * dt * dt)
        dm_dc = -m * dt * kappa * decay + iso.da_a * gain + iso.da_a * c * dgain * kappa
        return np.maximum(m_new, 0.0), dm_dc
    y = _frumkin_rk4(iso, c + 1j * _CSTEP, m.astype(complex), dt)
    return np.maximum(y.real, 0.0), y.imag / _CSTEP


def advance_m(iso: Isotherm, c, m, dt):
    """Adsorbed concentration after ``dt`` with the dissolved concentration frozen at ``c``."""
    return advance_with_sensitivity(iso, c, m, dt)[0]


def robin_face_coefficients(iso: Isotherm, c_lin, m_k, dt, pe, dx):
    """Discrete Robin relation on a reactive face, linearised about ``c_lin``.

    Returns ``(a_face, a_cell, rhs)`` with ``a_face*c_face + a_cell*c_cell = rhs``
    at the new time level.  It balances the half-cell diffusive flux
    ``2/(Pe dx) (c_cell - c_face)`` against the adsorbed increment per unit
    time, ``(advance_m(c_face) - m_k)/dt``, taken to first order about
    ``c_lin``.  At ``c_face == c_lin`` the relation is exact, so flux and
    uptake balance to round-off.
    """
    if not pe > 0 or not dx > 0:
        raise ValueError("pe and dx must be positive")
    g = 2.0 / (pe * dx)
    m_new, dm_dc = advance_with_sensitivity(iso, c_lin, m_k, dt)
    c_lin = np.maximum(np.asarray(c_lin, dtype=float), 0.0)
    s = dm_dc / dt
    r0 = (m_new - m_k - dm_dc * c_lin) / dt
    return -(g + s), np.full(np.shape(s), g), r0


def eliminate_face(a_face, a_cell, rhs):
    """Fold a Robin face into its cell row.

    Returns ``(diag, const)`` such that the outward flux per unit area is
    ``diag * c_cell + const``.  A zero face coefficient (no diffusion and
    no kinetics) gives a zero-flux face.
    """
    g = np.asarray(a_cell, dtype=float)
    a_face = np.asarray(a_face, dtype=float)
    ok = a_face != 0.0
    safe = np.where(ok, a_face, 1.0)
    return np.where(ok, g * (1.0 + g / safe), 0.0), np.where(ok, -g * rhs / safe, 0.0)


def face_concentration(a_face, a_cell, rhs, c_cell):
    """Face value from the Robin relation; falls back to ``c_cell`` on a degenerate face."""
    a_face = np.asarray(a_face, dtype=float)
    ok = a_face != 0.0
    return np.where(ok, (rhs - a_cell * c_cell) / np.where(ok, a_face, 1.0), c_cell)
