"""Physical parameters, dimensionless groups and field rescaling.

Scalings: x = L x', v = V_in v', t = L t'/V_in, p = P_out + rho V_in^2 p',
c = c_in c', m = c_in L m', total adsorbed amount M = c_in L^3 M'.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import Boltzmann

KINDS = ("velocity", "pressure", "concentration", "surface_concentration", "time", "length", "amount")


@dataclass(frozen=True)
class PhysicalParams:
    L: float
    rho: float
    mu: float
    V_in: float
    D: float
    c_in: float
    P_out: float = 0.0
    kappa_a: tuple[float, ...] = ()
    kappa_d: tuple[float, ...] = ()
    m_inf: tuple[float, ...] = ()
    slip_beta: tuple[float, ...] = ()
    beta_frumkin: float = 0.0
    T: float = 293.15

    def __post_init__(self):
        for name in ("L", "rho", "mu", "V_in"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.D < 0 or self.T < 0 or self.c_in < 0:
            raise ValueError("D, T and c_in must be nonnegative")
        n = len(self.kappa_a)
        for name in ("kappa_d", "m_inf", "slip_beta"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} must have one entry per boundary type ({n})")
        if any(v < 0 for v in self.kappa_a + self.kappa_d + self.m_inf + self.slip_beta):
            raise ValueError("rate constants, m_inf and slip lengths must be nonnegative")


@dataclass(frozen=True)
class Scales:
    L: float
    V_in: float
    c_in: float
    P_out: float
    rho: float

    def factor(self, kind: str) -> float:
        factors = {
            "velocity": self.V_in,
            "pressure": self.rho * self.V_in ** 2,
            "concentration": self.c_in,
            "surface_concentration": self.c_in * self.L,
            "time": self.L / self.V_in,
            "length": self.L,
            "amount": self.c_in * self.L ** 3,
        }
        try:
            return factors[kind]
        except KeyError:
            raise ValueError(f"unknown field kind {kind!r}; expected one of {KINDS}") from None

    def offset(self, kind: str) -> float:
        return self.P_out if kind == "pressure" else 0.0


@dataclass(frozen=True)
class DimensionlessGroups:
    Re: float
    Pe: float
    da_a: tuple[float, ...]
    da_d: tuple[float, ...]
    m_inf_hat: tuple[float, ...]
    slip_beta_hat: tuple[float, ...]
    beta_hat: float
    scales: Scales = field(default=None)

    @property
    def infinite_pe(self) -> bool:
        return math.isinf(self.Pe)

    @property
    def n_types(self) -> int:
        return len(self.da_a)


def compute_groups(p: PhysicalParams, require_finite_pe: bool = False) -> DimensionlessGroups:
    if p.D == 0 and require_finite_pe:
        raise ValueError("D = 0 gives an infinite Peclet number, but a finite-Pe solve was requested")
    Pe = math.inf if p.D == 0 else p.V_in * p.L / p.D
    if p.beta_frumkin == 0:
        beta_hat = 0.0
    elif p.T == 0:
        raise ValueError("Frumkin interaction needs a positive temperature")
    else:
        beta_hat = 2.0 * p.beta_frumkin * p.c_in * p.L / (Boltzmann * p.T)
    cl = p.c_in * p.L
    return DimensionlessGroups(
        Re=p.L * p.rho * p.V_in / p.mu,
        Pe=Pe,
        da_a=tuple(k / p.V_in for k in p.kappa_a),
        da_d=tuple(k * p.L / p.V_in for k in p.kappa_d),
        m_inf_hat=tuple(math.inf if (math.isinf(m) or cl == 0) else m / cl for m in p.m_inf),
        slip_beta_hat=tuple(b / p.L for b in p.slip_beta),
        beta_hat=beta_hat,
        scales=Scales(p.L, p.V_in, p.c_in, p.P_out, p.rho),
    )


def nondimensionalize(field_values, kind: str, scales: Scales):
    return (np.asarray(field_values, dtype=float) - scales.offset(kind)) / scales.factor(kind)


def redimensionalize(field_values, kind: str, scales: Scales):
    return np.asarray(field_values, dtype=float) * scales.factor(kind) + scales.offset(kind)


def nondim_initial_conditions(v0, p0, c0, m0, scales: Scales):
    return (
        nondimensionalize(v0, "velocity", scales),
        nondimensionalize(p0, "pressure", scales),
        nondimensionalize(c0, "concentration", scales),
        nondimensionalize(m0, "surface_concentration", scales),
    )


def format_number(x: float) -> str:
    """``7.83e-3`` -> ``7.830000e-3``."""
    if math.isinf(x) or math.isnan(x):
        return str(x)
    mantissa, exp = f"{x:.6e}".split("e")
    return f"{mantissa}e{int(exp)}"


def group_lines(g: DimensionlessGroups) -> list[str]:
    lines = [f"Re={format_number(g.Re)}", f"Pe={format_number(g.Pe)}"]
    for i in range(g.n_types):
        lines += [
            f"Da_a[{i}]={format_number(g.da_a[i])}",
            f"Da_d[{i}]={format_number(g.da_d[i])}",
            f"m_inf_hat[{i}]={format_number(g.m_inf_hat[i])}",
            f"slip_beta_hat[{i}]={format_number(g.slip_beta_hat[i])}",
        ]
    lines.append(f"beta_hat={format_number(g.beta_hat)}")
    return lines
