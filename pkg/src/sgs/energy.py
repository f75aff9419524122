"""Quadratic form of the vertex-coupled Laplacian and the NLS energy functional."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling import CouplingPair, ProjectorDecomposition, projector_decomposition
from .grids import GraphFunction, StarGrid, edge_derivative, lp_norm

FORM_DOMAIN_TOL = 1e-8


class FormDomainError(ValueError):
    """Boundary trace violates the clamped (Dirichlet) part of the form domain."""


@dataclass(frozen=True)
class EnergyForm:
    """Vertex decomposition plus a shift M making M*||u||^2 + E(u, u) nonnegative."""

    decomposition: ProjectorDecomposition
    M: float


def estimate_trace_constant(grid: StarGrid) -> float:
    """Discrete bound on |u(0)|^2 / ||u||_{H1}^2 over decaying exponential probes."""
    x = grid.x
    best = 0.0
    for sigma in (0.25, 0.5, 1.0, 2.0, 4.0):
        u = np.exp(-sigma * x)
        w = grid.trapezoid_weights
        du = np.gradient(u, grid.h)
        h1 = float(np.sum((u**2 + du**2) * w))
        best = max(best, 1.0 / h1)
    return best


def make_energy_form(pair: CouplingPair, grid: StarGrid) -> EnergyForm:
    dec = projector_decomposition(pair)
    lam_norm = float(np.linalg.norm(dec.Lambda, 2))
    M = 1.0 + 2.0 * lam_norm * estimate_trace_constant(grid)
    return EnergyForm(decomposition=dec, M=M)


def check_form_domain(form: EnergyForm, u: GraphFunction) -> float:
    """Return ||P_D u(0)||; raise when the trace leaves the form domain."""
    res = float(np.linalg.norm(form.decomposition.P_D @ u.vertex_values))
    scale = max(1.0, float(np.abs(u.values).max()))
    if res > FORM_DOMAIN_TOL * scale:
        raise FormDomainError(
            f"Dirichlet part of the vertex trace is {res:.3e}; data lies outside the form domain"
        )
    return res


def quadratic_energy(form: EnergyForm, u: GraphFunction) -> float:
    """Kinetic plus vertex term: sum_j int |u_j'|^2 + <Lambda P_R u(0), P_R u(0)>."""
    check_form_domain(form, u)
    du = edge_derivative(u)
    w = u.grid.trapezoid_weights
    kinetic = float(np.sum(np.abs(du) ** 2 * w))
    tr = form.decomposition.P_R @ u.vertex_values
    vertex = complex(np.vdot(tr, form.decomposition.Lambda @ tr))
    return kinetic + vertex.real


def energy(form: EnergyForm, u: GraphFunction, lam: float, p: float) -> float:
    """Conserved NLS energy E(u) = quadratic part - lam/(p+1) * int |u|^{p+1}."""
    quad = quadratic_energy(form, u)
    if lam == 0.0:
        return quad
    return quad - lam / (p + 1.0) * lp_norm(u, p + 1.0) ** (p + 1.0)


def form_shift_nonnegative(form: EnergyForm, probes: list[GraphFunction]) -> bool:
    """Check M ||u||^2 + E(u,u) >= 0 on a probe set (invariant of the shift choice)."""
    for u in probes:
        val = form.M * lp_norm(u, 2.0) ** 2 + quadratic_energy(form, u)
        if val < -1e-10 * max(1.0, abs(val)):
            return False
    return True
