"""Crank-Nicolson reference evolution built on the vertex quadratic form.

Space is discretized by linear elements with a lumped (trapezoid) mass matrix;
the clamped part of the vertex trace is eliminated so the stiffness matrix is
Hermitian on the constrained space and the Robin operator enters as a rank-small
vertex block.  One Crank-Nicolson step is then a Cayley transform of a Hermitian
matrix in the weighted discrete inner product, so the discrete L2 norm is
conserved to solver precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coupling import CouplingPair, projector_decomposition
from .grids import GraphFunction, StarGrid


@dataclass(frozen=True)
class FormSystem:
    """Lumped-mass discretization of the quadratic form on a star grid."""

    pair: CouplingPair
    grid: StarGrid
    trace_basis: np.ndarray  # (n, r) orthonormal basis of the admissible vertex traces
    mass: np.ndarray  # diagonal of the lumped mass matrix
    stiffness: sp.csc_matrix

    @property
    def r(self) -> int:
        return self.trace_basis.shape[1]

    def to_state(self, u: GraphFunction) -> np.ndarray:
        w = self.trace_basis.conj().T @ u.vertex_values
        interior = u.values[:, 1:-1].reshape(-1)
        return np.concatenate([w, interior])

    def to_function(self, x: np.ndarray) -> GraphFunction:
        n, m = self.grid.n, self.grid.m
        vals = np.zeros((n, m), dtype=complex)
        vals[:, 0] = self.trace_basis @ x[: self.r]
        vals[:, 1:-1] = x[self.r :].reshape(n, m - 2)
        return GraphFunction(self.grid, vals)


def build_form_system(pair: CouplingPair, grid: StarGrid) -> FormSystem:
    """Assemble mass and stiffness; raises when the coupling has no projector form."""
    dec = projector_decomposition(pair)
    n, m, h = grid.n, grid.m, grid.h

    w_eig, V = np.linalg.eigh(np.eye(n) - dec.P_D)
    r = int(round(np.sum(w_eig).real))
    Z = V[:, np.argsort(w_eig)[::-1][:r]]

    n_int = m - 2
    N = r + n * n_int
    mass = np.concatenate([np.full(r, 0.5 * h), np.full(n * n_int, h)])

    rows: list[int] = []
    cols: list[int] = []
    data: list[complex] = []

    def add(i: int, j: int, v: complex) -> None:
        rows.append(i)
        cols.append(j)
        data.append(v)

    inv_h = 1.0 / h
    # vertex block: (1/h) I_r from the first intervals plus the Robin operator
    vertex_block = inv_h * np.eye(r) + Z.conj().T @ dec.Lambda @ Z
    for a in range(r):
        for b in range(r):
            if vertex_block[a, b] != 0.0:
                add(a, b, vertex_block[a, b])

    for j in range(n):
        base = r + j * n_int
        for i in range(n_int):
            add(base + i, base + i, 2.0 * inv_h)
            if i + 1 < n_int:
                add(base + i, base + i + 1, -inv_h)
                add(base + i + 1, base + i, -inv_h)
        # coupling of the first interior node to the vertex trace
        for c in range(r):
            add(base, c, -inv_h * Z[j, c])
            add(c, base, -inv_h * np.conj(Z[j, c]))

    K = sp.csc_matrix(sp.coo_matrix((data, (rows, cols)), shape=(N, N)))
    return FormSystem(pair=pair, grid=grid, trace_basis=Z, mass=mass, stiffness=K)


def apply_hamiltonian(system: FormSystem, u: GraphFunction) -> GraphFunction:
    """Discrete H u = M^{-1} K u; interior rows reduce to minus the second difference."""
    x = system.to_state(u)
    return system.to_function((system.stiffness @ x) / system.mass)


class CrankNicolsonStepper:
    """Unitary-in-discrete-L2 time step for i u_t = H u, factorized once.

    A negative dt steps backward; either sign yields a Cayley transform of the
    Hermitian stiffness in the lumped inner product.
    """

    def __init__(self, system: FormSystem, dt: float):
        if dt == 0:
            raise ValueError("time step must be nonzero")
        self.system = system
        self.dt = dt
        delta = 0.5j * dt
        M = sp.diags(system.mass.astype(complex))
        self._lhs = spla.splu(sp.csc_matrix(M + delta * system.stiffness))
        self._rhs = sp.csr_matrix(M - delta * system.stiffness)

    def step(self, x: np.ndarray) -> np.ndarray:
        return self._lhs.solve(self._rhs @ x)


def crank_nicolson_oracle(
    pair: CouplingPair, u0: GraphFunction, t_final: float, dt: float
) -> GraphFunction:
    """Evolve u0 to t_final by Crank-Nicolson steps on the form discretization."""
    if dt <= 0:
        raise ValueError(f"step size must be positive, got {dt}")
    if t_final == 0.0:
        return u0
    n_steps = max(1, int(round(abs(t_final) / dt)))
    dt_eff = t_final / n_steps
    system = build_form_system(pair, u0.grid)
    stepper = CrankNicolsonStepper(system, dt_eff)
    x = system.to_state(u0)
    for _ in range(n_steps):
        x = stepper.step(x)
    return system.to_function(x)
