"""Bound states of the vertex-coupled Laplacian and spectral projections.

A bound state decays like c_j * exp(-k x) on every edge with energy -k^2; its
amplitude vector must satisfy (A - k B) c = 0.  The number of bound states
(with multiplicity) equals the number of positive eigenvalues of A B^H.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .coupling import CouplingPair, require_valid
from .grids import GraphFunction

KERNEL_SV_RTOL = 1e-8
EIGENVALUE_COUNT_RTOL = 1e-10
ROOT_XTOL = 1e-12
SCAN_SAMPLES = 10_000
SCAN_CAP = 1e3


class SpectrumSearchError(RuntimeError):
    """Bound-state search disagrees with the algebraic count."""


@dataclass(frozen=True)
class BoundState:
    """One L2 eigenfunction c_j * exp(-k x), normalized to unit L2 norm."""

    k: float
    eigenvalue: float
    amplitudes: np.ndarray
    multiplicity_index: int

    def sample(self, grid) -> np.ndarray:
        """Edge-wise samples of the eigenfunction on a star grid."""
        decay = np.exp(-self.k * grid.x)
        return self.amplitudes[:, None] * decay[None, :]


@dataclass(frozen=True)
class Spectrum:
    bound_states: tuple[BoundState, ...]
    n_plus: int
    rho: float | None

    def to_json_dict(self) -> dict:
        return {
            "n_plus": self.n_plus,
            "bound_states": [
                {
                    "k": bs.k,
                    "eigenvalue": bs.eigenvalue,
                    "amplitudes": [[float(c.real), float(c.imag)] for c in bs.amplitudes],
                }
                for bs in self.bound_states
            ],
            "rho": self.rho,
        }


def count_negative_eigenvalues(pair: CouplingPair) -> int:
    """Number of strictly positive eigenvalues of the Hermitian matrix A B^H."""
    require_valid(pair)
    AB = pair.A @ pair.B.conj().T
    AB = 0.5 * (AB + AB.conj().T)
    w = np.linalg.eigvalsh(AB)
    scale = float(np.abs(w).max()) if w.size else 0.0
    return int(np.sum(w > EIGENVALUE_COUNT_RTOL * max(scale, 1e-300)))


def _pencil_sigma_min(pair: CouplingPair, ks: np.ndarray) -> np.ndarray:
    M = pair.A[None, :, :] - ks[:, None, None].astype(complex) * pair.B[None, :, :]
    return np.linalg.svd(M, compute_uv=False)[:, -1]


def _pencil_scale(pair: CouplingPair, k: float) -> float:
    return float(np.linalg.norm(pair.A, 2) + abs(k) * np.linalg.norm(pair.B, 2))


def _default_k_max(pair: CouplingPair, real_eigs: np.ndarray) -> float:
    # The norm-ratio heuristic underestimates when B is nearly singular along
    # some direction, so the computed pencil spectrum sets a floor.
    nA = float(np.linalg.norm(pair.A, 2))
    nB = float(np.linalg.norm(pair.B, 2))
    k_max = 10.0 * (1.0 + nA / max(nB, 1e-30))
    if real_eigs.size:
        k_max = max(k_max, 1.05 * float(np.abs(real_eigs).max()))
    return k_max


def _real_pencil_eigenvalues(pair: CouplingPair) -> np.ndarray:
    """Real finite generalized eigenvalues of A c = k B c."""
    alpha, beta = scipy.linalg.eig(pair.A, pair.B, right=False, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-12 * (np.abs(alpha) + 1.0)
    vals = alpha[finite] / beta[finite]
    real = np.abs(vals.imag) <= 1e-8 * (1.0 + np.abs(vals.real))
    return np.unique(vals[real].real)


def _refine_root(pair: CouplingPair, k0: float, span: float) -> float:
    """Golden-section refinement of the sigma_min valley around k0.

    The valley is V-shaped at a root, where parabolic minimizers stall at
    sqrt(eps) accuracy; plain golden section reaches the target bracket width.
    """
    lo = max(k0 - span, 1e-14)
    hi = k0 + span
    invphi = (np.sqrt(5.0) - 1.0) / 2.0

    def f(k: float) -> float:
        return float(_pencil_sigma_min(pair, np.array([k]))[0])

    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > ROOT_XTOL * (1.0 + abs(lo)):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = f(d)
    return 0.5 * (lo + hi)


def find_bound_states(pair: CouplingPair, k_max: float | None = None) -> Spectrum:
    """Locate all decay rates k in (0, k_max] with A - kB singular.

    Candidates come from a dense scan of the smallest singular value of the
    pencil plus its generalized eigenvalues; each candidate is refined and its
    kernel dimension sets the multiplicity.  The total multiplicity must match
    the algebraic count, otherwise the search fails loudly.
    """
    require_valid(pair)
    n_plus = count_negative_eigenvalues(pair)
    rho = strip_radius(pair)
    real_eigs = _real_pencil_eigenvalues(pair)
    if k_max is None:
        k_max = _default_k_max(pair, real_eigs)

    seeds: list[float] = []
    seeds.extend(k for k in real_eigs if 0.0 < k <= k_max)

    scan_hi = min(k_max, SCAN_CAP)
    ks = np.linspace(scan_hi / SCAN_SAMPLES, scan_hi, SCAN_SAMPLES)
    sig = _pencil_sigma_min(pair, ks)
    interior = np.nonzero((sig[1:-1] < sig[:-2]) & (sig[1:-1] <= sig[2:]))[0] + 1
    seeds.extend(
        float(ks[i]) for i in interior if sig[i] < 1e-3 * _pencil_scale(pair, float(ks[i]))
    )

    # det(A - kB) may vanish at k = 0 (singular A); that root is a zero-energy
    # feature, not a bound state, so refined candidates below the floor drop out.
    k_floor = 1e-8 * (1.0 + scan_hi)
    span = float(ks[1] - ks[0])
    roots: list[float] = []
    for seed in sorted(seeds):
        k = _refine_root(pair, float(seed), span)
        if not k_floor < k <= k_max * (1.0 + 1e-12):
            continue
        # refined duplicates from the two candidate sources land on the same point
        if roots and abs(k - roots[-1]) <= 1e-6 * (1.0 + abs(k)):
            continue
        scale = _pencil_scale(pair, k)
        if _pencil_sigma_min(pair, np.array([k]))[0] <= 1e-9 * scale:
            roots.append(k)

    states: list[BoundState] = []
    total = 0
    for k in roots:
        M = pair.A - k * pair.B
        u, s, vh = np.linalg.svd(M)
        smax = max(float(s[0]), 1e-300)
        kernel = vh.conj().T[:, s <= KERNEL_SV_RTOL * smax]
        for idx in range(kernel.shape[1]):
            c = kernel[:, idx]
            c = c * np.sqrt(2.0 * k) / np.linalg.norm(c)  # unit L2 norm of c e^{-kx}
            states.append(
                BoundState(k=k, eigenvalue=-k * k, amplitudes=c, multiplicity_index=idx)
            )
        total += kernel.shape[1]

    if total != n_plus:
        raise SpectrumSearchError(
            f"found total multiplicity {total} but the algebraic count is {n_plus}; "
            f"retry with a larger k_max (used {k_max:.3g}) or a finer scan"
        )
    return Spectrum(bound_states=tuple(states), n_plus=n_plus, rho=rho)


def strip_radius(pair: CouplingPair) -> float | None:
    """Smallest magnitude of a nonzero root of det(A + ikB) on the imaginary axis.

    Roots k = i*kappa correspond to real generalized eigenvalues kappa of the
    pencil (A, B); None when no nonzero root exists.
    """
    require_valid(pair)
    vals = _real_pencil_eigenvalues(pair)
    nz = np.abs(vals[np.abs(vals) > 1e-10])
    if nz.size == 0:
        return None
    return float(nz.min())


def largest_pole_radius(pair: CouplingPair) -> float:
    """Radius of the disk holding every imaginary-axis root of det(A + ikB)."""
    require_valid(pair)
    vals = _real_pencil_eigenvalues(pair)
    return float(np.abs(vals).max()) if vals.size else 0.0


def _sampled_states(spec: Spectrum, grid) -> np.ndarray:
    """Stack of eigenfunction samples, shape (n_states, n_edges, m)."""
    return np.stack([bs.sample(grid) for bs in spec.bound_states])


def _gram_with_tail(spec: Spectrum, grid) -> np.ndarray:
    """L2 Gram of the sampled eigenfunctions: trapezoid on [0, L] plus analytic tail."""
    phis = _sampled_states(spec, grid)
    w = grid.trapezoid_weights
    nb = len(spec.bound_states)
    gram = np.einsum("aji,i,bji->ab", phis, w, phis.conj())
    L = grid.length
    for a, sa in enumerate(spec.bound_states):
        for b, sb in enumerate(spec.bound_states):
            ksum = sa.k + sb.k
            overlap = complex(np.vdot(sb.amplitudes, sa.amplitudes))
            gram[a, b] += overlap * np.exp(-ksum * L) / ksum
    return gram


def point_coefficients(spec: Spectrum, u: GraphFunction) -> np.ndarray:
    """Expansion coefficients <u, phi_a> corrected for the quadrature Gram."""
    if not spec.bound_states:
        return np.zeros(0, dtype=complex)
    grid = u.grid
    phis = _sampled_states(spec, grid)
    w = grid.trapezoid_weights
    raw = np.einsum("ji,i,aji->a", u.values, w, phis.conj())
    gram = _gram_with_tail(spec, grid)
    return np.linalg.solve(gram, raw)


def project_point(spec: Spectrum, u: GraphFunction) -> GraphFunction:
    """Orthogonal projection onto the bound-state subspace, sampled on u's grid."""
    if not spec.bound_states:
        return GraphFunction.zeros(u.grid)
    coeff = point_coefficients(spec, u)
    phis = _sampled_states(spec, u.grid)
    vals = np.tensordot(coeff, phis, axes=(0, 0))
    return GraphFunction(u.grid, vals)


def project_ac(spec: Spectrum, u: GraphFunction) -> GraphFunction:
    """Projection onto the absolutely continuous subspace: u minus the point part."""
    if not spec.bound_states:
        return u
    return u - project_point(spec, u)
