"""Vertex couplings (A, B): validation, presets, scattering matrices and projectors.

A coupling is a pair of complex n x n matrices imposing A u(0) + B u'(0) = 0 at
the common vertex.  It generates a self-adjoint Laplacian exactly when the
concatenation (A, B) has maximal rank and A B^H is Hermitian; everything in this
module assumes or checks those two conditions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.linalg import schur

RANK_RTOL = 1e-10
HERMITICITY_TOL = 1e-12
EQUIVALENCE_TOL = 1e-10
# Scattering eigenvalues within this angular distance of -1 are treated as
# perfectly reflecting (Dirichlet-type) directions with no finite pole.
REFLECTOR_ANGLE_TOL = 1e-8


class CouplingError(ValueError):
    """Structurally malformed or invalid coupling."""


class PoleError(CouplingError):
    """Scattering matrix requested at a pole of (A + ikB)^{-1}."""

    def __init__(self, k: complex, residual: float):
        self.k = k
        self.residual = residual
        super().__init__(f"A + ikB is singular at k={k} (smallest relative singular value {residual:.3e})")


class DegenerateCouplingError(CouplingError):
    """Robin-block extraction failed; subspace dimensions reported in args."""


@dataclass(frozen=True)
class CouplingPair:
    """Matrix pair (A, B) defining the vertex condition A u(0) + B u'(0) = 0."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self) -> None:
        A = np.ascontiguousarray(self.A, dtype=complex)
        B = np.ascontiguousarray(self.B, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise CouplingError(f"A must be square, got shape {A.shape}")
        if B.shape != A.shape:
            raise CouplingError(f"A and B shapes differ: {A.shape} vs {B.shape}")
        if A.shape[0] < 2:
            raise CouplingError(f"need at least 2 edges, got n={A.shape[0]}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def to_json_dict(self) -> dict:
        def encode(M: np.ndarray) -> list:
            return [[{"re": float(z.real), "im": float(z.imag)} for z in row] for row in M]

        return {"n": self.n, "A": encode(self.A), "B": encode(self.B)}

    @staticmethod
    def from_json_dict(obj: dict) -> "CouplingPair":
        if "preset" in obj:
            kind = obj["preset"]
            n = int(obj["n"])
            if kind == "delta":
                return preset(kind, n, alpha=float(obj.get("alpha", 0.0)))
            if kind == "delta_prime":
                return preset(kind, n, beta=float(obj.get("beta", 0.0)))
            return preset(kind, n)

        def decode(rows: list) -> np.ndarray:
            return np.array([[complex(c["re"], c["im"]) for c in row] for row in rows], dtype=complex)

        pair = CouplingPair(decode(obj["A"]), decode(obj["B"]))
        if pair.n != int(obj["n"]):
            raise CouplingError(f"declared n={obj['n']} does not match matrix size {pair.n}")
        return pair


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of the two self-adjointness conditions with numeric residuals."""

    rank_ok: bool
    hermiticity_ok: bool
    rank_defect: int
    smallest_singular_value: float
    hermiticity_residual: float

    @property
    def ok(self) -> bool:
        return self.rank_ok and self.hermiticity_ok


def validate(pair: CouplingPair) -> ValidityReport:
    """Check maximal rank of (A, B) and Hermiticity of A B^H; never raises on failure."""
    concat = np.hstack([pair.A, pair.B])
    sv = np.linalg.svd(concat, compute_uv=False)
    smax = sv[0] if sv[0] > 0 else 1.0
    rank = int(np.sum(sv > RANK_RTOL * smax))
    AB = pair.A @ pair.B.conj().T
    herm_res = float(np.abs(AB - AB.conj().T).max())
    scale = max(float(np.abs(AB).max()), 1.0)
    return ValidityReport(
        rank_ok=rank == pair.n,
        hermiticity_ok=herm_res <= HERMITICITY_TOL * scale,
        rank_defect=pair.n - rank,
        smallest_singular_value=float(sv[-1]),
        hermiticity_residual=herm_res,
    )


def require_valid(pair: CouplingPair) -> ValidityReport:
    report = validate(pair)
    if not report.ok:
        raise CouplingError(
            f"coupling violates self-adjointness conditions: rank defect {report.rank_defect}, "
            f"Hermiticity residual {report.hermiticity_residual:.3e}"
        )
    return report


def kirchhoff(n: int) -> CouplingPair:
    """Continuity at the vertex plus vanishing sum of inward derivatives."""
    A = np.zeros((n, n), dtype=complex)
    B = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):
        A[i, i] = 1.0
        A[i, i + 1] = -1.0
    B[n - 1, :] = 1.0
    return CouplingPair(A, B)


def dirichlet(n: int) -> CouplingPair:
    return CouplingPair(np.eye(n, dtype=complex), np.zeros((n, n), dtype=complex))


def neumann(n: int) -> CouplingPair:
    return CouplingPair(np.zeros((n, n), dtype=complex), np.eye(n, dtype=complex))


def delta(n: int, alpha: float) -> CouplingPair:
    """Continuity plus sum of inward derivatives equal to alpha times the vertex value."""
    if not np.isfinite(alpha):
        raise CouplingError(f"delta strength must be finite, got {alpha}")
    A = np.zeros((n, n), dtype=complex)
    B = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):
        A[i, i] = 1.0
        A[i, i + 1] = -1.0
    A[n - 1, 0] = -alpha
    B[n - 1, :] = 1.0
    return CouplingPair(A, B)


def delta_prime(n: int, beta: float) -> CouplingPair:
    """Equal inward derivatives plus sum of vertex values equal to beta times the derivative."""
    if not np.isfinite(beta):
        raise CouplingError(f"delta-prime strength must be finite, got {beta}")
    A = np.zeros((n, n), dtype=complex)
    B = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):
        B[i, i] = 1.0
        B[i, i + 1] = -1.0
    A[n - 1, :] = 1.0
    B[n - 1, 0] = -beta
    return CouplingPair(A, B)


_PRESETS = {
    "kirchhoff": kirchhoff,
    "dirichlet": dirichlet,
    "neumann": neumann,
    "delta": delta,
    "delta_prime": delta_prime,
}


def preset(kind: str, n: int, **params: float) -> CouplingPair:
    """Build a named coupling; delta takes alpha=, delta_prime takes beta=."""
    if n < 2:
        raise CouplingError(f"need at least 2 edges, got n={n}")
    try:
        factory = _PRESETS[kind]
    except KeyError:
        raise CouplingError(f"unknown preset {kind!r}; choose from {sorted(_PRESETS)}") from None
    return factory(n, **params)


@dataclass(frozen=True)
class ScatteringSample:
    """Scattering matrix G(k) = -(A + ikB)^{-1}(A - ikB) at one wavenumber."""

    k: complex
    G: np.ndarray


def scattering_matrix(pair: CouplingPair, k: complex) -> ScatteringSample:
    M = pair.A + 1j * k * pair.B
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise PoleError(k, float(sv[-1] / max(sv[0], 1e-300)))
    G = -np.linalg.solve(M, pair.A - 1j * k * pair.B)
    return ScatteringSample(k=k, G=G)


def scattering_matrices(pair: CouplingPair, ks: np.ndarray) -> np.ndarray:
    """Batched G(k) over an array of wavenumbers; shape (len(ks), n, n)."""
    ks = np.asarray(ks, dtype=complex)
    lhs = pair.A[None, :, :] + 1j * ks[:, None, None] * pair.B[None, :, :]
    rhs = pair.A[None, :, :] - 1j * ks[:, None, None] * pair.B[None, :, :]
    return -np.linalg.solve(lhs, rhs)


def equivalent(p1: CouplingPair, p2: CouplingPair) -> bool:
    """True when both pairs define the same vertex condition.

    Decided by comparing scattering matrices at the probe wavenumber k = 1,
    which is never a pole and determines the coupling.
    """
    require_valid(p1)
    require_valid(p2)
    if p1.n != p2.n:
        raise CouplingError(f"edge counts differ: {p1.n} vs {p2.n}")
    G1 = scattering_matrix(p1, 1.0).G
    G2 = scattering_matrix(p2, 1.0).G
    return bool(np.abs(G1 - G2).max() < EQUIVALENCE_TOL)


@dataclass(frozen=True)
class ProjectorDecomposition:
    """Orthogonal splitting of the vertex condition into Dirichlet/Neumann/Robin parts.

    P_D projects onto ker B (clamped boundary values), P_N onto ker A (free
    derivatives), P_R supports the Robin relation P_R u'(0) = Lambda P_R u(0).
    Lambda is stored as an n x n Hermitian matrix supported on range(P_R).
    """

    P_D: np.ndarray
    P_N: np.ndarray
    P_R: np.ndarray
    Lambda: np.ndarray


def _kernel_projector(M: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the (numerical) right null space of M."""
    u, s, vh = np.linalg.svd(M)
    smax = s[0] if s.size and s[0] > 0 else 1.0
    null_mask = s <= RANK_RTOL * smax
    V = vh.conj().T[:, null_mask]
    return V @ V.conj().T


def _orthonormal_range(P: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis (columns) of the range of a rank-dim orthogonal projector."""
    w, V = np.linalg.eigh(P)
    return V[:, np.argsort(w)[::-1][:dim]]


def projector_decomposition(pair: CouplingPair) -> ProjectorDecomposition:
    require_valid(pair)
    n = pair.n
    P_D = _kernel_projector(pair.B)
    P_N = _kernel_projector(pair.A)
    P_R = np.eye(n) - P_D - P_N
    d_R = int(round(np.trace(P_R).real))

    if d_R == 0:
        Lambda = np.zeros((n, n), dtype=complex)
    else:
        R = _orthonormal_range(P_R, d_R)
        # A R = -C Lambda R and B R = C R for the invertible change of rows C,
        # so (B R) lam = -(A R) determines Lambda in the R basis exactly.
        BR = pair.B @ R
        AR = pair.A @ R
        sv = np.linalg.svd(BR, compute_uv=False)
        if sv[-1] <= 1e-10 * max(sv[0], 1e-300):
            raise DegenerateCouplingError(
                f"Robin block is rank deficient: dim(P_D)={int(round(np.trace(P_D).real))}, "
                f"dim(P_N)={int(round(np.trace(P_N).real))}, dim(P_R)={d_R}"
            )
        lam, *_ = np.linalg.lstsq(BR, -AR, rcond=None)
        herm = float(np.abs(lam - lam.conj().T).max())
        if herm > 1e-8 * max(1.0, float(np.abs(lam).max())):
            raise DegenerateCouplingError(f"Robin operator not Hermitian (residual {herm:.3e})")
        lam = 0.5 * (lam + lam.conj().T)
        if np.linalg.svd(lam, compute_uv=False)[-1] <= 1e-12 * max(1.0, float(np.abs(lam).max())):
            raise DegenerateCouplingError(f"Robin operator singular on its {d_R}-dim subspace")
        Lambda = R @ lam @ R.conj().T

    dec = ProjectorDecomposition(P_D=P_D, P_N=P_N, P_R=P_R, Lambda=Lambda)
    res = decomposition_residual(pair, dec)
    if res > 1e-8:
        raise DegenerateCouplingError(f"projector decomposition residual {res:.3e} exceeds 1e-8")
    return dec


def decomposition_residual(pair: CouplingPair, dec: ProjectorDecomposition, trials: int = 50) -> float:
    """Worst |A f + B f'| over random traces satisfying the three-part conditions."""
    rng = np.random.default_rng(12345)
    n = pair.n
    scale = max(float(np.abs(pair.A).max()), float(np.abs(pair.B).max()), 1.0)
    worst = 0.0
    for _ in range(trials):
        f = rng.normal(size=n) + 1j * rng.normal(size=n)
        g = rng.normal(size=n) + 1j * rng.normal(size=n)
        f = (np.eye(n) - dec.P_D) @ f
        # Neumann part of the derivative vanishes, Dirichlet part is free,
        # Robin part is forced by Lambda.
        g = dec.P_D @ g + dec.Lambda @ (dec.P_R @ f)
        worst = max(worst, float(np.abs(pair.A @ f + pair.B @ g).max()) / scale)
    return worst


@dataclass(frozen=True)
class ScatteringModes:
    """Eigenmode expansion of the vertex scattering matrix.

    G(1) is unitary; diagonalizing it splits the vertex into orthogonal modes on
    which G(k) acts by the Moebius factor (k + i*kappa)/(k - i*kappa).  Modes with
    eigenvalue -1 reflect with factor -1 for every k (no finite pole); kappa = 0
    modes transmit with factor +1.  Poles of G sit at k = i*kappa, so positive
    kappas are exactly the bound-state decay rates.
    """

    kappas: np.ndarray  # per-mode pole parameter, finite entries only
    projectors: np.ndarray  # (n_modes, n, n) orthogonal projectors for finite kappa
    reflector: np.ndarray  # (n, n) projector of the eigenvalue -1 subspace

    @property
    def n(self) -> int:
        return self.reflector.shape[0]

    @property
    def g_infinity(self) -> np.ndarray:
        """Limit of G(k) as |k| grows along the real axis."""
        return np.eye(self.n) - 2 * self.reflector

    def scattering_at(self, k: complex) -> np.ndarray:
        G = -self.reflector.astype(complex).copy()
        for kappa, P in zip(self.kappas, self.projectors):
            g = 1.0 if kappa == 0.0 else (k + 1j * kappa) / (k - 1j * kappa)
            G += g * P
        return G

    def pole_radii(self) -> np.ndarray:
        """Magnitudes |kappa| of the nonzero finite poles, ascending."""
        k = np.abs(self.kappas[self.kappas != 0.0])
        return np.sort(k)


def scattering_modes(pair: CouplingPair) -> ScatteringModes:
    require_valid(pair)
    V = scattering_matrix(pair, 1.0).G
    T, Q = schur(V, output="complex")
    thetas = np.angle(np.diag(T))
    eigs = np.exp(1j * thetas)

    order = np.argsort(thetas)
    groups: list[list[int]] = []
    for idx in order:
        if groups and abs(eigs[idx] - eigs[groups[-1][-1]]) < 1e-8:
            groups[-1].append(idx)
        else:
            groups.append([idx])

    kappas: list[float] = []
    projectors: list[np.ndarray] = []
    reflector = np.zeros((pair.n, pair.n), dtype=complex)
    for idxs in groups:
        P = Q[:, idxs] @ Q[:, idxs].conj().T
        theta = float(np.angle(np.mean(eigs[idxs])))
        if abs(abs(theta) - np.pi) < REFLECTOR_ANGLE_TOL:
            reflector += P
        else:
            kappas.append(float(np.tan(theta / 2.0)))
            projectors.append(P)

    if projectors:
        proj_arr = np.stack(projectors)
        kap_arr = np.array(kappas)
    else:
        proj_arr = np.zeros((0, pair.n, pair.n), dtype=complex)
        kap_arr = np.zeros(0)
    return ScatteringModes(kappas=kap_arr, projectors=proj_arr, reflector=reflector)


def random_coupling(
    n: int, rng: np.random.Generator, scramble: bool = True, max_tries: int = 100
) -> CouplingPair:
    """Random valid coupling from a Haar unitary U via A = i(U - I), B = U + I.

    That construction satisfies both self-adjointness conditions for every
    unitary U; an optional well-conditioned row scramble exercises non-canonical
    representatives.  Draws failing the numeric check are redrawn.
    """
    for _ in range(max_tries):
        Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        U, _ = np.linalg.qr(Z)
        A = 1j * (U - np.eye(n))
        B = U + np.eye(n)
        if scramble:
            C = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            C += 3.0 * np.eye(n)  # keep the scramble well conditioned
            if np.linalg.cond(C) > 1e3:
                continue
            A = C @ A
            B = C @ B
        pair = CouplingPair(A, B)
        if validate(pair).ok:
            return pair
    raise CouplingError(f"failed to draw a valid random coupling after {max_tries} tries")
