"""Star-graph grids, sampled functions, Lebesgue/mixed norms and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np


class GridError(ValueError):
    """Malformed grid or grid mismatch between operands."""


class NormDomainError(ValueError):
    """Exponent outside the admissible range."""


@dataclass(frozen=True)
class StarGrid:
    """Uniform grid shared by all edges: samples at i*h, i = 0..m-1."""

    n: int
    h: float
    m: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise GridError(f"need at least 2 edges, got n={self.n}")
        if self.m < 3:
            raise GridError(f"need at least 3 samples per edge, got m={self.m}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise GridError(f"grid spacing must be positive and finite, got h={self.h}")

    @property
    def length(self) -> float:
        """Truncation length L = (m-1)*h."""
        return (self.m - 1) * self.h

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.m) * self.h

    @property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.m, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    @staticmethod
    def from_length(n: int, h: float, length: float) -> "StarGrid":
        return StarGrid(n=n, h=h, m=int(round(length / h)) + 1)


@dataclass(frozen=True)
class GraphFunction:
    """Complex samples on a star grid; values[j, i] = u_j(i*h)."""

    grid: StarGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(self.values, dtype=complex)
        if v.shape != (self.grid.n, self.grid.m):
            raise GridError(
                f"values shape {v.shape} does not match grid ({self.grid.n}, {self.grid.m})"
            )
        if not np.all(np.isfinite(v.view(float))):
            raise GridError("values contain non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @staticmethod
    def zeros(grid: StarGrid) -> "GraphFunction":
        return GraphFunction(grid, np.zeros((grid.n, grid.m), dtype=complex))

    @staticmethod
    def from_callable(
        grid: StarGrid, f: Callable[[np.ndarray], np.ndarray] | Sequence[Callable]
    ) -> "GraphFunction":
        """Sample f(x) on every edge, or one callable per edge."""
        x = grid.x
        if callable(f):
            row = np.asarray(f(x), dtype=complex)
            vals = np.tile(row, (grid.n, 1))
        else:
            if len(f) != grid.n:
                raise GridError(f"expected {grid.n} edge callables, got {len(f)}")
            vals = np.stack([np.asarray(fj(x), dtype=complex) for fj in f])
        return GraphFunction(grid, vals)

    @property
    def vertex_values(self) -> np.ndarray:
        return self.values[:, 0]

    def with_values(self, values: np.ndarray) -> "GraphFunction":
        return GraphFunction(self.grid, values)

    def __add__(self, other: "GraphFunction") -> "GraphFunction":
        self._check_same_grid(other)
        return GraphFunction(self.grid, self.values + other.values)

    def __sub__(self, other: "GraphFunction") -> "GraphFunction":
        self._check_same_grid(other)
        return GraphFunction(self.grid, self.values - other.values)

    def __mul__(self, c: complex) -> "GraphFunction":
        return GraphFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def _check_same_grid(self, other: "GraphFunction") -> None:
        if self.grid != other.grid:
            raise GridError(f"grid mismatch: {self.grid} vs {other.grid}")


def edge_derivative(u: GraphFunction) -> np.ndarray:
    """First derivative per edge: central interior, second-order one-sided ends."""
    v = u.values
    h = u.grid.h
    d = np.empty_like(v)
    d[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2 * h)
    d[:, 0] = (-3 * v[:, 0] + 4 * v[:, 1] - v[:, 2]) / (2 * h)
    d[:, -1] = (3 * v[:, -1] - 4 * v[:, -2] + v[:, -3]) / (2 * h)
    return d


def vertex_derivative(u: GraphFunction) -> np.ndarray:
    """Inward derivative u'_j(0+) by the second-order one-sided stencil."""
    v = u.values
    return (-3 * v[:, 0] + 4 * v[:, 1] - v[:, 2]) / (2 * u.grid.h)


def lp_norm(u: GraphFunction, p: float) -> float:
    """L^p norm over the graph: composite trapezoid per edge, summed over edges."""
    if p != math.inf and p < 1:
        raise NormDomainError(f"exponent must satisfy p >= 1, got {p}")
    a = np.abs(u.values)
    if p == math.inf:
        return float(a.max())
    w = u.grid.trapezoid_weights
    total = float(np.sum(a**p * w))
    return total ** (1.0 / p)


def mixed_norm(
    snapshots: Sequence[GraphFunction], times: Sequence[float], pair: "AdmissiblePair"
) -> float:
    """Space-time norm: L^q in time (trapezoid) of the spatial L^r norms."""
    if len(snapshots) < 2:
        raise NormDomainError("need at least 2 snapshots")
    if len(snapshots) != len(times):
        raise NormDomainError("snapshots and times must have equal length")
    t = np.asarray(times, dtype=float)
    if np.any(np.diff(t) <= 0):
        raise NormDomainError("times must be strictly increasing")
    r = float(pair.r) if pair.r != math.inf else math.inf
    spatial = np.array([lp_norm(u, r) for u in snapshots])
    if pair.q == math.inf:
        return float(spatial.max())
    q = float(pair.q)
    return float(np.trapezoid(spatial**q, t) ** (1.0 / q))


def _as_exponent(value) -> Fraction | float:
    """Exact exponent representation: Fraction for finite values, inf passes through."""
    if value == math.inf:
        return math.inf
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(value)  # exact binary value
    raise NormDomainError(f"cannot interpret exponent {value!r}")


@dataclass(frozen=True)
class AdmissiblePair:
    """Exponent pair (q, r) on the sharp 1/2-admissibility line 1/q = (1/2)(1/2 - 1/r)."""

    q: Fraction | float
    r: Fraction | float

    def __post_init__(self) -> None:
        q = _as_exponent(self.q)
        r = _as_exponent(self.r)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        for name, e in (("q", q), ("r", r)):
            if e != math.inf and not 2 <= e:
                raise NormDomainError(f"{name}={e} must lie in [2, inf]")
        inv_q = 0 if q == math.inf else Fraction(1, 1) / q
        inv_r = 0 if r == math.inf else Fraction(1, 1) / r
        if inv_q != Fraction(1, 2) * (Fraction(1, 2) - inv_r):
            raise NormDomainError(f"(q, r) = ({q}, {r}) violates 1/q = (1/2)(1/2 - 1/r)")

    def as_floats(self) -> tuple[float, float]:
        return (float(self.q), float(self.r))


def admissible_pair_for(p: float) -> AdmissiblePair:
    """Admissible pair (4(p+1)/(p-1), p+1) attached to a nonlinearity exponent p in (1, 5)."""
    if not 1 < p < 5:
        raise NormDomainError(f"nonlinearity exponent must lie in (1, 5), got {p}")
    pf = _as_exponent(float(p))
    return AdmissiblePair(q=4 * (pf + 1) / (pf - 1), r=pf + 1)


def write_csv(u: GraphFunction, path: str | Path, t: float | None = None) -> None:
    """Write samples as CSV columns (t,) edge, x, re, im."""
    path = Path(path)
    x = u.grid.x
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["edge", "x", "re", "im"]
        if t is not None:
            header = ["t"] + header
        writer.writerow(header)
        for j in range(u.grid.n):
            for i in range(u.grid.m):
                row = [j, f"{x[i]:.17g}", f"{u.values[j, i].real:.17g}", f"{u.values[j, i].imag:.17g}"]
                if t is not None:
                    row = [f"{t:.17g}"] + row
                writer.writerow(row)


def read_csv(path: str | Path) -> GraphFunction:
    """Read a GraphFunction written by write_csv; the grid is inferred and checked."""
    path = Path(path)
    per_edge: dict[int, list[tuple[float, complex]]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"edge", "x", "re", "im"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise GridError(f"CSV {path} must carry columns edge, x, re, im")
        for row in reader:
            j = int(row["edge"])
            per_edge.setdefault(j, []).append(
                (float(row["x"]), complex(float(row["re"]), float(row["im"])))
            )
    if not per_edge:
        raise GridError(f"CSV {path} holds no samples")
    edges = sorted(per_edge)
    if edges != list(range(len(edges))):
        raise GridError(f"edge indices must be 0..n-1, got {edges}")
    columns = []
    xref = None
    for j in edges:
        rows = sorted(per_edge[j])
        x = np.array([p for p, _ in rows])
        if xref is None:
            xref = x
            if len(x) < 3:
                raise GridError("need at least 3 samples per edge")
            h = x[1] - x[0]
            if x[0] != 0.0:
                raise GridError("edge samples must start at x = 0")
            if np.max(np.abs(np.diff(x) - h)) > 1e-9 * max(h, 1.0):
                raise GridError("non-uniform grid spacing in CSV input")
        elif len(x) != len(xref) or np.max(np.abs(x - xref)) > 1e-9:
            raise GridError(f"edge {j} grid differs from edge 0")
        columns.append(np.array([v for _, v in rows]))
    h = float(xref[1] - xref[0])
    grid = StarGrid(n=len(edges), h=h, m=len(xref))
    return GraphFunction(grid, np.stack(columns))


def gaussian_data(grid: StarGrid, center: float = 3.0, width: float = 1.0, amplitude: complex = 1.0) -> GraphFunction:
    return GraphFunction.from_callable(grid, lambda x: amplitude * np.exp(-(((x - center) / width) ** 2)))


def sech_data(grid: StarGrid, amplitude: complex = 1.0, scale: float = 1.0) -> GraphFunction:
    return GraphFunction.from_callable(grid, lambda x: amplitude / np.cosh(x / scale))


def exponential_data(grid: StarGrid, rate: float = 1.0, amplitude: complex = 1.0) -> GraphFunction:
    return GraphFunction.from_callable(grid, lambda x: amplitude * np.exp(-rate * x))
