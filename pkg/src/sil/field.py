"""Scalar and vector functions sampled at the nodes of a GridDomain.

Integrals are midpoint sums over cell centers, gradients are central
differences where both face neighbors exist and second-order one-sided
stencils otherwise, so smooth quantities carry an O(h^2) discretization
error away from re-entrant boundaries.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid_domain import GridDomain


def _same_domain(a, b) -> None:
    if a.domain is not b.domain and a.domain != b.domain:
        raise ValueError("fields live on different domains")


@dataclass(frozen=True)
class Field:
    """One real value per active cell, aligned with ``domain.cells``."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if vals.shape[0] != self.domain.n_cells:
            raise ValueError(
                f"expected {self.domain.n_cells} values, got {vals.shape[0]}")
        if not np.isfinite(vals).all():
            raise ValueError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @staticmethod
    def from_function(domain: GridDomain, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Sample ``fn`` at the cell centers; ``fn`` maps (n, dim) -> (n,)."""
        vals = np.broadcast_to(np.asarray(fn(domain.centers), dtype=float),
                               (domain.n_cells,))
        return Field(domain, vals.copy())

    @staticmethod
    def constant(domain: GridDomain, value: float) -> "Field":
        return Field(domain, np.full(domain.n_cells, float(value)))

    # pointwise algebra -----------------------------------------------------

    def __add__(self, other: "Field") -> "Field":
        _same_domain(self, other)
        return Field(self.domain, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_domain(self, other)
        return Field(self.domain, self.values - other.values)

    def __neg__(self) -> "Field":
        return Field(self.domain, -self.values)

    def __mul__(self, other):
        if isinstance(other, Field):
            _same_domain(self, other)
            return Field(self.domain, self.values * other.values)
        return Field(self.domain, self.values * float(other))

    __rmul__ = __mul__

    def __abs__(self) -> "Field":
        return Field(self.domain, np.abs(self.values))

    def minimum(self, other: "Field") -> "Field":
        _same_domain(self, other)
        return Field(self.domain, np.minimum(self.values, other.values))

    def maximum(self, other: "Field") -> "Field":
        _same_domain(self, other)
        return Field(self.domain, np.maximum(self.values, other.values))

    def at(self, pts: np.ndarray) -> np.ndarray:
        """Multilinear interpolation at arbitrary points.

        Stencil corners that fall outside the domain are dropped and the
        remaining weights renormalized, so constants interpolate exactly up
        to the rasterized boundary.  Points with no active corner node give 0.
        """
        return _interpolate(self.domain, self.values[:, None], pts)[0][:, 0]

    def at_with_coverage(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated values plus the mask of points with an active stencil."""
        vals, covered = _interpolate(self.domain, self.values[:, None], pts)
        return vals[:, 0], covered

    def to_csv(self, path) -> None:
        _write_csv(path, self.domain, self.values[:, None], ["value"])

    @staticmethod
    def from_csv(path, domain: GridDomain) -> "Field":
        data = _read_csv(path, domain, 1)
        return Field(domain, data[:, 0])


@dataclass(frozen=True)
class VectorField:
    """One real dim-vector per active cell."""

    domain: GridDomain
    values: np.ndarray  # (n, dim)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(self.domain.n_cells,
                                                            self.domain.dim)
        if not np.isfinite(vals).all():
            raise ValueError("vector field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @staticmethod
    def from_function(domain: GridDomain, fn) -> "VectorField":
        return VectorField(domain, np.asarray(fn(domain.centers), dtype=float))

    def magnitude(self) -> Field:
        return Field(self.domain, np.linalg.norm(self.values, axis=1))

    def __add__(self, other: "VectorField") -> "VectorField":
        _same_domain(self, other)
        return VectorField(self.domain, self.values + other.values)

    def __sub__(self, other: "VectorField") -> "VectorField":
        _same_domain(self, other)
        return VectorField(self.domain, self.values - other.values)

    def __mul__(self, other) -> "VectorField":
        return VectorField(self.domain, self.values * float(other))

    __rmul__ = __mul__

    def at(self, pts: np.ndarray) -> np.ndarray:
        return _interpolate(self.domain, self.values, pts)[0]

    def to_csv(self, path) -> None:
        names = [f"v{d}" for d in range(self.domain.dim)]
        _write_csv(path, self.domain, self.values, names)

    @staticmethod
    def from_csv(path, domain: GridDomain) -> "VectorField":
        return VectorField(domain, _read_csv(path, domain, domain.dim))


# -- calculus ----------------------------------------------------------------


def gradient(u: Field) -> VectorField:
    """Finite-difference gradient.

    Central differences where both face neighbors are active; otherwise a
    three-point (or two-point) one-sided stencil into the domain; isolated
    cells along an axis get a zero component.
    """
    dom = u.domain
    v = u.values
    h = dom.h
    out = np.zeros((dom.n_cells, dom.dim))
    for d in range(dom.dim):
        plus, minus = dom.neighbor_rows[d]
        step = np.zeros(dom.dim, dtype=np.int64)
        step[d] = 2
        plus2 = dom.rows_of_indices(dom.cells + step)
        minus2 = dom.rows_of_indices(dom.cells - step)
        has_p, has_m = plus >= 0, minus >= 0
        g = np.zeros(dom.n_cells)

        central = has_p & has_m
        g[central] = (v[plus[central]] - v[minus[central]]) / (2.0 * h)

        fwd = has_p & ~has_m
        fwd2 = fwd & (plus2 >= 0)
        fwd1 = fwd & ~fwd2
        g[fwd2] = (-3.0 * v[fwd2] + 4.0 * v[plus[fwd2]] - v[plus2[fwd2]]) / (2.0 * h)
        g[fwd1] = (v[plus[fwd1]] - v[fwd1]) / h

        bwd = has_m & ~has_p
        bwd2 = bwd & (minus2 >= 0)
        bwd1 = bwd & ~bwd2
        g[bwd2] = (3.0 * v[bwd2] - 4.0 * v[minus[bwd2]] + v[minus2[bwd2]]) / (2.0 * h)
        g[bwd1] = (v[bwd1] - v[minus[bwd1]]) / h

        out[:, d] = g
    return VectorField(dom, out)


def lp_pow_sum(u, p: float) -> float:
    """Midpoint sum of |u|^p over the domain (the p-th power of the norm)."""
    if p < 1:
        raise ValueError(f"p must be at least 1, got {p}")
    if isinstance(u, VectorField):
        mags = np.linalg.norm(u.values, axis=1)
    else:
        mags = np.abs(u.values)
    return float(np.sum(mags**p)) * u.domain.h**u.domain.dim


def lp_norm(u, p: float) -> float:
    """L^p norm of a Field or VectorField (euclidean magnitude pointwise)."""
    return lp_pow_sum(u, p) ** (1.0 / p)


def w1p_pow_sum(u: Field, p: float) -> float:
    return lp_pow_sum(u, p) + lp_pow_sum(gradient(u), p)


def w1p_norm(u: Field, p: float) -> float:
    """Sobolev norm (integral of |u|^p plus integral of |grad u|^p)^(1/p)."""
    return w1p_pow_sum(u, p) ** (1.0 / p)


def is_compactly_supported(u: Field, width: int = 1) -> bool:
    """True when ``u`` vanishes on the cells of the boundary layer."""
    mask = u.domain.boundary_layer_mask(width)
    return not np.any(u.values[mask] != 0.0)


# -- generators --------------------------------------------------------------


def exponential_probe(domain: GridDomain, axis: int, sign: int, p: float) -> Field:
    """Nodal samples of exp(+/- alpha x_axis) with alpha = (p-1)^(-1/p).

    These are exact classical solutions of the p-Laplace equation
    div(|grad u|^(p-2) grad u) = |u|^(p-2) u, and they are the probes the
    operator reconstruction sends through a black-box operator.
    """
    if not (p > 1):
        raise ValueError(f"probe exponent requires p > 1, got {p}")
    if not (0 <= axis < domain.dim):
        raise ValueError(f"axis {axis} out of range for dim {domain.dim}")
    if sign not in (-1, 1):
        raise ValueError("sign must be -1 or +1")
    alpha = probe_rate(p)
    return Field(domain, np.exp(sign * alpha * domain.centers[:, axis]))


def probe_rate(p: float) -> float:
    """Exponential rate (p-1)^(-1/p) of the probe solutions."""
    return (p - 1.0) ** (-1.0 / p)


def ball_fits(domain: GridDomain, center, radius: float) -> bool:
    """Whether every cell touched by the closed ball is active."""
    center = np.asarray(center, dtype=float).reshape(domain.dim)
    o = np.asarray(domain.origin)
    k_lo = np.floor((center - radius - o) / domain.h).astype(np.int64)
    k_hi = np.floor((center + radius - o) / domain.h).astype(np.int64)
    axes = [np.arange(a, b + 1) for a, b in zip(k_lo, k_hi)]
    if domain.dim == 1:
        cand = axes[0][:, None]
    else:
        cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    box_lo = o + domain.h * cand
    nearest = np.clip(center, box_lo, box_lo + domain.h)
    touched = np.sum((nearest - center) ** 2, axis=1) <= radius**2
    return bool(domain.contains_indices(cand[touched]).all())


def bump(domain: GridDomain, center, radius: float) -> Field:
    """Quartic bump (1 - (r/R)^2)^2 supported on a ball inside the domain."""
    if not ball_fits(domain, center, radius):
        raise ValueError("bump support is not contained in the domain")
    center = np.asarray(center, dtype=float).reshape(domain.dim)
    r2 = np.sum((domain.centers - center) ** 2, axis=1) / radius**2
    vals = np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0)
    return Field(domain, vals)


def hat(domain: GridDomain, center, halfwidth) -> Field:
    """Piecewise-linear tent, a product of 1 - |x_d - c_d| / w_d clipped at 0.

    The gradient kink makes the induced quadrature error genuinely first
    order in h, which the convergence checks rely on.
    """
    center = np.asarray(center, dtype=float).reshape(domain.dim)
    w = np.broadcast_to(np.asarray(halfwidth, dtype=float), (domain.dim,))
    if not (w > 0).all():
        raise ValueError("halfwidth must be positive")
    factors = np.clip(1.0 - np.abs(domain.centers - center) / w, 0.0, None)
    return Field(domain, np.prod(factors, axis=1))


def random_smooth_field(domain: GridDomain, rng: np.random.Generator,
                        terms: int = 3, max_freq: int = 2,
                        amplitude: float = 1.0) -> Field:
    """Low-frequency random trigonometric polynomial, O(amplitude) values."""
    x = domain.centers
    vals = np.full(domain.n_cells, amplitude * rng.uniform(-0.5, 0.5))
    for _ in range(terms):
        k = rng.integers(-max_freq, max_freq + 1, size=domain.dim)
        if not np.any(k):
            k[rng.integers(domain.dim)] = 1
        a = amplitude * rng.uniform(0.2, 1.0) / terms
        phase = rng.uniform(0.0, 2.0 * np.pi)
        vals += a * np.cos(2.0 * np.pi * (x @ k) + phase)
    return Field(domain, vals)


# -- CSV dump format ----------------------------------------------------------


def _index_names(dim: int) -> list[str]:
    return ["i", "j"][:dim]


def _coord_names(dim: int) -> list[str]:
    return ["x", "y"][:dim]


def _write_csv(path, domain: GridDomain, columns: np.ndarray, names: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_index_names(domain.dim) + _coord_names(domain.dim) + names)
        for cell, center, row in zip(domain.cells, domain.centers, columns):
            writer.writerow([*map(int, cell),
                             *(repr(float(c)) for c in center),
                             *(repr(float(v)) for v in row)])


def _read_csv(path, domain: GridDomain, n_values: int) -> np.ndarray:
    dim = domain.dim
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected_lead = _index_names(dim) + _coord_names(dim)
        if header[: 2 * dim] != expected_lead or len(header) != 2 * dim + n_values:
            raise ValueError(f"unexpected CSV header {header}")
        idx = []
        vals = []
        for line in reader:
            idx.append([int(v) for v in line[:dim]])
            vals.append([float(v) for v in line[2 * dim: 2 * dim + n_values]])
    rows = domain.rows_of_indices(np.asarray(idx, dtype=np.int64))
    if (rows < 0).any():
        raise ValueError("CSV contains cells outside the domain")
    if len(set(rows.tolist())) != domain.n_cells:
        raise ValueError("CSV does not cover every cell of the domain")
    out = np.empty((domain.n_cells, n_values))
    out[rows] = np.asarray(vals, dtype=float)
    return out


def _interpolate(domain: GridDomain, columns: np.ndarray,
                 pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(pts, dtype=float).reshape(-1, domain.dim)
    t = (pts - np.asarray(domain.origin)) / domain.h - 0.5
    base = np.floor(t).astype(np.int64)
    frac = t - base
    acc = np.zeros((pts.shape[0], columns.shape[1]))
    wsum = np.zeros(pts.shape[0])
    for corner in itertools.product((0, 1), repeat=domain.dim):
        idx = base + np.asarray(corner, dtype=np.int64)
        w = np.ones(pts.shape[0])
        for d, c in enumerate(corner):
            w *= frac[:, d] if c else 1.0 - frac[:, d]
        rows = domain.rows_of_indices(idx)
        ok = rows >= 0
        acc[ok] += w[ok, None] * columns[rows[ok]]
        wsum[ok] += w[ok]
    covered = wsum > 0
    acc[covered] /= wsum[covered, None]
    acc[~covered] = 0.0
    return acc, covered
