"""Bounded open sets in R^1 and R^2 rasterized on uniform grids.

A domain is stored as a set of active integer cells on a grid of width ``h``.
Cell ``k`` covers ``origin + h*k + [0, h)^dim`` and its node (sample point)
sits at the cell center.  A cell belongs to the rasterization of an analytic
set exactly when its center does, which keeps the measure error of smooth
regions at one boundary layer, ``O(h * perimeter)``.
"""

from __future__ import annotations

import itertools
import math
import os
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

DEFAULT_CELL_BUDGET = 1_000_000

_ORTHO_TOL = 1e-12


def cell_budget() -> int:
    """Maximum number of cells any rasterization may produce.

    Overridable through the ``SIL_CELL_BUDGET`` environment variable.
    """
    raw = os.environ.get("SIL_CELL_BUDGET")
    if raw is None:
        return DEFAULT_CELL_BUDGET
    return int(float(raw))


def _check_budget(n: int, what: str) -> None:
    budget = cell_budget()
    if n > budget:
        raise ValueError(f"{what} needs {n} cells, exceeding the budget of {budget}")


def _as_point(x, dim: int | None = None) -> tuple[float, ...]:
    if np.isscalar(x):
        pt = (float(x),)
    else:
        pt = tuple(float(v) for v in x)
    if dim is not None and len(pt) != dim:
        raise ValueError(f"expected a point of dimension {dim}, got {pt}")
    return pt


@dataclass(frozen=True)
class GridDomain:
    """Nonempty finite set of active cells on a uniform grid."""

    dim: int
    h: float
    origin: tuple[float, ...]
    cells: np.ndarray  # (n, dim) int64, sorted lexicographically

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not (self.h > 0):
            raise ValueError(f"cell width must be positive, got {self.h}")
        object.__setattr__(self, "origin", _as_point(self.origin, self.dim))
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, self.dim)
        if cells.shape[0] == 0:
            raise ValueError("a domain must contain at least one cell")
        cells = np.unique(cells, axis=0)  # unique rows come back lexsorted
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    # -- identity ---------------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridDomain):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.h == other.h
            and self.origin == other.origin
            and self.cells.shape == other.cells.shape
            and bool(np.array_equal(self.cells, other.cells))
        )

    def __hash__(self) -> int:
        return hash((self.dim, self.h, self.origin, self.cells.tobytes()))

    # -- basic geometry ---------------------------------------------------

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def measure(self) -> float:
        """Lebesgue measure of the rasterization, |active| * h^dim."""
        return self.n_cells * self.h**self.dim

    @cached_property
    def centers(self) -> np.ndarray:
        """(n, dim) array of cell centers; these are the field nodes."""
        pts = np.asarray(self.origin) + self.h * (self.cells + 0.5)
        pts.setflags(write=False)
        return pts

    @cached_property
    def index_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.cells.min(axis=0), self.cells.max(axis=0)

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Closed physical bounding box of the active cells."""
        lo, hi = self.index_bounds
        o = np.asarray(self.origin)
        return o + self.h * lo, o + self.h * (hi + 1)

    @cached_property
    def _key_data(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        lo, hi = self.index_bounds
        span = hi - lo + 1
        strides = np.ones(self.dim, dtype=np.int64)
        for d in range(self.dim - 2, -1, -1):
            strides[d] = strides[d + 1] * span[d + 1]
        keys = (self.cells - lo) @ strides
        order = np.argsort(keys, kind="stable")
        return lo, strides, keys[order], order

    def _keys_of(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.index_bounds
        in_box = np.all((idx >= lo) & (idx <= hi), axis=1)
        lo_, strides, _, _ = self._key_data
        keys = (idx - lo_) @ strides
        return keys, in_box

    def rows_of_indices(self, idx: np.ndarray) -> np.ndarray:
        """Row positions of the given integer cells, -1 where absent."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, self.dim)
        keys, in_box = self._keys_of(idx)
        _, _, sorted_keys, order = self._key_data
        pos = np.searchsorted(sorted_keys, keys)
        pos[pos >= len(sorted_keys)] = 0
        hit = in_box & (sorted_keys[pos] == keys)
        rows = np.where(hit, order[pos], -1)
        return rows

    def contains_indices(self, idx: np.ndarray) -> np.ndarray:
        return self.rows_of_indices(idx) >= 0

    def index_of_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        return np.floor((pts - np.asarray(self.origin)) / self.h).astype(np.int64)

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        """Membership of physical points in the rasterized set."""
        return self.contains_indices(self.index_of_points(pts))

    # -- neighborhood structure --------------------------------------------

    @cached_property
    def neighbor_rows(self) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
        """Per axis, rows of the +/- face neighbors of every cell (-1 absent)."""
        out = []
        for d in range(self.dim):
            step = np.zeros(self.dim, dtype=np.int64)
            step[d] = 1
            out.append(
                (self.rows_of_indices(self.cells + step),
                 self.rows_of_indices(self.cells - step))
            )
        return tuple(out)

    def boundary_layer_mask(self, width: int = 1) -> np.ndarray:
        """Cells within ``width`` face steps of a missing neighbor."""
        if width < 1:
            raise ValueError("width must be at least 1")
        mask = np.zeros(self.n_cells, dtype=bool)
        for plus, minus in self.neighbor_rows:
            mask |= (plus < 0) | (minus < 0)
        for _ in range(width - 1):
            grown = mask.copy()
            for plus, minus in self.neighbor_rows:
                grown[plus >= 0] |= mask[plus[plus >= 0]]
                grown[minus >= 0] |= mask[minus[minus >= 0]]
            mask = grown
        return mask


def make_box(lo, hi, h: float) -> GridDomain:
    """Rasterize the open box ``(lo, hi)`` with cell width ``h``."""
    lo = _as_point(lo)
    hi = _as_point(hi, len(lo))
    if not (h > 0):
        raise ValueError(f"cell width must be positive, got {h}")
    counts = []
    for a, b in zip(lo, hi):
        if not (b > a):
            raise ValueError(f"box extent must be positive, got ({a}, {b})")
        n = math.ceil((b - a) / h - 0.5)
        if n < 1:
            raise ValueError(f"box extent ({a}, {b}) is below one cell at h={h}")
        counts.append(n)
    total = math.prod(counts)
    _check_budget(total, "box rasterization")
    axes = [np.arange(n, dtype=np.int64) for n in counts]
    if len(axes) == 1:
        cells = axes[0][:, None]
    else:
        cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    return GridDomain(len(lo), float(h), lo, cells)


def _subtract_boxes(domain: GridDomain, boxes: Iterable[tuple]) -> GridDomain:
    keep = np.ones(domain.n_cells, dtype=bool)
    for lo, hi in boxes:
        lo = np.asarray(_as_point(lo, domain.dim))
        hi = np.asarray(_as_point(hi, domain.dim))
        inside = np.all((domain.centers > lo) & (domain.centers < hi), axis=1)
        keep &= ~inside
    if not keep.any():
        raise ValueError("subtraction removed every cell of the domain")
    return GridDomain(domain.dim, domain.h, domain.origin, domain.cells[keep])


def connected_components(domain: GridDomain) -> list[GridDomain]:
    """Partition of the active cells by face adjacency.

    The parts are returned in lexicographic order of their smallest cell,
    share ``dim``/``h``/``origin`` with the input, and split the active
    cells exactly (no cell lost or duplicated).
    """
    rows_i = []
    rows_j = []
    for plus, _ in domain.neighbor_rows:
        src = np.nonzero(plus >= 0)[0]
        rows_i.append(src)
        rows_j.append(plus[src])
    if rows_i:
        i = np.concatenate(rows_i)
        j = np.concatenate(rows_j)
    else:  # pragma: no cover - dim >= 1 always yields lists
        i = j = np.zeros(0, dtype=np.int64)
    n = domain.n_cells
    graph = sparse.coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
    n_comp, labels = csgraph.connected_components(graph, directed=False)
    parts = []
    for lbl in range(n_comp):
        parts.append(GridDomain(domain.dim, domain.h, domain.origin,
                                domain.cells[labels == lbl]))
    parts.sort(key=lambda part: tuple(part.cells[0]))
    return parts


def is_topologically_regular(domain: GridDomain) -> bool:
    """Grid proxy for "equal to the interior of the closure".

    Fails exactly when some inactive cell has all of its face neighbors
    active, i.e. the rasterization has a slit or puncture thinner than one
    cell that closure would swallow.
    """
    candidates = []
    for d in range(domain.dim):
        step = np.zeros(domain.dim, dtype=np.int64)
        step[d] = 1
        candidates.append(domain.cells + step)
        candidates.append(domain.cells - step)
    cand = np.unique(np.concatenate(candidates, axis=0), axis=0)
    cand = cand[~domain.contains_indices(cand)]
    if cand.size == 0:
        return True
    surrounded = np.ones(cand.shape[0], dtype=bool)
    for d in range(domain.dim):
        step = np.zeros(domain.dim, dtype=np.int64)
        step[d] = 1
        surrounded &= domain.contains_indices(cand + step)
        surrounded &= domain.contains_indices(cand - step)
    return not surrounded.any()


# -- rigid motions ---------------------------------------------------------


@dataclass(frozen=True)
class RigidMotion:
    """Orthogonal matrix plus translation, with a weight sign for operators."""

    Q: np.ndarray
    b: np.ndarray
    sign: int = 1

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError(f"Q must be square, got shape {Q.shape}")
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if b.shape[0] != Q.shape[0]:
            raise ValueError("translation dimension does not match Q")
        dev = np.abs(Q.T @ Q - np.eye(Q.shape[0])).max()
        if dev > _ORTHO_TOL:
            raise ValueError(f"Q is not orthogonal: max |Q^T Q - I| = {dev:.3e}")
        if abs(abs(float(np.linalg.det(Q))) - 1.0) > _ORTHO_TOL:
            raise ValueError("Q must have |det Q| = 1")
        if self.sign not in (-1, 1):
            raise ValueError(f"sign must be -1 or +1, got {self.sign}")
        Q.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.Q.shape[0]

    @staticmethod
    def identity(dim: int, sign: int = 1) -> "RigidMotion":
        return RigidMotion(np.eye(dim), np.zeros(dim), sign)

    @staticmethod
    def rotation(angle: float, b=(0.0, 0.0), sign: int = 1,
                 reflect: bool = False) -> "RigidMotion":
        """Planar rotation by ``angle``, optionally composed with a flip."""
        c, s = math.cos(angle), math.sin(angle)
        Q = np.array([[c, -s], [s, c]])
        if reflect:
            Q = Q @ np.diag([1.0, -1.0])
        return RigidMotion(Q, np.asarray(b, dtype=float), sign)

    def transform(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        return pts @ self.Q.T + self.b

    def inverse_transform(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
        return (pts - self.b) @ self.Q

    def to_json_dict(self) -> dict:
        return {"Q": self.Q.tolist(), "b": self.b.tolist(), "sign": self.sign}

    @staticmethod
    def from_json_dict(d: dict) -> "RigidMotion":
        return RigidMotion(np.asarray(d["Q"], dtype=float),
                           np.asarray(d["b"], dtype=float),
                           int(d.get("sign", 1)))


def random_rigid_motion(dim: int, rng: np.random.Generator,
                        translation_scale: float = 0.5,
                        allow_reflection: bool = True) -> RigidMotion:
    """Seeded random orthogonal-plus-translation motion for test sweeps."""
    b = rng.uniform(-translation_scale, translation_scale, size=dim)
    sign = 1 if rng.random() < 0.5 else -1
    if dim == 1:
        q = -1.0 if (allow_reflection and rng.random() < 0.5) else 1.0
        return RigidMotion(np.array([[q]]), b, sign)
    reflect = bool(allow_reflection and rng.random() < 0.5)
    return RigidMotion.rotation(rng.uniform(0.0, 2.0 * math.pi), b, sign,
                                reflect=reflect)


def apply_rigid_motion(domain: GridDomain, motion: RigidMotion,
                       h_out: float | None = None) -> GridDomain:
    """Rasterize the image ``{Qx + b : x in domain}`` on a grid of width h_out.

    The output grid has origin ``Q @ origin + b`` so that the identity motion
    reproduces ``domain`` exactly and grid-aligned translations are lossless.
    """
    if motion.dim != domain.dim:
        raise ValueError("motion dimension does not match the domain")
    h_out = domain.h if h_out is None else float(h_out)
    if not (h_out > 0):
        raise ValueError("output cell width must be positive")
    lo, hi = domain.bounding_box
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    img = motion.transform(corners)
    origin_out = tuple(motion.transform(np.asarray(domain.origin)[None, :])[0])
    k_lo = np.floor((img.min(axis=0) - np.asarray(origin_out)) / h_out).astype(np.int64) - 1
    k_hi = np.floor((img.max(axis=0) - np.asarray(origin_out)) / h_out).astype(np.int64) + 1
    total = int(np.prod(k_hi - k_lo + 1))
    _check_budget(total, "rigid-motion image")
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(k_lo, k_hi)]
    if domain.dim == 1:
        cand = axes[0][:, None]
    else:
        cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.dim)
    centers = np.asarray(origin_out) + h_out * (cand + 0.5)
    keep = domain.contains_points(motion.inverse_transform(centers))
    if not keep.any():
        raise ValueError("rigid-motion image contains no cells")
    return GridDomain(domain.dim, h_out, origin_out, cand[keep])


def congruence_check(omega1: GridDomain, omega2: GridDomain,
                     motion: RigidMotion, tol: float) -> tuple[bool, float]:
    """Measure of ``motion(omega2) symm-diff omega1`` against a tolerance.

    The symmetric difference is sampled on the common refinement grid
    (width = min of both cell widths, anchored at ``omega1.origin``) so that
    neither rasterization is favored.  Returns ``(defect <= tol, defect)``.
    """
    if omega1.dim != omega2.dim:
        raise ValueError("domains have different dimensions")
    if motion.dim != omega1.dim:
        raise ValueError("motion dimension does not match the domains")
    h_ref = min(omega1.h, omega2.h)
    lo1, hi1 = omega1.bounding_box
    lo2, hi2 = omega2.bounding_box
    corners = np.array(list(itertools.product(*zip(lo2, hi2))))
    img = motion.transform(corners)
    lo = np.minimum(lo1, img.min(axis=0))
    hi = np.maximum(hi1, img.max(axis=0))
    o = np.asarray(omega1.origin)
    k_lo = np.floor((lo - o) / h_ref).astype(np.int64) - 1
    k_hi = np.floor((hi - o) / h_ref).astype(np.int64) + 1
    total = int(np.prod(k_hi - k_lo + 1))
    _check_budget(total, "congruence refinement grid")
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(k_lo, k_hi)]
    if omega1.dim == 1:
        cand = axes[0][:, None]
    else:
        cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, omega1.dim)
    centers = o + h_ref * (cand + 0.5)
    in_a = omega1.contains_points(centers)
    in_b = omega2.contains_points(motion.inverse_transform(centers))
    defect = float(np.count_nonzero(in_a != in_b)) * h_ref**omega1.dim
    return defect <= tol, defect


# -- builtin analytic domains ------------------------------------------------


def fat_cantor_intervals(total_removed: float, min_length: float) -> list[tuple[float, float]]:
    """Middle intervals removed from (0, 1) by the fat-Cantor construction.

    Stage ``n`` removes ``2^n`` centered intervals of length
    ``(total_removed / 2) * 4^-n``; stages stop once the pieces fall below
    ``min_length``, which is all a grid of that width can resolve.
    """
    if not (0.0 < total_removed < 1.0):
        raise ValueError("total removed mass must lie in (0, 1)")
    removed: list[tuple[float, float]] = []
    pieces = [(0.0, 1.0)]
    n = 0
    while True:
        length = (total_removed / 2.0) * 0.25**n
        if length < min_length:
            break
        next_pieces = []
        for a, b in pieces:
            mid = 0.5 * (a + b)
            removed.append((mid - length / 2.0, mid + length / 2.0))
            next_pieces.append((a, mid - length / 2.0))
            next_pieces.append((mid + length / 2.0, b))
        pieces = next_pieces
        n += 1
    return removed


def make_fat_cantor_complement(total_removed: float, h: float) -> GridDomain:
    """Open subset of (0, 1) with closure [0, 1] and measure 1 - total_removed."""
    base = make_box(0.0, 1.0, h)
    intervals = fat_cantor_intervals(total_removed, min_length=h)
    return _subtract_boxes(base, [((a,), (b,)) for a, b in intervals])


def example_5_4_omega1(h: float = 0.01) -> GridDomain:
    return make_box((0.0, -1.0), (1.0, 1.0), h)


def example_5_4_omega2(h: float = 0.01) -> GridDomain:
    """Two congruent blocks, (0,1) x ((-2,-1) union (1,2))."""
    base = make_box((0.0, -2.0), (1.0, 2.0), h)
    return _subtract_boxes(base, [((0.0, -1.0), (1.0, 1.0))])


def example_4_8_interval() -> tuple[float, float]:
    """Endpoints of the image of (1, 2) under y -> -artanh(exp(-2 y))."""
    return (-float(np.arctanh(np.exp(-2.0))), -float(np.arctanh(np.exp(-4.0))))


def example_4_8_omega1(h: float = 1e-3) -> GridDomain:
    a, b = example_4_8_interval()
    return make_box(a, b, h)


def example_4_8_omega2(h: float = 1e-3) -> GridDomain:
    return make_box(1.0, 2.0, h)


_FAT_CANTOR_RE = re.compile(r"^fat_cantor\(([0-9.eE+-]+)\)$")

_DOMAIN_BUILTINS = {
    "example_5_4_omega1": (example_5_4_omega1, 0.01),
    "example_5_4_omega2": (example_5_4_omega2, 0.01),
    "example_4_8_omega1": (example_4_8_omega1, 1e-3),
    "example_4_8_omega2": (example_4_8_omega2, 1e-3),
}


def domain_from_spec(spec, default_h: float | None = None) -> GridDomain:
    """Build a domain from its JSON description.

    Accepts a builtin name (``"example_5_4_omega2"``, ``"fat_cantor(0.5)"``),
    a dict ``{"builtin": name, "h": ...}``, or the explicit form
    ``{"dim": 2, "h": 0.01, "boxes": [{"lo": [...], "hi": [...]}],
    "subtract": [...]}``.
    """
    if isinstance(spec, str):
        return _builtin_domain(spec, default_h)
    if not isinstance(spec, dict):
        raise ValueError(f"domain spec must be a string or an object, got {type(spec).__name__}")
    if "builtin" in spec:
        return _builtin_domain(spec["builtin"], spec.get("h", default_h))
    try:
        h = float(spec["h"])
        boxes = spec["boxes"]
    except KeyError as exc:
        raise ValueError(f"domain spec is missing required key {exc}") from exc
    if not boxes:
        raise ValueError("domain spec needs at least one box")
    dim = int(spec.get("dim", len(_as_point(boxes[0]["lo"]))))
    parts = [make_box(_as_point(b["lo"], dim), _as_point(b["hi"], dim), h) for b in boxes]
    origin = parts[0].origin
    merged = []
    for part in parts:
        shift = (np.asarray(part.origin) - np.asarray(origin)) / h
        shift_int = np.round(shift).astype(np.int64)
        if np.abs(shift - shift_int).max() > 1e-9:
            raise ValueError("boxes must sit on a common grid (origins differ by non-multiples of h)")
        merged.append(part.cells + shift_int)
    domain = GridDomain(dim, h, origin, np.concatenate(merged, axis=0))
    _check_budget(domain.n_cells, "domain spec")
    subtract = [( _as_point(b["lo"], dim), _as_point(b["hi"], dim))
                for b in spec.get("subtract", [])]
    if subtract:
        domain = _subtract_boxes(domain, subtract)
    return domain


def _builtin_domain(name: str, h: float | None) -> GridDomain:
    m = _FAT_CANTOR_RE.match(name)
    if m:
        return make_fat_cantor_complement(float(m.group(1)), h if h else 1e-4)
    if name in _DOMAIN_BUILTINS:
        factory, default = _DOMAIN_BUILTINS[name]
        return factory(h if h else default)
    raise ValueError(f"unknown builtin domain {name!r}")
