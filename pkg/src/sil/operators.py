"""Weighted composition operators between Sobolev grids, and their forensics.

An operator ``T u = g * (u o xi)`` is described by a weight ``g`` and a map
``xi`` from the target domain into the source domain.  The module measures
how far a given operator is from being an isometry, disjointness preserving,
or form intertwining, reconstructs ``(g, xi)`` from probe images, fits rigid
motions per connected component, and decides whether the two domains are
congruent under the fitted motions.

Reconstruction probes: with ``alpha = (p-1)^(-1/p)`` the functions
``exp(+/- alpha x_j)`` solve the p-Laplace equation, so their images under a
well-behaved operator are ``v_{+/-,j} = g exp(+/- alpha xi_j)``, giving

    g  = sgn(v_{+,j}) (v_{+,j} v_{-,j})^(1/2)
    xi_j = log(v_{+,j} / v_{-,j}) / (2 alpha).

Cells where a probe product is nonpositive go to the zero set instead of
receiving a value; a clean composition operator leaves that set empty.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .field import Field, VectorField, exponential_probe, gradient, lp_norm, probe_rate, w1p_norm
from .forms import form_a
from .grid_domain import (
    GridDomain,
    RigidMotion,
    apply_rigid_motion,
    connected_components,
    is_topologically_regular,
)
from . import grid_domain as _gd

_BBOX_SLACK = 1e-9


# -- operator descriptions ----------------------------------------------------


def _builtin_identity(pts):
    return np.ones(pts.shape[0]), pts.copy()


def _builtin_example_4_8(pts):
    y = pts[:, 0]
    return np.sqrt(np.sinh(2.0 * y)), (-np.arctanh(np.exp(-2.0 * y)))[:, None]


def _builtin_example_5_4(pts):
    out = pts.copy()
    out[:, 1] -= np.sign(pts[:, 1])
    return np.ones(pts.shape[0]), out


_BUILTIN_MAPS: dict[str, Callable] = {
    "identity": _builtin_identity,
    "example_4_8": _builtin_example_4_8,
    "example_5_4": _builtin_example_5_4,
}


@dataclass(frozen=True)
class BuiltinMap:
    """Closed-form weight/map pair looked up by registry name."""

    name: str

    def __post_init__(self):
        if self.name not in _BUILTIN_MAPS:
            raise ValueError(f"unknown builtin operator {self.name!r}")


@dataclass(frozen=True)
class RigidMap:
    """One rigid motion per target component; ``None`` applies to all."""

    motions: tuple[RigidMotion, ...]
    components: tuple[int | None, ...]

    def __post_init__(self):
        motions = tuple(self.motions)
        components = tuple(self.components)
        if len(motions) != len(components):
            raise ValueError("each motion needs a component assignment")
        if len(motions) == 0:
            raise ValueError("a rigid operator needs at least one motion")
        if None in components and len(components) > 1:
            raise ValueError("a catch-all motion cannot be combined with others")
        object.__setattr__(self, "motions", motions)
        object.__setattr__(self, "components", components)


@dataclass(frozen=True)
class TabulatedMap:
    """Weight and map sampled at the target nodes."""

    g: Field
    xi: VectorField


@dataclass(frozen=True)
class OperatorSpec:
    """A weighted composition operator from fields on ``source`` to ``target``."""

    source: GridDomain
    target: GridDomain
    variant: BuiltinMap | RigidMap | TabulatedMap

    def __post_init__(self):
        if self.source.dim != self.target.dim:
            raise ValueError("source and target must have the same dimension")
        if isinstance(self.variant, TabulatedMap):
            if self.variant.g.domain != self.target or self.variant.xi.domain != self.target:
                raise ValueError("tabulated weight/map must live on the target domain")
        # touching the cached values runs the bounding-box containment check
        self._validate_h1()

    def _validate_h1(self) -> None:
        xi = self.xi_values
        lo, hi = self.source.bounding_box
        # one cell of slack: the raster box can sit up to h inside the analytic set
        slack = self.source.h + _BBOX_SLACK * (1.0 + np.abs(np.concatenate([lo, hi])).max())
        if np.any(xi < lo - slack) or np.any(xi > hi + slack):
            raise ValueError(
                "the map sends target nodes outside the closed bounding box of the source")

    @property
    def dim(self) -> int:
        return self.target.dim

    @cached_property
    def _component_labels(self) -> np.ndarray:
        labels = np.full(self.target.n_cells, -1, dtype=np.int64)
        for ci, comp in enumerate(connected_components(self.target)):
            labels[self.target.rows_of_indices(comp.cells)] = ci
        return labels

    @cached_property
    def xi_values(self) -> np.ndarray:
        """(n, dim) map values at the target nodes."""
        return self._evaluate()[1]

    @cached_property
    def g_values(self) -> np.ndarray:
        """(n,) weight values at the target nodes."""
        return self._evaluate()[0]

    def _evaluate(self) -> tuple[np.ndarray, np.ndarray]:
        pts = self.target.centers
        if isinstance(self.variant, BuiltinMap):
            g, xi = _BUILTIN_MAPS[self.variant.name](pts)
            return np.asarray(g, dtype=float), np.asarray(xi, dtype=float)
        if isinstance(self.variant, TabulatedMap):
            return self.variant.g.values.copy(), self.variant.xi.values.copy()
        labels = self._component_labels
        n_comp = int(labels.max()) + 1
        assignment: dict[int, RigidMotion] = {}
        for motion, comp in zip(self.variant.motions, self.variant.components):
            if motion.dim != self.dim:
                raise ValueError("motion dimension does not match the domains")
            targets = range(n_comp) if comp is None else [int(comp)]
            for ci in targets:
                if ci in assignment:
                    raise ValueError(f"component {ci} has two motions assigned")
                if not (0 <= ci < n_comp):
                    raise ValueError(f"component index {ci} out of range")
                assignment[ci] = motion
        if len(assignment) != n_comp:
            missing = sorted(set(range(n_comp)) - set(assignment))
            raise ValueError(f"components {missing} have no motion assigned")
        xi = np.empty_like(pts)
        g = np.empty(pts.shape[0])
        for ci, motion in assignment.items():
            rows = labels == ci
            xi[rows] = motion.transform(pts[rows])
            g[rows] = float(motion.sign)
        return g, xi


def identity_operator(domain: GridDomain) -> OperatorSpec:
    return OperatorSpec(domain, domain, BuiltinMap("identity"))


def example_4_8_operator(h: float = 1e-3, h_source: float | None = None) -> OperatorSpec:
    """Hyperbolic-weight interval operator; intertwines the form but is not isometric."""
    return OperatorSpec(_gd.example_4_8_omega1(h_source or h),
                        _gd.example_4_8_omega2(h),
                        BuiltinMap("example_4_8"))


def example_5_4_operator(h: float = 0.01) -> OperatorSpec:
    """Two-block translation operator; an isometric lattice homomorphism."""
    return OperatorSpec(_gd.example_5_4_omega1(h),
                        _gd.example_5_4_omega2(h),
                        BuiltinMap("example_5_4"))


def rigid_operator(target: GridDomain, motion: RigidMotion,
                   source: GridDomain | None = None,
                   h_source: float | None = None) -> OperatorSpec:
    """Composition with one rigid motion of the whole target domain."""
    if source is None:
        source = apply_rigid_motion(target, motion, h_source or target.h)
    return OperatorSpec(source, target, RigidMap((motion,), (None,)))


def averaging_operator(domain: GridDomain, axis: int = 0) -> Callable[[Field], Field]:
    """(T u)(y) = (u(y) + u(flip y)) / 2 on a mirror-symmetric domain.

    This is not a composition operator; it exists to show a defect the
    composition-only checks must catch.
    """
    lo, hi = domain.index_bounds
    flipped = domain.cells.copy()
    flipped[:, axis] = lo[axis] + hi[axis] - domain.cells[:, axis]
    rows = domain.rows_of_indices(flipped)
    if (rows < 0).any():
        raise ValueError("domain is not symmetric about the requested axis")

    def op(u: Field) -> Field:
        if u.domain != domain:
            raise ValueError("field lives on a different domain")
        return Field(domain, 0.5 * (u.values + u.values[rows]))

    return op


# -- application ---------------------------------------------------------------


def apply_with_flags(T: OperatorSpec, u: Field) -> tuple[Field, np.ndarray]:
    """Apply ``T`` to a field; returns the image and the out-of-domain mask.

    The source field is interpolated multilinearly at the mapped nodes.  A
    node is flagged (and its image set to 0) when the map lands beyond the
    interpolation reach of every active source node, i.e. outside the
    rasterized source by more than one boundary layer.
    """
    if u.domain != T.source:
        raise ValueError("field does not live on the operator source domain")
    vals, covered = u.at_with_coverage(T.xi_values)
    return Field(T.target, T.g_values * vals), ~covered


def apply(T: OperatorSpec, u: Field) -> Field:
    return apply_with_flags(T, u)[0]


def apply_to_function(T: OperatorSpec, fn: Callable[[np.ndarray], np.ndarray]) -> Field:
    """Apply ``T`` to a globally defined function, exactly at the nodes."""
    return Field(T.target, T.g_values * np.asarray(fn(T.xi_values), dtype=float))


def _apply_any(T, u: Field) -> Field:
    return apply(T, u) if isinstance(T, OperatorSpec) else T(u)


# -- defect measurements --------------------------------------------------------


def isometry_defect(T, samples: Sequence[Field], p: float) -> float:
    """Largest absolute Sobolev-norm discrepancy over the sample fields."""
    samples = list(samples)
    if not samples:
        raise ValueError("at least one sample field is required")
    worst = 0.0
    for u in samples:
        worst = max(worst, abs(w1p_norm(_apply_any(T, u), p) - w1p_norm(u, p)))
    return worst


def disjointness_defect(T, pairs: Sequence[tuple[Field, Field]], p: float) -> float:
    """Largest lattice overlap ||min(|Tu|, |Tv|)||_p over disjoint input pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("at least one pair is required")
    worst = 0.0
    for u, v in pairs:
        if float(abs(u).minimum(abs(v)).values.max()) != 0.0:
            raise ValueError("input pair is not disjoint on the grid")
        tu, tv = _apply_any(T, u), _apply_any(T, v)
        worst = max(worst, lp_norm(abs(tu).minimum(abs(tv)), p))
    return worst


def intertwining_defect(T, trials: Sequence[tuple[Field, Field]], p: float) -> float:
    """Largest |a_p(Tu, Tv) - a_p(u, v)| over trials with compact v.

    Each trial's ``v`` must vanish on the source boundary layer and its image
    must vanish on the target boundary layer, mirroring membership of v in
    the zero-trace subspace on both sides.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("at least one trial pair is required")
    worst = 0.0
    for u, v in trials:
        src_mask = v.domain.boundary_layer_mask()
        if np.any(v.values[src_mask] != 0.0):
            raise ValueError("trial v does not vanish on the source boundary layer")
        tu, tv = _apply_any(T, u), _apply_any(T, v)
        tgt_mask = tv.domain.boundary_layer_mask()
        if np.any(tv.values[tgt_mask] != 0.0):
            raise ValueError("image of trial v does not vanish on the target boundary layer")
        worst = max(worst, abs(form_a(tu, tv, p) - form_a(u, v, p)))
    return worst


# -- probe reconstruction --------------------------------------------------------


@dataclass(frozen=True)
class ReconstructionResult:
    """Weight and map recovered from exponential probe images."""

    g_hat: Field
    xi_hat: VectorField
    zero_mask: np.ndarray
    g_by_axis: tuple[np.ndarray, ...]

    @property
    def zero_set_cells(self) -> int:
        return int(np.count_nonzero(self.zero_mask))


def reconstruct(op, omega2: GridDomain | None = None, p: float = 2.0, *,
                source: GridDomain | None = None) -> ReconstructionResult:
    """Recover ``(g, xi)`` from the images of the exponential probes.

    ``op`` is either an :class:`OperatorSpec`, whose probe images are formed
    exactly from its nodal weight/map data, or a black-box ``Field -> Field``
    callable, in which case ``source`` (probe domain) and ``omega2`` (image
    domain) must be supplied and interpolation noise of order h^2 enters.
    """
    if not (1.0 < p < np.inf):
        raise ValueError(f"reconstruction requires p in (1, inf), got {p}")
    alpha = probe_rate(p)
    if isinstance(op, OperatorSpec):
        if omega2 is not None and omega2 != op.target:
            raise ValueError("omega2 does not match the operator target")
        omega2 = op.target
        g, xi = op.g_values, op.xi_values
        images = {(j, sg): g * np.exp(sg * alpha * xi[:, j])
                  for j in range(omega2.dim) for sg in (1, -1)}
    else:
        if omega2 is None or source is None:
            raise ValueError("black-box reconstruction needs omega2 and source domains")
        images = {}
        for j in range(omega2.dim):
            for sg in (1, -1):
                img = op(exponential_probe(source, j, sg, p))
                if img.domain != omega2:
                    raise ValueError("operator image does not live on omega2")
                images[(j, sg)] = img.values

    n = omega2.n_cells
    zero = np.zeros(n, dtype=bool)
    g_axes = []
    xi_cols = []
    for j in range(omega2.dim):
        vp, vm = images[(j, 1)], images[(j, -1)]
        prod = vp * vm
        ok = prod > 0.0
        zero |= ~ok
        g_j = np.zeros(n)
        g_j[ok] = np.sign(vp[ok]) * np.sqrt(prod[ok])
        xi_j = np.zeros(n)
        xi_j[ok] = np.log(vp[ok] / vm[ok]) / (2.0 * alpha)
        g_axes.append(g_j)
        xi_cols.append(xi_j)
    if zero.all():
        raise ValueError("probe images vanish everywhere; not a composition operator on this grid")
    g_hat = g_axes[0].copy()
    g_hat[zero] = 0.0
    xi = np.stack(xi_cols, axis=1)
    xi[zero] = 0.0
    return ReconstructionResult(Field(omega2, g_hat), VectorField(omega2, xi),
                                zero, tuple(g_axes))


# -- rigid-motion fitting ---------------------------------------------------------


def _dilate_mask(domain: GridDomain, mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    for plus, minus in domain.neighbor_rows:
        has = plus >= 0
        out[has] |= mask[plus[has]]
        has = minus >= 0
        out[has] |= mask[minus[has]]
    return out


@dataclass(frozen=True)
class RigidFitReport:
    """Per-component rigid motions and global smoothness defects of a fit."""

    motions: tuple[RigidMotion, ...]
    orthogonality_defect: float  # max |xi'^T xi' - I|
    grad_g_defect: float         # max |grad g|
    weight_defect: float         # max ||g| - 1|
    c_field: Field               # |grad xi_0| samples
    rigid: bool

    def to_json_dict(self) -> dict:
        return {
            "motions": [m.to_json_dict() for m in self.motions],
            "orthogonality_defect": self.orthogonality_defect,
            "grad_g_defect": self.grad_g_defect,
            "weight_defect": self.weight_defect,
            "rigid": self.rigid,
            "c_range": [float(self.c_field.values.min()),
                        float(self.c_field.values.max())],
        }


def rigid_motion_fit(rec: ReconstructionResult, omega2: GridDomain | None = None,
                     rigid_tol: float = 0.1) -> RigidFitReport:
    """Affine least squares plus polar projection, one motion per component.

    The polar factor of the fitted linear part is the orthogonal matrix
    nearest in Frobenius norm.  Defects are evaluated by finite differences
    away from the reconstruction zero set; ``rigid`` records whether the
    Jacobian orthogonality defect stays within ``rigid_tol``.
    """
    omega2 = rec.g_hat.domain if omega2 is None else omega2
    if omega2 != rec.g_hat.domain:
        raise ValueError("omega2 does not match the reconstruction domain")
    dim = omega2.dim
    xi = rec.xi_hat.values
    valid = ~rec.zero_mask
    motions = []
    for comp in connected_components(omega2):
        rows = omega2.rows_of_indices(comp.cells)
        rows = rows[valid[rows]]
        if rows.size < dim + 1:
            raise ValueError(
                f"component with {rows.size} usable cells is too small to fit a motion")
        X = omega2.centers[rows]
        Y = xi[rows]
        xm, ym = X.mean(axis=0), Y.mean(axis=0)
        coef, *_ = np.linalg.lstsq(X - xm, Y - ym, rcond=None)
        U, _, Vt = np.linalg.svd(coef.T)
        Q = U @ Vt
        sign = 1 if float(rec.g_hat.values[rows].mean()) >= 0.0 else -1
        motions.append(RigidMotion(Q, ym - Q @ xm, sign))

    # gradient stencils reach two cells, so keep that much distance from the
    # zero set; prefer cells clear of the boundary layer, where one-sided
    # stencils on interpolated data would pollute the Jacobian at O(1)
    away_from_zero = ~_dilate_mask(omega2, _dilate_mask(omega2, rec.zero_mask))
    fd_ok = away_from_zero & ~omega2.boundary_layer_mask(2)
    if not fd_ok.any():
        fd_ok = away_from_zero
    if not fd_ok.any():
        raise ValueError("zero set leaves no cells for defect evaluation")
    jac = np.stack([gradient(Field(omega2, xi[:, i])).values for i in range(dim)],
                   axis=1)  # (n, i, d) = d xi_i / d y_d
    jtj = np.einsum("nid,nie->nde", jac, jac)
    dev = np.abs(jtj - np.eye(dim)).max(axis=(1, 2))
    ortho = float(dev[fd_ok].max())
    grad_g = float(gradient(rec.g_hat).magnitude().values[fd_ok].max())
    weight = float(np.abs(np.abs(rec.g_hat.values[valid]) - 1.0).max())
    c_field = Field(omega2, np.linalg.norm(jac[:, 0, :], axis=1))
    return RigidFitReport(tuple(motions), ortho, grad_g, weight, c_field,
                          rigid=ortho <= rigid_tol)


# -- defect sets -------------------------------------------------------------------


def _subsample_offsets(h: float, dim: int) -> list[np.ndarray]:
    steps = (-h / 3.0, 0.0, h / 3.0)
    return [np.asarray(off) for off in itertools.product(steps, repeat=dim)]


@dataclass(frozen=True)
class DefectSets:
    """Cells missed by the reconstructed map, on both sides."""

    n2_cells: int       # target cells mapped outside the source (or unreadable)
    n1_measure: float   # source measure left uncovered by the image
    u1: GridDomain
    u2: GridDomain


def defect_sets(rec: ReconstructionResult, omega1: GridDomain,
                omega2: GridDomain | None = None) -> DefectSets:
    """Split the domains into the matched parts and the defects.

    ``u2`` holds the target cells whose reconstructed image lands inside the
    source; ``u1`` is the rasterized image of those cells (three subsamples
    per axis, interpolated map).  ``n1_measure = |omega1| - |u1|``.
    """
    omega2 = rec.g_hat.domain if omega2 is None else omega2
    if omega2 != rec.g_hat.domain:
        raise ValueError("omega2 does not match the reconstruction domain")
    ok = ~rec.zero_mask
    inside = np.zeros(omega2.n_cells, dtype=bool)
    inside[ok] = omega1.contains_points(rec.xi_hat.values[ok])
    if not inside.any():
        raise ValueError("no target cell maps into the source domain")
    n2 = omega2.n_cells - int(np.count_nonzero(inside))
    u2 = GridDomain(omega2.dim, omega2.h, omega2.origin, omega2.cells[inside])
    hit = np.zeros(omega1.n_cells, dtype=bool)
    base = omega2.centers[inside]
    for off in _subsample_offsets(omega2.h, omega2.dim):
        vals = rec.xi_hat.at(base + off)
        rows = omega1.rows_of_indices(omega1.index_of_points(vals))
        hit[rows[rows >= 0]] = True
    u1 = GridDomain(omega1.dim, omega1.h, omega1.origin, omega1.cells[hit])
    return DefectSets(n2, omega1.measure - u1.measure, u1, u2)


# -- congruence pipeline --------------------------------------------------------------


@dataclass(frozen=True)
class PipelineReport:
    """Outcome of reconstruct -> rigid fit -> defect sets -> tiling check."""

    congruent: bool
    reason: str
    tol: float
    motions: tuple[RigidMotion, ...]
    component_boxes: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]
    image_boxes: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]
    orthogonality_defect: float
    grad_g_defect: float
    weight_defect: float
    n2_cells: int
    n1_measure: float
    tiling_defect: float
    source_regular: bool
    target_regular: bool

    def to_json_dict(self) -> dict:
        return {
            "congruent": self.congruent,
            "reason": self.reason,
            "tol": self.tol,
            "pairing": [
                {"component_box": [list(lo), list(hi)],
                 "image_box": [list(ilo), list(ihi)],
                 "motion": m.to_json_dict()}
                for (lo, hi), (ilo, ihi), m in zip(
                    self.component_boxes, self.image_boxes, self.motions)
            ],
            "orthogonality_defect": self.orthogonality_defect,
            "grad_g_defect": self.grad_g_defect,
            "weight_defect": self.weight_defect,
            "n2_cells": self.n2_cells,
            "n1_measure": self.n1_measure,
            "tiling_defect": self.tiling_defect,
            "source_regular": self.source_regular,
            "target_regular": self.target_regular,
        }


def congruence_pipeline(T: OperatorSpec, p: float, tol: float,
                        rigid_tol: float | None = None) -> PipelineReport:
    """Decide congruence of source and target through the fitted motions.

    The verdict is positive when the reconstructed map is rigid per
    component (orthogonality, weight constancy and unimodularity within
    ``rigid_tol``), no mass is mapped outside the source or left uncovered
    beyond ``tol``, and the component images tile the source up to ``tol``.
    """
    rigid_tol = tol if rigid_tol is None else rigid_tol
    rec = reconstruct(T, p=p)
    fit = rigid_motion_fit(rec, T.target, rigid_tol=rigid_tol)
    ds = defect_sets(rec, T.source, T.target)
    comps = connected_components(T.target)
    valid = ~rec.zero_mask

    coverage = np.zeros(T.source.n_cells, dtype=np.int64)
    escaped_pts = 0
    comp_boxes = []
    image_boxes = []
    offsets = _subsample_offsets(T.target.h, T.target.dim)
    for comp, motion in zip(comps, fit.motions):
        rows = T.target.rows_of_indices(comp.cells)
        pts = T.target.centers[rows[valid[rows]]]
        hit = np.zeros(T.source.n_cells, dtype=bool)
        for off in offsets:
            mapped = motion.transform(pts + off)
            rows1 = T.source.rows_of_indices(T.source.index_of_points(mapped))
            hit[rows1[rows1 >= 0]] = True
            escaped_pts += int(np.count_nonzero(rows1 < 0))
        coverage += hit
        lo, hi = comp.bounding_box
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        img = motion.transform(corners)
        comp_boxes.append((tuple(map(float, lo)), tuple(map(float, hi))))
        image_boxes.append((tuple(map(float, img.min(axis=0))),
                            tuple(map(float, img.max(axis=0)))))

    cell1 = T.source.h**T.source.dim
    cell2 = T.target.h**T.target.dim
    missing = float(np.count_nonzero(coverage == 0)) * cell1
    overlap = float(np.count_nonzero(coverage >= 2)) * cell1
    escaped = escaped_pts * cell2 / len(offsets)
    tiling = missing + overlap + escaped
    n2_measure = ds.n2_cells * cell2

    gates = [
        ("non-rigid xi", fit.orthogonality_defect, rigid_tol),
        ("non-constant weight", fit.grad_g_defect, rigid_tol),
        ("weight magnitude differs from 1", fit.weight_defect, rigid_tol),
        ("target cells map outside the source", n2_measure, tol),
        ("source not covered by the image", ds.n1_measure, tol),
        ("component images do not tile the source", tiling, tol),
    ]
    reason = "congruent"
    for name, value, gate_tol in gates:
        if value > gate_tol:
            reason = name
            break
    return PipelineReport(
        congruent=reason == "congruent",
        reason=reason,
        tol=tol,
        motions=fit.motions,
        component_boxes=tuple(comp_boxes),
        image_boxes=tuple(image_boxes),
        orthogonality_defect=fit.orthogonality_defect,
        grad_g_defect=fit.grad_g_defect,
        weight_defect=fit.weight_defect,
        n2_cells=ds.n2_cells,
        n1_measure=ds.n1_measure,
        tiling_defect=tiling,
        source_regular=is_topologically_regular(T.source),
        target_regular=is_topologically_regular(T.target),
    )


def preimage_field(T: OperatorSpec, phi: Field,
                   fit: RigidFitReport | None = None, p: float = 2.0
                   ) -> tuple[Field, np.ndarray]:
    """Solve ``T w = phi`` through the fitted inverse, w = (phi/g) o xi^-1.

    Returns the candidate preimage on the source grid together with the mask
    of source cells actually covered by some component image; cells outside
    every image are reported uncovered rather than guessed.
    """
    if phi.domain != T.target:
        raise ValueError("phi does not live on the operator target domain")
    if fit is None:
        fit = rigid_motion_fit(reconstruct(T, p=p), T.target)
    g = T.g_values
    if np.any(g == 0.0):
        raise ValueError("operator weight vanishes somewhere; cannot invert")
    ratio = Field(T.target, phi.values / g)
    comps = connected_components(T.target)
    w = np.zeros(T.source.n_cells)
    covered = np.zeros(T.source.n_cells, dtype=bool)
    x = T.source.centers
    for comp, motion in zip(comps, fit.motions):
        y = motion.inverse_transform(x)
        mask = comp.contains_points(y) & ~covered
        if mask.any():
            w[mask] = ratio.at(y[mask])
            covered |= mask
    return Field(T.source, w), covered


# -- aggregate report -------------------------------------------------------------------


@dataclass(frozen=True)
class DefectReport:
    """One number per verified property of a single operator."""

    isometry: float
    disjointness: float
    intertwining: float
    orthogonality: float
    grad_g: float
    weight: float
    n1_measure: float
    n2_cells: int

    def to_json_dict(self) -> dict:
        return {
            "isometry": self.isometry,
            "disjointness": self.disjointness,
            "intertwining": self.intertwining,
            "orthogonality": self.orthogonality,
            "grad_g": self.grad_g,
            "weight": self.weight,
            "n1_measure": self.n1_measure,
            "n2_cells": self.n2_cells,
        }


# -- JSON loading -----------------------------------------------------------------------


def operator_from_spec(spec: dict, target: GridDomain | None = None,
                       source: GridDomain | None = None,
                       base_dir=None) -> OperatorSpec:
    """Build an operator from its JSON description.

    Supported forms: ``{"builtin": name}`` with optional ``"h"``;
    ``{"rigid": [{"Q": ..., "b": ..., "sign": 1, "component": 0}, ...]}``;
    ``{"tabulated": {"g": "g.csv", "xi": "xi.csv"}}``.  Domains come from
    embedded ``"source"``/``"target"`` specs or the keyword arguments.
    """
    import os.path

    if not isinstance(spec, dict):
        raise ValueError("operator spec must be an object")
    if target is None and "target" in spec:
        target = _gd.domain_from_spec(spec["target"], default_h=spec.get("h"))
    if source is None and "source" in spec:
        source = _gd.domain_from_spec(spec["source"], default_h=spec.get("h"))

    if "builtin" in spec:
        name = spec["builtin"]
        h = spec.get("h")
        if name == "identity":
            if target is None:
                raise ValueError("the identity operator needs a target domain")
            return identity_operator(target)
        if name == "example_4_8":
            return example_4_8_operator(h or 1e-3)
        if name == "example_5_4":
            return example_5_4_operator(h or 0.01)
        raise ValueError(f"unknown builtin operator {name!r}")

    if "rigid" in spec:
        if target is None:
            raise ValueError("a rigid operator spec needs a target domain")
        motions = []
        components = []
        for entry in spec["rigid"]:
            motions.append(RigidMotion.from_json_dict(entry))
            components.append(entry.get("component"))
        if source is None:
            if len(motions) != 1 or components[0] is not None:
                raise ValueError("per-component rigid specs need an explicit source domain")
            return rigid_operator(target, motions[0])
        return OperatorSpec(source, target, RigidMap(tuple(motions), tuple(components)))

    if "tabulated" in spec:
        if target is None:
            raise ValueError("a tabulated operator spec needs a target domain")
        tab = spec["tabulated"]
        g_path, xi_path = tab["g"], tab["xi"]
        if base_dir is not None:
            g_path = os.path.join(base_dir, g_path)
            xi_path = os.path.join(base_dir, xi_path)
        g = Field.from_csv(g_path, target)
        xi = VectorField.from_csv(xi_path, target)
        if source is None:
            lo = xi.values.min(axis=0) - target.h
            hi = xi.values.max(axis=0) + target.h
            source = _gd.make_box(tuple(lo), tuple(hi), target.h)
        return OperatorSpec(source, target, TabulatedMap(g, xi))

    raise ValueError("operator spec needs one of 'builtin', 'rigid', 'tabulated'")
