"""Named verification suites and the seeded sample batteries they run on.

Each suite returns a list of check records, one per verified claim, with the
measured defect and its tolerance.  All randomness flows through one seeded
generator so a fixed configuration reproduces the report byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field import (
    Field,
    ball_fits,
    bump,
    exponential_probe,
    hat,
    random_smooth_field,
    w1p_norm,
    w1p_pow_sum,
)
from .forms import (
    clarkson_check,
    form_a,
    form_b,
    gateaux_check_form,
    gateaux_check_norm,
    plap_residual,
)
from .grid_domain import GridDomain, make_box, random_rigid_motion
from .operators import (
    DefectReport,
    OperatorSpec,
    apply,
    congruence_pipeline,
    defect_sets,
    disjointness_defect,
    example_4_8_operator,
    example_5_4_operator,
    intertwining_defect,
    isometry_defect,
    operator_from_spec,
    preimage_field,
    reconstruct,
    rigid_motion_fit,
    rigid_operator,
)

SUITE_NAMES = ("norm-calculus", "clarkson", "plaplace", "examples",
               "reconstruction", "congruence")


@dataclass(frozen=True)
class SuiteConfig:
    """Configuration of one verification run."""

    suite: str
    p: float | None = None
    h: float | None = None
    tol: float | None = None
    seed: int = 7
    spec_path: str | None = None
    report_path: str | None = None

    def __post_init__(self):
        if self.suite not in SUITE_NAMES:
            raise ValueError(f"unknown suite {self.suite!r}; choose from {SUITE_NAMES}")
        if self.h is not None and not (self.h > 0):
            raise ValueError("h must be positive")
        if self.tol is not None and not (self.tol > 0):
            raise ValueError("tol must be positive")


def _check(name: str, claim: str, defect: float, tol: float, **extra) -> dict:
    rec = {"check": name, "claim": claim, "defect": float(defect),
           "tol": float(tol), "status": "pass" if defect <= tol else "fail"}
    rec.update(extra)
    return rec


# -- sample batteries ---------------------------------------------------------


def smooth_samples(domain: GridDomain, rng: np.random.Generator, n: int,
                   amplitude: float = 1.0) -> list[Field]:
    return [random_smooth_field(domain, rng, amplitude=amplitude) for _ in range(n)]


def gateaux_sample_triple(domain: GridDomain, rng: np.random.Generator,
                          p: float) -> tuple[Field, Field, Field]:
    """One (u, v, w) draw for the derivative checks.

    The directions are tilted toward the base point after normalizing, which
    keeps the first-order references |p a(u,v)| and |b(u,v,w)| bounded away
    from zero; with fully independent draws those references can be
    arbitrarily small against the curvature term and a relative error bound
    would be meaningless.
    """
    u = random_smooth_field(domain, rng)
    u = (1.0 / w1p_norm(u, p)) * u
    v_raw = random_smooth_field(domain, rng)
    v = 0.5 * u + (0.1 / w1p_norm(v_raw, p)) * v_raw
    w_raw = random_smooth_field(domain, rng)
    w = 0.6 * v + (0.06 / w1p_norm(w_raw, p)) * w_raw
    return u, v, w


def disjoint_bump_pairs(domain: GridDomain, rng: np.random.Generator, n: int,
                        gap_cells: int = 4, max_tries: int = 2000
                        ) -> list[tuple[Field, Field]]:
    """Pairs of bumps with disjoint balls separated by at least gap_cells."""
    lo, hi = domain.bounding_box
    span = float(np.min(hi - lo))
    gap = gap_cells * domain.h
    pairs = []
    tries = 0
    while len(pairs) < n:
        tries += 1
        if tries > max_tries:
            raise ValueError("could not place disjoint bump pairs in the domain")
        r1 = span * rng.uniform(0.08, 0.14)
        r2 = span * rng.uniform(0.08, 0.14)
        c1 = domain.centers[rng.integers(domain.n_cells)]
        c2 = domain.centers[rng.integers(domain.n_cells)]
        if np.linalg.norm(c1 - c2) < r1 + r2 + gap:
            continue
        if not (ball_fits(domain, c1, r1) and ball_fits(domain, c2, r2)):
            continue
        pairs.append((bump(domain, c1, r1), bump(domain, c2, r2)))
    return pairs


_TRIAL_SHAPES = (
    lambda t: np.ones(t.shape[0]),
    lambda t: t[:, 0],
    lambda t: np.exp(t[:, 0]),
    lambda t: np.cos(3.0 * t[:, 0]),
    lambda t: t.sum(axis=1) ** 2,
    lambda t: np.sin(5.0 * t[:, 0]) + (t[:, -1] if t.shape[1] > 1 else 0.0),
)


def intertwining_trials(T: OperatorSpec, rng: np.random.Generator, n: int,
                        amplitude: float = 0.1,
                        width_range: tuple[float, float] = (0.12, 0.28),
                        max_tries: int = 1000) -> list[tuple[Field, Field]]:
    """(u, v) trial pairs: cycled smooth u, compact tent v.

    Candidates are rejected until both support conditions hold: v vanishes on
    the source boundary layer and T v vanishes on the target boundary layer.
    The second condition is a genuine restriction, e.g. when the map glues
    several target components onto one source region a tent crossing the
    seam has a non-compact image.
    """
    src = T.source
    lo, hi = src.bounding_box
    scale = hi - lo
    src_mask = src.boundary_layer_mask()
    tgt_mask = T.target.boundary_layer_mask()
    margin = 0.03 + 3.0 * src.h / float(scale.min())
    trials = []
    idx = 0
    for _ in range(max_tries):
        if len(trials) == n:
            break
        wf = rng.uniform(*width_range, size=src.dim)
        cf = np.array([rng.uniform(w + margin, 1.0 - w - margin) for w in wf])
        v = amplitude * hat(src, lo + scale * cf, scale * wf)
        if np.any(v.values[src_mask] != 0.0) or not v.values.any():
            continue
        tv = apply(T, v)
        if np.any(tv.values[tgt_mask] != 0.0):
            continue
        shape = _TRIAL_SHAPES[idx % len(_TRIAL_SHAPES)]
        u = Field.from_function(src, lambda x: shape((x - lo) / scale))
        trials.append((u, v))
        idx += 1
    if len(trials) < n:
        raise ValueError("could not generate admissible intertwining trials")
    return trials


def random_rigid_operator(rng: np.random.Generator, h: float = 0.01,
                          p_extent=(0.4, 0.8)) -> OperatorSpec:
    """Seeded rigid operator on a random box, for round-trip sweeps."""
    extent = rng.uniform(*p_extent, size=2)
    target = make_box((0.0, 0.0), tuple(extent), h)
    motion = random_rigid_motion(2, rng)
    return rigid_operator(target, motion)


def operator_defect_report(T: OperatorSpec, p: float, rng: np.random.Generator,
                           n_samples: int = 20, n_pairs: int = 10,
                           n_trials: int = 10) -> DefectReport:
    """Run every per-operator battery once and collect the aggregate defects."""
    samples = smooth_samples(T.source, rng, n_samples, amplitude=0.5)
    iso = isometry_defect(T, samples, p)
    dis = disjointness_defect(T, disjoint_bump_pairs(T.source, rng, n_pairs), p)
    itw = intertwining_defect(T, intertwining_trials(T, rng, n_trials), p)
    rec = reconstruct(T, p=p)
    fit = rigid_motion_fit(rec, T.target)
    ds = defect_sets(rec, T.source, T.target)
    return DefectReport(
        isometry=iso,
        disjointness=dis,
        intertwining=itw,
        orthogonality=fit.orthogonality_defect,
        grad_g=fit.grad_g_defect,
        weight=fit.weight_defect,
        n1_measure=ds.n1_measure,
        n2_cells=ds.n2_cells,
    )


# -- suites -------------------------------------------------------------------


def suite_norm_calculus(cfg: SuiteConfig) -> list[dict]:
    rng = np.random.default_rng(cfg.seed)
    h = cfg.h or 0.02
    grid = make_box((0.0, 0.0), (1.0, 1.0), h)
    ladder = (1e-2, 1e-3, 1e-4, 1e-5)
    p_values = (cfg.p,) if cfg.p else (2.5, 3.0, 4.0)
    checks = []
    diag_dev = 0.0
    lin_dev = 0.0
    worst_rel_norm = 0.0
    worst_rel_form = 0.0
    min_slope_norm = math.inf
    min_slope_form = math.inf
    for p in p_values:
        for _ in range(20):
            u, v, w = gateaux_sample_triple(grid, rng, p)
            diag_dev = max(diag_dev, abs(form_a(u, u, p) - w1p_pow_sum(u, p)))
            a1 = form_a(u, 2.0 * v + (-3.0) * w, p)
            a2 = 2.0 * form_a(u, v, p) - 3.0 * form_a(u, w, p)
            lin_dev = max(lin_dev, abs(a1 - a2) / max(abs(a2), 1e-30))
            rep_n = gateaux_check_norm(u, v, p, ladder)
            ref_n = abs(p * form_a(u, v, p))
            min_slope_norm = min(min_slope_norm, rep_n.slope)
            if ref_n > 1e-6:
                worst_rel_norm = max(worst_rel_norm, rep_n.errors[-1] / ref_n)
            if p > 2.0:
                rep_f = gateaux_check_form(u, v, w, p, ladder)
                ref_f = abs(form_b(u, v, w, p))
                min_slope_form = min(min_slope_form, rep_f.slope)
                if ref_f > 1e-6:
                    worst_rel_form = max(worst_rel_form, rep_f.errors[-1] / ref_f)
    checks.append(_check("form_diagonal_equals_norm_power",
                         "first-derivative-form-diagonal", diag_dev, 1e-12))
    checks.append(_check("form_linearity_in_second_argument",
                         "first-derivative-form-linearity", lin_dev, 1e-10))
    checks.append(_check("norm_quotient_accuracy_smallest_s",
                         "norm-gateaux-first-order", worst_rel_norm, 1e-3))
    checks.append(_check("norm_quotient_slope",
                         "norm-gateaux-first-order", 0.8 - min_slope_norm, 0.0,
                         slope=min_slope_norm))
    if min_slope_form < math.inf:
        checks.append(_check("form_quotient_accuracy_smallest_s",
                             "form-gateaux-first-order", worst_rel_form, 1e-3))
        checks.append(_check("form_quotient_slope",
                             "form-gateaux-first-order", 0.8 - min_slope_form, 0.0,
                             slope=min_slope_form))
    return checks


def suite_clarkson(cfg: SuiteConfig) -> list[dict]:
    from .field import VectorField

    rng = np.random.default_rng(cfg.seed)
    h = cfg.h or 0.05
    grid = make_box((0.0, 0.0), (1.0, 1.0), h)
    p_values = (cfg.p,) if cfg.p else (1.5, 2.0, 3.0, 4.0)
    checks = []
    for p in p_values:
        low, high = 0.0, 0.0
        for _ in range(1000):
            f = VectorField(grid, rng.normal(0.0, 1.0, (grid.n_cells, grid.dim)))
            g = VectorField(grid, rng.normal(0.0, 1.0, (grid.n_cells, grid.dim)))
            slack = clarkson_check(f, g, p)
            low = min(low, slack)
            high = max(high, slack)
        if p == 2.0:
            checks.append(_check("clarkson_equality_p2", "parallelogram-law",
                                 max(abs(low), abs(high)), 1e-12))
        elif p > 2.0:
            checks.append(_check(f"clarkson_lower_p{p:g}",
                                 "clarkson-sum-inequality", -low, 1e-12))
        else:
            checks.append(_check(f"clarkson_upper_p{p:g}",
                                 "clarkson-sum-inequality", high, 1e-12))
    return checks


def suite_plaplace(cfg: SuiteConfig) -> list[dict]:
    rng = np.random.default_rng(cfg.seed)
    h0 = cfg.h or 1e-2
    p_values = (cfg.p,) if cfg.p else (2.0, 3.0)
    checks = []
    for dim in (1, 2):
        builder = (lambda h: make_box(0.0, 1.0, h)) if dim == 1 else (
            lambda h: make_box((0.0, 0.0), (1.0, 1.0), h))
        for p in p_values:
            residuals = []
            for k in range(3):
                h = h0 / 2**k
                domain = builder(h)
                probe = exponential_probe(domain, 0, 1, p)
                tests_rng = np.random.default_rng(cfg.seed)
                tests = []
                for _ in range(20):
                    c = tests_rng.uniform(0.3, 0.7, size=dim)
                    r = tests_rng.uniform(0.1, 0.25)
                    tests.append(bump(domain, c, r))
                residuals.append(plap_residual(probe, p, tests))
            worst_ratio = min(residuals[i] / residuals[i + 1] for i in range(2))
            checks.append(_check(
                f"probe_residual_decay_{dim}d_p{p:g}",
                "probe-weak-solution-residual-decay",
                1.8 - worst_ratio, 0.0,
                residuals=residuals, ratio=worst_ratio))
    domain = make_box(0.0, 1.0, h0)
    stall = plap_residual(Field.constant(domain, 1.0), 2.0,
                          [bump(domain, 0.5, 0.4)])
    checks.append(_check("constant_residual_stalls", "non-solution-residual-stalls",
                         0.1 - stall, 0.0, residual=stall))
    return checks


def suite_examples(cfg: SuiteConfig) -> list[dict]:
    rng = np.random.default_rng(cfg.seed)
    p = cfg.p or 2.0
    h = cfg.h or 1e-4
    checks = []

    T = example_4_8_operator(h)
    one = Field.constant(T.source, 1.0)
    norm_sq = w1p_norm(apply(T, one), 2.0) ** 2
    checks.append(_check("norm_sq_T1", "not-an-isometry",
                         abs(norm_sq - 23.66), 0.05, value=norm_sq))
    checks.append(_check("omega1_measure", "image-domain-measure",
                         abs(T.source.measure - 0.118), 0.001,
                         value=T.source.measure))
    gap = isometry_defect(T, [one], 2.0)
    checks.append(_check("isometry_gap_T1", "not-an-isometry",
                         abs(gap - 4.52), 0.01, value=gap))

    h_int = 1e-3
    T_int = example_4_8_operator(h_int)
    defect = intertwining_defect(T_int, intertwining_trials(T_int, rng, 20), 2.0)
    checks.append(_check("intertwining_defect_hyperbolic",
                         "intertwines-plaplace-form", defect, 10.0 * h_int,
                         h=h_int, constant=defect / h_int))

    rec = reconstruct(T_int, p=2.0)
    y = T_int.target.centers[:, 0]
    g_err = float(np.abs(rec.g_hat.values - np.sqrt(np.sinh(2.0 * y))).max())
    xi_err = float(np.abs(rec.xi_hat.values[:, 0] + np.arctanh(np.exp(-2.0 * y))).max())
    checks.append(_check("reconstruction_matches_closed_form",
                         "probe-reconstruction-roundtrip",
                         max(g_err, xi_err), 1e-6))
    fit = rigid_motion_fit(rec, T_int.target)
    checks.append(_check("hyperbolic_map_not_rigid", "map-locally-rigid-fails",
                         0.5 - fit.orthogonality_defect, 0.0,
                         orthogonality=fit.orthogonality_defect,
                         grad_g=fit.grad_g_defect))

    h54 = 0.01
    T54 = example_5_4_operator(h54)
    samples = smooth_samples(T54.source, rng, 50, amplitude=0.5)
    iso = isometry_defect(T54, samples, 3.0)
    checks.append(_check("two_block_isometry", "isometric-lattice-homomorphism",
                         iso, 5.0 * h54))
    pairs = disjoint_bump_pairs(T54.source, rng, 20)
    dis = disjointness_defect(T54, pairs, 3.0)
    checks.append(_check("two_block_disjointness", "disjointness-preserving",
                         dis, 0.0))
    fit54 = rigid_motion_fit(reconstruct(T54, p=p), T54.target)
    phi = bump(T54.target, (0.5, 1.5), 0.2)
    w, covered = preimage_field(T54, phi, fit54)
    resid = float(np.abs(apply(T54, w).values - phi.values).max()) if covered.all() else math.inf
    checks.append(_check("two_block_preimage_solvable", "zero-trace-image-onto",
                         resid, 5.0 * h54, covered=bool(covered.all())))

    report_48 = operator_defect_report(example_4_8_operator(1e-3), 2.0,
                                       np.random.default_rng(cfg.seed))
    report_54 = operator_defect_report(T54, 3.0, np.random.default_rng(cfg.seed))
    checks.append({"check": "defect_report_hyperbolic", "claim": "operator-defect-summary",
                   "defect": 0.0, "tol": 0.0, "status": "pass",
                   "report": report_48.to_json_dict()})
    checks.append({"check": "defect_report_two_block", "claim": "operator-defect-summary",
                   "defect": 0.0, "tol": 0.0, "status": "pass",
                   "report": report_54.to_json_dict()})
    return checks


def suite_reconstruction(cfg: SuiteConfig) -> list[dict]:
    rng = np.random.default_rng(cfg.seed)
    h = cfg.h or 0.01
    p_values = (cfg.p,) if cfg.p else (2.0, 3.0)
    checks = []
    worst_xi = 0.0
    worst_weight = 0.0
    worst_ortho = 0.0
    worst_axis = 0.0
    for i in range(10):
        T = random_rigid_operator(rng, h)
        p = p_values[i % len(p_values)]
        rec = reconstruct(T, p=p)
        expected = T.xi_values
        ok = ~rec.zero_mask
        worst_xi = max(worst_xi, float(
            np.abs(rec.xi_hat.values - expected).max(axis=1)[ok].max()))
        fit = rigid_motion_fit(rec, T.target)
        worst_weight = max(worst_weight, fit.weight_defect)
        worst_ortho = max(worst_ortho, fit.orthogonality_defect)
        if T.dim == 2:
            axis_dev = float(np.abs(rec.g_by_axis[0][ok] - rec.g_by_axis[1][ok]).max())
            worst_axis = max(worst_axis, axis_dev)
    checks.append(_check("rigid_roundtrip_map", "probe-reconstruction-roundtrip",
                         worst_xi, 2.0 * h))
    checks.append(_check("rigid_roundtrip_weight", "weight-locally-unimodular",
                         worst_weight, 1e-8))
    checks.append(_check("rigid_roundtrip_orthogonality", "map-jacobian-orthogonal",
                         worst_ortho, 1e-8))
    checks.append(_check("weight_axis_independence", "weight-independent-of-probe-axis",
                         worst_axis, 1e-8))

    T = random_rigid_operator(np.random.default_rng(cfg.seed + 1), h)
    rec_bb = reconstruct(lambda u: apply(T, u), T.target, p=2.0, source=T.source)
    ok = ~rec_bb.zero_mask
    bb_err = float(np.abs(rec_bb.xi_hat.values - T.xi_values).max(axis=1)[ok].max())
    checks.append(_check("blackbox_roundtrip_map", "probe-reconstruction-roundtrip",
                         bb_err, 2.0 * h))

    T48 = example_4_8_operator(1e-3)
    rec48 = reconstruct(T48, p=2.0)
    y = T48.target.centers[:, 0]
    cf_err = max(
        float(np.abs(rec48.g_hat.values - np.sqrt(np.sinh(2.0 * y))).max()),
        float(np.abs(rec48.xi_hat.values[:, 0] + np.arctanh(np.exp(-2.0 * y))).max()))
    checks.append(_check("hyperbolic_closed_form", "probe-reconstruction-roundtrip",
                         cf_err, 1e-6))
    fit48 = rigid_motion_fit(rec48, T48.target)
    checks.append(_check("hyperbolic_not_rigid", "map-locally-rigid-fails",
                         0.5 - fit48.orthogonality_defect, 0.0,
                         orthogonality=fit48.orthogonality_defect))
    return checks


def suite_congruence(cfg: SuiteConfig) -> list[dict]:
    import json

    p = cfg.p or 3.0
    if cfg.spec_path:
        with open(cfg.spec_path) as fh:
            spec = json.load(fh)
        import os.path
        T = operator_from_spec(spec, base_dir=os.path.dirname(cfg.spec_path) or ".")
    else:
        T = example_5_4_operator(cfg.h or 0.01)
    tol = cfg.tol or 4.0 * T.target.h
    report = congruence_pipeline(T, p=p, tol=tol)
    checks = [
        _check("pipeline_verdict", "domains-congruent-via-components",
               0.0 if report.congruent else 1.0, 0.0,
               reason=report.reason,
               pairing=report.to_json_dict()["pairing"],
               n_components=len(report.motions)),
        _check("image_defect_measure", "no-mass-maps-outside-source",
               report.n2_cells * T.target.h**T.target.dim, tol),
        _check("uncovered_source_measure", "image-dense-in-source",
               report.n1_measure, tol),
        _check("component_images_tile_source", "components-pair-off",
               report.tiling_defect, tol),
    ]
    return checks


_SUITES = {
    "norm-calculus": suite_norm_calculus,
    "clarkson": suite_clarkson,
    "plaplace": suite_plaplace,
    "examples": suite_examples,
    "reconstruction": suite_reconstruction,
    "congruence": suite_congruence,
}


def run_suite(cfg: SuiteConfig) -> list[dict]:
    return _SUITES[cfg.suite](cfg)
