import math

import numpy as np
import pytest
from scipy.integrate import quad

from sil import (
    Field,
    OperatorSpec,
    RigidMap,
    RigidMotion,
    TabulatedMap,
    VectorField,
    apply,
    apply_with_flags,
    averaging_operator,
    bump,
    congruence_pipeline,
    defect_sets,
    disjointness_defect,
    example_4_8_operator,
    example_5_4_operator,
    form_a,
    identity_operator,
    intertwining_defect,
    isometry_defect,
    make_box,
    make_fat_cantor_complement,
    operator_from_spec,
    preimage_field,
    random_rigid_motion,
    random_smooth_field,
    reconstruct,
    rigid_motion_fit,
    rigid_operator,
    w1p_norm,
)
from sil.operators import DefectReport
from sil.suites import (
    disjoint_bump_pairs,
    intertwining_trials,
    random_rigid_operator as random_rigid_operator_local,
    smooth_samples,
)


@pytest.fixture(scope="module")
def hyperbolic():
    return example_4_8_operator(1e-3)


@pytest.fixture(scope="module")
def two_block():
    return example_5_4_operator(0.01)


def hyperbolic_weight(y):
    return np.sqrt(np.sinh(2.0 * y))


def hyperbolic_map(y):
    return -np.arctanh(np.exp(-2.0 * y))


class TestApply:
    def test_identity(self):
        domain = make_box((0, 0), (1, 1), 0.02)
        T = identity_operator(domain)
        u = random_smooth_field(domain, np.random.default_rng(0))
        assert np.abs(apply(T, u).values - u.values).max() <= 1e-10

    def test_two_block_on_linear(self, two_block):
        u = Field.from_function(two_block.source, lambda x: x[:, 1])
        image = apply(two_block, u)
        y = two_block.target.centers[:, 1]
        assert np.abs(image.values - (y - np.sign(y))).max() <= 1e-12

    def test_hyperbolic_on_indicator(self, hyperbolic):
        image = apply(hyperbolic, Field.constant(hyperbolic.source, 1.0))
        expected = hyperbolic_weight(hyperbolic.target.centers[:, 0])
        assert np.abs(image.values - expected).max() <= 1e-12

    def test_out_of_reach_nodes_are_flagged(self):
        # inclusion of the full interval into a source with gaps
        source = make_fat_cantor_complement(0.5, 1e-3)
        target = make_box(0.0, 1.0, 1e-3)
        T = rigid_operator(target, RigidMotion.identity(1), source=source)
        image, flags = apply_with_flags(T, Field.constant(source, 1.0))
        assert flags.sum() > 0
        assert np.abs(image.values[flags]).max() == 0.0

    def test_wrong_domain_rejected(self, two_block):
        with pytest.raises(ValueError):
            apply(two_block, Field.constant(two_block.target, 1.0))


class TestIsometryDefect:
    def test_identity_zero(self):
        domain = make_box((0, 0), (1, 1), 0.05)
        T = identity_operator(domain)
        samples = smooth_samples(domain, np.random.default_rng(1), 10)
        assert isometry_defect(T, samples, 3.0) <= 1e-8

    def test_two_block_is_isometric(self, two_block):
        samples = smooth_samples(two_block.source, np.random.default_rng(2), 50,
                                 amplitude=0.5)
        assert isometry_defect(two_block, samples, 3.0) <= 5 * two_block.target.h

    def test_hyperbolic_gap_matches_quadrature(self):
        # oracle: ||T1||^2 = int g^2 + int (g')^2 over (1,2) by adaptive quadrature
        T = example_4_8_operator(1e-4)
        norm_sq, _ = quad(
            lambda y: math.sinh(2 * y) + math.cosh(2 * y) ** 2 / math.sinh(2 * y),
            1.0, 2.0)
        expected = math.sqrt(norm_sq) - math.sqrt(T.source.measure)
        gap = isometry_defect(T, [Field.constant(T.source, 1.0)], 2.0)
        assert gap == pytest.approx(expected, abs=1e-3)
        assert gap == pytest.approx(4.52, abs=0.01)

    def test_empty_samples_rejected(self, two_block):
        with pytest.raises(ValueError):
            isometry_defect(two_block, [], 2.0)


class TestDisjointnessDefect:
    def test_rigid_operator_exactly_zero(self):
        target = make_box((0, 0), (1, 1), 0.02)
        T = rigid_operator(target, RigidMotion(np.eye(2), np.array([0.2, -0.4])))
        pairs = disjoint_bump_pairs(T.source, np.random.default_rng(3), 10)
        assert disjointness_defect(T, pairs, 3.0) == 0.0

    def test_two_block_zero(self, two_block):
        pairs = disjoint_bump_pairs(two_block.source, np.random.default_rng(4), 20)
        assert disjointness_defect(two_block, pairs, 3.0) == 0.0

    def test_averaging_counterexample(self):
        domain = make_box(0.0, 1.0, 0.005)
        avg = averaging_operator(domain)
        mirrored = (bump(domain, 0.3, 0.15), bump(domain, 0.7, 0.15))
        assert disjointness_defect(avg, [mirrored], 3.0) > 0.1

    def test_non_disjoint_pair_rejected(self, two_block):
        u = bump(two_block.source, (0.5, 0.0), 0.2)
        with pytest.raises(ValueError, match="not disjoint"):
            disjointness_defect(two_block, [(u, u)], 2.0)


class TestIntertwiningDefect:
    def test_identity(self):
        domain = make_box((0, 0), (1, 1), 0.02)
        T = identity_operator(domain)
        trials = intertwining_trials(T, np.random.default_rng(5), 5)
        assert intertwining_defect(T, trials, 3.0) <= 1e-10

    def test_hyperbolic_first_order_in_h(self, hyperbolic):
        h = hyperbolic.target.h
        trials = intertwining_trials(hyperbolic, np.random.default_rng(6), 20)
        defect = intertwining_defect(hyperbolic, trials, 2.0)
        assert defect <= 10 * h

    def test_scaling_breaks_intertwining(self):
        # oracle: the form is p-homogeneous, so T = 2 id shifts it by (2^p - 1)
        domain = make_box((0, 0), (1, 1), 0.02)
        u = random_smooth_field(domain, np.random.default_rng(7))
        v = bump(domain, (0.5, 0.5), 0.3)
        p = 3.0
        reference = abs(form_a(u, v, p))
        assert reference > 1e-3
        defect = intertwining_defect(lambda w: 2.0 * w, [(u, v)], p)
        assert defect == pytest.approx((2.0**p - 1.0) * reference, rel=1e-9)

    def test_support_violation_rejected(self, two_block):
        # a tent crossing the glue line has a non-compact image
        u = Field.constant(two_block.source, 1.0)
        from sil import hat
        v = hat(two_block.source, (0.5, 0.0), (0.3, 0.5))
        with pytest.raises(ValueError, match="boundary layer"):
            intertwining_defect(two_block, [(u, v)], 2.0)


class TestReconstruct:
    def test_identity(self):
        domain = make_box((0, 0), (1, 1), 0.02)
        rec = reconstruct(identity_operator(domain), p=2.0)
        assert rec.zero_set_cells == 0
        assert np.abs(rec.g_hat.values - 1.0).max() <= 1e-10
        assert np.abs(rec.xi_hat.values - domain.centers).max() <= 1e-10

    def test_hyperbolic_closed_forms(self, hyperbolic):
        rec = reconstruct(hyperbolic, p=2.0)
        y = hyperbolic.target.centers[:, 0]
        assert rec.zero_set_cells == 0
        assert np.abs(rec.g_hat.values - hyperbolic_weight(y)).max() <= 1e-6
        assert np.abs(rec.xi_hat.values[:, 0] - hyperbolic_map(y)).max() <= 1e-6

    def test_rigid_rotation_with_sign_flip(self):
        target = make_box((0, 0), (0.6, 0.4), 0.01)
        motion = RigidMotion.rotation(math.pi / 6, b=(0.3, 0.1), sign=-1)
        T = rigid_operator(target, motion)
        rec = reconstruct(T, p=3.0)
        expected = motion.transform(target.centers)
        assert np.abs(rec.xi_hat.values - expected).max() <= 2 * target.h
        assert np.abs(rec.g_hat.values + 1.0).max() <= 1e-8

    def test_blackbox_round_trip_within_interpolation(self):
        target = make_box((0, 0), (0.6, 0.4), 0.01)
        motion = RigidMotion.rotation(0.7, b=(0.2, -0.1))
        T = rigid_operator(target, motion)
        rec = reconstruct(lambda u: apply(T, u), target, p=2.0, source=T.source)
        ok = ~rec.zero_mask
        err = np.abs(rec.xi_hat.values - motion.transform(target.centers))
        assert err.max(axis=1)[ok].max() <= 2 * target.h

    def test_weight_independent_of_probe_axis(self, two_block):
        rec = reconstruct(two_block, p=3.0)
        assert np.abs(rec.g_by_axis[0] - rec.g_by_axis[1]).max() <= 1e-8

    def test_vanishing_operator_rejected(self):
        domain = make_box(0.0, 1.0, 0.05)
        dead = lambda u: Field.constant(domain, 0.0)
        with pytest.raises(ValueError, match="vanish"):
            reconstruct(dead, domain, p=2.0, source=domain)

    def test_round_trip_sweep(self):
        rng = np.random.default_rng(8)
        for _ in range(5):
            target = make_box((0, 0), tuple(rng.uniform(0.3, 0.7, 2)), 0.01)
            motion = random_rigid_motion(2, rng)
            T = rigid_operator(target, motion)
            rec = reconstruct(T, p=2.0)
            assert np.abs(rec.xi_hat.values - T.xi_values).max() <= 1e-8
            assert np.abs(np.abs(rec.g_hat.values) - 1.0).max() <= 1e-8


class TestRigidMotionFit:
    def test_exact_rigid_input(self):
        target = make_box((0, 0), (0.5, 0.5), 0.01)
        motion = RigidMotion.rotation(1.1, b=(0.4, 0.2), sign=-1)
        T = rigid_operator(target, motion)
        fit = rigid_motion_fit(reconstruct(T, p=2.0), target)
        assert fit.rigid
        assert fit.orthogonality_defect <= 1e-8
        assert fit.grad_g_defect <= 1e-8
        assert fit.weight_defect <= 1e-8
        assert np.abs(fit.motions[0].Q - motion.Q).max() <= 1e-8
        assert np.abs(fit.motions[0].b - motion.b).max() <= 1e-8
        assert fit.motions[0].sign == -1

    def test_hyperbolic_is_not_rigid(self, hyperbolic):
        fit = rigid_motion_fit(reconstruct(hyperbolic, p=2.0), hyperbolic.target)
        assert not fit.rigid
        assert fit.orthogonality_defect > 0.5
        assert fit.grad_g_defect > 1.0
        # the map stretch |xi'| tracks its closed form away from the ends
        y = hyperbolic.target.centers[:, 0]
        interior = ~hyperbolic.target.boundary_layer_mask(2)
        dev = np.abs(fit.c_field.values - 1.0 / np.sinh(2.0 * y))
        assert dev[interior].max() <= 1e-3

    def test_two_block_translations(self, two_block):
        h = two_block.target.h
        fit = rigid_motion_fit(reconstruct(two_block, p=3.0), two_block.target)
        assert fit.rigid
        # components are ordered bottom block first
        shifts = [m.b for m in fit.motions]
        assert np.abs(fit.motions[0].Q - np.eye(2)).max() <= 2 * h
        assert np.abs(shifts[0] - np.array([0.0, 1.0])).max() <= 2 * h
        assert np.abs(shifts[1] - np.array([0.0, -1.0])).max() <= 2 * h
        assert all(m.sign == 1 for m in fit.motions)

    def test_tiny_component_rejected(self):
        domain = make_box(0.0, 0.25, 0.3)  # a single cell
        T = identity_operator(domain)
        with pytest.raises(ValueError, match="too small"):
            rigid_motion_fit(reconstruct(T, p=2.0), domain)


class TestRigidOperatorInvariants:
    def test_isometry_and_intertwining_within_5h(self):
        h = 0.01
        rng = np.random.default_rng(21)
        for _ in range(3):
            T = random_rigid_operator_local(rng, h)
            samples = smooth_samples(T.source, rng, 10, amplitude=0.5)
            assert isometry_defect(T, samples, 3.0) <= 5 * h
            trials = intertwining_trials(T, rng, 8)
            assert intertwining_defect(T, trials, 3.0) <= 5 * h


class TestDefectSets:
    def test_identity_has_no_defects(self):
        domain = make_box((0, 0), (1, 1), 0.02)
        ds = defect_sets(reconstruct(identity_operator(domain), p=2.0), domain)
        assert ds.n2_cells == 0
        assert ds.n1_measure == 0.0
        assert ds.u1 == domain and ds.u2 == domain

    def test_fat_cantor_inclusion_has_thick_complement(self):
        h = 1e-4
        source = make_box(0.0, 1.0, h)
        target = make_fat_cantor_complement(0.5, h)
        T = rigid_operator(target, RigidMotion.identity(1), source=source)
        ds = defect_sets(reconstruct(T, p=2.0), source, target)
        assert ds.n2_cells == 0
        assert ds.n1_measure == pytest.approx(0.5, abs=0.02)
        assert ds.n1_measure > 0.4  # genuinely positive-measure defect

    def test_two_block_slit_is_null(self, two_block):
        ds = defect_sets(reconstruct(two_block, p=2.0),
                         two_block.source, two_block.target)
        assert ds.n2_cells == 0
        assert ds.n1_measure <= 2 * two_block.target.h


class TestCongruencePipeline:
    def test_rigid_operator_matching_domains(self):
        target = make_box((0, 0), (1, 1), 0.01)
        T = rigid_operator(target, RigidMotion(np.eye(2), np.array([0.3, -0.2])))
        report = congruence_pipeline(T, p=2.0, tol=4 * target.h)
        assert report.congruent and report.reason == "congruent"

    def test_two_block_pairing(self, two_block):
        h = two_block.target.h
        report = congruence_pipeline(two_block, p=3.0, tol=4 * h)
        assert report.congruent
        assert len(report.motions) == 2
        assert report.n2_cells == 0
        assert report.n1_measure <= 2 * h
        # pairing: lower block translates up, upper block translates down
        assert np.abs(report.motions[0].b - [0.0, 1.0]).max() <= 2 * h
        assert np.abs(report.motions[1].b - [0.0, -1.0]).max() <= 2 * h
        lows = [box[0][1] for box in report.image_boxes]
        assert sorted(round(v) for v in lows) == [-1, 0]
        assert report.source_regular and report.target_regular

    def test_hyperbolic_rejected_as_non_rigid(self, hyperbolic):
        report = congruence_pipeline(hyperbolic, p=2.0, tol=4 * hyperbolic.target.h)
        assert not report.congruent
        assert report.reason == "non-rigid xi"

    def test_report_serializes(self, two_block):
        import json
        report = congruence_pipeline(two_block, p=3.0, tol=0.04)
        payload = json.dumps(report.to_json_dict())
        assert "pairing" in payload


class TestPreimage:
    def test_two_block_preimage(self, two_block):
        fit = rigid_motion_fit(reconstruct(two_block, p=2.0), two_block.target)
        phi = bump(two_block.target, (0.5, 1.5), 0.2)
        w, covered = preimage_field(two_block, phi, fit)
        assert covered.all()
        assert np.abs(apply(two_block, w).values - phi.values).max() <= 1e-10


class TestOperatorSpec:
    def test_h1_bounding_box_enforced(self):
        # a motion that drags the target far outside the declared source
        target = make_box((0, 0), (1, 1), 0.05)
        source = make_box((0, 0), (1, 1), 0.05)
        motion = RigidMotion(np.eye(2), np.array([10.0, 0.0]))
        with pytest.raises(ValueError, match="bounding box"):
            OperatorSpec(source, target, RigidMap((motion,), (None,)))

    def test_tabulated_requires_target_domain(self):
        a = make_box((0, 0), (1, 1), 0.1)
        b = make_box((0, 0), (1, 1), 0.05)
        g = Field.constant(b, 1.0)
        xi = VectorField(b, b.centers)
        with pytest.raises(ValueError):
            OperatorSpec(a, a, TabulatedMap(g, xi))

    def test_rigid_component_assignment_checked(self, two_block):
        motion = RigidMotion.identity(2)
        with pytest.raises(ValueError, match="no motion"):
            OperatorSpec(two_block.source, two_block.target,
                         RigidMap((motion,), (0,)))._evaluate()

    def test_averaging_requires_symmetry(self):
        averaging_operator(make_box(0.0, 1.0, 0.01))
        from sil import domain_from_spec
        lopsided = domain_from_spec({
            "dim": 1, "h": 0.01,
            "boxes": [{"lo": [0.0], "hi": [1.0]}],
            "subtract": [{"lo": [0.1], "hi": [0.2]}],
        })
        with pytest.raises(ValueError, match="symmetric"):
            averaging_operator(lopsided)


class TestOperatorJson:
    def test_builtin(self):
        T = operator_from_spec({"builtin": "example_4_8", "h": 1e-3})
        assert T.target.measure == pytest.approx(1.0, abs=1e-3)

    def test_rigid_round_trip(self):
        target = make_box((0, 0), (0.5, 0.5), 0.02)
        motion = RigidMotion.rotation(0.4, b=(0.1, 0.2))
        spec = {"rigid": [motion.to_json_dict()],
                "target": {"dim": 2, "h": 0.02,
                           "boxes": [{"lo": [0, 0], "hi": [0.5, 0.5]}]}}
        T = operator_from_spec(spec)
        assert T.target == target
        assert np.abs(T.xi_values - motion.transform(target.centers)).max() <= 1e-12

    def test_tabulated_round_trip(self, tmp_path, two_block):
        g = Field(two_block.target, two_block.g_values)
        xi = VectorField(two_block.target, two_block.xi_values)
        g.to_csv(tmp_path / "g.csv")
        xi.to_csv(tmp_path / "xi.csv")
        spec = {"tabulated": {"g": "g.csv", "xi": "xi.csv"},
                "target": {"dim": 2, "h": 0.01,
                           "boxes": [{"lo": [0, -2], "hi": [1, 2]}],
                           "subtract": [{"lo": [0, -1], "hi": [1, 1]}]}}
        T = operator_from_spec(spec, base_dir=str(tmp_path))
        u = random_smooth_field(two_block.source, np.random.default_rng(11))
        via_builtin = apply(two_block, u).values
        # the tabulated twin reproduces the builtin up to its own source box
        T = OperatorSpec(two_block.source, T.target, T.variant)
        assert np.abs(apply(T, u).values - via_builtin).max() <= 1e-12

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            operator_from_spec({"mystery": 1})


class TestDefectReport:
    def test_json_key_order(self):
        report = DefectReport(0.1, 0.0, 0.2, 0.3, 0.4, 0.5, 0.6, 7)
        assert list(report.to_json_dict()) == [
            "isometry", "disjointness", "intertwining", "orthogonality",
            "grad_g", "weight", "n1_measure", "n2_cells"]
