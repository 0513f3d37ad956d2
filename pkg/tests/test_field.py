import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sil import (
    Field,
    VectorField,
    ball_fits,
    bump,
    example_4_8_omega1,
    exponential_probe,
    gradient,
    hat,
    is_compactly_supported,
    lp_norm,
    lp_pow_sum,
    make_box,
    probe_rate,
    random_smooth_field,
    w1p_norm,
    w1p_pow_sum,
)


@pytest.fixture
def interval():
    return make_box(0.0, 1.0, 1e-3)


@pytest.fixture
def square():
    return make_box((0.0, 0.0), (1.0, 1.0), 0.02)


class TestGradient:
    def test_constant_field(self, interval):
        g = gradient(Field.constant(interval, 3.5))
        assert np.abs(g.values).max() == 0.0

    def test_linear_is_exact(self, interval):
        g = gradient(Field.from_function(interval, lambda x: x[:, 0]))
        assert np.abs(g.values[:, 0] - 1.0).max() <= 1e-9

    def test_exponential_accuracy(self, interval):
        # oracle: the analytic derivative; central/one-sided stencils are O(h^2)
        g = gradient(Field.from_function(interval, lambda x: np.exp(x[:, 0])))
        exact = np.exp(interval.centers[:, 0])
        assert np.abs(g.values[:, 0] - exact).max() <= 1e-5

    def test_isolated_cell_gets_zero(self):
        domain = make_box(0.0, 1.0, 0.3)  # 3 cells
        single = make_box(0.0, 0.25, 0.3)  # 1 cell
        assert single.n_cells == 1
        g = gradient(Field.constant(single, 7.0))
        assert g.values.tolist() == [[0.0]]

    def test_2d_mixed_smooth(self, square):
        u = Field.from_function(square, lambda x: np.sin(x[:, 0]) * np.cos(x[:, 1]))
        g = gradient(u)
        ex = np.cos(square.centers[:, 0]) * np.cos(square.centers[:, 1])
        ey = -np.sin(square.centers[:, 0]) * np.sin(square.centers[:, 1])
        assert np.abs(g.values[:, 0] - ex).max() <= 1e-3
        assert np.abs(g.values[:, 1] - ey).max() <= 1e-3


class TestLpNorm:
    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0, 7.0])
    def test_indicator(self, interval, p):
        assert lp_norm(Field.constant(interval, 1.0), p) == pytest.approx(1.0, abs=1e-12)

    def test_linear_closed_form(self, interval):
        # oracle: int_0^1 x^2 dx = 1/3
        u = Field.from_function(interval, lambda x: x[:, 0])
        assert lp_norm(u, 2.0) == pytest.approx(math.sqrt(1.0 / 3.0), abs=1e-4)

    def test_zero_field(self, interval):
        assert lp_norm(Field.constant(interval, 0.0), 2.5) == 0.0

    def test_p_below_one_rejected(self, interval):
        with pytest.raises(ValueError):
            lp_norm(Field.constant(interval, 1.0), 0.5)


class TestW1pNorm:
    def test_indicator_unit_interval(self, interval):
        assert w1p_norm(Field.constant(interval, 1.0), 3.0) == pytest.approx(1.0, abs=1e-12)

    def test_indicator_on_hyperbolic_image(self):
        domain = example_4_8_omega1(1e-4)
        value = w1p_norm(Field.constant(domain, 1.0), 2.0)
        assert value == pytest.approx(math.sqrt(0.118), abs=0.005)

    def test_linear_closed_form(self, interval):
        # oracle: int x^2 + int 1 = 4/3
        u = Field.from_function(interval, lambda x: x[:, 0])
        assert w1p_norm(u, 2.0) == pytest.approx(math.sqrt(4.0 / 3.0), abs=1e-3)

    def test_power_decomposition_exact(self, square):
        rng = np.random.default_rng(1)
        u = random_smooth_field(square, rng)
        for p in (1.5, 2.0, 3.0):
            assert w1p_pow_sum(u, p) == lp_pow_sum(u, p) + lp_pow_sum(gradient(u), p)

    def test_triangle_inequality_sweep(self):
        domain = make_box(0.0, 1.0, 0.01)
        rng = np.random.default_rng(9)
        for p in (1.5, 2.0, 3.0, 4.0):
            for _ in range(250):
                u = random_smooth_field(domain, rng)
                v = random_smooth_field(domain, rng)
                assert w1p_norm(u + v, p) <= w1p_norm(u, p) + w1p_norm(v, p) + 1e-12


class TestExponentialProbe:
    def test_p2_rate_is_one(self, interval):
        u = exponential_probe(interval, 0, 1, 2.0)
        assert probe_rate(2.0) == 1.0
        assert np.allclose(u.values, np.exp(interval.centers[:, 0]), rtol=1e-15)

    def test_p3_rate(self, interval):
        # oracle: (p-1)^(-1/p) evaluated directly
        assert probe_rate(3.0) == pytest.approx(2.0 ** (-1.0 / 3.0), abs=1e-15)
        u = exponential_probe(interval, 0, 1, 3.0)
        expected = np.exp(2.0 ** (-1.0 / 3.0) * interval.centers[:, 0])
        assert np.allclose(u.values, expected, rtol=1e-15)

    def test_plus_minus_product_is_one(self, interval):
        plus = exponential_probe(interval, 0, 1, 3.0)
        minus = exponential_probe(interval, 0, -1, 3.0)
        assert np.abs((plus * minus).values - 1.0).max() <= 1e-12

    def test_p_at_most_one_rejected(self, interval):
        with pytest.raises(ValueError):
            exponential_probe(interval, 0, 1, 1.0)


class TestBump:
    def test_value_one_at_node_aligned_center(self, square):
        row = square.rows_of_indices(np.array([[25, 25]]))[0]
        center = tuple(square.centers[row])
        b = bump(square, center, 0.25)
        assert b.at(np.array([center]))[0] == pytest.approx(1.0, abs=1e-12)

    def test_zero_outside_radius(self, square):
        b = bump(square, (0.5, 0.5), 0.2)
        far = np.linalg.norm(square.centers - [0.5, 0.5], axis=1) >= 0.2
        assert np.abs(b.values[far]).max() == 0.0
        assert b.at(np.array([[0.95, 0.95]]))[0] == 0.0

    def test_support_not_contained_rejected(self, square):
        assert not ball_fits(square, (0.9, 0.9), 0.3)
        with pytest.raises(ValueError, match="support"):
            bump(square, (0.9, 0.9), 0.3)

    def test_vanishes_on_boundary_layer(self, square):
        b = bump(square, (0.5, 0.5), 0.3)
        assert is_compactly_supported(b)

    def test_norm_stable_under_refinement(self):
        # grid-refinement self-consistency at p = 3
        coarse = w1p_norm(bump(make_box((0, 0), (1, 1), 0.02), (0.5, 0.5), 0.25), 3.0)
        fine = w1p_norm(bump(make_box((0, 0), (1, 1), 0.01), (0.5, 0.5), 0.25), 3.0)
        assert abs(coarse - fine) / fine <= 0.01


class TestLattice:
    def test_disjoint_supports_meet_zero(self, square):
        u = bump(square, (0.25, 0.25), 0.15)
        v = bump(square, (0.75, 0.75), 0.15)
        assert abs(u).minimum(abs(v)).values.max() == 0.0

    def test_overlapping_supports_meet_positive(self, square):
        u = bump(square, (0.45, 0.5), 0.2)
        v = bump(square, (0.55, 0.5), 0.2)
        assert abs(u).minimum(abs(v)).values.max() > 0.0

    def test_min_max_abs(self, square):
        rng = np.random.default_rng(2)
        u = random_smooth_field(square, rng)
        v = random_smooth_field(square, rng)
        assert np.all(u.minimum(v).values <= u.maximum(v).values)
        assert np.all(abs(u).values >= 0.0)

    def test_nan_rejected(self, square):
        vals = np.ones(square.n_cells)
        vals[3] = np.nan
        with pytest.raises(ValueError):
            Field(square, vals)


@settings(max_examples=30, deadline=None)
@given(magnitude=st.floats(min_value=1e-3, max_value=100.0),
       negate=st.booleans(),
       p=st.sampled_from([1.0, 1.5, 2.0, 3.0, 4.0]),
       seed=st.integers(0, 50))
def test_lp_norm_homogeneity(magnitude, negate, p, seed):
    scale = -magnitude if negate else magnitude
    domain = make_box(0.0, 1.0, 0.02)
    u = random_smooth_field(domain, np.random.default_rng(seed))
    expected = abs(scale) * lp_norm(u, p)
    assert lp_norm(scale * u, p) == pytest.approx(expected, rel=1e-12)


class TestInterpolation:
    def test_constant_is_exact_everywhere(self, square):
        u = Field.constant(square, 2.5)
        pts = np.random.default_rng(0).uniform(0.001, 0.999, (200, 2))
        assert np.abs(u.at(pts) - 2.5).max() <= 1e-14

    def test_linear_exact_in_interior(self, square):
        u = Field.from_function(square, lambda x: 2.0 * x[:, 0] - x[:, 1])
        pts = np.random.default_rng(1).uniform(0.1, 0.9, (200, 2))
        exact = 2.0 * pts[:, 0] - pts[:, 1]
        assert np.abs(u.at(pts) - exact).max() <= 1e-12

    def test_far_outside_gives_zero(self, square):
        u = Field.constant(square, 1.0)
        vals, covered = u.at_with_coverage(np.array([[5.0, 5.0]]))
        assert vals[0] == 0.0 and not covered[0]


class TestCsv:
    def test_field_round_trip(self, tmp_path, square):
        u = random_smooth_field(square, np.random.default_rng(3))
        path = tmp_path / "field.csv"
        u.to_csv(path)
        v = Field.from_csv(path, square)
        assert np.array_equal(u.values, v.values)

    def test_vector_field_round_trip(self, tmp_path, square):
        vf = gradient(random_smooth_field(square, np.random.default_rng(4)))
        path = tmp_path / "vec.csv"
        vf.to_csv(path)
        back = VectorField.from_csv(path, square)
        assert np.array_equal(vf.values, back.values)

    def test_header_checked(self, tmp_path, square):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            Field.from_csv(path, square)

    def test_coverage_checked(self, tmp_path, square):
        u = Field.constant(square, 1.0)
        path = tmp_path / "field.csv"
        u.to_csv(path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ValueError, match="cover"):
            Field.from_csv(path, square)


class TestHat:
    def test_peak_and_support(self, interval):
        center = float(interval.centers[500, 0])
        v = hat(interval, center, 0.2)
        assert v.values.max() == 1.0
        assert v.at(np.array([[center]]))[0] == pytest.approx(1.0, abs=1e-12)
        assert np.abs(v.values[np.abs(interval.centers[:, 0] - center) >= 0.2]).max() == 0.0

    def test_compact_inside(self, interval):
        assert is_compactly_supported(hat(interval, 0.5, 0.3))
