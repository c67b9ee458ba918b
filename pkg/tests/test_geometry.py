import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxtrace.geometry import (
    CIRCLE_RADIUS,
    CircleSource,
    ShapeRejected,
    StarSource,
    circle_from_unconstrained,
    rasterize,
    star_radius,
    unconstrained_from_circle,
)
from fluxtrace.grid import TWO_PI, PolarGrid


@pytest.fixture
def grid():
    return PolarGrid(n_r=33, n_theta=36)


class TestCircleMap:
    def test_origin_maps_to_disc_center(self):
        src = circle_from_unconstrained([0.0, 0.0])
        assert src.rho == pytest.approx(0.5)
        assert src.omega == pytest.approx(np.pi)

    def test_reference_center(self):
        # (0, -1) puts the center at (0, 0.5): rho = 1/2, omega = pi/2
        src = circle_from_unconstrained([0.0, -1.0])
        assert src.rho == pytest.approx(0.5)
        assert src.omega == pytest.approx(np.pi / 2)
        ex, ey = src.eta
        assert ex == pytest.approx(0.0, abs=1e-12)
        assert ey == pytest.approx(0.5)

    def test_radius_is_fixed(self):
        assert circle_from_unconstrained([3.0, -2.0]).radius == CIRCLE_RADIUS

    def test_ranges(self):
        for xi in ([-50.0, -50.0], [50.0, 50.0], [0.1, -0.3]):
            src = circle_from_unconstrained(xi)
            assert 0.0 < src.rho < 1.0
            assert 0.0 < src.omega < TWO_PI

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            circle_from_unconstrained([1.0, 2.0, 3.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            circle_from_unconstrained([np.nan, 0.0])

    @given(
        xi1=st.floats(-1e3, 1e3, allow_nan=False),
        xi2=st.floats(-1e3, 1e3, allow_nan=False),
    )
    def test_bijection_round_trip(self, xi1, xi2):
        src = circle_from_unconstrained([xi1, xi2])
        back = unconstrained_from_circle(src.rho, src.omega)
        # tan(arctan(x)) loses relative precision as |x| grows
        assert back[0] == pytest.approx(xi1, rel=1e-10, abs=1e-10)
        assert back[1] == pytest.approx(xi2, rel=1e-10, abs=1e-10)

    @given(x=st.floats(-1e6, 1e6, allow_nan=False))
    def test_rho_monotone(self, x):
        lo = circle_from_unconstrained([x, 0.0]).rho
        hi = circle_from_unconstrained([x + 1.0, 0.0]).rho
        assert hi > lo

    def test_inverse_validates_range(self):
        with pytest.raises(ValueError):
            unconstrained_from_circle(1.5, np.pi)
        with pytest.raises(ValueError):
            unconstrained_from_circle(0.5, -0.1)


class TestStarProfile:
    def test_reference_profile(self):
        xi = [1.0, 0.0, 0.0, 0.0, 0.3]
        assert star_radius(0.0, xi) == pytest.approx(0.5)
        assert star_radius(np.pi / 4, xi) == pytest.approx(0.8)

    def test_coefficient_layout(self):
        # layout: [const, cos 1t, cos 2t, sin 1t, sin 2t]
        t = np.array([0.3, 1.1, 4.0])
        assert star_radius(t, [0, 1, 0, 0, 0]) == pytest.approx(np.cos(t))
        assert star_radius(t, [0, 0, 1, 0, 0]) == pytest.approx(np.cos(2 * t))
        assert star_radius(t, [0, 0, 0, 1, 0]) == pytest.approx(np.sin(t))
        assert star_radius(t, [0, 0, 0, 0, 1]) == pytest.approx(np.sin(2 * t))

    def test_rejects_even_length(self):
        with pytest.raises(ValueError):
            star_radius(0.0, [1.0, 0.0, 0.0, 0.0])

    def test_rejects_too_short(self):
        with pytest.raises(ValueError):
            star_radius(0.0, [1.0])

    @given(
        xi=st.lists(st.floats(-2, 2, allow_nan=False), min_size=5, max_size=5),
        theta=st.floats(0, 7, allow_nan=False),
    )
    def test_periodicity(self, xi, theta):
        assert star_radius(theta + TWO_PI, xi) == pytest.approx(
            star_radius(theta, xi), rel=1e-9, abs=1e-9
        )

    def test_admissible_on_grid(self, grid):
        assert StarSource(np.array([1.0, 0, 0, 0, 0.3])).admissible_on(grid)
        assert not StarSource(np.array([2.5, 0, 0, 0, 0.0])).admissible_on(grid)
        assert not StarSource(np.array([0.0, 0, 0, 0, 0.0])).admissible_on(grid)


class TestRasterize:
    def test_values_are_indicator(self, grid):
        chi = rasterize(circle_from_unconstrained([0.0, -1.0]), grid)
        assert chi.shape == (grid.n_r, grid.n_theta)
        assert set(np.unique(chi)) <= {0.0, 1.0}
        assert chi.sum() > 0

    def test_circle_membership_matches_distance(self, grid):
        src = circle_from_unconstrained([0.0, -1.0])
        chi = rasterize(src, grid)
        ex, ey = src.eta
        x = grid.radii[:, None] * np.cos(grid.angles[None, :])
        y = grid.radii[:, None] * np.sin(grid.angles[None, :])
        expected = ((x - ex) ** 2 + (y - ey) ** 2 < src.radius**2).astype(float)
        np.testing.assert_array_equal(chi, expected)

    def test_star_membership(self, grid):
        src = StarSource(np.array([1.0, 0, 0, 0, 0.3]))
        chi = rasterize(src, grid)
        q = src.radius_at(grid.angles)
        expected = (grid.radii[:, None] < q[None, :]).astype(float)
        np.testing.assert_array_equal(chi, expected)

    def test_inadmissible_star_rejected(self, grid):
        with pytest.raises(ShapeRejected):
            rasterize(StarSource(np.array([2.5, 0, 0, 0, 0.0])), grid)
        with pytest.raises(ShapeRejected):
            rasterize(StarSource(np.array([0.0, 0, 0, 0, 0.0])), grid)

    @given(r_small=st.floats(0.05, 0.3), extra=st.floats(0.01, 0.3))
    @settings(max_examples=25)
    def test_monotone_in_radius(self, r_small, extra):
        grid = PolarGrid(n_r=17, n_theta=24)
        center = CircleSource(rho=0.4, omega=1.0, radius=r_small)
        bigger = CircleSource(rho=0.4, omega=1.0, radius=r_small + extra)
        assert np.all(rasterize(center, grid) <= rasterize(bigger, grid))

    def test_full_disc_star(self, grid):
        # q just under the outer bound covers every interior node
        chi = rasterize(StarSource(np.array([1.96, 0, 0, 0, 0.0])), grid)
        assert np.all(chi[grid.radii < 0.98] == 1.0)
