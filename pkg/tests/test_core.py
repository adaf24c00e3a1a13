import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fplap import DiscreteFunction, DomainSpec, NodeRole, build_grid, interpolate, sample_function
from fplap.errors import BadGeometryError, EmptyInteriorError, NonFiniteValueError


class TestBuildGrid:
    def test_1d_annulus_interior_nodes(self):
        grid = build_grid(DomainSpec.annulus(0.25, 1.0, dimension=1), 0.25, r_infinity=16.0)
        interior = sorted(grid.nodes[grid.interior_mask][:, 0])
        assert interior == [-0.75, -0.5, 0.5, 0.75]

    def test_2d_ball_interior_nodes(self):
        grid = build_grid(DomainSpec.ball(1.0, dimension=2), 0.5, r_infinity=32.0)
        pts = {tuple(x) for x in grid.nodes[grid.interior_mask]}
        assert pts == {(0.0, 0.0), (0.5, 0.0), (-0.5, 0.0), (0.0, 0.5), (0.0, -0.5)}

    def test_bad_ring_geometry(self):
        with pytest.raises(BadGeometryError):
            DomainSpec.starshaped_ring(0.5, 1.0)

    def test_empty_interior(self):
        with pytest.raises(EmptyInteriorError):
            build_grid(DomainSpec.annulus(0.25, 0.35, dimension=1), 0.4)

    @pytest.mark.parametrize(
        "spec,h",
        [
            (DomainSpec.annulus(0.25, 1.0, dimension=1), 1 / 8),
            (DomainSpec.ball(1.0, dimension=2), 0.3),
            (DomainSpec.halfspace_slab(4.0, dimension=1), 0.25),
            (DomainSpec.starshaped_ring(lambda t: 1 + 0.2 * np.cos(3 * t), 0.3), 0.15),
        ],
    )
    def test_role_partition(self, spec, h):
        grid = build_grid(spec, h)
        n_int = int(np.sum(grid.roles == NodeRole.INTERIOR))
        n_ext = int(np.sum(grid.roles == NodeRole.EXTERIOR_FIXED))
        assert n_int + n_ext == grid.node_count
        assert n_int > 0

    @pytest.mark.parametrize(
        "spec",
        [
            DomainSpec.annulus(0.25, 1.0, dimension=1),
            DomainSpec.ball(1.0, dimension=2),
        ],
    )
    def test_refinement_grows_interior(self, spec):
        coarse = build_grid(spec, 0.2)
        fine = build_grid(spec, 0.1)
        assert fine.interior_mask.sum() > coarse.interior_mask.sum()

    def test_immutable_arrays(self):
        grid = build_grid(DomainSpec.ball(1.0, dimension=1), 0.25)
        with pytest.raises(ValueError):
            grid.nodes[0] = 99.0

    def test_truncation_precondition(self):
        with pytest.raises(BadGeometryError):
            build_grid(DomainSpec.ball(1.0, dimension=1), 0.25, r_infinity=3.0)


class TestSampleFunction:
    def test_constant(self, tiny_grid):
        u = sample_function(tiny_grid, lambda x: np.ones(len(np.atleast_2d(x))))
        assert np.all(u.values == 1.0)
        assert u.far_field_value == 1.0

    def test_coordinate(self):
        grid = build_grid(DomainSpec.ball(1.0, dimension=1), 0.5, margin=0.0)
        u = sample_function(grid, lambda x: np.atleast_2d(x)[:, 0], far_field_value=0.0)
        assert sorted(u.values) == [-1.0, -0.5, 0.0, 0.5, 1.0]

    def test_non_finite_rejected(self, tiny_grid):
        node = tiny_grid.nodes[3, 0]
        with np.errstate(divide="ignore"), pytest.raises(NonFiniteValueError):
            sample_function(
                tiny_grid,
                lambda x: 1.0 / (np.atleast_2d(x)[:, 0] - node),
                far_field_value=0.0,
            )


class TestInterpolate:
    def test_exact_at_nodes(self, annulus_grid):
        rng = np.random.default_rng(0)
        u = DiscreteFunction(annulus_grid, rng.normal(size=annulus_grid.node_count), 0.0)
        got = interpolate(u, annulus_grid.nodes)
        assert np.max(np.abs(got - u.values)) < 1e-14

    def test_linear_reproduction_1d(self, annulus_grid):
        u = sample_function(annulus_grid, lambda x: 3.0 * np.atleast_2d(x)[:, 0] + 1.0,
                            far_field_value=0.0)
        q = np.random.default_rng(1).uniform(-1.2, 1.2, (50, 1))
        assert np.max(np.abs(interpolate(u, q) - (3.0 * q[:, 0] + 1.0))) < 1e-12

    def test_linear_reproduction_2d(self):
        grid = build_grid(DomainSpec.ball(1.0, dimension=2), 0.25)
        u = sample_function(
            grid, lambda x: 2.0 * np.atleast_2d(x)[:, 0] - np.atleast_2d(x)[:, 1],
            far_field_value=0.0)
        q = np.random.default_rng(2).uniform(-0.9, 0.9, (50, 2))
        expect = 2.0 * q[:, 0] - q[:, 1]
        assert np.max(np.abs(interpolate(u, q) - expect)) < 1e-12

    def test_quadratic_midpoint(self):
        grid = build_grid(DomainSpec.ball(1.0, dimension=1), 0.5, margin=0.0)
        u = sample_function(grid, lambda x: np.atleast_2d(x)[:, 0] ** 2, far_field_value=0.0)
        assert interpolate(u, np.array([0.25])) == pytest.approx(0.125)

    def test_far_field(self, annulus_grid):
        u = DiscreteFunction(annulus_grid, np.ones(annulus_grid.node_count), 7.0)
        r = annulus_grid.truncation_radius
        assert interpolate(u, np.array([r + 1.0])) == 7.0

    def test_clamped_between_box_and_truncation(self, annulus_grid):
        u = DiscreteFunction(annulus_grid, np.arange(annulus_grid.node_count, dtype=float), 0.0)
        edge = annulus_grid.nodes[-1]
        mid = edge + 0.5 * (annulus_grid.truncation_radius - edge[0])
        assert interpolate(u, mid) == u.values[-1]


class TestDiscreteFunction:
    def test_length_checked(self, tiny_grid):
        with pytest.raises(NonFiniteValueError):
            DiscreteFunction(tiny_grid, np.zeros(3), 0.0)

    def test_finite_checked(self, tiny_grid):
        vals = np.zeros(tiny_grid.node_count)
        vals[0] = np.nan
        with pytest.raises(NonFiniteValueError):
            DiscreteFunction(tiny_grid, vals, 0.0)


@given(st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=30, deadline=None)
def test_superlevel_nesting(l1, spread):
    from fplap.geometry import superlevel_mask

    grid = build_grid(DomainSpec.ball(1.0, dimension=1), 0.25)
    u = sample_function(grid, lambda x: 1.0 - np.abs(np.atleast_2d(x)[:, 0]),
                        far_field_value=0.0)
    l2 = l1 + spread
    assert np.all(superlevel_mask(u, l2) <= superlevel_mask(u, l1))
