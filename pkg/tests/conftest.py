import numpy as np
import pytest

from fplap import (
    DiscreteFunction,
    DomainSpec,
    FractionalParams,
    ProblemSpec,
    build_grid,
)


def zero_field(x):
    return np.zeros(np.atleast_2d(x).shape[0])


def make_problem(grid, s, p, q=None, g=None, ext=None, far=0.0, **kw):
    """Problem on an existing grid from per-node arrays or callables."""

    def as_fn(val):
        if val is None:
            return DiscreteFunction(grid, np.zeros(grid.node_count), 0.0)
        if isinstance(val, DiscreteFunction):
            return val
        if callable(val):
            return DiscreteFunction(grid, np.asarray(val(grid.nodes), dtype=float), far)
        return DiscreteFunction(grid, np.asarray(val, dtype=float), far)

    ext_fn = as_fn(ext)
    ext_fn = ext_fn.with_values(np.where(grid.interior_mask, 0.0, ext_fn.values), far)
    return ProblemSpec(grid, FractionalParams(s, p), as_fn(q), as_fn(g), ext_fn, **kw)


def ring_problem(h=1 / 16, s=0.5, p=2.0, inner_value=1.0, q=None, grid=None, **kw):
    """1D annulus with `inner_value` on the hole and zero outside."""
    if grid is None:
        grid = build_grid(DomainSpec.annulus(0.25, 1.0, dimension=1), h)
    ext = np.where(
        ~grid.interior_mask & grid.domain.inner_side(grid.nodes), inner_value, 0.0
    )
    return make_problem(grid, s, p, q=q, ext=ext, **kw)


@pytest.fixture
def annulus_grid():
    return build_grid(DomainSpec.annulus(0.25, 1.0, dimension=1), 1 / 16)


@pytest.fixture
def tiny_grid():
    return build_grid(DomainSpec.annulus(0.25, 1.0, dimension=1), 0.25)
