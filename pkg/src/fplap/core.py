"""Grids, domain geometry, and nodal function containers.

Grids are uniform lattices h*Z^N (N in {1, 2}) restricted to a bounding box
around the domain D. A node is INTERIOR when the circumball of its cell lies
inside D, so boundary-grazing nodes land on the fixed-data side; everything
else in the box is EXTERIOR_FIXED. Beyond the truncation radius every
function is a single constant (its far-field value).

All containers are immutable after construction: arrays are marked
read-only, so concurrent reads are safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Callable

import numpy as np

from .errors import BadGeometryError, EmptyInteriorError, NonFiniteValueError

BOUNDARY_SNAP = 1e-12  # lattice points within this (times h) of a role switch stay exterior
DEFAULT_THETA_SAMPLES = 720


class NodeRole(IntEnum):
    INTERIOR = 0
    EXTERIOR_FIXED = 1
    # Reserved for truncation-sphere bookkeeping; build_grid never assigns it,
    # so INTERIOR and EXTERIOR_FIXED always partition the node set.
    FAR_FIELD_BOUNDARY = 2


class DomainKind(str, Enum):
    BALL = "BALL"
    ANNULUS = "ANNULUS"
    STARSHAPED_RING = "STARSHAPED_RING"
    HALFSPACE_SLAB = "HALFSPACE_SLAB"
    CUSTOM_MASK = "CUSTOM_MASK"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _sample_radial(rho, n_theta: int) -> np.ndarray:
    if callable(rho):
        theta = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
        vals = np.asarray([float(rho(t)) for t in theta], dtype=float)
    else:
        vals = np.full(n_theta, float(rho))
    return vals


@dataclass(frozen=True)
class DomainSpec:
    """Parametric description of the open set D.

    Use the factory classmethods; they validate the geometry. Radial
    boundaries of star-shaped rings are stored as sampled rho(theta) tables
    (linear interpolation in theta), which keeps them starshaped by
    construction.
    """

    kind: DomainKind
    dimension: int
    radius: float = 0.0
    r_inner: float = 0.0
    r_outer: float = 0.0
    rho_outer: np.ndarray | None = None
    rho_inner: np.ndarray | None = None
    slab_length: float = 0.0
    slab_height: float = 0.0
    mask_fn: Callable | None = None
    mask_bbox: tuple | None = None

    @classmethod
    def ball(cls, radius: float, dimension: int = 1) -> "DomainSpec":
        if radius <= 0:
            raise BadGeometryError(f"ball radius must be positive, got {radius}")
        return cls(DomainKind.BALL, dimension, radius=float(radius))

    @classmethod
    def annulus(cls, r_inner: float, r_outer: float, dimension: int = 1) -> "DomainSpec":
        if not 0 < r_inner < r_outer:
            raise BadGeometryError(
                f"annulus requires 0 < r_inner < r_outer, got ({r_inner}, {r_outer})"
            )
        return cls(DomainKind.ANNULUS, dimension, r_inner=float(r_inner), r_outer=float(r_outer))

    @classmethod
    def starshaped_ring(
        cls, rho_outer, rho_inner, dimension: int = 2, n_theta: int = DEFAULT_THETA_SAMPLES
    ) -> "DomainSpec":
        if dimension != 2:
            raise BadGeometryError("starshaped rings are supported in dimension 2 only")
        outer = _sample_radial(rho_outer, n_theta)
        inner = _sample_radial(rho_inner, n_theta)
        if np.any(inner <= 0) or np.any(outer <= 0):
            raise BadGeometryError("radial boundary functions must be strictly positive")
        if np.any(inner >= outer):
            k = int(np.argmax(inner - outer))
            raise BadGeometryError(
                f"inner boundary must stay below outer boundary; violated at theta sample {k}"
            )
        return cls(
            DomainKind.STARSHAPED_RING,
            2,
            rho_outer=_readonly(outer),
            rho_inner=_readonly(inner),
        )

    @classmethod
    def halfspace_slab(
        cls, length: float, dimension: int = 1, height: float | None = None
    ) -> "DomainSpec":
        if length <= 0:
            raise BadGeometryError(f"slab length must be positive, got {length}")
        h = float(height) if height is not None else float(length)
        return cls(DomainKind.HALFSPACE_SLAB, dimension, slab_length=float(length), slab_height=h)

    @classmethod
    def custom_mask(cls, mask_fn: Callable, bbox, dimension: int) -> "DomainSpec":
        return cls(
            DomainKind.CUSTOM_MASK,
            dimension,
            mask_fn=mask_fn,
            mask_bbox=tuple(tuple(map(float, ax)) for ax in bbox),
        )

    # -- geometry queries ----------------------------------------------------

    def _rho_at(self, table: np.ndarray, theta: np.ndarray) -> np.ndarray:
        n = table.shape[0]
        t = np.mod(theta, 2.0 * np.pi) / (2.0 * np.pi) * n
        k0 = np.floor(t).astype(int) % n
        frac = t - np.floor(t)
        return table[k0] * (1.0 - frac) + table[(k0 + 1) % n] * frac

    def _ray_safety(self) -> float:
        # Radial margins overestimate Euclidean boundary distance by up to
        # 1/cos(slope angle); derive a conservative factor from the sampled table.
        if self.kind != DomainKind.STARSHAPED_RING:
            return 1.0
        factor = 1.0
        for table in (self.rho_outer, self.rho_inner):
            dtheta = 2.0 * np.pi / table.shape[0]
            slope = np.abs(np.diff(np.concatenate([table, table[:1]]))) / (table * dtheta + 1e-300)
            factor = min(factor, float(1.0 / np.sqrt(1.0 + np.max(slope) ** 2)))
        return factor

    def margin_inside(self, points: np.ndarray) -> np.ndarray:
        """Approximate signed distance to the complement (positive inside D).

        Exact for balls, annuli and slabs; a ray-safety-corrected radial
        margin for star-shaped rings; indicator-based (0/-1) for custom masks.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        if self.kind == DomainKind.BALL:
            return self.radius - r
        if self.kind == DomainKind.ANNULUS:
            return np.minimum(r - self.r_inner, self.r_outer - r)
        if self.kind == DomainKind.STARSHAPED_RING:
            theta = np.arctan2(pts[:, 1], pts[:, 0])
            outer = self._rho_at(self.rho_outer, theta)
            inner = self._rho_at(self.rho_inner, theta)
            return np.minimum(r - inner, outer - r) * self._ray_safety()
        if self.kind == DomainKind.HALFSPACE_SLAB:
            m = np.minimum(pts[:, 0], self.slab_length - pts[:, 0])
            if self.dimension == 2:
                m = np.minimum(m, self.slab_height / 2.0 - np.abs(pts[:, 1]))
            return m
        if self.kind == DomainKind.CUSTOM_MASK:
            inside = np.asarray([bool(self.mask_fn(x)) for x in pts])
            return np.where(inside, 0.0, -1.0)
        raise BadGeometryError(f"unknown domain kind {self.kind}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        return self.margin_inside(points) > 0.0

    def inner_side(self, points: np.ndarray) -> np.ndarray:
        """For ring-like domains: True where a point belongs to the inner data
        region (the hole, including the boundary layer radially closer to it)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.linalg.norm(pts, axis=1)
        if self.kind == DomainKind.ANNULUS:
            return (r - self.r_inner) <= (self.r_outer - r)
        if self.kind == DomainKind.STARSHAPED_RING:
            theta = np.arctan2(pts[:, 1], pts[:, 0])
            outer = self._rho_at(self.rho_outer, theta)
            inner = self._rho_at(self.rho_inner, theta)
            return (r - inner) <= (outer - r)
        raise BadGeometryError("inner_side is defined for ring-like domains only")

    def bounding_box(self) -> np.ndarray:
        """Tight axis-aligned box of D, shape (N, 2)."""
        if self.kind == DomainKind.BALL:
            r = self.radius
            return np.array([[-r, r]] * self.dimension)
        if self.kind == DomainKind.ANNULUS:
            r = self.r_outer
            return np.array([[-r, r]] * self.dimension)
        if self.kind == DomainKind.STARSHAPED_RING:
            r = float(np.max(self.rho_outer))
            return np.array([[-r, r], [-r, r]])
        if self.kind == DomainKind.HALFSPACE_SLAB:
            box = [[0.0, self.slab_length]]
            if self.dimension == 2:
                box.append([-self.slab_height / 2.0, self.slab_height / 2.0])
            return np.array(box)
        if self.kind == DomainKind.CUSTOM_MASK:
            return np.array(self.mask_bbox, dtype=float)
        raise BadGeometryError(f"unknown domain kind {self.kind}")

    def diameter(self) -> float:
        box = self.bounding_box()
        return float(np.linalg.norm(box[:, 1] - box[:, 0]))

    def scaled(self, factor: float) -> "DomainSpec":
        """The set factor * D (used by the scaling-law check with factor 1/t)."""
        if self.kind == DomainKind.BALL:
            return DomainSpec.ball(self.radius * factor, self.dimension)
        if self.kind == DomainKind.ANNULUS:
            return DomainSpec.annulus(self.r_inner * factor, self.r_outer * factor, self.dimension)
        if self.kind == DomainKind.STARSHAPED_RING:
            return DomainSpec.starshaped_ring(
                self.rho_outer * factor, self.rho_inner * factor, 2, self.rho_outer.shape[0]
            )
        if self.kind == DomainKind.HALFSPACE_SLAB:
            return DomainSpec.halfspace_slab(
                self.slab_length * factor, self.dimension, self.slab_height * factor
            )
        raise BadGeometryError(f"scaling is not supported for {self.kind}")


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Uniform lattice with per-node roles and a constant-far-field horizon."""

    dimension: int
    spacing: float
    bounding_box: np.ndarray  # (N, 2), node box
    nodes: np.ndarray  # (n, N) coordinates
    roles: np.ndarray  # (n,) NodeRole values
    truncation_radius: float
    lattice_index: np.ndarray  # (n, N) integer lattice coordinates
    domain: DomainSpec
    _lattice_origin: np.ndarray = field(repr=False, default=None)
    _lattice_shape: tuple = field(repr=False, default=None)

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def interior_mask(self) -> np.ndarray:
        return self.roles == NodeRole.INTERIOR

    @property
    def exterior_mask(self) -> np.ndarray:
        return self.roles == NodeRole.EXTERIOR_FIXED

    @property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(self.roles == NodeRole.INTERIOR)

    def node_at(self, lattice_coords) -> int:
        """Node index for integer lattice coordinates, or -1 if outside the box."""
        k = np.asarray(lattice_coords) - self._lattice_origin
        if np.any(k < 0) or np.any(k >= np.asarray(self._lattice_shape)):
            return -1
        return int(np.ravel_multi_index(tuple(k), self._lattice_shape))


def build_grid(
    spec: DomainSpec,
    h: float,
    r_infinity: float | None = None,
    margin: float | None = None,
) -> GridDomain:
    """Lay a lattice of spacing h over D plus a data margin and classify roles.

    margin defaults to half the domain diameter; r_infinity defaults to
    8 x the domain diameter and must be at least twice the box diameter.
    """
    if h <= 0:
        raise BadGeometryError(f"spacing must be positive, got {h}")
    N = spec.dimension
    if N not in (1, 2):
        raise BadGeometryError(f"dimension must be 1 or 2, got {N}")

    diam = spec.diameter()
    if margin is None:
        margin = 0.5 * diam
    box = spec.bounding_box()
    box = np.column_stack([box[:, 0] - margin, box[:, 1] + margin])

    if r_infinity is None:
        r_infinity = 8.0 * diam
    box_diam = float(np.linalg.norm(box[:, 1] - box[:, 0]))
    if r_infinity < 2.0 * box_diam:
        raise BadGeometryError(
            f"truncation radius {r_infinity} must be at least twice the box diameter {box_diam}"
        )

    k_lo = np.ceil(box[:, 0] / h - 1e-9).astype(int)
    k_hi = np.floor(box[:, 1] / h + 1e-9).astype(int)
    axes = [np.arange(k_lo[d], k_hi[d] + 1) for d in range(N)]
    mesh = np.meshgrid(*axes, indexing="ij")
    lattice = np.column_stack([m.ravel() for m in mesh])
    nodes = lattice * h

    # Interior: the circumball of the node's cell lies inside D. The snap
    # tolerance pushes exact boundary hits to the fixed side.
    interior_margin = 0.5 * h * math.sqrt(N) - BOUNDARY_SNAP * h
    inside = spec.margin_inside(nodes) >= interior_margin
    roles = np.where(inside, NodeRole.INTERIOR, NodeRole.EXTERIOR_FIXED).astype(np.int8)
    if not np.any(inside):
        raise EmptyInteriorError(
            f"no lattice node of spacing {h} falls inside the domain; refine h"
        )

    return GridDomain(
        dimension=N,
        spacing=float(h),
        bounding_box=_readonly(box),
        nodes=_readonly(nodes),
        roles=_readonly(roles),
        truncation_radius=float(r_infinity),
        lattice_index=_readonly(lattice),
        domain=spec,
        _lattice_origin=_readonly(k_lo),
        _lattice_shape=tuple(int(k_hi[d] - k_lo[d] + 1) for d in range(N)),
    )


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Nodal values on a grid plus one constant beyond the truncation radius."""

    grid: GridDomain
    values: np.ndarray
    far_field_value: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.node_count,):
            raise NonFiniteValueError(
                f"values shape {vals.shape} does not match node count {self.grid.node_count}"
            )
        if not np.all(np.isfinite(vals)) or not np.isfinite(self.far_field_value):
            raise NonFiniteValueError("discrete function values must be finite")
        object.__setattr__(self, "values", _readonly(vals))

    def with_values(self, values, far_field_value=None) -> "DiscreteFunction":
        far = self.far_field_value if far_field_value is None else far_field_value
        return DiscreteFunction(self.grid, values, far)

    def __call__(self, points):
        return interpolate(self, points)


def sample_function(grid: GridDomain, f: Callable, far_field_value: float | None = None) -> DiscreteFunction:
    """Evaluate a scalar field at the nodes.

    The far-field value defaults to f at the reference point (R_inf, 0, ...).
    """
    try:
        vals = np.asarray(f(grid.nodes), dtype=float)
        if vals.shape != (grid.node_count,):
            raise TypeError
    except (TypeError, ValueError):
        vals = np.asarray([float(f(x)) for x in grid.nodes], dtype=float)
    if far_field_value is None:
        ref = np.zeros(grid.dimension)
        ref[0] = grid.truncation_radius
        try:
            far_field_value = float(np.asarray(f(ref[None, :])).reshape(()))
        except (TypeError, ValueError):
            far_field_value = float(f(ref))
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise NonFiniteValueError(f"field is not finite at node {bad} ({grid.nodes[bad]})")
    if not np.isfinite(far_field_value):
        raise NonFiniteValueError("far-field value is not finite")
    return DiscreteFunction(grid, vals, float(far_field_value))


def interpolate(u: DiscreteFunction, points) -> np.ndarray | float:
    """Multilinear interpolation, exact at nodes.

    Queries beyond the truncation radius return the far-field value; queries
    between the node box and the truncation sphere are clamped to the box.
    """
    grid = u.grid
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    n_q = pts.shape[0]
    out = np.empty(n_q)

    far = np.linalg.norm(pts, axis=1) > grid.truncation_radius
    out[far] = u.far_field_value
    if np.all(far):
        return float(out[0]) if scalar else out

    q = pts[~far]
    h = grid.spacing
    k_lo = grid._lattice_origin
    shape = np.asarray(grid._lattice_shape)
    # clamp to the node hull, then locate the cell
    t = np.clip(q / h - k_lo, 0.0, shape - 1.0)
    base = np.minimum(np.floor(t).astype(int), shape - 2 if np.all(shape > 1) else shape - 1)
    base = np.maximum(base, 0)
    frac = t - base

    vals = u.values.reshape(grid._lattice_shape)
    if grid.dimension == 1:
        i0 = base[:, 0]
        i1 = np.minimum(i0 + 1, shape[0] - 1)
        w = frac[:, 0]
        res = vals[i0] * (1.0 - w) + vals[i1] * w
    else:
        i0, j0 = base[:, 0], base[:, 1]
        i1 = np.minimum(i0 + 1, shape[0] - 1)
        j1 = np.minimum(j0 + 1, shape[1] - 1)
        wx, wy = frac[:, 0], frac[:, 1]
        res = (
            vals[i0, j0] * (1 - wx) * (1 - wy)
            + vals[i1, j0] * wx * (1 - wy)
            + vals[i0, j1] * (1 - wx) * wy
            + vals[i1, j1] * wx * wy
        )
    out[~far] = res
    return float(out[0]) if scalar else out
