"""Superlevel-set geometry and the headline experiments.

Starshapedness is checked through the pointwise ray criterion (u(t x) must
not exceed u(x) for t > 1), not by processing level-set boundaries: the
criterion is exact for the continuum statement and avoids contouring
artifacts. Interpolating u at t x introduces an O(h) error proportional to
the discrete Lipschitz constant of u, so the pass threshold is
eps_geo = C_geo * h with C_geo measured from nodal differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DiscreteFunction, DomainKind, DomainSpec, GridDomain, build_grid, interpolate, sample_function
from .errors import BadGeometryError, DataNotStarshapedError, QNotMonotoneError
from .operator import FractionalParams, ProblemSpec, _residual_of_values
from .principles import CheckReport, check_condition_a2, compact_masks
from .solver import ResidualClass, SolveResult, SolverOptions, classify_residual, solve_dirichlet

DEFAULT_T_SAMPLES = (1.1, 1.25, 1.5, 2.0, 4.0)
DEFAULT_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


def superlevel_mask(u: DiscreteFunction, level: float) -> np.ndarray:
    """Node mask of {u >= level}; masks are nested as the level grows."""
    return u.values >= level


def discrete_lipschitz(u: DiscreteFunction) -> float:
    """Max nodal difference across lattice-adjacent pairs, divided by h."""
    grid = u.grid
    vals = u.values.reshape(grid._lattice_shape)
    best = 0.0
    for axis in range(grid.dimension):
        d = np.abs(np.diff(vals, axis=axis))
        if d.size:
            best = max(best, float(np.max(d)))
    return best / grid.spacing


@dataclass
class StarshapeReport:
    levels: tuple
    per_level_violation: dict
    global_violation: float
    eps_geo: float
    starshaped_holds: bool
    t_samples: tuple
    interpolation_error_estimate: float
    witness: dict | None = None
    strict_margin: float | None = None
    theta: float | None = None
    strictly_starshaped_holds: bool | None = None
    strict_witness: dict | None = None
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "levels": list(self.levels),
            "per_level_violation": {f"{k:g}": v for k, v in self.per_level_violation.items()},
            "global_violation": self.global_violation,
            "eps_geo": self.eps_geo,
            "starshaped_holds": self.starshaped_holds,
            "t_samples": list(self.t_samples),
            "interpolation_error_estimate": self.interpolation_error_estimate,
            "witness": self.witness,
            "strict_margin": self.strict_margin,
            "theta": self.theta,
            "strictly_starshaped_holds": self.strictly_starshaped_holds,
            "strict_witness": self.strict_witness,
        }


def _sample_points(u: DiscreteFunction, n_random: int, seed: int) -> np.ndarray:
    grid = u.grid
    pts = [grid.nodes]
    interior = grid.nodes[grid.interior_mask]
    if n_random > 0 and interior.shape[0] > 0:
        rng = np.random.default_rng(seed)
        lo = interior.min(axis=0)
        hi = interior.max(axis=0)
        cand = rng.uniform(lo, hi, size=(4 * n_random, grid.dimension))
        inside = grid.domain.contains(cand)
        pts.append(cand[inside][:n_random])
    return np.vstack(pts)


def check_starshaped(
    u: DiscreteFunction,
    t_samples: tuple = DEFAULT_T_SAMPLES,
    x_samples: np.ndarray | None = None,
    c_geo: float | None = None,
    levels: tuple = DEFAULT_LEVELS,
    n_random: int = 200,
    seed: int = 0,
) -> StarshapeReport:
    """Ray criterion for starshaped superlevel sets.

    Passes when max over samples of u(t x) - u(x) stays below
    eps_geo = c_geo * h (c_geo defaults to the measured discrete Lipschitz
    constant). Per-level violations measure how robustly a specific
    superlevel set fails: min(u(t x) - level, level - u(x)) > 0 means t x
    sits in the level set while x has dropped out.
    """
    grid = u.grid
    if x_samples is None:
        x_samples = _sample_points(u, n_random, seed)
    if c_geo is None:
        c_geo = discrete_lipschitz(u)
    eps_geo = c_geo * grid.spacing

    ux = interpolate(u, x_samples)
    global_violation = -np.inf
    witness = None
    per_level = {float(lv): -np.inf for lv in levels}
    for t in t_samples:
        if t <= 1.0:
            raise ValueError("t samples must exceed 1")
        utx = interpolate(u, x_samples * t)
        diff = utx - ux
        k = int(np.argmax(diff))
        if diff[k] > global_violation:
            global_violation = float(diff[k])
            witness = {"t": float(t), "x": x_samples[k].tolist()}
        for lv in levels:
            v = np.minimum(utx - lv, lv - ux)
            per_level[float(lv)] = max(per_level[float(lv)], float(np.max(v)))

    return StarshapeReport(
        levels=tuple(float(lv) for lv in levels),
        per_level_violation=per_level,
        global_violation=global_violation,
        eps_geo=eps_geo,
        starshaped_holds=bool(global_violation <= eps_geo),
        t_samples=tuple(float(t) for t in t_samples),
        interpolation_error_estimate=eps_geo,
        witness=witness,
    )


def check_strictly_starshaped(
    u: DiscreteFunction,
    theta: float,
    t_samples: tuple = DEFAULT_T_SAMPLES,
    boundary_distance: float | None = None,
    level_band: tuple | None = None,
) -> StarshapeReport:
    """Strict ray criterion on interior samples away from the boundary.

    Samples are interior nodes at distance >= boundary_distance (default 4h)
    whose value lies strictly inside (theta, 1 - theta) or the given band;
    the strict margin min(u(x) - u(t x)) must exceed theta.
    """
    grid = u.grid
    if boundary_distance is None:
        boundary_distance = 4.0 * grid.spacing
    lo, hi = level_band if level_band is not None else (theta, 1.0 - theta)
    margins = grid.domain.margin_inside(grid.nodes)
    sel = grid.interior_mask & (margins >= boundary_distance) & (u.values > lo) & (u.values < hi)
    pts = grid.nodes[sel]

    report = check_starshaped(u, t_samples=t_samples, n_random=0)
    if pts.shape[0] == 0:
        report.strict_margin = np.inf
        report.theta = theta
        report.strictly_starshaped_holds = False
        report.extras["strict_samples"] = 0
        return report

    ux = interpolate(u, pts)
    strict = np.inf
    sw = None
    for t in t_samples:
        diff = ux - interpolate(u, pts * t)
        k = int(np.argmin(diff))
        if diff[k] < strict:
            strict = float(diff[k])
            sw = {"t": float(t), "x": pts[k].tolist()}
    report.strict_margin = strict
    report.theta = theta
    report.strictly_starshaped_holds = bool(strict > theta)
    report.strict_witness = sw
    report.extras["strict_samples"] = int(pts.shape[0])
    return report


def is_strictly_starshaped_domain(spec: DomainSpec) -> bool:
    # radial-function boundaries cross each ray exactly once by construction
    return spec.kind in (DomainKind.BALL, DomainKind.ANNULUS, DomainKind.STARSHAPED_RING)


def ring_exterior_data(grid: GridDomain) -> DiscreteFunction:
    """Exterior condition of the two-ring problem: 1 on the hole, 0 outside.

    Boundary-layer nodes that sit inside D geometrically but carry fixed
    data take the value of the radially nearer boundary, so the data stay
    monotone along rays.
    """
    spec = grid.domain
    if spec.kind not in (DomainKind.ANNULUS, DomainKind.STARSHAPED_RING):
        raise BadGeometryError("ring data need a ring-like domain")
    inner = spec.inner_side(grid.nodes)
    vals = np.where(~grid.interior_mask & inner, 1.0, 0.0)
    return DiscreteFunction(grid, vals, 0.0)


@dataclass
class ExperimentOutput:
    solve: SolveResult
    starshape: StarshapeReport | None
    checks: list[CheckReport]

    @property
    def holds(self) -> bool:
        ok = all(c.holds for c in self.checks)
        if self.starshape is not None:
            ok = ok and self.starshape.starshaped_holds
            if self.starshape.strictly_starshaped_holds is not None:
                ok = ok and self.starshape.strictly_starshaped_holds
        return ok


def _bounds_report(u: DiscreteFunction, lo: float, hi: float, tol: float, prob: ProblemSpec) -> CheckReport:
    worst = min(float(np.min(u.values) - lo), float(hi - np.max(u.values)))
    return CheckReport(
        check_id="solution_bounds",
        holds=worst >= -tol,
        margin=worst,
        witness={"node": int(np.argmin(np.minimum(u.values - lo, hi - u.values)))},
        tolerances={"bound": tol},
        params={"s": prob.params.s, "p": prob.params.p, "h": prob.grid.spacing,
                "R_inf": prob.grid.truncation_radius},
        flags=prob.params.flags(),
    )


def _gap_report(check_id, values, theta, prob, compacts) -> CheckReport:
    worst, witness = np.inf, None
    for mask in compacts:
        if not np.any(mask):
            continue
        sub = np.flatnonzero(mask)
        k = int(np.argmin(values[sub]))
        if values[sub[k]] < worst:
            worst, witness = float(values[sub[k]]), int(sub[k])
    return CheckReport(
        check_id=check_id,
        holds=np.isfinite(worst) and worst > theta,
        margin=worst - theta if np.isfinite(worst) else 0.0,
        witness={"node": witness},
        tolerances={"theta": theta},
        params={"s": prob.params.s, "p": prob.params.p, "h": prob.grid.spacing,
                "R_inf": prob.grid.truncation_radius},
        flags=prob.params.flags(),
    )


def ring_experiment(
    ring: DomainSpec,
    params: FractionalParams,
    h: float,
    q_fn=None,
    levels: tuple = DEFAULT_LEVELS,
    opts: SolverOptions | None = None,
    r_infinity: float | None = None,
    t_samples: tuple = DEFAULT_T_SAMPLES,
    margin: float | None = None,
) -> ExperimentOutput:
    """Solve the two-ring problem (1 on the hole, 0 outside) and check that
    every superlevel set is starshaped, plus the auxiliary comparison facts
    0 < u < 1 used by the strict case."""
    grid = build_grid(ring, h, r_infinity=r_infinity, margin=margin)
    zero = DiscreteFunction(grid, np.zeros(grid.node_count), 0.0)
    q = sample_function(grid, q_fn, far_field_value=0.0) if q_fn else zero
    prob = ProblemSpec(grid, params, q, zero, ring_exterior_data(grid))

    checks: list[CheckReport] = []
    a2 = check_condition_a2(q, params, ring)
    a2.check_id = "condition_A2_pre"
    checks.append(a2)  # recorded as a warning when it fails; the solve still runs

    result = solve_dirichlet(prob, opts)
    tol = 10.0 * result.value_tolerance
    checks.append(_bounds_report(result.solution, 0.0, 1.0, tol, prob))

    # constants are super/subsolutions; the strict interior gaps mirror the
    # strong comparison against them
    one = DiscreteFunction(grid, np.ones(grid.node_count), 1.0)
    cls_one = classify_residual(one, prob, tol)
    compacts = compact_masks(prob)
    upper = _gap_report("interior_upper_gap", 1.0 - result.solution.values, tol, prob, compacts)
    upper.extras["constant_class"] = cls_one.value
    upper.holds = upper.holds and cls_one in (ResidualClass.SUPERSOLUTION, ResidualClass.SOLUTION)
    lower = _gap_report("interior_lower_gap", result.solution.values, tol, prob, compacts)
    checks.extend([upper, lower])

    star = check_starshaped(result.solution, t_samples=t_samples, levels=levels)
    if is_strictly_starshaped_domain(ring):
        star = check_strictly_starshaped(
            result.solution, theta=tol, t_samples=t_samples,
        )
        base = check_starshaped(result.solution, t_samples=t_samples, levels=levels)
        star.per_level_violation = base.per_level_violation
        star.levels = base.levels
    return ExperimentOutput(result, star, checks)


def general_ring_experiment(
    ring: DomainSpec,
    params: FractionalParams,
    h: float,
    b0_fn,
    b1_fn,
    q_fn=None,
    g_fn=None,
    levels: tuple = DEFAULT_LEVELS,
    opts: SolverOptions | None = None,
    r_infinity: float | None = None,
    t_samples: tuple = DEFAULT_T_SAMPLES,
    margin: float | None = None,
) -> ExperimentOutput:
    """Ring problem with general exterior data b0 (outside) / b1 (hole) and
    source -g; data must have starshaped superlevel sets (pre-checked on the
    0/1-extended fields)."""
    grid = build_grid(ring, h, r_infinity=r_infinity, margin=margin)
    inner = ring.inner_side(grid.nodes)

    def b1_extended(pts):
        vals = np.asarray([float(b1_fn(x)) for x in np.atleast_2d(pts)])
        return np.where(ring.inner_side(pts), vals, 0.0)

    def b0_extended(pts):
        vals = np.asarray([float(b0_fn(x)) for x in np.atleast_2d(pts)])
        return np.where(ring.inner_side(pts) | ring.contains(pts), 1.0, vals)

    for name, fn in (("b0", b0_extended), ("b1", b1_extended)):
        data = sample_function(grid, fn, far_field_value=0.0)
        rep = check_starshaped(data, t_samples=t_samples, levels=levels)
        if not rep.starshaped_holds:
            raise DataNotStarshapedError(
                f"{name} does not have starshaped superlevel sets "
                f"(violation {rep.global_violation:.3g} > {rep.eps_geo:.3g})"
            )

    zero = DiscreteFunction(grid, np.zeros(grid.node_count), 0.0)
    q = sample_function(grid, q_fn, far_field_value=0.0) if q_fn else zero
    # sign convention: the equation right-hand side is -g
    g_src = sample_function(grid, g_fn, far_field_value=0.0) if g_fn else zero
    g_src = g_src.with_values(-g_src.values, 0.0)

    b0_vals = np.asarray([float(b0_fn(x)) for x in grid.nodes])
    b1_vals = np.asarray([float(b1_fn(x)) for x in grid.nodes])
    ext_vals = np.where(~grid.interior_mask, np.where(inner, b1_vals, b0_vals), 0.0)
    ext = DiscreteFunction(grid, ext_vals, 0.0)

    prob = ProblemSpec(grid, params, q, g_src, ext)
    result = solve_dirichlet(prob, opts)
    tol = 10.0 * result.value_tolerance

    checks = [_bounds_report(result.solution, 0.0, 1.0, tol, prob)]
    star = check_starshaped(result.solution, t_samples=t_samples, levels=levels)
    in_bounds = checks[0].holds
    strict_possible = (
        is_strictly_starshaped_domain(ring)
        and in_bounds
        and bool(np.all(result.solution.values[grid.interior_mask] > tol))
        and bool(np.all(result.solution.values[grid.interior_mask] < 1.0 - tol))
    )
    if strict_possible:
        strict = check_strictly_starshaped(result.solution, theta=tol, t_samples=t_samples)
        strict.per_level_violation = star.per_level_violation
        strict.levels = star.levels
        star = strict
    return ExperimentOutput(result, star, checks)


def halfspace_experiment(
    length: float,
    params: FractionalParams,
    h: float,
    q_fn=None,
    opts: SolverOptions | None = None,
    dimension: int = 1,
    t_shifts: tuple | None = None,
    source_scale: float = 1e-2,
    r_infinity: float | None = None,
) -> CheckReport:
    """Half-space triviality, modeled on a slab with zero data on both sides.

    (i) the solve with g = 0 must return the zero solution; (ii) a bump
    problem (small source on the first interior layer) is solved and its
    translates u(x + t e1) must stay below u on {x1 > t}, in values and in
    the q-weighted operator, mirroring the moving-plane ordering.
    """
    slab = DomainSpec.halfspace_slab(length, dimension)
    grid = build_grid(slab, h, r_infinity=r_infinity)
    zero = DiscreteFunction(grid, np.zeros(grid.node_count), 0.0)
    if q_fn:
        q = sample_function(grid, q_fn, far_field_value=0.0)
        # q only acts on the interior; clamping keeps it nonnegative on the
        # margin nodes left of the slab without breaking x1-monotonicity
        q = q.with_values(np.maximum(q.values, 0.0), max(q.far_field_value, 0.0))
    else:
        q = zero
    if t_shifts is None:
        t_shifts = (2.0 * h, 4.0 * h)

    # q must be nondecreasing along x1
    for t in t_shifts:
        shifted = interpolate(q, grid.nodes + t * np.eye(1, grid.dimension, 0).ravel())
        if np.any(shifted < q.values - 1e-10 * (1.0 + np.max(np.abs(q.values)))):
            raise QNotMonotoneError(f"q decreases along x1 (shift {t})")

    prob = ProblemSpec(grid, params, q, zero, zero)
    result = solve_dirichlet(prob, opts)
    trivial_sup = float(np.max(np.abs(result.solution.values)))
    trivial_tol = 10.0 * max(result.value_tolerance, 1e-300)
    trivial_ok = trivial_sup <= trivial_tol

    # bump problem for the translation ordering
    x1 = grid.nodes[:, 0]
    first_layer = grid.interior_mask & (x1 <= x1[grid.interior_mask].min() + 0.5 * h)
    g_vals = np.where(first_layer, source_scale, 0.0)
    bump_prob = ProblemSpec(
        grid, params, q, DiscreteFunction(grid, g_vals, 0.0), zero
    ).with_weights(prob.weights)
    bump = solve_dirichlet(bump_prob, opts)
    u = bump.solution
    no_g = ProblemSpec(grid, params, q, zero, zero).with_weights(prob.weights)
    r_u = _residual_of_values(u.values, no_g)

    shift_margins = {}
    hN = grid.spacing**grid.dimension
    op_tol = max(100.0 * bump.residual_norm, 1e-7 * (1.0 + source_scale))
    val_tol = 10.0 * bump.value_tolerance
    e1 = np.eye(1, grid.dimension, 0).ravel()
    ok = trivial_ok
    for t in t_shifts:
        ut_vals = interpolate(u, grid.nodes + t * e1)
        ut = DiscreteFunction(grid, ut_vals, 0.0)
        r_ut = _residual_of_values(ut_vals, no_g)
        sel = x1[grid.interior_mask] > t
        value_margin = float(np.min((u.values[grid.interior_mask] - ut_vals[grid.interior_mask])[sel]))
        op_margin = float(np.min((r_u - r_ut)[sel])) / hN
        shift_margins[f"{t:g}"] = {"value_margin": value_margin, "operator_margin": op_margin}
        ok = ok and value_margin >= -val_tol and op_margin >= -op_tol

    worst_value = min(m["value_margin"] for m in shift_margins.values())
    return CheckReport(
        check_id="halfspace_triviality",
        holds=bool(ok),
        margin=min(trivial_tol - trivial_sup, worst_value + val_tol),
        witness=None,
        tolerances={"trivial": trivial_tol, "value": val_tol, "operator": op_tol},
        params={"s": params.s, "p": params.p, "h": h, "R_inf": grid.truncation_radius,
                "L": length},
        flags=params.flags(),
        branch="ZERO" if trivial_ok else "NONZERO",
        extras={"trivial_sup": trivial_sup, "shift_margins": shift_margins,
                "bump_converged": bump.converged},
    )
