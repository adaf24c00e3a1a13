"""Randomized consistency suites with independent oracles.

These back the `oracle-suite` and `check-inequalities` CLI subcommands and
the acceptance tests. Each suite derives per-instance seeds from the master
seed through a counter, so reports are reproducible bit for bit.

The oracles are deliberately independent of the code paths they check:
central finite differences of the energy against the assembled gradient, a
dense direct solve against the descent solver, and a derivative-free
golden-section coordinate search against both.
"""

from __future__ import annotations

import numpy as np

from . import powers
from .core import DiscreteFunction, DomainSpec, build_grid
from .operator import FractionalParams, ProblemSpec, _energy_of_values, weak_residual
from .solver import SolverOptions, linear_solve_p2, solve_dirichlet

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _spawn(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(k + 1)[k])


def random_problem(
    rng: np.random.Generator,
    p: float,
    max_nodes: int = 64,
    dimension: int = 1,
    s: float | None = None,
) -> ProblemSpec:
    """Small random annulus problem with bounded random data."""
    if s is None:
        s = float(rng.uniform(0.2, 0.8))
    r_in = float(rng.uniform(0.15, 0.4))
    r_out = float(rng.uniform(0.7, 1.0))
    spec = DomainSpec.annulus(r_in, r_out, dimension=dimension)
    # box spans 3 * r_out; pick h so the lattice stays under max_nodes
    h = max(3.0 * r_out / (max_nodes - 1), r_out / 16.0)
    grid = build_grid(spec, h)
    params = FractionalParams(s, p)
    n = grid.node_count
    q = DiscreteFunction(grid, rng.uniform(0.0, 2.0, n), 0.0)
    g = DiscreteFunction(grid, rng.normal(0.0, 1.0, n), 0.0)
    ext_vals = np.where(grid.interior_mask, 0.0, rng.uniform(-1.0, 1.0, n))
    ext = DiscreteFunction(grid, ext_vals, float(rng.uniform(-0.5, 0.5)))
    return ProblemSpec(grid, params, q, g, ext)


def gradient_consistency_suite(
    seed: int = 0, p_values=(1.5, 2.0, 3.0), instances: int = 20, eps: float = 1e-6
) -> dict:
    """weak_residual against central differences of total_energy."""
    worst = 0.0
    rows = []
    k = 0
    for p in p_values:
        for _ in range(instances):
            rng = _spawn(seed, k)
            k += 1
            prob = random_problem(rng, p)
            grid = prob.grid
            vals = np.array(prob.exterior.values)
            vals[grid.interior_mask] = rng.normal(0.0, 1.0, int(grid.interior_mask.sum()))
            u = DiscreteFunction(grid, vals, prob.exterior.far_field_value)
            res = weak_residual(u, prob)
            fd = np.empty_like(res)
            for j, i in enumerate(grid.interior_indices):
                up, dn = vals.copy(), vals.copy()
                up[i] += eps
                dn[i] -= eps
                fd[j] = (_energy_of_values(up, prob) - _energy_of_values(dn, prob)) / (2 * eps)
            rel = float(np.max(np.abs(res - fd) / (1.0 + np.abs(res))))
            rows.append({"p": p, "relative_error": rel, "nodes": grid.node_count})
            worst = max(worst, rel)
    return {"check_id": "gradient_consistency", "holds": worst < 1e-5,
            "max_relative_error": worst, "rows": rows}


def constant_annihilation_suite(seed: int = 0, grids: int = 10) -> dict:
    """The operator with q = 0, g = 0 must kill constants to rounding."""
    worst = 0.0
    rows = []
    for k in range(grids):
        rng = _spawn(seed, k)
        p = float(rng.uniform(1.2, 3.0))
        prob = random_problem(rng, p)
        grid = prob.grid
        c = float(rng.uniform(-5.0, 5.0))
        const = DiscreteFunction(grid, np.full(grid.node_count, c), c)
        zero = DiscreteFunction(grid, np.zeros(grid.node_count), 0.0)
        flat = ProblemSpec(grid, prob.params, zero, zero, const).with_weights(prob.weights)
        norm = float(np.max(np.abs(weak_residual(const, flat)), initial=0.0))
        rows.append({"p": p, "residual_inf": norm})
        worst = max(worst, norm)
    return {"check_id": "constant_annihilation", "holds": worst < 1e-10,
            "max_residual_inf": worst, "rows": rows}


def p2_equivalence_suite(seed: int = 0, instances: int = 10, max_nodes: int = 500) -> dict:
    """solve_dirichlet against the direct p = 2 factorization."""
    worst = 0.0
    rows = []
    for k in range(instances):
        rng = _spawn(seed, k)
        prob = random_problem(rng, 2.0, max_nodes=max_nodes)
        direct = linear_solve_p2(prob)
        iterative = solve_dirichlet(prob, SolverOptions(init="random", seed=int(rng.integers(1 << 31))))
        diff = float(np.max(np.abs(direct.values - iterative.solution.values)))
        rows.append({"nodes": prob.grid.node_count, "inf_diff": diff,
                     "converged": iterative.converged})
        worst = max(worst, diff)
    return {"check_id": "p2_equivalence", "holds": worst < 1e-8,
            "max_inf_diff": worst, "rows": rows}


def golden_coordinate_minimize(
    prob: ProblemSpec, sweeps: int = 400, line_tol: float = 1e-11, stop: float = 1e-9
) -> np.ndarray:
    """Derivative-free oracle: cyclic golden-section searches per coordinate.

    Converges on strictly convex energies; used only on tiny grids.
    """
    grid = prob.grid
    interior = grid.interior_indices
    full = np.array(prob.exterior.values, dtype=float)
    data = np.concatenate([prob.exterior.values[grid.exterior_mask],
                           [prob.exterior.far_field_value], [0.0]])
    radius = float(np.max(np.abs(data))) + 2.0

    def line_min(i):
        a, b = full[i] - radius, full[i] + radius

        def f(t):
            full[i] = t
            return _energy_of_values(full, prob)

        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        fc, fd = f(c), f(d)
        while b - a > line_tol:
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - GOLDEN * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + GOLDEN * (b - a)
                fd = f(d)
        t = 0.5 * (a + b)
        full[i] = t
        return t

    for _ in range(sweeps):
        moved = 0.0
        for i in interior:
            old = full[i]
            new = line_min(i)
            moved = max(moved, abs(new - old))
        if moved < stop:
            break
    return full[interior].copy()


def tiny_problem(rng: np.random.Generator, p: float, interior_nodes: int = 6) -> ProblemSpec:
    """1D annulus problem with a fixed handful of interior nodes."""
    h = 0.2 if interior_nodes >= 6 else 0.25
    grid = build_grid(DomainSpec.annulus(0.25, 1.0, dimension=1), h)
    params = FractionalParams(float(rng.uniform(0.25, 0.75)), p)
    n = grid.node_count
    q = DiscreteFunction(grid, rng.uniform(0.0, 1.5, n), 0.0)
    g = DiscreteFunction(grid, rng.normal(0.0, 1.0, n), 0.0)
    ext = DiscreteFunction(
        grid, np.where(grid.interior_mask, 0.0, rng.uniform(-1.0, 1.0, n)), 0.0
    )
    return ProblemSpec(grid, params, q, g, ext)


def golden_oracle_suite(seed: int = 0, p_values=(1.5, 3.0), instances: int = 3) -> dict:
    """solve_dirichlet against the golden-section search on tiny grids."""
    worst = 0.0
    rows = []
    k = 0
    for p in p_values:
        for _ in range(instances):
            rng = _spawn(seed, 1000 + k)
            k += 1
            prob = tiny_problem(rng, p)
            oracle = golden_coordinate_minimize(prob)
            res = solve_dirichlet(prob)
            mine = res.solution.values[prob.grid.interior_mask]
            diff = float(np.max(np.abs(mine - oracle), initial=0.0))
            rows.append({"p": p, "interior": int(prob.grid.interior_indices.size),
                         "inf_diff": diff, "converged": res.converged})
            worst = max(worst, diff)
    return {"check_id": "golden_section_oracle", "holds": worst < 1e-6 and bool(rows),
            "max_inf_diff": worst, "rows": rows}


def inequality_suite(
    seed: int = 0,
    samples: int = 100_000,
    q_values=(0.3, 0.5, 0.8, 1.0, 1.5, 2.0, 3.0),
    m_values=(1.0, 10.0),
) -> dict:
    """Randomized verification of the five power inequalities."""
    families = []
    all_hold = True
    k = 0
    for q in q_values:
        for M in m_values:
            rng = _spawn(seed, k)
            k += 1
            a_sym = rng.uniform(-M, M, samples)
            b_pos = np.exp(rng.uniform(np.log(1e-8), np.log(100.0), samples))
            a_pos = np.abs(a_sym)

            checks = {}
            _, _, ok = powers.check_sum_power(a_pos, b_pos, q)
            checks["SUM_POWER"] = (int(np.sum(~ok)), None)
            if q >= 1.0:
                _, ok = powers.check_increment_geq1(a_sym * 10, b_pos, q)
                checks["INCREMENT_GEQ1"] = (int(np.sum(~ok)), None)
            c_du = powers.certify_constant(powers.Inequality.DIFF_UPPER, q, M, seed=seed)
            _, _, ok = powers.check_diff_upper(M, a_sym, np.minimum(b_pos, powers.B_MAX), q, c_du)
            checks["DIFF_UPPER"] = (int(np.sum(~ok)), c_du)
            c_ib = powers.certify_constant(powers.Inequality.INCREMENT_BOUNDED, q, M, seed=seed)
            _, _, ok = powers.check_increment_bounded(M, a_sym, b_pos, q, c_ib)
            checks["INCREMENT_BOUNDED"] = (int(np.sum(~ok)), c_ib)
            if q <= 1.0:
                c_hd = powers.certify_constant(powers.Inequality.HOLDER_DIFF, q, seed=seed)
                _, _, ok = powers.check_holder_diff(rng.normal(0, 30, samples),
                                                    rng.normal(0, 30, samples), q, c_hd)
                checks["HOLDER_DIFF"] = (int(np.sum(~ok)), c_hd)

            for fam, (viol, const) in checks.items():
                families.append({
                    "inequality_id": fam,
                    "q": q,
                    "M": M,
                    "samples": samples,
                    "violations": viol,
                    "constant": None if const is None else {
                        "value": const.value, "provenance": const.provenance.value},
                })
                all_hold = all_hold and viol == 0
    return {"check_id": "inequalities", "holds": all_hold, "families": families}
