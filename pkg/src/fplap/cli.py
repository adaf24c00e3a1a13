"""Configuration parsing, experiment orchestration, and artifact emission.

A run is described by one JSON config whose "subcommand" field picks the
job. Reports are deterministic for a fixed config and seed (timestamps live
only in the manifest); every artifact is listed in manifest.json with a
content hash.

Exit codes: 0 when all requested checks hold, 2 when a check fails, 1 on an
execution error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import oracles
from .core import DiscreteFunction, DomainSpec, NodeRole, build_grid, sample_function
from .errors import FplapError, ParseError, ValidationError
from .fields import make_field
from .geometry import (
    DEFAULT_LEVELS,
    DEFAULT_T_SAMPLES,
    general_ring_experiment,
    halfspace_experiment,
    ring_experiment,
    superlevel_mask,
)
from .operator import FractionalParams, ProblemSpec
from .principles import (
    check_scaling,
    check_strong_comparison,
    check_weak_comparison,
)
from .solver import SolverOptions, solve_dirichlet

SUBCOMMANDS = (
    "solve",
    "check-inequalities",
    "check-comparison",
    "check-scaling",
    "starshape-ring",
    "starshape-general",
    "halfspace",
    "oracle-suite",
)

_PROBLEM_SUBCOMMANDS = {
    "solve", "check-comparison", "check-scaling", "starshape-ring",
    "starshape-general", "halfspace",
}

_TOP_KEYS = {
    "subcommand", "s", "p", "alpha", "domain", "h", "r_infinity", "q", "g",
    "exterior", "far_field", "solver", "check", "seed", "out",
}
_SOLVER_KEYS = {"tolerance", "max_iterations", "armijo_c1", "backtrack", "memory",
                "seed", "init"}
_DOMAIN_KEYS = {"kind", "dimension", "radius", "r_inner", "r_outer", "rho_outer",
                "rho_inner", "length", "height"}
_CHECK_KEYS = {"mode", "exterior_b", "g_b", "compact_distances", "t", "levels",
               "t_samples", "b0", "b1", "t_shifts", "source_scale", "samples",
               "q_values", "M_values", "refinement_levels"}


@dataclass
class RunConfig:
    subcommand: str
    raw: dict
    s: float | None = None
    p: float | None = None
    alpha: float | None = None
    domain: dict | None = None
    h: float | None = None
    r_infinity: float | None = None
    q: dict | None = None
    g: dict | None = None
    exterior: dict | None = None
    far_field: float = 0.0
    solver: dict = field(default_factory=dict)
    check: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "out"


def parse_config(text: str) -> RunConfig:
    """Validate a JSON config document; unknown keys are rejected and every
    violation is reported with its field path."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")

    errors: dict[str, str] = {}
    for k in set(doc) - _TOP_KEYS:
        errors[k] = "unknown key"

    sub = doc.get("subcommand")
    if sub not in SUBCOMMANDS:
        errors["subcommand"] = f"must be one of {', '.join(SUBCOMMANDS)}"

    def fnum(key, lo=None, hi=None, required=False):
        if key not in doc:
            if required:
                errors[key] = "is required"
            return None
        v = doc[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            errors[key] = "must be a number"
            return None
        if lo is not None and not lo < v or hi is not None and not v < hi:
            return v  # range message handled by caller
        return float(v)

    need_problem = sub in _PROBLEM_SUBCOMMANDS
    s = fnum("s", required=need_problem)
    if s is not None and not 0.0 < s < 1.0:
        errors["s"] = "s must lie in (0,1)"
    p = fnum("p", required=need_problem)
    if p is not None and p < 1.05:
        errors["p"] = "p below supported minimum 1.05"
    alpha = fnum("alpha")
    if alpha is not None and not 0.0 < alpha <= 1.0:
        errors["alpha"] = "alpha must lie in (0,1]"
    h = fnum("h", required=need_problem and sub != "halfspace")
    if h is not None and h <= 0:
        errors["h"] = "h must be positive"
    r_inf = fnum("r_infinity")
    far = fnum("far_field") or 0.0

    domain = doc.get("domain")
    if need_problem and sub not in ("halfspace",) and domain is None:
        errors["domain"] = "is required"
    if domain is not None:
        if not isinstance(domain, dict):
            errors["domain"] = "must be an object"
        else:
            for k in set(domain) - _DOMAIN_KEYS:
                errors[f"domain.{k}"] = "unknown key"

    solver = doc.get("solver", {})
    if not isinstance(solver, dict):
        errors["solver"] = "must be an object"
        solver = {}
    for k in set(solver) - _SOLVER_KEYS:
        errors[f"solver.{k}"] = "unknown key"

    check = doc.get("check", {})
    if not isinstance(check, dict):
        errors["check"] = "must be an object"
        check = {}
    for k in set(check) - _CHECK_KEYS:
        errors[f"check.{k}"] = "unknown key"

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        errors["seed"] = "must be an integer"
        seed = 0

    for key in ("q", "g", "exterior"):
        if key in doc and doc[key] is not None:
            try:
                make_field(doc[key], key)
            except ValidationError as e:
                errors.update(e.field_errors)

    if errors:
        raise ValidationError(errors)

    return RunConfig(
        subcommand=sub, raw=doc, s=s, p=p, alpha=alpha, domain=domain, h=h,
        r_infinity=r_inf, q=doc.get("q"), g=doc.get("g"),
        exterior=doc.get("exterior"), far_field=far, solver=solver,
        check=check, seed=seed, out=doc.get("out", "out"),
    )


def _domain_from_config(domain: dict) -> DomainSpec:
    kind = domain.get("kind")
    dim = int(domain.get("dimension", 1))
    if kind == "BALL":
        return DomainSpec.ball(float(domain["radius"]), dim)
    if kind == "ANNULUS":
        return DomainSpec.annulus(float(domain["r_inner"]), float(domain["r_outer"]), dim)
    if kind == "STARSHAPED_RING":
        def radial(spec_val):
            if isinstance(spec_val, (int, float)):
                return float(spec_val)
            base = float(spec_val.get("base", 1.0))
            amp = float(spec_val.get("cos_amplitude", 0.0))
            freq = float(spec_val.get("cos_frequency", 0.0))
            return lambda th: base + amp * np.cos(freq * th)

        return DomainSpec.starshaped_ring(radial(domain["rho_outer"]), radial(domain["rho_inner"]))
    if kind == "HALFSPACE_SLAB":
        return DomainSpec.halfspace_slab(float(domain["length"]), dim, domain.get("height"))
    raise ValidationError({"domain.kind": f"unknown domain kind {kind!r}"})


def _solver_options(cfg: RunConfig) -> SolverOptions:
    kw = dict(cfg.solver)
    kw.setdefault("seed", cfg.seed)
    return SolverOptions(**kw)


def _params(cfg: RunConfig) -> FractionalParams:
    return FractionalParams(cfg.s, cfg.p, cfg.alpha)


def _build_problem(cfg: RunConfig, h: float | None = None) -> ProblemSpec:
    spec = _domain_from_config(cfg.domain)
    grid = build_grid(spec, h if h is not None else cfg.h, r_infinity=cfg.r_infinity)
    zero = DiscreteFunction(grid, np.zeros(grid.node_count), 0.0)

    def sampled(field_spec, clamp_nonneg=False):
        fn = make_field(field_spec)
        if fn is None:
            return zero
        f = sample_function(grid, fn, far_field_value=cfg.far_field if field_spec is cfg.exterior else 0.0)
        if clamp_nonneg:
            f = f.with_values(np.maximum(f.values, 0.0), max(f.far_field_value, 0.0))
        return f

    q = sampled(cfg.q, clamp_nonneg=True)
    g = sampled(cfg.g)
    ext = sampled(cfg.exterior)
    ext = ext.with_values(np.where(grid.interior_mask, 0.0, ext.values), cfg.far_field)
    return ProblemSpec(grid, _params(cfg), q, g, ext)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    if hasattr(obj, "to_json_dict"):
        return _jsonable(obj.to_json_dict())
    return str(obj)


def _write_solution_csv(path: Path, u: DiscreteFunction):
    grid = u.grid
    cols = "x1,value,role" if grid.dimension == 1 else "x1,x2,value,role"
    with open(path, "w") as fh:
        fh.write(cols + "\n")
        for x, v, r in zip(grid.nodes, u.values, grid.roles):
            coords = ",".join(f"{c:.17g}" for c in x)
            fh.write(f"{coords},{v:.17g},{NodeRole(r).name}\n")


def _write_profile_csv(path: Path, u: DiscreteFunction):
    grid = u.grid
    r = np.linalg.norm(grid.nodes, axis=1)
    order = np.argsort(r, kind="stable")
    with open(path, "w") as fh:
        fh.write("r,value\n")
        for i in order:
            fh.write(f"{r[i]:.17g},{u.values[i]:.17g}\n")


def _write_levelset_csv(path: Path, u: DiscreteFunction, levels):
    """Boundary point cloud per level: nodes inside the superlevel set with a
    lattice neighbor outside."""
    grid = u.grid
    shape = grid._lattice_shape
    with open(path, "w") as fh:
        head = "level,x1" if grid.dimension == 1 else "level,x1,x2"
        fh.write(head + "\n")
        for lv in levels:
            mask = superlevel_mask(u, lv).reshape(shape)
            boundary = np.zeros_like(mask)
            for axis in range(grid.dimension):
                d = np.diff(mask.astype(np.int8), axis=axis)
                lo = [slice(None)] * grid.dimension
                hi = [slice(None)] * grid.dimension
                lo[axis] = slice(0, shape[axis] - 1)
                hi[axis] = slice(1, shape[axis])
                boundary[tuple(lo)] |= (d != 0) & mask[tuple(lo)]
                boundary[tuple(hi)] |= (d != 0) & mask[tuple(hi)]
            for x in grid.nodes[boundary.ravel()]:
                coords = ",".join(f"{c:.17g}" for c in x)
                fh.write(f"{lv:g},{coords}\n")


def _write_weights_csv(path: Path, prob: ProblemSpec):
    W = prob.weights.pairs
    n = W.shape[0]
    with open(path, "w") as fh:
        fh.write("i,j,w\n")
        for i in range(n):
            row = W[i]
            for j in range(i + 1, n):
                fh.write(f"{i},{j},{row[j]:.17g}\n")


def run(cfg: RunConfig, out_dir: str | None = None, seed: int | None = None,
        parallel: int = 1, dump_weights: bool = False) -> int:
    """Execute a config; write report, data artifacts, and a manifest."""
    if seed is not None:
        cfg.seed = seed
    out = Path(out_dir if out_dir is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts: list[Path] = []
    results = []
    solution = None
    levels = tuple(cfg.check.get("levels", DEFAULT_LEVELS))
    t_samples = tuple(cfg.check.get("t_samples", DEFAULT_T_SAMPLES))
    prob = None

    if cfg.subcommand == "solve":
        prob = _build_problem(cfg)
        res = solve_dirichlet(prob, _solver_options(cfg))
        solution = res.solution
        results.append({
            "check_id": "solve", "holds": res.converged,
            "residual_norm": res.residual_norm, "iterations": res.iterations,
            "energy": res.energy, "tolerance_used": res.tolerance_used,
        })

    elif cfg.subcommand == "check-inequalities":
        results.append(oracles.inequality_suite(
            seed=cfg.seed,
            samples=int(cfg.check.get("samples", 100_000)),
            q_values=tuple(cfg.check.get("q_values", (0.3, 0.5, 0.8, 1.0, 1.5, 2.0, 3.0))),
            m_values=tuple(cfg.check.get("M_values", (1.0, 10.0))),
        ))

    elif cfg.subcommand == "check-comparison":
        prob = _build_problem(cfg)
        ext_b = make_field(cfg.check.get("exterior_b"))
        g_b = make_field(cfg.check.get("g_b"))
        grid = prob.grid
        zero = DiscreteFunction(grid, np.zeros(grid.node_count), 0.0)
        ext2 = prob.exterior if ext_b is None else sample_function(
            grid, ext_b, far_field_value=cfg.far_field)
        if ext_b is not None:
            ext2 = ext2.with_values(np.where(grid.interior_mask, 0.0, ext2.values),
                                    ext2.far_field_value)
        g2 = prob.g if g_b is None else sample_function(grid, g_b, far_field_value=0.0)
        prob_b = ProblemSpec(grid, prob.params, prob.q, g2, ext2).with_weights(prob.weights)
        opts = _solver_options(cfg)
        mode = cfg.check.get("mode", "weak")
        if mode == "strong":
            rep = check_strong_comparison(prob, prob_b, opts=opts)
        else:
            rep = check_weak_comparison(prob, prob_b, opts=opts)
        results.append(rep)

    elif cfg.subcommand == "check-scaling":
        base_h = cfg.h

        def problem_at(level):
            return _build_problem(cfg, h=base_h / 2**level)

        rep = check_scaling(problem_at, t=float(cfg.check.get("t", 2.0)),
                            opts=_solver_options(cfg),
                            levels=int(cfg.check.get("refinement_levels", 2)))
        results.append(rep)

    elif cfg.subcommand == "starshape-ring":
        spec = _domain_from_config(cfg.domain)
        exp = ring_experiment(spec, _params(cfg), cfg.h, q_fn=make_field(cfg.q),
                              levels=levels, opts=_solver_options(cfg),
                              r_infinity=cfg.r_infinity, t_samples=t_samples)
        solution = exp.solve.solution
        results.extend(exp.checks)
        results.append(exp.starshape)
        results.append({"check_id": "starshape_overall", "holds": exp.holds})

    elif cfg.subcommand == "starshape-general":
        spec = _domain_from_config(cfg.domain)
        exp = general_ring_experiment(
            spec, _params(cfg), cfg.h,
            b0_fn=_pointwise(make_field(cfg.check.get("b0")) or (lambda x: np.zeros(np.atleast_2d(x).shape[0]))),
            b1_fn=_pointwise(make_field(cfg.check.get("b1")) or (lambda x: np.ones(np.atleast_2d(x).shape[0]))),
            q_fn=make_field(cfg.q), g_fn=make_field(cfg.g), levels=levels,
            opts=_solver_options(cfg), r_infinity=cfg.r_infinity, t_samples=t_samples)
        solution = exp.solve.solution
        results.extend(exp.checks)
        results.append(exp.starshape)
        results.append({"check_id": "starshape_overall", "holds": exp.holds})

    elif cfg.subcommand == "halfspace":
        length = float(cfg.domain["length"]) if cfg.domain else 4.0
        rep = halfspace_experiment(
            length, _params(cfg), cfg.h or length / 32.0, q_fn=make_field(cfg.q),
            opts=_solver_options(cfg),
            dimension=int(cfg.domain.get("dimension", 1)) if cfg.domain else 1,
            t_shifts=tuple(cfg.check["t_shifts"]) if "t_shifts" in cfg.check else None,
            source_scale=float(cfg.check.get("source_scale", 1e-2)),
            r_infinity=cfg.r_infinity)
        results.append(rep)

    elif cfg.subcommand == "oracle-suite":
        jobs = [
            lambda: oracles.gradient_consistency_suite(seed=cfg.seed),
            lambda: oracles.constant_annihilation_suite(seed=cfg.seed + 1),
            lambda: oracles.p2_equivalence_suite(seed=cfg.seed + 2),
            lambda: oracles.golden_oracle_suite(seed=cfg.seed + 3),
        ]
        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                futures = [pool.submit(j) for j in jobs]
                results.extend(f.result() for f in futures)
        else:
            results.extend(j() for j in jobs)

    holds = all(_holds_of(r) for r in results)
    report = {
        "subcommand": cfg.subcommand,
        "seed": cfg.seed,
        "config_digest": hashlib.sha256(
            json.dumps(cfg.raw, sort_keys=True).encode()).hexdigest(),
        "holds": holds,
        "results": _jsonable(results),
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    artifacts.append(report_path)

    if solution is not None:
        sol_path = out / "solution.csv"
        _write_solution_csv(sol_path, solution)
        artifacts.append(sol_path)
        prof_path = out / "profile.csv"
        _write_profile_csv(prof_path, solution)
        artifacts.append(prof_path)
        if cfg.subcommand.startswith("starshape"):
            lvl_path = out / "levelsets.csv"
            _write_levelset_csv(lvl_path, solution, levels)
            artifacts.append(lvl_path)
    if dump_weights and prob is not None:
        w_path = out / "weights.csv"
        _write_weights_csv(w_path, prob)
        artifacts.append(w_path)

    manifest = {
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "artifacts": [
            {"path": a.name, "bytes": a.stat().st_size,
             "sha256": hashlib.sha256(a.read_bytes()).hexdigest()}
            for a in artifacts
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return 0 if holds else 2


def _pointwise(fn):
    return lambda x: float(np.asarray(fn(np.atleast_2d(x))).ravel()[0])


def _holds_of(r) -> bool:
    if isinstance(r, dict):
        return bool(r.get("holds", True))
    if hasattr(r, "starshaped_holds"):
        ok = bool(r.starshaped_holds)
        if r.strictly_starshaped_holds is not None:
            ok = ok and bool(r.strictly_starshaped_holds)
        return ok
    return bool(r.holds)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fplap",
        description="Fractional p-Laplacian toolkit: solves and qualitative checks",
    )
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory (default from config)")
    parser.add_argument("--parallel", type=int, default=1, help="worker threads for independent checks")
    parser.add_argument("--dump-weights", action="store_true", help="write the pair-weight table as CSV")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(Path(args.config).read_text())
        return run(cfg, out_dir=args.out, seed=args.seed, parallel=args.parallel,
                   dump_weights=args.dump_weights)
    except FplapError as e:
        print(f"error [{e.code}]: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # pragma: no cover - defensive
        print(f"error [UNEXPECTED]: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
