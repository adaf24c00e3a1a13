"""Signed power function and checked elementary power inequalities.

All checkers accept scalars or NumPy arrays (broadcast together) and return
the measured sides next to the verdict, so callers can log margins instead
of bare pass/fail. Verdicts use a relative slack of ``REL_SLACK`` to absorb
floating-point noise near equality cases.

Constants without a closed form are certified by ``certify_constant``: a
deterministic grid-plus-random supremum search with 5% headroom. Search
domains are bounded (``B_MAX``); the large-argument behaviour of each ratio
is bounded, see the notes in ``_sup_search_*``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DomainError,
    NonpositiveExponentError,
    OutOfRangeError,
    SearchDivergedError,
)

REL_SLACK = 1e-12
B_MAX = 1e3
_DEFAULT_SEED = 907


class Inequality(str, Enum):
    SUM_POWER = "SUM_POWER"
    INCREMENT_GEQ1 = "INCREMENT_GEQ1"
    DIFF_UPPER = "DIFF_UPPER"
    INCREMENT_BOUNDED = "INCREMENT_BOUNDED"
    HOLDER_DIFF = "HOLDER_DIFF"


class Provenance(str, Enum):
    CLOSED_FORM = "CLOSED_FORM"
    NUMERIC_SUP_SEARCH = "NUMERIC_SUP_SEARCH"


@dataclass(frozen=True)
class InequalityConstant:
    inequality_id: Inequality
    q: float
    M: float | None
    value: float
    provenance: Provenance

    def __post_init__(self):
        if not self.value > 0:
            raise DomainError(f"constant must be positive, got {self.value}")


def _broadcast(*args):
    arrs = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in args])
    scalar = all(np.ndim(a) == 0 for a in args)
    return arrs, scalar


def _ret(x, scalar):
    return float(x) if scalar else x


def _ret_bool(x, scalar):
    return bool(x) if scalar else x


def signed_power(a, q):
    """Odd power a -> |a|^(q-1) * a, with the removable value 0 at a = 0."""
    if not np.isscalar(q) or q <= 0:
        if np.isscalar(q):
            raise NonpositiveExponentError(f"exponent must be positive, got {q}")
        raise NonpositiveExponentError("exponent must be a positive scalar")
    (arr,), scalar = _broadcast(a)
    return _ret(np.sign(arr) * np.abs(arr) ** q, scalar)


def check_sum_power(a, b, q):
    """(a+b)^q <= max(1, 2^(q-1)) (a^q + b^q) for a, b >= 0.

    Returns (lhs, rhs, holds).
    """
    if q <= 0:
        raise NonpositiveExponentError(f"exponent must be positive, got {q}")
    (a, b), scalar = _broadcast(a, b)
    if np.any(a < 0) or np.any(b < 0):
        raise DomainError("check_sum_power requires a >= 0 and b >= 0")
    lhs = (a + b) ** q
    rhs = max(1.0, 2.0 ** (q - 1.0)) * (a**q + b**q)
    holds = lhs <= rhs + REL_SLACK * (1.0 + rhs)
    return _ret(lhs, scalar), _ret(rhs, scalar), _ret_bool(holds, scalar)


def check_increment_geq1(a, b, q):
    """(a+b)^{*q} - a^{*q} >= 2^(1-q) b^q for real a, b >= 0, q >= 1.

    Returns (gap, holds) where gap is lhs minus the bound.
    """
    if q < 1:
        raise DomainError(f"check_increment_geq1 requires q >= 1, got {q}")
    (a, b), scalar = _broadcast(a, b)
    if np.any(b < 0):
        raise DomainError("check_increment_geq1 requires b >= 0")
    gap = signed_power(a + b, q) - signed_power(a, q) - 2.0 ** (1.0 - q) * b**q
    holds = gap >= -REL_SLACK * (1.0 + np.abs(a) ** q + b**q)
    return _ret(gap, scalar), _ret_bool(holds, scalar)


def check_diff_upper(M, a, b, q, C: InequalityConstant):
    """a^{*q} - (a-b)^{*q} <= C max(b, b^q) for |a| <= M, b >= 0.

    Returns (lhs, bound, holds); C is a certified constant.
    """
    (a, b), scalar = _broadcast(a, b)
    if np.any(np.abs(a) > M * (1.0 + 1e-15)):
        raise OutOfRangeError(f"check_diff_upper requires |a| <= M = {M}")
    if np.any(b < 0):
        raise DomainError("check_diff_upper requires b >= 0")
    lhs = signed_power(a, q) - signed_power(a - b, q)
    bound = C.value * np.maximum(b, b**q)
    holds = lhs <= bound + REL_SLACK * (1.0 + np.abs(bound))
    return _ret(lhs, scalar), _ret(bound, scalar), _ret_bool(holds, scalar)


def check_increment_bounded(M, a, b, q, C: InequalityConstant):
    """(a+b)^{*q} - a^{*q} >= C min(b, b^q) for |a| <= M, b >= 0.

    Returns (lhs, bound, holds); C is closed-form for q < 1 and for q >= 1.
    """
    (a, b), scalar = _broadcast(a, b)
    if np.any(np.abs(a) > M * (1.0 + 1e-15)):
        raise OutOfRangeError(f"check_increment_bounded requires |a| <= M = {M}")
    if np.any(b < 0):
        raise DomainError("check_increment_bounded requires b >= 0")
    lhs = signed_power(a + b, q) - signed_power(a, q)
    bound = C.value * np.minimum(b, b**q)
    holds = lhs >= bound - REL_SLACK * (1.0 + np.abs(a) ** q + b**q)
    return _ret(lhs, scalar), _ret(bound, scalar), _ret_bool(holds, scalar)


def check_holder_diff(a, b, q, C: InequalityConstant):
    """|(a+b)^{*q} - a^{*q}| <= C |b|^q for all real a, b and q in (0, 1].

    Returns (lhs, bound, holds); C is a certified constant (>= 1).
    """
    if q > 1 or q <= 0:
        raise DomainError(f"check_holder_diff requires q in (0, 1], got {q}")
    (a, b), scalar = _broadcast(a, b)
    lhs = np.abs(signed_power(a + b, q) - signed_power(a, q))
    bound = C.value * np.abs(b) ** q
    holds = lhs <= bound + REL_SLACK * (1.0 + bound)
    return _ret(lhs, scalar), _ret(bound, scalar), _ret_bool(holds, scalar)


def closed_form_constant(inequality_id: Inequality, q: float, M: float | None = None):
    """Closed-form constant for the inequalities that have one, else None."""
    if inequality_id == Inequality.SUM_POWER:
        return max(1.0, 2.0 ** (q - 1.0))
    if inequality_id == Inequality.INCREMENT_GEQ1:
        if q < 1:
            raise DomainError("INCREMENT_GEQ1 requires q >= 1")
        return 2.0 ** (1.0 - q)
    if inequality_id == Inequality.INCREMENT_BOUNDED:
        if q >= 1:
            # reduces to the q >= 1 increment bound; no dependence on M
            return 2.0 ** (1.0 - q)
        if M is None or M <= 0:
            raise DomainError("INCREMENT_BOUNDED with q < 1 requires M > 0")
        return q * 2.0 ** (q - 1.0) * min(1.0, M ** (q - 1.0))
    return None


def _sup_search_diff_upper(q, M, budget, rng):
    # ratio(a, b) = (a^{*q} - (a-b)^{*q}) / max(b, b^q) over [-M, M] x (0, B_MAX].
    # As b -> infinity the ratio tends to 1 (q >= 1) or 0 (q < 1), so the
    # supremum is attained at moderate b and the bounded search is sound.
    a_grid = np.linspace(-M, M, 801)
    b_grid = np.concatenate(
        [np.linspace(1e-8, 4.0 * max(1.0, M), 1201), np.geomspace(4.0 * max(1.0, M), B_MAX, 400)]
    )

    def ratio(a, b):
        return (signed_power(a, q) - signed_power(a - b, q)) / np.maximum(b, b**q)

    sup = float(np.max(ratio(a_grid[:, None], b_grid[None, :])))
    a_r = rng.uniform(-M, M, budget)
    b_r = np.exp(rng.uniform(np.log(1e-8), np.log(B_MAX), budget))
    sup_r = float(np.max(ratio(a_r, b_r)))
    sup = max(sup, sup_r)

    edge = float(np.max(ratio(a_grid, B_MAX)))
    if edge > 1.05 * max(sup * 0.999, 1e-300) and edge >= sup:
        raise SearchDivergedError(
            f"DIFF_UPPER ratio still growing at b = {B_MAX}; check parameter ranges"
        )
    return sup


def _sup_search_holder_diff(q, budget, rng):
    # ratio(a, b) = |(a+b)^{*q} - a^{*q}| / |b|^q is invariant under
    # (a, b) -> (t a, t b), so it suffices to search b = 1. The candidate
    # maximizer a = -1/2 (value 2^(1-q)) is included in the grid.
    a_grid = np.concatenate(
        [np.linspace(-50.0, 50.0, 8001), np.linspace(-2.0, 1.0, 8001), [-0.5]]
    )
    vals = np.abs(signed_power(a_grid + 1.0, q) - signed_power(a_grid, q))
    sup = float(np.max(vals))
    a_r = rng.uniform(-50.0, 50.0, budget)
    sup = max(sup, float(np.max(np.abs(signed_power(a_r + 1.0, q) - signed_power(a_r, q)))))
    return sup


def certify_constant(
    inequality_id: Inequality,
    q: float,
    M: float | None = None,
    search_budget: int = 200_000,
    seed: int = _DEFAULT_SEED,
) -> InequalityConstant:
    """Produce a constant for one inequality family.

    Closed-form constants are returned exactly; the two families without one
    (DIFF_UPPER, HOLDER_DIFF) get 1.05 x the numerically searched supremum of
    the defining ratio, deterministic for a fixed seed.
    """
    inequality_id = Inequality(inequality_id)
    if q <= 0:
        raise NonpositiveExponentError(f"exponent must be positive, got {q}")

    cf = None
    if inequality_id in (Inequality.SUM_POWER, Inequality.INCREMENT_GEQ1, Inequality.INCREMENT_BOUNDED):
        cf = closed_form_constant(inequality_id, q, M)
    if cf is not None:
        return InequalityConstant(inequality_id, q, M, cf, Provenance.CLOSED_FORM)

    rng = np.random.default_rng(seed)
    if inequality_id == Inequality.DIFF_UPPER:
        if M is None or M <= 0:
            raise DomainError("DIFF_UPPER requires M > 0")
        sup = _sup_search_diff_upper(q, M, search_budget, rng)
    elif inequality_id == Inequality.HOLDER_DIFF:
        if q > 1:
            raise DomainError("HOLDER_DIFF requires q in (0, 1]")
        sup = _sup_search_holder_diff(q, search_budget, rng)
    else:  # pragma: no cover - exhaustive enum
        raise DomainError(f"no certification rule for {inequality_id}")

    if not np.isfinite(sup) or sup <= 0:
        raise SearchDivergedError(f"sup search for {inequality_id.value} returned {sup}")
    return InequalityConstant(inequality_id, q, M, 1.05 * sup, Provenance.NUMERIC_SUP_SEARCH)
