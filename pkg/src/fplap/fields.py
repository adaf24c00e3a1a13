"""JSON-expressible scalar field families for configs.

Each spec is a dict with a "kind" key; make_field turns it into a callable
mapping an (m, N) coordinate array to m values.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

KINDS = ("zero", "constant", "abs_power", "coordinate", "gaussian", "radial_hat")


def make_field(spec: dict | None, path: str = "field"):
    if spec is None:
        return None
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValidationError({path: "field spec must be an object with a 'kind' key"})
    kind = spec["kind"]
    known = {"kind"}

    def num(key, default=None):
        if key in spec:
            known.add(key)
            v = spec[key]
            if not isinstance(v, (int, float)):
                raise ValidationError({f"{path}.{key}": "must be a number"})
            return float(v)
        if default is None:
            raise ValidationError({f"{path}.{key}": "is required"})
        return float(default)

    if kind == "zero":
        fn = lambda x: np.zeros(np.atleast_2d(x).shape[0])
    elif kind == "constant":
        c = num("value")
        fn = lambda x: np.full(np.atleast_2d(x).shape[0], c)
    elif kind == "abs_power":
        c = num("coefficient", 1.0)
        e = num("exponent")
        fn = lambda x: c * np.linalg.norm(np.atleast_2d(x), axis=1) ** e
    elif kind == "coordinate":
        c = num("coefficient", 1.0)
        axis = int(num("axis", 0.0))
        fn = lambda x: c * np.atleast_2d(x)[:, axis]
    elif kind == "gaussian":
        c = num("coefficient", 1.0)
        rate = num("rate", 1.0)
        fn = lambda x: c * np.exp(-rate * np.linalg.norm(np.atleast_2d(x), axis=1) ** 2)
    elif kind == "radial_hat":
        c = num("coefficient", 1.0)
        r = num("radius", 1.0)
        fn = lambda x: c * np.maximum(0.0, 1.0 - np.linalg.norm(np.atleast_2d(x), axis=1) / r)
    else:
        raise ValidationError({f"{path}.kind": f"unknown field kind {kind!r}; expected one of {KINDS}"})

    extra = set(spec) - known
    if extra:
        raise ValidationError({f"{path}.{k}": "unknown key" for k in sorted(extra)})
    return fn
