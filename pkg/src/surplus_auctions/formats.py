"""JSON encoding of instances and mechanism distributions."""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction

import numpy as np

from .valuations import (
    DIVISIBLE,
    INDIVISIBLE,
    Curve,
    DivisibleSeparable,
    Explicit,
    Instance,
    MultiUnit,
    UnitDemand,
    ValuationError,
    check_class,
)


def valuation_to_dict(v) -> dict:
    if isinstance(v, UnitDemand):
        return {"class": "unit_demand", "weights": v.weights.tolist()}
    if isinstance(v, MultiUnit):
        return {"class": "multi_unit", "marginals": v.marginals.tolist()}
    if isinstance(v, Explicit):
        return {"class": "explicit", "table": {str(mask): float(x) for mask, x in enumerate(v.table)}}
    if isinstance(v, DivisibleSeparable):
        return {
            "class": "divisible_separable",
            "curves": [{"breakpoints": c.breakpoints.tolist(), "slopes": c.slopes.tolist()} for c in v.curves],
        }
    raise ValuationError(f"cannot encode {type(v).__name__}")


def _explicit_from_table(raw, m: int) -> Explicit:
    table = np.zeros(1 << m)
    if isinstance(raw, dict):
        for key, value in raw.items():
            mask = int(key)
            if not 0 <= mask < len(table):
                raise ValuationError(f"bitmask {key} outside 2^{m}")
            table[mask] = float(value)
    else:
        if len(raw) != len(table):
            raise ValuationError("explicit table list must have 2^m entries")
        table[:] = raw
    return Explicit(table)


def valuation_from_dict(d: dict, m: int):
    cls = d.get("class")
    try:
        if cls == "unit_demand":
            return UnitDemand(d["weights"])
        if cls == "multi_unit":
            return MultiUnit(d["marginals"])
        if cls == "explicit":
            return _explicit_from_table(d["table"], m)
        if cls == "divisible_separable":
            if "slopes" in d:
                return DivisibleSeparable.linear(d["slopes"])
            return DivisibleSeparable(tuple(Curve(c["breakpoints"], c["slopes"]) for c in d["curves"]))
    except KeyError as exc:
        raise ValuationError(f"{cls} valuation is missing field {exc}") from None
    raise ValuationError(f"unknown valuation class {cls!r}")


def instance_to_dict(instance: Instance) -> dict:
    return {
        "kind": instance.kind,
        "m": instance.m,
        "agents": [valuation_to_dict(v) for v in instance.valuations],
    }


def instance_from_dict(d: dict, allow_nonstandard: bool = False) -> Instance:
    """Parse and validate; valuations failing ``check_class`` are rejected
    unless ``allow_nonstandard`` is set."""
    if not isinstance(d, dict):
        raise ValuationError("instance must be a JSON object")
    kind = d.get("kind", INDIVISIBLE)
    if kind not in (INDIVISIBLE, DIVISIBLE):
        raise ValuationError(f"unknown kind {kind!r}")
    try:
        m = int(d["m"])
        agents = d["agents"]
    except (KeyError, TypeError, ValueError):
        raise ValuationError("instance needs integer 'm' and a list 'agents'") from None
    if m < 1 or not isinstance(agents, list):
        raise ValuationError("instance needs m >= 1 and a list of agents")
    vals = []
    for k, a in enumerate(agents):
        if not isinstance(a, dict):
            raise ValuationError(f"agent {k} is not an object")
        v = valuation_from_dict(a, m)
        if not allow_nonstandard:
            diag = check_class(v)
            if not diag.ok:
                raise ValuationError(f"agent {k} fails its class checks: {diag}")
        vals.append(v)
    return Instance(m, tuple(vals), kind)


def load_instance(path, allow_nonstandard: bool = False) -> Instance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValuationError(f"malformed JSON: {exc}") from None
    return instance_from_dict(data, allow_nonstandard)


def instance_digest(instance: Instance) -> str:
    """Short sha256 of the canonical instance JSON."""
    blob = json.dumps(instance_to_dict(instance), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fraction_to_json(p: Fraction) -> dict:
    return {"numerator": p.numerator, "denominator": p.denominator}


def bundle_to_json(bundle):
    if isinstance(bundle, np.ndarray):
        return bundle.tolist()
    return sorted(int(j) for j in bundle)


def distribution_to_dict(dist) -> dict:
    return {
        "branches": [
            {
                "label": b.label,
                "probability": fraction_to_json(b.weight),
                "lottery": [
                    [
                        {"probability": fraction_to_json(p.probability), "bundle": bundle_to_json(p.bundle), "payment": p.payment}
                        for p in prizes
                    ]
                    for prizes in b.lottery
                ],
            }
            for b in dist.branches
        ]
    }
