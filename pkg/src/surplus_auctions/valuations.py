"""Valuation classes, bundle evaluation, the copies lift and the capacity cap."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

TOL = 1e-9
MAX_EXPLICIT_ITEMS = 12

INDIVISIBLE = "indivisible"
DIVISIBLE = "divisible"


class ValuationError(ValueError):
    """Raised for malformed valuations, bundles or instances."""


class CopiedItem(NamedTuple):
    """Copy ``copy`` of original item ``item`` in a copies instance."""

    item: int
    copy: int


Bundle = Union[Iterable[int], np.ndarray]


def _as_item_set(bundle, m: int) -> frozenset:
    items = frozenset(int(j) for j in bundle)
    for j in items:
        if j < 0 or j >= m:
            raise ValuationError(f"item {j} out of range for m={m}")
    return items


def _as_fractions(bundle, m: int) -> np.ndarray:
    x = np.asarray(bundle, dtype=float)
    if x.shape != (m,):
        raise ValuationError(f"fraction vector must have shape ({m},), got {x.shape}")
    if np.any(x < -TOL) or np.any(x > 1 + TOL):
        raise ValuationError("fractions must lie in [0, 1]")
    return np.clip(x, 0.0, 1.0)


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class UnitDemand:
    """v(S) = max_{j in S} w_j."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.weights)
        if w.ndim != 1:
            raise ValuationError("unit-demand weights must be a vector")
        object.__setattr__(self, "weights", w)

    kind = INDIVISIBLE
    class_name = "unit_demand"

    @property
    def m(self) -> int:
        return len(self.weights)

    def __call__(self, bundle) -> float:
        items = _as_item_set(bundle, self.m)
        if not items:
            return 0.0
        return float(max(self.weights[j] for j in items))

    def params(self) -> np.ndarray:
        return self.weights

    def with_params(self, params) -> "UnitDemand":
        return UnitDemand(np.maximum(np.asarray(params, dtype=float), 0.0))


@dataclass(frozen=True, eq=False)
class MultiUnit:
    """Value of k items is d_1 + ... + d_k, whatever the items are."""

    marginals: np.ndarray

    def __post_init__(self):
        d = _frozen_array(self.marginals)
        if d.ndim != 1:
            raise ValuationError("multi-unit marginals must be a vector")
        object.__setattr__(self, "marginals", d)

    kind = INDIVISIBLE
    class_name = "multi_unit"

    @property
    def m(self) -> int:
        return len(self.marginals)

    def value_of_count(self, k: int) -> float:
        return float(self.marginals[:k].sum())

    def __call__(self, bundle) -> float:
        return self.value_of_count(len(_as_item_set(bundle, self.m)))

    def params(self) -> np.ndarray:
        return self.marginals

    def with_params(self, params) -> "MultiUnit":
        d = np.sort(np.maximum(np.asarray(params, dtype=float), 0.0))[::-1]
        return MultiUnit(d)


@dataclass(frozen=True, eq=False)
class Explicit:
    """Full table of 2^m values indexed by subset bitmask (bit j = item j)."""

    table: np.ndarray

    def __post_init__(self):
        t = _frozen_array(self.table)
        size = len(t)
        m = size.bit_length() - 1
        if t.ndim != 1 or size == 0 or (1 << m) != size:
            raise ValuationError("explicit table length must be a power of two")
        if m > MAX_EXPLICIT_ITEMS:
            raise ValuationError(f"explicit valuations support at most {MAX_EXPLICIT_ITEMS} items")
        object.__setattr__(self, "table", t)

    kind = INDIVISIBLE
    class_name = "explicit"

    @property
    def m(self) -> int:
        return len(self.table).bit_length() - 1

    def value_of_mask(self, mask: int) -> float:
        return float(self.table[mask])

    def __call__(self, bundle) -> float:
        mask = 0
        for j in _as_item_set(bundle, self.m):
            mask |= 1 << j
        return float(self.table[mask])

    def params(self) -> np.ndarray:
        return self.table[1:]

    def with_params(self, params) -> "Explicit":
        table = np.concatenate([[0.0], np.maximum(np.asarray(params, dtype=float), 0.0)])
        return Explicit(monotone_closure(table))


@dataclass(frozen=True, eq=False)
class Curve:
    """Concave piecewise-linear curve on [0, 1] with value 0 at 0.

    ``breakpoints`` are 0 = b_0 < b_1 < ... < b_K = 1 and ``slopes[k]`` applies
    on [b_k, b_{k+1}]. Adjacent slopes equal within tolerance are merged.
    """

    breakpoints: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        if b.ndim != 1 or s.ndim != 1 or len(b) != len(s) + 1 or len(s) == 0:
            raise ValuationError("a curve needs K slopes and K+1 breakpoints")
        if abs(b[0]) > TOL or abs(b[-1] - 1.0) > TOL:
            raise ValuationError("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(b) <= 0):
            raise ValuationError("breakpoints must be strictly increasing")
        keep_b, keep_s = [0.0], [float(s[0])]
        for k in range(1, len(s)):
            if abs(s[k] - keep_s[-1]) <= TOL:
                continue
            keep_b.append(float(b[k]))
            keep_s.append(float(s[k]))
        keep_b.append(1.0)
        object.__setattr__(self, "breakpoints", _frozen_array(keep_b))
        object.__setattr__(self, "slopes", _frozen_array(keep_s))

    @classmethod
    def linear(cls, slope: float) -> "Curve":
        return cls([0.0, 1.0], [slope])

    def __call__(self, x: float) -> float:
        b = self.breakpoints
        lengths = np.clip(x - b[:-1], 0.0, np.diff(b))
        return float(np.dot(self.slopes, lengths))

    def capped(self, q: float) -> "Curve":
        if q >= 1.0:
            return self
        b = self.breakpoints
        inside = b[(b > 0) & (b < q - TOL)]
        new_b = np.concatenate([[0.0], inside, [q, 1.0]])
        new_s = list(self.slopes[: len(inside) + 1]) + [0.0]
        return Curve(new_b, new_s)

    @property
    def concave(self) -> bool:
        return bool(np.all(np.diff(self.slopes) <= TOL))


@dataclass(frozen=True, eq=False)
class DivisibleSeparable:
    """v(x) = sum_j curve_j(x_j) for fractions x in [0, 1]^m."""

    curves: tuple

    def __post_init__(self):
        curves = tuple(self.curves)
        if not curves or not all(isinstance(c, Curve) for c in curves):
            raise ValuationError("divisible valuations need one Curve per item")
        object.__setattr__(self, "curves", curves)

    kind = DIVISIBLE
    class_name = "divisible_separable"

    @classmethod
    def linear(cls, slopes: Sequence[float]) -> "DivisibleSeparable":
        return cls(tuple(Curve.linear(s) for s in slopes))

    @property
    def m(self) -> int:
        return len(self.curves)

    def __call__(self, bundle) -> float:
        x = _as_fractions(bundle, self.m)
        return float(sum(c(xj) for c, xj in zip(self.curves, x)))

    def params(self) -> np.ndarray:
        return np.concatenate([c.slopes for c in self.curves])

    def with_params(self, params) -> "DivisibleSeparable":
        params = np.maximum(np.asarray(params, dtype=float), 0.0)
        curves, at = [], 0
        for c in self.curves:
            k = len(c.slopes)
            slopes = np.sort(params[at:at + k])[::-1]
            curves.append(Curve(c.breakpoints, slopes))
            at += k
        return DivisibleSeparable(tuple(curves))


Valuation = Union[UnitDemand, MultiUnit, Explicit, DivisibleSeparable]
VALUATION_CLASSES = {
    cls.class_name: cls for cls in (UnitDemand, MultiUnit, Explicit, DivisibleSeparable)
}


def evaluate(v: Valuation, bundle) -> float:
    """Value of ``bundle`` (item set, or fraction vector for divisible goods)."""
    return v(bundle)


def monotone_closure(table) -> np.ndarray:
    """Smallest monotone table dominating ``table`` with the empty set at 0."""
    t = np.array(table, dtype=float)
    t[0] = 0.0
    m = len(t).bit_length() - 1
    for mask in range(1, len(t)):
        for j in range(m):
            bit = 1 << j
            if mask & bit:
                t[mask] = max(t[mask], t[mask ^ bit])
    return t


def project_g(bundle: Iterable) -> frozenset:
    """Original items appearing in a set of copied items."""
    out = set()
    for element in bundle:
        if isinstance(element, tuple):
            out.add(int(element[0]))
        else:
            out.add(int(element))
    return frozenset(out)


@dataclass(frozen=True, eq=False)
class CopiesValuation:
    """v'(S) = v(g(S)) over the instance with 2^ell copies of every item."""

    base: Valuation
    ell: int

    def __post_init__(self):
        if self.base.kind != INDIVISIBLE:
            raise ValuationError("only indivisible valuations can be lifted to copies")
        if self.ell < 0:
            raise ValuationError("ell must be nonnegative")

    @property
    def copies(self) -> int:
        return 1 << self.ell

    @property
    def class_name(self) -> str:
        return self.base.class_name

    def __call__(self, bundle) -> float:
        bundle = list(bundle)
        for element in bundle:
            item, copy = element
            if copy < 0 or copy >= self.copies:
                raise ValuationError(f"copy index {copy} out of range for ell={self.ell}")
        return self.base(project_g(bundle))


def lift_to_copies(v: Valuation, ell: int) -> CopiesValuation:
    return CopiesValuation(v, ell)


def cap(v: DivisibleSeparable, q: float) -> DivisibleSeparable:
    """v^q(x) = v(min(q, x)) coordinatewise."""
    if not isinstance(v, DivisibleSeparable):
        raise ValuationError("capacity caps apply to divisible valuations only")
    if q <= 0:
        raise ValuationError("capacity q must be positive")
    return DivisibleSeparable(tuple(c.capped(min(q, 1.0)) for c in v.curves))


@dataclass(frozen=True)
class ClassDiagnostics:
    normalized: bool
    monotone: bool
    submodular_marginals: bool
    concave_curve: bool

    @property
    def ok(self) -> bool:
        return self.normalized and self.monotone and self.submodular_marginals and self.concave_curve


def check_class(v: Valuation) -> ClassDiagnostics:
    if isinstance(v, UnitDemand):
        return ClassDiagnostics(True, bool(np.all(v.weights >= -TOL)), True, True)
    if isinstance(v, MultiUnit):
        d = v.marginals
        return ClassDiagnostics(
            True, bool(np.all(d >= -TOL)), bool(np.all(np.diff(d) <= TOL)), True
        )
    if isinstance(v, Explicit):
        t = v.table
        m = v.m
        monotone = True
        submodular = True
        for mask in range(len(t)):
            for j in range(m):
                bj = 1 << j
                if mask & bj:
                    continue
                gain_j = t[mask | bj] - t[mask]
                if gain_j < -TOL:
                    monotone = False
                for k in range(j + 1, m):
                    bk = 1 << k
                    if mask & bk:
                        continue
                    if t[mask | bj | bk] - t[mask | bk] > gain_j + TOL:
                        submodular = False
        return ClassDiagnostics(abs(t[0]) <= TOL, monotone, submodular, True)
    if isinstance(v, DivisibleSeparable):
        monotone = all(np.all(c.slopes >= -TOL) for c in v.curves)
        concave = all(c.concave for c in v.curves)
        return ClassDiagnostics(True, bool(monotone), True, bool(concave))
    raise ValuationError(f"unsupported valuation {type(v).__name__}")


@dataclass(frozen=True, eq=False)
class Instance:
    """An item universe of size ``m`` and one valuation per agent."""

    m: int
    valuations: tuple
    kind: str = INDIVISIBLE

    def __post_init__(self):
        vals = tuple(self.valuations)
        object.__setattr__(self, "valuations", vals)
        if self.kind not in (INDIVISIBLE, DIVISIBLE):
            raise ValuationError(f"unknown instance kind {self.kind!r}")
        if not vals:
            raise ValuationError("an instance needs at least one agent")
        for v in vals:
            if v.kind != self.kind:
                raise ValuationError(f"{v.class_name} valuation in a {self.kind} instance")
            if v.m != self.m:
                raise ValuationError(f"valuation over {v.m} items in an instance with m={self.m}")

    @property
    def n(self) -> int:
        return len(self.valuations)

    @property
    def class_name(self) -> str:
        names = {v.class_name for v in self.valuations}
        if len(names) != 1:
            return "mixed"
        return names.pop()

    def replace(self, i: int, v: Valuation) -> "Instance":
        vals = list(self.valuations)
        vals[i] = v
        return Instance(self.m, tuple(vals), self.kind)

    def weight_matrix(self) -> np.ndarray:
        return np.array([v.weights for v in self.valuations], dtype=float).reshape(self.n, self.m)

    def marginal_matrix(self) -> np.ndarray:
        return np.array([v.marginals for v in self.valuations], dtype=float).reshape(self.n, self.m)


def unit_demand_instance(weights) -> Instance:
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    return Instance(w.shape[1], tuple(UnitDemand(row) for row in w))


def multi_unit_instance(marginals) -> Instance:
    d = np.atleast_2d(np.asarray(marginals, dtype=float))
    return Instance(d.shape[1], tuple(MultiUnit(row) for row in d))


def single_item_instance(values: Sequence[float]) -> Instance:
    return unit_demand_instance([[float(v)] for v in values])


def explicit_table(v: Valuation) -> np.ndarray:
    """Translate any indivisible valuation into its 2^m value table."""
    if isinstance(v, Explicit):
        return np.array(v.table)
    m = v.m
    table = np.zeros(1 << m)
    for mask in range(1, 1 << m):
        table[mask] = v([j for j in range(m) if mask >> j & 1])
    return table
