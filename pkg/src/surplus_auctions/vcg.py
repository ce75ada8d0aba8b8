"""VCG with Clarke payments on top of the exact welfare solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .valuations import TOL, CopiedItem, Instance, project_g
from .welfare import (
    FractionalAllocation,
    SetAllocation,
    SolverError,
    UnitAllocation,
    allocation_to_json,
    allocation_welfare,
    curve_arrays,
    explicit_assignment,
    max_welfare,
    unit_demand_bundles,
)


@dataclass(frozen=True, eq=False)
class Outcome:
    """Deterministic allocation plus payments for one realisation."""

    allocation: object
    payments: np.ndarray
    welfare: float
    copies: int = 1
    q: float = 1.0

    @property
    def surplus(self) -> float:
        return self.welfare - float(np.sum(self.payments))

    def to_dict(self) -> dict:
        return {
            "allocation": allocation_to_json(self.allocation),
            "payments": [float(p) for p in self.payments],
            "welfare": self.welfare,
            "surplus": self.surplus,
        }


def agent_value(instance: Instance, i: int, allocation) -> float:
    """Agent i's (reported) value for its share of ``allocation``."""
    v = instance.valuations[i]
    if isinstance(allocation, SetAllocation):
        return v(project_g(allocation.bundles[i]))
    if isinstance(allocation, UnitAllocation):
        return v.value_of_count(allocation.counts[i])
    if isinstance(allocation, FractionalAllocation):
        return v(allocation.x[i])
    raise SolverError(f"unknown allocation {type(allocation).__name__}")


def _sort_key(element):
    return tuple(element) if isinstance(element, tuple) else (element, 0)


def trim_redundant(allocation, profile):
    """Drop every item whose removal leaves its holder's value unchanged.

    Items of a bundle are visited from the highest (item, copy) index down, so
    among interchangeable copies the lowest-indexed one survives.
    """
    if isinstance(allocation, SetAllocation):
        bundles = []
        for v, bundle in zip(profile, allocation.bundles):
            kept = set(bundle)
            for element in sorted(bundle, key=_sort_key, reverse=True):
                rest = kept - {element}
                if v(project_g(rest)) >= v(project_g(kept)) - TOL:
                    kept = rest
            bundles.append(frozenset(kept))
        return SetAllocation(tuple(bundles))
    if isinstance(allocation, UnitAllocation):
        counts = []
        for v, k in zip(profile, allocation.counts):
            while k > 0 and v.marginals[k - 1] <= TOL:
                k -= 1
            counts.append(k)
        return UnitAllocation(tuple(counts), allocation.total_units)
    return allocation


def _others_welfare(instance: Instance, i: int, copies: int, q: float, removed=None) -> float:
    """SW of N minus agent i, optionally with agent i's bundle taken out of the supply."""
    cls = instance.class_name
    n, m = instance.n, instance.m
    active = np.ones(n, dtype=np.bool_)
    active[i] = False
    if cls == "unit_demand":
        caps = np.full(m, copies, dtype=np.int64)
        for j in project_g(removed or ()):
            caps[j] -= 1
        return float(kernels.ud_assign(instance.weight_matrix(), caps, active, False, TOL)[1])
    if cls == "multi_unit":
        units = m * copies - (removed or 0)
        return float(kernels.mu_counts(instance.marginal_matrix(), units, m, active)[1])
    if cls == "explicit":
        if n == 1:
            return 0.0
        tables = np.array([v.table for k, v in enumerate(instance.valuations) if k != i])
        mask = (1 << m) - 1
        for j in removed or ():
            mask &= ~(1 << j)
        return explicit_assignment(tables, mask)[1]
    if cls == "divisible_separable":
        slopes, ends, nseg = curve_arrays(instance.valuations)
        supply = np.ones(m) if removed is None else np.maximum(1.0 - removed, 0.0)
        return float(kernels.div_fill(slopes, ends, nseg, supply, q, active)[1])
    raise SolverError(f"no VCG support for class {cls!r}")


def _removed_part(allocation, i):
    if isinstance(allocation, SetAllocation):
        return allocation.bundles[i]
    if isinstance(allocation, UnitAllocation):
        return allocation.counts[i]
    return allocation.x[i]


def clarke_payments(instance: Instance, allocation, copies: int = 1, q: float = 1.0) -> np.ndarray:
    """p_i = SW(N-i, supply) - SW(N-i, supply minus A_i), two solves per agent."""
    payments = np.zeros(instance.n)
    for i in range(instance.n):
        part = _removed_part(allocation, i)
        if isinstance(part, np.ndarray):
            if not np.any(part > 0):
                continue
        elif not part:
            continue
        full = _others_welfare(instance, i, copies, q)
        rest = _others_welfare(instance, i, copies, q, removed=part)
        payments[i] = max(full - rest, 0.0)
    return payments


def run_vcg(instance: Instance, copies: int = 1, q: float = 1.0) -> Outcome:
    """VCG on the instance with ``copies`` copies of each item, or with every
    agent capped at fraction ``q`` of each divisible item.

    The efficient allocation is trimmed of redundant items before payments.
    Unit-demand bundles hold CopiedItems whenever ``copies > 1``.
    """
    cls = instance.class_name
    copies = int(copies)
    if copies < 1:
        raise SolverError("copies must be at least 1")
    if cls == "unit_demand":
        caps = np.full(instance.m, copies, dtype=np.int64)
        assign, welfare, payments = kernels.ud_vcg(instance.weight_matrix(), caps, TOL)
        allocation = SetAllocation(unit_demand_bundles(assign, copies))
    elif cls == "multi_unit":
        counts, welfare, payments = kernels.mu_vcg(instance.marginal_matrix(), instance.m * copies, instance.m)
        allocation = UnitAllocation(tuple(int(c) for c in counts), instance.m * copies)
    elif cls == "divisible_separable":
        if not 0.0 < q <= 1.0:
            raise SolverError("capacity q must lie in (0, 1]")
        slopes, ends, nseg = curve_arrays(instance.valuations)
        x, welfare, payments = kernels.div_vcg(slopes, ends, nseg, float(q))
        allocation = FractionalAllocation(x)
    else:
        result = max_welfare(instance, copies, q)
        allocation, welfare, payments = result.allocation, result.welfare, None
    trimmed = trim_redundant(allocation, instance.valuations)
    if payments is None or trimmed != allocation:
        allocation = trimmed
        welfare = allocation_welfare(instance, allocation)
        payments = clarke_payments(instance, allocation, copies, q)
    return Outcome(allocation, np.asarray(payments, dtype=float), float(welfare), copies, float(q))


def clarke_payment_crosscheck(instance: Instance, outcome: Outcome, tol: float = TOL) -> bool:
    """Compare each payment with the pivot form SW(N-i) - (SW(N) - v_i(A_i))."""
    for i in range(instance.n):
        value = agent_value(instance, i, outcome.allocation)
        pivot = _others_welfare(instance, i, outcome.copies, outcome.q) - (outcome.welfare - value)
        if abs(pivot - outcome.payments[i]) > tol:
            return False
    return True


@dataclass(frozen=True)
class IntervalAllocation:
    """Consecutive intervals over the copy-major order (item, copy) -> copy*m + item."""

    intervals: tuple
    m: int
    copies: int

    @property
    def unallocated(self) -> tuple:
        end = max((hi for _, hi in self.intervals), default=0)
        return (end, self.m * self.copies)

    def bundle(self, i: int) -> frozenset:
        lo, hi = self.intervals[i]
        return frozenset(CopiedItem(p % self.m, p // self.m) for p in range(lo, hi))

    def copies_touched(self, i: int) -> range:
        lo, hi = self.intervals[i]
        if hi <= lo:
            return range(0)
        return range(lo // self.m, (hi - 1) // self.m + 1)


def run_vcg_multiunit_sequential(instance: Instance, ell: int):
    """VCG on the 2^ell copies instance with agents laid out as consecutive intervals.

    Returns ``(IntervalAllocation, payments, welfare)``.
    """
    if instance.class_name != "multi_unit":
        raise SolverError("sequential layout requires multi-unit valuations")
    copies = 1 << int(ell)
    m = instance.m
    counts, welfare, payments = kernels.mu_vcg(instance.marginal_matrix(), m * copies, m)
    intervals = []
    at = 0
    for k in counts:
        intervals.append((at, at + int(k)))
        at += int(k)
    return IntervalAllocation(tuple(intervals), m, copies), np.asarray(payments, dtype=float), float(welfare)
