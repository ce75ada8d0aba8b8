"""Exact social-welfare maximisation for each supported valuation class."""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import kernels
from .valuations import (
    TOL,
    CopiedItem,
    DivisibleSeparable,
    Explicit,
    MultiUnit,
    UnitDemand,
    ValuationError,
    project_g,
)

EXPLICIT_GUARD = 10**7


class SolverError(ValueError):
    """Raised when a solver receives a profile it cannot handle."""


@dataclass(frozen=True)
class SetAllocation:
    """Per-agent bundles of items (or of CopiedItems in a copies instance)."""

    bundles: tuple

    def check(self) -> None:
        seen = set()
        for bundle in self.bundles:
            if seen & set(bundle):
                raise SolverError("bundles overlap")
            seen |= set(bundle)


@dataclass(frozen=True)
class UnitAllocation:
    """Per-agent unit counts for identical units."""

    counts: tuple
    total_units: int

    def check(self) -> None:
        if min(self.counts, default=0) < 0 or sum(self.counts) > self.total_units:
            raise SolverError("unit counts exceed the supply")


@dataclass(frozen=True, eq=False)
class FractionalAllocation:
    """Per-agent fraction vectors, rows of an n x m matrix."""

    x: np.ndarray

    def check(self) -> None:
        if np.any(self.x < -TOL) or np.any(self.x.sum(axis=0) > 1 + TOL):
            raise SolverError("fractional allocation over-allocates an item")


Allocation = Union[SetAllocation, UnitAllocation, FractionalAllocation]


@dataclass(frozen=True)
class WelfareResult:
    allocation: Allocation
    welfare: float


def _require(profile, cls):
    if not profile or not all(isinstance(v, cls) for v in profile):
        raise SolverError(f"all valuations must be {cls.__name__}")


def _caps_vector(copies, m: int) -> np.ndarray:
    caps = np.broadcast_to(np.asarray(copies, dtype=np.int64), (m,)).copy()
    if np.any(caps < 0):
        raise SolverError("copy counts must be nonnegative")
    return caps


def unit_demand_bundles(assign: np.ndarray, copies: Union[int, Sequence[int]] = 1) -> tuple:
    """Bundles for an assignment vector; copies of an item go out in agent order."""
    as_copies = not (np.isscalar(copies) and int(copies) == 1)
    next_copy = {}
    bundles = []
    for j in assign:
        j = int(j)
        if j < 0:
            bundles.append(frozenset())
        elif as_copies:
            k = next_copy.get(j, 0)
            next_copy[j] = k + 1
            bundles.append(frozenset({CopiedItem(j, k)}))
        else:
            bundles.append(frozenset({j}))
    return tuple(bundles)


def max_welfare_unit_demand(profile: Sequence[UnitDemand], copies_per_item=1) -> WelfareResult:
    """Maximum-weight b-matching with ``copies_per_item`` copies of every item.

    ``copies_per_item`` may be one integer or a per-item sequence. Ties go to the
    lexicographically smallest assignment vector, with "unassigned" ordered
    before item 0.
    """
    _require(profile, UnitDemand)
    w = np.array([v.weights for v in profile], dtype=float)
    caps = _caps_vector(copies_per_item, w.shape[1])
    assign, welfare = kernels.ud_assign(w, caps, np.ones(len(profile), dtype=np.bool_), True, TOL)
    return WelfareResult(SetAllocation(unit_demand_bundles(assign, copies_per_item)), float(welfare))


def max_welfare_multiunit(profile: Sequence[MultiUnit], total_units: int, per_agent_cap=None) -> WelfareResult:
    """Optimal unit counts for nonincreasing marginals (greedy is exact here)."""
    _require(profile, MultiUnit)
    d = np.array([v.marginals for v in profile], dtype=float)
    if np.any(np.diff(d, axis=1) > TOL):
        raise SolverError("marginals must be nonincreasing (submodularity violated)")
    cap = d.shape[1] if per_agent_cap is None else int(per_agent_cap)
    counts, welfare = kernels.mu_counts(d, int(total_units), cap, np.ones(len(profile), dtype=np.bool_))
    return WelfareResult(UnitAllocation(tuple(int(c) for c in counts), int(total_units)), float(welfare))


@functools.lru_cache(maxsize=64)
def _assignment_grid(n: int, m: int) -> np.ndarray:
    # Every map item -> {-1 (nobody), 0..n-1}, in lexicographic order.
    choices = np.arange(-1, n)
    grids = np.meshgrid(*([choices] * m), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1) if m else np.zeros((1, 0), dtype=int)


def explicit_assignment(tables: np.ndarray, available_mask: int = -1):
    """Brute-force optimum over explicit tables; returns (assignment, welfare)."""
    n, size = tables.shape
    m = size.bit_length() - 1
    if n**m > EXPLICIT_GUARD:
        raise SolverError(f"n^m = {n**m} exceeds the brute-force guard")
    grid = _assignment_grid(n, m)
    if available_mask != -1:
        for j in range(m):
            if not available_mask >> j & 1:
                grid = grid[grid[:, j] == -1]
    bits = 1 << np.arange(m)
    total = np.zeros(len(grid))
    for i in range(n):
        masks = ((grid == i) * bits).sum(axis=1)
        total += tables[i][masks]
    best = total.max()
    k = int(np.flatnonzero(total >= best - TOL)[0])
    return grid[k], float(total[k])


def max_welfare_explicit(profile: Sequence[Explicit], available=None) -> WelfareResult:
    """Exhaustive search over item -> agent-or-nobody assignments.

    ``available`` optionally restricts the supply to a subset of items.
    """
    _require(profile, Explicit)
    tables = np.array([v.table for v in profile], dtype=float)
    mask = -1
    if available is not None:
        mask = 0
        for j in available:
            mask |= 1 << int(j)
    assignment, welfare = explicit_assignment(tables, mask)
    bundles = tuple(frozenset(int(j) for j in np.flatnonzero(assignment == i)) for i in range(len(profile)))
    return WelfareResult(SetAllocation(bundles), welfare)


def curve_arrays(profile: Sequence[DivisibleSeparable]):
    """Pack curves into dense (slopes, ends, nseg) arrays for the kernels."""
    n, m = len(profile), profile[0].m
    kmax = max(len(c.slopes) for v in profile for c in v.curves)
    slopes = np.zeros((n, m, kmax))
    ends = np.ones((n, m, kmax))
    nseg = np.zeros((n, m), dtype=np.int64)
    for i, v in enumerate(profile):
        for j, c in enumerate(v.curves):
            if not c.concave:
                raise SolverError("divisible curves must be concave")
            k = len(c.slopes)
            slopes[i, j, :k] = c.slopes
            ends[i, j, :k] = c.breakpoints[1:]
            nseg[i, j] = k
    return slopes, ends, nseg


def _check_q(q: float) -> float:
    if not 0.0 < q <= 1.0:
        raise SolverError("capacity q must lie in (0, 1]")
    return float(q)


def max_welfare_divisible(profile: Sequence[DivisibleSeparable], q: float = 1.0, supply=None) -> WelfareResult:
    """Exact optimum when no agent may take more than ``q`` of any item."""
    _require(profile, DivisibleSeparable)
    q = _check_q(q)
    slopes, ends, nseg = curve_arrays(profile)
    m = profile[0].m
    supply = np.ones(m) if supply is None else np.asarray(supply, dtype=float)
    x, welfare = kernels.div_fill(slopes, ends, nseg, supply, q, np.ones(len(profile), dtype=np.bool_))
    return WelfareResult(FractionalAllocation(x), float(welfare))


def max_welfare(instance, copies: int = 1, q: float = 1.0) -> WelfareResult:
    """Dispatch on the instance's valuation class."""
    profile = instance.valuations
    cls = instance.class_name
    if cls == "unit_demand":
        return max_welfare_unit_demand(profile, copies)
    if cls == "multi_unit":
        return max_welfare_multiunit(profile, instance.m * copies, instance.m)
    if cls == "explicit":
        if copies != 1:
            raise SolverError("explicit valuations are solved on the original items only")
        return max_welfare_explicit(profile)
    if cls == "divisible_separable":
        return max_welfare_divisible(profile, q)
    raise SolverError(f"no welfare solver for class {cls!r}")


def allocation_welfare(instance, allocation: Allocation) -> float:
    """Re-evaluate the welfare of an allocation under ``instance``'s valuations."""
    profile = instance.valuations
    if isinstance(allocation, SetAllocation):
        return float(sum(v(project_g(b)) for v, b in zip(profile, allocation.bundles)))
    if isinstance(allocation, UnitAllocation):
        return float(sum(v.value_of_count(k) for v, k in zip(profile, allocation.counts)))
    if isinstance(allocation, FractionalAllocation):
        return float(sum(v(x) for v, x in zip(profile, allocation.x)))
    raise ValuationError(f"unknown allocation {type(allocation).__name__}")


def allocation_to_json(allocation: Allocation):
    if isinstance(allocation, SetAllocation):
        return [
            sorted([list(e) if isinstance(e, tuple) else int(e) for e in b], key=lambda e: e if isinstance(e, list) else [e])
            for b in allocation.bundles
        ]
    if isinstance(allocation, UnitAllocation):
        return {"counts": list(allocation.counts), "total_units": allocation.total_units}
    if isinstance(allocation, FractionalAllocation):
        return allocation.x.tolist()
    raise ValuationError(f"unknown allocation {type(allocation).__name__}")
