"""Randomised surplus mechanisms as exact finite-support distributions.

A distribution is a list of weighted branches (one per draw of the number of
copies, or per coin of a two-agent mechanism). Inside a branch every agent
holds a lottery of ``Prize(probability, bundle, payment)`` triples and gets
the empty bundle for free with the remaining probability. Only per-agent
marginals are kept: surplus and utilities are linear in them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, NamedTuple, Optional

import numpy as np

from .valuations import Instance, project_g
from .vcg import IntervalAllocation, run_vcg, run_vcg_multiunit_sequential
from .welfare import FractionalAllocation, SetAllocation


class MechanismError(ValueError):
    """Raised when a mechanism is applied outside its domain."""


class Prize(NamedTuple):
    probability: Fraction
    bundle: object
    payment: float


AgentLottery = tuple  # tuple (per agent) of tuples of Prize


@dataclass(frozen=True)
class Branch:
    weight: Fraction
    lottery: AgentLottery
    label: str = ""


@dataclass(frozen=True)
class MechanismDistribution:
    branches: tuple
    n: int

    def __post_init__(self):
        total = sum(b.weight for b in self.branches)
        if total != 1:
            raise MechanismError(f"branch weights sum to {total}, not 1")
        for b in self.branches:
            for prizes in b.lottery:
                if sum(p.probability for p in prizes) > 1:
                    raise MechanismError("an agent lottery has total probability above 1")

    def flat(self):
        """Per-agent list of prizes with probabilities unconditioned on the branch."""
        out = [[] for _ in range(self.n)]
        for b in self.branches:
            for i, prizes in enumerate(b.lottery):
                for p in prizes:
                    out[i].append(Prize(b.weight * p.probability, p.bundle, p.payment))
        return out

    def serving_probability(self, i: int) -> Fraction:
        return sum((p.probability for p in self.flat()[i]), Fraction(0))


def _empty_lottery(n: int):
    return tuple(() for _ in range(n))


def _deterministic(n: int, bundles, payments):
    prizes = []
    for bundle, pay in zip(bundles, payments):
        prizes.append((Prize(Fraction(1), bundle, float(pay)),))
    return tuple(prizes)


def _as_fraction(q) -> Fraction:
    return q if isinstance(q, Fraction) else Fraction(str(q))


def default_r(n: int) -> int:
    """r = ceil(2 log2 n), the worst-case setting of the copies parameter."""
    return 0 if n <= 1 else math.ceil(2 * math.log2(n))


def bayesian_r(n: int, m: int) -> int:
    """r = ceil(log2((2e/(e-1)) * max(1, n/m))) for i.i.d. unit-demand buyers."""
    e = math.e
    return math.ceil(math.log2(2 * e / (e - 1) * max(1.0, n / m)))


def subroutine_unit_demand(outcome, ell: int, q=1) -> AgentLottery:
    """Pick one copy of every item uniformly; its holder gets the item.

    An agent holding copy (j, k) is served {j} at its VCG price with probability
    q / 2^ell (q < 1 adds an independent thinning coin).
    """
    q = _as_fraction(q)
    if not 0 < q <= 1:
        raise MechanismError("unit-demand subroutine needs q in (0, 1]")
    prob = q / (1 << ell)
    lottery = []
    for bundle, pay in zip(outcome.allocation.bundles, outcome.payments):
        items = project_g(bundle)
        if len(bundle) > 1:
            raise MechanismError("an agent holds two items in a unit-demand allocation")
        lottery.append((Prize(prob, items, float(pay)),) if items else ())
    return tuple(lottery)


def rounding_sets(layout: IntervalAllocation):
    """For every copy t, the agents served wholly inside copy t (S_t) and the at
    most one agent straddling copies t and t+1 (S'_t)."""
    sets = []
    for t in range(layout.copies):
        inside, straddle = [], []
        for i in range(len(layout.intervals)):
            touched = layout.copies_touched(i)
            if len(touched) == 1 and touched[0] == t:
                inside.append(i)
            elif len(touched) == 2 and touched[0] == t:
                straddle.append(i)
            elif len(touched) > 2:
                raise MechanismError("an interval spans more than two copies")
        if len(straddle) > 1:
            raise MechanismError(f"|S'_{t}| = {len(straddle)} > 1: interval layout broken")
        sets.append((tuple(inside), tuple(straddle)))
    return sets


def subroutine_multiunit(layout: IntervalAllocation, payments, ell: int, q=Fraction(1, 2)) -> AgentLottery:
    """Uniform copy t, then a fair coin between serving all of S_t or S'_t.

    Served agents get g(A_i') at their VCG price; every allocated agent ends up
    served with probability 1 / (2 * 2^ell) (times 2q when q < 1/2).
    """
    q = _as_fraction(q)
    if not 0 < q <= Fraction(1, 2):
        raise MechanismError("multi-unit subroutine needs q in (0, 1/2]")
    copies = 1 << ell
    if layout.copies != copies:
        raise MechanismError("layout does not match ell")
    step = Fraction(1, copies) * Fraction(1, 2) * (2 * q)
    prob = [Fraction(0)] * len(layout.intervals)
    for inside, straddle in rounding_sets(layout):
        for i in inside + straddle:
            prob[i] += step
    lottery = []
    for i, pay in enumerate(payments):
        if prob[i] == 0:
            lottery.append(())
        else:
            lottery.append((Prize(prob[i], project_g(layout.bundle(i)), float(pay)),))
    return tuple(lottery)


def vcg_with_copies(instance: Instance, r: Optional[int] = None, q=None, subroutine: Optional[str] = None) -> MechanismDistribution:
    """Draw ell uniformly from {0..r}, run VCG on 2^ell copies of every item,
    then round back to one copy with the class-specific subroutine."""
    cls = instance.class_name
    subroutine = subroutine or cls
    if subroutine != cls or subroutine not in ("unit_demand", "multi_unit"):
        raise MechanismError(f"subroutine {subroutine!r} does not fit {cls} valuations")
    r = default_r(instance.n) if r is None else int(r)
    if r < 0:
        raise MechanismError("r must be nonnegative")
    if q is None:
        q = Fraction(1) if subroutine == "unit_demand" else Fraction(1, 2)
    weight = Fraction(1, r + 1)
    branches = []
    for ell in range(r + 1):
        if subroutine == "unit_demand":
            outcome = run_vcg(instance, copies=1 << ell)
            lottery = subroutine_unit_demand(outcome, ell, q)
        else:
            layout, payments, _ = run_vcg_multiunit_sequential(instance, ell)
            lottery = subroutine_multiunit(layout, payments, ell, q)
        branches.append(Branch(weight, lottery, f"ell={ell}"))
    return MechanismDistribution(tuple(branches), instance.n)


def restricted_capacity_vcg(instance: Instance, r: Optional[int] = None) -> MechanismDistribution:
    """Draw ell from {0..r} and run VCG with every agent capped at 2^-ell of each item."""
    if instance.class_name != "divisible_separable":
        raise MechanismError("restricted capacity VCG needs divisible valuations")
    n = instance.n
    r = (0 if n <= 1 else math.ceil(math.log2(n))) if r is None else int(r)
    weight = Fraction(1, r + 1)
    branches = []
    for ell in range(r + 1):
        outcome = run_vcg(instance, q=2.0**-ell)
        lottery = _deterministic(n, list(outcome.allocation.x), outcome.payments)
        branches.append(Branch(weight, lottery, f"q=2^-{ell}"))
    return MechanismDistribution(tuple(branches), n)


def _grand_bundle(instance: Instance):
    if instance.kind == "divisible":
        return np.ones(instance.m)
    return frozenset(range(instance.m))


def _grand_bundle_to(instance: Instance, winner: int, price: float = 0.0):
    lottery = [()] * instance.n
    lottery[winner] = (Prize(Fraction(1), _grand_bundle(instance), price),)
    return tuple(lottery)


def _outcome_lottery(instance: Instance, outcome):
    alloc = outcome.allocation
    if isinstance(alloc, FractionalAllocation):
        bundles = list(alloc.x)
    elif isinstance(alloc, SetAllocation):
        bundles = [project_g(b) for b in alloc.bundles]
    else:
        bundles = [frozenset(range(k)) for k in alloc.counts]
    lottery = []
    for bundle, pay in zip(bundles, outcome.payments):
        empty = (not np.any(bundle)) if isinstance(bundle, np.ndarray) else not bundle
        lottery.append(() if empty else (Prize(Fraction(1), bundle, float(pay)),))
    return tuple(lottery)


def two_agent_grand_bundle(instance: Instance) -> MechanismDistribution:
    """VCG, grand bundle to agent 1 for free, or grand bundle to agent 2 for free,
    one third each."""
    if instance.n != 2:
        raise MechanismError("this mechanism is defined for exactly two agents")
    third = Fraction(1, 3)
    branches = (
        Branch(third, _outcome_lottery(instance, run_vcg(instance)), "vcg"),
        Branch(third, _grand_bundle_to(instance, 0), "bundle-to-0"),
        Branch(third, _grand_bundle_to(instance, 1), "bundle-to-1"),
    )
    return MechanismDistribution(branches, 2)


def two_agent_single_item_G(v1: float, v2: float) -> MechanismDistribution:
    """Two bidders, one item; 4/5-competitive with the benchmark max(v1-v2, (v1+v2)/2)."""
    values = (float(v1), float(v2))
    if min(values) < 0:
        raise MechanismError("values must be nonnegative")
    hi, lo = sorted(range(2), key=lambda i: -values[i])  # stable: ties keep index order
    vh, vl = values[hi], values[lo]
    item = frozenset({0})
    lottery = [None, None]
    if vh > 3 * vl:
        lottery[hi] = (Prize(Fraction(4, 5), item, 5 * vl / 4),)
        lottery[lo] = (Prize(Fraction(1, 5), item, 0.0),)
    else:
        lottery[hi] = (Prize(Fraction(1, 2), item, vl / 5),)
        lottery[lo] = (Prize(Fraction(1, 2), item, vh / 5),)
    return MechanismDistribution((Branch(Fraction(1), tuple(lottery), "G-optimal"),), 2)


def _single_values(instance: Instance):
    if instance.n != 2 or instance.m != 1 or instance.class_name != "unit_demand":
        raise MechanismError("expected two unit-demand bidders over a single item")
    return instance.weight_matrix()[:, 0]


def g_optimal(instance: Instance) -> MechanismDistribution:
    """``two_agent_single_item_G`` on a two-agent, one-item instance."""
    v = _single_values(instance)
    return two_agent_single_item_G(v[0], v[1])


def random_allocation(instance: Instance) -> MechanismDistribution:
    """Grand bundle to a uniformly random agent, free of charge."""
    n = instance.n
    share = Fraction(1, n)
    bundle = _grand_bundle(instance)
    lottery = tuple((Prize(share, bundle, 0.0),) for _ in range(n))
    return MechanismDistribution((Branch(Fraction(1), lottery, "random"),), n)


def vcg_mechanism(instance: Instance) -> MechanismDistribution:
    """Plain deterministic VCG wrapped as a one-branch distribution."""
    outcome = run_vcg(instance)
    return MechanismDistribution((Branch(Fraction(1), _outcome_lottery(instance, outcome), "vcg"),), instance.n)


def first_price_grand_bundle(instance: Instance) -> MechanismDistribution:
    """Deliberately non-truthful control: highest grand-bundle bid wins and pays it."""
    bundle = _grand_bundle(instance)
    bids = [v(bundle) for v in instance.valuations]
    winner = int(np.argmax(bids))
    lottery = _grand_bundle_to(instance, winner, bids[winner])
    return MechanismDistribution((Branch(Fraction(1), lottery, "first-price"),), instance.n)


MECHANISM_NAMES = (
    "vcg_copies",
    "restricted_capacity",
    "two_agent_bundle",
    "two_agent_G",
    "random_allocation",
    "vcg",
    "first_price",
)


def mechanism_from_config(config: dict, n: Optional[int] = None, m: Optional[int] = None) -> Callable[[Instance], MechanismDistribution]:
    """Build ``instance -> distribution`` from a mechanism config dict.

    ``r`` may be an integer, ``"default"`` (ceil(2 log2 n)) or ``"bayesian"``.
    """
    name = config.get("mechanism")
    if name == "vcg_copies":
        r_spec = config.get("r", "default")
        q = config.get("q")
        q = None if q is None else _as_fraction(q)
        subroutine = config.get("subroutine")

        def run(instance):
            if r_spec == "bayesian":
                r = bayesian_r(instance.n, instance.m)
            elif r_spec in (None, "default"):
                r = default_r(instance.n)
            else:
                r = int(r_spec)
            return vcg_with_copies(instance, r, q, subroutine)

        return run
    if name == "restricted_capacity":
        r_spec = config.get("r", "default")
        return lambda instance: restricted_capacity_vcg(instance, None if r_spec in (None, "default") else int(r_spec))
    if name == "two_agent_bundle":
        return two_agent_grand_bundle
    if name == "two_agent_G":
        return g_optimal
    if name == "random_allocation":
        return random_allocation
    if name == "vcg":
        return vcg_mechanism
    if name == "first_price":
        return first_price_grand_bundle
    raise MechanismError(f"unknown mechanism {name!r}; expected one of {MECHANISM_NAMES}")
