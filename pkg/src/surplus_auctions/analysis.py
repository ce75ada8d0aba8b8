"""Surplus accounting, truthfulness and IR audits, and inequality verifiers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .formats import instance_digest
from .mechanisms import MechanismDistribution, restricted_capacity_vcg, vcg_with_copies
from .valuations import TOL, Instance, UnitDemand
from .vcg import run_vcg
from .welfare import max_welfare


@dataclass(frozen=True)
class SurplusReport:
    expected_welfare: float
    expected_payments: float
    expected_surplus: float
    first_best: float

    @property
    def ratio(self) -> float:
        """first_best / expected_surplus (1 when both vanish)."""
        if self.expected_surplus > 0:
            return self.first_best / self.expected_surplus
        return 1.0 if self.first_best <= TOL else math.inf

    def to_dict(self) -> dict:
        return {
            "expected_welfare": self.expected_welfare,
            "expected_payments": self.expected_payments,
            "expected_surplus": self.expected_surplus,
            "first_best": self.first_best,
            "ratio": self.ratio,
        }


def agent_utilities(dist: MechanismDistribution, true_profile, by_branch: bool = False):
    """Expected utility of every agent under its true valuation.

    With ``by_branch`` the result is an array of shape (branches, n) holding
    utilities conditioned on each branch.
    """
    n = len(true_profile)
    if dist.n != n:
        raise ValueError(f"distribution has {dist.n} agents, profile has {n}")
    rows = []
    for b in dist.branches:
        row = np.zeros(n)
        for i, prizes in enumerate(b.lottery):
            v = true_profile[i]
            row[i] = sum(float(p.probability) * (v(p.bundle) - p.payment) for p in prizes)
        rows.append(row)
    rows = np.array(rows)
    if by_branch:
        return rows
    weights = np.array([float(b.weight) for b in dist.branches])
    return weights @ rows


def expected_surplus(dist: MechanismDistribution, true_profile, first_best: Optional[float] = None) -> SurplusReport:
    """Exact expected welfare, payments and surplus of ``dist`` under the true profile.

    ``true_profile`` is an Instance or a sequence of valuations. When the first
    best is not supplied it is solved for, which needs an Instance.
    """
    profile = true_profile.valuations if isinstance(true_profile, Instance) else tuple(true_profile)
    if dist.n != len(profile):
        raise ValueError(f"distribution has {dist.n} agents, profile has {len(profile)}")
    welfare = payments = 0.0
    for b in dist.branches:
        w = float(b.weight)
        for i, prizes in enumerate(b.lottery):
            for p in prizes:
                prob = w * float(p.probability)
                welfare += prob * profile[i](p.bundle)
                payments += prob * p.payment
    if first_best is None:
        if not isinstance(true_profile, Instance):
            raise ValueError("pass first_best or an Instance")
        first_best = max_welfare(true_profile).welfare
    return SurplusReport(welfare, payments, welfare - payments, float(first_best))


def benchmark_G(v1: float, v2: float) -> float:
    """max(v_hi - v_lo, (v_hi + v_lo) / 2) for two bidders on one item."""
    if v1 < 0 or v2 < 0:
        raise ValueError("values must be nonnegative")
    hi, lo = max(v1, v2), min(v1, v2)
    return max(hi - lo, (hi + lo) / 2)


def benchmark_G_array(v: np.ndarray) -> np.ndarray:
    """Vectorised ``benchmark_G`` over rows of an (k, 2) array."""
    hi, lo = v.max(axis=1), v.min(axis=1)
    return np.maximum(hi - lo, (hi + lo) / 2)


# ---------------------------------------------------------------- audits

SCALINGS = (0.0, 0.25, 0.5, 2.0, 4.0)


@dataclass(frozen=True)
class AuditReport:
    mechanism: str
    instance: str
    deviations: int
    max_gain: float
    max_branch_gain: float
    worst: Optional[tuple] = None  # (agent, reported params) of the best deviation
    branchwise: bool = False
    tol: float = TOL
    epir: bool = True  # every distribution met was ex-post IR for its reports

    @property
    def passed(self) -> bool:
        if self.max_gain > self.tol:
            return False
        return not self.branchwise or self.max_branch_gain <= self.tol

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "instance": self.instance,
            "deviations": self.deviations,
            "max_gain": self.max_gain,
            "max_branch_gain": self.max_branch_gain,
            "epir": self.epir,
            "pass": self.passed,
        }


def misreports(v, count: int, rng: np.random.Generator) -> list:
    """Same-class misreports of ``v``: scalings of the whole parameter vector,
    scalings of single parameters, then uniform random draws.

    Roughly half of ``count`` is structured, the rest random.
    """
    params = np.asarray(v.params(), dtype=float)
    structured = [params * s for s in SCALINGS]
    singles = []
    for k in range(len(params)):
        for s in SCALINGS:
            p = params.copy()
            p[k] = p[k] * s if p[k] > 0 else s
            singles.append(p)
    if singles:
        order = rng.permutation(len(singles))
        structured += [singles[k] for k in order]
    n_struct = min(len(structured), (count + 1) // 2)
    reports = structured[:n_struct]
    top = 2.0 * float(params.max(initial=0.0)) + 1.0
    while len(reports) < count:
        reports.append(rng.uniform(0.0, top, size=len(params)))
    return [v.with_params(p) for p in reports]


def audit_tie(
    mechanism: Callable[[Instance], MechanismDistribution],
    instance: Instance,
    deviation_count: int = 20,
    seed: int = 0,
    extra_reports: Sequence = (),
    name: str = "",
    branchwise: bool = False,
    tol: float = TOL,
) -> AuditReport:
    """Largest expected-utility gain any agent gets from a sampled misreport.

    ``extra_reports`` holds (agent, valuation) pairs tried on top of the
    generated ones. Gains are also computed branch by branch (conditioned on
    the mechanism's outer draw); ``branchwise`` makes those count toward pass.
    Every distribution computed along the way is also checked for ex-post IR
    with respect to the reports it was computed from.
    """
    rng = np.random.default_rng(seed)
    truth = mechanism(instance)
    base = agent_utilities(truth, instance.valuations)
    base_branch = agent_utilities(truth, instance.valuations, by_branch=True)
    epir = audit_epir(truth, instance, tol)
    trials = []
    for i, v in enumerate(instance.valuations):
        trials += [(i, r) for r in misreports(v, deviation_count, rng)]
    trials += list(extra_reports)
    max_gain = max_branch = -math.inf
    worst = None
    for i, report in trials:
        reported = instance.replace(i, report)
        dist = mechanism(reported)
        epir = epir and audit_epir(dist, reported, tol)
        gain = agent_utilities(dist, instance.valuations)[i] - base[i]
        if gain > max_gain:
            max_gain, worst = gain, (i, tuple(np.asarray(report.params()).tolist()))
        if len(dist.branches) == len(truth.branches):
            rows = agent_utilities(dist, instance.valuations, by_branch=True)
            max_branch = max(max_branch, float(np.max(rows[:, i] - base_branch[:, i])))
    if not trials:
        max_gain = max_branch = 0.0
    return AuditReport(
        name, instance_digest(instance), len(trials), float(max_gain), float(max_branch), worst, branchwise, tol, epir
    )


def audit_epir(dist: MechanismDistribution, true_profile, tol: float = TOL) -> bool:
    """True iff every support triple leaves its agent nonnegative utility."""
    profile = true_profile.valuations if isinstance(true_profile, Instance) else tuple(true_profile)
    for b in dist.branches:
        for i, prizes in enumerate(b.lottery):
            for p in prizes:
                if profile[i](p.bundle) - p.payment < -tol:
                    return False
    return True


# ---------------------------------------------------------------- verifiers


class Check(NamedTuple):
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    def holds(self, tol: float = TOL) -> bool:
        return self.margin >= -tol


def copies_payment_sides(instance: Instance, ell: int) -> Check:
    """(SW(2I) - SW(I), p(2I) / 2) for I = 2^ell copies of every item."""
    if instance.class_name not in ("unit_demand", "multi_unit"):
        raise ValueError("the copies payment claim needs unit-demand or multi-unit valuations")
    copies = 1 << ell
    sw = max_welfare(instance, copies).welfare
    doubled = run_vcg(instance, copies=2 * copies)
    return Check(doubled.welfare - sw, float(doubled.payments.sum()) / 2)


def verify_copies_payment_claim(instance: Instance, ell: int = 0, tol: float = TOL) -> bool:
    return copies_payment_sides(instance, ell).holds(tol)


def surplus_lower_bound_sides(instance: Instance, r: int, q=None, subroutine: Optional[str] = None) -> Check:
    """(exact expected surplus of VCG with copies, (q/(r+1))(SW(1) - SW(2^r)/2^r))."""
    dist = vcg_with_copies(instance, r, q, subroutine)
    q_used = float(q) if q is not None else (1.0 if instance.class_name == "unit_demand" else 0.5)
    surplus = expected_surplus(dist, instance, first_best=0.0).expected_surplus
    sw1 = max_welfare(instance, 1).welfare
    swr = max_welfare(instance, 1 << r).welfare
    return Check(surplus, q_used / (r + 1) * (sw1 - swr / (1 << r)))


def verify_surplus_lower_bound(instance: Instance, r: int, q=None, subroutine: Optional[str] = None, tol: float = TOL) -> bool:
    return surplus_lower_bound_sides(instance, r, q, subroutine).holds(tol)


def divisible_payment_sides(instance: Instance, q: float) -> Check:
    """(SW(q) - SW(2q) / 2, p(q) / 2) for capped divisible instances."""
    if q > 0.5 + TOL:
        raise ValueError("the divisible payment claim needs q <= 1/2")
    outcome = run_vcg(instance, q=q)
    doubled = max_welfare(instance, q=min(2 * q, 1.0)).welfare
    return Check(outcome.welfare - doubled / 2, float(outcome.payments.sum()) / 2)


def verify_divisible_payment_claim(instance: Instance, q: float, tol: float = TOL) -> bool:
    return divisible_payment_sides(instance, q).holds(tol)


def restricted_capacity_bound_sides(instance: Instance, r: int) -> Check:
    """(exact expected surplus of restricted capacity VCG, SW(cap 1) / (2(r+1)))."""
    dist = restricted_capacity_vcg(instance, r)
    surplus = expected_surplus(dist, instance, first_best=0.0).expected_surplus
    return Check(surplus, max_welfare(instance).welfare / (2 * (r + 1)))


# ---------------------------------------------------------------- identities


def binomial_inverse_expectation(n: int, m: int) -> float:
    """E[1 / (1 + Bin(n-1, 1/m))] = (m/n)(1 - (1 - 1/m)^n)."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    return m / n * (1.0 - (1.0 - 1.0 / m) ** n)


def binomial_inverse_mc(n: int, m: int, samples: int, rng: np.random.Generator):
    """Monte-Carlo estimate of E[1/(1+Bin(n-1,1/m))]; returns (mean, stderr)."""
    x = 1.0 / (1.0 + rng.binomial(n - 1, 1.0 / m, size=samples))
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0


def favorite_item(valuation: UnitDemand, tiebreak: Optional[Sequence[int]] = None) -> int:
    """Highest-weight item; ties go to the item met first in ``tiebreak``
    (identity order by default)."""
    w = valuation.weights
    order = range(len(w)) if tiebreak is None else tiebreak
    best = None
    for j in order:
        if best is None or w[j] > w[best]:
            best = j
    return int(best)
