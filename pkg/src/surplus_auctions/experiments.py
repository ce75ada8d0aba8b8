"""Instance generators and Monte-Carlo estimation of mechanism surplus.

Randomness comes from a Philox generator keyed by (seed, block), where a block
is a fixed run of CHUNK consecutive trials. Every trial consumes a fixed number
of draws, so its values depend only on (seed, trial) and never on how blocks
are spread across threads.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .analysis import benchmark_G_array, expected_surplus
from .mechanisms import mechanism_from_config
from .valuations import DIVISIBLE, Curve, DivisibleSeparable, Explicit, Instance, MultiUnit, UnitDemand, monotone_closure
from .welfare import max_welfare

FAMILIES = ("exp_single_item", "iid_unit_demand", "additive_divisible_lb", "single_item_interest_lb")
CSV_COLUMNS = ("n", "m", "trials", "mean_surplus", "se_surplus", "mean_welfare", "se_welfare", "ratio")
CHUNK = 256


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for one block of trials; the 128-bit key packs (seed, block)."""
    key = (int(seed) & (2**64 - 1)) | (int(block) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def exponential(rng: np.random.Generator, size) -> np.ndarray:
    """Exp(1) draws by inverse CDF."""
    return -np.log1p(-rng.random(size))


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    n: int
    m: int = 1
    seed: int = 0
    # Optional discrete value table for iid_unit_demand: (values, probabilities).
    discrete: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be at least 1")


def draw_values(spec: GeneratorSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """Raw value draws of ``count`` consecutive trials, one leading row per trial."""
    if spec.family == "iid_unit_demand":
        shape = (count, spec.n, spec.m)
        if spec.discrete is not None:
            values, probs = spec.discrete
            return rng.choice(np.asarray(values, dtype=float), size=shape, p=probs)
        return exponential(rng, shape)
    # The other families draw one Exp(1) number per agent.
    return exponential(rng, (count, spec.n))


def draw_block(spec: GeneratorSpec, block: int) -> np.ndarray:
    return draw_values(spec, block_rng(spec.seed, block), CHUNK)


def build_instance(spec: GeneratorSpec, values: np.ndarray) -> Instance:
    n, m = spec.n, spec.m
    if spec.family == "exp_single_item":
        return Instance(1, tuple(UnitDemand([x]) for x in values))
    if spec.family == "iid_unit_demand":
        return Instance(m, tuple(UnitDemand(row) for row in values))
    if spec.family == "additive_divisible_lb":
        return Instance(m, tuple(DivisibleSeparable.linear([s] * m) for s in values), DIVISIBLE)
    w = np.zeros((n, m))
    w[:, 0] = values
    return Instance(m, tuple(UnitDemand(row) for row in w))


def gen_instance(spec: GeneratorSpec, trial: int = 0):
    """Instance for ``trial`` of ``spec``, plus its raw value draws."""
    values = draw_block(spec, trial // CHUNK)[trial % CHUNK]
    return build_instance(spec, values), values


def _mean_se(x: np.ndarray):
    k = len(x)
    mean = float(np.sum(x) / k)
    se = float(np.std(x, ddof=1) / math.sqrt(k)) if k > 1 else 0.0
    return mean, se


@dataclass(frozen=True)
class ExperimentReport:
    n: int
    m: int
    trials: int
    mean_surplus: float
    se_surplus: float
    mean_welfare: float
    se_welfare: float
    mean_G: Optional[float] = None
    se_G: Optional[float] = None
    samples: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def ratio(self) -> float:
        return self.mean_welfare / self.mean_surplus if self.mean_surplus > 0 else math.inf

    @property
    def ci_surplus(self) -> float:
        return 1.96 * self.se_surplus

    @property
    def ci_welfare(self) -> float:
        return 1.96 * self.se_welfare

    def row(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "trials": self.trials,
            "mean_surplus": repr(self.mean_surplus),
            "se_surplus": repr(self.se_surplus),
            "mean_welfare": repr(self.mean_welfare),
            "se_welfare": repr(self.se_welfare),
            "ratio": repr(self.ratio),
        }

    def to_dict(self) -> dict:
        out = {
            "n": self.n,
            "m": self.m,
            "trials": self.trials,
            "mean_surplus": self.mean_surplus,
            "se_surplus": self.se_surplus,
            "ci_surplus": self.ci_surplus,
            "mean_welfare": self.mean_welfare,
            "se_welfare": self.se_welfare,
            "ci_welfare": self.ci_welfare,
            "ratio": self.ratio,
        }
        if self.mean_G is not None:
            out.update(mean_G=self.mean_G, se_G=self.se_G, ci_G=1.96 * self.se_G)
        return out


def thread_count() -> int:
    cap = os.environ.get("SURPLUS_AUCTIONS_THREADS", "").strip()
    default = os.cpu_count() or 1
    return max(1, min(int(cap), default)) if cap else default


def _single_item_batch(name):
    # Closed forms of exact per-trial expected surplus on one-item instances,
    # evaluated on a (trials, n) value matrix. Kept in step with the
    # distribution code by tests comparing both paths.
    if name == "random_allocation":
        return lambda v: v.mean(axis=1)
    if name == "vcg":
        return lambda v: v.max(axis=1) - (np.sort(v, axis=1)[:, -2] if v.shape[1] > 1 else 0.0)
    return None


def batch_evaluator(config, spec: GeneratorSpec):
    """Vectorised (surplus, first best) per trial, when one exists for this pair."""
    if not isinstance(config, dict) or spec.family != "exp_single_item":
        return None
    surplus = _single_item_batch(config.get("mechanism"))
    if surplus is None:
        return None
    return lambda v: np.stack([surplus(v), v.max(axis=1)], axis=1)


def _run_block(mechanism, batch, spec, block, trials):
    start = block * CHUNK
    count = min(CHUNK, trials - start)
    values = draw_block(spec, block)[:count]
    if batch is not None:
        return batch(values), values
    out = np.empty((count, 2))
    for k in range(count):
        instance = build_instance(spec, values[k])
        fb = max_welfare(instance).welfare
        report = expected_surplus(mechanism(instance), instance, first_best=fb)
        out[k] = report.expected_surplus, fb
    return out, values


def monte_carlo(
    mechanism: Union[dict, Callable],
    spec: GeneratorSpec,
    trials: int,
    threads: Optional[int] = None,
    vectorise: bool = True,
) -> ExperimentReport:
    """Exact expected surplus and first best per trial, averaged over trials.

    ``mechanism`` is a config dict or an ``instance -> distribution`` callable.
    Trials run in blocks on a thread pool (capped by SURPLUS_AUCTIONS_THREADS)
    and are reassembled in trial order before any summation. Single-item
    random allocation and VCG use vectorised closed forms unless
    ``vectorise`` is off.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    run = mechanism_from_config(mechanism) if isinstance(mechanism, dict) else mechanism
    batch = batch_evaluator(mechanism, spec) if vectorise else None
    blocks = range(math.ceil(trials / CHUNK))
    workers = threads or thread_count()
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _run_block(run, batch, spec, b, trials), blocks))
    else:
        parts = [_run_block(run, batch, spec, b, trials) for b in blocks]
    data = np.concatenate([p[0] for p in parts])
    mean_s, se_s = _mean_se(data[:, 0])
    mean_w, se_w = _mean_se(data[:, 1])
    mean_g = se_g = None
    samples = {"surplus": data[:, 0], "welfare": data[:, 1]}
    if spec.n == 2 and spec.family == "exp_single_item":
        g = benchmark_G_array(np.concatenate([p[1] for p in parts]))
        mean_g, se_g = _mean_se(g)
        samples["G"] = g
    m = 1 if spec.family == "exp_single_item" else spec.m
    return ExperimentReport(spec.n, m, trials, mean_s, se_s, mean_w, se_w, mean_g, se_g, samples)


def ratio_sweep(
    mechanism: Union[dict, Callable],
    family: str,
    n_list: Sequence[int],
    trials: int,
    m: int = 1,
    seed: int = 0,
    threads: Optional[int] = None,
) -> list:
    """One ExperimentReport per n; ratio = mean first best / mean surplus."""
    return [monte_carlo(mechanism, GeneratorSpec(family, n, m, seed), trials, threads) for n in n_list]


def reports_to_csv(reports: Sequence[ExperimentReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()


# ---------------------------------------------------------------- small random instances


def _values(rng: np.random.Generator, size, integer: bool):
    # Small integers make ties common, which stresses tie-breaking paths.
    return rng.integers(0, 6, size=size).astype(float) if integer else exponential(rng, size)


def random_curve(rng: np.random.Generator, max_segments: int = 3) -> Curve:
    k = int(rng.integers(1, max_segments + 1))
    inner = np.sort(rng.choice(np.arange(1, 8), size=k - 1, replace=False)) / 8.0
    slopes = np.sort(exponential(rng, k) * 2)[::-1]
    return Curve(np.concatenate([[0.0], inner, [1.0]]), slopes)


def random_instance(
    class_name: str,
    rng: np.random.Generator,
    n: Optional[int] = None,
    m: Optional[int] = None,
    max_n: int = 5,
    max_m: int = 5,
) -> Instance:
    """Random small instance of one valuation class, for audits and verifiers."""
    n = int(rng.integers(1, max_n + 1)) if n is None else n
    m = int(rng.integers(1, max_m + 1)) if m is None else m
    integer = bool(rng.integers(0, 2))
    if class_name == "unit_demand":
        return Instance(m, tuple(UnitDemand(row) for row in _values(rng, (n, m), integer)))
    if class_name == "multi_unit":
        d = -np.sort(-_values(rng, (n, m), integer), axis=1)
        return Instance(m, tuple(MultiUnit(row) for row in d))
    if class_name == "explicit":
        vals = []
        for _ in range(n):
            table = _values(rng, 1 << m, integer)
            table[0] = 0.0
            vals.append(Explicit(monotone_closure(table)))
        return Instance(m, tuple(vals))
    if class_name == "divisible_separable":
        vals = tuple(DivisibleSeparable(tuple(random_curve(rng) for _ in range(m))) for _ in range(n))
        return Instance(m, vals, DIVISIBLE)
    raise ValueError(f"unknown class {class_name!r}")
