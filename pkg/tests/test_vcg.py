import numpy as np
import pytest

from oracles import brute_multi_unit, brute_tables, brute_unit_demand, grid_divisible
from surplus_auctions.experiments import random_instance
from surplus_auctions.valuations import CopiedItem, DivisibleSeparable, Explicit, Instance, multi_unit_instance, single_item_instance, unit_demand_instance
from surplus_auctions.vcg import clarke_payment_crosscheck, clarke_payments, run_vcg, run_vcg_multiunit_sequential, trim_redundant
from surplus_auctions.welfare import SetAllocation


def test_unit_demand_payments():
    out = run_vcg(unit_demand_instance([[3, 2], [2, 0]]))
    assert list(out.payments) == [0.0, 1.0]
    assert out.surplus == 3.0
    assert clarke_payment_crosscheck(unit_demand_instance([[3, 2], [2, 0]]), out)


def test_single_item_second_price():
    out = run_vcg(single_item_instance([4.0, 1.0]))
    assert list(out.payments) == [1.0, 0.0]


def test_copies_remove_competition():
    out = run_vcg(single_item_instance([4.0, 1.0]), copies=2)
    assert out.allocation.bundles == (frozenset({CopiedItem(0, 0)}), frozenset({CopiedItem(0, 1)}))
    assert list(out.payments) == [0.0, 0.0]


def test_multi_unit_payments():
    inst = multi_unit_instance([[3, 1], [2, 1]])
    out = run_vcg(inst)
    assert out.allocation.counts == (1, 1)
    assert list(out.payments) == [1.0, 1.0]
    doubled = run_vcg(inst, copies=2)
    assert doubled.allocation.counts == (2, 2) and doubled.welfare == 7.0
    assert list(doubled.payments) == [0.0, 0.0]


def test_sequential_intervals():
    layout, payments, welfare = run_vcg_multiunit_sequential(multi_unit_instance([[3, 1], [2, 1]]), 1)
    assert layout.intervals == ((0, 2), (2, 4))
    assert layout.bundle(1) == frozenset({CopiedItem(0, 1), CopiedItem(1, 1)})
    assert list(layout.copies_touched(1)) == [1]


def test_divisible_capped_vcg():
    inst = Instance(1, (DivisibleSeparable.linear([4.0]), DivisibleSeparable.linear([1.0])), "divisible")
    full = run_vcg(inst)
    assert np.allclose(full.allocation.x, [[1.0], [0.0]]) and np.allclose(full.payments, [1.0, 0.0])
    half = run_vcg(inst, q=0.5)
    assert np.allclose(half.allocation.x, [[0.5], [0.5]]) and np.allclose(half.payments, 0.0)
    assert half.welfare == pytest.approx(2.5)


def test_identical_agents_at_cap_one_over_n_pay_nothing():
    n = 4
    inst = Instance(2, tuple(DivisibleSeparable.linear([2.0, 1.0]) for _ in range(n)), "divisible")
    assert np.allclose(run_vcg(inst, q=1 / n).payments, 0.0)


def test_trim_drops_redundant_items():
    inst = Instance(2, (Explicit([0.0, 3.0, 0.0, 3.0]),))
    out = run_vcg(inst)
    assert out.allocation.bundles == (frozenset({0}),)
    alloc = trim_redundant(SetAllocation((frozenset({0, 1}),)), inst.valuations)
    assert alloc.bundles == (frozenset({0}),)


def _others(inst, i, copies, supply_removed):
    keep = [k for k in range(inst.n) if k != i]
    if inst.class_name == "unit_demand":
        caps = np.full(inst.m, copies)
        for j in supply_removed:
            caps[j] -= 1
        return brute_unit_demand(inst.weight_matrix()[keep].reshape(len(keep), inst.m), caps)
    tables = [inst.valuations[k].table for k in keep]
    avail = set(range(inst.m)) - set(supply_removed)
    return brute_tables(tables, avail) if tables else 0.0


@pytest.mark.parametrize("seed", range(4))
def test_payments_match_brute_force(seed):
    rng = np.random.default_rng(100 + seed)
    from surplus_auctions.valuations import project_g

    for _ in range(40):
        cls = ("unit_demand", "explicit")[int(rng.integers(0, 2))]
        inst = random_instance(cls, rng, max_n=4, max_m=3)
        copies = 1 if cls == "explicit" else int(rng.choice([1, 2]))
        if inst.n == 1 and cls == "unit_demand":
            continue
        out = run_vcg(inst, copies)
        assert clarke_payment_crosscheck(inst, out)
        for i, bundle in enumerate(out.allocation.bundles):
            items = [e.item if isinstance(e, CopiedItem) else e for e in bundle]
            if not items:
                assert out.payments[i] == 0.0
                continue
            expect = _others(inst, i, copies, ()) - _others(inst, i, copies, items)
            assert out.payments[i] == pytest.approx(expect, abs=1e-9)
            assert set(project_g(bundle)) == set(items)


def test_multi_unit_payments_match_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(100):
        inst = random_instance("multi_unit", rng, max_n=4, max_m=3)
        copies = int(rng.choice([1, 2]))
        out = run_vcg(inst, copies)
        d = inst.marginal_matrix()
        units = inst.m * copies
        for i, k in enumerate(out.allocation.counts):
            others = np.delete(d, i, axis=0)
            expect = 0.0
            if k and len(others):
                expect = brute_multi_unit(others, units, inst.m) - brute_multi_unit(others, units - k, inst.m)
            assert out.payments[i] == pytest.approx(expect, abs=1e-9)
        assert clarke_payment_crosscheck(inst, out)


def test_divisible_payments_match_grid():
    rng = np.random.default_rng(8)
    for _ in range(30):
        inst = random_instance("divisible_separable", rng, max_n=3, max_m=2)
        q = float(rng.choice([1.0, 0.5]))
        out = run_vcg(inst, q=q)
        for i in range(inst.n):
            others = inst.valuations[:i] + inst.valuations[i + 1:]
            if not others:
                continue
            full = grid_divisible(others, q)
            rest = grid_divisible(others, q, supply=1.0 - out.allocation.x[i])
            assert out.payments[i] == pytest.approx(full - rest, abs=1e-6)
        assert clarke_payment_crosscheck(inst, out)


def test_literal_payments_equal_kernel_payments():
    rng = np.random.default_rng(9)
    for _ in range(200):
        inst = random_instance("unit_demand", rng, max_n=6, max_m=4)
        copies = int(rng.choice([1, 2, 4]))
        out = run_vcg(inst, copies)
        assert np.allclose(clarke_payments(inst, out.allocation, copies), out.payments, atol=1e-9)


def test_outcome_json():
    d = run_vcg(unit_demand_instance([[3, 2], [2, 0]])).to_dict()
    assert d == {"allocation": [[1], [0]], "payments": [0.0, 1.0], "welfare": 4.0, "surplus": 3.0}
