import numpy as np
import pytest

from surplus_auctions.valuations import (
    CopiedItem,
    Curve,
    DivisibleSeparable,
    Explicit,
    Instance,
    MultiUnit,
    UnitDemand,
    ValuationError,
    cap,
    check_class,
    explicit_table,
    lift_to_copies,
    monotone_closure,
    project_g,
    single_item_instance,
)


def test_unit_demand_takes_best_item():
    v = UnitDemand([3.0, 1.0, 2.0])
    assert v([]) == 0.0
    assert v({1, 2}) == 2.0
    assert v({0, 1, 2}) == 3.0


def test_multi_unit_depends_on_count_only():
    v = MultiUnit([3.0, 1.0])
    assert v({0}) == v({1}) == 3.0
    assert v({0, 1}) == 4.0


def test_explicit_table_lookup_by_bitmask():
    v = Explicit([0.0, 1.0, 2.0, 5.0])
    assert v({0}) == 1.0 and v({1}) == 2.0 and v({0, 1}) == 5.0


def test_explicit_rejects_bad_length():
    with pytest.raises(ValuationError):
        Explicit([0.0, 1.0, 2.0])


def test_curve_merges_equal_slopes_and_evaluates():
    c = Curve([0.0, 0.5, 1.0], [2.0, 2.0])
    assert len(c.slopes) == 1
    assert c(0.25) == pytest.approx(0.5)
    c2 = Curve([0.0, 0.5, 1.0], [2.0, 1.0])
    assert c2(1.0) == pytest.approx(1.5)
    assert c2.concave and not Curve([0.0, 0.5, 1.0], [1.0, 2.0]).concave


def test_cap_limits_quantity():
    v = DivisibleSeparable.linear([4.0, 1.0])
    capped = cap(v, 0.5)
    assert capped([1.0, 1.0]) == pytest.approx(2.5)
    assert capped([0.25, 0.0]) == pytest.approx(1.0)


def test_projection_and_lift():
    bundle = {CopiedItem(0, 1), CopiedItem(0, 0), CopiedItem(2, 3)}
    assert project_g(bundle) == frozenset({0, 2})
    lifted = lift_to_copies(UnitDemand([3.0, 1.0, 2.0]), 2)
    assert lifted(bundle) == 3.0
    assert lifted.copies == 4


def test_monotone_closure():
    t = monotone_closure([0.0, 3.0, 1.0, 2.0])
    assert list(t) == [0.0, 3.0, 1.0, 3.0]


def test_check_class_flags_violations():
    assert check_class(MultiUnit([3.0, 1.0])).ok
    assert not check_class(MultiUnit([1.0, 3.0])).submodular_marginals
    assert not check_class(Explicit([0.0, 1.0, 1.0, 3.0])).submodular_marginals
    assert not check_class(Explicit([1.0, 1.0, 1.0, 1.0])).normalized


def test_explicit_translation_matches_original():
    v = UnitDemand([3.0, 1.0])
    assert list(explicit_table(v)) == [0.0, 3.0, 1.0, 3.0]


def test_instance_validation():
    inst = single_item_instance([4.0, 1.0])
    assert inst.n == 2 and inst.m == 1 and inst.class_name == "unit_demand"
    with pytest.raises(ValuationError):
        Instance(2, (UnitDemand([1.0]),))
    with pytest.raises(ValuationError):
        Instance(1, (DivisibleSeparable.linear([1.0]),))


def test_with_params_projects_back_to_class():
    v = MultiUnit([3.0, 1.0]).with_params([1.0, 5.0])
    assert list(v.marginals) == [5.0, 1.0]
    e = Explicit([0.0, 2.0, 1.0, 2.5]).with_params([2.0, 1.0, 0.5])
    assert check_class(e).monotone
    assert np.all(UnitDemand([1.0]).with_params([-2.0]).weights == 0.0)
