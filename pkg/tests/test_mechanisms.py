from fractions import Fraction

import numpy as np
import pytest

from surplus_auctions.analysis import audit_epir, expected_surplus
from surplus_auctions.experiments import random_instance
from surplus_auctions.formats import distribution_to_dict
from surplus_auctions.mechanisms import (
    Branch,
    MechanismDistribution,
    MechanismError,
    Prize,
    bayesian_r,
    default_r,
    first_price_grand_bundle,
    mechanism_from_config,
    random_allocation,
    restricted_capacity_vcg,
    rounding_sets,
    subroutine_multiunit,
    two_agent_grand_bundle,
    two_agent_single_item_G,
    vcg_with_copies,
)
from surplus_auctions.valuations import DivisibleSeparable, Explicit, Instance, multi_unit_instance, single_item_instance
from surplus_auctions.vcg import IntervalAllocation


def surplus(dist, inst):
    return expected_surplus(dist, inst).expected_surplus


def test_vcg_with_copies_unit_demand_example():
    inst = single_item_instance([4.0, 1.0])
    dist = vcg_with_copies(inst, r=1)
    b0, b1 = dist.branches
    assert b0.weight == b1.weight == Fraction(1, 2)
    assert b0.lottery[0] == (Prize(Fraction(1), frozenset({0}), 1.0),) and b0.lottery[1] == ()
    assert [p.probability for p in b1.lottery[0] + b1.lottery[1]] == [Fraction(1, 2)] * 2
    assert surplus(dist, inst) == pytest.approx(2.75)


def test_r_zero_is_plain_vcg_scaled_by_q():
    inst = single_item_instance([4.0, 1.0])
    dist = vcg_with_copies(inst, r=0, q=Fraction(1, 2))
    assert dist.branches[0].lottery[0][0] == Prize(Fraction(1, 2), frozenset({0}), 1.0)


def test_serving_probability_is_q_over_copies():
    rng = np.random.default_rng(3)
    for cls, q in (("unit_demand", Fraction(1)), ("multi_unit", Fraction(1, 2))):
        for _ in range(20):
            inst = random_instance(cls, rng)
            dist = vcg_with_copies(inst, r=2)
            for ell, b in enumerate(dist.branches):
                for prizes in b.lottery:
                    for p in prizes:
                        assert p.probability == q / 2**ell


def test_interval_layout_rounding_sets():
    # m = 6, four copies; red, blue, yellow, orange, green, violet.
    layout = IntervalAllocation(((0, 3), (3, 5), (5, 8), (8, 11), (11, 12), (12, 18)), 6, 4)
    sets = rounding_sets(layout)
    assert sets[0] == ((0, 1), (2,))
    assert sets[1] == ((3, 4), ())
    assert sets[2] == ((5,), ())
    assert sets[3] == ((), ())
    lottery = subroutine_multiunit(layout, [0.0] * 6, 2)
    assert all(prizes[0].probability == Fraction(1, 8) for prizes in lottery)


def test_rounding_rejects_two_straddlers():
    # Only an overlapping (corrupt) layout can put two agents across one boundary.
    layout = IntervalAllocation(((1, 3), (1, 4)), 2, 2)
    with pytest.raises(MechanismError):
        rounding_sets(layout)


def test_subroutine_class_mismatch():
    with pytest.raises(MechanismError):
        vcg_with_copies(single_item_instance([1.0, 2.0]), subroutine="multi_unit")
    with pytest.raises(MechanismError):
        restricted_capacity_vcg(single_item_instance([1.0, 2.0]))


def test_restricted_capacity_example():
    inst = Instance(1, (DivisibleSeparable.linear([4.0]), DivisibleSeparable.linear([1.0])), "divisible")
    dist = restricted_capacity_vcg(inst, r=1)
    assert surplus(dist, inst) == pytest.approx(2.75)
    assert surplus(restricted_capacity_vcg(inst, r=0), inst) == pytest.approx(3.0)


@pytest.mark.parametrize(
    "values,expected",
    [((4.0, 1.0), 12 / 5), ((2.0, 1.0), 6 / 5), ((0.0, 0.0), 0.0), ((1.0, 4.0), 12 / 5), ((3.0, 1.0), 8 / 5)],
)
def test_two_agent_G(values, expected):
    dist = two_agent_single_item_G(*values)
    assert surplus(dist, single_item_instance(values)) == pytest.approx(expected)


def test_two_agent_G_regimes_and_prices():
    dist = two_agent_single_item_G(4.0, 1.0)
    assert dist.branches[0].lottery == (
        (Prize(Fraction(4, 5), frozenset({0}), 1.25),),
        (Prize(Fraction(1, 5), frozenset({0}), 0.0),),
    )
    tie = two_agent_single_item_G(3.0, 1.0)  # boundary takes the even split
    assert tie.branches[0].lottery[0][0].probability == Fraction(1, 2)
    with pytest.raises(MechanismError):
        two_agent_single_item_G(-1.0, 1.0)


def test_two_agent_bundle_example():
    inst = single_item_instance([2.0, 1.0])
    assert surplus(two_agent_grand_bundle(inst), inst) == pytest.approx(4 / 3)
    with pytest.raises(MechanismError):
        two_agent_grand_bundle(single_item_instance([1.0, 1.0, 1.0]))


def test_two_agent_bundle_symmetric_additive():
    inst = Instance(2, (Explicit([0, 1, 2, 3]), Explicit([0, 1, 2, 3])))
    assert surplus(two_agent_grand_bundle(inst), inst) == pytest.approx(2 / 3 * 3)


def test_distribution_checks_weights():
    with pytest.raises(MechanismError):
        MechanismDistribution((Branch(Fraction(1, 2), ((),)),), 1)
    with pytest.raises(MechanismError):
        MechanismDistribution((Branch(Fraction(1), ((Prize(Fraction(2), frozenset(), 0.0),),)),), 1)


def test_default_parameters():
    assert default_r(1) == 0 and default_r(2) == 2 and default_r(5) == 5
    assert bayesian_r(8, 2) == 4 and bayesian_r(2, 4) == 2


def test_config_and_json():
    run = mechanism_from_config({"mechanism": "vcg_copies", "r": 1, "q": "1/2"})
    dist = run(single_item_instance([4.0, 1.0]))
    assert dist.branches[1].lottery[0][0].probability == Fraction(1, 4)
    payload = distribution_to_dict(dist)
    assert payload["branches"][1]["lottery"][0][0]["probability"] == {"numerator": 1, "denominator": 4}
    with pytest.raises(MechanismError):
        mechanism_from_config({"mechanism": "nope"})


def test_controls():
    inst = single_item_instance([2.0, 1.0])
    assert surplus(random_allocation(inst), inst) == pytest.approx(1.5)
    dist = first_price_grand_bundle(inst)
    assert surplus(dist, inst) == 0.0 and audit_epir(dist, inst)


def test_multi_unit_mechanism_surplus():
    inst = multi_unit_instance([[3, 1], [2, 1]])
    # ell=0: (3-1)+(2-1) served w.p. 1/2; ell=1: 7 at price 0 w.p. 1/4.
    assert surplus(vcg_with_copies(inst, r=1), inst) == pytest.approx(0.5 * 1.5 + 0.5 * 1.75)
