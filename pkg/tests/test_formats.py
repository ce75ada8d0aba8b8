import json

import numpy as np
import pytest

from surplus_auctions.experiments import random_instance
from surplus_auctions.formats import instance_digest, instance_from_dict, instance_to_dict, load_instance
from surplus_auctions.valuations import ValuationError


def test_round_trip_every_class():
    rng = np.random.default_rng(0)
    for cls in ("unit_demand", "multi_unit", "explicit", "divisible_separable"):
        inst = random_instance(cls, rng, max_m=3)
        back = instance_from_dict(json.loads(json.dumps(instance_to_dict(inst))), allow_nonstandard=True)
        assert instance_digest(back) == instance_digest(inst)


def test_explicit_bitmask_keys():
    d = {"kind": "indivisible", "m": 2, "agents": [{"class": "explicit", "table": {"1": 2, "2": 1, "3": 2.5}}]}
    inst = instance_from_dict(d)
    assert inst.valuations[0]({0, 1}) == 2.5


def test_rejects_nonstandard_unless_allowed():
    d = {"kind": "indivisible", "m": 2, "agents": [{"class": "multi_unit", "marginals": [1, 3]}]}
    with pytest.raises(ValuationError):
        instance_from_dict(d)
    assert instance_from_dict(d, allow_nonstandard=True).n == 1


@pytest.mark.parametrize("payload", ["{", '{"m": 1}', '{"m": 1, "agents": [{"class": "zzz"}]}', '[]'])
def test_malformed(tmp_path, payload):
    path = tmp_path / "bad.json"
    path.write_text(payload)
    with pytest.raises(ValuationError):
        load_instance(path)
