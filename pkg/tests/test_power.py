import numpy as np
import pytest

from optimizer import AllocationPolicy
from power import PowerModel, dbm_to_w, energy_efficiency, power_terms, relaxed_total_power, total_power


def _one_tile(x=1.0, p=1.0, assoc=1):
    return AllocationPolicy(x=np.array([[x]]), p=np.array([[p]]), assoc=np.array([[assoc]]))


def test_total_power_single_tile():
    model = PowerModel()
    assert total_power(_one_tile(), model) == pytest.approx(4.09)
    dynamic, circuit = power_terms(_one_tile(), model)
    assert dynamic == pytest.approx(4.0)
    assert circuit == pytest.approx(0.04)


def test_unassociated_user_costs_only_static_power():
    model = PowerModel()
    assert total_power(_one_tile(assoc=0), model) == pytest.approx(model.p_s)
    assert relaxed_total_power(_one_tile(assoc=0), model) == pytest.approx(model.p_s)


def test_relaxed_power_counts_full_p_for_fractional_x():
    model = PowerModel()
    alloc = _one_tile(x=0.5, p=1.0)
    assert total_power(alloc, model) == pytest.approx(2.0 + 0.02 + 0.05)
    assert relaxed_total_power(alloc, model) == pytest.approx(4.0 + 0.02 + 0.05)
    # 이진 x 에서는 두 식이 일치
    assert relaxed_total_power(_one_tile(), model) == pytest.approx(total_power(_one_tile(), model))


def test_energy_efficiency_worked_example():
    assert energy_efficiency(4090.0, 4.09, 1e-3) == pytest.approx(1e6)
    with pytest.raises(ValueError):
        energy_efficiency(1.0, 0.0, 1e-3)


def test_dbm_conversion():
    assert dbm_to_w(50.0) == pytest.approx(100.0)
    assert dbm_to_w(30.0) == pytest.approx(1.0)
    assert PowerModel.from_dbm(40.0).p_max == pytest.approx(10.0)


@pytest.mark.parametrize("kwargs", [{"zeta": 0.0}, {"zeta": 1.0}, {"p_c": -0.1}, {"p_max": 0.0}])
def test_power_model_validation(kwargs):
    with pytest.raises(ValueError):
        PowerModel(**kwargs)
