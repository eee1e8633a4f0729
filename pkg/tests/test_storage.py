import numpy as np
import pytest

from dpnsim.allocation import PendingRequest
from dpnsim.core import AllocationPolicy, SolarConfig, StorageConfig
from dpnsim.storage import StorageUnit, charge, discharge_to_queue, draw_solar, solar_step

SF = AllocationPolicy.SMALLEST_FIRST


def test_charge_examples():
    unit, absorbed = charge(StorageUnit(10.0, 9.4556), 2.0)
    assert absorbed == pytest.approx(0.5444)
    assert unit.charge == pytest.approx(10.0)
    _, absorbed = charge(StorageUnit(10.0, 10.0), 5.0)
    assert absorbed == 0.0
    unit, absorbed = charge(StorageUnit(10.0, 0.0), 3.0)
    assert absorbed == 3.0 and unit.charge == 3.0


def test_negative_surplus_rejected():
    with pytest.raises(ValueError):
        charge(StorageUnit(1.0, 0.0), -0.1)


def test_invalid_state_rejected():
    with pytest.raises(ValueError):
        StorageUnit(1.0, 1.5)


def test_from_config_defaults():
    unit = StorageUnit.from_config(StorageConfig(), 100.0)
    assert unit.capacity == 10.0 and unit.charge == 10.0


def test_table1_storage_serves_user2():
    unit, grants = discharge_to_queue(StorageUnit(1.0, 1.0), [PendingRequest(2, 0.4869, 0)],
                                      AllocationPolicy.LARGEST_FIRST)
    assert grants == {2: 0.4869}
    assert unit.charge == pytest.approx(1.0 - 0.4869)


def test_empty_battery_serves_nobody():
    req = [PendingRequest(2, 0.3, 0)]
    unit, grants = discharge_to_queue(StorageUnit(1.0, 0.0), req, SF)
    assert grants == {} and unit.charge == 0.0


def test_discharge_is_greedy_under_charge():
    req = [PendingRequest(1, 0.6, 0), PendingRequest(2, 0.7, 0)]
    unit, grants = discharge_to_queue(StorageUnit(1.0, 1.0), req, SF)
    assert grants == {1: 0.6}
    assert unit.charge == pytest.approx(0.4)


def test_genetic_policy_discharges_smallest_first():
    req = [PendingRequest(1, 0.6, 0), PendingRequest(2, 0.3, 0), PendingRequest(3, 0.3, 0)]
    _, grants = discharge_to_queue(StorageUnit(1.0, 1.0), req, AllocationPolicy.GENETIC)
    assert set(grants) == {2, 3}


def test_solar_mean_production():
    rng = np.random.default_rng(4)
    draws = np.array([draw_solar(SolarConfig(10.0, 0.5), rng) for _ in range(40000)])
    # Bernoulli(0.5) x U(0, 10]: mean 2.5, variance 0.5*100/3 - 2.5^2
    se = np.sqrt((0.5 * 100 / 3 - 2.5**2) / len(draws))
    assert abs(draws.mean() - 2.5) <= 4 * se
    assert draws.max() <= 10.0 and draws.min() >= 0.0


def test_no_sun_no_power():
    rng = np.random.default_rng(0)
    assert all(draw_solar(SolarConfig(10.0, 0.0), rng) == 0.0 for _ in range(100))


class FixedRng:
    def __init__(self, values):
        self.values = np.asarray(values)

    def random(self, n):
        return self.values[:n]


def test_full_battery_overflow_goes_to_grid():
    # sunny, level 0.6 -> produced 4.0
    produced, unit, bonus = solar_step(SolarConfig(10.0, 0.5), StorageUnit(2.0, 2.0), FixedRng([0.1, 0.6]))
    assert produced == pytest.approx(4.0)
    assert bonus == pytest.approx(4.0)
    assert unit.charge == 2.0


def test_solar_fills_battery_first():
    produced, unit, bonus = solar_step(SolarConfig(10.0, 0.5), StorageUnit(2.0, 0.5), FixedRng([0.1, 0.6]))
    assert unit.charge == pytest.approx(2.0)
    assert bonus == pytest.approx(produced - 1.5)
