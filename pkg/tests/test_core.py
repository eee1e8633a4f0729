import json
import math

import numpy as np
import pytest
import yaml

from dpnsim.core import (
    AllocationPolicy,
    ConfigError,
    DemandParams,
    GaParams,
    GridConfig,
    RngStreams,
    SolarConfig,
    StorageConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    validate_config,
)
from dpnsim.simulation import run_simulation


def test_fig3_setup_is_valid():
    cfg = GridConfig(n_users=500, energy_cap=150.0, p_stay_queue=0.1)
    assert validate_config(cfg) is cfg


def test_probability_out_of_range_is_reported():
    with pytest.raises(ConfigError) as exc:
        validate_config(GridConfig().with_demand(p_request=1.5))
    assert any("probability out of range" in e and e.startswith("demand.p_request") for e in exc.value.errors)


def test_special_users_within_population_is_valid():
    validate_config(GridConfig(n_users=500, n_special_users=50))


def test_all_violations_listed_together():
    cfg = GridConfig(n_users=10, n_special_users=11, energy_cap=-1.0, p_stay_queue=2.0)
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    paths = {e.split(":")[0] for e in exc.value.errors}
    assert {"n_special_users", "energy_cap", "p_stay_queue"} <= paths


def test_nested_and_ga_checks():
    cfg = GridConfig(
        battery=StorageConfig(capacity=1.0, initial_charge=2.0),
        solar=SolarConfig(p_sun=-0.1),
        ga=GaParams(population_size=2, elitism=2),
    )
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    text = " ".join(exc.value.errors)
    assert "battery.initial_charge" in text and "solar.p_sun" in text and "ga.elitism" in text


def test_uncapped_grid_is_valid():
    validate_config(GridConfig(energy_cap=math.inf))


def test_battery_defaults_to_tenth_of_cap_and_full():
    cfg = GridConfig(energy_cap=100.0, battery=StorageConfig())
    assert cfg.battery_capacity == 10.0
    assert cfg.battery_initial_charge == 10.0


def _full_config():
    return GridConfig(
        n_users=40,
        energy_cap=12.5,
        demand=DemandParams(0.3, 0.7),
        p_stay_queue=0.9,
        policy=AllocationPolicy.GENETIC,
        n_special_users=4,
        battery=StorageConfig(capacity=2.0, initial_charge=1.0),
        solar=SolarConfig(5.0, 0.25),
        ga=GaParams(population_size=20, generations=5, fitness_weights=(0.4, 0.2, 0.4)),
        n_rounds=3,
        seed=9,
    )


def test_dict_round_trip():
    cfg = _full_config()
    assert config_from_dict(json.loads(json.dumps(config_to_dict(cfg)))) == cfg


@pytest.mark.parametrize("suffix", [".json", ".yaml"])
def test_load_config_files(tmp_path, suffix):
    cfg = _full_config()
    path = tmp_path / f"cfg{suffix}"
    data = config_to_dict(cfg)
    path.write_text(json.dumps(data) if suffix == ".json" else yaml.safe_dump(data))
    assert load_config(path) == cfg


def test_unknown_field_rejected():
    with pytest.raises(ConfigError, match="unknown field"):
        config_from_dict({"n_users": 5, "capacity": 3})
    with pytest.raises(ConfigError, match="allocation policy"):
        config_from_dict({"policy": "random"})


def test_streams_are_reproducible_and_distinct():
    a, b = RngStreams(5), RngStreams(5)
    assert np.array_equal(a.demand.random(8), b.demand.random(8))
    c = RngStreams(5)
    assert not np.array_equal(c.demand.random(8), c.queue.random(8))
    assert not np.array_equal(RngStreams(5, 0).demand.random(8), RngStreams(5, 1).demand.random(8))


def test_routing_draws_do_not_move_demand_stream():
    plain = RngStreams(3)
    busy = RngStreams(3)
    busy.routing.random(1000)
    busy.ga.random(77)
    assert np.array_equal(plain.demand.random(50), busy.demand.random(50))


def test_identical_config_gives_identical_trajectory():
    cfg = GridConfig(n_users=100, energy_cap=20.0, n_rounds=30, p_stay_queue=0.8, seed=4)
    a = run_simulation(cfg).rounds
    b = run_simulation(cfg).rounds
    assert a == b
    c = run_simulation(cfg.replace(seed=5)).rounds
    assert a != c
