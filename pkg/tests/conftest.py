"""Shared fixtures: a small hand-sized scenario every suite can afford."""

import numpy as np
import pytest

from heatstack.datamodel import (
    BuildingZone,
    ChpUnit,
    ComfortWindow,
    ElectricBoiler,
    HeatNetwork,
    LoadProfile,
    Pipe,
    PriceBounds,
    RenewablePlant,
    ScenarioConfig,
    StorageDevice,
    ThermalUnit,
    validate_config,
)


def make_tiny_network(q_res=100.0, q_pub=42.0):
    """Star network: one source, one load node per zone, mirrored return."""
    pipes = (
        Pipe("s_res", "src", "res_load", "supply", 400.0, 0.45, 2.5, q_res),
        Pipe("s_pub", "src", "pub_load", "supply", 400.0, 0.32, 2.5, q_pub),
        Pipe("r_res", "res_load", "src", "return", 400.0, 0.45, 2.5, q_res),
        Pipe("r_pub", "pub_load", "src", "return", 400.0, 0.32, 2.5, q_pub),
    )
    return HeatNetwork(pipes=pipes, residential_loads=("res_load",), public_loads=("pub_load",))


def make_tiny_config(T=6, shift_fraction=0.0, mode_profile="flat", big_m=1000.0, **overrides):
    """Small but fully featured scenario (1 TP, 1 CHP, wind, PV, 2 stores)."""
    zone_res = BuildingZone.from_shape("residential", 3.0e6, 0.4)
    zone_pub = BuildingZone.from_shape("public", 3.0e6, 0.2)
    comfort = ComfortWindow()
    # Base heat loads ride the vote-0 trajectory: UA * (t_ideal - t_out).
    from heatstack.comfort import temp_from_pmv

    t_ideal = temp_from_pmv(0.0, comfort)
    hours = np.arange(T)
    if mode_profile == "flat":
        t_out = np.full(T, -8.0)
        p_load = np.full(T, 120.0) + 10.0 * np.sin(2 * np.pi * hours / max(T, 1))
        wind_v = np.full(T, 9.0)
        pv_av = np.zeros(T)
    else:
        t_out = -10.0 + 4.0 * np.cos(2 * np.pi * (hours - 14) / 24)
        p_load = 120.0 + 25.0 * np.sin(2 * np.pi * (hours - 9) / 24) ** 2
        wind_v = 8.0 + 3.0 * np.cos(2 * np.pi * hours / 24)
        pv_av = np.clip(np.sin(2 * np.pi * (hours - 6) / 24), 0.0, None)
    ua_res = zone_res.loss_coefficient / 1e6
    ua_pub = zone_pub.loss_coefficient / 1e6
    profile = LoadProfile(
        t_out=t_out,
        wind_speed=wind_v,
        pv_avail=pv_av,
        p_load=p_load,
        h_load_res=ua_res * (t_ideal - t_out),
        h_load_pub=ua_pub * (t_ideal - t_out),
    )
    cfg = ScenarioConfig(
        units_tp=(
            ThermalUnit("tp1", p_max=120.0, p_min=10.0, ramp_up=60.0, ramp_down=60.0,
                        cost_a=0.012, cost_b=16.0, cost_c=80.0, reserve_price=11.0),
        ),
        units_chp=(
            ChpUnit("chp1", p_max=120.0, p_min=10.0, h_max=80.0, cv_ratio=0.15,
                    ramp_up=60.0, ramp_down=60.0, cost_a=0.010, cost_b=14.0, cost_c=60.0,
                    reserve_price=12.0),
        ),
        storages=(
            StorageDevice("bess", "electric", charge_max=20.0, discharge_max=20.0,
                          soc_min=8.0, soc_max=80.0, eta_charge=0.95, eta_discharge=0.95,
                          cycle_cost=1.5, reserve_price=11.0),
            StorageDevice("tank", "heat", charge_max=15.0, discharge_max=15.0,
                          soc_min=5.0, soc_max=60.0, eta_charge=0.95, eta_discharge=0.95,
                          cycle_cost=0.5),
        ),
        renewables=(
            RenewablePlant("w1", "wind", capacity=40.0),
            RenewablePlant("pv1", "pv", capacity=30.0),
        ),
        network=make_tiny_network(),
        zone_res=zone_res,
        zone_pub=zone_pub,
        comfort=comfort,
        prices=PriceBounds(),
        profile=profile,
        boiler=ElectricBoiler(),
        shift_fraction=shift_fraction,
        big_m=big_m,
        # Zone UA here is ~100x smaller than the bundled city dataset, so the
        # default curtailment penalty would leave cuts saturated at every
        # admissible heat price.  A stiffer penalty keeps the best response in
        # the interior for part of the price box, which is the regime the
        # binaries have to disambiguate.
        **{"psi": 8.0, **overrides},
    )
    validate_config(cfg)
    return cfg


@pytest.fixture
def tiny_config():
    return make_tiny_config()


@pytest.fixture
def tiny_config_t2():
    return make_tiny_config(T=2)
