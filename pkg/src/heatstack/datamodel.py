"""Typed scenario data for the bilevel electro-thermal scheduling model.

Everything the optimizer consumes lives here: generating units, storage,
renewables, the district-heating pipe graph, building zones with their
comfort windows, hourly profiles, and tariff bounds.  Instances are frozen
after construction; ``validate_config`` is the single gate that checks
cross-field consistency and is idempotent (a validated config passes
through unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Iterable

import numpy as np

__all__ = [
    "ConfigError",
    "ThermalUnit",
    "ChpUnit",
    "StorageDevice",
    "RenewablePlant",
    "ElectricBoiler",
    "PriceBounds",
    "Pipe",
    "HeatNetwork",
    "BuildingZone",
    "ComfortWindow",
    "LoadProfile",
    "ScenarioConfig",
    "validate_config",
    "wind_power",
    "pv_power",
]


class ConfigError(ValueError):
    """Raised when scenario data violates a structural or physical rule."""


def _as_array(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ThermalUnit:
    """Condensing thermal generator with quadratic fuel cost.

    Fuel cost per hour is ``cost_a*P**2 + cost_b*P + cost_c`` ($/h) for
    electric output P (MW).  ``reserve_price`` is the $/MW price paid for
    spinning reserve held on the unit.
    """

    name: str
    p_max: float
    p_min: float
    ramp_up: float
    ramp_down: float
    cost_a: float
    cost_b: float
    cost_c: float
    reserve_price: float

    def fuel_cost(self, p: float | np.ndarray) -> float | np.ndarray:
        return self.cost_a * p**2 + self.cost_b * p + self.cost_c


@dataclass(frozen=True)
class ChpUnit:
    """Extraction CHP unit costed on equivalent electric output.

    Heat output H is folded into the fuel curve through ``cv_ratio``:
    fuel cost is ``cost_a*(P + cv_ratio*H)**2 + cost_b*(P + cv_ratio*H)
    + cost_c`` ($/h).  Electric output is bounded by [p_min, p_max] and
    heat by [0, h_max]; ramps apply to the electric side.
    """

    name: str
    p_max: float
    p_min: float
    h_max: float
    cv_ratio: float
    ramp_up: float
    ramp_down: float
    cost_a: float
    cost_b: float
    cost_c: float
    reserve_price: float

    def fuel_cost(self, p: float | np.ndarray, h: float | np.ndarray) -> float | np.ndarray:
        eq = p + self.cv_ratio * h
        return self.cost_a * eq**2 + self.cost_b * eq + self.cost_c


@dataclass(frozen=True)
class StorageDevice:
    """Electric or thermal store with charge/discharge limits and an SOC box.

    Powers are megawatts on the storage side of the converter: the grid
    supplies ``charge/eta_charge`` while charging and receives
    ``discharge*eta_discharge`` while discharging, so the state of charge
    integrates the raw powers.  ``cycle_cost`` ($/MWh) is levied on
    charge + discharge throughput to discourage idle cycling.
    """

    name: str
    kind: str  # "electric" or "heat"
    charge_max: float
    discharge_max: float
    soc_min: float
    soc_max: float
    eta_charge: float
    eta_discharge: float
    cycle_cost: float
    reserve_price: float = 0.0


@dataclass(frozen=True)
class RenewablePlant:
    """Wind farm or PV plant, dispatchable up to forecast availability.

    ``forecast_sigma_frac`` scales forecast output into the standard
    deviation used for the system reserve requirement.
    """

    name: str
    kind: str  # "wind" or "pv"
    capacity: float
    forecast_sigma_frac: float = 0.10
    cut_in: float = 3.0
    rated_speed: float = 15.0
    cut_out: float = 25.0


@dataclass(frozen=True)
class ElectricBoiler:
    """Electrode boiler converting grid power to district heat.

    Disabled when ``capacity`` is zero (the default): the boiler then
    contributes nothing to either balance.
    """

    capacity: float = 0.0
    efficiency: float = 0.98


@dataclass(frozen=True)
class PriceBounds:
    """Hourly tariff box plus the daily-mean anchors the regulator fixes."""

    e_min: float = 40.0
    e_max: float = 90.0
    e_mean: float = 65.0
    h_min: float = 30.0
    h_max: float = 70.0
    h_mean: float = 50.0


@dataclass(frozen=True)
class Pipe:
    """One directed pipe segment of the heating network.

    ``resistance`` is the summed thermal resistance between water and soil
    (m*degC/W); ``flow_nominal`` the fixed operating mass flow (kg/s).
    """

    pipe_id: str
    src: str
    dst: str
    kind: str  # "supply" or "return"
    length_m: float
    diameter_m: float
    resistance: float
    flow_nominal: float


@dataclass(frozen=True)
class HeatNetwork:
    """Fixed-flow district heating graph with temperature operating limits.

    The supply pipes must form a tree rooted at a single source node; the
    return side mirrors it.  Load nodes are the supply-side leaves and each
    must be claimed by exactly one customer zone (residential or public).
    Because flows are fixed, transport delays and heat losses are scenario
    constants and the dispatch model stays linear.
    """

    pipes: tuple[Pipe, ...]
    residential_loads: tuple[str, ...]
    public_loads: tuple[str, ...]
    supply_temp_min: float = 90.0
    supply_temp_max: float = 100.0
    return_temp_min: float = 35.0
    return_temp_max: float = 60.0
    supply_setpoint: float = 95.0
    return_setpoint: float = 50.0
    soil_temp: float = 5.0
    c_water: float = 4.2  # kJ/(kg*degC)
    rho_water: float = 1000.0  # kg/m3

    def supply_pipes(self) -> tuple[Pipe, ...]:
        return tuple(p for p in self.pipes if p.kind == "supply")

    def return_pipes(self) -> tuple[Pipe, ...]:
        return tuple(p for p in self.pipes if p.kind == "return")

    def nodes(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for p in self.pipes:
            seen.setdefault(p.src, None)
            seen.setdefault(p.dst, None)
        return tuple(seen)

    def source_node(self) -> str:
        incoming = {p.dst for p in self.supply_pipes()}
        roots = [n for n in self._supply_nodes() if n not in incoming]
        if len(roots) != 1:
            raise ConfigError(f"network: expected one supply source node, found {roots}")
        return roots[0]

    def load_nodes(self) -> tuple[str, ...]:
        outgoing = {p.src for p in self.supply_pipes()}
        return tuple(n for n in self._supply_nodes() if n not in outgoing)

    def _supply_nodes(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for p in self.supply_pipes():
            seen.setdefault(p.src, None)
            seen.setdefault(p.dst, None)
        return tuple(seen)


@dataclass(frozen=True)
class BuildingZone:
    """Aggregated building stock of one customer class.

    ``kind`` is ``"residential"`` or ``"public"`` and selects the comfort
    schedule.  ``surface_area`` must equal ``shape_coefficient * volume``
    (the shape coefficient is external surface per unit enclosed volume).
    Heat losses scale with ``htc * surface_area`` (W/degC); thermal inertia
    with the enclosed air volume.
    """

    kind: str
    volume: float  # m3
    shape_coefficient: float  # 1/m
    surface_area: float  # m2
    htc: float = 0.5  # W/(m2*degC)
    air_heat_capacity: float = 1.007  # kJ/(kg*degC)
    air_density: float = 1.2  # kg/m3

    @classmethod
    def from_shape(cls, kind: str, volume: float, shape_coefficient: float, **kw) -> "BuildingZone":
        return cls(
            kind=kind,
            volume=volume,
            shape_coefficient=shape_coefficient,
            surface_area=shape_coefficient * volume,
            **kw,
        )

    @property
    def loss_coefficient(self) -> float:
        """Envelope heat-loss coefficient in W/degC."""
        return self.htc * self.surface_area

    @property
    def heat_capacity(self) -> float:
        """Lumped air heat capacity in J/degC."""
        return self.air_heat_capacity * 1000.0 * self.air_density * self.volume


@dataclass(frozen=True)
class ComfortWindow:
    """Comfort-vote model constants and the occupancy hour windows.

    The comfort vote is affine in indoor temperature:
    ``vote = 2.43 - 3.76*(skin_temp - t_in)/(metabolic_rate*(clothing_resistance + 0.1))``.
    ``res_strict_hours`` / ``pub_working_hours`` are inclusive hour ranges
    during which the tight band ``|vote| <= pmv_strict`` applies.
    """

    metabolic_rate: float = 80.0  # W/m2
    clothing_resistance: float = 0.12  # m2*degC/W
    skin_temp: float = 33.5  # degC
    pmv_strict: float = 0.5
    pmv_relaxed: float = 1.0
    floor_temp_public: float = 5.0  # degC, anti-freeze floor outside working hours
    res_strict_hours: tuple[int, int] = (7, 20)
    pub_working_hours: tuple[int, int] = (8, 22)


@dataclass(frozen=True)
class LoadProfile:
    """Hourly exogenous series for one scheduling day."""

    t_out: np.ndarray  # degC
    wind_speed: np.ndarray  # m/s
    pv_avail: np.ndarray  # fraction of PV capacity available, [0, 1]
    p_load: np.ndarray  # MW, electric base load before shifting
    h_load_res: np.ndarray  # MW, residential heat base load (max-comfort supply)
    h_load_pub: np.ndarray  # MW, public heat base load

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _as_array(getattr(self, f.name)))

    @property
    def horizon(self) -> int:
        return len(self.p_load)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete immutable description of one scheduling scenario."""

    units_tp: tuple[ThermalUnit, ...]
    units_chp: tuple[ChpUnit, ...]
    storages: tuple[StorageDevice, ...]
    renewables: tuple[RenewablePlant, ...]
    network: HeatNetwork
    zone_res: BuildingZone
    zone_pub: BuildingZone
    comfort: ComfortWindow
    prices: PriceBounds
    profile: LoadProfile
    boiler: ElectricBoiler = ElectricBoiler()
    psi: float = 0.5  # $/MW^2 comfort penalty weight
    curtail_penalty: float = 2.0  # $/MWh charged on spilled renewable energy
    dr_compensation: float = 1.0  # $/MWh paid to users per MWh of heat load cut
    shift_fraction: float = 0.0  # net shiftable-energy budget as a fraction of base energy
    shift_bounds_frac: float = 0.10  # hourly shift box as a fraction of base load
    reserve_z: float = 1.645  # reserve coverage multiplier on forecast sigma
    big_m: float = 1.0e5
    gap_tol: float = 1.0e-6
    qp_tol: float = 1.0e-8
    soc_init_frac: float = 0.5  # initial SOC position inside [soc_min, soc_max]
    delta_t: float = 1.0  # h
    volume_total: float = 0.0  # m3, zone volumes must sum to this when set
    _validated: bool = field(default=False, compare=False, repr=False)

    @property
    def horizon(self) -> int:
        return self.profile.horizon

    def with_profile(self, profile: LoadProfile) -> "ScenarioConfig":
        return replace(self, profile=profile, _validated=False)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _check_positive(obj, names: Iterable[str], label: str) -> None:
    for n in names:
        v = getattr(obj, n)
        _require(v > 0, f"{label}.{n}: must be > 0, got {v!r}")


def _validate_unit(u: ThermalUnit | ChpUnit, label: str) -> None:
    _require(u.p_max >= u.p_min >= 0, f"{label}: need p_max >= p_min >= 0, got [{u.p_min}, {u.p_max}]")
    _require(u.ramp_up > 0 and u.ramp_down > 0, f"{label}: ramps must be > 0")
    _require(u.cost_a >= 0, f"{label}.cost_a: must be >= 0 for a convex fuel curve, got {u.cost_a}")
    _require(u.reserve_price >= 0, f"{label}.reserve_price: must be >= 0")
    if isinstance(u, ChpUnit):
        _require(u.h_max > 0, f"{label}.h_max: must be > 0")
        _require(0 < u.cv_ratio < 1, f"{label}.cv_ratio: expected in (0, 1), got {u.cv_ratio}")


def _validate_storage(s: StorageDevice) -> None:
    label = f"storage[{s.name}]"
    _require(s.kind in ("electric", "heat"), f"{label}.kind: must be 'electric' or 'heat', got {s.kind!r}")
    _check_positive(s, ("charge_max", "discharge_max"), label)
    _require(0 <= s.soc_min < s.soc_max, f"{label}: need 0 <= soc_min < soc_max")
    for n in ("eta_charge", "eta_discharge"):
        v = getattr(s, n)
        _require(0 < v <= 1, f"{label}.{n}: must be in (0, 1], got {v}")
    _require(s.cycle_cost >= 0, f"{label}.cycle_cost: must be >= 0")
    _require(s.reserve_price >= 0, f"{label}.reserve_price: must be >= 0")


def _validate_renewable(r: RenewablePlant) -> None:
    label = f"renewable[{r.name}]"
    _require(r.kind in ("wind", "pv"), f"{label}.kind: must be 'wind' or 'pv', got {r.kind!r}")
    _require(r.capacity > 0, f"{label}.capacity: must be > 0")
    _require(r.forecast_sigma_frac >= 0, f"{label}.forecast_sigma_frac: must be >= 0")
    if r.kind == "wind":
        _require(
            0 < r.cut_in < r.rated_speed < r.cut_out,
            f"{label}: need 0 < cut_in < rated_speed < cut_out",
        )


def _validate_network(net: HeatNetwork) -> None:
    _require(len(net.pipes) > 0, "network.pipes: at least one pipe required")
    ids = [p.pipe_id for p in net.pipes]
    _require(len(ids) == len(set(ids)), "network.pipes: duplicate pipe ids")
    for p in net.pipes:
        label = f"pipe[{p.pipe_id}]"
        _require(p.kind in ("supply", "return"), f"{label}.kind: must be 'supply' or 'return'")
        _require(p.src != p.dst, f"{label}: src and dst must differ")
        _check_positive(p, ("length_m", "diameter_m", "resistance", "flow_nominal"), label)

    supply = net.supply_pipes()
    _require(len(supply) > 0, "network: no supply pipes")
    source = net.source_node()  # raises if not unique

    # Supply side must be a tree: every non-source node has exactly one feed.
    indeg: dict[str, int] = {}
    for p in supply:
        indeg[p.dst] = indeg.get(p.dst, 0) + 1
    for n, d in indeg.items():
        _require(d == 1, f"network: supply node {n!r} fed by {d} pipes, expected 1 (tree)")

    # Connectivity: every supply node reachable from the source.
    children: dict[str, list[str]] = {}
    for p in supply:
        children.setdefault(p.src, []).append(p.dst)
    reached = {source}
    stack = [source]
    while stack:
        for nxt in children.get(stack.pop(), []):
            if nxt not in reached:
                reached.add(nxt)
                stack.append(nxt)
    unreached = [n for n in net._supply_nodes() if n not in reached]
    _require(not unreached, f"network: supply nodes unreachable from source: {unreached}")

    # Mass balance at internal supply nodes: feed flow equals branch flows.
    outflow: dict[str, float] = {}
    for p in supply:
        outflow[p.src] = outflow.get(p.src, 0.0) + p.flow_nominal
    for p in supply:
        if p.dst in outflow:
            _require(
                abs(p.flow_nominal - outflow[p.dst]) <= 1e-9 * max(1.0, p.flow_nominal),
                f"network: mass balance violated at node {p.dst!r} "
                f"(in {p.flow_nominal} kg/s, out {outflow[p.dst]} kg/s)",
            )

    loads = set(net.load_nodes())
    res, pub = set(net.residential_loads), set(net.public_loads)
    _require(res and pub, "network: both residential_loads and public_loads must be non-empty")
    _require(not (res & pub), f"network: load nodes claimed by both zones: {sorted(res & pub)}")
    _require(res | pub == loads,
             f"network: zone lists must cover exactly the supply leaves {sorted(loads)}, "
             f"got {sorted(res | pub)}")

    _require(net.supply_temp_min < net.supply_temp_max, "network: supply temperature box is empty")
    _require(net.return_temp_min < net.return_temp_max, "network: return temperature box is empty")
    _require(net.return_temp_max < net.supply_temp_min,
             "network: return box must sit below the supply box")
    _require(net.supply_temp_min <= net.supply_setpoint <= net.supply_temp_max,
             "network.supply_setpoint: outside the supply temperature box")
    _require(net.return_temp_min <= net.return_setpoint <= net.return_temp_max,
             "network.return_setpoint: outside the return temperature box")
    _check_positive(net, ("c_water", "rho_water"), "network")


def _validate_zone(z: BuildingZone) -> None:
    label = f"zone[{z.kind}]"
    _require(z.kind in ("residential", "public"),
             f"zone.kind: must be 'residential' or 'public', got {z.kind!r}")
    _check_positive(
        z,
        ("volume", "shape_coefficient", "surface_area", "htc", "air_heat_capacity", "air_density"),
        label,
    )
    want = z.shape_coefficient * z.volume
    _require(
        abs(z.surface_area - want) <= 1e-9 * max(1.0, want),
        f"{label}.surface_area: must equal shape_coefficient*volume = {want}, got {z.surface_area}",
    )


def _validate_profile(p: LoadProfile) -> None:
    n = p.horizon
    _require(n >= 2, f"profile: horizon must be >= 2 hours, got {n}")
    for f in fields(p):
        arr = getattr(p, f.name)
        _require(arr.ndim == 1 and len(arr) == n, f"profile.{f.name}: length {len(arr)} != horizon {n}")
        _require(bool(np.all(np.isfinite(arr))), f"profile.{f.name}: contains non-finite values")
    _require(bool(np.all(p.p_load > 0)), "profile.p_load: must be > 0 everywhere")
    _require(bool(np.all(p.h_load_res >= 0)), "profile.h_load_res: must be >= 0")
    _require(bool(np.all(p.h_load_pub >= 0)), "profile.h_load_pub: must be >= 0")
    _require(bool(np.all((p.pv_avail >= 0) & (p.pv_avail <= 1))), "profile.pv_avail: must lie in [0, 1]")
    _require(bool(np.all(p.wind_speed >= 0)), "profile.wind_speed: must be >= 0")


def validate_config(cfg: ScenarioConfig) -> ScenarioConfig:
    """Check a scenario end to end and return it marked valid.

    Raises :class:`ConfigError` naming the offending field.  Calling it on
    an already-validated config is a no-op returning the same object.
    """
    if cfg._validated:
        return cfg

    _require(len(cfg.units_tp) > 0, "units_tp: at least one thermal unit required")
    _require(len(cfg.units_chp) > 0, "units_chp: at least one CHP unit required")
    names = [u.name for u in (*cfg.units_tp, *cfg.units_chp, *cfg.storages, *cfg.renewables)]
    _require(len(names) == len(set(names)), f"unit names must be unique, got {names}")

    for u in cfg.units_tp:
        _validate_unit(u, f"units_tp[{u.name}]")
    for u in cfg.units_chp:
        _validate_unit(u, f"units_chp[{u.name}]")
    for s in cfg.storages:
        _validate_storage(s)
    for r in cfg.renewables:
        _validate_renewable(r)

    _validate_network(cfg.network)
    _validate_zone(cfg.zone_res)
    _validate_zone(cfg.zone_pub)
    _require(cfg.zone_res.kind == "residential", "zone_res: kind must be 'residential'")
    _require(cfg.zone_pub.kind == "public", "zone_pub: kind must be 'public'")
    _validate_profile(cfg.profile)

    b = cfg.prices
    _require(0 < b.e_min <= b.e_mean <= b.e_max, "prices: need 0 < e_min <= e_mean <= e_max")
    _require(0 < b.h_min <= b.h_mean <= b.h_max, "prices: need 0 < h_min <= h_mean <= h_max")

    cw = cfg.comfort
    _require(cw.metabolic_rate > 0, "comfort.metabolic_rate: must be > 0")
    _require(cw.clothing_resistance > 0, "comfort.clothing_resistance: must be > 0")
    _require(0 < cw.pmv_strict <= cw.pmv_relaxed, "comfort: need 0 < pmv_strict <= pmv_relaxed")
    for nm in ("res_strict_hours", "pub_working_hours"):
        lo, hi = getattr(cw, nm)
        _require(0 <= lo <= hi <= 23, f"comfort.{nm}: must be an inclusive hour range inside [0, 23]")

    _require(cfg.psi > 0, f"psi: comfort penalty must be > 0 (strict convexity), got {cfg.psi}")
    _require(cfg.curtail_penalty >= 0, "curtail_penalty: must be >= 0")
    _require(cfg.dr_compensation >= 0, "dr_compensation: must be >= 0")
    _require(0 <= cfg.shift_bounds_frac < 1, "shift_bounds_frac: must be in [0, 1)")
    _require(abs(cfg.shift_fraction) < 1, "shift_fraction: |value| must be < 1")
    _require(cfg.reserve_z >= 0, "reserve_z: must be >= 0")
    _require(cfg.big_m > 0, "big_m: must be > 0")
    _require(cfg.gap_tol > 0 and cfg.qp_tol > 0, "gap_tol/qp_tol: must be > 0")
    _require(0 <= cfg.soc_init_frac <= 1, "soc_init_frac: must be in [0, 1]")
    _require(cfg.delta_t > 0, "delta_t: must be > 0")
    _require(cfg.boiler.capacity >= 0, "boiler.capacity: must be >= 0")
    _require(0 < cfg.boiler.efficiency <= 1, "boiler.efficiency: must be in (0, 1]")
    if cfg.volume_total:
        total = cfg.zone_res.volume + cfg.zone_pub.volume
        _require(
            abs(total - cfg.volume_total) <= 1e-6 * cfg.volume_total,
            f"volume_total: zone volumes sum to {total}, expected {cfg.volume_total}",
        )

    # Shift box must be able to absorb the net budget on every feasible split.
    budget = cfg.shift_fraction * float(np.sum(cfg.profile.p_load))
    width = cfg.shift_bounds_frac * cfg.profile.p_load
    _require(
        -float(np.sum(width)) <= budget <= float(np.sum(width)),
        "shift_fraction: net budget exceeds the summed hourly shift boxes",
    )

    object.__setattr__(cfg, "_validated", True)
    return cfg


def wind_power(speed: float | np.ndarray, plant: RenewablePlant) -> float | np.ndarray:
    """Available wind power (MW) from hub-height speed via the piecewise curve.

    Zero below cut-in and above cut-out, rated beyond rated speed, linear
    in between.
    """
    if plant.kind != "wind":
        raise ConfigError(f"wind_power: plant {plant.name!r} is not a wind plant")
    v = np.asarray(speed, dtype=float)
    frac = np.clip((v - plant.cut_in) / (plant.rated_speed - plant.cut_in), 0.0, 1.0)
    out = np.where((v < plant.cut_in) | (v > plant.cut_out), 0.0, plant.capacity * frac)
    return float(out) if np.isscalar(speed) else out


def pv_power(avail: float | np.ndarray, plant: RenewablePlant) -> float | np.ndarray:
    """Available PV power (MW) given the availability fraction in [0, 1]."""
    if plant.kind != "pv":
        raise ConfigError(f"pv_power: plant {plant.name!r} is not a PV plant")
    a = np.clip(np.asarray(avail, dtype=float), 0.0, 1.0)
    out = plant.capacity * a
    return float(out) if np.isscalar(avail) else out
