"""District-heating transport physics under the fixed-flow regime.

Mass flows are pinned at their nominal values, so transport delays and
per-pipe losses become scenario constants.  That is what lets the dispatch
optimizer treat heat delivery as a linear shift-and-subtract: the functions
here compute those constants (``zone_transport``) and also run the forward
simulation used to cross-check solved schedules
(``propagate_source_to_load``, ``temperature_envelope``).

Conventions: flows kg/s, temperatures degC, pipe thermal resistance
m*degC/W, heat power MW, water heat capacity kJ/(kg*degC).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datamodel import ConfigError, HeatNetwork, Pipe

__all__ = [
    "source_heat",
    "mass_balance_residual",
    "pipe_heat_power",
    "node_mix_temperature",
    "pipe_velocity",
    "pipe_delay_steps",
    "pipe_heat_loss",
    "PropagationResult",
    "propagate_source_to_load",
    "ZoneTransport",
    "TransportModel",
    "zone_transport",
    "temperature_envelope",
]


def round_half_away(x: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def source_heat(q: float, t_supply: float, t_return: float, c_water: float = 4.2) -> float:
    """Heat power (MW) injected by a source heating flow q from t_return to t_supply."""
    if q <= 0:
        raise ConfigError(f"source_heat: flow must be > 0, got {q}")
    return q * c_water * (t_supply - t_return) / 1e3


def pipe_heat_power(q: float, t: float, c_water: float = 4.2) -> float:
    """Heat power (MW) carried by flow q at temperature t (relative to 0 degC)."""
    return q * c_water * t / 1e3


def node_mix_temperature(inflows: list[tuple[float, float]]) -> float:
    """Flow-weighted mixing temperature of several inflows ``(q, t)``.

    All pipes leaving the node inherit this temperature.
    """
    if not inflows:
        raise ConfigError("node_mix_temperature: empty inflow list")
    total = sum(q for q, _ in inflows)
    if total <= 0 or any(q <= 0 for q, _ in inflows):
        raise ConfigError("node_mix_temperature: all inflows must have q > 0")
    return sum(q * t for q, t in inflows) / total


def pipe_velocity(q: float, d: float, rho: float = 1000.0) -> float:
    """Water velocity (m/s) for mass flow q through a pipe of diameter d."""
    if d <= 0:
        raise ConfigError(f"pipe_velocity: diameter must be > 0, got {d}")
    if q < 0:
        raise ConfigError(f"pipe_velocity: flow must be >= 0, got {q}")
    return q / (rho * math.pi * (d / 2.0) ** 2)


def pipe_delay_steps(length: float, v: float, dt: float = 1.0) -> int:
    """Transport delay of a pipe in whole scheduling steps.

    Travel time length/v is expressed in steps of dt hours and rounded
    half away from zero.
    """
    if v <= 0:
        raise ConfigError(f"pipe_delay_steps: velocity must be > 0, got {v}")
    if dt <= 0:
        raise ConfigError(f"pipe_delay_steps: dt must be > 0, got {dt}")
    steps = round_half_away((length / v) / (3600.0 * dt))
    return max(steps, 0)


def pipe_heat_loss(t_in: float, t_soil: float, resistance_sum: float, length: float) -> float:
    """Steady heat loss (MW) of a buried pipe at inlet temperature t_in.

    Negative when the soil is warmer than the water; callers flag rather
    than clamp that case.
    """
    if resistance_sum <= 0 or length <= 0:
        raise ConfigError("pipe_heat_loss: resistance_sum and length must be > 0")
    return 2.0 * math.pi * (t_in - t_soil) / resistance_sum * length / 1e6


# ---------------------------------------------------------------------------
# Graph helpers


def _supply_parent(net: HeatNetwork) -> dict[str, Pipe]:
    """Map each supply node to the pipe feeding it."""
    return {p.dst: p for p in net.supply_pipes()}


def _supply_path(net: HeatNetwork, load: str) -> list[Pipe]:
    """Pipes from the source down to ``load``, source end first."""
    parent = _supply_parent(net)
    path: list[Pipe] = []
    node = load
    while node in parent:
        path.append(parent[node])
        node = parent[node].src
    if node != net.source_node():
        raise ConfigError(f"network: load {load!r} not connected to the source")
    return list(reversed(path))


def _return_path(net: HeatNetwork, load: str) -> list[Pipe]:
    """Pipes from ``load`` back to the source on the return side (may be empty)."""
    nxt = {p.src: p for p in net.return_pipes()}
    path: list[Pipe] = []
    node, hops = load, 0
    while node in nxt:
        pipe = nxt[node]
        path.append(pipe)
        node = pipe.dst
        hops += 1
        if hops > len(net.pipes):
            raise ConfigError("network: return side contains a cycle")
    return path


def mass_balance_residual(net: HeatNetwork, flows: dict[str, float]) -> dict[str, float]:
    """Per-node mass imbalance (inflow minus outflow, kg/s) for a flow assignment.

    Open endpoints (the source and the leaves of each side) naturally show
    their injected/withdrawn flow; internal junctions of a valid assignment
    come out at zero.
    """
    known = {p.pipe_id for p in net.pipes}
    unknown = set(flows) - known
    if unknown:
        raise ConfigError(f"mass_balance_residual: unknown pipe ids {sorted(unknown)}")
    missing = known - set(flows)
    if missing:
        raise ConfigError(f"mass_balance_residual: missing flows for {sorted(missing)}")
    residual = dict.fromkeys(net.nodes(), 0.0)
    for p in net.pipes:
        q = flows[p.pipe_id]
        residual[p.src] -= q
        residual[p.dst] += q
    return residual


# ---------------------------------------------------------------------------
# Forward propagation


@dataclass(frozen=True)
class PropagationResult:
    """Simulated delivery of an injection series through the network."""

    delivered: dict[str, np.ndarray]  # per load node, MW
    delivered_total: np.ndarray  # MW
    delays: dict[str, int]  # per pipe, steps
    load_delays: dict[str, int]  # per load node, steps along its supply path
    loss_total: np.ndarray  # MW withdrawn from transport per hour
    history_value: float  # assumed pre-horizon injection, MW


def propagate_source_to_load(
    net: HeatNetwork,
    q_source: np.ndarray,
    supply_temps: np.ndarray | None = None,
    history: float | None = None,
    dt: float = 1.0,
) -> PropagationResult:
    """Push an hourly source injection (MW) through the fixed-flow network.

    Each load node receives its flow share of the injection made
    ``delay`` steps earlier, minus its allocated share of pipe losses.
    Supply-pipe losses are evaluated at ``supply_temps`` (default: the
    network supply setpoint) and return-pipe losses at the return
    setpoint; both are charged against delivery, since return-side losses
    must be reheated at the source.  Hours before the first delayed
    arrival use ``history`` as the constant pre-horizon injection
    (default: the first-hour value).
    """
    q_source = np.asarray(q_source, dtype=float)
    horizon = len(q_source)
    if supply_temps is None:
        supply_temps = np.full(horizon, net.supply_setpoint)
    supply_temps = np.asarray(supply_temps, dtype=float)
    if len(supply_temps) != horizon:
        raise ConfigError("propagate_source_to_load: supply_temps length != horizon")
    hist = float(q_source[0]) if history is None else float(history)

    delays = {
        p.pipe_id: pipe_delay_steps(
            p.length_m, pipe_velocity(p.flow_nominal, p.diameter_m, net.rho_water), dt
        )
        for p in net.pipes
    }
    max_delay = max(delays[p.pipe_id] for p in net.supply_pipes())
    if max_delay >= horizon:
        raise ConfigError(
            f"propagate_source_to_load: max path delay {max_delay} steps >= horizon {horizon}"
        )

    # Hourly loss of every pipe at its side's reference temperature.
    def _pipe_loss(p: Pipe, t_ref: np.ndarray | float) -> np.ndarray:
        t_ref = np.broadcast_to(np.asarray(t_ref, dtype=float), (horizon,))
        return np.array(
            [pipe_heat_loss(t, net.soil_temp, p.resistance, p.length_m) for t in t_ref]
        )

    losses = {
        p.pipe_id: _pipe_loss(p, supply_temps if p.kind == "supply" else net.return_setpoint)
        for p in net.pipes
    }

    source = net.source_node()
    q_total = sum(p.flow_nominal for p in net.supply_pipes() if p.src == source)
    delivered: dict[str, np.ndarray] = {}
    load_delays: dict[str, int] = {}
    for load in net.load_nodes():
        spath = _supply_path(net, load)
        q_load = spath[-1].flow_nominal
        tau = sum(delays[p.pipe_id] for p in spath)
        load_delays[load] = tau
        shifted = np.empty(horizon)
        shifted[:tau] = hist
        shifted[tau:] = q_source[: horizon - tau] if tau else q_source
        out = (q_load / q_total) * shifted
        # Losses of shared pipes are split between downstream loads by flow.
        for p in spath + _return_path(net, load):
            out = out - losses[p.pipe_id] * (q_load / p.flow_nominal)
        delivered[load] = out

    loss_total = np.sum([losses[p.pipe_id] for p in net.pipes], axis=0)
    return PropagationResult(
        delivered=delivered,
        delivered_total=np.sum(list(delivered.values()), axis=0),
        delays=delays,
        load_delays=load_delays,
        loss_total=loss_total,
        history_value=hist,
    )


# ---------------------------------------------------------------------------
# Optimizer-facing transport constants


@dataclass(frozen=True)
class ZoneTransport:
    """Aggregate source-to-zone transport constants for one customer zone."""

    zone: str
    flow: float  # kg/s reaching the zone's load nodes
    delay_steps: int  # flow-weighted path delay, rounded
    loss: np.ndarray  # MW per hour charged against delivery
    inj_min: float  # MW, minimum injection implied by the temperature boxes
    inj_max: float  # MW


@dataclass(frozen=True)
class TransportModel:
    """Per-zone delay/loss/injection-box constants plus audit totals."""

    res: ZoneTransport
    pub: ZoneTransport
    horizon: int

    def by_zone(self) -> tuple[ZoneTransport, ZoneTransport]:
        return (self.res, self.pub)


def _zone_aggregate(net: HeatNetwork, loads: tuple[str, ...], zone: str, horizon: int, dt: float) -> ZoneTransport:
    delays = {}
    flows = {}
    loss = np.zeros(horizon)
    for load in loads:
        spath = _supply_path(net, load)
        q_load = spath[-1].flow_nominal
        flows[load] = q_load
        delays[load] = sum(
            pipe_delay_steps(
                p.length_m, pipe_velocity(p.flow_nominal, p.diameter_m, net.rho_water), dt
            )
            for p in spath
        )
        for p in spath:
            loss += pipe_heat_loss(net.supply_setpoint, net.soil_temp, p.resistance, p.length_m) \
                * (q_load / p.flow_nominal)
        for p in _return_path(net, load):
            loss += pipe_heat_loss(net.return_setpoint, net.soil_temp, p.resistance, p.length_m) \
                * (q_load / p.flow_nominal)
    q_zone = sum(flows.values())
    mean_delay = sum(delays[ld] * flows[ld] for ld in loads) / q_zone
    c = net.c_water
    return ZoneTransport(
        zone=zone,
        flow=q_zone,
        delay_steps=round_half_away(mean_delay),
        loss=loss,
        inj_min=q_zone * c * (net.supply_temp_min - net.return_temp_max) / 1e3,
        inj_max=q_zone * c * (net.supply_temp_max - net.return_temp_min) / 1e3,
    )


def zone_transport(net: HeatNetwork, horizon: int, dt: float = 1.0) -> TransportModel:
    """Precompute the fixed-flow transport constants the optimizer needs.

    Per zone: the aggregate delay (flow-weighted mean of its load nodes'
    path delays, rounded half away from zero), the hourly loss charged
    against its delivery, and the injection box implied by the supply and
    return temperature limits at the zone's fixed flow.
    """
    res = _zone_aggregate(net, net.residential_loads, "residential", horizon, dt)
    pub = _zone_aggregate(net, net.public_loads, "public", horizon, dt)
    for z in (res, pub):
        if z.delay_steps >= horizon:
            raise ConfigError(
                f"zone_transport: {z.zone} delay {z.delay_steps} steps >= horizon {horizon}"
            )
    return TransportModel(res=res, pub=pub, horizon=horizon)


def temperature_envelope(
    net: HeatNetwork, transport: TransportModel, inj_res: np.ndarray, inj_pub: np.ndarray
) -> dict[str, np.ndarray]:
    """Implied zone temperatures for an injection schedule, with in-box flags.

    Moving ``inj`` MW at the zone's fixed flow requires a supply/return
    spread of ``inj/(q*c)``.  The return temperature is chosen inside its
    own box so the supply lands as close to the setpoint as possible; the
    flag marks hours where no admissible pairing exists.
    """
    out: dict[str, np.ndarray] = {}
    for z, inj in ((transport.res, np.asarray(inj_res, float)), (transport.pub, np.asarray(inj_pub, float))):
        spread = inj * 1e3 / (z.flow * net.c_water)
        t_ret = np.clip(net.supply_setpoint - spread, net.return_temp_min, net.return_temp_max)
        t_sup = t_ret + spread
        out[f"t_supply_{z.zone}"] = t_sup
        out[f"t_return_{z.zone}"] = t_ret
        out[f"in_box_{z.zone}"] = (
            (t_sup >= net.supply_temp_min - 1e-9) & (t_sup <= net.supply_temp_max + 1e-9)
        )
    return out
