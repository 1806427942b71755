"""Building thermal dynamics, comfort votes, and cuttable-load bounds.

A zone's indoor temperature follows a lumped first-order balance between
delivered heat and envelope losses.  Comfort is scored by an affine vote
in indoor temperature; each operating mode translates the vote limits
into per-hour temperature bands, and the gap between the max-comfort
supply trajectory and the cheapest band-floor trajectory is what users
may curtail.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import BuildingZone, ComfortWindow, ConfigError

__all__ = [
    "MODES",
    "surface_from_shape",
    "indoor_temp_step",
    "heating_power_for_temp",
    "pmv",
    "temp_from_pmv",
    "comfort_band",
    "CutBounds",
    "cuttable_bounds",
]

MODES = (1, 2, 3, 4, 5, 6)


def surface_from_shape(coefficient: float, volume: float) -> float:
    """External surface area (m2) from the shape coefficient and volume."""
    if coefficient <= 0 or volume <= 0:
        raise ConfigError("surface_from_shape: coefficient and volume must be > 0")
    return coefficient * volume


def indoor_temp_step(t_prev: float, t_out: float, h_supply: float, zone: BuildingZone, dt: float = 1.0) -> float:
    """One explicit step of the zone temperature balance.

    ``h_supply`` is delivered heat in MW; dt in hours.  The envelope loses
    ``htc * surface * (t_in - t_out)`` W and the enclosed air integrates
    the remainder.
    """
    if dt <= 0:
        raise ConfigError(f"indoor_temp_step: dt must be > 0, got {dt}")
    net_w = h_supply * 1e6 - zone.loss_coefficient * (t_prev - t_out)
    return t_prev + dt * 3600.0 * net_w / zone.heat_capacity


def heating_power_for_temp(t_target: float, t_prev: float, t_out: float, zone: BuildingZone, dt: float = 1.0) -> float:
    """Heat supply (MW) that moves the zone from t_prev to t_target in one step.

    Exact algebraic inverse of :func:`indoor_temp_step`, so the round trip
    reproduces the input power to machine precision.
    """
    if dt <= 0:
        raise ConfigError(f"heating_power_for_temp: dt must be > 0, got {dt}")
    ramp_w = (t_target - t_prev) * zone.heat_capacity / (dt * 3600.0)
    return (ramp_w + zone.loss_coefficient * (t_prev - t_out)) / 1e6


def pmv(t_in: float, w: ComfortWindow) -> float:
    """Thermal-comfort vote for an indoor temperature (negative = too cold)."""
    return 2.43 - 3.76 * (w.skin_temp - t_in) / (w.metabolic_rate * (w.clothing_resistance + 0.1))


def temp_from_pmv(target_pmv: float, w: ComfortWindow) -> float:
    """Indoor temperature achieving a given comfort vote; inverse of :func:`pmv`."""
    return w.skin_temp - (2.43 - target_pmv) * w.metabolic_rate * (w.clothing_resistance + 0.1) / 3.76


def _in_window(hour: int, window: tuple[int, int]) -> bool:
    return window[0] <= hour <= window[1]


def comfort_band(zone_kind: str, hour: int, mode: int, w: ComfortWindow) -> tuple[float, float]:
    """Allowed indoor temperature band for a zone at one hour under a mode.

    Mode semantics:
      1 - both zones hold the strict (occupied-hours) vote band all day;
      2 - both zones pinned at the ideal temperature (zero-width band);
      3 - residential follows its schedule, public pinned;
      4 - residential pinned, public follows its schedule;
      5, 6 - both zones follow their differentiated schedules.

    The residential schedule uses the strict vote band during
    ``res_strict_hours`` and the relaxed band otherwise.  The public
    schedule uses the strict band during ``pub_working_hours`` and an
    anti-freeze floor with the strict ceiling otherwise.
    """
    if mode not in MODES:
        raise ConfigError(f"comfort_band: invalid mode {mode}")
    if zone_kind not in ("residential", "public"):
        raise ConfigError(f"comfort_band: unknown zone kind {zone_kind!r}")
    if not 0 <= hour <= 23:
        raise ConfigError(f"comfort_band: hour must be in [0, 23], got {hour}")

    ideal = temp_from_pmv(0.0, w)
    strict = (temp_from_pmv(-w.pmv_strict, w), temp_from_pmv(w.pmv_strict, w))
    relaxed = (temp_from_pmv(-w.pmv_relaxed, w), temp_from_pmv(w.pmv_relaxed, w))

    pinned = (ideal, ideal)
    if mode == 2:
        return pinned
    if mode == 1:
        return strict
    if zone_kind == "residential":
        if mode == 4:
            return pinned
        return strict if _in_window(hour, w.res_strict_hours) else relaxed
    # public
    if mode == 3:
        return pinned
    if _in_window(hour, w.pub_working_hours):
        return strict
    return (w.floor_temp_public, strict[1])


@dataclass(frozen=True)
class CutBounds:
    """Hourly curtailment ceilings plus the trajectories they came from."""

    h_cut_max: np.ndarray  # MW
    floor_supply: np.ndarray  # MW needed to ride the band floor
    floor_temps: np.ndarray  # degC band floor per hour
    infeasible_hours: np.ndarray  # bool, base load below the floor supply


def cuttable_bounds(
    zone: BuildingZone,
    window: ComfortWindow,
    base_load: np.ndarray,
    t_out: np.ndarray,
    mode: int,
    dt: float = 1.0,
) -> CutBounds:
    """Maximum curtailable heat per hour for a zone under an operating mode.

    ``base_load`` must be the supply that rides the max-comfort (vote 0)
    trajectory.  The bound is the excess of that supply over the cheapest
    admissible supply, which holds the indoor temperature on the band
    floor hour by hour.  The floor trajectory wraps cyclically (the
    schedule repeats daily), transient release of stored heat is credited,
    and the result is clamped to [0, base_load].  Hours where even the
    floor needs more than the base supply are flagged, not clamped away.
    """
    base_load = np.asarray(base_load, dtype=float)
    t_out = np.asarray(t_out, dtype=float)
    horizon = len(base_load)
    if len(t_out) != horizon:
        raise ConfigError("cuttable_bounds: base_load and t_out lengths differ")

    floors = np.array(
        [comfort_band(zone.kind, h % 24, mode, window)[0] for h in range(horizon)]
    )
    floor_supply = np.empty(horizon)
    for t in range(horizon):
        t_prev = floors[t - 1] if horizon > 1 else floors[t]
        floor_supply[t] = max(
            0.0, heating_power_for_temp(floors[t], t_prev, t_out[t], zone, dt)
        )
    infeasible = floor_supply > base_load + 1e-9
    h_cut_max = np.clip(base_load - floor_supply, 0.0, None)
    return CutBounds(
        h_cut_max=h_cut_max,
        floor_supply=floor_supply,
        floor_temps=floors,
        infeasible_hours=infeasible,
    )
