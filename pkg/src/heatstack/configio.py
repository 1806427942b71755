"""Manifest and table ingestion, and result emission.

A scenario ships as one INI manifest plus five CSV tables (thermal
units, cogeneration units, storage, pipes, hourly profile).  The INI
grammar is deliberately small: ``[section]`` headers, ``key = value``
lines, ``#``/``;`` comments.  A hand-rolled parser is used instead of
:mod:`configparser` because the error contract here is stricter: a
duplicate key must name both offending line numbers, and unknown keys
are rejected outright.

Emission is the mirror image: :func:`write_config` round-trips a loaded
scenario exactly (floats printed with shortest round-trip ``repr``), and
:func:`write_outputs` lays down the schedule, summary, audit report and
plot-ready series for a solved run.  No CSV cell depends on wall-clock
time, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

from .datamodel import (
    BuildingZone,
    ChpUnit,
    ComfortWindow,
    ConfigError,
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

__all__ = [
    "ManifestError",
    "TableError",
    "Manifest",
    "parse_manifest",
    "load_tables",
    "load_scenario",
    "write_config",
    "write_outputs",
    "write_modes_table",
    "write_sensitivity_table",
]


class ManifestError(ValueError):
    """Malformed or contradictory manifest."""


class TableError(ValueError):
    """CSV table violating its declared schema."""


# ---------------------------------------------------------------------------
# Manifest grammar

_PATH_KEYS = {
    ("units", "tp"), ("units", "chp"), ("units", "storage"),
    ("network", "pipes"), ("run", "profile"),
}

# key -> (required, default); paths have no default.
_SCHEMA: dict[str, dict[str, tuple[bool, str | None]]] = {
    "units": {
        "tp": (True, None),
        "chp": (True, None),
        "storage": (True, None),
        "wind_capacity": (False, "0"),
        "pv_capacity": (False, "0"),
        "wind_sigma_frac": (False, "0.1"),
        "pv_sigma_frac": (False, "0.1"),
        "wind_cut_in": (False, "3"),
        "wind_rated": (False, "15"),
        "wind_cut_out": (False, "25"),
        "boiler_capacity": (False, "0"),
        "boiler_efficiency": (False, "0.98"),
    },
    "network": {
        "pipes": (True, None),
        "res_loads": (True, None),
        "pub_loads": (True, None),
        "volume_res": (True, None),
        "volume_pub": (True, None),
        "shape_res": (True, None),
        "shape_pub": (True, None),
        "supply_temp": (False, "95"),
        "return_temp": (False, "50"),
        "soil_temp": (False, "5"),
        "htc": (False, "0.5"),
    },
    "prices": {
        "e_min": (True, None),
        "e_max": (True, None),
        "e_mean": (True, None),
        "h_min": (True, None),
        "h_max": (True, None),
        "h_mean": (True, None),
        "psi": (True, None),
        "dr_compensation": (False, "1.0"),
        "curtail_penalty": (False, "2.0"),
        "shift_fraction": (False, "0.0"),
        "shift_bounds_frac": (False, "0.1"),
    },
    "solver": {
        "big_m": (True, None),
        "gap_tol": (False, "1e-06"),
        "qp_tol": (False, "1e-08"),
        "reserve_z": (False, "1.645"),
    },
    "run": {
        "profile": (True, None),
        "mode": (False, "5"),
        "seed": (False, "0"),
        "out": (False, "out"),
    },
}


@dataclass
class Manifest:
    """Parsed manifest: raw key/value strings plus resolved table paths."""

    path: str
    values: dict[str, dict[str, str]]
    base_dir: str = field(init=False)

    def __post_init__(self):
        self.base_dir = os.path.dirname(os.path.abspath(self.path))

    def get(self, section: str, key: str) -> str:
        return self.values[section][key]

    def get_float(self, section: str, key: str) -> float:
        raw = self.get(section, key)
        try:
            return float(raw)
        except ValueError:
            raise ManifestError(
                f"{self.path}: key '{key}' in [{section}] is not a number: {raw!r}"
            ) from None

    def get_int(self, section: str, key: str) -> int:
        raw = self.get(section, key)
        try:
            return int(raw)
        except ValueError:
            raise ManifestError(
                f"{self.path}: key '{key}' in [{section}] is not an integer: {raw!r}"
            ) from None

    def table_path(self, section: str, key: str) -> str:
        return os.path.join(self.base_dir, self.get(section, key))

    @property
    def out_dir(self) -> str:
        out = self.get("run", "out")
        return out if os.path.isabs(out) else os.path.join(self.base_dir, out)


def parse_manifest(path: str) -> Manifest:
    """Parse and validate an INI manifest against the fixed schema."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc}") from None
    values: dict[str, dict[str, str]] = {}
    first_line: dict[tuple[str, str], int] = {}
    section: str | None = None
    for no, raw in enumerate(raw_lines, start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ManifestError(f"{path}:{no}: unknown section [{section}]")
            if section in values:
                raise ManifestError(f"{path}:{no}: section [{section}] repeated")
            values[section] = {}
            continue
        if "=" not in line:
            raise ManifestError(f"{path}:{no}: expected 'key = value', got {line!r}")
        if section is None:
            raise ManifestError(f"{path}:{no}: key outside any [section]")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCHEMA[section]:
            raise ManifestError(f"{path}:{no}: unknown key '{key}' in [{section}]")
        if key in values[section]:
            raise ManifestError(
                f"{path}: duplicate key '{key}' in [{section}] "
                f"(lines {first_line[(section, key)]} and {no})"
            )
        values[section][key] = val
        first_line[(section, key)] = no
    for sec, keys in _SCHEMA.items():
        if sec not in values:
            raise ManifestError(f"{path}: required section [{sec}] missing")
        for key, (required, default) in keys.items():
            if key not in values[sec]:
                if required:
                    raise ManifestError(f"{path}: missing required key '{key}' in [{sec}]")
                values[sec][key] = default
    man = Manifest(path=path, values=values)
    for sec, key in sorted(_PATH_KEYS):
        p = man.table_path(sec, key)
        if not os.path.isfile(p):
            raise ManifestError(f"{path}: [{sec}] {key} points to missing file {p}")
    return man


# ---------------------------------------------------------------------------
# CSV tables

_TP_COLS = ["p_max", "p_min", "ramp_up", "ramp_down", "cost_a", "cost_b", "cost_c",
            "reserve_factor"]
_CHP_COLS = _TP_COLS + ["h_max", "cv_ratio"]
_STORAGE_COLS = ["kind", "charge_max", "discharge_max", "soc_min", "soc_max",
                 "eta_charge", "eta_discharge", "cycle_cost"]
_PIPE_COLS = ["id", "from", "to", "kind", "length_m", "diameter_m", "resistance",
              "flow_nominal"]
_PROFILE_COLS = ["hour", "t_out", "wind_speed", "pv_avail", "p_load", "h_load_res",
                 "h_load_pub"]
_HORIZON = 24


def _read_csv(path: str, columns: list[str], numeric: set[str]) -> list[dict[str, object]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise TableError(f"cannot read table: {exc}") from None
    if not rows:
        raise TableError(f"{path}: empty file, header row mandatory")
    header = [c.strip() for c in rows[0]]
    if header != columns:
        raise TableError(
            f"{path}: column mismatch: expected {','.join(columns)} got {','.join(header)}"
        )
    out: list[dict[str, object]] = []
    for no, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(columns):
            raise TableError(f"{path}:{no}: expected {len(columns)} cells, got {len(row)}")
        rec: dict[str, object] = {}
        for col, cell in zip(columns, row):
            cell = cell.strip()
            if col in numeric:
                try:
                    rec[col] = float(cell)
                except ValueError:
                    raise TableError(f"{path}:{no}: non-numeric cell {cell!r} in column {col}") from None
            else:
                rec[col] = cell
        out.append(rec)
    return out


def load_tables(man: Manifest) -> ScenarioConfig:
    """Materialize the full scenario from a parsed manifest."""
    numeric_tp = set(_TP_COLS)
    tp_rows = _read_csv(man.table_path("units", "tp"), _TP_COLS, numeric_tp)
    chp_rows = _read_csv(man.table_path("units", "chp"), _CHP_COLS, set(_CHP_COLS))
    st_rows = _read_csv(man.table_path("units", "storage"), _STORAGE_COLS,
                        set(_STORAGE_COLS) - {"kind"})
    pipe_rows = _read_csv(man.table_path("network", "pipes"), _PIPE_COLS,
                          set(_PIPE_COLS) - {"id", "from", "to", "kind"})
    prof_rows = _read_csv(man.table_path("run", "profile"), _PROFILE_COLS,
                          set(_PROFILE_COLS))
    if len(prof_rows) != _HORIZON:
        raise TableError(
            f"{man.table_path('run', 'profile')}: expected {_HORIZON} rows, got {len(prof_rows)}"
        )
    hours = [int(r["hour"]) for r in prof_rows]
    if hours != list(range(_HORIZON)):
        raise TableError(f"{man.table_path('run', 'profile')}: hour column must run 0..{_HORIZON - 1}")

    units_tp = tuple(
        ThermalUnit(
            name=f"tp{i}", p_max=r["p_max"], p_min=r["p_min"],
            ramp_up=r["ramp_up"], ramp_down=r["ramp_down"],
            cost_a=r["cost_a"], cost_b=r["cost_b"], cost_c=r["cost_c"],
            reserve_price=r["reserve_factor"],
        )
        for i, r in enumerate(tp_rows, start=1)
    )
    units_chp = tuple(
        ChpUnit(
            name=f"chp{i}", p_max=r["p_max"], p_min=r["p_min"],
            ramp_up=r["ramp_up"], ramp_down=r["ramp_down"],
            cost_a=r["cost_a"], cost_b=r["cost_b"], cost_c=r["cost_c"],
            reserve_price=r["reserve_factor"], h_max=r["h_max"], cv_ratio=r["cv_ratio"],
        )
        for i, r in enumerate(chp_rows, start=1)
    )
    storages = []
    counters = {"electric": 0, "heat": 0}
    for r in st_rows:
        kind = str(r["kind"])
        if kind not in counters:
            raise TableError(
                f"{man.table_path('units', 'storage')}: storage kind must be electric or heat, got {kind!r}"
            )
        counters[kind] += 1
        prefix = "es" if kind == "electric" else "hs"
        storages.append(StorageDevice(
            name=f"{prefix}{counters[kind]}", kind=kind,
            charge_max=r["charge_max"], discharge_max=r["discharge_max"],
            soc_min=r["soc_min"], soc_max=r["soc_max"],
            eta_charge=r["eta_charge"], eta_discharge=r["eta_discharge"],
            cycle_cost=r["cycle_cost"],
        ))

    renewables = []
    wind_cap = man.get_float("units", "wind_capacity")
    if wind_cap > 0:
        renewables.append(RenewablePlant(
            name="wind", kind="wind", capacity=wind_cap,
            forecast_sigma_frac=man.get_float("units", "wind_sigma_frac"),
            cut_in=man.get_float("units", "wind_cut_in"),
            rated_speed=man.get_float("units", "wind_rated"),
            cut_out=man.get_float("units", "wind_cut_out"),
        ))
    pv_cap = man.get_float("units", "pv_capacity")
    if pv_cap > 0:
        renewables.append(RenewablePlant(
            name="pv", kind="pv", capacity=pv_cap,
            forecast_sigma_frac=man.get_float("units", "pv_sigma_frac"),
        ))

    pipes = tuple(
        Pipe(
            pipe_id=str(r["id"]), src=str(r["from"]), dst=str(r["to"]), kind=str(r["kind"]),
            length_m=r["length_m"], diameter_m=r["diameter_m"],
            resistance=r["resistance"], flow_nominal=r["flow_nominal"],
        )
        for r in pipe_rows
    )
    network = HeatNetwork(
        pipes=pipes,
        residential_loads=tuple(s.strip() for s in man.get("network", "res_loads").split(",") if s.strip()),
        public_loads=tuple(s.strip() for s in man.get("network", "pub_loads").split(",") if s.strip()),
        supply_setpoint=man.get_float("network", "supply_temp"),
        return_setpoint=man.get_float("network", "return_temp"),
        soil_temp=man.get_float("network", "soil_temp"),
    )
    htc = man.get_float("network", "htc")
    zone_res = BuildingZone.from_shape(
        "residential", man.get_float("network", "volume_res"),
        man.get_float("network", "shape_res"), htc=htc)
    zone_pub = BuildingZone.from_shape(
        "public", man.get_float("network", "volume_pub"),
        man.get_float("network", "shape_pub"), htc=htc)

    profile = LoadProfile(
        t_out=np.array([r["t_out"] for r in prof_rows]),
        wind_speed=np.array([r["wind_speed"] for r in prof_rows]),
        pv_avail=np.array([r["pv_avail"] for r in prof_rows]),
        p_load=np.array([r["p_load"] for r in prof_rows]),
        h_load_res=np.array([r["h_load_res"] for r in prof_rows]),
        h_load_pub=np.array([r["h_load_pub"] for r in prof_rows]),
    )

    cfg = ScenarioConfig(
        units_tp=units_tp,
        units_chp=units_chp,
        storages=tuple(storages),
        renewables=tuple(renewables),
        network=network,
        zone_res=zone_res,
        zone_pub=zone_pub,
        comfort=ComfortWindow(),
        prices=PriceBounds(
            e_min=man.get_float("prices", "e_min"), e_max=man.get_float("prices", "e_max"),
            e_mean=man.get_float("prices", "e_mean"), h_min=man.get_float("prices", "h_min"),
            h_max=man.get_float("prices", "h_max"), h_mean=man.get_float("prices", "h_mean"),
        ),
        profile=profile,
        boiler=ElectricBoiler(
            capacity=man.get_float("units", "boiler_capacity"),
            efficiency=man.get_float("units", "boiler_efficiency"),
        ),
        psi=man.get_float("prices", "psi"),
        curtail_penalty=man.get_float("prices", "curtail_penalty"),
        dr_compensation=man.get_float("prices", "dr_compensation"),
        shift_fraction=man.get_float("prices", "shift_fraction"),
        shift_bounds_frac=man.get_float("prices", "shift_bounds_frac"),
        reserve_z=man.get_float("solver", "reserve_z"),
        big_m=man.get_float("solver", "big_m"),
        gap_tol=man.get_float("solver", "gap_tol"),
        qp_tol=man.get_float("solver", "qp_tol"),
    )
    validate_config(cfg)
    return cfg


def load_scenario(path: str) -> tuple[Manifest, ScenarioConfig]:
    man = parse_manifest(path)
    return man, load_tables(man)


# ---------------------------------------------------------------------------
# Emission

def _fmt(v) -> str:
    """Shortest decimal that round-trips to the same float."""
    f = float(v)
    if f == int(f) and abs(f) < 1e16:
        return str(int(f))
    return repr(f)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def write_config(cfg: ScenarioConfig, outdir: str, name: str = "manifest.ini") -> str:
    """Emit a scenario as manifest + tables; inverse of :func:`load_tables`.

    Only layouts the loader can produce are writable: at most one wind and
    one pv plant, zone surfaces consistent with their shape coefficients.
    """
    validate_config(cfg)
    wind = [r for r in cfg.renewables if r.kind == "wind"]
    pv = [r for r in cfg.renewables if r.kind == "pv"]
    if len(wind) > 1 or len(pv) > 1:
        raise ConfigError("write_config supports at most one plant per renewable kind")
    if cfg.profile.horizon != _HORIZON:
        raise ConfigError(f"write_config requires a {_HORIZON}-hour profile")
    os.makedirs(outdir, exist_ok=True)

    _write_csv(os.path.join(outdir, "units_tp.csv"), _TP_COLS, [
        [u.p_max, u.p_min, u.ramp_up, u.ramp_down, u.cost_a, u.cost_b, u.cost_c,
         u.reserve_price]
        for u in cfg.units_tp
    ])
    _write_csv(os.path.join(outdir, "units_chp.csv"), _CHP_COLS, [
        [u.p_max, u.p_min, u.ramp_up, u.ramp_down, u.cost_a, u.cost_b, u.cost_c,
         u.reserve_price, u.h_max, u.cv_ratio]
        for u in cfg.units_chp
    ])
    _write_csv(os.path.join(outdir, "storage.csv"), _STORAGE_COLS, [
        [s.kind, s.charge_max, s.discharge_max, s.soc_min, s.soc_max,
         s.eta_charge, s.eta_discharge, s.cycle_cost]
        for s in cfg.storages
    ])
    _write_csv(os.path.join(outdir, "pipes.csv"), _PIPE_COLS, [
        [p.pipe_id, p.src, p.dst, p.kind, p.length_m, p.diameter_m, p.resistance,
         p.flow_nominal]
        for p in cfg.network.pipes
    ])
    prof = cfg.profile
    _write_csv(os.path.join(outdir, "profile.csv"), _PROFILE_COLS, [
        [t, prof.t_out[t], prof.wind_speed[t], prof.pv_avail[t], prof.p_load[t],
         prof.h_load_res[t], prof.h_load_pub[t]]
        for t in range(prof.horizon)
    ])

    lines = ["[units]", "tp = units_tp.csv", "chp = units_chp.csv", "storage = storage.csv"]
    if wind:
        w = wind[0]
        lines += [f"wind_capacity = {_fmt(w.capacity)}",
                  f"wind_sigma_frac = {_fmt(w.forecast_sigma_frac)}",
                  f"wind_cut_in = {_fmt(w.cut_in)}",
                  f"wind_rated = {_fmt(w.rated_speed)}",
                  f"wind_cut_out = {_fmt(w.cut_out)}"]
    if pv:
        lines += [f"pv_capacity = {_fmt(pv[0].capacity)}",
                  f"pv_sigma_frac = {_fmt(pv[0].forecast_sigma_frac)}"]
    lines += [f"boiler_capacity = {_fmt(cfg.boiler.capacity)}",
              f"boiler_efficiency = {_fmt(cfg.boiler.efficiency)}"]
    net = cfg.network
    lines += [
        "",
        "[network]",
        "pipes = pipes.csv",
        f"res_loads = {','.join(net.residential_loads)}",
        f"pub_loads = {','.join(net.public_loads)}",
        f"volume_res = {_fmt(cfg.zone_res.volume)}",
        f"volume_pub = {_fmt(cfg.zone_pub.volume)}",
        f"shape_res = {_fmt(cfg.zone_res.shape_coefficient)}",
        f"shape_pub = {_fmt(cfg.zone_pub.shape_coefficient)}",
        f"supply_temp = {_fmt(net.supply_setpoint)}",
        f"return_temp = {_fmt(net.return_setpoint)}",
        f"soil_temp = {_fmt(net.soil_temp)}",
        f"htc = {_fmt(cfg.zone_res.htc)}",
        "",
        "[prices]",
        f"e_min = {_fmt(cfg.prices.e_min)}",
        f"e_max = {_fmt(cfg.prices.e_max)}",
        f"e_mean = {_fmt(cfg.prices.e_mean)}",
        f"h_min = {_fmt(cfg.prices.h_min)}",
        f"h_max = {_fmt(cfg.prices.h_max)}",
        f"h_mean = {_fmt(cfg.prices.h_mean)}",
        f"psi = {_fmt(cfg.psi)}",
        f"dr_compensation = {_fmt(cfg.dr_compensation)}",
        f"curtail_penalty = {_fmt(cfg.curtail_penalty)}",
        f"shift_fraction = {_fmt(cfg.shift_fraction)}",
        f"shift_bounds_frac = {_fmt(cfg.shift_bounds_frac)}",
        "",
        "[solver]",
        f"big_m = {_fmt(cfg.big_m)}",
        f"gap_tol = {_fmt(cfg.gap_tol)}",
        f"qp_tol = {_fmt(cfg.qp_tol)}",
        f"reserve_z = {_fmt(cfg.reserve_z)}",
        "",
        "[run]",
        "profile = profile.csv",
        "mode = 5",
        "seed = 0",
        "out = out",
        "",
    ]
    path = os.path.join(outdir, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines))
    return path


def write_outputs(sched, summary, outdir: str, equilibrium=None) -> list[str]:
    """Emit schedule.csv, summary.csv, kkt_report.txt and plot series."""
    os.makedirs(outdir, exist_ok=True)
    T = len(sched.price_e)
    written = []

    series_cols = list(sched.series.keys())
    header = (["hour", "kappa_e", "kappa_h"] + series_cols
              + ["shift", "cut_res", "cut_pub", "reserve"])
    rows = []
    for t in range(T):
        rows.append([t, sched.price_e[t], sched.price_h[t]]
                    + [sched.series[k][t] for k in series_cols]
                    + [sched.shift[t], sched.cut_res[t], sched.cut_pub[t], sched.reserve[t]])
    p = os.path.join(outdir, "schedule.csv")
    _write_csv(p, header, rows)
    written.append(p)

    p = os.path.join(outdir, "summary.csv")
    _write_csv(p, [
        "mode", "net_revenue", "earnings", "operating_cost", "user_energy_cost",
        "comfort_loss_cost", "user_overall_cost", "total_heat_cut_mwh", "chp_heat_mwh",
        "solver_status", "gap", "nodes",
    ], [[
        summary.mode, summary.net_revenue, summary.earnings, summary.operating_cost,
        summary.user_energy_cost, summary.comfort_loss_cost, summary.user_overall_cost,
        summary.total_heat_cut_mwh, summary.chp_heat_mwh,
        summary.solver_status, summary.gap, summary.nodes,
    ]])
    written.append(p)

    lines = [
        f"mode: {sched.mode}",
        f"solver status: {sched.status}",
        f"objective: {sched.objective!r}",
        f"certified bound: {sched.bound!r}",
        f"relative gap: {sched.gap!r}",
        f"nodes: {sched.nodes}",
        f"runtime_s: {sched.runtime_s:.3f}",
        "",
        "[first-order and balance audit]",
    ]
    lines += [f"{k}: {v!r}" for k, v in sched.audits.items()]
    if summary.notes:
        lines += ["", "[notes]"] + [f"- {n}" for n in summary.notes]
    if equilibrium is not None:
        lines += [
            "",
            "[equilibrium probe]",
            f"passed: {equilibrium.passed}",
            f"price perturbations tried: {equilibrium.n_perturb}",
            f"worst profit improvement found: {equilibrium.worst_improvement!r}",
            f"baseline profit: {equilibrium.baseline_profit!r}",
            f"customer objective mismatch: {equilibrium.follower_objective_diff!r}",
            f"customer lever mismatch: {equilibrium.follower_primal_diff!r}",
        ]
        lines += [f"violation: {v}" for v in equilibrium.violations]
    p = os.path.join(outdir, "kkt_report.txt")
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    written.append(p)

    base = getattr(sched, "base_load", None)
    # plot_load: demand before and after the shift response
    p = os.path.join(outdir, "plot_load.csv")
    base_load = base if base is not None else np.zeros(T)
    _write_csv(p, ["hour", "load_before", "load_after", "kappa_e"],
               [[t, base_load[t], base_load[t] + sched.shift[t], sched.price_e[t]]
                for t in range(T)])
    written.append(p)

    p = os.path.join(outdir, "plot_heat_cut.csv")
    _write_csv(p, ["hour", "kappa_h", "cut_res", "cut_pub"],
               [[t, sched.price_h[t], sched.cut_res[t], sched.cut_pub[t]] for t in range(T)])
    written.append(p)
    return written


def write_modes_table(summaries, flags, outdir: str) -> list[str]:
    """Comparison table across modes plus report-only trend notes."""
    os.makedirs(outdir, exist_ok=True)
    p = os.path.join(outdir, "modes_summary.csv")
    _write_csv(p, [
        "mode", "net_revenue", "earnings", "operating_cost", "user_energy_cost",
        "comfort_loss_cost", "user_overall_cost", "total_heat_cut_mwh", "chp_heat_mwh",
        "solver_status", "gap", "nodes",
    ], [[
        s.mode, s.net_revenue, s.earnings, s.operating_cost, s.user_energy_cost,
        s.comfort_loss_cost, s.user_overall_cost, s.total_heat_cut_mwh, s.chp_heat_mwh,
        s.solver_status, s.gap, s.nodes,
    ] for s in summaries])
    t = os.path.join(outdir, "trend_report.txt")
    with open(t, "w", encoding="utf-8", newline="") as fh:
        if flags:
            fh.write("\n".join(flags) + "\n")
        else:
            fh.write("all report-only trends hold on this dataset\n")
    return [p, t]


def write_sensitivity_table(rows, outdir: str) -> str:
    """Residential-share sweep results, one row per share value."""
    os.makedirs(outdir, exist_ok=True)
    p = os.path.join(outdir, "plot_sensitivity.csv")
    _write_csv(p, [
        "k", "net_revenue", "earnings", "operating_cost", "user_energy_cost",
        "comfort_loss_cost", "user_overall_cost", "total_heat_cut_mwh", "chp_heat_mwh",
        "cut_bound_mass_mwh",
    ], [[
        r.k, r.summary.net_revenue, r.summary.earnings, r.summary.operating_cost,
        r.summary.user_energy_cost, r.summary.comfort_loss_cost,
        r.summary.user_overall_cost, r.summary.total_heat_cut_mwh,
        r.summary.chp_heat_mwh, r.cut_bound_mass,
    ] for r in rows])
    return p
