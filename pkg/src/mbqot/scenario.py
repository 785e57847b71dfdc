"""Link scenario data model and validated construction from TOML documents.

Schema (all sections except ``plan``, ``fibers`` and ``spans`` optional)::

    name = "C+L+S 10x100 km"
    isrs_enabled = true
    reference_temperature_k = 300.0

    [plan]
    spacing_ghz = 118.75
    symbol_rate_gbd = 100.0
    roll_off = 0.1
    per_band_count = 50              # grid mode; or give [[plan.channels]]
    [[plan.bands]]
    name = "L"
    f_min = 184.50
    f_max = 190.45

    [fibers.smf]                     # every key optional, defaults = synthetic SMF
    loss_anchors = [[184.5, 0.177], [190.0, 0.186], [196.5, 0.197]]
    rayleigh_a = 0.5                 # optional, pins the 1/lambda^4 coefficient
    lambda0_nm = 1310.0
    s0 = 0.092
    n2 = 2.6e-20
    core_radius_um = 4.1
    numerical_aperture = 0.12
    flat_at_thz = 193.0              # optional, freezes all parameters
    raman_table = "default"          # or a CSV path, relative to the config file
    raman_ref_pump_thz = 206.5
    raman_rows = [[0.0, 0.0], ...]   # inline alternative to raman_table

    [[spans]]
    fiber = "smf"
    length_km = 100.0
    lumped_loss_db = 3.5
    repeat = 10
    amplifiers = [{band = "L", noise_figure_db = 6.0}, ...]
    pumps = [{freq_thz = 212.0, power_dbm = 21.0, max_power_dbm = 24.0, min_freq_thz = 211.5}]

    [launch]
    power_dbm = 0.0                  # or per_band_dbm = {L = 0.0} / per_channel_dbm = [...]

    [ir_curve]
    table = "default"                # or CSV path, or rows = [[gsnr_dB, rate_Tbps], ...]

    [solver]
    z_step_km = 0.1
    bvp_tol = 1e-6
    max_iter = 200
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import tomli_w

from .fiber import FiberSpec, RamanTable
from .metrics import IrCurve

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_EPS = 1e-9


class ScenarioError(ValueError):
    """Validation failure; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ScenarioParseError(ScenarioError):
    pass


@dataclass(frozen=True)
class Band:
    name: str
    f_min: float
    f_max: float

    def contains(self, f: float) -> bool:
        return self.f_min - _EPS <= f <= self.f_max + _EPS


@dataclass(frozen=True)
class Channel:
    center_thz: float
    symbol_rate_gbd: float
    roll_off: float
    band: str

    @property
    def occupied_ghz(self) -> float:
        return self.symbol_rate_gbd * (1.0 + self.roll_off)


@dataclass(frozen=True)
class ChannelPlan:
    channels: tuple[Channel, ...]
    spacing_ghz: float
    bands: tuple[Band, ...] = ()

    def __post_init__(self):
        _validate_plan(self)

    def __len__(self):
        return len(self.channels)

    @property
    def freqs(self) -> np.ndarray:
        return np.array([c.center_thz for c in self.channels])

    @property
    def symbol_rates(self) -> np.ndarray:
        return np.array([c.symbol_rate_gbd for c in self.channels])

    @property
    def band_labels(self) -> list[str]:
        return [c.band for c in self.channels]

    def band_indices(self, name: str) -> np.ndarray:
        return np.array([i for i, c in enumerate(self.channels) if c.band == name], dtype=int)

    @property
    def band_names(self) -> list[str]:
        seen: list[str] = []
        for c in self.channels:
            if c.band not in seen:
                seen.append(c.band)
        return seen


def _validate_plan(plan: ChannelPlan) -> None:
    bands = plan.bands
    for k, b in enumerate(bands):
        if not b.f_min < b.f_max:
            raise ScenarioError(f"plan.bands[{k}]", f"f_min {b.f_min} must be < f_max {b.f_max}")
        if k and bands[k - 1].f_max > b.f_min:
            raise ScenarioError(f"plan.bands[{k}]", "bands must be sorted and non-overlapping")
    if not plan.channels:
        raise ScenarioError("plan.channels", "channel plan must not be empty")
    if plan.spacing_ghz <= 0:
        raise ScenarioError("plan.spacing_ghz", "spacing must be positive")
    by_name = {b.name: b for b in bands}
    prev = -np.inf
    for i, ch in enumerate(plan.channels):
        p = f"plan.channels[{i}]"
        if ch.symbol_rate_gbd <= 0 or ch.roll_off < 0:
            raise ScenarioError(p, "symbol rate must be positive and roll-off non-negative")
        if ch.occupied_ghz > plan.spacing_ghz + _EPS:
            raise ScenarioError(
                p, f"occupied bandwidth {ch.occupied_ghz:g} GHz exceeds spacing {plan.spacing_ghz:g} GHz"
            )
        if not ch.center_thz > prev:
            raise ScenarioError(p, "channel centers must be strictly increasing")
        prev = ch.center_thz
        if bands:
            b = by_name.get(ch.band)
            if b is None:
                raise ScenarioError(p, f"unknown band {ch.band!r}")
            if not b.contains(ch.center_thz):
                raise ScenarioError(p, f"center {ch.center_thz} THz outside band {b.name}")


def build_channel_grid(bands: Sequence[Band], per_band_count: int, spacing_ghz: float,
                       symbol_rate_gbd: float, roll_off: float) -> ChannelPlan:
    """Uniform grid per band: f_k = f_min + spacing/2 + k * spacing."""
    if per_band_count < 1:
        raise ScenarioError("plan.per_band_count", "must be >= 1")
    if symbol_rate_gbd * (1 + roll_off) > spacing_ghz + _EPS:
        raise ScenarioError(
            "plan.spacing_ghz",
            f"occupied bandwidth {symbol_rate_gbd * (1 + roll_off):g} GHz exceeds spacing {spacing_ghz:g} GHz",
        )
    df = spacing_ghz / 1e3
    chans = []
    for k, b in enumerate(bands):
        top = b.f_min + per_band_count * df
        if top > b.f_max + _EPS:
            raise ScenarioError(
                f"plan.bands[{k}]",
                f"grid of {per_band_count} x {spacing_ghz:g} GHz overflows band {b.name} "
                f"upper edge by {(top - b.f_max) * 1e3:.3f} GHz",
            )
        for n in range(per_band_count):
            f = round(b.f_min + df * (n + 0.5), 9)
            chans.append(Channel(f, float(symbol_rate_gbd), float(roll_off), b.name))
    return ChannelPlan(tuple(chans), float(spacing_ghz), tuple(bands))


@dataclass(frozen=True)
class PumpSpec:
    freq_thz: float
    power_dbm: float
    direction: str = "backward"
    max_power_dbm: float | None = None
    min_freq_thz: float | None = None

    def __post_init__(self):
        if self.direction != "backward":
            raise ScenarioError("pump.direction", "only backward pumping is implemented")
        if self.max_power_dbm is not None and self.power_dbm > self.max_power_dbm + _EPS:
            raise ScenarioError("pump.power_dbm", f"{self.power_dbm} dBm above cap {self.max_power_dbm} dBm")
        if self.min_freq_thz is not None and self.freq_thz < self.min_freq_thz - _EPS:
            raise ScenarioError("pump.freq_thz", f"{self.freq_thz} THz below floor {self.min_freq_thz} THz")


@dataclass(frozen=True)
class AmplifierSpec:
    band: str
    noise_figure_db: float
    gain_mode: str = "restore_launch"

    def __post_init__(self):
        if self.noise_figure_db < 3.0:
            raise ScenarioError("amplifier.noise_figure_db", "lumped amplifier noise figure must be >= 3 dB")
        if self.gain_mode != "restore_launch":
            raise ScenarioError("amplifier.gain_mode", f"unsupported gain mode {self.gain_mode!r}")


@dataclass(frozen=True)
class SpanSpec:
    fiber: FiberSpec
    length_km: float
    lumped_loss_db: float = 0.0
    amplifiers: tuple[AmplifierSpec, ...] = ()
    pumps: tuple[PumpSpec, ...] = ()
    fiber_name: str = "fiber"

    def __post_init__(self):
        if not self.length_km > 0:
            raise ScenarioError("span.length_km", "span length must be > 0")
        if self.lumped_loss_db < 0:
            raise ScenarioError("span.lumped_loss_db", "lumped loss must be >= 0")

    def noise_figure(self, band: str) -> float:
        for a in self.amplifiers:
            if a.band == band:
                return a.noise_figure_db
        raise ScenarioError("span.amplifiers", f"no amplifier for band {band!r}")


@dataclass(frozen=True)
class SolverOptions:
    z_step_km: float = 0.1
    bvp_tol: float = 1e-6
    max_iter: int = 200

    def __post_init__(self):
        if not 0 < self.z_step_km <= 5.0:
            raise ScenarioError("solver.z_step_km", "z step must be in (0, 5] km")
        if not self.bvp_tol > 0 or self.max_iter < 1:
            raise ScenarioError("solver", "bvp_tol must be > 0 and max_iter >= 1")


@dataclass(frozen=True)
class Scenario:
    plan: ChannelPlan
    spans: tuple[SpanSpec, ...]
    launch_dbm: tuple[float, ...]
    isrs_enabled: bool = True
    reference_temperature_k: float = 300.0
    ir_curve: IrCurve = field(default_factory=IrCurve.default)
    solver: SolverOptions = field(default_factory=SolverOptions)
    name: str = ""

    def __post_init__(self):
        if not self.spans:
            raise ScenarioError("spans", "spans must be non-empty")
        if len(self.launch_dbm) != len(self.plan):
            raise ScenarioError(
                "launch", f"launch spectrum has {len(self.launch_dbm)} entries for {len(self.plan)} channels"
            )
        if self.reference_temperature_k <= 0:
            raise ScenarioError("reference_temperature_k", "temperature must be positive")
        for s, span in enumerate(self.spans):
            for band in self.plan.band_names:
                try:
                    span.noise_figure(band)
                except ScenarioError as exc:
                    raise ScenarioError(f"spans[{s}].amplifiers", str(exc).split(": ", 1)[1]) from None

    @property
    def n_channels(self) -> int:
        return len(self.plan)

    @property
    def launch_w(self) -> np.ndarray:
        return 1e-3 * 10.0 ** (np.asarray(self.launch_dbm) / 10.0)

    def with_launch(self, launch_dbm) -> "Scenario":
        return replace(self, launch_dbm=tuple(float(x) for x in np.broadcast_to(launch_dbm, (self.n_channels,))))

    def with_pumps(self, pumps: Sequence[PumpSpec]) -> "Scenario":
        return replace(self, spans=tuple(replace(s, pumps=tuple(pumps)) for s in self.spans))

    def with_isrs(self, enabled: bool) -> "Scenario":
        return replace(self, isrs_enabled=bool(enabled))

    def with_solver(self, **kw) -> "Scenario":
        return replace(self, solver=replace(self.solver, **kw))

    @property
    def pumps(self) -> tuple[PumpSpec, ...]:
        return self.spans[0].pumps


# --------------------------------------------------------------------------- parsing


def _get(d: dict, key: str, path: str, default=None, required=False):
    if key not in d:
        if required:
            raise ScenarioError(f"{path}.{key}" if path else key, "missing required field")
        return default
    return d[key]


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(path, f"expected a number, got {v!r}")
    return float(v)


def _table(v, path) -> dict:
    if not isinstance(v, dict):
        raise ScenarioError(path, "expected a table")
    return v


def _rows(v, path) -> list[tuple[float, float]]:
    if not isinstance(v, list) or not v:
        raise ScenarioError(path, "expected a non-empty array of [x, y] pairs")
    out = []
    for k, r in enumerate(v):
        if not isinstance(r, list) or len(r) != 2:
            raise ScenarioError(f"{path}[{k}]", "expected an [x, y] pair")
        out.append((_num(r[0], f"{path}[{k}]"), _num(r[1], f"{path}[{k}]")))
    return out


def _resolve(path_str: str, base: Path | None) -> Path:
    p = Path(path_str)
    if not p.is_absolute() and base is not None:
        p = base / p
    return p


def _parse_plan(d: dict) -> ChannelPlan:
    path = "plan"
    d = _table(d, path)
    bands = []
    for k, b in enumerate(_get(d, "bands", path, [])):
        bp = f"plan.bands[{k}]"
        b = _table(b, bp)
        bands.append(Band(str(_get(b, "name", bp, required=True)),
                          _num(_get(b, "f_min", bp, required=True), f"{bp}.f_min"),
                          _num(_get(b, "f_max", bp, required=True), f"{bp}.f_max")))
    spacing = _num(_get(d, "spacing_ghz", path, required=True), "plan.spacing_ghz")
    if "channels" in d:
        chans = []
        for k, c in enumerate(d["channels"]):
            cp = f"plan.channels[{k}]"
            c = _table(c, cp)
            chans.append(Channel(
                _num(_get(c, "center_thz", cp, required=True), f"{cp}.center_thz"),
                _num(_get(c, "symbol_rate_gbd", cp, required=True), f"{cp}.symbol_rate_gbd"),
                _num(_get(c, "roll_off", cp, 0.0), f"{cp}.roll_off"),
                str(_get(c, "band", cp, bands[0].name if bands else "custom")),
            ))
        return ChannelPlan(tuple(chans), spacing, tuple(bands))
    if not bands:
        raise ScenarioError("plan.bands", "grid mode needs at least one band")
    count = _get(d, "per_band_count", path, required=True)
    if isinstance(count, bool) or not isinstance(count, int):
        raise ScenarioError("plan.per_band_count", "expected an integer")
    return build_channel_grid(
        bands, count, spacing,
        _num(_get(d, "symbol_rate_gbd", path, required=True), "plan.symbol_rate_gbd"),
        _num(_get(d, "roll_off", path, 0.0), "plan.roll_off"),
    )


_FIBER_KEYS = {"loss_anchors", "rayleigh_a", "lambda0_nm", "s0", "n2", "core_radius_um",
               "numerical_aperture", "flat_at_thz", "raman_table", "raman_ref_pump_thz", "raman_rows"}


def _parse_fiber(name: str, d: dict, base: Path | None) -> FiberSpec:
    path = f"fibers.{name}"
    d = _table(d, path)
    unknown = set(d) - _FIBER_KEYS
    if unknown:
        raise ScenarioError(path, f"unknown keys {sorted(unknown)}")
    kw: dict[str, Any] = {}
    if "loss_anchors" in d:
        kw["loss_anchors"] = tuple(_rows(d["loss_anchors"], f"{path}.loss_anchors"))
    for key in ("rayleigh_a", "lambda0_nm", "s0", "n2", "core_radius_um", "numerical_aperture", "flat_at_thz"):
        if key in d:
            kw[key] = _num(d[key], f"{path}.{key}")
    ref = _num(d.get("raman_ref_pump_thz", 206.5), f"{path}.raman_ref_pump_thz")
    try:
        if "raman_rows" in d:
            det, cr = zip(*_rows(d["raman_rows"], f"{path}.raman_rows"))
            kw["raman"] = RamanTable(ref, tuple(det), tuple(cr))
        elif d.get("raman_table", "default") != "default":
            p = _resolve(str(d["raman_table"]), base)
            if not p.exists():
                raise ScenarioError(f"{path}.raman_table", f"file not found: {p}")
            kw["raman"] = RamanTable.from_csv(p, pump_ref_thz=ref)
        elif ref != 206.5:
            t = RamanTable.default()
            kw["raman"] = RamanTable(ref, t.detuning_thz, t.c_r)
        return FiberSpec(**kw)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


def _parse_pump(p: dict, path: str) -> PumpSpec:
    p = _table(p, path)
    try:
        return PumpSpec(
            _num(_get(p, "freq_thz", path, required=True), f"{path}.freq_thz"),
            _num(_get(p, "power_dbm", path, required=True), f"{path}.power_dbm"),
            str(p.get("direction", "backward")),
            None if "max_power_dbm" not in p else _num(p["max_power_dbm"], f"{path}.max_power_dbm"),
            None if "min_freq_thz" not in p else _num(p["min_freq_thz"], f"{path}.min_freq_thz"),
        )
    except ScenarioError as exc:
        raise ScenarioError(f"{path}.{exc.path.split('.')[-1]}", str(exc).split(": ", 1)[1]) from None


def _parse_spans(items, fibers: dict[str, FiberSpec]) -> tuple[SpanSpec, ...]:
    if not isinstance(items, list):
        raise ScenarioError("spans", "expected an array of tables")
    spans = []
    for k, s in enumerate(items):
        path = f"spans[{k}]"
        s = _table(s, path)
        fname = str(_get(s, "fiber", path, required=True))
        if fname not in fibers:
            raise ScenarioError(f"{path}.fiber", f"unknown fiber {fname!r}")
        amps = []
        for a, amp in enumerate(_get(s, "amplifiers", path, [])):
            ap = f"{path}.amplifiers[{a}]"
            amp = _table(amp, ap)
            try:
                amps.append(AmplifierSpec(str(_get(amp, "band", ap, required=True)),
                                          _num(_get(amp, "noise_figure_db", ap, required=True), f"{ap}.noise_figure_db"),
                                          str(amp.get("gain_mode", "restore_launch"))))
            except ScenarioError as exc:
                if exc.path.startswith(ap):
                    raise
                raise ScenarioError(ap, str(exc).split(": ", 1)[1]) from None
        pumps = tuple(_parse_pump(p, f"{path}.pumps[{j}]") for j, p in enumerate(_get(s, "pumps", path, [])))
        repeat = _get(s, "repeat", path, 1)
        if isinstance(repeat, bool) or not isinstance(repeat, int) or repeat < 1:
            raise ScenarioError(f"{path}.repeat", "repeat must be a positive integer")
        try:
            span = SpanSpec(fibers[fname], _num(_get(s, "length_km", path, required=True), f"{path}.length_km"),
                            _num(_get(s, "lumped_loss_db", path, 0.0), f"{path}.lumped_loss_db"),
                            tuple(amps), pumps, fname)
        except ScenarioError as exc:
            if exc.path.startswith(path):
                raise
            raise ScenarioError(f"{path}.{exc.path.split('.')[-1]}", str(exc).split(": ", 1)[1]) from None
        spans.extend([span] * repeat)
    return tuple(spans)


def _parse_launch(d: dict, plan: ChannelPlan) -> tuple[float, ...]:
    d = _table(d, "launch")
    n = len(plan)
    if "per_channel_dbm" in d:
        v = d["per_channel_dbm"]
        if not isinstance(v, list):
            raise ScenarioError("launch.per_channel_dbm", "expected an array")
        return tuple(_num(x, f"launch.per_channel_dbm[{i}]") for i, x in enumerate(v))
    if "per_band_dbm" in d:
        pb = _table(d["per_band_dbm"], "launch.per_band_dbm")
        out = []
        for c in plan.channels:
            if c.band not in pb:
                raise ScenarioError("launch.per_band_dbm", f"missing band {c.band!r}")
            out.append(_num(pb[c.band], f"launch.per_band_dbm.{c.band}"))
        return tuple(out)
    return (_num(d.get("power_dbm", 0.0), "launch.power_dbm"),) * n


def _parse_ir(d, base: Path | None) -> IrCurve:
    d = _table(d, "ir_curve")
    try:
        if "rows" in d:
            g, r = zip(*_rows(d["rows"], "ir_curve.rows"))
            return IrCurve(tuple(g), tuple(r))
        table = d.get("table", "default")
        if table == "default":
            return IrCurve.default()
        p = _resolve(str(table), base)
        if not p.exists():
            raise ScenarioError("ir_curve.table", f"file not found: {p}")
        return IrCurve.from_csv(p)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError("ir_curve", str(exc)) from None


def scenario_from_dict(doc: dict, base_dir: Path | None = None) -> Scenario:
    plan = _parse_plan(_get(doc, "plan", "", required=True))
    fibers_doc = _table(_get(doc, "fibers", "", {"smf": {}}), "fibers")
    fibers = {name: _parse_fiber(name, fd, base_dir) for name, fd in fibers_doc.items()}
    spans = _parse_spans(_get(doc, "spans", "", []), fibers)
    launch = _parse_launch(doc.get("launch", {}), plan)
    solver_doc = _table(doc.get("solver", {}), "solver")
    solver = SolverOptions(
        _num(solver_doc.get("z_step_km", 0.1), "solver.z_step_km"),
        _num(solver_doc.get("bvp_tol", 1e-6), "solver.bvp_tol"),
        int(solver_doc.get("max_iter", 200)),
    )
    isrs = doc.get("isrs_enabled", True)
    if not isinstance(isrs, bool):
        raise ScenarioError("isrs_enabled", "expected true/false")
    return Scenario(
        plan=plan,
        spans=spans,
        launch_dbm=launch,
        isrs_enabled=isrs,
        reference_temperature_k=_num(doc.get("reference_temperature_k", 300.0), "reference_temperature_k"),
        ir_curve=_parse_ir(doc.get("ir_curve", {}), base_dir),
        solver=solver,
        name=str(doc.get("name", "")),
    )


def load_scenario(config_text: str, base_dir: Path | str | None = None) -> Scenario:
    """Parse and validate a TOML scenario document."""
    try:
        doc = tomllib.loads(config_text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioParseError("<document>", f"malformed TOML: {exc}") from None
    return scenario_from_dict(doc, Path(base_dir) if base_dir is not None else None)


def load_scenario_file(path) -> Scenario:
    path = Path(path)
    return load_scenario(path.read_text(), base_dir=path.parent)


def default_scenario(*, raman: bool = False) -> Scenario:
    """Shipped synthetic C+L+S 10 x 100 km scenario (optionally with 3 backward pumps)."""
    name = "default_cls_raman.toml" if raman else "default_cls.toml"
    ref = resources.files("mbqot") / "data" / name
    return load_scenario(ref.read_text())


# --------------------------------------------------------------------------- export


def _fiber_dict(f: FiberSpec) -> dict:
    d: dict[str, Any] = {
        "loss_anchors": [list(a) for a in f.loss_anchors],
        "lambda0_nm": f.lambda0_nm,
        "s0": f.s0,
        "n2": f.n2,
        "core_radius_um": f.core_radius_um,
        "numerical_aperture": f.numerical_aperture,
        "raman_ref_pump_thz": f.raman.pump_ref_thz,
        "raman_rows": [[a, b] for a, b in zip(f.raman.detuning_thz, f.raman.c_r)],
    }
    if f.rayleigh_a is not None:
        d["rayleigh_a"] = f.rayleigh_a
    if f.flat_at_thz is not None:
        d["flat_at_thz"] = f.flat_at_thz
    return d


def scenario_to_dict(sc: Scenario) -> dict:
    """Fully resolved document; ``scenario_from_dict`` of it reproduces ``sc``."""
    fibers: dict[str, FiberSpec] = {}
    names: list[str] = []
    for s in sc.spans:
        name = s.fiber_name
        k = 1
        while name in fibers and fibers[name] != s.fiber:
            name = f"{s.fiber_name}_{k}"
            k += 1
        fibers[name] = s.fiber
        names.append(name)

    def pump(p: PumpSpec) -> dict:
        d = {"freq_thz": p.freq_thz, "power_dbm": p.power_dbm, "direction": p.direction}
        if p.max_power_dbm is not None:
            d["max_power_dbm"] = p.max_power_dbm
        if p.min_freq_thz is not None:
            d["min_freq_thz"] = p.min_freq_thz
        return d

    spans = [{
        "fiber": n,
        "length_km": s.length_km,
        "lumped_loss_db": s.lumped_loss_db,
        "amplifiers": [{"band": a.band, "noise_figure_db": a.noise_figure_db, "gain_mode": a.gain_mode}
                       for a in s.amplifiers],
        "pumps": [pump(p) for p in s.pumps],
    } for n, s in zip(names, sc.spans)]
    return {
        "name": sc.name,
        "isrs_enabled": sc.isrs_enabled,
        "reference_temperature_k": sc.reference_temperature_k,
        "plan": {
            "spacing_ghz": sc.plan.spacing_ghz,
            "bands": [{"name": b.name, "f_min": b.f_min, "f_max": b.f_max} for b in sc.plan.bands],
            "channels": [{"center_thz": c.center_thz, "symbol_rate_gbd": c.symbol_rate_gbd,
                          "roll_off": c.roll_off, "band": c.band} for c in sc.plan.channels],
        },
        "fibers": {n: _fiber_dict(f) for n, f in fibers.items()},
        "spans": spans,
        "launch": {"per_channel_dbm": list(sc.launch_dbm)},
        "ir_curve": {"rows": [[g, r] for g, r in zip(sc.ir_curve.gsnr_db, sc.ir_curve.rate_tbps)]},
        "solver": {"z_step_km": sc.solver.z_step_km, "bvp_tol": sc.solver.bvp_tol,
                   "max_iter": sc.solver.max_iter},
    }


def dump_scenario(sc: Scenario) -> str:
    """Serialize to TOML."""
    return tomli_w.dumps(scenario_to_dict(sc))


def scenario_json(sc: Scenario, indent: int | None = 2) -> str:
    return json.dumps(scenario_to_dict(sc), indent=indent, sort_keys=True)


def scenario_hash(sc: Scenario) -> str:
    """SHA-256 of the canonical JSON form; equal for semantically identical configs.

    Labels (scenario name, fiber table names) do not enter the hash.
    """
    doc = scenario_to_dict(sc)
    doc.pop("name")
    rename = {n: f"fiber{k}" for k, n in enumerate(doc["fibers"])}
    doc["fibers"] = {rename[n]: v for n, v in doc["fibers"].items()}
    for s in doc["spans"]:
        s["fiber"] = rename[s["fiber"]]
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()
