"""Launch-spectrum and Raman-pump optimization.

Two stages share one evaluation budget:

1. a Nelder-Mead search over a coarse parameterization (per-band offset and
   linear tilt of the launch spectrum, plus power and frequency of each pump);
2. a cyclic coordinate search over the full decision vector (per-channel
   launch powers in ``per_channel`` mode) with a step that shrinks from
   0.5 dB to 0.05 dB whenever a full sweep brings no improvement.

Every candidate is projected onto the constraint set before it is evaluated.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .metrics import ChannelMetrics, gsnr_peak_to_peak
from .nli import NliError
from .power import LinkPropagation, PowerEvolutionError, link_propagate
from .scenario import PumpSpec, Scenario
from .simulate import SimulationResult, simulate

log = logging.getLogger(__name__)

#: objective value recorded for candidates the physical model cannot evaluate
PENALTY = -1.0e3
#: launch changes below this (dB, every channel) reuse the previous power profiles
REUSE_DB = 0.01
#: relative slack on the total-pump-power check, covers caps rounded to whole dBm
TOTAL_CAP_SLACK = 0.005

EQ1 = "mean_ir"
EQ2 = "mean_ir_minus_spread"


class InfeasibleConstraintsError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: str = EQ1

    def __post_init__(self):
        if self.kind not in (EQ1, EQ2):
            raise ValueError(f"unknown objective {self.kind!r}; expected {EQ1!r} or {EQ2!r}")

    @classmethod
    def from_cli(cls, name: str) -> "ObjectiveSpec":
        return cls({"eq1": EQ1, "eq2": EQ2}.get(name, name))

    def __call__(self, rates) -> float:
        r = np.asarray(rates, dtype=float)
        if r.size == 0:
            raise ValueError("objective needs at least one channel")
        value = float(np.mean(r))
        if self.kind == EQ2:
            value -= float(np.max(r) - np.min(r))
        return value


@dataclass(frozen=True)
class DecisionVector:
    """Launch spectrum plus pump settings.

    In ``per_band_tilt`` mode ``launch_params`` holds (offset dBm, tilt dB/THz)
    per band, the tilt being taken about the band's channel-center mean.
    """

    launch_mode: str
    launch_params: tuple[float, ...]
    pump_powers_dbm: tuple[float, ...] = ()
    pump_freqs_thz: tuple[float, ...] = ()

    def __post_init__(self):
        if self.launch_mode not in ("per_channel", "per_band_tilt"):
            raise ValueError(f"unknown launch mode {self.launch_mode!r}")
        if len(self.pump_powers_dbm) != len(self.pump_freqs_thz):
            raise ValueError("pump powers and frequencies must have equal length")

    @property
    def n_pumps(self) -> int:
        return len(self.pump_powers_dbm)

    def as_array(self) -> np.ndarray:
        return np.r_[self.launch_params, self.pump_powers_dbm, self.pump_freqs_thz].astype(float)

    def with_array(self, x) -> "DecisionVector":
        x = np.asarray(x, dtype=float)
        n = len(self.launch_params)
        m = self.n_pumps
        return replace(self, launch_params=tuple(x[:n]), pump_powers_dbm=tuple(x[n:n + m]),
                       pump_freqs_thz=tuple(x[n + m:n + 2 * m]))

    def launch_dbm(self, scenario: Scenario) -> np.ndarray:
        if self.launch_mode == "per_channel":
            if len(self.launch_params) != scenario.n_channels:
                raise ValueError("per-channel launch vector length differs from the channel count")
            return np.asarray(self.launch_params, dtype=float)
        plan = scenario.plan
        names = plan.band_names
        if len(self.launch_params) != 2 * len(names):
            raise ValueError("per-band launch needs an (offset, tilt) pair per band")
        out = np.empty(len(plan))
        f = plan.freqs
        for k, name in enumerate(names):
            idx = plan.band_indices(name)
            off, tilt = self.launch_params[2 * k:2 * k + 2]
            out[idx] = off + tilt * (f[idx] - f[idx].mean())
        return out

    def to_per_channel(self, scenario: Scenario) -> "DecisionVector":
        return replace(self, launch_mode="per_channel", launch_params=tuple(self.launch_dbm(scenario)))

    def pumps(self, template: Sequence[PumpSpec]) -> tuple[PumpSpec, ...]:
        return tuple(
            replace(t, power_dbm=float(p), freq_thz=float(f))
            for t, p, f in zip(template, self.pump_powers_dbm, self.pump_freqs_thz)
        )

    def apply(self, scenario: Scenario) -> Scenario:
        sc = scenario.with_launch(self.launch_dbm(scenario))
        if self.n_pumps:
            sc = sc.with_pumps(self.pumps(scenario.pumps))
        return sc

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Constraints:
    launch_min_dbm: float = -10.0
    launch_max_dbm: float = 10.0
    pump_max_dbm: tuple[float, ...] = ()
    pump_min_dbm: float = 0.0
    pump_min_freq_thz: float = 211.5
    pump_max_freq_thz: float = 225.0
    total_pump_w: float = 1.0
    tilt_max_db_per_thz: float = 2.0

    @classmethod
    def from_scenario(cls, scenario: Scenario, **kw) -> "Constraints":
        pumps = scenario.pumps
        caps = tuple(p.max_power_dbm if p.max_power_dbm is not None else p.power_dbm for p in pumps)
        floors = [p.min_freq_thz for p in pumps if p.min_freq_thz is not None]
        base = {"pump_max_dbm": caps}
        if floors:
            base["pump_min_freq_thz"] = max(floors)
        base.update(kw)
        return cls(**base)

    def check(self, n_pumps: int) -> None:
        """Raise InfeasibleConstraintsError when no point can satisfy the constraints."""
        problems = []
        if self.launch_min_dbm > self.launch_max_dbm:
            problems.append("launch_min_dbm above launch_max_dbm")
        if len(self.pump_max_dbm) != n_pumps:
            problems.append(f"{len(self.pump_max_dbm)} pump caps for {n_pumps} pumps")
        if n_pumps:
            if any(c < self.pump_min_dbm for c in self.pump_max_dbm):
                problems.append("a pump cap lies below the pump power floor")
            if self.pump_min_freq_thz > self.pump_max_freq_thz:
                problems.append("pump frequency floor above the ceiling")
            if self.total_pump_w <= 0:
                problems.append("total pump power cap must be positive")
            floor_total = n_pumps * 1e-3 * 10 ** (self.pump_min_dbm / 10)
            if floor_total > self.total_pump_w * (1 + TOTAL_CAP_SLACK):
                problems.append("pump power floors alone exceed the total pump cap")
            caps_total = sum(1e-3 * 10 ** (c / 10) for c in self.pump_max_dbm)
            if caps_total > self.total_pump_w * (1 + TOTAL_CAP_SLACK):
                problems.append(
                    f"per-pump caps sum to {caps_total:.4f} W, above the {self.total_pump_w} W total"
                )
        if problems:
            raise InfeasibleConstraintsError("; ".join(problems))

    def project(self, dv: DecisionVector, scenario: Scenario | None = None) -> DecisionVector:
        """Nearest feasible vector (box clipping, then uniform pump scale-down for the total cap).

        In tilt mode the scenario is needed to keep every band edge inside the launch bounds.
        """
        if dv.launch_mode == "per_channel":
            launch = np.clip(dv.launch_params, self.launch_min_dbm, self.launch_max_dbm)
        else:
            lp = np.asarray(dv.launch_params, dtype=float).reshape(-1, 2)
            lp[:, 0] = np.clip(lp[:, 0], self.launch_min_dbm, self.launch_max_dbm)
            tmax = np.full(len(lp), self.tilt_max_db_per_thz)
            if scenario is not None:
                f = scenario.plan.freqs
                for k, name in enumerate(scenario.plan.band_names):
                    fb = f[scenario.plan.band_indices(name)]
                    half = max(fb.max() - fb.mean(), fb.mean() - fb.min(), 1e-9)
                    room = min(lp[k, 0] - self.launch_min_dbm, self.launch_max_dbm - lp[k, 0])
                    tmax[k] = min(tmax[k], room / half)
            lp[:, 1] = np.clip(lp[:, 1], -tmax, tmax)
            launch = lp.ravel()
        pw = np.clip(dv.pump_powers_dbm, self.pump_min_dbm, np.asarray(self.pump_max_dbm)[:dv.n_pumps])
        fr = np.clip(dv.pump_freqs_thz, self.pump_min_freq_thz, self.pump_max_freq_thz)
        if dv.n_pumps:
            total = np.sum(1e-3 * 10 ** (pw / 10))
            if total > self.total_pump_w * (1 + TOTAL_CAP_SLACK):
                pw = pw - 10 * np.log10(total / self.total_pump_w)  # repair: uniform scale-down
        return replace(dv, launch_params=tuple(map(float, launch)),
                       pump_powers_dbm=tuple(map(float, pw)), pump_freqs_thz=tuple(map(float, fr)))

    def is_feasible(self, dv: DecisionVector, scenario: Scenario, tol: float = 1e-9) -> bool:
        launch = dv.launch_dbm(scenario)
        if np.any(launch < self.launch_min_dbm - tol) or np.any(launch > self.launch_max_dbm + tol):
            return False
        pw = np.asarray(dv.pump_powers_dbm)
        fr = np.asarray(dv.pump_freqs_thz)
        if dv.n_pumps:
            if np.any(pw > np.asarray(self.pump_max_dbm) + tol) or np.any(pw < self.pump_min_dbm - tol):
                return False
            if np.any(fr < self.pump_min_freq_thz - tol) or np.any(fr > self.pump_max_freq_thz + tol):
                return False
            if np.sum(1e-3 * 10 ** (pw / 10)) > self.total_pump_w * (1 + TOTAL_CAP_SLACK) + tol:
                return False
        return True


def default_pumps(n: int) -> tuple[PumpSpec, ...]:
    """Initial pump set: caps {24, 24, 27} dBm, frequencies {212, 214, 217} THz, powers 3 dB below cap."""
    freqs = (212.0, 214.0, 217.0)
    caps = (24.0, 24.0, 27.0)
    if n <= 3:
        chosen = list(zip(freqs, caps))[3 - n:] if n else []
    else:
        chosen = [(float(f), 24.0) for f in np.linspace(212.0, 218.0, n)]
    return tuple(PumpSpec(f, c - 3.0, "backward", c, 211.5) for f, c in chosen)


@dataclass
class OptimizationReport:
    objective: str
    best: DecisionVector
    best_value: float
    trace: list[tuple[int, float, float]]  # (evaluation index, value, best so far)
    metrics: list[ChannelMetrics]
    mean_ir_tbps: float
    spread_tbps: float
    throughput_tbps: float
    gsnr_pp_db: float
    evaluations: int
    wall_clock_s: float
    seed: int
    stages: dict = field(default_factory=dict)
    result: SimulationResult | None = None

    @property
    def gsnr_db(self) -> np.ndarray:
        return np.array([m.gsnr for m in self.metrics])

    def to_dict(self, *, timestamps: bool = False) -> dict:
        d = {
            "objective": self.objective,
            "best_value_tbps": self.best_value,
            "decision_vector": self.best.to_dict(),
            "mean_ir_tbps": self.mean_ir_tbps,
            "spread_tbps": self.spread_tbps,
            "throughput_tbps": self.throughput_tbps,
            "gsnr_pp_dB": self.gsnr_pp_db,
            "evaluations": self.evaluations,
            "seed": self.seed,
            "stages": self.stages,
            "trace": [list(t) for t in self.trace],
            "final_metrics": [m.as_dict() for m in self.metrics],
        }
        if timestamps:
            d["wall_clock_s"] = self.wall_clock_s
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2)


class _Evaluator:
    """Budgeted, memoised objective with profile reuse and pump warm starts."""

    def __init__(self, scenario: Scenario, obj: ObjectiveSpec, constraints: Constraints,
                 budget: int, z_step: float | None, trace=None):
        self.base = scenario if z_step is None else scenario.with_solver(z_step_km=z_step)
        self.obj = obj
        self.constraints = constraints
        self.budget = budget
        self.trace: list[tuple[int, float, float]] = list(trace or [])
        self.count = len(self.trace)
        self.best_value = max((t[1] for t in self.trace), default=-np.inf)
        self.best: DecisionVector | None = None
        self.memo: dict[tuple, float] = {}
        self.warm: dict = {}
        self._last: tuple[np.ndarray, tuple, LinkPropagation] | None = None

    @property
    def exhausted(self) -> bool:
        return self.count >= self.budget

    def _link(self, sc: Scenario) -> LinkPropagation:
        launch = np.asarray(sc.launch_dbm)
        if self._last is not None:
            l0, pumps0, link0 = self._last
            linear = not sc.isrs_enabled and not sc.pumps
            if pumps0 == sc.pumps and (linear or np.max(np.abs(launch - l0)) < REUSE_DB):
                factor = 10 ** ((launch - l0) / 10)
                profiles = []
                scaled: dict[int, object] = {}
                for p in link0.profiles:
                    if id(p) not in scaled:
                        scaled[id(p)] = p.scaled(factor)
                    profiles.append(scaled[id(p)])
                return LinkPropagation(profiles, link0.span_out_w * factor, link0.amp_gain,
                                       link0.raman_ase_w, link0.raman_ase_per_span)
        link = link_propagate(sc, warm=self.warm)
        self._last = (launch, sc.pumps, link)
        return link

    def simulate(self, dv: DecisionVector) -> SimulationResult:
        sc = dv.apply(self.base)
        return simulate(sc, link=self._link(sc))

    def __call__(self, dv: DecisionVector) -> float:
        dv = self.constraints.project(dv, self.base)
        key = tuple(np.round(dv.as_array(), 9))
        if key in self.memo:
            return self.memo[key]
        if self.exhausted:
            return -np.inf
        try:
            value = self.obj(self.simulate(dv).info_rates)
        except (PowerEvolutionError, NliError, ValueError) as exc:
            log.debug("evaluation %d failed: %s", self.count, exc)
            value = PENALTY
        self.count += 1
        if self.best is None or value > self.best_value:
            self.best, self.best_value = dv, value
        self.trace.append((self.count, float(value), float(self.best_value)))
        self.memo[key] = value
        return value


def _initial_vector(scenario: Scenario, mode: str, pumps: Sequence[PumpSpec]) -> DecisionVector:
    launch = np.asarray(scenario.launch_dbm, dtype=float)
    if mode == "per_band_tilt":
        params = []
        for name in scenario.plan.band_names:
            params += [float(np.mean(launch[scenario.plan.band_indices(name)])), 0.0]
        lp = tuple(params)
    else:
        lp = tuple(map(float, launch))
    return DecisionVector(mode, lp, tuple(p.power_dbm for p in pumps), tuple(p.freq_thz for p in pumps))


def _stage1(ev: _Evaluator, scenario: Scenario, start: DecisionVector, maxfev: int) -> DecisionVector:
    """Nelder-Mead over (offset, tilt) per band plus pump power and frequency."""
    # start from the band means and least-squares tilts of the current launch
    launch = start.launch_dbm(scenario)
    f = scenario.plan.freqs
    lp = []
    for name in scenario.plan.band_names:
        idx = scenario.plan.band_indices(name)
        fc = f[idx] - f[idx].mean()
        tilt = float(np.dot(fc, launch[idx] - launch[idx].mean()) / max(np.dot(fc, fc), 1e-12))
        lp += [float(launch[idx].mean()), tilt]
    coarse = replace(start, launch_mode="per_band_tilt", launch_params=tuple(lp))
    x0 = coarse.as_array()
    steps = np.r_[np.tile([1.0, 0.3], len(lp) // 2), np.full(start.n_pumps, -1.0), np.full(start.n_pumps, 0.5)]
    simplex = np.vstack([x0] + [x0 + np.eye(x0.size)[k] * steps[k] for k in range(x0.size)])

    def fun(x):
        v = ev(coarse.with_array(x))
        return -v if np.isfinite(v) else 1e6

    res = minimize(fun, x0, method="Nelder-Mead",
                   options={"maxfev": maxfev, "initial_simplex": simplex, "xatol": 1e-3, "fatol": 1e-7})
    best = ev.constraints.project(coarse.with_array(res.x), scenario)
    if start.launch_mode == "per_channel":
        best = best.to_per_channel(scenario)
    return best


def _stage2(ev: _Evaluator, x: DecisionVector, rng: np.random.Generator, *,
            step0: float = 0.5, step_min: float = 0.05, freq_scale: float = 0.4,
            checkpoint: Callable[[DecisionVector, float], None] | None = None) -> tuple[DecisionVector, float]:
    """Cyclic coordinate search with a shrinking step."""
    arr = x.as_array()
    n_launch = len(x.launch_params)
    n_p = x.n_pumps
    # frequencies move in THz: scale their step relative to the dB step
    scale = np.r_[np.ones(n_launch + n_p), np.full(n_p, freq_scale)]
    if x.launch_mode == "per_band_tilt":
        scale[1:n_launch:2] = 0.2
    best = ev(x)
    step = step0
    while step >= step_min - 1e-12 and not ev.exhausted:
        improved = False
        for k in rng.permutation(arr.size):
            for sgn in (1.0, -1.0):
                trial = arr.copy()
                trial[k] += sgn * step * scale[k]
                cand = ev.constraints.project(x.with_array(trial), ev.base)
                v = ev(cand)
                if v > best + 1e-12:
                    best, arr = v, cand.as_array()
                    improved = True
                    break
            if ev.exhausted:
                break
        if checkpoint is not None:
            checkpoint(x.with_array(arr), step)
        if not improved:
            step *= 0.5
    return x.with_array(arr), step


def optimize(scenario: Scenario, obj: ObjectiveSpec, constraints: Constraints | None = None,
             budget: int = 2000, *, seed: int = 0, launch_mode: str = "per_channel",
             optimize_pumps: bool = True, eval_z_step: float | None = 0.5,
             stage1_share: float = 0.3, resume_path: str | Path | None = None,
             final_z_step: float | None = None) -> OptimizationReport:
    """Maximise the objective over launch spectrum (and pumps) within ``budget`` evaluations.

    ``eval_z_step`` sets the solver step used inside the search; the final
    metrics are recomputed with the scenario's own step (or ``final_z_step``).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    t0 = time.perf_counter()
    pumps = scenario.pumps if optimize_pumps else ()
    if constraints is None:
        constraints = Constraints.from_scenario(scenario)
    constraints.check(len(pumps))
    if eval_z_step is not None and eval_z_step < scenario.solver.z_step_km:
        eval_z_step = scenario.solver.z_step_km

    rng = np.random.default_rng(seed)
    state = _load_resume(resume_path, obj, seed)
    ev = _Evaluator(scenario, obj, constraints, budget, eval_z_step, trace=state.get("trace"))
    x = constraints.project(_initial_vector(scenario, launch_mode, pumps), scenario)
    stages = {"stage1_evaluations": 0, "stage2_evaluations": 0}
    if state:
        x = DecisionVector(**{k: tuple(v) if isinstance(v, list) else v for k, v in state["best"].items()})
        stages.update(state.get("stages", {}))
        ev.best, ev.best_value = x, state["best_value"]

    def checkpoint(dv: DecisionVector, step: float, stage: str) -> None:
        if resume_path is None:
            return
        best = ev.best or dv
        payload = {"objective": obj.kind, "seed": seed, "stage": stage, "step": step,
                   "best": best.to_dict(), "best_value": ev.best_value, "trace": ev.trace, "stages": stages}
        tmp = Path(resume_path).with_suffix(".tmp")
        tmp.write_text(json.dumps(payload))
        tmp.replace(resume_path)

    ev(x)
    if not state.get("stage1_done") and not ev.exhausted:
        n1 = max(int(stage1_share * budget) - ev.count, 0)
        c0 = ev.count
        if n1 > 0:
            x1 = _stage1(ev, scenario, x, n1)
            if ev(x1) >= ev(x):
                x = x1
        stages["stage1_evaluations"] = ev.count - c0
        state["stage1_done"] = True
        checkpoint(x, 0.5, "stage1")
    x = _best_of(ev, x, scenario)
    c0 = ev.count
    x, _ = _stage2(ev, x, rng, step0=state.get("step", 0.5),
                   checkpoint=lambda dv, s: checkpoint(dv, s, "stage2"))
    stages["stage2_evaluations"] = ev.count - c0
    x = _best_of(ev, x, scenario)

    final_sc = scenario if final_z_step is None else scenario.with_solver(z_step_km=final_z_step)
    result = simulate(x.apply(final_sc), warm=dict(ev.warm))
    rates = result.info_rates
    report = OptimizationReport(
        objective=obj.kind,
        best=x,
        best_value=obj(rates),
        trace=ev.trace,
        metrics=result.metrics,
        mean_ir_tbps=float(np.mean(rates)),
        spread_tbps=float(np.max(rates) - np.min(rates)),
        throughput_tbps=result.throughput_tbps,
        gsnr_pp_db=gsnr_peak_to_peak(result.metrics),
        evaluations=ev.count,
        wall_clock_s=time.perf_counter() - t0,
        seed=seed,
        stages=stages,
        result=result,
    )
    if resume_path is not None:
        checkpoint(x, 0.0, "done")
    return report


def _best_of(ev: _Evaluator, x: DecisionVector, scenario: Scenario) -> DecisionVector:
    if ev.best is None or ev.best_value <= ev(x):
        return x
    best = ev.best
    if x.launch_mode == "per_channel" and best.launch_mode != "per_channel":
        best = best.to_per_channel(scenario)
    return best


def _load_resume(path, obj: ObjectiveSpec, seed: int) -> dict:
    if path is None or not Path(path).exists():
        return {}
    state = json.loads(Path(path).read_text())
    if state.get("objective") != obj.kind or state.get("seed") != seed:
        raise ValueError("resume file belongs to a different objective or seed")
    state["trace"] = [tuple(t) for t in state.get("trace", [])]
    state["stage1_done"] = state.get("stage") in ("stage1", "stage2", "done")
    return state


def optimize_flatness_compare(scenario: Scenario, constraints: Constraints | None = None,
                              budget: int = 2000, **kw) -> tuple[OptimizationReport, OptimizationReport]:
    """Run the mean-IR and the flatness-penalised objectives on the same scenario."""
    r1 = optimize(scenario, ObjectiveSpec(EQ1), constraints, budget, **kw)
    r2 = optimize(scenario, ObjectiveSpec(EQ2), constraints, budget, **kw)
    return r1, r2
