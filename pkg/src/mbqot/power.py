"""Raman / ISRS power evolution along a span with counter-propagating pumps.

Every wave i (channels first, then pumps) obeys

    s_i dP_i/dz = P_i * (-alpha_i + sum_j G_ij P_j)

with G_ij = C_R(f_i, f_j) for f_j > f_i and -(f_i/f_j) C_R(f_j, f_i) for
f_j < f_i. The system is integrated for ln P with a fixed-step RK4, which
keeps every power non-negative. Backward pumps are handled by alternating
forward and backward sweeps until the profiles stop changing.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.constants import h as PLANCK, k as BOLTZMANN

from .fiber import FiberSpec, loss_coefficient, raman_gain
from .scenario import ChannelPlan, PumpSpec, Scenario, SpanSpec


class PowerEvolutionError(RuntimeError):
    pass


class BvpConvergenceError(PowerEvolutionError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"backward-pump relaxation did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class StepSizeError(PowerEvolutionError):
    pass


@dataclass
class PowerProfile:
    """Sampled powers (W) of all waves over one span, plus Raman ASE at the span end."""

    z_km: np.ndarray
    freqs_thz: np.ndarray
    powers_w: np.ndarray  # [wave, z]
    direction: np.ndarray  # +1 forward, -1 backward
    n_channels: int
    raman_ase_w: np.ndarray  # per channel, fiber output
    iterations: int = 0
    bvp_residual: float = 0.0

    @property
    def channel_powers(self) -> np.ndarray:
        return self.powers_w[: self.n_channels]

    @property
    def pump_powers(self) -> np.ndarray:
        return self.powers_w[self.n_channels:]

    @property
    def length_km(self) -> float:
        return float(self.z_km[-1])

    def normalized(self) -> np.ndarray:
        """Channel profiles divided by their launch value; unlit channels give ones."""
        p = self.channel_powers
        p0 = p[:, :1]
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(p0 > 0, p / np.where(p0 > 0, p0, 1.0), 1.0)
        return rho

    def scaled(self, factor: np.ndarray) -> "PowerProfile":
        """Copy with channel powers scaled per channel; valid where the profile shape is launch-independent."""
        pw = self.powers_w.copy()
        pw[: self.n_channels] *= np.asarray(factor)[:, None]
        return PowerProfile(self.z_km, self.freqs_thz, pw, self.direction, self.n_channels,
                            self.raman_ase_w, self.iterations, self.bvp_residual)

    def to_csv(self, path) -> None:
        with np.errstate(divide="ignore"):
            dbm = 10 * np.log10(self.powers_w * 1e3)
        head = ["z_km"] + [
            f"{'ch' if i < self.n_channels else 'pump'}{i if i < self.n_channels else i - self.n_channels}"
            f"_{f:.4f}THz_dBm" for i, f in enumerate(self.freqs_thz)
        ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for k, z in enumerate(self.z_km):
                w.writerow([f"{z:.6g}"] + [f"{v:.6f}" for v in dbm[:, k]])


@dataclass(frozen=True)
class EffectiveAlpha:
    alpha_bar: float  # field attenuation, 1/km (power slope = 2 * alpha_bar)
    fit_residual: float


# --------------------------------------------------------------------------- coupling


@functools.lru_cache(maxsize=64)
def _gain_matrix(fiber: FiberSpec, freqs: tuple[float, ...]) -> np.ndarray:
    f = np.asarray(freqs)
    fi, fj = np.meshgrid(f, f, indexing="ij")
    above = fj > fi
    cg = np.zeros_like(fi)
    if np.any(above):
        cg[above] = raman_gain(fiber, fi[above], fj[above])
    return cg


def coupling_matrix(fiber: FiberSpec, freqs: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Return (G, C_gain) for the given waves, both in 1/(W km)."""
    f = np.asarray(freqs, dtype=float)
    cg = _gain_matrix(fiber, tuple(f.tolist()))
    g = cg - (f[:, None] / f[None, :]) * cg.T
    return g, cg


# --------------------------------------------------------------------------- integrator


def _rk4_log(u0, a, g, drive_n, drive_m, m: int, h: float, sign: float = 1.0):
    """RK4 for du/dz = sign * (-a + g @ exp(u) + drive(z)) over m steps.

    ``drive_n`` holds the external term at the nodes (wave x m+1) and
    ``drive_m`` at the step midpoints (wave x m); either may be None.
    Returns ln P at the nodes (wave x m+1).
    """
    out = np.empty((u0.size, m + 1))
    out[:, 0] = u0
    u = u0
    hh = 0.5 * h
    base = -a
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(m):
            if drive_n is None:
                b0 = b1 = b2 = base
            else:
                b0 = base + drive_n[:, k]
                b1 = base + drive_m[:, k]
                b2 = base + drive_n[:, k + 1]
            k1 = b0 + g @ np.exp(u)
            k2 = b1 + g @ np.exp(u + hh * sign * k1)
            k3 = b1 + g @ np.exp(u + hh * sign * k2)
            k4 = b2 + g @ np.exp(u + h * sign * k3)
            u = u + (h * sign / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            out[:, k + 1] = u
    if np.any(np.isnan(out)) or np.any(out == np.inf):
        raise StepSizeError("power overflow during integration; reduce z_step")
    return out


def _exp(u):
    return np.exp(u)


def _stage_values(p_nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Node values and log-linear midpoint values of a frozen profile."""
    mid = np.sqrt(p_nodes[:, :-1] * p_nodes[:, 1:])
    return p_nodes, mid


def propagate_span(
    span: SpanSpec,
    plan: ChannelPlan,
    launch_w,
    pumps: Sequence[PumpSpec] | None = None,
    *,
    z_step: float = 0.1,
    bvp_tol: float = 1e-6,
    max_iter: int = 200,
    isrs: bool = True,
    temperature_k: float = 300.0,
    initial_pump_profile: np.ndarray | None = None,
) -> PowerProfile:
    """Solve the coupled power equations over one span.

    ``pumps`` defaults to ``span.pumps``; pump powers are specified at z = L.
    ``initial_pump_profile`` (pump x z) warm-starts the relaxation.
    """
    launch_w = np.asarray(launch_w, dtype=float)
    if launch_w.shape != (len(plan),):
        raise ValueError(f"launch has shape {launch_w.shape}, expected ({len(plan)},)")
    if np.any(launch_w < 0) or not np.all(np.isfinite(launch_w)):
        raise ValueError("launch powers must be finite and >= 0")
    if z_step <= 0:
        raise ValueError("z_step must be positive")
    pumps = tuple(span.pumps if pumps is None else pumps)
    n = len(plan)
    npump = len(pumps)
    length = span.length_km
    m = max(1, int(np.ceil(length / z_step - 1e-9)))
    h = length / m
    z = np.linspace(0.0, length, m + 1)

    f_ch = plan.freqs
    f_all = np.concatenate([f_ch, [p.freq_thz for p in pumps]])
    alpha = loss_coefficient(span.fiber, f_all)
    g, cg = coupling_matrix(span.fiber, f_all)
    g = g.copy()
    if not isrs:
        g[:n, :n] = 0.0

    u0 = np.log(np.where(launch_w > 0, launch_w, 1.0))
    u0[launch_w <= 0] = -np.inf

    g_ff = g[:n, :n]
    a_f = alpha[:n]

    if npump == 0:
        pf = _exp(_rk4_log(u0, a_f, g_ff, None, None, m, h))
        pb = np.zeros((0, m + 1))
        iters, resid = 0, 0.0
    else:
        p_l = 1e-3 * 10.0 ** (np.array([p.power_dbm for p in pumps]) / 10.0)
        a_b = alpha[n:]
        g_fb = g[:n, n:]
        g_bb = g[n:, n:]
        g_bf = g[n:, :n]
        if initial_pump_profile is not None and initial_pump_profile.shape == (npump, m + 1):
            pb = np.array(initial_pump_profile, dtype=float)
            pb *= (p_l / pb[:, -1])[:, None]
        else:
            pb = p_l[:, None] * np.exp(-a_b[:, None] * (length - z)[None, :])
        pf = None
        resid = np.inf
        iters = 0
        omega = 1.0
        last = np.inf
        for iters in range(1, max_iter + 1):
            nodes, mids = _stage_values(pb)
            uf = _rk4_log(u0, a_f, g_ff, g_fb @ nodes, g_fb @ mids, m, h)
            pf_new = _exp(uf)

            # pumps: dv/dz = a - G P, integrated from z = L towards 0 on the
            # reversed grid, which turns it into dv/dz' = -a + G P + drive
            fn, fm = _stage_values(pf_new)
            vb = _rk4_log(np.log(p_l), a_b, g_bb, (g_bf @ fn)[:, ::-1], (g_bf @ fm)[:, ::-1], m, h)[:, ::-1]
            pb_new = _exp(vb)
            with np.errstate(divide="ignore", invalid="ignore"):
                dp = np.max(np.abs(np.log(pb_new[:, 0] / pb[:, 0])))
                if pf is not None:
                    lit = pf_new[:, -1] > 0
                    dp = max(dp, np.max(np.abs(np.log(pf_new[lit, -1] / pf[lit, -1])), initial=0.0))
            resid = float(dp)
            if resid > last:
                omega = max(0.25, omega * 0.5)
            last = resid
            pb = np.exp(np.log(pb) + omega * (np.log(pb_new) - np.log(pb)))
            pf = pf_new
            if resid < bvp_tol and iters > 1:
                pb = pb_new
                break
        else:
            raise BvpConvergenceError(max_iter, resid)
        pf = _exp(uf)

    powers = np.vstack([pf, pb])
    if not np.all(np.isfinite(powers)):
        raise StepSizeError("non-finite power in solution; reduce z_step")
    ase = _raman_ase(f_ch, plan.symbol_rates, g[:n], cg[:n, n:], alpha[:n], powers, z, temperature_k, n, f_all)
    direction = np.concatenate([np.ones(n, int), -np.ones(npump, int)])
    return PowerProfile(z, f_all, powers, direction, n, ase, iters, resid)


def _raman_ase(f_ch, b_ghz, g_rows, cg_pump, a_ch, powers, z, temperature_k, n, f_all):
    """Forward Raman ASE per channel at the span end (W), in each channel's bandwidth."""
    if cg_pump.shape[1] == 0:
        return np.zeros(n)
    pp = powers[n:]
    df = (f_all[n:][None, :] - f_ch[:, None]) * 1e12
    with np.errstate(over="ignore", divide="ignore"):
        eta = 1.0 / np.expm1(PLANCK * df / (BOLTZMANN * temperature_k))
    eta = np.where(df > 0, eta, 0.0)
    seed = 2 * PLANCK * f_ch[:, None] * 1e12 * b_ghz[:, None] * 1e9 * (1.0 + eta)
    source = (cg_pump * seed) @ pp  # [channel, z]
    rate = -a_ch[:, None] + g_rows @ powers  # net log-gain of each channel
    dz = np.diff(z)
    cum = np.concatenate([np.zeros((n, 1)), np.cumsum(0.5 * (rate[:, 1:] + rate[:, :-1]) * dz, axis=1)], axis=1)
    weight = source * np.exp(cum[:, -1:] - cum)
    return np.sum(0.5 * (weight[:, 1:] + weight[:, :-1]) * dz, axis=1)


def effective_alpha_fit(profile: PowerProfile, channel: int) -> EffectiveAlpha:
    """Fit ln P(z) = ln P(0) - 2 a z over the span (a in field convention)."""
    p = profile.channel_powers[channel]
    if np.any(p <= 0):
        raise ValueError(f"channel {channel} has non-positive power samples")
    y = np.log(p)
    z = profile.z_km
    dy = y - y[0]
    a = -float(np.dot(z, dy) / (2.0 * np.dot(z, z)))
    res = float(np.sqrt(np.mean((dy + 2 * a * z) ** 2)))
    return EffectiveAlpha(a, res)


def effective_alpha_all(profile: PowerProfile) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``effective_alpha_fit`` over lit channels; unlit channels fit their loss-only profile."""
    rho = profile.normalized()
    with np.errstate(divide="ignore"):
        y = np.log(rho)
    z = profile.z_km
    y = np.where(np.isfinite(y), y, 0.0)
    a = -(y @ z) / (2.0 * np.dot(z, z))
    res = np.sqrt(np.mean((y + 2 * a[:, None] * z[None, :]) ** 2, axis=1))
    return a, res


# --------------------------------------------------------------------------- link


@dataclass
class LinkPropagation:
    """Per-span profiles and per-channel quantities referred to the span input."""

    profiles: list[PowerProfile]
    span_out_w: np.ndarray  # [span, channel] fiber output power
    amp_gain: np.ndarray  # [span, channel] linear gain restoring the launch
    raman_ase_w: np.ndarray  # accumulated Raman ASE referred to launch level
    raman_ase_per_span: np.ndarray = field(default=None)


def link_propagate(scenario: Scenario, *, cache: dict | None = None,
                   warm: dict | None = None) -> LinkPropagation:
    """Propagate the common launch spectrum through every span.

    Identical spans are solved once. ``warm`` maps spans to previous pump
    profiles for warm-starting the relaxation and is updated in place.
    """
    launch = scenario.launch_w
    opts = scenario.solver
    solved: dict = {} if cache is None else cache
    profiles = []
    for span in scenario.spans:
        prof = solved.get(span)
        if prof is None:
            init = None if warm is None else warm.get(span)
            prof = propagate_span(
                span, scenario.plan, launch,
                z_step=opts.z_step_km, bvp_tol=opts.bvp_tol, max_iter=opts.max_iter,
                isrs=scenario.isrs_enabled, temperature_k=scenario.reference_temperature_k,
                initial_pump_profile=init,
            )
            solved[span] = prof
            if warm is not None and span.pumps:
                warm[span] = prof.pump_powers
        profiles.append(prof)
    out = np.array([p.channel_powers[:, -1] for p in profiles])
    lumped = np.array([10 ** (-s.lumped_loss_db / 10) for s in scenario.spans])
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(out > 0, launch[None, :] / (out * lumped[:, None]), 1.0)
    ase_span = np.array([p.raman_ase_w for p in profiles]) * lumped[:, None] * gain
    return LinkPropagation(profiles, out, gain, ase_span.sum(axis=0), ase_span)
