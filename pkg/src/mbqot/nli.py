"""Nonlinear interference: incoherent-GN closed form and a numerical GN integral.

Both methods refer P_NLI to the span input (launch) level and add spans
incoherently. The closed form uses per-channel effective attenuations fitted
to the actual power profiles, so ISRS and Raman gain enter through them.
The numerical integral works directly on the sampled profiles and serves as
the reference for the closed form.
"""
from __future__ import annotations

import csv
import functools
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cubature

from .fiber import FiberSpec, dispersion_beta2, gamma_fwm, gamma_xci
from .power import LinkPropagation, PowerProfile, effective_alpha_all
from .scenario import Scenario

log = logging.getLogger(__name__)

PS2_TO_S2 = 1e-24
#: log-domain RMS residual of the exponential fit above which a warning is attached
FIT_RESIDUAL_WARN = 0.25


class NliError(RuntimeError):
    pass


@dataclass
class NliResult:
    channels: np.ndarray  # channel indices
    freqs_thz: np.ndarray
    p_nli: np.ndarray  # W, referred to the launch level, summed over spans
    sci: np.ndarray
    xci: np.ndarray
    method: str
    warnings: list[str] = field(default_factory=list)
    error_estimate: np.ndarray | None = None
    runtime_s: float = 0.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["channel", "freq_THz", "P_SCI_W", "P_XCI_W", "P_NLI_W"])
            for row in zip(self.channels, self.freqs_thz, self.sci, self.xci, self.p_nli):
                w.writerow([int(row[0])] + [f"{v:.9g}" for v in row[1:]])

    def to_json(self) -> str:
        return json.dumps({
            "method": self.method,
            "channels": [int(c) for c in self.channels],
            "freq_THz": list(map(float, self.freqs_thz)),
            "P_SCI_W": list(map(float, self.sci)),
            "P_XCI_W": list(map(float, self.xci)),
            "P_NLI_W": list(map(float, self.p_nli)),
            "warnings": self.warnings,
        }, indent=2)


def _span_groups(link: LinkPropagation, spans) -> list[tuple[PowerProfile, FiberSpec, int]]:
    """Distinct span profiles with their multiplicity."""
    groups: dict[int, list] = {}
    for prof, span in zip(link.profiles, spans):
        g = groups.setdefault(id(prof), [prof, span.fiber, 0])
        g[2] += 1
    return [tuple(g) for g in groups.values()]


# --------------------------------------------------------------------------- closed form


@functools.lru_cache(maxsize=16)
def _pair_terms(fiber: FiberSpec, freqs: tuple[float, ...]):
    f = np.asarray(freqs)
    fi, fj = np.meshgrid(f, f, indexing="ij")
    gam = gamma_xci(fiber, fi, fj)
    beta2 = np.abs(dispersion_beta2(fiber, 0.5 * (fi + fj))) * PS2_TO_S2
    return gam, beta2, np.abs(fj - fi) * 1e12


def span_nli_coefficients(profile: PowerProfile, fiber: FiberSpec, b_hz: np.ndarray):
    """Per-span NLI efficiency matrix eta (1/W^2) and fit residuals.

    P_NLI,i = sum_j eta[i, j] * P_j^2 * P_i, with the SCI term on the diagonal.
    """
    n = profile.n_channels
    z = profile.z_km
    length = profile.length_km
    abar, resid = effective_alpha_all(profile)
    rho = profile.normalized()
    l_eff = np.trapezoid(rho, z, axis=1)
    a_e = 2.0 * abar
    with np.errstate(divide="ignore"):
        l_asym = np.where(a_e > 0, np.minimum(1.0 / np.where(a_e > 0, a_e, 1.0), length), length)
    gam, beta2, df = _pair_terms(fiber, tuple(profile.freqs_thz[:n].tolist()))

    bi = b_hz[:, None]
    bj = b_hz[None, :]
    la = l_asym[None, :]
    k = np.pi ** 2 * beta2 * la
    psi = np.arcsinh(k * bi * (df + bj / 2)) - np.arcsinh(k * bi * (df - bj / 2))
    diag = np.arange(n)
    psi[diag, diag] = np.arcsinh(0.5 * k[diag, diag] * b_hz ** 2)
    pref = (16.0 / 27.0) * gam ** 2 * (l_eff[None, :] ** 2) / (2 * np.pi * beta2 * la)
    # P_NLI = G_NLI * B_i with G_i = P_i / B_i and G_j = P_j / B_j
    eta = pref * psi / (bj ** 2)
    return eta, resid


def nli_closed_form(scenario: Scenario, link: LinkPropagation) -> NliResult:
    if len(link.profiles) != len(scenario.spans) or any(p is None for p in link.profiles):
        raise NliError("a power profile is required for every span")
    p = scenario.launch_w
    b = scenario.plan.symbol_rates * 1e9
    n = len(p)
    sci = np.zeros(n)
    xci = np.zeros(n)
    warnings = []
    for prof, fiber, count in _span_groups(link, scenario.spans):
        eta, resid = span_nli_coefficients(prof, fiber, b)
        d = np.diag(eta).copy()
        sci += count * d * p ** 3
        off = eta.copy()
        np.fill_diagonal(off, 0.0)
        xci += count * (off @ p ** 2) * p
        bad = np.flatnonzero((resid > FIT_RESIDUAL_WARN) & (p > 0))
        if bad.size:
            warnings.append(
                f"effective-attenuation fit residual above {FIT_RESIDUAL_WARN} for {bad.size} channel(s), "
                f"worst {resid[bad].max():.3f} at channel {int(bad[np.argmax(resid[bad])])}"
            )
    return NliResult(np.arange(n), scenario.plan.freqs, sci + xci, sci, xci, "closed_form", warnings)


# --------------------------------------------------------------------------- numerical oracle


def _phi(u):
    """(exp(u) - 1) / u for complex u, stable near 0."""
    small = np.abs(u) < 1e-6
    safe = np.where(small, 1.0, u)
    return np.where(small, 1.0 + 0.5 * u, np.expm1(safe) / safe)


def _simplify(z: np.ndarray, y: np.ndarray, tol: float) -> np.ndarray:
    """Indices of a piecewise-linear subset of (z, y) within tol of every sample."""
    keep = np.zeros(z.size, dtype=bool)
    keep[[0, -1]] = True
    stack = [(0, z.size - 1)]
    while stack:
        i, j = stack.pop()
        if j - i < 2:
            continue
        t = (z[i + 1:j] - z[i]) / (z[j] - z[i])
        dev = np.abs(y[i + 1:j] - (y[i] + t * (y[j] - y[i])))
        k = int(np.argmax(dev))
        if dev[k] > tol:
            m = i + 1 + k
            keep[m] = True
            stack += [(i, m), (m, j)]
    return np.flatnonzero(keep)


class _SpanKernel:
    """Span link function K(psi) for a fixed weight profile w(z).

    w is interpolated log-linearly between a reduced set of nodes and each
    segment is integrated exactly, so oscillating phases are handled at any
    segment length.
    """

    def __init__(self, z: np.ndarray, w: np.ndarray, tol: float = 2e-4):
        lw = np.log(w)
        keep = _simplify(z, lw, tol)
        z, lw = z[keep], lw[keep]
        self.z0 = z[:-1]
        self.h = np.diff(z)
        self.w0 = np.exp(lw[:-1])
        self.c = np.diff(lw) / self.h

    def __call__(self, psi: np.ndarray, chunk: int = 2048) -> np.ndarray:
        out = np.empty(psi.shape, dtype=complex)
        for s in range(0, psi.size, chunk):
            ps = psi[s:s + chunk, None]
            u = (self.c[None, :] + 1j * ps) * self.h[None, :]
            seg = self.w0[None, :] * np.exp(1j * ps * self.z0[None, :]) * _phi(u) * self.h[None, :]
            out[s:s + chunk] = seg.sum(axis=1)
        return out


def _log_map(a, b, s, eps: float):
    """Map s in [0, 1] onto [a, b] uniformly in log(|x| + eps).

    a and b may be arrays; each interval must not straddle 0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sgn = np.where(a + b >= 0, 1.0, -1.0)
    la, lb = np.log(np.abs(a) + eps), np.log(np.abs(b) + eps)
    r = np.exp(la + s * (lb - la))
    return sgn * (r - eps), r * np.abs(lb - la)


def _pieces(xa: tuple[float, float], yb: tuple[float, float], sc: tuple[float, float]):
    """Split {x in xa, y in yb, x + y in sc} into pieces with linear y-limits and one-signed x, y."""
    x_breaks = {xa[0], xa[1], 0.0, sc[0], sc[1],
                sc[0] - yb[0], sc[1] - yb[1], sc[0] - yb[1], sc[1] - yb[0]}
    xs = sorted(v for v in x_breaks if xa[0] <= v <= xa[1])
    y_splits = [yb] if not yb[0] < 0.0 < yb[1] else [(yb[0], 0.0), (0.0, yb[1])]
    out = []
    for x0, x1 in zip(xs[:-1], xs[1:]):
        if x1 - x0 <= 0:
            continue
        xm = 0.5 * (x0 + x1)
        for y0, y1 in y_splits:
            # limits are max(y0, sc0 - x) and min(y1, sc1 - x); one branch holds over the piece
            lo = (sc[0], -1.0) if sc[0] - xm > y0 else (y0, 0.0)
            hi = (sc[1], -1.0) if sc[1] - xm < y1 else (y1, 0.0)
            if hi[0] + hi[1] * xm > lo[0] + lo[1] * xm:
                out.append((x0, x1, lo, hi))
    return out


def _span_gnli(profile: PowerProfile, fiber: FiberSpec, i: int, p: np.ndarray, b_hz: np.ndarray,
               rtol: float, max_sub: int) -> tuple[float, float, float, int]:
    """G_NLI (W/Hz) at the center of channel i for one span: (sci, other, error, status)."""
    n = profile.n_channels
    f = profile.freqs_thz[:n]
    lit = np.flatnonzero(p > 0)
    if p[i] <= 0 or lit.size == 0:
        return 0.0, 0.0, 0.0, 0
    rho = profile.normalized()
    z = profile.z_km
    fi = f[i]
    scale = 1e9  # integrate in GHz
    lo = {k: ((f[k] - fi) * 1e12 - b_hz[k] / 2) / scale for k in lit}
    hi = {k: ((f[k] - fi) * 1e12 + b_hz[k] / 2) / scale for k in lit}
    psd = {k: p[k] / b_hz[k] for k in lit}
    eps = 1e-4 * float(np.min(b_hz[lit])) / scale

    # the integrand is symmetric under (x, a) <-> (y, b), so only a <= b is integrated
    triples = []
    for a in lit:
        for bb in lit[lit >= a]:
            s0, s1 = lo[a] + lo[bb], hi[a] + hi[bb]
            for c in lit:
                if hi[c] > s0 and lo[c] < s1:
                    triples.append((a, bb, c))
    # blocks with the CUT as a participant carry the near-axis ridges and most of the power
    major = [t for t in triples if i in t[:2]]
    minor = [t for t in triples if i not in t[:2]]

    kernels: dict[tuple[int, int], _SpanKernel] = {}
    sci = other = err = 0.0
    status = 0

    def block(a, bb, c, atol):
        nonlocal status
        if (a, bb, c) not in kernels:
            kernels[(a, bb, c)] = _SpanKernel(z, np.sqrt(rho[a] * rho[bb] * rho[c] / rho[i]))
        kern = kernels[(a, bb, c)]
        weight = (16.0 / 27.0) * psd[a] * psd[bb] * psd[c] * (1 if a == bb else 2) * scale ** 2
        pieces = _pieces((lo[a], hi[a]), (lo[bb], hi[bb]), (lo[c], hi[c]))
        total = total_err = 0.0
        for x0, x1, lo_l, hi_l in pieces:

            def integrand(st, x0=x0, x1=x1, lo_l=lo_l, hi_l=hi_l):
                x, jx = _log_map(x0, x1, st[:, 0], eps)
                ylo = lo_l[0] + lo_l[1] * x
                yhi = hi_l[0] + hi_l[1] * x
                y, jy = _log_map(ylo, np.maximum(yhi, ylo), st[:, 1], eps)
                f1 = fi + x * scale / 1e12
                f2 = fi + y * scale / 1e12
                gam = gamma_fwm(fiber, fi, f1, f2, f1 + f2 - fi)
                b2 = dispersion_beta2(fiber, 0.5 * (f1 + f2)) * PS2_TO_S2
                kv = kern(4 * np.pi ** 2 * b2 * (x * scale) * (y * scale))
                return gam ** 2 * (kv.real ** 2 + kv.imag ** 2) * jx * jy

            res = cubature(integrand, [0.0, 0.0], [1.0, 1.0], rule="gk21", rtol=rtol,
                           atol=atol / (weight * len(pieces)), max_subdivisions=max_sub)
            if res.status != "converged":
                status = 1
            total += weight * float(res.estimate)
            total_err += weight * float(res.error)
        return total, total_err

    # the SCI block sets the absolute scale for the error budget of all other blocks
    if (i, i, i) in major:
        sci, err = block(i, i, i, 0.0)
    rest = [t for t in major if t != (i, i, i)]
    atol = 0.1 * rtol * sci / max(len(rest), 1)
    for t in rest:
        v, e = block(*t, atol)
        other += v
        err += e
    atol = rtol * (sci + other) / max(len(minor), 1)
    for t in minor:
        v, e = block(*t, atol)
        other += v
        err += e
    return sci, other, err, status


def nli_oracle(scenario: Scenario, link: LinkPropagation, channels: Sequence[int], *,
               rtol: float = 1e-3, max_subdivisions: int = 4000, strict: bool = True) -> NliResult:
    """Numerically integrate the GN model on the sampled power profiles.

    For every selected channel the triple integral over (f1, f2, z) is done
    with adaptive 2D cubature over the WDM support, piecewise per channel
    triplet, and an exact segment-wise z-integral of the interpolated profile.
    """
    channels = np.asarray(sorted(set(int(c) for c in channels)), dtype=int)
    if channels.size == 0:
        raise ValueError("channel subset must be non-empty")
    if len(link.profiles) != len(scenario.spans):
        raise NliError("a power profile is required for every span")
    t0 = time.perf_counter()
    p = scenario.launch_w
    b = scenario.plan.symbol_rates * 1e9
    sci = np.zeros(channels.size)
    xci = np.zeros(channels.size)
    err = np.zeros(channels.size)
    warnings = []
    for prof, fiber, count in _span_groups(link, scenario.spans):
        for n_, i in enumerate(channels):
            s, o, e, status = _span_gnli(prof, fiber, int(i), p, b, rtol, max_subdivisions)
            if status:
                msg = f"cubature did not reach rtol {rtol} for channel {i} (error estimate {e:.3g})"
                if strict and e > 10 * rtol * max(s + o, 1e-300):
                    raise NliError(msg)
                warnings.append(msg)
            sci[n_] += count * s * b[i]
            xci[n_] += count * o * b[i]
            err[n_] += count * e * b[i]
    return NliResult(channels, scenario.plan.freqs[channels], sci + xci, sci, xci, "oracle", warnings,
                     err, time.perf_counter() - t0)
