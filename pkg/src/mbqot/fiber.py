"""Frequency-dependent properties of a single-mode fiber.

All public functions take frequencies in THz and accept scalars or numpy
arrays. Attenuation is returned in natural units (1/km, power), dispersion
as beta2 in ps^2/km, areas in um^2 and nonlinear / Raman coefficients in
1/(W km).
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

C_NM_PER_PS = 2.99792458e5
C_M_PER_S = 2.99792458e8
DB_PER_NEPER = 10.0 / np.log(10.0)

#: frequency window (THz) over which the loss/dispersion/mode models are trusted
VALID_RANGE_THZ = (180.0, 230.0)
#: V-number window for the Marcuse mode-width fit
VALID_V_RANGE = (0.8, 2.8)


class FiberModelError(ValueError):
    """Raised when a fiber model is queried outside its validity range."""


def _as_array(f):
    return np.asarray(f, dtype=float)


def _check_range(f, what="frequency"):
    f = _as_array(f)
    lo, hi = VALID_RANGE_THZ
    if np.any(f < lo) or np.any(f > hi):
        raise FiberModelError(
            f"{what} {np.min(f):.3f}..{np.max(f):.3f} THz outside model window [{lo}, {hi}] THz"
        )
    return f


def wavelength_um(f_thz):
    return C_M_PER_S / (_as_array(f_thz) * 1e12) * 1e6


@dataclass(frozen=True)
class RamanTable:
    """Reference Raman efficiency spectrum measured with one pump frequency."""

    pump_ref_thz: float
    detuning_thz: tuple[float, ...]
    c_r: tuple[float, ...]

    def __post_init__(self):
        d = np.asarray(self.detuning_thz, dtype=float)
        g = np.asarray(self.c_r, dtype=float)
        if d.ndim != 1 or d.size < 2 or d.size != g.size:
            raise ValueError("raman table needs >= 2 (detuning, C_R) rows of equal length")
        if d[0] != 0.0 or g[0] != 0.0:
            raise ValueError("raman table must start at detuning 0 with C_R(0) = 0")
        if np.any(np.diff(d) <= 0):
            raise ValueError("raman table detunings must be strictly increasing")
        if np.any(g < 0):
            raise ValueError("raman table C_R values must be non-negative")

    @property
    def max_detuning(self) -> float:
        return self.detuning_thz[-1]

    @classmethod
    def from_csv(cls, path, pump_ref_thz: float = 206.5) -> "RamanTable":
        """Read a two-column CSV (detuning_THz, C_R); a header row is optional."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].strip().startswith("#"):
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except ValueError:
                    if rows:
                        raise
                    continue  # header
        d, g = zip(*rows)
        return cls(pump_ref_thz=float(pump_ref_thz), detuning_thz=tuple(d), c_r=tuple(g))

    @classmethod
    def default(cls) -> "RamanTable":
        """Synthetic silica profile: peak 0.40 1/(W km) at 13.2 THz for a 206.5 THz pump."""
        ref = resources.files("mbqot") / "data" / "raman_smf_206p5.csv"
        with resources.as_file(ref) as p:
            return cls.from_csv(Path(p), pump_ref_thz=206.5)


@functools.lru_cache(maxsize=32)
def _raman_interp(table: RamanTable) -> PchipInterpolator:
    return PchipInterpolator(np.asarray(table.detuning_thz), np.asarray(table.c_r), extrapolate=False)


@dataclass(frozen=True)
class FiberSpec:
    """Fiber description used by every physical model in the package.

    ``loss_anchors`` holds (THz, dB/km) pairs fitted by ``A / lambda^4 + B``.
    Setting ``rayleigh_a`` pins A (dB um^4/km) and fits only B. When
    ``flat_at_thz`` is set, every frequency-dependent quantity is frozen at
    that frequency, which gives an artificially frequency-flat fiber.
    """

    loss_anchors: tuple[tuple[float, float], ...] = ((184.5, 0.177), (190.0, 0.186), (196.5, 0.197))
    lambda0_nm: float = 1310.0
    s0: float = 0.092
    n2: float = 2.6e-20
    core_radius_um: float = 4.1
    numerical_aperture: float = 0.12
    raman: RamanTable = field(default_factory=RamanTable.default)
    rayleigh_a: float | None = None
    flat_at_thz: float | None = None

    def __post_init__(self):
        if not self.loss_anchors:
            raise ValueError("loss_anchors must be non-empty")
        for f, a in self.loss_anchors:
            if a < 0:
                raise ValueError(f"loss anchor at {f} THz has negative attenuation {a}")
        if self.rayleigh_a is None and len(self.loss_anchors) < 2:
            raise ValueError("a single loss anchor needs rayleigh_a fixed")
        if self.core_radius_um <= 0 or self.numerical_aperture <= 0:
            raise ValueError("core radius and numerical aperture must be positive")
        if self.n2 <= 0:
            raise ValueError("n2 must be positive")

    @functools.cached_property
    def rayleigh_fit(self) -> tuple[float, float]:
        """(A [dB um^4/km], B [dB/km]) least-squares fit to the loss anchors."""
        f, a = np.asarray(self.loss_anchors, dtype=float).T
        x = wavelength_um(f) ** -4
        if self.rayleigh_a is not None:
            return float(self.rayleigh_a), float(np.mean(a - self.rayleigh_a * x))
        coef, *_ = np.linalg.lstsq(np.column_stack([x, np.ones_like(x)]), a, rcond=None)
        return float(coef[0]), float(coef[1])

    def _eval_freq(self, f):
        f = _check_range(f)
        if self.flat_at_thz is not None:
            return np.full_like(f, self.flat_at_thz)
        return f


def loss_db_per_km(fiber: FiberSpec, f):
    f = fiber._eval_freq(f)
    a, b = fiber.rayleigh_fit
    return a * wavelength_um(f) ** -4 + b


def loss_coefficient(fiber: FiberSpec, f):
    """Power attenuation coefficient in 1/km."""
    return loss_db_per_km(fiber, f) / DB_PER_NEPER


def dispersion_d(fiber: FiberSpec, f):
    """Dispersion parameter D in ps/(nm km)."""
    lam = wavelength_um(fiber._eval_freq(f)) * 1e3
    return fiber.s0 / 4.0 * (lam - fiber.lambda0_nm ** 4 / lam ** 3)


def dispersion_beta2(fiber: FiberSpec, f):
    """Group-velocity dispersion beta2 in ps^2/km."""
    lam = wavelength_um(fiber._eval_freq(f)) * 1e3
    return -dispersion_d(fiber, f) * lam ** 2 / (2 * np.pi * C_NM_PER_PS)


def _mode_radius_unchecked(fiber: FiberSpec, f):
    v = 2 * np.pi * fiber.core_radius_um * fiber.numerical_aperture / wavelength_um(f)
    return fiber.core_radius_um * (0.65 + 1.619 * v ** -1.5 + 2.879 * v ** -6), v


def mode_radius(fiber: FiberSpec, f):
    """Marcuse Gaussian mode-field radius (um)."""
    w, v = _mode_radius_unchecked(fiber, fiber._eval_freq(f))
    lo, hi = VALID_V_RANGE
    if np.any(v <= lo) or np.any(v >= hi):
        raise FiberModelError(f"V-number {np.min(v):.3f}..{np.max(v):.3f} outside ({lo}, {hi})")
    return w


def effective_area(fiber: FiberSpec, f):
    return np.pi * mode_radius(fiber, f) ** 2


def overlap_area(fiber: FiberSpec, f1, f2):
    """Gaussian-mode overlap area between two frequencies (um^2)."""
    return np.pi * (mode_radius(fiber, f1) ** 2 + mode_radius(fiber, f2) ** 2) / 2.0


def gamma_xci(fiber: FiberSpec, f1, f2):
    """Nonlinear coefficient seen at f1 from a wave at f2, in 1/(W km)."""
    f1e = fiber._eval_freq(f1)
    a_ov = overlap_area(fiber, f1, f2) * 1e-12
    return 2 * np.pi * f1e * 1e12 * fiber.n2 / (C_M_PER_S * a_ov) * 1e3


def gamma_fwm(fiber: FiberSpec, f, f1, f2, f3):
    """Nonlinear coefficient for the four-wave product f1 + f2 - f3 -> f.

    Uses the four-field overlap of Gaussian modes; it reduces to
    ``gamma_xci`` when the frequencies pair up.
    """
    w = [mode_radius(fiber, x) for x in (f, f1, f2, f3)]
    prod = w[0] * w[1] * w[2] * w[3]
    inv_sum = sum(wk ** -2 for wk in w)
    a_eff = np.pi * prod * inv_sum / 4.0 * 1e-12
    fe = fiber._eval_freq(f)
    return 2 * np.pi * fe * 1e12 * fiber.n2 / (C_M_PER_S * a_eff) * 1e3


def raman_gain(fiber: FiberSpec, f, f_p):
    """Raman gain efficiency C_R(f, f_p) of a pump at f_p on a wave at f <= f_p.

    The reference spectrum is shifted to the pump, scaled linearly with pump
    frequency and by the ratio of mode-overlap areas. Waves above the pump
    get 0; the depletion side is handled by the power-evolution equations.
    """
    f = _check_range(f)
    f_p = _check_range(f_p, "pump frequency")
    f, f_p = np.broadcast_arrays(f, f_p)
    table = fiber.raman
    det = f_p - f
    if np.any(det > table.max_detuning):
        raise FiberModelError(
            f"Raman detuning {np.max(det):.3f} THz beyond table edge {table.max_detuning} THz"
        )
    gain_side = det > 0
    ref = np.zeros_like(det)
    if np.any(gain_side):
        ref[gain_side] = _raman_interp(table)(det[gain_side])
    ref = np.clip(ref, 0.0, None)
    if fiber.flat_at_thz is not None:
        return ref
    w_p, _ = _mode_radius_unchecked(fiber, f_p)
    w_s, _ = _mode_radius_unchecked(fiber, f)
    f_ref = table.pump_ref_thz
    w_pr, _ = _mode_radius_unchecked(fiber, np.full_like(det, f_ref))
    w_sr, _ = _mode_radius_unchecked(fiber, f_ref - det)
    area_ratio = (w_pr ** 2 + w_sr ** 2) / (w_p ** 2 + w_s ** 2)
    out = ref * (f_p / f_ref) * area_ratio
    return out if out.ndim else float(out)
