"""Amplifier noise, per-channel SNR figures, information rate and throughput."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.constants import h as PLANCK

#: sentinel returned for a ratio whose noise denominator is zero
INF_DB = math.inf


def db(x):
    return 10.0 * np.log10(x)


def undb(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_w(p_dbm):
    return 1e-3 * undb(p_dbm)


def w_to_dbm(p_w):
    return db(np.asarray(p_w, dtype=float) * 1e3)


@dataclass(frozen=True)
class IrCurve:
    """Transponder net information rate versus GSNR.

    Piecewise-linear through the table. Above the last point the rate stays
    at the saturation value; below the first point the first segment is
    extended down to zero rate.
    """

    gsnr_db: tuple[float, ...]
    rate_tbps: tuple[float, ...]

    def __post_init__(self):
        g = np.asarray(self.gsnr_db, dtype=float)
        r = np.asarray(self.rate_tbps, dtype=float)
        if g.size < 2 or g.size != r.size:
            raise ValueError("IR curve needs at least two (gsnr, rate) points")
        if np.any(np.diff(g) <= 0):
            raise ValueError("IR curve GSNR values must be strictly increasing")
        if np.any(np.diff(r) < 0) or np.any(r < 0):
            raise ValueError("IR curve rates must be non-negative and non-decreasing")

    @property
    def saturation_rate(self) -> float:
        return self.rate_tbps[-1]

    def __call__(self, gsnr_db):
        g = np.asarray(self.gsnr_db)
        r = np.asarray(self.rate_tbps)
        x = np.asarray(gsnr_db, dtype=float)
        out = np.interp(x, g, r)
        slope = (r[1] - r[0]) / (g[1] - g[0])
        below = x < g[0]
        out = np.where(below, np.clip(r[0] + slope * (x - g[0]), 0.0, None), out)
        out = np.where(np.isnan(x), 0.0, out)
        return out if out.ndim else float(out)

    def scaled(self, k: float) -> "IrCurve":
        return IrCurve(self.gsnr_db, tuple(k * v for v in self.rate_tbps))

    @classmethod
    def default(cls) -> "IrCurve":
        """Synthetic 100 GBd transponder curve (Tb/s per channel)."""
        return cls((5.0, 10.0, 15.0, 20.0, 25.0, 28.0), (0.20, 0.40, 0.60, 0.80, 1.00, 1.10))

    @classmethod
    def from_csv(cls, path) -> "IrCurve":
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
        g, r = zip(*rows)
        return cls(tuple(g), tuple(r))


def dfa_ase(gain_linear, nf_db, f_thz, b_ch_ghz):
    """ASE power (W) of a lumped amplifier within bandwidth b_ch, both polarizations."""
    gain = np.asarray(gain_linear, dtype=float)
    if np.any(gain < 1.0):
        raise ValueError("amplifier gain below 1 (attenuating amplifier) is not supported")
    nf = undb(nf_db)
    out = (nf * gain - 1.0) * PLANCK * np.asarray(f_thz) * 1e12 * np.asarray(b_ch_ghz) * 1e9
    return out if np.ndim(out) else float(out)


def equivalent_nf(raman_on_off_gain_db, p_ase_raman, f_thz, b_ch_ghz):
    """Noise figure (dB) of a lumped amplifier with the same gain and ASE as the Raman stage."""
    g = undb(raman_on_off_gain_db)
    if np.any(~np.isfinite(g)) or np.any(g <= 0):
        raise ValueError("on/off gain must be a finite, non-zero linear gain")
    n = np.asarray(p_ase_raman) / (PLANCK * np.asarray(f_thz) * 1e12 * np.asarray(b_ch_ghz) * 1e9)
    out = db((n + 1.0) / g)
    return out if np.ndim(out) else float(out)


def _ratio_db(num, den):
    if den <= 0:
        return INF_DB
    return float(db(num / den))


@dataclass(frozen=True)
class ChannelMetrics:
    freq_thz: float
    launch_power: float  # dBm
    p_ase_total: float
    p_ase_dfa: float
    p_ase_raman: float
    p_nli: float
    osnr: float
    osnr_dfa_only: float
    gsnr_nli: float
    gsnr: float
    info_rate: float  # Tb/s
    band: str = ""
    noiseless: bool = False  # True when some ratio hit the infinite sentinel

    def as_dict(self) -> dict:
        return asdict(self)


def channel_metrics(launch_w, p_ase_dfa, p_ase_raman, p_nli, ir_curve: IrCurve,
                    freq_thz: float = 0.0, band: str = "") -> ChannelMetrics:
    if not launch_w > 0:
        raise ValueError("launch power must be positive")
    ase = p_ase_dfa + p_ase_raman
    osnr = _ratio_db(launch_w, ase)
    osnr_dfa = _ratio_db(launch_w, p_ase_dfa)
    gsnr_nli = _ratio_db(launch_w, p_nli)
    gsnr = _ratio_db(launch_w, ase + p_nli)
    rate = ir_curve.saturation_rate if math.isinf(gsnr) else ir_curve(gsnr)
    return ChannelMetrics(
        freq_thz=float(freq_thz),
        launch_power=float(w_to_dbm(launch_w)),
        p_ase_total=float(ase),
        p_ase_dfa=float(p_ase_dfa),
        p_ase_raman=float(p_ase_raman),
        p_nli=float(p_nli),
        osnr=osnr,
        osnr_dfa_only=osnr_dfa,
        gsnr_nli=gsnr_nli,
        gsnr=gsnr,
        info_rate=float(rate),
        band=band,
        noiseless=any(math.isinf(v) for v in (osnr, osnr_dfa, gsnr_nli, gsnr)),
    )


def throughput(metrics: Iterable[ChannelMetrics]) -> float:
    return float(sum(m.info_rate for m in metrics))


def gsnr_peak_to_peak(metrics: Sequence[ChannelMetrics]) -> float:
    g = [m.gsnr for m in metrics]
    return float(max(g) - min(g)) if g else 0.0


def per_band_throughput(metrics: Sequence[ChannelMetrics]) -> dict[str, float]:
    out: dict[str, float] = {}
    for m in metrics:
        out[m.band] = out.get(m.band, 0.0) + m.info_rate
    return out
