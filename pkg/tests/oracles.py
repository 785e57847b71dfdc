"""Independent reference computations used by the tests.

Nothing here imports the package's physics: each function rebuilds its
quantity from the textbook formula with plain floats, ``math`` and a
different scipy integrator, so agreement is a real cross-check.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate

C = 2.99792458e8  # m/s
H = 6.62607015e-34
LN10_10 = 10.0 / math.log(10.0)


def lam_um(f_thz: float) -> float:
    return C / (f_thz * 1e12) * 1e6


def rayleigh_fit(anchors):
    """Closed-form 2x2 least squares for a = A x + B with x = lambda^-4."""
    xs = [lam_um(f) ** -4 for f, _ in anchors]
    ys = [a for _, a in anchors]
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxx = sum(x * x for x in xs)
    sxy = sum(x * y for x, y in zip(xs, ys))
    a = (n * sxy - sx * sy) / (n * sxx - sx * sx)
    return a, (sy - a * sx) / n


def loss_db(anchors, f_thz):
    a, b = rayleigh_fit(anchors)
    return a * lam_um(f_thz) ** -4 + b


def dispersion(f_thz, lambda0_nm=1310.0, s0=0.092):
    """(D ps/nm/km, beta2 ps^2/km)."""
    lam = lam_um(f_thz) * 1e3
    d = s0 / 4 * (lam - lambda0_nm ** 4 / lam ** 3)
    beta2 = -d * lam ** 2 / (2 * math.pi * C * 1e-3)  # c in nm/ps
    return d, beta2


def marcuse_w(f_thz, a_um=4.1, na=0.12):
    v = 2 * math.pi * a_um * na / lam_um(f_thz)
    return a_um * (0.65 + 1.619 * v ** -1.5 + 2.879 * v ** -6)


def gamma_single(f_thz, n2=2.6e-20):
    aeff = math.pi * marcuse_w(f_thz) ** 2 * 1e-12
    return 2 * math.pi * f_thz * 1e12 * n2 / (C * aeff) * 1e3


def raman_scaled(c_ref, f_pump, f_sig, f_ref=206.5):
    """Table value shifted to a new pump: linear frequency and overlap-area scaling."""
    det = f_pump - f_sig
    w = marcuse_w
    area_ref = w(f_ref) ** 2 + w(f_ref - det) ** 2
    area = w(f_pump) ** 2 + w(f_sig) ** 2
    return c_ref * (f_pump / f_ref) * area_ref / area


def undepleted_backward_gain_db(c_r, p_pump_w, alpha_pump_per_km, length_km):
    leff = (1 - math.exp(-alpha_pump_per_km * length_km)) / alpha_pump_per_km
    return LN10_10 * c_r * p_pump_w * leff


def ase_power(gain, nf_db, f_thz, b_ghz):
    return (10 ** (nf_db / 10) * gain - 1) * H * f_thz * 1e12 * b_ghz * 1e9


def gn_sci_flat(gamma, beta2_ps2_km, alpha_per_km, length_km, p_w, b_ghz, eps_ghz=1e-5):
    """GN SCI power of one rectangular channel on a lossy, flat fiber (W).

    Uses the exact single-span kernel |(1 - exp((-alpha + j psi) L)) / (alpha - j psi)|^2
    and nested QUADPACK integration over the hexagonal SCI domain, written as
    two triangles plus two squares in (x, y) = (f1 - f, f2 - f).
    """
    b2 = abs(beta2_ps2_km) * 1e-24
    half = b_ghz / 2

    def k2(x, y):
        psi = 4 * math.pi ** 2 * b2 * (x * 1e9) * (y * 1e9)
        num = 1 - 2 * math.exp(-alpha_per_km * length_km) * math.cos(psi * length_km) \
            + math.exp(-2 * alpha_per_km * length_km)
        return num / (alpha_per_km ** 2 + psi ** 2)

    def outer(ymax_fn):
        # log substitution x = exp(s) keeps the near-axis ridge resolved
        def inner(s):
            x = math.exp(s)
            ymax = ymax_fn(x)
            if ymax <= 0:
                return 0.0
            val, _ = integrate.quad(lambda t: k2(x, math.exp(t)) * math.exp(t),
                                    math.log(eps_ghz), math.log(ymax), limit=400, epsrel=1e-9)
            return val * x
        val, _ = integrate.quad(inner, math.log(eps_ghz), math.log(half), limit=400, epsrel=1e-8)
        return val

    tri = outer(lambda x: half - x)  # x, y > 0 with x + y <= B/2
    sq = outer(lambda x: half)  # x > 0, y < 0 (by |K|^2 symmetry in psi)
    area_ghz2 = 2 * (tri + sq)
    psd = p_w / (b_ghz * 1e9)
    g_nli = 16 / 27 * gamma ** 2 * psd ** 3 * area_ghz2 * 1e18
    return g_nli * b_ghz * 1e9


def gn_closed_sci(gamma, beta2_ps2_km, alpha_per_km, length_km, p_w, b_ghz):
    """Asinh approximation for one channel, one span (W)."""
    b = b_ghz * 1e9
    b2 = abs(beta2_ps2_km) * 1e-24
    leff = (1 - math.exp(-alpha_per_km * length_km)) / alpha_per_km
    la = 1 / alpha_per_km  # 1 / (2 alpha_field)
    eta = 16 / 27 * gamma ** 2 * leff ** 2 * math.asinh(math.pi ** 2 / 2 * b2 * la * b ** 2) \
        / (2 * math.pi * b2 * la) / b ** 2
    return eta * p_w ** 3


def three_db_optimum_w(a_ase_w, eta_per_w2):
    return (a_ase_w / (2 * eta_per_w2)) ** (1 / 3)


def photon_flux(powers_w, freqs_thz):
    return float(np.sum(np.asarray(powers_w) / np.asarray(freqs_thz)))
