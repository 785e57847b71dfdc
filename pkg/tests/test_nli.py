import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

import oracles
from conftest import FLAT_AT, make_scenario
from mbqot.fiber import FiberSpec, dispersion_beta2, gamma_xci, loss_coefficient
from mbqot.nli import NliError, nli_closed_form, nli_oracle
from mbqot.power import LinkPropagation, link_propagate
from mbqot.scenario import PumpSpec


def _run(sc, channels=None, **kw):
    link = link_propagate(sc)
    cf = nli_closed_form(sc, link)
    orc = nli_oracle(sc, link, channels, **kw) if channels is not None else None
    return cf, orc


def test_zero_launch_gives_zero_nli():
    sc = make_scenario(launch_dbm=-np.inf, isrs=False)
    cf, orc = _run(sc, [0, 4])
    assert np.all(cf.p_nli == 0)
    assert np.all(orc.p_nli == 0)


def test_single_channel_oracle_matches_quadpack(flat_fiber):
    sc = make_scenario(per_band=1, fiber=flat_fiber, isrs=False, bands=(("C", 192.9, 193.1),), spacing=110.0)
    _, orc = _run(sc, [0], rtol=1e-5)
    f = FLAT_AT
    ref = oracles.gn_sci_flat(oracles.gamma_single(f), oracles.dispersion(f)[1],
                              loss_coefficient(flat_fiber, f), 100.0, 1e-3, 100.0)
    assert orc.sci[0] == pytest.approx(ref, rel=2e-4)
    assert orc.xci[0] == 0.0


def test_single_channel_closed_form_close_to_quadpack(flat_fiber):
    sc = make_scenario(per_band=1, fiber=flat_fiber, isrs=False, bands=(("C", 192.9, 193.1),), spacing=110.0)
    cf, _ = _run(sc)
    f = FLAT_AT
    a = loss_coefficient(flat_fiber, f)
    g = oracles.gamma_single(f)
    b2 = oracles.dispersion(f)[1]
    assert cf.sci[0] == pytest.approx(oracles.gn_closed_sci(g, b2, a, 100.0, 1e-3, 100.0), rel=1e-6)
    ref = oracles.gn_sci_flat(g, b2, a, 100.0, 1e-3, 100.0)
    assert abs(10 * np.log10(cf.sci[0] / ref)) < 0.1


def test_longer_span_grows_sublinearly(flat_fiber):
    vals = []
    for length in (100.0, 200.0):
        sc = make_scenario(per_band=1, fiber=flat_fiber, isrs=False, length=length,
                           bands=(("C", 192.9, 193.1),), spacing=110.0)
        vals.append(_run(sc, [0])[1].p_nli[0])
    assert vals[0] < vals[1] < 2 * vals[0]


def test_removing_neighbours_removes_their_xci():
    full = make_scenario(per_band=3, isrs=False, bands=(("C", 193.0, 193.4),))
    _, o3 = _run(full, [1])
    alone = full.with_launch([-np.inf, 0.0, -np.inf])
    _, o1 = _run(alone, [1])
    assert o3.p_nli[0] - o1.p_nli[0] == pytest.approx(o3.xci[0], rel=2e-3)
    assert o1.xci[0] == 0.0


@pytest.mark.parametrize("method", ["closed_form", "oracle"])
def test_cubic_homogeneity_isrs_off(method):
    sc = make_scenario(isrs=False, per_band=5, bands=(("C", 192.0, 192.7),))
    out = []
    for x_db in (0.0, 3.0):
        s = sc.with_launch(np.array(sc.launch_dbm) + x_db)
        cf, orc = _run(s, [0, 2] if method == "oracle" else None)
        out.append(cf.p_nli[[0, 2]] if method == "closed_form" else orc.p_nli)
    x = 10 ** 0.3
    rtol = 1e-12 if method == "closed_form" else 2e-3
    assert_allclose(out[1], x ** 3 * out[0], rtol=rtol)


def test_sci_plus_xci_is_total():
    sc = make_scenario(bands=(("L", 186.0, 187.2), ("C", 193.0, 194.2)), launch_dbm=3.0)
    cf, orc = _run(sc, [0, 12])
    assert_allclose(cf.p_nli, cf.sci + cf.xci, rtol=1e-14)
    assert_allclose(orc.p_nli, orc.sci + orc.xci, rtol=1e-14)
    assert np.all(cf.p_nli >= 0)


def test_symmetric_spectrum_on_flat_fiber(flat_fiber):
    sc = make_scenario(per_band=11, fiber=flat_fiber, isrs=False, bands=(("C", 192.0, 193.4),))
    cf, _ = _run(sc)
    db = 10 * np.log10(cf.p_nli)
    assert np.max(np.abs(db - db[::-1])) < 0.1


@settings(max_examples=25, deadline=None)
@given(st.lists(st.booleans(), min_size=8, max_size=8), st.integers(0, 7))
def test_adding_a_channel_never_reduces_nli(lit, extra):
    base = make_scenario(per_band=8, bands=(("C", 192.0, 193.0),))
    on = np.where(lit, 0.0, -np.inf)
    on[extra] = -np.inf
    more = on.copy()
    more[extra] = 0.0
    a, _ = _run(base.with_launch(on))
    b, _ = _run(base.with_launch(more))
    mask = np.isfinite(on)
    assert np.all(b.p_nli[mask] >= a.p_nli[mask] * (1 - 1e-9))


def test_closed_form_uses_pair_dispersion_and_gamma():
    fiber = FiberSpec()
    sc = make_scenario(bands=(("L", 186.0, 186.2), ("S", 200.0, 200.2)), per_band=1, isrs=False,
                       spacing=110.0)
    cf, _ = _run(sc)
    # XCI of channel 0 from channel 1, hand-built from the incoherent-GN expression
    f0, f1 = sc.plan.freqs
    b = 100e9
    a1 = loss_coefficient(fiber, f1)
    leff = (1 - np.exp(-a1 * 100)) / a1
    la = 1 / a1
    b2 = abs(dispersion_beta2(fiber, 0.5 * (f0 + f1))) * 1e-24
    df = (f1 - f0) * 1e12
    k = np.pi ** 2 * b2 * la * b
    psi = np.arcsinh(k * (df + b / 2)) - np.arcsinh(k * (df - b / 2))
    eta = 16 / 27 * gamma_xci(fiber, f0, f1) ** 2 * leff ** 2 * psi / (2 * np.pi * b2 * la) / b ** 2
    assert cf.xci[0] == pytest.approx(eta * 1e-3 ** 3, rel=1e-6)


def test_fit_warning_with_backward_pumping():
    sc = make_scenario(bands=(("S", 199.0, 200.2),)).with_pumps([PumpSpec(213.0, 28.0)])
    cf, _ = _run(sc)
    assert any("fit residual" in w for w in cf.warnings)


def test_missing_profile_is_an_error():
    sc = make_scenario(n_spans=2)
    link = link_propagate(sc)
    short = LinkPropagation(link.profiles[:1], link.span_out_w[:1], link.amp_gain[:1], link.raman_ase_w)
    with pytest.raises(NliError):
        nli_closed_form(sc, short)
    with pytest.raises(NliError):
        nli_oracle(sc, short, [0])


def test_oracle_needs_channels():
    sc = make_scenario()
    with pytest.raises(ValueError):
        nli_oracle(sc, link_propagate(sc), [])


def test_spans_add_incoherently():
    one = make_scenario()
    three = make_scenario(n_spans=3)
    a, _ = _run(one)
    b, _ = _run(three)
    assert_allclose(b.p_nli, 3 * a.p_nli, rtol=1e-12)


def test_exports(tmp_path):
    sc = make_scenario(per_band=3, bands=(("C", 193.0, 193.4),))
    cf, _ = _run(sc)
    cf.to_csv(tmp_path / "n.csv")
    head = (tmp_path / "n.csv").read_text().splitlines()[0]
    assert head == "channel,freq_THz,P_SCI_W,P_XCI_W,P_NLI_W"
    doc = json.loads(cf.to_json())
    assert doc["method"] == "closed_form" and len(doc["P_NLI_W"]) == 3
