import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbqot.scenario import (
    Band,
    Channel,
    ChannelPlan,
    PumpSpec,
    AmplifierSpec,
    ScenarioError,
    ScenarioParseError,
    build_channel_grid,
    default_scenario,
    dump_scenario,
    load_scenario,
    load_scenario_file,
    scenario_hash,
)

SMALL = """
name = "two-band test"
[plan]
spacing_ghz = 50.0
symbol_rate_gbd = 40.0
roll_off = 0.1
per_band_count = 4
[[plan.bands]]
name = "C"
f_min = 193.0
f_max = 193.2
[[plan.bands]]
name = "L"
f_min = 193.3
f_max = 193.5
[fibers.a]
[[spans]]
fiber = "a"
length_km = 80.0
lumped_loss_db = 1.0
repeat = 3
amplifiers = [{band = "C", noise_figure_db = 5.0}, {band = "L", noise_figure_db = 5.5}]
[launch]
per_band_dbm = {C = 1.0, L = -1.0}
"""


def test_default_plan_matches_band_layout():
    sc = default_scenario()
    plan = sc.plan
    assert len(plan) == 150
    assert plan.band_names == ["L", "C", "S"]
    f = plan.freqs
    assert f[0] == pytest.approx(184.5 + 0.059375)
    assert np.all(np.diff(f) > 0)
    for name, lo in (("L", 184.50), ("C", 190.75), ("S", 197.00)):
        idx = plan.band_indices(name)
        assert idx.size == 50
        assert f[idx[0]] - 0.059375 == pytest.approx(lo)
    assert set(plan.symbol_rates) == {100.0}
    assert len(sc.spans) == 10
    assert sc.spans[0].noise_figure("C") == 5.0
    assert sc.spans[0].noise_figure("S") == 6.0


def test_default_raman_pumps():
    sc = default_scenario(raman=True)
    caps = [p.max_power_dbm for p in sc.pumps]
    assert caps == [24.0, 24.0, 27.0]
    assert all(p.min_freq_thz == 211.5 for p in sc.pumps)
    total_w = sum(1e-3 * 10 ** (c / 10) for c in caps)
    assert total_w == pytest.approx(1.0, rel=0.005)


def test_load_small_document():
    sc = load_scenario(SMALL)
    assert sc.name == "two-band test"
    assert len(sc.spans) == 3 and sc.spans[0] is sc.spans[2]
    assert sc.launch_dbm == (1.0,) * 4 + (-1.0,) * 4
    assert sc.spans[0].noise_figure("L") == 5.5


def test_round_trip_preserves_hash():
    for sc in (load_scenario(SMALL), default_scenario(raman=True)):
        again = load_scenario(dump_scenario(sc))
        assert again == sc
        assert scenario_hash(again) == scenario_hash(sc)


def test_hash_ignores_labels_but_not_physics():
    base = load_scenario(SMALL)
    renamed = load_scenario(SMALL.replace('name = "two-band test"', 'name = "x"').replace('"a"', '"b"').replace("[fibers.a]", "[fibers.b]"))
    assert scenario_hash(renamed) == scenario_hash(base)
    changed = load_scenario(SMALL.replace("lumped_loss_db = 1.0", "lumped_loss_db = 1.5"))
    assert scenario_hash(changed) != scenario_hash(base)


def test_semantically_equal_launch_forms_hash_equal():
    a = load_scenario(SMALL)
    b = load_scenario(SMALL.replace("per_band_dbm = {C = 1.0, L = -1.0}",
                                    "per_channel_dbm = [1, 1, 1, 1, -1, -1, -1, -1]"))
    assert scenario_hash(a) == scenario_hash(b)


def test_load_from_file_resolves_relative_tables(tmp_path):
    (tmp_path / "ir.csv").write_text("gsnr_dB,rate\n0,0\n30,2\n")
    (tmp_path / "s.toml").write_text(SMALL + '\n[ir_curve]\ntable = "ir.csv"\n')
    sc = load_scenario_file(tmp_path / "s.toml")
    assert sc.ir_curve.rate_tbps == (0.0, 2.0)


@pytest.mark.parametrize("edit, where", [
    (("f_max = 193.2", "f_max = 193.4"), "plan.bands[1]"),  # overlap
    (("symbol_rate_gbd = 40.0", "symbol_rate_gbd = 48.0"), "plan.spacing_ghz"),  # 52.8 GHz > 50
    (("per_band_count = 4", "per_band_count = 5"), "plan.bands[0]"),  # grid overflow
    (("length_km = 80.0", "length_km = 0.0"), "spans[0].length_km"),
    (("lumped_loss_db = 1.0", "lumped_loss_db = -1.0"), "spans[0].lumped_loss_db"),
    (("noise_figure_db = 5.0", "noise_figure_db = 2.0"), "spans[0].amplifiers[0]"),
    (('fiber = "a"', 'fiber = "zz"'), "spans[0].fiber"),
    (("per_band_dbm = {C = 1.0, L = -1.0}", "per_channel_dbm = [0, 0]"), "launch"),
    (("per_band_dbm = {C = 1.0, L = -1.0}", "per_band_dbm = {C = 1.0}"), "launch.per_band_dbm"),
])
def test_validation_errors_name_the_field(edit, where):
    with pytest.raises(ScenarioError) as err:
        load_scenario(SMALL.replace(*edit))
    assert err.value.path == where


def test_grid_overflow_reports_amount():
    with pytest.raises(ScenarioError, match="by 0.050 GHz"):
        build_channel_grid([Band("C", 193.0, 193.2)], 5, 40.01, 30.0, 0.1)


def test_missing_band_amplifier():
    doc = SMALL.replace(', {band = "L", noise_figure_db = 5.5}', "")
    with pytest.raises(ScenarioError, match="no amplifier for band 'L'"):
        load_scenario(doc)


def test_empty_spans_rejected():
    doc = SMALL[:SMALL.index("[[spans]]")] + "[launch]\npower_dbm = 0.0\n"
    with pytest.raises(ScenarioError, match="spans must be non-empty"):
        load_scenario(doc)


def test_malformed_toml():
    with pytest.raises(ScenarioParseError):
        load_scenario("[plan\nspacing_ghz = 1")


def test_pump_constraints():
    with pytest.raises(ScenarioError):
        PumpSpec(212.0, 25.0, max_power_dbm=24.0)
    with pytest.raises(ScenarioError):
        PumpSpec(211.0, 20.0, min_freq_thz=211.5)
    with pytest.raises(ScenarioError):
        PumpSpec(212.0, 20.0, direction="forward")
    with pytest.raises(ScenarioError):
        AmplifierSpec("C", 2.9)


def test_explicit_channel_list_checks_order_and_band():
    bands = (Band("C", 193.0, 194.0),)
    ok = ChannelPlan((Channel(193.1, 30, 0.1, "C"), Channel(193.2, 30, 0.1, "C")), 50.0, bands)
    assert len(ok) == 2
    with pytest.raises(ScenarioError, match="strictly increasing"):
        ChannelPlan((Channel(193.2, 30, 0.1, "C"), Channel(193.1, 30, 0.1, "C")), 50.0, bands)
    with pytest.raises(ScenarioError, match="outside band"):
        ChannelPlan((Channel(194.5, 30, 0.1, "C"),), 50.0, bands)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.floats(20.0, 100.0), st.floats(0.0, 0.5))
def test_grid_invariants(n, rate, roll):
    spacing = rate * (1 + roll) + 1.0
    width = n * spacing / 1e3 + 0.01
    plan = build_channel_grid([Band("X", 190.0, 190.0 + width)], n, spacing, rate, roll)
    f = plan.freqs
    assert len(plan) == n
    assert np.all(np.diff(f) > 0)
    assert all(c.occupied_ghz <= plan.spacing_ghz + 1e-9 for c in plan.channels)
    assert f[0] >= 190.0 and f[-1] <= 190.0 + width


def test_with_helpers():
    sc = load_scenario(SMALL)
    assert sc.with_launch(2.0).launch_dbm == (2.0,) * 8
    assert not sc.with_isrs(False).isrs_enabled
    assert sc.with_solver(z_step_km=0.5).solver.z_step_km == 0.5
    pumped = sc.with_pumps([PumpSpec(205.0, 20.0)])
    assert all(len(s.pumps) == 1 for s in pumped.spans)
