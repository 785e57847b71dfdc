from __future__ import annotations

import numpy as np
import pytest

from mbqot.fiber import FiberSpec
from mbqot.scenario import AmplifierSpec, Band, Scenario, SolverOptions, SpanSpec, build_channel_grid

FLAT_AT = 193.0


def make_scenario(*, bands=(("C", 192.0, 193.2),), per_band=9, fiber=None, length=100.0,
                  lumped_db=0.0, n_spans=1, launch_dbm=0.0, isrs=True, nf_db=5.0, pumps=(),
                  z_step=0.1, spacing=118.75, symbol_rate=100.0, roll_off=0.1) -> Scenario:
    fiber = FiberSpec() if fiber is None else fiber
    plan = build_channel_grid([Band(*b) for b in bands], per_band, spacing, symbol_rate, roll_off)
    amps = tuple(AmplifierSpec(b[0], nf_db) for b in bands)
    span = SpanSpec(fiber, length, lumped_db, amps, tuple(pumps))
    launch = np.broadcast_to(np.asarray(launch_dbm, dtype=float), (len(plan),))
    return Scenario(plan, (span,) * n_spans, tuple(map(float, launch)), isrs_enabled=isrs,
                    solver=SolverOptions(z_step_km=z_step))


@pytest.fixture
def flat_fiber():
    return FiberSpec(flat_at_thz=FLAT_AT)


@pytest.fixture
def nine_channel():
    return make_scenario(isrs=False)



_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[_VERDICTS].append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = sorted(config.stash.get(_VERDICTS, []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in lines:
            terminalreporter.write_line(line)
