from __future__ import annotations

import math

import pytest
from numpy.testing import assert_allclose

from bosecool import (PulseSpec, Ramp, Schedule, confinement_pulse,
                      figure_schedule, interference_pulse,
                      pseudo_confinement_pulses, resolve_cycle, sideband_pulse)


def test_pulse_spec_validation():
    p = PulseSpec(s=-1, amps=(1.0, 0.5, 1.0))
    assert p.amps == (1.0, 0.5, 1.0)
    q = p.with_amp(2, -2.0)
    assert q.amps == (1.0, 0.5, -2.0)
    assert q.s == -1
    assert p.key() != q.key()
    with pytest.raises(ValueError):
        PulseSpec(s=0, amps=())
    with pytest.raises(ValueError):
        PulseSpec(s=0, amps=(0.0, 0.0))
    with pytest.raises(ValueError):
        PulseSpec(s=-1, amps=(1.0,), omega0_tau_abs=1.0)
    with pytest.raises(ValueError):
        PulseSpec(s=-1, amps=(1.0,), omega_tau_abs=1.0)


def test_confinement_targets():
    # eta^2 = 4: a 3D shell costs 3*4 = 12 quanta
    assert confinement_pulse(3, 2.0).s == -12
    assert confinement_pulse(3, 2.0, offset=-1).s == -13
    assert confinement_pulse(1, 1.0).s == -1
    assert confinement_pulse(3, 2.0).amps == (1.0, 1.0, 1.0)


def test_pseudo_confinement_targets():
    a, b = pseudo_confinement_pulses(3, 2.0)
    assert (a.s, b.s) == (-6, -4)
    a, b = pseudo_confinement_pulses(3, 2.0, offset=-1)
    assert (a.s, b.s) == (-7, -5)
    a, b = pseudo_confinement_pulses(3, math.sqrt(2.0))
    assert (a.s, b.s) == (-3, -2)


def test_non_integer_target_warns():
    with pytest.warns(UserWarning):
        confinement_pulse(3, 1.1)  # 3*1.21 is far from integer
    with pytest.warns(UserWarning):
        pseudo_confinement_pulses(3, 1.3)


def test_sideband_and_interference():
    sb = sideband_pulse(3, -1)
    assert sb.s == -1 and sb.amps == (1.0, 1.0, 1.0)
    ip = interference_pulse((1.0, 1.0, -2.0))
    assert ip.s == 0 and ip.amps == (1.0, 1.0, -2.0)


def test_fig1_cycle_layout():
    sch = figure_schedule("fig1")
    assert sch.total_cycles == 2000
    assert [p.s for p in sch.cycle] == [-12, -6, -4, 0, -13, -7, -5, -1]
    for i, p in enumerate(sch.cycle):
        assert p.amps == ((1.0, 1.0, -2.0) if i == 3 else (1.0, 1.0, 1.0))
    assert sch.ramps == ()
    assert sch.dim == 3 and sch.n_pulses == 8


def test_fig2_cycle_layout():
    sch = figure_schedule("fig2")
    assert sch.total_cycles == 4000
    assert [p.s for p in sch.cycle] == [-12, -6, -3, 3, -13, -7, -4, -2]
    assert all(p.amps == (1.0, 1.0, 1.0) for p in sch.cycle)


def test_fig3_ramp_plan():
    sch = figure_schedule("fig3")
    assert sch.total_cycles == 1200 + 2 * 18600
    assert [p.s for p in sch.cycle] == [-12, -6, -4, 0, -13, -7, -5, -2]
    assert sch.cycle[3].amps == (1.0, 1.0, -1.94)
    assert len(sch.ramps) == 2
    assert all(r.pulse_index == 3 and r.field == "a_z" for r in sch.ramps)
    assert sch.is_ramped(3) and not sch.is_ramped(0)

    a_z = lambda c: resolve_cycle(sch, c)[3].amps[2]
    assert a_z(0) == -1.94
    assert a_z(1199) == -1.94                      # hold
    assert_allclose(a_z(1200 + 18600), -0.08)      # top of the up ramp
    assert_allclose(a_z(1200 + 9300), -1.01)       # midpoint
    # the loop closes one cycle past the end, so the last executed cycle
    # sits a single ramp step away from the start value
    step = (1.94 - 0.08) / 18600
    assert abs(a_z(sch.total_cycles - 1) - (-1.94)) <= step + 1e-12


def test_fig3_down_ramp_retraces_up():
    sch = figure_schedule("fig3")
    up0 = 1200
    for k in (1, 517, 9300, 18599, 18600):
        fwd = resolve_cycle(sch, up0 + k)[3].amps[2]
        back = resolve_cycle(sch, sch.total_cycles - k)[3].amps[2]
        assert fwd == back  # bitwise, not just close


def test_fig3_scale():
    sch = figure_schedule("fig3", ramp_scale=0.1)
    assert sch.total_cycles == 1200 + 2 * 1860
    with pytest.raises(ValueError):
        figure_schedule("fig3", ramp_scale=0.0)
    with pytest.raises(ValueError):
        figure_schedule("fig3", ramp_scale=1.5)
    with pytest.raises(ValueError, match="fixed by its ramps"):
        figure_schedule("fig3", total_cycles=5000)


def test_figure_overrides():
    assert figure_schedule("fig1", total_cycles=100).total_cycles == 100
    with pytest.raises(ValueError):
        figure_schedule("fig9")


def test_resolve_cycle_bounds():
    sch = figure_schedule("fig1", total_cycles=10)
    with pytest.raises(ValueError):
        resolve_cycle(sch, 10)
    with pytest.raises(ValueError):
        resolve_cycle(sch, -1)


def test_ramp_value_interpolation():
    r = Ramp(pulse_index=0, field="a_z", start_value=1.0, end_value=3.0,
             start_cycle=100, end_cycle=300)
    assert r.value_at(50) == 1.0      # clamped before the window
    assert r.value_at(100) == 1.0
    assert r.value_at(300) == 3.0
    assert r.value_at(999) == 3.0
    assert_allclose(r.value_at(200), 2.0)
    assert not r.active_at(99)
    assert r.active_at(100)


def test_ramp_validation():
    with pytest.raises(ValueError):
        Ramp(pulse_index=0, field="s", start_value=0, end_value=1,
             start_cycle=0, end_cycle=10)
    with pytest.raises(ValueError):
        Ramp(pulse_index=0, field="a_z", start_value=0, end_value=1,
             start_cycle=10, end_cycle=10)


def test_schedule_validation():
    p1 = PulseSpec(s=-1, amps=(1.0,))
    p3 = PulseSpec(s=-1, amps=(1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        Schedule(cycle=(), total_cycles=10)
    with pytest.raises(ValueError):
        Schedule(cycle=(p1,), total_cycles=0)
    with pytest.raises(ValueError):
        Schedule(cycle=(p1, p3), total_cycles=10)  # mixed dims
    ramp = Ramp(pulse_index=5, field="a_x", start_value=1, end_value=2,
                start_cycle=0, end_cycle=5)
    with pytest.raises(ValueError):
        Schedule(cycle=(p1,), total_cycles=10, ramps=(ramp,))  # index range
    ramp_z = Ramp(pulse_index=0, field="a_z", start_value=1, end_value=2,
                  start_cycle=0, end_cycle=5)
    with pytest.raises(ValueError):
        Schedule(cycle=(p1,), total_cycles=10, ramps=(ramp_z,))  # no z in 1D
    late = Ramp(pulse_index=0, field="a_x", start_value=1, end_value=2,
                start_cycle=0, end_cycle=50)
    with pytest.raises(ValueError):
        Schedule(cycle=(p1,), total_cycles=10, ramps=(late,))  # past the end


def test_ramped_amplitude_applies_only_in_window():
    base = PulseSpec(s=-1, amps=(1.0,))
    ramp = Ramp(pulse_index=0, field="a_x", start_value=1.0, end_value=0.2,
                start_cycle=4, end_cycle=8)
    sch = Schedule(cycle=(base,), total_cycles=10, ramps=(ramp,))
    assert resolve_cycle(sch, 0)[0].amps == (1.0,)
    assert resolve_cycle(sch, 8)[0].amps == (0.2,)
    assert resolve_cycle(sch, 9)[0].amps == (0.2,)
    assert_allclose(resolve_cycle(sch, 6)[0].amps[0], 0.6)
