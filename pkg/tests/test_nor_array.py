import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fenor.device import threshold_consistent
from fenor.errors import FenorError, InfeasibleError
from fenor.netsolve import Capacitor, Fet, Resistor, VoltageSource, transient
from fenor.nor_array import (ArrayConfig, ExplicitPattern, Pattern, ReadScheme, ShuntTopology,
                             Variant, build_mono3d_read, build_planar_read, fit_rshunt,
                             ShuntFit, lump_unselected, max_nstack, required_vinh, search_vinh,
                             simulate_read, write_bias_map)

FAST = dict(steps=400)


@pytest.fixture(scope="module")
def planar(cfg):
    return cfg.array()


@pytest.fixture(scope="module")
def mono(cfg):
    return cfg.mono3d()


def _count(c, kind):
    return len(c.of_type(kind))


def test_planar_netlist_counts(planar):
    a = replace(planar, rows=8, cols=8)
    s = ReadScheme(v_pre=1.8, t_evaluate=1e-9)
    c = build_planar_read(a, Pattern.ERS_READ, 3, s)
    assert _count(c, Fet) == 8
    assert _count(c, VoltageSource) == 2
    assert _count(c, Capacitor) == 3
    gates = {f.name: f.g for f in c.of_type(Fet)}
    assert gates["M3"] == "wl_sel"
    assert sum(g == "wl_inh" for g in gates.values()) == 7
    vts = {f.name: f.model.vt for f in c.of_type(Fet)}
    assert vts["M3"] == a.vt_ers
    assert all(v == a.vt_pgm for k, v in vts.items() if k != "M3")


def test_mono3d_single_plane(mono):
    a = replace(mono, n_stack=1, r_shunt=math.inf)
    c = build_mono3d_read(a, Pattern.PGM_READ, 0, ReadScheme(v_pre=1.8, t_evaluate=1e-9))
    names = sorted(f.name for f in c.of_type(Fet))
    assert names == ["Ma_0", "Mb_0", "Msel_bl", "Msel_sl"]
    assert _count(c, Resistor) == 1          # WL driver only


@pytest.mark.parametrize("topology", list(ShuntTopology))
def test_shunt_counts(mono, topology):
    s = ReadScheme(v_pre=1.8, t_evaluate=1e-9)
    c = build_mono3d_read(replace(mono, n_stack=4, r_shunt=1e6, shunt_topology=topology),
                          Pattern.ERS_READ, 0, s)
    assert sum(r.name.startswith("Rsh") for r in c.of_type(Resistor)) == 3
    c_inf = build_mono3d_read(replace(mono, n_stack=4, r_shunt=math.inf), Pattern.ERS_READ, 0, s)
    assert not any(r.name.startswith("Rsh") for r in c_inf.of_type(Resistor))


def test_half_cells_series_equivalent(mono):
    a = replace(mono, n_stack=2)
    c = build_mono3d_read(a, Pattern.PGM_READ, 0, ReadScheme(v_pre=1.8, t_evaluate=1e-9))
    half = next(f for f in c.of_type(Fet) if f.name == "Ma_0").model
    assert half.L == pytest.approx(a.device.L / 2)


def _explicit_vs_lumped(cfg, pat, sel, scheme):
    c = build_planar_read(cfg, pat, sel, scheme)
    dt = scheme.t_evaluate / scheme.steps
    full = transient(c, scheme.t_evaluate, dt, record=["bl"]).v("bl")
    lumped = transient(lump_unselected(c), scheme.t_evaluate, dt, record=["bl"]).v("bl")
    return full, lumped


@pytest.mark.parametrize("n", [8, 16])
def test_lumping_full_enumeration(planar, n):
    a = replace(planar, rows=n, cols=n)
    s = ReadScheme(v_pre=1.8, t_evaluate=2e-9, v_inh=-0.2, **FAST)
    for pat in (Pattern.ERS_READ, Pattern.PGM_READ):
        for sel in range(n):
            full, lumped = _explicit_vs_lumped(a, pat, sel, s)
            assert np.max(np.abs(full - lumped)) <= 0.01 * s.v_pre


@settings(max_examples=10, deadline=None)
@given(st.lists(st.booleans(), min_size=8, max_size=8), st.integers(0, 7))
def test_lumping_mixed_patterns(planar, states, sel):
    a = replace(planar, rows=8, cols=8)
    s = ReadScheme(v_pre=1.8, t_evaluate=2e-9, v_inh=-0.2, steps=200)
    full, lumped = _explicit_vs_lumped(a, ExplicitPattern.of(states), sel, s)
    assert np.max(np.abs(full - lumped)) <= 0.01 * s.v_pre


def test_lumping_refuses_distributed_line(planar):
    a = replace(planar, rows=4, cols=4, r_bl_per_cell=50.0)
    c = build_planar_read(a, Pattern.ERS_READ, 0, ReadScheme(v_pre=1.8, t_evaluate=1e-9))
    with pytest.raises(FenorError):
        lump_unselected(c)


def test_distributed_line_close_to_lumped(planar):
    s = ReadScheme(v_pre=1.8, t_evaluate=2e-9, v_inh=-0.4, **FAST)
    a = replace(planar, rows=16, cols=16)
    r0 = simulate_read(a, s)
    r1 = simulate_read(replace(a, r_bl_per_cell=1.0), s)
    np.testing.assert_allclose(r1.v_bl_ers, r0.v_bl_ers, atol=5e-3)


def test_single_row_needs_no_inhibition(planar):
    a = replace(planar, rows=1)
    s = ReadScheme(v_pre=1.8, t_evaluate=2e-9, **FAST)
    r = simulate_read(a, s)
    assert r.feasible and r.read_delay < s.t_evaluate
    assert required_vinh(a, s, v_floor=-1.0) == 0.0


def test_energy_accounting_by_hand(planar):
    a = replace(planar, rows=16, cols=16)
    s = ReadScheme(v_pre=1.8, t_evaluate=2e-9, v_inh=-0.3, **FAST)
    r = simulate_read(a, s)
    e = r.energy_breakdown
    assert e["wl_select"] == pytest.approx(a.c_wl_per_cell * 1.8 ** 2)
    assert e["inhibit_rail"] == pytest.approx(15 * a.c_wl_per_cell * 0.3 ** 2)
    c_bl = 16 * a.c_bl_per_cell
    assert e["precharge"] == pytest.approx(c_bl * 1.8 * (1.8 - r.v_bl_ers[-1]))
    assert r.read_energy == pytest.approx(sum(e.values()))


def test_margin_definitions(planar):
    a = replace(planar, rows=64, cols=64)
    s = ReadScheme(v_pre=1.8, t_evaluate=2e-9, v_inh=-0.4, **FAST)
    r = simulate_read(a, s)
    sep = r.v_bl_ers - r.v_bl_pgm
    assert r.sensing_margin == pytest.approx(sep[-1])
    k = int(np.argmax(sep >= s.sm_target))
    assert r.time[k - 1] <= r.read_delay <= r.time[k]


def test_margin_monotone_in_rows(planar):
    s = ReadScheme(v_pre=1.8, t_evaluate=2e-9, v_inh=-0.375, **FAST)
    sm = [simulate_read(replace(planar, rows=n), s).sensing_margin for n in (16, 64, 256, 1024)]
    assert all(b <= a + 1e-9 for a, b in zip(sm, sm[1:]))


def test_vinh_monotone_in_rows(cfg, planar):
    s = replace(cfg.scheme(), **FAST)
    v = [required_vinh(replace(planar, rows=n), s, -1.0, resolution=0.02) for n in (16, 128, 512)]
    assert all(abs(b) >= abs(a) for a, b in zip(v, v[1:]))


def test_positive_vt_removes_inhibition(cfg, planar):
    s = replace(cfg.scheme(shifted=True), **FAST)
    assert required_vinh(replace(planar, vt_pgm=0.1), s, -1.0) == 0.0


def test_energy_falls_with_positive_shift(cfg, planar):
    s = replace(cfg.scheme(), **FAST)
    e = []
    for vt in (-0.4, -0.2, 0.1):
        e.append(search_vinh(replace(planar, vt_pgm=vt), s, -1.0).result.read_energy)
    assert e[0] >= e[1] >= e[2]


def test_search_errors(planar):
    s = ReadScheme(v_pre=1.8, t_evaluate=2e-9, **FAST)
    with pytest.raises(FenorError):
        search_vinh(planar, s, v_floor=0.2)
    with pytest.raises(InfeasibleError) as err:
        search_vinh(planar, s, v_floor=0.0)
    assert err.value.achieved < s.sm_target
    with pytest.raises(FenorError):
        max_nstack(planar, s, candidates=(4, 2))


def test_config_validation(planar):
    with pytest.raises(FenorError):
        replace(planar, rows=0)
    with pytest.raises(FenorError):
        replace(planar, c_bl_per_cell=0.0)
    with pytest.raises(FenorError):
        replace(planar, variant=Variant.MONO3D)          # selector missing
    with pytest.raises(FenorError):
        ReadScheme(v_pre=1.8, t_evaluate=1e-9, v_inh=0.1)
    with pytest.raises(FenorError):
        build_planar_read(planar, Pattern.ERS_READ, planar.rows, ReadScheme(1.8, 1e-9))


def test_stack_margin_monotone(cfg, mono):
    s = replace(cfg.mono3d_scheme(1.8), v_inh=-0.35, **FAST)
    sm = [simulate_read(replace(mono, n_stack=n), s).sensing_margin for n in (2, 4, 8, 16)]
    assert all(b <= a + 1e-9 for a, b in zip(sm, sm[1:]))


def test_shunt_ordering(cfg, mono):
    s = replace(cfg.mono3d_scheme(1.7), **FAST)
    a = replace(mono, vt_pgm=0.1)
    cands = (1, 2, 4, 8)
    finite = max_nstack(replace(a, r_shunt=1e5), s, cands, v_floor=0.0)
    isolated = max_nstack(replace(a, r_shunt=math.inf), s, cands, v_floor=0.0)
    assert isolated >= finite


def test_fit_rshunt_contract(cfg, mono):
    s = replace(cfg.mono3d_scheme(1.7), **FAST)
    with pytest.raises(FenorError):
        fit_rshunt(mono, s, 3, candidates=(1, 2, 4))
    assert ShuntFit(4, 1e5, math.inf, math.inf).unbounded
    assert not ShuntFit(4, 1e5, 1e6, 3.2e5).unbounded


def test_write_bias_map():
    m = write_bias_map(4, 5, 3.0, (1, 2))
    assert m.stress[1, 2] == 3.0
    assert np.count_nonzero(m.stress == 1.5) == 3 + 4
    assert np.count_nonzero(m.stress == 0) == 3 * 4
    assert m.counts == {"selected": 1, "half_selected": 7, "unselected": 12}
    with pytest.raises(FenorError):
        write_bias_map(4, 4, 0.0, (0, 0))
    with pytest.raises(FenorError):
        write_bias_map(4, 4, 1.0, (4, 0))
