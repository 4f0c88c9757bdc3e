"""Acceptance criteria 1-9, one pass/fail line per criterion.

The lines are collected into an "acceptance criteria" section of the
pytest terminal summary; ``python tests/test_acceptance.py`` runs only these.
"""

import math
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from fenor.config import load_config
from fenor.device import drain_current_and_derivatives
from fenor.festack import extract_vt, trace_qv_loop, triangular_sweep, vt_vs_tfe
from fenor.netsolve import Circuit, transient
from fenor.nor_array import (Pattern, Variant, build_planar_read, lump_unselected, max_nstack,
                             required_vinh, search_vinh, simulate_read)
from fenor.planner import bit_density, round_sig
from fenor.units import sheet_density_to_charge


def report(log, n, ok, detail, elapsed, budget):
    in_time = elapsed <= budget
    status = "PASS" if ok and in_time else "FAIL"
    line = f"criterion {n}: {status}  {detail}  [{elapsed:.1f} s / {budget:g} s]"
    log.append(line)
    print(line)
    assert ok, line
    assert in_time, line


@pytest.fixture(scope="module")
def cfg():
    return load_config()


def test_criterion_1_unit_identity(acceptance_log):
    t = time.perf_counter()
    q = sheet_density_to_charge(2.2e12) / 1e-2          # uC/cm^2
    ok = abs(q - 0.35) / 0.35 < 0.01
    report(acceptance_log, 1, ok, f"2.2e12 cm^-2 * e = {q:.4f} uC/cm^2 (target 0.35 +/- 1%)",
           time.perf_counter() - t, 1.0)


def test_criterion_2_vt_calibration(cfg, acceptance_log):
    t = time.perf_counter()
    f = cfg.values["ferroelectric"]
    pair = extract_vt(cfg.ferro(), v_max=f["v_max"], step=f["v_step"])
    ok = abs(pair.vt_minus + 0.40) <= 0.05 and pair.vt_plus > pair.vt_minus
    report(acceptance_log, 2, ok, f"vt_minus = {pair.vt_minus:+.3f} V, vt_plus = {pair.vt_plus:+.3f} V",
           time.perf_counter() - t, 1.0)


def test_criterion_3_tfe_scaling(cfg, acceptance_log):
    t = time.perf_counter()
    f = cfg.values["ferroelectric"]
    (_, thin), (_, ref) = vt_vs_tfe(cfg.ferro(), [6e-9, 10e-9], v_max=f["v_max"], step=f["v_step"])
    d_minus = thin.vt_minus - ref.vt_minus
    d_plus = thin.vt_plus - ref.vt_plus
    ok = abs(d_minus - 0.48) <= 0.15 and abs(d_plus) < abs(d_minus)
    report(acceptance_log, 3, ok, f"d(vt_minus) = {d_minus:+.3f} V, d(vt_plus) = {d_plus:+.3f} V",
           time.perf_counter() - t, 5.0)


def test_criterion_4_density(acceptance_log):
    t = time.perf_counter()
    got = [round_sig(bit_density(0.10, n, 0.70), 2) for n in (4, 16, 64)]
    ok = got == [0.028, 0.11, 0.45]
    report(acceptance_log, 4, ok, f"n_stack 4/16/64 -> {got} Gb/mm^2", time.perf_counter() - t, 1.0)


def test_criterion_5_inhibition(cfg, acceptance_log):
    t = time.perf_counter()
    a = cfg.array()
    floor = cfg.get("read", "v_floor")
    res = cfg.get("read", "vinh_resolution")
    v_lo = required_vinh(replace(a, vt_pgm=-0.4), cfg.scheme(), floor, res)
    v_hi = required_vinh(replace(a, vt_pgm=0.1), cfg.scheme(shifted=True), floor, res)
    ok = abs(v_lo + 0.35) <= 0.10 and v_hi == 0.0
    report(acceptance_log, 5, ok, f"512x512: vinh(-0.4 V) = {v_lo:+.3f} V, vinh(+0.1 V) = {v_hi:+.3f} V",
           time.perf_counter() - t, 60.0)


def test_criterion_6_energy_trend(cfg, acceptance_log):
    t = time.perf_counter()
    a = cfg.array()
    floor = cfg.get("read", "v_floor")
    res = cfg.get("read", "vinh_resolution")
    e_lo = search_vinh(replace(a, vt_pgm=-0.4), cfg.scheme(), floor, res).result.read_energy
    e_hi = search_vinh(replace(a, vt_pgm=0.1), cfg.scheme(shifted=True), floor, res).result.read_energy
    ratio = e_lo / e_hi
    ok = 6.0 <= ratio <= 20.0
    report(acceptance_log, 6, ok, f"E(-0.4 V) / E(+0.1 V) = {e_lo * 1e15:.2f} fJ / {e_hi * 1e15:.3f} fJ = {ratio:.1f}x",
           time.perf_counter() - t, 60.0)


def test_criterion_7_stack_limits(cfg, acceptance_log):
    t = time.perf_counter()
    m = cfg.mono3d()
    cands = cfg.get("mono3d", "candidates")
    want = {"shunted, vt_pgm shifted": 4, "isolated, vt_pgm low": 16,
            "isolated, vt_pgm shifted": 64}
    got = {}
    for label, r, vt, v_pre, floor in cfg.stack_scenarios():
        if label in want:
            got[label] = max_nstack(replace(m, r_shunt=r, vt_pgm=vt), cfg.mono3d_scheme(v_pre),
                                    cands, v_floor=floor)
    ok = got == want
    detail = ", ".join(f"{k}: {v}" for k, v in got.items())
    report(acceptance_log, 7, ok, f"r_shunt = {m.r_shunt:.3g} ohm; {detail}", time.perf_counter() - t, 300.0)


def test_criterion_8_delay_class(cfg, acceptance_log):
    t = time.perf_counter()
    floor = cfg.get("read", "v_floor")
    res = cfg.get("read", "vinh_resolution")
    planar = search_vinh(cfg.array(Variant.PLANAR), cfg.scheme(), floor, res)
    same_bias = replace(cfg.scheme(), v_inh=planar.v_inh)
    vch = simulate_read(cfg.array(Variant.VCH), same_bias)
    d_p, d_v = planar.result.read_delay, vch.read_delay
    ok = planar.result.feasible and d_p < 5e-9 and d_v > d_p
    report(acceptance_log, 8, ok, f"planar {d_p * 1e9:.2f} ns, vertical channel {d_v * 1e9:.2f} ns "
                  f"at v_inh = {planar.v_inh:+.3f} V", time.perf_counter() - t, 60.0)


def _rc_error():
    R, C = 1e3, 1e-12
    c = Circuit()
    c.capacitor("C1", "a", "0", C, v0=1.0)
    c.resistor("R1", "a", "0", R)
    r = transient(c, 3 * R * C, R * C / 1000)
    k = int(np.argmin(np.abs(r.time - R * C)))
    return abs(r.v("a")[k] / math.exp(-1) - 1)


def _lumping_error(a, scheme):
    worst = 0.0
    dt = scheme.t_evaluate / scheme.steps
    for pat in (Pattern.ERS_READ, Pattern.PGM_READ):
        for sel in range(a.rows):
            c = build_planar_read(a, pat, sel, scheme)
            full = transient(c, scheme.t_evaluate, dt, record=["bl"]).v("bl")
            lumped = transient(lump_unselected(c), scheme.t_evaluate, dt, record=["bl"]).v("bl")
            worst = max(worst, float(np.max(np.abs(full - lumped))) / scheme.v_pre)
    return worst


def _non_increasing(x):
    return all(b <= a + 1e-9 for a, b in zip(x, x[1:]))


def test_criterion_9_property_suites(cfg, acceptance_log):
    t = time.perf_counter()
    checks = {}
    checks["rc"] = _rc_error() < 1e-3

    s_lump = replace(cfg.scheme(), v_inh=-0.2, steps=400)
    a = cfg.array()
    checks["lump"] = max(_lumping_error(replace(a, rows=n, cols=n), s_lump) for n in (8, 16)) <= 0.01

    s_rows = replace(cfg.scheme(), v_inh=-0.375)
    sm_rows = [simulate_read(replace(a, rows=n), s_rows).sensing_margin for n in (16, 64, 256, 1024)]
    checks["sm_rows"] = _non_increasing(sm_rows)

    m = cfg.mono3d()
    s_stack = replace(cfg.mono3d_scheme(cfg.get("mono3d", "v_pre_iso_neg")), v_inh=-0.35)
    sm_stack = [simulate_read(replace(m, n_stack=n), s_stack).sensing_margin for n in (2, 4, 8, 16)]
    checks["sm_stack"] = _non_increasing(sm_stack)

    vinh = [abs(required_vinh(replace(a, rows=n), cfg.scheme(), cfg.get("read", "v_floor"),
                              resolution=0.02)) for n in (16, 64, 256, 1024)]
    checks["vinh_rows"] = all(b >= a_ for a_, b in zip(vinh, vinh[1:]))

    p = replace(cfg.ferro(), q_min=-np.inf)
    wave = triangular_sweep(12.0, 0.02)
    pts = trace_qv_loop(p, np.concatenate([wave, wave[1:], wave[1:]]))
    n = len(wave)
    second = np.array([op.P_FE for op in pts[n - 1:2 * n - 1]])
    third = np.array([op.P_FE for op in pts[2 * n - 2:]])
    checks["loop"] = float(np.max(np.abs(second - third))) < 1e-4 * p.P_s

    vg, vd = np.meshgrid(np.linspace(-1.0, 2.0, 200), np.linspace(0.0, 2.0, 200))
    i, gm, gd = drain_current_and_derivatives(cfg.device(), vg, vd)
    checks["iv"] = bool(np.all(np.diff(i, axis=1) >= 0) and np.all(np.diff(i, axis=0) >= 0)
                        and np.all(gm[1:] > 0) and np.all(gd > 0))

    failed = [k for k, v in checks.items() if not v]
    detail = "all property checks hold" if not failed else f"failed: {', '.join(failed)}"
    detail += f"; |vinh| vs rows = {[round(v, 3) for v in vinh]}"
    report(acceptance_log, 9, not failed, detail, time.perf_counter() - t, 120.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
