import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fenor.device import drain_current, threshold_consistent
from fenor.errors import FenorError, SingularCircuitError
from fenor.netsolve import GMIN, Circuit, Waveform, dc_operating_point, transient


def test_divider():
    c = Circuit()
    c.vsource("V1", "a", 1.0)
    c.resistor("R1", "a", "b", 1e3)
    c.resistor("R2", "b", "0", 3e3)
    v = dc_operating_point(c)
    assert v["b"] == pytest.approx(0.75, rel=1e-12)


def _mesh(seed, n):
    rng = np.random.default_rng(seed)
    c = Circuit()
    c.vsource("V1", "n0", 1.0)
    edges = [(i, i + 1) for i in range(n - 1)]
    edges += [tuple(sorted(rng.choice(n, 2, replace=False))) for _ in range(2 * n)]
    edges.append((n - 1, -1))
    res = rng.uniform(100, 1e4, len(edges))
    for k, ((a, b), r) in enumerate(zip(edges, res)):
        c.resistor(f"R{k}", f"n{a}", "0" if b == -1 else f"n{b}", r)
    return c, edges, res


def _laplacian_oracle(n, edges, res):
    """Independent nodal solve with node n0 fixed at 1 V."""
    G = np.zeros((n + 1, n + 1))      # index n is ground
    for (a, b), r in zip(edges, res):
        b = n if b == -1 else b
        g = 1.0 / r
        G[a, a] += g
        G[b, b] += g
        G[a, b] -= g
        G[b, a] -= g
    free = list(range(1, n))
    rhs = -G[np.ix_(free, [0])][:, 0]
    v = np.linalg.solve(G[np.ix_(free, free)], rhs)
    return {f"n{i}": x for i, x in zip(free, v)}


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 12))
def test_random_mesh_matches_dense_solve(seed, n):
    c, edges, res = _mesh(seed, n)
    got = dc_operating_point(c)
    ref = _laplacian_oracle(n, edges, res)
    for k, v in ref.items():
        assert got[k] == pytest.approx(v, rel=1e-9, abs=1e-12)


def test_rc_discharge_closed_form():
    R, C, V0 = 1e3, 1e-12, 1.0
    tau = R * C
    c = Circuit()
    c.capacitor("C1", "a", "0", C, v0=V0)
    c.resistor("R1", "a", "0", R)
    res = transient(c, 3 * tau, tau / 1000)
    k = int(np.argmin(np.abs(res.time - tau)))
    assert res.v("a")[k] == pytest.approx(V0 * math.exp(-1), rel=1e-3)
    tail = res.v("a")[-1]
    assert tail == pytest.approx(V0 * math.exp(-3), rel=2e-3)


def test_step_charging_energy():
    C, V = 1e-12, 1.0
    c = Circuit()
    c.vsource("V1", "a", Waveform([(0, 0.0), (1e-12, V)]))
    c.resistor("R1", "a", "b", 100.0)
    c.capacitor("C1", "b", "0", C)
    res = transient(c, 5e-9, 1e-12)
    # source supplies C V^2: half stored, half dissipated
    assert res.energy["V1"] == pytest.approx(C * V * V, rel=0.01)
    assert res.charge["V1"] == pytest.approx(C * V, rel=0.01)


def test_capacitor_initial_condition_held():
    c = Circuit()
    c.capacitor("C1", "a", "0", 1e-15, v0=1.2)
    c.resistor("R1", "a", "0", 1e12)
    res = transient(c, 1e-12, 1e-14)
    assert res.v("a")[0] == pytest.approx(1.2, rel=1e-6)


def test_fet_discharge_matches_device_current():
    m = threshold_consistent(65e-9, 130e-9, ss=0.12)
    C = 10e-15
    c = Circuit()
    c.vsource("VG", "g", 1.5)
    c.capacitor("CB", "d", "0", C, v0=1.5)
    c.fet("M1", m, "g", "d", "0")
    dt = 1e-13
    res = transient(c, 20 * dt, dt)
    v = res.v("d")
    slope = -(v[2] - v[1]) / dt
    assert slope == pytest.approx(drain_current(m, 1.5, v[2]) / C, rel=1e-2)


def test_floating_node_reported():
    c = Circuit()
    c.vsource("V1", "a", 1.0)
    c.resistor("R1", "a", "0", 1e3)
    c.resistor("R2", "b", "c", 1e3)
    with pytest.raises(SingularCircuitError) as err:
        dc_operating_point(c)
    assert err.value.node in ("b", "c")


def test_fet_gate_only_node_gets_gmin():
    m = threshold_consistent(65e-9, 130e-9)
    c = Circuit()
    c.vsource("VD", "d", 1.0)
    c.resistor("Rg", "g", "0", 1e6)
    c.fet("M1", m, "g", "d", "0")
    v = dc_operating_point(c)
    assert abs(v["g"]) < 1e-6
    assert GMIN == 1e-15


def test_invalid_elements():
    c = Circuit()
    with pytest.raises(FenorError):
        c.resistor("R", "a", "0", 0.0)
    with pytest.raises(FenorError):
        c.capacitor("C", "a", "0", -1.0)
    with pytest.raises(FenorError):
        Waveform([(1.0, 0.0), (0.5, 1.0)])
    with pytest.raises(FenorError):
        transient(c, 0.0, 1e-12)


def test_waveform_interpolation():
    w = Waveform([(0.0, 0.0), (1.0, 2.0)])
    assert w(0.5) == 1.0
    assert w(5.0) == 2.0
    assert Waveform.dc(0.3)(10.0) == 0.3


def test_csv_roundtrip(tmp_path):
    c = Circuit()
    c.capacitor("C1", "a", "0", 1e-12, v0=1.0)
    c.resistor("R1", "a", "0", 1e3)
    res = transient(c, 1e-10, 1e-11)
    path = tmp_path / "w.csv"
    res.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("time")
    assert len(lines) == len(res.time) + 1
