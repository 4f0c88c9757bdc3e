"""Small nonlinear nodal-analysis engine.

Resistors, capacitors, voltage sources with piecewise-linear waveforms and
FET instances of :class:`fenor.device.FeFETModel`.  DC operating points use
damped Newton with a source-stepping fallback; transients use backward Euler
with a Newton solve per step and record the energy and charge delivered by
every source.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .device import FeFETModel, drain_current_and_derivatives
from .errors import ConvergenceError, FenorError, SingularCircuitError

GROUND = "0"
ABSTOL = 1e-12      # A, per unit node degree
VNTOL = 1e-9        # V
GMIN = 1e-15        # S, from every FET terminal node to ground
MAX_DV = 0.3        # V, Newton step limit
MAX_SPLIT = 6       # step halvings before a transient gives up


class Waveform:
    """Piecewise-linear source value; held constant outside its breakpoints."""

    def __init__(self, points):
        pts = [(float(t), float(v)) for t, v in points]
        if not pts:
            raise FenorError("waveform needs at least one breakpoint")
        ts = [t for t, _ in pts]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise FenorError("waveform breakpoints must have non-decreasing times")
        self.t = np.array(ts)
        self.v = np.array([v for _, v in pts])

    @classmethod
    def dc(cls, value):
        return cls([(0.0, value)])

    def __call__(self, t):
        if len(self.t) == 1:
            return float(self.v[0])
        return float(np.interp(t, self.t, self.v))

    def __repr__(self):
        return f"Waveform({list(zip(self.t.tolist(), self.v.tolist()))})"


@dataclass
class Resistor:
    name: str
    a: str
    b: str
    R: float


@dataclass
class Capacitor:
    name: str
    a: str
    b: str
    C: float
    v0: float = 0.0


@dataclass
class VoltageSource:
    name: str
    pos: str
    neg: str
    wave: Waveform


@dataclass
class Fet:
    name: str
    model: FeFETModel
    g: str
    d: str
    s: str
    cell: object = None
    group: object = None


@dataclass
class Circuit:
    """Node/element network with a single ground named ``"0"``."""

    nodes: list = field(default_factory=lambda: [GROUND])
    elements: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def node(self, name):
        if name not in self.nodes:
            self.nodes.append(name)
        return name

    def _add(self, el, *terminals):
        for t in terminals:
            self.node(t)
        self.elements.append(el)
        return el

    def resistor(self, name, a, b, R):
        if not R > 0:
            raise FenorError(f"{name}: resistance must be positive")
        return self._add(Resistor(name, a, b, float(R)), a, b)

    def capacitor(self, name, a, b, C, v0=0.0):
        if not C > 0:
            raise FenorError(f"{name}: capacitance must be positive")
        return self._add(Capacitor(name, a, b, float(C), float(v0)), a, b)

    def vsource(self, name, pos, wave, neg=GROUND):
        if not isinstance(wave, Waveform):
            wave = Waveform.dc(wave)
        return self._add(VoltageSource(name, pos, neg, wave), pos, neg)

    def fet(self, name, model, g, d, s, cell=None, group=None):
        return self._add(Fet(name, model, g, d, s, cell, group), g, d, s)

    def of_type(self, kind):
        return [e for e in self.elements if isinstance(e, kind)]

    def copy(self):
        return Circuit(list(self.nodes), list(self.elements), dict(self.meta))


@dataclass
class TransientResult:
    time: np.ndarray
    voltages: dict
    energy: dict
    charge: dict
    newton_iterations: list

    def v(self, node):
        return self.voltages[node]

    def write_csv(self, path, nodes=None):
        nodes = nodes or [n for n in self.voltages if n != GROUND]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s"] + [f"{n}_V" for n in nodes])
            for k, t in enumerate(self.time):
                w.writerow([f"{t:.6e}"] + [f"{self.voltages[n][k]:.9g}" for n in nodes])


class _System:
    """Index arrays and linear stamps for one circuit."""

    def __init__(self, c: Circuit, dc: bool):
        self.c = c
        self.names = [n for n in c.nodes if n != GROUND]
        self.idx = {n: i for i, n in enumerate(self.names)}
        n = len(self.names)
        self.n = n
        gnd = n  # dummy slot, sliced away
        ix = lambda name: gnd if name == GROUND else self.idx[name]
        self.ix = ix

        self.sources = c.of_type(VoltageSource)
        self.caps = c.of_type(Capacitor)
        fets = c.of_type(Fet)
        m = len(self.sources)
        self.size = n + m
        self._check_connectivity(dc)

        G = np.zeros((n + 1, n + 1))
        degree = np.zeros(n + 1)
        for e in c.elements:
            if isinstance(e, Resistor):
                a, b = ix(e.a), ix(e.b)
                g = 1.0 / e.R
                G[a, a] += g; G[b, b] += g; G[a, b] -= g; G[b, a] -= g
            for t in _terminals(e):
                degree[ix(t)] += 1
        fet_nodes = {ix(t) for f in fets for t in (f.d, f.s, f.g)}
        for k in fet_nodes:
            G[k, k] += GMIN
        self.G = G
        self.degree = np.maximum(degree[:n], 1.0)

        self.ca = np.array([ix(e.a) for e in self.caps], dtype=int)
        self.cb = np.array([ix(e.b) for e in self.caps], dtype=int)
        self.cval = np.array([e.C for e in self.caps])
        self.sp = np.array([ix(e.pos) for e in self.sources], dtype=int)
        self.sn = np.array([ix(e.neg) for e in self.sources], dtype=int)

        self.fg = np.array([ix(f.g) for f in fets], dtype=int)
        self.fd = np.array([ix(f.d) for f in fets], dtype=int)
        self.fs = np.array([ix(f.s) for f in fets], dtype=int)
        self.bank = SimpleNamespace(
            aspect=np.array([f.model.aspect for f in fets]),
            k_gain=np.array([f.model.k_gain for f in fets]),
            n_ideal=np.array([f.model.n_ideal for f in fets]),
            lam=np.array([f.model.lam for f in fets]),
            vt=np.array([f.model.vt for f in fets]),
        )
        self.nfet = len(fets)
        self._build_stamps()

    def _check_connectivity(self, dc):
        parent = {n: n for n in self.c.nodes}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            parent[find(a)] = find(b)

        for e in self.c.elements:
            if isinstance(e, (Resistor, VoltageSource)):
                union(*_terminals(e))
            elif isinstance(e, Capacitor) and not dc:
                union(e.a, e.b)
            elif isinstance(e, Fet):
                union(e.d, e.s)
        root = find(GROUND)
        for n in self.c.nodes:
            if find(n) != root:
                raise SingularCircuitError(f"node {n!r} has no path to ground", node=n)

    def voltages(self, x):
        v = np.zeros(self.n + 1)
        v[: self.n] = x[: self.n]
        return v

    def _build_stamps(self):
        """Flat scatter indices into the extended matrix (last slot is ground)."""
        n, S = self.n, self.size
        E = S + 1
        self.E = E
        self.ext = np.r_[np.arange(n), S]  # node index (ground = n) -> extended slot
        J0 = np.zeros((E, E))
        J0[np.ix_(self.ext, self.ext)] = self.G
        for k in range(len(self.sources)):
            r, p, q = n + k, self.ext[self.sp[k]], self.ext[self.sn[k]]
            J0[p, r] += 1.0; J0[q, r] -= 1.0
            J0[r, p] += 1.0; J0[r, q] -= 1.0
        self.J0 = J0

        a, b = self.ext[self.ca], self.ext[self.cb]
        self.cap_f = np.r_[a, b]
        self.cap_j = np.r_[a * E + a, b * E + b, a * E + b, b * E + a]
        g, d, s_ = self.ext[self.fg], self.ext[self.fd], self.ext[self.fs]
        self.fet_f = np.r_[d, s_]
        self.fet_j = np.r_[d * E + g, d * E + d, d * E + s_, s_ * E + g, s_ * E + d, s_ * E + s_]

    def assemble(self, x, t, src_scale=1.0, cap_g=None, cap_hist=None):
        """Residual F(x) and Jacobian J at time ``t``."""
        n, S, E = self.n, self.size, self.E
        xe = np.zeros(E)
        xe[:S] = x
        v = self.voltages(x)
        F = self.J0 @ xe
        jflat = np.zeros(E * E)
        if cap_g is not None and len(self.caps):
            i = cap_g * (v[self.ca] - v[self.cb]) - cap_hist
            F += np.bincount(self.cap_f, np.r_[i, -i], minlength=E)
            jflat += np.bincount(self.cap_j, np.r_[cap_g, cap_g, -cap_g, -cap_g], minlength=E * E)
        if self.nfet:
            vs = v[self.fs]
            I, gm, gd = drain_current_and_derivatives(self.bank, v[self.fg] - vs, v[self.fd] - vs)
            F += np.bincount(self.fet_f, np.r_[I, -I], minlength=E)
            gsum = gm + gd
            jflat += np.bincount(self.fet_j, np.r_[gm, gd, -gsum, -gm, -gd, gsum], minlength=E * E)
        for k, src in enumerate(self.sources):
            F[n + k] -= src_scale * src.wave(t)
        J = self.J0 + jflat.reshape(E, E)
        return F[:S], J[:S, :S]

    def newton(self, x0, t, max_iter=100, abstol=ABSTOL, **kw):
        x = x0.copy()
        n = self.n
        for it in range(1, max_iter + 1):
            F, J = self.assemble(x, t, **kw)
            try:
                dx = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError as exc:
                raise SingularCircuitError(f"singular network matrix: {exc}") from exc
            if not np.all(np.isfinite(dx)):
                raise SingularCircuitError("network matrix is numerically singular")
            big = np.max(np.abs(dx[:n])) if n else 0.0
            if big > MAX_DV:
                dx *= MAX_DV / big
            x += dx
            if big <= VNTOL:
                F, _ = self.assemble(x, t, **kw)
                if np.all(np.abs(F[:n]) < abstol * self.degree):
                    return x, it
        F, _ = self.assemble(x, t, **kw)
        raise ConvergenceError("Newton iteration did not converge",
                               residual=float(np.max(np.abs(F))) if len(F) else 0.0)

    def source_current(self, x, k):
        """Current delivered by source ``k`` out of its positive terminal."""
        return -x[self.n + k]


def _terminals(e):
    if isinstance(e, Fet):
        return (e.g, e.d, e.s)
    if isinstance(e, VoltageSource):
        return (e.pos, e.neg)
    return (e.a, e.b)


def dc_operating_point(c: Circuit, t=0.0, x0=None):
    """Node voltages (dict) with capacitors open."""
    sysm = _System(c, dc=True)
    x = np.zeros(sysm.size) if x0 is None else x0
    try:
        x, _ = sysm.newton(x, t)
    except ConvergenceError:
        x = np.zeros(sysm.size)
        residual = None
        steps = np.linspace(0.0, 1.0, 21)[1:]
        for lam in steps:
            try:
                x, _ = sysm.newton(x, t, src_scale=lam)
            except ConvergenceError as exc:
                residual = exc.residual
                raise ConvergenceError(
                    f"DC operating point failed during source stepping at {lam:.2f}",
                    residual=residual) from exc
    v = sysm.voltages(x)
    out = {GROUND: 0.0}
    out.update({name: float(v[i]) for i, name in enumerate(sysm.names)})
    return out


def transient(c: Circuit, t_stop, dt, record=None):
    """Backward-Euler transient from the capacitor initial conditions.

    ``record`` limits the stored voltage traces to the named nodes.
    """
    if not dt > 0 or not t_stop > 0:
        raise FenorError("t_stop and dt must be positive")
    sysm = _System(c, dc=False)
    steps = int(round(t_stop / dt))
    times = np.arange(steps + 1) * dt
    names = sysm.names if record is None else list(record)
    rec_ix = [sysm.idx[nm] for nm in names]

    hist_v = np.array([e.v0 for e in sysm.caps])
    # t = 0: capacitors held at their initial voltages by a vanishing step
    x = np.zeros(sysm.size)
    g0 = sysm.cval / (dt * 1e-6)
    try:
        tol0 = max(ABSTOL, 1e-13 * float(g0.max(initial=0.0)))
        x, _ = sysm.newton(x, 0.0, cap_g=g0, cap_hist=g0 * hist_v, abstol=tol0)
    except (ConvergenceError, SingularCircuitError) as exc:
        raise type(exc)(f"initial condition solve failed: {exc}") from exc
    v = sysm.voltages(x)
    hist_v = v[sysm.ca] - v[sysm.cb] if len(sysm.caps) else hist_v

    traces = np.zeros((steps + 1, len(rec_ix)))
    traces[0] = x[rec_ix]
    m = len(sysm.sources)
    energy = np.zeros(m)
    charge = np.zeros(m)
    iters = []
    def advance(x, hist_v, t0, h, depth=0):
        # one backward-Euler step, halved on Newton failure
        g = sysm.cval / h
        try:
            x1, it = sysm.newton(x, t0 + h, cap_g=g, cap_hist=g * hist_v)
        except ConvergenceError:
            if depth >= MAX_SPLIT:
                raise
            x, hist_v, e1, q1, it1 = advance(x, hist_v, t0, h / 2, depth + 1)
            x, hist_v, e2, q2, it2 = advance(x, hist_v, t0 + h / 2, h / 2, depth + 1)
            return x, hist_v, e1 + e2, q1 + q2, it1 + it2
        v = sysm.voltages(x1)
        if len(sysm.caps):
            hist_v = v[sysm.ca] - v[sysm.cb]
        i_del = np.array([sysm.source_current(x1, j) for j in range(m)])
        u = v[sysm.sp] - v[sysm.sn] if m else np.zeros(0)
        return x1, hist_v, u * i_del * h, i_del * h, it

    for k in range(1, steps + 1):
        try:
            x, hist_v, de, dq, it = advance(x, hist_v, times[k - 1], dt)
        except ConvergenceError as exc:
            raise ConvergenceError(f"transient step {k} (t={times[k]:.4e} s): {exc}",
                                   residual=exc.residual, index=k) from exc
        iters.append(it)
        energy += de
        charge += dq
        traces[k] = x[rec_ix]

    voltages = {nm: traces[:, j] for j, nm in enumerate(names)}
    return TransientResult(
        time=times,
        voltages=voltages,
        energy={s.name: float(e) for s, e in zip(sysm.sources, energy)},
        charge={s.name: float(q) for s, q in zip(sysm.sources, charge)},
        newton_iterations=iters,
    )
