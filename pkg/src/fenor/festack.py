"""Metal / ferroelectric / IGZO gate stack.

Polarization follows a tanh saturated loop with turning-point memory: each
reversal is stored, the trajectory after a reversal interpolates between the
reversal point and the enclosing turning point (or saturation), and crossing
a stored turning point wipes it out so the enclosing loop is rejoined.

IGZO has no hole conduction, so the ferroelectric-face charge
``Q_FE = eps_FE*E + P`` cannot drop below ``q_min`` (0 by default): on the
negative-going side the field stops at the value where the clamp engages and
the rest of the gate voltage is taken up by the depleted channel.

Sign convention: ``Q_FE >= 0`` is the electron sheet charge induced in the
channel, so the threshold loadline sits at ``Q_FE = +sigma_TH``.  The signed
channel charge reported in :class:`OperatingPoint` is ``sigma = -Q_FE``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, FenorError
from .units import U_T

UP = 1
DOWN = -1


@dataclass(frozen=True)
class FerroStackParams:
    """MFS stack constants, all SI.

    ``sigma_0`` may be left ``None``; it is then derived so that
    ``v_igzo(sigma_TH) == V_FB + psi_s_TH`` holds exactly.
    """

    t_FE: float
    eps_FE: float
    P_s: float
    P_r: float
    E_c: float
    V_FB: float
    psi_s_TH: float
    sigma_TH: float
    q_min: float = 0.0
    channel_n: float = 1.0
    sigma_0: float | None = None
    c_acc: float = 0.5

    def __post_init__(self):
        checks = {
            "t_FE": self.t_FE > 0,
            "eps_FE": self.eps_FE > 0,
            "P_r": 0 < self.P_r < self.P_s,
            "E_c": self.E_c > 0,
            "sigma_TH": self.sigma_TH > 0,
            "q_min": not self.q_min < -self.P_s or math.isinf(self.q_min),
            "channel_n": self.channel_n > 0,
            "c_acc": self.c_acc > 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise FenorError(f"invalid ferroelectric parameters: {', '.join(bad)}")
        if self.sigma_0 is None:
            drop = self.psi_s_TH - self.sigma_TH / self.c_acc
            if drop <= 0:
                raise FenorError("psi_s_TH too small for c_acc: cannot calibrate sigma_0")
            s0 = self.sigma_TH / math.expm1(drop / (self.channel_n * U_T))
            object.__setattr__(self, "sigma_0", s0)
        elif self.sigma_0 <= 0:
            raise FenorError("sigma_0 must be positive")

    @property
    def delta(self):
        """Branch width chosen so the descending branch passes through P_r at E=0."""
        r = self.P_r / self.P_s
        return self.E_c / math.log((1 + r) / (1 - r))

    def with_thickness(self, t_FE):
        return replace(self, t_FE=t_FE)


@dataclass(frozen=True)
class HysteresisState:
    """Polarization history.

    ``turning_points`` holds reversal records, innermost last.  ``anchor`` is
    the starting point of the trajectory used while the stack is empty.
    """

    P: float
    E: float
    direction: int = 0
    turning_points: tuple = ()
    anchor: tuple = (0.0, 0.0)

    @classmethod
    def virgin(cls):
        return cls(P=0.0, E=0.0)

    @classmethod
    def saturated_up(cls, p: FerroStackParams, overdrive=10.0):
        E = overdrive * p.E_c
        P = saturation_branch(E, UP, p)
        return cls(P=P, E=E, direction=UP, anchor=(E, P))

    def q_fe(self, p):
        return p.eps_FE * self.E + self.P


@dataclass(frozen=True)
class OperatingPoint:
    V_G: float
    Q_FE: float
    E_FE: float
    P_FE: float
    sigma: float
    V_IGZO: float
    clamped: bool = False


@dataclass(frozen=True)
class VtPair:
    vt_minus: float
    vt_plus: float
    e_minus: float = float("nan")
    e_plus: float = float("nan")

    @property
    def mw(self):
        return self.vt_plus - self.vt_minus


def saturation_branch(E, direction, p: FerroStackParams):
    """Saturated-loop branch: ``P_s*tanh((E -/+ E_c)/(2*delta))``.

    ``direction`` is +1 for the ascending branch (zero crossing at +E_c) and
    -1 for the descending one (zero crossing at -E_c).
    """
    return p.P_s * np.tanh((E - direction * p.E_c) / (2.0 * p.delta))


def _branch_slope(E, direction, p):
    d2 = 2.0 * p.delta
    return p.P_s / d2 / np.cosh((E - direction * p.E_c) / d2) ** 2


def _curve(E, direction, origin, target, p):
    """Polarization and slope on the trajectory from ``origin`` toward ``target``.

    The offset from the branch is blended linearly in branch value, so the
    curve passes exactly through both end points and its slope is the branch
    slope scaled by ``gamma = (P_t - P_o)/(B_t - B_o)`` (0 <= gamma <= 1).
    """
    b = saturation_branch(E, direction, p)
    eo, po = origin
    bo = saturation_branch(eo, direction, p)
    if target is None:
        bt, pt = direction * p.P_s, direction * p.P_s
    else:
        bt, pt = saturation_branch(target[0], direction, p), target[1]
    den = bt - bo
    if abs(den) < 1e-14 * p.P_s:
        return po, 0.0
    gamma = (pt - po) / den
    P = po + gamma * (b - bo)
    return float(np.clip(P, -p.P_s, p.P_s)), gamma * _branch_slope(E, direction, p)


def _move(s: HysteresisState, E_target, p):
    """Monotone move from ``s`` to ``E_target`` without the charge clamp.

    Returns ``(P, slope, direction, turning_points)``.
    """
    d = UP if E_target > s.E else DOWN
    stack = list(s.turning_points)
    if s.direction != 0 and s.direction != d:
        stack.append((s.E, s.P))
    while True:
        origin = stack[-1] if stack else s.anchor
        target = stack[-2] if len(stack) >= 2 else None
        if target is not None and (E_target - target[0]) * d >= 0:
            # wipe-out: the inner loop closes on the enclosing turning point
            del stack[-2:]
            continue
        P, slope = _curve(E_target, d, origin, target, p)
        return P, slope, d, tuple(stack)


def _clamp_field(s, E_lo, p):
    """Field on [E_lo, s.E] where a down-going move meets ``Q_FE = q_min``."""
    def g(E):
        return p.eps_FE * E + _move(s, E, p)[0] - p.q_min

    return brentq(g, E_lo, s.E, xtol=1e-9 * p.E_c, rtol=1e-14, maxiter=200)


def advance_state(s: HysteresisState, E_target, p: FerroStackParams) -> HysteresisState:
    """Move the ferroelectric field to ``E_target`` and update the history.

    Negative-going moves stop where ``eps_FE*E + P`` would fall below
    ``q_min``; the returned state then sits exactly on the clamp.
    """
    if not math.isfinite(E_target):
        raise FenorError(f"non-finite field target {E_target!r}")
    if E_target == s.E:
        return s
    P, _, d, stack = _move(s, E_target, p)
    E = E_target
    if d == DOWN and math.isfinite(p.q_min) and p.eps_FE * E + P < p.q_min:
        if s.q_fe(p) <= p.q_min:
            return s
        E = _clamp_field(s, E_target, p)
        P, _, d, stack = _move(s, E, p)
        P = p.q_min - p.eps_FE * E
    return HysteresisState(P=P, E=E, direction=d, turning_points=stack, anchor=s.anchor)


def v_igzo(q, p: FerroStackParams):
    """Flatband plus channel voltage for an induced electron charge ``q >= 0``.

    Below zero the curve continues along its tangent so the solver stays
    smooth when ``q_min < 0``.
    """
    nut = p.channel_n * U_T
    if q >= 0:
        return p.V_FB + nut * math.log1p(q / p.sigma_0) + q / p.c_acc
    return p.V_FB + q * (nut / p.sigma_0 + 1.0 / p.c_acc)


def _dv_igzo(q, p):
    nut = p.channel_n * U_T
    if q >= 0:
        return nut / (p.sigma_0 + q) + 1.0 / p.c_acc
    return nut / p.sigma_0 + 1.0 / p.c_acc


def _kvl(s, E, V_G, p):
    if E == s.E:
        P, slope = s.P, None
    else:
        P, slope, _, _ = _move(s, E, p)
    q = p.eps_FE * E + P
    return v_igzo(q, p) + p.t_FE * E - V_G, q, slope


def solve_gate_step(s: HysteresisState, V_G, p: FerroStackParams, tol=1e-9, max_iter=100):
    """Self-consistent field for gate voltage ``V_G`` given history ``s``.

    Solves ``V_G = v_igzo(Q_FE) + t_FE*E_FE`` with ``Q_FE`` following the
    hysteresis from ``s``.  Safeguarded Newton inside a bisection bracket.
    Returns ``(new_state, OperatingPoint)``.
    """
    if not math.isfinite(V_G):
        raise FenorError(f"non-finite gate voltage {V_G!r}")
    f0, _, _ = _kvl(s, s.E, V_G, p)
    if abs(f0) < tol:
        return s, _operating_point(s, V_G, p)

    scale = p.E_c
    if f0 > 0:
        hi = s.E
        if math.isfinite(p.q_min) and s.q_fe(p) > p.q_min:
            lo = s.E - scale
            while p.eps_FE * lo + _move(s, lo, p)[0] >= p.q_min:
                lo -= scale
            lo = _clamp_field(s, lo, p)
            if _kvl_clamped(s, lo, V_G, p) >= 0:
                s_new = advance_state(s, lo, p)
                return s_new, _operating_point(s_new, V_G, p, clamped=True)
        elif math.isfinite(p.q_min):
            # already on the clamp and moving further down: nothing changes
            return s, _operating_point(s, V_G, p, clamped=True)
        else:
            lo = s.E - scale
            while _kvl(s, lo, V_G, p)[0] > 0:
                lo -= scale
    else:
        lo = s.E
        hi = s.E + scale
        while _kvl(s, hi, V_G, p)[0] < 0:
            hi += scale

    E = 0.5 * (lo + hi)
    f = None
    for _ in range(max_iter):
        f, q, slope = _kvl(s, E, V_G, p)
        if abs(f) < tol:
            break
        if f > 0:
            hi = E
        else:
            lo = E
        # ensures derivative is defined: slope is None only at E == s.E
        dq = p.eps_FE + (slope if slope is not None else 0.0)
        df = _dv_igzo(q, p) * dq + p.t_FE
        step = E - f / df
        E = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * scale:
            break
    if f is None or abs(f) >= tol:
        f, _, _ = _kvl(s, E, V_G, p)
        if abs(f) >= tol:
            raise ConvergenceError(f"gate solve did not converge at V_G={V_G:.6g} V", residual=f)
    s_new = advance_state(s, E, p)
    return s_new, _operating_point(s_new, V_G, p)


def _kvl_clamped(s, E, V_G, p):
    return v_igzo(p.q_min, p) + p.t_FE * E - V_G


def _operating_point(s, V_G, p, clamped=False):
    q = s.q_fe(p)
    if clamped:
        vi = V_G - p.t_FE * s.E
    else:
        vi = v_igzo(q, p)
    return OperatingPoint(V_G=V_G, Q_FE=q, E_FE=s.E, P_FE=s.P, sigma=-q, V_IGZO=vi,
                          clamped=clamped)


def triangular_sweep(v_max, step=5e-3):
    """+v_max -> -v_max -> +v_max in uniform steps."""
    n = max(1, int(round(2 * v_max / step)))
    down = np.linspace(v_max, -v_max, n + 1)
    return np.concatenate([down, down[::-1][1:]])


def _initial_state(p, preset):
    if preset == "virgin":
        return HysteresisState.virgin()
    if preset == "saturated_up":
        return HysteresisState.saturated_up(p)
    if isinstance(preset, HysteresisState):
        return preset
    raise FenorError(f"unknown preset {preset!r}")


def _trace(p, vg_waveform, preset):
    vg = list(vg_waveform)
    if len(vg) < 2:
        raise FenorError("waveform needs at least 2 points")
    s = _initial_state(p, preset)
    states, points = [], []
    for i, v in enumerate(vg):
        try:
            s, op = solve_gate_step(s, float(v), p)
        except ConvergenceError as exc:
            raise ConvergenceError(f"trace failed at waveform index {i}: {exc}",
                                   residual=exc.residual, index=i) from exc
        states.append(s)
        points.append(op)
    return states, points


def trace_qv_loop(p: FerroStackParams, vg_waveform, preset="saturated_up"):
    """Apply :func:`solve_gate_step` along a gate waveform.

    The result carries the Q_FE-V_G loop and, through the ``E_FE``,
    ``P_FE`` and ``Q_FE`` attributes, the P-E and Q-E projections.
    """
    return _trace(p, vg_waveform, preset)[1]


def _locate(p, states, points, i, level, rising, tol):
    """Bisect the gate voltage in (points[i], points[i+1]) where Q_FE = level."""
    base = states[i]
    va, vb = points[i].V_G, points[i + 1].V_G
    while abs(vb - va) > tol:
        vm = 0.5 * (va + vb)
        _, op = solve_gate_step(base, vm, p)
        above = op.Q_FE >= level
        if above != rising:
            va = vm
        else:
            vb = vm
    vm = 0.5 * (va + vb)
    _, op = solve_gate_step(base, vm, p)
    return vm, op.E_FE


def extract_vt(p: FerroStackParams, v_max=4.0, step=5e-3, tol=1e-3):
    """Threshold voltages at the loadline crossings ``Q_FE = sigma_TH``.

    The programmed threshold is taken on the descending sweep after positive
    saturation; the erased one on the ascending sweep after the most negative
    excursion.
    """
    wave = triangular_sweep(v_max, step)
    states, points = _trace(p, wave, "saturated_up")
    turn = int(np.argmin(wave))
    level = p.sigma_TH
    q = np.array([op.Q_FE for op in points])

    down = [i for i in range(turn) if q[i] >= level > q[i + 1]]
    up = [i for i in range(turn, len(q) - 1) if q[i] < level <= q[i + 1]]
    if not down or not up:
        raise FenorError(f"loadline not crossed: sweep amplitude {v_max} V insufficient")
    vm, em = _locate(p, states, points, down[0], level, rising=False, tol=tol)
    vp, ep = _locate(p, states, points, up[0], level, rising=True, tol=tol)
    return VtPair(vt_minus=vm, vt_plus=vp, e_minus=em, e_plus=ep)


def vt_vs_tfe(p: FerroStackParams, tfe_list, **sweep):
    """:func:`extract_vt` per thickness, every other parameter held."""
    out = []
    for t in tfe_list:
        if t <= 0:
            raise FenorError(f"thickness must be positive, got {t}")
        out.append((t, extract_vt(p.with_thickness(t), **sweep)))
    return out
