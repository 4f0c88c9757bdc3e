"""Smooth single-piece FeFET / IGZO-FET drain-current model.

    I = (W/L) k (n U_T)^2 ln^2(1 + exp((vgs - vt)/(2 n U_T)))
            * (1 - exp(-vds/U_T)) (1 + lambda vds)

One expression covers subthreshold and strong inversion, so the current and
its first derivatives are continuous everywhere.  Negative ``vds`` is handled
by source/drain exchange.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .errors import FenorError, InfeasibleError
from .units import U_T

LN10 = math.log(10.0)


@dataclass(frozen=True)
class FeFETModel:
    """Width-normalized compact model; ``vt`` is the active state threshold."""

    W: float
    L: float
    k_gain: float
    ss: float = 0.100
    lam: float = 0.0
    vt: float = 0.0
    i_th_spec: float = 1e-7

    def __post_init__(self):
        if not (self.W > 0 and self.L > 0 and self.k_gain > 0):
            raise FenorError("W, L and k_gain must be positive")
        if self.ss < U_T * LN10 * (1 - 1e-9):
            raise FenorError(f"subthreshold swing {self.ss * 1e3:.1f} mV/dec below the thermal limit")
        if self.i_th_spec <= 0:
            raise FenorError("i_th_spec must be positive")
        if self.lam < 0:
            raise FenorError("lambda must be non-negative")

    @property
    def n_ideal(self):
        return self.ss / (U_T * LN10)

    @property
    def aspect(self):
        return self.W / self.L

    def with_vt(self, vt):
        return replace(self, vt=vt)


def _forward(m, vov, vds):
    """Current and partials for vds >= 0 (arrays)."""
    nut = m.n_ideal * U_T
    u = vov / (2 * nut)
    sp = np.logaddexp(0.0, u)
    f = nut * nut * sp * sp
    df = nut * sp * expit(u)
    ex = np.exp(-vds / U_T)
    g = (1 - ex) * (1 + m.lam * vds)
    dg = ex / U_T * (1 + m.lam * vds) + (1 - ex) * m.lam
    scale = m.aspect * m.k_gain
    return scale * f * g, scale * df * g, scale * f * dg


def drain_current_and_derivatives(m: FeFETModel, vgs, vds):
    """Vectorized ``(I_ds, dI/dvgs, dI/dvds)``; ``I_ds`` flows drain to source."""
    vgs = np.asarray(vgs, dtype=float)
    vds = np.asarray(vds, dtype=float)
    rev = vds < 0
    # reverse mode: the physical source is the drain terminal
    vov = np.where(rev, vgs - vds, vgs) - m.vt
    i, gm, gd = _forward(m, vov, np.abs(vds))
    I = np.where(rev, -i, i)
    dvgs = np.where(rev, -gm, gm)
    dvds = np.where(rev, gm + gd, gd)
    return I, dvgs, dvds


def drain_current(m: FeFETModel, vgs, vds):
    vgs_a = np.asarray(vgs, dtype=float)
    vds_a = np.asarray(vds, dtype=float)
    if not (np.all(np.isfinite(vgs_a)) and np.all(np.isfinite(vds_a))):
        raise FenorError("non-finite bias")
    I = drain_current_and_derivatives(m, vgs_a, vds_a)[0]
    return float(I) if I.ndim == 0 else I


@dataclass(frozen=True)
class CalibrationTargets:
    vt: float
    ss: float
    i_on: float
    vgs_on: float
    vds_on: float
    W: float
    L: float
    lam: float = 0.0
    i_th_spec: float = 1e-7


def calibrate_device(t: CalibrationTargets) -> FeFETModel:
    """Fix ``k_gain`` so that ``I(vgs_on, vds_on) == i_on``.

    The model is linear in ``k_gain``, so the root of the one-dimensional
    residual is obtained from a single unit-gain evaluation.
    """
    if t.i_on <= 0:
        raise InfeasibleError("on-current target must be positive", bound=0.0)
    unit = FeFETModel(W=t.W, L=t.L, k_gain=1.0, ss=t.ss, lam=t.lam, vt=t.vt,
                      i_th_spec=t.i_th_spec)
    i_unit = drain_current(unit, t.vgs_on, t.vds_on)
    if not i_unit > 0:
        raise InfeasibleError("on-current unreachable: model current is zero at the on-bias",
                              bound=i_unit)
    return replace(unit, k_gain=t.i_on / i_unit)


def threshold_consistent(W, L, ss=0.100, vt=0.0, lam=0.0, i_th_spec=1e-7) -> FeFETModel:
    """Model whose current at ``vgs = vt`` (saturated ``vds``) is ``i_th_spec * W/L``.

    At zero overdrive the softplus term equals ``ln 2``, which fixes ``k_gain``
    in closed form.
    """
    nut = ss / LN10
    k = i_th_spec / (nut * nut * math.log(2.0) ** 2)
    return FeFETModel(W=W, L=L, k_gain=k, ss=ss, lam=lam, vt=vt, i_th_spec=i_th_spec)


def scale_geometry(m: FeFETModel, W, L) -> FeFETModel:
    if W <= 0 or L <= 0:
        raise FenorError("geometry must be positive")
    return replace(m, W=W, L=L)


def threshold_crossing(m: FeFETModel, vds=1.0, lo=-3.0, hi=3.0):
    """Gate voltage where the current reaches ``i_th_spec * W/L``."""
    from scipy.optimize import brentq

    target = m.i_th_spec * m.aspect
    return brentq(lambda v: drain_current(m, v, vds) - target, lo, hi, xtol=1e-7)


def iv_table(m: FeFETModel, vgs, vds):
    """Rows of ``(vgs, vds, I)`` over the outer product of the two sweeps."""
    rows = []
    for vd in vds:
        cur = drain_current(m, np.asarray(vgs, float), np.full(len(vgs), vd))
        rows.extend((float(vg), float(vd), float(i)) for vg, i in zip(vgs, cur))
    return rows
