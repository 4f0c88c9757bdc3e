"""Physical constants and unit-suffixed quantity parsing."""

import math
import re

Q_E = 1.602176634e-19      # C
K_B = 1.380649e-23         # J/K
EPS0 = 8.8541878128e-12    # F/m
T_ROOM = 298.15            # K (25 degC, fixed for every model)
U_T = K_B * T_ROOM / Q_E   # thermal voltage, ~25.69 mV

_PREFIX = {
    "f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "m": 1e-3,
    "": 1.0, "k": 1e3, "M": 1e6, "G": 1e9,
}

# base unit -> SI scale of the base itself
_BASE = {
    "V": 1.0, "A": 1.0, "s": 1.0, "F": 1.0, "ohm": 1.0, "Ohm": 1.0,
    "m": 1.0, "J": 1.0, "W": 1.0,
    "C/m2": 1.0, "C/cm2": 1e4,
    "F/m": 1.0, "F/m2": 1.0, "F/cm2": 1e4,
    "V/m": 1.0, "V/cm": 1e2,
    "V/dec": 1.0,
    "m2": 1.0, "cm-2": 1e4,
}

# units whose natural reporting scale is not SI
_SPECIAL = {
    "um2": 1e-12, "µm2": 1e-12, "nm2": 1e-18,
    "MV/cm": 1e8, "mV/dec": 1e-3,
    "%": 1e-2, "": 1.0,
}

_NUMBER = re.compile(r"^\s*([-+]?(?:inf|\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?))\s*(.*?)\s*$")


def _unit_scale(unit):
    if unit in _SPECIAL:
        return _SPECIAL[unit]
    if unit in _BASE:
        return _BASE[unit]
    for prefix, scale in _PREFIX.items():
        if prefix and unit.startswith(prefix) and unit[len(prefix):] in _BASE:
            return scale * _BASE[unit[len(prefix):]]
    raise ValueError(f"unknown unit {unit!r}")


def parse_quantity(text, expect=None):
    """Parse ``"10 nm"``, ``"-0.4 V"``, ``"0.35 uC/cm2"`` or ``"inf ohm"`` into SI.

    ``expect`` optionally names the base unit the suffix must reduce to
    (``"V"``, ``"m"``, ...); a bare number is accepted as already-SI.
    """
    m = _NUMBER.match(str(text))
    if not m:
        raise ValueError(f"not a quantity: {text!r}")
    value = float(m.group(1))
    unit = m.group(2).replace(" ", "")
    if expect is not None and unit and not _reduces_to(unit, expect):
        raise ValueError(f"{text!r}: expected unit of {expect}")
    return value * _unit_scale(unit)


def _reduces_to(unit, base):
    if unit == base:
        return True
    if unit in _SPECIAL:
        return {"um2": "m2", "µm2": "m2", "nm2": "m2", "MV/cm": "V/m",
                "mV/dec": "V/dec", "%": "", "": ""}[unit] == base
    if unit in _BASE:
        return _same_dimension(unit, base)
    for prefix in _PREFIX:
        if prefix and unit.startswith(prefix) and unit[len(prefix):] in _BASE:
            return _same_dimension(unit[len(prefix):], base)
    return False


def _same_dimension(a, b):
    groups = [{"C/m2", "C/cm2"}, {"F/m2", "F/cm2"}, {"V/m", "V/cm"}, {"ohm", "Ohm"}]
    return a == b or any(a in g and b in g for g in groups)


def sheet_density_to_charge(n_per_cm2):
    """Electron sheet density [cm^-2] to charge density [C/m^2]."""
    return n_per_cm2 * 1e4 * Q_E


def format_si(value, unit):
    if math.isinf(value):
        return f"inf {unit}"
    return f"{value:.6g} {unit}"
