"""Bitcell area, bit density and PPA table assembly."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .errors import ConfigError, FenorError

# bitcell footprints in um^2
AREA_PRESETS = {"planar": 0.023, "vch": 0.016, "mono3d": 0.10}
WL_THICKNESS = 30e-9
WL_SPACER = 15e-9


@dataclass(frozen=True)
class DesignRules:
    """Preset name (``planar``, ``vch``, ``mono3d``) or ``4f2`` with a feature pitch."""

    variant: str
    bitcell_area: float | None = None     # um^2, overrides the preset
    feature_pitch: float | None = None    # m, for the 4F^2 rule
    vertical_wl_pitch: float | None = None

    def __post_init__(self):
        v = self.variant.lower()
        object.__setattr__(self, "variant", v)
        if v not in AREA_PRESETS and v != "4f2":
            raise ConfigError(f"unknown design-rule preset {self.variant!r}")
        if v == "4f2" and self.bitcell_area is None and not (self.feature_pitch or 0) > 0:
            raise ConfigError("4f2 rules need a positive feature_pitch")
        if self.bitcell_area is not None and not self.bitcell_area > 0:
            raise ConfigError("bitcell_area must be positive")
        if v == "mono3d" and self.vertical_wl_pitch is None:
            object.__setattr__(self, "vertical_wl_pitch", WL_THICKNESS + WL_SPACER)


def bitcell_area(rules: DesignRules) -> float:
    """Bitcell footprint in um^2."""
    if rules.bitcell_area is not None:
        return rules.bitcell_area
    if rules.variant == "4f2":
        f_um = rules.feature_pitch * 1e6
        return 4.0 * f_um * f_um
    return AREA_PRESETS[rules.variant]


def bit_density(area_um2, n_stack, area_eff) -> float:
    """Raw bit density in Gb/mm^2 (bits per um^2 times 1e6 / 1e9)."""
    if not area_um2 > 0:
        raise FenorError("area must be positive")
    if not 0 < area_eff <= 1:
        raise FenorError("area efficiency must lie in (0, 1]")
    if n_stack < 0:
        raise FenorError("n_stack must be non-negative")
    return n_stack * area_eff / area_um2 * 1e-3


def round_sig(x, digits=2):
    """Round to ``digits`` significant digits."""
    if x == 0 or not math.isfinite(x):
        return x
    return round(x, digits - 1 - int(math.floor(math.log10(abs(x)))))


@dataclass(frozen=True)
class SramReference:
    area: float = 0.015          # um^2
    read_voltage: float = 0.7
    read_delay: float = 0.3e-9   # upper bound
    read_energy: float = 8.4e-15
    leakage: float = 158e-6      # W
    write_voltage: float = 0.7
    write_delay: float = 0.3e-9  # upper bound
    label: str = "SRAM"


@dataclass(frozen=True)
class FefetWrite:
    voltage: float = 3.5         # symmetric, +/-
    delay: float = 100e-9        # lower bound


@dataclass(frozen=True)
class PpaRow:
    """One column of a PPA table; ``bounds`` marks quantities quoted as limits."""

    label: str
    bitcell_area_um2: float
    read_voltage_V: float
    inhibition_voltage_V: float | None
    read_delay_ns: float
    read_energy: float
    energy_unit: str
    leakage_uW: float
    write_voltage_V: float
    write_delay_ns: float
    bit_density_gb_mm2: float | None = None
    n_stack: int | None = None
    bounds: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PpaEntry:
    """Simulation input for one FeFET column."""

    label: str
    area_um2: float
    read_voltage: float
    result: object               # ReadResult or None when the run is missing
    energy_unit: str = "fJ"
    n_stack: int | None = None
    area_eff: float | None = None


_ENERGY_SCALE = {"fJ": 1e15, "pJ": 1e12}


def assemble_ppa(entries, sram: SramReference | None = SramReference(),
                 write: FefetWrite = FefetWrite()):
    """FeFET columns from read results followed by the SRAM reference column."""
    missing = [e.label for e in entries if e.result is None]
    if missing:
        raise FenorError(f"missing read results for: {', '.join(missing)}")
    rows = []
    for e in entries:
        if e.energy_unit not in _ENERGY_SCALE:
            raise FenorError(f"unknown energy unit {e.energy_unit!r}")
        r = e.result
        density = None
        if e.n_stack is not None and e.area_eff is not None:
            density = bit_density(e.area_um2, e.n_stack, e.area_eff)
        rows.append(PpaRow(
            label=e.label,
            bitcell_area_um2=e.area_um2,
            read_voltage_V=e.read_voltage,
            inhibition_voltage_V=r.v_inh,
            read_delay_ns=r.read_delay * 1e9,
            read_energy=r.read_energy * _ENERGY_SCALE[e.energy_unit],
            energy_unit=e.energy_unit,
            leakage_uW=0.0,
            write_voltage_V=write.voltage,
            write_delay_ns=write.delay * 1e9,
            bit_density_gb_mm2=density,
            n_stack=e.n_stack,
            bounds={"write_voltage_V": "+/-", "write_delay_ns": ">"},
        ))
    if sram is not None:
        rows.append(PpaRow(
            label=sram.label,
            bitcell_area_um2=sram.area,
            read_voltage_V=sram.read_voltage,
            inhibition_voltage_V=None,
            read_delay_ns=sram.read_delay * 1e9,
            read_energy=sram.read_energy * 1e15,
            energy_unit="fJ",
            leakage_uW=sram.leakage * 1e6,
            write_voltage_V=sram.write_voltage,
            write_delay_ns=sram.write_delay * 1e9,
            bounds={"read_delay_ns": "<", "write_delay_ns": "<"},
        ))
    return rows


_METRICS = [
    ("Bitcell area [um2]", "bitcell_area_um2"),
    ("N_stack", "n_stack"),
    ("Bit density raw [Gb/mm2]", "bit_density_gb_mm2"),
    ("Bit density [Gb/mm2]", "bit_density_rounded"),
    ("Read voltage [V]", "read_voltage_V"),
    ("Inhibition voltage [V]", "inhibition_voltage_V"),
    ("Read delay [ns]", "read_delay_ns"),
    ("Read energy [{unit}/bit]", "read_energy"),
    ("Leakage power [uW]", "leakage_uW"),
    ("Write voltage [V]", "write_voltage_V"),
    ("Write delay [ns]", "write_delay_ns"),
]


def _cell(row: PpaRow, attr):
    if attr == "bit_density_rounded":
        v = row.bit_density_gb_mm2
        return "N/A" if v is None else f"{round_sig(v, 2):g}"
    v = getattr(row, attr)
    if v is None:
        return "N/A"
    if isinstance(v, int):
        text = str(v)
    elif math.isinf(v):
        text = "inf"
    else:
        text = f"{v:.4g}"
    b = row.bounds.get(attr, "")
    return f"{b}{text}" if b else text


def _grid(rows):
    units = {r.energy_unit for r in rows} or {"fJ"}
    header = ["Metric"] + [r.label for r in rows]
    body = []
    for name, attr in _METRICS:
        if attr in ("n_stack", "bit_density_gb_mm2", "bit_density_rounded") and all(
                getattr(r, "n_stack") is None for r in rows):
            continue
        if attr == "read_energy" and len(units) > 1:
            for u in sorted(units):
                body.append([name.format(unit=u)] + [
                    _cell(r, attr) if r.energy_unit == u else "" for r in rows])
            continue
        body.append([name.format(unit=next(iter(units)))] + [_cell(r, attr) for r in rows])
    return header, body


def ppa_csv(rows) -> str:
    """Metric-per-line CSV with one column per device."""
    header, body = _grid(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(body)
    return buf.getvalue()


def ppa_text(rows) -> str:
    header, body = _grid(rows)
    table = [header] + body
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in table]
    return "\n".join(lines) + "\n"
