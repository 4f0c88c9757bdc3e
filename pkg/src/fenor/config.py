"""Strict ``[section] key = value`` configuration with unit-suffixed values.

The packaged ``default.cfg`` is always read first; a user file may override
any subset of its keys but may not introduce new ones.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .device import CalibrationTargets, FeFETModel, calibrate_device, threshold_consistent
from .errors import ConfigError
from .festack import FerroStackParams
from .nor_array import ArrayConfig, ReadScheme, ShuntTopology, Variant
from .planner import DesignRules, FefetWrite, SramReference
from .units import EPS0, parse_quantity, sheet_density_to_charge

# kind, unit: "q" quantities reduce to the given base unit
SCHEMA = {
    "ferroelectric": {
        "t_fe": ("q", "m"), "eps_r": ("float", None), "p_s": ("q", "C/m2"),
        "p_r": ("q", "C/m2"), "e_c": ("q", "V/m"), "v_fb": ("q", "V"),
        "psi_s_th": ("q", "V"), "n_th": ("q", "cm-2"), "q_min": ("q", "C/m2"),
        "channel_n": ("float", None), "c_acc": ("q", "F/m2"),
        "v_max": ("q", "V"), "v_step": ("q", "V"), "tfe_sweep": ("qlist", "m"),
    },
    "device": {
        "w": ("q", "m"), "l": ("q", "m"), "ss": ("q", "V/dec"), "lam": ("float", None),
        "i_th_spec": ("q", "A"), "i_on": ("q", "A"), "vgs_on": ("q", "V"), "vds_on": ("q", "V"),
        "vch_l": ("q", "m"),
    },
    "selector": {
        "w": ("q", "m"), "l": ("q", "m"), "ss": ("q", "V/dec"), "vt": ("q", "V"),
        "i_th_spec": ("q", "A"),
    },
    "array": {
        "rows": ("int", None), "cols": ("int", None), "c_bl_per_cell": ("q", "F"),
        "c_wl_per_cell": ("q", "F"), "r_bl_per_cell": ("q", "ohm"), "r_wl_per_cell": ("q", "ohm"),
        "r_wl_driver": ("q", "ohm"), "vt_pgm": ("q", "V"), "vt_ers": ("q", "V"),
        "vt_pgm_shifted": ("q", "V"),
    },
    "read": {
        "v_pre": ("q", "V"), "v_pre_shifted": ("q", "V"), "v_inh": ("q", "V"),
        "t_evaluate": ("q", "s"), "t_precharge": ("q", "s"), "sm_target": ("q", "V"),
        "wl_edge": ("q", "s"), "steps": ("int", None), "v_floor": ("q", "V"),
        "vinh_resolution": ("q", "V"),
    },
    "mono3d": {
        "rows": ("int", None), "cols": ("int", None), "c_bl_per_cell": ("q", "F"),
        "c_wl_per_cell": ("q", "F"), "c_string_per_plane": ("q", "F"),
        "n_stack": ("int", None), "r_shunt": ("q", "ohm"), "shunt_topology": ("choice", ShuntTopology),
        "t_evaluate": ("q", "s"), "candidates": ("intlist", None),
        "v_pre_neg": ("q", "V"), "v_pre_pos": ("q", "V"), "v_pre_iso_neg": ("q", "V"),
        "v_pre_iso_pos": ("q", "V"), "v_floor_neg": ("q", "V"), "v_floor_iso_neg": ("q", "V"),
        "v_floor_pos": ("q", "V"),
    },
    "rules": {
        "planar_area": ("q", "m2"), "vch_area": ("q", "m2"), "mono3d_area": ("q", "m2"),
        "area_eff": ("q", ""), "vertical_wl_pitch": ("q", "m"),
        "fefet_write_voltage": ("q", "V"), "fefet_write_delay": ("q", "s"),
    },
    "sram_ref": {
        "area": ("q", "m2"), "read_voltage": ("q", "V"), "read_delay": ("q", "s"),
        "read_energy": ("q", "J"), "leakage": ("q", "W"), "write_voltage": ("q", "V"),
        "write_delay": ("q", "s"),
    },
}

OPTIONAL = {("device", "i_on"), ("device", "vgs_on"), ("device", "vds_on")}


def default_config_text() -> str:
    return resources.files("fenor").joinpath("data/default.cfg").read_text(encoding="utf-8")


def _parser():
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   strict=True, empty_lines_in_values=False)
    cp.optionxform = str.lower
    return cp


def _convert(section, key, raw):
    kind, unit = SCHEMA[section][key]
    where = f"[{section}] {key}"
    try:
        if kind == "q":
            return parse_quantity(raw, expect=unit)
        if kind == "float":
            return float(raw)
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError("expected an integer")
            return int(v)
        if kind == "qlist":
            return [parse_quantity(x, expect=unit) for x in raw.split(",") if x.strip()]
        if kind == "intlist":
            return [int(x) for x in raw.split(",") if x.strip()]
        if kind == "choice":
            return unit(raw.strip().lower())
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise AssertionError(kind)


def _read_into(values, text, origin):
    cp = _parser()
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]")
            values.setdefault(section, {})[key] = _convert(section, key, raw)


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration plus the model objects built from it."""

    values: dict
    text: str

    @property
    def sha256(self):
        return hashlib.sha256(self.text.encode()).hexdigest()

    def get(self, section, key):
        return self.values[section][key]

    # ferroelectric stack
    def ferro(self) -> FerroStackParams:
        f = self.values["ferroelectric"]
        return FerroStackParams(
            t_FE=f["t_fe"], eps_FE=f["eps_r"] * EPS0, P_s=f["p_s"], P_r=f["p_r"], E_c=f["e_c"],
            V_FB=f["v_fb"], psi_s_TH=f["psi_s_th"],
            sigma_TH=sheet_density_to_charge(f["n_th"] * 1e-4),
            q_min=f["q_min"], channel_n=f["channel_n"], c_acc=f["c_acc"])

    def device(self) -> FeFETModel:
        d = self.values["device"]
        if "i_on" in d:
            missing = [k for k in ("vgs_on", "vds_on") if k not in d]
            if missing:
                raise ConfigError(f"[device] i_on given without {', '.join(missing)}")
            return calibrate_device(CalibrationTargets(
                vt=0.0, ss=d["ss"], i_on=d["i_on"], vgs_on=d["vgs_on"], vds_on=d["vds_on"],
                W=d["w"], L=d["l"], lam=d["lam"], i_th_spec=d["i_th_spec"]))
        return threshold_consistent(d["w"], d["l"], ss=d["ss"], lam=d["lam"],
                                    i_th_spec=d["i_th_spec"])

    def selector(self) -> FeFETModel:
        s = self.values["selector"]
        return threshold_consistent(s["w"], s["l"], ss=s["ss"], vt=s["vt"],
                                    i_th_spec=s["i_th_spec"])

    def array(self, variant=Variant.PLANAR) -> ArrayConfig:
        a = self.values["array"]
        dev = self.device()
        if Variant(variant) is Variant.VCH:
            dev = replace(dev, L=self.values["device"]["vch_l"])
        return ArrayConfig(
            rows=a["rows"], cols=a["cols"], device=dev, c_bl_per_cell=a["c_bl_per_cell"],
            c_wl_per_cell=a["c_wl_per_cell"], vt_pgm=a["vt_pgm"], vt_ers=a["vt_ers"],
            variant=variant, r_bl_per_cell=a["r_bl_per_cell"], r_wl_per_cell=a["r_wl_per_cell"],
            r_wl_driver=a["r_wl_driver"])

    def scheme(self, shifted=False) -> ReadScheme:
        r = self.values["read"]
        return ReadScheme(
            v_pre=r["v_pre_shifted"] if shifted else r["v_pre"], t_evaluate=r["t_evaluate"],
            v_inh=r["v_inh"], t_precharge=r["t_precharge"], sm_target=r["sm_target"],
            wl_edge=r["wl_edge"], steps=r["steps"])

    def mono3d(self) -> ArrayConfig:
        m = self.values["mono3d"]
        a = self.values["array"]
        return ArrayConfig(
            rows=m["rows"], cols=m["cols"], device=self.device(),
            c_bl_per_cell=m["c_bl_per_cell"], c_wl_per_cell=m["c_wl_per_cell"],
            vt_pgm=a["vt_pgm"], vt_ers=a["vt_ers"], variant=Variant.MONO3D,
            r_wl_driver=a["r_wl_driver"], n_stack=m["n_stack"], r_shunt=m["r_shunt"],
            shunt_topology=m["shunt_topology"], selector=self.selector(),
            c_string_per_plane=m["c_string_per_plane"],
            vertical_wl_pitch=self.values["rules"]["vertical_wl_pitch"])

    def mono3d_scheme(self, v_pre) -> ReadScheme:
        return replace(self.scheme(), v_pre=v_pre, t_evaluate=self.values["mono3d"]["t_evaluate"])

    def stack_scenarios(self):
        """(label, r_shunt, vt_pgm, v_pre, v_floor) for the four stack-limit columns."""
        m = self.values["mono3d"]
        a = self.values["array"]
        return [
            ("shunted, vt_pgm low", m["r_shunt"], a["vt_pgm"], m["v_pre_neg"], m["v_floor_neg"]),
            ("shunted, vt_pgm shifted", m["r_shunt"], a["vt_pgm_shifted"], m["v_pre_pos"],
             m["v_floor_pos"]),
            ("isolated, vt_pgm low", math.inf, a["vt_pgm"], m["v_pre_iso_neg"],
             m["v_floor_iso_neg"]),
            ("isolated, vt_pgm shifted", math.inf, a["vt_pgm_shifted"], m["v_pre_iso_pos"],
             m["v_floor_pos"]),
        ]

    def rules(self, variant) -> DesignRules:
        r = self.values["rules"]
        area = {"planar": r["planar_area"], "vch": r["vch_area"], "mono3d": r["mono3d_area"]}
        return DesignRules(variant, bitcell_area=area[variant] * 1e12)

    def sram(self) -> SramReference:
        s = self.values["sram_ref"]
        return SramReference(area=s["area"] * 1e12, read_voltage=s["read_voltage"],
                             read_delay=s["read_delay"], read_energy=s["read_energy"],
                             leakage=s["leakage"], write_voltage=s["write_voltage"],
                             write_delay=s["write_delay"])

    def fefet_write(self) -> FefetWrite:
        r = self.values["rules"]
        return FefetWrite(voltage=r["fefet_write_voltage"], delay=r["fefet_write_delay"])


def load_config(path=None) -> RunConfig:
    """Defaults overlaid with ``path`` (if given); every key is validated."""
    base = default_config_text()
    values: dict = {}
    _read_into(values, base, "default.cfg")
    overlay = ""
    if path is not None and str(path) != "default":
        p = Path(path)
        try:
            overlay = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        _read_into(values, overlay, str(p))
    for section, keys in SCHEMA.items():
        for key in keys:
            if (section, key) not in OPTIONAL and key not in values.get(section, {}):
                raise ConfigError(f"[{section}] {key} is required")
    text = base if not overlay else base + "\n# --- overlay ---\n" + overlay
    return RunConfig(values=values, text=text)
