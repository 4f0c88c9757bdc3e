"""Command-line front end: ``fenor <command> [options]``.

Exit status: 0 on success, 2 when a design target is infeasible (diagnostic
files are still written), 1 on malformed input or usage.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import ConfigError, FenorError, InfeasibleError
from .festack import extract_vt, trace_qv_loop, triangular_sweep, vt_vs_tfe
from .nor_array import (ShuntTopology, Variant, fit_rshunt, search_vinh, simulate_read,
                        stack_scan, write_bias_map)
from .planner import (PpaEntry, assemble_ppa, bit_density, bitcell_area, ppa_csv, ppa_text,
                      round_sig)
from .units import parse_quantity

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _qty(unit):
    def conv(text):
        try:
            return parse_quantity(text, expect=unit)
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    conv.__name__ = f"quantity[{unit}]"
    return conv


def _qlist(unit):
    one = _qty(unit)

    def conv(text):
        return [one(t) for t in text.split(",") if t.strip()]
    conv.__name__ = f"list[{unit}]"
    return conv


def _intlist(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _area(text):
    return _qty("m2")(text) * 1e12 if any(c.isalpha() for c in text) else float(text)


class _Run:
    """Output directory bookkeeping and the manifest."""

    def __init__(self, args, cfg):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = {}

    def write_text(self, name, text):
        path = self.out / name
        path.write_text(text, encoding="utf-8", newline="\n")
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()

    def write_csv(self, name, header, rows):
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(_fmt(v) for v in r))
        self.write_text(name, "\n".join(lines) + "\n")

    def write_json(self, name, obj):
        self.write_text(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def manifest(self):
        argv = {k: _jsonable(v) for k, v in sorted(vars(self.args).items()) if k != "func"}
        self.write_json("manifest.json", {
            "tool": "fenor", "version": __version__, "command": self.args.command,
            "arguments": argv, "config_sha256": self.cfg.sha256,
            "outputs": dict(sorted((k, v) for k, v in self.files.items() if k != "manifest.json")),
        })


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else ("nan" if math.isnan(v) else f"{v:.9g}")
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _pmap(fn, items, jobs):
    """Ordered map, optionally across worker processes."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- commands

def cmd_vt(run):
    cfg, args = run.cfg, run.args
    f = cfg.values["ferroelectric"]
    p = cfg.ferro()
    pair = extract_vt(p, v_max=f["v_max"], step=f["v_step"])
    pts = trace_qv_loop(p, triangular_sweep(f["v_max"], f["v_step"]))
    run.write_csv("qv_loop.csv", ["V_G_V", "Q_FE_C_m2", "E_FE_V_m", "P_FE_C_m2", "V_IGZO_V", "clamped"],
                  [(o.V_G, o.Q_FE, o.E_FE, o.P_FE, o.V_IGZO, o.clamped) for o in pts])
    summary = {"t_FE_m": p.t_FE, "vt_minus_V": pair.vt_minus, "vt_plus_V": pair.vt_plus,
               "memory_window_V": pair.mw}
    if args.tfe_sweep or args.tfe:
        tfes = args.tfe or f["tfe_sweep"]
        pairs = vt_vs_tfe(p, tfes, v_max=f["v_max"], step=f["v_step"])
        run.write_csv("vt_vs_tfe.csv", ["t_FE_nm", "vt_minus_V", "vt_plus_V", "memory_window_V"],
                      [(t * 1e9, q.vt_minus, q.vt_plus, q.mw) for t, q in pairs])
    run.write_json("vt_summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _array_for(cfg, args):
    variant = Variant(args.variant)
    if variant is Variant.MONO3D:
        a = cfg.mono3d()
        if args.nstack is not None:
            a = replace(a, n_stack=args.nstack)
        if args.rshunt is not None:
            a = replace(a, r_shunt=args.rshunt)
    else:
        a = cfg.array(variant)
    if args.rows is not None and variant is not Variant.MONO3D:
        a = replace(a, rows=args.rows)
    if args.vt_pgm is not None:
        a = replace(a, vt_pgm=args.vt_pgm)
    return a


def _scheme_for(cfg, args, variant):
    s = cfg.mono3d_scheme(cfg.get("read", "v_pre")) if variant is Variant.MONO3D else cfg.scheme()
    if args.v_pre is not None:
        s = replace(s, v_pre=args.v_pre)
    if getattr(args, "v_inh", None) is not None:
        s = replace(s, v_inh=args.v_inh)
    return s


def cmd_read(run):
    cfg, args = run.cfg, run.args
    a = _array_for(cfg, args)
    s = _scheme_for(cfg, args, a.variant)
    res = simulate_read(a, s)
    summary = res.summary()
    summary.update(variant=a.variant.value, rows=a.rows, cols=a.cols, vt_pgm_V=a.vt_pgm,
                   v_pre_V=s.v_pre, n_stack=a.n_stack if a.variant is Variant.MONO3D else None)
    run.write_json("read_summary.json", _clean(summary))
    run.write_csv("bl_waveforms.csv", ["time_s", "v_bl_ers_V", "v_bl_pgm_V"],
                  zip(res.time.tolist(), res.v_bl_ers.tolist(), res.v_bl_pgm.tolist()))
    print(json.dumps(_clean(summary), sort_keys=True))
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _vinh_point(task):
    a, s, floor, res = task
    try:
        r = search_vinh(a, s, floor, resolution=res)
        return (True, r.v_inh, r.result)
    except InfeasibleError as exc:
        return (False, math.nan, exc)


def _sweep_row(key, out):
    ok, v, r = out
    if not ok:
        achieved = r.achieved if r.achieved is not None else math.nan
        return [key, math.nan, achieved, math.inf, math.nan, False]
    return [key, v, r.sensing_margin, r.read_delay * 1e9, r.read_energy * 1e15, True]


def cmd_vinh_sweep(run):
    cfg, args = run.cfg, run.args
    base = _array_for(cfg, args)
    s = _scheme_for(cfg, args, base.variant)
    floor = cfg.get("read", "v_floor") if args.v_floor is None else args.v_floor
    res = cfg.get("read", "vinh_resolution")
    rows = sorted(args.rows_list)
    tasks = [(replace(base, rows=r), s, floor, res) for r in rows]
    outs = _pmap(_vinh_point, tasks, args.jobs)
    run.write_csv("vinh_vs_rows.csv",
                  ["rows", "v_inh_V", "sensing_margin_V", "read_delay_ns", "read_energy_fJ",
                   "feasible"],
                  [_sweep_row(r, o) for r, o in zip(rows, outs)])
    bad = [r for r, o in zip(rows, outs) if not o[0]]
    if bad:
        print(f"infeasible at rows={bad}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_energy_vs_vt(run):
    cfg, args = run.cfg, run.args
    base = _array_for(cfg, args)
    s = _scheme_for(cfg, args, base.variant)
    floor = cfg.get("read", "v_floor") if args.v_floor is None else args.v_floor
    res = cfg.get("read", "vinh_resolution")
    vts = sorted(args.vtminus)
    tasks = [(replace(base, vt_pgm=v), s, floor, res) for v in vts]
    outs = _pmap(_vinh_point, tasks, args.jobs)
    rows = []
    for v, (ok, vinh, r) in zip(vts, outs):
        if ok:
            rows.append([v, vinh, r.sensing_margin, r.read_delay * 1e9, r.read_energy * 1e15, True])
        else:
            rows.append([v, math.nan, math.nan, math.inf, math.nan, False])
    run.write_csv("energy_vs_vt.csv", ["vt_pgm_V", "v_inh_V", "sensing_margin_V", "read_delay_ns",
                                       "read_energy_fJ", "feasible"], rows)
    return EXIT_OK if all(o[0] for o in outs) else EXIT_INFEASIBLE


def _stack_task(task):
    a, s, cands, floor = task
    pts = stack_scan(a, s, cands, floor, stop_early=True)
    return [(p.n_stack, p.feasible, p.v_inh, p.result) for p in pts]


def cmd_stack(run):
    cfg, args = run.cfg, run.args
    m = cfg.values["mono3d"]
    cands = sorted(args.candidates or m["candidates"])
    base = cfg.mono3d()
    if args.topology:
        base = replace(base, shunt_topology=ShuntTopology(args.topology))
    scen = cfg.stack_scenarios()
    if args.rshunt is not None:
        scen = [(l, args.rshunt if math.isfinite(r) else r, v, p, f) for l, r, v, p, f in scen]
    tasks = [(replace(base, r_shunt=r, vt_pgm=v), cfg.mono3d_scheme(p), cands, f)
             for _, r, v, p, f in scen]
    outs = _pmap(_stack_task, tasks, args.jobs)
    area = bitcell_area(cfg.rules("mono3d"))
    eff = cfg.get("rules", "area_eff")
    table, scans = [], []
    for (label, r, v, p, f), pts in zip(scen, outs):
        ok = [q for q in pts if q[1]]
        for q in pts:
            scans.append([label, q[0], q[1], q[2], q[3].sensing_margin if q[3] else math.nan])
        if not ok:
            table.append([label, r, v, p, 0, math.nan, math.inf, math.nan, 0.0, 0.0])
            continue
        n, _, vinh, res = ok[-1]
        d = bit_density(area, n, eff)
        table.append([label, r, v, p, n, vinh, res.read_delay * 1e9, res.read_energy * 1e12,
                      d, round_sig(d, 2)])
    run.write_csv("stack_limits.csv",
                  ["scenario", "r_shunt_ohm", "vt_pgm_V", "v_read_V", "max_n_stack", "v_inh_V",
                   "read_delay_ns", "read_energy_pJ", "bit_density_raw_Gb_mm2",
                   "bit_density_Gb_mm2"], table)
    run.write_csv("stack_scan.csv", ["scenario", "n_stack", "feasible", "v_inh_V",
                                     "sensing_margin_V"], scans)
    for row in table:
        print(f"{row[0]:<26s} max_n_stack={row[4]:<4d} density={_fmt(row[9])} Gb/mm2")
    return EXIT_OK if all(r[4] > 0 for r in table) else EXIT_INFEASIBLE


def cmd_fit_rshunt(run):
    cfg, args = run.cfg, run.args
    m = cfg.values["mono3d"]
    vt = cfg.get("array", "vt_pgm_shifted") if args.vt_pgm is None else args.vt_pgm
    v_pre = m["v_pre_pos"] if args.v_pre is None else args.v_pre
    floor = m["v_floor_pos"] if args.v_floor is None else args.v_floor
    base = replace(cfg.mono3d(), vt_pgm=vt)
    if args.topology:
        base = replace(base, shunt_topology=ShuntTopology(args.topology))
    try:
        fit = fit_rshunt(base, cfg.mono3d_scheme(v_pre), args.target,
                         candidates=sorted(m["candidates"]), v_floor=floor,
                         bracket=(args.r_min, args.r_max), decades=args.decades)
    except InfeasibleError as exc:
        run.write_json("rshunt_fit.json", {"target": args.target, "error": str(exc)})
        print(str(exc), file=sys.stderr)
        return EXIT_INFEASIBLE
    out = {"target": fit.target, "r_low_ohm": fit.r_low, "r_high_ohm": fit.r_high,
           "r_shunt_ohm": fit.r_shunt, "unbounded_above": fit.unbounded,
           "topology": base.shunt_topology.value, "vt_pgm_V": vt, "v_read_V": v_pre}
    run.write_json("rshunt_fit.json", _clean(out))
    print(json.dumps(_clean(out), sort_keys=True))
    return EXIT_OK


def cmd_density(run):
    args = run.args
    raw = bit_density(args.area, args.nstack, args.eff)
    run.write_json("density.json", {"area_um2": args.area, "n_stack": args.nstack,
                                    "area_eff": args.eff, "bit_density_raw_Gb_mm2": raw,
                                    "bit_density_Gb_mm2": round_sig(raw, 2)})
    print(f"{round_sig(raw, 2):g} Gb/mm²")
    return EXIT_OK


def cmd_bench(run):
    cfg, args = run.cfg, run.args
    floor = cfg.get("read", "v_floor")
    res = cfg.get("read", "vinh_resolution")
    vt_lo, vt_hi = cfg.get("array", "vt_pgm"), cfg.get("array", "vt_pgm_shifted")
    cols = []
    for variant, name in ((Variant.PLANAR, "planar"), (Variant.VCH, "vch")):
        a = cfg.array(variant)
        for vt, shifted in ((vt_lo, False), (vt_hi, True)):
            cols.append((f"{name} vt_pgm={vt:+.2f} V", name, replace(a, vt_pgm=vt),
                         cfg.scheme(shifted=shifted)))
    outs = _pmap(_vinh_point, [(a, s, floor, res) for _, _, a, s in cols], args.jobs)
    entries, failed = [], []
    for (label, name, a, s), (ok, _, r) in zip(cols, outs):
        if not ok:
            failed.append(label)
        entries.append(PpaEntry(label=label, area_um2=bitcell_area(cfg.rules(name)),
                                read_voltage=s.v_pre, result=r if ok else None))
    if failed:
        print(f"infeasible read for: {', '.join(failed)}", file=sys.stderr)
        run.write_json("ppa_failures.json", {"infeasible": failed})
        return EXIT_INFEASIBLE
    rows = assemble_ppa(entries, cfg.sram(), cfg.fefet_write())
    run.write_text("ppa_table.csv", ppa_csv(rows))
    text = ppa_text(rows)
    run.write_text("ppa_table.txt", text)
    print(text, end="")
    return EXIT_OK


def cmd_write_map(run):
    args = run.args
    m = write_bias_map(args.rows, args.cols, args.vw, tuple(args.sel))
    run.write_csv("write_map.csv", ["row", "col", "stress_V"],
                  [(r, c, float(m.stress[r, c])) for r in range(args.rows) for c in range(args.cols)])
    run.write_json("write_map_counts.json", m.counts)
    print(json.dumps(m.counts, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = _Parser(prog="fenor", description="NOR IGZO FeFET read-centric DTCO workflows")
    p.add_argument("--version", action="version", version=f"fenor {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, jobs=False):
        sp.add_argument("--config", default="default", help="config file (default: packaged)")
        sp.add_argument("--out", default=".", help="output directory")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")

    def array_opts(sp, rows=True):
        sp.add_argument("--variant", choices=[v.value for v in Variant], default="planar")
        if rows:
            sp.add_argument("--rows", type=int, default=None)
        sp.add_argument("--vt-pgm", type=_qty("V"), default=None)
        sp.add_argument("--v-pre", type=_qty("V"), default=None)
        sp.add_argument("--nstack", type=int, default=None)
        sp.add_argument("--rshunt", type=_qty("ohm"), default=None)

    sp = sub.add_parser("vt", help="loadline Vt extraction")
    common(sp)
    sp.add_argument("--tfe-sweep", action="store_true", help="sweep t_FE from the config list")
    sp.add_argument("--tfe", type=_qlist("m"), default=None, help="explicit t_FE list, e.g. 6nm,10nm")
    sp.set_defaults(func=cmd_vt)

    sp = sub.add_parser("read", help="one worst-case read transient")
    common(sp)
    array_opts(sp)
    sp.add_argument("--v-inh", type=_qty("V"), default=None)
    sp.set_defaults(func=cmd_read)

    sp = sub.add_parser("vinh-sweep", help="required inhibition voltage versus rows")
    common(sp, jobs=True)
    array_opts(sp, rows=False)
    sp.set_defaults(rows=None)
    sp.add_argument("--rows", dest="rows_list", type=_intlist,
                    default=[16, 64, 256, 512, 1024])
    sp.add_argument("--v-floor", type=_qty("V"), default=None)
    sp.set_defaults(func=cmd_vinh_sweep)

    sp = sub.add_parser("energy-vs-vt", help="required inhibition and energy versus vt_pgm")
    common(sp, jobs=True)
    array_opts(sp)
    sp.add_argument("--vtminus", type=_qlist("V"), default=[-0.4, -0.3, -0.2, -0.1, 0.0, 0.1])
    sp.add_argument("--v-floor", type=_qty("V"), default=None)
    sp.set_defaults(func=cmd_energy_vs_vt)

    sp = sub.add_parser("stack", help="maximum stack height per shunt / vt scenario")
    common(sp, jobs=True)
    sp.add_argument("--rshunt", type=_qty("ohm"), default=None, help="override the finite shunt value")
    sp.add_argument("--topology", choices=[t.value for t in ShuntTopology], default=None)
    sp.add_argument("--candidates", type=_intlist, default=None)
    sp.set_defaults(func=cmd_stack)

    sp = sub.add_parser("fit-rshunt", help="calibrate the shunt resistance to a stack limit")
    common(sp)
    sp.add_argument("--target", type=int, default=4)
    sp.add_argument("--vt-pgm", type=_qty("V"), default=None)
    sp.add_argument("--v-pre", type=_qty("V"), default=None)
    sp.add_argument("--v-floor", type=_qty("V"), default=None)
    sp.add_argument("--topology", choices=[t.value for t in ShuntTopology], default=None)
    sp.add_argument("--r-min", type=_qty("ohm"), default=1e3)
    sp.add_argument("--r-max", type=_qty("ohm"), default=1e13)
    sp.add_argument("--decades", type=float, default=0.01)
    sp.set_defaults(func=cmd_fit_rshunt)

    sp = sub.add_parser("density", help="bit density from area, stack and area efficiency")
    common(sp)
    sp.add_argument("--area", type=_area, required=True, help="bitcell area, e.g. 0.10um2")
    sp.add_argument("--nstack", type=int, required=True)
    sp.add_argument("--eff", type=float, required=True)
    sp.set_defaults(func=cmd_density)

    sp = sub.add_parser("bench", help="on-chip PPA table against the SRAM reference")
    common(sp, jobs=True)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("write-map", help="cross-point write stress map")
    common(sp)
    sp.add_argument("--rows", type=int, default=8)
    sp.add_argument("--cols", type=int, default=8)
    sp.add_argument("--vw", type=_qty("V"), default=3.5)
    sp.add_argument("--sel", type=_intlist, default=[0, 0], help="row,col")
    sp.set_defaults(func=cmd_write_map)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        run = _Run(args, cfg)
        code = args.func(run)
        run.manifest()
        return code
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, FenorError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
