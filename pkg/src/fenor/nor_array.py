"""NOR FeFET array read netlists, bitline-discharge reads and bias searches.

A read senses one bitline column: the selected cell is gated at ``v_sel``
and every unselected cell on the same bitline at ``v_inh``, so their sneak
currents add to the signal.  Margins compare the worst-case erased read
(unselected cells programmed) with the worst-case programmed read
(unselected cells erased) at the end of the evaluation window.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .device import FeFETModel, scale_geometry
from .errors import FenorError, InfeasibleError
from .netsolve import GROUND, Circuit, Fet, Resistor, Waveform, transient

PGM, ERS = "PGM", "ERS"


class Variant(str, enum.Enum):
    PLANAR = "planar"
    VCH = "vch"
    MONO3D = "mono3d"


class ShuntTopology(str, enum.Enum):
    DIRECT = "direct"        # string BL to string SL across each ungated gap
    LADDER = "ladder"        # between vertically adjacent cell mid nodes


@dataclass(frozen=True)
class ArrayConfig:
    rows: int
    cols: int
    device: FeFETModel
    c_bl_per_cell: float
    c_wl_per_cell: float
    vt_pgm: float
    vt_ers: float
    variant: Variant = Variant.PLANAR
    r_bl_per_cell: float = 0.0
    r_wl_per_cell: float = 0.0
    r_wl_driver: float = 1e3
    # mono-3D only
    n_stack: int = 1
    r_shunt: float = math.inf
    shunt_topology: ShuntTopology = ShuntTopology.DIRECT
    selector: FeFETModel | None = None
    v_cl: float | None = None
    c_string_per_plane: float = 0.0
    vertical_wl_pitch: float = 45e-9

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise FenorError("array needs at least one row and one column")
        if self.c_bl_per_cell <= 0 or self.c_wl_per_cell <= 0:
            raise FenorError("per-cell capacitances must be positive")
        if self.r_bl_per_cell < 0 or self.r_wl_per_cell < 0 or self.r_wl_driver <= 0:
            raise FenorError("line resistances must be non-negative, driver resistance positive")
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "shunt_topology", ShuntTopology(self.shunt_topology))
        if self.variant is Variant.MONO3D:
            if self.n_stack < 1:
                raise FenorError("n_stack must be >= 1")
            if not self.r_shunt > 0:
                raise FenorError("r_shunt must be positive (inf allowed)")
            if self.selector is None:
                raise FenorError("mono-3D arrays need a selector model")


@dataclass(frozen=True)
class ReadScheme:
    v_pre: float
    t_evaluate: float
    v_sel: float | None = None
    v_inh: float = 0.0
    t_precharge: float = 1e-9
    sm_target: float = 0.100
    wl_edge: float = 10e-12
    steps: int = 2000

    def __post_init__(self):
        if not self.v_pre > 0:
            raise FenorError("v_pre must be positive")
        if not (self.t_evaluate > 0 and self.t_precharge > 0):
            raise FenorError("timing must be positive")
        if not self.sm_target > 0:
            raise FenorError("sm_target must be positive")
        if self.v_inh > 0:
            raise FenorError("v_inh must be <= 0")

    @property
    def v_select(self):
        """Selected-WL level; equal to the precharge level unless overridden."""
        return self.v_pre if self.v_sel is None else self.v_sel


class Pattern(enum.Enum):
    ERS_READ = "ers_read"     # selected erased, every unselected cell programmed
    PGM_READ = "pgm_read"     # selected programmed, every unselected cell erased


@dataclass(frozen=True)
class ExplicitPattern:
    """Per-cell states along the sensed line; ``True`` marks a programmed cell."""

    states: tuple

    @classmethod
    def of(cls, states):
        return cls(tuple(bool(s) for s in np.ravel(states)))


def _states(pat, n, selected):
    if isinstance(pat, ExplicitPattern):
        if len(pat.states) != n:
            raise FenorError(f"explicit pattern covers {len(pat.states)} cells, need {n}")
        return [PGM if s else ERS for s in pat.states]
    sel, other = (ERS, PGM) if pat is Pattern.ERS_READ else (PGM, ERS)
    return [sel if k == selected else other for k in range(n)]


@dataclass
class ReadResult:
    time: np.ndarray
    v_bl_ers: np.ndarray
    v_bl_pgm: np.ndarray
    sensing_margin: float
    read_delay: float
    read_energy: float
    feasible: bool
    energy_breakdown: dict = field(default_factory=dict)
    v_inh: float = 0.0

    @property
    def v_bl_trace(self):
        return {"time": self.time, "ers": self.v_bl_ers, "pgm": self.v_bl_pgm}

    def summary(self):
        return {
            "sensing_margin_V": self.sensing_margin,
            "read_delay_s": self.read_delay,
            "read_energy_J_per_bit": self.read_energy,
            "feasible": self.feasible,
            "v_inh_V": self.v_inh,
            "energy_breakdown_J_per_bit": dict(self.energy_breakdown),
        }


def _state_vt(cfg, state):
    return cfg.vt_pgm if state == PGM else cfg.vt_ers


def _wl_drivers(c, cfg, scheme, n_unselected):
    c.vsource("VWL", "wl_drv", Waveform([(0.0, 0.0), (scheme.wl_edge, scheme.v_select)]))
    r = cfg.r_wl_driver + 0.5 * cfg.r_wl_per_cell * cfg.cols
    c.resistor("Rwl", "wl_drv", "wl_sel", r)
    c.capacitor("Cwl_sel", "wl_sel", GROUND, cfg.c_wl_per_cell * cfg.cols)
    if n_unselected:
        c.vsource("VINH", "wl_inh", scheme.v_inh)
        c.capacitor("Cwl_inh", "wl_inh", GROUND, cfg.c_wl_per_cell * cfg.cols * n_unselected)


def build_planar_read(cfg: ArrayConfig, pat, selected_row: int, scheme: ReadScheme) -> Circuit:
    """Single-bitline read netlist for planar and vertical-channel arrays."""
    if cfg.variant is Variant.MONO3D:
        raise FenorError("use build_mono3d_read for mono-3D arrays")
    if not 0 <= selected_row < cfg.rows:
        raise FenorError(f"selected row {selected_row} out of range 0..{cfg.rows - 1}")
    states = _states(pat, cfg.rows, selected_row)
    c = Circuit()
    c.meta.update(kind="planar", selected=selected_row, private_nodes={})
    distributed = cfg.r_bl_per_cell > 0
    c.meta["distributed"] = distributed
    if distributed:
        taps = [f"bl_{r}" for r in range(cfg.rows)]
        c.node("bl")
        c.resistor("Rbl_sense", "bl", taps[0], cfg.r_bl_per_cell)
        for r in range(cfg.rows):
            c.capacitor(f"Cbl_{r}", taps[r], GROUND, cfg.c_bl_per_cell, v0=scheme.v_pre)
            if r:
                c.resistor(f"Rbl_{r}", taps[r - 1], taps[r], cfg.r_bl_per_cell)
    else:
        taps = ["bl"] * cfg.rows
        c.capacitor("Cbl", "bl", GROUND, cfg.rows * cfg.c_bl_per_cell, v0=scheme.v_pre)
    _wl_drivers(c, cfg, scheme, cfg.rows - 1)
    for r, st in enumerate(states):
        model = cfg.device.with_vt(_state_vt(cfg, st))
        if r == selected_row:
            c.fet(f"M{r}", model, "wl_sel", taps[r], GROUND, cell=r)
        else:
            c.fet(f"M{r}", model, "wl_inh", taps[r], GROUND, cell=r, group=(st, "inh"))
    return c


def build_mono3d_read(cfg: ArrayConfig, pat, selected_plane: int, scheme: ReadScheme) -> Circuit:
    """One selected string: BL/SL selectors, split-channel cells and shunts."""
    if cfg.variant is not Variant.MONO3D:
        raise FenorError("build_mono3d_read needs a mono-3D configuration")
    n = cfg.n_stack
    if not 0 <= selected_plane < n:
        raise FenorError(f"selected plane {selected_plane} out of range 0..{n - 1}")
    states = _states(pat, n, selected_plane)
    v_cl = scheme.v_pre if cfg.v_cl is None else cfg.v_cl
    c = Circuit()
    c.meta.update(kind="mono3d", selected=selected_plane, private_nodes={},
                  distributed=False, ladder=False)

    c.capacitor("Cbl", "bl", GROUND, cfg.rows * cfg.c_bl_per_cell, v0=scheme.v_pre)
    c.vsource("VCL", "cl", Waveform([(0.0, 0.0), (scheme.wl_edge, v_cl)]))
    c.fet("Msel_bl", cfg.selector, "cl", "bl", "sbl")
    c.fet("Msel_sl", cfg.selector, "cl", "ssl", GROUND)
    if cfg.c_string_per_plane > 0:
        c.capacitor("Csbl", "sbl", GROUND, n * cfg.c_string_per_plane)
        c.capacitor("Cssl", "ssl", GROUND, n * cfg.c_string_per_plane)
    _wl_drivers(c, cfg, scheme, n - 1)

    for k, st in enumerate(states):
        base = cfg.device.with_vt(_state_vt(cfg, st))
        half = scale_geometry(base, base.W, base.L / 2)
        gate = "wl_sel" if k == selected_plane else "wl_inh"
        grp = None if k == selected_plane else (st, "inh")
        mid = f"mid_{k}"
        c.fet(f"Ma_{k}", half, gate, "sbl", mid, cell=k, group=grp)
        c.fet(f"Mb_{k}", half, gate, mid, "ssl", cell=k, group=grp)
        c.meta["private_nodes"][k] = [mid]

    if math.isfinite(cfg.r_shunt):
        for k in range(n - 1):
            if cfg.shunt_topology is ShuntTopology.LADDER:
                c.resistor(f"Rsh_{k}", f"mid_{k}", f"mid_{k + 1}", cfg.r_shunt)
                c.meta["ladder"] = True
            else:
                c.resistor(f"Rsh_{k}", "sbl", "ssl", cfg.r_shunt)
    return c


def lump_unselected(circuit: Circuit) -> Circuit:
    """Merge identical unselected cells into one width-scaled cell per group."""
    if circuit.meta.get("distributed"):
        raise FenorError("cannot lump cells along a resistive bitline")
    fets = circuit.of_type(Fet)
    cells = {}
    for f in fets:
        if f.group is not None:
            cells.setdefault(f.cell, []).append(f)
    groups = {}
    for cell, members in cells.items():
        groups.setdefault(members[0].group, []).append(cell)

    private = circuit.meta.get("private_nodes", {})
    drop_cells, scale = set(), {}
    for cell_ids in groups.values():
        keep, rest = cell_ids[0], cell_ids[1:]
        scale[keep] = len(cell_ids)
        drop_cells.update(rest)
    drop_nodes = {nd for cid in drop_cells for nd in private.get(cid, [])}

    out = Circuit(meta=dict(circuit.meta))
    kept = []
    for e in circuit.elements:
        if isinstance(e, Fet) and e.cell in drop_cells and e.group is not None:
            continue
        if isinstance(e, Fet) and e.cell in scale and e.group is not None:
            k = scale[e.cell]
            e = replace(e, model=scale_geometry(e.model, e.model.W * k, e.model.L))
        kept.append(e)
    for e in kept:
        if not isinstance(e, Fet) and any(t in drop_nodes for t in _element_nodes(e)):
            raise FenorError(f"cannot lump: {e.name} couples to a merged cell")
    out.nodes = [nd for nd in circuit.nodes if nd not in drop_nodes]
    out.elements = kept
    out.meta["private_nodes"] = {k: v for k, v in private.items() if k not in drop_cells}
    out.meta["lumped"] = True
    return out


def _element_nodes(e):
    if isinstance(e, Fet):
        return (e.g, e.d, e.s)
    if hasattr(e, "pos"):
        return (e.pos, e.neg)
    return (e.a, e.b)


def _build(cfg, pat, selected, scheme):
    if cfg.variant is Variant.MONO3D:
        c = build_mono3d_read(cfg, pat, selected, scheme)
    else:
        c = build_planar_read(cfg, pat, selected, scheme)
    if not c.meta.get("distributed") and not c.meta.get("ladder"):
        c = lump_unselected(c)
    return c


def _n_unselected(cfg):
    return (cfg.n_stack if cfg.variant is Variant.MONO3D else cfg.rows) - 1


def _bl_capacitance(cfg):
    return cfg.rows * cfg.c_bl_per_cell


def _first_crossing(t, sep, level):
    above = np.nonzero(sep >= level)[0]
    if not len(above):
        return math.inf
    k = above[0]
    if k == 0:
        return float(t[0])
    t0, t1, s0, s1 = t[k - 1], t[k], sep[k - 1], sep[k]
    return float(t0 + (level - s0) * (t1 - t0) / (s1 - s0))


def simulate_read(cfg: ArrayConfig, scheme: ReadScheme, selected: int = 0) -> ReadResult:
    """Worst-case erased and programmed reads of one bitline.

    Energy per accessed bit (``cols`` bits per activation) counts the
    bitline recharge after the erased read, the selected-WL swing, the
    swing of every unselected WL to ``v_inh`` and the energy delivered by the
    remaining sources during evaluation.  Comparator latching is excluded.
    """
    dt = scheme.t_evaluate / scheme.steps
    runs = {}
    for pat in (Pattern.ERS_READ, Pattern.PGM_READ):
        c = _build(cfg, pat, selected, scheme)
        runs[pat] = transient(c, scheme.t_evaluate, dt, record=["bl"])
    t = runs[Pattern.ERS_READ].time
    v_ers = runs[Pattern.ERS_READ].v("bl")
    v_pgm = runs[Pattern.PGM_READ].v("bl")
    sep = v_ers - v_pgm
    margin = float(sep[-1])
    feasible = margin >= scheme.sm_target
    delay = _first_crossing(t, sep, scheme.sm_target)

    ers = runs[Pattern.ERS_READ]
    e_pre = _bl_capacitance(cfg) * scheme.v_pre * (scheme.v_pre - float(v_ers[-1]))
    e_sel = cfg.c_wl_per_cell * cfg.cols * scheme.v_select ** 2 / cfg.cols
    e_inh = _n_unselected(cfg) * cfg.c_wl_per_cell * cfg.cols * scheme.v_inh ** 2 / cfg.cols
    e_eval = sum(e for name, e in ers.energy.items() if name not in ("VWL", "VINH"))
    breakdown = {"precharge": e_pre, "wl_select": e_sel, "inhibit_rail": e_inh,
                 "evaluation": e_eval}
    return ReadResult(
        time=t, v_bl_ers=v_ers, v_bl_pgm=v_pgm, sensing_margin=margin,
        read_delay=delay if feasible else math.inf,
        read_energy=sum(breakdown.values()), feasible=feasible,
        energy_breakdown=breakdown, v_inh=scheme.v_inh,
    )


@dataclass(frozen=True)
class VinhSearch:
    v_inh: float
    result: ReadResult
    evaluations: int


def search_vinh(cfg, scheme, v_floor, resolution=0.010, selected=0) -> VinhSearch:
    """Least-negative inhibition voltage meeting the margin target.

    ``v_floor = 0`` forbids negative inhibition: only ``v_inh = 0`` is tried.
    """
    if not v_floor <= 0:
        raise FenorError("v_floor must not be positive")
    res0 = simulate_read(cfg, replace(scheme, v_inh=0.0), selected)
    if res0.feasible:
        return VinhSearch(0.0, res0, 1)
    if v_floor == 0:
        raise InfeasibleError(
            f"margin {res0.sensing_margin * 1e3:.1f} mV < {scheme.sm_target * 1e3:.0f} mV "
            "without inhibition", achieved=res0.sensing_margin, bound=0.0)
    res_lo = simulate_read(cfg, replace(scheme, v_inh=v_floor), selected)
    if not res_lo.feasible:
        raise InfeasibleError(
            f"margin {res_lo.sensing_margin * 1e3:.1f} mV < {scheme.sm_target * 1e3:.0f} mV "
            f"even at v_inh={v_floor} V", achieved=res_lo.sensing_margin, bound=v_floor)
    lo, hi, best, evals = v_floor, 0.0, res_lo, 2
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        r = simulate_read(cfg, replace(scheme, v_inh=mid), selected)
        evals += 1
        if r.feasible:
            lo, best = mid, r
        else:
            hi = mid
    return VinhSearch(lo, best, evals)


def required_vinh(cfg: ArrayConfig, scheme: ReadScheme, v_floor: float,
                  resolution=0.010) -> float:
    """Bisection on [v_floor, 0] to ``resolution``; 0 when no inhibition bias is needed."""
    return search_vinh(cfg, scheme, v_floor, resolution).v_inh


@dataclass(frozen=True)
class StackPoint:
    n_stack: int
    feasible: bool
    v_inh: float
    result: ReadResult | None


def stack_scan(cfg: ArrayConfig, scheme: ReadScheme, candidates, v_floor, stop_early=False):
    """Inhibition search at each stack height.

    With ``stop_early`` the scan ends at the first infeasible height, which
    is exact whenever the margin falls monotonically with stack height.
    """
    points = []
    for n in candidates:
        c_n = replace(cfg, n_stack=int(n))
        try:
            s = search_vinh(c_n, scheme, v_floor)
            points.append(StackPoint(int(n), True, s.v_inh, s.result))
        except InfeasibleError:
            points.append(StackPoint(int(n), False, math.nan, None))
            if stop_early:
                break
    return points


def max_nstack(cfg: ArrayConfig, scheme: ReadScheme, candidates=(1, 2, 4, 8, 16, 32, 64, 128),
               v_floor=-0.35, stop_early=True) -> int:
    """Largest candidate stack height that reads with the margin target (0 if none)."""
    cands = list(candidates)
    if cands != sorted(cands):
        raise FenorError("candidates must be sorted ascending")
    points = stack_scan(cfg, scheme, cands, v_floor, stop_early=stop_early)
    feasible = [p.n_stack for p in points if p.feasible]
    return max(feasible) if feasible else 0


def _feasible_at(cfg, scheme, n, r_shunt, v_floor):
    c_n = replace(cfg, n_stack=int(n), r_shunt=r_shunt)
    try:
        search_vinh(c_n, scheme, v_floor)
        return True
    except InfeasibleError:
        return False


@dataclass(frozen=True)
class ShuntFit:
    target: int
    r_low: float          # smallest shunt resistance still reaching the target
    r_high: float         # shunt resistance at which the next candidate becomes feasible
    r_shunt: float        # geometric centre of the band (inf when unbounded)

    @property
    def unbounded(self):
        return math.isinf(self.r_high)


def _log_bisect(pred, lo, hi, decades):
    """Smallest R in [lo, hi] with pred(R) true; pred(lo) false, pred(hi) true."""
    a, b = math.log10(lo), math.log10(hi)
    while b - a > decades:
        m = 0.5 * (a + b)
        if pred(10 ** m):
            b = m
        else:
            a = m
    return 10 ** b


def fit_rshunt(cfg: ArrayConfig, scheme: ReadScheme, target_nstack: int,
               candidates=(1, 2, 4, 8, 16, 32, 64, 128), v_floor=-0.35,
               bracket=(1e3, 1e13), decades=0.01) -> ShuntFit:
    """Shunt-resistance band in which :func:`max_nstack` equals the target."""
    cands = sorted(candidates)
    if target_nstack not in cands:
        raise FenorError(f"target {target_nstack} is not a candidate")
    nxt = cands[cands.index(target_nstack) + 1] if target_nstack != cands[-1] else None
    r_min, r_max = bracket
    if not _feasible_at(cfg, scheme, target_nstack, r_max, v_floor):
        raise InfeasibleError(f"n_stack={target_nstack} infeasible even at r_shunt={r_max:.3g} ohm",
                              bound=r_max)
    if _feasible_at(cfg, scheme, target_nstack, r_min, v_floor):
        raise InfeasibleError(f"n_stack={target_nstack} already feasible at r_shunt={r_min:.3g} ohm; "
                              "widen the bracket", bound=r_min)
    r_low = _log_bisect(lambda r: _feasible_at(cfg, scheme, target_nstack, r, v_floor),
                        r_min, r_max, decades)
    if nxt is None or not _feasible_at(cfg, scheme, nxt, math.inf, v_floor):
        return ShuntFit(target_nstack, r_low, math.inf, math.inf)
    if _feasible_at(cfg, scheme, nxt, r_max, v_floor):
        r_high = _log_bisect(lambda r: _feasible_at(cfg, scheme, nxt, r, v_floor),
                             r_low, r_max, decades)
    else:
        raise InfeasibleError(f"band upper edge lies above the bracket ({r_max:.3g} ohm)",
                              bound=r_max)
    return ShuntFit(target_nstack, r_low, r_high, math.sqrt(r_low * r_high))


@dataclass(frozen=True)
class WriteBiasMap:
    stress: np.ndarray
    counts: dict


def write_bias_map(rows, cols, v_w, selected) -> WriteBiasMap:
    """Cross-point write: v_w on the selected cell, v_w/2 on its row and column."""
    if not v_w > 0:
        raise FenorError("v_w must be positive")
    r0, c0 = selected
    if not (0 <= r0 < rows and 0 <= c0 < cols):
        raise FenorError(f"selected cell {selected} outside {rows}x{cols}")
    on_row = np.zeros((rows, cols), dtype=bool)
    on_row[r0, :] = True
    on_col = np.zeros((rows, cols), dtype=bool)
    on_col[:, c0] = True
    stress = np.where(on_row & on_col, v_w, np.where(on_row | on_col, v_w / 2, 0.0))
    counts = {"selected": 1, "half_selected": (rows - 1) + (cols - 1),
              "unselected": (rows - 1) * (cols - 1)}
    return WriteBiasMap(stress, counts)
