"""Experiment configuration, sweep execution and result emission."""
from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import os
import time
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .analysis import aggregate, estimate_fidelity, estimate_witness
from .circuit import depth
from .partition import PartitionError, partition_groups, plan_links
from .sim.engine import Basis, NoiseModel, run_shots
from .synth import Method, SynthError, SynthRequest, randomized_search, single_group_plan
from .topology import (CouplingGraph, Kind, TopologyError, bfs_select, center_of, graph_center, make_topology)

log = logging.getLogger(__name__)

DEFAULT_SHOTS = 10_000
DEFAULT_RESTARTS = 8


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# topology specs


@dataclass(frozen=True)
class TopologySpec:
    """``kind`` plus optional explicit dims; ``None`` dims means smallest lattice with >= N nodes."""

    kind: Kind
    dims: tuple[int, ...] | None = None

    @classmethod
    def parse(cls, text: str) -> "TopologySpec":
        name, _, size = text.strip().partition(":")
        try:
            kind = Kind(name.strip().lower().replace("-", "_"))
        except ValueError:
            raise ConfigError(f"topologies: unknown kind {name!r}") from None
        if kind is Kind.CUSTOM:
            raise ConfigError("topologies: custom graphs are not supported in configs")
        dims = None
        if size and size.strip().lower() != "auto":
            try:
                dims = tuple(int(t) for t in size.lower().split("x"))
            except ValueError:
                raise ConfigError(f"topologies: bad size {size!r}") from None
        return cls(kind, dims)

    @property
    def name(self) -> str:
        return self.kind.value

    def __str__(self) -> str:
        return self.kind.value if self.dims is None else f"{self.kind.value}:{'x'.join(map(str, self.dims))}"

    def graph(self, n: int, scale: int = 1) -> CouplingGraph:
        if self.dims is not None:
            return make_topology(self.kind, self.dims)
        return make_topology(self.kind, n=n * scale)


# --------------------------------------------------------------------------
# config


@dataclass
class ExperimentConfig:
    topologies: list[TopologySpec]
    n_values: list[int]
    k: int = 20
    l_values: list[int] = field(default_factory=lambda: [1, 3])
    methods: list[Method] = field(default_factory=lambda: list(Method))
    noise: NoiseModel = field(default_factory=NoiseModel)
    shots: int = DEFAULT_SHOTS
    repetitions: int = 10
    restarts: int = DEFAULT_RESTARTS
    master_seed: int = 0
    fidelity_elements: int = 200
    fidelity_shots: int = 256
    fidelity_mitigate: bool = True
    fidelity_n: list[int] | None = None
    output_dir: Path = Path("results")
    csv: bool = True
    svg: bool = False
    dump_circuits: bool = False
    dump_plans: bool = False
    run_fidelity: bool = False
    defaults_applied: list[str] = field(default_factory=list)

    def validate(self) -> "ExperimentConfig":
        for name in ("topologies", "n_values", "l_values", "methods"):
            if not getattr(self, name):
                raise ConfigError(f"{name}: list must be non-empty")
        if self.k < 2:
            raise ConfigError("k: must be >= 2")
        for l in self.l_values:
            if l == 2:
                raise ConfigError("l_values: L=2 disallowed (redundancy must be odd)")
            if l < 1 or l % 2 == 0:
                raise ConfigError(f"l_values: L={l} disallowed (redundancy must be odd and >= 1)")
        if any(n < 2 for n in self.n_values):
            raise ConfigError("n_values: every N must be >= 2")
        for name in ("shots", "repetitions", "restarts", "fidelity_elements", "fidelity_shots"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        return self


_LIST_INT = {"n_values", "l_values", "fidelity_n"}
_INT = {"k", "shots", "repetitions", "restarts", "master_seed", "fidelity_elements", "fidelity_shots"}
_BOOL = {"fidelity_mitigate", "csv", "svg", "dump_circuits", "dump_plans", "run_fidelity", "enabled",
         "reset_readout_error"}
_SECTIONS = {
    "experiment": {"topologies", "n_values", "k", "l_values", "methods", "shots", "repetitions", "restarts",
                   "master_seed", "fidelity_elements", "fidelity_shots", "fidelity_mitigate", "fidelity_n"},
    "noise": {"p_1q", "p_2q", "p_ro", "enabled", "reset_readout_error"},
    "output": {"directory", "csv", "svg", "dump_circuits", "dump_plans", "run_fidelity"},
}


def _key_line(text: str, section: str, key: str) -> int | None:
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
        elif current == section and line.split("=", 1)[0].strip() == key:
            return i
    return None


def _parse_bool(value: str, key: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def loads_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse the INI-style grammar: ``[section]`` headers and ``key = value`` lines,
    lists comma-separated, ``#`` / ``;`` comments."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f"line {line}: " if line else ""
        raise ConfigError(f"parse error: {where}{exc.message if hasattr(exc, 'message') else exc}") from None
    kw: dict = {}
    noise: dict = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}] (line {_key_line(text, section, '') or '?'})")
        for key, value in cp.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {section}.{key} (line {_key_line(text, section, key)})")
            try:
                if key in _LIST_INT:
                    parsed = [int(t) for t in value.split(",") if t.strip()]
                elif key in _INT:
                    parsed = int(value)
                elif key in _BOOL:
                    parsed = _parse_bool(value, key)
                elif key in ("p_1q", "p_2q", "p_ro"):
                    parsed = float(value)
                elif key == "topologies":
                    parsed = [TopologySpec.parse(t) for t in value.split(",") if t.strip()]
                elif key == "methods":
                    parsed = [Method.parse(t) for t in value.split(",") if t.strip()]
                else:
                    parsed = value.strip()
            except (ValueError, SynthError) as exc:
                raise ConfigError(f"{key} (line {_key_line(text, section, key)}): {exc}") from None
            if section == "noise":
                noise[key] = parsed
            elif key == "directory":
                kw["output_dir"] = Path(parsed) if base_dir is None or Path(parsed).is_absolute() \
                    else Path(os.path.normpath(base_dir / parsed))
            else:
                kw[key] = parsed
    for req in ("topologies", "n_values"):
        if req not in kw:
            raise ConfigError(f"{req}: missing required key in [experiment]")
    defaults = []
    if "shots" not in kw:
        kw["shots"] = DEFAULT_SHOTS
        defaults.append(f"shots={DEFAULT_SHOTS}")
    try:
        nm = NoiseModel(**noise)
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from None
    cfg = ExperimentConfig(noise=nm, defaults_applied=defaults, **kw)
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads_config(text, path.parent)


# --------------------------------------------------------------------------
# seeds


def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode())


def derive_seed(*parts) -> np.random.SeedSequence:
    """Seed from stable keys (strings hashed with CRC32), independent of sweep position."""
    return np.random.SeedSequence([_key_int(p) for p in parts])


def seed_int(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


# --------------------------------------------------------------------------
# sweep


@dataclass
class ResultRow:
    topology: str
    n: int
    method: str
    l_requested: int
    min_l_eff: int | None
    w_mean: float
    w_std: float
    f_mean: float | None
    f_std: float | None
    two_qubit_depth: int | None
    total_depth: int | None
    cx_count: int | None
    measure_count: int | None
    degraded: bool
    seed: int
    w_sem: float = float("nan")
    f_sem: float | None = None
    lattice: str = ""
    error: str = ""


CSV_COLUMNS = [f.name for f in fields(ResultRow)]


@dataclass(frozen=True)
class SweepPoint:
    topology: TopologySpec
    n: int
    method: Method
    l: int

    def label(self) -> str:
        return f"{self.topology} N={self.n} {self.method.value} L={self.l}"


def sweep_points(cfg: ExperimentConfig) -> list[SweepPoint]:
    pts = []
    for topo in cfg.topologies:
        for n in cfg.n_values:
            for m in cfg.methods:
                ls = cfg.l_values if m is Method.GROUP_MV else [1]
                pts += [SweepPoint(topo, n, m, l) for l in ls]
    return pts


def synthesize_point(cfg: ExperimentConfig, pt: SweepPoint):
    """Circuit, plan, search stats and the lattice used for one sweep point.

    Line Dynamic needs a simple path through N nodes; when the default
    lattice has none, progressively larger lattices are tried.
    """
    ss = derive_seed(cfg.master_seed, "synth", str(pt.topology), pt.n, pt.method.value, pt.l)
    scales = (1, 2, 4) if pt.method is Method.LINE_DYNAMIC and pt.topology.dims is None else (1,)
    last = None
    for scale in scales:
        g = pt.topology.graph(pt.n, scale)
        restarts = 1 if pt.method is Method.UNITARY else cfg.restarts
        req = SynthRequest(g, pt.n, cfg.k, pt.l, pt.method, restarts, seed_int(ss))
        try:
            circ, plan, stats = randomized_search(req)
            return circ, plan, stats, g
        except (SynthError, TopologyError) as exc:
            last = exc
    raise SynthError(str(last))


def run_point(cfg: ExperimentConfig, pt: SweepPoint, keep: dict | None = None) -> ResultRow:
    seed = seed_int(derive_seed(cfg.master_seed, "synth", str(pt.topology), pt.n, pt.method.value, pt.l))
    try:
        circ, plan, stats, g = synthesize_point(cfg, pt)
    except (SynthError, TopologyError, PartitionError) as exc:
        log.warning("%s: synthesis failed: %s", pt.label(), exc)
        nan = float("nan")
        return ResultRow(pt.topology.name, pt.n, pt.method.value, pt.l, None, nan, nan, None, None,
                         None, None, None, None, True, seed, error=str(exc))
    if keep is not None:
        keep[pt] = (circ, plan, g)
    rep = depth(circ)
    ws = []
    for r in range(cfg.repetitions):
        # simulation seeds are shared across methods (common random numbers)
        base = derive_seed(cfg.master_seed, "sim", str(pt.topology), pt.n, r)
        zs, xs = base.spawn(2)
        z = run_shots(circ, cfg.noise, Basis.Z, cfg.shots, zs)
        x = run_shots(circ, cfg.noise, Basis.X, cfg.shots, xs)
        ws.append(estimate_witness(z, x, cfg.noise, mitigate=True).w)
    w_mean, w_std, count = aggregate(ws)
    f_mean = f_std = f_sem = None
    if cfg.run_fidelity and (cfg.fidelity_n is None or pt.n in cfg.fidelity_n):
        fs = []
        for r in range(cfg.repetitions):
            fseed = derive_seed(cfg.master_seed, "fidelity", str(pt.topology), pt.n, r)
            fs.append(estimate_fidelity(circ, cfg.noise, cfg.fidelity_elements, cfg.fidelity_shots, fseed,
                                        mitigate=cfg.fidelity_mitigate).f)
        f_mean, f_std, _ = aggregate(fs)
        f_sem = f_std / math.sqrt(len(fs))
    return ResultRow(pt.topology.name, pt.n, pt.method.value, pt.l, plan.min_l_eff, w_mean, w_std, f_mean, f_std,
                     rep.two_qubit_depth, rep.total_depth, rep.cx_count, rep.measure_count, plan.degraded, seed,
                     w_sem=w_std / math.sqrt(count), f_sem=f_sem, lattice=g.label)


def run_sweep(cfg: ExperimentConfig, keep: dict | None = None) -> list[ResultRow]:
    """One aggregated row per sweep point, in config order; ``keep`` collects circuits and plans."""
    rows = []
    for pt in sweep_points(cfg):
        t0 = time.perf_counter()
        rows.append(run_point(cfg, pt, keep))
        log.info("%s: w=%.4f (%.1fs)", pt.label(), rows[-1].w_mean, time.perf_counter() - t0)
    return rows


# --------------------------------------------------------------------------
# outputs


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def csv_text(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_csv(rows: list[ResultRow], path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(csv_text(rows))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


def series_key(row: ResultRow) -> str:
    return row.method if row.method != Method.GROUP_MV.value else f"{row.method} L={row.l_requested}"


def plot_svg(rows: list[ResultRow], title: str = "") -> str:
    """Witness vs N with +/- std error bars, one polyline per (method, L)."""
    rows = [r for r in rows if not math.isnan(r.w_mean)]
    if not rows:
        raise ValueError("nothing to plot")
    width, height, ml, mr, mt, mb = 640, 420, 60, 170, 40, 50
    ns = sorted({r.n for r in rows})
    lo = min(r.w_mean - r.w_std for r in rows)
    hi = max(r.w_mean + r.w_std for r in rows)
    lo, hi = min(0.0, lo), max(1.0, hi)
    nlo, nhi = (ns[0] - 1, ns[0] + 1) if len(ns) == 1 else (ns[0], ns[-1])

    def px(n):
        return ml + (n - nlo) / (nhi - nlo) * (width - ml - mr)

    def py(w):
        return mt + (hi - w) / (hi - lo) * (height - mt - mb)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{title}</text>',
           f'<line x1="{ml}" y1="{py(lo):.1f}" x2="{width - mr}" y2="{py(lo):.1f}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{py(lo):.1f}" stroke="black"/>',
           f'<line x1="{ml}" y1="{py(0.5):.1f}" x2="{width - mr}" y2="{py(0.5):.1f}" stroke="#999" '
           f'stroke-dasharray="4 3"/>']
    for n in ns:
        out.append(f'<text x="{px(n):.1f}" y="{py(lo) + 18:.1f}" text-anchor="middle" font-size="12">{n}</text>')
    for t in np.linspace(lo, hi, 6):
        out.append(f'<text x="{ml - 6}" y="{py(t) + 4:.1f}" text-anchor="end" font-size="12">{t:.2f}</text>')
    out.append(f'<text x="{(ml + width - mr) / 2:.1f}" y="{height - 10}" text-anchor="middle" '
               f'font-size="13">N</text>')
    out.append(f'<text x="16" y="{(mt + height - mb) / 2:.1f}" font-size="13" '
               f'transform="rotate(-90 16 {(mt + height - mb) / 2:.1f})" text-anchor="middle">W</text>')
    keys = []
    for r in rows:
        if series_key(r) not in keys:
            keys.append(series_key(r))
    for i, key in enumerate(keys):
        color = _COLORS[i % len(_COLORS)]
        pts = sorted((r for r in rows if series_key(r) == key), key=lambda r: r.n)
        out.append(f'<g class="series" data-series="{key}">')
        if len(pts) > 1:
            coords = " ".join(f"{px(r.n):.1f},{py(r.w_mean):.1f}" for r in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for r in pts:
            x, y = px(r.n), py(r.w_mean)
            std = 0.0 if math.isnan(r.w_std) else r.w_std
            out.append(f'<line class="errorbar" x1="{x:.1f}" y1="{py(r.w_mean - std):.1f}" x2="{x:.1f}" '
                       f'y2="{py(r.w_mean + std):.1f}" stroke="{color}"/>')
            out.append(f'<circle class="point" cx="{x:.1f}" cy="{y:.1f}" r="3.5" fill="{color}" '
                       f'data-n="{r.n}" data-w="{r.w_mean:.6g}"/>')
        out.append("</g>")
        ly = mt + 18 * i + 10
        out.append(f'<line x1="{width - mr + 12}" y1="{ly}" x2="{width - mr + 32}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{width - mr + 38}" y="{ly + 4}" font-size="12">{key}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(rows: list[ResultRow], path) -> list[Path]:
    """One SVG per topology; ``path`` is a directory or a file stem."""
    if not rows:
        raise ValueError("emit_plot needs at least one row")
    path = Path(path)
    out_dir, stem = (path, "witness") if path.suffix == "" else (path.parent, path.stem)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for topo in dict.fromkeys(r.topology for r in rows):
        sub = [r for r in rows if r.topology == topo]
        p = out_dir / f"{stem}_{topo}.svg"
        p.write_text(plot_svg(sub, f"GHZ witness, {topo}"))
        written.append(p)
    return written


def write_outputs(cfg: ExperimentConfig, rows: list[ResultRow], kept: dict) -> list[Path]:
    out = cfg.output_dir
    written = []
    if cfg.csv:
        written.append(emit_csv(rows, out / "results.csv"))
    if cfg.svg and any(not math.isnan(r.w_mean) for r in rows):
        written += emit_plot([r for r in rows if not math.isnan(r.w_mean)], out)
    for pt, (circ, plan, _) in kept.items():
        stem = f"{pt.topology.name}_n{pt.n}_{pt.method.value}_L{pt.l}"
        if cfg.dump_circuits:
            p = out / "circuits" / f"{stem}.txt"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(circ.dumps())
            written.append(p)
        if cfg.dump_plans:
            p = out / "plans" / f"{stem}.json"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(plan.to_json() + "\n")
            written.append(p)
    return written


# --------------------------------------------------------------------------
# partition demo


@dataclass
class PartitionDemo:
    graph: CouplingGraph
    plan: object
    seconds: float
    attempts: int

    def report(self) -> str:
        p = self.plan
        lines = [f"lattice: {self.graph.label}",
                 f"groups: {len(p.groups)} sizes={[len(gr) for gr in p.groups]}",
                 f"root group: {p.root_group}",
                 "tree: " + (", ".join(f"{a}->{b}(L_eff={p.l_eff[(a, b)]})" for a, b in p.group_tree) or "(empty)"),
                 f"degraded: {p.degraded}",
                 f"attempts: {self.attempts}",
                 f"wall time: {self.seconds:.3f} s"]
        lines += [f"note: {s}" for s in p.notes]
        return "\n".join(lines)


def run_partition_demo(topology: str | TopologySpec, n: int, k: int, l: int, seed: int = 0,
                       attempts: int = 8) -> PartitionDemo:
    """Partition + link planning only (no simulation), keeping the first non-degraded attempt."""
    spec = topology if isinstance(topology, TopologySpec) else TopologySpec.parse(topology)
    t0 = time.perf_counter()
    g = spec.graph(n)
    sel = bfs_select(g, graph_center(g), n)
    best = None
    tries = 0
    for a in range(attempts):
        tries += 1
        ss = derive_seed(seed, "partition-demo", a)
        s1, s2 = ss.spawn(2)
        if k >= n:
            plan = single_group_plan(sel.nodes, l)
        else:
            groups = partition_groups(sel, k, s1, min_cut=l)
            plan = plan_links(groups, g, center_of(g, sel.nodes), l, s2)
        if best is None or (plan.degraded, -(plan.min_l_eff or 0)) < (best.degraded, -(best.min_l_eff or 0)):
            best = plan
        if not plan.degraded:
            break
    return PartitionDemo(g, best, time.perf_counter() - t0, tries)


def with_noise(cfg: ExperimentConfig, nm: NoiseModel) -> ExperimentConfig:
    return replace(cfg, noise=nm)
