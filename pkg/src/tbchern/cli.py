"""``chern``: command-line driver for single runs, parameter sweeps and disorder ensembles.

Every run writes one row (CSV) or object (JSON) per evaluated point, in axis
order, whatever the worker count.  Floats are written with 12 significant
digits so repeated runs of the same command produce byte-identical files.

Config files are flat ``key = value`` text (``#`` starts a comment); keys are
the long option names with ``-`` or ``_``.  Command-line flags override them.
"""
from __future__ import annotations

import argparse
import ast
import csv
import json
import math
import operator
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import ChernError, ConfigError
from .lattice import (BoundaryCondition, DisorderSpec, HaldaneParams, KaneMeleParams,
                      build_honeycomb, haldane_hopping, kane_mele_hopping, realize)
from .realspace import (bott_index, fd_coefficients, noncommutative_chern,
                        noncommutative_chern_higher_order, position_operators)
from .spectra import filled_states
from .spin import (chern_matrix, kane_mele_spin_twist_family, sigma_z, spin_chern_generalized,
                   spin_chern_split, spin_chern_tbc_oracle, spin_spectral_split)
from .tbc import (TwistGrid, chern_fd, chern_link_variable, family_from_model,
                  momentum_chern_oracle)

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_PARTIAL = 0, 2, 3, 4

MODELS = ("haldane", "kane-mele")
TBC_METHODS = ("tbc-link", "tbc-fd", "flatness")
REALSPACE_METHODS = ("noncomm", "noncomm-hi", "bott")
SPIN_METHODS = ("spin-split", "spin-generalized", "chern-matrix", "spin-tbc")
METHODS = TBC_METHODS + REALSPACE_METHODS + SPIN_METHODS + ("oracle",)
ROUTES = ("bott", "noncomm", "noncomm-hi")

MODEL_PARAMS = {"haldane": ("t1", "t2", "phi", "delta"),
                "kane-mele": ("t", "lso", "lr", "delta")}
INT_AXES = ("lx", "ly", "l")


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.USub: operator.neg, ast.UAdd: operator.pos}


def parse_number(text: str) -> float:
    """A float, optionally written with ``pi`` and ``+ - * /`` (e.g. ``-pi/2``)."""
    def ev(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(text)
    try:
        val = ev(ast.parse(str(text).strip(), mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(val):
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return val


@dataclass(frozen=True)
class SweepAxis:
    name: str
    start: float
    stop: float
    count: int

    def values(self) -> list:
        vals = np.linspace(self.start, self.stop, self.count)
        if self.name in INT_AXES:
            ints = [int(round(v)) for v in vals]
            if any(abs(v - i) > 1e-9 for v, i in zip(vals, ints)):
                raise ConfigError(f"axis {self.name} must take integer values")
            return ints
        return [float(v) for v in vals]


def parse_sweep(text: str) -> SweepAxis:
    try:
        name, rng = text.split("=", 1)
        a, b, n = rng.split(":")
        return SweepAxis(name.strip().lower(), parse_number(a), parse_number(b), int(n))
    except (ValueError, argparse.ArgumentTypeError):
        raise argparse.ArgumentTypeError(f"sweep must look like name=start:stop:count, got {text!r}")


def parse_wlist(text: str) -> list:
    return [parse_number(w) for w in str(text).replace(",", " ").split()]


@dataclass(frozen=True)
class RunConfig:
    model: str = "haldane"
    lx: int = 11
    ly: int = 11
    t1: float = 1.0
    t2: float = 0.0
    phi: float = 0.0
    delta: float = 0.0
    t: float = 1.0
    lso: float = 0.0
    lr: float = 0.0
    method: str = "bott"
    grid: tuple = (30, 30)
    q: int = 3
    route: str = "bott"
    gauge: str = "uniform"
    kgrid: int = 60
    sweeps: tuple = ()
    disorder_w: tuple = ()
    realizations: int = 1
    seed: int = 0
    obc: bool = False
    margin: Optional[int] = None
    filling: Optional[str] = None
    out: str = "-"
    format: str = "csv"
    workers: int = 1
    timing: bool = False

    @property
    def effective_margin(self) -> int:
        if self.margin is not None:
            return self.margin
        return 3 if self.obc else 0

    @property
    def effective_filling(self) -> str:
        if self.filling is not None:
            return self.filling
        return "below:0" if self.obc else "half"

    def with_point(self, point: dict) -> "RunConfig":
        point = dict(point)
        if "l" in point:
            v = point.pop("l")
            point["lx"] = point["ly"] = v
        return replace(self, **point)


def validate(cfg: RunConfig) -> None:
    """Raise ConfigError for anything that is wrong before a single matrix is built."""
    if cfg.model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}, got {cfg.model!r}")
    if cfg.method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg.method!r}")
    if cfg.route not in ROUTES:
        raise ConfigError(f"route must be one of {ROUTES}, got {cfg.route!r}")
    if cfg.gauge not in ("uniform", "boundary"):
        raise ConfigError(f"gauge must be 'uniform' or 'boundary', got {cfg.gauge!r}")
    if cfg.format not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {cfg.format!r}")
    if cfg.method in SPIN_METHODS and cfg.model != "kane-mele":
        raise ConfigError(f"method {cfg.method} needs the kane-mele model")
    if cfg.method == "oracle" and cfg.disorder_w:
        raise ConfigError("the oracle method needs a clean (translation-invariant) system")
    if cfg.obc and (cfg.method in TBC_METHODS or cfg.method in ("oracle", "spin-tbc")):
        raise ConfigError(f"method {cfg.method} needs periodic/twisted boundaries, not --obc")
    fill = cfg.effective_filling
    if fill != "half":
        if not fill.startswith("below:"):
            raise ConfigError(f"filling must be 'half' or 'below:E', got {fill!r}")
        try:
            parse_number(fill[len("below:"):])
        except argparse.ArgumentTypeError as exc:
            raise ConfigError(str(exc)) from None
        if cfg.method in TBC_METHODS or cfg.method in ("spin-tbc", "oracle"):
            raise ConfigError("twist-integration methods need a fixed state count (filling=half)")
    if min(cfg.grid) < 2 or cfg.kgrid < 2:
        raise ConfigError("grid resolutions must be >= 2")
    if cfg.q < 1:
        raise ConfigError("--q must be >= 1")
    if cfg.workers < 1 or cfg.realizations < 1:
        raise ConfigError("--workers and --realizations must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("--seed must be a 64-bit unsigned integer")
    if any(w < 0 for w in cfg.disorder_w):
        raise ConfigError("disorder strengths must be >= 0")
    if len(cfg.sweeps) > 2:
        raise ConfigError("at most two sweep axes")
    if cfg.sweeps and cfg.disorder_w:
        raise ConfigError("combine either sweep axes or a disorder ensemble, not both")
    allowed = set(MODEL_PARAMS[cfg.model]) | set(INT_AXES)
    names = [ax.name for ax in cfg.sweeps]
    if len(set(names)) != len(names):
        raise ConfigError("sweep axes must be distinct")
    for ax in cfg.sweeps:
        if ax.name not in allowed:
            raise ConfigError(f"unknown sweep parameter {ax.name!r} for {cfg.model}; "
                              f"expected one of {sorted(allowed)}")
        if ax.count < 1:
            raise ConfigError(f"sweep {ax.name}: count must be >= 1")
    # every geometry the run will visit must be valid
    lx_vals, ly_vals = [cfg.lx], [cfg.ly]
    for ax in cfg.sweeps:
        if ax.name in ("lx", "l"):
            lx_vals = ax.values()
        if ax.name in ("ly", "l"):
            ly_vals = ax.values()
    m = cfg.effective_margin
    for L in list(lx_vals) + list(ly_vals):
        if L < 3:
            raise ConfigError(f"lattice size {L} < 3")
        if m < 0 or L - 2 * m < 1:
            raise ConfigError(f"margin {m} leaves no window in a lattice of size {L}")


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------

@dataclass
class ResultRecord:
    inputs: dict
    axes: dict
    method: str
    value: Optional[float] = None
    integer: Optional[int] = None
    std: Optional[float] = None
    gap: Optional[float] = None
    flatness: Optional[float] = None
    min_singular: Optional[float] = None
    residue: Optional[float] = None
    status: str = "ok"
    seconds: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "ResultRecord":
        return cls.from_dict(json.loads(text))


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def _num(x):
    # strip numpy scalar types so records serialize the same everywhere
    if x is None:
        return None
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    return float(x)


# --------------------------------------------------------------------------
# evaluation of one parameter point
# --------------------------------------------------------------------------

def inputs_echo(cfg: RunConfig, dis: Optional[DisorderSpec]) -> dict:
    d = {"model": cfg.model, "lx": cfg.lx, "ly": cfg.ly}
    d.update({k: getattr(cfg, k) for k in MODEL_PARAMS[cfg.model]})
    d.update({"method": cfg.method, "boundary": "OBC" if cfg.obc else "PBC",
              "filling": cfg.effective_filling, "margin": cfg.effective_margin})
    if cfg.method in TBC_METHODS or cfg.method == "spin-tbc":
        d["grid"] = list(cfg.grid)
    if cfg.method in TBC_METHODS:
        d["gauge"] = cfg.gauge
    if cfg.method == "noncomm-hi" or cfg.route == "noncomm-hi":
        d["q"] = cfg.q
    if cfg.method in SPIN_METHODS[:3]:
        d["route"] = cfg.route
    if cfg.method == "oracle" and cfg.model == "haldane":
        d["kgrid"] = cfg.kgrid
    if dis is not None:
        d["W"] = dis.W
        d["seed"] = dis.seed
    return d


def _params(cfg: RunConfig):
    if cfg.model == "haldane":
        return HaldaneParams(cfg.t1, cfg.t2, cfg.phi, cfg.delta)
    return KaneMeleParams(cfg.t, cfg.lso, cfg.lr, cfg.delta)


def _model(cfg: RunConfig, dis):
    geom = build_honeycomb(cfg.lx, cfg.ly, spinful=cfg.model == "kane-mele")
    p = _params(cfg)
    hop = haldane_hopping(geom, p, dis) if cfg.model == "haldane" else kane_mele_hopping(geom, p, dis)
    return geom, p, hop


def _states(cfg: RunConfig, geom, hop):
    bc = BoundaryCondition.obc() if cfg.obc else BoundaryCondition.pbc()
    H = realize(hop, bc)
    fill = cfg.effective_filling
    if fill == "half":
        return filled_states(H, lowest_n=geom.n_sites // 2)
    return filled_states(H, below_energy=parse_number(fill[len("below:"):]))


def _spin_route(cfg: RunConfig):
    if cfg.route == "bott":
        return "bott", None
    return "noncomm", (fd_coefficients(cfg.q) if cfg.route == "noncomm-hi" else None)


def compute(cfg: RunConfig, dis: Optional[DisorderSpec] = None) -> dict:
    """Run the configured method at one point; returns the record's numeric fields."""
    m = cfg.method
    if m == "oracle" and cfg.model == "haldane":
        r = momentum_chern_oracle(_params(cfg), cfg.kgrid)
        return {"value": r.value, "gap": r.diagnostics["gap"]}

    geom, p, hop = _model(cfg, dis)
    grid = TwistGrid(*cfg.grid)
    n = geom.n_sites // 2

    if m in ("spin-tbc", "oracle"):
        r = spin_chern_tbc_oracle(kane_mele_spin_twist_family(geom, p, dis), n, grid)
        return {"value": r.value, "gap": r.diagnostics["gap"],
                "extra": {"max_plaquette_flux": r.diagnostics["max_plaquette_flux"]}}
    if m in ("tbc-link", "flatness"):
        r, fld = chern_link_variable(family_from_model(hop, cfg.gauge), n, grid)
        out = {"gap": r.diagnostics["gap"], "flatness": r.diagnostics["flatness"],
               "extra": {"max_plaquette_flux": r.diagnostics["max_plaquette_flux"]}}
        if m == "flatness":
            out.update(value=r.diagnostics["flatness"], integer=r.integer)
            out["extra"]["chern"] = r.value
        else:
            out["value"] = r.value
        return out
    if m == "tbc-fd":
        r, fld = chern_fd(family_from_model(hop, cfg.gauge), n, grid)
        return {"value": r.value, "flatness": r.diagnostics["flatness"]}

    ss, gap = _states(cfg, geom, hop)
    pos = position_operators(geom, cfg.effective_margin)
    out = {"gap": gap if math.isfinite(gap) else None, "extra": {"n_states": ss.count}}
    if m == "bott":
        r = bott_index(ss, pos.unitary("x"), pos.unitary("y"))
        out.update(value=r.value, min_singular=r.diagnostics["min_singular"])
        out["extra"]["max_sigma_dev"] = r.diagnostics["max_sigma_dev"]
        return out
    if m in ("noncomm", "noncomm-hi"):
        P = ss.psi @ ss.psi.conj().T
        if m == "noncomm":
            r = noncommutative_chern(P, pos)
        else:
            r = noncommutative_chern_higher_order(P, pos.unitary("x"), pos.unitary("y"),
                                                  fd_coefficients(cfg.q))
        out.update(value=r.value, residue=r.diagnostics["residue"])
        return out

    route, coeffs = _spin_route(cfg)
    key = "min_singular" if route == "bott" else "residue"
    sz = sigma_z(geom)
    if m == "spin-split":
        sp = spin_spectral_split(ss, sz)
        r = spin_chern_split(sp, pos, route, coeffs)
        out.update(value=r.spin_chern)
        out[key] = min(r.plus.diagnostics[key], r.minus.diagnostics[key]) if route == "bott" \
            else max(r.plus.diagnostics[key], r.minus.diagnostics[key])
        out["extra"].update(c_plus=r.plus.value, c_minus=r.minus.value, sigma_gap=sp.sigma_gap)
    elif m == "spin-generalized":
        r = spin_chern_generalized(ss, pos, sz, route, coeffs)
        out.update(value=r.value)
        out[key] = r.diagnostics[key]
    else:
        r = chern_matrix(ss, pos, geom, route, coeffs)
        out.update(value=r.spin_chern)
        vals = [d[key] for d in r.diagnostics.values()]
        out[key] = min(vals) if route == "bott" else max(vals)
        out["extra"]["matrix"] = [[float(v) for v in row] for row in r.values]
    return out


def evaluate(cfg: RunConfig, axes: dict, dis: Optional[DisorderSpec] = None) -> ResultRecord:
    """One record; domain failures become an ``error`` status with the point attached."""
    rec = ResultRecord(inputs_echo(cfg, dis), dict(axes), cfg.method)
    t0 = time.perf_counter()
    try:
        res = compute(cfg, dis)
    except (ChernError, ValueError, np.linalg.LinAlgError) as exc:
        rec.status = f"error: {type(exc).__name__}: {exc}"
    else:
        rec.value = _num(res["value"])
        rec.integer = _num(res.get("integer", int(round(res["value"]))))
        for k in ("gap", "flatness", "min_singular", "residue"):
            setattr(rec, k, _num(res.get(k)))
        rec.extra = {k: (_num(v) if isinstance(v, (float, int, np.number)) else v)
                     for k, v in res.get("extra", {}).items()}
    if cfg.timing:
        rec.seconds = time.perf_counter() - t0
    return rec


def _evaluate_task(task) -> ResultRecord:
    cfg, axes, dis = task
    return evaluate(cfg, axes, dis)


# --------------------------------------------------------------------------
# run modes
# --------------------------------------------------------------------------

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base: int, w_index: int, realization: int) -> int:
    """Per-realization seed: ``sm(sm(sm(base) ^ w_index) ^ realization)`` with SplitMix64 ``sm``."""
    return splitmix64(splitmix64(splitmix64(base) ^ w_index) ^ realization)


def _map(tasks: list, workers: int) -> Iterator[ResultRecord]:
    # results come back in submission order, so the writer sees axis order
    if workers <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield _evaluate_task(t)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_evaluate_task, tasks, chunksize=1)


def run_single(cfg: RunConfig) -> ResultRecord:
    validate(cfg)
    return evaluate(cfg, {})


def sweep_points(cfg: RunConfig) -> list[dict]:
    axes = [(ax.name, ax.values()) for ax in cfg.sweeps]
    points = [{}]
    for name, vals in axes:
        points = [dict(p, **{name: v}) for p in points for v in vals]
    return points


def run_sweep(cfg: RunConfig) -> Iterator[ResultRecord]:
    validate(cfg)
    tasks = [(cfg.with_point(pt), pt, None) for pt in sweep_points(cfg)]
    yield from _map(tasks, cfg.workers)


def run_disorder(cfg: RunConfig) -> Iterator[ResultRecord]:
    """Per-realization records, each W block followed by its aggregate (mean, std) row."""
    validate(cfg)
    if not cfg.disorder_w:
        raise ConfigError("disorder run needs a nonempty W list")
    tasks = []
    for i, W in enumerate(cfg.disorder_w):
        for r in range(cfg.realizations):
            seed = derive_seed(cfg.seed, i, r)
            tasks.append((cfg, {"W": float(W), "realization": r, "seed": seed},
                          DisorderSpec(float(W), seed)))
    block = []
    for rec in _map(tasks, cfg.workers):
        yield rec
        block.append(rec)
        if len(block) == cfg.realizations:
            yield _aggregate(cfg, block)
            block = []


def _aggregate(cfg: RunConfig, block: list[ResultRecord]) -> ResultRecord:
    W = block[0].axes["W"]
    good = [r for r in block if r.ok]
    inputs = inputs_echo(cfg, None)
    inputs.update(W=W, base_seed=cfg.seed, realizations=cfg.realizations)
    rec = ResultRecord(inputs, {"W": W, "realization": "mean", "seed": None}, cfg.method)
    if good:
        vals = np.array([r.value for r in good])
        rec.value = float(np.mean(vals))
        rec.std = float(np.std(vals))
        rec.integer = int(round(rec.value))
        for k, pick in (("gap", min), ("min_singular", min), ("residue", max), ("flatness", max)):
            xs = [getattr(r, k) for r in good if getattr(r, k) is not None]
            setattr(rec, k, pick(xs) if xs else None)
    if len(good) < len(block):
        rec.status = f"partial: {len(block) - len(good)} of {len(block)} realizations failed"
    if cfg.timing:
        rec.seconds = sum(r.seconds or 0.0 for r in block)
    return rec


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------

VALUE_COLUMNS = ("value", "integer", "gap", "flatness", "min_singular", "residue",
                 "status", "seconds")


def csv_columns(cfg: RunConfig) -> list[str]:
    if cfg.disorder_w:
        return ["W", "realization", "seed", "value", "std"] + list(VALUE_COLUMNS[1:])
    return [ax.name for ax in cfg.sweeps] + list(VALUE_COLUMNS)


def write_records(records: Iterable[ResultRecord], cfg: RunConfig, fh) -> tuple[int, int]:
    """Stream records to ``fh``; returns (count, failures)."""
    count = failures = 0
    if cfg.format == "csv":
        cols = csv_columns(cfg)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for rec in records:
            row = dict(rec.axes)
            row.update({k: getattr(rec, k) for k in VALUE_COLUMNS + ("std",)})
            w.writerow([fmt(row.get(c)) for c in cols])
            fh.flush()
            count += 1
            failures += not rec.ok
    else:
        fh.write("[")
        for rec in records:
            fh.write(("," if count else "") + "\n" + rec.to_json())
            count += 1
            failures += not rec.ok
        fh.write("\n]\n")
    return count, failures


def run(cfg: RunConfig, fh=None) -> int:
    """Execute ``cfg`` and write its output; returns the process exit code."""
    validate(cfg)
    if cfg.disorder_w:
        records, multi = run_disorder(cfg), True
    elif cfg.sweeps:
        records, multi = run_sweep(cfg), True
    else:
        records, multi = iter([run_single(cfg)]), False
    if fh is not None:
        _, failures = write_records(records, cfg, fh)
    elif cfg.out == "-":
        _, failures = write_records(records, cfg, sys.stdout)
    else:
        with open(cfg.out, "w", newline="", encoding="utf-8") as out:
            _, failures = write_records(records, cfg, out)
    if failures:
        return EXIT_PARTIAL if multi else EXIT_DOMAIN
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chern", description="Chern and spin Chern numbers of "
                                "finite Haldane / Kane-Mele lattices by twisted-boundary "
                                "and real-space routes.")
    p.add_argument("model", nargs="?", choices=MODELS)
    p.add_argument("--config", help="flat key=value file; flags override it")
    g = p.add_argument_group("geometry and model")
    g.add_argument("--lx", type=int)
    g.add_argument("--ly", type=int)
    g.add_argument("--t1", type=parse_number, help="Haldane NN hopping")
    g.add_argument("--t2", type=parse_number, help="Haldane NNN hopping")
    g.add_argument("--phi", type=parse_number, help="Haldane flux (accepts e.g. pi/2)")
    g.add_argument("--delta", type=parse_number, help="staggered potential Delta0")
    g.add_argument("--t", type=parse_number, help="Kane-Mele NN hopping")
    g.add_argument("--lso", type=parse_number, help="Kane-Mele intrinsic SO coupling")
    g.add_argument("--lr", type=parse_number, help="Kane-Mele Rashba coupling")
    m = p.add_argument_group("method")
    m.add_argument("--method", choices=METHODS)
    m.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), help="twist grid")
    m.add_argument("--q", type=int, help="finite-difference order for noncomm-hi")
    m.add_argument("--route", choices=ROUTES, help="real-space route for spin methods")
    m.add_argument("--gauge", choices=("uniform", "boundary"), help="twist gauge for tbc methods")
    m.add_argument("--kgrid", type=int, help="momentum mesh of the Haldane oracle")
    m.add_argument("--filling", help="'half' or 'below:E'")
    s = p.add_argument_group("sweeps and ensembles")
    s.add_argument("--sweep", type=parse_sweep, help="name=start:stop:count")
    s.add_argument("--sweep2", type=parse_sweep, help="second axis (Cartesian product)")
    s.add_argument("--disorder-w", type=parse_wlist, help="comma-separated W values")
    s.add_argument("--realizations", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--obc", action="store_true", default=None)
    s.add_argument("--margin", type=int, help="truncation width of the position operators")
    o = p.add_argument_group("output")
    o.add_argument("--out", help="output path ('-' for stdout)")
    o.add_argument("--format", choices=("csv", "json"))
    o.add_argument("--workers", type=int, help="process-pool size for sweeps")
    o.add_argument("--timing", action="store_true", default=None,
                   help="fill the seconds column with wall time (output no longer byte-stable)")
    return p


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def read_config_file(path: str, parser: argparse.ArgumentParser) -> dict:
    """Parse ``key = value`` lines into parser defaults."""
    actions = {a.dest: a for a in parser._actions}
    out = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = (x.strip() for x in line.split("=", 1))
        dest = key.replace("-", "_").lower()
        if dest not in actions or dest in ("help", "config"):
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        act = actions[dest]
        try:
            if isinstance(act, argparse._StoreTrueAction):
                if val.lower() not in _TRUE | _FALSE:
                    raise ValueError(val)
                out[dest] = val.lower() in _TRUE
            elif act.nargs == 2:
                out[dest] = [act.type(x) for x in val.replace(",", " ").split()]
                if len(out[dest]) != 2:
                    raise ValueError(val)
            else:
                out[dest] = act.type(val) if act.type else val
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
        if act.choices is not None and out[dest] not in act.choices:
            raise ConfigError(f"{path}:{lineno}: {key} must be one of {list(act.choices)}")
    return out


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    if ns.model is None:
        raise ConfigError("a model (haldane or kane-mele) is required")
    if ns.method is None:
        raise ConfigError("--method is required")
    if ns.out is None:
        raise ConfigError("--out is required")
    if ns.sweep2 is not None and ns.sweep is None:
        raise ConfigError("--sweep2 needs --sweep")
    kw = {k: v for k, v in vars(ns).items()
          if v is not None and k not in ("config", "sweep", "sweep2", "disorder_w", "grid")}
    if ns.grid is not None:
        kw["grid"] = tuple(ns.grid)
    kw["sweeps"] = tuple(ax for ax in (ns.sweep, ns.sweep2) if ax is not None)
    if ns.disorder_w is not None:
        if not ns.disorder_w:
            raise ConfigError("--disorder-w needs at least one value")
        kw["disorder_w"] = tuple(ns.disorder_w)
    return RunConfig(**kw)


def parse_config(argv: Optional[list] = None) -> RunConfig:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        parser.set_defaults(**read_config_file(known.config, parser))
    ns = parser.parse_args(argv)
    cfg = config_from_args(ns)
    validate(cfg)
    return cfg


def main(argv: Optional[list] = None) -> int:
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"chern: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:   # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    try:
        code = run(cfg)
    except ConfigError as exc:
        print(f"chern: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_DOMAIN:
        print("chern: numerical/domain error (see status column)", file=sys.stderr)
    elif code == EXIT_PARTIAL:
        print("chern: some sweep points failed (see status column)", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
