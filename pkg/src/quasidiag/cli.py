"""Command-line runner: ``quasidiag {diagonalize,verify,spectrum} --config PATH``.

Exit codes: 0 all monitors pass, 2 configuration error, 3 parameter regime
failure (a rotation lost dominance, regions overlapped, the frequency is
resonant or the scheme did not reach its residual target), 4 a monitor failed.
"""

import argparse
import csv
import datetime
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .checks import (absorption_sweep, branch_distance, branch_labeling_trials,
                     oracle_agreement, region_scan, spectrum_preservation)
from .errors import (ConfigError, DominanceViolation, NoConvergence, QuasidiagError,
                     RegionOverlap, ResonantFrequency)
from .model import Frequency, LatticeBox, PotentialSpec, check_diophantine, check_holder_monotone
from .oracle import (centered_box, coupling_grid, gap_detect, ids, phase_grid, rank_one_sweep,
                     spectra)
from .regions import make_intervals
from .scheme import (SchemeParams, check_approx_monotone, check_diag_drift, check_orders,
                     eigen_family, run_scheme)

log = logging.getLogger("quasidiag")

EXIT_OK, EXIT_CONFIG, EXIT_REGIME, EXIT_MONITOR = 0, 2, 3, 4
CSV_SCHEMA = 1
REGIME_ERRORS = (DominanceViolation, RegionOverlap, ResonantFrequency, NoConvergence)

# defaults exist only for grid sizes and tolerances
DEFAULTS = {
    "s_max": 5,
    "ambient_radius": 20,
    "phases": 64,
    "x0": 0.37,
    "family_radius": 2,
    "box_sizes": [400, 800],
    "spectrum_phases": 256,
    "t_count": 100,
    "rank_one_box": 400,
    "ids_points": 101,
    "seed": 0,
    "workers": 1,
    "output": "out",
    "tolerances": {
        "dominance_margin": 1e-3,
        "residual_target": 1e-12,
        "monotone": 1e-10,
        "lipschitz_eta": 0.05,
        "gap_min_width": 1e-4,
        "gap_stability": 1e-3,
        "order_grid": 64,
    },
    "verify": {
        "diophantine_N": 1000,
        "holder_grid": 1000,
        "region_n_max": 50,
        "region_s_max": 8,
        "region_phase_grid": 16,
        "absorption_k_max": 30,
        "absorption_M": 1.0e4,
        "scheme_phases": 8,
        "branch_steps": 4,
        "branch_phases": 32,
        "branch_M": 1.0e4,
        "label_trials": 200,
    },
}
REQUIRED = ("potential", "frequency", "eps", "delta", "beta", "M")


@dataclass
class RunConfig:
    potential: PotentialSpec
    freq: Frequency
    eps: float
    delta: float
    beta: float
    M: float
    s_max: int
    ambient_radius: int
    phases: int
    x0: float
    family_radius: int
    box_sizes: list
    spectrum_phases: int
    t_count: int
    rank_one_box: int
    ids_points: int
    seed: int
    workers: int
    output: str
    tolerances: dict
    verify: dict
    raw: dict = field(repr=False, default_factory=dict)

    def params(self, **over):
        tol = self.tolerances
        p = SchemeParams(self.potential, self.freq, self.eps, self.delta, self.beta, self.M,
                         s_max=self.s_max, dominance_margin=tol["dominance_margin"],
                         residual_target=tol["residual_target"],
                         order_grid=int(tol["order_grid"]))
        return replace(p, **over) if over else p

    def ambient(self):
        return LatticeBox.cube(self.freq.dim, self.ambient_radius)

    @property
    def digest(self):
        # where results go and how many processes compute them do not change them
        keep = {k: v for k, v in self.raw.items() if k not in ("output", "workers")}
        blob = json.dumps(keep, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _number(cfg, key, kind=float, lo=None, hi=None, lo_open=False, hi_open=False):
    if key not in cfg or cfg[key] is None:
        raise ConfigError(f"missing required field '{key}'")
    try:
        v = kind(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"field '{key}' must be a {kind.__name__}, got {cfg[key]!r}") from None
    if isinstance(v, float) and not math.isfinite(v):
        raise ConfigError(f"field '{key}' must be finite")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(f"field '{key}' = {v} is below its range")
    if hi is not None and (v >= hi if hi_open else v > hi):
        raise ConfigError(f"field '{key}' = {v} is above its range")
    return v


def _potential(cfg, base):
    pot = cfg.get("potential")
    if not isinstance(pot, dict):
        raise ConfigError("field 'potential' must be a mapping with a 'kind'")
    kind = pot.get("kind")
    if kind is None:
        raise ConfigError("missing required field 'potential.kind'")
    alpha = float(pot.get("alpha", 1.0))
    try:
        if kind == "table":
            if "csv" in pot:
                xs, fs = _read_table(base / pot["csv"])
            elif "x" in pot and "f" in pot:
                xs, fs = pot["x"], pot["f"]
            else:
                raise ConfigError("table potential needs 'csv' or both 'x' and 'f'")
            return PotentialSpec("table", alpha=alpha, table_x=tuple(float(v) for v in xs),
                                 table_f=tuple(float(v) for v in fs),
                                 slope=float(pot.get("slope", 0.0)))
        return PotentialSpec(kind, alpha=alpha, power=float(pot.get("power", 1.0)))
    except ConfigError:
        raise
    except (ValueError, QuasidiagError) as err:
        raise ConfigError(f"field 'potential': {err}") from None


def _read_table(path):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as err:
        raise ConfigError(f"cannot read potential table: {err}") from None
    if rows and not _is_float(rows[0][0]):
        rows = rows[1:]
    return [float(r[0]) for r in rows], [float(r[1]) for r in rows]


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def _merge(defaults, given):
    out = dict(defaults)
    for k, v in (given or {}).items():
        out[k] = _merge(defaults[k], v) if isinstance(defaults.get(k), dict) else v
    return out


def load_config(path, overrides=None):
    """Parse and validate a YAML run configuration; raises ConfigError."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    raw = dict(raw)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in REQUIRED:
        if key not in raw or raw[key] is None:
            raise ConfigError(f"missing required field '{key}'")
    unknown = set(raw) - set(REQUIRED) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(sorted(unknown))}")
    cfg = _merge(DEFAULTS, raw)

    fr = cfg["frequency"]
    if not isinstance(fr, dict) or "omega" not in fr:
        raise ConfigError("missing required field 'frequency.omega'")
    try:
        omega = [float(w) for w in np.atleast_1d(fr["omega"])]
        freq = Frequency(tuple(omega), float(fr.get("rho", 2.0)), float(fr.get("mu", 1.0)))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"field 'frequency': {err}") from None
    if any(not 0 <= w < 1 for w in omega):
        raise ConfigError("field 'frequency.omega' must lie in [0, 1)")

    eps = _number(cfg, "eps", float, 0.0, 1.0, hi_open=True)
    delta = _number(cfg, "delta", float, 0.0, 1.0, True, True)
    beta = _number(cfg, "beta", float, 0.0, 1.0, True, True)
    M = _number(cfg, "M", float, 1.0, lo_open=True)
    s_max = _number(cfg, "s_max", int, 1)
    radius = _number(cfg, "ambient_radius", int, 1)
    if radius < 3 * s_max + 2:
        raise ConfigError(f"field 'ambient_radius' must be >= 3 * s_max + 2 = {3 * s_max + 2}")
    fam = _number(cfg, "family_radius", int, 0)
    if radius < 3 * s_max + 2 + fam:
        raise ConfigError("field 'family_radius' is too large: translated boxes must keep "
                          f"radius 3 * s_max + 2, so it can be at most {radius - 3 * s_max - 2}")
    sizes = [int(v) for v in cfg["box_sizes"]]
    if not sizes or sizes != sorted(sizes) or sizes[0] < 2:
        raise ConfigError("field 'box_sizes' must be increasing sizes >= 2")
    return RunConfig(
        potential=_potential(cfg, path.parent), freq=freq, eps=eps, delta=delta, beta=beta, M=M,
        s_max=s_max, ambient_radius=radius, phases=_number(cfg, "phases", int, 1),
        x0=_number(cfg, "x0", float), family_radius=fam,
        box_sizes=sizes, spectrum_phases=_number(cfg, "spectrum_phases", int, 1),
        t_count=_number(cfg, "t_count", int, 2), rank_one_box=_number(cfg, "rank_one_box", int, 2),
        ids_points=_number(cfg, "ids_points", int, 2), seed=_number(cfg, "seed", int),
        workers=_number(cfg, "workers", int, 1), output=str(cfg["output"]),
        tolerances=dict(cfg["tolerances"]), verify=dict(cfg["verify"]), raw=raw)


def order_note(cfg):
    """Note when M is too small for the magnitude function to exceed one."""
    gamma = (1 + 2 / cfg.freq.mu) * cfg.potential.alpha
    need = -24 * gamma / math.log(2) * math.log(cfg.beta)
    if math.log(cfg.M) < need:
        return (f"M = {cfg.M:.3g} is below beta^(-24 gamma / ln 2) = exp({need:.4g}); "
                "choose beta first, then M large relative to 1/beta, then eps")
    return None


# output ------------------------------------------------------------------------------

def fmt(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


class Output:
    """Writes result files under one directory and the manifest last."""

    def __init__(self, root, command, cfg):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.files = []
        self.monitors = {}
        self.notes = []
        self.started = datetime.datetime.now(datetime.timezone.utc).isoformat()

    def _track(self, rel, schema):
        self.files.append({"path": rel, "schema": schema})

    def csv(self, rel, header, rows):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
        self._track(rel, ",".join(header))

    def json(self, rel, obj):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n")
        self._track(rel, "json")

    def monitor(self, name, ok):
        self.monitors[name] = bool(ok)
        log.info("monitor %s: %s", name, "pass" if ok else "FAIL")

    def finish(self, code, error=None):
        for f in self.files:
            f["sha256"] = hashlib.sha256((self.root / f["path"]).read_bytes()).hexdigest()
        manifest = {
            "command": self.command, "version": __version__, "csv_schema": CSV_SCHEMA,
            "config_hash": self.cfg.digest, "started": self.started,
            "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "files": self.files, "monitors": self.monitors, "notes": self.notes,
            "passed": code == EXIT_OK, "exit_code": code, "error": error,
        }
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".manifest", suffix=".json")
        with os.fdopen(fd, "w") as fh:
            fh.write(json.dumps(_jsonable(manifest), indent=1, sort_keys=True) + "\n")
        os.replace(tmp, self.root / "manifest.json")
        return code


def _pool(workers):
    if workers <= 1:
        return None
    return ProcessPoolExecutor(max_workers=workers)


def _map(pool, fn, tasks):
    # results come back in task order either way, so merging is deterministic
    return list(pool.map(fn, tasks)) if pool else [fn(t) for t in tasks]


# diagonalize --------------------------------------------------------------------------

def _diag_task(args):
    params, x, ambient = args
    res = run_scheme(params, x, ambient, require_residual=False)
    orders = check_orders(res.state, params)
    drift = check_diag_drift(res.state, params)
    return {
        "x": x, "E": res.E, "psi": res.psi, "residual": res.residual,
        "stop_reason": res.stop_reason, "steps": res.state.s, "decay": res.diagnostics,
        "history": [vars(r) | {"centers": [list(c) for c in r.centers]}
                    for r in res.state.history],
        "orders": vars(orders) | {"ok": orders.ok},
        "drift": vars(drift),
    }


def cmd_diagonalize(cfg, out):
    params = cfg.params()
    ambient = cfg.ambient()
    xs = phase_grid(cfg.phases)
    pool = _pool(cfg.workers)
    try:
        runs = _map(pool, _diag_task, [(params, float(x), ambient) for x in xs])
    finally:
        if pool:
            pool.shutdown()
    out.csv("eigenvalues.csv", ["x", "E"], [(r["x"], r["E"]) for r in runs])
    d = ambient.dim
    head = [f"n_{k + 1}" for k in range(d)] + ["amplitude"]
    for k, r in enumerate(runs):
        out.csv(f"psi/psi_{k:04d}.csv", head,
                [(*map(int, p), float(a)) for p, a in zip(ambient.sites, r["psi"])])
    E = np.array([r["E"] for r in runs])
    viol = int(np.count_nonzero(np.diff(E) < -cfg.tolerances["monotone"]))
    fin = np.isfinite(E)
    lip = True
    if cfg.potential.alpha == 1 and fin.sum() > 1 and cfg.eps > 0:
        i, j = np.triu_indices(int(fin.sum()), k=1)
        ex, xx = E[fin], xs[fin]
        worst = float(((ex[j] - ex[i]) / (xx[j] - xx[i])).min())
        lip = worst >= 1 - cfg.tolerances["lipschitz_eta"]
    summary = {
        "residual": all(r["residual"] <= params.residual_target for r in runs),
        "psi0": all(r["decay"]["psi0_ok"] for r in runs),
        "decay": all(r["decay"]["decay_ok"] for r in runs),
        "conv3": all(h["conv3_ok"] for r in runs for h in r["history"]),
        "ind1_ind2": all(r["orders"]["ok"] for r in runs),
        "ind3": all(r["drift"]["ok"] for r in runs),
        "monotone": viol == 0,
        "lipschitz": lip,
    }
    for k, v in summary.items():
        out.monitor(k, v)
    # eigenpairs of one box operator labelled by site, via translated runs
    sites = [tuple(int(v) for v in p) for p in ambient.sites
             if np.abs(p).sum() <= cfg.family_radius]
    family = eigen_family(params, cfg.x0, ambient, sites)
    psis = np.array([family[n][1] for n in sites])
    gram = float(np.max(np.abs(psis @ psis.T - np.eye(len(sites)))))
    out.csv("family.csv", [f"n_{k + 1}" for k in range(d)] + ["E"],
            [(*n, float(family[n][0])) for n in sites])
    out.monitor("family_orthogonality", gram <= 1e-10)
    out.json("diagnostics.json", {"runs": [{k: v for k, v in r.items() if k != "psi"}
                                           for r in runs],
                                  "monotone_violations": viol, "family_gram_error": gram})
    return EXIT_OK if all(summary.values()) else EXIT_MONITOR


# verify ---------------------------------------------------------------------------------

def _scheme_check_task(args):
    params, x, ambient = args
    agree = oracle_agreement(params, x, ambient)
    res = run_scheme(params, x, ambient)
    orders = check_orders(res.state, params)
    drift = check_diag_drift(res.state, params)
    preserved = spectrum_preservation(params, x, ambient)
    return {"x": x, "agreement": agree, "orders": vars(orders) | {"ok": orders.ok},
            "drift": vars(drift), "spectrum_preservation": preserved}


def cmd_verify(cfg, out):
    v = cfg.verify
    report = {}
    regime = []

    try:
        dio = check_diophantine(cfg.freq, int(v["diophantine_N"]))
        report["diophantine"] = vars(dio)
        out.monitor("diophantine", dio.ok)
    except ResonantFrequency as err:
        report["diophantine"] = {"ok": False, "error": str(err)}
        out.monitor("diophantine", False)
        out.json("verify.json", report)
        return EXIT_MONITOR

    hol = check_holder_monotone(cfg.potential, cfg.potential.alpha, int(v["holder_grid"]))
    report["holder"] = vars(hol)
    out.monitor("holder_monotone", hol.ok)

    reg = region_scan(cfg.freq, cfg.beta, int(v["region_n_max"]), int(v["region_s_max"]),
                      int(v["region_phase_grid"]))
    report["regions"] = reg
    out.monitor("separation", reg["separation_ok"])
    out.monitor("diameter", reg["diameter_ok"])
    if not reg["disjoint"]:
        regime.append(f"RegionOverlap at step {reg['overlaps'][0]['step']}")
    out.monitor("disjoint", reg["disjoint"])

    ab = absorption_sweep(cfg.params(M=float(v["absorption_M"])), int(v["absorption_k_max"]))
    report["absorption"] = ab
    out.monitor("absorption", ab["ok"])

    params = cfg.params()
    ambient = cfg.ambient()
    xs = phase_grid(int(v["scheme_phases"]))
    pool = _pool(cfg.workers)
    try:
        try:
            runs = _map(pool, _scheme_check_task, [(params, float(x), ambient) for x in xs])
        except REGIME_ERRORS as err:
            regime.append(f"{type(err).__name__}: {err}")
            runs = []
    finally:
        if pool:
            pool.shutdown()
    report["scheme"] = runs
    if runs:
        scale = 1e-11
        out.monitor("oracle_energy", all(r["agreement"]["dE"] <= 1e-10 for r in runs))
        out.monitor("oracle_vector", all(r["agreement"]["alignment"] <= 1e-9 for r in runs))
        out.monitor("decay", all(r["agreement"]["decay"]["decay_ok"]
                                 and r["agreement"]["decay"]["psi0_ok"] for r in runs))
        out.monitor("conv3", all(s["conv3_ok"] for r in runs for s in r["agreement"]["steps"]))
        out.monitor("ind1_ind2", all(r["orders"]["ok"] for r in runs))
        out.monitor("ind3", all(r["drift"]["ok"] for r in runs))
        out.monitor("spectrum_preservation",
                    all(d <= scale for r in runs for d in r["spectrum_preservation"]))

        # approximate monotonicity on neighbouring phases inside I_s
        s = min(2, cfg.s_max)
        iv = make_intervals(cfg.x0, cfg.beta, s)[s]
        g = iv.grid(8)
        pairs = [(float(a), float(b), s) for a, b in zip(g[:-1], g[1:])]
        try:
            mono = check_approx_monotone(params, cfg.x0, ambient, s, pairs)
            report["ind4"] = vars(mono)
            out.monitor("ind4", mono.ok and mono.denominator_ok)
        except REGIME_ERRORS as err:
            regime.append(f"{type(err).__name__}: {err}")

        bp = cfg.params(M=float(v["branch_M"]))
        rows = {}
        try:
            for s in range(1, min(int(v["branch_steps"]), cfg.s_max - 1) + 1):
                rows[s] = branch_distance(bp, cfg.x0, s, ambient, int(v["branch_phases"]))
            report["branch_distance"] = rows
            out.monitor("branch_distance", all(r["ok"] for rr in rows.values() for r in rr))
        except REGIME_ERRORS as err:
            regime.append(f"{type(err).__name__}: {err}")
        except QuasidiagError as err:
            report["branch_distance"] = {"error": str(err)}
            out.monitor("branch_distance", False)

    trials = branch_labeling_trials(cfg.seed, int(v["label_trials"]))
    report["branch_labels"] = trials
    out.monitor("branch_labels", trials["ok"])

    report["regime_failures"] = regime
    out.json("verify.json", report)
    for msg in regime:
        print(f"regime failure: {msg}", file=sys.stderr)
    if regime:
        return EXIT_REGIME
    return EXIT_OK if all(out.monitors.values()) else EXIT_MONITOR


# spectrum ------------------------------------------------------------------------------------

def _spectra_task(args):
    spec, eps, freq, L, n_phases = args
    return spectra(spec, eps, freq, L, n_phases)


def cmd_spectrum(cfg, out):
    spec, eps, freq = cfg.potential, cfg.eps, cfg.freq
    tol = cfg.tolerances
    bounded = spec.kind != "maryland-tan"
    pool = _pool(cfg.workers)
    try:
        eig = _map(pool, _spectra_task, [(spec, eps, freq, L, cfg.spectrum_phases)
                                         for L in cfg.box_sizes])
    finally:
        if pool:
            pool.shutdown()
    for L, ev in zip(cfg.box_sizes, eig):
        vals = np.sort(ev.ravel())
        out.csv(f"spectrum_{L}.csv", ["E"], [(float(e),) for e in vals])

    report = {}
    if bounded:
        rep = gap_detect(spec, eps, freq, cfg.box_sizes, tol["gap_min_width"],
                         n_phases=cfg.spectrum_phases, stability=tol["gap_stability"])
        report["gaps"] = rep.gaps
        report["min_spacing"] = {L: rep.min_spacing(L) for L in cfg.box_sizes}
        out.monitor("gaps_found", len(rep.gaps) > 0)
        gaps = rep.gaps
    else:
        report["gaps"] = []
        gaps = []

    lo = float(np.nanmin(np.concatenate([e[np.isfinite(e)] for e in eig])))
    hi = float(np.nanmax(np.concatenate([e[np.isfinite(e)] for e in eig])))
    E_grid = np.linspace(lo, hi, cfg.ids_points)
    table = ids(spec, eps, freq, cfg.box_sizes, E_grid)
    out.csv("ids.csv", ["E"] + [f"N_{L}" for L in cfg.box_sizes],
            [(E_grid[k], *(float(table.counts[L][k]) for L in cfg.box_sizes))
             for k in range(len(E_grid))])
    mono = all(np.all(np.diff(c) >= 0) for c in table.counts.values())
    out.monitor("ids_monotone", mono)

    if bounded:
        box = centered_box(freq.dim, cfg.rank_one_box)
        trace = rank_one_sweep(spec, eps, freq, box, coupling_grid(spec, cfg.t_count), gaps)
        rows = [(float(t), float(e)) for t, ev in zip(trace.t_grid, trace.eigenvalues)
                for e in ev]
        out.csv("rank_one.csv", ["t", "E"], rows)
        report["rank_one"] = {"monotone": trace.monotone, "witnesses": trace.witnesses,
                              "t_count": len(trace.t_grid), "box_size": len(box)}
        out.monitor("rank_one_monotone", trace.monotone)
        if gaps:
            out.monitor("rank_one_witness", len(trace.witnesses) > 0)
    out.json("gaps.json", report)
    return EXIT_OK if all(out.monitors.values()) else EXIT_MONITOR


# entry point --------------------------------------------------------------------------------

COMMANDS = {"diagonalize": cmd_diagonalize, "verify": cmd_verify, "spectrum": cmd_spectrum}


def build_parser():
    p = argparse.ArgumentParser(
        prog="quasidiag",
        description="Covariant Jacobi diagonalisation of quasiperiodic operators.",
        epilog="Config defaults (grid sizes and tolerances only): "
               + json.dumps(DEFAULTS, sort_keys=True))
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", help="output directory (overrides 'output')")
    p.add_argument("--workers", type=int, help="worker processes (overrides 'workers')")
    p.add_argument("--seed", type=int, help="seed for randomised instances")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get("QUASIDIAG_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"output": args.out, "workers": args.workers,
                                        "seed": args.seed})
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = Output(cfg.output, args.command, cfg)
    note = order_note(cfg)
    if note:
        out.notes.append(note)
        log.warning(note)
    try:
        code = COMMANDS[args.command](cfg, out)
    except REGIME_ERRORS as err:
        msg = f"{type(err).__name__}: {err}"
        print(f"regime failure: {msg}", file=sys.stderr)
        return out.finish(EXIT_REGIME, msg)
    failed = sorted(k for k, ok in out.monitors.items() if not ok)
    if failed:
        print("failed monitors: " + ", ".join(failed), file=sys.stderr)
    return out.finish(code)


if __name__ == "__main__":
    sys.exit(main())
