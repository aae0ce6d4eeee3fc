"""Configuration files, experiment runs and canned recipes.

A configuration is plain text with ``key = value`` lines grouped in
``[section]`` blocks; ``#`` starts a comment.  Keys before the first section
belong to ``[experiment]``.  Sections and their keys:

``[experiment]``  command, seed, out, system, label
``[run]``         every field of :class:`hglab.evolution.RunConfig`
``[data]``        profile (gaussian | flat), profile_sigma, snapshot_times
``[asymptotic]``  epsilon, epsilons, s0, s_max, q_max, n_q, d_ell, zero
``[check]``       suites
``[oracle]``      levels, sample_radius, order

Every output file carries the hash of the resolved configuration.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import asymptotics as asy
from . import checks, gridio
from .diagnostics import DiagnosticError, decay_fit, energy_growth_exponent, log_beats_powers
from .evolution import EvolutionError, GaussianPulse, LinearSlice, RunConfig, evolve, oracle_compare
from .geometry import GeometryError
from .initdata import (DataGenerationError, GaussianProfile, build_cauchy_data,
                       constraint_residual, flat_data, generate_small_data)

SCHEMA = "hglab/1"
COMMANDS = ("evolve", "asymptotic", "classify", "check", "initdata", "oracle-compare")
EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2
OUT_ENV = "HGLAB_OUT"


class ConfigError(ValueError):
    pass


def _floats(s: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


def _words(s: str) -> Tuple[str, ...]:
    return tuple(s.replace(",", " ").split())


def _run_fields() -> Dict[str, object]:
    out = {}
    for f in dataclasses.fields(RunConfig):
        default = f.default
        if isinstance(default, bool):
            out[f.name] = lambda s: s.strip().lower() in ("1", "true", "yes")
        elif isinstance(default, int):
            out[f.name] = int
        elif isinstance(default, float):
            out[f.name] = float
        elif isinstance(default, tuple):
            out[f.name] = _floats
        else:
            out[f.name] = str
    return out


SECTIONS: Dict[str, Dict[str, object]] = {
    "experiment": {"command": str, "seed": int, "out": str, "system": str, "label": str},
    "run": _run_fields(),
    "data": {"profile": str, "profile_sigma": float, "snapshot_times": _floats},
    "asymptotic": {"epsilon": float, "epsilons": _floats, "s0": float, "s_max": float,
                   "q_max": float, "n_q": int, "d_ell": float, "zero": _words},
    "check": {"suites": _words},
    "oracle": {"levels": int, "sample_radius": float, "order": int},
}

DEFAULTS = {
    "data": {"profile": "gaussian", "profile_sigma": 1.5, "snapshot_times": ()},
    "asymptotic": {"epsilon": 0.05, "epsilons": (0.02, 0.04, 0.06, 0.08, 0.1), "s0": 1.0,
                   "s_max": 1.0e3, "q_max": 30.0, "n_q": 601, "d_ell": 0.02, "zero": ()},
    "check": {"suites": checks.SUITES},
    "oracle": {"levels": 3, "sample_radius": 3.0, "order": 131},
}


@dataclass
class ExperimentSpec:
    command: str
    run: RunConfig = field(default_factory=RunConfig)
    system: Optional[Path] = None
    out: Optional[Path] = None
    seed: int = 0
    label: str = ""
    data: Dict[str, object] = field(default_factory=lambda: dict(DEFAULTS["data"]))
    asymptotic: Dict[str, object] = field(default_factory=lambda: dict(DEFAULTS["asymptotic"]))
    check: Dict[str, object] = field(default_factory=lambda: dict(DEFAULTS["check"]))
    oracle: Dict[str, object] = field(default_factory=lambda: dict(DEFAULTS["oracle"]))
    source: str = "<string>"

    def resolved(self) -> Dict[str, object]:
        """All settings that influence results (output location excluded)."""
        d = {"command": self.command, "seed": self.seed, "run": self.run.to_dict(),
             "data": {k: list(v) if isinstance(v, tuple) else v for k, v in self.data.items()}}
        if self.command in ("asymptotic", "classify"):
            d["asymptotic"] = {k: list(v) if isinstance(v, tuple) else v
                               for k, v in self.asymptotic.items()}
            d["system_text"] = self.system.read_text() if self.system else None
        if self.command == "check":
            d["check"] = {"suites": list(self.check["suites"])}
        if self.command == "oracle-compare":
            d["oracle"] = dict(self.oracle)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def parse_config_text(text: str, source: str = "<string>", base: Optional[Path] = None) -> ExperimentSpec:
    """Parse and validate a configuration; errors carry ``source:line``."""
    section = "experiment"
    values: Dict[str, Dict[str, Tuple[object, int]]] = {s: {} for s in SECTIONS}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{no}: malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"{source}:{no}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        conv = SECTIONS[section].get(key)
        if conv is None:
            raise ConfigError(f"{source}:{no}: unknown key {key!r} in [{section}]")
        if key in values[section]:
            raise ConfigError(f"{source}:{no}: duplicate key {key!r} in [{section}]")
        try:
            values[section][key] = (conv(val), no)
        except ValueError:
            raise ConfigError(f"{source}:{no}: cannot parse {key} = {val!r}") from None

    def where(sec, key):
        return f"{source}:{values[sec][key][1]}" if key in values[sec] else source

    exp = {k: v for k, (v, _) in values["experiment"].items()}
    if "command" not in exp:
        raise ConfigError(f"{source}: missing 'command' (one of {', '.join(COMMANDS)})")
    if exp["command"] not in COMMANDS:
        raise ConfigError(f"{where('experiment', 'command')}: unknown command {exp['command']!r}")
    run_kw = {k: v for k, (v, _) in values["run"].items()}
    if "center" in run_kw:
        if len(run_kw["center"]) != 3:
            raise ConfigError(f"{where('run', 'center')}: center needs three numbers")
    run = RunConfig(**run_kw)
    if not 0.0 < run.cfl <= 0.25:
        raise ConfigError(f"{where('run', 'cfl')}: CFL factor ≤ 0.25 required (got {run.cfl})")
    try:
        run.validate()
    except ValueError as exc:
        raise ConfigError(f"{source}: [run] {exc}") from None
    spec = ExperimentSpec(exp["command"], run, seed=int(exp.get("seed", 0)),
                          label=str(exp.get("label", "")), source=source)
    for sec in ("data", "asymptotic", "check", "oracle"):
        getattr(spec, sec).update({k: v for k, (v, _) in values[sec].items()})
    if spec.data["profile"] not in ("gaussian", "flat"):
        raise ConfigError(f"{where('data', 'profile')}: profile must be 'gaussian' or 'flat'")
    for s in spec.check["suites"]:
        if s not in checks.SUITES:
            raise ConfigError(f"{where('check', 'suites')}: unknown suite {s!r}")
    base = base or Path.cwd()
    if "out" in exp:
        spec.out = (base / exp["out"]).resolve()
    if "system" in exp:
        p = (base / exp["system"]).resolve()
        if not p.is_file():
            raise ConfigError(f"{where('experiment', 'system')}: system file {str(p)!r} not found")
        spec.system = p
    if spec.command in ("asymptotic", "classify") and spec.system is None:
        raise ConfigError(f"{source}: command {spec.command!r} needs 'system = PATH'")
    a = spec.asymptotic
    if a["s0"] <= 0 or a["s_max"] <= a["s0"]:
        raise ConfigError(f"{source}: [asymptotic] need 0 < s0 < s_max")
    if spec.oracle["levels"] < 2:
        raise ConfigError(f"{where('oracle', 'levels')}: at least 2 levels needed for an order fit")
    return spec


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    return parse_config_text(text, str(path), path.parent)


# -- output -----------------------------------------------------------------

def fmt(x) -> str:
    """17 significant digits for floats; plain text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    return o


def write_csv(path: Path, rows: Sequence[Dict[str, object]], config_hash: str,
              columns: Optional[Sequence[str]] = None) -> Path:
    """CSV with a ``# config_hash=...`` first line and a header row."""
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    buf = io.StringIO()
    buf.write(f"# {SCHEMA} config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c, float("nan"))) for c in columns])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: Path) -> Tuple[str, List[Dict[str, str]]]:
    lines = Path(path).read_text().splitlines()
    head = lines[0]
    h = head.split("config_hash=", 1)[1].strip() if "config_hash=" in head else ""
    rows = list(csv.DictReader(lines[1:]))
    return h, rows


def write_json(path: Path, obj: Dict[str, object], config_hash: str) -> Path:
    payload = {"schema": SCHEMA, "config_hash": config_hash, **obj}
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


# -- commands ---------------------------------------------------------------

def _slice_for(spec: ExperimentSpec):
    cfg = spec.run
    grid = cfg.grid()
    if cfg.mode == "linear":
        X, Y, Z = grid.mesh()
        pulse = GaussianPulse(cfg.amplitude, cfg.sigma, tuple(cfg.center))
        return LinearSlice(pulse(X, Y, Z), np.zeros_like(X))
    if spec.data["profile"] == "flat" or cfg.epsilon == 0.0:
        data = flat_data(grid)
    else:
        prof = GaussianProfile(float(spec.data["profile_sigma"]), tuple(cfg.center))
        data = generate_small_data(prof, cfg.epsilon, grid)
    return build_cauchy_data(data)


def series_fits(series: Sequence[Dict[str, float]]) -> Dict[str, object]:
    """Decay and growth fits of an evolve series, skipping columns that cannot be fitted."""
    out: Dict[str, object] = {}
    t = np.array([r["t"] for r in series])
    if series and series[0].get("E0", 0.0) > 0.0:
        try:
            out["E0_growth"] = energy_growth_exponent(t, [r["E0"] for r in series]).to_dict()
        except (DiagnosticError, ValueError):
            pass
    for key in ("dh_TU_sup", "dh_sup", "h1_dh_TU_sup", "dpsi_sup"):
        rows = [r for r in series if key in r and r["t"] >= 1.0]
        if len(rows) < 3:
            continue
        tt = np.array([r["t"] for r in rows])
        yy = np.array([r[key] for r in rows])
        if np.any(yy <= 0.0):
            continue
        try:
            out[key] = {"power": decay_fit(tt, yy, "power", min_span=5.0).to_dict(),
                        "log_vs_powers": log_beats_powers(tt[tt > 1.0], yy[tt > 1.0])}
        except (DiagnosticError, ValueError):
            pass
    return out


def _cmd_evolve(spec: ExperimentSpec, out: Path, h: str) -> Dict[str, object]:
    sl = _slice_for(spec)
    res = evolve(spec.run, sl, snapshot_times=tuple(spec.data["snapshot_times"]))
    write_csv(out / "series.csv", res.series, h)
    grid = spec.run.grid()
    for k, (t, u, v) in enumerate(res.snapshots):
        if spec.run.mode == "einstein":
            gridio.write_state(out / f"snapshot_{k:03d}.npz", grid, u, v, t, getattr(sl, "M", 0.0), h)
    summary = {"M": getattr(sl, "M", 0.0), "failure": res.failure, "n_records": len(res.series)}
    if res.series:
        summary["fits"] = series_fits(res.series)
    if res.failure:
        summary["status"] = "failed"
    return summary


def _cmd_initdata(spec: ExperimentSpec, out: Path, h: str) -> Dict[str, object]:
    cfg = spec.run
    grid = cfg.grid()
    if spec.data["profile"] == "flat" or cfg.epsilon == 0.0:
        data = flat_data(grid)
    else:
        data = generate_small_data(GaussianProfile(float(spec.data["profile_sigma"]), tuple(cfg.center)),
                                   cfg.epsilon, grid)
    ham, mom = constraint_residual(data)
    sl = build_cauchy_data(data)
    gridio.write_slice(out / "initdata.npz", sl, h)
    return {"M": data.M, "hamiltonian_sup": float(np.max(np.abs(ham))),
            "momentum_sup": float(np.max(np.abs(mom)))}


def _asym_setup(spec: ExperimentSpec):
    system = asy.parse_system(spec.system.read_text(), str(spec.system))
    a = spec.asymptotic
    q = asy.q_grid(float(a["q_max"]), int(a["n_q"]))
    return system, q, a


def _cmd_asymptotic(spec: ExperimentSpec, out: Path, h: str) -> Dict[str, object]:
    system, q, a = _asym_setup(spec)
    eps = float(a["epsilon"])
    if system.mode == "einstein":
        data = asy.einstein_seed(system, eps, q)
    else:
        unknown = [lab for lab in a["zero"] if lab not in system.unknowns]
        if unknown:
            raise asy.AsymptoticError(f"[asymptotic] zero lists unknown labels {unknown}")
        data = asy.seed_profile(system, eps, q, tuple(a["zero"]))
    hist = asy.integrate(system, data, float(a["s_max"]), float(a["s0"]), d_ell=float(a["d_ell"]))
    rows = []
    for k, ell in enumerate(hist.ell):
        r = {"ell": ell}
        r.update({f"sup_{lab}": hist.sups[lab][k] for lab in system.unknowns})
        r.update({f"phi_sup_{lab}": hist.phi_sups[lab][k] for lab in system.unknowns})
        rows.append(r)
    write_csv(out / "asymptotic.csv", rows, h)
    summary: Dict[str, object] = {"system": system.name, "blowup": hist.blowup,
                                  "ell_star": hist.ell_star, "ell_star_err": hist.final.ell_star_err,
                                  "ell_end": float(hist.ell[-1])}
    try:
        summary["targets"] = asy.sharp_decay_targets(hist)
    except asy.AsymptoticError as exc:
        summary["targets"] = {"skipped": str(exc)}
    return summary


def _cmd_classify(spec: ExperimentSpec, out: Path, h: str) -> Dict[str, object]:
    system, q, a = _asym_setup(spec)
    s_max = float(a["s_max"])
    v = asy.classify_weak_null(system, tuple(a["epsilons"]), s_max, q, d_ell=float(a["d_ell"]))
    if v.table:
        write_csv(out / "classify.csv", v.table, h,
                  ["epsilon", "blowup", "ell_star", "ell_star_err", "ell_end"])
    return {"system": system.name, **v.to_dict()}


def _cmd_check(spec: ExperimentSpec, out: Path, h: str) -> Dict[str, object]:
    summaries = {}
    for name in spec.check["suites"]:
        res = checks.run_suite(name, spec.seed)
        write_csv(out / f"check_{name}.csv", res["rows"], h)
        summaries[name] = res["summary"]
    return {"suites": summaries}


def _cmd_oracle(spec: ExperimentSpec, out: Path, h: str) -> Dict[str, object]:
    o = spec.oracle
    rep = oracle_compare(spec.run, int(o["levels"]), float(o["sample_radius"]), int(o["order"]))
    write_csv(out / "convergence.csv", rep.table(), h, ["dx", "linf", "l2"])
    rel = rep.linf[-1] / rep.amplitude if rep.amplitude else rep.linf[-1]
    return {"order": rep.order, "finest_linf_over_amplitude": rel,
            "samples": rep.samples}


_DISPATCH = {"evolve": _cmd_evolve, "initdata": _cmd_initdata, "asymptotic": _cmd_asymptotic,
             "classify": _cmd_classify, "check": _cmd_check, "oracle-compare": _cmd_oracle}

NUMERICAL_ERRORS = (EvolutionError, GeometryError, DataGenerationError, asy.AsymptoticError,
                    DiagnosticError, FloatingPointError, np.linalg.LinAlgError, ValueError)


def set_threads(n: int) -> int:
    """Validate and record the thread count.

    The compiled kernels are serial, so results do not depend on it; it is
    kept in every summary so that (spec, seed, threads) identifies a run.
    """
    if n < 1 or n > (os.cpu_count() or 1) * 4:
        raise ConfigError(f"--threads must lie in 1..{(os.cpu_count() or 1) * 4}")
    return n


def output_dir(spec: ExperimentSpec, override: Optional[Path] = None) -> Path:
    if override is not None:
        return Path(override)
    if spec.out is not None:
        return spec.out
    return Path(os.environ.get(OUT_ENV, "hglab-out"))


def run(spec: ExperimentSpec, out: Optional[Path] = None, threads: int = 1) -> int:
    """Execute one experiment; returns the exit status and writes summary.json."""
    out = output_dir(spec, out)
    out.mkdir(parents=True, exist_ok=True)
    h = spec.config_hash()
    base = {"command": spec.command, "seed": spec.seed, "threads": threads, "label": spec.label,
            "config": spec.resolved()}
    try:
        result = _DISPATCH[spec.command](spec, out, h)
    except NUMERICAL_ERRORS as exc:
        write_json(out / "summary.json", {**base, "status": "failed",
                                          "failure": {"type": type(exc).__name__, "reason": str(exc)}}, h)
        return EXIT_NUMERICAL
    status = result.pop("status", "ok")
    write_json(out / "summary.json", {**base, "status": status, "result": result}, h)
    return EXIT_OK if status == "ok" else EXIT_NUMERICAL


# -- recipes ----------------------------------------------------------------

SYSTEM_FILES = {
    "q0.sys": asy.format_system(asy.q0_system()),
    "simple.sys": asy.format_system(asy.simple_system()),
    "dt_squared.sys": asy.format_system(asy.scalar_dt_squared()),
    "model_pair.sys": asy.format_system(asy.model_pair()),
    "einstein_mass.sys": asy.format_system(asy.build_einstein_system(0.5, "mass-profile")),
}


def _evolve_cfg(label: str, n: int, eps: float) -> str:
    return (f"command = evolve\nlabel = {label}\n[run]\nmode = einstein\nn = {n}\nhalf_width = 17.0\n"
            f"t_final = 10.0\noutput_every = 0.25\nepsilon = {eps!r}\n")


def recipe(name: str) -> List[Tuple[str, str]]:
    """Canned experiment set as (file name, text); system files are included by name."""
    if name == "weak-null-zoo":
        files = [(k, SYSTEM_FILES[k]) for k in ("q0.sys", "simple.sys", "dt_squared.sys")]
        for sys_name in ("q0", "simple", "dt_squared"):
            files.append((f"classify_{sys_name}.cfg",
                          f"command = classify\nlabel = {sys_name}\nsystem = {sys_name}.sys\n"
                          "[asymptotic]\ns_max = 1e130\nd_ell = 0.05\n"))
        return files
    if name == "decay-study":
        return [(f"evolve_eps_{tag}.cfg", _evolve_cfg(f"eps {tag}", 48, eps))
                for tag, eps in (("0p5e-3", 5e-4), ("1e-3", 1e-3), ("2e-3", 2e-3))]
    if name == "acceptance-suite":
        files = list(SYSTEM_FILES.items())
        files += [
            ("c01_oracle.cfg", "command = oracle-compare\nlabel = criterion 1\n[run]\nmode = linear\n"
                               "n = 25\nhalf_width = 6.0\nt_final = 2.0\nsigma = 0.7\ncenter = 0.3 -0.2 0.1\n"),
            ("c02_commutators.cfg", "command = check\nlabel = criterion 2\n[check]\nsuites = commutators\n"),
            ("c03_evolve_48.cfg", _evolve_cfg("criteria 3-5, 10", 48, 1e-3)),
            ("c03_evolve_64.cfg", _evolve_cfg("criterion 3 second resolution", 64, 1e-3)),
            ("c04_evolve_48_half.cfg", _evolve_cfg("criterion 4 half epsilon", 48, 5e-4)),
            ("c06_model_pair.cfg", "command = asymptotic\nlabel = criterion 6\nsystem = model_pair.sys\n"
                                   "[asymptotic]\nepsilon = 0.05\ns_max = 22026.465794806718\nzero = phi2\n"),
            ("c07_riccati.cfg", "command = classify\nlabel = criterion 7\nsystem = dt_squared.sys\n"
                                "[asymptotic]\ns_max = 1e130\nd_ell = 0.05\n"),
            ("c09_einstein.cfg", "command = asymptotic\nlabel = criterion 9\nsystem = einstein_mass.sys\n"
                                 "[asymptotic]\nepsilon = 0.05\ns_max = 1000\nq_max = 30\nn_q = 1201\n"),
            ("c10_ratios.cfg", "command = check\nlabel = criterion 10\n[check]\nsuites = ks hardy hormander\n"),
            ("c11_geometry.cfg", "command = check\nlabel = criterion 11\n[check]\nsuites = geometry\n"),
        ]
        files += [(f"c08_{k}", v) for k, v in recipe("weak-null-zoo") if k.endswith(".cfg")]
        return files
    raise ValueError(f"unknown recipe {name!r}; choose from acceptance-suite, decay-study, weak-null-zoo")


def write_recipe(name: str, directory: Path) -> List[Path]:
    """Write the recipe files; returns the configuration paths in run order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfgs = []
    for fname, text in recipe(name):
        p = directory / fname
        p.write_text(text)
        if fname.endswith(".cfg"):
            cfgs.append(p)
    return cfgs
