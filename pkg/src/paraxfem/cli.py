"""Command-line front end.

    paraxfem converge|wedge|growth|solve --config FILE --out DIR

The config file is sectioned ``key = value`` text::

    [run]
    model = N            # N, AK, IFDP, parabolic-dissipative, parabolic-reactive
    [converge]
    case = 1
    levels = 100,200,400,800

Each run writes one CSV into DIR plus ``manifest.json``.  The exit code
is 0 iff every run completed; runs flagged unstable count as completed.
"""

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from . import acoustics as ac
from . import harness as hn

EXPERIMENTS = ("converge", "wedge", "growth", "solve")
MODELS = ("N", "AK", "IFDP", "parabolic-dissipative", "parabolic-reactive")
WEDGE_MODELS = ("N", "AK", "IFDP")
PARABOLIC_MODELS = ("parabolic-dissipative", "parabolic-reactive")

SCHEMA = {
    "converge": ("h", "k", "error", "rate"),
    "wedge": ("r_m", "depth_m", "TL_dB", "model", "flag"),
    "growth": ("t", "l2_norm", "profile"),
    "solve": ("t", "l2_norm", "boundary_re", "boundary_im"),
}

_KEYS = {
    "run": {"experiment", "model", "name"},
    "mesh": {"h", "n"},
    "time": {"k", "steps"},
    "converge": {"case", "levels"},
    "growth": {"profiles"},
    "environment": {"direction", "depth", "samples"},
}


class ConfigError(ValueError):
    def __init__(self, message, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class RunConfig:
    experiment: str
    models: tuple = ()
    name: str = ""
    n: Optional[int] = None
    steps: Optional[int] = None
    case: Optional[int] = None
    levels: tuple = (100, 200, 400, 800)
    profiles: tuple = ()
    direction: Optional[str] = None
    depth: Optional[float] = None
    samples: int = 1000
    annotations: list = field(default_factory=list)


def _split_list(raw):
    return [p.strip() for p in raw.split(",") if p.strip()]


def _positive(value, key, line, cast=float):
    try:
        v = cast(value)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {value!r}", line) from None
    if not v > 0:
        raise ConfigError(f"{key} must be positive", line)
    return v


def _read_sections(text):
    sections, where = {}, {}
    current = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in _KEYS:
                raise ConfigError(f"unknown section [{current}]", no)
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", no)
        if current is None:
            raise ConfigError("key outside any section", no)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _KEYS[current]:
            raise ConfigError(f"unknown key {key!r} in [{current}]", no)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r}", no)
        sections[current][key] = value
        where[current, key] = no
    return sections, where


def parse_config(text: str, experiment: Optional[str] = None) -> RunConfig:
    """Validate a config; ``experiment`` (from the subcommand) wins if given."""
    sec, where = _read_sections(text)

    def get(s, k, default=None):
        return sec.get(s, {}).get(k, default)

    def line(s, k):
        return where.get((s, k))

    exp = get("run", "experiment")
    if exp is not None and experiment is not None and exp != experiment:
        raise ConfigError(f"config is for {exp!r}, not {experiment!r}", line("run", "experiment"))
    exp = experiment or exp
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}", line("run", "experiment"))
    cfg = RunConfig(exp, name=get("run", "name", "") or "")

    raw_models = get("run", "model")
    models = tuple(_split_list(raw_models)) if raw_models else ()
    for m in models:
        if m not in MODELS:
            raise ConfigError(f"unknown model {m!r}", line("run", "model"))

    if get("mesh", "h") is not None and get("mesh", "n") is not None:
        raise ConfigError("give h or n, not both", line("mesh", "n"))
    if get("mesh", "h") is not None:
        h = _positive(get("mesh", "h"), "h", line("mesh", "h"))
        n = round(1.0 / h)
        if abs(n * h - 1.0) > 1e-9:
            raise ConfigError("1/h must be a whole number of elements", line("mesh", "h"))
        cfg.n = n
    elif get("mesh", "n") is not None:
        cfg.n = _positive(get("mesh", "n"), "n", line("mesh", "n"), int)

    if get("time", "k") is not None and get("time", "steps") is not None:
        raise ConfigError("give k or steps, not both", line("time", "steps"))
    k = get("time", "k")
    if k is not None:
        k = _positive(k, "k", line("time", "k"))
    if get("time", "steps") is not None:
        cfg.steps = _positive(get("time", "steps"), "steps", line("time", "steps"), int)

    env_needed = exp == "wedge" or (exp == "solve" and any(m in WEDGE_MODELS for m in models))
    if env_needed:
        direction = get("environment", "direction")
        if direction is None:
            raise ConfigError("missing environment (set [environment] direction = up|down)")
        if direction not in ("up", "down"):
            raise ConfigError(f"direction must be up or down, got {direction!r}",
                              line("environment", "direction"))
        cfg.direction = direction
        if get("environment", "depth") is not None:
            cfg.depth = _positive(get("environment", "depth"), "depth",
                                  line("environment", "depth"))
        if get("environment", "samples") is not None:
            cfg.samples = _positive(get("environment", "samples"), "samples",
                                    line("environment", "samples"), int)
        env = ac.asa_wedge_environment(direction)
        if k is not None:
            cfg.steps = max(1, round(env.T / k))
        if not env.upsloping() and any(m == "N" for m in models):
            cfg.annotations.append("analysis requires upsloping")
    elif k is not None:
        cfg.steps = max(1, round(1.0 / k))

    if exp == "converge":
        models = models or ("N",)
        if any(m == "IFDP" for m in models):
            raise ConfigError("converge supports N, AK and the parabolic models",
                              line("run", "model"))
        if any(m in ("N", "AK") for m in models):
            case = get("converge", "case")
            if case is None:
                raise ConfigError("converge needs [converge] case = 1|2|3")
            if case not in ("1", "2", "3"):
                raise ConfigError(f"case must be 1, 2 or 3, got {case!r}", line("converge", "case"))
            cfg.case = int(case)
        if get("converge", "levels") is not None:
            ln = line("converge", "levels")
            lv = tuple(_positive(v, "level", ln, int) for v in _split_list(get("converge", "levels")))
            if len(lv) < 1:
                raise ConfigError("levels must list at least one element count", ln)
            cfg.levels = lv
    elif exp == "wedge":
        models = models or ("N",)
        for m in models:
            if m not in WEDGE_MODELS:
                raise ConfigError(f"wedge runs support N, AK and IFDP, not {m!r}",
                                  line("run", "model"))
    elif exp == "growth":
        raw = get("growth", "profiles", "b,d,f,g")
        profiles = tuple(_split_list(raw))
        for p in profiles:
            if p not in ac.GROWTH_PROFILES:
                raise ConfigError(f"unknown profile {p!r}", line("growth", "profiles"))
        cfg.profiles = profiles
    elif exp == "solve":
        if len(models) != 1:
            raise ConfigError("solve needs exactly one model", line("run", "model"))
    cfg.models = models
    return cfg


# ---------------------------------------------------------------------------
# reports


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return "%.17g" % v


@dataclass
class Table:
    """A report as written to disk: experiment kind, header, rows of strings."""

    kind: str
    columns: tuple
    rows: list

    def __eq__(self, other):
        return (isinstance(other, Table) and self.kind == other.kind
                and tuple(self.columns) == tuple(other.columns)
                and [tuple(r) for r in self.rows] == [tuple(r) for r in other.rows])


def to_table(report) -> Table:
    if isinstance(report, hn.ConvergenceReport):
        rows = [(_fmt(lv.h), _fmt(lv.k), _fmt(lv.error), _fmt(rate))
                for lv, rate in zip(report.levels, report.rates)]
        return Table("converge", SCHEMA["converge"], rows)
    if isinstance(report, hn.WedgeReport):
        flag = report.status if report.flagged else ""
        rows = [(_fmt(r), _fmt(report.depth), _fmt(tl), report.model, flag)
                for r, tl in zip(report.r, report.tl)]
        return Table("wedge", SCHEMA["wedge"], rows)
    if isinstance(report, hn.GrowthReport):
        report = [report]
    if isinstance(report, (list, tuple)) and all(isinstance(g, hn.GrowthReport) for g in report):
        rows = [(_fmt(t), _fmt(v), g.profile) for g in report for t, v in zip(g.times, g.norms)]
        return Table("growth", SCHEMA["growth"], rows)
    if isinstance(report, hn.SolveReport):
        rows = [(_fmt(t), _fmt(v), _fmt(b.real), _fmt(b.imag))
                for t, v, b in zip(report.times, report.norms, report.boundary)]
        return Table("solve", SCHEMA["solve"], rows)
    raise TypeError(f"cannot serialize {type(report).__name__}")


def write_report(report, path) -> Path:
    table = report if isinstance(report, Table) else to_table(report)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        w.writerows(table.rows)
    return path


def read_report(path) -> Table:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = tuple(rows[0])
    for kind, cols in SCHEMA.items():
        if header == cols:
            return Table(kind, header, [tuple(r) for r in rows[1:]])
    raise ValueError(f"{path}: unknown header {header}")


def table_floats(table: Table, column: str) -> np.ndarray:
    i = table.columns.index(column)
    return np.array([float(r[i]) for r in table.rows])


# ---------------------------------------------------------------------------
# dispatch


def _jobs(cfg: RunConfig):
    """(run id, callable returning a report) pairs."""
    jobs = []
    if cfg.experiment == "converge":
        for m in cfg.models:
            if m in PARABOLIC_MODELS:
                kind = m.split("-", 1)[1]
                jobs.append((f"converge_{kind}",
                             lambda kind=kind: hn.parabolic_study(kind, cfg.levels, threads=1)))
            else:
                jobs.append((f"converge_case{cfg.case}_{m}",
                             lambda m=m: hn.strip_study(cfg.case, cfg.levels, m, threads=1)))
    elif cfg.experiment == "wedge":
        n = cfg.n or hn.DEFAULT_WEDGE_N
        steps = cfg.steps or hn.DEFAULT_WEDGE_STEPS
        for m in cfg.models:
            jobs.append((f"wedge_{m}_{cfg.direction}",
                         lambda m=m: hn.asa_wedge(m, cfg.direction, n, steps, cfg.depth,
                                                  cfg.samples)))
    elif cfg.experiment == "growth":
        n = cfg.n or 800
        jobs.append(("growth", lambda: hn.run_many(
            [lambda p=p: hn.growth_study(p, n, cfg.steps) for p in cfg.profiles])))
    else:
        m = cfg.models[0]
        jobs.append((f"solve_{m}", lambda: hn.solve_run(m, cfg.direction, cfg.n, cfg.steps)))
    return jobs


def _status(report) -> str:
    if isinstance(report, hn.ConvergenceReport):
        return "complete" if all(lv.status == "complete" for lv in report.levels) else "failed"
    flagged = getattr(report, "flagged", False)
    return "flagged" if flagged else "complete"


def execute(cfg: RunConfig, out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = _jobs(cfg)
    entries = []

    def run_one(job):
        run_id, fn = job
        t0 = time.perf_counter()
        try:
            report = fn()
        except Exception as exc:  # recorded in the manifest, reflected in the exit code
            return {"id": run_id, "status": "failed", "error": f"{type(exc).__name__}: {exc}",
                    "seconds": time.perf_counter() - t0}
        path = write_report(report, out / f"{run_id}.csv")
        entry = {"id": run_id, "status": _status(report), "file": path.name,
                 "seconds": time.perf_counter() - t0}
        if isinstance(report, hn.WedgeReport):
            entry["terminated_step"] = report.terminated_step
            entry["norm_ratio"] = report.norm_ratio
        return entry

    entries = hn.run_many([lambda j=j: run_one(j) for j in jobs])
    entries.sort(key=lambda e: e["id"])
    manifest = {
        "experiment": cfg.experiment,
        "name": cfg.name,
        "models": list(cfg.models),
        "annotations": cfg.annotations,
        "backend": _kernels.BACKEND,
        "threads": hn.thread_count(),
        "runs": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return 0 if all(e["status"] != "failed" for e in entries) else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="paraxfem", description=__doc__.split("\n\n")[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    args = ap.parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
        cfg = parse_config(text, args.experiment)
    except (OSError, ConfigError) as exc:
        print(f"paraxfem: {args.config}: {exc}", file=sys.stderr)
        return 2
    for note in cfg.annotations:
        print(f"paraxfem: note: {note}", file=sys.stderr)
    try:
        return execute(cfg, args.out)
    except OSError as exc:
        print(f"paraxfem: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
