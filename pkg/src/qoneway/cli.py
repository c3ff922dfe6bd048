"""Command line entry point: ``qoneway run | verify | inspect``.

Config files are TOML.  A minimal theorem-2 config::

    seed = 42
    pipeline = "theorem2"

    [task]
    builtin = "equality"
    n = 3

    [distribution]
    kind = "correlated"
    diagonal_mass = 0.9

    [protocol]
    source = "builtin"
    code_length = 4
    min_rel_distance = 0.5

    [parameters]
    eta = 0.1
    trials = 10000
    compression = "per-snapshot"
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__, comm, convert, shadows, verify

SCHEMA_VERSION = 1
THREADS_ENV = "QONEWAY_THREADS"
PIPELINES = ("theorem1", "theorem2", "primitives-suite")
T1_MODES = ("average", "worst-case-y")


class ConfigError(ValueError):
    """Config failed to parse or validate; the message names the offending field."""


# -- config ----------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    seed: int
    pipeline: str
    task: dict = field(default_factory=dict)
    distribution: dict = field(default_factory=dict)
    protocol: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    base_dir: str = "."

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


def _get(table: dict, key: str, kind, where: str, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{where}.{key}: missing required field")
        return default
    val = table[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if kind is not None and (not isinstance(val, kind) or (kind is int and isinstance(val, bool))):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__} {val!r}")
    return val


def _check_keys(table: dict, allowed: set, where: str) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(extra)}")


def validate_config(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    _check_keys(raw, {"seed", "pipeline", "task", "distribution", "protocol", "parameters"}, "config")
    seed = _get(raw, "seed", int, "config", required=True)
    if seed < 0:
        raise ConfigError("config.seed: must be nonnegative")
    pipeline = _get(raw, "pipeline", str, "config", required=True)
    if pipeline not in PIPELINES:
        raise ConfigError(f"config.pipeline: {pipeline!r} is not one of {', '.join(PIPELINES)}")
    sections = {}
    for name in ("task", "distribution", "protocol", "parameters"):
        sections[name] = _get(raw, name, dict, "config", default={})
    cfg = ExperimentConfig(seed, pipeline, base_dir=base_dir, **sections)

    par = cfg.parameters
    _check_keys(par, {"eta", "trials", "modes", "compression", "instances", "suite", "group_size"}, "parameters")
    if pipeline == "primitives-suite":
        suite = _get(par, "suite", str, "parameters", default="all")
        if suite not in verify.SUITES + ("all",):
            raise ConfigError(f"parameters.suite: unknown suite {suite!r}")
        return cfg

    eta = _get(par, "eta", float, "parameters", required=True)
    if not 0 < eta < 1:
        raise ConfigError(f"parameters.eta: must lie in (0, 1), got {eta}")
    trials = _get(par, "trials", int, "parameters", required=True)
    if trials <= 0:
        raise ConfigError(f"parameters.trials: must be positive, got {trials}")
    inst = _get(par, "instances", int, "parameters", default=1)
    if inst <= 0:
        raise ConfigError(f"parameters.instances: must be positive, got {inst}")
    if pipeline == "theorem1":
        modes = _get(par, "modes", list, "parameters", default=["average"])
        bad = [m for m in modes if m not in T1_MODES]
        if bad or not modes:
            raise ConfigError(f"parameters.modes: entries must be among {', '.join(T1_MODES)}")
    else:
        comp = _get(par, "compression", str, "parameters", default="per-snapshot")
        if comp not in ("none", "per-snapshot"):
            raise ConfigError(f"parameters.compression: {comp!r} is not 'none' or 'per-snapshot'")
        gs = _get(par, "group_size", int, "parameters")
        if gs is not None and gs <= 0:
            raise ConfigError("parameters.group_size: must be positive")

    task = cfg.task
    _check_keys(task, {"builtin", "n", "file", "random", "nx", "ny", "d", "bottom_rate"}, "task")
    sources = [k for k in ("builtin", "file", "random") if k in task]
    if len(sources) != 1:
        raise ConfigError("task: give exactly one of builtin, file, random")
    if "builtin" in task:
        if _get(task, "builtin", str, "task") != "equality":
            raise ConfigError(f"task.builtin: unknown task {task['builtin']!r}; only 'equality' is built in")
        n = _get(task, "n", int, "task", required=True)
        if not 1 <= n <= 6:
            raise ConfigError("task.n: must lie in 1..6")
    elif "file" in task:
        _get(task, "file", str, "task")
    else:
        _get(task, "random", bool, "task")
        for k in ("nx", "ny", "d"):
            v = _get(task, k, int, "task", required=True)
            if v < 2:
                raise ConfigError(f"task.{k}: must be at least 2")

    dist = cfg.distribution
    _check_keys(dist, {"kind", "diagonal_mass"}, "distribution")
    kind = _get(dist, "kind", str, "distribution", default="task")
    if kind not in ("task", "uniform", "correlated"):
        raise ConfigError(f"distribution.kind: {kind!r} is not one of task, uniform, correlated")
    if kind == "correlated":
        m = _get(dist, "diagonal_mass", float, "distribution", default=0.9)
        if not 0 < m < 1:
            raise ConfigError("distribution.diagonal_mass: must lie in (0, 1)")

    prot = cfg.protocol
    _check_keys(prot, {"source", "code_length", "min_rel_distance", "eps", "dim_d", "entangled", "file", "eps_mode"}, "protocol")
    src = _get(prot, "source", str, "protocol", required=True)
    if src not in ("builtin", "random", "file"):
        raise ConfigError(f"protocol.source: {src!r} is not one of builtin, random, file")
    if src == "builtin" and "builtin" not in task:
        raise ConfigError("protocol.source: the builtin fingerprint protocol needs task.builtin = 'equality'")
    if src == "random":
        eps = _get(prot, "eps", float, "protocol", required=True)
        if not 0 <= eps <= 1:
            raise ConfigError("protocol.eps: must lie in [0, 1]")
        _get(prot, "dim_d", int, "protocol")
        _get(prot, "entangled", bool, "protocol")
    if src == "file":
        _get(prot, "file", str, "protocol", required=True)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # tomli reports "(at line L, column C)"
        raise ConfigError(f"{path}: {exc}") from None
    return validate_config(raw, base_dir=str(path.parent))


# -- report ----------------------------------------------------------------------------

_REPORT_TYPES = {"theorem1": convert.Theorem1Report, "theorem2": convert.Theorem2Report}


@dataclass
class InstanceResult:
    id: int
    pipeline: str
    report: object

    def to_dict(self) -> dict:
        return {"id": self.id, "pipeline": self.pipeline, "report": self.report.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "InstanceResult":
        return cls(data["id"], data["pipeline"], _REPORT_TYPES[data["pipeline"]].from_dict(data["report"]))


@dataclass
class RunReport:
    schema_version: int
    version: str
    config: dict
    instances: list = field(default_factory=list)
    suite: list = field(default_factory=list)
    passed: bool = True
    wall_clock: float | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "version": self.version,
            "config": self.config,
            "instances": [i.to_dict() for i in self.instances],
            "suite": [r.to_dict() for r in self.suite],
            "passed": self.passed,
            "wall_clock": self.wall_clock,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema_version {data.get('schema_version')!r}")
        return cls(
            schema_version=data["schema_version"],
            version=data["version"],
            config=data["config"],
            instances=[InstanceResult.from_dict(i) for i in data["instances"]],
            suite=[verify.CheckRow(**r) for r in data["suite"]],
            passed=data["passed"],
            wall_clock=data["wall_clock"],
        )


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def emit(report: RunReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=1, default=_json_default, allow_nan=False) + "\n"


def parse(text: str) -> RunReport:
    return RunReport.from_dict(json.loads(text))


def summary_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "pipeline", "check", "measured", "bound", "tolerance", "passed"])
    for inst in report.instances:
        for c in inst.report.checks:
            w.writerow([inst.id, inst.pipeline, c.name, repr(float(c.measured)), repr(float(c.bound)), repr(float(c.tolerance)), c.passed])
    for r in report.suite:
        w.writerow(["", f"suite:{r.suite}", r.check, repr(r.measured), "", repr(r.tolerance), r.passed])
    return buf.getvalue()


# -- pipeline --------------------------------------------------------------------------

def _resolve(cfg: ExperimentConfig, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else Path(cfg.base_dir) / path


def _build_task(cfg: ExperimentConfig, rng: np.random.Generator):
    task = cfg.task
    if "builtin" in task:
        f, dist = comm.PartialFunction.equality(task["n"]), None
    elif "file" in task:
        f, dist = comm.task_from_dict(comm.load_json(_resolve(cfg, task["file"])))
    else:
        product = cfg.pipeline == "theorem1"
        f, dist = comm.random_task(task["nx"], task["ny"], task["d"], rng, product=product,
                                   bottom_rate=task.get("bottom_rate", 0.5))
    kind = cfg.distribution.get("kind", "task")
    if kind == "uniform":
        dist = comm.InputDistribution.uniform_on(f)
    elif kind == "correlated":
        m = cfg.distribution.get("diagonal_mass", 0.9)
        if f.nx != f.ny:
            raise ConfigError("distribution.kind: 'correlated' needs a square task")
        defined = f.table != comm.BOTTOM
        diag = np.eye(f.nx, dtype=bool) & defined
        off = ~np.eye(f.nx, dtype=bool) & defined
        if not diag.any() or not off.any():
            raise ConfigError("distribution.kind: 'correlated' needs defined diagonal and off-diagonal cells")
        w = np.where(diag, m / diag.sum(), 0.0) + np.where(off, (1 - m) / off.sum(), 0.0)
        dist = comm.InputDistribution(w)
    elif dist is None:
        raise ConfigError("distribution.kind: the task source carries no distribution; choose uniform or correlated")
    return f, dist


def _build_protocol(cfg: ExperimentConfig, f, dist, rng):
    prot = cfg.protocol
    src = prot["source"]
    if src == "builtin":
        try:
            return comm.make_fingerprint_protocol(
                cfg.task["n"], prot.get("code_length"), prot.get("min_rel_distance", 0.25)
            )
        except comm.ConfigurationError as exc:
            raise ConfigError(f"protocol: {exc}") from None
    if src == "file":
        return comm.protocol_from_dict(comm.load_json(_resolve(cfg, prot["file"])))
    return comm.make_random_protocol(
        f,
        prot.get("dim_d", 2),
        prot["eps"],
        rng,
        dist=dist,
        entangled=prot.get("entangled", False),
        mode=prot.get("eps_mode", "average"),
    )


def _run_instance(cfg: ExperimentConfig, idx: int, seq: np.random.SeedSequence) -> list[InstanceResult]:
    build_seq, run_seq = seq.spawn(2)
    build_rng = np.random.default_rng(build_seq)
    f, dist = _build_task(cfg, build_rng)
    qp = _build_protocol(cfg, f, dist, build_rng)
    par = cfg.parameters
    out = []
    if cfg.pipeline == "theorem1":
        for mode, ss in zip(par.get("modes", ["average"]), run_seq.spawn(len(par.get("modes", ["average"])))):
            _, rep = convert.theorem1_convert(qp, f, dist, par["eta"], mode=mode, trials=par["trials"],
                                              rng=np.random.default_rng(ss))
            out.append(InstanceResult(idx, "theorem1", rep))
    else:
        _, rep = convert.theorem2_convert(
            qp, f, dist, par["eta"], compression=par.get("compression", "per-snapshot"),
            trials=par["trials"], rng=np.random.default_rng(run_seq), group_size=par.get("group_size"),
        )
        out.append(InstanceResult(idx, "theorem2", rep))
    return out


def execute(cfg: ExperimentConfig, threads: int = 1, timing: bool = False) -> RunReport:
    start = time.perf_counter()
    report = RunReport(SCHEMA_VERSION, __version__, cfg.echo())
    if cfg.pipeline == "primitives-suite":
        report.suite = verify.run_suite(cfg.parameters.get("suite", "all"), cfg.seed)
        report.passed = all(r.passed for r in report.suite)
    else:
        n = cfg.parameters.get("instances", 1)
        seqs = np.random.SeedSequence(cfg.seed).spawn(n)
        if threads > 1 and n > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                parts = list(pool.map(lambda a: _run_instance(cfg, *a), enumerate(seqs)))
        else:
            parts = [_run_instance(cfg, i, s) for i, s in enumerate(seqs)]
        # merge by instance id, independent of completion order
        report.instances = [r for part in sorted(parts, key=lambda p: p[0].id) for r in part]
        report.passed = all(i.report.passed for i in report.instances)
    if timing:
        report.wall_clock = time.perf_counter() - start
    return report


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _threads(arg: int | None) -> int:
    if arg is not None:
        return arg
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}: expected an integer, got {env!r}") from None
    return 1


# -- inspect ---------------------------------------------------------------------------

def describe(data: dict) -> str:
    lines = []
    if "encoders" in data:
        qp = comm.protocol_from_dict(data)
        lines.append(f"quantum one-way protocol: |X|={qp.nx} |Y|={qp.ny} d={qp.d}")
        lines.append(f"message: dim {qp.dim_d} ({qp.message_qubits:g} qubits), entangled={qp.entangled}, purified={qp.purified}")
        for k in sorted(qp.metadata):
            lines.append(f"  {k}: {qp.metadata[k]}")
    elif "table" in data:
        f, dist = comm.task_from_dict(data)
        lines.append(f"partial function: |X|={f.nx} |Y|={f.ny} d={f.d}")
        lines.append(f"undefined cells: {int(np.sum(f.table == comm.BOTTOM))}")
        if f.d == 2:
            lines.append(f"column sparsity: {comm.column_sparsity(f)}")
        if dist is not None:
            lines.append(f"distribution: product={dist.is_product()}")
        rows = [" ".join("." if v == comm.BOTTOM else str(v) for v in row) for row in f.table]
        lines.extend("  " + r for r in rows)
    elif "indices" in data and "checksum" in data:
        s = shadows.shadow_from_dict(data)
        lines.append(f"classical shadow: n={s.n} T={s.T} table checksum {s.checksum[:12]}")
    elif "schema_version" in data:
        rep = RunReport.from_dict(data)
        lines.append(f"run report v{rep.schema_version} ({rep.version}), pipeline {rep.config.get('pipeline')}: "
                     f"{'PASS' if rep.passed else 'FAIL'}")
        for inst in rep.instances:
            for c in inst.report.checks:
                lines.append(f"  [{inst.id}] {'PASS' if c.passed else 'FAIL'} {c.name}: {c.measured:.6g} vs {c.bound:.6g}")
        for r in rep.suite:
            lines.append(f"  {'PASS' if r.passed else 'FAIL'} {r.suite}: {r.check}: {r.measured:.3g} (tol {r.tolerance:g})")
    else:
        raise ValueError("unrecognised file: not a task, protocol, shadow or run report")
    return "\n".join(lines)


# -- entry point -----------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qoneway", description="One-way quantum-to-classical protocol conversion experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", type=Path, default=Path("report.json"))
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--threads", type=int, help=f"instance workers (default ${THREADS_ENV} or 1)")
    r.add_argument("--timing", action="store_true", help="record wall-clock time (breaks byte stability)")
    v = sub.add_parser("verify", help="run invariant suites")
    v.add_argument("suite", nargs="?", default="all", choices=verify.SUITES + ("all",))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", type=Path)
    i = sub.add_parser("inspect", help="pretty-print a task, protocol, shadow or report file")
    i.add_argument("path", type=Path)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            if args.seed is not None:
                if args.seed < 0:
                    raise ConfigError("--seed: must be nonnegative")
                cfg.seed = args.seed
            threads = _threads(args.threads)
            if threads < 1:
                raise ConfigError("--threads: must be positive")
            try:
                report = execute(cfg, threads, args.timing)
            except (convert.PreconditionError, comm.ProtocolError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            _write_atomic(args.out, emit(report))
            _write_atomic(args.out.with_suffix(".csv"), summary_csv(report))
            print(f"{'PASS' if report.passed else 'FAIL'}: report written to {args.out}")
            return 0 if report.passed else 1
        if args.command == "verify":
            rows = verify.run_suite(args.suite, args.seed)
            for r in rows:
                print(f"{'PASS' if r.passed else 'FAIL'}  {r.suite:8s} {r.check}: {r.measured:.3g} (tol {r.tolerance:g})")
            if args.out:
                _write_atomic(args.out, json.dumps([r.to_dict() for r in rows], sort_keys=True, indent=1) + "\n")
            return 0 if all(r.passed for r in rows) else 1
        print(describe(comm.load_json(args.path)))
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
