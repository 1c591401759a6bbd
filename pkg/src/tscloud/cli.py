"""Command-line front end: ``tscloud <command> --config FILE --seed N --out DIR``.

Every command writes CSV tables and JSON documents (with ``schema_version``)
into ``--out``.  Outputs depend only on the configuration and the seed.
Exit status: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from tscloud.benchmark import METHODS, BenchmarkConfig, compare
from tscloud.cg import CgConfig
from tscloud.chaos import ChaosConfig, GaConfig, chaos_optimize
from tscloud.cloud import TriangularCloud, drops, envelope
from tscloud.controller import decode
from tscloud.errors import DivergedRun, NoRuleFires, NoStabilizingSolution, SingularCoupling
from tscloud.hinf import (
    UncertainRule,
    UncertainTsPlant,
    build_closed_loop,
    robust_verify,
    spectral_abscissa,
    synthesize,
    uncertainty_bound,
)
from tscloud.plant import DEMO_PLANT, UNSTABLE_PLANT, ArxPlant, ReferenceSignal, j1, run_closed_loop
from tscloud.tuning import (
    HybridConfig,
    OnlineConfig,
    TuningProblem,
    hybrid_optimize,
    tune_online,
    zero_controller,
)

SCHEMA_VERSION = 1
logger = logging.getLogger("tscloud")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    plant: object = "demo"  # "demo", "unstable" or {"a": [...], "b": [...], "noise_std": s}
    noise_std: float | None = None  # overrides the plant's noise level
    structure: tuple = (3, 3, 5)
    u_bound: float = 2.0
    reference: dict = field(default_factory=dict)
    steps: int = 30
    dt: float = 1.0
    j_stop: float = 1e-3
    max_evals: int = 20_000
    chaos: dict = field(default_factory=dict)
    ga: dict = field(default_factory=dict)
    cg: dict = field(default_factory=dict)
    hybrid: dict = field(default_factory=dict)
    online: dict = field(default_factory=dict)
    methods: tuple = ("hybrid", "chaos", "ga", "cg")
    n_seeds: int = 20
    controller: object = None  # None/"zero", a checkpoint path, or {"alphas": [...]}
    cloud: dict = field(default_factory=lambda: {"ex": 0.0, "en": 1.0, "he": 0.1})
    drops: dict = field(default_factory=lambda: {"n": 1000, "x": np.linspace(-1, 1, 11).tolist()})
    hinf: dict = field(default_factory=dict)

    def build_plant(self) -> ArxPlant:
        if self.plant == "demo":
            p = DEMO_PLANT
        elif self.plant == "unstable":
            p = UNSTABLE_PLANT
        elif isinstance(self.plant, dict):
            p = ArxPlant(self.plant["a"], self.plant["b"], float(self.plant.get("noise_std", 0.0)))
        else:
            raise ConfigError(f"plant must be 'demo', 'unstable' or a coefficient object, got {self.plant!r}")
        return p if self.noise_std is None else p.with_noise(float(self.noise_std))

    def problem(self, seed: int) -> TuningProblem:
        ref = _sub(ReferenceSignal, self.reference, "reference")
        try:
            return TuningProblem(self.build_plant(), tuple(int(v) for v in self.structure),
                                 float(self.u_bound), ref, int(self.steps), float(self.dt), seed)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid plant or problem settings: {exc}") from exc


def _sub(cls, values: dict, where: str, **overrides):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**{**values, **overrides})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    raw.pop("schema_version", None)
    return _sub(ExperimentConfig, raw, path)


def _chaos_cfg(cfg: ExperimentConfig) -> ChaosConfig:
    return _sub(ChaosConfig, {"max_evals": cfg.max_evals, "j_stop": cfg.j_stop, **cfg.chaos}, "chaos")


def _cg_cfg(values: dict, **defaults) -> CgConfig:
    return _sub(CgConfig, {**defaults, **values}, "cg")


def _hybrid_cfg(cfg: ExperimentConfig) -> HybridConfig:
    h = dict(cfg.hybrid)
    base = HybridConfig()
    chaos = _sub(ChaosConfig, {**asdict(base.chaos), **h.pop("chaos", {})}, "hybrid.chaos")
    cg = _sub(CgConfig, {**asdict(base.cg), **h.pop("cg", {})}, "hybrid.cg")
    return _sub(HybridConfig, {"j_stop": cfg.j_stop, "max_evals": cfg.max_evals, **h}, "hybrid",
                chaos=chaos, cg=cg)


# ---------------------------------------------------------------- output helpers

def _num(v):
    """JSON-safe float: non-finite values become None (paired with a flag by callers)."""
    v = float(v)
    return v if np.isfinite(v) else None


def _write_json(path: Path, doc: dict):
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # inf stays the literal "inf"
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _checkpoint(problem: TuningProblem, x, best_j, evals, extra=None) -> dict:
    params = decode(np.clip(x, 0.0, 1.0), problem.structure, problem.u_bound)
    doc = {
        "structure": list(problem.structure),
        "u_bound": problem.u_bound,
        "alphas": [float(v) for v in x],
        "params": params.to_dict(),
        "best_j": _num(best_j),
        "best_j_finite": bool(np.isfinite(best_j)),
        "evals": int(evals),
    }
    doc.update(extra or {})
    return doc


def _load_alphas(cfg: ExperimentConfig, problem: TuningProblem, override: str | None):
    source = override if override is not None else cfg.controller
    if source is None or source == "zero":
        return None
    if isinstance(source, dict):
        doc = source
    else:
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load controller checkpoint {source}: {exc}") from exc
    alphas = np.asarray(doc.get("alphas", []), dtype=float)
    if alphas.shape != (problem.gamma,):
        raise ConfigError(f"checkpoint has {alphas.size} alphas, structure needs {problem.gamma}")
    return alphas


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: ExperimentConfig, args, out: Path) -> int:
    problem = cfg.problem(args.seed)
    alphas = _load_alphas(cfg, problem, args.checkpoint)
    ctl = zero_controller(problem.u_bound) if alphas is None else problem.controller(alphas)
    diverged = False
    try:
        trace = run_closed_loop(problem.plant, ctl, problem.ref, problem.steps, problem.dt, args.seed)
    except DivergedRun as exc:
        trace, diverged = exc.trace, True
    (out / "trace.csv").write_text(trace.to_csv())
    cost = float("inf") if diverged or len(trace) == 0 else j1(trace)
    _write_json(out / "summary.json", {
        "command": "simulate",
        "seed": args.seed,
        "j1": _num(cost),
        "j1_finite": bool(np.isfinite(cost)),
        "final_abs_e": _num(abs(trace.e[-1])) if len(trace) else None,
        "diverged": diverged,
        "steps": len(trace),
    })
    return 0


def cmd_drops(cfg: ExperimentConfig, args, out: Path) -> int:
    cloud = _sub(TriangularCloud, cfg.cloud, "cloud")
    n = int(cfg.drops.get("n", 1000))
    xs = np.asarray(cfg.drops.get("x", [cloud.ex]), dtype=float)
    rng = np.random.default_rng(args.seed)
    rows, violations = [], 0
    for x in xs:
        mu = drops(cloud, x, n, rng)
        env = envelope(cloud, x)
        lo, hi = min(env.y1, env.y2), max(env.y1, env.y2)
        violations += int(np.sum((mu < lo) | (mu > hi)))
        rows.extend((float(x), float(m), float(env.y1), float(env.y2)) for m in mu)
    _write_csv(out / "drops.csv", ["x", "mu", "y1", "y2"], rows)
    _write_json(out / "summary.json", {
        "command": "drops", "seed": args.seed, "cloud": asdict(cloud), "n_per_x": n,
        "x": xs.tolist(), "violations": violations,
    })
    return 0


def cmd_tune_offline(cfg: ExperimentConfig, args, out: Path) -> int:
    problem = cfg.problem(args.seed)
    res = chaos_optimize(problem, problem.space, _chaos_cfg(cfg), seed=args.seed)
    _write_csv(out / "convergence.csv", ["round", "best_j", "evals"], res.history)
    _write_json(out / "checkpoint.json", _checkpoint(
        problem, res.best_params, res.best_j, res.evals,
        {"command": "tune-offline", "seed": args.seed, "reached": res.reached,
         "j_stop": cfg.j_stop}))
    return 0


def cmd_tune_hybrid(cfg: ExperimentConfig, args, out: Path) -> int:
    problem = cfg.problem(args.seed)
    res = hybrid_optimize(problem, problem.space, _hybrid_cfg(cfg), seed=args.seed)
    _write_csv(out / "phases.csv", ["phase", "evals", "best_j"], res.phases)
    _write_csv(out / "convergence.csv", ["round", "best_j", "evals"], res.history)
    _write_json(out / "checkpoint.json", _checkpoint(
        problem, res.best_params, res.best_j, res.evals,
        {"command": "tune-hybrid", "seed": args.seed, "reached": res.reached,
         "j_stop": cfg.j_stop, "chaos_evals": res.chaos_evals, "cg_evals": res.cg_evals}))
    return 0


def cmd_tune_online(cfg: ExperimentConfig, args, out: Path) -> int:
    problem = cfg.problem(args.seed)
    alphas = _load_alphas(cfg, problem, args.checkpoint)
    if alphas is None:
        raise ConfigError("tune-online needs a starting controller (--checkpoint or 'controller')")
    online = dict(cfg.online)
    cg = _cg_cfg(online.pop("cg", {}), **asdict(OnlineConfig().cg))
    ocfg = _sub(OnlineConfig, online, "online", cg=cg)
    diverged = False
    try:
        res = tune_online(problem, alphas, ocfg)
        trace, log, x = res.trace, res.log, res.params
    except DivergedRun as exc:
        trace, log, x, diverged = exc.trace, [], alphas, True
    (out / "trace.csv").write_text(trace.to_csv())
    _write_csv(out / "online_log.csv", ["start", "j2_before", "j2_after", "evals"], log)
    cost = float("inf") if diverged else j1(trace)
    _write_json(out / "checkpoint.json", _checkpoint(
        problem, x, cost, sum(r[3] for r in log),
        {"command": "tune-online", "seed": args.seed, "window": ocfg.window, "diverged": diverged}))
    return 0


def cmd_compare(cfg: ExperimentConfig, args, out: Path) -> int:
    problem = cfg.problem(args.seed)
    bcfg = BenchmarkConfig(
        j_stop=cfg.j_stop, max_evals=int(cfg.max_evals), n_seeds=int(cfg.n_seeds),
        methods=tuple(cfg.methods),
        chaos=_sub(ChaosConfig, {**asdict(BenchmarkConfig().chaos), **cfg.chaos}, "chaos"),
        ga=_sub(GaConfig, cfg.ga, "ga"),
        cg=_cg_cfg(cfg.cg, **asdict(BenchmarkConfig().cg)),
        hybrid=_hybrid_cfg(cfg))
    res = compare(problem, problem.space, bcfg, seed=args.seed)
    rows = [(m, args.seed + k, v) for m in bcfg.methods for k, v in enumerate(res.counts[m])]
    _write_csv(out / "compare.csv", ["method", "seed", "evals"], rows)
    medians = {m: {"median": _num(res.median(m)), "finite": bool(np.isfinite(res.median(m))),
                   "reached_fraction": res.reached_fraction(m)} for m in bcfg.methods}
    _write_json(out / "compare.json", {
        "command": "compare", "seed": args.seed, "j_stop": cfg.j_stop,
        "max_evals": bcfg.max_evals, "n_seeds": bcfg.n_seeds, "methods": medians,
    })
    return 0


def _matrix(v):
    return None if v is None else np.asarray(v, dtype=float)


def load_hinf_plant(path: str) -> tuple[UncertainTsPlant, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read plant file {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        rules = []
        for r in doc["rules"]:
            clouds = tuple(TriangularCloud(**c) for c in r.get("antecedents", []))
            mats = {k: _matrix(r.get(k)) for k in ("d1", "d2", "d3", "e1", "e2", "e3")}
            rules.append(UncertainRule(_matrix(r["a"]), _matrix(r["b"]), _matrix(r["c"]),
                                       antecedents=clouds, **mats))
        return UncertainTsPlant(tuple(rules)), doc
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ConfigError(f"{path}: invalid plant description: {exc}") from exc


def cmd_hinf(cfg: ExperimentConfig, args, out: Path) -> int:
    path = args.plant or cfg.hinf.get("plant")
    if path is None:
        raise ConfigError("hinf needs a plant file (--plant or hinf.plant in the config)")
    plant, doc = load_hinf_plant(path)
    eps = cfg.hinf.get("eps", doc.get("eps"))
    n_samples = int(cfg.hinf.get("n_samples", 100))
    result = synthesize(plant, eps)
    report = robust_verify(plant, result.compensators, n_samples, args.seed)
    rules = []
    for j, (cert, comp) in enumerate(zip(result.certificates, result.compensators)):
        cl = build_closed_loop(plant.rules[j], comp)
        rules.append({
            "rule": j,
            "uncertainty_bound": uncertainty_bound(plant.rules[j]),
            "p": cert.p.tolist(), "q": cert.q.tolist(), "n_res": cert.n_res.tolist(),
            "coupling_ok": cert.coupling_ok,
            "a_hat": comp.a_hat.tolist(), "b_c": comp.b_c.tolist(), "c_c": comp.c_c.tolist(),
            "nominal_abscissa": spectral_abscissa(cl.a_cl),
        })
    _write_json(out / "hinf.json", {
        "command": "hinf", "seed": args.seed, "rules": rules,
        "coupling_ok": result.coupling_ok, "robust_pass": report.passed,
        "worst_abscissa": _num(report.worst), "n_samples": n_samples,
        "failures": report.failures,
    })
    _write_csv(out / "robust.csv", ["sample", "spectral_abscissa"], enumerate(report.abscissae))
    return 0 if result.coupling_ok and report.passed else 1


COMMANDS = {
    "simulate": (cmd_simulate, "closed-loop run of a stored or zero controller"),
    "drops": (cmd_drops, "sample cloud drops with their envelopes"),
    "tune-offline": (cmd_tune_offline, "chaos search on J1, writes a checkpoint"),
    "tune-online": (cmd_tune_online, "sliding-window CG tuning from a checkpoint"),
    "tune-hybrid": (cmd_tune_hybrid, "chaos then CG, reports per-phase evaluation counts"),
    "hinf": (cmd_hinf, "robust H-infinity compensator synthesis and verification"),
    "compare": (cmd_compare, f"evaluations to target for methods in {{{','.join(METHODS)}}}"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tscloud", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, default=0, help="noise and optimizer seed (default 0)")
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        if name in ("simulate", "tune-online"):
            p.add_argument("--checkpoint", help="controller checkpoint JSON (overrides config)")
        if name == "hinf":
            p.add_argument("--plant", help="uncertain T-S plant JSON (overrides config)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return handler(cfg, args, out)
    except ConfigError as exc:
        print(f"tscloud {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (NoStabilizingSolution, SingularCoupling, NoRuleFires, np.linalg.LinAlgError) as exc:
        print(f"tscloud {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
