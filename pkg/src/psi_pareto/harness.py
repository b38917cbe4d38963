"""Command-line harness: seeded Monte Carlo experiments, CSV/JSON output and
the experiment reproduction subcommands."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import statistics
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import click
import numpy as np

from .algorithms import (ALGOS, DEFAULT_MAX_ROUNDS, RunRecord, run_ape, run_oracle, run_profile,
                         run_psips, run_uniform, uniform_error_trace)
from .calibration import KINDS
from .instance import (Instance, InstanceError, MissingDataError, NOC_THETA, correlated_sigma,
                       gen_random_instance, load_covboost, load_instance, load_noc, rotation_instance,
                       save_instance, two_answer_bai)
from .oracle import characteristic_time

log = logging.getLogger("psi_pareto")

MASK64 = (1 << 64) - 1
INSTANCE_SALT = 0x1F2E3D4C
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
STOPPING_KINDS = ("ps", "glr")
RANDOM_SOURCES = {"random-gaussian": "gaussian_cube", "random-bernoulli": "bernoulli_box"}
CSV_COLUMNS = ("run_id", "trial_index", "seed", "instance", "algo", "stopping", "calibration",
               "delta", "tau", "stopped", "correct", "pareto_size", "avg_m_t", "avg_m_t_delta",
               "fallback_count", "wall_ms")
EXPERIMENTS = ("covboost", "correlation", "random-gaussian", "random-bernoulli", "noc",
               "rejections", "posterior-error")


class ConfigError(ValueError):
    pass


class CheckFailed(RuntimeError):
    pass


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def trial_seed(seed: int, trial_index: int) -> int:
    return (seed ^ splitmix64(trial_index)) & MASK64


def worker_count() -> int:
    raw = os.environ.get("PSI_THREADS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"PSI_THREADS must be an integer, got {raw!r}")
        if value < 1:
            raise ConfigError("PSI_THREADS must be at least 1")
        return value
    return os.cpu_count() or 1


# ---------------------------------------------------------------- instances

def _parse_source(source: str) -> Tuple[str, Dict[str, str]]:
    name, _, rest = source.partition(":")
    opts = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"malformed instance option {item!r} in {source!r}")
        opts[key.strip()] = value.strip()
    return name.strip(), opts


def _opt(opts: Dict[str, str], key: str, cast, default):
    if key not in opts:
        return default
    try:
        return cast(opts[key])
    except ValueError:
        raise ConfigError(f"instance option {key}={opts[key]!r} is not a valid {cast.__name__}")


def is_random_source(source: str) -> bool:
    return _parse_source(source)[0] in RANDOM_SOURCES


def resolve_instance(source: str, seed: int = 0, run_index: int = 0) -> Instance:
    """Build an instance from a builtin name (with ``:key=value`` options) or a JSON file.

    Random generators draw one instance per run index, shared across algorithms and deltas.
    """
    name, opts = _parse_source(source)
    if name == "covboost":
        return load_covboost()
    if name == "rotation":
        K = _opt(opts, "K", int, 5)
        if "rho" in opts:
            rho = _opt(opts, "rho", float, 0.0)
            return rotation_instance(K).with_sigma(correlated_sigma(rho), name=f"rotation-K{K}-rho{rho:g}")
        return rotation_instance(K)
    if name == "bai":
        return two_answer_bai(_opt(opts, "gap", float, 1.0), _opt(opts, "variance", float, 1.0))
    if name == "noc":
        return load_noc(opts.get("features"))
    if name in RANDOM_SOURCES:
        rng = np.random.default_rng([seed & MASK64, run_index, INSTANCE_SALT])
        cap = _opt(opts, "cap", float, None)
        inst = gen_random_instance(RANDOM_SOURCES[name], _opt(opts, "K", int, 5), _opt(opts, "d", int, 2),
                                   rng, complexity_cap=cap)
        inst.name = f"{name}-{run_index}"
        return inst
    path = Path(source)
    if path.suffix == ".json":
        if not path.exists():
            raise ConfigError(f"instance file {source} does not exist")
        return load_instance(path)
    raise ConfigError(f"unknown instance source {source!r}")


# ------------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    instance: str = "rotation"
    algos: List[str] = field(default_factory=lambda: ["psips"])
    deltas: List[float] = field(default_factory=lambda: [0.1])
    runs: int = 10
    seed: int = 42
    calibration: str = "heuristic"
    alpha: float = 0.25
    xi: float = 1.0
    stopping: str = "ps"
    out: Optional[str] = None
    horizon: Optional[int] = None
    max_rounds: int = DEFAULT_MAX_ROUNDS
    timing: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if not self.deltas or any(not 0.0 < d < 1.0 for d in self.deltas):
            raise ConfigError("every delta must lie in (0, 1)")
        unknown = [a for a in self.algos if a not in ALGOS]
        if not self.algos or unknown:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {list(ALGOS)}")
        if self.calibration not in KINDS:
            raise ConfigError(f"calibration must be one of {list(KINDS)}")
        if self.stopping not in STOPPING_KINDS:
            raise ConfigError(f"stopping must be one of {list(STOPPING_KINDS)}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.xi <= 0:
            raise ConfigError("xi must be positive")
        if not 0 <= self.seed <= MASK64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be at least 1")
        return self

    @classmethod
    def from_mapping(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        doc = dict(doc)
        if "algo" in doc:
            doc["algos"] = doc.pop("algo")
        if "delta" in doc:
            doc["deltas"] = doc.pop("delta")
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        for key in ("algos", "deltas"):
            if key in doc and not isinstance(doc[key], list):
                doc[key] = [doc[key]]
        try:
            cfg = cls(**doc)
            cfg.deltas = [float(d) for d in cfg.deltas]
            cfg.runs, cfg.seed = int(cfg.runs), int(cfg.seed)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}")
        return cfg

    def digest(self) -> str:
        doc = asdict(self)
        for key in ("out", "timing"):
            doc.pop(key)
        return hashlib.sha1(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:10]


@dataclass(frozen=True)
class Trial:
    index: int
    algo: str
    delta: float
    run: int
    seed: int


def enumerate_trials(cfg: ExperimentConfig) -> List[Trial]:
    trials = []
    index = 0
    for algo in cfg.algos:
        for delta in cfg.deltas:
            for run in range(cfg.runs):
                trials.append(Trial(index, algo, delta, run, trial_seed(cfg.seed, index)))
                index += 1
    return trials


# ------------------------------------------------------------------ running

_ORACLE_WEIGHTS: Dict[str, np.ndarray] = {}


def _oracle_weights(cfg: ExperimentConfig, inst: Instance) -> np.ndarray:
    if is_random_source(cfg.instance):
        return characteristic_time(inst).w_star
    if cfg.instance not in _ORACLE_WEIGHTS:
        _ORACLE_WEIGHTS[cfg.instance] = characteristic_time(inst).w_star
    return _ORACLE_WEIGHTS[cfg.instance]


def run_trial(cfg: ExperimentConfig, trial: Trial) -> RunRecord:
    inst = resolve_instance(cfg.instance, cfg.seed, trial.run)
    rng = np.random.default_rng(trial.seed)
    common = dict(max_rounds=cfg.max_rounds, rng=rng, seed=trial.seed)
    if trial.algo == "psips":
        return run_psips(inst, trial.delta, cfg.calibration, cfg.alpha, cfg.xi, **common)
    if trial.algo == "uniform":
        return run_uniform(inst, trial.delta, cfg.calibration, cfg.stopping, xi=cfg.xi, **common)
    if trial.algo == "oracle":
        return run_oracle(inst, trial.delta, cfg.calibration, weights=_oracle_weights(cfg, inst),
                          xi=cfg.xi, **common)
    return run_ape(inst, trial.delta, **common)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def record_row(cfg: ExperimentConfig, trial: Trial, rec: RunRecord, instance_name: str) -> Dict[str, str]:
    values = {
        "run_id": f"{cfg.digest()}-{trial.index}", "trial_index": trial.index, "seed": trial.seed,
        "instance": instance_name, "algo": rec.algo, "stopping": rec.stopping,
        "calibration": rec.calibration, "delta": float(trial.delta), "tau": rec.tau,
        "stopped": rec.stopped, "correct": rec.correct, "pareto_size": rec.pareto_size,
        "avg_m_t": float(rec.avg_m_t), "avg_m_t_delta": float(rec.avg_m_t_delta),
        "fallback_count": rec.fallback_count,
        "wall_ms": float(rec.wall_ms) if cfg.timing else "",
    }
    return {key: _fmt(value) for key, value in values.items()}


def _execute(args: Tuple[ExperimentConfig, Trial]) -> Tuple[Dict[str, str], float]:
    cfg, trial = args
    rec = run_trial(cfg, trial)
    name = resolve_instance(cfg.instance, cfg.seed, trial.run).name if is_random_source(cfg.instance) \
        else cfg.instance
    return record_row(cfg, trial, rec, name), float(rec.wall_ms)


def parallel_map(fn: Callable, items: Sequence, workers: Optional[int] = None) -> List:
    """Order-preserving map over a bounded process pool; serial when one worker."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def records_csv(rows: Iterable[Dict[str, str]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def summarize(rows: Sequence[Dict[str, str]], wall_ms: Sequence[float], instance: str) -> List[Dict]:
    groups: Dict[Tuple[str, str], List[int]] = {}
    for i, row in enumerate(rows):
        groups.setdefault((row["algo"], row["delta"]), []).append(i)
    summary = []
    for (algo, delta), idx in groups.items():
        taus = [int(rows[i]["tau"]) for i in idx]
        wrong = [rows[i]["correct"] == "false" for i in idx]
        summary.append({
            "algo": algo, "delta": float(delta), "instance": instance, "runs": len(idx),
            "non_stopped": sum(rows[i]["stopped"] == "false" for i in idx),
            "tau_mean": statistics.fmean(taus), "tau_median": statistics.median(taus),
            "tau_std": statistics.pstdev(taus), "error_rate": sum(wrong) / len(idx),
            "mean_wall_ms": statistics.fmean(wall_ms[i] for i in idx),
            "mean_avg_m_t": _nanmean(float(rows[i]["avg_m_t"]) for i in idx),
            "mean_avg_m_t_delta": _nanmean(float(rows[i]["avg_m_t_delta"]) for i in idx),
            "fallback_total": sum(int(rows[i]["fallback_count"]) for i in idx),
        })
    return summary


def _nanmean(values: Iterable[float]) -> Optional[float]:
    kept = [v for v in values if not math.isnan(v)]
    return statistics.fmean(kept) if kept else None


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> Tuple[str, Dict]:
    """Run every trial of ``cfg``; returns (records CSV text, summary document)."""
    cfg.validate()
    resolve_instance(cfg.instance, cfg.seed, 0)  # fail fast on a bad source
    trials = enumerate_trials(cfg)
    results = parallel_map(_execute, [(cfg, t) for t in trials], workers)
    rows = [row for row, _ in results]
    walls = [w for _, w in results]
    summary = {"config": asdict(cfg), "groups": summarize(rows, walls, cfg.instance),
               "non_stopped": sum(r["stopped"] == "false" for r in rows)}
    text = records_csv(rows)
    if cfg.out:
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        out.with_suffix(".summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return text, summary


# --------------------------------------------------------------- reproduce

def _runs(base: int, scale: float) -> int:
    return max(1, int(round(base * scale)))


def _group(summary: Dict, algo: str) -> Dict:
    return next(g for g in summary["groups"] if g["algo"] == algo)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _stopping_times(out_dir: Path, stem: str, text: str) -> None:
    rows = list(csv.DictReader(io.StringIO(text)))
    _write_csv(out_dir / f"{stem}_stopping_times.csv", ("instance", "algo", "delta", "tau", "correct"),
               ((r["instance"], r["algo"], r["delta"], r["tau"], r["correct"]) for r in rows))


def reproduce_covboost(out_dir: Path, scale: float, seed: int, workers, algos) -> Dict[str, bool]:
    cfg = ExperimentConfig(instance="covboost", algos=list(algos or ["psips", "ape-style"]), deltas=[0.1],
                           runs=_runs(500, scale), seed=seed, out=str(out_dir / "covboost_records.csv"))
    text, summary = run_experiment(cfg, workers)
    _stopping_times(out_dir, "covboost", text)
    checks = {}
    if "psips" in cfg.algos:
        tau = _group(summary, "psips")["tau_mean"]
        checks["psips mean tau in [14300, 26600]"] = 14300 <= tau <= 26600
    return checks


CORRELATION_RHOS = (-0.9, -0.5, 0.0, 0.5, 0.9)


def reproduce_correlation(out_dir: Path, scale: float, seed: int, workers, algos) -> Dict[str, bool]:
    algos = list(algos or ["psips", "ape-style"])
    means: Dict[Tuple[str, float], float] = {}
    rows = []
    for rho in CORRELATION_RHOS:
        cfg = ExperimentConfig(instance=f"rotation:rho={rho}", algos=algos, deltas=[0.01],
                               runs=_runs(500, scale), seed=seed,
                               out=str(out_dir / f"correlation_rho{rho}_records.csv"))
        _, summary = run_experiment(cfg, workers)
        for g in summary["groups"]:
            means[(g["algo"], rho)] = g["tau_mean"]
            rows.append((rho, g["algo"], g["tau_mean"], g["tau_median"], g["tau_std"], g["error_rate"],
                         g["runs"]))
    _write_csv(out_dir / "correlation.csv",
               ("rho", "algo", "tau_mean", "tau_median", "tau_std", "error_rate", "runs"), rows)
    checks = {}
    if "psips" in algos:
        checks["psips tau(-0.9) <= tau(0)/2"] = means[("psips", -0.9)] <= 0.5 * means[("psips", 0.0)]
    if "ape-style" in algos:
        ape = [means[("ape-style", r)] for r in (-0.9, 0.0, 0.9)]
        checks["ape-style varies < 10% across rho"] = (max(ape) - min(ape)) < 0.1 * min(ape)
    return checks


def reproduce_random(kind: str, out_dir: Path, scale: float, seed: int, workers, algos,
                     cap: float) -> Dict[str, bool]:
    cfg = ExperimentConfig(instance=f"{kind}:K=5,d=2,cap={cap}",
                           algos=list(algos or ["psips", "uniform", "ape-style"]), deltas=[0.1],
                           runs=_runs(250, scale), seed=seed, out=str(out_dir / f"{kind}_records.csv"))
    text, summary = run_experiment(cfg, workers)
    _stopping_times(out_dir, kind, text)
    return {f"{g['algo']} error rate <= delta": g["error_rate"] <= g["delta"] for g in summary["groups"]}


def reproduce_noc(out_dir: Path, scale: float, seed: int, workers, algos,
                  features: Optional[str]) -> Dict[str, bool]:
    source = "noc" if features is None else f"noc:features={features}"
    try:
        inst = resolve_instance(source)
        inst.A
    except MissingDataError:
        warnings.warn("NoC design features not supplied; writing the parameter matrix only",
                      RuntimeWarning, stacklevel=2)
        _write_csv(out_dir / "noc_theta.csv", ("row", "energy", "runtime"),
                   ((i, *map(float, row)) for i, row in enumerate(NOC_THETA)))
        return {}
    checks = {"NoC Pareto set has 4 designs": len(inst.pareto_set()) == 4}
    cfg = ExperimentConfig(instance=source, algos=list(algos or ["psips", "uniform"]), deltas=[0.1],
                           runs=_runs(100, scale), seed=seed, out=str(out_dir / "noc_records.csv"))
    text, summary = run_experiment(cfg, workers)
    _stopping_times(out_dir, "noc", text)
    return checks


def _profile_psips(args):
    source, delta, horizon, seed = args
    return run_profile(resolve_instance(source), delta, horizon, seed=seed, with_glr=False)


def _profile_uniform(args):
    source, horizon, seed = args
    return uniform_error_trace(resolve_instance(source), horizon, seed=seed)


def reproduce_rejections(out_dir: Path, scale: float, seed: int, workers, horizon: int = 5000) -> Dict[str, bool]:
    runs = _runs(1000, scale)
    traces = parallel_map(_profile_psips, [("rotation", 0.1, horizon, trial_seed(seed, i))
                                           for i in range(runs)], workers)
    m_t = np.array([[row["m_t"] for row in tr] for tr in traces], dtype=float).mean(0)
    m_d = np.array([[row["m_t_delta"] for row in tr] for tr in traces], dtype=float).mean(0)
    _write_csv(out_dir / "rejections.csv", ("t", "mean_m_t", "mean_m_t_delta"),
               zip(range(1, horizon + 1), m_t, m_d))
    decile = max(1, horizon // 10)
    return {"one row per round": m_t.size == horizon,
            "m_t_delta grows as the posterior concentrates": m_d[-decile:].mean() > m_d[:decile].mean()}


def reproduce_posterior_error(out_dir: Path, scale: float, seed: int, workers,
                              horizon: int = 5000) -> Dict[str, bool]:
    runs = _runs(1000, scale)
    seeds = [trial_seed(seed, i) for i in range(runs)]
    ps = parallel_map(_profile_psips, [("covboost", 0.1, horizon, s) for s in seeds], workers)
    rr = parallel_map(_profile_uniform, [("covboost", horizon, s) for s in seeds], workers)
    ps_err = np.array([[row["error"] for row in tr] for tr in ps], dtype=float).mean(0)
    rr_err = np.array(rr, dtype=float).mean(0)
    _write_csv(out_dir / "posterior_error.csv", ("t", "psips_error_rate", "uniform_error_rate"),
               zip(range(1, horizon + 1), ps_err, rr_err))
    decile = max(1, horizon // 10)
    return {"psips error rate decreases": ps_err[-decile:].mean() < ps_err[:decile].mean()}


def reproduce(name: str, out_dir, scale: float = 0.2, seed: int = 42, workers: Optional[int] = None,
              algos: Optional[Sequence[str]] = None, features: Optional[str] = None,
              cap: float = 1000.0, horizon: int = 5000) -> Dict[str, bool]:
    """Run one experiment; returns the named threshold checks and their outcomes."""
    name = name.replace("_", "-")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {list(EXPERIMENTS)}")
    if not 0.0 < scale <= 1.0:
        raise ConfigError("scale must lie in (0, 1]")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if name == "covboost":
        checks = reproduce_covboost(out_dir, scale, seed, workers, algos)
    elif name == "correlation":
        checks = reproduce_correlation(out_dir, scale, seed, workers, algos)
    elif name in RANDOM_SOURCES:
        checks = reproduce_random(name, out_dir, scale, seed, workers, algos, cap)
    elif name == "noc":
        checks = reproduce_noc(out_dir, scale, seed, workers, algos, features)
    elif name == "rejections":
        checks = reproduce_rejections(out_dir, scale, seed, workers, horizon)
    else:
        checks = reproduce_posterior_error(out_dir, scale, seed, workers, horizon)
    checks = {label: bool(ok) for label, ok in checks.items()}
    (out_dir / f"{name}_checks.json").write_text(json.dumps(checks, indent=2))
    return checks


# --------------------------------------------------------------------- CLI

def _split(values: Tuple[str, ...]) -> List[str]:
    return [item for v in values for item in v.split(",") if item]


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose: bool) -> None:
    """Pareto set identification with posterior sampling."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")


@cli.command("run")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file.")
@click.option("--instance", help="Builtin name (covboost, rotation[:K=,rho=], bai[:gap=,variance=], "
                                 "noc[:features=], random-gaussian[:K=,d=,cap=], random-bernoulli) or JSON path.")
@click.option("--delta", "deltas", multiple=True, type=float)
@click.option("--runs", type=int)
@click.option("--algo", "algos", multiple=True, help="psips, uniform, oracle, ape-style (repeat or comma-separate).")
@click.option("--stopping", type=click.Choice(STOPPING_KINDS))
@click.option("--calibration", type=click.Choice(KINDS))
@click.option("--alpha", type=float)
@click.option("--xi", type=float)
@click.option("--seed", type=int)
@click.option("--max-rounds", type=int)
@click.option("--out", type=click.Path(dir_okay=False))
@click.option("--timing/--no-timing", default=None, help="Fill the wall_ms column (breaks byte-identical reruns).")
def run_cmd(config_path, instance, deltas, runs, algos, stopping, calibration, alpha, xi, seed,
            max_rounds, out, timing):
    """Run a Monte Carlo experiment and write the records CSV and summary JSON."""
    doc = {}
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}")
    cfg = ExperimentConfig.from_mapping(doc)
    flags = {"instance": instance, "deltas": list(deltas) or None, "runs": runs,
             "algos": _split(algos) or None, "stopping": stopping, "calibration": calibration,
             "alpha": alpha, "xi": xi, "seed": seed, "max_rounds": max_rounds, "out": out, "timing": timing}
    for key, value in flags.items():
        if value is not None:
            setattr(cfg, key, value)
    text, summary = run_experiment(cfg)
    if not cfg.out:
        click.echo(text, nl=False)
    for g in summary["groups"]:
        click.echo(f"{g['algo']:>10} delta={g['delta']:g} runs={g['runs']} tau_mean={g['tau_mean']:.1f} "
                   f"error_rate={g['error_rate']:.4f} non_stopped={g['non_stopped']}", err=True)


@cli.command("reproduce")
@click.argument("name", type=click.Choice(EXPERIMENTS + tuple(e.replace("-", "_") for e in EXPERIMENTS
                                                               if "-" in e)))
@click.option("--scale", type=float, default=0.2, show_default=True, help="Fraction of the full run count.")
@click.option("--out-dir", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--algo", "algos", multiple=True)
@click.option("--features", type=click.Path(dir_okay=False), help="NoC design feature CSV (259 x 4).")
@click.option("--cap", type=float, default=1000.0, show_default=True, help="Complexity cap for random instances.")
@click.option("--horizon", type=int, default=5000, show_default=True)
@click.option("--check", is_flag=True, help="Exit with status 3 when a threshold check fails.")
def reproduce_cmd(name, scale, out_dir, seed, algos, features, cap, horizon, check):
    """Re-run one of the experiments and write plot-ready CSVs."""
    checks = reproduce(name, out_dir, scale, seed, algos=_split(algos) or None, features=features,
                       cap=cap, horizon=horizon)
    for label, ok in checks.items():
        click.echo(f"{'PASS' if ok else 'FAIL'}  {label}")
    if check and not all(checks.values()):
        raise CheckFailed(f"{sum(not ok for ok in checks.values())} check(s) failed")


@cli.group("instance")
def instance_group():
    """Instance files."""


@instance_group.command("gen")
@click.option("--spec", "spec_name", required=True,
              type=click.Choice(["rotation", "gaussian-cube", "bernoulli-box", "covboost", "bai"]))
@click.option("--K", "K", type=int, default=5, show_default=True)
@click.option("--d", "d", type=int, default=2, show_default=True)
@click.option("--rho", type=float, help="Correlation for the rotation spec.")
@click.option("--cap", type=float, help="Complexity cap for random specs.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def instance_gen_cmd(spec_name, K, d, rho, cap, seed, out):
    """Write an instance JSON file."""
    path = gen_instance_file(spec_name, seed, out, K=K, d=d, rho=rho, cap=cap)
    click.echo(str(path))


def gen_instance_file(spec_name: str, seed: int, path, K: int = 5, d: int = 2,
                      rho: Optional[float] = None, cap: Optional[float] = None) -> Path:
    rng = np.random.default_rng(seed)
    if spec_name == "rotation":
        inst = rotation_instance(K, None if rho is None else correlated_sigma(rho))
    elif spec_name == "covboost":
        inst = load_covboost()
    elif spec_name == "bai":
        inst = two_answer_bai()
    else:
        inst = gen_random_instance(spec_name.replace("-", "_"), K, d, rng, complexity_cap=cap)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_instance(inst, path)
    return path


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cli.main(args=list(argv) if argv is not None else None, prog_name="psi", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.UsageError, click.Abort, ConfigError, InstanceError, MissingDataError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    except CheckFailed as exc:
        click.echo(f"check failed: {exc}", err=True)
        return EXIT_CHECK
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit status
        click.echo(f"runtime error: {type(exc).__name__}: {exc}", err=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
