"""Multi-seed experiment runner and the action-generalization-gap calculator."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .augmentation import AugmentationSpec, AugmentedEnv, build_augmentation
from .curves import (CurveWriter, LearningCurve, curve_auc, read_curve, steps_to_threshold)
from .dqn import DqnConfig, train_dqn
from .envs import ChainMDP, Env, make_env
from .qcore import AgentHyperparams, train_tabular
from .seeding import STREAMS, derive_seed

log = logging.getLogger(__name__)

ARMS = ("baseline", "oracle", "unmodified")
AGENTS = ("tabular", "dqn")
METRICS = ("steps_to_threshold", "auc")

DQN_LEARNING_RATE = 5e-4
DEFAULT_BUDGETS = {"cartpole": 100_000, "pendulum": 40_000, "chain": 5_000}
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class ExperimentConfig:
    """One arm of an experiment: an agent/augmentation pairing run over many seeds.

    ``None`` for ``budget``, ``alpha``, ``epsilon_decay_fraction`` and
    ``threshold`` means "use the environment/agent default".
    """

    env: str
    name: str = ""
    augmentation: AugmentationSpec = AugmentationSpec()
    agent: str = "dqn"
    arm: str = "unmodified"
    seeds: Tuple[int, ...] = tuple(range(10))
    budget: Optional[int] = None
    chain_n: int = 5
    alpha: Optional[float] = None
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: Optional[float] = None
    batch_size: int = 64
    replay_capacity: int = 50_000
    learning_starts: int = 1_000
    target_sync_interval: int = 500
    train_interval: int = 1
    hidden: Tuple[int, ...] = (128, 128)
    grad_clip: float = 10.0
    normalize_by_clique: bool = False
    dtype: str = "float32"
    threshold: Optional[float] = None
    window: int = 20

    def __post_init__(self):
        if not self.name:
            object.__setattr__(self, "name", self.arm)
        validate_config(self)

    # resolved defaults

    @property
    def run_budget(self) -> int:
        return self.budget if self.budget is not None else DEFAULT_BUDGETS[self.env]

    @property
    def learning_rate(self) -> float:
        if self.alpha is not None:
            return self.alpha
        return 0.1 if self.agent == "tabular" else DQN_LEARNING_RATE

    @property
    def decay_fraction(self) -> float:
        if self.epsilon_decay_fraction is not None:
            return self.epsilon_decay_fraction
        return 0.5 if self.agent == "tabular" else 0.1

    @property
    def solve_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return build_env(self).spec.reward_threshold

    def hyperparams(self) -> AgentHyperparams:
        decay = max(1, int(round(self.decay_fraction * self.run_budget)))
        return AgentHyperparams(self.learning_rate, self.gamma, self.epsilon_start,
                                self.epsilon_end, decay)


def validate_config(cfg: ExperimentConfig) -> None:
    """Raise ValueError for configs that cannot run; called before any run starts."""
    from .envs import ENVIRONMENTS

    if cfg.env not in ENVIRONMENTS:
        raise ValueError(f"unknown env {cfg.env!r}; choose from {sorted(ENVIRONMENTS)}")
    if cfg.arm not in ARMS:
        raise ValueError(f"unknown arm {cfg.arm!r}; choose from {ARMS}")
    if cfg.agent not in AGENTS:
        raise ValueError(f"unknown agent {cfg.agent!r}; choose from {AGENTS}")
    if cfg.agent == "tabular" and cfg.env != "chain":
        raise ValueError(f"the tabular agent needs enumerable states; env {cfg.env!r} has none")
    if cfg.arm == "baseline" and cfg.augmentation.kind != "none":
        raise ValueError(f"baseline arm runs the original action space, "
                         f"but augmentation = {cfg.augmentation.kind}")
    if cfg.arm == "oracle" and cfg.augmentation.kind != "none":
        explicit_identity = (cfg.augmentation.kind == "random"
                             and cfg.augmentation.random_k == "identity")
        if not explicit_identity:
            _, k = build_augmentation(cfg.augmentation, 2)
            if k.is_identity():
                raise ValueError("oracle arm needs a non-identity similarity matrix "
                                 f"(augmentation {cfg.augmentation})")
    if not cfg.seeds:
        raise ValueError("at least one seed is required")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ValueError("seeds must be distinct")
    if any(s < 0 for s in cfg.seeds):
        raise ValueError("seeds are unsigned integers")
    if cfg.budget is not None and cfg.budget < 0:
        raise ValueError("budget must be non-negative")
    if cfg.window < 1:
        raise ValueError("window must be >= 1")
    if cfg.chain_n < 2:
        raise ValueError("chain_n must be >= 2")
    if cfg.epsilon_decay_fraction is not None and not 0 < cfg.epsilon_decay_fraction <= 1:
        raise ValueError("epsilon_decay_fraction must lie in (0, 1]")
    if not cfg.hidden or any(h < 1 for h in cfg.hidden):
        raise ValueError("hidden layer sizes must be positive")
    if not cfg.grad_clip > 0:
        raise ValueError("grad_clip must be positive")
    # delegate the remaining range checks to the component constructors
    cfg_h = AgentHyperparams(cfg.alpha if cfg.alpha is not None else 1e-3, cfg.gamma,
                             cfg.epsilon_start, cfg.epsilon_end, 1)
    if cfg.agent == "dqn":
        DqnConfig(hyperparams=cfg_h, batch_size=cfg.batch_size,
                  replay_capacity=cfg.replay_capacity, learning_starts=cfg.learning_starts,
                  target_sync_interval=cfg.target_sync_interval,
                  train_interval=cfg.train_interval, dtype=cfg.dtype)


def build_env(cfg: ExperimentConfig) -> Env:
    if cfg.env == "chain":
        return ChainMDP(cfg.chain_n)
    return make_env(cfg.env)


def config_hash(configs: Sequence[ExperimentConfig]) -> str:
    payload = json.dumps([_config_dict(c) for c in configs], sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _config_dict(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["seeds"] = list(cfg.seeds)
    d["hidden"] = list(cfg.hidden)
    # resolved defaults, so a change of default changes the hash
    d["resolved"] = {"budget": cfg.run_budget, "alpha": cfg.learning_rate,
                     "epsilon_decay_steps": cfg.hyperparams().epsilon_decay_steps}
    return d


def run_single(cfg: ExperimentConfig, seed: int, csv_path: Optional[Path] = None) -> LearningCurve:
    """One seeded run of one arm, streaming episodes to ``csv_path`` when given."""
    base = build_env(cfg)
    spec = cfg.augmentation if cfg.arm != "baseline" else AugmentationSpec()
    env, k = AugmentedEnv.from_spec(base, spec, derive_seed(seed, "sampling"))
    budget = cfg.run_budget
    hp = cfg.hyperparams()
    writer = CurveWriter(csv_path) if csv_path is not None else None
    try:
        if cfg.agent == "tabular":
            # the tabular learner has no separate "unmodified" mode: it is the
            # oracle update with an identity matrix
            from .augmentation import identity_similarity
            k_used = k if cfg.arm == "oracle" else identity_similarity(env.action_count)
            curve = LearningCurve()
            result = train_tabular(env, k_used, hp, budget, seed)
            for i in range(len(result)):
                curve.append(result.steps[i], result.returns[i], result.epsilons[i], None)
                if writer:
                    writer.write_episode(curve)
            return curve
        dqn_cfg = DqnConfig(hyperparams=hp, batch_size=cfg.batch_size,
                            replay_capacity=cfg.replay_capacity,
                            learning_starts=cfg.learning_starts,
                            target_sync_interval=cfg.target_sync_interval,
                            train_interval=cfg.train_interval, oracle=cfg.arm == "oracle",
                            k=k, hidden=tuple(cfg.hidden), grad_clip=cfg.grad_clip,
                            normalize_by_clique=cfg.normalize_by_clique, dtype=cfg.dtype)
        curve, _ = train_dqn(env, dqn_cfg, budget, seed,
                             on_episode=writer.write_episode if writer else None)
        return curve
    finally:
        if writer:
            writer.close()


def _run_task(args):
    cfg, seed, path = args
    t0 = time.perf_counter()
    try:
        curve = run_single(cfg, seed, path)
        return cfg.name, seed, curve, None, time.perf_counter() - t0
    except Exception as exc:  # recorded in the manifest; other runs continue
        log.exception("run %s seed %d failed", cfg.name, seed)
        return cfg.name, seed, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0


@dataclass
class ExperimentResult:
    out_dir: Path
    curves: Dict[Tuple[str, int], LearningCurve] = field(default_factory=dict)
    failures: Dict[Tuple[str, int], str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def arm_curves(self, name: str) -> List[LearningCurve]:
        return [c for (n, _), c in sorted(self.curves.items()) if n == name]


def check_seed_streams(seeds: Sequence[int]) -> None:
    """Every derived stream of every seed must be distinct within an experiment."""
    seen = {}
    for s in seeds:
        for stream in STREAMS:
            v = derive_seed(s, stream)
            if v in seen:
                raise ValueError(f"derived seed collision: {(s, stream)} and {seen[v]}")
            seen[v] = (s, stream)


def run_experiment(configs: Sequence[ExperimentConfig], out_dir, workers: int = 1,
                   config_text: Optional[Sequence[str]] = None) -> ExperimentResult:
    """Run every (arm, seed) pair; write one CSV per run plus a manifest.

    Layout: ``out_dir/<arm name>/seed_<seed>.csv`` and ``out_dir/manifest.json``.
    Failed runs are recorded in the manifest and do not stop the others.
    """
    if isinstance(configs, ExperimentConfig):
        configs = [configs]
    configs = list(configs)
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ValueError(f"arm names must be unique, got {names}")
    for cfg in configs:
        validate_config(cfg)
    check_seed_streams(sorted({s for c in configs for s in c.seeds}))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("")
    probe.unlink()

    tasks = []
    for cfg in configs:
        arm_dir = out / cfg.name
        arm_dir.mkdir(exist_ok=True)
        for seed in cfg.seeds:
            tasks.append((cfg, seed, arm_dir / f"seed_{seed}.csv"))

    result = ExperimentResult(out)
    timings = {}
    if workers <= 1:
        outcomes = map(_run_task, tasks)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        outcomes = pool.map(_run_task, tasks)
    try:
        for name, seed, curve, err, seconds in outcomes:
            timings[(name, seed)] = seconds
            if err is None:
                result.curves[(name, seed)] = curve
            else:
                result.failures[(name, seed)] = err
    finally:
        if workers > 1:
            pool.shutdown()

    write_manifest(out, configs, result, timings, config_text)
    return result


def write_manifest(out: Path, configs, result: ExperimentResult, timings, config_text=None):
    arms = []
    for i, cfg in enumerate(configs):
        runs = []
        for seed in cfg.seeds:
            key = (cfg.name, seed)
            entry = {"seed": seed, "path": f"{cfg.name}/seed_{seed}.csv"}
            if key in result.failures:
                entry["status"] = "failed"
                entry["error"] = result.failures[key]
            else:
                entry["status"] = "ok"
                entry["episodes"] = len(result.curves[key])
            runs.append(entry)
        arm = {"name": cfg.name, "env": cfg.env, "arm": cfg.arm, "agent": cfg.agent,
               "augmentation": dataclasses.asdict(cfg.augmentation),
               "budget": cfg.run_budget, "threshold": cfg.solve_threshold,
               "window": cfg.window, "seeds": list(cfg.seeds), "runs": runs}
        if config_text is not None:
            arm["config"] = config_text[i]
        arms.append(arm)
    manifest = {
        "config_hash": config_hash(configs),
        "arms": arms,
        # everything below is machine/time specific and excluded from the hash
        "metadata": {
            "created_unix": time.time(),
            "host": platform.node(),
            "python": platform.python_version(),
            "seconds_per_run": {f"{n}/seed_{s}": round(t, 3) for (n, s), t in
                                sorted(timings.items())},
        },
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8")


def load_arm_dir(arm_dir) -> Tuple[List[LearningCurve], Optional[dict]]:
    """Curves of every ``seed_*.csv`` in ``arm_dir`` (seed order) plus its manifest entry."""
    arm_dir = Path(arm_dir)
    if not arm_dir.is_dir():
        raise FileNotFoundError(f"{arm_dir} is not a directory")
    paths = sorted(arm_dir.glob("seed_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise FileNotFoundError(f"no seed_*.csv files in {arm_dir}")
    curves = [read_curve(p) for p in paths]
    entry = None
    manifest = arm_dir.parent / MANIFEST
    if manifest.exists():
        data = json.loads(manifest.read_text(encoding="utf-8"))
        for arm in data.get("arms", []):
            if arm["name"] == arm_dir.name:
                entry = arm
    return curves, entry


@dataclass
class GapReport:
    metric: str
    arm_a: str
    arm_b: str
    median_a: float
    iqr_a: float
    median_b: float
    iqr_b: float
    gap: Optional[float]
    ratio: Optional[float]
    censored_a: int = 0
    censored_b: int = 0
    ratio_lower_bound: bool = False
    diagnostic: str = ""

    CSV_HEADER = "metric,arm_a,arm_b,median_a,iqr_a,median_b,iqr_b,gap,ratio,censored_a,censored_b"

    def csv_row(self) -> str:
        def f(x):
            return "" if x is None else repr(float(x))
        return ",".join([self.metric, self.arm_a, self.arm_b, f(self.median_a), f(self.iqr_a),
                         f(self.median_b), f(self.iqr_b), f(self.gap), f(self.ratio),
                         str(self.censored_a), str(self.censored_b)])

    def to_csv(self) -> str:
        return self.CSV_HEADER + "\n" + self.csv_row() + "\n"

    def to_text(self) -> str:
        lines = [
            f"metric: {self.metric}",
            f"{self.arm_a}: median {self.median_a:.6g} (IQR {self.iqr_a:.6g}), "
            f"censored {self.censored_a}",
            f"{self.arm_b}: median {self.median_b:.6g} (IQR {self.iqr_b:.6g}), "
            f"censored {self.censored_b}",
        ]
        if self.gap is None:
            lines.append("gap: undefined")
        else:
            bound = " (lower bound)" if self.ratio_lower_bound else ""
            lines.append(f"gap: {self.gap:.6g}")
            lines.append(f"ratio: {self.ratio:.6g}{bound}" if self.ratio is not None
                         else "ratio: undefined")
        if self.diagnostic:
            lines.append(f"note: {self.diagnostic}")
        return "\n".join(lines) + "\n"


def _median_iqr(values: Sequence[float]) -> Tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    q25, q50, q75 = np.percentile(v, [25, 50, 75])
    return float(q50), float(q75 - q25)


def run_metric(curve: LearningCurve, metric: str, budget: int, threshold: Optional[float] = None,
               window: int = 20) -> Tuple[float, bool]:
    """(value, censored) of one run. Unreached thresholds are censored at ``budget``."""
    if metric == "auc":
        return curve_auc(curve, budget), False
    if metric == "steps_to_threshold":
        if threshold is None:
            raise ValueError("steps_to_threshold needs a threshold")
        hit = steps_to_threshold(curve, threshold, window)
        return (float(budget), True) if hit is None else (float(hit), False)
    raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")


def generalization_gap(oracle_runs: Sequence[LearningCurve], agent_runs: Sequence[LearningCurve],
                       metric: str, budget: int, threshold: Optional[float] = None,
                       window: int = 20, names: Tuple[str, str] = ("oracle", "agent")) -> GapReport:
    """Compare a reference arm (``oracle_runs``) against an agent arm.

    steps_to_threshold: gap = median(agent) - median(reference), positive when
    the agent is slower. auc: gap = median(reference) - median(agent),
    positive when the agent does worse. ratio = median(agent) / median(reference)
    for both.
    """
    if len(oracle_runs) < 2 or len(agent_runs) < 2:
        raise ValueError("a gap needs at least 2 seeds per arm")
    a = [run_metric(c, metric, budget, threshold, window) for c in oracle_runs]
    b = [run_metric(c, metric, budget, threshold, window) for c in agent_runs]
    med_a, iqr_a = _median_iqr([v for v, _ in a])
    med_b, iqr_b = _median_iqr([v for v, _ in b])
    cens_a = sum(c for _, c in a)
    cens_b = sum(c for _, c in b)
    report = GapReport(metric, names[0], names[1], med_a, iqr_a, med_b, iqr_b, None, None,
                       cens_a, cens_b)
    if metric == "steps_to_threshold":
        if cens_a == len(a):
            report.diagnostic = (f"every {names[0]} run is censored at budget {budget}; "
                                 "the gap is undefined")
            return report
        report.gap = med_b - med_a
        report.ratio = med_b / med_a if med_a != 0 else None
        if 2 * cens_b >= len(b):
            report.ratio_lower_bound = True
            report.diagnostic = (f"{cens_b}/{len(b)} {names[1]} runs censored at budget "
                                 f"{budget}; gap and ratio are lower bounds")
        if 2 * cens_a >= len(a):
            report.diagnostic = (report.diagnostic + "; " if report.diagnostic else "") + (
                f"{cens_a}/{len(a)} {names[0]} runs censored at budget {budget}")
    else:
        report.gap = med_a - med_b
        report.ratio = med_b / med_a if med_a != 0 else None
    return report
