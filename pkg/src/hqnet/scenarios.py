"""Experiment registry: every scenario turns a :class:`ScenarioConfig` into CSV rows.

Rows share a fixed leading set of columns (``COLUMNS``) followed by
``series`` (the algorithm, scheme or path a row belongs to) and any
scenario-specific extras.  Cells that do not apply are left empty.

Trials are seeded from ``SeedSequence([seed, crc32(scenario), trial])``.
The same trial index therefore sees the same engine seed and the same
environment draws at every parameter point and for every algorithm, which
keeps comparisons between rows paired.
"""
from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .distribution import CENTRALIZED, DP_CEPD, DP_DEPD, OP_FAULTS, SCHEMES, WSTATE
from .engine import (RATE_TIME_UNIT_MS, ROUTING_ALGORITHMS, EngineConfig, Metrics,
                     ScenarioError, run)
from .noise import MAX_LOSS_NOISE, EnvParams, channel_quality, wstate_param_map
from .routing import ALGORITHMS
from .topology import (Topology, build_distributed_cellular, build_hierarchical_cellular,
                       build_parallel_chains, control_plane_load, maintenance_cost)

COLUMNS = ("scenario", "seed", "param_name", "param_value", "fidelity_mean", "fidelity_stderr",
           "throughput_qps", "pairs_consumed_mean", "route_time_ms_mean", "success_rate")

EQUIVALENT_ENV = EnvParams(depolarizing_rate=0.1, dephasing_rate=0.1, loss_init=0.01,
                           loss_noise=1e-3)
EPD_ENV = EnvParams(depolarizing_rate=0.1, dephasing_rate=0.01, loss_init=1e-4, loss_noise=1e-5)
DEPHASING_STDS = (0.096, 0.144, 0.192, 0.241, 0.290)
LOSS_INIT_STDS = (0.041, 0.049, 0.053, 0.058, 0.063)
LOSS_NOISE_STDS = (0.0031, 0.0034, 0.0038, 0.0044, 0.0051)
SWEEP_STD_FIELDS = ("dephasing_std", "loss_init_std", "loss_noise_std")
ENV_FIELDS = ("depolarizing_rate", "dephasing_rate", "loss_init", "loss_noise")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a scenario run needs.  ``None`` means "use the scenario default"."""
    scenario: str
    seed: int = 0
    trials: int | None = None
    sessions: int | None = None
    workers: int = 1
    # topology
    rings: int = 2
    length_km: float = 100.0
    rings_range: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    # environment
    depolarizing_rate: float | None = None
    dephasing_rate: float | None = None
    loss_init: float | None = None
    loss_noise: float | None = None
    dephasing_std: tuple[float, ...] = DEPHASING_STDS
    loss_init_std: tuple[float, ...] = LOSS_INIT_STDS
    loss_noise_std: tuple[float, ...] = LOSS_NOISE_STDS
    rate_time_unit_ms: float = RATE_TIME_UNIT_MS
    group_spread: float = 0.2
    # routing
    algorithms: tuple[str, ...] = ROUTING_ALGORITHMS
    recursion_n: int = 2
    calibration_probes: int = 50
    # scheme
    scheme: str = DP_CEPD
    op_fault: str = "mixed"
    # sweeps
    memory_ratios: tuple[float, ...] = tuple(range(1, 11))
    qps_values: tuple[float, ...] = tuple(range(0, 1001, 100))
    loss_noise_values: tuple[float, ...] = tuple(round(0.02 * k, 2) for k in range(11))
    steps: int = 6

    def __post_init__(self):
        entry = REGISTRY.get(self.scenario)
        if entry is None:
            raise ScenarioError(f"unknown scenario {self.scenario!r}; "
                                f"choose from {', '.join(sorted(REGISTRY))}")
        if self.trials is not None and self.trials < 1:
            raise ScenarioError("trials must be >= 1")
        if self.sessions is not None and self.sessions < 1:
            raise ScenarioError("sessions must be >= 1")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ScenarioError("seed must fit in an unsigned 64-bit integer")
        if self.workers < 1:
            raise ScenarioError("workers must be >= 1")
        if self.rings < 1 or any(r < 1 for r in self.rings_range):
            raise ScenarioError("ring counts must be >= 1")
        if self.length_km <= 0:
            raise ScenarioError("length_km must be > 0")
        for name in ENV_FIELDS:
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= (1.0 if name != "loss_noise" else math.inf):
                raise ScenarioError(f"{name}={v} out of range")
        for name in SWEEP_STD_FIELDS:
            if not getattr(self, name) or any(s < 0 for s in getattr(self, name)):
                raise ScenarioError(f"{name} needs non-negative values")
        if self.rate_time_unit_ms <= 0:
            raise ScenarioError("rate_time_unit_ms must be > 0")
        if not self.algorithms or any(a not in ALGORITHMS for a in self.algorithms):
            raise ScenarioError(f"algorithms must be drawn from {', '.join(ALGORITHMS)}")
        if self.scheme not in SCHEMES:
            raise ScenarioError(f"unknown scheme {self.scheme!r}")
        if self.op_fault not in OP_FAULTS:
            raise ScenarioError(f"op_fault must be one of {', '.join(OP_FAULTS)}")
        if not self.memory_ratios or any(n < 1 for n in self.memory_ratios):
            raise ScenarioError("memory_ratios must be >= 1")
        if any(q < 0 for q in self.qps_values):
            raise ScenarioError("qps_values must be >= 0")
        if any(not 0 <= v <= MAX_LOSS_NOISE for v in self.loss_noise_values):
            raise ScenarioError(f"loss_noise_values must lie in [0, {MAX_LOSS_NOISE}]")
        if self.steps < 2:
            raise ScenarioError("steps must be >= 2")
        if self.group_spread <= 0 or self.group_spread * 4 >= 1:
            raise ScenarioError("group_spread must lie in (0, 1/4)")

    @property
    def trial_count(self) -> int:
        return self.trials if self.trials is not None else REGISTRY[self.scenario].trials

    @property
    def session_count(self) -> int:
        return self.sessions if self.sessions is not None else REGISTRY[self.scenario].sessions

    def base_env(self) -> EnvParams:
        default = REGISTRY[self.scenario].env
        vals = {k: getattr(self, k) if getattr(self, k) is not None else getattr(default, k)
                for k in ENV_FIELDS}
        return EnvParams(length_km=self.length_km, **vals)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# trial plumbing


def trial_seeds(seed: int, scenario: str, trial: int) -> tuple[int, np.random.Generator]:
    """(engine seed, environment-sampling generator) for one trial."""
    ss = np.random.SeedSequence([seed, zlib.crc32(scenario.encode()), trial])
    engine_ss, env_ss = ss.spawn(2)
    return int(engine_ss.generate_state(1, np.uint64)[0]), np.random.default_rng(env_ss)


@dataclass(frozen=True)
class Task:
    key: tuple
    topology: Topology
    config: EngineConfig
    seed: int


def _run_task(task: Task) -> tuple[tuple, Metrics]:
    return task.key, run(task.topology, task.config, task.seed).metrics


def execute(tasks: Sequence[Task], workers: int = 1) -> dict[tuple, list[Metrics]]:
    """Run every task; results are grouped by ``key[:-1]`` (the last element is the trial)."""
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        done = [_run_task(t) for t in tasks]
    grouped: dict[tuple, list[tuple[Any, Metrics]]] = {}
    for key, m in done:
        grouped.setdefault(key[:-1], []).append((key[-1], m))
    return {k: [m for _, m in sorted(v, key=lambda kv: kv[0])] for k, v in grouped.items()}


def aggregate(ms: Iterable[Metrics]) -> dict[str, float]:
    """Pool trials: session-level samples are concatenated, throughput is averaged."""
    ms = list(ms)
    fid = [f for m in ms for f in m.fidelities]
    pairs = [p for m in ms for p in m.pairs_consumed]
    times = [t for m in ms for t in m.route_times]
    sessions = sum(m.sessions for m in ms)
    n = len(fid)
    return {
        "fidelity_mean": float(np.mean(fid)) if fid else math.nan,
        "fidelity_stderr": float(np.std(fid, ddof=1) / math.sqrt(n)) if n > 1 else math.nan,
        "throughput_qps": float(np.mean([m.throughput_qps for m in ms])) if ms else math.nan,
        "pairs_consumed_mean": float(np.mean(pairs)) if pairs else math.nan,
        "route_time_ms_mean": float(np.mean(times)) if times else math.nan,
        "success_rate": sum(m.succeeded for m in ms) / sessions if sessions else math.nan,
    }


def _row(cfg: ScenarioConfig, name: str, value, series: str = "", stats: dict | None = None,
         **extra) -> dict[str, Any]:
    row = {c: math.nan for c in COLUMNS}
    row.update(scenario=cfg.scenario, seed=cfg.seed, param_name=name, param_value=value)
    row.update(stats or {})
    row["series"] = series
    row.update(extra)
    return row


def _engine(cfg: ScenarioConfig, **kw) -> EngineConfig:
    base = dict(scheme=cfg.scheme, routing="cer", sessions=cfg.session_count,
                op_fault=cfg.op_fault, rate_time_unit_ms=cfg.rate_time_unit_ms,
                recursion_n=cfg.recursion_n, calibration_probes=cfg.calibration_probes,
                trace=False)
    base.update(kw)
    return EngineConfig(**base)


def _hier(cfg: ScenarioConfig, env: EnvParams | None = None) -> Topology:
    return build_hierarchical_cellular(cfg.rings, cfg.length_km, env or cfg.base_env())


# ---------------------------------------------------------------------------
# environment sampling


@dataclass(frozen=True)
class Draws:
    """Standard-normal draws per device and per quantum channel, fixed per trial."""
    dephasing: dict[str, float]
    loss_init: dict[tuple[str, str], float]
    loss_noise: dict[tuple[str, str], float]

    @classmethod
    def sample(cls, t: Topology, rng: np.random.Generator) -> "Draws":
        devs = sorted(t.devices)
        chans = sorted(tuple(sorted(k)) for k in t.qchannels)
        return cls(dict(zip(devs, rng.standard_normal(len(devs)))),
                   dict(zip(chans, rng.standard_normal(len(chans)))),
                   dict(zip(chans, rng.standard_normal(len(chans)))))


def diversify(t: Topology, base: EnvParams, draws: Draws, dephasing_std: float = 0.0,
              loss_init_std: float = 0.0, loss_noise_std: float = 0.0) -> Topology:
    """Per-device dephasing and per-channel loss drawn around ``base``, clamped to range."""
    def dev(d):
        v = base.dephasing_rate + dephasing_std * draws.dephasing[d.id]
        return base.with_(dephasing_rate=float(np.clip(v, 0.0, 1.0)), length_km=d.env.length_km)

    def chan(c):
        k = tuple(sorted(c.key))
        li = base.loss_init + loss_init_std * draws.loss_init[k]
        ln = base.loss_noise + loss_noise_std * draws.loss_noise[k]
        return base.with_(loss_init=float(np.clip(li, 0.0, 1.0)),
                          loss_noise=float(np.clip(ln, 0.0, MAX_LOSS_NOISE)),
                          length_km=c.length_km)

    return t.with_env(dev, chan)


# ---------------------------------------------------------------------------
# scenarios


def _maintenance_cost(cfg: ScenarioConfig) -> list[dict]:
    rows = []
    for r in cfg.rings_range:
        h = maintenance_cost(build_hierarchical_cellular(r))
        d = maintenance_cost(build_distributed_cellular(r))
        rows.append(_row(cfg, "rings", r, "cost", hierarchical_cost=h, distributed_cost=d,
                         ratio=d / h))
    return rows


def _control_overhead(cfg: ScenarioConfig) -> list[dict]:
    return [_row(cfg, "concurrent_qps", q, "control-plane",
                 control_load_bytes_per_s=control_plane_load(q)) for q in cfg.qps_values]


def _epd_comparison(cfg: ScenarioConfig) -> list[dict]:
    """W-state CEPD over the memory-ratio sweep against both double-photon schemes.

    W-state distribution is run as double-photon CEPD with the mapped
    parameters of :func:`hqnet.noise.wstate_param_map` for a 4-hop path.
    """
    base = cfg.base_env()
    hops = 4
    tasks = []
    for trial in range(cfg.trial_count):
        seed, _ = trial_seeds(cfg.seed, cfg.scenario, trial)
        greedy = _engine(cfg, routing="greedy", calibration_probes=0)
        tasks.append(Task((DP_CEPD, 0, trial), _hier(cfg, base), replace(greedy, scheme=DP_CEPD),
                          seed))
        dist = build_distributed_cellular(cfg.rings, cfg.length_km, base)
        tasks.append(Task((DP_DEPD, 0, trial), dist, replace(greedy, scheme=DP_DEPD), seed))
        for n in cfg.memory_ratios:
            mapped = wstate_param_map(base, n, hops)
            tasks.append(Task((WSTATE, n, trial), _hier(cfg, mapped),
                              replace(greedy, scheme=DP_CEPD), seed))
    res = execute(tasks, cfg.workers)
    ref = {s: aggregate(res[s, 0]) for s in (DP_CEPD, DP_DEPD)}
    rows = []
    for n in cfg.memory_ratios:
        w = aggregate(res[WSTATE, n])
        for series, stats in ((WSTATE, w), (DP_CEPD, ref[DP_CEPD]), (DP_DEPD, ref[DP_DEPD])):
            extra = {}
            if series == WSTATE:
                extra = {f"gain_vs_{s}_pct": 100 * (w["fidelity_mean"] / ref[s]["fidelity_mean"] - 1)
                         for s in (DP_CEPD, DP_DEPD)}
            rows.append(_row(cfg, "memory_ratio", n, series, stats, **extra))
    return rows


def _routing_equivalent(cfg: ScenarioConfig) -> list[dict]:
    t = _hier(cfg)
    tasks = []
    for trial in range(cfg.trial_count):
        seed, _ = trial_seeds(cfg.seed, cfg.scenario, trial)
        for alg in cfg.algorithms:
            tasks.append(Task((alg, trial), t, _engine(cfg, routing=alg), seed))
    res = execute(tasks, cfg.workers)
    return [_row(cfg, "std", 0.0, alg, aggregate(res[(alg,)])) for alg in cfg.algorithms]


def diversified_tasks(cfg: ScenarioConfig, sweeps: Sequence[tuple[str, Sequence[float]]],
                      algorithms: Callable[[str, float], Sequence[str]]) -> list[Task]:
    """Tasks for one-at-a-time std-dev sweeps.  ``algorithms(name, std)`` picks the runs."""
    base = cfg.base_env()
    t0 = build_hierarchical_cellular(cfg.rings, cfg.length_km, base)
    tasks = []
    for trial in range(cfg.trial_count):
        seed, rng = trial_seeds(cfg.seed, cfg.scenario, trial)
        draws = Draws.sample(t0, rng)
        for name, stds in sweeps:
            for std in stds:
                t = diversify(t0, base, draws, **{name: std})
                for alg in algorithms(name, std):
                    tasks.append(Task((name, std, alg, trial), t, _engine(cfg, routing=alg),
                                      seed))
    return tasks


def _routing_diversified(cfg: ScenarioConfig) -> list[dict]:
    sweeps = [(name, getattr(cfg, name)) for name in SWEEP_STD_FIELDS]
    res = execute(diversified_tasks(cfg, sweeps, lambda name, std: cfg.algorithms), cfg.workers)
    return [_row(cfg, name, std, alg, aggregate(res[name, std, alg]))
            for name, stds in sweeps for std in stds for alg in cfg.algorithms]


def _routing_cost(cfg: ScenarioConfig) -> list[dict]:
    t = _hier(cfg)
    tasks = []
    for trial in range(cfg.trial_count):
        seed, _ = trial_seeds(cfg.seed, cfg.scenario, trial)
        for alg in cfg.algorithms:
            tasks.append(Task((alg, trial), t, _engine(cfg, routing=alg), seed))
    res = execute(tasks, cfg.workers)
    return [_row(cfg, "algorithm", alg, alg, aggregate(res[(alg,)]),
                 quantum_link_count=t.link_count()) for alg in cfg.algorithms]


def _cer_integrated(cfg: ScenarioConfig) -> list[dict]:
    base = cfg.base_env()
    t0 = build_hierarchical_cellular(cfg.rings, cfg.length_km, base)
    grid = [(a, b, c) for a in cfg.dephasing_std for b in cfg.loss_init_std
            for c in cfg.loss_noise_std]
    tasks = []
    for trial in range(cfg.trial_count):
        seed, rng = trial_seeds(cfg.seed, cfg.scenario, trial)
        draws = Draws.sample(t0, rng)
        for point in grid:
            t = diversify(t0, base, draws, *point)
            tasks.append(Task((point, trial), t, _engine(cfg, routing="cer"), seed))
    res = execute(tasks, cfg.workers)
    return [_row(cfg, "dephasing_std;loss_init_std;loss_noise_std",
                 ";".join(f"{v:g}" for v in p), "cer", aggregate(res[(p,)]),
                 dephasing_std=p[0], loss_init_std=p[1], loss_noise_std=p[2]) for p in grid]


def _noise_limitation(cfg: ScenarioConfig) -> list[dict]:
    base = cfg.base_env()
    tasks = []
    for trial in range(cfg.trial_count):
        seed, _ = trial_seeds(cfg.seed, cfg.scenario, trial)
        for ln in cfg.loss_noise_values:
            t = _hier(cfg, base.with_(loss_noise=ln))
            tasks.append(Task((ln, trial), t, _engine(cfg, routing="cer"), seed))
    res = execute(tasks, cfg.workers)
    return [_row(cfg, "loss_noise", ln, "cer", aggregate(res[(ln,)]),
                 channel_quality=channel_quality(base.loss_init, ln))
            for ln in cfg.loss_noise_values]


def _channel_vs_dephasing(cfg: ScenarioConfig) -> list[dict]:
    """Channel quality 1 -> 0.85 against dephasing 0 -> 0.15, everything else noiseless."""
    base = cfg.base_env()
    fractions = np.linspace(0.0, 1.0, cfg.steps)
    points = []
    for f in fractions:
        points.append(("channel_quality", base.with_(loss_init=0.2 * f, loss_noise=0.02 * f,
                                                     dephasing_rate=0.0)))
        points.append(("dephasing_rate", base.with_(loss_init=0.0, loss_noise=0.0,
                                                    dephasing_rate=0.15 * f)))
    tasks = []
    for trial in range(cfg.trial_count):
        seed, _ = trial_seeds(cfg.seed, cfg.scenario, trial)
        for i, (name, env) in enumerate(points):
            tasks.append(Task((i, trial), _hier(cfg, env), _engine(cfg, routing="greedy"), seed))
    res = execute(tasks, cfg.workers)
    rows = []
    for i, (name, env) in enumerate(points):
        value = (channel_quality(env.loss_init, env.loss_noise) if name == "channel_quality"
                 else env.dephasing_rate)
        stats = aggregate(res[(i,)])
        rows.append(_row(cfg, name, round(value, 12), name, stats,
                         delivered_fidelity=stats["fidelity_mean"] * stats["success_rate"]))
    return sorted(rows, key=lambda r: (r["param_name"], -r["param_value"]
                                       if r["param_name"] == "channel_quality"
                                       else r["param_value"]))


ENV_PATHS = {"A": 0, "B": 1, "C": 2}
ENV_PATH_REPEATERS = (4, 5, 4)


def env_importance_topology(cfg: ScenarioConfig, group: int) -> Topology:
    """Three parallel chains; interference scales as B < A < C, spreading with ``group``."""
    base = cfg.base_env()
    t = build_parallel_chains(ENV_PATH_REPEATERS, cfg.length_km, base)
    spread = cfg.group_spread * (group + 1)
    scale = {"A": 1 + spread, "B": 1 - spread, "C": 1 + 2 * spread}

    def scaled(env: EnvParams, path: str | None) -> EnvParams:
        if path is None:
            return env
        k = scale[path]
        return env.with_(dephasing_rate=min(1.0, env.dephasing_rate * k),
                         loss_init=min(1.0, env.loss_init * k),
                         loss_noise=min(MAX_LOSS_NOISE, env.loss_noise * k))

    def path_of(dev_id: str) -> str | None:
        return dev_id[2] if dev_id.startswith("R_") else None

    return t.with_env(lambda d: scaled(d.env, path_of(d.id)),
                      lambda c: scaled(c.env, path_of(c.a) or path_of(c.b)))


def env_importance_path(label: str) -> tuple[str, ...]:
    n = ENV_PATH_REPEATERS[ENV_PATHS[label]]
    return ("U_A", *(f"R_{label}{m}" for m in range(1, n + 1)), "U_B")


def _env_importance(cfg: ScenarioConfig) -> list[dict]:
    tasks = []
    for trial in range(cfg.trial_count):
        seed, _ = trial_seeds(cfg.seed, cfg.scenario, trial)
        for group in (1, 2, 3):
            t = env_importance_topology(cfg, group)
            for label in ENV_PATHS:
                ec = _engine(cfg, routing="greedy", fixed_path=env_importance_path(label),
                             calibration_probes=0)
                tasks.append(Task((group, label, trial), t, ec, seed))
    res = execute(tasks, cfg.workers)
    rows = []
    for group in (1, 2, 3):
        stats = {label: aggregate(res[group, label]) for label in ENV_PATHS}
        for label in ENV_PATHS:
            gap = stats["B"]["fidelity_mean"] - stats[label]["fidelity_mean"]
            rows.append(_row(cfg, "group", group, f"path-{label}", stats[label],
                             repeaters=ENV_PATH_REPEATERS[ENV_PATHS[label]],
                             gap_from_path_B=gap))
    return rows


# ---------------------------------------------------------------------------
# registry


COMMON_KEYS = frozenset({"seed", "trials", "workers"})
ENGINE_KEYS = frozenset({"sessions", "rings", "length_km", "rate_time_unit_ms", "op_fault",
                         "recursion_n", "calibration_probes", *ENV_FIELDS})


@dataclass(frozen=True)
class ScenarioSpec:
    runner: Callable[[ScenarioConfig], list[dict]]
    keys: frozenset[str]
    env: EnvParams = EQUIVALENT_ENV
    trials: int = 1
    sessions: int = 100
    description: str = ""


REGISTRY: dict[str, ScenarioSpec] = {
    "maintenance-cost": ScenarioSpec(
        _maintenance_cost, COMMON_KEYS | {"rings_range"},
        description="preparator count of both architectures against ring count"),
    "control-overhead": ScenarioSpec(
        _control_overhead, COMMON_KEYS | {"qps_values"},
        description="control-plane bytes per second against offered load"),
    "epd-comparison": ScenarioSpec(
        _epd_comparison, (COMMON_KEYS | ENGINE_KEYS | {"memory_ratios"}) - {"recursion_n"},
        env=EPD_ENV, trials=4, sessions=1000,
        description="W-state CEPD over memory ratio against double-photon CEPD and DEPD"),
    "routing-equivalent": ScenarioSpec(
        _routing_equivalent, COMMON_KEYS | ENGINE_KEYS | {"algorithms", "scheme"},
        trials=2, sessions=100,
        description="all routing algorithms on a uniform-parameter network"),
    "routing-diversified": ScenarioSpec(
        _routing_diversified,
        COMMON_KEYS | ENGINE_KEYS | {"algorithms", "scheme", *SWEEP_STD_FIELDS},
        trials=100, sessions=100,
        description="routing algorithms under per-device and per-channel parameter spread"),
    "routing-cost": ScenarioSpec(
        _routing_cost, COMMON_KEYS | ENGINE_KEYS | {"algorithms", "scheme"},
        trials=4, sessions=100,
        description="pairs consumed and routing time of every algorithm"),
    "cer-integrated": ScenarioSpec(
        _cer_integrated, COMMON_KEYS | ENGINE_KEYS | {"scheme", *SWEEP_STD_FIELDS},
        trials=2, sessions=50,
        description="CER over the combined std-dev grid"),
    "noise-limitation": ScenarioSpec(
        _noise_limitation, COMMON_KEYS | ENGINE_KEYS | {"scheme", "loss_noise_values"},
        trials=2, sessions=50,
        description="CER as loss noise approaches the channel limit"),
    "channel-vs-dephasing": ScenarioSpec(
        _channel_vs_dephasing, COMMON_KEYS | ENGINE_KEYS | {"scheme", "steps"},
        env=EnvParams(depolarizing_rate=0.1), trials=2, sessions=100,
        description="fidelity against channel quality and against dephasing"),
    "env-importance": ScenarioSpec(
        _env_importance, (COMMON_KEYS | ENGINE_KEYS | {"scheme", "group_spread"}) - {"recursion_n"},
        trials=4, sessions=200,
        description="a long quiet path against two short noisy ones"),
}

CONFIG_FIELDS = {f.name for f in fields(ScenarioConfig)} - {"scenario"}


def check_keys(scenario: str, keys: Iterable[str]) -> None:
    entry = REGISTRY.get(scenario)
    if entry is None:
        raise ScenarioError(f"unknown scenario {scenario!r}")
    for k in keys:
        if k not in CONFIG_FIELDS:
            raise ScenarioError(f"unknown key {k!r}")
        if k not in entry.keys:
            raise ScenarioError(f"key {k!r} is not used by scenario {scenario!r}")


def run_scenario(cfg: ScenarioConfig) -> list[dict[str, Any]]:
    entry = REGISTRY[cfg.scenario]
    if cfg.scheme not in CENTRALIZED:
        raise ScenarioError(f"scenario {cfg.scenario!r} runs on the hierarchical topology; "
                            f"scheme {cfg.scheme!r} is a distributed scheme")
    return entry.runner(cfg)


def header(rows: Sequence[dict]) -> list[str]:
    extra: list[str] = []
    for r in rows:
        for k in r:
            if k not in COLUMNS and k not in extra:
                extra.append(k)
    return list(COLUMNS) + extra


def format_cell(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return f"{v:.10g}"
    return str(v)
