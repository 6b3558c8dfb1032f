"""Unified training-and-search loop over one instance.

Each step samples ``samples_T`` tours from the transition matrix, keeps the
shortest one seen so far, trains actor and critic on a random ``batch_B``
subset, and every ``K`` steps pulls the edges of the step's shortest tour
toward the actor's update vector.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass

import numpy as np

from . import agent, policy
from .agent import ActorCritic, EpisodeBatch
from .exceptions import NumericError, ParameterError
from .policy import TransitionMatrix
from .tsp_core import (
    TspInstance,
    nearest_neighbor,
    reference_length,
    tour_edges,
    tour_length,
    tour_lengths,
)

log = logging.getLogger(__name__)

TIMING_KEYS = ("graph_gen", "training", "sampling", "inference", "matrix_update", "other")
INIT_MODES = ("uniform", "nn", "distance")
UPDATE_TARGETS = ("relative", "literal")
UPDATE_TOURS = ("step-best", "incumbent")


@dataclass
class SolverConfig:
    steps: int = 250
    samples_T: int = 250
    batch_B: int = 4
    epsilon: float = 0.05
    update_K: int = 1
    k_increment: int = 0
    k_cap: int = 0
    lr_actor: float = 3e-4
    lr_critic: float = 2e-4
    rmsprop_decay: float = 0.96
    rmsprop_eps: float = 1e-6
    init_mode: str = "uniform"
    boost: float = 0.5
    tau: float = 0.3
    update_target: str = "relative"
    update_tour: str = "step-best"
    start_city: int | None = None
    seed: int = 0
    forbidden: tuple = ()
    frozen: bool = False
    warm_baseline: bool = True

    def __post_init__(self):
        for name in ("steps", "samples_T", "batch_B", "update_K"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.k_increment < 0 or self.k_cap < 0:
            raise ParameterError("K schedule values must be nonnegative")
        if self.batch_B > self.samples_T:
            raise ParameterError("batch_B cannot exceed samples_T")
        if not self.frozen and not 0.0 < self.epsilon < 1.0:
            raise ParameterError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.init_mode not in INIT_MODES:
            raise ParameterError(f"init_mode must be one of {INIT_MODES}")
        if self.update_target not in UPDATE_TARGETS:
            raise ParameterError(f"update_target must be one of {UPDATE_TARGETS}")
        if self.update_tour not in UPDATE_TOURS:
            raise ParameterError(f"update_tour must be one of {UPDATE_TOURS}")
        self.forbidden = tuple(tuple(int(x) for x in e) for e in self.forbidden)

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["forbidden"] = [list(e) for e in self.forbidden]
        return d


def _coerce(name, value: str):
    fields = {f.name: f for f in dataclasses.fields(SolverConfig)}
    if name not in fields:
        raise ParameterError(f"unknown config key {name!r}")
    default = fields[name].default
    value = value.strip().strip('"').strip("'")
    if name == "start_city":
        return None if value.lower() in ("", "none", "random") else int(value)
    if name == "forbidden":
        pairs = []
        for item in filter(None, (s.strip() for s in value.split(";"))):
            i, j = item.replace(",", " ").split()
            pairs.append((int(i), int(j)))
        return tuple(pairs)
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"{name}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def parse_config(text: str) -> dict:
    """Parse flat ``key = value`` lines (``#`` comments allowed) into config overrides.

    ``forbidden`` takes ``i j; i j; ...`` pairs.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        try:
            out[key] = _coerce(key, value)
        except ValueError as exc:
            raise ParameterError(f"config line {lineno}: {exc}") from None
    return out


def load_config(path, **overrides) -> SolverConfig:
    with open(path) as fh:
        values = parse_config(fh.read())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SolverConfig(**values)


@dataclass
class StepRecord:
    step: int
    best_length: float
    batch_mean: float
    critic_mse: float


@dataclass
class SolveResult:
    best_tour: np.ndarray
    best_length: float
    history: list[StepRecord]
    timings: dict
    final_matrix: TransitionMatrix
    policy: np.ndarray
    steps_run: int = 0
    fallbacks: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def history_array(self) -> np.ndarray:
        return np.array(
            [(r.step, r.best_length, r.batch_mean, r.critic_mse) for r in self.history]
        )


class _Clock:
    def __init__(self):
        self.totals = dict.fromkeys(TIMING_KEYS, 0.0)

    def add(self, key, t0):
        t1 = time.perf_counter()
        self.totals[key] += t1 - t0
        return t1


def _argmin_tour(tours, lengths):
    """Index of the shortest tour; exact ties go to the lexicographically smallest perm."""
    best = lengths.min()
    tied = np.flatnonzero(lengths == best)
    if tied.size == 1:
        return int(tied[0])
    order = np.lexsort(tours[tied].T[::-1])
    return int(tied[order[0]])


def _k_schedule(config):
    k = config.update_K
    next_at = k
    while True:
        yield next_at
        if config.k_increment:
            k += config.k_increment
            if config.k_cap:
                k = min(k, config.k_cap)
        next_at += k


def initial_matrix(instance: TspInstance, config: SolverConfig) -> TransitionMatrix:
    if config.init_mode == "nn":
        seed_tour = nearest_neighbor(instance, 0)
        return policy.init_from_tour(instance.n, seed_tour, config.boost, config.forbidden)
    if config.init_mode == "distance":
        return policy.init_distance(instance.distances, config.tau, config.forbidden)
    return policy.init_uniform(instance.n, config.forbidden)


def update_vector(ac: ActorCritic, batch: EpisodeBatch, config: SolverConfig) -> np.ndarray:
    v = agent.actor_v(ac, batch)
    if config.update_target == "relative":
        v = agent.relative_targets(v)
    return v


def solve(instance: TspInstance, config: SolverConfig | None = None) -> SolveResult:
    """Run the training-and-search loop; deterministic for a fixed ``config.seed``.

    A numeric failure inside the loop stops it early; the incumbent found so
    far is still returned and ``result.error`` says what happened.
    """
    config = config or SolverConfig()
    clock = _Clock()
    t0 = time.perf_counter()
    n = instance.n
    instance.distances  # build the distance cache outside the loop
    net_rng, sample_rng, batch_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)
    )
    ac = ActorCritic.create(
        n, net_rng, config.lr_actor, config.lr_critic, config.rmsprop_decay, config.rmsprop_eps
    )
    P = initial_matrix(instance, config)

    best_tour = policy.sample_episode(P, int(sample_rng.integers(n)), sample_rng)
    best_len = tour_length(instance, best_tour)
    if config.init_mode == "nn":
        nn_tour = nearest_neighbor(instance, 0)
        nn_len = tour_length(instance, nn_tour)
        if nn_len < best_len:
            best_tour, best_len = nn_tour, nn_len
    if config.warm_baseline:
        # start the critic at the observed length so early advantages are centered
        ac.critic.biases[-1][:] = best_len
    t0 = clock.add("graph_gen", t0)

    history = []
    fallbacks = 0
    error = None
    schedule = _k_schedule(config)
    next_update = next(schedule)
    loop_start = t0
    for step in range(1, config.steps + 1):
        try:
            t0 = time.perf_counter()
            if config.start_city is None:
                starts = sample_rng.integers(n, size=config.samples_T)
            else:
                starts = np.full(config.samples_T, config.start_city)
            tours = policy.sample_episodes(P, starts, sample_rng)
            lengths = tour_lengths(instance, tours)
            j = _argmin_tour(tours, lengths)
            if lengths[j] < best_len:
                best_len = float(lengths[j])
                best_tour = tours[j].copy()
            t0 = clock.add("sampling", t0)

            pick = batch_rng.choice(config.samples_T, size=config.batch_B, replace=False)
            batch = EpisodeBatch(
                tours[pick], lengths[pick], agent.encode_episodes(instance, tours[pick])
            )
            agent.reinforce_step(ac, batch)
            mse, _ = agent.critic_step(ac, batch)
            t0 = clock.add("training", t0)

            if not config.frozen and step == next_update:
                v = update_vector(ac, batch, config)
                t0 = clock.add("inference", t0)
                target = tours[j] if config.update_tour == "step-best" else best_tour
                fallbacks += P.diagnostics["fallbacks"]
                P = policy.apply_update(P, v, tour_edges(target), config.epsilon)
                t0 = clock.add("matrix_update", t0)
                next_update = next(schedule)
        except NumericError as exc:
            error = f"step {step}: {exc}"
            log.warning("solve aborted: %s", error)
            break
        history.append(StepRecord(step, best_len, float(lengths.mean()), mse))

    fallbacks += P.diagnostics["fallbacks"]
    t0 = time.perf_counter()
    decoded = policy.greedy_decode(P, int(best_tour[0]))
    clock.add("inference", t0)
    loop_total = time.perf_counter() - loop_start
    inner = sum(clock.totals[k] for k in TIMING_KEYS if k not in ("graph_gen", "other"))
    clock.totals["other"] = max(loop_total - inner, 0.0)
    return SolveResult(
        best_tour=np.asarray(best_tour, dtype=np.intp),
        best_length=float(best_len),
        history=history,
        timings=dict(clock.totals),
        final_matrix=P,
        policy=decoded,
        steps_run=len(history),
        fallbacks=fallbacks,
        error=error,
    )


def solve_with_nn_seed(instance: TspInstance, config: SolverConfig | None = None) -> SolveResult:
    config = (config or SolverConfig()).replace(init_mode="nn")
    return solve(instance, config)


def timing_report(result: SolveResult) -> dict:
    """Mean seconds per step for each timing category, plus ``total``."""
    steps = max(result.steps_run, 1)
    report = {k: result.timings.get(k, 0.0) / steps for k in TIMING_KEYS}
    report["total"] = sum(report.values())
    return report


def gap_percent(length: float, reference: float) -> float:
    return 100.0 * (length / reference - 1.0)


def sweep(instance, samples_grid, steps_grid, config=None, reference=None) -> dict:
    """% gap from ``reference`` for every (samples_T, steps) cell, same seed in every cell.

    ``reference`` defaults to the exact optimum for n <= 20, otherwise to
    2-opt polished nearest neighbor.
    """
    samples_grid, steps_grid = list(samples_grid), list(steps_grid)
    if not samples_grid or not steps_grid:
        raise ParameterError("sweep grid must be nonempty")
    config = config or SolverConfig()
    if reference is None:
        reference, _ = reference_length(instance)
    out = {}
    for T in samples_grid:
        for steps in steps_grid:
            cfg = config.replace(samples_T=T, steps=steps, batch_B=min(config.batch_B, T))
            out[(T, steps)] = gap_percent(solve(instance, cfg).best_length, reference)
    return out


def grid_search_epsilon(instances, grid, config=None, references=None) -> tuple[float, dict]:
    """Mean % gap for each epsilon in ``grid``; returns the best epsilon and all means."""
    config = config or SolverConfig()
    if references is None:
        references = [reference_length(inst)[0] for inst in instances]
    means = {}
    for eps in grid:
        gaps = [
            gap_percent(solve(inst, config.replace(epsilon=eps, seed=k)).best_length, ref)
            for k, (inst, ref) in enumerate(zip(instances, references))
        ]
        means[eps] = float(np.mean(gaps))
    best = min(means, key=lambda e: (means[e], e))
    return best, means
