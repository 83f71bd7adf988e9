"""Campaign orchestration: the BO loop, the feedback loop, and their coupling.

Sim mode runs both loops deterministically, coupled at iteration boundaries:
after iteration t's acquisition and evaluation, the feedback event for t (if
one arrives) runs to completion before iteration t+1 reads the store. Live
mode runs the two loops as free threads; human labels arrive through the
service layer and never block the optimizer.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from steerbo.acquisition import CandidatePool, GammaSchedule, acquire_steered, make_pool
from steerbo.config import CampaignConfig, thread_rngs
from steerbo.gp import GpFitError, fit_gp, gp_thompson_sample
from steerbo.laplace import (
    fit_laplace_regression,
    lla_thompson_sample,
    posterior_to_snapshot,
    snapshot_to_posterior,
)
from steerbo.nn import MlpArchitecture, TrainingError, train_regression
from steerbo.preference import (
    PreferencePosterior,
    fit_laplace_preference,
    pref_thompson_sample,
    train_preference,
)
from steerbo.selectors import (
    generate_candidate_pairs,
    select_bald,
    select_ldiff,
    select_random,
    select_sdiff,
)
from steerbo.store import SnapshotStore, posterior_store
from steerbo.testbed import (
    ExpertOracle,
    FingerprintSet,
    Problem,
    expert_label,
    feedback_arrives,
    load_fingerprints,
    make_expert,
    make_problem,
    observations_matrix,
)
from steerbo.types import FeedbackSource, Observation, PreferenceExample, TraceRecord

log = logging.getLogger(__name__)

MLP_HIDDEN = (50, 50)
# The preference MAP must be near-stationary each event: an under-trained,
# warm-started fit lets score magnitudes drift upward across events until the
# acquisition is driven by junk. 1500 steps at 1e-2 converges at these sizes.
PREF_TRAIN_STEPS = 1500
PREF_TRAIN_LR = 1e-2
PREF_PRIOR_PRECISION = 1.0
# Covariance prior precision for score draws, set apart from the training
# ridge: at ~3e3 parameters a unit prior makes Thompson draws prior-noise
# dominated (std ~ 5 vs signal ~ 1.5), which un-steers the acquisition.
PREF_COV_PRIOR_PRECISION = 100.0
REG_TRAIN_STEPS = 500
REG_TRAIN_LR = 1e-3
REG_PRIOR_PRECISION = 1e-4
GP_TRAIN_STEPS = 50
GP_TRAIN_LR = 0.05


class CampaignError(RuntimeError):
    """Raised when the BO loop cannot continue (partial trace persisted)."""


@dataclass
class _FingerprintProblem:
    """Finite candidate problem: objective values are looked up, negated."""

    fingerprints: FingerprintSet
    evaluated: np.ndarray  # boolean mask over rows

    def remaining(self) -> tuple[FingerprintSet, np.ndarray]:
        avail = np.where(~self.evaluated)[0]
        subset = FingerprintSet(
            vectors=self.fingerprints.vectors[avail],
            identifiers=tuple(self.fingerprints.identifiers[i] for i in avail),
            values=None if self.fingerprints.values is None else self.fingerprints.values[avail],
        )
        return subset, avail


class _GpSurrogate:
    """Warm-started GP refit each iteration."""

    def __init__(self, kernel_kind: str, input_bounds):
        self.kernel_kind = kernel_kind
        self.input_bounds = None if kernel_kind == "tanimoto" else input_bounds
        self._params = None

    def fit(self, data: list[Observation]) -> None:
        try:
            post = fit_gp(
                data, self.kernel_kind, GP_TRAIN_STEPS, GP_TRAIN_LR, self._params,
                input_bounds=self.input_bounds,
            )
        except GpFitError:
            log.warning("GP fit failed; retrying once with doubled jitter")
            post = fit_gp(
                data, self.kernel_kind, GP_TRAIN_STEPS, GP_TRAIN_LR, self._params,
                base_jitter=2e-8, input_bounds=self.input_bounds,
            )
        self._params = post.params
        self._post = post

    def sample(self, pool: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return gp_thompson_sample(self._post, pool, rng)


class _LaplaceSurrogate:
    """Warm-started MLP refit plus a fresh Gaussian posterior each iteration."""

    def __init__(self, d: int, input_bounds):
        self.arch = MlpArchitecture(input_dim=d, hidden=MLP_HIDDEN)
        self.input_bounds = input_bounds
        self._theta = None

    def fit(self, data: list[Observation]) -> None:
        def attempt(init, rng):
            net = train_regression(
                data, self.arch, REG_TRAIN_STEPS, REG_TRAIN_LR, REG_PRIOR_PRECISION,
                rng=rng, init_theta=init, input_bounds=self.input_bounds,
            )
            return fit_laplace_regression(net, data)

        rng = self._fit_rng
        try:
            post = attempt(self._theta, rng)
        except TrainingError:
            log.warning("surrogate training failed; retrying once from a fresh init")
            post = attempt(None, rng)
        self._theta = post.network.theta_star
        self._post = post

    def fit_with_rng(self, data: list[Observation], rng: np.random.Generator) -> None:
        self._fit_rng = rng
        self.fit(data)

    def sample(self, pool: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return lla_thompson_sample(self._post, pool, rng=rng)


@dataclass
class CampaignState:
    """Everything the two loops share, plus per-run bookkeeping."""

    config: CampaignConfig
    problem: Optional[Problem]
    oracle: Optional[ExpertOracle]
    obs_store: SnapshotStore = field(default_factory=SnapshotStore)
    pref_store: SnapshotStore = field(default_factory=posterior_store)
    labels: list[PreferenceExample] = field(default_factory=list)
    trace: list[TraceRecord] = field(default_factory=list)
    fingerprint_problem: Optional[_FingerprintProblem] = None
    last_psi: Optional[np.ndarray] = None
    best_value: float = -np.inf
    best_x: Optional[np.ndarray] = None

    def observations(self) -> tuple[Observation, ...]:
        slot = self.obs_store.latest()
        return slot[1] if slot is not None else ()

    def preference_posterior(self) -> tuple[int, Optional[PreferencePosterior]]:
        slot = self.pref_store.latest()
        if slot is None:
            return -1, None
        version, snap = slot
        return version, PreferencePosterior(snapshot_to_posterior(snap), version)


def build_state(config: CampaignConfig) -> CampaignState:
    if config.is_fingerprint_campaign:
        fps = load_fingerprints(config.problem_name)
        if fps.values is None:
            raise CampaignError("fingerprint campaigns need a value column to optimize")
        if config.d and config.d != fps.bits:
            raise CampaignError(
                f"config d={config.d} does not match fingerprint width {fps.bits}"
            )
        state = CampaignState(config=config, problem=None, oracle=None)
        state.fingerprint_problem = _FingerprintProblem(
            fingerprints=fps, evaluated=np.zeros(len(fps), dtype=bool)
        )
    else:
        problem = make_problem(config.problem_name)
        state = CampaignState(config=config, problem=problem, oracle=None)
    if config.expert_kind in ("hint", "constraint"):
        state.oracle = make_expert(config.expert_kind, state.problem, config.constraint_c)
    return state


def _make_surrogate(config: CampaignConfig, d: int):
    bounds = None if config.is_fingerprint_campaign else (config.lb, config.ub)
    if config.surrogate_kind == "laplace_mlp":
        return _LaplaceSurrogate(d, bounds)
    return _GpSurrogate(config.kernel_kind, bounds)


def _initial_design(state: CampaignState, rng: np.random.Generator) -> tuple[Observation, ...]:
    cfg = state.config
    if state.fingerprint_problem is not None:
        fp = state.fingerprint_problem
        rows = rng.choice(len(fp.fingerprints), size=cfg.n_init, replace=False)
        obs = []
        for row in rows:
            fp.evaluated[row] = True
            obs.append(
                Observation(fp.fingerprints.vectors[row], -fp.fingerprints.values[row], 0)
            )
        return tuple(obs)
    points = state.problem.sample_uniform(cfg.n_init, rng)
    return tuple(Observation(x, state.problem.evaluate(x), 0) for x in points)


def _evaluate_candidate(state: CampaignState, pool: CandidatePool, idx: int, avail) -> float:
    if state.fingerprint_problem is not None:
        fp = state.fingerprint_problem
        original_row = int(avail[pool.indices[idx]])
        fp.evaluated[original_row] = True
        return -float(fp.fingerprints.values[original_row])
    return state.problem.evaluate(pool.points[idx])


def _record_best(state: CampaignState, obs: Observation) -> None:
    if obs.y > state.best_value:
        state.best_value = obs.y
        state.best_x = obs.x


def run_feedback_event(
    state: CampaignState, iteration: int, rng: np.random.Generator,
    presented: Optional[list[tuple[np.ndarray, np.ndarray, float]]] = None,
    labels: Optional[list[tuple]] = None,
) -> Optional[int]:
    """Select pairs, obtain labels, retrain, and publish a posterior snapshot.

    Returns the published snapshot version, or None when the event was
    skipped or failed (feedback must never crash the campaign).
    """
    try:
        new_examples = labels if labels is not None else _simulated_labels(state, iteration, rng)
        if not new_examples:
            return None
        state.labels.extend(new_examples)
        arch = MlpArchitecture(input_dim=state.labels[0].x0.shape[0], hidden=MLP_HIDDEN)
        bounds = None
        if state.fingerprint_problem is None:
            bounds = (state.config.lb, state.config.ub)
        # Fresh init each event: a warm start can inherit a fully collapsed
        # (all-ReLUs-dead) net from an early small-data fit and never recover.
        net = train_preference(
            state.labels, arch, PREF_TRAIN_STEPS, PREF_TRAIN_LR, PREF_PRIOR_PRECISION,
            rng=rng, init_psi=None, input_bounds=bounds,
        )
        post = fit_laplace_preference(
            net, state.labels, covariance_prior_precision=PREF_COV_PRIOR_PRECISION
        )
        snap = posterior_to_snapshot(post.posterior, len(state.labels))
        return state.pref_store.publish(snap)
    except Exception:
        log.exception("feedback event failed; campaign continues without it")
        return None


def _simulated_labels(
    state: CampaignState, iteration: int, rng: np.random.Generator
) -> list[PreferenceExample]:
    data = list(state.observations())
    if len(data) < 2 or state.oracle is None:
        return []
    pairs = generate_candidate_pairs(data, rng=rng)
    selected = _dispatch_selector(state, data, pairs, rng)
    examples = []
    for sp in selected:
        a, b = (sp.i, sp.j) if rng.random() < 0.5 else (sp.j, sp.i)
        xa, xb = data[a].x, data[b].x
        if np.array_equal(xa, xb):
            continue
        examples.append(
            PreferenceExample(
                x0=xa, x1=xb, label=expert_label(state.oracle, xa, xb),
                source=FeedbackSource.SIMULATED, created_at_iteration=iteration,
            )
        )
    return examples


def _dispatch_selector(state, data, pairs, rng):
    cfg = state.config
    k = cfg.pairs_per_event
    if cfg.selector == "random":
        return select_random(pairs, k, rng)
    points = observations_matrix(data)
    _, post = state.preference_posterior()
    if cfg.selector == "bald":
        return select_bald(points, pairs, post, k, rng=rng)
    if cfg.selector == "sdiff":
        return select_sdiff(points, pairs, post, k, rng=rng)
    return select_ldiff(points, pairs, post, k, rng=rng)


def bo_iteration(
    state: CampaignState,
    surrogate,
    t: int,
    rng: np.random.Generator,
    schedule: GammaSchedule,
) -> tuple[Observation, int]:
    """One BO step: fit, read preference snapshot, sample, acquire, evaluate."""
    data = list(state.observations())
    if isinstance(surrogate, _LaplaceSurrogate):
        surrogate.fit_with_rng(data, rng)
    else:
        surrogate.fit(data)

    version_used, pref_post = state.preference_posterior()

    avail = None
    if state.fingerprint_problem is not None:
        remaining, avail = state.fingerprint_problem.remaining()
        pool = make_pool(state.config, rng, remaining)
    else:
        pool = make_pool(state.config, rng)

    f_hat = surrogate.sample(pool.points, rng)
    r_hat = None
    if pref_post is not None:
        r_hat = pref_thompson_sample(pref_post, pool.points, rng=rng)
    gamma_t = schedule.value(t - 1)
    idx, x_next, _ = acquire_steered(f_hat, r_hat, gamma_t, pool)

    y = _evaluate_candidate(state, pool, idx, avail)
    obs = Observation(x_next, y, t)
    state.obs_store.publish(state.observations() + (obs,))
    _record_best(state, obs)
    return obs, version_used


def run_sim_campaign(
    config: CampaignConfig, out_dir: Optional[Path] = None
) -> tuple[Optional[Path], dict]:
    """Run a deterministic sim-mode campaign; returns (trace path, summary)."""
    if config.mode != "sim":
        raise CampaignError("run_sim_campaign requires mode=sim (use serve for live)")
    started = time.monotonic()
    state = build_state(config)
    rng_bo, rng_fb = thread_rngs(config.seed)
    surrogate = _make_surrogate(config, _dimension(state))
    schedule = GammaSchedule(config.gamma0, config.gamma_decay)

    init = _initial_design(state, rng_bo)
    state.obs_store.publish(init)
    for obs in init:
        _record_best(state, obs)

    aborted = None
    for t in range(1, config.horizon + 1):
        if state.fingerprint_problem is not None and state.fingerprint_problem.evaluated.all():
            log.info("candidate set exhausted after %d iterations", t - 1)
            break
        try:
            _, version_used = bo_iteration(state, surrogate, t, rng_bo, schedule)
        except (GpFitError, TrainingError, np.linalg.LinAlgError) as exc:
            aborted = CampaignError(f"surrogate fit failed at iteration {t}: {exc}")
            break
        if state.oracle is not None and feedback_arrives(rng_fb, config.p_fb):
            run_feedback_event(state, t, rng_fb)
        state.trace.append(
            TraceRecord(
                iteration=t,
                best_value=state.best_value,
                incumbent_norm=float(np.linalg.norm(state.best_x)),
                labels_total=len(state.labels),
                pref_posterior_version_used=version_used,
                wall_ms=0,  # deterministic replay: no wall clock in sim traces
            )
        )

    summary = _summary(state, started)
    trace_path = None
    if out_dir is not None:
        trace_path = write_outputs(out_dir, state.trace, summary)
    if aborted is not None:
        log.error("%s (partial trace persisted)", aborted)
        raise aborted
    return trace_path, summary


def _dimension(state: CampaignState) -> int:
    if state.fingerprint_problem is not None:
        return state.fingerprint_problem.fingerprints.bits
    return state.problem.d


def _summary(state: CampaignState, started: float) -> dict:
    final_labels = state.trace[-1].labels_total if state.trace else len(state.labels)
    return {
        "config": asdict(state.config),
        "seed": state.config.seed,
        "best_value": state.best_value,
        "best_x": None if state.best_x is None else [float(v) for v in state.best_x],
        "labels_total": final_labels,
        "versions_published": state.pref_store.version,
        "runtime_ms": int((time.monotonic() - started) * 1000),
    }


def write_outputs(out_dir: Path, trace: list[TraceRecord], summary: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / "trace.csv"
    with open(trace_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TraceRecord.CSV_HEADER + "\n")
        for row in trace:
            fh.write(row.csv_row() + "\n")
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return trace_path


def run_sweep(
    config: CampaignConfig, seeds: list[int], out_dir: Path
) -> tuple[Path, list[dict]]:
    """Run one campaign per seed and aggregate finals into a comparison CSV."""
    from dataclasses import replace

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        _, summary = run_sim_campaign(cfg, out_dir / f"seed_{seed}")
        summaries.append(summary)
    csv_path = out_dir / "sweep_summary.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(
            "seed,problem_name,surrogate_kind,selector,expert_kind,p_fb,gamma0,"
            "best_value,labels_total,versions_published,runtime_ms\n"
        )
        for s in summaries:
            cfg = s["config"]
            fh.write(
                f"{s['seed']},{cfg['problem_name']},{cfg['surrogate_kind']},"
                f"{cfg['selector']},{cfg['expert_kind']},{cfg['p_fb']},{cfg['gamma0']},"
                f"{s['best_value']!r},{s['labels_total']},{s['versions_published']},"
                f"{s['runtime_ms']}\n"
            )
    return csv_path, summaries


@dataclass
class PendingPair:
    """A comparison awaiting a human label, exposed through the service."""

    pair_id: str
    i: int
    j: int
    x0: np.ndarray
    x1: np.ndarray
    f0: float
    f1: float
    presented_at: float
    selector_score: float


class LiveCampaign:
    """Free-running BO and feedback threads plus the shared label bridge."""

    def __init__(self, config: CampaignConfig):
        if config.mode != "live":
            raise CampaignError("LiveCampaign requires mode=live")
        self.config = config
        self.state = build_state(config)
        self.rng_bo, self.rng_fb = thread_rngs(config.seed)
        self.schedule = GammaSchedule(config.gamma0, config.gamma_decay)
        self.surrogate = _make_surrogate(config, _dimension(self.state))

        self.pending: "OrderedDict[str, PendingPair]" = OrderedDict()
        self.labeled_ids: set[str] = set()
        self.label_queue: list[tuple[PendingPair, int]] = []
        self.presented_index_pairs: set[tuple[int, int]] = set()
        self._bridge_lock = threading.Lock()
        self._pair_counter = 0

        self.iteration = 0
        self.started = False
        self.finished = False
        self.stop_event = threading.Event()
        self._threads: list[threading.Thread] = []
        self.started_at = time.monotonic()

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        init = _initial_design(self.state, self.rng_bo)
        self.state.obs_store.publish(init)
        for obs in init:
            _record_best(self.state, obs)
        self.started = True
        bo = threading.Thread(target=self._bo_loop, name="bo-thread", daemon=True)
        fb = threading.Thread(target=self._feedback_loop, name="feedback-thread", daemon=True)
        self._threads = [bo, fb]
        bo.start()
        fb.start()

    def stop(self, timeout: float = 10.0) -> None:
        self.stop_event.set()
        for thread in self._threads:
            thread.join(timeout=timeout)

    # -- BO thread ---------------------------------------------------------

    def _bo_loop(self) -> None:
        for t in range(1, self.config.horizon + 1):
            if self.stop_event.is_set():
                break
            tick = time.monotonic()
            try:
                _, version_used = bo_iteration(
                    self.state, self.surrogate, t, self.rng_bo, self.schedule
                )
            except Exception:
                log.exception("BO iteration %d failed; stopping campaign", t)
                break
            self.iteration = t
            self.state.trace.append(
                TraceRecord(
                    iteration=t,
                    best_value=self.state.best_value,
                    incumbent_norm=float(np.linalg.norm(self.state.best_x)),
                    labels_total=len(self.state.labels),
                    pref_posterior_version_used=version_used,
                    wall_ms=int((time.monotonic() - tick) * 1000),
                )
            )
        self.finished = True

    # -- feedback thread ---------------------------------------------------

    def _feedback_loop(self) -> None:
        while not self.stop_event.is_set() and not self.finished:
            drained = self._drain_labels()
            if drained:
                run_feedback_event(
                    self.state, self.iteration, self.rng_fb, labels=drained
                )
            self._replenish_pending()
            time.sleep(0.05)

    def _drain_labels(self) -> list[PreferenceExample]:
        with self._bridge_lock:
            batch, self.label_queue = self.label_queue, []
        examples = []
        for pending, label in batch:
            examples.append(
                PreferenceExample(
                    x0=pending.x0, x1=pending.x1, label=label,
                    source=FeedbackSource.HUMAN,
                    created_at_iteration=self.iteration,
                )
            )
        return examples

    def _replenish_pending(self) -> None:
        data = list(self.state.observations())
        if len(data) < 2:
            return
        k = self.config.pairs_per_event
        with self._bridge_lock:
            deficit = k - len(self.pending)
        if deficit <= 0:
            return
        pairs = generate_candidate_pairs(data, rng=self.rng_fb)
        fresh = [p for p in pairs if p not in self.presented_index_pairs]
        if not fresh:
            return
        selected = _dispatch_selector_pairs(self, data, fresh, deficit)
        now = time.time()
        new_entries = []
        for sp in selected:
            a, b = (sp.i, sp.j) if self.rng_fb.random() < 0.5 else (sp.j, sp.i)
            if np.array_equal(data[a].x, data[b].x):
                continue
            self._pair_counter += 1
            pid = f"pair-{self._pair_counter:06d}"
            new_entries.append(
                PendingPair(
                    pair_id=pid, i=sp.i, j=sp.j,
                    x0=data[a].x, x1=data[b].x,
                    f0=data[a].y, f1=data[b].y,
                    presented_at=now, selector_score=sp.beta_score,
                )
            )
            self.presented_index_pairs.add((sp.i, sp.j))
        with self._bridge_lock:
            for entry in new_entries:
                self.pending[entry.pair_id] = entry

    # -- service bridge ----------------------------------------------------

    def pending_pairs(self, limit: int) -> list[PendingPair]:
        with self._bridge_lock:
            return list(self.pending.values())[: max(limit, 0)]

    def submit_label(self, pair_id: str, label: int) -> dict:
        """Returns an ack dict; raises KeyError (unknown) or ValueError (dup)."""
        with self._bridge_lock:
            if pair_id in self.labeled_ids:
                raise ValueError(pair_id)
            if pair_id not in self.pending:
                raise KeyError(pair_id)
            pending = self.pending.pop(pair_id)
            self.labeled_ids.add(pair_id)
            self.label_queue.append((pending, label))
        return {"accepted": True, "posterior_version": self.state.pref_store.version}


def _dispatch_selector_pairs(live: LiveCampaign, data, pairs, k):
    cfg = live.config
    if cfg.selector == "random":
        return select_random(pairs, k, live.rng_fb)
    points = observations_matrix(data)
    _, post = live.state.preference_posterior()
    if cfg.selector == "bald":
        return select_bald(points, pairs, post, k, rng=live.rng_fb)
    if cfg.selector == "sdiff":
        return select_sdiff(points, pairs, post, k, rng=live.rng_fb)
    return select_ldiff(points, pairs, post, k, rng=live.rng_fb)
