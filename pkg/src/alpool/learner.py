"""Pool-based active-learning loop with closest-to-hyperplane querying.

The loop: label a small random initial set, estimate the positive-cost
amplification ``pa`` from that set once, then repeatedly train an
asymmetric-cost SVM (c_plus = pa * c_minus), query the unlabeled batch
nearest the hyperplane, and acquire labels from an oracle.  ``pa`` is
never re-estimated after initialization — estimating it from the initial
set, rather than from the growing labeled set, is the point of the design.

A prediction-stability stop signal is evaluated every iteration.  By
default it only annotates the trace (so full learning curves can be
drawn past the stopping point); with ``halt_on_stop`` the loop exits as
soon as the signal fires.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from . import stopping, svm
from .data import Dataset, LabeledInstance, to_csr
from .metrics import metrics_from_predictions
from .stopping import StopConfig, StoppingState

STRATEGIES = ("closest", "random")


class InitSetError(RuntimeError):
    """The initial sample could not reach both classes within its budget."""


class OracleError(RuntimeError):
    """The label provider failed or went away mid-run."""


class Oracle(Protocol):
    def labels_for(self, indices: Sequence[int]) -> list[int]: ...


class SimulatedOracle:
    """Reads gold labels straight from the pool dataset."""

    def __init__(self, pool: Dataset):
        self._pool = pool

    def labels_for(self, indices: Sequence[int]) -> list[int]:
        return [self._pool.instances[i].label for i in indices]


@dataclass(frozen=True)
class AlConfig:
    """Loop settings.  ``init_size``/``batch_size`` of None mean
    max(50, 1% of pool) and max(10, 1% of pool) respectively.

    The pa candidate grid is cross-validated on the initial set; when
    ``grid_add_class_ratio`` is set the initial set's negative:positive
    ratio joins the grid as an extra candidate.
    """

    init_size: int | None = None
    batch_size: int | None = None
    pa_grid: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0)
    grid_add_class_ratio: bool = True
    pa_cv_folds: int = 5
    c_minus: float = 1.0
    seed: int = 0
    max_iterations: int | None = None

    def __post_init__(self):
        if self.init_size is not None and self.init_size < 2:
            raise ValueError("init_size must be >= 2")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.pa_grid:
            raise ValueError("pa_grid must be non-empty")
        if self.pa_cv_folds < 2:
            raise ValueError("pa_cv_folds must be >= 2")
        if self.c_minus <= 0:
            raise ValueError("c_minus must be positive")

    def resolved(self, pool_size: int) -> "AlConfig":
        init = self.init_size if self.init_size is not None else max(50, round(0.01 * pool_size))
        batch = self.batch_size if self.batch_size is not None else max(10, round(0.01 * pool_size))
        return replace(self, init_size=min(init, pool_size), batch_size=batch)


@dataclass
class PoolState:
    """Labeled/unlabeled partition of one run's pool, plus the query history."""

    labels: dict[int, int] = field(default_factory=dict)
    unlabeled: set[int] = field(default_factory=set)
    query_log: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)

    def acquire(self, iteration: int, indices: Sequence[int], labels: Sequence[int]) -> None:
        for idx, lab in zip(indices, labels):
            if idx in self.labels:
                raise ValueError(f"index {idx} already labeled")
            self.labels[idx] = lab
            self.unlabeled.discard(idx)
        self.query_log.append((iteration, tuple(indices)))

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.array(sorted(self.labels), dtype=np.int64)


@dataclass
class IterationRecord:
    iteration: int
    labeled_count: int
    batch: tuple[int, ...]
    agreement: float | None
    stopped: bool
    converged: bool
    bias: float
    weight_norm: float
    model: svm.SvmModel | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "labeled_count": self.labeled_count,
            "batch": list(self.batch),
            "agreement": self.agreement,
            "stopped": self.stopped,
            "converged": self.converged,
            "bias": self.bias,
            "weight_norm": self.weight_norm,
        }


@dataclass
class RunTrace:
    """Everything one active-learning run did, iteration by iteration."""

    strategy: str
    seed: int
    pa: float | None
    init_indices: tuple[int, ...]
    records: list[IterationRecord] = field(default_factory=list)
    stopped_at: int | None = None
    halted: bool = False
    aborted: bool = False

    def final_model(self) -> svm.SvmModel | None:
        return self.records[-1].model if self.records else None

    def to_records(self) -> list[dict]:
        header = {
            "strategy": self.strategy,
            "seed": self.seed,
            "pa": self.pa,
            "init_indices": list(self.init_indices),
            "stopped_at": self.stopped_at,
            "halted": self.halted,
            "aborted": self.aborted,
        }
        return [header] + [rec.to_dict() for rec in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.to_records())


def draw_init_set(
    pool: Dataset, init_size: int, seed: int, oracle: Oracle
) -> tuple[list[int], list[int]]:
    """Uniform initial sample, extended until it contains both classes.

    Follows a seeded permutation of the pool: the first ``init_size``
    entries are labeled, then singles are added (each costing a label)
    until both classes appear or the budget of 5x init_size runs out.
    """
    n = len(pool)
    if init_size > n:
        raise ValueError("init_size exceeds pool size")
    order = np.random.default_rng(seed).permutation(n)
    indices = [int(i) for i in order[:init_size]]
    labels = list(oracle.labels_for(indices))
    budget = min(5 * init_size, n)
    cursor = init_size
    while len(set(labels)) < 2 and cursor < budget:
        extra = int(order[cursor])
        labels.extend(oracle.labels_for([extra]))
        indices.append(extra)
        cursor += 1
    if len(set(labels)) < 2:
        raise InitSetError(
            f"no {'+1' if 1 not in labels else '-1'} instance found within "
            f"{cursor} samples; enlarge init_size"
        )
    return indices, labels


def class_ratio_pa(labels: Sequence[int]) -> float:
    positives = sum(1 for lab in labels if lab == 1)
    negatives = len(labels) - positives
    return negatives / positives


def estimate_pa(init_set: list[LabeledInstance], config: AlConfig) -> float:
    """Pick pa by cross-validated F-measure on the initial labeled set.

    Candidates come from ``config.pa_grid`` (plus the init set's class
    ratio); the one with the highest mean held-out F wins, smallest on
    ties.  If any CV fold is degenerate (no positive test instance, or a
    single-class training part), the class-ratio heuristic
    pa = #negatives / #positives is returned instead.
    """
    labels = [inst.label for inst in init_set]
    if len(set(labels)) < 2:
        raise ValueError("initial set must contain both classes")
    ratio = class_ratio_pa(labels)
    candidates = sorted(set(config.pa_grid) | ({ratio} if config.grid_add_class_ratio else set()))

    k = min(config.pa_cv_folds, len(init_set))
    folds = [set(f.tolist()) for f in _cv_folds(len(init_set), k, config.seed)]
    y = np.array(labels)
    for test in folds:
        test_idx = np.array(sorted(test))
        train_idx = np.array([i for i in range(len(init_set)) if i not in test])
        if not (y[test_idx] == 1).any() or len(set(y[train_idx].tolist())) < 2:
            return ratio

    dim = max((int(i.features.indices[-1]) + 1 for i in init_set if i.features.nnz), default=1)
    best_pa, best_f = None, -1.0
    for candidate in candidates:
        scores = []
        for test in folds:
            train = [init_set[i] for i in range(len(init_set)) if i not in test]
            model = svm.train(
                train, svm.TrainConfig(c_minus=config.c_minus, pa=candidate), dimension=dim
            )
            test_insts = [init_set[i] for i in sorted(test)]
            preds = np.array([svm.predict(model, inst.features) for inst in test_insts])
            truth = np.array([inst.label for inst in test_insts])
            scores.append(metrics_from_predictions(truth, preds).f1)
        mean_f = float(np.mean(scores))
        if mean_f > best_f:
            best_pa, best_f = candidate, mean_f
    assert best_pa is not None
    return best_pa


def _cv_folds(n: int, k: int, seed: int):
    from .data import split_folds

    return split_folds(n, k, seed)


def select_batch(
    model: svm.SvmModel,
    pool: Dataset,
    unlabeled,
    batch_size: int,
    pool_csr=None,
) -> list[int]:
    """The unlabeled indices nearest the hyperplane, closest first.

    Ranking by |w.x + b| is equivalent to ranking by geometric distance
    because w is fixed across the candidates.  Ties break toward the
    lower index.
    """
    candidates = np.asarray(sorted(unlabeled), dtype=np.int64)
    if candidates.size == 0:
        raise ValueError("no unlabeled instances to select from")
    if pool_csr is None:
        pool_csr = to_csr([pool.instances[i] for i in candidates], pool.dimension)
        distances = np.abs(svm.decision_values(model, pool_csr))
    else:
        distances = np.abs(svm.decision_values(model, pool_csr[candidates]))
    order = np.lexsort((candidates, distances))
    take = min(batch_size, candidates.size)
    return [int(candidates[i]) for i in order[:take]]


def select_random(unlabeled, batch_size: int, seed: int, iteration: int) -> list[int]:
    """Uniform batch without replacement, deterministic per (seed, iteration)."""
    candidates = np.asarray(sorted(unlabeled), dtype=np.int64)
    if candidates.size == 0:
        raise ValueError("no unlabeled instances to select from")
    rng = np.random.default_rng([seed, iteration])
    order = rng.permutation(candidates.size)
    take = min(batch_size, candidates.size)
    return [int(candidates[i]) for i in order[:take]]


def run(
    pool: Dataset,
    config: AlConfig,
    oracle: Oracle,
    stop_config: StopConfig,
    strategy: str = "closest",
    halt_on_stop: bool = False,
    cancel: threading.Event | None = None,
    observer=None,
) -> RunTrace:
    """Run one active-learning session over the pool.

    Every iteration trains on the current labeled set, evaluates the stop
    criterion, records a trace entry, and (unless the pool is exhausted,
    ``max_iterations`` is reached, or a latched stop halts the loop)
    queries the next batch from the oracle.  Intermediate trainings are
    warm-started from the previous dual solution; the exhaustion-point
    training is always cold and in pool order, so a run that consumes the
    whole pool ends on exactly the model a single full-pool training
    would produce.

    ``observer(trace, record)`` is invoked after each record is appended,
    from the loop's own execution context; live dashboards hook in here.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    cfg = config.resolved(len(pool))
    if len(pool) <= 1:
        raise ValueError("pool too small")

    trace = RunTrace(strategy=strategy, seed=cfg.seed, pa=None, init_indices=())
    state = PoolState(unlabeled=set(range(len(pool))))
    try:
        init_indices, init_labels = draw_init_set(pool, cfg.init_size, cfg.seed, oracle)
    except OracleError:
        trace.aborted = True
        return trace
    state.acquire(-1, init_indices, init_labels)
    trace.init_indices = tuple(init_indices)

    init_instances = [
        LabeledInstance(pool.instances[i].features, lab)
        for i, lab in zip(init_indices, init_labels)
    ]
    pa = estimate_pa(init_instances, cfg)
    trace.pa = pa
    train_cfg = svm.TrainConfig(c_minus=cfg.c_minus, pa=pa)

    pool_csr = to_csr(pool.instances, pool.dimension)
    stop_seed_cfg = stop_config
    stop_state: StoppingState | None = None
    if state.unlabeled:
        stop_state = stopping.init_stop_set(pool, state.unlabeled, stop_seed_cfg)

    alpha_by_index: dict[int, float] = {}
    iteration = 0
    while True:
        labeled = state.labeled_indices
        exhausted = not state.unlabeled
        warm = None
        if not exhausted and alpha_by_index:
            warm = np.array([alpha_by_index.get(int(i), 0.0) for i in labeled])
        train_data = [
            LabeledInstance(pool.instances[int(i)].features, state.labels[int(i)])
            for i in labeled
        ]
        model = svm.train(train_data, train_cfg, dimension=pool.dimension, warm_start=warm)
        alpha_by_index = {int(i): float(a) for i, a in zip(labeled, model.alphas)}

        stopped = False
        agreement_score = None
        if stop_state is not None:
            stopped = stopping.update(
                stop_state, model, pool, iteration, stop_seed_cfg, pool_csr=pool_csr
            )
            if stop_state.recent_agreements:
                agreement_score = float(stop_state.recent_agreements[-1])
            if stopped and trace.stopped_at is None:
                trace.stopped_at = stop_state.stopped_at

        record = IterationRecord(
            iteration=iteration,
            labeled_count=len(labeled),
            batch=(),
            agreement=agreement_score,
            stopped=stopped,
            converged=model.converged,
            bias=model.bias,
            weight_norm=float(np.linalg.norm(model.weights)),
            model=model,
        )
        trace.records.append(record)
        if observer is not None:
            observer(trace, record)

        if cancel is not None and cancel.is_set():
            trace.aborted = True
            break
        if stopped and halt_on_stop:
            trace.halted = True
            break
        if exhausted:
            break
        if cfg.max_iterations is not None and iteration + 1 > cfg.max_iterations:
            break

        if strategy == "closest":
            batch = select_batch(model, pool, state.unlabeled, cfg.batch_size, pool_csr=pool_csr)
        else:
            batch = select_random(state.unlabeled, cfg.batch_size, cfg.seed, iteration)
        # recorded at selection time so a trace exported while labels are
        # still outstanding already shows what this model queried
        record.batch = tuple(batch)
        try:
            batch_labels = oracle.labels_for(batch)
        except OracleError:
            trace.aborted = True
            break
        state.acquire(iteration, batch, batch_labels)
        iteration += 1

    return trace
