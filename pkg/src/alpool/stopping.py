"""Prediction-stability stopping rule.

A fixed random sample of the unlabeled pool (the stop set) is predicted by
each successive model; when consecutive models agree on it strongly enough
for long enough, the run is declared stable and annotation can stop.
Agreement is Cohen's kappa rather than raw percent agreement because the
latter saturates when one class dominates.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import Dataset, to_csr
from .svm import SvmModel, decision_values, predict_values


@dataclass(frozen=True)
class StopConfig:
    stop_set_size: int = 2000
    agreement_threshold: float = 0.99
    window: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.stop_set_size < 1:
            raise ValueError("stop_set_size must be >= 1")
        if not 0.0 < self.agreement_threshold <= 1.0:
            raise ValueError("agreement_threshold must be in (0, 1]")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass
class StoppingState:
    """Mutable per-run record: the static stop set plus the agreement ring."""

    stop_set: np.ndarray
    previous_predictions: np.ndarray | None = None
    recent_agreements: deque = field(default_factory=deque)
    stopped_at: int | None = None

    def __post_init__(self):
        self.stop_set = np.asarray(self.stop_set, dtype=np.int64)
        self.stop_set.setflags(write=False)


def init_stop_set(pool: Dataset, unlabeled, config: StopConfig) -> StoppingState:
    """Sample the stop set from the unlabeled pool.

    Sampled instances stay in the pool and remain eligible for querying;
    the set itself never changes for the lifetime of the run.
    """
    unlabeled = np.asarray(sorted(unlabeled), dtype=np.int64)
    if unlabeled.size == 0:
        raise ValueError("cannot draw a stop set from an empty unlabeled pool")
    size = min(config.stop_set_size, unlabeled.size)
    rng = np.random.default_rng(config.seed)
    chosen = np.sort(rng.choice(unlabeled, size=size, replace=False))
    return StoppingState(stop_set=chosen, recent_agreements=deque(maxlen=config.window))


def agreement(prev: np.ndarray, curr: np.ndarray) -> float:
    """Cohen's kappa between two +1/-1 prediction vectors.

    kappa = (A_o - A_e) / (1 - A_e) with A_o the observed agreement rate and
    A_e the chance rate from the two vectors' label marginals.  When A_e is
    1 (both vectors constant and same-class) kappa is 1 iff the vectors are
    identical.
    """
    prev = np.asarray(prev)
    curr = np.asarray(curr)
    if prev.shape != curr.shape or prev.ndim != 1 or prev.size == 0:
        raise ValueError("prediction vectors must be equal-length and non-empty")
    observed = float(np.mean(prev == curr))
    p1 = float(np.mean(prev == 1))
    p2 = float(np.mean(curr == 1))
    expected = p1 * p2 + (1.0 - p1) * (1.0 - p2)
    if expected == 1.0:
        return 1.0 if np.array_equal(prev, curr) else 0.0
    return (observed - expected) / (1.0 - expected)


def update(
    state: StoppingState,
    model: SvmModel,
    pool: Dataset,
    iteration: int,
    config: StopConfig,
    pool_csr: sp.csr_matrix | None = None,
) -> bool:
    """Record this iteration's stop-set predictions; True means stop.

    The stop signal latches: after the first firing iteration the state
    keeps reporting stop (and remembering it in ``stopped_at``) no matter
    how later agreement scores move.
    """
    if pool_csr is None:
        pool_csr = to_csr([pool.instances[i] for i in state.stop_set], pool.dimension)
        values = decision_values(model, pool_csr)
    else:
        values = decision_values(model, pool_csr[state.stop_set])
    preds = predict_values(values)

    if state.previous_predictions is not None:
        state.recent_agreements.append(agreement(state.previous_predictions, preds))
    state.previous_predictions = preds

    if state.stopped_at is not None:
        return True
    window_full = len(state.recent_agreements) == config.window
    if window_full and all(k >= config.agreement_threshold for k in state.recent_agreements):
        state.stopped_at = iteration
        return True
    return False
