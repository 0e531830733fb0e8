import json
import threading

import numpy as np
import pytest

from alpool.data import Dataset, LabeledInstance, SparseVector
from alpool.learner import (
    AlConfig,
    InitSetError,
    OracleError,
    PoolState,
    SimulatedOracle,
    class_ratio_pa,
    draw_init_set,
    estimate_pa,
    run,
    select_batch,
    select_random,
)
from alpool.stopping import StopConfig
from alpool.svm import SvmModel, TrainConfig, train


def gaussian_pool(n, seed, dim=2, rate=0.3, separation=2.0):
    """Two overlapping blobs; labels follow the blob."""
    rng = np.random.default_rng(seed)
    labels = np.where(rng.random(n) < rate, 1, -1)
    labels[0], labels[1] = 1, -1  # both classes guaranteed
    centers = np.where(labels[:, None] > 0, separation, -separation)
    x = rng.normal(size=(n, dim)) + centers
    instances = tuple(
        LabeledInstance(SparseVector.from_dense(row), int(lab)) for row, lab in zip(x, labels)
    )
    return Dataset(instances, dimension=dim)


def labeled_points(points, labels):
    return [
        LabeledInstance(SparseVector.from_dense(p), int(lab))
        for p, lab in zip(points, labels)
    ]


QUICK_STOP = StopConfig(stop_set_size=20, agreement_threshold=0.99, window=3, seed=0)


# ---------------------------------------------------------------- config


@pytest.mark.parametrize(
    "kwargs",
    [
        {"init_size": 1},
        {"batch_size": 0},
        {"pa_grid": ()},
        {"pa_cv_folds": 1},
        {"c_minus": 0.0},
    ],
)
def test_al_config_validation(kwargs):
    with pytest.raises(ValueError):
        AlConfig(**kwargs)


def test_al_config_resolved_defaults():
    cfg = AlConfig().resolved(pool_size=5000)
    assert cfg.init_size == 50
    assert cfg.batch_size == 50
    cfg = AlConfig().resolved(pool_size=100)
    assert cfg.init_size == 50
    assert cfg.batch_size == 10
    assert AlConfig(init_size=80).resolved(pool_size=60).init_size == 60  # clamp


# ---------------------------------------------------------------- pool state


def test_pool_state_rejects_duplicate_labeling():
    state = PoolState(unlabeled={0, 1, 2})
    state.acquire(0, [0, 1], [1, -1])
    with pytest.raises(ValueError):
        state.acquire(1, [1], [-1])


def test_pool_state_partition():
    state = PoolState(unlabeled=set(range(10)))
    state.acquire(-1, [3, 7], [1, -1])
    state.acquire(0, [0], [-1])
    assert set(state.labels) == {0, 3, 7}
    assert state.unlabeled == {1, 2, 4, 5, 6, 8, 9}
    assert list(state.labeled_indices) == [0, 3, 7]
    assert state.query_log == [(-1, (3, 7)), (0, (0,))]


# ---------------------------------------------------------------- init set


def test_draw_init_set_deterministic():
    pool = gaussian_pool(1000, seed=0)
    oracle = SimulatedOracle(pool)
    idx1, lab1 = draw_init_set(pool, 50, seed=7, oracle=oracle)
    idx2, lab2 = draw_init_set(pool, 50, seed=7, oracle=oracle)
    assert idx1 == idx2 and lab1 == lab2
    assert len(set(idx1)) == 50
    assert {1, -1} <= set(lab1)


def test_draw_init_set_extends_until_both_classes():
    # one positive hidden in a negative pool; budget covers the whole pool
    labels = [-1] * 9 + [1]
    pool = Dataset(
        tuple(
            LabeledInstance(SparseVector.from_dense([float(i + 1)]), lab)
            for i, lab in enumerate(labels)
        ),
        dimension=1,
    )
    oracle = SimulatedOracle(pool)
    for seed in range(5):
        indices, got = draw_init_set(pool, 2, seed=seed, oracle=oracle)
        assert 9 in indices
        assert 1 in got


def test_draw_init_set_errors_when_single_class():
    pool = Dataset(
        tuple(
            LabeledInstance(SparseVector.from_dense([float(i + 1)]), -1) for i in range(10)
        ),
        dimension=1,
    )
    with pytest.raises(InitSetError):
        draw_init_set(pool, 2, seed=0, oracle=SimulatedOracle(pool))


def test_draw_init_set_whole_pool():
    pool = gaussian_pool(30, seed=1)
    indices, labels = draw_init_set(pool, 30, seed=0, oracle=SimulatedOracle(pool))
    assert sorted(indices) == list(range(30))
    with pytest.raises(ValueError):
        draw_init_set(pool, 31, seed=0, oracle=SimulatedOracle(pool))


# ---------------------------------------------------------------- pa estimate


def test_class_ratio_pa():
    assert class_ratio_pa([-1] * 45 + [1] * 5) == 9.0
    assert class_ratio_pa([1, -1]) == 1.0


def test_estimate_pa_tie_breaks_to_smallest():
    # clean separation: every candidate reaches F=1, so the smallest wins
    rng = np.random.default_rng(3)
    points = np.concatenate([rng.normal(-4, 0.1, 10), rng.normal(4, 0.1, 10)])
    init = labeled_points(points[:, None], [-1] * 10 + [1] * 10)
    cfg = AlConfig(pa_grid=(3.0, 2.0, 5.0), grid_add_class_ratio=False, seed=0)
    assert estimate_pa(init, cfg) == 2.0


def test_estimate_pa_class_ratio_joins_grid():
    # ratio 1.0 beats every larger grid candidate on ties
    rng = np.random.default_rng(3)
    points = np.concatenate([rng.normal(-4, 0.1, 10), rng.normal(4, 0.1, 10)])
    init = labeled_points(points[:, None], [-1] * 10 + [1] * 10)
    cfg = AlConfig(pa_grid=(3.0, 2.0), grid_add_class_ratio=True, seed=0)
    assert estimate_pa(init, cfg) == 1.0


def test_estimate_pa_degenerate_fold_fallback():
    # 5 positives cannot cover 6 folds: some test fold has no positive,
    # so the estimate falls back to the 45:5 class ratio
    rng = np.random.default_rng(5)
    points = rng.normal(size=(50, 2))
    init = labeled_points(points, [1] * 5 + [-1] * 45)
    cfg = AlConfig(pa_cv_folds=6, seed=0)
    assert estimate_pa(init, cfg) == 9.0


def test_estimate_pa_rejects_single_class():
    init = labeled_points(np.ones((4, 1)), [1, 1, 1, 1])
    with pytest.raises(ValueError):
        estimate_pa(init, AlConfig())


# ---------------------------------------------------------------- selection


def closest_model(w, b=0.0):
    return SvmModel(
        weights=np.asarray(w, dtype=float),
        bias=b,
        alphas=None,
        config=TrainConfig(),
        converged=True,
    )


def test_select_batch_smallest_margin_first():
    pool = Dataset(
        tuple(
            LabeledInstance(SparseVector.from_dense(p), 1)
            for p in ([0.1, 0.0], [2.0, 0.0], [-0.5, 0.0])
        ),
        dimension=2,
    )
    model = closest_model([1.0, 0.0])
    assert select_batch(model, pool, {0, 1, 2}, 1) == [0]
    assert select_batch(model, pool, {0, 1, 2}, 10) == [0, 2, 1]  # all, by |f|


def test_select_batch_tie_breaks_to_lower_index():
    pool = Dataset(
        tuple(
            LabeledInstance(SparseVector.from_dense([x]), 1) for x in (0.5, -0.5, 0.25)
        ),
        dimension=1,
    )
    batch = select_batch(closest_model([1.0]), pool, {0, 1, 2}, 2)
    assert batch == [2, 0]  # |0.25| < |0.5|; 0 beats 1 on the tie


def test_select_batch_dominance():
    pool = gaussian_pool(60, seed=9)
    model = closest_model([0.7, -0.3], b=0.1)
    unlabeled = set(range(10, 60))
    batch = select_batch(model, pool, unlabeled, 8)
    from alpool.svm import decision_value

    chosen = {abs(decision_value(model, pool.instances[i].features)) for i in batch}
    rest = {
        abs(decision_value(model, pool.instances[i].features))
        for i in unlabeled.difference(batch)
    }
    assert max(chosen) <= min(rest) + 1e-12


def test_select_batch_empty_unlabeled():
    pool = gaussian_pool(5, seed=0)
    with pytest.raises(ValueError):
        select_batch(closest_model([1.0, 0.0]), pool, set(), 2)


def test_select_random_deterministic():
    unlabeled = set(range(100))
    a = select_random(unlabeled, 10, seed=4, iteration=2)
    b = select_random(unlabeled, 10, seed=4, iteration=2)
    assert a == b
    assert len(set(a)) == 10
    assert select_random(unlabeled, 10, seed=4, iteration=3) != a
    assert sorted(select_random(unlabeled, 100, seed=0, iteration=0)) == sorted(unlabeled)
    with pytest.raises(ValueError):
        select_random(set(), 1, seed=0, iteration=0)


# ---------------------------------------------------------------- the loop


def test_run_label_count_arithmetic():
    pool = gaussian_pool(40, seed=2)
    cfg = AlConfig(init_size=10, batch_size=5, seed=0)
    trace = run(pool, cfg, SimulatedOracle(pool), QUICK_STOP)
    counts = [rec.labeled_count for rec in trace.records]
    assert counts == [10, 15, 20, 25, 30, 35, 40]
    assert trace.records[-1].batch == ()  # exhaustion record queries nothing


def test_run_no_instance_queried_twice():
    pool = gaussian_pool(50, seed=3)
    cfg = AlConfig(init_size=10, batch_size=7, seed=1)
    trace = run(pool, cfg, SimulatedOracle(pool), QUICK_STOP)
    seen = list(trace.init_indices)
    for rec in trace.records:
        seen.extend(rec.batch)
    assert len(seen) == len(set(seen)) == 50


def test_run_pa_estimated_once_and_held():
    pool = gaussian_pool(45, seed=4)
    cfg = AlConfig(init_size=12, batch_size=6, seed=2)
    trace = run(pool, cfg, SimulatedOracle(pool), QUICK_STOP)
    assert trace.pa is not None
    assert all(rec.model.config.pa == trace.pa for rec in trace.records)


@pytest.mark.parametrize("strategy", ["closest", "random"])
def test_run_deterministic(strategy):
    pool = gaussian_pool(40, seed=5)
    cfg = AlConfig(init_size=10, batch_size=8, seed=3)
    t1 = run(pool, cfg, SimulatedOracle(pool), QUICK_STOP, strategy=strategy)
    t2 = run(pool, cfg, SimulatedOracle(pool), QUICK_STOP, strategy=strategy)
    assert t1.to_jsonl() == t2.to_jsonl()


def test_run_rejects_unknown_strategy():
    pool = gaussian_pool(20, seed=0)
    with pytest.raises(ValueError):
        run(pool, AlConfig(init_size=5), SimulatedOracle(pool), QUICK_STOP, strategy="margin")


def test_run_passive_limit_matches_single_training():
    pool = gaussian_pool(36, seed=6)
    cfg = AlConfig(init_size=36, seed=0)
    trace = run(pool, cfg, SimulatedOracle(pool), QUICK_STOP)
    assert len(trace.records) == 1
    model = trace.records[0].model
    direct = train(
        list(pool.instances),
        TrainConfig(c_minus=cfg.c_minus, pa=trace.pa),
        dimension=pool.dimension,
    )
    assert np.array_equal(model.weights, direct.weights)
    assert model.bias == direct.bias


def test_run_max_iterations():
    pool = gaussian_pool(60, seed=7)
    cfg = AlConfig(init_size=10, batch_size=5, seed=0, max_iterations=3)
    trace = run(pool, cfg, SimulatedOracle(pool), QUICK_STOP)
    assert len(trace.records) == 4  # iterations 0..3
    assert trace.records[-1].labeled_count == 25


def test_run_halt_on_stop():
    pool = gaussian_pool(80, seed=8, separation=4.0)  # easy: models stabilize fast
    cfg = AlConfig(init_size=16, batch_size=4, seed=1)
    eager = StopConfig(stop_set_size=30, agreement_threshold=0.5, window=1, seed=0)
    halted = run(pool, cfg, SimulatedOracle(pool), eager, halt_on_stop=True)
    assert halted.halted
    assert halted.stopped_at is not None
    assert halted.records[-1].labeled_count < 80
    full = run(pool, cfg, SimulatedOracle(pool), eager, halt_on_stop=False)
    assert not full.halted
    assert full.records[-1].labeled_count == 80
    assert full.stopped_at == halted.stopped_at


class FailingOracle:
    """Delegates to gold labels until the fuse burns out."""

    def __init__(self, pool, calls_allowed):
        self._inner = SimulatedOracle(pool)
        self._calls_left = calls_allowed

    def labels_for(self, indices):
        if self._calls_left <= 0:
            raise OracleError("annotator went away")
        self._calls_left -= 1
        return self._inner.labels_for(indices)


def test_run_aborts_on_oracle_failure_with_partial_trace():
    pool = gaussian_pool(50, seed=9)
    cfg = AlConfig(init_size=10, batch_size=5, seed=0)
    trace = run(pool, cfg, FailingOracle(pool, calls_allowed=3), QUICK_STOP)
    assert trace.aborted
    assert len(trace.records) == 3  # init call + 2 batch calls succeeded
    assert trace.records[-1].labeled_count == 20


def test_run_cancel_event():
    pool = gaussian_pool(50, seed=10)
    cancel = threading.Event()
    cancel.set()
    trace = run(
        pool, AlConfig(init_size=10, seed=0), SimulatedOracle(pool), QUICK_STOP, cancel=cancel
    )
    assert trace.aborted
    assert len(trace.records) == 1


def test_run_observer_sees_every_record():
    pool = gaussian_pool(30, seed=11)
    seen = []
    trace = run(
        pool,
        AlConfig(init_size=10, batch_size=10, seed=0),
        SimulatedOracle(pool),
        QUICK_STOP,
        observer=lambda tr, rec: seen.append(rec.iteration),
    )
    assert seen == [rec.iteration for rec in trace.records]


def test_trace_jsonl_round_trip():
    pool = gaussian_pool(30, seed=12)
    trace = run(pool, AlConfig(init_size=10, batch_size=10, seed=0), SimulatedOracle(pool), QUICK_STOP)
    lines = trace.to_jsonl().strip().split("\n")
    header = json.loads(lines[0])
    assert header["strategy"] == "closest"
    assert header["pa"] == trace.pa
    body = [json.loads(line) for line in lines[1:]]
    assert [rec["labeled_count"] for rec in body] == [10, 20, 30]
    assert "model" not in body[0]  # models stay out of the serialized trace
