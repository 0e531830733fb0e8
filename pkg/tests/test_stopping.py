import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alpool.data import Dataset, LabeledInstance, SparseVector
from alpool.stopping import StopConfig, StoppingState, agreement, init_stop_set, update
from alpool.svm import SvmModel, TrainConfig


def model_with_weights(w, b=0.0):
    return SvmModel(
        weights=np.asarray(w, dtype=float),
        bias=b,
        alphas=None,
        config=TrainConfig(),
        converged=True,
    )


def line_pool(xs):
    """1-d pool at the given coordinates, labels irrelevant to stopping."""
    instances = tuple(
        LabeledInstance(SparseVector.from_dense([x]), 1 if x > 0 else -1) for x in xs
    )
    return Dataset(instances, dimension=1)


# ---------------------------------------------------------------- config/init


@pytest.mark.parametrize(
    "kwargs",
    [
        {"stop_set_size": 0},
        {"agreement_threshold": 0.0},
        {"agreement_threshold": 1.5},
        {"window": 0},
    ],
)
def test_stop_config_validation(kwargs):
    with pytest.raises(ValueError):
        StopConfig(**kwargs)


def test_init_stop_set_deterministic_sample():
    pool = line_pool(np.linspace(-1, 1, 50))
    unlabeled = range(5, 45)
    cfg = StopConfig(stop_set_size=10, seed=3)
    a = init_stop_set(pool, unlabeled, cfg)
    b = init_stop_set(pool, unlabeled, cfg)
    assert np.array_equal(a.stop_set, b.stop_set)
    assert len(np.unique(a.stop_set)) == 10
    assert set(a.stop_set) <= set(unlabeled)
    assert len(a.recent_agreements) == 0  # empty ring at init


def test_init_stop_set_clamps_to_unlabeled():
    pool = line_pool(np.linspace(-1, 1, 8))
    state = init_stop_set(pool, [1, 2, 3], StopConfig(stop_set_size=2000))
    assert sorted(state.stop_set) == [1, 2, 3]


def test_init_stop_set_rejects_empty_pool():
    pool = line_pool(np.linspace(-1, 1, 8))
    with pytest.raises(ValueError):
        init_stop_set(pool, [], StopConfig())


def test_stop_set_is_write_protected():
    pool = line_pool(np.linspace(-1, 1, 8))
    state = init_stop_set(pool, range(8), StopConfig(stop_set_size=4))
    with pytest.raises(ValueError):
        state.stop_set[0] = 7


# ---------------------------------------------------------------- kappa


def test_kappa_perfect_agreement():
    v = np.array([1, 1, -1, -1])
    assert agreement(v, v) == 1.0


def test_kappa_chance_level():
    # A_o = 0.5, A_e = 1*0.5 + 0*0.5 = 0.5 -> kappa = 0
    prev = np.array([1, 1, 1, 1])
    curr = np.array([1, 1, -1, -1])
    assert agreement(prev, curr) == pytest.approx(0.0)


def test_kappa_perfect_disagreement():
    # A_o = 0, A_e = 0.5 -> kappa = -1
    assert agreement(np.array([1, -1]), np.array([-1, 1])) == pytest.approx(-1.0)


def test_kappa_degenerate_marginals():
    # both constant, same class: A_e = 1; identical -> 1, else 0
    ones = np.ones(5)
    assert agreement(ones, ones.copy()) == 1.0
    assert agreement(-ones, -ones.copy()) == 1.0


def test_kappa_rejects_mismatched_input():
    with pytest.raises(ValueError):
        agreement(np.array([1, -1]), np.array([1]))
    with pytest.raises(ValueError):
        agreement(np.array([]), np.array([]))


@given(
    st.lists(st.sampled_from([1, -1]), min_size=1, max_size=30),
    st.lists(st.sampled_from([1, -1]), min_size=1, max_size=30),
)
def test_kappa_bounded_above_and_identity(prev, curr):
    n = min(len(prev), len(curr))
    a, b = np.array(prev[:n]), np.array(curr[:n])
    k = agreement(a, b)
    assert k <= 1.0 + 1e-12
    if np.array_equal(a, b):
        assert k == 1.0


def test_kappa_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.choice([1, -1], size=17)
        b = rng.choice([1, -1], size=17)
        assert agreement(a, b) == pytest.approx(agreement(b, a))


# ---------------------------------------------------------------- update rule


def run_updates(models, pool, cfg):
    state = init_stop_set(pool, range(len(pool)), cfg)
    outcomes = []
    for it, model in enumerate(models):
        outcomes.append(update(state, model, pool, it, cfg))
    return state, outcomes


def test_first_update_never_stops():
    pool = line_pool(np.linspace(-1, 1, 12))
    cfg = StopConfig(stop_set_size=12, window=1, agreement_threshold=0.5)
    state, outcomes = run_updates([model_with_weights([1.0])], pool, cfg)
    assert outcomes == [False]
    assert state.stopped_at is None


def test_stop_after_stable_window():
    pool = line_pool(np.linspace(-1, 1, 12))
    cfg = StopConfig(stop_set_size=12, window=3, agreement_threshold=0.99)
    same = model_with_weights([1.0])
    # four identical models: kappas (1, 1, 1) fill the window
    state, outcomes = run_updates([same] * 4, pool, cfg)
    assert outcomes == [False, False, False, True]
    assert state.stopped_at == 3


def test_window_needs_consecutive_passes():
    pool = line_pool(np.linspace(-1, 1, 12))
    cfg = StopConfig(stop_set_size=12, window=2, agreement_threshold=0.99)
    stable = model_with_weights([1.0])
    shifted = model_with_weights([1.0], b=0.5)  # flips the sign of some points
    state, outcomes = run_updates([stable, stable, shifted, stable], pool, cfg)
    # kappas: (1), then (1, low), then (low, 1): never two high in a row
    assert outcomes == [False, False, False, False]
    assert state.stopped_at is None


def test_stop_latches():
    pool = line_pool(np.linspace(-1, 1, 12))
    cfg = StopConfig(stop_set_size=12, window=1, agreement_threshold=0.99)
    stable = model_with_weights([1.0])
    flipped = model_with_weights([-1.0])
    state, outcomes = run_updates([stable, stable, flipped, flipped], pool, cfg)
    # stops at iteration 1; later disagreement cannot un-stop it
    assert outcomes == [False, True, True, True]
    assert state.stopped_at == 1


def test_stop_requires_window_plus_one_models():
    pool = line_pool(np.linspace(-1, 1, 12))
    for window in (1, 2, 3):
        cfg = StopConfig(stop_set_size=12, window=window, agreement_threshold=0.5)
        same = model_with_weights([1.0])
        state, outcomes = run_updates([same] * (window + 1), pool, cfg)
        assert outcomes[:-1] == [False] * window
        assert outcomes[-1] is True
        assert state.stopped_at == window


def test_stop_set_static_across_updates():
    pool = line_pool(np.linspace(-1, 1, 30))
    cfg = StopConfig(stop_set_size=10, window=2)
    state = init_stop_set(pool, range(30), cfg)
    initial = state.stop_set.copy()
    for it in range(5):
        update(state, model_with_weights([float(it + 1)]), pool, it, cfg)
    assert np.array_equal(state.stop_set, initial)


def test_update_accepts_precomputed_pool_matrix():
    from alpool.data import to_csr

    pool = line_pool(np.linspace(-1, 1, 20))
    csr = to_csr(pool.instances, pool.dimension)
    cfg = StopConfig(stop_set_size=8, window=1)
    m = model_with_weights([2.0], b=-0.1)
    s1 = init_stop_set(pool, range(20), cfg)
    s2 = init_stop_set(pool, range(20), cfg)
    update(s1, m, pool, 0, cfg)
    update(s2, m, pool, 0, cfg, pool_csr=csr)
    assert np.array_equal(s1.previous_predictions, s2.previous_predictions)
