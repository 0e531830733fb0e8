"""Cross-validated benchmark harness.

Runs paired active-learning and random-sampling sessions over k folds,
reports macro-averaged P/R/F at percentage-of-pool checkpoints and at the
automatic stopping point, and provides a synthetic imbalanced-data
generator for desk-scale experiments.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset, LabeledInstance, SparseVector, to_csr
from .learner import AlConfig, RunTrace, SimulatedOracle, run
from .metrics import Metrics, evaluate, f_measure, metrics_from_predictions
from .stopping import StopConfig
from .svm import decision_values, predict_values

logger = logging.getLogger(__name__)

CSV_HEADER = ["checkpoint", "labels_used", "strategy", "precision", "recall", "f1", "auto_stop"]


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic sparse binary pools with a controlled positive rate.

    Features are drawn independently per instance with class-conditional
    presence probabilities; ``class_separation`` scales how far the two
    probability profiles differ (0 means the classes are identical).
    The positive count is exactly round(n * positive_rate).
    """

    n: int = 1000
    dim: int = 60
    positive_rate: float = 0.176
    class_separation: float = 0.9
    feature_density: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.n < 10 or self.dim < 2:
            raise ValueError("need n >= 10 and dim >= 2")
        if not 0.0 < self.positive_rate < 1.0:
            raise ValueError("positive_rate must be in (0, 1)")
        if not 0.0 < self.feature_density <= 1.0:
            raise ValueError("feature_density must be in (0, 1]")
        if self.class_separation < 0.0:
            raise ValueError("class_separation must be >= 0")


@dataclass(frozen=True)
class CheckpointRecord:
    """One learning-curve row: macro P/R/F over folds at one label budget."""

    checkpoint: str
    percent_of_pool: float
    labels_used: int
    precision: float
    recall: float
    f1: float
    auto_stop: bool


@dataclass(frozen=True)
class LearningCurve:
    strategy: str
    records: tuple[CheckpointRecord, ...]
    skipped_folds: tuple[int, ...] = ()


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Draw a deterministic synthetic pool per the config."""
    rng = np.random.default_rng(config.seed)
    n_pos = round(config.n * config.positive_rate)
    labels = np.full(config.n, -1, dtype=np.int64)
    labels[rng.permutation(config.n)[:n_pos]] = 1

    spread = rng.uniform(-1.0, 1.0, config.dim)
    shift = config.class_separation * spread
    p_pos = np.clip(config.feature_density * (1.0 + shift), 0.0, 1.0)
    p_neg = np.clip(config.feature_density * (1.0 - shift), 0.0, 1.0)

    draws = rng.random((config.n, config.dim))
    present = np.where((labels == 1)[:, None], draws < p_pos[None, :], draws < p_neg[None, :])
    instances = []
    for row in range(config.n):
        nz = np.nonzero(present[row])[0].astype(np.int64)
        instances.append(
            LabeledInstance(SparseVector(nz, np.ones(nz.size)), int(labels[row]))
        )
    return Dataset(tuple(instances), dimension=config.dim)


def _fold_seeds(seed: int, fold: int) -> tuple[int, int]:
    state = np.random.SeedSequence([seed, fold]).generate_state(2)
    return int(state[0]), int(state[1])


def _split_seed(seed: int) -> int:
    # The synthetic generator feeds the raw seed to default_rng directly;
    # hashing here keeps fold assignment decorrelated when callers reuse
    # one seed for both (identical permutations would stack one class
    # into a single fold).
    return int(np.random.SeedSequence([seed, 929]).generate_state(1)[0])


def _fold_metrics(trace: RunTrace, test_csr, test_labels) -> list[Metrics]:
    out = []
    for rec in trace.records:
        preds = predict_values(decision_values(rec.model, test_csr))
        out.append(metrics_from_predictions(test_labels, preds))
    return out


def _checkpoint_iteration(trace: RunTrace, target_labels: float) -> int:
    for pos, rec in enumerate(trace.records):
        if rec.labeled_count >= target_labels:
            return pos
    return len(trace.records) - 1


@dataclass
class _FoldOutcome:
    fold: int
    pool_size: int
    al_trace: RunTrace
    rand_trace: RunTrace
    al_metrics: list[Metrics]
    rand_metrics: list[Metrics]


def run_experiment(
    dataset: Dataset,
    al_config: AlConfig,
    stop_config: StopConfig,
    checkpoints,
    folds: int = 10,
    trace_sink=None,
) -> tuple[LearningCurve, LearningCurve]:
    """Paired AL-vs-random curves over k-fold cross validation.

    Within a fold both strategies share the same derived seeds, so they
    start from the identical initial labeled set and are tested on the
    identical held-out fold.  The automatic stopping point is the AL
    run's; the random curve is read at the same label budget, mirroring
    the shared "average labels" column of a stopping-point table.
    Single-class training pools are skipped with a warning and reported
    on the returned curves.
    """
    from .data import split_folds

    checkpoints = sorted(float(c) for c in checkpoints)
    fold_sets = split_folds(len(dataset), folds, _split_seed(al_config.seed))
    outcomes: list[_FoldOutcome] = []
    skipped: list[int] = []
    for fold_idx, test_idx in enumerate(fold_sets):
        test_mask = np.zeros(len(dataset), dtype=bool)
        test_mask[test_idx] = True
        pool_idx = np.nonzero(~test_mask)[0]
        pool_insts = [dataset.instances[int(i)] for i in pool_idx]
        pool_labels = {inst.label for inst in pool_insts}
        if len(pool_labels) < 2:
            logger.warning("fold %d skipped: single-class training pool", fold_idx)
            skipped.append(fold_idx)
            continue
        fold_pool = Dataset(tuple(pool_insts), dimension=dataset.dimension)
        test_insts = [dataset.instances[int(i)] for i in test_idx]
        test_csr = to_csr(test_insts, dataset.dimension)
        test_labels = np.array([inst.label for inst in test_insts])

        al_seed, stop_seed = _fold_seeds(al_config.seed, fold_idx)
        fold_al_cfg = replace(al_config, seed=al_seed)
        fold_stop_cfg = replace(stop_config, seed=stop_seed)
        oracle = SimulatedOracle(fold_pool)

        al_trace = run(fold_pool, fold_al_cfg, oracle, fold_stop_cfg, strategy="closest")
        rand_trace = run(fold_pool, fold_al_cfg, oracle, fold_stop_cfg, strategy="random")
        if trace_sink is not None:
            trace_sink(fold_idx, al_trace)
            trace_sink(fold_idx, rand_trace)
        outcomes.append(
            _FoldOutcome(
                fold=fold_idx,
                pool_size=len(fold_pool),
                al_trace=al_trace,
                rand_trace=rand_trace,
                al_metrics=_fold_metrics(al_trace, test_csr, test_labels),
                rand_metrics=_fold_metrics(rand_trace, test_csr, test_labels),
            )
        )
    if not outcomes:
        raise ValueError("every fold had a single-class training pool")

    curves = {}
    for strategy, label in (("closest", "AL"), ("random", "Random")):
        records = []
        for pct in checkpoints:
            rows = []
            for oc in outcomes:
                trace = oc.al_trace if strategy == "closest" else oc.rand_trace
                metric_list = oc.al_metrics if strategy == "closest" else oc.rand_metrics
                pos = _checkpoint_iteration(trace, pct / 100.0 * oc.pool_size)
                rows.append((trace.records[pos].labeled_count, metric_list[pos]))
            records.append(_aggregate(f"{pct:g}%", pct, rows, auto_stop=False))
        stop_rows = []
        for oc in outcomes:
            if oc.al_trace.stopped_at is None:
                continue
            pos = oc.al_trace.stopped_at
            metric_list = oc.al_metrics if strategy == "closest" else oc.rand_metrics
            trace = oc.al_trace if strategy == "closest" else oc.rand_trace
            stop_rows.append((trace.records[pos].labeled_count, metric_list[pos]))
        if stop_rows:
            mean_pool = float(np.mean([oc.pool_size for oc in outcomes]))
            mean_labels = float(np.mean([r[0] for r in stop_rows]))
            records.append(
                _aggregate("autostop", 100.0 * mean_labels / mean_pool, stop_rows, auto_stop=True)
            )
        records.sort(key=lambda r: (r.labels_used, not r.auto_stop))
        curves[strategy] = LearningCurve(
            strategy=label, records=tuple(records), skipped_folds=tuple(skipped)
        )
    return curves["closest"], curves["random"]


def _aggregate(name: str, pct: float, rows, auto_stop: bool) -> CheckpointRecord:
    labels = round(float(np.mean([r[0] for r in rows])))
    return CheckpointRecord(
        checkpoint=name,
        percent_of_pool=pct,
        labels_used=labels,
        precision=float(np.mean([r[1].precision for r in rows])),
        recall=float(np.mean([r[1].recall for r in rows])),
        f1=float(np.mean([r[1].f1 for r in rows])),
        auto_stop=auto_stop,
    )


@dataclass(frozen=True)
class MacroRecord:
    strategy: str
    checkpoint: str
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class OneVsRestResult:
    per_category: dict
    macro: tuple[MacroRecord, ...]


def relabel_for_category(categories, target) -> list[int]:
    return [1 if cat == target else -1 for cat in categories]


def one_vs_rest(
    features,
    categories,
    dimension: int,
    al_config: AlConfig,
    stop_config: StopConfig,
    checkpoints,
    folds: int = 10,
    targets=None,
) -> OneVsRestResult:
    """One binary curve pair per category, plus a macro average over categories."""
    present = sorted(set(categories), key=str)
    if len(present) < 2:
        raise ValueError("one-vs-rest needs at least two categories")
    targets = list(targets) if targets is not None else present
    per_category = {}
    for target in targets:
        labels = relabel_for_category(categories, target)
        n_pos = sum(1 for lab in labels if lab == 1)
        if n_pos == 0:
            raise ValueError(f"category {target!r} has no instances")
        if n_pos == len(labels):
            raise ValueError(f"category {target!r} covers every instance")
        instances = tuple(
            LabeledInstance(feat, lab) for feat, lab in zip(features, labels)
        )
        dataset = Dataset(instances, dimension=dimension)
        per_category[target] = run_experiment(
            dataset, al_config, stop_config, checkpoints, folds=folds
        )

    macro = []
    for pick, name in ((0, "AL"), (1, "Random")):
        by_checkpoint: dict[str, list[CheckpointRecord]] = {}
        for pair in per_category.values():
            for rec in pair[pick].records:
                by_checkpoint.setdefault(rec.checkpoint, []).append(rec)
        for checkpoint, recs in sorted(by_checkpoint.items()):
            macro.append(
                MacroRecord(
                    strategy=name,
                    checkpoint=checkpoint,
                    precision=float(np.mean([r.precision for r in recs])),
                    recall=float(np.mean([r.recall for r in recs])),
                    f1=float(np.mean([r.f1 for r in recs])),
                )
            )
    return OneVsRestResult(per_category=per_category, macro=tuple(macro))


def write_curves(curves, destination) -> None:
    """Write learning curves as CSV (4-decimal floats).

    ``destination`` may be a path or a text stream.
    """
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to write")
    if isinstance(destination, (str, Path)):
        with open(destination, "w", newline="") as handle:
            _write_rows(curves, handle)
    else:
        _write_rows(curves, destination)


def _write_rows(curves, handle) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for curve in curves:
        for rec in curve.records:
            writer.writerow(
                [
                    rec.checkpoint,
                    rec.labels_used,
                    curve.strategy,
                    f"{rec.precision:.4f}",
                    f"{rec.recall:.4f}",
                    f"{rec.f1:.4f}",
                    "true" if rec.auto_stop else "false",
                ]
            )


def read_curves(text: str) -> list[dict]:
    """Parse write_curves output back into row dicts (floats included)."""
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    for row in reader:
        rows.append(
            {
                "checkpoint": row["checkpoint"],
                "labels_used": int(row["labels_used"]),
                "strategy": row["strategy"],
                "precision": float(row["precision"]),
                "recall": float(row["recall"]),
                "f1": float(row["f1"]),
                "auto_stop": row["auto_stop"] == "true",
            }
        )
    return rows
