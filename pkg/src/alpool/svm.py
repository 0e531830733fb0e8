"""Soft-margin linear SVM with asymmetric class costs.

The primal being minimized is

    0.5 * ||w||^2  +  c_plus * sum(slack over positives)
                   +  c_minus * sum(slack over negatives)
    s.t.  y_k * (w . x_k + b) >= 1 - slack_k,  slack_k >= 0

where c_plus = pa * c_minus: raising ``pa`` amplifies the penalty for
misclassifying the positive (rare) class.  Training runs maximal-violating-
pair SMO on the dual, which keeps the unregularized bias exact; the bias is
recovered afterwards from the free support vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import LabeledInstance, SparseVector, sparse_dot, to_csr

# Curvature floor for coincident points; standard SMO practice.
_TAU = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    """Solver settings.  ``pa`` enters only through c_plus = pa * c_minus.

    ``max_passes`` is the total budget of pairwise updates; None scales it
    with the training size (10000 updates per 100 points).
    """

    c_minus: float = 1.0
    pa: float = 1.0
    tolerance: float = 1e-3
    max_passes: int | None = None

    def __post_init__(self):
        if self.c_minus <= 0 or self.pa <= 0 or self.tolerance <= 0:
            raise ValueError("c_minus, pa, and tolerance must be positive")
        if self.max_passes is not None and self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")

    @property
    def c_plus(self) -> float:
        return self.pa * self.c_minus

    def update_budget(self, n: int) -> int:
        if self.max_passes is not None:
            return self.max_passes
        return 10_000 * max(1, -(-n // 100))


@dataclass(frozen=True)
class SvmModel:
    """Trained hyperplane (weights, bias) plus the dual solution it came from.

    ``alphas`` is None for models reloaded for prediction only.
    """

    weights: np.ndarray
    bias: float
    alphas: np.ndarray | None
    config: TrainConfig
    converged: bool

    def __post_init__(self):
        self.weights.setflags(write=False)
        if self.alphas is not None:
            self.alphas.setflags(write=False)

    @property
    def dimension(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class SlackReport:
    """Per-instance hinge slacks with primal/dual objective values."""

    slacks: np.ndarray
    primal: float
    dual: float


@dataclass
class SmoResult:
    alpha: np.ndarray
    updates: int
    gap: float
    dual_history: list[float] = field(default_factory=list)


def _smo_solve(
    x: sp.csr_matrix,
    y: np.ndarray,
    c_pos: float,
    c_neg: float,
    tolerance: float,
    max_updates: int,
    alpha0: np.ndarray | None = None,
    record_dual_every: int = 0,
) -> SmoResult:
    """Maximal-violating-pair SMO on the linear-kernel dual.

    Each step picks the worst KKT-violating pair (i from the set that can
    increase its y*alpha, j from the set that can decrease it), moves both
    along the equality constraint by the clipped Newton step, and updates
    the primal weights incrementally.  Stops when the violating-pair gap
    drops to ``tolerance`` or the update budget runs out.
    """
    n = x.shape[0]
    upper = np.where(y > 0, c_pos, c_neg)
    if alpha0 is None:
        alpha = np.zeros(n)
    else:
        alpha = np.clip(np.asarray(alpha0, dtype=np.float64).copy(), 0.0, upper)
    w = x.T @ (alpha * y) if alpha.any() else np.zeros(x.shape[1])
    sq_norms = np.asarray(x.multiply(x).sum(axis=1)).ravel()

    history: list[float] = []
    pos = y > 0
    updates = 0
    gap = np.inf
    while True:
        yg = y - x @ w  # selection criterion y_k * dL/dalpha_k
        up_mask = (pos & (alpha < upper)) | (~pos & (alpha > 0.0))
        lo_mask = (pos & (alpha > 0.0)) | (~pos & (alpha < upper))
        if not up_mask.any() or not lo_mask.any():
            gap = 0.0
            break
        i = int(np.argmax(np.where(up_mask, yg, -np.inf)))
        j = int(np.argmin(np.where(lo_mask, yg, np.inf)))
        gap = yg[i] - yg[j]
        if gap <= tolerance or updates >= max_updates:
            break

        xi, xj = x.getrow(i), x.getrow(j)
        eta = sq_norms[i] + sq_norms[j] - 2.0 * float(xi.dot(xj.T).toarray().ravel()[0])
        step_box_i = (upper[i] - alpha[i]) if pos[i] else alpha[i]
        step_box_j = alpha[j] if pos[j] else (upper[j] - alpha[j])
        lam = min(gap / max(eta, _TAU), step_box_i, step_box_j)

        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        # snap float residue back onto the box
        alpha[i] = min(max(alpha[i], 0.0), upper[i])
        alpha[j] = min(max(alpha[j], 0.0), upper[j])
        w[xi.indices] += lam * xi.data
        w[xj.indices] -= lam * xj.data
        updates += 1
        if record_dual_every and updates % record_dual_every == 0:
            history.append(float(alpha.sum() - 0.5 * np.dot(w, w)))

    return SmoResult(alpha=alpha, updates=updates, gap=float(gap), dual_history=history)


def _recover_bias(yg: np.ndarray, alpha: np.ndarray, y: np.ndarray, upper: np.ndarray) -> float:
    """Average y_k - w.x_k over free support vectors; midpoint of the
    feasible interval when no vector is free."""
    free = (alpha > 0.0) & (alpha < upper)
    if free.any():
        return float(np.mean(yg[free]))
    lower_side = ((y > 0) & (alpha <= 0.0)) | ((y < 0) & (alpha >= upper))
    upper_side = ((y > 0) & (alpha >= upper)) | ((y < 0) & (alpha <= 0.0))
    lo = np.max(yg[lower_side]) if lower_side.any() else -np.inf
    hi = np.min(yg[upper_side]) if upper_side.any() else np.inf
    if np.isfinite(lo) and np.isfinite(hi):
        return float(0.5 * (lo + hi))
    if np.isfinite(lo):
        return float(lo)
    if np.isfinite(hi):
        return float(hi)
    return 0.0


def train(
    data: list[LabeledInstance],
    config: TrainConfig,
    dimension: int | None = None,
    warm_start: np.ndarray | None = None,
) -> SvmModel:
    """Train on labeled instances; requires at least one of each class.

    ``dimension`` fixes the weight-vector length when the ambient feature
    space is wider than the indices seen in ``data``.  ``warm_start``
    seeds the dual variables (aligned with ``data``) to speed up
    incremental retraining; it does not change the optimum.
    """
    if not data:
        raise ValueError("training data is empty")
    y = np.array([inst.label for inst in data], dtype=np.float64)
    if not ((y > 0).any() and (y < 0).any()):
        raise ValueError("training requires at least one instance of each class")
    if dimension is None:
        dimension = getattr(data, "dimension", None)
    if dimension is None:
        dimension = max(
            (int(inst.features.indices[-1]) + 1 for inst in data if inst.features.nnz),
            default=0,
        )
    x = to_csr(data, dimension)
    if warm_start is not None and len(warm_start) != len(data):
        raise ValueError("warm_start length must match data")

    result = _smo_solve(
        x,
        y,
        config.c_plus,
        config.c_minus,
        config.tolerance,
        config.update_budget(len(data)),
        alpha0=warm_start,
    )
    alpha = result.alpha
    upper = np.where(y > 0, config.c_plus, config.c_minus)
    weights = np.asarray(x.T @ (alpha * y)).ravel()  # exact recompute from alphas
    yg = y - x @ weights
    bias = _recover_bias(yg, alpha, y, upper)

    up_mask = ((y > 0) & (alpha < upper)) | ((y < 0) & (alpha > 0.0))
    lo_mask = ((y > 0) & (alpha > 0.0)) | ((y < 0) & (alpha < upper))
    if up_mask.any() and lo_mask.any():
        final_gap = float(np.max(yg[up_mask]) - np.min(yg[lo_mask]))
    else:
        final_gap = 0.0
    return SvmModel(
        weights=weights,
        bias=bias,
        alphas=alpha,
        config=config,
        converged=final_gap <= config.tolerance,
    )


def decision_value(model: SvmModel, x: SparseVector) -> float:
    """w . x + b; raises if the vector's indices exceed the model dimension."""
    return sparse_dot(x, model.weights) + model.bias


def decision_values(model: SvmModel, x: sp.csr_matrix) -> np.ndarray:
    """Vectorized decision values for a CSR batch."""
    if x.shape[1] != model.dimension:
        raise ValueError("feature dimension mismatch")
    return x @ model.weights + model.bias


def predict(model: SvmModel, x: SparseVector) -> int:
    """+1 iff the decision value is strictly positive; an exact zero is -1."""
    return 1 if decision_value(model, x) > 0.0 else -1


def predict_values(values: np.ndarray) -> np.ndarray:
    return np.where(values > 0.0, 1, -1)


def diagnostics(model: SvmModel, data: list[LabeledInstance]) -> SlackReport:
    """Slacks and primal/dual objectives for a model over its training set.

    The dual is computed from the stored alphas against ``data`` (not from
    the stored weights), so weak duality holds even for a hand-perturbed
    model as long as its alphas are feasible.
    """
    if model.alphas is None:
        raise ValueError("model has no dual coefficients")
    if len(data) != len(model.alphas):
        raise ValueError("data size does not match the model's alphas")
    y = np.array([inst.label for inst in data], dtype=np.float64)
    x = to_csr(data, model.dimension)
    margins = y * (x @ model.weights + model.bias)
    slacks = np.maximum(0.0, 1.0 - margins)
    pos = y > 0
    primal = float(
        0.5 * np.dot(model.weights, model.weights)
        + model.config.c_plus * slacks[pos].sum()
        + model.config.c_minus * slacks[~pos].sum()
    )
    w_alpha = np.asarray(x.T @ (model.alphas * y)).ravel()
    dual = float(model.alphas.sum() - 0.5 * np.dot(w_alpha, w_alpha))
    return SlackReport(slacks=slacks, primal=primal, dual=dual)


def kkt_violation(model: SvmModel, data: list[LabeledInstance]) -> float:
    """Max KKT residual over instances.

    alpha = 0       -> max(0, 1 - y*f)
    alpha = C_class -> max(0, y*f - 1)
    0 < alpha < C   -> |y*f - 1|
    """
    if model.alphas is None:
        raise ValueError("model has no dual coefficients")
    if len(data) != len(model.alphas):
        raise ValueError("data size does not match the model's alphas")
    y = np.array([inst.label for inst in data], dtype=np.float64)
    x = to_csr(data, model.dimension)
    margins = y * (x @ model.weights + model.bias)
    upper = np.where(y > 0, model.config.c_plus, model.config.c_minus)
    alpha = model.alphas
    residual = np.where(
        alpha <= 0.0,
        np.maximum(0.0, 1.0 - margins),
        np.where(
            alpha >= upper,
            np.maximum(0.0, margins - 1.0),
            np.abs(margins - 1.0),
        ),
    )
    return float(residual.max(initial=0.0))


def save_model(model: SvmModel) -> str:
    """Flat text record: dimension, bias, config echo, sparse weights."""
    cfg = model.config
    lines = [
        f"dim {model.dimension}",
        f"bias {model.bias:.17g}",
        f"c_minus {cfg.c_minus:.17g}",
        f"pa {cfg.pa:.17g}",
        f"tolerance {cfg.tolerance:.17g}",
        f"max_passes {'default' if cfg.max_passes is None else cfg.max_passes}",
        f"converged {int(model.converged)}",
    ]
    nz = np.nonzero(model.weights)[0]
    lines.append("weights " + " ".join(f"{i}:{model.weights[i]:.17g}" for i in nz))
    return "\n".join(lines) + "\n"


def load_model(text: str) -> SvmModel:
    """Reload a serialized model for prediction (alphas are not stored)."""
    fields: dict[str, str] = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition(" ")
            fields[key] = value
    dim = int(fields["dim"])
    weights = np.zeros(dim)
    if fields.get("weights", "").strip():
        for tok in fields["weights"].split():
            idx_s, _, val_s = tok.partition(":")
            weights[int(idx_s)] = float(val_s)
    max_passes = None if fields["max_passes"] == "default" else int(fields["max_passes"])
    config = TrainConfig(
        c_minus=float(fields["c_minus"]),
        pa=float(fields["pa"]),
        tolerance=float(fields["tolerance"]),
        max_passes=max_passes,
    )
    return SvmModel(
        weights=weights,
        bias=float(fields["bias"]),
        alphas=None,
        config=config,
        converged=bool(int(fields["converged"])),
    )
