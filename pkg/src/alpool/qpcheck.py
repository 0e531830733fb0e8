"""Independent solvers for the SVM dual, used to certify training output.

Two routes, both deliberately separate from the production solver:

* ``pgd_max_dual`` — projected-gradient ascent on the dual with an
  active-set polish step, run to tight convergence.  Scales to a few
  hundred points; intended for verification, not training.
* ``enumerate_max_dual`` — exact brute force over all active-set
  assignments, feasible only for tiny problems (n <= ~10).  Used to
  validate the projected-gradient route itself.

The dual being solved is

    max  sum(alpha) - 0.5 * alpha' Q alpha
    s.t. sum(alpha * y) = 0,  0 <= alpha_k <= upper_k

with Q_ij = y_i y_j (x_i . x_j) and per-class upper bounds.
"""

from __future__ import annotations

import itertools

import numpy as np


def dual_objective(gram: np.ndarray, alpha: np.ndarray) -> float:
    return float(alpha.sum() - 0.5 * alpha @ gram @ alpha)


def project_box_hyperplane(v: np.ndarray, y: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {0 <= a <= upper, sum(a*y) = 0}.

    The projection is clip(v - theta*y, 0, upper) for the theta that zeroes
    the constraint; h(theta) = sum(y * clip(...)) is nonincreasing, so
    bisection converges unconditionally.
    """

    def h(theta: float) -> float:
        return float(np.dot(y, np.clip(v - theta * y, 0.0, upper)))

    radius = float(np.max(np.abs(v)) + np.max(upper) + 1.0)
    lo, hi = -radius, radius
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    return np.clip(v - theta * y, 0.0, upper)


def _kkt_gap(gram: np.ndarray, y: np.ndarray, upper: np.ndarray, alpha: np.ndarray) -> float:
    """max-violating-pair gap; <= 0 certifies optimality."""
    yg = y * (1.0 - gram @ alpha)
    up = ((y > 0) & (alpha < upper)) | ((y < 0) & (alpha > 0))
    lo = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < upper))
    if not up.any() or not lo.any():
        return 0.0
    return float(np.max(yg[up]) - np.min(yg[lo]))

def _feasible_kkt_point(kkt: np.ndarray, rhs: np.ndarray, upper_free: np.ndarray):
    """A box-feasible solution of the (possibly singular) KKT system.

    Solutions form an affine set along which the dual objective is
    constant (null directions v of a PSD Q satisfy Qv = 0 and sum to
    zero), so any box point of the set is as good as any other.  When
    the minimum-norm solution leaves the box, alternate projections
    between the affine set and the box converge onto their intersection
    whenever it is nonempty.  Returns the free subvector, or None.
    """
    n_free = len(upper_free)
    scale = 1.0 + float(np.linalg.norm(rhs))
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    if np.linalg.norm(kkt @ sol - rhs) > 1e-7 * scale:
        return None  # inconsistent system: wrong active-set guess
    alpha_free = sol[:n_free]
    if not (np.any(alpha_free < -1e-9) or np.any(alpha_free > upper_free + 1e-9)):
        return np.clip(alpha_free, 0.0, upper_free)
    pinv = np.linalg.pinv(kkt)
    z = sol.copy()
    for _ in range(500):
        z -= pinv @ (kkt @ z - rhs)
        clipped = np.clip(z[:n_free], 0.0, upper_free)
        moved = float(np.linalg.norm(clipped - z[:n_free]))
        z[:n_free] = clipped
        if moved < 1e-13:
            break
    if np.linalg.norm(kkt @ z - rhs) > 1e-7 * scale:
        return None
    return np.clip(z[:n_free], 0.0, upper_free)


def _active_set_guesses(alpha: np.ndarray, upper: np.ndarray):
    """Candidate (at_zero, at_upper) masks at several snap thresholds.

    Iterates become sign-correct long before they are tight, so coarse
    thresholds often identify the true active set early.
    """
    scale = 1.0 + float(np.max(upper))
    seen = set()
    for eps in (1e-10, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2):
        at_zero = alpha <= eps * scale
        at_upper = (upper - alpha) <= eps * scale
        key = (at_zero.tobytes(), at_upper.tobytes())
        if key not in seen:
            seen.add(key)
            yield at_zero, at_upper


def _polish(
    gram: np.ndarray,
    y: np.ndarray,
    upper: np.ndarray,
    at_zero: np.ndarray,
    at_upper: np.ndarray,
) -> np.ndarray | None:
    """Solve the equality-constrained QP with the given active-set guess.

    Returns the polished point if it is feasible, else None.
    """
    free = ~(at_zero | at_upper)
    fixed = np.where(at_upper, upper, 0.0)
    fixed[free] = 0.0

    n_free = int(free.sum())
    if n_free == 0:
        candidate = fixed
        return candidate if abs(np.dot(candidate, y)) <= 1e-9 else None

    q_ff = gram[np.ix_(free, free)]
    q_fb = gram[np.ix_(free, ~free)]
    rhs_top = 1.0 - q_fb @ fixed[~free]
    rhs = np.concatenate([rhs_top, [-np.dot(y[~free], fixed[~free])]])
    kkt = np.zeros((n_free + 1, n_free + 1))
    kkt[:n_free, :n_free] = q_ff
    kkt[:n_free, n_free] = y[free]
    kkt[n_free, :n_free] = y[free]
    alpha_free = _feasible_kkt_point(kkt, rhs, upper[free])
    if alpha_free is None:
        return None
    candidate = fixed.copy()
    candidate[free] = alpha_free
    if abs(np.dot(candidate, y)) > 1e-7 * (1.0 + float(np.abs(candidate).sum())):
        return None
    return candidate


def pgd_max_dual(
    x: np.ndarray,
    y: np.ndarray,
    c_pos: float,
    c_neg: float,
    max_iters: int = 200_000,
    gap_tol: float = 1e-9,
    block: int = 200,
) -> tuple[np.ndarray, float]:
    """Maximize the dual by projected-gradient ascent, polished to tight optimality.

    Returns (alpha, objective).  ``x`` is dense (n, d); labels in {+1, -1}.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gram = np.outer(y, y) * (x @ x.T)
    upper = np.where(y > 0, c_pos, c_neg)
    n = len(y)

    eigmax = float(np.max(np.linalg.eigvalsh(gram))) if n else 1.0
    step = 1.0 / max(eigmax, 1e-12)

    alpha = project_box_hyperplane(np.zeros(n), y, upper)
    best = alpha
    best_obj = dual_objective(gram, alpha)
    for start in range(0, max_iters, block):
        for _ in range(min(block, max_iters - start)):
            grad = 1.0 - gram @ alpha
            alpha = project_box_hyperplane(alpha + step * grad, y, upper)
        obj = dual_objective(gram, alpha)
        if obj > best_obj:
            best, best_obj = alpha, obj
        for at_zero, at_upper in _active_set_guesses(alpha, upper):
            polished = _polish(gram, y, upper, at_zero, at_upper)
            if polished is None:
                continue
            if _kkt_gap(gram, y, upper, polished) <= gap_tol:
                pol_obj = dual_objective(gram, polished)
                if pol_obj >= best_obj - 1e-12:
                    return polished, pol_obj
    return best, best_obj


def enumerate_max_dual(
    x: np.ndarray, y: np.ndarray, c_pos: float, c_neg: float
) -> tuple[np.ndarray, float]:
    """Exact dual optimum by enumerating every {zero, upper, free} assignment.

    Every feasible candidate's objective is a lower bound on the optimum and
    the optimal active set is among the candidates, so the best feasible
    candidate is the exact optimum (up to linear-solver precision).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n > 12:
        raise ValueError("enumeration oracle is for tiny problems only")
    gram = np.outer(y, y) * (x @ x.T)
    upper = np.where(y > 0, c_pos, c_neg)

    best_alpha = None
    best_obj = -np.inf
    for assignment in itertools.product((0, 1, 2), repeat=n):
        state = np.array(assignment)
        alpha = np.where(state == 1, upper, 0.0)
        free = state == 2
        n_free = int(free.sum())
        if n_free == 0:
            if abs(np.dot(alpha, y)) > 1e-12:
                continue
            candidate = alpha
        else:
            q_ff = gram[np.ix_(free, free)]
            kkt = np.zeros((n_free + 1, n_free + 1))
            kkt[:n_free, :n_free] = q_ff
            kkt[:n_free, n_free] = y[free]
            kkt[n_free, :n_free] = y[free]
            rhs = np.concatenate(
                [1.0 - gram[np.ix_(free, ~free)] @ alpha[~free], [-np.dot(y[~free], alpha[~free])]]
            )
            a_free = _feasible_kkt_point(kkt, rhs, upper[free])
            if a_free is None:
                continue
            candidate = alpha.copy()
            candidate[free] = a_free
        obj = dual_objective(gram, candidate)
        if obj > best_obj:
            best_alpha, best_obj = candidate, obj
    assert best_alpha is not None
    return best_alpha, best_obj
