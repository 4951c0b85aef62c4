"""Slow but simple reference minimizers used to validate the fast solvers."""
from __future__ import annotations

import numpy as np

from .embedding import RealEmbedding
from .prox import prox_groups


def reference_oracle(emb: RealEmbedding, lam: float, gamma: float = 0.0, n_max: int = 1_000_000,
                     tol: float = 1e-15, init: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Plain proximal gradient over the full vector with a global step.

    The step starts at 1/(2 L_max) and is halved whenever an iterate fails to
    decrease the objective. Returns (objective, a_r).
    """
    K, n = emb.K, 2 * emb.L
    D, xi = emb.Delta, emb.xi
    groups = emb.group_indices()
    lip = 2.0 * np.linalg.eigvalsh(D)[:, -1].max()
    step = 1.0 / lip
    a = emb.unconstrained_optimum() if init is None else np.array(init, dtype=float)
    F = emb.objective(a, lam, gamma)
    stall = 0
    for _ in range(n_max):
        A = a.reshape(K, n)
        grad = (2 * (np.einsum("kij,kj->ki", D, A) - xi)).reshape(-1)
        cand = prox_groups(a - step * grad, step * lam, step * gamma, groups)
        Fc = emb.objective(cand, lam, gamma)
        if Fc > F:
            step *= 0.5
            continue
        rel = (F - Fc) / max(abs(F), 1e-300)
        a, F = cand, Fc
        # a few consecutive tiny changes before stopping, in case of a flat stretch
        stall = stall + 1 if rel < tol else 0
        if stall >= 20:
            break
    return F, a


def grid_minimize(fun, center, half_width: float, resolution: float, refine: int = 6):
    """Exhaustive box-grid search in at most 4 dimensions, zooming in around the best point.

    ``fun`` maps an (n, d) array of candidate points to n objective values.
    """
    center = np.asarray(center, dtype=float)
    d = center.size
    if d > 4:
        raise ValueError("grid search is limited to 4 dimensions")
    cap = {1: 4001, 2: 401, 3: 61, 4: 31}[d]
    width, best = half_width, center
    for _ in range(refine + 1):
        pts = int(min(2 * width / resolution + 1, cap)) | 1
        axis = np.linspace(-width, width, max(pts, 3))
        grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d) + best
        vals = np.asarray(fun(grid))
        best = grid[int(np.argmin(vals))]
        step = axis[1] - axis[0]
        if step <= resolution:
            break
        width = 2 * step
    return best, float(np.asarray(fun(best[None]))[0])
