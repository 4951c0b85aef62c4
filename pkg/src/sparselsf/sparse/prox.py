import numpy as np


def prox_l1(u, t: float):
    """Soft thresholding: argmin 0.5||x - u||^2 + t||x||_1."""
    u = np.asarray(u, dtype=float)
    return np.sign(u) * np.maximum(np.abs(u) - t, 0.0)


def prox_l2(u, t: float):
    """Block soft thresholding: argmin 0.5||x - u||^2 + t||x||_2."""
    u = np.asarray(u, dtype=float)
    nrm = np.linalg.norm(u)
    if nrm <= t or nrm == 0.0:
        return np.zeros_like(u)
    return u * (1.0 - t / nrm)


def prox_composite(u, t_l1: float, t_l2: float):
    """Prox of t_l2||x||_2 + t_l1||x||_1, the l2 prox applied after the l1 prox."""
    return prox_l2(prox_l1(u, t_l1), t_l2)


def prox_groups(u, t_l1: float, t_l2: float, groups: np.ndarray):
    """Apply the composite prox to every group of a flat vector.

    ``groups`` is an (n_groups, size) index array partitioning ``u``.
    """
    v = prox_l1(u, t_l1)
    if t_l2 == 0:
        return v
    blocks = v[groups]
    nrm = np.linalg.norm(blocks, axis=1, keepdims=True)
    shrink = np.where(nrm > t_l2, 1.0 - t_l2 / np.where(nrm > 0, nrm, 1.0), 0.0)
    out = np.empty_like(v)
    out[groups] = blocks * shrink
    return out
