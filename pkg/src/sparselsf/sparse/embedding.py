"""Real-valued embedding of the complex sum-MSE quadratic.

Global real vector layout is UE-major: UE k owns ``a_r[k*2L:(k+1)*2L]`` =
``[Re a_k; Im a_k]``. The group of AP l collects ``[Re a_{1l..Kl}; Im a_{1l..Kl}]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag


@dataclass
class RealEmbedding:
    Delta: np.ndarray  # (K, 2L, 2L) real symmetric blocks
    xi: np.ndarray  # (K, 2L), already scaled by sqrt(p_k)
    p: np.ndarray  # (K,)

    @property
    def K(self) -> int:
        return self.Delta.shape[0]

    @property
    def L(self) -> int:
        return self.Delta.shape[1] // 2

    @property
    def dim(self) -> int:
        return 2 * self.K * self.L

    def dense_delta(self) -> np.ndarray:
        return block_diag(*self.Delta)

    def flat_xi(self) -> np.ndarray:
        return self.xi.reshape(-1)

    def group_index(self, l: int) -> np.ndarray:
        K, L = self.K, self.L
        base = np.arange(K) * 2 * L
        return np.concatenate([base + l, base + L + l])

    def group_indices(self) -> np.ndarray:
        return np.stack([self.group_index(l) for l in range(self.L)])

    def quadratic(self, a_r) -> float:
        """a^T Delta a - 2 a^T xi (sum MSE minus sum p)."""
        A = np.asarray(a_r).reshape(self.K, -1)
        return float(np.einsum("ki,kij,kj->", A, self.Delta, A) - 2 * np.sum(A * self.xi))

    def penalty(self, a_r, lam: float, gamma: float = 0.0) -> float:
        a_r = np.asarray(a_r).reshape(-1)
        pen = lam * np.abs(a_r).sum()
        if gamma:
            pen += gamma * np.linalg.norm(a_r[self.group_indices()], axis=1).sum()
        return float(pen)

    def objective(self, a_r, lam: float, gamma: float = 0.0) -> float:
        return self.quadratic(a_r) + self.penalty(a_r, lam, gamma)

    def sum_mse(self, a_r) -> float:
        return self.quadratic(a_r) + float(self.p.sum())

    def unconstrained_optimum(self) -> np.ndarray:
        return np.linalg.solve(self.Delta, self.xi[..., None])[..., 0].reshape(-1)


def embed_matrix(M: np.ndarray) -> np.ndarray:
    """[[Re M, -Im M], [Im M, Re M]] for a stack of square matrices."""
    re, im = M.real, M.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def embed_vector(a: np.ndarray) -> np.ndarray:
    """Complex (K, L) weights -> flat real 2KL vector."""
    a = np.atleast_2d(a)
    return np.concatenate([a.real, a.imag], axis=-1).reshape(-1)


def unembed(a_r: np.ndarray, K: int, L: int) -> np.ndarray:
    A = np.asarray(a_r).reshape(K, 2 * L)
    return A[:, :L] + 1j * A[:, L:]


def embed(Delta: np.ndarray, xi: np.ndarray, p) -> RealEmbedding:
    """Build the real problem data from complex Delta_k (K, L, L) and xi_k (K, L)."""
    p = np.asarray(p, dtype=float)
    Dr = embed_matrix(np.asarray(Delta))
    Dr = 0.5 * (Dr + np.swapaxes(Dr, -1, -2))
    xr = np.sqrt(p)[:, None] * np.concatenate([xi.real, xi.imag], axis=-1)
    return RealEmbedding(Delta=Dr, xi=xr, p=p)
