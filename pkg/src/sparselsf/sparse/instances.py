"""Synthetic sum-MSE instances for solver tests and benchmarks."""
from __future__ import annotations

import numpy as np

from .embedding import RealEmbedding, embed


def random_instance(K: int, L: int, rng: np.random.Generator, p: float = 0.1,
                    gain_decades: float = 2.0, peak_gain: float = 30.0,
                    n_interferers: int = 4) -> tuple[RealEmbedding, np.ndarray, np.ndarray]:
    """Random Delta_k, xi_k with per-AP gains log-uniform over ``gain_decades``.

    Delta_k = p xi xi^H / p + sum_j p u_j u_j^H + I mimics a UE's own signal
    plus a few interferers seen through the same per-AP gains. Returns the
    embedding together with the complex (Delta, xi).
    """
    Delta = np.empty((K, L, L), dtype=complex)
    xi = np.empty((K, L), dtype=complex)
    for k in range(K):
        gain = peak_gain * 10.0 ** (-gain_decades * rng.random(L))
        amp = np.sqrt(gain)
        xi[k] = amp * np.exp(2j * np.pi * rng.random(L))
        U = amp[:, None] * (rng.standard_normal((L, n_interferers)) + 1j * rng.standard_normal((L, n_interferers))) / np.sqrt(2)
        # own-signal fluctuation keeps Delta - xi xi^H strictly positive
        fluct = 0.3 * np.diag(gain)
        Delta[k] = p * (np.outer(xi[k], xi[k].conj()) + fluct) + p * U @ U.conj().T + np.eye(L)
    return embed(Delta, xi, np.full(K, p)), Delta, xi
