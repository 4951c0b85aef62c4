"""Pilot assignment and per-AP MMSE channel estimation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ChannelStatistics, complex_normal


@dataclass
class PilotAssignment:
    t: np.ndarray  # (K,) pilot index in 0..tau_p-1
    tau_p: int

    @property
    def sets(self) -> list[list[int]]:
        return [list(np.flatnonzero(self.t == s)) for s in range(self.tau_p)]


@dataclass
class EstimationStatistics:
    Psi: np.ndarray  # (tau_p, L, N, N), correlation of the received pilot signal
    B: np.ndarray  # (K, L, N, N), estimate correlation
    A: np.ndarray  # (K, L, N, N), estimator sqrt(tau_p p_p) R Psi^-1
    tau_p: int
    p_p: float
    sigma2: float


def assign_pilots(beta: np.ndarray, tau_p: int) -> PilotAssignment:
    """Balanced greedy pilot assignment.

    The first ``tau_p`` UEs get orthogonal pilots. Every later UE picks,
    among the least-loaded pilots, the one whose current holders have the
    smallest summed gain at that UE's strongest AP.
    """
    K = beta.shape[0]
    if tau_p < 1:
        raise ValueError("tau_p must be >= 1")
    t = np.empty(K, dtype=int)
    load = np.zeros(tau_p, dtype=int)
    for k in range(K):
        if k < tau_p:
            t[k] = k
        else:
            master = int(np.argmax(beta[k]))
            contamination = np.array([beta[:k][t[:k] == s, master].sum() for s in range(tau_p)])
            contamination[load > load.min()] = np.inf
            t[k] = int(np.argmin(contamination))
        load[t[k]] += 1
    return PilotAssignment(t=t, tau_p=tau_p)


def estimation_stats(stats: ChannelStatistics | np.ndarray, assign: PilotAssignment,
                     p_p: float, sigma2: float = 1.0) -> EstimationStatistics:
    R = stats.R if isinstance(stats, ChannelStatistics) else np.asarray(stats)
    K, L, N, _ = R.shape
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    tp = assign.tau_p
    eye = np.eye(N)
    Psi = np.empty((tp, L, N, N), dtype=complex)
    for s in range(tp):
        members = assign.t == s
        Psi[s] = tp * p_p * R[members].sum(axis=0) + sigma2 * eye
    Psi_k = Psi[assign.t]  # (K, L, N, N)
    # R Psi^-1 = (Psi^-1 R)^H since both are Hermitian
    PinvR = np.linalg.solve(Psi_k, R)
    RPinv = np.swapaxes(PinvR.conj(), -1, -2)
    A = np.sqrt(tp * p_p) * RPinv
    B = tp * p_p * RPinv @ R
    B = 0.5 * (B + np.swapaxes(B.conj(), -1, -2))
    return EstimationStatistics(Psi=Psi, B=B, A=A, tau_p=tp, p_p=p_p, sigma2=sigma2)


def received_pilots(h: np.ndarray, assign: PilotAssignment, p_p: float, sigma2: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Despread pilot signals, shape (b, tau_p, L, N)."""
    b, K, L, N = h.shape
    tp = assign.tau_p
    y = np.zeros((b, tp, L, N), dtype=complex)
    np.add.at(y, (slice(None), assign.t), np.sqrt(tp * p_p) * h)
    return y + np.sqrt(sigma2) * complex_normal(rng, y.shape)


def estimate_channels(h: np.ndarray, est: EstimationStatistics, assign: PilotAssignment,
                      rng: np.random.Generator) -> np.ndarray:
    """MMSE estimates for a chunk of channel realizations (b, K, L, N)."""
    y = received_pilots(h, assign, est.p_p, est.sigma2, rng)
    return np.einsum("klmn,bkln->bklm", est.A, y[:, assign.t])
