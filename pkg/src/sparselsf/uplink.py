"""Local combining, Monte Carlo LSF statistics and the non-sparse LSFD schemes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import ChannelStatistics, realize_channels
from .pilots import EstimationStatistics, PilotAssignment, estimate_channels

log = logging.getLogger(__name__)

COMBINERS = ("L-MMSE", "MR")
MIN_BLOCKS = 2000
SINR_CAP = 1e12


@dataclass
class CombinedMoments:
    """Sample moments of the receive-combined channels.

    ``C[k, i] = E{g_ki g_ki^H}`` and ``mean[k] = E{g_kk}`` where
    ``g_ki[l] = v_kl^H h_il``. With precoders equal to combiners the same
    arrays give the downlink moments (``C[i, k]`` is E{g_ik g_ik^H}).
    """
    C: np.ndarray  # (K, K, L, L)
    mean: np.ndarray  # (K, L)
    scale: np.ndarray  # (K, L) sqrt(E{|v_bar|^2}) used for normalization
    n_blocks: int

    @property
    def K(self) -> int:
        return self.mean.shape[0]

    @property
    def L(self) -> int:
        return self.mean.shape[1]


@dataclass
class LsfStatistics:
    Delta: np.ndarray  # (K, L, L)
    xi: np.ndarray  # (K, L)
    n_mc: int
    p: np.ndarray
    sigma2: float = 1.0


@dataclass
class LsfdSolution:
    a: np.ndarray  # (K, L) complex
    flags: dict = field(default_factory=dict)

    @property
    def association(self) -> list[set[int]]:
        return [set(np.flatnonzero(row != 0).tolist()) for row in self.a]

    @property
    def served(self) -> list[set[int]]:
        return served_sets(self.association, self.a.shape[1])


def served_sets(M: list[set[int]], L: int) -> list[set[int]]:
    D = [set() for _ in range(L)]
    for k, Mk in enumerate(M):
        for l in Mk:
            D[l].add(k)
    return D


def make_combiner(kind: str, hhat: np.ndarray, est: EstimationStatistics, R: np.ndarray,
                  p: np.ndarray) -> np.ndarray:
    """Unnormalized local combiners v_bar for a chunk, shape (b, K, L, N)."""
    if kind == "MR":
        return hhat.copy()
    if kind != "L-MMSE":
        raise ValueError(f"unknown combiner {kind!r}")
    p = np.asarray(p, dtype=float)
    N = hhat.shape[-1]
    # per-AP constant part: sum_i p_i (R_il - B_il) + sigma^2 I
    fixed = np.einsum("k,klmn->lmn", p, R - est.B) + est.sigma2 * np.eye(N)
    Z = np.einsum("k,bklm,bkln->blmn", p, hhat, hhat.conj()) + fixed[None]
    rhs = np.transpose(hhat, (0, 2, 3, 1))  # (b, L, N, K)
    sol = np.linalg.solve(Z, rhs) * p[None, None, None, :]
    return np.transpose(sol, (0, 3, 1, 2))


def combined_moments(stats: ChannelStatistics, est: EstimationStatistics, assign: PilotAssignment,
                     p, kind: str, n_blocks: int, rng: np.random.Generator,
                     scale: np.ndarray | None = None, chunk: int = 200) -> CombinedMoments:
    """Monte Carlo moments of g_ki over ``n_blocks`` independent coherence blocks.

    Moments are accumulated with unnormalized combiners and rescaled at the
    end, so one pass both estimates E{|v_bar_kl|^2} and the moments. Passing
    ``scale`` reuses normalizers estimated on another sample.
    """
    R = stats.R
    K, L, N, _ = R.shape
    p = np.asarray(p, dtype=float)
    C = np.zeros((K * K, L, L), dtype=complex)
    mean = np.zeros((K, L), dtype=complex)
    norm2 = np.zeros((K, L))
    kk = np.arange(K)
    for h in realize_channels(stats, n_blocks, rng, chunk=chunk):
        hhat = estimate_channels(h, est, assign, rng)
        v = make_combiner(kind, hhat, est, R, p)
        norm2 += np.sum(np.abs(v) ** 2, axis=(0, 3))
        g = np.einsum("bkln,biln->bkil", v.conj(), h)  # (b, K, K, L)
        mean += g[:, kk, kk, :].sum(axis=0)
        G = np.transpose(g, (1, 2, 3, 0)).reshape(K * K, L, -1)
        C += G @ np.swapaxes(G.conj(), 1, 2)
    C = C.reshape(K, K, L, L) / n_blocks
    mean /= n_blocks
    if scale is None:
        scale = np.sqrt(norm2 / n_blocks)
    s = np.where(scale > 0, scale, 1.0)
    C = C / (s[:, None, :, None] * s[:, None, None, :])
    C = 0.5 * (C + np.swapaxes(C.conj(), -1, -2))
    return CombinedMoments(C=C, mean=mean / s, scale=scale, n_blocks=n_blocks)


def lsf_statistics(moments: CombinedMoments, p, sigma2: float = 1.0,
                   min_blocks: int = MIN_BLOCKS) -> LsfStatistics:
    """Delta_k = sum_i p_i E{g_ki g_ki^H} + sigma^2 I and xi_k = sqrt(p_k) E{g_kk}."""
    if moments.n_blocks < min_blocks:
        raise ValueError(f"need at least {min_blocks} Monte Carlo blocks, got {moments.n_blocks}")
    p = np.asarray(p, dtype=float)
    L = moments.L
    Delta = np.einsum("i,kilm->klm", p, moments.C) + sigma2 * np.eye(L)
    Delta = 0.5 * (Delta + np.swapaxes(Delta.conj(), -1, -2))
    xi = np.sqrt(p)[:, None] * moments.mean
    return LsfStatistics(Delta=Delta, xi=xi, n_mc=moments.n_blocks, p=p, sigma2=sigma2)


def olsfd(stats: LsfStatistics, p=None) -> LsfdSolution:
    p = stats.p if p is None else np.asarray(p, dtype=float)
    a = np.sqrt(p)[:, None] * np.linalg.solve(stats.Delta, stats.xi[..., None])[..., 0]
    return LsfdSolution(a=a)


def uplink_sinr(a_k, Delta_k, xi_k) -> tuple[float, bool]:
    """Effective uplink SINR of one UE; returns (sinr, flagged)."""
    a_k = np.asarray(a_k)
    if not np.any(a_k):
        return 0.0, True
    sig = abs(np.vdot(a_k, xi_k)) ** 2
    den = np.vdot(a_k, Delta_k @ a_k).real - sig
    if den <= 0:
        return SINR_CAP, True
    return min(sig / den, SINR_CAP), False


def uplink_sinrs(a: np.ndarray, stats: LsfStatistics) -> tuple[np.ndarray, np.ndarray]:
    out = [uplink_sinr(a[k], stats.Delta[k], stats.xi[k]) for k in range(a.shape[0])]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out])


def spectral_efficiency(sinr, prelog_num: int, tau_c: int):
    return prelog_num / tau_c * np.log2(1.0 + np.asarray(sinr))


def uplink_se(sinr, tau_u: int, tau_c: int):
    return spectral_efficiency(sinr, tau_u, tau_c)


def uplink_mse(a_k, Delta_k, xi_k, p_k: float) -> float:
    a_k = np.asarray(a_k)
    return float(np.vdot(a_k, Delta_k @ a_k).real - 2 * np.sqrt(p_k) * np.vdot(a_k, xi_k).real + p_k)


def interference_sets(M: list[set[int]]) -> list[set[int]]:
    """P_k = {i : M_i and M_k intersect}."""
    return [{i for i, Mi in enumerate(M) if Mi & Mk} for Mk in M]


def partial_lsfd(moments: CombinedMoments, weights, zeta: np.ndarray, M: list[set[int]],
                 c: np.ndarray, sigma2: float = 1.0, full_matrix: bool = False) -> np.ndarray:
    """c_k (sum_{i in P_k} w_i E{g_ki g_ki^H} + sigma^2 I)^-1 zeta_k restricted to M_k."""
    K, L = zeta.shape
    weights = np.asarray(weights, dtype=float)
    P = interference_sets(M)
    a = np.zeros((K, L), dtype=complex)
    for k in range(K):
        if not M[k]:
            raise ValueError(f"UE {k} has no serving AP")
        idx = sorted(P[k])
        S = np.einsum("i,ilm->lm", weights[idx], moments.C[k, idx]) + sigma2 * np.eye(L)
        if full_matrix:
            a[k] = c[k] * np.linalg.solve(S, zeta[k])
            mask = np.zeros(L, dtype=bool)
            mask[sorted(M[k])] = True
            a[k][~mask] = 0
        else:
            m = sorted(M[k])
            a[k, m] = c[k] * np.linalg.solve(S[np.ix_(m, m)], zeta[k, m])
    return a


def plsfd(moments: CombinedMoments, p, M: list[set[int]], sigma2: float = 1.0,
          full_matrix: bool = False) -> LsfdSolution:
    p = np.asarray(p, dtype=float)
    xi = np.sqrt(p)[:, None] * moments.mean
    a = partial_lsfd(moments, p, xi, M, np.sqrt(p), sigma2, full_matrix)
    return LsfdSolution(a=a)


def heuristic_dcc(beta: np.ndarray, assign: PilotAssignment) -> tuple[list[set[int]], list[set[int]]]:
    """Master AP plus the strongest UE per pilot at every AP."""
    K, L = beta.shape
    M = [{int(np.argmax(beta[k]))} for k in range(K)]
    for l in range(L):
        for members in assign.sets:
            if members:
                best = members[int(np.argmax(beta[members, l]))]
                M[best].add(l)
    return M, served_sets(M, L)
