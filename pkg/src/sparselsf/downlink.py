"""Downlink precoding by duality: LSFP schemes, power allocation and SINR."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .uplink import SINR_CAP, CombinedMoments, interference_sets, partial_lsfd, served_sets

log = logging.getLogger(__name__)

DOWNLINK_SCHEMES = ("FPA", "H-FPA", "V-LSFP", "P-LSFP", "S-LSFP", "SV-LSFP")


@dataclass
class LsfpSolution:
    rho: np.ndarray  # (K,) total power per UE
    omega: np.ndarray  # (K, L) unit-norm directions
    flags: dict = field(default_factory=dict)

    @property
    def b(self) -> np.ndarray:
        return np.sqrt(self.rho)[:, None] * self.omega

    @property
    def rho_kl(self) -> np.ndarray:
        return self.rho[:, None] * np.abs(self.omega) ** 2

    @property
    def association(self) -> list[set[int]]:
        return [set(np.flatnonzero(row != 0).tolist()) for row in self.omega]

    @property
    def served(self) -> list[set[int]]:
        return served_sets(self.association, self.omega.shape[1])


def precoder_from_combiner(v: np.ndarray) -> np.ndarray:
    """Local precoders mirror the normalized local combiners."""
    return v


def normalize_directions(a: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(a, axis=1, keepdims=True)
    if np.any(nrm == 0):
        raise ValueError("cannot normalize an all-zero weight vector")
    return a / nrm


def downlink_sinr(b: np.ndarray, moments: CombinedMoments, sigma2: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-UE downlink SINR with LSFP vectors ``b`` (K, L).

    UE k sees UE i's signal through g_ik, so interference power is
    b_i^H E{g_ik g_ik^H} b_i = b_i^H C[i, k] b_i.
    """
    K = b.shape[0]
    # rx[i, k] = b_i^H C[i, k] b_i
    rx = np.einsum("il,iklm,im->ik", b.conj(), moments.C, b).real
    sig = np.abs(np.einsum("kl,kl->k", b.conj(), moments.mean)) ** 2
    den = rx.sum(axis=0) - sig + sigma2
    sinr = np.zeros(K)
    flagged = np.zeros(K, dtype=bool)
    for k in range(K):
        if not np.any(b[k]):
            flagged[k] = True
        elif den[k] <= 0:
            sinr[k], flagged[k] = SINR_CAP, True
        else:
            sinr[k] = min(sig[k] / den[k], SINR_CAP)
    return sinr, flagged


def downlink_se(sinr, tau_d: int, tau_c: int):
    return tau_d / tau_c * np.log2(1.0 + np.asarray(sinr))


def virtual_uplink_sinr(a_t: np.ndarray, moments: CombinedMoments, p, sigma2: float = 1.0) -> np.ndarray:
    """Uplink SINR of directions ``a_t`` under powers ``p`` (same moments)."""
    p = np.asarray(p, dtype=float)
    s = np.abs(np.einsum("kl,kl->k", a_t.conj(), moments.mean)) ** 2
    # q[k, i] = a_k^H C[k, i] a_k
    q = np.einsum("kl,kilm,km->ki", a_t.conj(), moments.C, a_t).real
    return p * s / (q @ p - p * s + sigma2 * np.sum(np.abs(a_t) ** 2, axis=1))


def _duality_matrix(a_t: np.ndarray, moments: CombinedMoments, target: np.ndarray) -> np.ndarray:
    s = np.abs(np.einsum("kl,kl->k", a_t.conj(), moments.mean)) ** 2
    # c[i, k] = a_i^H C[i, k] a_i
    c = np.einsum("il,iklm,im->ik", a_t.conj(), moments.C, a_t).real
    M = -c.T.copy()
    np.fill_diagonal(M, s / target + s - np.diag(c))
    return M


def duality_power_allocation(a_t: np.ndarray, moments: CombinedMoments, p, sigma2: float = 1.0):
    """Downlink powers that reproduce the virtual uplink SINRs.

    ``a_t`` must have unit-norm rows. Returns (rho, feasible). The balance
    system is the transpose of the uplink one, so sum(rho) = sum(p).
    """
    p = np.asarray(p, dtype=float)
    if not np.allclose(np.linalg.norm(a_t, axis=1), 1.0, atol=1e-10):
        raise ValueError("virtual LSFD directions must have unit norm")
    target = virtual_uplink_sinr(a_t, moments, p, sigma2)
    M = _duality_matrix(a_t, moments, target)
    rho = np.linalg.solve(M, np.full(len(p), sigma2))
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        log.warning("duality power system infeasible; falling back to rho = p")
        return p.copy(), False
    return rho, True


def duality_fixed_point(a_t: np.ndarray, moments: CombinedMoments, p, sigma2: float = 1.0,
                        n_iter: int = 10_000, tol: float = 1e-14) -> np.ndarray:
    """Standard-interference-function iteration for the same powers (test oracle)."""
    p = np.asarray(p, dtype=float)
    target = virtual_uplink_sinr(a_t, moments, p, sigma2)
    s = np.abs(np.einsum("kl,kl->k", a_t.conj(), moments.mean)) ** 2
    c = np.einsum("il,iklm,im->ik", a_t.conj(), moments.C, a_t).real
    rho = np.zeros_like(p)
    for _ in range(n_iter):
        interf = c.T @ rho - np.diag(c) * rho  # sum over i != k of rho_i c[i, k]
        own_leak = np.diag(c) - s
        # rho_k s_k / (interf_k + rho_k own_leak_k + sigma2) = target_k
        new = target * (interf + sigma2) / (s - target * own_leak)
        if np.max(np.abs(new - rho)) <= tol * max(np.max(np.abs(new)), 1e-300):
            return new
        rho = new
    return rho


def centralized_power_allocation(beta: np.ndarray, omega: np.ndarray, M: list[set[int]] | None = None,
                                 vartheta: float = 0.2, kappa: float = -0.4, power_mu: float = 0.5,
                                 rho_max: float = 1.0) -> np.ndarray:
    """Scalable centralized downlink power allocation.

    UE k gets rho_max f_k w_k^-mu / max_{j in M_k} sum_{i in D_j} f_i w_i^(1-mu)
    with f_i = (sum_{l in M_i} beta_il^vartheta)^kappa and w_i the largest
    squared direction entry of UE i. ``M`` defaults to the support of ``omega``.
    """
    K, L = beta.shape
    if M is None:
        M = [set(np.flatnonzero(row != 0).tolist()) for row in omega]
    if any(len(m) == 0 for m in M):
        raise ValueError("every UE needs a nonempty serving set")
    idx = [sorted(m) for m in M]
    f = np.array([np.sum(beta[k, idx[k]] ** vartheta) ** kappa for k in range(K)])
    w = np.array([np.max(np.abs(omega[k, idx[k]]) ** 2) for k in range(K)])
    if np.any(w <= 0):
        raise ValueError("direction has no weight on its serving APs")
    load = np.zeros(L)
    for k in range(K):
        load[idx[k]] += f[k] * w[k] ** (1 - power_mu)
    denom = np.array([load[idx[k]].max() for k in range(K)])
    return rho_max * f * w ** (-power_mu) / denom


def distributed_fpa(beta: np.ndarray, D: list[set[int]], nu: float = 0.5, rho_max: float = 1.0) -> np.ndarray:
    """Per-AP fractional power allocation; returns rho_kl (K, L)."""
    K, L = beta.shape
    rho = np.zeros((K, L))
    for l, Dl in enumerate(D):
        if not Dl:
            continue
        ks = sorted(Dl)
        w = beta[ks, l] ** nu
        rho[ks, l] = rho_max * w / w.sum()
    return rho


def _solution(beta, omega, M, params) -> LsfpSolution:
    rho = centralized_power_allocation(beta, omega, M, **params)
    return LsfpSolution(rho=rho, omega=omega)


def fpa(beta, D, nu=0.5, rho_max=1.0) -> LsfpSolution:
    rho_kl = distributed_fpa(beta, D, nu, rho_max)
    tot = rho_kl.sum(axis=1)
    if np.any(tot == 0):
        raise ValueError("UE without a serving AP")
    return LsfpSolution(rho=tot, omega=np.sqrt(rho_kl) / np.sqrt(tot)[:, None])


def hfpa(beta, D, M, nu=0.5, rho_max=1.0, **power) -> LsfpSolution:
    """FPA directions rescaled by the centralized allocation."""
    omega = fpa(beta, D, nu, rho_max).omega
    return _solution(beta, omega, M, dict(rho_max=rho_max, **power))


def vlsfp(moments: CombinedMoments, p, beta, rho_max=1.0, sigma2: float = 1.0, **power) -> LsfpSolution:
    """Dense virtual O-LSFD directions with centralized power allocation."""
    p = np.asarray(p, dtype=float)
    Delta = np.einsum("i,kilm->klm", p, moments.C) + sigma2 * np.eye(moments.L)
    xi = np.sqrt(p)[:, None] * moments.mean
    a = np.sqrt(p)[:, None] * np.linalg.solve(Delta, xi[..., None])[..., 0]
    omega = normalize_directions(a)
    return _solution(beta, omega, None, dict(rho_max=rho_max, **power))


def plsfp(moments: CombinedMoments, M, beta, rho_max=1.0, sigma2: float = 1.0, **power) -> LsfpSolution:
    """Partial virtual LSFD over P_k with unit weights, solved on M_k."""
    K = moments.K
    a = partial_lsfd(moments, np.ones(K), moments.mean, M, np.ones(K), sigma2)
    omega = normalize_directions(a)
    return _solution(beta, omega, M, dict(rho_max=rho_max, **power))


def slsfp(a_sparse: np.ndarray, beta, rho_max=1.0, **power) -> LsfpSolution:
    """Normalize a sparse virtual LSFD solution and allocate power."""
    omega = normalize_directions(a_sparse)
    return _solution(beta, omega, None, dict(rho_max=rho_max, **power))


def svlsfp(moments: CombinedMoments, p, M, beta, rho_max=1.0, sigma2: float = 1.0, **power) -> LsfpSolution:
    """Virtual LSFD re-solved on a given support (full Delta_k restricted to M_k)."""
    p = np.asarray(p, dtype=float)
    K, L = moments.K, moments.L
    Delta = np.einsum("i,kilm->klm", p, moments.C) + sigma2 * np.eye(L)
    xi = np.sqrt(p)[:, None] * moments.mean
    a = np.zeros((K, L), dtype=complex)
    for k in range(K):
        m = sorted(M[k])
        if not m:
            raise ValueError(f"UE {k} has no serving AP")
        a[k, m] = np.linalg.solve(Delta[k][np.ix_(m, m)], xi[k, m])
    omega = normalize_directions(a)
    return _solution(beta, omega, M, dict(rho_max=rho_max, **power))


__all__ = [
    "DOWNLINK_SCHEMES", "LsfpSolution", "precoder_from_combiner", "normalize_directions",
    "downlink_sinr", "downlink_se", "virtual_uplink_sinr", "duality_power_allocation",
    "duality_fixed_point", "centralized_power_allocation", "distributed_fpa", "fpa", "hfpa",
    "vlsfp", "plsfp", "slsfp", "svlsfp", "interference_sets",
]
