"""Accelerated proximal solvers for the element-wise and group-wise sparse problems."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .embedding import RealEmbedding, unembed
from .prox import prox_composite, prox_l1

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    step_mu: float | None = None  # None: 1/(2 lambda_max) per block
    n_max: int = 10_000
    tol: float = 1e-10
    max_sweeps: int = 1_000
    inner_max: int | None = None  # per-group iteration cap, defaults to n_max
    backtrack: float = 0.5
    restart: bool = True
    eta: float = 0.5
    lam_bar: float | None = None
    lam_bar_factor: float = 10.0

    def __post_init__(self):
        if self.step_mu is not None and self.step_mu <= 0:
            raise ValueError("step_mu must be positive")
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack must lie in (0, 1)")


@dataclass
class SparseSolution:
    a_r: np.ndarray
    K: int
    L: int
    objective: float
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    restarts: int = 0
    converged: bool = True
    pre_threshold: np.ndarray | None = None  # (K, L) |a_kl| before the last prox
    stages: list[dict] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def a(self) -> np.ndarray:
        return unembed(self.a_r, self.K, self.L)

    @property
    def support(self) -> np.ndarray:
        A = self.a_r.reshape(self.K, 2, self.L)
        return (A[:, 0] != 0) | (A[:, 1] != 0)

    def diagnostics(self) -> dict:
        return {"iterations": int(self.iterations), "restarts": int(self.restarts),
                "converged": bool(self.converged), "objective": float(self.objective),
                "stages": [dict(s) for s in self.stages]}


def _check_finite(value, where: str, it: int):
    if not np.all(np.isfinite(value)):
        raise SolverError(f"objective diverged in {where} at iteration {it}; step size too large?")


def _complex_magnitude(v_r: np.ndarray, K: int, L: int) -> np.ndarray:
    return np.abs(unembed(v_r, K, L))


def solve_ew(emb: RealEmbedding, lam: float, cfg: SolverConfig = SolverConfig(),
             init: np.ndarray | None = None) -> SparseSolution:
    """Element-wise problem: K independent l1-penalized quadratics.

    All UE subproblems advance in lock step; a UE stops updating once its
    relative objective change drops below ``cfg.tol``.
    """
    t0 = time.perf_counter()
    K, L = emb.K, emb.L
    D, x = emb.Delta, emb.xi
    if cfg.step_mu is None:
        mu = 1.0 / (2.0 * np.linalg.eigvalsh(D)[:, -1])
    else:
        mu = np.full(K, cfg.step_mu)
    a = (emb.unconstrained_optimum() if init is None else np.array(init, dtype=float)).reshape(K, 2 * L)

    def obj(v):
        return np.einsum("ki,kij,kj->k", v, D, v) - 2 * np.sum(v * x, axis=1) + lam * np.abs(v).sum(axis=1)

    def step(y):
        G = y - mu[:, None] * (2 * (np.einsum("kij,kj->ki", D, y) - x))
        return G, prox_l1(G, (mu * lam)[:, None])

    F = obj(a)
    a_prev = a.copy()
    n = np.ones(K)
    active = np.ones(K, dtype=bool)
    iters = np.zeros(K, dtype=int)
    restarts = 0
    G_last = a.copy()
    trace = [float(F.sum())]
    for it in range(cfg.n_max):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        beta = ((n[idx] - 1) / (n[idx] + 2))[:, None]
        y = a[idx] + beta * (a[idx] - a_prev[idx])
        Dk, xk, mk = D[idx], x[idx], mu[idx]
        G = y - mk[:, None] * (2 * (np.einsum("kij,kj->ki", Dk, y) - xk))
        cand = prox_l1(G, (mk * lam)[:, None])
        Fc = np.einsum("ki,kij,kj->k", cand, Dk, cand) - 2 * np.sum(cand * xk, axis=1) + lam * np.abs(cand).sum(axis=1)
        _check_finite(Fc, "solve_ew", it)
        if cfg.restart:
            bad = Fc > F[idx]
            if bad.any():
                restarts += int(bad.sum())
                b = idx[bad]
                Gb, cb = step(a)
                G[bad], cand[bad] = Gb[b], cb[b]
                Fc[bad] = obj(cb)[b]
                n[b] = 1
        rel = np.abs(F[idx] - Fc) / np.maximum(np.abs(F[idx]), 1e-300)
        a_prev[idx] = a[idx]
        a[idx] = cand
        G_last[idx] = G
        F[idx] = Fc
        n[idx] += 1
        iters[idx] += 1
        active[idx[rel < cfg.tol]] = False
        trace.append(float(F.sum()))
    sol = SparseSolution(
        a_r=a.reshape(-1), K=K, L=L, objective=float(F.sum()), trace=trace,
        iterations=int(iters.sum()), restarts=restarts, converged=not active.any(),
        pre_threshold=_complex_magnitude(G_last.reshape(-1), K, L),
    )
    sol.wall_time = time.perf_counter() - t0
    return sol


def gram_factor(emb: RealEmbedding) -> tuple[np.ndarray, np.ndarray]:
    """X with X^T X = Delta (block upper-triangular) and xi_bar = X^-T xi."""
    n = 2 * emb.L
    X = np.zeros((emb.dim, emb.dim))
    xi_bar = np.empty(emb.dim)
    for k in range(emb.K):
        try:
            Lc = np.linalg.cholesky(emb.Delta[k])
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"Delta block {k} is not positive definite; corrupt statistics?") from exc
        sl = slice(k * n, (k + 1) * n)
        X[sl, sl] = Lc.T
        xi_bar[sl] = solve_triangular(Lc, emb.xi[k], lower=True)
    return X, xi_bar


def _group_solve(Q, c, x0, lam, gamma, mu, cfg: SolverConfig, n_max: int):
    """Accelerated prox-gradient with backtracking on x^T Q x - 2 c^T x + penalties.

    Returns (x, iterations, restarts, step, pre-prox point).
    """

    def smooth(v):
        return v @ Q @ v - 2 * c @ v

    def total(v):
        return smooth(v) + lam * np.abs(v).sum() + gamma * np.linalg.norm(v)

    x = x0.copy()
    x_prev = x.copy()
    Fx = total(x)
    n = 1
    restarts = 0
    G = x
    it = 0
    for it in range(1, n_max + 1):
        beta = (n - 1) / (n + 2)
        y = x + beta * (x - x_prev)
        gy = 2 * (Q @ y - c)
        fy = smooth(y)
        while True:
            G = y - mu * gy
            cand = prox_composite(G, mu * lam, mu * gamma)
            d = cand - y
            if smooth(cand) <= fy + gy @ d + (d @ d) / (2 * mu) + 1e-12 * abs(fy):
                break
            mu *= cfg.backtrack
        Fc = total(cand)
        if not np.isfinite(Fc):
            raise SolverError(f"objective diverged in solve_gw inner loop at iteration {it}")
        if cfg.restart and Fc > Fx and n > 1:
            restarts += 1
            n = 1
            x_prev = x.copy()
            continue
        rel = abs(Fx - Fc) / max(abs(Fx), 1e-300)
        x_prev, x, Fx = x, cand, Fc
        n += 1
        if rel < cfg.tol:
            break
    return x, it, restarts, mu, G


def solve_gw(emb: RealEmbedding, lam: float, gamma: float, cfg: SolverConfig = SolverConfig(),
             init: np.ndarray | None = None) -> SparseSolution:
    """Group-wise problem by block-coordinate descent over APs.

    The partial residual of a group is formed once per visit and held
    fixed while that group's inner iterations run.
    """
    t0 = time.perf_counter()
    K, L = emb.K, emb.L
    X, xi_bar = gram_factor(emb)
    groups = emb.group_indices()
    Xg = [np.ascontiguousarray(X[:, g]) for g in groups]
    Qg = [Xl.T @ Xl for Xl in Xg]
    if cfg.step_mu is None:
        mus = [1.0 / (2.0 * np.max(np.diag(Q))) for Q in Qg]
    else:
        mus = [cfg.step_mu] * L
    inner_max = cfg.inner_max or cfg.n_max
    a = (emb.unconstrained_optimum() if init is None else np.array(init, dtype=float)).copy()
    z = xi_bar - X @ a
    F = emb.objective(a, lam, gamma)
    trace = [F]
    iterations = restarts = 0
    converged = False
    G_last = a.copy()
    for sweep in range(cfg.max_sweeps):
        for l in range(L):
            g = groups[l]
            x = a[g]
            r = z + Xg[l] @ x
            c = Xg[l].T @ r
            x_new, it, rs, mus[l], G = _group_solve(Qg[l], c, x, lam, gamma, mus[l], cfg, inner_max)
            iterations += it
            restarts += rs
            a[g] = x_new
            G_last[g] = G
            z = r - Xg[l] @ x_new
        F_new = emb.objective(a, lam, gamma)
        _check_finite(F_new, "solve_gw", sweep)
        trace.append(F_new)
        rel = abs(F - F_new) / max(abs(F), 1e-300)
        F = F_new
        if rel < cfg.tol:
            converged = True
            break
    sol = SparseSolution(
        a_r=a, K=K, L=L, objective=F, trace=trace, iterations=iterations, restarts=restarts,
        converged=converged, pre_threshold=_complex_magnitude(G_last, K, L),
    )
    sol.wall_time = time.perf_counter() - t0
    return sol


def warm_restart(solve_fn: Callable[..., SparseSolution], lam: float, cfg: SolverConfig = SolverConfig(),
                 init: np.ndarray | None = None) -> SparseSolution:
    """Continuation on the l1 weight from lam_bar down to ``lam``.

    ``solve_fn(lam, init)`` solves one instance; each stage is seeded with
    the previous stage's solution.
    """
    lam_bar = cfg.lam_bar if cfg.lam_bar is not None else cfg.lam_bar_factor * lam
    if lam_bar < lam:
        raise ValueError("lam_bar must be >= lam")
    t0 = time.perf_counter()
    lam_p = lam_bar
    stages = []
    total_iter = total_restart = 0
    trace: list[float] = []
    x = init
    while True:
        sol = solve_fn(lam_p, x)
        stages.append({"lam": float(lam_p), "iterations": int(sol.iterations), "objective": float(sol.objective)})
        total_iter += sol.iterations
        total_restart += sol.restarts
        trace.extend(sol.trace)
        x = sol.a_r
        if lam_p <= lam:
            break
        lam_p = max(cfg.eta * lam_p, lam)
    sol = replace(sol, trace=trace, iterations=total_iter, restarts=total_restart, stages=stages)
    sol.wall_time = time.perf_counter() - t0
    return sol


def extract_association(sol: SparseSolution, fallback: bool = True):
    """Serving sets from the hard-zero pattern of the solution.

    Returns (M, D, fallback_ues). A UE left without any AP keeps the AP with
    the largest pre-threshold magnitude when ``fallback`` is set.
    """
    supp = sol.support
    M = [set(np.flatnonzero(row).tolist()) for row in supp]
    dropped = []
    if fallback:
        for k, Mk in enumerate(M):
            if not Mk:
                ref = sol.pre_threshold if sol.pre_threshold is not None else np.abs(sol.a)
                M[k] = {int(np.argmax(ref[k]))}
                dropped.append(k)
    D = [set() for _ in range(sol.L)]
    for k, Mk in enumerate(M):
        for l in Mk:
            D[l].add(k)
    return M, D, dropped
