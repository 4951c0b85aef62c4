"""End-to-end acceptance checks, one reported line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the PASS/FAIL lines are
collected in the "acceptance" section of the terminal summary.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from sparselsf import downlink as dl
from sparselsf import harness
from sparselsf.energy import PowerModelParams, power_total
from sparselsf.geometry import NetworkConfig, correlation_matrices, drop_network
from sparselsf.pilots import assign_pilots, estimation_stats
from sparselsf.power_control import fractional_power_control
from sparselsf.sparse import (SolverConfig, embed, extract_association, grid_minimize, prox_composite,
                              prox_l1, prox_l2, solve_ew, solve_gw, warm_restart)
from sparselsf.sparse.instances import random_instance
from sparselsf.uplink import (LsfStatistics, combined_moments, heuristic_dcc, lsf_statistics, olsfd,
                              uplink_mse, uplink_sinr)

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".acceptance_cache"


def _drop(K, L, N, seed, area=200.0, n_mc=2000):
    cfg = NetworkConfig(L=L, N=N, K=K, area_side=area)
    rng = np.random.default_rng(seed)
    geom = drop_network(cfg, rng)
    stats = correlation_matrices(geom, cfg)
    assign = assign_pilots(geom.beta, min(10, K))
    est = estimation_stats(stats, assign, 0.1)
    p = fractional_power_control(geom.beta, None, 0.5, 0.1)
    mom = combined_moments(stats, est, assign, p, "L-MMSE", n_mc, rng)
    return cfg, geom, stats, assign, p, mom


@pytest.fixture(scope="module")
def desk_summary():
    sc = harness.load_scenario(ROOT / "scenarios" / "desk.json")
    out = CACHE / sc.config_hash()
    t0 = time.perf_counter()
    path = harness.run_scenario(sc, out)  # resumes from the cache if a run exists
    rows, _ = harness.summarize(harness.read_records(path))
    return rows, time.perf_counter() - t0


def _row(rows, scheme, lam=None, gamma=None):
    return next(r for r in rows if r["scheme"] == scheme and r["lambda"] == lam and r["gamma"] == gamma)


@pytest.mark.slow
def test_criterion_01_solver_accuracy(report):
    lambdas, gammas = (1e-4, 1e-2, 1e-1), (0.0, 1e-2)
    bench = harness.Benchmark(K=20, L=40, n_instances=50, lambdas=lambdas, gammas=gammas, seed=101)
    rows, _ = harness.convergence_report(bench)
    worst = max(r["rel_gap"] for r in rows)
    slowest = max(r["wall_time"] for r in rows)
    covered = {(r["solver"], r["lambda"], r["gamma"]) for r in rows}
    expected = {("GW", lam, g) for lam in lambdas for g in gammas} | {("EW", lam, 0.0) for lam in lambdas}
    ok = worst <= 1e-4 and slowest < 10.0 and covered == expected
    report(1, ok, f"{len(rows)} solves on 50 instances, worst gap {worst:.2e}, slowest solve {slowest:.2f}s")


def test_criterion_02_prox_grid(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10):
        u1 = rng.uniform(-2, 2, 1)
        t = rng.uniform(0, 1.5)
        for fn, pen in ((prox_l1, lambda x: t * np.abs(x).sum(1)), (prox_l2, lambda x: t * np.linalg.norm(x, axis=1))):
            g, _ = grid_minimize(lambda x: 0.5 * ((x - u1) ** 2).sum(1) + pen(x), u1, 3.0, 1e-3)
            worst = max(worst, np.max(np.abs(g - fn(u1, t))))
        u2 = rng.uniform(-2, 2, 2)
        t1, t2 = rng.uniform(0, 1, 2)
        for fn, pen in (
            (lambda u: prox_l1(u, t1), lambda x: t1 * np.abs(x).sum(1)),
            (lambda u: prox_l2(u, t2), lambda x: t2 * np.linalg.norm(x, axis=1)),
            (lambda u: prox_composite(u, t1, t2), lambda x: t1 * np.abs(x).sum(1) + t2 * np.linalg.norm(x, axis=1)),
        ):
            g, _ = grid_minimize(lambda x: 0.5 * ((x - u2) ** 2).sum(1) + pen(x), u2, 3.0, 1e-3)
            worst = max(worst, np.max(np.abs(g - fn(u2))))
    wall = time.perf_counter() - t0
    report(2, worst <= 1e-3 and wall < 1.0, f"max deviation from grid argmin {worst:.1e}, {wall:.2f}s")


def test_criterion_03_olsfd_optimality(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst_gain = -np.inf
    worst_mse = 0.0
    for _ in range(100):
        L = int(rng.integers(1, 9))
        x = rng.standard_normal(L) + 1j * rng.standard_normal(L)
        A = rng.standard_normal((L, 2 * L)) + 1j * rng.standard_normal((L, 2 * L))
        D = 3.0 * A @ A.conj().T / (2 * L) + np.eye(L) + np.outer(x, x.conj())
        p = rng.uniform(0.01, 0.1)
        st = LsfStatistics(Delta=D[None], xi=np.sqrt(p) * x[None], n_mc=2000, p=np.array([p]))
        a = olsfd(st).a[0]
        best, _ = uplink_sinr(a, D, st.xi[0])
        for _ in range(100):
            d = rng.standard_normal(L) + 1j * rng.standard_normal(L)
            for t in (1e-3, -1e-3, 1e-1, -1e-1):
                worst_gain = max(worst_gain, uplink_sinr(a + t * d, D, st.xi[0])[0] - best)
        # independent MSE minimizer: real normal equations of the stacked system
        Dr = np.block([[D.real, -D.imag], [D.imag, D.real]])
        xr = np.sqrt(p) * np.concatenate([st.xi[0].real, st.xi[0].imag])
        sol = np.linalg.solve(Dr, xr)
        m = sol[:L] + 1j * sol[L:]
        worst_mse = max(worst_mse, np.linalg.norm(m - a) / np.linalg.norm(a))
        assert uplink_mse(m, D, st.xi[0], p) <= uplink_mse(a, D, st.xi[0], p) * (1 + 1e-12) + 1e-15
    wall = time.perf_counter() - t0
    ok = worst_gain <= 1e-9 and worst_mse <= 1e-9 and wall < 5.0
    report(3, ok, f"largest SINR gain {worst_gain:.1e}, MSE-minimizer mismatch {worst_mse:.1e}, {wall:.2f}s")


def test_criterion_04_duality(report):
    t0 = time.perf_counter()
    worst, excess = 0.0, -np.inf
    rng = np.random.default_rng(4)
    for seed in range(20):
        K, L = int(rng.integers(1, 6)), int(rng.integers(1, 11))
        *_, p, mom = _drop(K, L, 2, seed)
        st = lsf_statistics(mom, p)
        a = dl.normalize_directions(np.linalg.solve(st.Delta, st.xi[..., None])[..., 0])
        rho, feasible = dl.duality_power_allocation(a, mom, p)
        assert feasible
        target = dl.virtual_uplink_sinr(a, mom, p)
        got, _ = dl.downlink_sinr(np.sqrt(rho)[:, None] * a, mom)
        worst = max(worst, np.max(np.abs(got - target) / target))
        excess = max(excess, rho.sum() - p.sum())
    wall = time.perf_counter() - t0
    ok = worst <= 1e-6 and excess <= 1e-9 and wall < 10.0
    report(4, ok, f"max SINR mismatch {worst:.1e}, sum(rho)-sum(p) {excess:.1e}, {wall:.2f}s")


@pytest.mark.slow
def test_criterion_05_desk_uplink(report, desk_summary):
    rows, wall = desk_summary
    o = _row(rows, "O-LSFD")
    s = _row(rows, "S-LSFD", 0.1, 0.0)
    ee, se = s["mean_ee"] / o["mean_ee"], s["mean_se"] / o["mean_se"]
    ok = ee >= 2.5 and se >= 0.95
    report(5, ok, f"S-LSFD/O-LSFD EE ratio {ee:.2f} (>=2.5), SE ratio {se:.3f} (>=0.95), "
                  f"|M_k| {s['mean_serving']:.2f}, run {wall / 60:.1f} min")


@pytest.mark.slow
def test_criterion_06_sparsity_trend(report, desk_summary):
    rows, _ = desk_summary
    sizes = [_row(rows, "S-LSFD", lam, 0.0)["mean_serving"] for lam in (0.0, 1e-4, 1e-2, 1e-1)]
    ok = all(b <= a + 0.5 for a, b in zip(sizes, sizes[1:]))
    report(6, ok, "mean |M_k| over lambda grid " + " -> ".join(f"{v:.2f}" for v in sizes))


@pytest.mark.slow
def test_criterion_07_downlink_ordering(report, desk_summary):
    rows, _ = desk_summary
    q = {s: _row(rows, s)["se_95_likely"] for s in ("FPA", "H-FPA", "V-LSFP", "P-LSFP")}
    r_h, r_v = q["H-FPA"] / q["FPA"], q["V-LSFP"] / q["FPA"]
    ok = q["FPA"] < q["H-FPA"] <= min(q["V-LSFP"], q["P-LSFP"]) and r_h >= 1.2 and r_v >= 1.3
    report(7, ok, "95%-likely SE " + ", ".join(f"{k} {v:.3f}" for k, v in q.items())
           + f"; H-FPA/FPA {r_h:.2f}, V-LSFP/FPA {r_v:.2f}")


def test_criterion_08_conservation(report):
    t0 = time.perf_counter()
    checks = {}
    cfg, geom, stats, assign, p, mom = _drop(10, 16, 4, 8)
    beta = geom.beta
    tr = np.trace(stats.R, axis1=-2, axis2=-1).real / cfg.N
    checks["trace(R)/N = beta"] = np.allclose(tr, beta, rtol=1e-9, atol=0)
    M, D = heuristic_dcc(beta, assign)
    fpa = dl.fpa(beta, D)
    per_ap = fpa.rho_kl.sum(axis=0)
    checks["FPA per-AP sum"] = all(abs(per_ap[l] - 1.0) <= 1e-12 for l in range(cfg.L) if D[l])
    st = lsf_statistics(mom, p)
    sol = solve_ew(embed(st.Delta, st.xi, p), 0.1)
    Ms, _, _ = extract_association(sol)
    schemes = [fpa, dl.hfpa(beta, D, M), dl.vlsfp(mom, p, beta), dl.plsfp(mom, M, beta),
               dl.slsfp(sol.a, beta), dl.svlsfp(mom, p, Ms, beta)]
    checks["unit directions"] = all(np.allclose(np.linalg.norm(s.omega, axis=1), 1.0, atol=1e-12) for s in schemes)
    checks["per-AP power audit"] = all(np.all(s.rho_kl.sum(axis=0) <= 1.0 + 1e-12) for s in schemes)
    params = PowerModelParams()
    ok_add = True
    for s in schemes:
        pb = power_total(params, cfg.N, s.served, s.rho_kl, p, np.ones(cfg.K), np.ones(cfg.K))
        parts = pb.ue.sum() + pb.ap.sum() + pb.fronthaul.sum() + pb.cpu
        ok_add &= abs(pb.total - parts) <= 1e-12 * pb.total and pb.as_dict()["total"] == pb.total
    checks["power breakdown additivity"] = ok_add
    wall = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    report(8, not failed and wall < 120, f"{len(checks)} checks, failed: {failed or 'none'}, {wall:.1f}s")


def test_criterion_09_determinism(report, tmp_path):
    sc = harness.load_scenario(ROOT / "scenarios" / "smoke.json")
    a = harness.run_scenario(sc, tmp_path / "a", threads=1).read_bytes()
    b = harness.run_scenario(sc, tmp_path / "b", threads=1).read_bytes()
    c = harness.run_scenario(sc, tmp_path / "c", threads=2).read_bytes()
    ok = a == b == c and len(a) > 0
    report(9, ok, f"three runs of the smoke scenario byte-identical: {ok} ({len(a)} bytes)")


def test_criterion_10_warm_restart(report):
    rng = np.random.default_rng(10)
    cfg = SolverConfig()
    worst = 0.0
    warm_iters, cold_iters = [], []
    for inst in range(20):
        emb = random_instance(20, 40, rng)[0] if inst < 10 else random_instance(6, 10, rng)[0]
        if inst < 10:
            lam, fn = 0.1, lambda lv, init: solve_ew(emb, lv, cfg, init)
        else:
            lam, fn = 0.1, lambda lv, init: solve_gw(emb, lv, 0.01, cfg, init)
        cold = fn(lam, None)
        warm = warm_restart(fn, lam, cfg)
        worst = max(worst, abs(warm.objective - cold.objective) / abs(cold.objective))
        warm_iters.append(warm.stages[-1]["iterations"])
        cold_iters.append(cold.iterations)
    med_w, med_c = float(np.median(warm_iters)), float(np.median(cold_iters))
    ok = worst <= 1e-6 and med_w < med_c
    report(10, ok, f"max objective mismatch {worst:.1e}, median final-stage iterations {med_w:.0f} vs cold {med_c:.0f}")
