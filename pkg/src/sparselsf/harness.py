"""Scenario orchestration: per-drop pipeline, persistence, summaries, solver benchmarks."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import downlink as dl
from .energy import PowerModelParams, energy_efficiency, power_total
from .geometry import NetworkConfig, correlation_matrices, drop_network
from .pilots import assign_pilots, estimation_stats
from .power_control import fractional_power_control
from .sparse import (SolverConfig, embed, extract_association, reference_oracle, solve_ew, solve_gw,
                     warm_restart)
from .sparse.instances import random_instance
from .uplink import (COMBINERS, CombinedMoments, combined_moments, heuristic_dcc, lsf_statistics, olsfd,
                     plsfd, served_sets, uplink_se, uplink_sinrs)

log = logging.getLogger(__name__)

UPLINK_SCHEMES = ("O-LSFD", "P-LSFD", "S-LSFD")
SCHEMES = UPLINK_SCHEMES + dl.DOWNLINK_SCHEMES
SPARSE_SCHEMES = ("S-LSFD", "S-LSFP", "SV-LSFP")
# schemes whose uplink powers (and hence combiners) use all APs
DENSE_POLICY = ("O-LSFD", "S-LSFD", "V-LSFP", "S-LSFP", "SV-LSFP")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    power: PowerModelParams = field(default_factory=PowerModelParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    schemes: tuple[str, ...] = SCHEMES
    lambdas: tuple[float, ...] = (1e-4, 1e-2, 1e-1)
    gammas: tuple[float, ...] = (0.0, 1e-2)
    combiner: str = "L-MMSE"
    n_drops: int = 20
    n_mc: int = 2000
    n_mc_eval: int = 20_000
    seed: int = 0
    p_max: float = 0.1
    theta: float = 0.5
    nu: float = 0.5
    vartheta: float = 0.2
    kappa: float = -0.4
    power_mu: float = 0.5
    rho_max: float = 1.0
    warm_start: bool = True
    ap_sleep: bool = True

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @property
    def power_params(self) -> dict:
        return dict(vartheta=self.vartheta, kappa=self.kappa, power_mu=self.power_mu, rho_max=self.rho_max)


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown field")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def scenario_from_dict(data: dict, **overrides) -> Scenario:
    """Validate a scenario document; errors name the offending field path."""
    data = dict(data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    sub = {"network": NetworkConfig, "power": PowerModelParams, "solver": SolverConfig}
    kwargs: dict[str, Any] = {}
    names = {f.name for f in dataclasses.fields(Scenario)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"scenario.{key}: unknown field")
        if key in sub:
            kwargs[key] = _build(sub[key], value, f"scenario.{key}")
        elif key in ("schemes", "lambdas", "gammas"):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"scenario.{key}: expected a list")
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    sc = Scenario(**kwargs)
    for i, s in enumerate(sc.schemes):
        if s not in SCHEMES:
            raise ConfigError(f"scenario.schemes[{i}]: unknown scheme {s!r}")
    for key in ("lambdas", "gammas"):
        for i, v in enumerate(getattr(sc, key)):
            if not isinstance(v, (int, float)) or v < 0:
                raise ConfigError(f"scenario.{key}[{i}]: must be a nonnegative number")
    if sc.combiner not in COMBINERS:
        raise ConfigError(f"scenario.combiner: must be one of {COMBINERS}")
    for key in ("n_drops", "n_mc", "n_mc_eval"):
        if not isinstance(getattr(sc, key), int) or getattr(sc, key) < 1:
            raise ConfigError(f"scenario.{key}: must be a positive integer")
    if sc.power.tau_p < 1:
        raise ConfigError("scenario.power.tau_p: must be >= 1")
    return sc


def load_scenario(path: str | os.PathLike, **overrides) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(data, **overrides)


# --- per-drop pipeline -------------------------------------------------------

def _rng(sc: Scenario, drop: int, *tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([sc.seed, drop, *tag]))


@dataclass
class _Policy:
    p: np.ndarray
    design: CombinedMoments
    evaluation: CombinedMoments


def _policy(sc, stats, est, assign, p, tag, drop) -> _Policy:
    design = combined_moments(stats, est, assign, p, sc.combiner, sc.n_mc, _rng(sc, drop, tag, 0))
    evaluation = combined_moments(stats, est, assign, p, sc.combiner, sc.n_mc_eval, _rng(sc, drop, tag, 1),
                                  scale=design.scale)
    return _Policy(p, design, evaluation)


def _params(sc: Scenario, direction: str) -> PowerModelParams:
    pr = sc.power
    data = pr.tau_c - pr.tau_p
    if direction == "ul":
        return dataclasses.replace(pr, tau_u=data, tau_d=0)
    return dataclasses.replace(pr, tau_u=0, tau_d=data)


def _record(sc, drop, scheme, direction, se, served_sets_, M, p, rho_kl, flags, lam=None, gamma=None,
            solver=None) -> dict:
    params = _params(sc, direction)
    K = len(se)
    zeros = np.zeros(K)
    se_ul, se_dl = (se, zeros) if direction == "ul" else (zeros, se)
    pb = power_total(params, sc.network.N, served_sets_, rho_kl, p, se_ul, se_dl, ap_sleep=sc.ap_sleep)
    ee = energy_efficiency(se_ul, se_dl, pb.total, params.bandwidth)
    n_serving = [len(m) for m in M]
    return {
        "config_hash": sc.config_hash(), "seed": sc.seed, "code_version": __version__, "drop": drop,
        "scheme": scheme, "direction": direction, "lambda": lam, "gamma": gamma,
        "se": [float(x) for x in se], "ee": ee, "n_serving": n_serving,
        "mean_serving": float(np.mean(n_serving)), "active_aps": int(sum(1 for d in served_sets_ if d)),
        "power": pb.as_dict(), "flags": flags, "solver": solver,
    }


def _sparse_weights(sol, stats, M, dropped):
    """Complex weights with fallback APs filled by their single-AP MSE minimizer."""
    a = sol.a.copy()
    for k in dropped:
        l = next(iter(M[k]))
        a[k, :] = 0
        a[k, l] = np.sqrt(stats.p[k]) * stats.xi[k, l] / stats.Delta[k, l, l].real
    return a


def run_drop(sc: Scenario, drop: int) -> list[dict]:
    """Full pipeline for one network drop; returns records in a fixed order."""
    cfg = sc.network
    geom = drop_network(cfg, _rng(sc, drop, 9))
    stats = correlation_matrices(geom, cfg)
    assign = assign_pilots(geom.beta, sc.power.tau_p)
    est = estimation_stats(stats, assign, sc.power.p_p)
    beta = geom.beta
    K, L = beta.shape
    M_dcc, D_dcc = heuristic_dcc(beta, assign)
    schemes = set(sc.schemes)
    tau = sc.power.tau_c - sc.power.tau_p
    pol = {}
    if schemes & set(DENSE_POLICY):
        pol["dense"] = _policy(sc, stats, est, assign, fractional_power_control(beta, None, sc.theta, sc.p_max), 0, drop)
    if schemes - set(DENSE_POLICY):
        pol["dcc"] = _policy(sc, stats, est, assign, fractional_power_control(beta, M_dcc, sc.theta, sc.p_max), 1, drop)

    records: list[dict] = []
    zero_rho = np.zeros((K, L))

    def ul(scheme, a, policy, lam=None, gamma=None, solver=None, extra_flags=None):
        ev = lsf_statistics(policy.evaluation, policy.p)
        sinr, flagged = uplink_sinrs(a, ev)
        se = uplink_se(sinr, tau, sc.power.tau_c)
        M = [set(np.flatnonzero(row != 0).tolist()) for row in a]
        D = served_sets(M, L)
        flags = {"sinr_flagged": np.flatnonzero(flagged).tolist(), **(extra_flags or {})}
        records.append(_record(sc, drop, scheme, "ul", se, D, M, policy.p, zero_rho, flags, lam, gamma, solver))

    def dl_rec(scheme, sol: dl.LsfpSolution, policy, lam=None, gamma=None, solver=None, extra_flags=None):
        sinr, flagged = dl.downlink_sinr(sol.b, policy.evaluation)
        se = dl.downlink_se(sinr, tau, sc.power.tau_c)
        flags = {"sinr_flagged": np.flatnonzero(flagged).tolist(), **(extra_flags or {})}
        records.append(_record(sc, drop, scheme, "dl", se, sol.served, sol.association, policy.p,
                               sol.rho_kl, flags, lam, gamma, solver))

    if "dense" in pol:
        dense = pol["dense"]
        design_stats = lsf_statistics(dense.design, dense.p)
        if "O-LSFD" in schemes:
            ul("O-LSFD", olsfd(design_stats).a, dense)
        if "V-LSFP" in schemes:
            dl_rec("V-LSFP", dl.vlsfp(dense.design, dense.p, beta, **sc.power_params), dense)
        if schemes & set(SPARSE_SCHEMES):
            emb = embed(design_stats.Delta, design_stats.xi, dense.p)
            for lam in sc.lambdas:
                for gamma in sc.gammas:
                    sol = _solve_sparse(sc, emb, lam, gamma)
                    M, _, dropped = extract_association(sol)
                    a = _sparse_weights(sol, design_stats, M, dropped)
                    info = sol.diagnostics()
                    fl = {"fallback_ues": dropped}
                    if "S-LSFD" in schemes:
                        ul("S-LSFD", a, dense, lam, gamma, info, fl)
                    # the virtual uplink MSE with virtual powers equal to the uplink
                    # powers is the same problem, so its solution is reused
                    if "S-LSFP" in schemes:
                        dl_rec("S-LSFP", dl.slsfp(a, beta, **sc.power_params), dense, lam, gamma, info, fl)
                    if "SV-LSFP" in schemes:
                        dl_rec("SV-LSFP", dl.svlsfp(dense.design, dense.p, M, beta, **sc.power_params),
                               dense, lam, gamma, info, fl)
    if "dcc" in pol:
        dcc = pol["dcc"]
        if "P-LSFD" in schemes:
            ul("P-LSFD", plsfd(dcc.design, dcc.p, M_dcc).a, dcc)
        if "P-LSFP" in schemes:
            dl_rec("P-LSFP", dl.plsfp(dcc.design, M_dcc, beta, **sc.power_params), dcc)
        if "FPA" in schemes:
            dl_rec("FPA", dl.fpa(beta, D_dcc, sc.nu, sc.rho_max), dcc)
        if "H-FPA" in schemes:
            dl_rec("H-FPA", dl.hfpa(beta, D_dcc, M_dcc, sc.nu, **sc.power_params), dcc)
    order = {s: i for i, s in enumerate(SCHEMES)}
    records.sort(key=lambda r: (order[r["scheme"]], r["lambda"] or 0.0, r["gamma"] or 0.0))
    return records


def _solve_sparse(sc: Scenario, emb, lam: float, gamma: float):
    cfg = sc.solver
    if gamma == 0:
        def fn(lv, init):
            return solve_ew(emb, lv, cfg, init)
    else:
        def fn(lv, init):
            return solve_gw(emb, lv, gamma, cfg, init)
    if sc.warm_start and lam > 0:
        return warm_restart(fn, lam, cfg)
    return fn(lam, None)


def _run_drop_isolated(sc: Scenario, drop: int) -> tuple[int, list[dict]]:
    with threadpool_limits(1):
        return drop, run_drop(sc, drop)


def _dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)


def run_scenario(sc: Scenario, out_dir: str | os.PathLike, threads: int = 1) -> Path:
    """Run all drops, appending records in drop order; resumes from the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = out / "results.ndjson"
    manifest_path = out / "manifest.json"
    h = sc.config_hash()
    done: list[int] = []
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("config_hash") != h:
            raise ConfigError(f"{out}: existing results belong to a different configuration")
        done = sorted(manifest.get("completed", []))
    if results.exists():
        keep = [line for line in results.read_text().splitlines()
                if line.strip() and _safe_drop(line) in set(done)]
        results.write_text("".join(x + "\n" for x in keep))
    manifest = {"config_hash": h, "code_version": __version__, "seed": sc.seed, "scenario": sc.to_dict(),
                "n_drops": sc.n_drops, "completed": done}
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=1))
    todo = [d for d in range(sc.n_drops) if d not in set(done)]

    def commit(drop, recs):
        with results.open("a") as fh:
            for r in recs:
                fh.write(_dumps(r) + "\n")
        manifest["completed"] = sorted(manifest["completed"] + [drop])
        tmp = manifest_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(manifest, sort_keys=True, indent=1))
        tmp.replace(manifest_path)
        log.info("drop %d done (%d records)", drop, len(recs))

    if threads <= 1 or len(todo) <= 1:
        for d in todo:
            commit(*_run_drop_isolated(sc, d))
    else:
        # single writer: results are committed strictly in drop order
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_drop_isolated, sc, d) for d in todo]
            for fut in futures:
                commit(*fut.result())
    return results


def _safe_drop(line: str):
    try:
        return json.loads(line)["drop"]
    except (json.JSONDecodeError, KeyError):
        return None


# --- summaries ---------------------------------------------------------------

def nearest_rank(values, q: float) -> float:
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("no values")
    rank = max(1, math.ceil(q * x.size))
    return float(x[rank - 1])


def read_records(path: str | os.PathLike) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def summarize(records: list[dict], n_cdf: int = 200) -> tuple[list[dict], list[dict]]:
    """Per (scheme, direction, lambda, gamma) summary rows and CDF rows."""
    if not records:
        raise ValueError("no records to summarize")
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault((r["scheme"], r["direction"], r["lambda"], r["gamma"]), []).append(r)
    order = {s: i for i, s in enumerate(SCHEMES)}
    keys = sorted(groups, key=lambda k: (order.get(k[0], 99), k[1], k[2] or 0.0, k[3] or 0.0))
    rows, cdf = [], []
    qs = np.linspace(0.0, 1.0, n_cdf)
    for key in keys:
        rs = groups[key]
        se = np.concatenate([r["se"] for r in rs])
        serving = np.concatenate([r["n_serving"] for r in rs])
        rows.append({
            "scheme": key[0], "direction": key[1], "lambda": key[2], "gamma": key[3], "n_drops": len(rs),
            "mean_se": float(se.mean()), "se_95_likely": nearest_rank(se, 0.05),
            "mean_ee": float(np.mean([r["ee"] for r in rs])), "mean_serving": float(serving.mean()),
            "mean_active_aps": float(np.mean([r["active_aps"] for r in rs])),
            "mean_power": float(np.mean([r["power"]["total"] for r in rs])),
        })
        for q in qs:
            cdf.append({"scheme": key[0], "direction": key[1], "lambda": key[2], "gamma": key[3],
                        "quantile": float(q), "se": nearest_rank(se, q)})
    return rows, cdf


def write_csv(rows: list[dict], path: str | os.PathLike):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path


# --- solver benchmark --------------------------------------------------------

@dataclass(frozen=True)
class Benchmark:
    K: int = 20
    L: int = 40
    n_instances: int = 5
    lambdas: tuple[float, ...] = (1e-4, 1e-2, 1e-1)
    gammas: tuple[float, ...] = (0.0, 1e-2)
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)


def load_benchmark(path, seed=None) -> Benchmark:
    data = json.loads(Path(path).read_text())
    if seed is not None:
        data["seed"] = seed
    if "solver" in data:
        data["solver"] = _build(SolverConfig, data["solver"], "benchmark.solver")
    for key in ("lambdas", "gammas"):
        if key in data:
            data[key] = tuple(data[key])
    return _build(Benchmark, data, "benchmark")


def convergence_report(bench: Benchmark) -> tuple[list[dict], list[dict]]:
    """Accuracy traces and timings of both solvers against the reference oracle.

    Returns (per-run rows, per-iteration trace rows). Wall times live only
    here, never in scenario records.
    """
    rows, traces = [], []
    for inst in range(bench.n_instances):
        emb, _, _ = random_instance(bench.K, bench.L, np.random.default_rng([bench.seed, inst]))
        for lam in bench.lambdas:
            for gamma in bench.gammas:
                f_star, _ = reference_oracle(emb, lam, gamma)
                runs = [("GW", lambda: solve_gw(emb, lam, gamma, bench.solver))]
                if gamma == 0:
                    runs.insert(0, ("EW", lambda: solve_ew(emb, lam, bench.solver)))
                for name, fn in runs:
                    t0 = time.perf_counter()
                    sol = fn()
                    wall = time.perf_counter() - t0
                    gap = (sol.objective - f_star) / abs(f_star)
                    rows.append({"instance": inst, "solver": name, "lambda": lam, "gamma": gamma,
                                 "iterations": sol.iterations, "restarts": sol.restarts,
                                 "rel_gap": gap, "wall_time": wall, "converged": sol.converged})
                    for n, f in enumerate(sol.trace):
                        traces.append({"instance": inst, "solver": name, "lambda": lam, "gamma": gamma,
                                       "step": n, "rel_gap": (f - f_star) / abs(f_star)})
    return rows, traces
