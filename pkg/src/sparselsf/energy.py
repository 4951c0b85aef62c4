"""Network power consumption and energy efficiency."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PowerModelParams:
    P_cpu_fix: float = 5.0
    P_ap_fix: float = 0.825  # fixed fronthaul power per link
    P_ue_circuit: float = 0.1
    P_ap_circuit: float = 0.2  # per AP antenna
    P_sig: float = 0.01
    P_pro: float = 0.8
    P_cpu_dec: float = 0.8  # W / (Gbit/s)
    P_cpu_cod: float = 0.1  # W / (Gbit/s)
    eta_ue: float = 0.4
    eta_ap: float = 0.4
    bandwidth: float = 20e6
    p_p: float = 0.1
    tau_c: int = 200
    tau_p: int = 10
    tau_u: int = 190
    tau_d: int = 0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not (0 < self.eta_ue <= 1 and 0 < self.eta_ap <= 1):
            raise ValueError("amplifier efficiencies must lie in (0, 1]")
        if self.tau_p + self.tau_u + self.tau_d != self.tau_c:
            raise ValueError("tau_p + tau_u + tau_d must equal tau_c")


@dataclass
class PowerBreakdown:
    ue: np.ndarray  # (K,)
    ap: np.ndarray  # (L,)
    fronthaul: np.ndarray  # (L,)
    cpu: float

    @property
    def total(self) -> float:
        return float(self.ue.sum() + self.ap.sum() + self.fronthaul.sum() + self.cpu)

    def as_dict(self) -> dict:
        return {"ue": float(self.ue.sum()), "ap": float(self.ap.sum()),
                "fronthaul": float(self.fronthaul.sum()), "cpu": float(self.cpu), "total": self.total}


def power_total(params: PowerModelParams, N: int, served, rho_kl, p, se_ul, se_dl,
                ap_sleep: bool = True) -> PowerBreakdown:
    """Evaluate the power model.

    ``served`` is the per-AP list of served UE sets; ``rho_kl`` is (K, L).
    With ``ap_sleep`` an AP that serves nobody draws neither circuit nor
    fronthaul power.
    """
    pr = params
    p = np.asarray(p, dtype=float)
    rho_kl = np.asarray(rho_kl, dtype=float)
    load = np.array([len(D) for D in served], dtype=float)
    L = len(served)
    ue = pr.P_ue_circuit + (pr.tau_p * pr.p_p + pr.tau_u * p) / (pr.tau_c * pr.eta_ue)
    tx = np.array([rho_kl[sorted(D), l].sum() if D else 0.0 for l, D in enumerate(served)]) if L else np.zeros(0)
    ap = N * pr.P_ap_circuit + N * load * pr.P_pro + pr.tau_d / (pr.tau_c * pr.eta_ap) * tx
    fh = pr.P_ap_fix + (pr.tau_u + pr.tau_d) / pr.tau_c * load * pr.P_sig
    if ap_sleep:
        active = load > 0
        ap = np.where(active, ap, 0.0)
        fh = np.where(active, fh, 0.0)
    gbps = pr.bandwidth / 1e9
    cpu = pr.P_cpu_fix + gbps * (np.sum(se_ul) * pr.P_cpu_dec + np.sum(se_dl) * pr.P_cpu_cod)
    return PowerBreakdown(ue=np.atleast_1d(ue), ap=ap, fronthaul=fh, cpu=float(cpu))


def energy_efficiency(se_ul, se_dl, p_tot: float, bandwidth: float) -> float:
    if p_tot <= 0:
        raise ValueError("total power must be positive")
    return float(bandwidth * (np.sum(se_ul) + np.sum(se_dl)) / p_tot)
