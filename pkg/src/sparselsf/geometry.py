"""Network drops, large-scale fading and spatially correlated Rayleigh channels.

Large-scale fading coefficients are stored *relative to the receiver noise
power*, so the noise variance used everywhere downstream is 1 and transmit
powers stay in watts.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

log = logging.getLogger(__name__)


def db2pow(x):
    return 10.0 ** (np.asarray(x) / 10.0)


def pow2db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class NetworkConfig:
    L: int = 40
    N: int = 4
    K: int = 20
    area_side: float = 500.0
    # 3GPP UMi-style pathloss: pl0_db - slope * log10(d / 1 m)
    pl0_db: float = -30.5
    pl_slope: float = 36.7
    shadowing_std_db: float = 4.0
    # vertical AP-UE offset; also acts as the minimum distance floor
    min_distance: float = 10.0
    bandwidth: float = 20e6
    noise_figure_db: float = 7.0
    asd_azimuth_deg: float = 10.0
    asd_elevation_deg: float = 10.0
    elevation_attenuation: bool = False
    antenna_spacing: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("L", "N", "K"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.area_side <= 0:
            raise ValueError("area_side must be > 0")
        if self.asd_azimuth_deg <= 0 or self.asd_elevation_deg <= 0:
            raise ValueError("angular standard deviations must be > 0")
        if self.min_distance <= 0:
            raise ValueError("min_distance must be > 0")

    @property
    def noise_power_dbw(self) -> float:
        return -204.0 + pow2db(self.bandwidth) + self.noise_figure_db

    def pathloss_db(self, d):
        return self.pl0_db - self.pl_slope * np.log10(d)


@dataclass
class NetworkGeometry:
    ap_positions: np.ndarray  # (L, 2)
    ue_positions: np.ndarray  # (K, 2)
    distances: np.ndarray  # (K, L) 3-D distance under wrap-around
    angles: np.ndarray  # (K, L) azimuth of UE seen from nearest AP image
    elevations: np.ndarray  # (K, L)
    beta: np.ndarray  # (K, L) gain over noise, linear
    seed: int | None = None

    @property
    def K(self) -> int:
        return self.ue_positions.shape[0]

    @property
    def L(self) -> int:
        return self.ap_positions.shape[0]


@dataclass
class ChannelStatistics:
    R: np.ndarray  # (K, L, N, N) complex
    beta: np.ndarray  # (K, L)
    clip_events: int = 0

    @property
    def N(self) -> int:
        return self.R.shape[-1]


_WRAP = np.array([(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)], dtype=float)


def wrapped_offsets(ue_positions, ap_positions, area_side):
    """Return the (K, L, 2) vectors from the closest AP image to each UE."""
    images = ap_positions[None, :, :] + area_side * _WRAP[:, None, :]  # (9, L, 2)
    diff = ue_positions[:, None, None, :] - images[None, :, :, :]  # (K, 9, L, 2)
    dist = np.hypot(diff[..., 0], diff[..., 1])
    best = np.argmin(dist, axis=1)  # (K, L)
    k_idx, l_idx = np.meshgrid(
        np.arange(ue_positions.shape[0]), np.arange(ap_positions.shape[0]), indexing="ij"
    )
    return diff[k_idx, best, l_idx]


def geometry_from_positions(cfg: NetworkConfig, ue_positions, ap_positions, shadowing_db=None, seed=None):
    ue_positions = np.atleast_2d(np.asarray(ue_positions, dtype=float))
    ap_positions = np.atleast_2d(np.asarray(ap_positions, dtype=float))
    vec = wrapped_offsets(ue_positions, ap_positions, cfg.area_side)
    horizontal = np.hypot(vec[..., 0], vec[..., 1])
    distances = np.sqrt(horizontal**2 + cfg.min_distance**2)
    angles = np.arctan2(vec[..., 1], vec[..., 0])
    elevations = np.arctan2(cfg.min_distance, horizontal)
    if shadowing_db is None:
        shadowing_db = np.zeros_like(distances)
    gain_db = cfg.pathloss_db(distances) + shadowing_db
    beta = db2pow(gain_db - cfg.noise_power_dbw)
    return NetworkGeometry(ap_positions, ue_positions, distances, angles, elevations, beta, seed)


def drop_network(cfg: NetworkConfig, rng: np.random.Generator | None = None) -> NetworkGeometry:
    """Drop L APs and K UEs uniformly on the square and draw shadowing."""
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    ap = rng.uniform(0.0, cfg.area_side, size=(cfg.L, 2))
    ue = rng.uniform(0.0, cfg.area_side, size=(cfg.K, 2))
    shadow = cfg.shadowing_std_db * rng.standard_normal((cfg.K, cfg.L))
    return geometry_from_positions(cfg, ue, ap, shadow, seed=cfg.rng_seed)


def local_scattering(N: int, azimuth: float, asd: float, antenna_spacing: float = 0.5,
                     elevation: float | None = None, esd: float | None = None) -> np.ndarray:
    """Gaussian local scattering correlation (unit trace / N) for a ULA.

    Small-spread closed form. When an elevation spread is given the
    off-diagonal entries get an extra Gaussian attenuation along the
    elevation derivative of the array phase.
    """
    n = np.arange(N)
    dist = (n[:, None] - n[None, :]) * antenna_spacing
    cos_el = 1.0 if elevation is None else np.cos(elevation)
    phase = np.exp(1j * 2 * np.pi * dist * np.sin(azimuth) * cos_el)
    atten = np.exp(-0.5 * (asd * 2 * np.pi * dist * np.cos(azimuth) * cos_el) ** 2)
    if elevation is not None and esd is not None:
        atten = atten * np.exp(-0.5 * (esd * 2 * np.pi * dist * np.sin(azimuth) * np.sin(elevation)) ** 2)
    R = phase * atten
    return 0.5 * (R + R.conj().T)


def correlation_matrices(geom: NetworkGeometry, cfg: NetworkConfig) -> ChannelStatistics:
    K, L, N = geom.K, geom.L, cfg.N
    asd = np.deg2rad(cfg.asd_azimuth_deg)
    esd = np.deg2rad(cfg.asd_elevation_deg) if cfg.elevation_attenuation else None
    R = np.empty((K, L, N, N), dtype=complex)
    clips = 0
    for k in range(K):
        for l in range(L):
            el = geom.elevations[k, l] if cfg.elevation_attenuation else None
            Rn = local_scattering(N, geom.angles[k, l], asd, cfg.antenna_spacing, el, esd)
            w, U = np.linalg.eigh(Rn)
            if w.min() < 0:
                clips += 1
                w = np.clip(w, 0.0, None)
                Rn = (U * w) @ U.conj().T
                Rn = 0.5 * (Rn + Rn.conj().T)
                Rn *= N / np.trace(Rn).real
            R[k, l] = geom.beta[k, l] * Rn
    if clips:
        log.info("clipped negative eigenvalues in %d correlation matrices", clips)
    return ChannelStatistics(R=R, beta=geom.beta.copy(), clip_events=clips)


def psd_sqrt(R: np.ndarray) -> np.ndarray:
    """Hermitian square root of a stack of PSD matrices."""
    w, U = np.linalg.eigh(R)
    # eigenvalues at round-off level would otherwise leak sqrt(eps) noise
    floor = R.shape[-1] * np.finfo(float).eps * np.abs(w).max(axis=-1, keepdims=True)
    w = np.sqrt(np.where(w > floor, w, 0.0))
    return (U * w[..., None, :]) @ np.swapaxes(U.conj(), -1, -2)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def realize_channels(stats: ChannelStatistics | np.ndarray, n_blocks: int, rng: np.random.Generator,
                     chunk: int = 256) -> Iterator[np.ndarray]:
    """Yield chunks of channel realizations of shape (b, K, L, N)."""
    R = stats.R if isinstance(stats, ChannelStatistics) else np.asarray(stats)
    root = psd_sqrt(R)
    done = 0
    while done < n_blocks:
        b = min(chunk, n_blocks - done)
        z = complex_normal(rng, (b,) + R.shape[:-1])
        yield np.einsum("klmn,bkln->bklm", root, z)
        done += b


# --- snapshots ---------------------------------------------------------------

def _encode(x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return {"re": x.real.tolist(), "im": x.imag.tolist()}
    return x.tolist()


def _decode(x):
    if isinstance(x, dict) and set(x) == {"re", "im"}:
        return np.asarray(x["re"]) + 1j * np.asarray(x["im"])
    return np.asarray(x)


def snapshot(cfg: NetworkConfig, geom: NetworkGeometry, stats: ChannelStatistics | None = None) -> str:
    doc = {
        "seed": cfg.rng_seed,
        "config": asdict(cfg),
        "geometry": {
            "ap_positions": _encode(geom.ap_positions),
            "ue_positions": _encode(geom.ue_positions),
            "distances": _encode(geom.distances),
            "angles": _encode(geom.angles),
            "elevations": _encode(geom.elevations),
            "beta": _encode(geom.beta),
        },
    }
    if stats is not None:
        doc["statistics"] = {"R": _encode(stats.R), "clip_events": stats.clip_events}
    return json.dumps(doc, sort_keys=True)


def load_snapshot(text: str):
    doc = json.loads(text)
    cfg = NetworkConfig(**doc["config"])
    g = {k: _decode(v) for k, v in doc["geometry"].items()}
    geom = NetworkGeometry(seed=doc["seed"], **g)
    stats = None
    if "statistics" in doc:
        stats = ChannelStatistics(R=_decode(doc["statistics"]["R"]), beta=geom.beta.copy(),
                                  clip_events=doc["statistics"]["clip_events"])
    return cfg, geom, stats
