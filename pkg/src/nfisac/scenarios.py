"""Scenario sampling and CSI perturbation for dataset generation.

A ScenarioConfig describes one problem family: fixed BS / RIS geometry,
power and sensing budgets, and two horizontal disks from which CU and
target positions are drawn uniformly (by area).  Every record of a
dataset derives its RNG stream from ``(seed, index)``, so generating
record 7 never requires generating records 0..6 first and parallel
workers cannot disturb each other.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .channels import ChannelSet, build_channels
from .errors import ConfigurationError
from .geometry import Placement, SystemConfig


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to drop one random scene and price its links.

    ``noise_var`` is the CU receiver noise power in watts, either one
    scalar for all CUs or a per-CU tuple.  ``tau`` is the rate weight
    vector; None means equal weights.  Disk centers live in the same
    coordinate frame as the arrays (RIS at the origin by default).
    """

    system: SystemConfig = field(default_factory=SystemConfig)
    K: int = 4
    L: int = 2
    P0: float = 1.0
    rho_th: float = 1.0e4
    noise_var: float | tuple = 1.0e-9
    tau: tuple | None = None
    bs_center: tuple = (-4.0, 2.0, 0.0)
    ris_center: tuple = (0.0, 0.0, 0.0)
    cu_disk_center: tuple = (2.0, 2.0, 0.0)
    cu_disk_radius: float = 1.0
    tgt_disk_center: tuple = (4.0, 2.0, 0.0)
    tgt_disk_radius: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.system, SystemConfig):
            raise ConfigurationError("system must be a SystemConfig")
        for name in ("K", "L", "seed"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ConfigurationError(f"{name} must be a nonnegative integer, got {v}")
            object.__setattr__(self, name, int(v))
        if self.P0 <= 0:
            raise ConfigurationError(f"P0 must be positive, got {self.P0}")
        if self.rho_th < 0:
            raise ConfigurationError(f"rho_th must be nonnegative, got {self.rho_th}")
        for name in ("bs_center", "ris_center", "cu_disk_center", "tgt_disk_center"):
            c = tuple(float(x) for x in getattr(self, name))
            if len(c) != 3:
                raise ConfigurationError(f"{name} must be a 3-vector")
            object.__setattr__(self, name, c)
        for name in ("cu_disk_radius", "tgt_disk_radius"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        nv = self.noise_var
        if np.ndim(nv) == 0:
            nv = float(nv)
            bad = nv <= 0
        else:
            nv = tuple(float(x) for x in nv)
            bad = len(nv) != self.K or any(x <= 0 for x in nv)
        if bad:
            raise ConfigurationError(
                "noise_var must be a positive scalar or a positive tuple of length K"
            )
        object.__setattr__(self, "noise_var", nv)
        if self.tau is not None:
            tau = tuple(float(x) for x in self.tau)
            if len(tau) != self.K or any(x < 0 for x in tau):
                raise ConfigurationError("tau must be nonnegative with length K")
            object.__setattr__(self, "tau", tau)

    def noise_vector(self) -> np.ndarray:
        if np.ndim(self.noise_var) == 0:
            return np.full(self.K, float(self.noise_var))
        return np.asarray(self.noise_var, dtype=float)

    def tau_vector(self) -> np.ndarray:
        if self.tau is None:
            return np.ones(self.K)
        return np.asarray(self.tau, dtype=float)


def _disk_points(rng: np.random.Generator, center, radius: float, count: int) -> np.ndarray:
    """Uniform-by-area draws from a horizontal disk, (count, 3)."""
    r = radius * np.sqrt(rng.random(count))
    ang = 2.0 * np.pi * rng.random(count)
    pts = np.tile(np.asarray(center, dtype=float), (count, 1))
    pts[:, 0] += r * np.cos(ang)
    pts[:, 1] += r * np.sin(ang)
    return pts


def scenario_rng(cfg: ScenarioConfig, index: int, stream: int = 0) -> np.random.Generator:
    """The RNG stream owned by record ``index`` of this config.

    Stream 0 drives placement sampling; callers needing further
    independent randomness for the same record (CSI error draws, solver
    initialization) pass a distinct stream id.
    """
    if int(index) != index or index < 0:
        raise ConfigurationError(f"index must be a nonnegative integer, got {index}")
    if stream == 0:
        return np.random.default_rng([cfg.seed, int(index)])
    return np.random.default_rng([cfg.seed, int(index), int(stream)])


def sample_placement(cfg: ScenarioConfig, index: int) -> Placement:
    """Drop CUs and targets for record ``index``; order-independent."""
    rng = scenario_rng(cfg, index)
    cu = _disk_points(rng, cfg.cu_disk_center, cfg.cu_disk_radius, cfg.K)
    tgt = _disk_points(rng, cfg.tgt_disk_center, cfg.tgt_disk_radius, cfg.L)
    return Placement(
        bs_center=np.asarray(cfg.bs_center),
        ris_center=np.asarray(cfg.ris_center),
        cu_positions=cu,
        tgt_positions=tgt,
    )


def sample_scenario(cfg: ScenarioConfig, index: int) -> tuple[Placement, ChannelSet]:
    """Placement plus synthesized channels for record ``index``."""
    placement = sample_placement(cfg, index)
    channels = build_channels(cfg.system, placement, cfg.noise_vector())
    return placement, channels


def perturb_csi(
    ch: ChannelSet,
    sigma_e2: float,
    rng,
    relative: bool = True,
) -> ChannelSet:
    """Additive circular-Gaussian CSI error on the CU links.

    Only h_ris_cu and h_bs_cu are touched; G and the target channels
    describe quantities the BS is assumed to know exactly.  With
    ``relative=True`` (default) the per-element error variance is
    sigma_e2 * ||h||^2 / dim for each channel vector h, so sigma_e2
    reads as a normalized MSE regardless of path loss; ``relative=False``
    uses sigma_e2 watts per element directly.
    """
    if sigma_e2 < 0:
        raise ConfigurationError(f"sigma_e2 must be nonnegative, got {sigma_e2}")
    if sigma_e2 == 0:
        return ch
    rng = np.random.default_rng(rng)

    def jitter(h: np.ndarray) -> np.ndarray:
        out = np.array(h, dtype=complex)
        for i in range(h.shape[0]):
            dim = h.shape[1]
            if relative:
                var = sigma_e2 * float(np.sum(np.abs(h[i]) ** 2)) / dim
            else:
                var = sigma_e2
            noise = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            out[i] += np.sqrt(var / 2.0) * noise
        return out

    return replace(ch, h_ris_cu=jitter(ch.h_ris_cu), h_bs_cu=jitter(ch.h_bs_cu))
