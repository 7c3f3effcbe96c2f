"""Communication / sensing figures of merit for a candidate solution.

The effective CU channel folds the reflect path and the direct path:

    h_cu_k = G^H diag(h_ris_cu_k) theta + h_bs_cu_k

and the effective target channel is the reflect path alone.  Rates are
reported in bits (log base 2); solver-internal surrogates use natural logs.
"""

from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet
from .errors import ConfigurationError

POWER_RTOL = 1e-9
SENSING_RTOL = 1e-3
MODULUS_ATOL = 1e-9
PSD_ATOL = 1e-9


@dataclass
class BeamformingSolution:
    """Transmit beams W (M, K), sensing covariance R0 (M, M), RIS phases theta (N,)."""

    W: np.ndarray
    R0: np.ndarray
    theta: np.ndarray

    def power(self) -> float:
        return float(
            np.sum(np.abs(self.W) ** 2) + np.real(np.trace(self.R0))
        )


def effective_cu_channels(ch: ChannelSet, theta: np.ndarray) -> np.ndarray:
    """Effective BS-to-CU channels through the RIS, (K, M)."""
    return (ch.h_ris_cu * theta[None, :]) @ np.conj(ch.G) + ch.h_bs_cu


def effective_tgt_channels(ch: ChannelSet, theta: np.ndarray) -> np.ndarray:
    """Effective BS-to-target channels through the RIS, (L, M)."""
    return (ch.h_ris_tgt * theta[None, :]) @ np.conj(ch.G)


def sinr(ch: ChannelSet, sol: BeamformingSolution) -> np.ndarray:
    """Per-CU SINR under beams W and sensing covariance R0."""
    if np.any(ch.noise_var <= 0):
        raise ConfigurationError("noise variance must be positive")
    h = effective_cu_channels(ch, sol.theta)  # (K, M)
    # cross[k, j] = |h_k^H w_j|^2
    cross = np.abs(np.conj(h) @ sol.W) ** 2
    signal = np.diag(cross).copy()
    interference = cross.sum(axis=1) - signal
    sensing_leak = np.real(np.einsum("km,mn,kn->k", np.conj(h), sol.R0, h))
    return signal / (interference + sensing_leak + ch.noise_var)


def beampattern_gain(ch: ChannelSet, sol: BeamformingSolution) -> np.ndarray:
    """Per-target illumination power h^H (W W^H + R0) h, (L,)."""
    h = effective_tgt_channels(ch, sol.theta)
    if h.shape[0] == 0:
        return np.zeros(0)
    comm = np.sum(np.abs(np.conj(h) @ sol.W) ** 2, axis=1)
    sense = np.real(np.einsum("lm,mn,ln->l", np.conj(h), sol.R0, h))
    return comm + sense


def weighted_sum_rate(gamma: np.ndarray, tau: np.ndarray) -> float:
    return float(np.sum(tau * np.log2(1.0 + gamma)))


@dataclass
class EvalReport:
    """Scores plus per-constraint feasibility of one solution."""

    sinr: np.ndarray
    rates: np.ndarray
    wsr: float
    rho: np.ndarray
    power_used: float
    power_ok: bool
    sensing_ok: bool
    modulus_ok: bool
    psd_ok: bool

    @property
    def feasible(self) -> bool:
        return self.power_ok and self.sensing_ok and self.modulus_ok and self.psd_ok


def evaluate(
    ch: ChannelSet,
    sol: BeamformingSolution,
    P0: float,
    rho_th: float,
    tau: np.ndarray,
) -> EvalReport:
    """Score a solution and check every constraint at its stated tolerance."""
    tau = np.asarray(tau, dtype=float)
    if tau.shape != (ch.K,):
        raise ConfigurationError(f"tau must have shape ({ch.K},)")
    gamma = sinr(ch, sol)
    # a non-PSD R0 can drive the SINR denominator negative; the NaN rate is
    # deliberate there (psd_ok will be False)
    with np.errstate(invalid="ignore"):
        rates = tau * np.log2(1.0 + gamma)
    rho = beampattern_gain(ch, sol)
    power = sol.power()

    herm_gap = float(np.max(np.abs(sol.R0 - np.conj(sol.R0.T)))) if sol.R0.size else 0.0
    eig_min = float(np.min(np.linalg.eigvalsh((sol.R0 + np.conj(sol.R0.T)) / 2)))
    psd_ok = herm_gap <= PSD_ATOL and eig_min >= -PSD_ATOL

    mod = np.abs(sol.theta)
    return EvalReport(
        sinr=gamma,
        rates=rates,
        wsr=float(rates.sum()),
        rho=rho,
        power_used=power,
        power_ok=power <= P0 * (1.0 + POWER_RTOL),
        sensing_ok=bool(np.all(rho >= rho_th * (1.0 - SENSING_RTOL))),
        modulus_ok=bool(np.all(np.abs(mod - 1.0) <= MODULUS_ATOL)),
        psd_ok=psd_ok,
    )
