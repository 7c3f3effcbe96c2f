"""Closed-form auxiliary updates for the rate surrogate.

The weighted sum rate sum_k tau_k ln(1 + gamma_k) is awkward to optimize
directly, so each log ratio is replaced by

    f_k = tau_k (ln(1 + lam_k) - lam_k)
          + 2 sqrt(tau_k (1 + lam_k)) Re{conj(v_k) s_k} - |v_k|^2 D_k

with s_k = h_k^H w_k the useful term and D_k the total received power at
CU k (all beams, sensing leakage, noise).  For fixed beams the surrogate
is maximized by v_k = sqrt(tau_k (1 + lam_k)) s_k / D_k and lam_k equal
to the actual SINR, at which point sum_k f_k collapses back to the exact
weighted sum rate in nats.  Everything here works on effective channels,
so it is agnostic of how the RIS produced them.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class Auxiliaries:
    """Per-user surrogate variables: SINR estimates and detection weights."""

    lam: np.ndarray  # (K,) real, nonnegative
    v: np.ndarray  # (K,) complex


def _received_terms(h_cu, W, R0, noise_var):
    """s_k = h_k^H w_k and D_k = sum_j |h_k^H w_j|^2 + h_k^H R0 h_k + sigma_k^2."""
    cross = np.conj(h_cu) @ W  # (K, K), entry [k, j] = h_k^H w_j
    s = np.diag(cross).copy()
    leak = np.real(np.einsum("km,mn,kn->k", np.conj(h_cu), R0, h_cu))
    D = np.sum(np.abs(cross) ** 2, axis=1) + leak + noise_var
    return s, D


def update_auxiliaries(h_cu, W, R0, noise_var, tau) -> Auxiliaries:
    """Jointly optimal (lam, v) for fixed beams and channels."""
    noise_var = np.asarray(noise_var, dtype=float)
    if np.any(noise_var <= 0):
        raise ConfigurationError("noise variance must be positive")
    s, D = _received_terms(h_cu, W, R0, noise_var)
    signal = np.abs(s) ** 2
    gamma = signal / (D - signal)
    v = np.sqrt(tau * (1.0 + gamma)) * s / D
    return Auxiliaries(lam=gamma, v=v)


def surrogate_value(h_cu, W, R0, noise_var, tau, aux: Auxiliaries) -> float:
    """Value of the surrogate in nats; a lower bound on sum tau ln(1+SINR)."""
    s, D = _received_terms(h_cu, W, R0, np.asarray(noise_var, dtype=float))
    per_user = tau * (np.log1p(aux.lam) - aux.lam)
    per_user = per_user + 2 * np.sqrt(tau * (1.0 + aux.lam)) * np.real(
        np.conj(aux.v) * s
    )
    per_user = per_user - np.abs(aux.v) ** 2 * D
    return float(np.sum(per_user))
