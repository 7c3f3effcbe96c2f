"""RIS phase optimization on the unit-modulus circle manifold.

The phase subproblem collects the theta-dependent part of the rate
surrogate into

    f_R(theta) = theta^H B theta - 2 Re{theta^H eta}
                 + (penalty/2) * sum_l ((rho_th - theta^H A_l theta)_+)^2

with B and every A_l Hermitian PSD, and minimizes it by conjugate
gradient on the product of N unit circles.  B and A_l are Gram matrices
(B = C C^H, A_l = D_l D_l^H), so they are stored and applied in factored
form; N x N matrices are only materialized on demand.

Gradient convention: euclidean_gradient returns df/d(conj(theta)), so the
directional derivative along a perturbation delta is 2 Re <grad, delta>.
"""

from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelSet
from .errors import ConfigurationError
from .metrics import effective_cu_channels


def _psd_factor(mat: np.ndarray, name: str) -> np.ndarray:
    """Factor a Hermitian PSD matrix as F F^H via eigendecomposition."""
    herm_gap = np.max(np.abs(mat - np.conj(mat.T))) if mat.size else 0.0
    scale = max(np.max(np.abs(mat)), 1.0) if mat.size else 1.0
    if herm_gap > 1e-9 * scale:
        raise ConfigurationError(f"{name} must be Hermitian")
    vals, vecs = np.linalg.eigh((mat + np.conj(mat.T)) / 2)
    if vals.size and vals.min() < -1e-9 * max(vals.max(), 1.0):
        raise ConfigurationError(f"{name} must be positive semidefinite")
    keep = vals > 0
    return vecs[:, keep] * np.sqrt(vals[keep])[None, :]


@dataclass
class ThetaSubproblem:
    """Factored data of the penalized phase objective.

    B_factor:  (N, rB) with B = B_factor B_factor^H
    A_factors: list of (N, r_l) with A_l = D_l D_l^H
    """

    B_factor: np.ndarray
    A_factors: list
    eta: np.ndarray
    rho_th: float
    penalty: float

    @classmethod
    def from_dense(cls, B, A_list, eta, rho_th, penalty) -> "ThetaSubproblem":
        return cls(
            B_factor=_psd_factor(np.asarray(B, dtype=complex), "B"),
            A_factors=[_psd_factor(np.asarray(A, dtype=complex), "A") for A in A_list],
            eta=np.asarray(eta, dtype=complex),
            rho_th=float(rho_th),
            penalty=float(penalty),
        )

    @property
    def N(self) -> int:
        return self.eta.shape[0]

    @property
    def B(self) -> np.ndarray:
        return self.B_factor @ np.conj(self.B_factor.T)

    def A(self, l: int) -> np.ndarray:
        D = self.A_factors[l]
        return D @ np.conj(D.T)

    def B_dot(self, theta: np.ndarray) -> np.ndarray:
        return self.B_factor @ (np.conj(self.B_factor.T) @ theta)

    def A_dot(self, l: int, theta: np.ndarray) -> np.ndarray:
        D = self.A_factors[l]
        return D @ (np.conj(D.T) @ theta)

    def gains(self, theta: np.ndarray) -> np.ndarray:
        """theta^H A_l theta for every l, (L,)."""
        return np.array(
            [np.sum(np.abs(np.conj(D.T) @ theta) ** 2) for D in self.A_factors]
        )


def assemble_theta_subproblem(
    ch: ChannelSet,
    W: np.ndarray,
    R0: np.ndarray,
    lam: np.ndarray,
    v: np.ndarray,
    tau: np.ndarray,
    rho_th: float,
    penalty: float,
) -> ThetaSubproblem:
    """Collect the theta-dependent surrogate terms at anchors (W, R0).

    With H_k = diag(conj(h_ris_cu_k)) G and Q = W W^H + R0:

        B   = sum_k |v_k|^2 H_k Q H_k^H
        eta = sum_k sqrt(tau_k (1 + lam_k)) conj(v_k) H_k w_k
              - |v_k|^2 H_k Q h_bs_cu_k

    (the cross term couples the reflect path with the direct link, hence
    the direct channel h_bs_cu in eta).  The sensing quadratics are
    A_l = H_tgt_l Q H_tgt_l^H with H_tgt_l = diag(conj(h_ris_tgt_l)) G.
    """
    Q = W @ np.conj(W.T) + R0
    Q = (Q + np.conj(Q.T)) / 2
    vals, vecs = np.linalg.eigh(Q)
    keep = vals > max(vals.max(initial=0.0), 1.0) * 1e-300
    S = vecs[:, keep] * np.sqrt(np.maximum(vals[keep], 0.0))[None, :]  # Q = S S^H

    K, N = ch.K, ch.N
    cols = []
    eta = np.zeros(N, dtype=complex)
    for k in range(K):
        Hk = np.conj(ch.h_ris_cu[k])[:, None] * ch.G  # (N, M)
        cols.append(abs(v[k]) * (Hk @ S))
        eta += np.sqrt(tau[k] * (1.0 + lam[k])) * np.conj(v[k]) * (Hk @ W[:, k])
        eta -= abs(v[k]) ** 2 * (Hk @ (Q @ ch.h_bs_cu[k]))
    B_factor = np.concatenate(cols, axis=1) if cols else np.zeros((N, 0), dtype=complex)

    A_factors = []
    for l in range(ch.L):
        Hl = np.conj(ch.h_ris_tgt[l])[:, None] * ch.G
        A_factors.append(Hl @ S)
    return ThetaSubproblem(
        B_factor=B_factor,
        A_factors=A_factors,
        eta=eta,
        rho_th=float(rho_th),
        penalty=float(penalty),
    )


def penalized_objective(sub: ThetaSubproblem, theta: np.ndarray) -> float:
    quad = float(np.real(np.vdot(theta, sub.B_dot(theta))))
    lin = 2.0 * float(np.real(np.vdot(theta, sub.eta)))
    deficit = np.maximum(sub.rho_th - sub.gains(theta), 0.0)
    return quad - lin + 0.5 * sub.penalty * float(np.sum(deficit**2))


def sensing_deficit(sub: ThetaSubproblem, theta: np.ndarray) -> float:
    """Largest unmet sensing gain (rho_th - theta^H A_l theta)_+."""
    if not sub.A_factors:
        return 0.0
    return float(np.max(np.maximum(sub.rho_th - sub.gains(theta), 0.0)))


def euclidean_gradient(sub: ThetaSubproblem, theta: np.ndarray) -> np.ndarray:
    grad = sub.B_dot(theta) - sub.eta
    for l, D in enumerate(sub.A_factors):
        short = sub.rho_th - float(np.sum(np.abs(np.conj(D.T) @ theta) ** 2))
        if short > 0:
            grad -= sub.penalty * short * sub.A_dot(l, theta)
    return grad


def riemannian_gradient(euclid_grad: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Project onto the tangent space of the circle manifold at theta."""
    return euclid_grad - np.real(euclid_grad * np.conj(theta)) * theta


def tangent_project(vec: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return vec - np.real(vec * np.conj(theta)) * theta


def conjugate_direction(
    grad: np.ndarray,
    grad_prev: np.ndarray | None,
    dir_prev: np.ndarray | None,
    theta: np.ndarray,
) -> np.ndarray:
    """Polak-Ribiere direction with transport by tangent projection.

    Falls back to steepest descent on the first step and whenever the
    combination fails the descent test.
    """
    if grad_prev is None or dir_prev is None:
        return -grad
    transported_prev = tangent_project(grad_prev, theta)
    denom = float(np.real(np.vdot(grad_prev, grad_prev)))
    if denom <= 0.0:
        return -grad
    beta = float(np.real(np.vdot(grad, grad - transported_prev))) / denom
    direction = -grad + beta * tangent_project(dir_prev, theta)
    if np.real(np.vdot(direction, grad)) >= 0.0:
        return -grad
    return direction


def retract(theta: np.ndarray, direction: np.ndarray, step: float) -> np.ndarray:
    """Move along the direction and renormalize every phase to the circle."""
    moved = theta + step * direction
    mags = np.abs(moved)
    if np.any(mags < 1e-300):
        raise ConfigurationError("retraction hit the origin on some circle")
    return moved / mags


@dataclass
class RcgReport:
    objective_trace: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_deficit: float = 0.0


ARMIJO_SIGMA = 1e-4
ARMIJO_BACKTRACK = 0.5
MAX_BACKTRACKS = 60


def rcg_minimize(
    sub: ThetaSubproblem,
    theta0: np.ndarray,
    max_iters: int = 300,
    tol: float = 1e-6,
) -> tuple[np.ndarray, RcgReport]:
    """Riemannian conjugate gradient with Armijo backtracking.

    Terminates when the Riemannian gradient norm drops below
    tol * max(1, |f_R|) or after max_iters iterations.  The objective
    trace is non-increasing by construction.
    """
    theta = np.asarray(theta0, dtype=complex).copy()
    theta = theta / np.abs(theta)
    report = RcgReport()
    f_cur = penalized_objective(sub, theta)
    report.objective_trace.append(f_cur)

    grad_prev = None
    dir_prev = None
    for it in range(max_iters):
        grad = riemannian_gradient(euclidean_gradient(sub, theta), theta)
        gnorm = float(np.linalg.norm(grad))
        report.grad_norms.append(gnorm)
        if gnorm < tol * max(1.0, abs(f_cur)):
            report.converged = True
            break

        direction = conjugate_direction(grad, grad_prev, dir_prev, theta)
        slope = 2.0 * float(np.real(np.vdot(grad, direction)))
        step = 1.0 / max(float(np.max(np.abs(grad))), 1e-300)
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            trial = theta + step * direction
            mags = np.abs(trial)
            if np.all(mags > 1e-300):
                candidate = trial / mags
                f_new = penalized_objective(sub, candidate)
                if f_new <= f_cur + ARMIJO_SIGMA * step * slope:
                    accepted = True
                    break
            step *= ARMIJO_BACKTRACK
        if not accepted:
            break
        theta = candidate
        f_cur = f_new
        report.objective_trace.append(f_cur)
        report.iterations = it + 1
        grad_prev, dir_prev = grad, direction

    report.final_deficit = sensing_deficit(sub, theta)
    return theta, report
