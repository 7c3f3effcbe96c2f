"""Transmit beamformer / sensing covariance subproblem.

Given fixed RIS phases and fixed auxiliaries (lam, v), the surrogate
reduces to a convex quadratic in (W, R0):

    g(W, R0) = sum_k |v_k|^2 h_k^H (W W^H + R0) h_k
               - sum_k 2 sqrt(tau_k (1 + lam_k)) Re{conj(v_k) h_k^H w_k}
               + (c1/2) ||W - W_bar||_F^2 + (c2/2) ||R0 - R0_bar||_F^2

minimized over the joint power ball tr(W^H W) + tr(R0) <= P0 and the PSD
cone R0 >= 0, subject to the sensing constraints linearized at the anchor:

    2 Re{h_l^H W W_bar^H h_l} + h_l^H R0 h_l
        >= rho_th + h_l^H W_bar W_bar^H h_l.

The linearized left side minorizes the true quadratic gain, so any output
satisfying it also satisfies the original constraint.

Solver: augmented Lagrangian on the (normalized) linear constraints with
an accelerated projected-gradient inner loop.  The projection onto the
joint ball-and-cone set is exact: eigenvalue shrinkage plus a scalar
bisection on the shared multiplier.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

KKT_SCALE_FLOOR = 1.0


@dataclass
class TransmitSubproblem:
    """Frozen data of one (W, R0) subproblem.

    h_cu:  (K, M) effective CU channels at the current phases
    h_tgt: (L, M) effective target channels
    """

    h_cu: np.ndarray
    h_tgt: np.ndarray
    lam: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    W_bar: np.ndarray
    R0_bar: np.ndarray
    P0: float
    rho_th: float
    c1: float = 50.0
    c2: float = 50.0

    def __post_init__(self):
        if self.P0 < 0:
            raise ConfigurationError("P0 must be nonnegative")
        if self.c1 < 0 or self.c2 < 0:
            raise ConfigurationError("proximal weights must be nonnegative")

    @property
    def M(self) -> int:
        return self.h_cu.shape[1]

    @property
    def K(self) -> int:
        return self.h_cu.shape[0]

    @property
    def L(self) -> int:
        return self.h_tgt.shape[0]


@dataclass
class LinearizedConstraint:
    """a(W, R0) = 2 Re tr(F^H W) + Re tr(T R0) >= b, with norm the Frobenius
    magnitude of the coefficient pair used for scaling."""

    F: np.ndarray  # (M, K) = h h^H W_bar
    T: np.ndarray  # (M, M) = h h^H
    b: float
    norm: float


def sca_linearize(sub: TransmitSubproblem) -> list:
    """First-order minorant of every sensing constraint at the anchor."""
    out = []
    for l in range(sub.L):
        h = sub.h_tgt[l]
        hhH = np.outer(h, np.conj(h))
        F = hhH @ sub.W_bar
        proj = np.conj(sub.W_bar.T) @ h
        b = sub.rho_th + float(np.real(np.vdot(proj, proj)))
        norm = float(np.sqrt(2 * np.sum(np.abs(F) ** 2) + np.sum(np.abs(hhH) ** 2)))
        out.append(LinearizedConstraint(F=F, T=hhH, b=b, norm=max(norm, 1e-300)))
    return out


def constraint_value(con: LinearizedConstraint, W: np.ndarray, R0: np.ndarray) -> float:
    return float(
        2 * np.real(np.sum(np.conj(con.F) * W)) + np.real(np.sum(np.conj(con.T) * R0))
    )


def project_ball_cone(W: np.ndarray, R0: np.ndarray, P0: float):
    """Exact Euclidean projection onto {||W||^2 + tr(R0) <= P0, R0 >= 0}.

    W shrinks radially by 1/(1+mu) and the eigenvalues of R0 shift down by
    mu/2, with the shared multiplier mu found by bisection on the spent
    power.  Plain floats inside the bisection; this sits on the hot path.
    """
    R = (R0 + np.conj(R0.T)) / 2
    vals, vecs = np.linalg.eigh(R)
    w_energy = float(np.sum(np.abs(W) ** 2))
    clipped = np.maximum(vals, 0.0)
    if w_energy + float(clipped.sum()) <= P0:
        return W.copy(), (vecs * clipped) @ np.conj(vecs.T)
    if P0 <= 0.0:
        return np.zeros_like(W), np.zeros_like(R)

    desc = sorted((float(v) for v in clipped if v > 0.0), reverse=True)
    prefix = [0.0]
    for v in desc:
        prefix.append(prefix[-1] + v)

    def excess(mu: float) -> float:
        half = mu / 2.0
        j = 0
        for v in desc:
            if v <= half:
                break
            j += 1
        return w_energy / (1.0 + mu) ** 2 + prefix[j] - j * half - P0

    hi = 1.0
    while excess(hi) > 0.0:
        hi *= 2.0
    lo = 0.0
    while hi - lo > 1e-13 * max(1.0, hi):
        mid = (lo + hi) / 2.0
        if excess(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    mu = (lo + hi) / 2.0
    W_new = W / (1 + mu)
    R_new = (vecs * np.maximum(vals - mu / 2, 0)) @ np.conj(vecs.T)
    return W_new, R_new


@dataclass
class QcqpResult:
    W: np.ndarray
    R0: np.ndarray
    status: str  # "optimal" | "max-iters" | "infeasible"
    objective: float
    kkt_residual: float
    max_violation: float
    worst_constraint: int
    inner_iterations: int
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _objective_pieces(sub: TransmitSubproblem):
    Hv = np.zeros((sub.M, sub.M), dtype=complex)
    E = np.zeros((sub.M, sub.K), dtype=complex)
    for k in range(sub.K):
        h = sub.h_cu[k]
        Hv += abs(sub.v[k]) ** 2 * np.outer(h, np.conj(h))
        E[:, k] = 2 * np.sqrt(sub.tau[k] * (1 + sub.lam[k])) * sub.v[k] * h
    Hv = (Hv + np.conj(Hv.T)) / 2
    return Hv, E


def solve_qcqp(
    sub: TransmitSubproblem,
    max_iters: int = 5000,
    tol: float = 1e-6,
) -> QcqpResult:
    """Minimize the proximal surrogate under power, PSD and linearized
    sensing constraints.

    Returns status "infeasible" (with the most violated constraint as a
    witness) when the linearized system admits no point in the ball-cone
    set; the caller keeps the previous iterate in that case.
    """
    M, K = sub.M, sub.K
    if sub.P0 <= 0.0:
        W0 = np.zeros((M, K), dtype=complex)
        R00 = np.zeros((M, M), dtype=complex)
        cons = sca_linearize(sub)
        viol = [max(con.b - constraint_value(con, W0, R00), 0.0) for con in cons]
        worst = int(np.argmax(viol)) if viol else -1
        max_v = max(viol) if viol else 0.0
        feas_tol = 1e-6 * max(sub.rho_th, 1e-300)
        status = "optimal" if max_v <= feas_tol else "infeasible"
        return QcqpResult(
            W=W0, R0=R00, status=status, objective=0.0, kkt_residual=0.0,
            max_violation=max_v, worst_constraint=worst, inner_iterations=0,
        )

    Hv, E = _objective_pieces(sub)
    cons = sca_linearize(sub)
    L = len(cons)
    feas_tol = 1e-6 * max(sub.rho_th, max((abs(c.b) for c in cons), default=0.0), 1e-300)

    def smooth_grad_obj(W, R0):
        gW = 2 * (Hv @ W) - E + sub.c1 * (W - sub.W_bar)
        gR = Hv + sub.c2 * (R0 - sub.R0_bar)
        return gW, gR

    def objective(W, R0):
        quad = float(np.real(np.sum(np.conj(W) * (Hv @ W)))) + float(
            np.real(np.sum(np.conj(Hv) * R0))
        )
        lin = float(np.real(np.sum(np.conj(E) * W)))
        prox = 0.5 * sub.c1 * float(np.sum(np.abs(W - sub.W_bar) ** 2))
        prox += 0.5 * sub.c2 * float(np.sum(np.abs(R0 - sub.R0_bar) ** 2))
        return quad - lin + prox

    # scaled slack: s_l(X) = (b - a(X)) / norm, constraint is s <= 0
    def slacks(W, R0):
        return np.array(
            [(c.b - constraint_value(c, W, R0)) / c.norm for c in cons]
        )

    def al_gradient(W, R0, mus, rho, w_obj=1.0):
        if w_obj:
            gW, gR = smooth_grad_obj(W, R0)
        else:
            gW = np.zeros_like(W)
            gR = np.zeros_like(R0)
        if L:
            s = slacks(W, R0)
            act = np.maximum(mus + rho * s, 0.0)
            for l, c in enumerate(cons):
                if act[l] > 0:
                    gW -= (act[l] / c.norm) * 2 * c.F
                    gR -= (act[l] / c.norm) * c.T
        return gW, gR

    def al_value(W, R0, mus, rho, w_obj=1.0):
        val = objective(W, R0) if w_obj else 0.0
        if L:
            s = slacks(W, R0)
            plus = np.maximum(mus + rho * s, 0.0)
            val += float(np.sum(plus**2 - mus**2)) / (2 * rho)
        return val

    def fista(W, R0, mus, rho, budget, w_obj=1.0):
        """Accelerated projected gradient on the AL; returns iterate count.

        w_obj=0 drops the objective and minimizes constraint violation
        alone, which is how infeasible systems get certified.
        """
        xW, xR = W, R0
        yW, yR = W.copy(), R0.copy()
        t = 1.0
        f_prev = al_value(xW, xR, mus, rho, w_obj)
        used = 0
        # normalized slack gradients have unit scale, so the violation-only
        # problem is much better conditioned than the full Lagrangian
        Lk = base_lip if w_obj else max(1.0, float(L))
        lk_floor = 1e-3 * Lk
        scale = max(KKT_SCALE_FLOOR, sub.P0)

        def residual(W_, R0_):
            gW_, gR_ = al_gradient(W_, R0_, mus, rho, w_obj)
            pW_, pR_ = project_ball_cone(W_ - gW_, R0_ - gR_, sub.P0)
            return np.sqrt(
                np.sum(np.abs(W_ - pW_) ** 2) + np.sum(np.abs(R0_ - pR_) ** 2)
            ) / scale

        while used < budget:
            # let a transient overestimate of the local curvature heal,
            # otherwise one noisy backtrack stalls the whole run
            Lk = max(lk_floor, 0.9 * Lk)
            gW, gR = al_gradient(yW, yR, mus, rho, w_obj)
            fy = al_value(yW, yR, mus, rho, w_obj)
            while True:
                cW, cR = project_ball_cone(yW - gW / Lk, yR - gR / Lk, sub.P0)
                dW, dR = cW - yW, cR - yR
                quad_model = (
                    fy
                    + float(np.real(np.sum(np.conj(gW) * dW)))
                    + float(np.real(np.sum(np.conj(gR) * dR)))
                    + 0.5 * Lk * (np.sum(np.abs(dW) ** 2) + np.sum(np.abs(dR) ** 2))
                )
                slack = 1e-12 * max(1.0, abs(fy))
                f_new = al_value(cW, cR, mus, rho, w_obj)
                if f_new <= quad_model + slack:
                    break
                if Lk > 1e16 * base_lip:  # pure rounding noise, accept
                    break
                Lk *= 2.0
            used += 1
            # restart acceleration on a material increase; a strict check
            # would loop forever at the value-rounding floor
            if f_new > f_prev + 1e-10 * max(1.0, abs(f_prev)):
                yW, yR = xW.copy(), xR.copy()
                t = 1.0
                continue
            t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
            yW = cW + (t - 1) / t_new * (cW - xW)
            yR = cR + (t - 1) / t_new * (cR - xR)
            step = np.sqrt(
                np.sum(np.abs(cW - xW) ** 2) + np.sum(np.abs(cR - xR) ** 2)
            )
            xW, xR = cW, cR
            t = t_new
            f_prev = f_new
            # the exact fixed-point residual needs a gradient and a
            # projection, so only evaluate it when the step size says the
            # target is plausibly within reach (plus a periodic safety net)
            if step * (1.0 + Lk) < tol * scale or used % 25 == 0:
                if residual(xW, xR) < 0.3 * tol:
                    break
        return xW, xR, used

    # start from the anchor projected onto the feasible ball
    W, R0 = project_ball_cone(sub.W_bar, sub.R0_bar, sub.P0)
    base_lip = 2 * float(np.linalg.norm(Hv, 2)) + max(sub.c1, sub.c2) + 1.0
    mus = np.zeros(L)
    rho = max(1.0, base_lip)
    used_total = 0
    status = "max-iters"
    kkt = np.inf

    # feasibility phase: when the start violates some linearized constraint,
    # minimize pure violation first; a strictly positive floor certifies an
    # empty system, otherwise we gain a near-feasible launch point
    if L:
        raw = np.array([c.b - constraint_value(c, W, R0) for c in cons])
        if np.max(raw, initial=0.0) > 0.5 * feas_tol:
            zeroH = np.zeros(L)
            W, R0, used = fista(
                W, R0, zeroH, 1.0, min(1500, max_iters), w_obj=0.0
            )
            used_total += used
            raw = np.array([c.b - constraint_value(c, W, R0) for c in cons])
        if np.max(raw, initial=0.0) > feas_tol:
            worst = int(np.argmax(raw))
            return QcqpResult(
                W=W, R0=R0, status="infeasible", objective=objective(W, R0),
                kkt_residual=np.inf, max_violation=float(np.max(raw)),
                worst_constraint=worst, inner_iterations=used_total,
                multipliers=mus,
            )

    prev_viol = np.inf
    for outer in range(60):
        if used_total >= max_iters:
            break
        W, R0, used = fista(W, R0, mus, rho, max_iters - used_total)
        used_total += used
        if L:
            s = slacks(W, R0)
            mus = np.maximum(mus + rho * s, 0.0)
            viol = float(np.max(np.maximum(s, 0.0), initial=0.0))
            if viol > 0.25 * prev_viol and viol > 0:
                rho *= 5.0
            prev_viol = max(viol, 1e-300)

        # KKT residual of the true Lagrangian at the current multipliers
        gW, gR = smooth_grad_obj(W, R0)
        for l, c in enumerate(cons):
            if L and mus[l] > 0:
                gW -= (mus[l] / c.norm) * 2 * c.F
                gR -= (mus[l] / c.norm) * c.T
        pW, pR = project_ball_cone(W - gW, R0 - gR, sub.P0)
        stat = np.sqrt(
            np.sum(np.abs(W - pW) ** 2) + np.sum(np.abs(R0 - pR) ** 2)
        ) / max(KKT_SCALE_FLOOR, sub.P0)
        if L:
            s = slacks(W, R0)
            primal = float(np.max(np.maximum(s, 0.0), initial=0.0))
            comp = float(np.max(np.abs(mus * s), initial=0.0))
        else:
            primal = comp = 0.0
        kkt = max(stat, primal, comp)
        if kkt < tol:
            status = "optimal"
            break

    raw = np.array([c.b - constraint_value(c, W, R0) for c in cons]) if L else np.zeros(0)
    max_v = float(np.max(raw, initial=0.0))
    worst = int(np.argmax(raw)) if L else -1
    return QcqpResult(
        W=W, R0=R0, status=status, objective=objective(W, R0),
        kkt_residual=kkt, max_violation=max(max_v, 0.0),
        worst_constraint=worst, inner_iterations=used_total, multipliers=mus,
    )
