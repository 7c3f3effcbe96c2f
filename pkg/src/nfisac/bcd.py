"""Alternating solver for joint beams, sensing covariance, and RIS phases.

One cycle updates three blocks in turn, each to (near) optimality while
the others stay fixed:

  1. auxiliaries (lam, v), closed form; makes the surrogate tight,
  2. RIS phases, Riemannian CG on the penalized surrogate,
  3. beams (W, R0), projected-gradient QCQP on the linearized constraints.

Because the transmit step enforces the original sensing constraints at
the current phases, the next phase step starts from a feasible point and
the weighted sum rate cannot drop as long as the subproblems keep their
promises.  The trace is recorded so callers can check exactly that.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .channels import ChannelSet
from .errors import ConfigurationError
from .manifold import assemble_theta_subproblem, penalized_objective, rcg_minimize
from .metrics import (
    BeamformingSolution,
    EvalReport,
    beampattern_gain,
    effective_cu_channels,
    effective_tgt_channels,
    evaluate,
    sinr,
    weighted_sum_rate,
)
from .surrogate import surrogate_value, update_auxiliaries
from .transmit import TransmitSubproblem, solve_qcqp


@dataclass
class BcdConfig:
    max_iters: int = 30
    tol: float = 1e-6  # stop when the sum rate moves less than this (bits)
    c1: float = 50.0  # proximal weight on W in the transmit step
    c2: float = 50.0  # proximal weight on R0
    penalty: float = 30.0  # dimensionless sensing-penalty stiffness
    power_split: float = 0.7  # fraction of the budget given to the beams at init
    rcg_max_iters: int = 300
    rcg_tol: float = 1e-6
    qcqp_max_iters: int = 5000
    qcqp_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be nonnegative")
        if not 0.0 < self.power_split <= 1.0:
            raise ConfigurationError("power_split must be in (0, 1]")


@dataclass
class SolverReport:
    solution: BeamformingSolution
    evaluation: EvalReport
    wsr_trace: list = field(default_factory=list)  # bits, entry 0 is the init
    surrogate_trace: list = field(default_factory=list)  # nats, tight per cycle
    iterations: int = 0
    termination: str = "max-iters"  # | "tolerance" | "subproblem-infeasible"
    qcqp_status: list = field(default_factory=list)
    qcqp_inner_iters: list = field(default_factory=list)
    rcg_iters: list = field(default_factory=list)
    stage_seconds: dict = field(default_factory=dict)


def init_solution(
    ch: ChannelSet,
    P0: float,
    rho_th: float,
    tau: np.ndarray,
    rng: np.random.Generator,
    power_split: float = 0.7,
) -> BeamformingSolution:
    """Random phases, matched per-user beams, isotropic sensing probe.

    The power budget is split power_split : (1 - power_split) between the
    beams and the probe.  When the isotropic probe cannot illuminate every
    target at rho_th, it is re-aimed along the dominant direction of the
    stacked target channels, which is the best single-beam probe.
    """
    theta = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, ch.N))
    h = effective_cu_channels(ch, theta)
    W = np.zeros((ch.M, ch.K), dtype=complex)
    per_beam = power_split * P0 / max(ch.K, 1)
    for k in range(ch.K):
        nrm = np.linalg.norm(h[k])
        if nrm > 0:
            W[:, k] = np.sqrt(per_beam) * h[k] / nrm
    R0 = (1.0 - power_split) * P0 / ch.M * np.eye(ch.M, dtype=complex)
    sol = BeamformingSolution(W=W, R0=R0, theta=theta)
    if ch.L and (1.0 - power_split) > 0:
        rho = beampattern_gain(ch, sol)
        if rho.min() < rho_th:
            h_tgt = effective_tgt_channels(ch, theta)
            stack = np.conj(h_tgt.T) @ h_tgt
            vals, vecs = np.linalg.eigh(stack)
            probe = vecs[:, -1]
            R0 = (1.0 - power_split) * P0 * np.outer(probe, np.conj(probe))
            sol = BeamformingSolution(W=W, R0=R0, theta=theta)
    return sol


def _phase_step(ch, W, R0, aux, tau, rho_th, cfg, theta):
    """Assemble the phase subproblem with a scale-matched penalty and solve.

    cfg.penalty is treated as a dimensionless stiffness: the hinge weight
    is chosen so that a full-threshold sensing deficit costs about
    cfg.penalty times the current quadratic objective magnitude.  A fixed
    absolute weight would be useless across channel scales.
    """
    sub = assemble_theta_subproblem(ch, W, R0, aux.lam, aux.v, tau, rho_th, 0.0)
    if rho_th > 0:
        quad = abs(penalized_objective(sub, theta))
        sub = replace(sub, penalty=cfg.penalty * max(1.0, quad) / (rho_th * rho_th))
    else:
        sub = replace(sub, penalty=cfg.penalty)
    return rcg_minimize(sub, theta, max_iters=cfg.rcg_max_iters, tol=cfg.rcg_tol)


def run_bcd(
    ch: ChannelSet,
    P0: float,
    rho_th: float,
    tau: np.ndarray | None = None,
    config: BcdConfig | None = None,
    rng=0,
) -> SolverReport:
    """Maximize the weighted sum rate subject to power and sensing floors.

    rng seeds the phase initialization only; everything downstream is
    deterministic.  The returned solution is the best feasible iterate
    seen, falling back to the last iterate when none was feasible.
    """
    cfg = config if config is not None else BcdConfig()
    rng = np.random.default_rng(rng)
    tau = np.ones(ch.K) if tau is None else np.asarray(tau, dtype=float)
    if tau.shape != (ch.K,) or np.any(tau < 0):
        raise ConfigurationError("tau must be K nonnegative weights")
    if P0 < 0:
        raise ConfigurationError("P0 must be nonnegative")

    timers = {"auxiliaries": 0.0, "phases": 0.0, "transmit": 0.0}
    sol = init_solution(ch, P0, rho_th, tau, rng, cfg.power_split)
    W, R0, theta = sol.W, sol.R0, sol.theta
    wsr = weighted_sum_rate(sinr(ch, sol), tau)
    wsr_trace = [wsr]
    surrogate_trace = []
    qcqp_status = []
    qcqp_inner = []
    rcg_iters = []

    best = None
    best_wsr = -np.inf
    ev = evaluate(ch, sol, P0, rho_th, tau)
    if ev.feasible:
        best, best_wsr = (sol, ev), ev.wsr

    termination = "max-iters"
    iterations = 0
    for _ in range(cfg.max_iters):
        iterations += 1

        t0 = time.perf_counter()
        h_cu = effective_cu_channels(ch, theta)
        aux = update_auxiliaries(h_cu, W, R0, ch.noise_var, tau)
        surrogate_trace.append(
            surrogate_value(h_cu, W, R0, ch.noise_var, tau, aux)
        )
        timers["auxiliaries"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        theta, rcg_report = _phase_step(ch, W, R0, aux, tau, rho_th, cfg, theta)
        rcg_iters.append(rcg_report.iterations)
        timers["phases"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        sub = TransmitSubproblem(
            h_cu=effective_cu_channels(ch, theta),
            h_tgt=effective_tgt_channels(ch, theta),
            lam=aux.lam,
            v=aux.v,
            tau=tau,
            W_bar=W,
            R0_bar=R0,
            P0=P0,
            rho_th=rho_th,
            c1=cfg.c1,
            c2=cfg.c2,
        )
        res = solve_qcqp(sub, max_iters=cfg.qcqp_max_iters, tol=cfg.qcqp_tol)
        qcqp_status.append(res.status)
        qcqp_inner.append(res.inner_iterations)
        timers["transmit"] += time.perf_counter() - t0

        if res.status == "infeasible":
            # keep the previous beams; the new phases may have broken the
            # linearized system and there is no point iterating further
            sol = BeamformingSolution(W=W, R0=R0, theta=theta)
            termination = "subproblem-infeasible"
            break
        W, R0 = res.W, res.R0
        sol = BeamformingSolution(W=W, R0=R0, theta=theta)
        wsr_new = weighted_sum_rate(sinr(ch, sol), tau)
        wsr_trace.append(wsr_new)
        ev = evaluate(ch, sol, P0, rho_th, tau)
        if ev.feasible and ev.wsr > best_wsr:
            best, best_wsr = (sol, ev), ev.wsr
        if abs(wsr_new - wsr) < cfg.tol:
            termination = "tolerance"
            break
        wsr = wsr_new

    if best is not None:
        sol, ev = best
    else:
        ev = evaluate(ch, sol, P0, rho_th, tau)
    return SolverReport(
        solution=sol,
        evaluation=ev,
        wsr_trace=wsr_trace,
        surrogate_trace=surrogate_trace,
        iterations=iterations,
        termination=termination,
        qcqp_status=qcqp_status,
        qcqp_inner_iters=qcqp_inner,
        rcg_iters=rcg_iters,
        stage_seconds=timers,
    )
