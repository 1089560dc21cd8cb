"""Certainty-equivalent controller synthesis and analytic cost evaluation.

The finite-horizon backward Riccati recursion and its fixed point supply the
feedback gains; the cost formulas combine them with the steady-state filter
and the transmission-chain analysis into exact expected costs for finite and
infinite horizons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import (ConditionalErrorCov, MarkovAnalysis, conditional_error_cov,
                       transition_matrix)
from .errors import ConvergenceError, ModelError
from .estimation import SteadyStateFilter, kf_steady_state
from .model import SchedulerParams, SystemModel, symmetrize

ARE_TOL = 1e-12
ARE_MAX_ITER = 10**6


@dataclass(frozen=True)
class ControlSynthesis:
    """Feedback gains from the backward recursion and/or its fixed point.

    Finite-horizon use fills S_seq (S_0..S_N) and L_seq (L_0..L_{N-1});
    steady-state use fills S_inf, L_inf, M_inf plus solver diagnostics.
    """

    S_seq: tuple[np.ndarray, ...] | None = None
    L_seq: tuple[np.ndarray, ...] | None = None
    S_inf: np.ndarray | None = None
    L_inf: np.ndarray | None = None
    M_inf: np.ndarray | None = None
    residual: float | None = None
    iterations: int | None = None


@dataclass(frozen=True)
class CostBreakdown:
    """Infinite-horizon average cost split into its three sources.

    base: disturbance term Tr(S_inf W). filter_term: estimation term
    Tr(F_inf M_inf). trigger_term: communication penalty weighted by the
    stationary counter distribution. total: their sum.
    """

    base: float
    filter_term: float
    trigger_term: float
    total: float


@dataclass(frozen=True)
class TradeoffPoint:
    lam: float
    rate: float
    cost: float
    breakdown: CostBreakdown
    markov: MarkovAnalysis
    cond_cov: ConditionalErrorCov


def _gain_step(S_next: np.ndarray, model: SystemModel):
    G = model.B.T @ S_next @ model.B + model.R
    L = np.linalg.solve(G, model.B.T @ S_next @ model.A)
    S = symmetrize(model.A.T @ S_next @ model.A + model.Q
                   - model.A.T @ S_next @ model.B @ L)
    return L, S, G


def riccati_backward(model: SystemModel, N: int) -> ControlSynthesis:
    """Backward recursion over horizon N starting from the terminal weight.

    Returns S_0..S_N and L_0..L_{N-1}, each S symmetrized.
    """
    if N < 1:
        raise ValueError(f"horizon must be >= 1, got {N}")
    S_rev = [symmetrize(model.Qf)]
    L_rev = []
    for _ in range(N):
        L, S, _ = _gain_step(S_rev[-1], model)
        L_rev.append(L)
        S_rev.append(S)
    return ControlSynthesis(S_seq=tuple(reversed(S_rev)),
                            L_seq=tuple(reversed(L_rev)))


def control_steady_state(model: SystemModel, tol: float = ARE_TOL,
                         max_iterations: int = ARE_MAX_ITER) -> ControlSynthesis:
    """Fixed point of the backward recursion, iterated from S = Q."""
    S = model.Q.copy()
    delta = np.inf
    for it in range(1, max_iterations + 1):
        _, S_next, _ = _gain_step(S, model)
        delta = float(np.max(np.abs(S_next - S)))
        S = S_next
        if delta < tol:
            break
    else:
        raise ConvergenceError("steady-state control iteration", delta, max_iterations)

    L, S_check, G = _gain_step(S, model)
    residual = float(np.max(np.abs(S_check - S)))
    M = symmetrize(L.T @ G @ L)
    return ControlSynthesis(S_inf=S, L_inf=L, M_inf=M,
                            residual=residual, iterations=it)


def control_action(L: np.ndarray, xhat_c: np.ndarray) -> np.ndarray:
    """u = -L xhat."""
    return -(np.asarray(L, dtype=float) @ np.asarray(xhat_c, dtype=float).reshape(-1))


def _trigger_cost(M: np.ndarray, weights: np.ndarray,
                  cec: ConditionalErrorCov) -> float:
    # weights[i] multiplies Tr(M sigma(i)); index 0 carries a zero matrix
    sig = np.stack(cec.sigmas)
    return float(np.einsum("i,ijk,kj->", weights, sig, M))


def infinite_horizon_cost(cs: ControlSynthesis, ss: SteadyStateFilter,
                          ma: MarkovAnalysis, cec: ConditionalErrorCov,
                          model: SystemModel) -> CostBreakdown:
    """Closed-form long-run average cost under the event-triggered loop."""
    if cs.S_inf is None or cs.M_inf is None:
        raise ModelError("infinite_horizon_cost needs a steady-state synthesis")
    if ma.pi is None:
        raise ModelError("MarkovAnalysis must carry its stationary distribution")
    if len(cec.sigmas) != ma.timeout + 1 or cec.lam != ma.lam:
        raise ModelError("analysis inputs come from different scheduler settings")
    base = float(np.trace(cs.S_inf @ model.W))
    filter_term = float(np.trace(ss.F_inf @ cs.M_inf))
    trigger_term = _trigger_cost(cs.M_inf, ma.pi, cec)
    return CostBreakdown(base=base, filter_term=filter_term,
                         trigger_term=trigger_term,
                         total=base + filter_term + trigger_term)


def finite_horizon_cost(cs: ControlSynthesis, ss: SteadyStateFilter,
                        ma: MarkovAnalysis, cec: ConditionalErrorCov,
                        model: SystemModel, N: int,
                        use_steady_filter_cov: bool = True) -> float:
    """Exact expected cost over horizon N.

    Sums the terminal/initial terms and, per step, the disturbance term, the
    filtering term and the trigger penalty weighted by the transient counter
    distribution (started from the step-0 trigger outcome and pushed through
    the transition matrix). With use_steady_filter_cov the filtering term
    uses the steady updated covariance; otherwise the transient filter
    covariances are recomputed from the initial covariance.
    """
    if cs.S_seq is None or cs.L_seq is None:
        raise ModelError("finite_horizon_cost needs the finite-horizon recursion")
    if len(cs.S_seq) != N + 1:
        raise ModelError(
            f"S_seq covers horizon {len(cs.S_seq) - 1}, requested N={N}")
    if ma.pi is None or len(cec.sigmas) != ma.timeout + 1:
        raise ModelError("analysis inputs incomplete or mismatched")

    xbar = model.x0_mean
    total = float(xbar @ cs.S_seq[0] @ xbar) + float(np.trace(cs.S_seq[0] @ model.X0))

    if not use_steady_filter_cov:
        filt_covs = _transient_filter_covs(model, N)

    sig = np.stack(cec.sigmas)
    T = ma.timeout
    dist = np.zeros(T + 1)
    dist[0] = ma.p_i0[0]
    dist[1] = 1.0 - ma.p_i0[0]
    for k in range(N):
        S_next = cs.S_seq[k + 1]
        L = cs.L_seq[k]
        G = model.B.T @ S_next @ model.B + model.R
        M = symmetrize(L.T @ G @ L)
        P_filt = ss.F_inf if use_steady_filter_cov else filt_covs[k]
        total += float(np.trace(S_next @ model.W))
        total += float(np.trace(P_filt @ M))
        total += float(np.einsum("i,ijk,kj->", dist, sig, M))
        dist = dist @ ma.P_lambda
    return total


def _transient_filter_covs(model: SystemModel, N: int) -> list[np.ndarray]:
    """Updated filter covariances P_{k|k} for k = 0..N-1 from X0."""
    n = model.A.shape[0]
    eye = np.eye(n)
    P_pred = model.X0.copy()
    out = []
    for _ in range(N):
        S = model.C @ P_pred @ model.C.T + model.V
        K = np.linalg.solve(S, model.C @ P_pred).T
        P_filt = symmetrize((eye - K @ model.C) @ P_pred)
        out.append(P_filt)
        P_pred = symmetrize(model.A @ P_filt @ model.A.T + model.W)
    return out


def cost_tradeoff_curve(model: SystemModel, lambdas, timeout: int,
                        ss: SteadyStateFilter | None = None,
                        cs: ControlSynthesis | None = None) -> list[TradeoffPoint]:
    """Full analytic pipeline per lambda, sorted ascending.

    The model-level solves (filter and control fixed points) are shared
    across the grid; each lambda gets its own chain analysis and cost.
    """
    lams = sorted(float(l) for l in lambdas)
    if not lams:
        raise ValueError("lambda grid must be nonempty")
    if ss is None:
        ss = kf_steady_state(model)
    if cs is None:
        cs = control_steady_state(model)
    points = []
    for lam in lams:
        params = SchedulerParams(lam=lam, timeout=timeout)
        ma = transition_matrix(ss, model.A, params)
        cec = conditional_error_cov(ss, model.A, params)
        breakdown = infinite_horizon_cost(cs, ss, ma, cec, model)
        points.append(TradeoffPoint(lam=lam, rate=ma.rate, cost=breakdown.total,
                                    breakdown=breakdown, markov=ma, cond_cov=cec))
    return points
