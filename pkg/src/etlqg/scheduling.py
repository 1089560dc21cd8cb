"""Stochastic event trigger and timeout counter.

The sensor transmits when a uniform draw exceeds exp(-lam * |e|^2) for the
predicted comparison error e, or unconditionally once timeout consecutive
steps have passed without a transmission. Draws are injected by the caller
so replays are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .model import SchedulerParams


@dataclass(frozen=True)
class SchedulerState:
    """tau: steps since last transmission; last_decision/last_sigma: latest
    trigger decision and transmission indicator (tau == 0 iff last_sigma == 1)."""

    tau: int
    last_decision: int
    last_sigma: int


def initial_scheduler_state() -> SchedulerState:
    # Convention: the counter starts at zero, as if a packet had just been
    # delivered before step 0.
    return SchedulerState(tau=0, last_decision=1, last_sigma=1)


def trigger_decision(e_pred: np.ndarray, lam: float, uniform_draw: float) -> int:
    """Randomized transmit decision for one step.

    Returns 0 (hold) iff uniform_draw <= exp(-lam * <e,e>), else 1. The
    boundary is closed on the hold side; exp(0) = 1 means a zero error never
    triggers.
    """
    e = np.asarray(e_pred, dtype=float).reshape(-1)
    if not np.all(np.isfinite(e)):
        raise ModelError("comparison error contains non-finite entries")
    quad = float(e @ e)
    return 0 if uniform_draw <= math.exp(-lam * quad) else 1


def advance_tau(state: SchedulerState, delta: int,
                params: SchedulerParams) -> SchedulerState:
    """Advance the timeout counter given this step's trigger decision.

    sigma = 1 when delta == 1 or the counter expired (previous tau ==
    timeout); tau resets to 0 exactly on transmission steps.
    """
    sigma = 1 if (delta == 1 or state.tau == params.timeout) else 0
    tau = 0 if sigma else state.tau + 1
    return SchedulerState(tau=tau, last_decision=int(delta), last_sigma=sigma)
