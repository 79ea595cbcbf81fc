"""The decision process the phase-control agent interacts with.

One learning step = one fading block: the action fixes the surface
phases, a fresh block and jamming pattern are drawn, the scheduler
allocates users/modes/streams per subchannel, and the per-user received
rates come back as the next state with the sum rate as the reward.
User drops are redrawn at every episode reset; the static geometry is
fixed per scenario.

The environment consumes randomness from a single stream in a fixed
order (reset: user drop, then block; step: block), where a block is
channels followed by the jamming weights, so matched seeds give matched
channel sequences regardless of the actions taken.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import allocator as alloc
from .config import ScenarioConfig, jam_weights
from .linkmodel import EffectiveLinkTable, RisConfig, effective_gains
from .propagation import compute_geometry, sample_channels, sample_user_positions

__all__ = ["StepInfo", "StepOutcome", "RisJamEnv", "discounted_return"]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class StepInfo:
    total_power: float
    ratio_residuals: np.ndarray
    converged: bool
    rates: np.ndarray                 # raw per-user rates (bits/symbol)
    decision: alloc.AllocationDecision
    summary: alloc.AllocationSummary
    table: EffectiveLinkTable
    action_clamped: bool


@dataclass(frozen=True)
class StepOutcome:
    next_state: np.ndarray            # per-user rates, normalized if configured
    reward: float                     # sum rate of the block (bits/symbol)
    info: StepInfo


class RisJamEnv:
    """Phase-shift environment over the scheduler; one instance per rollout."""

    def __init__(self, scenario: ScenarioConfig,
                 rng: np.random.Generator | int | np.random.SeedSequence = 0):
        self.scenario = scenario
        if isinstance(rng, np.random.Generator):
            self.rng = rng
        else:
            self.rng = np.random.default_rng(rng)
        # a no-ris scenario still draws the surface channels of its geometry
        # (then drops them), so matched seeds share identical direct links
        # with the RIS-assisted runs
        self.n_elements = scenario.num_elements
        self._users = None
        self._dist = None
        self._duals = None
        self._state = None
        self.last_info = None

    @property
    def state_dim(self) -> int:
        return self.scenario.users

    @property
    def action_dim(self) -> int:
        return self.n_elements

    def _normalize(self, rates: np.ndarray) -> np.ndarray:
        if self.scenario.td3.normalize_state:
            return rates / self.scenario.max_sum_rate
        return rates.copy()

    def _solve_block(self, theta: np.ndarray):
        sc = self.scenario
        ch = sample_channels(sc.propagation, self._dist, self.rng)
        jam = jam_weights(sc.jam_alpha, sc.jam_beta, sc.propagation.subchannels,
                          sc.jam_power_w, self.rng, equal_power=sc.jam_equal_power)
        if self.n_elements == 0:
            ch_theta = np.zeros(0)
        else:
            ch_theta = theta
        table = effective_gains(self._strip(ch), RisConfig(theta=ch_theta),
                                noise_power=sc.propagation.noise_power,
                                jam_power=jam)
        duals0 = self._duals if sc.warm_start else None
        result = alloc.solve_allocation(table, sc.modulation, sc.qos, sc.p_max_w,
                                        sc.allocator, duals0=duals0)
        if sc.warm_start:
            self._duals = result.duals
        return table, result

    def _strip(self, ch):
        # no-ris scenarios drop the surface-side links to force the cascade off
        if self.n_elements == 0 and ch.h_br.shape[0] != 0:
            from .propagation import ChannelRealization
            empty = np.zeros(0, dtype=complex)
            return ChannelRealization(h_d=ch.h_d, h_br=empty,
                                      h_ru=np.zeros((0, ch.h_d.shape[0]), dtype=complex),
                                      h_jd=ch.h_jd, h_jr=empty)
        return ch

    def reset(self) -> np.ndarray:
        """Redraw user positions, cold-start the duals, and measure the
        rates under the all-zero phase configuration."""
        sc = self.scenario
        self._users = sample_user_positions(sc.geometry, sc.users, self.rng)
        self._dist = compute_geometry(sc.geometry, self._users)
        self._duals = None
        theta0 = np.zeros(self.n_elements)
        table, result = self._solve_block(theta0)
        rates = result.summary.per_user_rate
        self._state = self._normalize(rates)
        self.last_info = StepInfo(total_power=result.summary.total_power,
                                  ratio_residuals=result.summary.ratio_residual,
                                  converged=result.converged, rates=rates.copy(),
                                  decision=result.decision, summary=result.summary,
                                  table=table, action_clamped=False)
        return self._state.copy()

    def step(self, action: np.ndarray) -> StepOutcome:
        """Apply the phase action to a fresh fading block."""
        if self._dist is None:
            raise RuntimeError("call reset() before step()")
        action = np.asarray(action, dtype=float).reshape(-1)
        if action.shape[0] != self.n_elements:
            raise ValueError(f"action needs {self.n_elements} phases, got {action.shape[0]}")
        clamped = bool(np.any(action < 0.0) or np.any(action > TWO_PI))
        theta = np.clip(action, 0.0, TWO_PI)
        table, result = self._solve_block(theta)
        rates = result.summary.per_user_rate
        reward = float(result.summary.total_rate)
        self._state = self._normalize(rates)
        info = StepInfo(total_power=result.summary.total_power,
                        ratio_residuals=result.summary.ratio_residual,
                        converged=result.converged, rates=rates.copy(),
                        decision=result.decision, summary=result.summary,
                        table=table, action_clamped=clamped)
        self.last_info = info
        return StepOutcome(next_state=self._state.copy(), reward=reward, info=info)


def discounted_return(rewards, discount: float) -> float:
    """Fold step rewards into the discounted cumulative return."""
    g = 0.0
    for r in reversed(list(rewards)):
        g = r + discount * g
    return g
