"""Twin-critic deterministic policy-gradient agent with a DDPG fallback.

Six networks: actor, two critics, and slow target copies of all three.
Critic targets use the smaller of the two target-critic values on a
smoothed target action; the actor ascends the first critic and is
updated (together with the targets) once every `policy_delay` critic
updates. The "ddpg" variant collapses to a single critic, no target
smoothing noise, and whatever delay the config sets (1 for classic
DDPG).

Gaussian noise parameters are variances; draws use the square root.
The `noise_clip` bound is applied to the smoothing noise only.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import nn

__all__ = [
    "Td3Config",
    "AgentParams",
    "Transition",
    "Batch",
    "ReplayBuffer",
    "CriticUpdateResult",
    "init_agent_params",
    "select_action",
    "smooth_target_action",
    "td_targets",
    "critic_update",
    "actor_update",
    "Td3Agent",
    "save_checkpoint",
    "load_checkpoint",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Td3Config:
    discount: float = 0.99
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    polyak: float = 5e-3                 # target decay rho_tau
    buffer_capacity: int = 100_000
    episodes: int = 400
    steps_per_episode: int = 200
    batch_size: int = 16
    policy_delay: int = 2
    noise_clip: float = 0.5              # clip bound on smoothing noise
    exploration_noise_var: float = 0.2
    policy_noise_var: float = 0.2
    a_min: float = 0.0
    a_max: float = TWO_PI
    variant: str = "td3"                 # "td3" | "ddpg"
    hidden: tuple = (128, 64)
    normalize_state: bool = True
    reward_scale: float = 1.0            # conditioning factor on critic targets

    def __post_init__(self):
        if not (0 < self.discount < 1):
            raise ValueError("discount must be in (0, 1)")
        if self.policy_delay < 1 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("delay, batch size, capacity must be >= 1")
        if self.a_min >= self.a_max:
            raise ValueError("a_min must be < a_max")
        for name in ("exploration_noise_var", "policy_noise_var", "noise_clip"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.variant not in ("td3", "ddpg"):
            raise ValueError("variant must be 'td3' or 'ddpg'")
        if self.reward_scale <= 0:
            raise ValueError("reward_scale must be > 0")


@dataclass
class AgentParams:
    actor: nn.DenseNet
    critic1: nn.DenseNet
    critic2: nn.DenseNet
    target_actor: nn.DenseNet
    target_critic1: nn.DenseNet
    target_critic2: nn.DenseNet
    actor_opt: nn.AdamState
    critic1_opt: nn.AdamState
    critic2_opt: nn.AdamState

    @property
    def state_dim(self) -> int:
        return self.actor.in_dim

    @property
    def action_dim(self) -> int:
        return self.actor.out_dim


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray


@dataclass(frozen=True)
class Batch:
    states: np.ndarray        # (B, S)
    actions: np.ndarray       # (B, A)
    rewards: np.ndarray       # (B,)
    next_states: np.ndarray   # (B, S)


def init_agent_params(state_dim: int, action_dim: int, cfg: Td3Config,
                      rng: np.random.Generator) -> AgentParams:
    """Random actor/critics; targets start as exact copies."""
    actor = nn.init_dense_net((state_dim, *cfg.hidden, action_dim),
                              ("relu",) * len(cfg.hidden) + ("sigmoid_scaled",),
                              rng, sigmoid_scale=cfg.a_max)
    critic_sizes = (state_dim + action_dim, *cfg.hidden, 1)
    critic_acts = ("relu",) * len(cfg.hidden) + ("identity",)
    critic1 = nn.init_dense_net(critic_sizes, critic_acts, rng)
    critic2 = nn.init_dense_net(critic_sizes, critic_acts, rng)
    return AgentParams(
        actor=actor, critic1=critic1, critic2=critic2,
        target_actor=actor.copy(), target_critic1=critic1.copy(),
        target_critic2=critic2.copy(),
        actor_opt=nn.AdamState.for_net(actor, cfg.actor_lr),
        critic1_opt=nn.AdamState.for_net(critic1, cfg.critic_lr),
        critic2_opt=nn.AdamState.for_net(critic2, cfg.critic_lr),
    )


def select_action(params: AgentParams, state: np.ndarray, cfg: Td3Config,
                  rng: np.random.Generator, explore: bool = True) -> np.ndarray:
    """clip(mu(s) + eps) with eps ~ N(0, sigma_e^2); eval mode adds none."""
    a = nn.forward(params.actor, np.asarray(state, dtype=float))
    if explore and cfg.exploration_noise_var > 0:
        a = a + rng.normal(0.0, math.sqrt(cfg.exploration_noise_var), size=a.shape)
    return np.clip(a, cfg.a_min, cfg.a_max)


def smooth_target_action(params: AgentParams, next_states: np.ndarray,
                         cfg: Td3Config, rng: np.random.Generator) -> np.ndarray:
    """Target actor's action with clipped Gaussian smoothing (td3 only)."""
    a = nn.forward(params.target_actor, np.asarray(next_states, dtype=float))
    if cfg.variant != "ddpg" and cfg.policy_noise_var > 0:
        eps = rng.normal(0.0, math.sqrt(cfg.policy_noise_var), size=a.shape)
        a = a + np.clip(eps, -cfg.noise_clip, cfg.noise_clip)
    return np.clip(a, cfg.a_min, cfg.a_max)


def td_targets(params: AgentParams, rewards: np.ndarray, next_states: np.ndarray,
               cfg: Td3Config, rng: np.random.Generator) -> np.ndarray:
    """y = r + gamma * min(Q'_1, Q'_2) on the smoothed target action.

    Consults target networks only; the online nets never enter here.
    """
    a2 = smooth_target_action(params, next_states, cfg, rng)
    x2 = np.concatenate([next_states, a2], axis=-1)
    q1 = nn.forward(params.target_critic1, x2).reshape(-1)
    if cfg.variant == "ddpg":
        q_next = q1
    else:
        q2 = nn.forward(params.target_critic2, x2).reshape(-1)
        q_next = np.minimum(q1, q2)
    return rewards + cfg.discount * q_next


@dataclass(frozen=True)
class CriticUpdateResult:
    loss1: float
    loss2: float | None
    targets: np.ndarray


def critic_update(params: AgentParams, batch: Batch, cfg: Td3Config,
                  rng: np.random.Generator) -> CriticUpdateResult:
    """One MSE step on each critic against the shared TD target."""
    b = batch.states.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    y = td_targets(params, batch.rewards * cfg.reward_scale, batch.next_states,
                   cfg, rng)
    x = np.concatenate([batch.states, batch.actions], axis=-1)
    critics = [(params.critic1, params.critic1_opt)]
    if cfg.variant != "ddpg":
        critics.append((params.critic2, params.critic2_opt))
    losses = []
    for net, opt in critics:
        q = nn.forward(net, x).reshape(-1)
        diff = q - y
        loss = float(np.mean(diff ** 2))
        if not math.isfinite(loss):
            raise nn.NonFiniteGradientError("critic loss is not finite")
        grads = nn.backward(net, x, (2.0 * diff / b)[:, None])
        nn.optimizer_step(net, grads, opt)
        losses.append(loss)
    return CriticUpdateResult(loss1=losses[0],
                              loss2=losses[1] if len(losses) > 1 else None,
                              targets=y)


def actor_update(params: AgentParams, batch: Batch, cfg: Td3Config) -> float:
    """Ascend the batch-mean of Q_1(s, mu(s)) and refresh all targets."""
    b = batch.states.shape[0]
    actions = nn.forward(params.actor, batch.states)
    x = np.concatenate([batch.states, actions], axis=-1)
    critic_grads = nn.backward(params.critic1, x, np.full((b, 1), 1.0 / b))
    dq_da = critic_grads.d_input[:, params.state_dim:]
    actor_grads = nn.backward(params.actor, batch.states, dq_da)
    ascent = nn.GradientSet(d_weights=[-g for g in actor_grads.d_weights],
                            d_biases=[-g for g in actor_grads.d_biases],
                            d_input=actor_grads.d_input)
    nn.optimizer_step(params.actor, ascent, params.actor_opt)
    nn.polyak_blend(params.target_actor, params.actor, cfg.polyak)
    nn.polyak_blend(params.target_critic1, params.critic1, cfg.polyak)
    if cfg.variant != "ddpg":
        nn.polyak_blend(params.target_critic2, params.critic2, cfg.polyak)
    q_mean = float(np.mean(nn.forward(params.critic1, x)))
    return q_mean


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform without-replacement sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, state, action, reward, next_state) -> None:
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} from {self.size} stored")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return Batch(states=self.states[idx].copy(), actions=self.actions[idx].copy(),
                     rewards=self.rewards[idx].copy(),
                     next_states=self.next_states[idx].copy())


class Td3Agent:
    """Owns the parameters, replay buffer, RNG streams, and the delay schedule."""

    def __init__(self, state_dim: int, action_dim: int, cfg: Td3Config,
                 seed: int | np.random.SeedSequence = 0):
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        init_ss, explore_ss, smooth_ss, sample_ss = ss.spawn(4)
        self.cfg = cfg
        self.init_rng = np.random.default_rng(init_ss)
        self.explore_rng = np.random.default_rng(explore_ss)
        self.smooth_rng = np.random.default_rng(smooth_ss)
        self.sample_rng = np.random.default_rng(sample_ss)
        self.params = init_agent_params(state_dim, action_dim, cfg, self.init_rng)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, state_dim, action_dim)
        self.critic_updates = 0
        self.actor_updates = 0

    def act(self, state, explore: bool = True) -> np.ndarray:
        return select_action(self.params, state, self.cfg, self.explore_rng,
                             explore=explore)

    def observe(self, state, action, reward, next_state) -> None:
        self.buffer.push(state, action, reward, next_state)

    def train_step(self) -> CriticUpdateResult | None:
        """One critic update (if the buffer allows) plus the delayed actor pass."""
        if len(self.buffer) < self.cfg.batch_size:
            return None
        batch = self.buffer.sample(self.cfg.batch_size, self.sample_rng)
        result = critic_update(self.params, batch, self.cfg, self.smooth_rng)
        self.critic_updates += 1
        if self.critic_updates % self.cfg.policy_delay == 0:
            actor_update(self.params, batch, self.cfg)
            self.actor_updates += 1
        return result


_NET_FILES = ("actor", "critic1", "critic2",
              "target_actor", "target_critic1", "target_critic2")


def save_checkpoint(params: AgentParams, out_dir, episode: int, step: int,
                    rng_states: dict | None = None) -> None:
    """Write the six nets plus a JSON sidecar (episode, step, rng states)."""
    os.makedirs(out_dir, exist_ok=True)
    for name in _NET_FILES:
        nn.save_net(getattr(params, name), os.path.join(out_dir, f"{name}.net"))
    meta = {"episode": episode, "step": step, "rng_states": rng_states or {}}
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=1, sort_keys=True)


def load_checkpoint(ckpt_dir, cfg: Td3Config) -> tuple[AgentParams, dict]:
    nets = {name: nn.load_net(os.path.join(ckpt_dir, f"{name}.net"))
            for name in _NET_FILES}
    with open(os.path.join(ckpt_dir, "meta.json"), "r", encoding="utf-8") as f:
        meta = json.load(f)
    actor = nets["actor"]
    params = AgentParams(
        actor=actor, critic1=nets["critic1"], critic2=nets["critic2"],
        target_actor=nets["target_actor"], target_critic1=nets["target_critic1"],
        target_critic2=nets["target_critic2"],
        actor_opt=nn.AdamState.for_net(actor, cfg.actor_lr),
        critic1_opt=nn.AdamState.for_net(nets["critic1"], cfg.critic_lr),
        critic2_opt=nn.AdamState.for_net(nets["critic2"], cfg.critic_lr),
    )
    return params, meta
