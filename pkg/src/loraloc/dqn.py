"""Deep Q-learning over the localization MDP.

Plain DQN: an epsilon-greedy policy feeding a circular replay buffer,
mini-batch squared-error updates of Q(s, a) against r + gamma * max_a'
Q_target(s', a') with a periodically synchronized frozen target network.
Terminal transitions never bootstrap. Everything runs single-threaded
and fully seeded so training logs are bit-reproducible.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .data import FingerprintSet, RadioMap
from .env import EnvConfig, LocalizationEnv, oracle_step_bound
from .nn import AdamState, Network, adam_step, backend, backward, forward, init_network, stack_specs

log = logging.getLogger(__name__)

N_ACTIONS = 5


@dataclass
class ReplayBuffer:
    """Circular transition store; once full, inserts overwrite the oldest."""

    capacity: int
    state_dim: int
    states: np.ndarray = field(init=False)
    actions: np.ndarray = field(init=False)
    rewards: np.ndarray = field(init=False)
    next_states: np.ndarray = field(init=False)
    dones: np.ndarray = field(init=False)
    cursor: int = field(init=False, default=0)
    size: int = field(init=False, default=0)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.states = np.empty((self.capacity, self.state_dim))
        self.actions = np.empty(self.capacity, dtype=np.int64)
        self.rewards = np.empty(self.capacity)
        self.next_states = np.empty((self.capacity, self.state_dim))
        self.dones = np.empty(self.capacity, dtype=bool)

    def __len__(self) -> int:
        return self.size

    def push(self, state, action: int, reward: float, next_state, done: bool) -> None:
        i = self.cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform mini-batch (with replacement) as contiguous arrays."""
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
        )


@dataclass(frozen=True)
class EpsilonSchedule:
    """Exponential per-step decay from start down to a floor."""

    start: float = 1.0
    minimum: float = 0.001
    decay: float = 0.9999

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")
        if self.minimum > self.start:
            raise ValueError("minimum cannot exceed start")

    def value(self, step: int) -> float:
        return max(self.minimum, self.start * self.decay**step)

    @classmethod
    def reaching_floor_at(cls, total_steps: int, start: float = 1.0, minimum: float = 0.001,
                          fraction: float = 0.7) -> "EpsilonSchedule":
        """Decay factor chosen so the floor is hit at `fraction` of the horizon."""
        horizon = max(1, int(total_steps * fraction))
        return cls(start=start, minimum=minimum, decay=(minimum / start) ** (1.0 / horizon))


@dataclass(frozen=True)
class DqnConfig:
    hidden: Tuple[int, ...] = (128, 128, 64)
    learning_rate: float = 5e-4
    batch_size: int = 512
    gamma: float = 0.1
    buffer_capacity: int = 50_000
    target_sync_steps: int = 1000
    warmup_size: int = 1024
    train_freq: int = 1  # gradient updates happen every `train_freq` env steps
    beta1: float = 0.9
    beta2: float = 0.999
    eps_start: float = 1.0
    eps_min: float = 0.001
    eps_horizon_fraction: float = 0.7
    eps_decay: Optional[float] = None  # explicit per-step factor overrides the horizon rule

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")


def build_q_network(state_dim: int, config: DqnConfig, seed: int) -> Network:
    return init_network(stack_specs(state_dim, config.hidden, N_ACTIONS), seed)


def q_values(net: Network, state: np.ndarray) -> np.ndarray:
    """One deterministic eval-mode forward pass; returns the 5 action values."""
    out, _ = forward(net, state, mode="eval")
    return out


def select_action(net: Network, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over q_values; greedy ties go to the lowest action."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(1, N_ACTIONS + 1))
    return int(np.argmax(q_values(net, state))) + 1


def compute_targets(batch, target_net: Network, gamma: float) -> np.ndarray:
    """Bellman targets y = r + gamma * max_a' Q_target(s', a'), no bootstrap on done."""
    _, _, rewards, next_states, dones = batch
    targets = rewards.astype(np.float64).copy()
    live = ~dones
    if gamma != 0.0 and np.any(live):
        next_q, _ = forward(target_net, next_states[live], mode="eval")
        targets[live] += gamma * next_q.max(axis=1)
    return targets


def train_step(
    net: Network,
    target_net: Network,
    buffer: ReplayBuffer,
    adam: AdamState,
    config: DqnConfig,
    rng: np.random.Generator,
) -> float:
    """One uniform mini-batch update; only the taken action's output gets gradient."""
    batch = buffer.sample(config.batch_size, rng)
    states, actions = batch[0], batch[1]
    targets = compute_targets(batch, target_net, config.gamma)
    out, cache = forward(net, states, mode="train")
    rows = np.arange(len(actions))
    taken = out[rows, actions - 1]
    diff = taken - targets
    loss = float(np.mean(diff * diff))
    if not math.isfinite(loss):
        raise RuntimeError(f"non-finite DQN loss {loss}; training diverged")
    dout = np.zeros_like(out)
    dout[rows, actions - 1] = 2.0 * diff / len(actions)
    grads = backward(net, cache, dout)
    adam_step(adam, net, grads)
    return loss


@dataclass
class EpisodeRecord:
    episode: int
    iow: float
    reward: float
    steps: int
    error_m: float
    epsilon: float
    loss: float  # mean TD loss over the episode's updates (nan during warmup)


@dataclass
class DqnAgent:
    """Trained Q-network plus everything needed to act greedily."""

    net: Network
    config: DqnConfig
    env_config: EnvConfig

    def policy(self):
        def act(state, env):
            return int(np.argmax(q_values(self.net, state))) + 1

        return act


def train(
    radio_map: RadioMap,
    train_samples: FingerprintSet,
    episodes: int,
    config: DqnConfig = DqnConfig(),
    env_config: EnvConfig = EnvConfig(),
    seed: int = 0,
    log_every: int = 0,
) -> Tuple[DqnAgent, List[EpisodeRecord]]:
    """Run the training loop: one episode per training sample, cycling
    (reshuffled) through the split until `episodes` episodes are done.

    Epsilon decays once per environment step; the target network syncs
    every `target_sync_steps` environment steps; one gradient update per
    `train_freq` steps once the buffer holds `warmup_size` transitions.
    """
    if len(train_samples) == 0:
        raise ValueError("training split is empty")
    env = LocalizationEnv(radio_map, env_config)
    rng = np.random.default_rng(seed)
    net = build_q_network(env.state_dim, config, seed)
    target_net = net.copy()
    adam = AdamState.for_network(net, config.learning_rate, config.beta1, config.beta2)
    buffer = ReplayBuffer(capacity=config.buffer_capacity, state_dim=env.state_dim)
    with backend.single_thread_blas():
        return _train_loop(env, train_samples, episodes, config, env_config, log_every,
                           rng, net, target_net, adam, buffer)


def _train_loop(env, train_samples, episodes, config, env_config, log_every,
                rng, net, target_net, adam, buffer):
    if config.eps_decay is not None:
        schedule = EpsilonSchedule(config.eps_start, config.eps_min, config.eps_decay)
    else:
        # plan for episodes of roughly oracle depth
        expected_steps = episodes * (oracle_step_bound(env.d0, env_config.precision) + 1)
        schedule = EpsilonSchedule.reaching_floor_at(
            expected_steps, config.eps_start, config.eps_min, config.eps_horizon_fraction
        )

    records: List[EpisodeRecord] = []
    order = rng.permutation(len(train_samples))
    pos = 0
    env_steps = 0
    for episode in range(episodes):
        if pos == len(order):
            order = rng.permutation(len(train_samples))
            pos = 0
        sample = train_samples[int(order[pos])]
        pos += 1
        state = env.reset(sample)
        total_reward = 0.0
        losses = []
        epsilon = schedule.value(env_steps)
        while not env.done:
            epsilon = schedule.value(env_steps)
            action = select_action(net, state, epsilon, rng)
            outcome = env.step(action)
            buffer.push(state, action, outcome.reward, outcome.next_state, outcome.done)
            state = outcome.next_state
            total_reward += outcome.reward
            env_steps += 1
            if len(buffer) >= config.warmup_size and env_steps % config.train_freq == 0:
                losses.append(train_step(net, target_net, buffer, adam, config, rng))
            if env_steps % config.target_sync_steps == 0:
                target_net.copy_params_from(net)
        records.append(
            EpisodeRecord(
                episode=episode,
                iow=env.current_iow,
                reward=total_reward,
                steps=env.steps_taken,
                error_m=env.position_error(),
                epsilon=epsilon,
                loss=float(np.mean(losses)) if losses else float("nan"),
            )
        )
        if log_every and (episode + 1) % log_every == 0:
            tail = records[-log_every:]
            log.info(
                "episode %d: mean error %.1f m, mean reward %.2f, mean steps %.1f, eps %.3f",
                episode + 1,
                float(np.mean([r.error_m for r in tail])),
                float(np.mean([r.reward for r in tail])),
                float(np.mean([r.steps for r in tail])),
                epsilon,
            )
    return DqnAgent(net=net, config=config, env_config=env_config), records


def evaluate(agent: DqnAgent, radio_map: RadioMap, samples: FingerprintSet) -> np.ndarray:
    """Greedy (epsilon = 0) episode per sample; returns the error vector in meters."""
    env = LocalizationEnv(radio_map, agent.env_config)
    policy = agent.policy()
    errors = np.empty(len(samples))
    with backend.single_thread_blas():
        for i in range(len(samples)):
            state = env.reset(samples[i])
            while not env.done:
                state = env.step(policy(state, env)).next_state
            errors[i] = env.position_error()
    return errors
