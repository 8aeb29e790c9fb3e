"""The localization MDP: square search windows, five shrink actions, IoW reward.

An episode starts from the smallest square covering the whole radio map
and repeatedly moves/shrinks the window (corner actions move the center
by half the current half-length, action 5 keeps it; every action halves
the half-length). The episode ends once the windows overlap enough
(IoW >= delta) or a step cap is hit; the position estimate is the final
window center.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .data import Fingerprint, RadioMap

ACTIONS = (1, 2, 3, 4, 5)  # 1 up-left, 2 up-right, 3 down-left, 4 down-right, 5 stay

_ACTION_MOVES = {
    1: (-0.5, +0.5),
    2: (+0.5, +0.5),
    3: (-0.5, -0.5),
    4: (+0.5, -0.5),
    5: (0.0, 0.0),
}


@dataclass(frozen=True)
class Window:
    """Axis-aligned square: center (x, y) and half-length d (side = 2d)."""

    x: float
    y: float
    d: float

    def __post_init__(self):
        if self.d <= 0:
            raise ValueError("window half-length must be > 0")

    @property
    def area(self) -> float:
        return (2.0 * self.d) ** 2

    def contains(self, px: float, py: float) -> bool:
        return abs(px - self.x) <= self.d and abs(py - self.y) <= self.d


@dataclass(frozen=True)
class TargetSpec:
    """Ground truth and the target window of half-length P centered on it."""

    true_position: Tuple[float, float]
    precision: float

    def __post_init__(self):
        if self.precision <= 0:
            raise ValueError("precision must be > 0")

    @property
    def window(self) -> Window:
        return Window(self.true_position[0], self.true_position[1], self.precision)


def apply_action(window: Window, action: int, alpha: float = 0.5) -> Window:
    """Move the center per the action mapping, then shrink d by alpha."""
    try:
        mx, my = _ACTION_MOVES[action]
    except (KeyError, TypeError):
        raise ValueError(f"action must be one of {ACTIONS}, got {action!r}") from None
    return Window(
        x=window.x + mx * window.d,
        y=window.y + my * window.d,
        d=alpha * window.d,
    )


def iow(search: Window, target: Window) -> float:
    """Intersection of windows: overlap area normalized by the search area."""
    dx = min(search.x + search.d, target.x + target.d) - max(search.x - search.d, target.x - target.d)
    dy = min(search.y + search.d, target.y + target.d) - max(search.y - search.d, target.y - target.d)
    if dx <= 0.0 or dy <= 0.0:
        return 0.0
    return (dx * dy) / search.area


def reward(prev_iow: float, next_iow: float, delta: float = 0.5, xi: float = 10.0, phi: float = 1.0) -> float:
    """Stopping reward xi when the overlap threshold is reached, phi for
    any step that does not lose overlap, -xi otherwise."""
    if next_iow >= delta:
        return xi
    if prev_iow <= next_iow < delta:
        return phi
    return -xi


@dataclass(frozen=True)
class EnvConfig:
    precision: float = 10.0  # target window half-length P (m)
    history_len: int = 10
    max_steps: Optional[int] = 20  # step cap; None disables truncation
    alpha: float = 0.5
    delta: float = 0.5
    xi: float = 10.0
    phi: float = 1.0

    def __post_init__(self):
        if self.precision <= 0:
            raise ValueError("precision must be > 0")
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")


@dataclass
class StepOutcome:
    next_state: np.ndarray
    reward: float
    done: bool
    info: dict


@dataclass
class EpisodeTraceRow:
    step: int
    action: int
    x: float
    y: float
    d: float
    iow: float
    reward: float
    done: bool


class LocalizationEnv:
    """One search episode per fingerprint sample over a shared radio map.

    The observation vector is [normalized RSSI, normalized SF, normalized
    window (x, y, d), flattened one-hot action history], every entry in
    [0, 1]. Instances hold per-episode state; run one instance per worker.
    """

    def __init__(self, radio_map: RadioMap, config: EnvConfig = EnvConfig()):
        self.radio_map = radio_map
        self.config = config
        x_min, x_max, y_min, y_max = radio_map.bounds
        self.origin = ((x_min + x_max) / 2.0, (y_min + y_max) / 2.0)
        self.d0 = max(x_max - x_min, y_max - y_min) / 2.0 + config.precision
        self.window: Optional[Window] = None
        self.target: Optional[TargetSpec] = None
        self._features: Optional[np.ndarray] = None
        self._history: Optional[np.ndarray] = None
        self._steps = 0
        self._done = True
        self._iow = 0.0
        self._trace: List[EpisodeTraceRow] = []

    @property
    def state_dim(self) -> int:
        return self.radio_map.gateway_count + 1 + 3 + 5 * self.config.history_len

    @property
    def initial_window(self) -> Window:
        return Window(self.origin[0], self.origin[1], self.d0)

    def reset(self, sample: Fingerprint) -> np.ndarray:
        """Start an episode on one (imputed, planar) fingerprint."""
        if sample.position_m is None:
            raise ValueError("sample must carry a planar position")
        if np.isnan(sample.rssi_dbm).any():
            raise ValueError("sample must be imputed before use")
        self._features = self.radio_map.normalizer.features_row(sample.rssi_dbm, sample.sf)
        self.target = TargetSpec(
            true_position=(float(sample.position_m[0]), float(sample.position_m[1])),
            precision=self.config.precision,
        )
        self.window = self.initial_window
        self._history = np.zeros((self.config.history_len, 5))
        self._steps = 0
        self._done = False
        self._iow = iow(self.window, self.target.window)
        self._trace = [EpisodeTraceRow(0, 0, self.window.x, self.window.y, self.window.d, self._iow, 0.0, False)]
        return self._encode()

    def _encode(self) -> np.ndarray:
        # window center stays within origin +- d0 for any action sequence,
        # so this encoding is always in [0, 1]
        wx = (self.window.x - (self.origin[0] - self.d0)) / (2.0 * self.d0)
        wy = (self.window.y - (self.origin[1] - self.d0)) / (2.0 * self.d0)
        wd = self.window.d / self.d0
        return np.concatenate([self._features, [wx, wy, wd], self._history.ravel()])

    def step(self, action: int) -> StepOutcome:
        """Apply one window update; reward and termination use the post-shrink IoW."""
        if self._done:
            raise RuntimeError("episode is done; call reset() before stepping")
        cfg = self.config
        self.window = apply_action(self.window, action, cfg.alpha)
        next_iow = iow(self.window, self.target.window)
        step_reward = reward(self._iow, next_iow, cfg.delta, cfg.xi, cfg.phi)
        self._steps += 1
        self._history = np.roll(self._history, -1, axis=0)
        self._history[-1] = 0.0
        self._history[-1, action - 1] = 1.0
        success = next_iow >= cfg.delta
        truncated = cfg.max_steps is not None and self._steps >= cfg.max_steps and not success
        self._done = success or truncated
        self._iow = next_iow
        info = {"iow": next_iow, "steps": self._steps, "success": success, "truncated": truncated}
        if self._done:
            err = self.position_error()
            info["error_m"] = err
            info["estimate_m"] = (self.window.x, self.window.y)
        self._trace.append(
            EpisodeTraceRow(self._steps, action, self.window.x, self.window.y, self.window.d,
                            next_iow, step_reward, self._done)
        )
        return StepOutcome(next_state=self._encode(), reward=step_reward, done=self._done, info=info)

    def position_error(self) -> float:
        """Euclidean distance from the current window center to the truth."""
        tx, ty = self.target.true_position
        return float(np.hypot(self.window.x - tx, self.window.y - ty))

    @property
    def done(self) -> bool:
        return self._done

    @property
    def current_iow(self) -> float:
        return self._iow

    @property
    def steps_taken(self) -> int:
        return self._steps

    def trace(self) -> List[EpisodeTraceRow]:
        return list(self._trace)


def oracle_action(window: Window, target: Window, alpha: float = 0.5) -> int:
    """Containment-greedy choice: the action whose child window maximizes
    the next IoW (lowest action number wins ties)."""
    best_action, best = 1, -1.0
    for action in ACTIONS:
        candidate = iow(apply_action(window, action, alpha), target)
        if candidate > best:
            best_action, best = action, candidate
    return best_action


def run_episode(env: LocalizationEnv, sample: Fingerprint, policy, rng=None) -> dict:
    """Roll one episode under `policy(state, env) -> action`; returns the final info
    plus total reward."""
    state = env.reset(sample)
    total = 0.0
    info = {}
    while not env.done:
        outcome = env.step(policy(state, env))
        total += outcome.reward
        state = outcome.next_state
        info = outcome.info
    info["total_reward"] = total
    return info


def random_policy(rng: np.random.Generator):
    """Uniform-random action policy (the no-learning baseline)."""

    def policy(state, env):
        return int(rng.integers(1, 6))

    return policy


def oracle_policy():
    """Policy wrapper around oracle_action (needs the env's true target)."""

    def policy(state, env):
        return oracle_action(env.window, env.target.window, env.config.alpha)

    return policy


def oracle_step_bound(d0: float, precision: float) -> int:
    """Steps the greedy oracle needs at most: ceil(log2(d0 / (sqrt(2) P))) + 1."""
    return int(np.ceil(np.log2(d0 / (np.sqrt(2.0) * precision)))) + 1
