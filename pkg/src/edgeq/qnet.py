"""From-scratch Q-function: a small fully connected network with ReLU hidden
layers, a ring replay buffer, noised TD targets and loss, and plain
gradient-descent updates with hand-written backpropagation.

The default topology is 4 -> 128 -> 128 -> 2 (observation in, one Q-value
per action out).  Updates are deliberately bare: one squared-TD-error batch
gradient, one step of size alpha, no momentum or adaptive scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fgpm import FgpmConfig, NoiseStore

DEFAULT_LAYERS = (4, 128, 128, 2)


class NonFiniteGradientError(Exception):
    """A gradient entry came out NaN or infinite."""


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


class MlpParams:
    """Weights and biases, one (W, b) pair per layer."""

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.weights = weights
        self.biases = biases

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)


def init_params(layer_sizes: tuple[int, ...],
                rng: np.random.Generator) -> MlpParams:
    """Uniform Glorot weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Q-values for one observation (shape (4,) -> (2,)) or a batch."""
    single = x.ndim == 1
    a = x[None, :] if single else x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w + b
        if i < last:
            np.maximum(a, 0.0, out=a)
    return a[0] if single else a


def sync_target(params: MlpParams) -> MlpParams:
    """Deep copy; later updates to the source leave the copy untouched."""
    return params.copy()


def epsilon_greedy(q_values: np.ndarray, epsilon: float,
                   rng: np.random.Generator) -> int:
    """Uniform-random action with probability epsilon, else the argmax.

    Ties go to action 0 (compute locally).  With epsilon == 0 the generator
    is not consumed at all.
    """
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(len(q_values)))
    return 1 if q_values[1] > q_values[0] else 0


def td_target(reward: float, next_state: np.ndarray, action: int,
              target_params: MlpParams, store: NoiseStore | None,
              cfg: FgpmConfig | None, gamma: float,
              rng: np.random.Generator) -> float:
    """Noised bootstrap target: reward + gamma * max over actions of
    (target Q + per-action noise at the next state).

    ``action``/``reward`` identify the transition so the next state lands in
    the right sorted set; with ``store`` None the noise terms are zero and
    this is the vanilla DQN target.
    """
    q = forward(target_params, next_state)
    if store is not None:
        store.insert(action, reward, next_state)
        q = q + np.array([store.sample(a, reward, next_state, cfg, rng)
                          for a in range(len(q))])
    return float(reward + gamma * np.max(q))


def td_loss(targets: np.ndarray, q_taken: np.ndarray,
            noise_taken: np.ndarray) -> float:
    """Mean squared noised TD error over the batch."""
    resid = targets - (q_taken + noise_taken)
    return float(np.mean(resid ** 2))


def grad_and_step(params: MlpParams, states: np.ndarray, actions: np.ndarray,
                  targets: np.ndarray, noise_taken: np.ndarray, alpha: float,
                  grad_clip: float | None = None) -> tuple[float, MlpParams]:
    """One gradient-descent step on the mean squared noised TD error.

    Returns (loss before the step, updated params).  The noise terms are
    constants with respect to the weights.  ``grad_clip`` rescales the full
    gradient to that global L2 norm when exceeded; it is off by default.
    """
    n = states.shape[0]
    acts = [states]
    pre = []
    a = states
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        acts.append(a)

    q = acts[-1]
    rows = np.arange(n)
    resid = targets - (q[rows, actions] + noise_taken)
    loss = float(np.mean(resid ** 2))

    dq = np.zeros_like(q)
    dq[rows, actions] = -2.0 * resid / n

    grads_w, grads_b = [], []
    delta = dq
    for i in range(last, -1, -1):
        grads_w.append(acts[i].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if i > 0:
            delta = (delta @ params.weights[i].T) * (pre[i - 1] > 0.0)
    grads_w.reverse()
    grads_b.reverse()

    for g in grads_w + grads_b:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient entry")

    if grad_clip is not None:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads_w + grads_b))
        if norm > grad_clip:
            scale = grad_clip / norm
            grads_w = [g * scale for g in grads_w]
            grads_b = [g * scale for g in grads_b]

    new_w = [w - alpha * g for w, g in zip(params.weights, grads_w)]
    new_b = [b - alpha * g for b, g in zip(params.biases, grads_b)]
    return loss, MlpParams(new_w, new_b)


class ReplayBuffer:
    """Fixed-capacity ring of transitions; oldest entries overwritten first."""

    def __init__(self, capacity: int = 2000, obs_dim: int = 4):
        self.capacity = capacity
        self.states = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, obs_dim))
        self.size = 0
        self._cursor = 0

    def push(self, state: np.ndarray, action: int, reward: float,
             next_state: np.ndarray) -> None:
        i = self._cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self._cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        k = min(batch, self.size)
        return rng.choice(self.size, size=k, replace=False)


def save_checkpoint(path: str, params: MlpParams) -> None:
    """Plain-text checkpoint: one header line with the layer sizes, then one
    weight per line, full precision, layer by layer (W row-major, then b)."""
    with open(path, "w") as fh:
        fh.write(" ".join(str(s) for s in params.layer_sizes) + "\n")
        for w, b in zip(params.weights, params.biases):
            for v in w.ravel():
                fh.write(repr(float(v)) + "\n")
            for v in b:
                fh.write(repr(float(v)) + "\n")


def load_checkpoint(path: str) -> MlpParams:
    with open(path) as fh:
        sizes = tuple(int(s) for s in fh.readline().split())
        values = [float(line) for line in fh if line.strip()]
    expected = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
    if len(values) != expected:
        raise ValueError(f"checkpoint holds {len(values)} values, "
                         f"topology {sizes} needs {expected}")
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        n = fan_in * fan_out
        weights.append(np.array(values[pos:pos + n]).reshape(fan_in, fan_out))
        pos += n
        biases.append(np.array(values[pos:pos + fan_out]))
        pos += fan_out
    return MlpParams(weights, biases)
