"""Shared Q-network, replay buffer and epsilon-greedy policy.

With a zero discount the Q-learning target is the immediate reward, so an
update is plain regression of the reward of the taken action.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError, DivergenceError, NotReady

KEEP, DOWNTILT, UPTILT = 0, 1, 2
N_ACTIONS = 3
# electrical tilt change in degrees for each action
TILT_DELTA = np.array([0.0, 1.0, -1.0])
ACTION_NAMES = ("keep", "down", "up")

CHECKPOINT_FORMAT = "tiltmarl.qnetwork"
CHECKPOINT_VERSION = 1
REWARD_CLIP = 1000.0


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class QNetwork:
    """Multilayer perceptron with ReLU hidden layers and a linear head."""

    def __init__(self, sizes=(11, 64, 64, 3), rng: np.random.Generator | None = None,
                 adam: AdamConfig = AdamConfig()):
        self.sizes = tuple(int(s) for s in sizes)
        self.adam = adam
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._m = [np.zeros_like(p) for p in self.params()]
        self._v = [np.zeros_like(p) for p in self.params()]
        self.train_steps = 0

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def forward(self, states: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(states, dtype=float))
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def __call__(self, states):
        q = self.forward(states)
        return q[0] if np.ndim(states) == 1 else q

    def loss_and_grads(self, states, actions, rewards):
        """Mean squared error of the taken actions' values and its gradients."""
        x = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.asarray(actions, dtype=np.int64)
        rewards = np.asarray(rewards, dtype=float)
        n = len(x)
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if i < last else z
            acts.append(h)
        rows = np.arange(n)
        err = h[rows, actions] - rewards
        loss = float(np.mean(err ** 2))
        delta = np.zeros_like(h)
        delta[rows, actions] = 2.0 * err / n
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(last, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads += [gw, gb]
        return loss, grads

    def apply_gradients(self, grads) -> None:
        a = self.adam
        self.train_steps += 1
        t = self.train_steps
        c1 = 1.0 - a.beta1 ** t
        c2 = 1.0 - a.beta2 ** t
        for p, g, m, v in zip(self.params(), grads, self._m, self._v):
            m *= a.beta1
            m += (1.0 - a.beta1) * g
            v *= a.beta2
            v += (1.0 - a.beta2) * g * g
            p -= a.lr * (m / c1) / (np.sqrt(v / c2) + a.eps)

    def train_step(self, states, actions, rewards) -> float:
        """One Adam step on the batch; returns the loss before the update."""
        with np.errstate(invalid="ignore", over="ignore"):
            loss, grads = self.loss_and_grads(states, actions, rewards)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss} at train step {self.train_steps}")
        self.apply_gradients(grads)
        return loss

    def copy(self) -> "QNetwork":
        return load_checkpoint(save_checkpoint(self))


def save_checkpoint(net: QNetwork) -> bytes:
    layers = []
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        layers.append({
            "shape": list(w.shape),
            "weights": w.ravel().tolist(),
            "bias": b.tolist(),
            "adam_m": [net._m[2 * i].ravel().tolist(), net._m[2 * i + 1].tolist()],
            "adam_v": [net._v[2 * i].ravel().tolist(), net._v[2 * i + 1].tolist()],
        })
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "sizes": list(net.sizes),
        "adam": vars(net.adam),
        "train_steps": net.train_steps,
        "layers": layers,
    }
    return json.dumps(doc, sort_keys=True).encode()


def load_checkpoint(data: bytes | str) -> QNetwork:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a Q-network checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    try:
        sizes = [int(s) for s in doc["sizes"]]
        net = QNetwork(sizes, adam=AdamConfig(**doc["adam"]))
        if len(doc["layers"]) != len(sizes) - 1:
            raise CheckpointError("layer count does not match sizes")
        for i, layer in enumerate(doc["layers"]):
            shape = (sizes[i], sizes[i + 1])
            if tuple(layer["shape"]) != shape:
                raise CheckpointError(f"layer {i} shape {layer['shape']} != {list(shape)}")
            net.weights[i] = np.array(layer["weights"], dtype=float).reshape(shape)
            net.biases[i] = np.array(layer["bias"], dtype=float).reshape(shape[1])
            net._m[2 * i] = np.array(layer["adam_m"][0], dtype=float).reshape(shape)
            net._m[2 * i + 1] = np.array(layer["adam_m"][1], dtype=float).reshape(shape[1])
            net._v[2 * i] = np.array(layer["adam_v"][0], dtype=float).reshape(shape)
            net._v[2 * i + 1] = np.array(layer["adam_v"][1], dtype=float).reshape(shape[1])
        net.train_steps = int(doc["train_steps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from exc
    return net


class ReplayBuffer:
    """Fixed-capacity FIFO ring of (state, action, reward) samples."""

    def __init__(self, capacity: int = 100_000, n_features: int = 11):
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, n_features))
        self.actions = np.zeros(self.capacity, dtype=np.int64)
        self.rewards = np.zeros(self.capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state, action: int, reward: float) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def push_many(self, states, actions, rewards) -> None:
        for s, a, r in zip(states, actions, rewards):
            self.push(s, a, r)

    def slot_order(self) -> np.ndarray:
        """Slot indices from oldest to newest."""
        start = (self._next - self._size) % self.capacity
        return (start + np.arange(self._size)) % self.capacity

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if self._size < batch_size or self._size == 0:
            raise NotReady(f"buffer holds {self._size} < {batch_size} samples")
        return rng.integers(0, self._size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = self.sample_indices(batch_size, rng)
        return self.states[idx], self.actions[idx], self.rewards[idx]


def select_action(qvalues, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy choice; greedy ties go to the lowest action index."""
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(qvalues))


def select_actions(qvalues: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Row-wise :func:`select_action`; consumes the same random draws for any epsilon."""
    n = len(qvalues)
    explore = rng.random(n) < epsilon
    random_actions = rng.integers(N_ACTIONS, size=n)
    return np.where(explore, random_actions, np.argmax(qvalues, axis=1))


def linear_epsilon(step: int, total_steps: int, start: float = 1.0, end: float = 0.05,
                   fraction: float = 0.5) -> float:
    horizon = max(1.0, fraction * total_steps)
    if step >= horizon:
        return end
    return start + (end - start) * step / horizon


def clip_reward(r):
    return np.clip(r, -REWARD_CLIP, REWARD_CLIP)
