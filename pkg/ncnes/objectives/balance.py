"""Built-in episodic control task: keep a pole balanced on a moving cart.

State (x, x_dot, theta, theta_dot), each drawn uniformly from [-0.05, 0.05]
at episode start. Two actions push the cart with +-10 N. Dynamics use
explicit Euler integration with tau = 0.02 s:

    gravity 9.8, cart mass 1.0, pole mass 0.1, pole half-length 0.5
    temp      = (F + m_p l theta_dot^2 sin(theta)) / (m_c + m_p)
    theta_acc = (g sin(theta) - cos(theta) temp)
                / (l (4/3 - m_p cos(theta)^2 / (m_c + m_p)))
    x_acc     = temp - m_p l theta_acc cos(theta) / (m_c + m_p)

The episode ends when |x| > 2.4, |theta| > 12 degrees, or after 500 steps.
Every step taken (including the failing one) earns +1, and only the episode
total is returned, so returns lie in [1, 500].

The policy is a small feedforward network obs 4 -> tanh hidden 8 -> 2
action scores (argmax, ties to action 0) whose weights are one flat vector.
"""

import math
import logging

import numpy as np

logger = logging.getLogger(__name__)

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
POLE_HALF_LENGTH = 0.5
FORCE = 10.0
TAU = 0.02
X_LIMIT = 2.4
THETA_LIMIT = 12 * 2 * math.pi / 360
MAX_STEPS = 500
INIT_SPREAD = 0.05

_TOTAL_MASS = CART_MASS + POLE_MASS
_POLE_MOMENT = POLE_MASS * POLE_HALF_LENGTH


class PolicyCodec:
    """Maps a flat weight vector to per-layer (W, b) pairs and back."""

    def __init__(self, layer_sizes=(4, 8, 2)):
        if len(layer_sizes) < 2 or any(int(n) < 1 for n in layer_sizes):
            raise ValueError(f"Invalid layer sizes: {layer_sizes!r}")
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        self.shapes = [(n_in, n_out) for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:])]
        self.weight_count = sum((n_in + 1) * n_out for n_in, n_out in self.shapes)

    def unflatten(self, weights):
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.size != self.weight_count:
            raise ValueError(f"expected {self.weight_count} weights, got {w.size}")
        layers, pos = [], 0
        for n_in, n_out in self.shapes:
            matrix = w[pos:pos + n_in * n_out].reshape(n_in, n_out)
            pos += n_in * n_out
            bias = w[pos:pos + n_out]
            pos += n_out
            layers.append((matrix, bias))
        return layers

    def flatten(self, layers):
        parts = []
        for (matrix, bias), (n_in, n_out) in zip(layers, self.shapes):
            parts.append(np.asarray(matrix, dtype=float).reshape(n_in * n_out))
            parts.append(np.asarray(bias, dtype=float).reshape(n_out))
        return np.concatenate(parts)

    def act(self, layers, obs):
        h = np.asarray(obs, dtype=float)
        for k, (matrix, bias) in enumerate(layers):
            h = h @ matrix + bias
            if k < len(layers) - 1:
                h = np.tanh(h)
        return int(np.argmax(h))


DEFAULT_CODEC = PolicyCodec()


def _step(state, action):
    x, x_dot, theta, theta_dot = state
    force = FORCE if action == 1 else -FORCE
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    temp = (force + _POLE_MOMENT * theta_dot * theta_dot * sin_t) / _TOTAL_MASS
    theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_t * cos_t / _TOTAL_MASS))
    x_acc = temp - _POLE_MOMENT * theta_acc * cos_t / _TOTAL_MASS
    return (x + TAU * x_dot, x_dot + TAU * x_acc,
            theta + TAU * theta_dot, theta_dot + TAU * theta_acc)


def run_episode(layers, rng, codec=DEFAULT_CODEC):
    state = tuple(rng.uniform(-INIT_SPREAD, INIT_SPREAD, size=4))
    steps = 0
    while steps < MAX_STEPS:
        state = _step(state, codec.act(layers, state))
        steps += 1
        if abs(state[0]) > X_LIMIT or abs(state[2]) > THETA_LIMIT:
            break
    return steps


def policy_rollout(weights, episodes, stream, codec=DEFAULT_CODEC):
    """Average undiscounted return over `episodes` episodes drawn from `stream`."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if not np.all(np.isfinite(w)):
        raise ValueError("policy weights must be finite")
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1: {episodes!r}")
    layers = codec.unflatten(w)
    rng = stream.rng()
    returns = [run_episode(layers, rng, codec) for _ in range(int(episodes))]
    return float(np.mean(returns))
