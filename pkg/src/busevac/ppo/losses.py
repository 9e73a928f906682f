"""Scalar pieces of the PPO objective."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from busevac.errors import ContractViolation


def gae(rewards: Sequence[float], values: Sequence[float], gamma: float, lam: float,
        dones: Sequence[bool] | None = None) -> np.ndarray:
    """Generalized advantage estimates by backward recursion.

    ``values`` carries one more entry than ``rewards``: the bootstrap value of
    the state after the last reward. A step flagged in ``dones`` ends its
    episode, so the value after it counts as zero and the recursion restarts.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape[0] != rewards.shape[0] + 1:
        raise ContractViolation("values must have exactly one more entry than rewards")
    dones = np.zeros(len(rewards), bool) if dones is None else np.asarray(dones, bool)
    if dones.shape[0] != rewards.shape[0]:
        raise ContractViolation("dones and rewards differ in length")
    adv = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
    return adv


def clipped_objective(ratio, advantage, epsilon: float):
    """min(r * A, clip(r, 1 - eps, 1 + eps) * A), elementwise."""
    if not epsilon > 0:
        raise ContractViolation("epsilon must be positive")
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    out = np.minimum(ratio * advantage, np.clip(ratio, 1 - epsilon, 1 + epsilon) * advantage)
    return float(out) if out.ndim == 0 else out


def value_loss(values, returns) -> float:
    values = np.asarray(values, dtype=float)
    returns = np.asarray(returns, dtype=float)
    if values.shape != returns.shape:
        raise ContractViolation("values and returns differ in shape")
    return float(np.mean((values - returns) ** 2))


def total_loss(clip_term: float, value_term: float, entropy_term: float, c1: float, c2: float) -> float:
    """Combined objective L = L_clip - c1 * L_vf + c2 * S (to be maximised)."""
    return clip_term - c1 * value_term + c2 * entropy_term


def entropy(probs) -> float:
    """Shannon entropy in nats; zero-probability (masked) entries contribute nothing."""
    p = np.asarray(probs, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())
