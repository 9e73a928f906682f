"""Policy and value networks with hand-written reverse-mode gradients.

Two tanh MLPs share nothing but the input. The policy net emits one row of
logits per bus over ``n_slots`` choices (the candidate nodes plus a final
"hold" slot); the value net emits a scalar. Gradients are accumulated layer by
layer from cached activations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from busevac.ppo.losses import total_loss

NEG_INF = -1e30


@dataclass
class PolicyParams:
    weights: dict[str, np.ndarray]
    n_buses: int
    n_slots: int
    obs_scale: np.ndarray
    hidden: tuple[int, ...] = (64, 64)
    layout_hash: str = ""
    features: str = "basic"

    @property
    def obs_dim(self) -> int:
        return self.weights["pi.W0"].shape[0]

    @property
    def n_parameters(self) -> int:
        return int(sum(w.size for w in self.weights.values()))

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.weights.items()}, self.n_buses,
                            self.n_slots, self.obs_scale.copy(), self.hidden, self.layout_hash,
                            self.features)


@dataclass
class Batch:
    """Flattened decision epochs for one PPO update."""

    obs: np.ndarray          # (N, D)
    slot_mask: np.ndarray    # (N, B, S) bool
    deciding: np.ndarray     # (N, B) bool
    actions: np.ndarray      # (N, B) int, ignored where not deciding
    old_logp: np.ndarray     # (N,)
    advantages: np.ndarray   # (N,)
    returns: np.ndarray      # (N,)

    def __len__(self):
        return self.obs.shape[0]

    def subset(self, idx) -> "Batch":
        return Batch(self.obs[idx], self.slot_mask[idx], self.deciding[idx], self.actions[idx],
                     self.old_logp[idx], self.advantages[idx], self.returns[idx])


def _layer_sizes(obs_dim, hidden, out_dim):
    return [obs_dim, *hidden, out_dim]


def init_params(obs_dim: int, n_buses: int, n_slots: int, rng: np.random.Generator,
                hidden=(64, 64), obs_scale=None, layout_hash: str = "",
                zero_policy_head: bool = False, features: str = "basic") -> PolicyParams:
    weights = {}
    for prefix, out_dim, head_gain in (("pi", n_buses * n_slots, 0.01), ("v", 1, 1.0)):
        sizes = _layer_sizes(obs_dim, hidden, out_dim)
        for i in range(len(sizes) - 1):
            last = i == len(sizes) - 2
            gain = head_gain if last else 1.0
            std = gain / np.sqrt(sizes[i])
            weights[f"{prefix}.W{i}"] = rng.normal(0.0, std, size=(sizes[i], sizes[i + 1]))
            weights[f"{prefix}.b{i}"] = np.zeros(sizes[i + 1])
        if prefix == "pi" and zero_policy_head:
            weights[f"pi.W{len(sizes) - 2}"][:] = 0.0
    scale = np.ones(obs_dim) if obs_scale is None else np.asarray(obs_scale, dtype=float)
    return PolicyParams(weights, n_buses, n_slots, scale, tuple(hidden), layout_hash, features)


def _mlp_forward(weights, prefix, x, n_layers):
    cache = [x]
    h = x
    for i in range(n_layers):
        z = h @ weights[f"{prefix}.W{i}"] + weights[f"{prefix}.b{i}"]
        h = z if i == n_layers - 1 else np.tanh(z)
        cache.append(h)
    return h, cache


def _mlp_backward(weights, prefix, cache, dout, n_layers, grads):
    g = dout
    for i in range(n_layers - 1, -1, -1):
        if i != n_layers - 1:
            g = g * (1.0 - cache[i + 1] ** 2)
        grads[f"{prefix}.W{i}"] = cache[i].T @ g
        grads[f"{prefix}.b{i}"] = g.sum(axis=0)
        if i:
            g = g @ weights[f"{prefix}.W{i}"].T


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, logits, NEG_INF)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def _heads(params: PolicyParams, obs: np.ndarray):
    x = obs / params.obs_scale
    n_layers = len(params.hidden) + 1
    logits, pi_cache = _mlp_forward(params.weights, "pi", x, n_layers)
    value, v_cache = _mlp_forward(params.weights, "v", x, n_layers)
    logits = logits.reshape(obs.shape[0], params.n_buses, params.n_slots)
    return logits, value[:, 0], pi_cache, v_cache


def forward(params: PolicyParams, obs: np.ndarray, slot_mask: np.ndarray):
    """Per-bus action distributions and the state value for one observation.

    ``slot_mask`` is a (buses, slots) boolean array; rows without any
    admissible slot are returned as all zeros.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (params.obs_dim,):
        raise ValueError(f"observation has shape {obs.shape}, expected ({params.obs_dim},)")
    slot_mask = np.asarray(slot_mask, dtype=bool)
    if slot_mask.shape != (params.n_buses, params.n_slots):
        raise ValueError(f"mask has shape {slot_mask.shape}, expected {(params.n_buses, params.n_slots)}")
    logits, value, _, _ = _heads(params, obs[None, :])
    safe = slot_mask.copy()
    empty = ~safe.any(axis=1)
    safe[empty, 0] = True
    probs = masked_softmax(logits[0], safe)
    probs[empty] = 0.0
    return probs, float(value[0])


def _safe_mask(batch: Batch) -> np.ndarray:
    mask = batch.slot_mask.copy()
    empty = ~mask.any(axis=2)
    mask[empty, 0] = True
    return mask


def log_probs(params: PolicyParams, batch: Batch) -> np.ndarray:
    logits, _, _, _ = _heads(params, batch.obs)
    probs = masked_softmax(logits, _safe_mask(batch))
    picked = np.take_along_axis(probs, batch.actions[..., None], axis=2)[..., 0]
    return np.where(batch.deciding, np.log(np.maximum(picked, 1e-300)), 0.0).sum(axis=1)


def loss_and_grads(params: PolicyParams, batch: Batch, clip_epsilon: float,
                   value_coef: float, entropy_coef: float, with_grads: bool = True):
    """Objective L = L_clip - c1 * L_vf + c2 * S on ``batch`` and dL/dweights.

    The gradients point uphill: optimisers ascend L.
    """
    n = len(batch)
    logits, values, pi_cache, v_cache = _heads(params, batch.obs)
    mask = _safe_mask(batch)
    probs = masked_softmax(logits, mask)
    dec = batch.deciding.astype(float)

    picked = np.take_along_axis(probs, batch.actions[..., None], axis=2)[..., 0]
    logp = (dec * np.log(np.maximum(picked, 1e-300))).sum(axis=1)
    ratio = np.exp(logp - batch.old_logp)
    adv = batch.advantages
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - clip_epsilon, 1 + clip_epsilon) * adv
    l_clip = float(np.mean(np.minimum(unclipped, clipped)))

    l_vf = float(np.mean((values - batch.returns) ** 2))

    logp_all = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    ent_bus = -(probs * logp_all).sum(axis=2)                      # (N, B)
    s_ent = float((dec * ent_bus).sum(axis=1).mean())

    objective = total_loss(l_clip, l_vf, s_ent, value_coef, entropy_coef)
    stats = {"objective": objective, "clip": l_clip, "value": l_vf, "entropy": s_ent,
             "approx_kl": float(np.mean(batch.old_logp - logp)),
             "clip_fraction": float(np.mean(np.abs(ratio - 1) > clip_epsilon))}
    if not with_grads:
        return stats, None

    # d L_clip / d logp_i: the unclipped branch carries the gradient when it is the min
    g_logp = np.where(unclipped <= clipped, adv * ratio, 0.0) / n           # (N,)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, batch.actions[..., None], 1.0, axis=2)
    d_logits = g_logp[:, None, None] * (onehot - probs)
    # dH/dz_j = -p_j (log p_j + H)
    d_ent = -probs * (logp_all + ent_bus[..., None])
    d_logits = d_logits + (entropy_coef / n) * d_ent
    d_logits *= dec[..., None]
    d_logits = np.where(mask, d_logits, 0.0)

    d_values = (-value_coef * 2.0 / n) * (values - batch.returns)
    return stats, _backward(params, pi_cache, v_cache, d_logits, d_values)


def _backward(params, pi_cache, v_cache, d_logits, d_values) -> dict[str, np.ndarray]:
    grads: dict[str, np.ndarray] = {}
    n_layers = len(params.hidden) + 1
    n = d_logits.shape[0]
    _mlp_backward(params.weights, "pi", pi_cache, d_logits.reshape(n, -1), n_layers, grads)
    _mlp_backward(params.weights, "v", v_cache, d_values[:, None], n_layers, grads)
    return grads


def imitation_loss_and_grads(params: PolicyParams, batch: Batch, value_coef: float):
    """Mean log-likelihood of ``batch.actions`` minus c1 * value MSE, and its gradient.

    Used to warm-start the policy from a demonstrator before PPO.
    """
    n = len(batch)
    logits, values, pi_cache, v_cache = _heads(params, batch.obs)
    mask = _safe_mask(batch)
    probs = masked_softmax(logits, mask)
    dec = batch.deciding.astype(float)
    picked = np.take_along_axis(probs, batch.actions[..., None], axis=2)[..., 0]
    loglik = float((dec * np.log(np.maximum(picked, 1e-300))).sum(axis=1).mean())
    l_vf = float(np.mean((values - batch.returns) ** 2))
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, batch.actions[..., None], 1.0, axis=2)
    d_logits = np.where(mask, (onehot - probs) * dec[..., None] / n, 0.0)
    d_values = (-value_coef * 2.0 / n) * (values - batch.returns)
    agree = float(((np.argmax(probs, axis=2) == batch.actions) | ~batch.deciding).all(axis=1).mean())
    stats = {"objective": loglik - value_coef * l_vf, "loglik": loglik, "value": l_vf, "accuracy": agree}
    return stats, _backward(params, pi_cache, v_cache, d_logits, d_values)
