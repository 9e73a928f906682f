"""PPO training loop, Adam, checkpoints and a greedy policy adapter."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from busevac.errors import ContractViolation, NumericalError
from busevac.network import Network
from busevac.ppo.env import EvacEnv
from busevac.ppo.losses import gae
from busevac.ppo.model import (Batch, PolicyParams, forward, imitation_loss_and_grads, init_params,
                               loss_and_grads)
from busevac.scenario import Scenario
from busevac.simulator import OBSERVATIONS, SimConfig, layout_hash, observe, reset

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    learning_rate: float = 3e-4
    hidden: tuple[int, ...] = (64, 64)
    episodes_per_update: int = 8
    epochs: int = 4
    minibatch_size: int = 64
    updates: int = 200
    max_grad_norm: float = 0.5
    seed: int = 0
    patience: int | None = 50      # updates without greedy improvement before stopping
    tolerance: float = 0.01        # relative improvement that resets patience
    time_budget: float | None = None  # seconds
    observation: str = "basic"     # or "distances"
    warm_start: str | None = None  # name of a baseline policy to imitate first
    warm_start_episodes: int = 16
    warm_start_steps: int = 300
    warm_start_noise: float = 0.2  # share of random actions while collecting demonstrations

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0 < self.gamma <= 1 or not 0 <= self.gae_lambda <= 1:
            raise ContractViolation("gamma must lie in (0, 1] and lambda in [0, 1]")
        if not self.clip_epsilon > 0 or not self.learning_rate > 0:
            raise ContractViolation("clip_epsilon and learning_rate must be positive")
        if min(self.episodes_per_update, self.epochs, self.minibatch_size) < 1 or self.updates < 0:
            raise ContractViolation("episode, epoch and minibatch counts must be positive")
        if self.observation not in OBSERVATIONS:
            raise ContractViolation(f"observation must be one of {OBSERVATIONS}")

    @classmethod
    def from_dict(cls, data: dict) -> "PpoConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


class Adam:
    """Adam ascent on a dict of arrays."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def ascend(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            weights[k] += self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    params: PolicyParams
    best_return: float
    history: list[dict] = field(default_factory=list)
    updates: int = 0
    optimizer: Adam | None = None


def _sample(probs_row: np.ndarray, rng: np.random.Generator) -> int:
    return int(rng.choice(len(probs_row), p=probs_row))


def rollout(env: EvacEnv, params: PolicyParams, rng: np.random.Generator | None, greedy: bool = False):
    """One episode. Returns per-decision arrays plus the scaled rewards."""
    dec, done = env.reset()
    obs, masks, deciding, actions, logps, values, rewards = [], [], [], [], [], [], []
    while not done:
        probs, value = forward(params, dec.obs, dec.slot_mask)
        slots = np.zeros(env.n_buses, dtype=int)
        logp = 0.0
        for row in np.flatnonzero(dec.deciding):
            p = probs[row]
            slots[row] = int(np.argmax(p)) if greedy else _sample(p, rng)
            logp += float(np.log(p[slots[row]]))
        obs.append(dec.obs)
        masks.append(dec.slot_mask)
        deciding.append(dec.deciding)
        actions.append(slots)
        logps.append(logp)
        values.append(value)
        dec, reward, done = env.step(slots)
        rewards.append(reward)
    return {"obs": obs, "masks": masks, "deciding": deciding, "actions": actions,
            "logp": logps, "values": values, "rewards": rewards, "lead_in": env.lead_in_reward}


def greedy_return(env: EvacEnv, params: PolicyParams) -> float:
    """Undiscounted return of the argmax policy, in simulator reward units."""
    ep = rollout(env, params, None, greedy=True)
    return float((ep["lead_in"] + sum(ep["rewards"])) / env.reward_scale)


def _batch(episodes, config: PpoConfig) -> Batch:
    obs, masks, deciding, actions, logp, adv, ret = [], [], [], [], [], [], []
    for ep in episodes:
        if not ep["rewards"]:
            continue
        values = np.asarray(ep["values"] + [0.0])
        dones = np.zeros(len(ep["rewards"]), bool)
        dones[-1] = True
        a = gae(ep["rewards"], values, config.gamma, config.gae_lambda, dones)
        adv.append(a)
        ret.append(a + values[:-1])
        obs += ep["obs"]
        masks += ep["masks"]
        deciding += ep["deciding"]
        actions += ep["actions"]
        logp += ep["logp"]
    adv = np.concatenate(adv)
    if adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return Batch(np.asarray(obs), np.asarray(masks), np.asarray(deciding), np.asarray(actions),
                 np.asarray(logp), adv, np.concatenate(ret))


def _clip_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if not np.isfinite(norm):
        raise NumericalError("non-finite gradient", snapshot={"norm": norm})
    if max_norm and norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def demonstrations(env: EvacEnv, teacher, episodes: int, noise: float,
                   rng: np.random.Generator, gamma: float) -> Batch:
    """Decision epochs visited by ``teacher`` (with random detours), labelled with its choices.

    With probability ``noise`` per decision the executed action is a random
    admissible slot; the label is always the teacher's own choice.
    """
    obs, masks, deciding, labels, returns = [], [], [], [], []
    for _ in range(episodes):
        dec, done = env.reset()
        rewards = []
        while not done:
            node_masks = {b: env._masks[b] for b in env._masks}
            chosen = teacher(env.state, env.network, node_masks, rng)
            label = np.zeros(env.n_buses, dtype=int)
            act = np.zeros(env.n_buses, dtype=int)
            for row, bus_id in enumerate(env.bus_ids):
                if not dec.deciding[row]:
                    continue
                label[row] = env.slot_for(bus_id, chosen.get(bus_id, env.state.buses[bus_id].to_node))
                act[row] = label[row]
                if rng.random() < noise:
                    act[row] = int(rng.choice(np.flatnonzero(dec.slot_mask[row])))
            obs.append(dec.obs)
            masks.append(dec.slot_mask)
            deciding.append(dec.deciding)
            labels.append(label)
            dec, reward, done = env.step(act)
            rewards.append(reward)
        ret, acc = [], 0.0
        for r in reversed(rewards):
            acc = r + gamma * acc
            ret.append(acc)
        returns += ret[::-1]
    n = len(obs)
    return Batch(np.asarray(obs), np.asarray(masks), np.asarray(deciding), np.asarray(labels),
                 np.zeros(n), np.zeros(n), np.asarray(returns))


def imitate(params: PolicyParams, batch: Batch, config: PpoConfig, rng: np.random.Generator) -> dict:
    """Fit the policy to demonstrated actions and the value net to their returns."""
    optimizer = Adam(1e-3)
    stats = {}
    for _ in range(config.warm_start_steps):
        idx = rng.choice(len(batch), size=min(len(batch), 4 * config.minibatch_size), replace=False)
        stats, grads = imitation_loss_and_grads(params, batch.subset(idx), config.value_coef)
        _clip_norm(grads, 10.0 * config.max_grad_norm)
        optimizer.ascend(params.weights, grads)
    stats, _ = imitation_loss_and_grads(params, batch, config.value_coef)
    return stats


def initial_params(env: EvacEnv, config: PpoConfig, rng: np.random.Generator) -> PolicyParams:
    params = init_params(env.obs_dim, env.n_buses, env.n_slots, rng, config.hidden,
                         env.observation_scale(), env.layout_hash(), features=env.features)
    if config.warm_start:
        from busevac.policies import get_policy

        teacher = get_policy(config.warm_start)
        batch = demonstrations(env, teacher, config.warm_start_episodes, config.warm_start_noise,
                               rng, config.gamma)
        if len(batch):
            stats = imitate(params, batch, config, rng)
            log.info("warm start from %s: accuracy %.3f", config.warm_start, stats["accuracy"])
    return params


def train(network: Network, scenario: Scenario, sim_config: SimConfig, config: PpoConfig,
          params: PolicyParams | None = None, optimizer: Adam | None = None,
          start_update: int = 0) -> TrainResult:
    """Train on one scenario, keeping the weights with the best greedy return.

    Without ``params`` the networks are initialised afresh (and, if
    ``config.warm_start`` names a baseline, fitted to its decisions first).
    """
    features = params.features if params is not None else config.observation
    env = EvacEnv(network, scenario, sim_config, features=features)
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = initial_params(env, config, rng)
    elif params.layout_hash and params.layout_hash != env.layout_hash():
        raise ContractViolation("checkpoint observation layout does not match this network")
    optimizer = optimizer or Adam(config.learning_rate)

    best = params.copy()
    best_return = greedy_return(env, params)
    stale = 0
    history = []
    started = time.monotonic()
    update = start_update
    for update in range(start_update + 1, start_update + config.updates + 1):
        episodes = [rollout(env, params, rng) for _ in range(config.episodes_per_update)]
        batch = _batch(episodes, config)
        stats = {}
        if len(batch):
            for _ in range(config.epochs):
                order = rng.permutation(len(batch))
                for lo in range(0, len(batch), config.minibatch_size):
                    mb = batch.subset(order[lo:lo + config.minibatch_size])
                    stats, grads = loss_and_grads(params, mb, config.clip_epsilon,
                                                  config.value_coef, config.entropy_coef)
                    stats["grad_norm"] = _clip_norm(grads, config.max_grad_norm)
                    optimizer.ascend(params.weights, grads)
        sampled = float(np.mean([ep["lead_in"] + sum(ep["rewards"]) for ep in episodes])) / env.reward_scale
        current = greedy_return(env, params)
        improved = current > best_return + config.tolerance * abs(best_return)
        if current > best_return:
            best, best_return = params.copy(), current
        stale = 0 if improved else stale + 1
        history.append({"update": update, "sampled_return": sampled, "greedy_return": current,
                        "best_return": best_return, **stats})
        log.debug("update %d sampled %.1f greedy %.1f best %.1f", update, sampled, current, best_return)
        if config.patience is not None and stale >= config.patience:
            log.info("early stop at update %d (best greedy return %.1f)", update, best_return)
            break
        if config.time_budget is not None and time.monotonic() - started > config.time_budget:
            log.info("time budget reached at update %d", update)
            break
    return TrainResult(best, best_return, history, update, optimizer)


class PpoPolicy:
    """Greedy (argmax) dispatcher backed by trained weights."""

    def __init__(self, params: PolicyParams, network: Network, scenario: Scenario, config: SimConfig):
        self.params = params
        self.env = EvacEnv(network, scenario, config, features=params.features)
        if params.layout_hash and params.layout_hash != self.env.layout_hash():
            raise ContractViolation("checkpoint observation layout does not match this network")

    def __call__(self, state, network, masks, rng=None):
        slot_mask, deciding = self.env.slot_mask_for(state, masks)
        probs, _ = forward(self.params, observe(state, network, self.params.features), slot_mask)
        actions = {}
        for row, bus_id in enumerate(self.env.bus_ids):
            if deciding[row]:
                slot = int(np.argmax(probs[row]))
                actions[bus_id] = state.buses[bus_id].to_node if slot == self.env.hold_slot \
                    else self.env.universe[slot]
        return actions


# -- checkpoints -----------------------------------------------------------------

def _pack(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.ravel(order="C").tolist()}


def _unpack(blob: dict) -> np.ndarray:
    return np.asarray(blob["data"], dtype=float).reshape(blob["shape"], order="C")


def save_checkpoint(path, params: PolicyParams, config: PpoConfig, updates: int = 0,
                    optimizer: Adam | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "layout_hash": params.layout_hash,
        "n_buses": params.n_buses,
        "n_slots": params.n_slots,
        "hidden": list(params.hidden),
        "features": params.features,
        "obs_scale": _pack(params.obs_scale),
        "weights": {k: _pack(v) for k, v in params.weights.items()},
        "updates": updates,
    }
    if optimizer is not None:
        doc["adam"] = {"t": optimizer.t, "lr": optimizer.lr,
                       "m": {k: _pack(v) for k, v in optimizer.m.items()},
                       "v": {k: _pack(v) for k, v in optimizer.v.items()}}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path, expected_layout: str | None = None):
    """Returns ``(params, config, updates, optimizer_or_None)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ContractViolation(f"unsupported checkpoint version {doc.get('version')!r}")
    if expected_layout is not None and doc["layout_hash"] != expected_layout:
        raise ContractViolation("checkpoint observation layout does not match this network")
    params = PolicyParams({k: _unpack(v) for k, v in doc["weights"].items()}, int(doc["n_buses"]),
                          int(doc["n_slots"]), _unpack(doc["obs_scale"]), tuple(doc["hidden"]),
                          doc["layout_hash"], doc.get("features", "basic"))
    config = PpoConfig.from_dict(doc["config"])
    optimizer = None
    if "adam" in doc:
        optimizer = Adam(doc["adam"]["lr"])
        optimizer.t = int(doc["adam"]["t"])
        optimizer.m = {k: _unpack(v) for k, v in doc["adam"]["m"].items()}
        optimizer.v = {k: _unpack(v) for k, v in doc["adam"]["v"].items()}
    return params, config, int(doc.get("updates", 0)), optimizer


def expected_layout(network: Network, scenario: Scenario, sim_config: SimConfig,
                    features: str = "basic") -> str:
    return layout_hash(reset(network, scenario, sim_config), network, features)
