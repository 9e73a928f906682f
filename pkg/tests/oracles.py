"""Independent reference computations used by the test-suite.

Nothing here calls into ``busevac.simulator``; the brute-force search re-derives
the evacuation dynamics from distances alone.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

from busevac.network import Network, id_key


def pearson(x, y) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return 0.0
    return sxy / math.sqrt(sxx * syy)


def gae_double_sum(rewards, values, dones, gamma, lam):
    """Advantages by literally summing (gamma*lam)^l * delta_{t+l} up to the episode end."""
    n = len(rewards)
    deltas = []
    for t in range(n):
        nxt = 0.0 if dones[t] else values[t + 1]
        deltas.append(rewards[t] + gamma * nxt - values[t])
    out = []
    for t in range(n):
        total = 0.0
        for l in range(n - t):
            total += (gamma * lam) ** l * deltas[t + l]
            if dones[t + l]:
                break
        out.append(total)
    return out


def all_simple_path_times(network: Network, source: str, target: str) -> list[float]:
    """Travel times of every simple directed path (exhaustive enumeration)."""
    times = []

    def walk(node, seen, acc):
        if node == target:
            times.append(acc)
            return
        for link_id in network.adjacency[node]:
            link = network.links[link_id]
            if link.to_node_id not in seen:
                walk(link.to_node_id, seen | {link.to_node_id}, acc + link.travel_time)

    walk(source, {source}, 0.0)
    return times


def six_node_optimum(network: Network, scenario, horizon: int = 100, epc_penalty: bool = True):
    """Best achievable total cost by exhaustive search over idle-bus destination choices.

    Dynamics (unit minutes): an idle bus picks a node among origins with
    demand, shelters with room and its own node. Leaving an origin it first
    boards min(free seats, waiting, room left at a destination shelter net of
    other buses' loads). It reaches the target after the shortest-path time and
    unloads at shelters on arrival. Each minute costs (waiting + onboard), plus
    the waiting count at EPC nodes when ``epc_penalty`` is set. Returns
    ``(cost, plan)``; cost is ``inf`` when nothing clears within the horizon.
    """
    dist = {}
    nodes = list(network.nodes)
    for u in nodes:
        d = network.distances_from(u)
        for v in nodes:
            if v in d:
                dist[u, v] = d[v] // 10
    origins = tuple(network.origins)
    shelters = tuple(network.shelters)
    epc = tuple(network.nodes[o].inequity_index for o in origins)

    demand0 = tuple(scenario.origin_demands.get(o, 0) for o in origins)
    room0 = tuple(network.nodes[s].capacity for s in shelters)
    buses0 = []
    caps = []
    for p in sorted(scenario.bus_placements, key=lambda b: id_key(b.bus_id)):
        link = network.links[p.link_id]
        arrive = int(p.time_to_travel) + dist[link.to_node_id, p.destination]
        buses0.append((p.destination, arrive, p.onboard))
        caps.append(p.capacity)
    caps = tuple(caps)

    def minute_cost(demand, buses):
        waiting = sum(demand)
        cost = waiting + sum(b[2] for b in buses)
        if epc_penalty:
            cost += sum(d for d, e in zip(demand, epc) if e)
        return cost

    @lru_cache(maxsize=None)
    def solve(t, demand, room, buses):
        if sum(demand) == 0 and all(b[2] == 0 for b in buses):
            return 0.0, ()
        if t >= horizon:
            return math.inf, ()
        idle = [i for i, b in enumerate(buses) if b[1] == t]
        if not idle:
            t_next = min(b[1] for b in buses if b[1] > t)
            t_next = min(t_next, horizon)
            step = minute_cost(demand, buses) * (t_next - t)
            rest, plan = advance(t_next, demand, room, buses)
            return step + rest, plan
        options = []
        for i in idle:
            here = buses[i][0]
            opts = {o for o, d in zip(origins, demand) if d > 0}
            opts |= {s for s, r in zip(shelters, room) if r > 0}
            opts.add(here)
            options.append(sorted(o for o in opts if (here, o) in dist))
        best = (math.inf, ())
        for choice in itertools.product(*options):
            dem = list(demand)
            bs = list(buses)
            for i, target in zip(idle, choice):
                here, _, onboard = bs[i]
                if here in origins:
                    k = origins.index(here)
                    limit = caps[i] - onboard
                    if target in shelters:
                        committed = sum(b[2] for j, b in enumerate(bs) if j != i and b[0] == target)
                        limit = min(limit, room[shelters.index(target)] - committed - onboard)
                    board = max(0, min(dem[k], limit))
                    dem[k] -= board
                    onboard += board
                travel = dist[here, target] if target != here else 1
                bs[i] = (target, t + travel, onboard)
            dem = tuple(dem)
            bs = tuple(bs)
            t_next = min(b[1] for b in bs)
            step = minute_cost(dem, bs) * (t_next - t)
            rest, plan = advance(t_next, dem, room, bs)
            total = step + rest
            if total < best[0]:
                best = (total, ((t, tuple(zip(idle, choice))),) + plan)
        return best

    def advance(t, demand, room, buses):
        room = list(room)
        bs = list(buses)
        for i in range(len(bs)):
            node, arrive, onboard = bs[i]
            if arrive == t and node in shelters:
                k = shelters.index(node)
                drop = min(onboard, room[k])
                room[k] -= drop
                bs[i] = (node, arrive, onboard - drop)
        return solve(t, demand, tuple(room), tuple(bs))

    return solve(0, demand0, room0, tuple(buses0))


def conservation_gap(state) -> int:
    """waiting + onboard + delivered - initial total; zero when nobody is lost or created."""
    onboard = sum(g.count for b in state.buses.values() for g in b.groups)
    delivered = sum(t.passengers for t in state.trips)
    return sum(state.node_demand.values()) + onboard + delivered - state.total_demand


def central_differences(fn, weights: dict, h: float = 1e-5) -> dict:
    """Numerical gradient of the scalar ``fn()`` w.r.t. every entry of ``weights`` (mutated in place)."""
    import numpy as np

    out = {}
    for key, w in weights.items():
        g = np.zeros_like(w)
        flat = w.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = fn()
            flat[i] = keep - h
            down = fn()
            flat[i] = keep
            g.reshape(-1)[i] = (up - down) / (2 * h)
        out[key] = g
    return out


def random_batch(params, n: int, rng):
    """Synthetic PPO minibatch with random masks (each row keeps at least one slot)."""
    import numpy as np

    from busevac.ppo.model import Batch, forward

    b, s = params.n_buses, params.n_slots
    obs = rng.normal(size=(n, params.obs_dim))
    mask = rng.random((n, b, s)) < 0.6
    mask[..., 0] = True
    deciding = rng.random((n, b)) < 0.8
    actions = np.zeros((n, b), dtype=int)
    old_logp = np.zeros(n)
    for i in range(n):
        probs, _ = forward(params, obs[i], mask[i])
        for j in range(b):
            allowed = np.flatnonzero(mask[i, j])
            actions[i, j] = rng.choice(allowed)
            if deciding[i, j]:
                old_logp[i] += np.log(probs[j, actions[i, j]])
    # perturb so some ratios leave the clip interval
    old_logp += rng.normal(scale=0.3, size=n)
    return Batch(obs, mask, deciding, actions, old_logp, rng.normal(size=n), rng.normal(size=n))
