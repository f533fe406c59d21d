"""Synchronized steady state of a radial network for one type configuration.

The synchronized frequency is the ratio of total power input to total damping;
net injections follow as p_i = P0_i - omega0 * d_i, and on a tree the edge
flows solving I xi = p are unique and obtained by leaf elimination in O(n).
A uniform susceptance drop ``delta`` rescales the per-edge sine recovery but
leaves the flows themselves untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Configuration, DampingParams, PowerNetwork, UnitType

#: absolute tolerance on the net-injection sum before a tree flow solve
POWER_BALANCE_TOL = 1e-9


class PowerBalanceError(ValueError):
    """Injections do not sum to zero, so I xi = p has no solution on a tree."""


@dataclass(frozen=True, eq=False)
class SteadyState:
    """Steady state of one configuration at a given uniform susceptance drop.

    ``sine_diffs`` holds the raw ratios xi_e / (b_e - delta); they exceed 1 in
    magnitude exactly when the state is infeasible, in which case
    ``angle_diffs`` is None and ``cohesiveness`` is NaN.
    """

    omega0: float
    injections: np.ndarray
    edge_flows: np.ndarray
    sine_diffs: np.ndarray
    angle_diffs: np.ndarray | None
    delta: float
    feasible: bool
    cohesiveness: float


def damping_vector(net: PowerNetwork, cfg: Configuration, dp: DampingParams) -> np.ndarray:
    if len(cfg) != net.n:
        raise ValueError(f"configuration length {len(cfg)} does not match n={net.n}")
    return np.array([dp.d_c if unit is UnitType.C else dp.d_m for unit in cfg])


def sync_frequency(net: PowerNetwork, cfg: Configuration, dp: DampingParams) -> float:
    """Synchronized frequency: total power input over total damping."""
    return float(net.p0.sum() / damping_vector(net, cfg, dp).sum())


def net_injections(net: PowerNetwork, cfg: Configuration, dp: DampingParams) -> np.ndarray:
    """Per-node net injections p_i = P0_i - omega0 * d_i; they sum to zero."""
    d = damping_vector(net, cfg, dp)
    omega0 = net.p0.sum() / d.sum()
    return net.p0 - omega0 * d


def edge_flows(net: PowerNetwork, p: np.ndarray) -> np.ndarray:
    """Unique tree flows with I xi = p, computed by iterative leaf elimination.

    Each leaf's entire injection must leave through its only edge; folding it
    into the neighbour and repeating resolves every edge exactly once.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (net.n,):
        raise ValueError(f"injection vector must have shape ({net.n},)")
    if abs(p.sum()) > POWER_BALANCE_TOL:
        raise PowerBalanceError(f"injections sum to {p.sum():.3e}, not zero")

    incident: list[list[int]] = [[] for _ in range(net.n)]
    for e, (tail, head) in enumerate(net.edges):
        incident[tail].append(e)
        incident[head].append(e)

    residual = p.copy()
    xi = np.zeros(net.m)
    degree = np.array([len(lst) for lst in incident])
    done = np.zeros(net.m, dtype=bool)
    stack = sorted((v for v in range(net.n) if degree[v] == 1), reverse=True)
    while stack:
        v = stack.pop()
        if degree[v] == 0:
            continue
        e = next(k for k in incident[v] if not done[k])
        tail, head = net.edges[e]
        sign = 1.0 if v == tail else -1.0
        xi[e] = sign * residual[v]
        other = head if v == tail else tail
        residual[other] += residual[v]
        residual[v] = 0.0
        done[e] = True
        degree[v] -= 1
        degree[other] -= 1
        if degree[other] == 1:
            stack.append(other)
    return xi


def flow_matrix(net: PowerNetwork) -> np.ndarray:
    """m x n matrix S with xi = S @ p for balanced p (leaf elimination as a map).

    Row e indicates the nodes on the tail side of edge e: the flow on e equals
    the total injection of that component.
    """
    children: list[list[tuple[int, int]]] = [[] for _ in range(net.n)]
    for e, (tail, head) in enumerate(net.edges):
        children[tail].append((head, e))
        children[head].append((tail, e))
    # BFS from node 0 to root the tree
    order = [0]
    parent_edge = [-1] * net.n
    seen = [False] * net.n
    seen[0] = True
    for v in order:
        for u, e in children[v]:
            if not seen[u]:
                seen[u] = True
                parent_edge[u] = e
                order.append(u)
    # subtree masks accumulated leaves-first
    mask = np.eye(net.n)
    for v in reversed(order[1:]):
        e = parent_edge[v]
        tail, head = net.edges[e]
        par = head if v == tail else tail
        mask[par] += mask[v]
    S = np.zeros((net.m, net.n))
    for v in order[1:]:
        e = parent_edge[v]
        tail, head = net.edges[e]
        if v == tail:
            S[e] = mask[v]
        else:
            S[e] = 1.0 - mask[v]
    return S


def _check_delta(net: PowerNetwork, delta: float) -> None:
    if not (0.0 <= delta < net.min_b):
        raise ValueError(
            f"susceptance drop delta={delta} outside [0, {net.min_b}) for this network"
        )


def flow_feasibility(net: PowerNetwork, xi: np.ndarray, delta: float = 0.0) -> bool:
    """True iff every per-edge flow stays below its (perturbed) capacity."""
    _check_delta(net, delta)
    xi = np.asarray(xi, dtype=float)
    return bool(np.max(np.abs(xi) / (net.b - delta)) < 1.0)


def solve(
    net: PowerNetwork,
    cfg: Configuration,
    dp: DampingParams,
    delta: float = 0.0,
) -> SteadyState:
    """Full steady state for one configuration; infeasible states are flagged, not errors."""
    _check_delta(net, delta)
    d = damping_vector(net, cfg, dp)
    omega0 = float(net.p0.sum() / d.sum())
    p = net.p0 - omega0 * d
    xi = edge_flows(net, p)
    sines = xi / (net.b - delta)
    feasible = bool(np.max(np.abs(sines)) < 1.0) if net.m else True
    if feasible:
        theta = np.arcsin(sines)
        cohesiveness = float(np.max(np.abs(theta))) if net.m else 0.0
    else:
        theta = None
        cohesiveness = float("nan")
    return SteadyState(
        omega0=omega0,
        injections=p,
        edge_flows=xi,
        sine_diffs=sines,
        angle_diffs=theta,
        delta=delta,
        feasible=feasible,
        cohesiveness=cohesiveness,
    )


def bulk_solve(
    net: PowerNetwork,
    dp: DampingParams,
    delta: float,
    states: np.ndarray,
    flow_mat: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized steady states for an array of configuration bitmasks.

    Bit i of a state is set when node i is a converter. Returns per-state
    (omega0, injections, flows, sine_diffs, feasible); rows follow ``states``.
    """
    _check_delta(net, delta)
    states = np.asarray(states, dtype=np.int64)
    bits = (states[:, None] >> np.arange(net.n)) & 1
    d = np.where(bits == 1, dp.d_c, dp.d_m)
    omega0 = net.p0.sum() / d.sum(axis=1)
    p = net.p0[None, :] - omega0[:, None] * d
    S = flow_matrix(net) if flow_mat is None else flow_mat
    flows = p @ S.T
    sines = flows / (net.b - delta)
    feasible = np.max(np.abs(sines), axis=1) < 1.0
    return omega0, p, flows, sines, feasible
