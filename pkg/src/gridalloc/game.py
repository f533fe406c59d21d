"""Allocation game: interaction costs, utilities, potential, equilibrium analysis.

Players are the generation units; a player's action is its type. The pairwise
cost on an edge is the absolute mismatch between the realized and the target
sine of the angle difference, each unit's utility is the negated susceptance-
weighted cost over its incident edges, and the potential aggregates the same
mismatch over all edges. A uniform susceptance drop ``delta`` perturbs both
the weights and the sine recovery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterator

import numpy as np

from .network import (
    Configuration,
    DampingParams,
    PowerNetwork,
    TargetAngles,
    UnitType,
    bits_to_config,
    config_to_bits,
    config_to_string,
    incidence,
)
from .steady_state import bulk_solve, flow_matrix, solve

#: enumeration refuses above this many nodes (2^n configurations)
ENUMERATION_GUARD = 20
#: configurations within this of the best potential count as maximizers
MAXIMIZER_TOL = 1e-9
#: utilities within this of the best response count as ties
TIE_TOL = 1e-12
#: acceptable worst-edge angle mismatch when recovering a configuration
RECOVERY_TOL = 1e-2

_CHUNK = 1 << 14


class SizeGuardError(RuntimeError):
    """An exhaustive operation was requested on a network that is too large."""


class RecoveryError(ValueError):
    """No configuration realizes the given target angles within tolerance."""


@dataclass(frozen=True, eq=False)
class GameContext:
    """Everything needed to evaluate the game: network, damping, targets, drop."""

    net: PowerNetwork
    dp: DampingParams
    targets: TargetAngles
    delta: float = 0.0

    def __post_init__(self):
        if len(self.targets) != self.net.m:
            raise ValueError(
                f"targets must list one angle per edge ({self.net.m}), got {len(self.targets)}"
            )
        if not (0.0 <= self.delta < self.net.min_b):
            raise ValueError(
                f"delta={self.delta} outside [0, {self.net.min_b}) for this network"
            )
        object.__setattr__(self, "_target_sines", np.sin(self.targets.theta))
        object.__setattr__(self, "_bhat", self.net.b - self.delta)

    @property
    def target_sines(self) -> np.ndarray:
        return self._target_sines

    @property
    def bhat(self) -> np.ndarray:
        """Perturbed edge weights b_e - delta."""
        return self._bhat


def _guard(n: int, limit: int = ENUMERATION_GUARD) -> None:
    if n > limit:
        raise SizeGuardError(f"refusing exhaustive sweep for n={n} > {limit}")


def edge_cost_vector(ctx: GameContext, cfg: Configuration) -> np.ndarray:
    """Per-edge costs |sin theta_e - sin theta*_e| for one configuration.

    Infeasible edges substitute the clamped ratio sign(xi)*1 so that the cost
    stays defined (and large) instead of crashing the learning chain.
    """
    ss = solve(ctx.net, cfg, ctx.dp, ctx.delta)
    realized = np.clip(ss.sine_diffs, -1.0, 1.0)
    return np.abs(realized - ctx.target_sines)


def edge_cost(ctx: GameContext, cfg: Configuration, e: int) -> float:
    return float(edge_cost_vector(ctx, cfg)[e])


def utility(ctx: GameContext, cfg: Configuration, i: int) -> float:
    """Unit i's utility: negated weighted cost over its incident edges."""
    costs = edge_cost_vector(ctx, cfg)
    total = 0.0
    for e, (tail, head) in enumerate(ctx.net.edges):
        if i == tail or i == head:
            total += ctx.bhat[e] * costs[e]
    return -total


def potential(ctx: GameContext, cfg: Configuration) -> float:
    """Global potential: half the negated weighted cost summed over all edges.

    Zero exactly when every edge realizes its target angle; negative otherwise.
    """
    costs = edge_cost_vector(ctx, cfg)
    return -0.5 * float(ctx.bhat @ costs)


def _iter_state_chunks(n: int) -> Iterator[np.ndarray]:
    total = 1 << n
    for start in range(0, total, _CHUNK):
        yield np.arange(start, min(start + _CHUNK, total), dtype=np.int64)


def state_tables(ctx: GameContext) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exhaustive per-state tables over all 2^n configurations.

    Returns (weighted_costs_by_node, potentials, feasible): row x uses the bit
    encoding of configurations (bit i set = node i is a converter), and
    weighted_costs_by_node[x, i] is the incident weighted cost whose negation
    is unit i's utility in state x.
    """
    n = ctx.net.n
    _guard(n)
    total = 1 << n
    S = flow_matrix(ctx.net)
    absI = np.abs(incidence(ctx.net))
    L = np.empty((total, n))
    potentials = np.empty(total)
    feasible = np.empty(total, dtype=bool)
    for states in _iter_state_chunks(n):
        _, _, _, sines, feas = bulk_solve(ctx.net, ctx.dp, ctx.delta, states, flow_mat=S)
        costs = np.abs(np.clip(sines, -1.0, 1.0) - ctx.target_sines[None, :])
        weighted = costs * ctx.bhat[None, :]
        L[states] = weighted @ absI.T
        potentials[states] = -0.5 * weighted.sum(axis=1)
        feasible[states] = feas
    return L, potentials, feasible


def exactness_check(ctx: GameContext) -> float:
    """Worst |du_i - dU| over all unilateral type flips; 0 for exact potential games."""
    n = ctx.net.n
    L, potentials, _ = state_tables(ctx)
    states = np.arange(1 << n, dtype=np.int64)
    worst = 0.0
    for i in range(n):
        flipped = states ^ (1 << i)
        du = L[states, i] - L[flipped, i]  # u = -L
        dU = potentials[flipped] - potentials[states]
        worst = max(worst, float(np.max(np.abs(du - dU))))
    return worst


def best_responses(ctx: GameContext, cfg: Configuration, i: int) -> set[UnitType]:
    """Argmax of unit i's utility over its two types; ties return both."""
    utilities = {}
    for unit in (UnitType.M, UnitType.C):
        candidate = tuple(unit if k == i else c for k, c in enumerate(cfg))
        utilities[unit] = utility(ctx, candidate, i)
    best = max(utilities.values())
    return {unit for unit, val in utilities.items() if val >= best - TIE_TOL}


@dataclass(frozen=True)
class GameRecord:
    cfg: Configuration
    potential: float
    is_nash: bool
    is_maximizer: bool
    feasible: bool


@dataclass(frozen=True, eq=False)
class GameReport:
    """Exhaustive game table; record x follows the bit encoding of configurations."""

    records: tuple[GameRecord, ...]

    @property
    def max_potential(self) -> float:
        return max(rec.potential for rec in self.records)

    def maximizers(self) -> list[Configuration]:
        return [rec.cfg for rec in self.records if rec.is_maximizer]

    def nash_configs(self) -> list[Configuration]:
        return [rec.cfg for rec in self.records if rec.is_nash]

    def record_for(self, cfg: Configuration) -> GameRecord:
        return self.records[config_to_bits(cfg)]

    def write_csv(self, fh: IO[str]) -> None:
        fh.write("cfg,potential,is_nash,is_maximizer,feasible\n")
        for rec in self.records:
            fh.write(
                f"{config_to_string(rec.cfg)},{rec.potential:.9g},"
                f"{str(rec.is_nash).lower()},{str(rec.is_maximizer).lower()},"
                f"{str(rec.feasible).lower()}\n"
            )


def enumerate_game(ctx: GameContext) -> GameReport:
    """Potential, Nash flag, maximizer flag, and feasibility for all 2^n configurations."""
    n = ctx.net.n
    L, potentials, feasible = state_tables(ctx)
    states = np.arange(1 << n, dtype=np.int64)
    nash = np.ones(1 << n, dtype=bool)
    for i in range(n):
        flipped = states ^ (1 << i)
        # the current type must be a best response: L no worse than the flip
        nash &= L[states, i] <= L[flipped, i] + TIE_TOL
    cutoff = potentials.max() - MAXIMIZER_TOL
    records = tuple(
        GameRecord(
            cfg=bits_to_config(int(x), n),
            potential=float(potentials[x]),
            is_nash=bool(nash[x]),
            is_maximizer=bool(potentials[x] >= cutoff),
            feasible=bool(feasible[x]),
        )
        for x in states
    )
    return GameReport(records=records)


def _angle_mismatch_table(net: PowerNetwork, dp: DampingParams, targets: TargetAngles) -> np.ndarray:
    """Worst-edge |realized angle - target| for every configuration (inf if infeasible)."""
    S = flow_matrix(net)
    total = 1 << net.n
    mismatch = np.empty(total)
    for states in _iter_state_chunks(net.n):
        _, _, _, sines, feas = bulk_solve(net, dp, 0.0, states, flow_mat=S)
        worst = np.full(len(states), np.inf)
        ok = feas
        if ok.any():
            angles = np.arcsin(np.clip(sines[ok], -1.0, 1.0))
            worst[ok] = np.max(np.abs(angles - targets.theta[None, :]), axis=1)
        mismatch[states] = worst
    return mismatch


def recover_optimal_config(
    net: PowerNetwork, dp: DampingParams, targets: TargetAngles
) -> Configuration:
    """Recover the configuration whose steady state realizes the target angles.

    The weighted sine sums of the targets reveal each node's damping up to the
    common factor omega0, so damping ratios classify nodes directly; if the
    classified configuration does not reproduce the targets, an exhaustive
    search over all 2^n configurations picks the best match instead.
    """
    _guard(net.n)
    q = net.p0 - incidence(net) @ (net.b * np.sin(targets.theta))
    candidate: Configuration | None = None
    qmin = np.min(np.abs(q))
    if np.all(q > 0) and qmin > 0:
        ratio = q / q[np.argmin(q)]
        r_m = dp.d_m / dp.d_c
        candidate = tuple(
            UnitType.M if abs(r - r_m) < abs(r - 1.0) else UnitType.C for r in ratio
        )

    def mismatch(cfg: Configuration) -> float:
        ss = solve(net, cfg, dp, 0.0)
        if not ss.feasible:
            return float("inf")
        return float(np.max(np.abs(ss.angle_diffs - targets.theta)))

    if candidate is not None and mismatch(candidate) <= RECOVERY_TOL:
        return candidate
    table = _angle_mismatch_table(net, dp, targets)
    best = int(np.argmin(table))
    if table[best] > RECOVERY_TOL:
        raise RecoveryError(
            f"no configuration realizes the targets within {RECOVERY_TOL} rad "
            f"(best mismatch {table[best]:.3g})"
        )
    return bits_to_config(best, net.n)
