"""Brute-force validation of the learning dynamics on small networks.

States are all 2^n configurations in canonical bit order (bit i of the state
index holds node i's type, M=0 / C=1). At a fixed inverse temperature the
wake-up dynamics is a finite Markov chain whose transition matrix can be
assembled exactly; its stationary distribution is the reference against which
both simulated frequencies and the Gibbs heuristic are compared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO

import numpy as np

from .network import bits_to_config, config_to_string
from .game import GameContext, SizeGuardError, state_tables

#: dense 2^n x 2^n matrices get unwieldy beyond this
STATE_GUARD = 12
#: stationary residual tolerance for the dense solve
STATIONARY_TOL = 1e-10
#: fraction of simulated steps discarded before counting state frequencies
BURN_IN_FRACTION = 0.10


class StationarySolveError(RuntimeError):
    """The dense fixed-point solve failed (chain numerically reducible)."""


def _guard(n: int) -> None:
    if n > STATE_GUARD:
        raise SizeGuardError(f"refusing dense chain build for n={n} > {STATE_GUARD}")


def _flip_probability_table(ctx: GameContext, eta: float) -> np.ndarray:
    """P(resample to M) for every (state, unit) pair, log-sum-exp stabilized."""
    n = ctx.net.n
    L, _, _ = state_tables(ctx)
    states = np.arange(1 << n, dtype=np.int64)
    p_m = np.empty((1 << n, n))
    for i in range(n):
        x0 = states & ~(1 << i)
        x1 = states | (1 << i)
        l_m, l_c = L[x0, i], L[x1, i]
        low = np.minimum(l_m, l_c)
        w_m = np.exp(-eta * (l_m - low))
        w_c = np.exp(-eta * (l_c - low))
        p_m[:, i] = w_m / (w_m + w_c)
    return p_m


def transition_matrix(ctx: GameContext, eta: float) -> np.ndarray:
    """Row-stochastic 2^n x 2^n matrix of the uniform-wakeup resampling chain."""
    n = ctx.net.n
    _guard(n)
    if not (np.isfinite(eta) and eta >= 0):
        raise ValueError(f"eta must be finite and >= 0, got {eta}")
    p_m = _flip_probability_table(ctx, eta)
    total = 1 << n
    states = np.arange(total, dtype=np.int64)
    P = np.zeros((total, total))
    for i in range(n):
        x0 = states & ~(1 << i)
        x1 = states | (1 << i)
        P[states, x0] += p_m[:, i] / n
        P[states, x1] += (1.0 - p_m[:, i]) / n
    return P


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Unique left fixed point of a row-stochastic matrix, by dense linear solve."""
    total = transition.shape[0]
    A = transition.T - np.eye(total)
    A[-1, :] = 1.0
    rhs = np.zeros(total)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise StationarySolveError(f"singular fixed-point system: {exc}") from exc
    residual = float(np.max(np.abs(pi @ transition - pi)))
    if residual > STATIONARY_TOL:
        raise StationarySolveError(f"stationary residual {residual:.3e} exceeds {STATIONARY_TOL}")
    return pi


def gibbs_distribution(ctx: GameContext, eta: float) -> np.ndarray:
    """Probability vector proportional to exp(eta * potential), in state order."""
    _guard(ctx.net.n)
    _, potentials, _ = state_tables(ctx)
    w = np.exp(eta * (potentials - potentials.max()))
    return w / w.sum()


def potential_maximizer_states(ctx: GameContext, tol: float = 1e-9) -> np.ndarray:
    """State indices whose potential is within tol of the global maximum."""
    _guard(ctx.net.n)
    _, potentials, _ = state_tables(ctx)
    return np.where(potentials >= potentials.max() - tol)[0]


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Exact chain at one inverse temperature, with its reference distributions."""

    n: int
    eta: float
    transition: np.ndarray
    stationary: np.ndarray
    gibbs: np.ndarray

    def maximizer_mass(self, maximizer_states: np.ndarray) -> float:
        return float(self.stationary[maximizer_states].sum())

    def write_csv(self, fh: IO[str]) -> None:
        fh.write("state_index,cfg_string,stationary_prob,gibbs_prob\n")
        for x in range(1 << self.n):
            cfg = config_to_string(bits_to_config(x, self.n))
            fh.write(f"{x},{cfg},{self.stationary[x]:.9g},{self.gibbs[x]:.9g}\n")


def build_chain(ctx: GameContext, eta: float) -> ChainModel:
    P = transition_matrix(ctx, eta)
    return ChainModel(
        n=ctx.net.n,
        eta=eta,
        transition=P,
        stationary=stationary_distribution(P),
        gibbs=gibbs_distribution(ctx, eta),
    )


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def detailed_balance_residual(transition: np.ndarray, stationary: np.ndarray) -> float:
    """Worst |pi_x P_xy - pi_y P_yx|; zero for reversible chains."""
    flow = stationary[:, None] * transition
    return float(np.max(np.abs(flow - flow.T)))


@dataclass(frozen=True, eq=False)
class GibbsComparison:
    total_variation: float
    stationary: np.ndarray
    gibbs: np.ndarray


def gibbs_comparison(ctx: GameContext, eta: float) -> GibbsComparison:
    """Distance between the true stationary law and the Gibbs heuristic.

    Zero is expected only when the game is an exact potential game
    (``exactness_check`` = 0); otherwise the gap quantifies how far the
    wake-up dynamics strays from Gibbs sampling of the potential.
    """
    chain = build_chain(ctx, eta)
    return GibbsComparison(
        total_variation=total_variation(chain.stationary, chain.gibbs),
        stationary=chain.stationary,
        gibbs=chain.gibbs,
    )


@dataclass(frozen=True, eq=False)
class EmpiricalCheck:
    tv_distance: float
    empirical: np.ndarray
    stationary: np.ndarray
    steps: int
    seed: int


def empirical_frequency_check(
    ctx: GameContext, eta: float, steps: int, seed: int
) -> EmpiricalCheck:
    """Long fixed-eta simulation versus the exact stationary distribution.

    Draws all unit indices as one block and all uniforms as a second block
    from a seeded generator, then walks the chain counting post-burn-in state
    visits. The total-variation distance to the dense stationary solution
    shrinks as steps grow.
    """
    n = ctx.net.n
    _guard(n)
    if steps < 10**5:
        raise ValueError("empirical check needs at least 1e5 steps")
    P = transition_matrix(ctx, eta)
    pi = stationary_distribution(P)
    p_m = _flip_probability_table(ctx, eta).tolist()

    rng = np.random.default_rng(seed)
    units = rng.integers(0, n, size=steps)
    draws = rng.random(steps)
    burn = int(steps * BURN_IN_FRACTION)
    counts = np.zeros(1 << n)
    x = 0  # all machines
    units_list = units.tolist()
    draws_list = draws.tolist()
    for t in range(steps):
        i = units_list[t]
        if draws_list[t] < p_m[x][i]:
            x &= ~(1 << i)
        else:
            x |= 1 << i
        if t >= burn:
            counts[x] += 1.0
    empirical = counts / counts.sum()
    return EmpiricalCheck(
        tv_distance=total_variation(empirical, pi),
        empirical=empirical,
        stationary=pi,
        steps=steps,
        seed=seed,
    )
