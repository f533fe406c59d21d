"""Robustness of the allocation against a uniform susceptance drop.

For a configuration s, the per-node power deviation compares the weighted sine
sums of s (weights b_e - delta, angles held at their unperturbed values)
against the target weighted sums; the steady state stays in the feasibility
region while every deviation is below alpha. The margin is the smallest drop
that pushes some node out. Because the deviation is affine in delta, the
crossing has the closed form (alpha + A_i) / B_i per node; nodes whose sine
sum B_i is negative cross on the opposite side, and the exact margin splits
the sign accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO

import numpy as np

from .network import (
    Configuration,
    DampingParams,
    PowerNetwork,
    bits_to_config,
    config_to_string,
    incidence,
)
from .game import GameContext, SizeGuardError, ENUMERATION_GUARD, _iter_state_chunks
from .steady_state import bulk_solve, flow_matrix, solve

#: reference values reported for the bundled six-unit case study (`paper6`)
PAPER6_ALPHA_FLOOR_REFERENCE = 0.8142
PAPER6_NETWORK_MARGIN_REFERENCE = 0.4723


def _require_unperturbed(ctx: GameContext) -> None:
    if ctx.delta != 0.0:
        raise ValueError("robustness analysis starts from an unperturbed context (delta=0)")


def _node_terms(ctx: GameContext, cfg: Configuration) -> tuple[np.ndarray, np.ndarray]:
    """Per-node A_i (weighted sine-sum offset at delta=0) and B_i (plain sine sum).

    The deviation of node i at drop delta is |A_i - delta * B_i|; angles are
    the unperturbed steady-state angles of cfg throughout.
    """
    _require_unperturbed(ctx)
    ss = solve(ctx.net, cfg, ctx.dp, 0.0)
    inc = incidence(ctx.net)
    A = inc @ (ctx.net.b * ss.sine_diffs) - inc @ (ctx.net.b * ctx.target_sines)
    B = inc @ ss.sine_diffs
    return A, B


def power_deviation(ctx0: GameContext, cfg: Configuration, delta: float) -> np.ndarray:
    """Per-node deviation of weighted sine sums from the target sums at a given drop."""
    if not (0.0 <= delta < ctx0.net.min_b):
        raise ValueError(f"delta={delta} outside [0, {ctx0.net.min_b})")
    A, B = _node_terms(ctx0, cfg)
    return np.abs(A - delta * B)


def in_feasibility_region(
    ctx0: GameContext, cfg: Configuration, delta: float, alpha: float
) -> bool:
    """True iff every node's power deviation stays strictly below alpha."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return bool(np.max(power_deviation(ctx0, cfg, delta)) < alpha)


def margin_closed_form(ctx0: GameContext, cfg: Configuration, alpha: float) -> float:
    """Closed-form margin min_i (alpha + A_i) / B_i over nodes with B_i > 0.

    Nodes with a non-positive sine sum are skipped here (their crossing sits on
    the other branch); +inf when no node qualifies. ``margin_exact`` covers
    both branches.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    A, B = _node_terms(ctx0, cfg)
    ratios = [(alpha + a) / b_ for a, b_ in zip(A, B) if b_ > 0]
    return float(min(ratios)) if ratios else float("inf")


def margin_exact(ctx0: GameContext, cfg: Configuration, alpha: float) -> float:
    """Smallest drop at which some node's deviation reaches alpha (sign-split form)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    A, B = _node_terms(ctx0, cfg)
    if np.max(np.abs(A)) >= alpha:
        raise ValueError("steady state already outside the feasibility region at delta=0")
    crossings = np.full(ctx0.net.n, np.inf)
    pos = B > 0
    neg = B < 0
    crossings[pos] = (alpha + A[pos]) / B[pos]
    crossings[neg] = (A[neg] - alpha) / B[neg]
    return float(np.min(crossings))


def bisect_margin(
    ctx0: GameContext,
    cfg: Configuration,
    alpha: float,
    tol: float = 1e-12,
) -> float | None:
    """Locate the region boundary by bisection on ``in_feasibility_region``.

    Searches the admissible drop domain [0, min_e b_e); returns None when the
    region still holds at the top of the domain (no crossing to find). Serves
    as an independent check of ``margin_exact``.
    """
    hi = ctx0.net.min_b * (1.0 - 1e-9)
    if not in_feasibility_region(ctx0, cfg, 0.0, alpha):
        raise ValueError("steady state already outside the feasibility region at delta=0")
    if in_feasibility_region(ctx0, cfg, hi, alpha):
        return None
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if in_feasibility_region(ctx0, cfg, mid, alpha):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def delta_flow_limit(net: PowerNetwork, cfg: Configuration, dp: DampingParams) -> float:
    """Largest drop keeping every perturbed edge flow feasible: min_e (b_e - |xi_e|)."""
    ss = solve(net, cfg, dp, 0.0)
    return float(min(np.min(net.b - np.abs(ss.edge_flows)), net.min_b))


def calibrate_alpha(ctx0: GameContext) -> float:
    """Smallest admissible alpha: worst |A_i| over all configurations and nodes."""
    _require_unperturbed(ctx0)
    net = ctx0.net
    if net.n > ENUMERATION_GUARD:
        raise SizeGuardError(f"refusing exhaustive sweep for n={net.n} > {ENUMERATION_GUARD}")
    inc = incidence(net)
    target_term = inc @ (net.b * ctx0.target_sines)
    S = flow_matrix(net)
    worst = 0.0
    for states in _iter_state_chunks(net.n):
        _, injections, _, _, _ = bulk_solve(net, ctx0.dp, 0.0, states, flow_mat=S)
        # weighted sine sums collapse to net injections at delta=0
        A = injections - target_term[None, :]
        worst = max(worst, float(np.max(np.abs(A))))
    return worst


@dataclass(frozen=True)
class ConfigMargin:
    cfg: Configuration
    margin_closed_form: float
    margin_exact: float
    delta_flow_limit: float

    @property
    def effective_margin(self) -> float:
        return min(self.margin_exact, self.delta_flow_limit)


@dataclass(frozen=True, eq=False)
class RobustnessReport:
    """Per-configuration margins plus the network-wide summary values."""

    alpha: float
    records: tuple[ConfigMargin, ...]
    calibrated_alpha_floor: float

    @property
    def network_margin(self) -> float:
        return min(rec.margin_closed_form for rec in self.records)

    @property
    def network_margin_exact(self) -> float:
        return min(rec.margin_exact for rec in self.records)

    def write_csv(self, fh: IO[str]) -> None:
        fh.write("cfg,margin_closed_form,margin_exact,delta_flow_limit,effective_margin\n")
        for rec in self.records:
            fh.write(
                f"{config_to_string(rec.cfg)},{rec.margin_closed_form:.9g},"
                f"{rec.margin_exact:.9g},{rec.delta_flow_limit:.9g},"
                f"{rec.effective_margin:.9g}\n"
            )


def robustness_report(ctx0: GameContext, alpha: float) -> RobustnessReport:
    """Margins for every configuration of the network at a given alpha."""
    _require_unperturbed(ctx0)
    net = ctx0.net
    if net.n > ENUMERATION_GUARD:
        raise SizeGuardError(f"refusing exhaustive sweep for n={net.n} > {ENUMERATION_GUARD}")
    floor = calibrate_alpha(ctx0)
    records = []
    for bits in range(1 << net.n):
        cfg = bits_to_config(bits, net.n)
        records.append(
            ConfigMargin(
                cfg=cfg,
                margin_closed_form=margin_closed_form(ctx0, cfg, alpha),
                margin_exact=margin_exact(ctx0, cfg, alpha),
                delta_flow_limit=delta_flow_limit(net, cfg, ctx0.dp),
            )
        )
    return RobustnessReport(alpha=alpha, records=tuple(records), calibrated_alpha_floor=floor)


def consistency_check(ctx0: GameContext, alpha: float) -> dict:
    """Cross-validate margin_exact against bisection for every configuration.

    For configurations whose crossing lies inside the admissible drop domain
    the two must agree within 1e-9 and the region must flip across the margin;
    for the rest the region must hold throughout the domain. Returns a summary
    dict with the worst disagreement observed.
    """
    _require_unperturbed(ctx0)
    net = ctx0.net
    if net.n > ENUMERATION_GUARD:
        raise SizeGuardError(f"refusing exhaustive sweep for n={net.n} > {ENUMERATION_GUARD}")
    hi = net.min_b * (1.0 - 1e-9)
    worst_diff = 0.0
    in_domain = 0
    flips_ok = True
    for bits in range(1 << net.n):
        cfg = bits_to_config(bits, net.n)
        exact = margin_exact(ctx0, cfg, alpha)
        found = bisect_margin(ctx0, cfg, alpha)
        if found is None:
            if exact < hi:
                flips_ok = False
                worst_diff = max(worst_diff, hi - exact)
            continue
        in_domain += 1
        worst_diff = max(worst_diff, abs(found - exact))
        if in_feasibility_region(ctx0, cfg, max(exact - 1e-6, 0.0), alpha) is not True:
            flips_ok = False
        if exact + 1e-6 < hi and in_feasibility_region(ctx0, cfg, exact + 1e-6, alpha):
            flips_ok = False
    return {
        "configs": 1 << net.n,
        "crossings_in_domain": in_domain,
        "max_abs_difference": worst_diff,
        "flips_at_margin": flips_ok,
        "consistent": flips_ok and worst_diff <= 1e-9,
    }
