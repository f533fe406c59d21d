"""Asynchronous log-linear learning over type configurations.

At each discrete step one unit wakes up (chosen uniformly at random) and
resamples its type with probability proportional to exp(eta * utility), where
eta is the inverse temperature at that step. Randomness comes from a seeded
``numpy.random.Generator`` (PCG64); each step consumes the stream in a fixed
order - first the unit index via ``integers``, then one uniform draw for the
type choice (new type is M when the uniform falls below the M probability) -
so traces are reproducible across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .network import (
    Configuration,
    UnitType,
    config_to_bits,
    config_to_string,
)
from .game import GameContext, enumerate_game
from .steady_state import solve


@dataclass(frozen=True)
class TemperatureSchedule:
    """Inverse-temperature schedule eta(t).

    ``linear``     eta(t) = t / c    (c > 0)
    ``const_eta``  eta(t) = value    (value >= 0)
    ``const_tau``  eta(t) = 1/value  (value > 0)
    """

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("linear", "const_eta", "const_tau"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "linear" and not self.value > 0:
            raise ValueError("linear schedule needs c > 0")
        if self.kind == "const_eta" and not self.value >= 0:
            raise ValueError("constant eta must be >= 0")
        if self.kind == "const_tau" and not self.value > 0:
            raise ValueError("constant temperature must be > 0")

    @classmethod
    def linear_eta(cls, c: float) -> "TemperatureSchedule":
        return cls("linear", float(c))

    @classmethod
    def constant_eta(cls, eta: float) -> "TemperatureSchedule":
        return cls("const_eta", float(eta))

    @classmethod
    def constant_tau(cls, tau: float) -> "TemperatureSchedule":
        return cls("const_tau", float(tau))

    @classmethod
    def parse(cls, text: str) -> "TemperatureSchedule":
        """Parse CLI syntax: ``linear:<c>``, ``const-eta:<v>``, or ``const-tau:<v>``."""
        kind, sep, raw = text.partition(":")
        names = {"linear": "linear", "const-eta": "const_eta", "const-tau": "const_tau"}
        if not sep or kind not in names:
            raise ValueError(f"bad schedule {text!r}; use linear:<c>, const-eta:<v>, const-tau:<v>")
        try:
            value = float(raw)
        except ValueError:
            raise ValueError(f"bad schedule value in {text!r}") from None
        return cls(names[kind], value)

    def label(self) -> str:
        names = {"linear": "linear", "const_eta": "const-eta", "const_tau": "const-tau"}
        return f"{names[self.kind]}:{self.value:g}"

    def eta_at(self, t: int) -> float:
        if self.kind == "linear":
            return t / self.value
        if self.kind == "const_eta":
            return self.value
        return 1.0 / self.value


class _Evaluator:
    """Per-run memo of weighted edge costs, keyed by configuration bitmask."""

    def __init__(self, ctx: GameContext):
        self.ctx = ctx
        self.incident: list[list[int]] = [[] for _ in range(ctx.net.n)]
        for e, (tail, head) in enumerate(ctx.net.edges):
            self.incident[tail].append(e)
            self.incident[head].append(e)
        self._cache: dict[int, tuple[np.ndarray, float, bool]] = {}

    def _eval(self, cfg: Configuration) -> tuple[np.ndarray, float, bool]:
        bits = config_to_bits(cfg)
        hit = self._cache.get(bits)
        if hit is None:
            ss = solve(self.ctx.net, cfg, self.ctx.dp, self.ctx.delta)
            realized = np.clip(ss.sine_diffs, -1.0, 1.0)
            weighted = self.ctx.bhat * np.abs(realized - self.ctx.target_sines)
            hit = (weighted, -0.5 * float(weighted.sum()), ss.feasible)
            self._cache[bits] = hit
        return hit

    def local_cost(self, cfg: Configuration, i: int) -> float:
        weighted, _, _ = self._eval(cfg)
        return float(sum(weighted[e] for e in self.incident[i]))

    def potential(self, cfg: Configuration) -> float:
        return self._eval(cfg)[1]

    def feasible(self, cfg: Configuration) -> bool:
        return self._eval(cfg)[2]


def _with_type(cfg: Configuration, i: int, unit: UnitType) -> Configuration:
    if cfg[i] is unit:
        return cfg
    return cfg[:i] + (unit,) + cfg[i + 1 :]


def _distribution(ev: _Evaluator, cfg: Configuration, i: int, eta: float) -> tuple[float, float]:
    l_m = ev.local_cost(_with_type(cfg, i, UnitType.M), i)
    l_c = ev.local_cost(_with_type(cfg, i, UnitType.C), i)
    # max-subtraction in log space: eta grows without bound under linear schedules
    low = min(l_m, l_c)
    w_m = np.exp(-eta * (l_m - low))
    w_c = np.exp(-eta * (l_c - low))
    p_m = w_m / (w_m + w_c)
    return float(p_m), float(1.0 - p_m)


def update_distribution(
    ctx: GameContext, cfg: Configuration, i: int, eta: float
) -> tuple[float, float]:
    """Probabilities (p_M, p_C) with which a woken unit i resamples its type."""
    if not (np.isfinite(eta) and eta >= 0):
        raise ValueError(f"eta must be finite and >= 0, got {eta}")
    return _distribution(_Evaluator(ctx), cfg, i, eta)


def step(
    ctx: GameContext,
    cfg: Configuration,
    t: int,
    schedule: TemperatureSchedule,
    rng: np.random.Generator,
) -> tuple[Configuration, int]:
    """One wake-up: returns the updated configuration and the woken dense node index."""
    return _step(_Evaluator(ctx), cfg, t, schedule, rng)


def _step(
    ev: _Evaluator,
    cfg: Configuration,
    t: int,
    schedule: TemperatureSchedule,
    rng: np.random.Generator,
) -> tuple[Configuration, int]:
    i = int(rng.integers(ev.ctx.net.n))
    p_m, _ = _distribution(ev, cfg, i, schedule.eta_at(t))
    unit = UnitType.M if rng.random() < p_m else UnitType.C
    return _with_type(cfg, i, unit), i


@dataclass(frozen=True)
class TraceStep:
    t: int
    eta: float
    chosen_unit: int  # external node id
    cfg: Configuration
    potential: float
    feasible: bool


@dataclass(frozen=True, eq=False)
class LearningTrace:
    """One seeded learning run; ``steps[t].cfg`` is the configuration after step t."""

    steps: tuple[TraceStep, ...]
    seed: int

    @property
    def final_cfg(self) -> Configuration:
        return self.steps[-1].cfg

    @property
    def final_potential(self) -> float:
        return self.steps[-1].potential

    def first_hit(self, threshold: float = -1e-3) -> int | None:
        """First step index whose potential reaches the threshold, or None."""
        for rec in self.steps:
            if rec.potential >= threshold:
                return rec.t
        return None

    def write_csv(self, fh: IO[str]) -> None:
        fh.write("t,eta,chosen_unit,cfg,potential,feasible\n")
        for rec in self.steps:
            fh.write(
                f"{rec.t},{rec.eta:.9g},{rec.chosen_unit},{config_to_string(rec.cfg)},"
                f"{rec.potential:.9g},{str(rec.feasible).lower()}\n"
            )


def run(
    ctx: GameContext,
    initial: Configuration,
    schedule: TemperatureSchedule,
    steps: int,
    seed: int,
) -> LearningTrace:
    """Run the learning chain for a fixed number of steps from a given configuration."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if len(initial) != ctx.net.n:
        raise ValueError(f"initial configuration length {len(initial)} != n={ctx.net.n}")
    ev = _Evaluator(ctx)
    rng = np.random.default_rng(seed)
    cfg = tuple(initial)
    trace = []
    for t in range(steps):
        cfg, i = _step(ev, cfg, t, schedule, rng)
        trace.append(
            TraceStep(
                t=t,
                eta=schedule.eta_at(t),
                chosen_unit=ctx.net.node_ids[i],
                cfg=cfg,
                potential=ev.potential(cfg),
                feasible=ev.feasible(cfg),
            )
        )
    return LearningTrace(steps=tuple(trace), seed=seed)


@dataclass(frozen=True, eq=False)
class BatchSummary:
    """Independent seeded runs; success means finishing on a potential maximizer."""

    success_rate: float
    mean_final_potential: float
    traces: tuple[LearningTrace, ...]


def batch_run(
    ctx: GameContext,
    initial: Configuration,
    schedule: TemperatureSchedule,
    steps: int,
    seeds: Sequence[int],
) -> BatchSummary:
    if not seeds:
        raise ValueError("need at least one seed")
    report = enumerate_game(ctx)
    maximizers = {config_to_bits(cfg) for cfg in report.maximizers()}
    traces = tuple(run(ctx, initial, schedule, steps, seed) for seed in seeds)
    hits = sum(config_to_bits(tr.final_cfg) in maximizers for tr in traces)
    finals = [tr.final_potential for tr in traces]
    return BatchSummary(
        success_rate=hits / len(traces),
        mean_final_potential=float(np.mean(finals)),
        traces=traces,
    )
