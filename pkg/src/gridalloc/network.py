"""Radial power-network model, JSON document I/O, and the bundled 6-unit fixture.

Conventions used throughout the package:

* node ids are arbitrary integers; dense indices 0..n-1 follow document order;
* an edge (tail, head) is oriented tail -> head, so the angle difference on
  edge e means theta_tail - theta_head and a positive flow runs tail -> head;
* voltage magnitudes are fixed at 1 p.u. and never represented.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np


class ParseError(ValueError):
    """A network document is not syntactically well formed."""


class ValidationError(ValueError):
    """An object or document violates a structural invariant."""


class UnitType(str, Enum):
    """Generation unit type: synchronous machine or droop-controlled converter."""

    M = "M"
    C = "C"


# A configuration assigns a UnitType to every node, in dense node order.
Configuration = tuple[UnitType, ...]


@dataclass(frozen=True, eq=False)
class PowerNetwork:
    """Connected acyclic network of generation units joined by inductive lines.

    ``p0`` holds per-unit power inputs in dense node order, ``b`` per-unit
    susceptances in edge order, and ``edges`` dense (tail, head) index pairs.
    Instances are immutable after construction and safe to share.
    """

    node_ids: tuple[int, ...]
    p0: np.ndarray
    edges: tuple[tuple[int, int], ...]
    b: np.ndarray

    def __post_init__(self):
        n, m = len(self.node_ids), len(self.edges)
        if n < 2:
            raise ValidationError("network needs at least two nodes")
        if len(set(self.node_ids)) != n:
            raise ValidationError("duplicate node id")
        p0 = np.asarray(self.p0, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if p0.shape != (n,):
            raise ValidationError(f"p0 must have one entry per node, got shape {p0.shape}")
        if b.shape != (m,):
            raise ValidationError(f"b must have one entry per edge, got shape {b.shape}")
        if not np.all(np.isfinite(p0)):
            raise ValidationError("non-finite power input p0")
        if not np.all(b > 0.0):
            raise ValidationError("non-positive susceptance")
        p0.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "edges", tuple((int(t), int(h)) for t, h in self.edges))

        # union-find tree check: any extra edge closes a cycle, any missing
        # edge leaves the graph disconnected
        parent = list(range(n))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        seen = set()
        for tail, head in self.edges:
            if not (0 <= tail < n and 0 <= head < n):
                raise ValidationError("edge endpoint out of range")
            if tail == head:
                raise ValidationError(f"self-loop at node {self.node_ids[tail]}")
            key = (min(tail, head), max(tail, head))
            if key in seen:
                raise ValidationError("duplicate edge")
            seen.add(key)
            rt, rh = find(tail), find(head)
            if rt == rh:
                raise ValidationError("cycle detected")
            parent[rt] = rh
        if m != n - 1:
            raise ValidationError("disconnected network")

    @property
    def n(self) -> int:
        return len(self.node_ids)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def min_b(self) -> float:
        return float(self.b.min())

    def index_of(self, node_id: int) -> int:
        return self.node_ids.index(node_id)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PowerNetwork):
            return NotImplemented
        return (
            self.node_ids == other.node_ids
            and self.edges == other.edges
            and np.array_equal(self.p0, other.p0)
            and np.array_equal(self.b, other.b)
        )

    def __hash__(self):
        return hash((self.node_ids, self.edges, self.p0.tobytes(), self.b.tobytes()))


@dataclass(frozen=True)
class DampingParams:
    """Per-unit damping for the two unit types; machines conventionally damp harder."""

    d_m: float
    d_c: float

    def __post_init__(self):
        if not (self.d_m > 0.0 and self.d_c > 0.0):
            raise ValidationError("damping parameters must be strictly positive")
        if self.d_m <= self.d_c:
            warnings.warn(
                f"machine damping d_m={self.d_m} does not exceed converter damping d_c={self.d_c}",
                stacklevel=2,
            )

    def of(self, unit: UnitType) -> float:
        return self.d_m if unit is UnitType.M else self.d_c


@dataclass(frozen=True, eq=False)
class TargetAngles:
    """Per-edge optimal angle differences (radians), same orientation as the edges."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1:
            raise ValidationError("target angles must be a flat vector")
        if not np.all(np.isfinite(theta)):
            raise ValidationError("non-finite target angle")
        if not np.all(np.abs(theta) < np.pi / 2):
            raise ValidationError("target angles must satisfy |theta| < pi/2")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def __len__(self) -> int:
        return len(self.theta)


def incidence(net: PowerNetwork) -> np.ndarray:
    """n x m incidence matrix: +1 at the tail of each edge, -1 at the head."""
    mat = np.zeros((net.n, net.m))
    for e, (tail, head) in enumerate(net.edges):
        mat[tail, e] = 1.0
        mat[head, e] = -1.0
    return mat


# -- configuration helpers ---------------------------------------------------

def config_from_string(text: str, n: int) -> Configuration:
    """Parse an M/C string like ``"MCCCCM"`` into a configuration of length n."""
    if len(text) != n:
        raise ValidationError(f"configuration string must have length {n}, got {len(text)}")
    try:
        return tuple(UnitType(ch) for ch in text)
    except ValueError:
        raise ValidationError(f"configuration may only contain M or C: {text!r}") from None


def config_to_string(cfg: Configuration) -> str:
    return "".join(unit.value for unit in cfg)


def config_to_bits(cfg: Configuration) -> int:
    """Encode a configuration as an integer: bit i set when node i is a converter."""
    bits = 0
    for i, unit in enumerate(cfg):
        if unit is UnitType.C:
            bits |= 1 << i
    return bits


def bits_to_config(bits: int, n: int) -> Configuration:
    return tuple(UnitType.C if (bits >> i) & 1 else UnitType.M for i in range(n))


# -- document I/O ------------------------------------------------------------

def _parse_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON network document: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("network document must be a JSON object")
    return doc


def _network_from_doc(doc: dict) -> PowerNetwork:
    for key in ("nodes", "edges"):
        if key not in doc:
            raise ParseError(f"network document lacks required field {key!r}")
    try:
        ids = tuple(int(nd["id"]) for nd in doc["nodes"])
        p0 = [float(nd["p0"]) for nd in doc["nodes"]]
    except (TypeError, KeyError) as exc:
        raise ParseError(f"malformed node entry: {exc}") from exc
    index = {nid: i for i, nid in enumerate(ids)}
    if len(index) != len(ids):
        raise ValidationError("duplicate node id")
    edges = []
    b = []
    try:
        for ed in doc["edges"]:
            tail, head = int(ed["tail"]), int(ed["head"])
            if tail not in index or head not in index:
                raise ValidationError(f"edge references unknown node id ({tail}, {head})")
            edges.append((index[tail], index[head]))
            b.append(float(ed["b"]))
    except (TypeError, KeyError) as exc:
        raise ParseError(f"malformed edge entry: {exc}") from exc
    return PowerNetwork(node_ids=ids, p0=np.array(p0), edges=tuple(edges), b=np.array(b))


def load_network(text: str) -> PowerNetwork:
    """Load and validate a network from a JSON document (see ``to_document``)."""
    return _network_from_doc(_parse_document(text))


def load_document(text: str) -> tuple[PowerNetwork, DampingParams | None, TargetAngles | None]:
    """Load a full document: network plus optional damping and target angles."""
    doc = _parse_document(text)
    net = _network_from_doc(doc)
    dp = None
    if "damping" in doc:
        try:
            dp = DampingParams(d_m=float(doc["damping"]["M"]), d_c=float(doc["damping"]["C"]))
        except (TypeError, KeyError) as exc:
            raise ParseError(f"malformed damping entry: {exc}") from exc
    targets = None
    if "targets" in doc:
        theta = np.asarray(doc["targets"], dtype=float)
        if theta.shape != (net.m,):
            raise ValidationError(
                f"targets must list one angle per edge ({net.m}), got {theta.shape}"
            )
        targets = TargetAngles(theta)
    return net, dp, targets


def to_document(
    net: PowerNetwork,
    dp: DampingParams | None = None,
    targets: TargetAngles | None = None,
) -> str:
    """Serialize a network (and optional damping/targets) to the JSON document format."""
    doc: dict = {
        "nodes": [{"id": nid, "p0": float(net.p0[i])} for i, nid in enumerate(net.node_ids)],
        "edges": [
            {"tail": net.node_ids[t], "head": net.node_ids[h], "b": float(net.b[e])}
            for e, (t, h) in enumerate(net.edges)
        ],
    }
    if dp is not None:
        doc["damping"] = {"M": dp.d_m, "C": dp.d_c}
    if targets is not None:
        doc["targets"] = [float(x) for x in targets.theta]
    return json.dumps(doc, indent=2)


# -- bundled fixture ---------------------------------------------------------

PAPER6_P0 = (0.77778, 0.7, 0.798889, 0.7, 0.798889, 0.7)
PAPER6_B = (15.2631, 4.2350, 4.8156, 15.2631, 4.2350)
PAPER6_TARGETS = (-0.0157, -0.0354, 0.0081, 0.0084, 0.0750)
PAPER6_D_M = 25.0
PAPER6_D_C = 15.0


def paper6_fixture() -> tuple[PowerNetwork, DampingParams, TargetAngles]:
    """The bundled six-unit line-graph case study 1-2-3-4-5-6."""
    net = PowerNetwork(
        node_ids=(1, 2, 3, 4, 5, 6),
        p0=np.array(PAPER6_P0),
        edges=((0, 1), (1, 2), (2, 3), (3, 4), (4, 5)),
        b=np.array(PAPER6_B),
    )
    return net, DampingParams(PAPER6_D_M, PAPER6_D_C), TargetAngles(np.array(PAPER6_TARGETS))
