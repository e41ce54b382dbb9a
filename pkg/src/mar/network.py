"""Road networks, travel demands, and the path-based routing space.

A network is a directed multigraph of roads plus OD pairs carrying separate
human-driven and autonomous flow demands. Routings are represented two ways:

* link flows: one (human, autonomous) pair per road, interleaved in a single
  vector ``[x_1, y_1, x_2, y_2, ...]`` of length ``2N``;
* path flows: per OD pair and vehicle class, flow on each enumerated simple
  path.

All types are immutable after construction and validate their invariants on
construction. Feasibility of a raw link-flow vector is decided by decomposing
it into per-OD path flows.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from . import errors

#: A directed path, written as the sequence of road ids it traverses.
Path = tuple[int, ...]


class CapacityModel(enum.Enum):
    """How autonomous vehicles are allowed to platoon on a road.

    MODEL1: an autonomous vehicle platoons behind any vehicle, so it always
    occupies ``platoon_headway``. MODEL2: it platoons only behind another
    autonomous vehicle and otherwise occupies the full ``headway``.
    """

    MODEL1 = "model1"
    MODEL2 = "model2"


@dataclass(frozen=True)
class AffineMixed:
    """Affine road latency ``coef_human*x + coef_auto*y + constant``.

    Exists for solver stress tests and the two-road non-monotonicity demo;
    the asymmetry/degree bound machinery rejects networks containing it.
    """

    coef_human: float
    coef_auto: float
    constant: float

    def __post_init__(self) -> None:
        if min(self.coef_human, self.coef_auto, self.constant) < 0:
            raise errors.InvalidParameterError(
                "affine cost coefficients must be nonnegative, got "
                f"({self.coef_human}, {self.coef_auto}, {self.constant})"
            )


@dataclass(frozen=True)
class Road:
    """One directed road.

    ``headway`` is the road length occupied by a non-platooned vehicle at
    nominal speed, ``platoon_headway`` by a platooned one. Neither is assumed
    larger than the other. When ``affine`` is set it replaces the BPR-form
    delay and the physical parameters only have to satisfy positivity.
    """

    rid: int
    tail: str
    head: str
    length: float = 1.0
    headway: float = 1.0
    platoon_headway: float = 1.0
    freeflow: float = 1.0
    rho: float = 0.15
    sigma: float = 4.0
    capacity_model: CapacityModel = CapacityModel.MODEL1
    affine: AffineMixed | None = None

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise errors.InvalidParameterError(f"road {self.rid}: length must be > 0")
        if self.headway <= 0 or self.platoon_headway <= 0:
            raise errors.InvalidParameterError(f"road {self.rid}: headways must be > 0")
        if self.freeflow < 0:
            raise errors.InvalidParameterError(f"road {self.rid}: freeflow must be >= 0")
        if self.rho < 0:
            raise errors.InvalidParameterError(f"road {self.rid}: rho must be >= 0")
        if self.sigma < 1:
            raise errors.InvalidParameterError(
                f"road {self.rid}: sigma must be >= 1, got {self.sigma}"
            )
        if not isinstance(self.capacity_model, CapacityModel):
            raise errors.InvalidParameterError(
                f"road {self.rid}: capacity_model must be a CapacityModel"
            )

    @property
    def is_bpr(self) -> bool:
        return self.affine is None

    @property
    def headway_ratio(self) -> float:
        """Per-road asymmetry: max of the headway ratio in either direction."""
        return max(self.headway / self.platoon_headway,
                   self.platoon_headway / self.headway)


@dataclass(frozen=True)
class ODPair:
    """Origin-destination pair with per-class flow demands."""

    origin: str
    destination: str
    demand_human: float
    demand_auto: float

    def __post_init__(self) -> None:
        if self.demand_human < 0 or self.demand_auto < 0:
            raise errors.InvalidParameterError(
                f"OD ({self.origin}->{self.destination}): demands must be >= 0"
            )

    @property
    def total_demand(self) -> float:
        return self.demand_human + self.demand_auto


@dataclass(frozen=True)
class Network:
    """Immutable road network with demands. Validates all invariants on build."""

    nodes: tuple[str, ...]
    roads: tuple[Road, ...]
    od_pairs: tuple[ODPair, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "roads", tuple(self.roads))
        object.__setattr__(self, "od_pairs", tuple(self.od_pairs))
        if len(set(self.nodes)) != len(self.nodes):
            raise errors.DuplicateIdError("duplicate node id")
        rids = [r.rid for r in self.roads]
        if len(set(rids)) != len(rids):
            raise errors.DuplicateIdError("duplicate road id")
        if not self.roads:
            raise errors.InvalidParameterError("network has no roads")
        node_set = set(self.nodes)
        for road in self.roads:
            if road.tail not in node_set or road.head not in node_set:
                raise errors.DanglingEndpointError(
                    f"road {road.rid} endpoint not declared: {road.tail}->{road.head}"
                )
        if not self.od_pairs:
            raise errors.InvalidParameterError("network has no OD pairs")
        for od in self.od_pairs:
            if od.origin not in node_set or od.destination not in node_set:
                raise errors.DanglingEndpointError(
                    f"OD endpoint not declared: {od.origin}->{od.destination}"
                )
        if all(od.total_demand == 0 for od in self.od_pairs):
            raise errors.InvalidParameterError(
                "at least one OD pair must carry positive demand"
            )
        for od in self.od_pairs:
            if not _reachable(self, od.origin, od.destination):
                raise errors.UnreachableODError(
                    f"no directed path {od.origin}->{od.destination}"
                )

    @cached_property
    def _adjacency(self) -> dict[str, tuple[Road, ...]]:
        adj: dict[str, list[Road]] = {}
        for road in self.roads:
            adj.setdefault(road.tail, []).append(road)
        return {n: tuple(sorted(rs, key=lambda r: r.rid)) for n, rs in adj.items()}

    @cached_property
    def _road_index(self) -> dict[int, int]:
        return {road.rid: i for i, road in enumerate(self.roads)}

    @property
    def n_roads(self) -> int:
        return len(self.roads)

    def road(self, rid: int) -> Road:
        return self.roads[self._road_index[rid]]

    def road_position(self, rid: int) -> int:
        """Index of a road in the link-flow ordering."""
        return self._road_index[rid]


def _reachable(net: Network, origin: str, destination: str) -> bool:
    if origin == destination:
        return False
    seen = {origin}
    stack = [origin]
    while stack:
        node = stack.pop()
        for road in net._adjacency.get(node, ()):
            if road.head == destination:
                return True
            if road.head not in seen:
                seen.add(road.head)
                stack.append(road.head)
    return False


class FlowVector:
    """Per-road (human, autonomous) flow pairs, interleaved as ``[x1, y1, ...]``.

    Entries are nonnegative; tiny negative values (>= -1e-9) from floating
    arithmetic are clipped to zero.
    """

    __slots__ = ("_z",)

    def __init__(self, entries: Iterable[float]):
        arr = np.array(list(entries) if not isinstance(entries, np.ndarray) else entries,
                       dtype=float)
        if arr.ndim != 1 or arr.size % 2 != 0 or arr.size == 0:
            raise errors.DimensionMismatchError(
                f"flow vector must have even positive length, got shape {arr.shape}"
            )
        if arr.min(initial=0.0) < -1e-9:
            raise errors.NegativeFlowError(f"negative flow entry: {arr.min()}")
        np.clip(arr, 0.0, None, out=arr)
        arr.setflags(write=False)
        self._z = arr

    @classmethod
    def from_xy(cls, x: Sequence[float], y: Sequence[float]) -> "FlowVector":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise errors.DimensionMismatchError("x and y must be 1-d with equal length")
        z = np.empty(2 * x.size)
        z[0::2] = x
        z[1::2] = y
        return cls(z)

    @property
    def interleaved(self) -> np.ndarray:
        return self._z

    @property
    def x(self) -> np.ndarray:
        """Human-driven flow per road."""
        return self._z[0::2]

    @property
    def y(self) -> np.ndarray:
        """Autonomous flow per road."""
        return self._z[1::2]

    @property
    def total(self) -> np.ndarray:
        return self.x + self.y

    @property
    def n_roads(self) -> int:
        return self._z.size // 2

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))

    def __repr__(self) -> str:  # pragma: no cover
        return f"FlowVector({self.pairs()!r})"


@dataclass(frozen=True)
class PathFlowAssignment:
    """Per-OD, per-class flow on enumerated paths.

    ``human[i]`` and ``auto[i]`` map each used path of OD pair ``i`` (a tuple
    of road ids) to its flow. For each OD pair and class the flows sum to
    that class's demand.
    """

    human: tuple[dict[Path, float], ...]
    auto: tuple[dict[Path, float], ...]

    def od_count(self) -> int:
        return len(self.human)


def enumerate_paths(net: Network, od: ODPair, max_hops: int | None = None) -> tuple[Path, ...]:
    """All simple directed origin->destination paths with at most ``max_hops`` roads.

    Paths are ordered lexicographically by their road-id sequence, which makes
    the enumeration deterministic. ``max_hops`` defaults to the node count,
    which covers every simple path.
    """
    if max_hops is None:
        max_hops = len(net.nodes)
    if max_hops < 1:
        raise errors.InvalidParameterError("max_hops must be >= 1")
    out: list[Path] = []
    visited = {od.origin}
    acc: list[int] = []

    def walk(node: str) -> None:
        for road in net._adjacency.get(node, ()):
            if road.head == od.destination:
                out.append(tuple(acc) + (road.rid,))
            elif road.head not in visited and len(acc) + 1 < max_hops:
                visited.add(road.head)
                acc.append(road.rid)
                walk(road.head)
                acc.pop()
                visited.remove(road.head)

    walk(od.origin)
    if not out:
        raise errors.NoPathFoundError(
            f"no path {od.origin}->{od.destination} within {max_hops} hops"
        )
    return tuple(out)


def _path_nodes(net: Network, path: Path) -> list[str]:
    return [net.road(path[0]).tail] + [net.road(rid).head for rid in path]


def _validate_path(net: Network, od: ODPair, path: Path) -> None:
    if not path:
        raise errors.InvalidParameterError("empty path")
    for rid in path:
        if rid not in net._road_index:
            raise errors.InvalidParameterError(f"unknown road id {rid} in path")
    nodes = _path_nodes(net, path)
    for (rid_a, rid_b) in zip(path, path[1:]):
        if net.road(rid_a).head != net.road(rid_b).tail:
            raise errors.InvalidParameterError(f"disconnected path {path}")
    if nodes[0] != od.origin or nodes[-1] != od.destination:
        raise errors.InvalidParameterError(
            f"path {path} does not join {od.origin}->{od.destination}"
        )
    if len(set(nodes)) != len(nodes):
        raise errors.InvalidParameterError(f"path {path} revisits a node")


def validate_assignment(net: Network, pf: PathFlowAssignment, tol: float = 1e-9) -> None:
    """Raise unless ``pf`` is a valid assignment for ``net``.

    Checks path validity, nonnegativity, and per-class demand totals within
    relative tolerance ``tol``.
    """
    if len(pf.human) != len(net.od_pairs) or len(pf.auto) != len(net.od_pairs):
        raise errors.DimensionMismatchError(
            f"assignment covers {len(pf.human)} OD pairs, network has {len(net.od_pairs)}"
        )
    for i, od in enumerate(net.od_pairs):
        for cls_name, flows, demand in (
            ("human", pf.human[i], od.demand_human),
            ("auto", pf.auto[i], od.demand_auto),
        ):
            total = 0.0
            for path, flow in flows.items():
                _validate_path(net, od, path)
                if flow < -1e-12:
                    raise errors.NegativeFlowError(
                        f"negative {cls_name} flow {flow} on path {path}"
                    )
                total += flow
            if abs(total - demand) > tol * (1.0 + abs(demand)):
                raise errors.InvalidParameterError(
                    f"OD {i} {cls_name} flows sum to {total}, demand is {demand}"
                )


def to_link_flows(net: Network, pf: PathFlowAssignment) -> FlowVector:
    """Aggregate path flows into per-road (human, autonomous) link flows."""
    x = np.zeros(net.n_roads)
    y = np.zeros(net.n_roads)
    for flows, acc in ((pf.human, x), (pf.auto, y)):
        for od_flows in flows:
            for path, flow in od_flows.items():
                for rid in path:
                    acc[net.road_position(rid)] += flow
    return FlowVector.from_xy(x, y)


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of a link-flow feasibility check."""

    feasible: bool
    max_conservation_residual: float
    detail: str = ""

    def __bool__(self) -> bool:
        return self.feasible


def check_feasible(net: Network, z, tol: float = 1e-9) -> FeasibilityReport:
    """Decide whether link flows ``z`` are realizable by some valid assignment.

    Runs a per-node, per-class flow-conservation check against the OD demands
    and then a per-OD path-flow decomposition (a small feasibility LP over the
    enumerated paths). ``z`` may be a FlowVector or any interleaved sequence.
    """
    if isinstance(z, FlowVector):
        arr = np.array(z.interleaved)
    else:
        arr = np.asarray(z, dtype=float)
    if arr.ndim != 1 or arr.size != 2 * net.n_roads:
        raise errors.DimensionMismatchError(
            f"expected {2 * net.n_roads} entries, got {arr.size}"
        )
    if arr.min() < -1e-9:
        return FeasibilityReport(False, float("inf"), "negative flow entry")
    arr = np.clip(arr, 0.0, None)
    scale = 1.0 + max(od.total_demand for od in net.od_pairs)

    table = path_table(net)
    worst = 0.0
    for cls, flows in (("human", arr[0::2]), ("auto", arr[1::2])):
        expected = {n: 0.0 for n in net.nodes}
        for od in net.od_pairs:
            d = od.demand_human if cls == "human" else od.demand_auto
            expected[od.origin] += d
            expected[od.destination] -= d
        balance = {n: 0.0 for n in net.nodes}
        for i, road in enumerate(net.roads):
            balance[road.tail] += flows[i]
            balance[road.head] -= flows[i]
        residual = max(abs(balance[n] - expected[n]) for n in net.nodes)
        worst = max(worst, residual)
        if residual > tol * scale:
            return FeasibilityReport(False, worst,
                                     f"{cls} conservation residual {residual:.3g}")
        demands = np.array([
            od.demand_human if cls == "human" else od.demand_auto
            for od in net.od_pairs
        ])
        if not _decomposes(table, flows, demands):
            return FeasibilityReport(False, worst,
                                     f"no per-OD path decomposition for {cls} flows")
    return FeasibilityReport(True, worst)


def _decomposes(table: "PathTable", link_flows: np.ndarray, demands: np.ndarray) -> bool:
    # Feasibility LP: find path flows p >= 0 with incidence @ p = link_flows
    # and per-OD totals equal to the demands.
    n_paths = table.total_paths
    block_rows = np.zeros((len(table.blocks), n_paths))
    for i, blk in enumerate(table.blocks):
        block_rows[i, blk] = 1.0
    a_eq = np.vstack([table.incidence, block_rows])
    b_eq = np.concatenate([link_flows, demands])
    res = linprog(
        np.zeros(n_paths), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs",
        options={"primal_feasibility_tolerance": 1e-9},
    )
    return res.status == 0


@dataclass(frozen=True)
class PathTable:
    """Enumerated paths per OD pair plus the road/path incidence matrix.

    The incidence matrix has one row per road and one column per path;
    ``blocks[i]`` is the column range of OD pair ``i``. Both vehicle classes
    share the same path set.
    """

    net: Network
    paths: tuple[tuple[Path, ...], ...]
    incidence: np.ndarray
    blocks: tuple[slice, ...]
    demand_human: np.ndarray
    demand_auto: np.ndarray

    @property
    def total_paths(self) -> int:
        return self.incidence.shape[1]

    def link_flows(self, ph: np.ndarray, pa: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.incidence @ ph, self.incidence @ pa

    def uniform_start(self) -> tuple[np.ndarray, np.ndarray]:
        """Each class's demand split evenly over its OD's paths."""
        ph = np.zeros(self.total_paths)
        pa = np.zeros(self.total_paths)
        for i, blk in enumerate(self.blocks):
            m = blk.stop - blk.start
            ph[blk] = self.demand_human[i] / m
            pa[blk] = self.demand_auto[i] / m
        return ph, pa

    def random_start(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        ph = np.zeros(self.total_paths)
        pa = np.zeros(self.total_paths)
        for i, blk in enumerate(self.blocks):
            m = blk.stop - blk.start
            ph[blk] = self.demand_human[i] * rng.dirichlet(np.ones(m))
            pa[blk] = self.demand_auto[i] * rng.dirichlet(np.ones(m))
        return ph, pa

    def assignment(self, ph: np.ndarray, pa: np.ndarray) -> PathFlowAssignment:
        human = []
        auto = []
        for i, blk in enumerate(self.blocks):
            od_paths = self.paths[i]
            human.append({p: float(ph[blk.start + j]) for j, p in enumerate(od_paths)})
            auto.append({p: float(pa[blk.start + j]) for j, p in enumerate(od_paths)})
        return PathFlowAssignment(human=tuple(human), auto=tuple(auto))

    def arrays(self, pf: PathFlowAssignment) -> tuple[np.ndarray, np.ndarray]:
        ph = np.zeros(self.total_paths)
        pa = np.zeros(self.total_paths)
        for i, blk in enumerate(self.blocks):
            index = {p: j for j, p in enumerate(self.paths[i])}
            for source, dest in ((pf.human[i], ph), (pf.auto[i], pa)):
                for path, flow in source.items():
                    if path not in index:
                        raise errors.InvalidParameterError(
                            f"path {path} is not in the enumeration for OD {i}"
                        )
                    dest[blk.start + index[path]] = max(flow, 0.0)
        return ph, pa


@functools.lru_cache(maxsize=128)
def path_table(net: Network, max_hops: int | None = None) -> PathTable:
    """Build (and memoize) the path enumeration for a network."""
    all_paths = tuple(enumerate_paths(net, od, max_hops) for od in net.od_pairs)
    total = sum(len(p) for p in all_paths)
    incidence = np.zeros((net.n_roads, total))
    blocks = []
    col = 0
    for od_paths in all_paths:
        start = col
        for path in od_paths:
            for rid in path:
                incidence[net.road_position(rid), col] = 1.0
            col += 1
        blocks.append(slice(start, col))
    incidence.setflags(write=False)
    dh = np.array([od.demand_human for od in net.od_pairs])
    da = np.array([od.demand_auto for od in net.od_pairs])
    dh.setflags(write=False)
    da.setflags(write=False)
    return PathTable(net=net, paths=all_paths, incidence=incidence,
                     blocks=tuple(blocks), demand_human=dh, demand_auto=da)


def build_network(data: Mapping) -> Network:
    """Build a validated Network from a plain mapping (the scenario schema).

    Expected shape::

        {"nodes": ["s", "t"],
         "roads": [{"id": 1, "tail": "s", "head": "t", "length": 1.0,
                    "headway": 2.0, "platoon_headway": 1.0, "freeflow": 1.0,
                    "rho": 1.0, "sigma": 1.0, "capacity_model": "model1",
                    "affine": {"coef_human": 3, "coef_auto": 1, "constant": 1}}],
         "od_pairs": [{"origin": "s", "destination": "t",
                       "demand_human": 1.0, "demand_auto": 1.0}]}

    ``length``, ``headway``, ``platoon_headway``, ``freeflow``, ``rho``,
    ``sigma``, ``capacity_model`` and ``affine`` are optional with the Road
    defaults. Units are unchecked scalars; keeping them consistent is the
    scenario author's responsibility.
    """
    from . import scenario as _scenario  # deferred: scenario imports this module

    return _scenario.network_from_mapping(data)
