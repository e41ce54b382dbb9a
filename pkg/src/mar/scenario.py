"""Scenario files: a JSON-shaped description of a network plus an experiment.

The schema is deliberately small and strict: unknown fields and wrong types
are rejected with the offending field named, while violations of network
invariants (duplicate ids, unreachable OD pairs, bad parameter ranges)
propagate as their own error types. All quantities are unchecked scalars;
consistent units are the scenario author's responsibility.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from . import errors
from .equilibrium import EquilibriumConfig, StepRule
from .network import AffineMixed, CapacityModel, Network, ODPair, Road
from .optimum import OptimumConfig


class Experiment(enum.Enum):
    EQUILIBRIUM = "equilibrium"
    OPTIMUM = "optimum"
    BOUNDS = "bounds"
    POA = "poa"
    BICRITERIA = "bicriteria"
    SWEEP = "sweep"
    MONOTONICITY_DEMO = "monotonicity_demo"
    TIGHTNESS_PROBE = "tightness_probe"


_EXPERIMENT_ALIASES = {
    "eq": Experiment.EQUILIBRIUM,
    "opt": Experiment.OPTIMUM,
}

SWEEP_PARAMETERS = ("autonomy_share", "k_scale", "sigma", "demand_scale")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    steps: int


@dataclass(frozen=True)
class TightnessSpec:
    ks: tuple[float, ...] = (1.0, 1.5, 2.0, 3.0)
    sigma: float = 1.0
    rhos: tuple[float, ...] = (10.0, 100.0)
    demand: float = 1.0


@dataclass(frozen=True)
class Scenario:
    schema_version: str
    experiment: Experiment
    network: Network | None
    eq_config: EquilibriumConfig
    opt_config: OptimumConfig
    sweep: SweepSpec | None = None
    tightness: TightnessSpec = field(default_factory=TightnessSpec)
    seed: int = 0


def _require_mapping(value, where: str) -> Mapping:
    if not isinstance(value, Mapping):
        raise errors.SchemaError(f"{where}: expected an object, got {type(value).__name__}")
    return value


def _check_keys(data: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise errors.SchemaError(f"{where}: unknown field {sorted(unknown)[0]!r}")


def _get(data: Mapping, key: str, where: str, kind, required: bool = True, default=None):
    if key not in data:
        if required:
            raise errors.SchemaError(f"{where}: missing required field {key!r}")
        return default
    value = data[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise errors.SchemaError(f"{where}.{key}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise errors.SchemaError(f"{where}.{key}: expected an integer, got {value!r}")
        return value
    if kind is str:
        if not isinstance(value, str):
            raise errors.SchemaError(f"{where}.{key}: expected a string, got {value!r}")
        return value
    if kind is list:
        if not isinstance(value, (list, tuple)):
            raise errors.SchemaError(f"{where}.{key}: expected a list, got {value!r}")
        return value
    raise AssertionError(kind)


def _road_from_mapping(data: Mapping, where: str) -> Road:
    data = _require_mapping(data, where)
    _check_keys(data, {"id", "tail", "head", "length", "headway", "platoon_headway",
                       "freeflow", "rho", "sigma", "capacity_model", "affine"}, where)
    affine = None
    if data.get("affine") is not None:
        aff = _require_mapping(data["affine"], f"{where}.affine")
        _check_keys(aff, {"coef_human", "coef_auto", "constant"}, f"{where}.affine")
        affine = AffineMixed(
            coef_human=_get(aff, "coef_human", f"{where}.affine", float),
            coef_auto=_get(aff, "coef_auto", f"{where}.affine", float),
            constant=_get(aff, "constant", f"{where}.affine", float),
        )
    model_name = _get(data, "capacity_model", where, str, required=False, default="model1")
    try:
        model = CapacityModel(model_name)
    except ValueError:
        raise errors.SchemaError(
            f"{where}.capacity_model: expected 'model1' or 'model2', got {model_name!r}"
        ) from None
    return Road(
        rid=_get(data, "id", where, int),
        tail=_get(data, "tail", where, str),
        head=_get(data, "head", where, str),
        length=_get(data, "length", where, float, required=False, default=1.0),
        headway=_get(data, "headway", where, float, required=False, default=1.0),
        platoon_headway=_get(data, "platoon_headway", where, float, required=False, default=1.0),
        freeflow=_get(data, "freeflow", where, float, required=False, default=1.0),
        rho=_get(data, "rho", where, float, required=False, default=0.15),
        sigma=_get(data, "sigma", where, float, required=False, default=4.0),
        capacity_model=model,
        affine=affine,
    )


def network_from_mapping(data: Mapping) -> Network:
    data = _require_mapping(data, "network")
    _check_keys(data, {"nodes", "roads", "od_pairs"}, "network")
    nodes = _get(data, "nodes", "network", list)
    for n in nodes:
        if not isinstance(n, str):
            raise errors.SchemaError(f"network.nodes: expected strings, got {n!r}")
    roads = tuple(
        _road_from_mapping(r, f"network.roads[{i}]")
        for i, r in enumerate(_get(data, "roads", "network", list))
    )
    od_pairs = []
    for i, od in enumerate(_get(data, "od_pairs", "network", list)):
        where = f"network.od_pairs[{i}]"
        od = _require_mapping(od, where)
        _check_keys(od, {"origin", "destination", "demand_human", "demand_auto"}, where)
        od_pairs.append(ODPair(
            origin=_get(od, "origin", where, str),
            destination=_get(od, "destination", where, str),
            demand_human=_get(od, "demand_human", where, float),
            demand_auto=_get(od, "demand_auto", where, float),
        ))
    return Network(nodes=tuple(nodes), roads=roads, od_pairs=tuple(od_pairs))


def _eq_config_from(data: Mapping | None, seed: int) -> EquilibriumConfig:
    if data is None:
        return EquilibriumConfig(seed=seed)
    data = _require_mapping(data, "equilibrium")
    _check_keys(data, {"max_iterations", "gap_tolerance", "step_rule", "seed"}, "equilibrium")
    rule_name = _get(data, "step_rule", "equilibrium", str, required=False,
                     default=StepRule.SELF_REGULATED.value)
    try:
        rule = StepRule(rule_name)
    except ValueError:
        raise errors.SchemaError(
            f"equilibrium.step_rule: expected 'msa' or 'self-regulated', got {rule_name!r}"
        ) from None
    return EquilibriumConfig(
        max_iterations=_get(data, "max_iterations", "equilibrium", int,
                            required=False, default=100_000),
        gap_tolerance=_get(data, "gap_tolerance", "equilibrium", float,
                           required=False, default=1e-6),
        step_rule=rule,
        seed=_get(data, "seed", "equilibrium", int, required=False, default=seed),
    )


def _opt_config_from(data: Mapping | None, seed: int) -> OptimumConfig:
    if data is None:
        return OptimumConfig(seed=seed)
    data = _require_mapping(data, "optimum")
    _check_keys(data, {"restarts", "max_iterations", "step_tolerance",
                       "grid_resolution", "seed"}, "optimum")
    return OptimumConfig(
        restarts=_get(data, "restarts", "optimum", int, required=False, default=32),
        max_iterations=_get(data, "max_iterations", "optimum", int,
                            required=False, default=10_000),
        step_tolerance=_get(data, "step_tolerance", "optimum", float,
                            required=False, default=1e-9),
        grid_resolution=_get(data, "grid_resolution", "optimum", float,
                             required=False, default=1e-2),
        seed=_get(data, "seed", "optimum", int, required=False, default=seed),
    )


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario text into a Scenario."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise errors.SchemaError(f"invalid JSON: {exc}") from None
    data = _require_mapping(data, "scenario")
    _check_keys(data, {"schema_version", "experiment", "seed", "network",
                       "equilibrium", "optimum", "sweep", "tightness"}, "scenario")
    version = _get(data, "schema_version", "scenario", str)
    if version != "1":
        raise errors.SchemaError(f"scenario.schema_version: unrecognized version {version!r}")
    exp_name = _get(data, "experiment", "scenario", str)
    experiment = _EXPERIMENT_ALIASES.get(exp_name)
    if experiment is None:
        try:
            experiment = Experiment(exp_name)
        except ValueError:
            raise errors.SchemaError(
                f"scenario.experiment: unknown experiment {exp_name!r}"
            ) from None
    seed = _get(data, "seed", "scenario", int, required=False, default=0)

    network = None
    if "network" in data:
        network = network_from_mapping(data["network"])
    elif experiment is not Experiment.TIGHTNESS_PROBE:
        raise errors.SchemaError("scenario: missing required field 'network'")

    sweep = None
    if data.get("sweep") is not None:
        sw = _require_mapping(data["sweep"], "sweep")
        _check_keys(sw, {"parameter", "start", "stop", "steps"}, "sweep")
        sweep = SweepSpec(
            parameter=_get(sw, "parameter", "sweep", str),
            start=_get(sw, "start", "sweep", float),
            stop=_get(sw, "stop", "sweep", float),
            steps=_get(sw, "steps", "sweep", int),
        )
        _validate_sweep(sweep)
    elif experiment is Experiment.SWEEP:
        raise errors.SchemaError("scenario: sweep experiment requires a 'sweep' section")

    tightness = TightnessSpec()
    if data.get("tightness") is not None:
        tg = _require_mapping(data["tightness"], "tightness")
        _check_keys(tg, {"ks", "sigma", "rhos", "demand"}, "tightness")
        tightness = TightnessSpec(
            ks=tuple(float(v) for v in _get(tg, "ks", "tightness", list,
                                            required=False, default=[1.0, 1.5, 2.0, 3.0])),
            sigma=_get(tg, "sigma", "tightness", float, required=False, default=1.0),
            rhos=tuple(float(v) for v in _get(tg, "rhos", "tightness", list,
                                              required=False, default=[10.0, 100.0])),
            demand=_get(tg, "demand", "tightness", float, required=False, default=1.0),
        )

    return Scenario(
        schema_version=version,
        experiment=experiment,
        network=network,
        eq_config=_eq_config_from(data.get("equilibrium"), seed),
        opt_config=_opt_config_from(data.get("optimum"), seed),
        sweep=sweep,
        tightness=tightness,
        seed=seed,
    )


def _validate_sweep(sweep: SweepSpec) -> None:
    if sweep.parameter not in SWEEP_PARAMETERS:
        raise errors.InvalidSweepParameterError(
            f"unknown sweep parameter {sweep.parameter!r}; "
            f"expected one of {SWEEP_PARAMETERS}"
        )
    if sweep.steps < 1:
        raise errors.InvalidSweepParameterError("sweep.steps must be >= 1")
    lo, hi = min(sweep.start, sweep.stop), max(sweep.start, sweep.stop)
    if sweep.parameter == "autonomy_share" and (lo < 0 or hi > 1):
        raise errors.InvalidSweepParameterError("autonomy_share must stay within [0, 1]")
    if sweep.parameter == "k_scale" and lo < 1:
        raise errors.InvalidSweepParameterError("k_scale values must be >= 1")
    if sweep.parameter == "sigma" and lo < 1:
        raise errors.InvalidSweepParameterError("sigma values must be >= 1")
    if sweep.parameter == "demand_scale" and lo <= 0:
        raise errors.InvalidSweepParameterError("demand_scale values must be > 0")


# Embedded demo scenarios. "monotonicity" is the two-road affine instance whose
# cost operator has an asymmetric, indefinite Jacobian; "bicriteria-2.61" is a
# k=3, sigma=4 network whose demand-inflation factor lands near 2.605;
# "classic-4-3" is a symmetric network recovering the affine 4/3 bound;
# "tightness-k-sweep" runs the order-optimality probe.
_DEMOS: dict[str, dict[str, Any]] = {
    "classic-4-3": {
        "schema_version": "1",
        "experiment": "bounds",
        "network": {
            "nodes": ["s", "t"],
            "roads": [
                {"id": 1, "tail": "s", "head": "t", "length": 1.0, "headway": 1.0,
                 "platoon_headway": 1.0, "freeflow": 1.0, "rho": 1.0, "sigma": 1.0,
                 "capacity_model": "model1"},
                {"id": 2, "tail": "s", "head": "t", "length": 1.0, "headway": 1.0,
                 "platoon_headway": 1.0, "freeflow": 1.0, "rho": 1.0, "sigma": 1.0,
                 "capacity_model": "model1"},
            ],
            "od_pairs": [{"origin": "s", "destination": "t",
                          "demand_human": 1.0, "demand_auto": 1.0}],
        },
    },
    "monotonicity": {
        "schema_version": "1",
        "experiment": "monotonicity_demo",
        "network": {
            "nodes": ["s", "t"],
            "roads": [
                {"id": 1, "tail": "s", "head": "t",
                 "affine": {"coef_human": 3.0, "coef_auto": 1.0, "constant": 1.0}},
                {"id": 2, "tail": "s", "head": "t",
                 "affine": {"coef_human": 3.0, "coef_auto": 2.0, "constant": 1.0}},
            ],
            "od_pairs": [{"origin": "s", "destination": "t",
                          "demand_human": 2.0, "demand_auto": 3.0}],
        },
    },
    "bicriteria-2.61": {
        "schema_version": "1",
        "experiment": "bicriteria",
        "network": {
            "nodes": ["s", "t"],
            "roads": [
                {"id": 1, "tail": "s", "head": "t", "length": 1.0, "headway": 6.0,
                 "platoon_headway": 2.0, "freeflow": 1.0, "rho": 0.15, "sigma": 4.0,
                 "capacity_model": "model1"},
                {"id": 2, "tail": "s", "head": "t", "length": 1.0, "headway": 2.0,
                 "platoon_headway": 2.0, "freeflow": 1.0, "rho": 0.15, "sigma": 4.0,
                 "capacity_model": "model1"},
            ],
            "od_pairs": [{"origin": "s", "destination": "t",
                          "demand_human": 0.2, "demand_auto": 0.2}],
        },
    },
    "tightness-k-sweep": {
        "schema_version": "1",
        "experiment": "tightness_probe",
        "tightness": {"ks": [1.0, 1.5, 2.0, 3.0], "sigma": 1.0,
                      "rhos": [10.0, 100.0], "demand": 1.0},
    },
}

DEMO_NAMES = tuple(sorted(_DEMOS))


def demo_scenario(name: str) -> Scenario:
    """One of the embedded demo scenarios, validated through the normal parser."""
    if name not in _DEMOS:
        raise errors.SchemaError(
            f"unknown demo {name!r}; available: {', '.join(DEMO_NAMES)}"
        )
    return parse_scenario(json.dumps(_DEMOS[name]))
