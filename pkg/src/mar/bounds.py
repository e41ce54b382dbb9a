"""Price-of-anarchy and bicriteria bounds for mixed-autonomy routing games.

Everything here is parameterized by two quantities: the maximum degree of
asymmetry ``k`` (worst headway ratio over all roads, in either direction) and
the maximum polynomial degree ``sigma`` of the BPR-form delays. The scalar
``xi(sigma) = sigma * (sigma+1)**(-(sigma+1)/sigma)`` drives every bound:

* ``k**sigma / (1 - xi(sigma))`` always bounds the equilibrium/optimum cost
  ratio;
* ``1 / (1 - k*xi(sigma))`` bounds it too whenever ``k*xi(sigma) < 1``;
* equilibrium cost never exceeds the optimum cost of the same game with
  ``1 + k*xi(sigma)`` times the demand (the bicriteria guarantee).

The module also exposes the proof artifacts as executable checks: the
aggregate single-class cost construction anchored at an equilibrium, the
geometric ``beta`` parameter with its per-road closed form, and per-road
inequality verifiers suitable for property-test harnesses.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import errors
from .costs import capacity, link_cost
from .equilibrium import EquilibriumConfig, SolveResult, solve_equilibrium
from .network import CapacityModel, Network, ODPair, Road, path_table
from .optimum import OptimumConfig, brute_force_optimum, solve_optimum

log = logging.getLogger("mar.bounds")


def xi(sigma: float) -> float:
    """The bound-driving scalar ``sigma * (sigma+1)**(-(sigma+1)/sigma)``.

    Strictly below 1 for every sigma >= 1 (and increasing in sigma).
    """
    if sigma < 1:
        raise errors.InvalidSigmaError(f"sigma must be >= 1, got {sigma}")
    return sigma * (sigma + 1.0) ** (-(sigma + 1.0) / sigma)


def _require_bpr(net: Network, what: str) -> None:
    for road in net.roads:
        if not road.is_bpr:
            raise errors.UnsupportedCostKindError(
                f"{what} requires BPR-form roads; road {road.rid} is affine"
            )


def degree_of_asymmetry(net: Network) -> float:
    """Maximum headway ratio over all roads, in either direction. Always >= 1."""
    _require_bpr(net, "degree_of_asymmetry")
    return max(road.headway_ratio for road in net.roads)


def max_degree(net: Network) -> float:
    """Maximum polynomial degree over the network's roads."""
    _require_bpr(net, "max_degree")
    return max(road.sigma for road in net.roads)


@dataclass(frozen=True)
class BoundsReport:
    """All closed-form bounds for one network.

    ``bound_thm2`` is present only when ``k * xi(sigma) < 1``;
    ``bound_combined`` is the minimum of the applicable bounds.
    """

    k: float
    sigma: float
    xi: float
    bound_thm1: float
    bound_thm2: float | None
    bound_combined: float
    bicriteria_factor: float
    beta_cap: float
    beta_estimate: float | None = None

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "sigma": self.sigma,
            "xi": self.xi,
            "bound_thm1": self.bound_thm1,
            "bound_thm2": self.bound_thm2,
            "bound_combined": self.bound_combined,
            "bicriteria_factor": self.bicriteria_factor,
            "beta_cap": self.beta_cap,
            "beta_estimate": self.beta_estimate,
        }


def poa_bounds(net: Network) -> BoundsReport:
    """Closed-form price-of-anarchy and bicriteria bounds for a BPR network."""
    _require_bpr(net, "poa_bounds")
    k = degree_of_asymmetry(net)
    sigma = max_degree(net)
    x = xi(sigma)
    thm1 = k ** sigma / (1.0 - x)
    kx = k * x
    thm2 = 1.0 / (1.0 - kx) if kx < 1.0 else None
    combined = thm1 if thm2 is None else min(thm1, thm2)
    return BoundsReport(
        k=k,
        sigma=sigma,
        xi=x,
        bound_thm1=thm1,
        bound_thm2=thm2,
        bound_combined=combined,
        bicriteria_factor=1.0 + kx,
        beta_cap=kx,
    )


def _orient(road: Road) -> tuple[float, float, bool]:
    """(big, small, swapped): headways sorted so the costlier class comes
    first; ``swapped`` means the platooned headway is the big one."""
    h, hbar = road.headway, road.platoon_headway
    if hbar > h:
        return hbar, h, True
    return h, hbar, False


@dataclass(frozen=True)
class AggregateCost:
    """Single-class piecewise latency anchored at an equilibrium flow split.

    Routes the costlier vehicle type first: below the anchor the whole flow
    pays the big headway, above it the remainder pays the small one. At
    ``f = x_eq + y_eq`` the value reproduces the two-class latency exactly.
    """

    road: Road
    anchor: float
    big: float
    small: float
    swapped: bool

    @property
    def breakpoint(self) -> float:
        return self.anchor

    def __call__(self, f):
        scalar = np.isscalar(f)
        f = np.asarray(f, dtype=float)
        if f.min(initial=0.0) < 0:
            raise errors.NegativeFlowError("aggregate flow must be >= 0")
        road = self.road
        a, rho, sig, d = road.freeflow, road.rho, road.sigma, road.length
        delta = self.big - self.small
        inner_low = self.big * f / d
        safe_f = np.where(f > 0, f, 1.0)
        if road.capacity_model is CapacityModel.MODEL1:
            inner_high = (self.small * f + delta * self.anchor) / d
        elif self.swapped:
            # platooned vehicles are the costly type: the anchor flow keeps
            # paying the big headway among itself, the rest pays the small one
            inner_high = np.where(
                f > 0,
                (self.small * f * f + delta * self.anchor * self.anchor) / (d * safe_f),
                0.0,
            )
        else:
            inner_high = np.where(
                f > 0,
                (self.big * f * f - delta * (f - self.anchor) ** 2) / (d * safe_f),
                0.0,
            )
        inner = np.where(f <= self.anchor, inner_low, inner_high)
        value = a * (1.0 + rho * inner ** sig)
        return float(value) if scalar else value


def aggregate_cost(road: Road, x_eq: float, y_eq: float) -> AggregateCost:
    """Aggregate latency map anchored at the equilibrium split (x_eq, y_eq).

    The anchor is the equilibrium flow of whichever class occupies more road
    space per vehicle on this road.
    """
    if not road.is_bpr:
        raise errors.UnsupportedCostKindError("aggregate_cost requires a BPR road")
    if x_eq < 0 or y_eq < 0:
        raise errors.NegativeFlowError("equilibrium flows must be >= 0")
    big, small, swapped = _orient(road)
    anchor = y_eq if swapped else x_eq
    return AggregateCost(road=road, anchor=anchor, big=big, small=small, swapped=swapped)


def _avg_spacing(road: Road, v: float, w: float) -> float:
    """Average road space per vehicle at composition (v, w)."""
    return road.length / capacity(road, v, w)


def beta_road_closed_form(road: Road, v: float, w: float, sigma_use: float) -> float:
    """Per-road geometric congestion parameter, in closed form.

    Equals ``xi(sigma) * average_spacing(v, w) / min(headways)``: the
    maximizing deviation routes all its flow as the space-cheapest class.
    Reduces to ``xi(sigma)`` on symmetric roads and is capped by
    ``road_ratio * xi(sigma)``.
    """
    if not road.is_bpr:
        raise errors.UnsupportedCostKindError("beta requires a BPR road")
    if v < 0 or w < 0:
        raise errors.NegativeFlowError("reference flows must be >= 0")
    if v + w == 0:
        raise errors.ZeroReferenceError("reference flow pair sums to zero")
    small = min(road.headway, road.platoon_headway)
    return xi(sigma_use) * _avg_spacing(road, v, w) / small


def _beta_expression(road: Road, v: float, w: float, sigma_use: float, x, y):
    """The deviation-gain expression maximized by beta, vectorized over (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t_q = v + w
    t_z = x + y
    m_q = capacity(road, v, w)
    # average spacing at (x, y), with the zero-flow convention alpha = 0
    safe_t = np.where(t_z > 0, t_z, 1.0)
    alpha = np.where(t_z > 0, y / safe_t, 0.0)
    weight = alpha if road.capacity_model is CapacityModel.MODEL1 else alpha * alpha
    spacing = weight * road.platoon_headway + (1.0 - weight) * road.headway
    m_z = road.length / spacing
    ratio = (m_q * t_z) / (m_z * t_q)
    return (t_z / t_q) * (1.0 - ratio ** sigma_use)


def _golden_max(fun, lo: float, hi: float, iters: int = 90) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
        else:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
    return max(fc, fd)


def beta_road_numeric(road: Road, v: float, w: float, sigma_use: float) -> float:
    """Numeric maximization of the per-road beta expression over deviations.

    Searches both axes (where the analytic maximizer is known to lie) with a
    dense grid refined by golden-section search, plus a coarse interior grid
    as a defensive check against the axis argument. Agrees with
    ``beta_road_closed_form`` to high relative accuracy.
    """
    if not road.is_bpr:
        raise errors.UnsupportedCostKindError("beta requires a BPR road")
    if v < 0 or w < 0:
        raise errors.NegativeFlowError("reference flows must be >= 0")
    if v + w == 0:
        raise errors.ZeroReferenceError("reference flow pair sums to zero")
    bound = 3.0 * (v + w) * road.headway_ratio
    grid = np.linspace(0.0, bound, 1201)
    best = 0.0
    zeros = np.zeros_like(grid)
    for values, fun in (
        (_beta_expression(road, v, w, sigma_use, grid, zeros),
         lambda t: float(_beta_expression(road, v, w, sigma_use, t, 0.0))),
        (_beta_expression(road, v, w, sigma_use, zeros, grid),
         lambda t: float(_beta_expression(road, v, w, sigma_use, 0.0, t))),
    ):
        j = int(np.argmax(values))
        lo = grid[max(j - 1, 0)]
        hi = grid[min(j + 1, grid.size - 1)]
        best = max(best, float(values[j]), _golden_max(fun, lo, hi))
    interior = np.linspace(0.0, bound, 41)
    gx, gy = np.meshgrid(interior, interior)
    best = max(best, float(np.max(_beta_expression(road, v, w, sigma_use, gx, gy))))
    return best


def beta_network_estimate(net: Network, samples: int = 256, seed: int = 0) -> float:
    """Sampled lower estimate of the network beta parameter.

    Maximizes the per-road closed form over random feasible flow patterns.
    Roads with zero flow contribute zero (the 0/0 convention). The analytic
    cap ``k * xi(sigma)`` always dominates the estimate.
    """
    _require_bpr(net, "beta_network_estimate")
    if samples < 1:
        raise errors.InvalidParameterError("samples must be >= 1")
    sigma = max_degree(net)
    table = path_table(net)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        ph, pa = table.random_start(rng)
        x, y = table.link_flows(ph, pa)
        for i, road in enumerate(net.roads):
            if x[i] + y[i] > 0:
                best = max(best, beta_road_closed_form(road, float(x[i]), float(y[i]), sigma))
    return best


def verify_lemma_agg_poa_ratio(road: Road, x_eq: float, y_eq: float,
                               f: float, g: float) -> bool:
    """Check the aggregate-cost ratio inequality ``c(f)/c(g) >= (f/g)**sigma``.

    Requires ``0 <= f <= g`` with ``g > 0``; allows 1e-12 slack on the ratio
    scale. Holds for both capacity models, both headway orientations, and on
    every side of the anchor.
    """
    if f > g:
        raise errors.InvalidOrderError(f"expected f <= g, got ({f}, {g})")
    if g <= 0:
        raise errors.InvalidParameterError("g must be > 0")
    agg = aggregate_cost(road, x_eq, y_eq)
    c_f = agg(f)
    c_g = agg(g)
    if c_g <= 0:
        return True
    return c_f / c_g + 1e-12 >= (f / g) ** road.sigma


def verify_lemma_agg_opt(road: Road, x: float, y: float) -> bool:
    """Check ``k_road**sigma * c(x, y) >= max(c(x+y, 0), c(0, x+y))``.

    Relates a mixed composition's cost to the worse single-class cost of the
    same total flow, with relative slack 1e-12.
    """
    if not road.is_bpr:
        raise errors.UnsupportedCostKindError("verify_lemma_agg_opt requires a BPR road")
    if x < 0 or y < 0:
        raise errors.NegativeFlowError("flows must be >= 0")
    k = road.headway_ratio
    lhs = k ** road.sigma * link_cost(road, x, y)
    rhs = max(link_cost(road, x + y, 0.0), link_cost(road, 0.0, x + y))
    return lhs >= rhs - 1e-12 * (1.0 + abs(rhs))


@dataclass(frozen=True)
class PoAOutcome:
    """Empirical equilibrium/optimum cost ratio with provenance."""

    ratio: float
    equilibrium: SolveResult
    optimum: SolveResult
    opt_oracle: str          # "brute-force" or "local-search"
    flags: tuple[str, ...]   # nonempty when the ratio is not fully certified


def empirical_poa(
    net: Network,
    eq_cfg: EquilibriumConfig | None = None,
    opt_cfg: OptimumConfig | None = None,
    *,
    use_brute_force: bool = True,
) -> PoAOutcome:
    """Solve for an equilibrium and an optimum and report their cost ratio.

    The optimum is backed by the exhaustive grid oracle whenever the instance
    passes the brute-force guard; otherwise by multistart local search, which
    can overestimate the optimum cost and therefore only ever lowers the
    reported ratio. Flags record any uncertainty.
    """
    _require_bpr(net, "empirical_poa")
    opt_cfg = opt_cfg or OptimumConfig()
    eq = solve_equilibrium(net, eq_cfg)
    opt = solve_optimum(net, opt_cfg)
    oracle = "local-search"
    if use_brute_force:
        try:
            bf = brute_force_optimum(net, opt_cfg.grid_resolution)
            oracle = "brute-force"
            if bf.social_cost < opt.social_cost:
                opt = bf
        except errors.TooLargeError:
            pass
    flags = []
    if not eq.converged:
        flags.append("eq-unconverged")
    if oracle == "local-search" and not opt.converged:
        flags.append("opt-unconverged")
    if opt.social_cost <= 0:
        raise errors.ZeroCostError("optimum social cost is zero")
    return PoAOutcome(
        ratio=eq.social_cost / opt.social_cost,
        equilibrium=eq,
        optimum=opt,
        opt_oracle=oracle,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class TightnessPoint:
    """Best empirical ratio found for one asymmetry level."""

    k: float
    best_ratio: float
    bound_combined: float
    instances_tried: int
    equilibria_found: int


def _opposed_asymmetry_net(k: float, sigma: float, rho: float, demand: float) -> Network:
    """Two parallel roads whose asymmetry favors opposite vehicle classes."""
    roads = (
        Road(rid=1, tail="s", head="t", length=1.0, headway=k, platoon_headway=1.0,
             freeflow=1.0, rho=rho, sigma=sigma, capacity_model=CapacityModel.MODEL1),
        Road(rid=2, tail="s", head="t", length=1.0, headway=1.0, platoon_headway=k,
             freeflow=1.0, rho=rho, sigma=sigma, capacity_model=CapacityModel.MODEL1),
    )
    od = ODPair(origin="s", destination="t", demand_human=demand, demand_auto=demand)
    return Network(nodes=("s", "t"), roads=roads, od_pairs=(od,))


def _segregated_starts(table):
    """All-or-nothing class-to-path combinations, used to probe bad equilibria."""
    starts = []
    total = table.total_paths
    if any(blk.stop - blk.start > 4 for blk in table.blocks):
        return starts
    index_choices = [range(blk.start, blk.stop) for blk in table.blocks]
    import itertools as _it

    human_choices = list(_it.product(*index_choices))
    for hsel in human_choices:
        for asel in human_choices:
            ph = np.zeros(total)
            pa = np.zeros(total)
            for i, j in enumerate(hsel):
                ph[j] = table.demand_human[i]
            for i, j in enumerate(asel):
                pa[j] = table.demand_auto[i]
            starts.append((ph, pa))
    return starts


def tightness_probe(
    ks=(1.0, 1.5, 2.0, 3.0),
    sigma: float = 1.0,
    *,
    rhos=(10.0, 100.0),
    demand: float = 1.0,
    seed: int = 0,
    eq_cfg: EquilibriumConfig | None = None,
    opt_cfg: OptimumConfig | None = None,
    random_starts: int = 2,
) -> tuple[TightnessPoint, ...]:
    """Search two-road families for large equilibrium/optimum cost ratios.

    For each asymmetry level the probe builds opposed-asymmetry instances,
    enumerates segregated warm starts (plus random ones) to reach distinct
    equilibria of the non-unique game, verifies each candidate by its Wardrop
    gap, and reports the worst certified ratio against the best optimum found.
    Failing to attain the closed-form bound is expected; the probe establishes
    growth, not exact tightness.
    """
    eq_cfg = eq_cfg or EquilibriumConfig(max_iterations=20_000)
    opt_cfg = opt_cfg or OptimumConfig(restarts=8, max_iterations=2_000)
    points = []
    for k in ks:
        best_ratio = 0.0
        tried = 0
        found = 0
        bound = None
        for rho in rhos:
            net = _opposed_asymmetry_net(float(k), sigma, float(rho), demand)
            if bound is None:
                bound = poa_bounds(net).bound_combined
            tried += 1
            table = path_table(net)
            opt = solve_optimum(net, opt_cfg)
            try:
                bf = brute_force_optimum(net, opt_cfg.grid_resolution)
                if bf.social_cost < opt.social_cost:
                    opt = bf
            except errors.TooLargeError:
                pass
            rng = np.random.default_rng(seed)
            starts = [None, "random"]
            starts.extend(
                table.assignment(ph, pa) for ph, pa in _segregated_starts(table)
            )
            for _ in range(random_starts):
                ph, pa = table.random_start(rng)
                starts.append(table.assignment(ph, pa))
            for start in starts:
                eq = solve_equilibrium(net, eq_cfg, start=start)
                if not eq.converged:
                    continue
                found += 1
                ratio = eq.social_cost / opt.social_cost
                best_ratio = max(best_ratio, ratio)
        points.append(TightnessPoint(
            k=float(k),
            best_ratio=best_ratio,
            bound_combined=float(bound),
            instances_tried=tried,
            equilibria_found=found,
        ))
    return tuple(points)
