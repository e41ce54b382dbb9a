"""Wardrop equilibria of the mixed-autonomy routing game.

The game has no potential function and its cost operator is not monotone, so
equilibria are computed by averaging heuristics and certified a posteriori by
the Wardrop gap: the demand-weighted excess of used-path costs over shortest
path costs, normalized by social cost. A point is an equilibrium exactly when
the gap is zero.

Two averaging step rules are available. Plain MSA averages the all-or-nothing
assignment with step ``1/(iteration+1)``. The self-regulated variant (the
default) grows the step denominator slowly while the gap improves and quickly
when it deteriorates. Averaging alone oscillates around the equilibrium with
amplitude proportional to the step, so once the gap is small the solver
switches to proportional cost-equalization steps (whose rest points are
exactly the Wardrop points), each accepted only when the measured gap drops,
with a least-squares support polish for stall points that need a pure
class-composition exchange. Every returned answer is certified by
``relative_gap``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import errors
from .costs import (
    _latencies,
    _latency_partials,
    _net_arrays,
    _split_flows,
    cost_vector,
    social_cost,
)
from .network import (
    FlowVector,
    Network,
    PathFlowAssignment,
    PathTable,
    path_table,
    to_link_flows,
    validate_assignment,
)

log = logging.getLogger("mar.equilibrium")


class StepRule(enum.Enum):
    MSA = "msa"
    SELF_REGULATED = "self-regulated"


@dataclass(frozen=True)
class EquilibriumConfig:
    max_iterations: int = 100_000
    gap_tolerance: float = 1e-6
    step_rule: StepRule = StepRule.SELF_REGULATED
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise errors.InvalidParameterError("max_iterations must be >= 1")
        if self.gap_tolerance <= 0:
            raise errors.InvalidParameterError("gap_tolerance must be > 0")
        if isinstance(self.step_rule, str):
            object.__setattr__(self, "step_rule", StepRule(self.step_rule))


@dataclass(frozen=True)
class SolveResult:
    """Outcome of an equilibrium or optimum solve.

    For equilibria ``relative_gap`` is the normalized Wardrop gap; for optima
    it is a first-order stationarity measure. ``converged`` never hides a bad
    point: the flows are feasible either way.
    """

    flows: PathFlowAssignment
    link_flows: FlowVector
    social_cost: float
    relative_gap: float
    iterations: int
    converged: bool


def _gap_at(table: PathTable, c_road: np.ndarray, ph: np.ndarray, pa: np.ndarray):
    """Wardrop gap pieces at one point: (absolute gap, social cost, aon indices)."""
    cp = table.incidence.T @ c_road
    total_cost = float(np.dot(ph, cp) + np.dot(pa, cp))
    shortest_cost = 0.0
    aon = []
    for i, blk in enumerate(table.blocks):
        j = int(np.argmin(cp[blk]))  # ties break to the lowest path index
        cmin = float(cp[blk][j])
        shortest_cost += (table.demand_human[i] + table.demand_auto[i]) * cmin
        aon.append(blk.start + j)
    return total_cost - shortest_cost, total_cost, aon


def _swap_directions(table: PathTable, c_road: np.ndarray,
                     ph: np.ndarray, pa: np.ndarray):
    """Two proportional-swap directions with complementary failure modes.

    Pairwise: flow leaves each path toward every cheaper path of its OD block
    at a rate proportional to the cost difference (continuous in the costs).
    Collect: all excess-weighted outflow lands on the block's cheapest path.
    Both are stationary exactly at Wardrop points. Yields
    (human dir, auto dir, max per-unit outflow rate) per variant.
    """
    cp = table.incidence.T @ c_road
    pair_h, pair_a = np.zeros_like(ph), np.zeros_like(pa)
    coll_h, coll_a = np.zeros_like(ph), np.zeros_like(pa)
    pair_rate = 0.0
    coll_rate = 0.0
    for blk in table.blocks:
        costs = cp[blk]
        diff = np.maximum(costs[:, None] - costs[None, :], 0.0)
        rate = diff.sum(axis=1)
        pair_rate = max(pair_rate, float(rate.max(initial=0.0)))
        jmin = int(np.argmin(costs))
        excess = costs - costs[jmin]
        coll_rate = max(coll_rate, float(excess.max(initial=0.0)))
        for p, dp, dc in ((ph, pair_h, coll_h), (pa, pair_a, coll_a)):
            dp[blk] += diff.T @ p[blk] - p[blk] * rate
            out = p[blk] * excess
            dc[blk] -= out
            dc[blk.start + jmin] += float(out.sum())
    return (coll_h, coll_a, coll_rate), (pair_h, pair_a, pair_rate)


def _support_polish(table: PathTable, params, ph: np.ndarray, pa: np.ndarray,
                    rounds: int = 12, drop_tol: float = 1e-3):
    """Equalize support-path costs by damped least-squares Newton steps.

    Both swap fields move the two classes in lockstep, so they cannot express
    pure class-composition exchanges; near equilibria that require one the
    dynamics stall. This polish drops epsilon-used paths onto the cheapest
    path, then solves the linearized equal-cost/demand system on the support
    (least-norm step, since equilibria form a manifold), with a ratio test to
    stay nonnegative. Returns a candidate point; the caller keeps it only if
    the gap certificate improves.
    """
    ph = ph.copy()
    pa = pa.copy()
    n = table.total_paths
    incidence = table.incidence
    x, y = table.link_flows(ph, pa)
    cp = incidence.T @ _latencies(params, x, y)
    for i, blk in enumerate(table.blocks):
        jmin = blk.start + int(np.argmin(cp[blk]))
        for p, demand in ((ph, table.demand_human[i]), (pa, table.demand_auto[i])):
            for j in range(blk.start, blk.stop):
                if j != jmin and p[j] < drop_tol * max(float(demand), 1e-300):
                    p[jmin] += p[j]
                    p[j] = 0.0
    for _ in range(rounds):
        x, y = table.link_flows(ph, pa)
        c = _latencies(params, x, y)
        dcdx, dcdy = _latency_partials(params, x, y)
        cp = incidence.T @ c
        rows = []
        rhs = []
        mask = np.zeros(2 * n, dtype=bool)
        for i, blk in enumerate(table.blocks):
            support = [j for j in range(blk.start, blk.stop) if ph[j] + pa[j] > 0.0]
            mask[support] = True
            mask[[n + j for j in support]] = True
            ref = support[0]
            for j in support[1:]:
                diff = incidence[:, j] - incidence[:, ref]
                row = np.empty(2 * n)
                row[:n] = (diff * dcdx) @ incidence
                row[n:] = (diff * dcdy) @ incidence
                rows.append(row)
                rhs.append(cp[ref] - cp[j])
            row_h = np.zeros(2 * n)
            row_h[support] = 1.0
            rows.append(row_h)
            rhs.append(float(table.demand_human[i]) - float(ph[support].sum()))
            row_a = np.zeros(2 * n)
            row_a[[n + j for j in support]] = 1.0
            rows.append(row_a)
            rhs.append(float(table.demand_auto[i]) - float(pa[support].sum()))
        try:
            step, *_ = np.linalg.lstsq(np.array(rows)[:, mask], np.array(rhs), rcond=None)
        except np.linalg.LinAlgError:
            break
        full = np.zeros(2 * n)
        full[mask] = step
        dh, da = full[:n], full[n:]
        for p, d in ((ph, dh), (pa, da)):
            d[(p <= 0.0) & (d < 0.0)] = 0.0
        damping = 1.0
        for p, d in ((ph, dh), (pa, da)):
            neg = d < 0.0
            if neg.any():
                damping = min(damping, float(np.min(0.95 * p[neg] / -d[neg])))
        if not np.isfinite(damping) or damping <= 0.0:
            break
        ph = np.maximum(ph + damping * dh, 0.0)
        pa = np.maximum(pa + damping * da, 0.0)
    # Newton preserves the demand totals only to first order; restore exactly
    for i, blk in enumerate(table.blocks):
        for p, demand in ((ph, float(table.demand_human[i])),
                          (pa, float(table.demand_auto[i]))):
            total = float(p[blk].sum())
            if total > 0.0:
                p[blk] *= demand / total
            elif demand > 0.0:
                p[blk.start] = demand
    return ph, pa


def wardrop_gap(net: Network, pf: PathFlowAssignment) -> tuple[float, float]:
    """(absolute, relative) Wardrop gap of a path-flow assignment.

    Zero exactly at equilibrium. Both vehicle classes see the same road
    latencies, so the per-class shortest paths coincide.
    """
    validate_assignment(net, pf)
    table = path_table(net)
    ph, pa = table.arrays(pf)
    x, y = table.link_flows(ph, pa)
    c_road = _latencies(_net_arrays(net), x, y)
    gap_abs, total_cost, _ = _gap_at(table, c_road, ph, pa)
    gap_abs = max(gap_abs, 0.0)
    demand = sum(od.total_demand for od in net.od_pairs)
    if total_cost <= 0.0:
        if demand > 0:
            raise errors.ZeroCostError("social cost is zero with positive demand")
        return gap_abs, 0.0
    return gap_abs, gap_abs / total_cost


def solve_equilibrium(
    net: Network,
    cfg: EquilibriumConfig | None = None,
    *,
    start: PathFlowAssignment | str | None = None,
    on_iterate: Callable[[int, PathFlowAssignment, float], None] | None = None,
) -> SolveResult:
    """Compute a Wardrop equilibrium by averaged all-or-nothing assignment.

    ``start`` may be an explicit assignment (used to probe equilibrium
    multiplicity), the string ``"random"`` (Dirichlet start seeded by
    ``cfg.seed``), or None for the uniform split. When the gap tolerance is
    not reached the best iterate found is returned with ``converged=False``
    rather than raising. Deterministic for a given config and start.
    """
    cfg = cfg or EquilibriumConfig()
    table = path_table(net)
    params = _net_arrays(net)
    if start is None:
        ph, pa = table.uniform_start()
    elif isinstance(start, str):
        if start != "random":
            raise errors.InvalidParameterError(f"unknown start {start!r}")
        ph, pa = table.random_start(np.random.default_rng(cfg.seed))
    else:
        validate_assignment(net, start)
        ph, pa = table.arrays(start)

    total_demand = float(table.demand_human.sum() + table.demand_auto.sum())
    best_gap = np.inf
    best = (ph.copy(), pa.copy(), 0)
    prev_gap = np.inf
    denom = 1.0
    averaging_steps = 0
    swap_step = 0.1
    preferred = 0
    swap_epoch_gap = None
    swap_epoch_count = 0
    last_polish = -10**9
    its = 0

    def gap_pieces(h, a):
        x, y = table.link_flows(h, a)
        c_road = _latencies(params, x, y)
        gap_abs, total_cost, aon = _gap_at(table, c_road, h, a)
        gap_abs = max(gap_abs, 0.0)
        if total_cost <= 0.0:
            if total_demand > 0:
                raise errors.ZeroCostError("social cost is zero with positive demand")
            return 0.0, c_road, aon
        return gap_abs / total_cost, c_road, aon

    for it in range(cfg.max_iterations + 1):
        its = it
        gap_rel, c_road, aon = gap_pieces(ph, pa)
        if on_iterate is not None:
            on_iterate(it, table.assignment(ph, pa), gap_rel)
        if gap_rel < best_gap:
            best_gap = gap_rel
            best = (ph.copy(), pa.copy(), it)
        if gap_rel <= cfg.gap_tolerance:
            return _result(net, table, ph, pa, gap_rel, it, True)
        if it == cfg.max_iterations:
            break

        if gap_rel <= 1e-2:
            # equalization regime: follow the currently preferred swap variant
            # while it keeps lowering the gap; on rejection try the other one,
            # and switch variants when an epoch makes too little progress
            if swap_epoch_gap is None:
                swap_epoch_gap = gap_rel
                swap_epoch_count = 0
            swap_epoch_count += 1
            if swap_epoch_count >= 60:
                if gap_rel > 0.5 * swap_epoch_gap:
                    preferred = 1 - preferred
                swap_epoch_gap = gap_rel
                swap_epoch_count = 0
            directions = _swap_directions(table, c_road, ph, pa)
            accepted = False
            for which in (preferred, 1 - preferred):
                dh, da, max_rate = directions[which]
                step = min(swap_step, 0.9 / max(max_rate, 1e-12))
                for _ in range(8):
                    cand_h = ph + step * dh
                    cand_a = pa + step * da
                    cand_gap, _, _ = gap_pieces(cand_h, cand_a)
                    if cand_gap < gap_rel:
                        ph, pa = cand_h, cand_a
                        swap_step = step * 1.3
                        preferred = which
                        accepted = True
                        break
                    step *= 0.5
                if accepted:
                    break
            if accepted:
                continue
            if it - last_polish >= 20:
                # both swap fields stalled: likely a point needing a pure
                # class-composition exchange, which only the polish can make
                last_polish = it
                cand_h, cand_a = _support_polish(table, params, ph, pa)
                cand_gap, _, _ = gap_pieces(cand_h, cand_a)
                if cand_gap < gap_rel:
                    ph, pa = cand_h, cand_a
                    continue

        if cfg.step_rule is StepRule.MSA:
            phi = 1.0 / (averaging_steps + 1.0)
        else:
            # grow the averaging denominator slowly on progress, fast on setbacks
            if averaging_steps > 0:
                denom += 2.0 if gap_rel > prev_gap * (1.0 - 1e-9) else 0.05
            phi = 1.0 / denom
        target_h = np.zeros_like(ph)
        target_a = np.zeros_like(pa)
        for i, j in enumerate(aon):
            target_h[j] = table.demand_human[i]
            target_a[j] = table.demand_auto[i]
        ph += phi * (target_h - ph)
        pa += phi * (target_a - pa)
        prev_gap = gap_rel
        averaging_steps += 1
        if it % 5000 == 0 and it > 0:
            log.debug("iteration %d: relative gap %.3e", it, gap_rel)

    ph, pa, best_it = best
    polished_h, polished_a = _support_polish(table, params, ph, pa)
    polished_gap, _, _ = gap_pieces(polished_h, polished_a)
    if polished_gap < best_gap:
        ph, pa, best_gap = polished_h, polished_a, polished_gap
        if best_gap <= cfg.gap_tolerance:
            return _result(net, table, ph, pa, best_gap, its, True)
    log.info("not converged after %d iterations, best gap %.3e", its, best_gap)
    return _result(net, table, ph, pa, best_gap, best_it, False)


def _result(net, table, ph, pa, gap_rel, iterations, converged) -> SolveResult:
    pf = table.assignment(ph, pa)
    z = to_link_flows(net, pf)
    return SolveResult(
        flows=pf,
        link_flows=z,
        social_cost=social_cost(net, z),
        relative_gap=float(gap_rel),
        iterations=iterations,
        converged=converged,
    )


def vi_residual(net: Network, z_eq, z) -> float:
    """Variational-inequality residual ``<c(z_eq), z_eq - z>``.

    At a true equilibrium this is <= 0 for every feasible z; a positive value
    against some feasible z certifies z_eq is not an equilibrium.
    """
    x_eq, y_eq = _split_flows(net, z_eq)
    x, y = _split_flows(net, z)
    zz = np.empty(2 * net.n_roads)
    zz[0::2], zz[1::2] = x_eq, y_eq
    ww = np.empty(2 * net.n_roads)
    ww[0::2], ww[1::2] = x, y
    return float(np.dot(cost_vector(net, zz), zz - ww))
