import numpy as np
import pytest

import mar
from mar import errors

from factories import parallel_net, random_road, random_network, symmetric_pair


def asym_road(headway, platoon_headway, sigma=1.0, model=mar.CapacityModel.MODEL1, **kw):
    base = dict(rid=1, tail="s", head="t", length=1.0, freeflow=1.0, rho=1.0)
    base.update(kw)
    return mar.Road(headway=headway, platoon_headway=platoon_headway, sigma=sigma,
                    capacity_model=model, **base)


class TestXi:
    def test_degree_one(self):
        assert mar.xi(1.0) == 0.25

    def test_degree_four_hand_value(self):
        assert mar.xi(4.0) == pytest.approx(0.534992, abs=1e-6)

    def test_below_one_on_grid(self):
        grid = np.linspace(1.0, 16.0, 61)
        values = [mar.xi(s) for s in grid]
        assert all(0 < v < 1 for v in values)
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_invalid_sigma(self):
        with pytest.raises(errors.InvalidSigmaError):
            mar.xi(0.5)


class TestDegreeOfAsymmetry:
    def test_symmetric_network(self):
        assert mar.degree_of_asymmetry(symmetric_pair()) == 1.0

    def test_both_orientations(self):
        net = parallel_net(
            [dict(headway=10.0, platoon_headway=5.0, sigma=1.0),
             dict(headway=4.0, platoon_headway=8.0, sigma=1.0)])
        assert mar.degree_of_asymmetry(net) == 2.0

    def test_single_road_ratio(self):
        net = parallel_net([dict(headway=6.0, platoon_headway=2.0, sigma=1.0)])
        assert mar.degree_of_asymmetry(net) == 3.0

    def test_affine_rejected(self):
        net = parallel_net([dict(affine=mar.AffineMixed(1.0, 1.0, 1.0))])
        with pytest.raises(errors.UnsupportedCostKindError):
            mar.degree_of_asymmetry(net)


class TestPoABounds:
    def test_classic_four_thirds(self):
        report = mar.poa_bounds(symmetric_pair(sigma=1.0))
        assert abs(report.bound_thm1 - 4.0 / 3.0) <= 1e-12
        assert report.bound_thm2 is not None
        assert abs(report.bound_thm2 - report.bound_thm1) <= 1e-12

    def test_k2_worked_values(self):
        net = parallel_net(
            [dict(headway=10.0, platoon_headway=5.0, sigma=1.0),
             dict(headway=4.0, platoon_headway=8.0, sigma=1.0)])
        report = mar.poa_bounds(net)
        assert abs(report.bound_thm1 - 8.0 / 3.0) <= 1e-12
        assert abs(report.bound_thm2 - 2.0) <= 1e-12
        assert abs(report.bound_combined - 2.0) <= 1e-12

    def test_k3_sigma4_bicriteria_factor(self):
        net = parallel_net(
            [dict(headway=6.0, platoon_headway=2.0, sigma=4.0),
             dict(headway=2.0, platoon_headway=2.0, sigma=4.0)])
        report = mar.poa_bounds(net)
        assert report.bicriteria_factor == pytest.approx(2.60498, abs=5e-3)

    def test_thm2_absent_when_k_xi_reaches_one(self):
        net = parallel_net([dict(headway=4.0, platoon_headway=1.0, sigma=1.0)])
        report = mar.poa_bounds(net)
        assert report.bound_thm2 is None
        assert report.bound_combined == report.bound_thm1

    def test_invariants_on_random_networks(self, rng):
        for _ in range(50):
            net = random_network(rng)
            report = mar.poa_bounds(net)
            assert report.k >= 1.0
            assert 0 < report.xi < 1
            assert report.bound_thm1 >= 1.0
            assert report.bound_combined <= report.bound_thm1 + 1e-15
            assert (report.bound_thm2 is not None) == (report.k * report.xi < 1.0)
            if report.bound_thm2 is not None:
                assert report.bound_thm2 >= 1.0


class TestAggregateCost:
    def test_zero_anchor_single_piece(self):
        road = asym_road(2.0, 1.0)
        agg = mar.aggregate_cost(road, 0.0, 0.0)
        assert agg.breakpoint == 0.0
        # above the origin every unit pays the small (platoon) headway
        for f in (0.5, 1.0, 2.0):
            assert agg(f) == pytest.approx(1.0 + 1.0 * f / 1.0, rel=1e-12)

    def test_symmetric_headways_single_curve(self):
        for model in mar.CapacityModel:
            road = asym_road(2.0, 2.0, model=model)
            agg = mar.aggregate_cost(road, 0.7, 0.4)
            for f in np.linspace(0, 3, 20):
                assert agg(f) == pytest.approx(1.0 + 2.0 * f, rel=1e-12)

    def test_anchor_consistency_hand_instance(self):
        road = asym_road(2.0, 1.0)
        agg = mar.aggregate_cost(road, 1.0, 1.0)
        assert agg(2.0) == pytest.approx(4.0, rel=1e-12)
        assert agg(2.0) == pytest.approx(mar.link_cost(road, 1.0, 1.0), rel=1e-12)

    def test_anchor_consistency_random(self, rng):
        for _ in range(300):
            road = random_road(rng, 1, "s", "t", monotone_envelope=False)
            x_eq, y_eq = rng.uniform(0, 3, size=2)
            agg = mar.aggregate_cost(road, float(x_eq), float(y_eq))
            f_eq = float(x_eq + y_eq)
            assert agg(f_eq) == pytest.approx(
                mar.link_cost(road, float(x_eq), float(y_eq)), rel=1e-9)

    def test_continuity_at_breakpoint(self, rng):
        # both branch formulas evaluated exactly at the anchor must agree
        for _ in range(200):
            road = random_road(rng, 1, "s", "t", monotone_envelope=False)
            x_eq, y_eq = rng.uniform(0, 3, size=2)
            agg = mar.aggregate_cost(road, float(x_eq), float(y_eq))
            a = agg.breakpoint
            if a == 0:
                continue
            left = agg(a)
            delta = agg.big - agg.small
            if road.capacity_model is mar.CapacityModel.MODEL1:
                inner = (agg.small * a + delta * a) / road.length
            elif agg.swapped:
                inner = (agg.small * a * a + delta * a * a) / (road.length * a)
            else:
                inner = (agg.big * a * a) / (road.length * a)
            right = road.freeflow * (1.0 + road.rho * inner ** road.sigma)
            assert abs(left - right) <= 1e-12 * (1 + abs(left))

    def test_nondecreasing_within_monotone_envelope(self, rng):
        for _ in range(200):
            road = random_road(rng, 1, "s", "t", monotone_envelope=True)
            x_eq, y_eq = rng.uniform(0, 3, size=2)
            agg = mar.aggregate_cost(road, float(x_eq), float(y_eq))
            grid = np.linspace(0, 4, 200)
            values = agg(grid)
            assert np.all(np.diff(values) >= -1e-12)

    def test_affine_rejected(self):
        road = mar.Road(rid=1, tail="s", head="t", affine=mar.AffineMixed(1, 1, 1))
        with pytest.raises(errors.UnsupportedCostKindError):
            mar.aggregate_cost(road, 1.0, 1.0)


class TestBetaRoad:
    def test_symmetric_road_gives_xi(self):
        road = asym_road(2.0, 2.0)
        assert mar.beta_road_closed_form(road, 1.3, 0.4, 1.0) == pytest.approx(0.25, rel=1e-12)
        assert mar.beta_road_numeric(road, 1.3, 0.4, 1.0) == pytest.approx(0.25, rel=1e-9)

    def test_model1_ratio2_hand_value(self):
        road = asym_road(2.0, 1.0)
        assert mar.beta_road_closed_form(road, 1.0, 1.0, 1.0) == pytest.approx(0.375, rel=1e-12)

    def test_model2_ratio2_hand_value(self):
        road = asym_road(2.0, 1.0, model=mar.CapacityModel.MODEL2)
        assert mar.beta_road_closed_form(road, 1.0, 1.0, 1.0) == pytest.approx(0.4375, rel=1e-12)

    def test_numeric_matches_closed_form(self, rng):
        for _ in range(150):
            road = random_road(rng, 1, "s", "t", monotone_envelope=False)
            v, w = rng.uniform(0, 3, size=2)
            if v + w < 1e-6:
                continue
            sigma = float(rng.choice([1.0, 2.0, 4.0]))
            closed = mar.beta_road_closed_form(road, float(v), float(w), sigma)
            numeric = mar.beta_road_numeric(road, float(v), float(w), sigma)
            assert numeric == pytest.approx(closed, rel=1e-6)

    def test_capped_by_ratio_times_xi(self, rng):
        for _ in range(200):
            road = random_road(rng, 1, "s", "t", monotone_envelope=False)
            v, w = rng.uniform(0.01, 3, size=2)
            sigma = float(rng.choice([1.0, 2.0, 4.0]))
            value = mar.beta_road_numeric(road, float(v), float(w), sigma)
            assert value <= road.headway_ratio * mar.xi(sigma) + 1e-9

    def test_zero_reference_rejected(self):
        road = asym_road(2.0, 1.0)
        with pytest.raises(errors.ZeroReferenceError):
            mar.beta_road_closed_form(road, 0.0, 0.0, 1.0)
        with pytest.raises(errors.ZeroReferenceError):
            mar.beta_road_numeric(road, 0.0, 0.0, 1.0)


class TestBetaNetworkEstimate:
    def test_symmetric_network_constant(self):
        net = symmetric_pair(sigma=1.0)
        est = mar.beta_network_estimate(net, samples=32, seed=1)
        assert est == pytest.approx(0.25, abs=1e-9)

    def test_capped_on_random_networks(self, rng):
        for i in range(100):
            net = random_network(rng)
            est = mar.beta_network_estimate(net, samples=8, seed=i)
            cap = mar.degree_of_asymmetry(net) * mar.xi(mar.max_degree(net))
            assert est <= cap + 1e-9


class TestLemmaVerifiers:
    def test_ratio_trivial_cases(self):
        road = asym_road(2.0, 1.0)
        assert mar.verify_lemma_agg_poa_ratio(road, 1.0, 1.0, 2.0, 2.0)
        assert mar.verify_lemma_agg_poa_ratio(road, 1.0, 1.0, 0.0, 2.0)

    def test_ratio_rejects_bad_order(self):
        road = asym_road(2.0, 1.0)
        with pytest.raises(errors.InvalidOrderError):
            mar.verify_lemma_agg_poa_ratio(road, 1.0, 1.0, 3.0, 2.0)

    def test_ratio_random_sample(self, rng):
        for _ in range(500):
            road = random_road(rng, 1, "s", "t", monotone_envelope=False)
            x_eq, y_eq = rng.uniform(0, 3, size=2)
            g = float(rng.uniform(1e-3, 5))
            f = float(rng.uniform(0, g))
            assert mar.verify_lemma_agg_poa_ratio(road, float(x_eq), float(y_eq), f, g)

    def test_agg_opt_trivial_cases(self):
        sym = asym_road(2.0, 2.0)
        assert mar.verify_lemma_agg_opt(sym, 1.0, 2.0)
        road = asym_road(2.0, 1.0)
        assert mar.verify_lemma_agg_opt(road, 0.0, 0.0)

    def test_agg_opt_random_sample(self, rng):
        for _ in range(500):
            road = random_road(rng, 1, "s", "t", monotone_envelope=False)
            x, y = rng.uniform(0, 4, size=2)
            assert mar.verify_lemma_agg_opt(road, float(x), float(y))


class TestEmpiricalPoA:
    def test_symmetric_network_ratio_one(self):
        net = symmetric_pair(sigma=1.0, rho=1.0)
        outcome = mar.empirical_poa(net)
        assert outcome.ratio == pytest.approx(1.0, abs=1e-6)
        assert outcome.opt_oracle == "brute-force"
        assert outcome.flags == ()

    def test_no_asymmetry_stays_below_classic_bound(self, rng):
        # k = 1, sigma = 1 instances never beat the affine 4/3 guarantee
        opt_cfg = mar.OptimumConfig(restarts=6, max_iterations=600, grid_resolution=0.05)
        for _ in range(20):
            h = float(rng.uniform(0.5, 3.0))
            specs = [dict(headway=h, platoon_headway=h, sigma=1.0,
                          rho=float(rng.uniform(0.05, 1.5)),
                          freeflow=float(rng.uniform(0.5, 2.0)),
                          length=float(rng.uniform(0.5, 2.0)))
                     for _ in range(int(rng.integers(2, 4)))]
            net = parallel_net(specs,
                               demand_human=float(rng.uniform(0.2, 2.0)),
                               demand_auto=float(rng.uniform(0.2, 2.0)))
            outcome = mar.empirical_poa(net, opt_cfg=opt_cfg)
            if outcome.equilibrium.converged:
                assert outcome.ratio <= 4.0 / 3.0 + 2e-3

    def test_affine_rejected(self):
        net = parallel_net([dict(affine=mar.AffineMixed(1, 1, 1))])
        with pytest.raises(errors.UnsupportedCostKindError):
            mar.empirical_poa(net)


class TestTightnessProbe:
    def test_k2_reaches_three_halves(self):
        points = mar.tightness_probe(ks=(2.0,), sigma=1.0, rhos=(100.0,))
        assert points[0].best_ratio >= 1.5
        assert points[0].best_ratio <= points[0].bound_combined + 2e-3

    def test_aggregate_equilibrium_cost_identity(self, rng):
        # the single-class aggregate curves anchored at an equilibrium
        # reproduce its social cost exactly
        for _ in range(5):
            net = random_network(rng)
            res = mar.solve_equilibrium(net, mar.EquilibriumConfig(max_iterations=20_000))
            x, y = res.link_flows.x, res.link_flows.y
            total = 0.0
            for i, road in enumerate(net.roads):
                agg = mar.aggregate_cost(road, float(x[i]), float(y[i]))
                f = float(x[i] + y[i])
                total += f * agg(f)
            assert total == pytest.approx(res.social_cost, rel=1e-9)
