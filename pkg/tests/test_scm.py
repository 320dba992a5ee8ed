import numpy as np
import pytest

from randoms import random_dag_scm, random_mixed_scm
from shiftstable import (
    CausalGraph,
    Edge,
    ModelError,
    SpecError,
    UnsupportedError,
    counterfactual_covariance,
    counterfactual_functionals,
    covariance,
    directed,
    extend_with_avs,
    fit_predictor,
    fit_scm_from_data,
    level2,
    level3,
    linear_scm,
    mse,
    optimal_stable,
    oracle_predictor,
    predictor_for_spec,
    sample,
    stable_feature_basis,
)
from shiftstable.presets import triangle_scm
from shiftstable.scm import LinearPredictor

UNSTABLE = Edge("Y", "X")


def two_node_scm(coeff=2.0):
    g = CausalGraph.build("XY", [("X", "Y")], "Y")
    return linear_scm(g, {("X", "Y"): coeff}, noise={"X": 1.0, "Y": 1.0})


class TestCovariance:
    def test_two_node_hand_expansion(self):
        sigma = covariance(two_node_scm())
        assert np.allclose(sigma.matrix, [[1.0, 2.0], [2.0, 5.0]])

    def test_no_edges_gives_noise_matrix(self):
        g = CausalGraph.build("AB", [], "A")
        m = linear_scm(g, {}, noise={"A": 2.0, "B": 3.0})
        assert np.allclose(covariance(m).matrix, np.diag([2.0, 3.0]))

    def test_triangle_values(self, triangle):
        sigma = covariance(triangle)
        assert sigma.var("Y") == pytest.approx(0.01)
        assert sigma.cov("Y", "X") == pytest.approx(0.05)

    def test_matches_monte_carlo(self, triangle):
        sigma = covariance(triangle)
        table = sample(triangle, 10**6, 123)
        emp = np.cov(table.values, rowvar=False, bias=True)
        assert np.max(np.abs(emp - sigma.matrix)) < 0.01 * np.max(np.abs(sigma.matrix))

    def test_mixed_models_match_monte_carlo(self):
        rng = np.random.default_rng(3)
        m = random_mixed_scm(rng)
        sigma = covariance(m)
        table = sample(m, 400_000, 9)
        emp = np.cov(table.values, rowvar=False, bias=True)
        assert np.max(np.abs(emp - sigma.matrix)) < 0.02 * max(1.0, np.max(np.abs(sigma.matrix)))

    def test_support_mismatch_rejected(self):
        g = CausalGraph.build("XY", [("X", "Y")], "Y")
        with pytest.raises(ModelError):
            linear_scm(g, {})
        with pytest.raises(ModelError):
            linear_scm(g, {("X", "Y"): 1.0, ("Y", "X"): 1.0})

    def test_negative_noise_rejected(self):
        g = CausalGraph.build("XY", [("X", "Y")], "Y")
        with pytest.raises(ModelError):
            linear_scm(g, {("X", "Y"): 1.0}, noise={"X": -1.0, "Y": 1.0})

    def test_non_psd_confounding_rejected(self, child_graph):
        with pytest.raises(ModelError):
            linear_scm(child_graph, {("X", "Y"): 1.0, ("Y", "Z"): 1.0},
                       noise={v: 1.0 for v in child_graph.nodes},
                       confound={("Y", "Z", "<->"): 2.0})

    def test_default_noise_applied(self, triangle):
        assert all(v == 0.01 for v in triangle.noise_var.values())


class TestSampling:
    def test_seeded_runs_are_bit_identical(self, triangle):
        a = sample(triangle, 500, 42)
        b = sample(triangle, 500, 42)
        assert np.array_equal(a.values, b.values)

    def test_different_seeds_differ(self, triangle):
        assert not np.array_equal(sample(triangle, 100, 1).values,
                                  sample(triangle, 100, 2).values)

    def test_mean_is_near_zero(self):
        g = CausalGraph.build("AB", [], "A")
        m = linear_scm(g, {}, noise={"A": 1.0, "B": 1.0})
        n = 40_000
        table = sample(m, n, 0)
        assert np.max(np.abs(table.values.mean(axis=0))) < 5 / np.sqrt(n)

    def test_confounded_noise_correlation(self, child_scm):
        table = sample(child_scm, 200_000, 5)
        sigma = covariance(child_scm)
        emp = np.cov(table.values, rowvar=False, bias=True)
        assert np.max(np.abs(emp - sigma.matrix)) < 0.02

    def test_observed_only_view_drops_latents(self, style_scm):
        table = sample(style_scm, 10, 0)
        assert "W" in table.ids
        assert "W" not in table.observed_only().ids


class TestAuxiliaryVariables:
    def test_star_node_structure(self, triangle):
        ext = extend_with_avs(triangle, [("X", "Z")])
        assert "Z*" in ext.nodes
        assert ext.coeffs[Edge("Z", "Z*")] == 1.0
        assert ext.coeffs[Edge("X", "Z*")] == -1.0
        assert ext.noise_var["Z*"] == 0.0
        (av,) = ext.avs
        assert av.base == "Z" and av.subtracted == (("X", 1.0),)

    def test_empty_deletion_is_identity(self, triangle):
        assert extend_with_avs(triangle, []) is triangle

    def test_bidirected_deletion_unsupported(self, child_scm):
        with pytest.raises(UnsupportedError):
            extend_with_avs(child_scm, [("Y", "Z", "<->")])

    def test_subtraction_removes_direct_contribution(self, triangle):
        # Cov(Z*, X) = Cov(Z, X) - coeff * Var(X), which is what remains of
        # the association once the direct edge is silenced
        ext = extend_with_avs(triangle, [("X", "Z")])
        sigma = covariance(ext)
        base = covariance(triangle)
        expected = base.cov("Z", "X") - triangle.coeffs[Edge("X", "Z")] * base.var("X")
        assert sigma.cov("Z*", "X") == pytest.approx(expected)
        # equal to the target-side channel through the retained edge
        assert expected == pytest.approx(
            triangle.coeffs[Edge("Y", "Z")] * base.cov("Y", "X"))

    def test_estimated_coefficients_close_to_truth(self, triangle):
        table = sample(triangle, 10_000, 77)
        ext = extend_with_avs(triangle, [("X", "Z")], coeffs=table)
        est = -ext.coeffs[Edge("X", "Z*")]
        assert est == pytest.approx(1.0, abs=0.05)

    def test_explicit_coefficients(self, triangle):
        ext = extend_with_avs(triangle, [("X", "Z")], coeffs={Edge("X", "Z"): 0.7})
        assert ext.coeffs[Edge("X", "Z*")] == pytest.approx(-0.7)


class TestFitAndMse:
    def test_regression_recovers_edge(self):
        m = two_node_scm(2.0)
        p = fit_predictor(covariance(m), "Y", ["X"])
        assert p.weights == pytest.approx([2.0])
        assert mse(p, covariance(m)) == pytest.approx(1.0)

    def test_empty_features_predicts_mean(self, triangle):
        p = fit_predictor(covariance(triangle), "Y", [])
        assert p.weights.size == 0
        assert mse(p, covariance(triangle)) == pytest.approx(0.01)

    def test_star_feature_weight(self, triangle):
        ext = extend_with_avs(triangle, [("X", "Z")])
        sigma = covariance(ext)
        p = fit_predictor(sigma, "Y", ["Z*"])
        assert p.weights == pytest.approx([0.5])
        assert mse(p, sigma) == pytest.approx(0.005)

    def test_zero_weights_give_target_variance(self, triangle):
        p = LinearPredictor(("X", "Z"), np.zeros(2), "Y")
        assert mse(p, covariance(triangle)) == pytest.approx(0.01)

    def test_target_cannot_be_feature(self):
        with pytest.raises(SpecError):
            LinearPredictor(("Y",), np.ones(1), "Y")

    def test_missing_feature_raises_keyerror(self, triangle):
        p = LinearPredictor(("Q",), np.ones(1), "Y")
        with pytest.raises(KeyError):
            mse(p, covariance(triangle))

    def test_collinear_features_handled_by_ridge(self, triangle):
        ext = extend_with_avs(triangle, [("X", "Z")])
        sigma = covariance(ext)
        p = fit_predictor(sigma, "Y", ["X", "Z", "Z*"])
        assert np.all(np.isfinite(p.weights))
        # the ridge solution still matches the oracle fit in risk
        oracle = fit_predictor(sigma, "Y", ["X", "Z"])
        assert mse(p, sigma) == pytest.approx(mse(oracle, sigma), rel=1e-6)

    def test_formula_matches_empirical_residuals(self):
        rng = np.random.default_rng(15)
        for _ in range(5):
            m = random_dag_scm(rng, max_nodes=5)
            sigma = covariance(m)
            feats = sorted(v for v in m.nodes if v != m.graph.target)[:3]
            beta = rng.uniform(-2, 2, size=len(feats))
            p = LinearPredictor(tuple(feats), beta, m.graph.target)
            table = sample(m, 10**6, rng.integers(2**31))
            resid = table.column(m.graph.target) - p.predict(table)
            emp = float(np.mean(resid**2))
            assert mse(p, sigma) == pytest.approx(emp, rel=0.01)


class TestOracle:
    def test_oracle_beats_stable_at_source(self, triangle):
        sigma = covariance(triangle)
        oracle = oracle_predictor(triangle)
        stable = predictor_for_spec(triangle, optimal_stable(triangle.graph))
        assert mse(oracle, sigma) < mse(stable.predictor, sigma) == pytest.approx(0.005)

    def test_oracle_equals_stable_when_unstable_coefficient_zero(self, triangle):
        env = triangle.with_coefficients({UNSTABLE: 0.0})
        sigma = covariance(env)
        oracle = oracle_predictor(env, sigma)
        stable = predictor_for_spec(triangle, optimal_stable(triangle.graph))
        assert mse(oracle, sigma) == pytest.approx(mse(stable.predictor, sigma), abs=1e-12)

    def test_oracle_mse_vanishes_for_huge_coefficient(self, triangle):
        env = triangle.with_coefficients({UNSTABLE: 1e3})
        sigma = covariance(env)
        assert mse(oracle_predictor(env, sigma), sigma) < 1e-4 * sigma.var("Y")


class TestCounterfactualWorlds:
    def test_functionals_subtract_deleted_ancestry(self, triangle):
        basis = counterfactual_functionals(triangle, [("Y", "X")])
        iy, ix, iz = (triangle.index_of(v) for v in ("Y", "X", "Z"))
        x_col = basis.matrix[:, ix]
        z_col = basis.matrix[:, iz]
        assert x_col[ix] == 1.0 and x_col[iy] == pytest.approx(-5.0)
        assert z_col[iz] == 1.0 and z_col[iy] == pytest.approx(-5.0)  # via X -> Z

    def test_world_covariance_equals_functional_covariance(self, triangle):
        deleted = [("Y", "X")]
        world = counterfactual_covariance(triangle, deleted)
        basis = counterfactual_functionals(triangle, deleted)
        sigma = covariance(triangle)
        pushed = basis.matrix.T @ sigma.matrix @ basis.matrix
        assert np.allclose(pushed, world.matrix, atol=1e-12)

    def test_bidirected_deletion_zeroes_confounding(self, child_scm):
        world = counterfactual_covariance(child_scm, [("Y", "Z", "<->"), ("Y", "Z")])
        assert world.cov("Y", "Z") == pytest.approx(0.0)


class TestSpecPredictors:
    def test_optimal_realisation_matches_star_regression(self, triangle):
        fitted = predictor_for_spec(triangle, optimal_stable(triangle.graph))
        assert fitted.feature_labels == ("X*", "Z")
        assert dict(zip(fitted.predictor.features, fitted.predictor.weights)) == \
            pytest.approx({"X": -0.5, "Z": 0.5})

    def test_stable_mse_constant_across_environments(self, triangle):
        fitted = predictor_for_spec(triangle, optimal_stable(triangle.graph))
        assert fitted.mse_invariant
        values = []
        for lam in (-10.0, -1.0, 0.0, 5.0, 40.0):
            env = triangle.with_coefficients({UNSTABLE: lam})
            values.append(mse(fitted.predictor, covariance(env)))
        assert np.ptp(values) < 1e-9 * np.mean(values)

    def test_oracle_spec_predictor_is_oracle(self, triangle):
        g = triangle.graph
        spec = level3(g, g.observed - {"Y"}, [])
        fitted = predictor_for_spec(triangle, spec)
        oracle = oracle_predictor(triangle)
        assert fitted.predictor.features == oracle.features
        assert np.allclose(fitted.predictor.weights, oracle.weights)

    def test_unstable_spec_warns_but_computes(self, triangle):
        from shiftstable import level1

        with pytest.warns(UserWarning):
            fitted = predictor_for_spec(triangle, level1({"X"}, "Y"))
        assert np.all(np.isfinite(fitted.predictor.weights))
        assert not fitted.mse_invariant

    def test_level2_equals_level3_conversion_rowwise(self, style_scm):
        from shiftstable import convert_level2_to_level3

        g = style_scm.graph
        s2 = level2(g, {"X"}, {"Z"})
        s3 = convert_level2_to_level3(g, s2)
        f2 = predictor_for_spec(style_scm, s2)
        basis = stable_feature_basis(style_scm, s3)
        weights = basis.fit(covariance(style_scm), "Y")
        table = sample(style_scm, 100_000, 31)
        diff = np.abs(f2.predictor.predict(table) - basis.predict(table, weights))
        assert float(diff.max()) < 1e-9

    def test_stable_realisations_agree_on_random_models(self):
        # deleted-world regression on factual features == regression on the
        # purged star features, composed back to the row
        rng = np.random.default_rng(8)
        done = 0
        while done < 25:
            m = random_dag_scm(rng, max_nodes=5)
            try:
                spec = optimal_stable(m.graph)
            except Exception:
                continue
            fitted = predictor_for_spec(m, spec)
            basis = stable_feature_basis(m, spec)
            weights = basis.fit(covariance(m), m.graph.target)
            composed = basis.compose(weights)
            direct = np.zeros(len(m.nodes))
            for f, w in zip(fitted.predictor.features, fitted.predictor.weights):
                direct[m.index_of(f)] = w
            assert np.max(np.abs(composed - direct)) < 1e-7 * max(
                1.0, np.max(np.abs(direct)))
            done += 1

    def test_stable_spec_constancy_on_random_dag_models(self):
        rng = np.random.default_rng(21)
        done = 0
        while done < 20:
            m = random_dag_scm(rng, max_nodes=5)
            if not m.graph.unstable:
                continue
            try:
                spec = optimal_stable(m.graph)
            except Exception:
                continue
            fitted = predictor_for_spec(m, spec)
            assert fitted.mse_invariant, m.graph
            done += 1

    def test_estimated_mode_close_to_exact(self, triangle):
        spec = optimal_stable(triangle.graph)
        exact = predictor_for_spec(triangle, spec)
        table = sample(triangle, 50_000, 99)
        est = predictor_for_spec(triangle, spec, coeff_source=table)
        assert np.allclose(est.predictor.weights, exact.predictor.weights, atol=0.05)


class TestModelEstimation:
    def test_recovers_coefficients_and_noise(self, triangle):
        table = sample(triangle, 200_000, 13)
        est = fit_scm_from_data(triangle.graph, table)
        for e, v in triangle.coeffs.items():
            assert est.coeffs[e] == pytest.approx(v, abs=0.05)
        for node, v in triangle.noise_var.items():
            assert est.noise_var[node] == pytest.approx(v, rel=0.05)

    def test_recovers_confounding(self, child_scm):
        table = sample(child_scm, 300_000, 14)
        est = fit_scm_from_data(child_scm.graph, table)
        key = Edge("Y", "Z", "bidirected")
        assert est.confound[key] == pytest.approx(0.5, abs=0.02)

    def test_missing_columns_unsupported(self, style_scm):
        table = sample(style_scm, 1000, 1).observed_only()
        with pytest.raises(UnsupportedError):
            fit_scm_from_data(style_scm.graph, table)


class TestStableFeatureBasis:
    def test_triangle_basis_is_purged_feature(self, triangle):
        basis = stable_feature_basis(triangle, optimal_stable(triangle.graph))
        assert basis.ids == ("Z*",)
        col = basis.matrix[:, 0]
        assert col[triangle.index_of("Z")] == 1.0
        assert col[triangle.index_of("X")] == pytest.approx(-1.0)
        assert col[triangle.index_of("Y")] == 0.0

    def test_confounded_child_falls_back_to_composite(self, child_scm):
        basis = stable_feature_basis(child_scm, optimal_stable(child_scm.graph))
        assert basis.ids == ("stable[Y]",)
        fitted = predictor_for_spec(child_scm, optimal_stable(child_scm.graph))
        weights = basis.fit(covariance(child_scm), "Y")
        composed = basis.compose(weights)
        direct = np.zeros(len(child_scm.nodes))
        for f, w in zip(fitted.predictor.features, fitted.predictor.weights):
            direct[child_scm.index_of(f)] = w
        assert np.allclose(composed, direct, atol=1e-9)

    def test_basis_never_reads_target_or_latents(self, style_scm):
        spec = optimal_stable(style_scm.graph)
        basis = stable_feature_basis(style_scm, spec)
        assert basis.support() <= style_scm.graph.observed - {"Y"}
