import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eqmatch.data import default_mixture, sample_data
from eqmatch.evaluation import (BoundCheckResult, EvalReport, QuadraticEnergy,
                                append_reports, auroc, component_energy,
                                config_fingerprint, convergence_bound_check,
                                grad_norm_at_data, ledger_has,
                                local_minima_membership, mmd,
                                mmd_permutation_null, mode_coverage,
                                nearest_neighbor_audit, partial_noise_sweep)
from eqmatch.model import ModelConfig, init_model
from eqmatch.sampler import FunctionField, SamplerConfig, sample
from test_model import identity_model


def nearest_point_field(points: np.ndarray) -> FunctionField:
    """Attraction toward the closest anchor: minima exactly at the anchors."""
    pts = np.asarray(points, dtype=np.float64)

    def fn(x):
        d = ((x[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        return x - pts[np.argmin(d, axis=1)]

    return FunctionField(fn, dim=pts.shape[1])


class TestGradNorms:
    def test_zero_model_all_zero(self, rng):
        m = init_model(ModelConfig(input_dim=2, hidden=(8,)))
        stats = grad_norm_at_data(m, rng.standard_normal((20, 2)))
        assert stats["at_data"].mean == 0.0
        assert stats["at_half_corrupted"].mean == 0.0

    def test_linear_field_zero_at_origin(self):
        stats = grad_norm_at_data(FunctionField(lambda x: x), np.zeros((5, 2)))
        assert stats["at_data"].mean == 0.0


class TestLocalMinima:
    def test_anchor_field_membership_is_one(self):
        anchors = np.array([[3.0, 0.0], [-3.0, 0.0], [0.0, 3.0]])
        frac = local_minima_membership(
            nearest_point_field(anchors), anchors, n_inits=256, radius=0.25,
            config=SamplerConfig(method="adaptive", eta=0.2, g_min=1e-6, max_steps=500),
            seed=1)
        assert frac == 1.0

    def test_zero_field_matches_ball_measure(self):
        """With a zero field the endpoints are the inits, so the fraction is
        exactly the empirical ball measure of those same inits."""
        data = np.array([[0.5, 0.0], [-1.0, 1.0]])
        radius, n, seed = 0.8, 2048, 7
        frac = local_minima_membership(
            FunctionField(np.zeros_like), data, n_inits=n, radius=radius,
            config=SamplerConfig(method="adaptive", eta=0.1, g_min=1e-9, max_steps=10),
            seed=seed)
        inits = np.random.default_rng(seed).standard_normal((n, 2))
        d = np.sqrt(((inits[:, None] - data[None]) ** 2).sum(axis=2)).min(axis=1)
        assert frac == pytest.approx(np.mean(d <= radius), abs=0)


class TestConvergenceBound:
    def test_isotropic_one_step(self, rng):
        quad = QuadraticEnergy(np.eye(2))
        res = convergence_bound_check(quad, eta=1.0, horizons=[1, 10],
                                      x0s=rng.standard_normal((20, 2)))
        assert res.passed and res.worst_slack >= 0.0

    def test_anisotropic_many_horizons(self, rng):
        quad = QuadraticEnergy(np.diag([1.0, 4.0]))
        res = convergence_bound_check(quad, eta=0.25, horizons=[1, 10, 100],
                                      x0s=rng.standard_normal((50, 2)))
        assert res.passed

    def test_eta_zero_trivially_passes_flagged(self, rng):
        res = convergence_bound_check(QuadraticEnergy(np.eye(2)), eta=0.0,
                                      horizons=[10], x0s=rng.standard_normal((3, 2)))
        assert res.passed and res.trivial

    def test_eta_above_smoothness_rejected(self, rng):
        with pytest.raises(ValueError, match="1/L"):
            convergence_bound_check(QuadraticEnergy(np.diag([1.0, 4.0])), eta=0.3,
                                    horizons=[10], x0s=rng.standard_normal((3, 2)))

    def test_never_fails_on_random_psd(self):
        """The bound is a theorem for exact gradients; random PSD energies
        with eta <= 1/L can never violate it."""
        for seed in range(25):
            rng = np.random.default_rng(seed)
            b = rng.standard_normal((2, 2))
            quad = QuadraticEnergy(b @ b.T + 0.1 * np.eye(2))
            eta = float(rng.uniform(0.05, 1.0)) / quad.L
            res = convergence_bound_check(quad, eta=eta, horizons=[1, 10, 100],
                                          x0s=rng.standard_normal((10, 2)) * 3)
            assert res.passed, seed

    def test_invalid_quadratics_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            QuadraticEnergy([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="definite"):
            QuadraticEnergy([[-1.0, 0.0], [0.0, 1.0]])


class TestMMD:
    def test_self_mmd_non_positive(self, rng):
        x = rng.standard_normal((200, 2))
        assert mmd(x, x) <= 1e-12

    def test_matching_distributions_within_null(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((1000, 2))
        y = rng.standard_normal((1000, 2))
        observed = mmd(x, y)
        null = mmd_permutation_null(x, y, n_permutations=100, seed=1)
        assert abs(observed) < 3.0 * null.std() + abs(null.mean())

    def test_disjoint_clusters_dominate_null(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((400, 2))
        y = rng.standard_normal((400, 2)) + 10.0
        observed = mmd(x, y)
        null = mmd_permutation_null(x, y, n_permutations=100, seed=2)
        assert observed > null.mean() + 10.0 * null.std()

    def test_symmetry_exact(self, rng):
        a = rng.standard_normal((150, 2))
        b = rng.standard_normal((130, 2)) + 0.3
        assert mmd(a, b) == mmd(b, a)

    def test_small_sets_rejected(self):
        with pytest.raises(ValueError):
            mmd(np.zeros((1, 2)), np.zeros((5, 2)))


class TestModeCoverage:
    def test_samples_equal_modes(self):
        modes = np.array([[0.0, 0.0], [4.0, 4.0]])
        assert mode_coverage(modes, modes, 0.1) == (1.0, 1.0)

    def test_far_samples(self):
        modes = np.array([[0.0, 0.0]])
        samples = np.full((10, 2), 50.0)
        assert mode_coverage(samples, modes, 1.0) == (0.0, 0.0)

    def test_half_modes_hit(self):
        modes = np.array([[0.0, 0.0], [10.0, 0.0]])
        samples = np.array([[0.1, 0.0], [0.0, 0.1]])
        covered, in_mode = mode_coverage(samples, modes, 0.5)
        assert covered == 0.5 and in_mode == 1.0

    def test_empty_modes_rejected(self):
        with pytest.raises(ValueError):
            mode_coverage(np.zeros((2, 2)), np.zeros((0, 2)), 1.0)


class TestAUROC:
    def test_perfect_separation(self):
        assert auroc([0.0, 0.1, 0.2], [1.0, 2.0, 3.0]) == 1.0

    def test_identical_scores_half(self):
        assert auroc([1.0, 1.0], [1.0, 1.0]) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            auroc([], [1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_invariant_under_monotone_transforms(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(40)
        b = rng.standard_normal(35) + 0.5
        base = auroc(a, b)
        for f in (lambda s: 3.0 * s + 7.0, np.tanh, lambda s: s ** 3):
            assert auroc(f(np.asarray(a)), f(np.asarray(b))) == pytest.approx(base, abs=1e-15)


class TestNearestNeighbors:
    def test_exact_match_distance_zero(self):
        train = np.array([[1.0, 2.0], [5.0, 5.0]])
        d = nearest_neighbor_audit(np.array([[1.0, 2.0]]), train, k=1)
        assert d[0, 0] == 0.0

    def test_k_too_large(self):
        with pytest.raises(ValueError, match="exceeds"):
            nearest_neighbor_audit(np.zeros((1, 2)), np.zeros((3, 2)), k=4)

    def test_against_bruteforce_oracle(self, rng):
        train = rng.standard_normal((50, 2))
        queries = rng.standard_normal((100, 2))
        got = nearest_neighbor_audit(queries, train, k=3)
        for i, q in enumerate(queries):
            d = sorted(float(((q - t) ** 2).sum()) for t in train)
            np.testing.assert_allclose(got[i], d[:3], rtol=1e-12)


class TestPartialNoiseSweep:
    def test_gamma_zero_equals_standard_generation(self, rng):
        field = FunctionField(lambda x: x)
        holdout = rng.standard_normal((120, 2))
        reference = rng.standard_normal((120, 2))
        config = SamplerConfig(eta=0.2, steps=10)
        curves = partial_noise_sweep(field, field, [0.0], config, holdout,
                                     reference, seed=3)
        eps = np.random.default_rng(3).standard_normal(holdout.shape)
        direct = max(0.0, mmd(sample(field, eps, config).final, reference))
        assert curves["model"][0] == direct == curves["baseline"][0]


class TestLedger:
    def test_component_energy_identity(self, rng):
        m = identity_model()
        x = rng.standard_normal((6, 2))
        np.testing.assert_allclose(component_energy(m, x), (x * x).sum(axis=1),
                                   atol=1e-12)

    def test_append_and_lookup(self, tmp_path):
        path = tmp_path / "ledger.csv"
        fp = config_fingerprint({"seed": 1, "metric": "mmd"})
        append_reports(path, [EvalReport("mmd", 0.25, fp, 1, aux={"n": 10})])
        assert ledger_has(path, fp)
        assert ledger_has(path, fp, "mmd")
        assert not ledger_has(path, fp, "auroc")
        assert not ledger_has(path, "deadbeef")

    def test_fingerprint_stable_and_order_free(self):
        assert config_fingerprint({"a": 1, "b": 2}) == config_fingerprint({"b": 2, "a": 1})

    def test_non_finite_metric_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            EvalReport("mmd", float("nan"), "ab", 0)
