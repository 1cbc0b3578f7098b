import numpy as np
import pytest

from arcfault.scaling import DegenerateFit, ScalingFit, fit_scaling_law
from arcfault.rng import make_rng


def generate(n_values, a=2.0, alpha=0.37, floor=0.01):
    n = np.asarray(n_values, dtype=np.float64)
    return list(zip(n, a * n ** (-alpha) + floor))


class TestFit:
    def test_noise_free_recovery(self):
        points = generate(np.logspace(np.log10(256), np.log10(32768), 8))
        fit = fit_scaling_law(points)
        assert fit.alpha == pytest.approx(0.37, abs=0.01)
        assert fit.a == pytest.approx(2.0, rel=0.02)
        assert fit.l_inf == pytest.approx(0.01, abs=1e-4)
        assert fit.rmse < 1e-6

    def test_two_points_exact_log_linear(self):
        a, alpha = 1.7, 0.42
        fit = fit_scaling_law([(1.0, a), (10.0, a * 10 ** (-alpha))])
        assert fit.l_inf == 0.0
        assert fit.a == pytest.approx(a, abs=1e-9)
        assert fit.alpha == pytest.approx(alpha, abs=1e-9)

    def test_noisy_recovery_small(self):
        n = np.logspace(2, 6, 8)
        clean = 2.0 * n ** (-0.37) + 0.01
        for seed in range(5):
            rng = make_rng(seed)
            noisy = clean * (1 + 0.05 * rng.uniform(-1, 1, len(clean)))
            fit = fit_scaling_law(list(zip(n, noisy)))
            assert fit.alpha == pytest.approx(0.37, abs=0.05)

    def test_prediction_shape(self):
        fit = fit_scaling_law(generate([100, 1000, 10000, 100000]))
        preds = fit.predict([100, 1000])
        assert preds.shape == (2,)
        assert preds[0] > preds[1]


class TestDegenerate:
    def test_too_few_points(self):
        with pytest.raises(DegenerateFit, match="2 points"):
            fit_scaling_law([(10, 1.0)])

    def test_duplicate_n(self):
        with pytest.raises(DegenerateFit, match="distinct"):
            fit_scaling_law([(10, 1.0), (10, 0.9), (20, 0.8)])

    def test_constant_losses(self):
        with pytest.raises(DegenerateFit, match="equal"):
            fit_scaling_law([(10, 1.0), (100, 1.0), (1000, 1.0)])

    def test_nonpositive_values(self):
        with pytest.raises(DegenerateFit, match="positive"):
            fit_scaling_law([(10, 1.0), (100, -0.5)])

    def test_increasing_losses_rejected_by_validation(self):
        with pytest.raises(DegenerateFit):
            fit_scaling_law([(10, 0.1), (100, 0.5), (1000, 2.0), (10000, 9.0)])

    def test_field_constraints(self):
        with pytest.raises(DegenerateFit):
            ScalingFit(a=-1.0, alpha=0.5, l_inf=0.0, rmse=0.0)
        with pytest.raises(DegenerateFit):
            ScalingFit(a=1.0, alpha=0.0, l_inf=0.0, rmse=0.0)
