import numpy as np
import pytest
from scipy import integrate

from gpatt.core.errors import MetricError, ParameterError, ShapeError
from gpatt.schemas.grid import Grid
from gpatt.schemas.kernel import SMComponent, SMKernel1D, SMPKernel
from gpatt.schemas.results import PredictiveResult
from gpatt.services.evaluation import (
    LOG_FLOOR,
    export_spectrum,
    kernel_recovery_compare,
    kernel_spectrum,
    metric_report,
    msll,
    smse,
)
from gpatt.services.grid import linear_index
from gpatt.services.kernels import SEKernel1D, build_from_spec, k_sm_1d, se_spectral_density, smoother_kernel
from gpatt.services.synthetic import (
    centered_hole,
    middle_slices_mask,
    movie,
    movie_kernel,
    sample_grid_gp,
    synthetic_texture,
)


def single_sm(mu=0.25, weight_sq=2.0, var_freq=0.01):
    return SMKernel1D(components=[SMComponent(weight_sq=weight_sq, mean_freq=mu, var_freq=var_freq)])


def test_trivial_predictor_scores(rng):
    targets = rng.standard_normal(50)
    assert smse(np.full(50, targets.mean()), targets) == pytest.approx(1.0)
    train = rng.normal(2.0, 3.0, size=200)
    m, v = float(np.mean(train)), float(np.var(train))
    assert msll(np.full(50, m), np.full(50, v), targets, m, v) == pytest.approx(0.0, abs=1e-12)


def test_perfect_predictor_has_zero_smse(rng):
    targets = rng.standard_normal(10)
    assert smse(targets, targets) == 0.0


def test_metric_errors():
    with pytest.raises(MetricError):
        smse([], [])
    with pytest.raises(MetricError):
        smse([1.0, 2.0], [3.0, 3.0])
    with pytest.raises(ShapeError):
        smse([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(MetricError):
        msll([0.0, 0.0], [1.0, 0.0], [1.0, 2.0], 0.0, 1.0)


def test_metric_report_adds_noise_and_flags_partial_variance(rng):
    truth = rng.standard_normal(20)
    train_values = rng.standard_normal(30)
    m, v = float(np.mean(train_values)), float(np.var(train_values))
    test = np.array([2, 5, 9, 11])
    prediction = PredictiveResult(
        mean=np.full(20, m), variance_indices=[2, 5, 9, 11],
        variance=np.full(4, v - 0.25), noise_var=0.25)
    report = metric_report(prediction, truth, test, train_values)
    assert report.msll == pytest.approx(0.0, abs=1e-12)
    assert report.n_test == 4
    assert not report.variance_subsampled

    partial = prediction.model_copy(update={"variance_indices": [2, 9], "variance": np.full(2, v - 0.25)})
    assert metric_report(partial, truth, test, train_values).variance_subsampled
    empty = prediction.model_copy(update={"variance_indices": [], "variance": np.zeros(0)})
    with pytest.raises(MetricError):
        metric_report(empty, truth, test, train_values)


def test_spectrum_peaks_at_mean_frequency():
    freqs = np.linspace(0.0, 1.0, 1001)
    log_s = export_spectrum(single_sm(), freqs)
    assert freqs[np.argmax(log_s)] == pytest.approx(0.25, abs=1e-3)


def test_spectrum_integrates_to_weight():
    freqs = np.linspace(-3.0, 3.0, 60001)
    density = np.exp(export_spectrum(single_sm(), freqs))
    assert integrate.trapezoid(density, freqs) == pytest.approx(2.0, rel=1e-6)


def test_spectrum_floor():
    log_s = export_spectrum(single_sm(var_freq=1e-4), np.array([0.25, 40.0]))
    assert np.isfinite(log_s).all()
    assert log_s[1] == LOG_FLOOR


def test_kernel_spectrum_uses_closed_form():
    kernel = SEKernel1D([np.log(1.5)])
    freqs = np.array([0.0, 0.1, 0.3])
    np.testing.assert_allclose(np.exp(kernel_spectrum(kernel, kernel.default_raw, freqs)),
                               se_spectral_density(freqs, 1.5), rtol=1e-12)


def test_recovery_against_itself_is_exact():
    dims = [single_sm(0.1), single_sm(0.3, 1.0, 0.02)]
    learned = SMPKernel(per_dim=dims)
    taus = [np.linspace(0.0, 5.0, 50)] * 2
    truth = [lambda t, d=d: k_sm_1d(t, d) for d in dims]
    slices, gaps = kernel_recovery_compare(truth, learned, taus)
    assert gaps == pytest.approx([0.0, 0.0], abs=1e-12)
    assert slices[0].learned_values[0] == pytest.approx(1.0)
    assert slices[1].dimension == 1


def test_recovery_without_truth_and_shape_checks():
    learned = SMPKernel(per_dim=[single_sm(), single_sm()])
    taus = [np.linspace(0.0, 2.0, 5)] * 2
    slices, gaps = kernel_recovery_compare([None, None], learned, taus)
    assert gaps == []
    assert slices[0].true_values is None and slices[0].discrepancy is None
    with pytest.raises(ShapeError):
        kernel_recovery_compare([None], learned, taus)


def test_recovery_of_different_kernel_reports_gap():
    learned = SMPKernel(per_dim=[single_sm(0.1)])
    other = SEKernel1D([np.log(0.3)])
    _, gaps = kernel_recovery_compare([other], learned, [np.linspace(0.0, 5.0, 50)])
    assert gaps[0] > 0.1


def test_sampling_is_reproducible():
    grid = Grid(axes=[np.arange(6.0), np.arange(5.0)])
    kernel = smoother_kernel("se", 2)
    first = sample_grid_gp(kernel, grid, 0.01, np.random.default_rng(3))
    second = sample_grid_gp(kernel, grid, 0.01, np.random.default_rng(3))
    np.testing.assert_array_equal(first.values, second.values)
    assert first.W == 0
    with pytest.raises(ParameterError):
        sample_grid_gp(kernel, grid, -1.0, np.random.default_rng(3))
    with pytest.raises(ShapeError):
        sample_grid_gp(smoother_kernel("se", 3), grid, 0.0, np.random.default_rng(3))


def test_sample_variance_matches_prior():
    grid = Grid(axes=[np.arange(40.0)])
    kernel = smoother_kernel("se", 1)
    rng = np.random.default_rng(9)
    draws = np.stack([sample_grid_gp(kernel, grid, 0.0, rng).values for _ in range(400)])
    assert np.mean(draws.var(axis=0)) == pytest.approx(1.0, abs=0.15)


def test_sample_covariance_matches_kernel():
    grid = Grid(axes=[np.arange(6.0), np.arange(5.0)])
    kernel = smoother_kernel("se", 2)
    raw = np.array([0.0, np.log(2.0), np.log(1.5)])
    rng = np.random.default_rng(12)
    draws = np.stack([sample_grid_gp(kernel, grid, 0.0, rng, raw=raw).values for _ in range(500)])
    i, j = linear_index([1, 1], grid), linear_index([3, 2], grid)
    k_ij = float(kernel.value(np.array([[2.0, 1.0]]), raw)[0])
    k_ii = k_jj = kernel.k0(raw)
    estimate = float(np.mean(draws[:, i] * draws[:, j]))
    standard_error = np.sqrt((k_ii * k_jj + k_ij ** 2) / 500)
    assert abs(estimate - k_ij) <= 4 * standard_error


def test_movie_kernel_structure(rng):
    spec = movie_kernel([29.0, 29.0, 29.0])
    kernel = build_from_spec(spec)
    assert kernel.P == 3
    np.testing.assert_allclose([k.k0(r) for k, r in zip(kernel.per_dim, kernel.split(kernel.default_raw))],
                               [1.0, 1.0, 1.3])
    spec_out, obs = movie((6, 5, 4), 0.01, rng)
    assert obs.grid.shape == (6, 5, 4)
    assert spec_out.type == "separable"
    with pytest.raises(ShapeError):
        movie_kernel([1.0, 2.0])


def test_middle_slices_mask():
    grid = Grid(axes=[np.arange(4.0), np.arange(5.0), np.arange(6.0)])
    mask = middle_slices_mask(grid, 2)
    assert mask.shape == (grid.N,)
    assert int((~mask).sum()) == 4 * 5 * 2
    assert not mask[linear_index([1, 3, 2], grid)]
    assert not mask[linear_index([0, 0, 3], grid)]
    assert mask[linear_index([0, 0, 1], grid)]
    with pytest.raises(ShapeError):
        middle_slices_mask(grid, 6)


def test_centered_hole():
    mask = centered_hole((10, 10), 0.25)
    assert int((~mask).sum()) == 25
    assert not mask[5, 5]
    assert mask[0, 0]
    assert centered_hole((4, 4), 0.0).all()
    with pytest.raises(ShapeError):
        centered_hole((4, 4), 1.0)


def test_synthetic_texture_is_seeded():
    a = synthetic_texture((20, 30), np.random.default_rng(1))
    b = synthetic_texture((20, 30), np.random.default_rng(1))
    assert a.shape == (20, 30)
    np.testing.assert_array_equal(a, b)
    assert a.std() > 0.1
