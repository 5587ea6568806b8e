import logging

import numpy as np
import pytest

from gpatt.core.config import settings
from gpatt.core.errors import ConvergenceError, ShapeError
from gpatt.schemas.grid import Grid, ObservationSet
from gpatt.schemas.results import NoiseModel
from gpatt.services.inference import (
    GridGP,
    covariance_operator,
    evaluate,
    exact_complexity,
    log_marginal_likelihood,
    pcg_solve,
    predict_mean,
    predict_variance,
)
from gpatt.services.kernels import smoother_kernel, smp_kernel
from gpatt.services.kronecker import apply_inverse_full_grid, eigendecompose
from oracles import dense_covariance, dense_gp, holed

TIGHT = 1e-11
SE_RAW = np.array([0.2, 0.3, 0.1])


def unit_grid(n1, n2):
    return Grid(axes=[np.arange(float(n1)), np.arange(float(n2))])


def six_by_six_with_holes(rng, holes=10):
    grid = unit_grid(6, 6)
    mask = np.ones(grid.N, dtype=bool)
    mask[rng.choice(grid.N, size=holes, replace=False)] = False
    return ObservationSet(grid=grid, values=rng.standard_normal(grid.N), mask=mask)


def smp_raw(rng, P=2, A=2):
    rows = []
    for _ in range(P * A):
        rows.append([np.log(rng.uniform(0.3, 1.0)), np.log(rng.uniform(0.05, 0.3)), np.log(rng.uniform(0.005, 0.02))])
    return np.asarray(rows).ravel()


def setup(kernel, raw, obs, noise_var):
    K_op = covariance_operator(kernel, obs, raw)
    noise = NoiseModel(sigma_sq=noise_var, mask=obs.mask)
    K = dense_covariance(kernel, obs.grid, raw)
    return K_op, noise, dense_gp(K, obs.values, obs.mask, noise_var)


def test_full_grid_solve_matches_eigen_solve(rng):
    grid = unit_grid(5, 5)
    obs = ObservationSet(grid=grid, values=rng.standard_normal(25), mask=np.ones(25, dtype=bool))
    K_op, noise, _ = setup(smoother_kernel("se", 2), SE_RAW, obs, 0.1)
    solve = pcg_solve(K_op, noise, obs, tol=TIGHT)
    expected = apply_inverse_full_grid(eigendecompose(K_op), 0.1, obs.values)
    np.testing.assert_allclose(solve.alpha, expected, rtol=1e-6, atol=1e-10)
    assert solve.final_residual <= TIGHT


def test_holed_solve_matches_dense(rng):
    obs = six_by_six_with_holes(rng)
    K_op, noise, dense = setup(smoother_kernel("se", 2), SE_RAW, obs, 0.1)
    solve = pcg_solve(K_op, noise, obs, tol=TIGHT)
    np.testing.assert_allclose(solve.alpha[obs.mask], dense["alpha"], rtol=1e-6, atol=1e-10)
    np.testing.assert_array_equal(solve.alpha[~obs.mask], 0.0)


def test_zero_targets_need_no_iterations():
    grid = unit_grid(4, 3)
    obs = ObservationSet(grid=grid, values=np.zeros(12), mask=np.ones(12, dtype=bool))
    K_op, noise, _ = setup(smoother_kernel("se", 2), SE_RAW, obs, 0.1)
    solve = pcg_solve(K_op, noise, obs)
    assert solve.iterations == 0
    np.testing.assert_array_equal(solve.alpha, 0.0)
    np.testing.assert_array_equal(predict_mean(K_op, solve), 0.0)


def test_iteration_limit_raises_with_history(rng):
    obs = six_by_six_with_holes(rng)
    K_op, noise, _ = setup(smoother_kernel("se", 2), SE_RAW, obs, 0.01)
    with pytest.raises(ConvergenceError) as info:
        pcg_solve(K_op, noise, obs, tol=TIGHT, max_iter=1)
    assert len(info.value.residual_history) >= 2


def test_mean_and_variance_match_dense(rng):
    obs = six_by_six_with_holes(rng)
    K_op, noise, dense = setup(smoother_kernel("se", 2), SE_RAW, obs, 0.1)
    solve = pcg_solve(K_op, noise, obs, tol=TIGHT)
    np.testing.assert_allclose(predict_mean(K_op, solve), dense["mean"], rtol=1e-6, atol=1e-8)
    nodes = np.arange(obs.N)
    var = predict_variance(K_op, noise, nodes, tol=TIGHT, batch=7)
    np.testing.assert_allclose(var, dense["var"], atol=1e-5)


@pytest.mark.parametrize("seed", range(50))
def test_imaginary_observations_are_neutral(seed):
    rng = np.random.default_rng(seed)
    P = 1 + seed % 3
    shape = tuple(int(n) for n in rng.integers(2, {1: 30, 2: 10, 3: 5}[P] + 1, size=P))
    grid = Grid(axes=[np.cumsum(rng.uniform(0.5, 1.5, size=n)) for n in shape])
    obs = holed(rng, grid, 0.35)
    kernel = smp_kernel(len(shape), 2)
    raw = smp_raw(rng, len(shape), 2)
    K_op, noise, dense = setup(kernel, raw, obs, 0.05)
    solve = pcg_solve(K_op, noise, obs, tol=TIGHT)
    np.testing.assert_allclose(predict_mean(K_op, solve), dense["mean"], atol=1e-7)
    var = predict_variance(K_op, noise, np.flatnonzero(~obs.mask), tol=TIGHT)
    np.testing.assert_allclose(var, dense["var"][~obs.mask], atol=1e-7)


@pytest.mark.parametrize("shape", [(40, 25), (100, 100)])
@pytest.mark.parametrize("noise_var", [0.1, 1.0])
def test_pcg_iterations_stay_small_when_noise_is_not_tiny(shape, noise_var):
    rng = np.random.default_rng(7)
    grid = Grid(axes=[np.arange(float(n)) for n in shape])
    mask = rng.uniform(size=grid.N) > 0.2
    obs = ObservationSet(grid=grid, values=rng.standard_normal(grid.N), mask=mask)
    kernel = smoother_kernel("se", 2)
    raw = np.zeros(3)
    K_op = covariance_operator(kernel, obs, raw)
    solve = pcg_solve(K_op, NoiseModel(sigma_sq=noise_var * kernel.k0(raw), mask=mask), obs, tol=1e-6)
    assert 0 < solve.iterations < 100


def test_variance_limits(rng):
    obs = six_by_six_with_holes(rng)
    kernel = smoother_kernel("se", 2)
    # lengthscale far below the spacing: the prior comes back at the holes
    short = np.array([0.0, np.log(0.05), np.log(0.05)])
    K_op, noise, _ = setup(kernel, short, obs, 0.1)
    var = predict_variance(K_op, noise, np.flatnonzero(~obs.mask), tol=1e-8)
    np.testing.assert_allclose(var, 1.0, atol=1e-6)
    # nearly noiseless: the data pin the posterior at training nodes
    K_op, noise, _ = setup(kernel, SE_RAW, obs, 1e-4)
    k0 = kernel.k0(SE_RAW)
    var = predict_variance(K_op, noise, np.flatnonzero(obs.mask)[:5], tol=1e-12)
    assert np.all(var <= 1e-3 * k0)
    assert np.all(var >= 0.0)


def test_full_grid_likelihood_is_exact(rng):
    grid = unit_grid(5, 5)
    obs = ObservationSet(grid=grid, values=rng.standard_normal(25), mask=np.ones(25, dtype=bool))
    K_op, noise, dense = setup(smoother_kernel("se", 2), SE_RAW, obs, 0.1)
    ml = log_marginal_likelihood(K_op, noise, obs, tol=TIGHT)
    assert ml.value == pytest.approx(dense["lml"], abs=1e-6)
    assert ml.complexity == pytest.approx(dense["logdet"], abs=1e-8)
    assert ml.value == pytest.approx(-0.5 * (ml.model_fit + ml.complexity) - ml.noise_const)
    assert ml.clamped_eigenvalues == 0


def test_holed_likelihood_fit_is_exact_and_gap_is_measured(rng):
    obs = six_by_six_with_holes(rng)
    K_op, noise, dense = setup(smoother_kernel("se", 2), SE_RAW, obs, 0.1)
    ml = log_marginal_likelihood(K_op, noise, obs, tol=TIGHT)
    y_M = obs.observed
    assert ml.model_fit == pytest.approx(float(y_M @ dense["alpha"]), rel=1e-6)
    assert exact_complexity(K_op, noise) == pytest.approx(dense["logdet"], abs=1e-8)
    assert np.isfinite(ml.complexity)


def test_complete_grid_skips_conjugate_gradients(rng):
    grid = unit_grid(6, 7)
    obs = ObservationSet(grid=grid, values=rng.standard_normal(grid.N), mask=np.ones(grid.N, dtype=bool))
    K_op, noise, dense = setup(smp_kernel(2, 2), smp_raw(rng), obs, 0.05)
    solve = pcg_solve(K_op, noise, obs, tol=1e-8)
    assert solve.iterations == 0
    assert solve.final_residual < 1e-10
    np.testing.assert_allclose(solve.alpha, dense["alpha"], rtol=1e-8, atol=1e-10)


def test_complexity_gap_is_recorded_on_half_missing_grid(rng, caplog):
    grid = unit_grid(8, 8)
    mask = np.zeros(grid.N, dtype=bool)
    mask[rng.choice(grid.N, size=32, replace=False)] = True
    obs = ObservationSet(grid=grid, values=rng.standard_normal(grid.N), mask=mask)
    K_op, noise, dense = setup(smoother_kernel("se", 2), SE_RAW, obs, 0.1)
    with caplog.at_level(logging.DEBUG, logger="gpatt"):
        ml = log_marginal_likelihood(K_op, noise, obs, tol=TIGHT)
    assert ml.complexity_exact == pytest.approx(dense["logdet"], abs=1e-8)
    assert ml.complexity_gap == pytest.approx(ml.complexity - dense["logdet"])
    assert abs(ml.complexity_gap) <= 0.5 * obs.M
    events = [r for r in caplog.records if getattr(r, "gpatt_event", None) == "complexity_gap"]
    assert len(events) == 1
    assert events[0].gpatt_fields["M"] == 32


def test_complexity_check_can_be_switched_off(rng):
    obs = six_by_six_with_holes(rng)
    K_op, noise, _ = setup(smoother_kernel("se", 2), SE_RAW, obs, 0.1)
    assert log_marginal_likelihood(K_op, noise, obs, tol=TIGHT, check_limit=0).complexity_exact is None
    full = ObservationSet(grid=obs.grid, values=obs.values, mask=np.ones(obs.N, dtype=bool))
    ml = log_marginal_likelihood(K_op, NoiseModel(sigma_sq=0.1, mask=full.mask), full)
    assert ml.complexity_exact is None
    assert ml.complexity_gap is None


def test_streamed_full_grid_complexity_matches_enumeration(rng, monkeypatch):
    grid = Grid(axes=[np.arange(3.0), np.arange(4.0), np.arange(5.0)])
    obs = ObservationSet(grid=grid, values=rng.standard_normal(grid.N), mask=np.ones(grid.N, dtype=bool))
    kernel = smp_kernel(3, 2)
    hypers = kernel.hypers(0.1, smp_raw(rng, 3, 2))
    enumerated, grad, _ = evaluate(kernel, hypers, obs)
    monkeypatch.setattr(settings, "eigen_enumeration_limit", 1)
    streamed, streamed_grad, _ = evaluate(kernel, hypers, obs)
    assert streamed.complexity == pytest.approx(enumerated.complexity, rel=1e-10, abs=1e-9)
    assert streamed.value == pytest.approx(enumerated.value, rel=1e-10, abs=1e-9)
    np.testing.assert_allclose(streamed_grad, grad, rtol=1e-8, atol=1e-9)


def test_pure_noise_limit(rng):
    obs = six_by_six_with_holes(rng)
    kernel = smp_kernel(2, 1)
    raw = np.array([-30.0, np.log(0.1), np.log(0.01)] * 2)
    K_op, noise, _ = setup(kernel, raw, obs, 0.5)
    ml = log_marginal_likelihood(K_op, noise, obs, tol=TIGHT)
    y = obs.observed
    expected = -0.5 * (y @ y / 0.5 + obs.M * np.log(0.5) + obs.M * np.log(2 * np.pi))
    assert ml.value == pytest.approx(expected, rel=1e-8)


def test_likelihood_ignores_component_order(rng):
    obs = six_by_six_with_holes(rng)
    kernel = smp_kernel(2, 2)
    raw = smp_raw(rng)
    swapped = raw.reshape(2, 2, 3)[:, ::-1, :].ravel()
    first = log_marginal_likelihood(*setup(kernel, raw, obs, 0.1)[:2], obs, tol=TIGHT)
    second = log_marginal_likelihood(*setup(kernel, swapped, obs, 0.1)[:2], obs, tol=TIGHT)
    assert first.value == pytest.approx(second.value, rel=1e-8)


def test_shrinking_a_weight_lowers_complexity(rng):
    obs = six_by_six_with_holes(rng)
    kernel = smp_kernel(2, 2)
    raw = smp_raw(rng)
    shrunk = raw.copy()
    shrunk[0] -= 2.0
    before = log_marginal_likelihood(*setup(kernel, raw, obs, 0.1)[:2], obs, tol=TIGHT)
    after = log_marginal_likelihood(*setup(kernel, shrunk, obs, 0.1)[:2], obs, tol=TIGHT)
    assert after.complexity < before.complexity


def _finite_difference(kernel, hypers, obs, h=1e-5):
    vector = hypers.vector()
    out = np.zeros_like(vector)
    for i in range(vector.size):
        step = np.zeros_like(vector)
        step[i] = h
        up = evaluate(kernel, hypers.with_vector(vector + step), obs, tol=TIGHT)[0].value
        down = evaluate(kernel, hypers.with_vector(vector - step), obs, tol=TIGHT)[0].value
        out[i] = (up - down) / (2 * h)
    return out


GRADIENT_SHAPES = [(9,), (5, 5), (3, 3, 4)]


@pytest.mark.parametrize("case", range(20))
def test_gradient_matches_finite_differences(case):
    rng = np.random.default_rng(100 + case)
    shape = GRADIENT_SHAPES[case % 3]
    A = 1 + case % 2
    grid = Grid(axes=[np.arange(float(n)) for n in shape])
    mask = np.ones(grid.N, dtype=bool)
    holes = 0 if case < 3 else int(rng.integers(1, grid.N // 3))
    mask[rng.choice(grid.N, size=holes, replace=False)] = False
    obs = ObservationSet(grid=grid, values=rng.standard_normal(grid.N), mask=mask)
    kernel = smp_kernel(len(shape), A)
    hypers = kernel.hypers(float(rng.uniform(0.05, 0.3)), smp_raw(rng, len(shape), A))
    _, grad, _ = evaluate(kernel, hypers, obs, tol=TIGHT)
    numeric = _finite_difference(kernel, hypers, obs)
    assert np.all(np.abs(grad - numeric) <= np.maximum(1e-4, 1e-2 * np.abs(grad)))


def test_smoother_gradient_matches_finite_differences(rng):
    obs = six_by_six_with_holes(rng, holes=5)
    kernel = smoother_kernel("rq", 2)
    hypers = kernel.hypers(0.2, np.array([0.3, 0.1, 0.4, 0.2, 0.3]))
    assert hypers.raw.size == kernel.n_params
    _, grad, _ = evaluate(kernel, hypers, obs, tol=TIGHT)
    numeric = _finite_difference(kernel, hypers, obs)
    assert np.all(np.abs(grad - numeric) <= np.maximum(1e-4, 1e-2 * np.abs(grad)))


def test_grid_gp_warm_starts_and_predicts(rng):
    obs = six_by_six_with_holes(rng, holes=12)
    kernel = smoother_kernel("se", 2)
    model = GridGP(kernel, obs, tol=1e-10)
    hypers = kernel.hypers(0.1, SE_RAW)
    first, _ = model.evaluate(hypers)
    second, _ = model.evaluate(hypers)
    assert model.evaluations == 2
    assert second.value == pytest.approx(first.value, rel=1e-8)

    holes = np.flatnonzero(~obs.mask)
    full = model.predict(hypers, holes)
    assert not full.variance_subsampled
    assert full.variance_indices == holes.tolist()
    capped = model.predict(hypers, holes, variance_budget=5, seed=3)
    assert capped.variance_subsampled
    assert len(capped.variance_indices) == 5
    assert set(capped.variance_indices) <= set(holes.tolist())
    again = model.predict(hypers, holes, variance_budget=5, seed=3)
    assert again.variance_indices == capped.variance_indices
    lookup = dict(zip(full.variance_indices, full.variance))
    np.testing.assert_allclose(capped.variance, [lookup[i] for i in capped.variance_indices], rtol=1e-6)


def test_grid_gp_rejects_dimension_mismatch(rng):
    obs = six_by_six_with_holes(rng)
    with pytest.raises(ShapeError):
        GridGP(smoother_kernel("se", 3), obs)
