"""Dense reference computations and random problem generators for the tests."""
import numpy as np
from scipy import linalg

from gpatt.schemas.grid import Grid, ObservationSet
from gpatt.services.grid import grid_points


def random_grid(rng, shape):
    """Axes with jittered, strictly increasing coordinates."""
    return Grid(axes=[np.cumsum(rng.uniform(0.5, 1.5, size=n)) for n in shape])


def holed(rng, grid, fraction=0.3):
    """Random observation set with roughly ``fraction`` of the nodes missing."""
    mask = rng.uniform(size=grid.N) > fraction
    mask[rng.integers(grid.N)] = True
    return ObservationSet(grid=grid, values=rng.standard_normal(grid.N), mask=mask)


def dense_covariance(kernel, grid, raw):
    """Dense N x N prior covariance in flattening order."""
    X = grid_points(grid)
    return kernel.value(X[:, None, :] - X[None, :, :], raw)


def dense_gp(K, y, mask, noise_var):
    """Exact GP on the observed subset: alpha on M points, mean and latent variance on all N."""
    obs = np.flatnonzero(mask)
    K_MM = K[np.ix_(obs, obs)] + noise_var * np.eye(obs.size)
    chol = linalg.cho_factor(K_MM, lower=True)
    alpha = linalg.cho_solve(chol, y[obs])
    K_NM = K[:, obs]
    mean = K_NM @ alpha
    var = np.diag(K) - np.sum(K_NM * linalg.cho_solve(chol, K_NM.T).T, axis=1)
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    lml = -0.5 * y[obs] @ alpha - 0.5 * logdet - 0.5 * obs.size * np.log(2 * np.pi)
    return {"alpha": alpha, "mean": mean, "var": var, "logdet": logdet, "lml": lml}
