import numpy as np
import pytest

from gpatt.core.errors import InputError
from gpatt.schemas.results import TrainConfig
from gpatt.services.stress import holesize_suite, loglog_slope, runtime_suite


def test_loglog_slope_of_power_law():
    sizes = [1e2, 1e3, 1e4]
    assert loglog_slope(sizes, [3e-4 * n ** 1.5 for n in sizes]) == pytest.approx(1.5)


def test_holesize_ladder_scores_every_run():
    config = TrainConfig(A=2, restarts=1, max_opt_iter=8, seed=2)
    report = holesize_suite(holes=(0.2, 0.1), families=("smp", "se"), config=config, shape=(16, 16))
    assert report.suite == "holesize"
    assert [(p.family, p.fraction) for p in report.holes] == [
        ("smp", 0.1), ("smp", 0.2), ("se", 0.1), ("se", 0.2)]
    assert all(np.isfinite(p.smse) and np.isfinite(p.msll) for p in report.holes)


@pytest.mark.parametrize("holes", [(), (0.0,), (0.2, 1.0), (-0.1,)])
def test_holesize_rejects_bad_fractions_before_training(holes):
    with pytest.raises(InputError):
        holesize_suite(holes=holes, families=("se",), config=TrainConfig(restarts=1), shape=(8, 8))


def test_holesize_needs_a_family():
    with pytest.raises(InputError):
        holesize_suite(holes=(0.1,), families=(), shape=(8, 8))


def test_runtime_rejects_empty_sizes():
    with pytest.raises(InputError):
        runtime_suite(sizes=())


@pytest.mark.slow
def test_runtime_grows_near_linearly():
    report = runtime_suite((1_000, 10_000, 100_000), TrainConfig(A=5, seed=1), repeats=2)
    assert [p.N for p in report.runtime][0] >= 900
    assert 0.7 <= report.slope <= 1.3


@pytest.mark.slow
def test_smp_beats_se_on_texture_hole():
    config = TrainConfig(A=10, restarts=3, seed=5)
    report = holesize_suite(holes=(0.25,), families=("smp", "se"), config=config, shape=(64, 64))
    smp, se = report.holes
    assert (smp.family, se.family) == ("smp", "se")
    assert smp.smse < se.smse
    assert smp.msll < se.msll


@pytest.mark.slow
def test_smoother_msll_worsens_with_hole_size():
    config = TrainConfig(restarts=2, seed=6)
    families = ("se", "rq", "matern32")
    report = holesize_suite(holes=(0.1, 0.25, 0.4), families=families, config=config, shape=(64, 64))
    for family in families:
        msll = [p.msll for p in report.holes if p.family == family]
        assert len(msll) == 3
        assert np.all(np.diff(msll) >= -0.02)
