import numpy as np
import pytest

import causal_rmst.bootstrap as bs
from causal_rmst.data import Dataset, restrict
from causal_rmst.errors import BadConfig, FitError, TooManyFailures
from causal_rmst.estimators import EstimatorSpec
from causal_rmst.simulation import generate, preset


@pytest.fixture(scope="module")
def rd():
    cfg = preset("rct_indep")
    return restrict(generate(cfg, 300, seed=2).data, cfg.tau)


def test_same_seed_same_result(rd):
    r1 = bs.bootstrap_ci(rd, "bj", B=20, seed=7)
    r2 = bs.bootstrap_ci(rd, "bj", B=20, seed=7)
    assert r1.replicates.tobytes() == r2.replicates.tobytes()
    assert r1.to_dict() == r2.to_dict()
    r3 = bs.bootstrap_ci(rd, "bj", B=20, seed=8)
    assert r3.replicates.tobytes() != r1.replicates.tobytes()


def test_parallel_matches_serial(rd):
    serial = bs.bootstrap_ci(rd, "km", B=16, seed=3)
    parallel = bs.bootstrap_ci(rd, "km", B=16, seed=3, threads=2)
    assert serial.replicates.tobytes() == parallel.replicates.tobytes()


def test_interval_shape(rd):
    r = bs.bootstrap_ci(rd, "km", B=200, seed=1, level=0.9)
    assert r.ci_lower <= r.ci_upper and r.se > 0
    assert r.ci_lower == pytest.approx(np.quantile(r.replicates, 0.05))
    assert r.se == pytest.approx(np.std(r.replicates, ddof=1))
    assert r.n_failed == 0 and r.B == 200


def test_constant_statistic():
    n = 20
    d = Dataset.from_arrays(np.zeros((n, 1)), np.arange(n) % 2, np.full(n, 3.0), np.ones(n))
    r = bs.bootstrap_ci(restrict(d, 5.0), "km", B=50, seed=0)
    assert r.se == 0.0
    assert r.ci_lower == r.ci_upper == r.point == 0.0


def test_too_many_failures(rd, monkeypatch):
    def boom(sub, spec):
        raise FitError("synthetic failure")

    monkeypatch.setattr(bs, "estimate", boom)
    with pytest.raises(TooManyFailures):
        bs.bootstrap_ci(rd, EstimatorSpec("km"), B=10, seed=0, point=0.0)


@pytest.mark.parametrize("kw", [{"B": 1}, {"level": 1.0}, {"level": 0.0}])
def test_bad_arguments(rd, kw):
    with pytest.raises(BadConfig):
        bs.bootstrap_ci(rd, "km", **kw)


def test_replicate_streams_independent_of_order():
    a = bs.replicate_rng(5, 3).integers(0, 100, 10)
    _ = bs.replicate_rng(5, 2).integers(0, 100, 10)
    b = bs.replicate_rng(5, 3).integers(0, 100, 10)
    np.testing.assert_array_equal(a, b)
