import numpy as np
import pytest

from causal_rmst.data import Dataset, restrict
from causal_rmst.nuisance import ConstantCurve, ExponentialShiftCurve, NuisanceSet, make_oracle_nuisances
from causal_rmst.transforms import bj_transform, dr_transform, ipcw_transform, qr_pseudo_outcome
from causal_rmst.simulation import generate, preset

TAU = 10.0


def _rd(times, status, a=None):
    n = len(times)
    a = [1] * (n - 1) + [0] if a is None else a
    return restrict(Dataset.from_arrays(np.zeros((n, 1)), a, times, status), TAU)


def _half(X):
    return np.full(len(X), 0.5)


def test_ipcw_examples():
    rd = _rd([7.0, 7.0, 3.0], [1, 0, 1])
    po = ipcw_transform(rd, NuisanceSet(TAU, censoring=ConstantCurve(1.0)))
    np.testing.assert_array_equal(po.values, [7.0, 0.0, 3.0])
    po = ipcw_transform(rd, NuisanceSet(TAU, censoring=ConstantCurve(0.5)))
    np.testing.assert_array_equal(po.values, [14.0, 0.0, 6.0])
    assert po.tag == "ipcw" and po.provenance == {"G": "unknown"}


def test_bj_examples():
    rd = _rd([7.0, 4.0, 3.0], [1, 0, 1])
    po = bj_transform(rd, NuisanceSet(TAU, survival=ConstantCurve(1.0)))
    # under S = 1 a subject censored at 4 survives to the horizon
    np.testing.assert_array_equal(po.values, [7.0, TAU, 3.0])
    expo = ExponentialShiftCurve(lambda X: np.ones(len(X)), {0: 0.0, 1: 0.0})
    rd = restrict(Dataset.from_arrays(np.zeros((2, 1)), [1, 0], [1.0, 1.0], [0, 1]), 50.0)
    po = bj_transform(rd, NuisanceSet(50.0, survival=expo))
    assert po.values[0] == pytest.approx(2.0, abs=1e-6)


def test_dr_without_censoring_mass():
    rd = _rd([7.0, 12.0, 3.0], [1, 0, 1])
    ns = NuisanceSet(TAU, censoring=ConstantCurve(1.0), survival=ConstantCurve(0.7))
    np.testing.assert_array_equal(dr_transform(rd, ns).values, [7.0, TAU, 3.0])


def test_dr_equals_ipcw_plus_augmentation_by_hand():
    # exponential censoring at rate 1, S = 1: Q_S(t) = tau, so the augmentation is
    # tau / G(y) - tau * int_0^y e^{t} dt = tau
    G = ExponentialShiftCurve(lambda X: np.ones(len(X)), {0: 0.0, 1: 0.0})
    rd = _rd([0.5, 2.0], [0, 0], a=[1, 0])
    ns = NuisanceSet(TAU, censoring=G, survival=ConstantCurve(1.0), censoring_clip=1e-9)
    np.testing.assert_allclose(dr_transform(rd, ns).values, [TAU, TAU], rtol=1e-10)


def test_qr_examples():
    rd = _rd([7.0, 12.0, 3.0], [1, 0, 1], a=[1, 1, 0])
    ns = NuisanceSet(TAU, propensity=_half, censoring=ConstantCurve(1.0), survival=ConstantCurve(0.5),
                     outcome_mean=ConstantCurve(0.5))
    mu = 0.5 * TAU
    dr = dr_transform(rd, ns)
    qr = qr_pseudo_outcome(rd, ns, dr)
    sign = np.array([1, 1, -1])
    np.testing.assert_allclose(qr.values, sign * 2 * (dr.values - mu) + 0.0)
    # zero residual leaves mu1 - mu0
    fake = type(dr)(np.full(3, mu), "dr")
    np.testing.assert_allclose(qr_pseudo_outcome(rd, ns, fake).values, 0.0)


def test_bounds_on_simulated_data():
    cfg = preset("obs_cond")
    sd = generate(cfg, 5000, seed=4)
    rd = restrict(sd.data, cfg.tau)
    ns = make_oracle_nuisances(cfg, cfg.tau)
    eps = ns.censoring_clip
    ip = ipcw_transform(rd, ns).values
    bj = bj_transform(rd, ns).values
    qr = qr_pseudo_outcome(rd, ns).values
    assert np.all((ip >= 0) & (ip <= cfg.tau / eps))
    assert np.all((bj >= 0) & (bj <= cfg.tau))
    assert np.all(np.abs(qr) <= 2 * cfg.tau / eps**2)


def test_dr_cached_per_nuisance_set():
    cfg = preset("rct_cond")
    rd = restrict(generate(cfg, 500, seed=1).data, cfg.tau)
    ns = make_oracle_nuisances(cfg, cfg.tau)
    assert dr_transform(rd, ns) is dr_transform(rd, ns)


def test_oracle_cut_moderate_sample():
    # quick version of the Monte Carlo CUT check; the full one lives in the acceptance suite
    cfg = preset("rct_cond")
    sd = generate(cfg, 100_000, seed=8)
    rd = restrict(sd.data, cfg.tau)
    ns = make_oracle_nuisances(cfg, cfg.tau)
    target = np.minimum(sd.T, cfg.tau)
    for fn in (ipcw_transform, bj_transform, dr_transform):
        vals = fn(rd, ns).values
        for arm in (0, 1):
            m = rd.a == arm
            diff = vals[m] - target[m]
            se = diff.std(ddof=1) / np.sqrt(m.sum()) + vals[m].std(ddof=1) / np.sqrt(m.sum())
            assert abs(diff.mean()) <= 4 * se, fn.__name__
