import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import kstwobign, ks_2samp

from delaygrowth.initial import make_eta
from delaygrowth.lyapunov import batch_means_ci, run_furstenberg
from delaygrowth.measure import (
    SphereSampleSet, autocorrelation, choose_thin, effective_sample_size, g_second_moment,
    joint_energy_distance, ks_critical_value, ks_statistic, lambda_from_measure,
    load_sample_set, marginal_distance, marginal_ranges, modulus_of_continuity,
    sample_sphere_path, save_sample_set, tightness_report,
)
from delaygrowth.segment import Segment, ZeroStateError, functional_psi, m2_norm, project

ETA = Segment.constant(1.0, 64)


@pytest.fixture(scope="module")
def long_set():
    return sample_sphere_path(ETA, 4000, burn_in=200, thin=1, seed=3, label="const:1")


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - phi * phi)
    for k in range(1, n):
        x[k] = phi * x[k - 1] + e[k]
    return x


def test_snapshots_on_sphere(long_set):
    assert len(long_set) == 3801
    assert np.max(np.abs(m2_norm(long_set.samples) - 1)) <= 1e-9
    m0 = long_set.marginal(0.0)
    assert np.all(np.abs(m0) <= 1.0)
    assert long_set.provenance["burn_in"] == 200


def test_sign_symmetry():
    a = sample_sphere_path(ETA, 300, burn_in=10, thin=2, seed=1)
    b = sample_sphere_path(Segment(-ETA.values), 300, burn_in=10, thin=2, seed=1)
    np.testing.assert_array_equal(b.samples, -a.samples)
    n = a.negated()
    assert lambda_from_measure(n) == lambda_from_measure(a)
    np.testing.assert_array_equal(modulus_of_continuity(n.samples, 0.25),
                                  modulus_of_continuity(a.samples, 0.25))


def test_sample_path_errors():
    with pytest.raises(ZeroStateError):
        sample_sphere_path(Segment.constant(0.0, 8), 300)
    with pytest.raises(ValueError):
        sample_sphere_path(ETA, 100, burn_in=200)
    with pytest.raises(ValueError):
        SphereSampleSet(np.ones((3, 9)))


def test_modulus_examples():
    for d in (1.0, 0.5, 0.1):
        assert modulus_of_continuity(Segment.constant(0.3, 32), d) == 0.0
    lin = Segment.from_function(lambda t: t, 64)
    for d in (1.0, 0.5, 0.25, 0.125):
        assert modulus_of_continuity(lin, d) == pytest.approx(d, abs=1e-12)
    assert modulus_of_continuity(lin, 0.1) == pytest.approx(6 / 64, abs=1e-12)
    v = np.random.default_rng(0).normal(size=33)
    assert modulus_of_continuity(Segment(v), 1.0) == pytest.approx(v.max() - v.min())


def test_modulus_below_grid_step_warns():
    seg = Segment.from_function(np.sin, 8)
    with pytest.warns(UserWarning):
        m = modulus_of_continuity(seg, 0.01)
    assert m == modulus_of_continuity(seg, 1 / 8)
    with pytest.raises(ValueError):
        modulus_of_continuity(seg, 0.0)


@given(st.integers(2, 40), st.integers(0, 2**31))
@settings(max_examples=40)
def test_modulus_monotone_in_delta(N, seed):
    v = np.random.default_rng(seed).normal(size=N + 1)
    h = 1.0 / N
    assert modulus_of_continuity(v, h) <= modulus_of_continuity(v, min(1.0, 2 * h))


def test_tightness_report(long_set):
    rep = tightness_report(long_set, (1.0, 0.5, 0.25, 0.125), (0.25, 0.5, 1.0))
    t = rep["table"]
    assert t.shape == (4, 3)
    assert np.all((t >= 0) & (t <= 1))
    assert np.all(np.diff(t, axis=0) <= 0)
    assert np.all(np.diff(t[:, 1]) < 0)
    with pytest.raises(ValueError):
        tightness_report(SphereSampleSet(long_set.samples[:50]))


def test_ks_examples(long_set):
    a = long_set.thinned(5)
    assert marginal_distance(a, a) == 0.0
    b = SphereSampleSet(a.samples[1:], a.coords)
    assert marginal_distance(a, b) <= 1 / len(b) + 1e-12
    with pytest.raises(ValueError):
        marginal_distance(a, SphereSampleSet(np.empty((0, 65))))


@pytest.mark.filterwarnings("ignore:ks_2samp")
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=60),
       st.lists(st.floats(-5, 5), min_size=1, max_size=60))
def test_ks_matches_scipy(x, y):
    d = ks_statistic(x, y)
    assert d == pytest.approx(ks_2samp(x, y).statistic, abs=1e-12)
    assert d == ks_statistic(y, x)


def test_ks_critical_value():
    n = 10_000
    for alpha in (0.01, 0.05):
        expected = kstwobign.isf(alpha) * np.sqrt(2 / n)
        assert ks_critical_value(n, n, alpha) == pytest.approx(expected, rel=1e-3)


def test_autocorrelation_tools():
    x = ar1(0.5, 20_000, 1)
    ac = autocorrelation(x, 5)
    np.testing.assert_allclose(ac, 0.5 ** np.arange(6), atol=0.03)
    assert choose_thin(x) == 5        # 0.5^5 < 0.05 < 0.5^4
    iid = np.random.default_rng(2).normal(size=5000)
    assert effective_sample_size(iid) == pytest.approx(5000, rel=0.15)
    y = ar1(0.9, 50_000, 3)
    assert effective_sample_size(y) == pytest.approx(50_000 * 0.1 / 1.9, rel=0.25)


def test_uniqueness_ks():
    a = sample_sphere_path(ETA, 4000, burn_in=200, thin=5, seed=3, replica=0)
    b = sample_sphere_path(make_eta("cos:2", 64), 4000, burn_in=200, thin=5, seed=3, replica=1)
    na = min(len(a), effective_sample_size(a.marginal(0.0)))
    nb = min(len(b), effective_sample_size(b.marginal(0.0)))
    assert marginal_distance(a, b, 0.0) < ks_critical_value(na, nb, 0.01)
    assert marginal_distance(a, b, 0.0) == marginal_distance(b, a, 0.0)


def test_energy_distance(long_set):
    a = long_set.thinned(5)
    assert abs(joint_energy_distance(a, a)) < 1e-12
    b = SphereSampleSet(long_set.samples[2::5], long_set.coords)
    assert joint_energy_distance(a, b) == pytest.approx(joint_energy_distance(b, a), rel=1e-12)
    far = SphereSampleSet(np.tile(project(Segment.from_function(lambda t: t + 0.5, 64))[0].values,
                                  (50, 1)))
    assert joint_energy_distance(a, far) > 10 * joint_energy_distance(a, b)


def test_lambda_from_measure_matches_furstenberg(long_set):
    psi = functional_psi(long_set.samples[:-1])
    est, se = batch_means_ci(psi, 20)
    assert est == pytest.approx(lambda_from_measure(SphereSampleSet(long_set.samples[:-1])))
    f = run_furstenberg(ETA, 4000, seed=3, burn_in=200)
    assert abs(est - f.estimate) <= 2 * se
    assert lambda_from_measure(long_set) <= 0.5


def test_lambda_zero_head_snapshots():
    v = np.sin(np.pi * np.linspace(-1, 0, 33))
    v[-1] = 0.0
    unit = project(Segment(v))[0].values
    assert lambda_from_measure(SphereSampleSet(np.tile(unit, (4, 1)))) == 0.0
    with pytest.raises(ValueError):
        lambda_from_measure(SphereSampleSet(np.empty((0, 33))))


def test_g_square_integrable(long_set):
    half = SphereSampleSet(long_set.samples[: len(long_set) // 2])
    g_full, g_half = g_second_moment(long_set), g_second_moment(half)
    assert np.isfinite(g_full) and g_full <= 4.0
    assert g_half == pytest.approx(g_full, rel=0.2)


def test_marginal_ranges(long_set):
    r = marginal_ranges(long_set)
    assert set(r) == {-1.0, -0.5, 0.0}
    for lo, hi in r.values():
        assert np.isfinite(lo) and lo < hi
    # only the head is bounded by the norm; interior values are not
    assert -1.0 <= r[0.0][0] and r[0.0][1] <= 1.0


def test_save_load_roundtrip(tmp_path, long_set):
    s = long_set.thinned(7)
    npy, side = save_sample_set(s, tmp_path / "set")
    assert npy.exists() and side.exists()
    back = load_sample_set(tmp_path / "set")
    np.testing.assert_array_equal(back.samples, s.samples)
    assert back.coords == s.coords and back.provenance == s.provenance
