import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from knnclutter import (
    EntropyCurve,
    PointPattern,
    Window,
    entropy,
    entropy_curve,
    fit_segmented,
    select_k,
    sim_poisson,
)
from knnclutter.errors import KSetTooLarge, OutOfRange, TooFewPoints
from knnclutter.kselect import clip_k_set, default_k_set
from knnclutter.simulate import UNIT

KS = tuple(range(1, 36))


def curve_of(y, ks=KS):
    return EntropyCurve(tuple(ks), np.asarray(y, dtype=float))


def broken_line(ks, psi, alpha, beta):
    ks = np.asarray(ks, dtype=float)
    return alpha + beta * np.minimum(ks, psi)


def brute_segmented(x, y, grid):
    """Dense-grid least squares for y ~ a + b min(x, psi), solved with lstsq."""
    best = (math.inf, None)
    for psi in grid:
        A = np.column_stack([np.ones_like(x), np.minimum(x, psi)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        r = float(np.sum((y - A @ coef) ** 2))
        if r < best[0]:
            best = (r, psi)
    return best


# --------------------------------------------------------------- entropy


def test_entropy_certain():
    assert entropy([1, 1, 1]) == 0.0


def test_entropy_half():
    assert entropy([0.5, 0.5]) == 1.0


def test_entropy_quarter():
    assert entropy([0.25]) == 0.5


def test_entropy_zero_terms():
    assert entropy([0.0, 0.0]) == 0.0


def test_entropy_out_of_range():
    with pytest.raises(OutOfRange):
        entropy([0.5, 1.2])
    with pytest.raises(OutOfRange):
        entropy([math.nan])


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.randoms(use_true_random=False))
def test_entropy_bounds_and_permutation(delta, rnd):
    s = entropy(delta)
    assert 0 <= s <= len(delta) * math.log2(math.e) / math.e + 1e-12
    shuffled = list(delta)
    rnd.shuffle(shuffled)
    assert entropy(shuffled) == pytest.approx(s, rel=1e-12, abs=1e-12)


# ------------------------------------------------------------ curve


def test_single_k_curve():
    pp = sim_poisson(UNIT, 60, np.random.default_rng(0))
    curve = entropy_curve(pp, [5])
    assert len(curve) == 1 and curve.k_set == (5,)


def test_k_set_too_large():
    pp = PointPattern(np.random.default_rng(1).random((30, 2)), Window.square())
    with pytest.raises(KSetTooLarge):
        entropy_curve(pp, KS)


def test_default_k_set_clipped():
    assert default_k_set() == KS
    assert default_k_set(20) == tuple(range(1, 19))
    assert clip_k_set(KS, 20) == (tuple(range(1, 20)), True)
    assert clip_k_set((2, 4), 20) == ((2, 4), False)


def test_curve_invariants():
    pp = sim_poisson(UNIT, 200, np.random.default_rng(2))
    curve = entropy_curve(pp, KS)
    assert len(curve.s) == len(KS)
    assert np.all(np.isfinite(curve.s)) and np.all(curve.s >= 0)
    assert curve.total == pytest.approx(float(np.sum(curve.s)))
    for k in (1, 17, 35):
        fit = curve.fits[k]
        if fit is not None:
            assert entropy(fit.delta) == curve.s[KS.index(k)]


def test_thread_pool_gives_same_curve():
    pp = sim_poisson(UNIT, 150, np.random.default_rng(3))
    a = entropy_curve(pp, range(1, 21), workers=1)
    b = entropy_curve(pp, range(1, 21), workers=4)
    assert a.s.tolist() == b.s.tolist()


@pytest.mark.xfail(strict=True, reason="a single Poisson pattern still splits into two components")
def test_pure_feature_has_near_zero_entropy():
    meds = []
    for seed in range(20):
        pp = sim_poisson(UNIT, 300, np.random.default_rng(seed))
        meds.append(np.median(entropy_curve(pp, KS).s) / pp.n)
    assert np.median(meds) < 0.05


# ------------------------------------------------------------ segmented


def test_exact_piecewise_recovery():
    x = np.arange(1, 36)
    y = np.where(x <= 13, 20.0 - x, 7.0)
    seg = fit_segmented(curve_of(y))
    assert abs(seg.psi - 13) <= 0.5
    assert seg.k_hat == 13
    assert seg.rss < 1e-9
    assert not seg.flat


def test_flat_curve():
    seg = fit_segmented(curve_of(np.full(35, 4.2)))
    assert seg.flat
    assert seg.k_hat == 1 and seg.psi == 1


def test_needs_four_points():
    with pytest.raises(TooFewPoints):
        fit_segmented(curve_of([1.0, 2.0, 3.0], (1, 2, 3)))


def test_matches_lstsq_oracle():
    rng = np.random.default_rng(8)
    x = np.arange(1, 36, dtype=float)
    for _ in range(20):
        y = broken_line(x, rng.uniform(3, 30), rng.normal(), rng.normal()) + rng.normal(0, 0.3, 35)
        y = y - y.min()
        seg = fit_segmented(curve_of(y))
        dense = np.arange(1.0, 35.0 + 1e-9, 0.001)
        rss, psi = brute_segmented(x, y, dense)
        # the exact optimum is at least as good as any grid point, and close to the densest
        assert seg.rss <= rss * (1 + 1e-9) + 1e-12
        assert rss - seg.rss <= 1e-3 * max(rss, 1e-9) + 1e-9
        assert abs(seg.psi - psi) <= 0.01
        np.testing.assert_allclose(np.sum((y - seg.predict(x)) ** 2), seg.rss, rtol=1e-9)


def test_uneven_k_set():
    ks = (2, 4, 8, 16, 32)
    y = broken_line(ks, 8, 1.0, 2.0)
    seg = fit_segmented(curve_of(y, ks))
    assert seg.k_hat == 8 and seg.rss < 1e-12


def test_nearest_k_tie_goes_up():
    # break exactly between 4 and 8 on an uneven set
    ks = (1, 2, 4, 8, 16, 24)
    y = broken_line(ks, 6, 0.0, 1.0)
    seg = fit_segmented(curve_of(y, ks))
    assert seg.psi == 6.0
    assert seg.k_hat == 8


def test_pure_noise_curve_is_not_flat_in_practice():
    pp = sim_poisson(UNIT, 300, np.random.default_rng(0))
    k_hat, curve, seg = select_k(pp, KS)
    assert k_hat in KS
    assert seg.psi >= 1


@pytest.mark.xfail(strict=True, reason="noise-only entropy curves fluctuate instead of staying flat")
def test_pure_noise_flags_flat_curve():
    flat = 0
    for seed in range(20):
        pp = sim_poisson(UNIT, 300, np.random.default_rng(seed))
        _, _, seg = select_k(pp, KS)
        flat += seg.flat and seg.k_hat == 1
    assert flat > 10


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.floats(0, 100), min_size=5, max_size=35),
    st.floats(0.01, 100),
    st.floats(-100, 100),
)
def test_affine_invariance(y, a, b):
    y = np.asarray(y)
    ks = tuple(range(1, len(y) + 1))
    assume(np.ptp(y) > 1e-3)
    s1 = fit_segmented(curve_of(y, ks))
    s2 = fit_segmented(curve_of(a * y + b + 100, ks))
    # allow exact ties in RSS to resolve to a different break
    if s1.k_hat != s2.k_hat:
        x = np.asarray(ks, float)
        alt = brute_segmented(x, y, [s2.psi])[0]
        assert alt == pytest.approx(s1.rss, rel=1e-6, abs=1e-9)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(0, 100), min_size=4, max_size=35))
def test_rss_not_worse_than_flat(y):
    y = np.asarray(y)
    ks = tuple(range(1, len(y) + 1))
    seg = fit_segmented(curve_of(y, ks))
    assert seg.rss <= float(np.sum((y - y.mean()) ** 2)) * (1 + 1e-12) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 33), st.floats(0.5, 50), st.floats(-5, 5).filter(lambda v: abs(v) > 0.05))
def test_exact_break_recovered(psi, alpha, beta):
    y = broken_line(KS, psi, alpha, beta)
    y = y - y.min()
    seg = fit_segmented(curve_of(y))
    assert abs(seg.psi - psi) <= 1
    assert seg.rss < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.floats(2.01, 33.99), st.floats(-5, 5).filter(lambda v: abs(v) > 0.05))
def test_off_grid_break_recovered(psi, beta):
    y = broken_line(KS, psi, 0.0, beta)
    y = y - y.min()
    seg = fit_segmented(curve_of(y))
    assert abs(seg.psi - psi) <= 0.5
    assert seg.rss < 1e-9 * max(1.0, float(y @ y))
