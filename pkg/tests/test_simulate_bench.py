import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knnclutter import (
    Window,
    make_scenario,
    rates,
    run_benchmark,
    scenario_spec,
    sim_cluster,
    sim_poisson,
)
from knnclutter.bench import BENCH_COLUMNS, replicate_rates
from knnclutter.errors import ConfigError, LengthMismatch, MissingTruth
from knnclutter.simulate import UNIT, child_seed


# ------------------------------------------------------------ generators


def test_poisson_mean_count():
    w = Window.square(0.0, 10.0)
    counts = [sim_poisson(w, 200, np.random.default_rng(s)).n for s in range(1000)]
    # 3 sigma band for the mean of 1000 Poisson(200) counts
    assert abs(np.mean(counts) - 200) < 3 * math.sqrt(200 / 1000)


def test_poisson_near_empty():
    pp = sim_poisson(UNIT, 0.001, np.random.default_rng(0))
    assert pp.n == 0 and pp.points.shape == (0, 2)


def test_poisson_points_inside_and_deterministic():
    w = Window(0.25, 0.5, 0.25, 0.5)
    a = sim_poisson(w, 50, np.random.default_rng(9))
    b = sim_poisson(w, 50, np.random.default_rng(9))
    assert w.contains(a.points).all()
    np.testing.assert_array_equal(a.points, b.points)


def test_poisson_intensity_uniform():
    # quadrant counts of a pooled sample should be even
    pts = np.vstack([sim_poisson(UNIT, 300, np.random.default_rng(s)).points for s in range(50)])
    q = np.histogram2d(pts[:, 0], pts[:, 1], bins=2, range=[[0, 1], [0, 1]])[0].ravel()
    chi2 = np.sum((q - q.mean()) ** 2 / q.mean())
    assert chi2 < 16.3  # 0.999 quantile of chi-square with 3 df


@pytest.mark.parametrize("kappa,u", [(7.5, 20), (15.0, 10)])
def test_cluster_mean_count(kappa, u):
    counts = [sim_cluster(UNIT, kappa, u, 0.2, np.random.default_rng(s)).n for s in range(400)]
    se = np.std(counts, ddof=1) / math.sqrt(len(counts))
    assert abs(np.mean(counts) - 150) < 4 * se


def test_cluster_single_offspring_is_poisson_like():
    counts = [sim_cluster(UNIT, 100.0, 1, 0.05, np.random.default_rng(s)).n for s in range(400)]
    # Poisson counts: variance equals mean
    assert np.mean(counts) == pytest.approx(100, abs=2)
    assert np.var(counts, ddof=1) / np.mean(counts) == pytest.approx(1.0, abs=0.2)


def test_cluster_points_in_window():
    pp = sim_cluster(UNIT, 7.5, 20, 0.2, np.random.default_rng(1))
    assert UNIT.contains(pp.points).all()
    assert pp.truth.all()


def test_scenario_3_design():
    spec = scenario_spec(3)
    assert spec.clutter_n == 300 and spec.clutter_window == UNIT
    assert spec.feature == ("poisson", Window.square(0.0, 0.5), 150.0)


def test_scenario_4_design():
    assert scenario_spec(4).feature == ("poisson", Window.square(0.25, 0.5), 20.0)


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        scenario_spec(7)


@pytest.mark.parametrize("sc", [1, 2, 3, 4, "tworate"])
def test_scenario_determinism(sc):
    a = make_scenario(scenario_spec(sc, seed=3))
    b = make_scenario(scenario_spec(sc, seed=3))
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.truth, b.truth)


def test_superposition_preserves_counts():
    spec = scenario_spec(3)
    rng = np.random.default_rng(4)
    clutter = sim_poisson(spec.clutter_window, spec.clutter_n, np.random.default_rng(4))
    pp = make_scenario(spec, rng)
    # the clutter draw comes first from the same stream
    assert int(np.sum(~pp.truth)) == clutter.n
    assert pp.n == int(np.sum(pp.truth)) + int(np.sum(~pp.truth))


def test_child_seeds_are_distinct():
    a = np.random.default_rng(child_seed(0, 3, 1)).random()
    b = np.random.default_rng(child_seed(0, 3, 2)).random()
    c = np.random.default_rng(child_seed(0, 3, 1)).random()
    assert a != b and a == c


# ----------------------------------------------------------------- rates


def test_rates_perfect():
    t = np.array([1, 0, 1, 0, 0], bool)
    r = rates(t, t)
    assert (r.tpr, r.fpr, r.acc) == (1.0, 0.0, 1.0)


def test_rates_inverted():
    t = np.array([1, 0, 1, 0, 0], bool)
    r = rates(~t, t)
    assert (r.tpr, r.fpr, r.acc) == (0.0, 1.0, 0.0)


def test_rates_hand_count():
    truth = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0, 0], bool)
    pred = np.array([1, 1, 0, 0, 1, 0, 0, 0, 0, 0], bool)
    r = rates(pred, truth)
    assert (r.tp, r.fn, r.fp, r.tn) == (2, 2, 1, 5)
    assert r.tpr == 0.5
    assert r.fpr == pytest.approx(1 / 6)
    assert r.acc == pytest.approx(0.7)


def test_rates_errors():
    with pytest.raises(MissingTruth):
        rates([True], None)
    with pytest.raises(LengthMismatch):
        rates([True, False], [True])


def test_rates_empty_class_is_nan():
    r = rates([True, True], [True, True])
    assert r.tpr == 1.0 and math.isnan(r.fpr)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=300))
def test_rates_properties(pairs):
    pred, truth = map(np.array, zip(*pairs))
    r = rates(pred, truth)
    assert r.n == len(pairs)
    for v in (r.tpr, r.fpr, r.acc):
        assert math.isnan(v) or 0 <= v <= 1
    if r.tp + r.fn:
        assert r.tpr == r.tp / (r.tp + r.fn)
    assert r.acc == (r.tp + r.tn) / r.n


# ------------------------------------------------------------- benchmark


def test_single_replicate_equals_single_run():
    rows = run_benchmark([3], [10], [1, 2], replicates=1, seed=5)
    single = replicate_rates(3, [10], 2, 0, 5)[10]
    for row in rows:
        r = single[row["iteration"] - 1]
        assert (row["tpr"], row["fpr"], row["acc"]) == (r.tpr, r.fpr, r.acc)
        assert row["se_acc"] is None


def test_benchmark_rows_and_reproducibility():
    a = run_benchmark([3, 4], [10, 20], [1, 3], replicates=3, seed=1)
    b = run_benchmark([3, 4], [10, 20], [1, 3], replicates=3, seed=1)
    assert a == b
    assert len(a) == 2 * 2 * 2
    assert all(set(row) == set(BENCH_COLUMNS) for row in a)


def test_benchmark_seed_changes_table():
    a = run_benchmark([3], [10], [1], replicates=3, seed=1)
    b = run_benchmark([3], [10], [1], replicates=3, seed=2)
    assert a[0]["acc"] != b[0]["acc"]


def test_cumulative_rates_never_gain_features():
    res = replicate_rates(3, [10], 3, 0, 0)[10]
    tps = [r.tp + r.fp for r in res]
    assert tps == sorted(tps, reverse=True)


def test_benchmark_argument_checks():
    with pytest.raises(ValueError):
        run_benchmark([3], [10], [1], replicates=0)
    with pytest.raises(ValueError):
        run_benchmark([3], [10], [0], replicates=1)
    with pytest.raises(ConfigError):
        run_benchmark([9], [10], [1], replicates=1)
