import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knnclutter import PointPattern, Window, knn_distances, subset
from knnclutter.errors import InvalidK, InvalidWindow, LengthMismatch, TooFewPoints
from knnclutter.pattern import neighbour_table


def loop_knn(points, k):
    """All-pairs oracle written with plain Python floats."""
    out = []
    for i, (xi, yi) in enumerate(points):
        ds = []
        for j, (xj, yj) in enumerate(points):
            if i == j:
                continue
            dx = xi - xj
            dy = yi - yj
            ds.append(math.sqrt(dx * dx + dy * dy))
        ds.sort()
        out.append(ds[k - 1])
    return out


def unit_pattern(points):
    return PointPattern(points, Window.square(0.0, 1.0))


def test_collinear_first_neighbour():
    pp = PointPattern([(0, 0), (1, 0), (3, 0)], Window(0, 3, -1, 1))
    assert knn_distances(pp, 1).d.tolist() == [1.0, 1.0, 2.0]


def test_collinear_second_neighbour():
    pp = PointPattern([(0, 0), (1, 0), (3, 0)], Window(0, 3, -1, 1))
    assert knn_distances(pp, 2).d.tolist() == [3.0, 2.0, 3.0]


def test_500_uniform_points_match_loop_oracle():
    rng = np.random.default_rng(11)
    pts = rng.random((500, 2))
    got = knn_distances(unit_pattern(pts), 10).d
    assert got.tolist() == loop_knn(pts.tolist(), 10)


@pytest.mark.parametrize("n,k", [(5, 4), (63, 7), (64, 7), (300, 30), (1000, 1)])
def test_tree_and_brute_force_paths_agree(n, k):
    rng = np.random.default_rng(n * 100 + k)
    pts = rng.random((n, 2))
    assert knn_distances(unit_pattern(pts), k).d.tolist() == loop_knn(pts.tolist(), k)


def test_duplicates_give_zero_distance():
    pts = [(0.2, 0.2), (0.2, 0.2), (0.9, 0.9)]
    d = knn_distances(unit_pattern(pts), 1).d
    assert d[0] == 0.0 and d[1] == 0.0


def test_lattice_ties_resolved_exactly():
    # a regular grid has massive distance ties; tree and oracle must agree
    g = np.linspace(0, 1, 12)
    pts = np.array([(a, b) for a in g for b in g])
    pp = unit_pattern(pts)
    for k in (1, 4, 8, 12, 20):
        assert knn_distances(pp, k).d.tolist() == loop_knn(pts.tolist(), k)


def test_k_validation():
    pp = unit_pattern(np.random.default_rng(0).random((10, 2)))
    with pytest.raises(InvalidK):
        knn_distances(pp, 0)
    with pytest.raises(InvalidK):
        knn_distances(pp, 2.5)
    with pytest.raises(TooFewPoints):
        knn_distances(pp, 10)
    assert knn_distances(pp, 9).n == 10


def test_points_outside_window_rejected():
    with pytest.raises(ValueError):
        unit_pattern([(0.5, 0.5), (1.5, 0.5)])


def test_boundary_points_allowed():
    pp = unit_pattern([(0, 0), (1, 1), (0, 1)])
    assert pp.n == 3


def test_truth_length_checked():
    with pytest.raises(LengthMismatch):
        PointPattern([(0.1, 0.1), (0.2, 0.2)], Window.square(), truth=[True])


@pytest.mark.parametrize("bounds", [(0, 0, 0, 1), (1, 0, 0, 1), (0, 1, 0, math.nan)])
def test_window_validation(bounds):
    with pytest.raises(InvalidWindow):
        Window(*bounds)


def test_window_area():
    assert Window(0, 2, 1, 4).area == 6.0


def test_arrays_are_read_only():
    pp = unit_pattern([(0.1, 0.2), (0.3, 0.4)])
    with pytest.raises(ValueError):
        pp.points[0, 0] = 0.5


class TestSubset:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.pp = PointPattern(rng.random((10, 2)), Window.square(), truth=rng.random(10) < 0.5)

    def test_all_true_is_identity(self):
        sub = subset(self.pp, np.ones(10, dtype=bool))
        np.testing.assert_array_equal(sub.points, self.pp.points)
        np.testing.assert_array_equal(sub.truth, self.pp.truth)
        assert sub.window == self.pp.window

    def test_all_false_is_empty(self):
        sub = subset(self.pp, np.zeros(10, dtype=bool))
        assert sub.n == 0
        with pytest.raises(TooFewPoints):
            knn_distances(sub, 1)

    def test_first_half(self):
        keep = np.arange(10) < 5
        sub = subset(self.pp, keep)
        assert sub.n == 5
        np.testing.assert_array_equal(sub.points, self.pp.points[:5])
        assert sub.parent_index.tolist() == [0, 1, 2, 3, 4]

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            subset(self.pp, [True, False])


coords = st.floats(0.0, 1.0, allow_nan=False, width=32)
point_lists = st.lists(st.tuples(coords, coords), min_size=3, max_size=80)


@settings(max_examples=60, deadline=None)
@given(point_lists, st.integers(1, 10), st.randoms(use_true_random=False))
def test_permutation_equivariance(pts, k, rnd):
    k = min(k, len(pts) - 1)
    perm = list(range(len(pts)))
    rnd.shuffle(perm)
    d = knn_distances(unit_pattern(pts), k).d
    dp = knn_distances(unit_pattern([pts[i] for i in perm]), k).d
    assert dp.tolist() == d[perm].tolist()


@settings(max_examples=60, deadline=None)
@given(point_lists)
def test_monotone_in_k(pts):
    table = neighbour_table(unit_pattern(pts), len(pts) - 1)
    assert np.all(np.diff(table, axis=1) >= 0)


@settings(max_examples=60, deadline=None)
@given(point_lists, st.integers(1, 10), st.integers(-8, 8), st.integers(-8, 8))
def test_translation_invariance(pts, k, sx, sy):
    # power-of-two shifts keep coordinate differences exact
    k = min(k, len(pts) - 1)
    shifted = [(x + sx * 0.25, y + sy * 0.25) for x, y in pts]
    w = Window(-2.0, 3.0, -2.0, 3.0)
    a = knn_distances(PointPattern(pts, w), k).d
    b = knn_distances(PointPattern(shifted, w), k).d
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(point_lists, st.integers(1, 30))
def test_matches_loop_oracle(pts, k):
    k = min(k, len(pts) - 1)
    assert knn_distances(unit_pattern(pts), k).d.tolist() == loop_knn(pts, k)
