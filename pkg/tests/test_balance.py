import numpy as np
import pytest

from aqimpute.balance import SmoteConfig, smote
from aqimpute.errors import EmptyClass


def convex_residual(p, a, b):
    """Distance of p from the segment [a, b] and the fitted coefficient."""
    d = b - a
    if not np.any(d):
        return float(np.linalg.norm(p - a)), 0.0
    u = float(np.dot(p - a, d) / np.dot(d, d))
    return float(np.linalg.norm(p - (a + u * d))), u


def test_balanced_input_unchanged(rng):
    X = rng.standard_normal((8, 3))
    y = np.array([0, 1, 0, 1, 2, 2, 3, 3])
    Xo, yo = smote(X, y)
    np.testing.assert_array_equal(Xo, X)
    np.testing.assert_array_equal(yo, y)


def test_counts_equal_and_originals_first(rng):
    X = rng.standard_normal((60, 4))
    y = np.array([0] * 40 + [1] * 12 + [2] * 6 + [3] * 2)
    Xo, yo = smote(X, y, SmoteConfig(seed=1))
    assert np.bincount(yo).tolist() == [40, 40, 40, 40]
    np.testing.assert_array_equal(Xo[:60], X)
    # synthetic rows grouped by class in ascending order
    assert np.all(np.diff(yo[60:]) >= 0)


def test_duplicate_points_stay_put():
    X = np.vstack([np.zeros((10, 2)), np.tile([[3.0, -1.0]], (3, 1))])
    y = np.array([0] * 10 + [1] * 3)
    Xo, yo = smote(X, y)
    np.testing.assert_array_equal(Xo[yo == 1], np.tile([[3.0, -1.0]], (10, 1)))


def test_single_sample_class_duplicated():
    X = np.vstack([np.random.default_rng(0).standard_normal((5, 2)), [[9.0, 9.0]]])
    y = np.array([0] * 5 + [1])
    Xo, yo = smote(X, y)
    np.testing.assert_array_equal(Xo[yo == 1], np.full((5, 2), 9.0))


def test_two_point_class_synthetics_lie_between():
    a, b = np.array([0.0, 1.0, 2.0]), np.array([4.0, -1.0, 2.5])
    X = np.vstack([np.random.default_rng(3).standard_normal((30, 3)), a, b])
    y = np.array([0] * 30 + [1, 1])
    Xo, yo = smote(X, y, SmoteConfig(seed=2))
    for p in Xo[32:]:
        res, u = convex_residual(p, a, b)
        assert res < 1e-9 and -1e-12 <= u <= 1 + 1e-12


def test_parents_are_same_class_and_convex(rng):
    X = rng.standard_normal((200, 3))
    y = np.array([0] * 150 + [1] * 40 + [2] * 10)
    Xo, yo = smote(X, y, SmoteConfig(seed=5))
    for cls in (1, 2):
        members = X[y == cls]
        for p in Xo[200:][yo[200:] == cls]:
            best = min(convex_residual(p, a, b)[0] for a in members for b in members)
            assert best < 1e-9


def test_onehot_groups_reprojected(rng):
    n = 40
    cont = rng.standard_normal((n, 2))
    hot = np.eye(3)[rng.integers(0, 3, size=n)]
    X = np.hstack([cont, hot])
    y = np.array([0] * 30 + [1] * 10)
    Xo, yo = smote(X, y, onehot_groups=[[2, 3, 4]])
    np.testing.assert_array_equal(Xo[:, 2:].sum(axis=1), 1.0)
    assert set(np.unique(Xo[:, 2:])) <= {0.0, 1.0}


def test_seed_determinism(rng):
    X = rng.standard_normal((50, 3))
    y = np.array([0] * 40 + [1] * 10)
    a = smote(X, y, SmoteConfig(seed=9))
    b = smote(X, y, SmoteConfig(seed=9))
    c = smote(X, y, SmoteConfig(seed=10))
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[0], c[0])


def test_target_count_and_errors(rng):
    X = rng.standard_normal((12, 2))
    y = np.array([0] * 8 + [1] * 4)
    Xo, yo = smote(X, y, SmoteConfig(target_count=10))
    assert np.bincount(yo).tolist() == [10, 10]
    with pytest.raises(EmptyClass):
        smote(X, y, classes=[0, 1, 2])
    with pytest.raises(ValueError):
        SmoteConfig(k_neighbours=0)
