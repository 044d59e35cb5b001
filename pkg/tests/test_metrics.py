import numpy as np
import pytest

from nodereg.errors import ConfigError, ShapeError
from nodereg.fixtures import circle_mask, donut_mask
from nodereg.grid.derivatives import determinant, field_gradient
from nodereg.grid.types import LabelMap, VoxelCloud, identity_coords, make_identity_grid
from nodereg.metrics import dice, metrics_report, neg_jacobian_ratio, topology_counts
from nodereg.objective import loss_jdet


class TestDice:
    def test_identical(self):
        a = LabelMap(np.array([[0, 1], [1, 2]]))
        result = dice(a, a, [1, 2])
        assert result.per_label == {1: 1.0, 2: 1.0}
        assert result.mean == 1.0

    def test_disjoint(self):
        a = LabelMap(np.array([[1, 0], [0, 0]]))
        b = LabelMap(np.array([[0, 0], [0, 1]]))
        assert dice(a, b, [1]).mean == 0.0

    def test_half_overlap(self):
        a = np.zeros((4, 4), dtype=int)
        b = np.zeros((4, 4), dtype=int)
        a[0, :4] = 1
        b[0, 2:] = 1
        b[1, :2] = 1
        assert dice(LabelMap(a), LabelMap(b), [1]).per_label[1] == pytest.approx(0.5)

    def test_absent_labels_excluded_from_mean(self):
        a = LabelMap(np.array([[1, 0], [0, 0]]))
        result = dice(a, a, [1, 9])
        assert result.per_label[9] is None
        assert result.mean == 1.0

    def test_symmetric_and_permutation_invariant(self, rng):
        a = rng.integers(0, 4, size=(6, 6))
        b = rng.integers(0, 4, size=(6, 6))
        forward = dice(LabelMap(a), LabelMap(b), [1, 2, 3])
        backward = dice(LabelMap(b), LabelMap(a), [1, 2, 3])
        assert forward.per_label == backward.per_label
        perm = np.array([0, 3, 1, 2])
        relabeled = dice(LabelMap(perm[a]), LabelMap(perm[b]), [3, 1, 2])
        assert relabeled.per_label[3] == forward.per_label[1]
        assert relabeled.mean == pytest.approx(forward.mean)

    def test_errors(self):
        a = LabelMap(np.zeros((2, 2), dtype=int))
        with pytest.raises(ConfigError):
            dice(a, a, [])
        with pytest.raises(ShapeError):
            dice(a, LabelMap(np.zeros((2, 3), dtype=int)), [1])


class TestNegativeJacobianRatio:
    def test_identity(self):
        assert neg_jacobian_ratio(make_identity_grid((5, 5, 5))) == 0.0

    def test_global_fold_matches_stencil_oracle(self):
        coords = identity_coords((6, 7))
        coords[0] = -coords[0]
        # brute force: forward/backward/central differences by hand
        jac = np.zeros((2, 2, 6, 7))
        for i in range(2):
            for a in range(2):
                f = np.moveaxis(coords[i], a, 0)
                d = np.empty_like(f)
                d[0] = f[1] - f[0]
                d[-1] = f[-1] - f[-2]
                d[1:-1] = (f[2:] - f[:-2]) / 2
                jac[i, a] = np.moveaxis(d, 0, a)
        oracle = np.mean(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0] <= 0)
        assert neg_jacobian_ratio(VoxelCloud(coords)) == oracle == 1.0

    def test_small_smooth_deformation_has_no_folds(self):
        shape = (10, 10)
        grid = identity_coords(shape)
        coords = grid + 0.1 * np.sin(grid[::-1] * 0.5)
        assert neg_jacobian_ratio(VoxelCloud(coords)) == 0.0

    def test_consistent_with_jdet_penalty(self, random_cloud):
        cloud = random_cloud((8, 8), amplitude=0.2)
        dets = determinant(field_gradient(cloud.coords))
        assert loss_jdet(cloud, 0.0) == 0.0
        assert np.all(dets != 0.0)
        assert neg_jacobian_ratio(cloud) == 0.0


def test_topology_of_fixtures():
    assert topology_counts(circle_mask()) == (1, 0)
    assert topology_counts(donut_mask()) == (1, 1)
    two = np.zeros((9, 9), dtype=bool)
    two[1:3, 1:3] = True
    two[5:8, 5:8] = True
    assert topology_counts(two) == (2, 0)


def test_metrics_report_shape():
    a = LabelMap(np.array([[0, 1], [2, 2]]))
    report = metrics_report(a, a, make_identity_grid((2, 2)))
    assert report == {"mean_dice": 1.0, "per_label": {"1": 1.0, "2": 1.0}, "neg_jacobian_ratio": 0.0}
