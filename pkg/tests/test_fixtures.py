import numpy as np
import pytest
from scipy import ndimage

from nodereg.errors import ConfigError
from nodereg.fixtures import BRAIN_VENTRICLE_SCALE, BRAIN_WARP_AMPLITUDE, DEMO_SIZE, DEMOS, brain_masks, load_demo, smooth_warp_cloud
from nodereg.grid.derivatives import jacobian_det_map


@pytest.mark.parametrize("name", sorted(DEMOS))
def test_demo_pairs_are_consistent(name):
    pair = load_demo(name)
    assert pair.name == name
    assert pair.fixed.shape == pair.moving.shape == pair.fixed_labels.shape == pair.moving_labels.shape
    for image in (pair.fixed, pair.moving):
        assert image.values.min() >= 0.0 and image.values.max() <= 1.0
    assert pair.fixed_labels.labels.max() >= 1


def test_planar_demos_share_size():
    for name in ("circle_donut", "donut_circle", "square_cross", "blobs", "brain"):
        assert load_demo(name).fixed.shape == (DEMO_SIZE, DEMO_SIZE)
    assert load_demo("sphere").fixed.dim == 3


def test_circle_donut_direction():
    pair = load_demo("circle_donut")
    center = DEMO_SIZE // 2
    # circle is filled at the center, the donut is hollow there
    assert pair.fixed.values[center, center] > 0.9
    assert pair.moving.values[center, center] < 0.1


def test_brain_labels_cover_tissue_and_ventricles():
    pair = load_demo("brain")
    assert set(np.unique(pair.fixed_labels.labels)) == {0, 1, 2}
    assert set(np.unique(pair.moving_labels.labels)) <= {0, 1, 2}


def test_brain_moving_ventricles_are_wider():
    pair = load_demo("brain")
    fixed_area = np.count_nonzero(pair.fixed_labels.labels == 2)
    assert np.count_nonzero(pair.moving_labels.labels == 2) > 1.5 * fixed_area
    _, wide = brain_masks(ventricle_scale=BRAIN_VENTRICLE_SCALE)
    _, count = ndimage.label(wide)
    assert count == 2


def test_brain_warp_is_invertible():
    cloud = smooth_warp_cloud((DEMO_SIZE, DEMO_SIZE), amplitude=BRAIN_WARP_AMPLITUDE)
    assert np.all(jacobian_det_map(cloud).dets > 0)


def test_smooth_warp_is_invertible_and_pins_faces():
    cloud = smooth_warp_cloud((32, 32), amplitude=2.5)
    assert np.all(jacobian_det_map(cloud).dets > 0)
    displacement = cloud.displacement()
    assert np.allclose(displacement[:, 0, :], 0.0, atol=1e-12)
    assert np.allclose(displacement[:, :, -1], 0.0, atol=1e-12)


def test_unknown_demo():
    with pytest.raises(ConfigError):
        load_demo("spiral")
