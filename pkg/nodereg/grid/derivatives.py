import numpy as np

from nodereg.grid.types import JacobianMap, VoxelCloud


def _axis_gradient(field: np.ndarray, axis: int) -> np.ndarray:
    # central differences inside, one-sided at faces
    return np.gradient(field, axis=axis, edge_order=1)


def _axis_gradient_transpose(grad: np.ndarray, axis: int) -> np.ndarray:
    g = np.moveaxis(grad, axis, 0)
    out = np.zeros_like(g)
    out[0] -= g[0]
    out[1] += g[0]
    out[-1] += g[-1]
    out[-2] -= g[-1]
    half = 0.5 * g[1:-1]
    out[2:] += half
    out[:-2] -= half
    return np.moveaxis(out, 0, axis)


def field_gradient(field: np.ndarray) -> np.ndarray:
    """Stencil derivative of a channel-first field: out[i, a] = d field_i / d x_a"""
    dim = field.ndim - 1
    return np.stack(
        [np.stack([_axis_gradient(field[i], a) for a in range(dim)]) for i in range(field.shape[0])]
    )


def spatial_gradient(cloud: VoxelCloud) -> np.ndarray:
    """Per-voxel Jacobian matrix of the cloud, shape (dim, dim, *extents)"""
    return field_gradient(cloud.coords)


def spatial_gradient_transpose(grad: np.ndarray) -> np.ndarray:
    """Exact transpose of field_gradient: maps (k, dim, *extents) to (k, *extents)"""
    dim = grad.shape[1]
    out = np.zeros((grad.shape[0],) + grad.shape[2:])
    for i in range(grad.shape[0]):
        for a in range(dim):
            out[i] += _axis_gradient_transpose(grad[i, a], a)
    return out


def determinant(jac: np.ndarray) -> np.ndarray:
    dim = jac.shape[0]
    if dim == 2:
        return jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    cof = determinant_cofactors(jac)
    return sum(jac[0, a] * cof[0, a] for a in range(3))


def determinant_cofactors(jac: np.ndarray) -> np.ndarray:
    """d det / d jac[i, a] at every voxel"""
    dim = jac.shape[0]
    if dim == 2:
        return np.stack([
            np.stack([jac[1, 1], -jac[1, 0]]),
            np.stack([-jac[0, 1], jac[0, 0]]),
        ])
    cof = np.empty_like(jac)
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for a in range(3):
            a1, a2 = (a + 1) % 3, (a + 2) % 3
            cof[i, a] = jac[i1, a1] * jac[i2, a2] - jac[i1, a2] * jac[i2, a1]
    return cof


def jacobian_det_map(cloud: VoxelCloud) -> JacobianMap:
    """Determinant of the discrete Jacobian of the deformation"""
    return JacobianMap(determinant(spatial_gradient(cloud)))
