from nodereg.grid.derivatives import (
    determinant,
    determinant_cofactors,
    field_gradient,
    jacobian_det_map,
    spatial_gradient,
    spatial_gradient_transpose,
)
from nodereg.grid.io import (
    read_array,
    read_cloud,
    read_image,
    read_jacobian,
    read_labels,
    read_pgm,
    write_array,
    write_cloud,
    write_image,
    write_jacobian,
    write_labels,
    write_pgm,
)
from nodereg.grid.sampling import warp, warp_labels, warp_with_gradient
from nodereg.grid.types import (
    Image,
    JacobianMap,
    LabelMap,
    VoxelCloud,
    identity_coords,
    make_identity_grid,
    require_same_shape,
    validate_shape,
)
