from nodereg.objective.loss import LossReport, grad_wrt_final_cloud, total_loss
from nodereg.objective.regularizers import (
    loss_jdet,
    loss_jdet_gradient,
    loss_mag,
    loss_mag_source,
    loss_smt,
    loss_smt_gradient,
)
from nodereg.objective.similarity import (
    box_sum,
    local_ncc_map,
    mse,
    mse_gradient,
    ncc,
    ncc_gradient,
    similarity_gradient,
    similarity_loss,
)
