from nodereg.optim.ablation import (
    ABLATIONS,
    run_regularizer_ablation,
    run_representation_ablation,
    run_steps_ablation,
)
from nodereg.optim.adam import Adam
from nodereg.optim.adjoint import (
    AdjointState,
    GradientResult,
    adjoint_gradient,
    backward_sweep,
    discrete_gradient,
    linear_ode_sensitivity,
    ode_gradient,
    registration_gradient,
    step_vjp,
)
from nodereg.optim.registration import RegistrationResult, RegistrationRun, register
