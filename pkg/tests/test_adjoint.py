import numpy as np
import pytest

from nodereg.config import FlowConfig, LossConfig
from nodereg.errors import ConfigError
from nodereg.flow import integrate
from nodereg.grid.types import make_identity_grid
from nodereg.objective import total_loss
from nodereg.optim import adjoint_gradient, discrete_gradient, linear_ode_sensitivity, registration_gradient
from nodereg.smoothing import make_kernel
from nodereg.velocity import NeuralVelocity, TensorVelocity
from tests.helpers import assert_gradient_matches

SHAPE = (8, 8)
LOSS = LossConfig(window=5, lambda_jdet=10.0, lambda_mag=0.1, lambda_smt=0.5)


@pytest.fixture
def pair(smooth_image):
    return smooth_image(SHAPE, seed=1), smooth_image(SHAPE, seed=2)


def neural_instance(scale=0.3, time_mode="injected"):
    model = NeuralVelocity(SHAPE, 1.0, time_mode, widths=(2, 3), bottleneck_depth=1)
    theta = model.init_params(0) + scale * np.random.default_rng(7).standard_normal(model.num_params)
    return model, theta


def tensor_instance(steps, scale=0.3):
    model = TensorVelocity(SHAPE, 1.0, steps)
    return model, scale * np.random.default_rng(3).standard_normal(model.num_params)


def end_to_end_loss(model, kernel, flow, fixed, moving, loss, mask=None):
    q0 = make_identity_grid(SHAPE)

    def fn(theta):
        return total_loss(fixed, moving, integrate(model, kernel, theta, q0, flow, mask), loss).total

    return fn


class TestScalarSensitivity:
    """dz/dt = theta z, L = z(1)^2, dL/dtheta = 2 exp(2 theta)"""

    def test_rk4_matches_closed_form(self):
        _, grad = linear_ode_sensitivity(0.3, 1.0, FlowConfig(steps=256, scheme="rk4"))
        assert grad == pytest.approx(2 * np.exp(0.6), rel=1e-3)

    def test_fine_euler_matches_closed_form(self):
        _, grad = linear_ode_sensitivity(0.3, 1.0, FlowConfig(steps=1024))
        assert grad == pytest.approx(2 * np.exp(0.6), rel=1e-3)

    def test_coarse_euler_carries_first_order_bias(self):
        _, grad = linear_ode_sensitivity(0.3, 1.0, FlowConfig(steps=256))
        assert grad == pytest.approx(2 * np.exp(0.6), rel=2e-3)

    @pytest.mark.parametrize("mode", ["adjoint", "discrete"])
    def test_exact_for_the_discretized_problem(self, mode):
        n, theta = 16, 0.3
        h = 1.0 / n
        loss, grad = linear_ode_sensitivity(theta, 1.0, FlowConfig(steps=n), mode=mode)
        assert loss == pytest.approx((1 + theta * h) ** (2 * n), rel=1e-12)
        assert grad == pytest.approx(2 * n * h * (1 + theta * h) ** (2 * n - 1), rel=1e-12)

    def test_constant_memory_mode(self):
        _, full = linear_ode_sensitivity(0.3, 1.0, FlowConfig(steps=64, scheme="rk4"))
        _, ends = linear_ode_sensitivity(0.3, 1.0, FlowConfig(steps=64, scheme="rk4", retain="endpoints"))
        assert ends == pytest.approx(full, rel=1e-6)


class TestGradientTriangle:
    @pytest.mark.parametrize("scheme", ["euler", "rk4"])
    def test_neural_discrete_matches_finite_differences(self, pair, scheme, rng):
        fixed, moving = pair
        model, theta = neural_instance()
        kernel = make_kernel(1, 1.0, 2)
        flow = FlowConfig(steps=3, scheme=scheme)
        result = discrete_gradient(model, kernel, theta, make_identity_grid(SHAPE), flow, fixed, moving, LOSS)
        fn = end_to_end_loss(model, kernel, flow, fixed, moving, LOSS)
        assert_gradient_matches(fn, result.gradient, theta, rng, rtol=1e-5)

    @pytest.mark.parametrize("scheme", ["euler", "rk4"])
    def test_adjoint_matches_discrete(self, pair, scheme):
        fixed, moving = pair
        model, theta = neural_instance()
        kernel = make_kernel(1, 1.0, 2)
        flow = FlowConfig(steps=3, scheme=scheme)
        q0 = make_identity_grid(SHAPE)
        adjoint = adjoint_gradient(model, kernel, theta, q0, flow, fixed, moving, LOSS)
        discrete = discrete_gradient(model, kernel, theta, q0, flow, fixed, moving, LOSS)
        assert np.allclose(adjoint.gradient, discrete.gradient, rtol=1e-8, atol=1e-12)
        assert adjoint.report.total == pytest.approx(discrete.report.total, rel=1e-12)

    def test_tensor_adjoint_matches_finite_differences_with_mask(self, pair, rng):
        fixed, moving = pair
        model, theta = tensor_instance(steps=2)
        kernel = make_kernel(2, 1.0, 2)
        flow = FlowConfig(steps=2)
        mask = np.ones(SHAPE)
        mask[0] = mask[-1] = mask[:, 0] = mask[:, -1] = 0.0
        result = adjoint_gradient(model, kernel, theta, make_identity_grid(SHAPE), flow, fixed, moving, LOSS, mask)
        fn = end_to_end_loss(model, kernel, flow, fixed, moving, LOSS, mask)
        assert_gradient_matches(fn, result.gradient, theta, rng, rtol=1e-5)

    def test_mse_objective(self, pair, rng):
        fixed, moving = pair
        loss = LOSS.model_copy(update={"similarity": "mse"})
        model, theta = neural_instance(time_mode="autonomous")
        kernel = make_kernel(1, 1.0, 2)
        flow = FlowConfig(steps=2)
        result = adjoint_gradient(model, kernel, theta, make_identity_grid(SHAPE), flow, fixed, moving, loss)
        fn = end_to_end_loss(model, kernel, flow, fixed, moving, loss)
        assert_gradient_matches(fn, result.gradient, theta, rng, rtol=1e-5)

    def test_reported_loss_is_end_to_end_loss(self, pair):
        fixed, moving = pair
        model, theta = neural_instance()
        kernel = make_kernel(1, 1.0, 2)
        flow = FlowConfig(steps=2)
        result = adjoint_gradient(model, kernel, theta, make_identity_grid(SHAPE), flow, fixed, moving, LOSS)
        assert result.report.total == pytest.approx(end_to_end_loss(model, kernel, flow, fixed, moving, LOSS)(theta))


class TestConstantMemory:
    def test_endpoints_mode_close_to_store_all(self, pair):
        fixed, moving = pair
        model, theta = neural_instance(scale=0.1)
        kernel = make_kernel(1, 1.0, 2)
        q0 = make_identity_grid(SHAPE)
        full = adjoint_gradient(model, kernel, theta, q0, FlowConfig(steps=4), fixed, moving, LOSS)
        ends = adjoint_gradient(
            model, kernel, theta, q0, FlowConfig(steps=4, retain="endpoints"), fixed, moving, LOSS
        )
        error = np.linalg.norm(ends.gradient - full.gradient) / np.linalg.norm(full.gradient)
        assert error < 1e-2

    def test_retained_buffers(self, pair):
        fixed, moving = pair
        q0 = make_identity_grid(SHAPE)
        kernel = make_kernel(1, 1.0, 2)
        discrete_peaks, endpoint_peaks = [], []
        for steps in (1, 2, 4, 8):
            model, theta = tensor_instance(steps)
            flow = FlowConfig(steps=steps)
            discrete_peaks.append(
                discrete_gradient(model, kernel, theta, q0, flow, fixed, moving, LOSS).peak_buffers
            )
            endpoint_peaks.append(adjoint_gradient(
                model, kernel, theta, q0, flow.model_copy(update={"retain": "endpoints"}), fixed, moving, LOSS
            ).peak_buffers)
        assert len(set(endpoint_peaks)) == 1
        assert endpoint_peaks[0] <= 4
        assert discrete_peaks == sorted(discrete_peaks)
        assert discrete_peaks[-1] >= 2 * discrete_peaks[1]
        assert discrete_peaks[-1] > endpoint_peaks[-1]


@pytest.mark.parametrize("instance", range(20))
def test_gradient_triangle_on_random_instances(instance, smooth_image):
    rng = np.random.default_rng(100 + instance)
    steps = (1, 2, 4)[instance % 3]
    loss = LOSS.model_copy(update={"similarity": ("mse", "ncc")[instance % 2]})
    fixed = smooth_image(SHAPE, seed=2 * instance)
    moving = smooth_image(SHAPE, seed=2 * instance + 1)
    model = NeuralVelocity(SHAPE, 1.0, "injected", widths=(2, 3), bottleneck_depth=1)
    theta = model.init_params(instance) + 0.3 * rng.standard_normal(model.num_params)
    kernel = make_kernel(1, 1.0, 2)
    flow = FlowConfig(steps=steps)
    q0 = make_identity_grid(SHAPE)
    fn = end_to_end_loss(model, kernel, flow, fixed, moving, loss)
    discrete = discrete_gradient(model, kernel, theta, q0, flow, fixed, moving, loss)
    adjoint = adjoint_gradient(model, kernel, theta, q0, flow, fixed, moving, loss)
    assert_gradient_matches(fn, discrete.gradient, theta, rng, rtol=1e-6)
    assert_gradient_matches(fn, adjoint.gradient, theta, rng, rtol=1e-4)


def test_buffer_counts_across_step_budgets(pair):
    fixed, moving = pair
    q0 = make_identity_grid(SHAPE)
    kernel = make_kernel(1, 1.0, 2)
    discrete_peaks, endpoint_peaks = [], []
    for steps in (1, 5, 50):
        model, theta = tensor_instance(steps, scale=0.05)
        flow = FlowConfig(steps=steps)
        discrete_peaks.append(
            discrete_gradient(model, kernel, theta, q0, flow, fixed, moving, LOSS).peak_buffers
        )
        endpoint_peaks.append(adjoint_gradient(
            model, kernel, theta, q0, flow.model_copy(update={"retain": "endpoints"}), fixed, moving, LOSS
        ).peak_buffers)
    assert endpoint_peaks[0] == endpoint_peaks[1] == endpoint_peaks[2]
    # at least one more buffer per extra step
    assert discrete_peaks[1] - discrete_peaks[0] >= 4
    assert discrete_peaks[2] - discrete_peaks[1] >= 45


class TestEdgeCases:
    @pytest.mark.parametrize("similarity", ["mse", "ncc"])
    @pytest.mark.parametrize("mode", ["adjoint", "discrete"])
    def test_zero_field_on_identical_images(self, smooth_image, similarity, mode):
        image = smooth_image(SHAPE)
        model = TensorVelocity(SHAPE, 1.0, 2)
        loss = LOSS.model_copy(update={"similarity": similarity})
        result = registration_gradient(
            model, make_kernel(1, 1.0, 2), np.zeros(model.num_params), make_identity_grid(SHAPE),
            FlowConfig(steps=2), image, image, loss, mode=mode
        )
        assert np.allclose(result.gradient, 0.0, atol=1e-12)

    def test_discrete_needs_full_trajectory(self, pair):
        fixed, moving = pair
        model, theta = tensor_instance(1)
        with pytest.raises(ConfigError):
            discrete_gradient(
                model, make_kernel(1, 1.0, 2), theta, make_identity_grid(SHAPE),
                FlowConfig(retain="endpoints"), fixed, moving, LOSS
            )

    def test_unknown_mode(self, pair):
        fixed, moving = pair
        model, theta = tensor_instance(1)
        with pytest.raises(ConfigError):
            registration_gradient(
                model, make_kernel(1, 1.0, 2), theta, make_identity_grid(SHAPE),
                FlowConfig(), fixed, moving, LOSS, mode="forward"
            )
