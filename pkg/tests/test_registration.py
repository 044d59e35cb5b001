import io

import numpy as np
import orjson
import pytest

from nodereg.config import KernelConfig, LossConfig, ModelConfig, OptimConfig, RegistrationConfig
from nodereg.errors import DivergenceError, RegistrationDivergence
from nodereg.fixtures import load_demo, smooth_warp_cloud
from nodereg.grid.sampling import warp, warp_labels
from nodereg.metrics import dice, topology_counts
from nodereg.optim import Adam, register, run_regularizer_ablation, run_representation_ablation, run_steps_ablation
from nodereg.optim import registration as registration_module
from nodereg.optim.ablation import regularizer_variants, representation_variants, steps_variants


def small_config(**optim):
    return RegistrationConfig(
        model=ModelConfig(kind="tensor"),
        kernel=KernelConfig(radius=1),
        loss=LossConfig(similarity="mse", lambda_jdet=10.0, lambda_smt=0.01, lambda_mag=0.001),
        optim=OptimConfig(iterations=optim.pop("iterations", 5), **optim),
    )


def test_adam_first_step_moves_by_learning_rate():
    params = np.zeros(3)
    Adam(lr=0.1).step(params, np.array([2.0, -0.5, 0.0]))
    assert np.allclose(params, [-0.1, 0.1, 0.0], atol=1e-6)


def test_adam_minimizes_quadratic():
    adam = Adam(lr=0.05)
    x = np.array([3.0, -2.0])
    for _ in range(500):
        adam.step(x, 2.0 * x)
    assert np.all(np.abs(x) < 0.05)


def test_identical_images_need_no_deformation(smooth_image):
    image = smooth_image((10, 10))
    result = register(image, image, small_config())
    assert not result.theta.any()
    assert result.deformation.max_displacement() == 0.0
    assert np.array_equal(result.warped.values, image.values)


def test_log_lines_are_json(smooth_image):
    fixed, moving = smooth_image((10, 10), seed=1), smooth_image((10, 10), seed=2)
    stream = io.BytesIO()
    result = register(fixed, moving, small_config(iterations=3), log_stream=stream)
    lines = stream.getvalue().splitlines()
    assert len(lines) == 3
    records = [orjson.loads(line) for line in lines]
    assert [r["iter"] for r in records] == [0, 1, 2]
    assert set(records[0]) == {"iter", "total", "sim", "jdet", "mag", "smt", "rD", "wall_ms"}
    assert records == result.log
    assert [h["action"] for h in result.history] == ["start", "complete"]


def test_same_seed_same_parameters(smooth_image):
    fixed, moving = smooth_image((10, 10), seed=1), smooth_image((10, 10), seed=2)
    config = RegistrationConfig(
        model=ModelConfig(widths=(2, 3), bottleneck_depth=1),
        loss=LossConfig(window=5),
        optim=OptimConfig(iterations=3, seed=11),
    )
    first = register(fixed, moving, config)
    second = register(fixed, moving, config)
    assert np.array_equal(first.theta, second.theta)
    assert np.array_equal(first.warped.values, second.warped.values)


def test_loss_decreases_on_shifted_pair(smooth_image):
    fixed = smooth_image((12, 12), seed=4)
    moving = warp(fixed, smooth_warp_cloud((12, 12), amplitude=1.0))
    result = register(fixed, moving, small_config(iterations=20))
    assert result.report.sim < result.log[0]["sim"]


def test_divergence_carries_last_parameters(smooth_image, monkeypatch):
    fixed, moving = smooth_image((8, 8), seed=1), smooth_image((8, 8), seed=2)
    real = registration_module.registration_gradient
    calls = []

    def flaky(*args, **kwargs):
        calls.append(args[2].copy())
        if len(calls) == 3:
            raise DivergenceError("Non-finite state after step 0", step=0)
        return real(*args, **kwargs)

    monkeypatch.setattr(registration_module, "registration_gradient", flaky)
    with pytest.raises(RegistrationDivergence) as info:
        register(fixed, moving, small_config(iterations=5))
    assert info.value.iteration == 2
    assert info.value.step == 0
    assert np.array_equal(info.value.last_params, calls[2])
    assert np.all(np.isfinite(info.value.last_params))


class TestAblations:
    def test_variant_families(self):
        base = RegistrationConfig()
        labels = [label for label, _ in representation_variants(base)]
        assert labels == ["neural+K", "tensor+K", "tensor"]
        assert representation_variants(base)[2][1].kernel.radius == 0
        steps = steps_variants(base)
        assert [c.flow.steps for _, c in steps] == [1, 2, 3, 4, 5]
        assert all(c.model.time_mode == "autonomous" for _, c in steps)
        regs = regularizer_variants(base)
        assert len(regs) == 4
        assert {(c.kernel.radius > 0, c.loss.lambda_jdet > 0) for _, c in regs} == {
            (True, True), (True, False), (False, True), (False, False)
        }

    def test_rows(self, smooth_image):
        fixed, moving = smooth_image((8, 8), seed=1), smooth_image((8, 8), seed=2)
        base = RegistrationConfig(
            model=ModelConfig(widths=(2,), bottleneck_depth=1),
            loss=LossConfig(similarity="mse"),
            optim=OptimConfig(iterations=2),
        )
        for runner, count in (
            (run_representation_ablation, 3),
            (run_regularizer_ablation, 4),
        ):
            rows = runner(fixed, moving, base)
            assert len(rows) == count
            assert all(set(row) == {"label", "sim", "rD", "params", "wall_ms"} for row in rows)
        rows = run_steps_ablation(fixed, moving, base, steps=(1, 2))
        assert [row["label"] for row in rows] == ["steps=1", "steps=2"]
        tensor_rows = run_representation_ablation(fixed, moving, base)
        assert tensor_rows[1]["params"] == 2 * 64


@pytest.mark.slow
def test_representation_ordering_on_brain():
    pair = load_demo("brain")
    base = RegistrationConfig(
        loss=LossConfig(similarity="mse", lambda_mag=0.0, lambda_smt=0.0),
        optim=OptimConfig(iterations=250),
    )
    rows = {row["label"]: row for row in run_representation_ablation(pair.fixed, pair.moving, base)}
    assert rows["neural+K"]["rD"] <= rows["tensor+K"]["rD"] <= rows["tensor"]["rD"]
    assert rows["tensor"]["sim"] > rows["tensor+K"]["sim"]


@pytest.mark.slow
def test_warped_donut_keeps_its_hole():
    pair = load_demo("circle_donut")
    config = RegistrationConfig(
        model=ModelConfig(kind="tensor"),
        loss=LossConfig(similarity="mse"),
        optim=OptimConfig(iterations=40),
        fix_boundary=True,
    )
    result = register(pair.fixed, pair.moving, config)
    assert result.report.sim < result.log[0]["sim"]
    assert topology_counts(result.warped.values > 0.5) == topology_counts(pair.moving.values > 0.5) == (1, 1)


@pytest.mark.slow
def test_folding_penalty_limits_folds_on_square_cross():
    pair = load_demo("square_cross")
    ratios = []
    for lambda_jdet in (0.0, 1000.0):
        config = RegistrationConfig(
            model=ModelConfig(kind="tensor"),
            loss=LossConfig(similarity="mse", lambda_jdet=lambda_jdet, lambda_mag=0.0, lambda_smt=0.0),
            optim=OptimConfig(iterations=250),
        )
        ratios.append(register(pair.fixed, pair.moving, config).report.neg_jacobian_ratio)
    assert ratios[1] <= ratios[0]


@pytest.mark.slow
def test_step_count_barely_changes_overlap():
    pair = load_demo("blobs")
    base = RegistrationConfig(
        loss=LossConfig(similarity="mse", lambda_mag=0.0, lambda_smt=0.0),
        optim=OptimConfig(iterations=250),
    )
    scores = []
    for _, config in steps_variants(base, steps=(1, 5)):
        result = register(pair.fixed, pair.moving, config)
        warped = warp_labels(pair.moving_labels, result.deformation)
        scores.append(dice(pair.fixed_labels, warped, [1]).mean)
    assert abs(scores[0] - scores[1]) < 0.05 * scores[0]
