"""Command-line surface: register, warp, metrics, gridviz, ablate and demo.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 divergence.
"""

import logging
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional

import orjson
import typer

from nodereg.config import (
    FlowConfig,
    KernelConfig,
    LossConfig,
    ModelConfig,
    OptimConfig,
    RegistrationConfig,
    get_settings,
)
from nodereg.errors import ConfigError, DivergenceError, FormatError, RegistrationDivergence, ShapeError
from nodereg.fixtures import DEMOS, load_demo
from nodereg.grid.derivatives import jacobian_det_map
from nodereg.grid.io import (
    read_cloud,
    read_image,
    read_labels,
    write_array,
    write_cloud,
    write_image,
    write_jacobian,
    write_labels,
    write_pgm,
)
from nodereg.grid.sampling import warp, warp_labels
from nodereg.grid.types import Image, LabelMap
from nodereg.metrics import metrics_report
from nodereg.optim.ablation import ABLATIONS
from nodereg.optim.registration import RegistrationResult, register
from nodereg.render import render_folds, render_grid, render_jacobian
from nodereg.velocity import save_params

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4

app = typer.Typer(
    name="nodereg",
    help="Diffeomorphic image registration by flowing a voxel cloud through a learned velocity field",
    no_args_is_help=True,
    add_completion=False
)


class Similarity(str, Enum):
    ncc = "ncc"
    mse = "mse"


class FieldKind(str, Enum):
    neural = "neural"
    tensor = "tensor"


class TimeMode(str, Enum):
    autonomous = "autonomous"
    injected = "injected"


class Scheme(str, Enum):
    euler = "euler"
    rk4 = "rk4"


class Retain(str, Enum):
    full = "full"
    endpoints = "endpoints"


class GradientMode(str, Enum):
    adjoint = "adjoint"
    discrete = "discrete"


class WarpedFormat(str, Enum):
    pgm = "pgm"
    raw = "raw"


class Ablation(str, Enum):
    representation = "representation"
    steps = "steps"
    regularizer = "regularizer"


@app.callback()
def configure_logging():
    settings = get_settings()
    logging.basicConfig(level=settings.log_level, format=settings.log_format)


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Translate library errors into the documented exit codes"""
    try:
        yield
    except (ConfigError, ShapeError) as e:
        logger.error(f"Invalid configuration: {e}")
        raise typer.Exit(code=EXIT_USAGE)
    except (FormatError, OSError) as e:
        logger.error(f"I/O error: {e}")
        raise typer.Exit(code=EXIT_IO)
    except DivergenceError as e:
        if isinstance(e, RegistrationDivergence):
            logger.error(f"Registration diverged at iteration {e.iteration}: {e}")
        else:
            logger.error(f"Registration diverged: {e}")
        raise typer.Exit(code=EXIT_DIVERGENCE)


def _write_json(path: Path, payload) -> None:
    path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))


def build_config(
    sim: Similarity = Similarity.ncc,
    ncc_window: int = 21,
    steps: int = 1,
    iters: int = 250,
    lambda_jdet: float = 1000.0,
    lambda_mag: float = 0.01,
    lambda_smt: float = 0.5,
    epsilon: float = 1e-3,
    kernel_radius: int = 2,
    kernel_sigma: float = 1.0,
    field: FieldKind = FieldKind.neural,
    time_mode: TimeMode = TimeMode.autonomous,
    scheme: Scheme = Scheme.euler,
    retain: Retain = Retain.full,
    gradient_mode: GradientMode = GradientMode.adjoint,
    lr: Optional[float] = None,
    fix_boundary: bool = False,
    seed: int = 0
) -> RegistrationConfig:
    """Assemble a RegistrationConfig from cli flag values"""
    try:
        return RegistrationConfig(
            kernel=KernelConfig(radius=kernel_radius, sigma=kernel_sigma),
            model=ModelConfig(kind=field.value, time_mode=time_mode.value),
            flow=FlowConfig(steps=steps, scheme=scheme.value, retain=retain.value),
            loss=LossConfig(
                similarity=sim.value,
                window=ncc_window,
                lambda_jdet=lambda_jdet,
                lambda_mag=lambda_mag,
                lambda_smt=lambda_smt,
                epsilon=epsilon
            ),
            optim=OptimConfig(
                iterations=iters,
                learning_rate=lr,
                gradient_mode=gradient_mode.value,
                seed=seed
            ),
            fix_boundary=fix_boundary
        )
    except ValueError as e:
        # pydantic's ValidationError is a ValueError
        raise ConfigError(str(e)) from e


def load_config(path: Path) -> RegistrationConfig:
    try:
        flat = orjson.loads(Path(path).read_bytes())
    except orjson.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from e
    return RegistrationConfig.from_flat(flat)


def write_artifacts(
    out_dir: Path,
    result: RegistrationResult,
    moving: Image,
    fixed_labels: Optional[LabelMap] = None,
    moving_labels: Optional[LabelMap] = None,
    warped_format: WarpedFormat = WarpedFormat.pgm
) -> dict:
    """Everything a registration leaves behind, next to log.jsonl"""
    out_dir.mkdir(parents=True, exist_ok=True)
    cloud = result.deformation

    if warped_format == WarpedFormat.pgm and moving.dim == 2:
        write_pgm(out_dir / "warped.pgm", result.warped)
    else:
        write_image(out_dir / "warped.raw", result.warped)
    write_cloud(out_dir / "field.raw", cloud)
    jac = jacobian_det_map(cloud)
    write_jacobian(out_dir / "jdet.raw", jac)
    write_pgm(out_dir / "jdet.pgm", render_jacobian(jac))
    write_pgm(out_dir / "neg.pgm", render_folds(jac))
    write_pgm(out_dir / "grid.pgm", render_grid(cloud))
    save_params(out_dir / "theta.raw", result.model, result.theta)

    warped_labels = None
    if moving_labels is not None:
        warped_labels = warp_labels(moving_labels, cloud)
        write_labels(out_dir / "warped_labels.raw", warped_labels)
    metrics = metrics_report(fixed_labels, warped_labels, cloud)
    metrics["loss"] = result.report.as_dict()
    metrics["peak_buffers"] = result.peak_buffers
    _write_json(out_dir / "metrics.json", metrics)
    _write_json(out_dir / "config.json", result.config.to_flat())
    logger.info(f"Wrote registration artifacts to {out_dir}")
    return metrics


def _register_and_write(
    fixed: Image,
    moving: Image,
    config: RegistrationConfig,
    out_dir: Path,
    fixed_labels: Optional[LabelMap],
    moving_labels: Optional[LabelMap],
    warped_format: WarpedFormat
) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "log.jsonl", "wb") as log_stream:
        result = register(fixed, moving, config, log_stream=log_stream)
    return write_artifacts(out_dir, result, moving, fixed_labels, moving_labels, warped_format)


@app.command("register")
def cmd_register(
    fixed: Path = typer.Option(..., "--fixed", help="Fixed image I (pgm, png or raw)"),
    moving: Path = typer.Option(..., "--moving", help="Moving image J"),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir", help="Artifact directory"),
    sim: Similarity = typer.Option(Similarity.ncc, "--sim"),
    ncc_window: int = typer.Option(21, "--ncc-window"),
    steps: int = typer.Option(1, "--steps"),
    iters: int = typer.Option(250, "--iters"),
    lambda_jdet: float = typer.Option(1000.0, "--lambda-jdet"),
    lambda_mag: float = typer.Option(0.01, "--lambda-mag"),
    lambda_smt: float = typer.Option(0.5, "--lambda-smt"),
    epsilon: float = typer.Option(1e-3, "--epsilon"),
    kernel_radius: int = typer.Option(2, "--kernel-radius"),
    kernel_sigma: float = typer.Option(1.0, "--kernel-sigma"),
    field: FieldKind = typer.Option(FieldKind.neural, "--field"),
    time_mode: TimeMode = typer.Option(TimeMode.autonomous, "--time-mode"),
    scheme: Scheme = typer.Option(Scheme.euler, "--scheme"),
    retain: Retain = typer.Option(Retain.full, "--retain"),
    gradient_mode: GradientMode = typer.Option(GradientMode.adjoint, "--gradient-mode"),
    lr: Optional[float] = typer.Option(None, "--lr", help="Defaults to 1e-3 (neural) or 1e-1 (tensor)"),
    fix_boundary: bool = typer.Option(False, "--fix-boundary"),
    seed: int = typer.Option(0, "--seed"),
    warped_format: WarpedFormat = typer.Option(WarpedFormat.pgm, "--warped-format"),
    fixed_labels: Optional[Path] = typer.Option(None, "--fixed-labels", help="Label map of I for Dice"),
    moving_labels: Optional[Path] = typer.Option(None, "--moving-labels", help="Label map of J for Dice"),
    config_path: Optional[Path] = typer.Option(
        None, "--config", help="Replay a config.json; registration flags are then ignored"
    )
):
    """Register MOVING onto FIXED and write warped image, field, Jacobian and logs"""
    with _exit_codes():
        if config_path is not None:
            config = load_config(config_path)
        else:
            config = build_config(
                sim, ncc_window, steps, iters, lambda_jdet, lambda_mag, lambda_smt, epsilon,
                kernel_radius, kernel_sigma, field, time_mode, scheme, retain, gradient_mode,
                lr, fix_boundary, seed
            )
        fixed_image = read_image(fixed)
        moving_image = read_image(moving)
        metrics = _register_and_write(
            fixed_image,
            moving_image,
            config,
            out_dir or Path(get_settings().out_dir),
            read_labels(fixed_labels) if fixed_labels else None,
            read_labels(moving_labels) if moving_labels else None,
            warped_format
        )
        typer.echo(orjson.dumps(metrics, option=orjson.OPT_SERIALIZE_NUMPY).decode())


@app.command("warp")
def cmd_warp(
    field: Path = typer.Option(..., "--field", help="Saved cloud (field.raw)"),
    out: Path = typer.Option(..., "--out", help="Output path (.pgm or raw)"),
    image: Optional[Path] = typer.Option(None, "--image", help="Image to resample linearly"),
    labels: Optional[Path] = typer.Option(None, "--labels", help="Label map to resample by nearest neighbor")
):
    """Apply a saved deformation to an image or a label map"""
    with _exit_codes():
        if (image is None) == (labels is None):
            raise ConfigError("Pass exactly one of --image or --labels")
        cloud = read_cloud(field)
        if image is not None:
            warped = warp(read_image(image), cloud)
            write_image(out, warped)
        else:
            write_labels(out, warp_labels(read_labels(labels), cloud))
        logger.info(f"Wrote {out}")


@app.command("metrics")
def cmd_metrics(
    fixed_labels: Optional[Path] = typer.Option(None, "--fixed-labels"),
    warped_labels: Optional[Path] = typer.Option(None, "--warped-labels"),
    field: Optional[Path] = typer.Option(None, "--field", help="Cloud for the negative Jacobian ratio"),
    label: Optional[List[int]] = typer.Option(None, "--label", help="Label to score; repeatable"),
    out: Optional[Path] = typer.Option(None, "--out", help="Also write the JSON here")
):
    """Dice between label maps and the negative Jacobian ratio of a field"""
    with _exit_codes():
        if (fixed_labels is None) != (warped_labels is None):
            raise ConfigError("--fixed-labels and --warped-labels go together")
        if fixed_labels is None and field is None:
            raise ConfigError("Nothing to measure: pass label maps and/or --field")
        report = metrics_report(
            read_labels(fixed_labels) if fixed_labels else None,
            read_labels(warped_labels) if warped_labels else None,
            read_cloud(field) if field else None,
            label or None
        )
        if out is not None:
            _write_json(out, report)
        typer.echo(orjson.dumps(report).decode())


@app.command("gridviz")
def cmd_gridviz(
    field: Path = typer.Option(..., "--field"),
    out: Path = typer.Option(..., "--out", help="PGM raster"),
    every: int = typer.Option(4, "--every", help="Draw every k-th lattice line")
):
    """Render a cloud as a deformed lattice, white on black"""
    with _exit_codes():
        write_pgm(out, render_grid(read_cloud(field), every=every))


@app.command("ablate")
def cmd_ablate(
    kind: Ablation = typer.Argument(..., help="Which axis to sweep"),
    demo: str = typer.Option("circle_donut", "--demo", help=f"Built-in pair: {', '.join(DEMOS)}"),
    fixed: Optional[Path] = typer.Option(None, "--fixed"),
    moving: Optional[Path] = typer.Option(None, "--moving"),
    iters: int = typer.Option(100, "--iters"),
    sim: Similarity = typer.Option(Similarity.mse, "--sim"),
    lambda_mag: float = typer.Option(0.0, "--lambda-mag"),
    lambda_smt: float = typer.Option(0.0, "--lambda-smt"),
    seed: int = typer.Option(0, "--seed"),
    out: Optional[Path] = typer.Option(None, "--out", help="Write rows as JSON")
):
    """Compare velocity representations, step counts or regularizers on one pair"""
    with _exit_codes():
        if (fixed is None) != (moving is None):
            raise ConfigError("--fixed and --moving go together")
        if fixed is not None:
            fixed_image, moving_image = read_image(fixed), read_image(moving)
        else:
            pair = load_demo(demo)
            fixed_image, moving_image = pair.fixed, pair.moving
        base = build_config(sim=sim, iters=iters, lambda_mag=lambda_mag, lambda_smt=lambda_smt, seed=seed)
        rows = ABLATIONS[kind.value](fixed_image, moving_image, base)
        for row in rows:
            typer.echo(orjson.dumps(row).decode())
        if out is not None:
            _write_json(out, rows)


@app.command("demo")
def cmd_demo(
    name: str = typer.Argument(..., help=f"One of: {', '.join(DEMOS)}"),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir"),
    iters: int = typer.Option(250, "--iters"),
    sim: Similarity = typer.Option(Similarity.mse, "--sim"),
    field: FieldKind = typer.Option(FieldKind.tensor, "--field"),
    lambda_jdet: float = typer.Option(1000.0, "--lambda-jdet"),
    lambda_mag: float = typer.Option(0.0, "--lambda-mag"),
    lambda_smt: float = typer.Option(0.0, "--lambda-smt"),
    lr: Optional[float] = typer.Option(None, "--lr", help="Default 0.1 for tensor, 1e-3 for neural"),
    fix_boundary: bool = typer.Option(False, "--fix-boundary"),
    seed: int = typer.Option(0, "--seed")
):
    """Register a built-in synthetic pair and write the usual artifacts

    Defaults drop the magnitude and smoothness terms and optimize a per-step
    tensor field, which is what the synthetic pairs converge under.
    """
    with _exit_codes():
        pair = load_demo(name)
        config = build_config(
            sim=sim, iters=iters, field=field, lambda_jdet=lambda_jdet, lambda_mag=lambda_mag,
            lambda_smt=lambda_smt, lr=lr, fix_boundary=fix_boundary, seed=seed
        )
        target = out_dir or Path(get_settings().out_dir) / name
        write_image(target / "fixed.pgm" if pair.fixed.dim == 2 else target / "fixed.raw", pair.fixed)
        write_image(target / "moving.pgm" if pair.moving.dim == 2 else target / "moving.raw", pair.moving)
        metrics = _register_and_write(
            pair.fixed, pair.moving, config, target, pair.fixed_labels, pair.moving_labels, WarpedFormat.pgm
        )
        typer.echo(orjson.dumps(metrics, option=orjson.OPT_SERIALIZE_NUMPY).decode())


def main():
    app()


if __name__ == "__main__":
    main()
