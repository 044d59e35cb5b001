"""Convolutional velocity network.

The voxel cloud (coordinates normalized to [-1, 1] per axis) is encoded by
stride-2 convolutions, passed through a bottleneck that optionally receives
the time as an extra constant channel, decoded back to full resolution by
nearest upsampling + convolution, and mapped linearly to ``dim`` channels.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from nodereg.velocity import layers
from nodereg.velocity.base import VelocityModel


@dataclass(frozen=True)
class LayerSpec:
    name: str
    c_in: int
    c_out: int
    stride: int
    # extents of the input feature map; upsampling precedes the conv when set
    upsample_to: Tuple[int, ...] = ()
    activation: bool = True

    @property
    def weight_shape(self) -> Tuple[int, ...]:
        return (self.c_out, self.c_in)

    def full_weight_shape(self, dim: int) -> Tuple[int, ...]:
        return self.weight_shape + (layers.KERNEL_TAPS,) * dim

    def size(self, dim: int) -> int:
        return int(np.prod(self.full_weight_shape(dim))) + self.c_out


class NeuralVelocity(VelocityModel):
    """Encoder / time-injected bottleneck / decoder velocity field"""

    kind = "neural"

    def __init__(
        self,
        shape: Tuple[int, ...],
        horizon: float,
        time_mode: str = "autonomous",
        widths: Sequence[int] = (16, 32),
        bottleneck_depth: int = 2
    ):
        super().__init__(shape, horizon, time_mode)
        self.widths = tuple(int(w) for w in widths)
        self.bottleneck_depth = int(bottleneck_depth)
        self.level_extents = [self.shape]
        for _ in self.widths:
            self.level_extents.append(layers.conv_output_extents(self.level_extents[-1], 2))
        self.specs = self._build_specs()
        self._offsets = np.cumsum([0] + [spec.size(self.dim) for spec in self.specs])

    @property
    def time_injected(self) -> bool:
        return self.time_mode == "injected"

    def _build_specs(self) -> List[LayerSpec]:
        specs = []
        c_in = self.dim
        for level, width in enumerate(self.widths):
            specs.append(LayerSpec(f"enc{level}", c_in, width, stride=2))
            c_in = width
        for depth in range(self.bottleneck_depth):
            extra = 1 if depth == 0 and self.time_injected else 0
            specs.append(LayerSpec(f"mid{depth}", c_in + extra, c_in, stride=1))
        for level in reversed(range(len(self.widths))):
            c_out = self.widths[max(level - 1, 0)]
            specs.append(
                LayerSpec(f"dec{level}", c_in, c_out, stride=1, upsample_to=self.level_extents[level])
            )
            c_in = c_out
        specs.append(LayerSpec("out", c_in, self.dim, stride=1, activation=False))
        return specs

    @property
    def num_params(self) -> int:
        return int(self._offsets[-1])

    def descriptor(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "shape": list(self.shape),
            "horizon": self.horizon,
            "time_mode": self.time_mode,
            "widths": list(self.widths),
            "bottleneck_depth": self.bottleneck_depth,
        }

    def unpack(self, theta: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Per-layer (weight, bias) views into the flat vector"""
        params = []
        for i, spec in enumerate(self.specs):
            start = self._offsets[i]
            n_weight = int(np.prod(spec.full_weight_shape(self.dim)))
            weight = theta[start:start + n_weight].reshape(spec.full_weight_shape(self.dim))
            bias = theta[start + n_weight:start + n_weight + spec.c_out]
            params.append((weight, bias))
        return params

    def init_params(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        theta = np.zeros(self.num_params)
        for spec, (weight, _) in zip(self.specs, self.unpack(theta)):
            if spec.name == "out":
                continue  # zero output layer: the initial flow is the identity
            fan_in = spec.c_in * layers.KERNEL_TAPS ** self.dim
            weight[...] = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=weight.shape)
        return theta

    def normalize(self, coords: np.ndarray) -> np.ndarray:
        scale = np.array([2.0 / (n - 1) for n in self.shape]).reshape((-1,) + (1,) * self.dim)
        return coords * scale - 1.0

    def forward(self, theta: np.ndarray, coords: np.ndarray, t: float):
        self.check_inputs(theta, coords, t)
        h = self.normalize(coords)
        cache = []
        for spec, (weight, bias) in zip(self.specs, self.unpack(theta)):
            pre_upsample = None
            if spec.upsample_to:
                pre_upsample = h.shape[1:]
                h = layers.upsample_forward(h, spec.upsample_to)
            if spec.name == "mid0" and self.time_injected:
                h = np.concatenate([h, np.full((1,) + h.shape[1:], float(t))], axis=0)
            x = h
            h = layers.conv_forward(x, weight, bias, spec.stride)
            if spec.activation:
                h = np.tanh(h)
            cache.append((x, h, pre_upsample))
        return h, cache

    def backward(self, theta: np.ndarray, cache: Any, cotangent: np.ndarray):
        d_theta = np.zeros(self.num_params)
        grads = self.unpack(d_theta)
        params = self.unpack(theta)
        g = cotangent
        for i in reversed(range(len(self.specs))):
            spec = self.specs[i]
            x, h, pre_upsample = cache[i]
            if spec.activation:
                g = layers.tanh_backward(h, g)
            g, d_weight, d_bias = layers.conv_backward(x, params[i][0], spec.stride, g)
            grads[i][0][...] = d_weight
            grads[i][1][...] = d_bias
            if spec.name == "mid0" and self.time_injected:
                g = g[:-1]
            if pre_upsample is not None:
                g = layers.upsample_backward(g, pre_upsample)
        scale = np.array([2.0 / (n - 1) for n in self.shape]).reshape((-1,) + (1,) * self.dim)
        return g * scale, d_theta
