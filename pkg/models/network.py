"""
Roughness-translation network description
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

# (in_channels, out_channels, kernel) per layer; ReLU after the hidden layers
ARCHITECTURE: Tuple[Tuple[int, int, int], ...] = (
    (2, 8, 1),
    (8, 8, 3), (8, 8, 3), (8, 8, 3), (8, 8, 3), (8, 8, 3), (8, 8, 3),
    (8, 1, 1),
)


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out, in, k, k)
    bias: np.ndarray    # (out,)
    relu: bool = False

    @property
    def kernel(self) -> int:
        return int(self.weight.shape[-1])


@dataclass
class ConvNetSpec:
    layers: List[ConvLayer] = field(default_factory=list)

    @property
    def parameter_count(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    @classmethod
    def zeros(cls, output_bias: float = 0.0) -> "ConvNetSpec":
        layers = []
        for i, (cin, cout, k) in enumerate(ARCHITECTURE):
            hidden = 0 < i < len(ARCHITECTURE) - 1
            layers.append(ConvLayer(np.zeros((cout, cin, k, k)), np.zeros(cout), relu=hidden))
        layers[-1].bias[:] = output_bias
        return cls(layers=layers)

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 0.3) -> "ConvNetSpec":
        layers = []
        for i, (cin, cout, k) in enumerate(ARCHITECTURE):
            hidden = 0 < i < len(ARCHITECTURE) - 1
            w = rng.normal(0.0, scale / np.sqrt(cin * k * k), size=(cout, cin, k, k))
            b = rng.normal(0.0, 0.05, size=cout)
            layers.append(ConvLayer(w, b, relu=hidden))
        return cls(layers=layers)
