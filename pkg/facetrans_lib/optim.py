"""
Functional Adam: parameters and moments in, parameters and moments out
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from facetrans_lib.exceptions import InvalidArgumentError, NumericalInstabilityError

__license__ = """
Copyright (c) The facetrans-lib Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

DEFAULT_EPS = 1e-8


@dataclass
class AdamMoments:
    step: int = 0
    first: dict[str, torch.Tensor] = field(default_factory=dict)
    second: dict[str, torch.Tensor] = field(default_factory=dict)

    @staticmethod
    def zeros_like(params: dict[str, torch.Tensor]) -> AdamMoments:
        return AdamMoments(0, {k: torch.zeros_like(v) for k, v in params.items()},
                           {k: torch.zeros_like(v) for k, v in params.items()})


def adam_step(params: dict[str, torch.Tensor], grads: dict[str, torch.Tensor], moments: AdamMoments, lr: float,
              beta1: float, beta2: float, eps: float = DEFAULT_EPS) -> tuple[dict[str, torch.Tensor], AdamMoments]:
    """
    One bias-corrected Adam update

    `w' = w - lr · m̂ / (sqrt(v̂) + eps)` with `m̂ = m / (1 - beta1^t)` and `v̂ = v / (1 - beta2^t)`.

    :raises InvalidArgumentError: Mismatched names or shapes, or hyper-parameters out of range
    :raises NumericalInstabilityError: A gradient contains NaN or infinity
    """
    if not eps > 0:
        raise InvalidArgumentError(f"eps must be > 0, got {eps}")
    if lr < 0 or not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise InvalidArgumentError(f"Invalid Adam hyper-parameters lr={lr}, beta1={beta1}, beta2={beta2}")
    if params.keys() != grads.keys():
        raise InvalidArgumentError(f"Gradients do not match parameters: {sorted(set(params) ^ set(grads))}")

    step = moments.step + 1
    first, second, updated = {}, {}, {}
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape:
            raise InvalidArgumentError(f"Gradient of {name} has shape {tuple(grad.shape)}, "
                                       f"parameter has {tuple(value.shape)}")
        if not torch.all(torch.isfinite(grad)):
            raise NumericalInstabilityError(f"gradient:{name}")
        m = moments.first.get(name, torch.zeros_like(value))
        v = moments.second.get(name, torch.zeros_like(value))
        m = beta1 * m + (1 - beta1) * grad
        v = beta2 * v + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1 ** step)
        v_hat = v / (1 - beta2 ** step)
        updated[name] = value - lr * m_hat / (torch.sqrt(v_hat) + eps)
        first[name], second[name] = m, v
    return updated, AdamMoments(step, first, second)


class ModuleAdam:
    """
    Applies `adam_step` to the trainable parameters of a module, in place under `no_grad`
    """

    def __init__(self, module: nn.Module, lr: float, beta1: float, beta2: float, eps: float = DEFAULT_EPS):
        self.module = module
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.moments = AdamMoments.zeros_like(self.parameters())

    def parameters(self) -> dict[str, torch.Tensor]:
        return {name: p for name, p in self.module.named_parameters() if p.requires_grad}

    def step(self, grads: dict[str, torch.Tensor], lr: float | None = None) -> None:
        params = self.parameters()
        current = {name: p.detach() for name, p in params.items()}
        updated, self.moments = adam_step(current, grads, self.moments, self.lr if lr is None else lr,
                                          self.beta1, self.beta2, self.eps)
        with torch.no_grad():
            for name, p in params.items():
                p.copy_(updated[name])
