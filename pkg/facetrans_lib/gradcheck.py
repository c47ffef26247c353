"""
Finite-difference verification of autograd gradients

Both checks run in float64.  `directional_check` compares the analytic directional derivative `<grad f, v>` with the
central difference `(f(x + h·v) - f(x - h·v)) / 2h` along random unit directions `v`.  Directions whose segment
crosses a rectifier or absolute-value kink are detected from the one-sided differences and resampled.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import torch

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

DEFAULT_STEP = 1e-4
ScalarFunction = Callable[..., torch.Tensor]


@dataclass(frozen=True)
class GradCheckResult:
    max_relative_error: float
    trials: int
    worst_analytic: float
    worst_numeric: float
    skipped: int = 0

    def passed(self, tolerance: float = 1e-3) -> bool:
        return self.max_relative_error < tolerance


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def __prepare__(inputs: Sequence[torch.Tensor]) -> list[torch.Tensor]:
    return [t.detach().to(torch.float64).clone().requires_grad_(True) for t in inputs]


def directional_check(fn: ScalarFunction, inputs: Sequence[torch.Tensor], trials: int = 50,
                      step: float = DEFAULT_STEP, generator: torch.Generator | None = None,
                      wrt: Sequence[int] | None = None, kink_tolerance: float = 2e-3,
                      max_skips: int = 500) -> GradCheckResult:
    """
    Checks the gradient of scalar `fn(*inputs)` along `trials` random unit directions

    :param fn: Function of the inputs returning a scalar tensor
    :param inputs: Inputs, converted to float64 copies
    :param trials: Number of random directions
    :param step: Central difference step
    :param generator: Source of the directions
    :param wrt: Indices of the inputs to perturb, all of them by default
    :param kink_tolerance:
        Directions whose forward and backward one-sided differences disagree by more than this relative amount are
        skipped and counted in `skipped`, the function is not differentiable on that segment
    :param max_skips: Gives up after this many skipped directions
    """
    generator = generator or torch.Generator().manual_seed(0)
    tensors = __prepare__(inputs)
    wrt = list(range(len(tensors))) if wrt is None else list(wrt)
    value = fn(*tensors)
    grads = torch.autograd.grad(value, [tensors[i] for i in wrt], allow_unused=True)
    grads = [torch.zeros_like(tensors[i]) if g is None else g for i, g in zip(wrt, grads)]

    f0 = float(value.detach())
    worst = GradCheckResult(0.0, 0, 0.0, 0.0)
    checked = skipped = 0
    while checked < trials and skipped < max_skips:
        directions = [torch.randn(tensors[i].shape, generator=generator, dtype=torch.float64) for i in wrt]
        norm = torch.sqrt(sum(torch.sum(d ** 2) for d in directions))
        directions = [d / norm for d in directions]
        analytic = float(sum(torch.sum(g * d) for g, d in zip(grads, directions)))
        with torch.no_grad():
            plus, minus = [t.detach().clone() for t in tensors], [t.detach().clone() for t in tensors]
            for i, d in zip(wrt, directions):
                plus[i] += step * d
                minus[i] -= step * d
            up, down = float(fn(*plus)), float(fn(*minus))
        forward, backward = (up - f0) / step, (f0 - down) / step
        if relative_error(forward, backward, floor=1e-6) > kink_tolerance:
            # the segment [x - hv, x + hv] crosses a kink
            skipped += 1
            continue
        checked += 1
        error = relative_error(analytic, (up - down) / (2 * step))
        if error > worst.max_relative_error:
            worst = GradCheckResult(error, 0, analytic, (up - down) / (2 * step))
    return GradCheckResult(worst.max_relative_error, checked, worst.worst_analytic, worst.worst_numeric, skipped)


def elementwise_check(fn: ScalarFunction, inputs: Sequence[torch.Tensor], step: float = DEFAULT_STEP
                      ) -> GradCheckResult:
    """
    Compares every partial derivative with its own central difference; meant for small smooth functions
    """
    tensors = __prepare__(inputs)
    grads = torch.autograd.grad(fn(*tensors), tensors, allow_unused=True)
    worst = GradCheckResult(0.0, 0, 0.0, 0.0)
    count = 0
    with torch.no_grad():
        for t, g in zip(tensors, grads):
            g = torch.zeros_like(t) if g is None else g
            flat, flat_grad = t.view(-1), g.reshape(-1)
            for j in range(flat.numel()):
                original = float(flat[j])
                flat[j] = original + step
                up = float(fn(*tensors))
                flat[j] = original - step
                down = float(fn(*tensors))
                flat[j] = original
                numeric = (up - down) / (2 * step)
                count += 1
                error = relative_error(float(flat_grad[j]), numeric)
                if error > worst.max_relative_error:
                    worst = GradCheckResult(error, 0, float(flat_grad[j]), numeric)
    return GradCheckResult(worst.max_relative_error, count, worst.worst_analytic, worst.worst_numeric)
