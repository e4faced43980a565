"""Central finite-difference verification of analytic gradients.

The caller computes analytic gradients into Parameter.grad first, then
hands over a closure that re-evaluates the same scalar loss from current
parameter values. Each parameter is probed on a sampled subset of
coordinates. `grad_scale` supports adversarial paths where the analytic
gradient should equal a scaled finite difference (e.g. -lambda through a
gradient reversal layer).
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from stance_dann.layers import Parameter
from stance_dann.seeding import rng_for

_DENOM_FLOOR = 1e-8


@dataclass
class ParamCheck:
    name: str
    coords_checked: int
    max_rel_err: float
    passed: bool


@dataclass
class FDReport:
    epsilon: float
    tolerance: float
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    def format(self) -> str:
        lines = []
        for c in self.checks:
            status = "ok" if c.passed else "FAIL"
            lines.append(
                f"{status:4s} {c.name:24s} coords={c.coords_checked:3d} "
                f"max_rel_err={c.max_rel_err:.3e}"
            )
        return "\n".join(lines)


def finite_diff_check(
    loss_fn: Callable[[], float],
    params: list[Parameter],
    epsilon: float = 1e-5,
    tolerance: float = 1e-5,
    max_coords: int = 64,
    seed: int = 0,
    grad_scale: dict[str, float] | None = None,
) -> FDReport:
    """Compare Parameter.grad against central differences of loss_fn.

    For each parameter, analytic grad[i] is checked against
    scale * (f(theta + eps e_i) - f(theta - eps e_i)) / (2 eps) on up to
    `max_coords` sampled coordinates. Failures are collected, not raised.
    """
    report = FDReport(epsilon=epsilon, tolerance=tolerance)
    for p in params:
        scale = 1.0 if grad_scale is None else grad_scale.get(p.name, 1.0)
        flat_value = p.value.reshape(-1)
        flat_grad = p.grad.reshape(-1)
        n = flat_value.size
        if n <= max_coords:
            coords = np.arange(n)
        else:
            rng = rng_for(seed, "fd-coords", p.name)
            coords = rng.choice(n, size=max_coords, replace=False)
        worst = 0.0
        for i in coords:
            orig = flat_value[i]
            flat_value[i] = orig + epsilon
            f_plus = loss_fn()
            flat_value[i] = orig - epsilon
            f_minus = loss_fn()
            flat_value[i] = orig
            fd = scale * (f_plus - f_minus) / (2.0 * epsilon)
            a = flat_grad[i]
            rel = abs(a - fd) / max(abs(a), abs(fd), _DENOM_FLOOR)
            worst = max(worst, rel)
        report.checks.append(
            ParamCheck(
                name=p.name,
                coords_checked=len(coords),
                max_rel_err=worst,
                passed=worst < tolerance,
            )
        )
    return report
