"""Finite-difference gradient verification for tape-built losses.

The oracle never touches the backward pass it is checking: it re-evaluates
the loss at coordinate-wise perturbed parameters under no_grad and compares
central differences against the analytic gradients from backward().
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, no_grad

# relative-error floor: float64 FD roundoff is ~1e-9, so near-zero
# coordinates would otherwise report spurious O(1) relative errors
REL_ERR_FLOOR = 1e-4


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    worst_index: tuple[int, ...]
    analytic: float
    numeric: float
    n_checked: int


@dataclass
class GradCheckReport:
    checks: list[ParamCheck]
    eps: float
    tolerance: float

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def worst(self) -> ParamCheck:
        return max(self.checks, key=lambda c: c.max_rel_err)

    def summary(self) -> str:
        w = self.worst()
        status = "PASS" if self.passed else "FAIL"
        return (
            f"grad_check {status}: max rel err {self.max_rel_err:.3e} "
            f"(tolerance {self.tolerance:.1e}) at {w.name}{list(w.worst_index)} "
            f"analytic={w.analytic:.6e} numeric={w.numeric:.6e}"
        )


def grad_check(
    loss_fn,
    params: list[Parameter],
    eps: float = 1e-5,
    tolerance: float = 1e-4,
    max_coords_per_param: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of loss_fn() against central differences.

    loss_fn is a zero-argument callable returning a scalar Tensor; it must be
    a pure function of the current parameter values (freeze any noise).
    Checks every coordinate unless max_coords_per_param caps the count
    (deterministic subsample).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not params:
        raise ValueError("no parameters to check")
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError(f"grad_check requires float64 parameters, {p.name} is {p.data.dtype}")

    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise ValueError(f"loss is not finite: {loss.data}")
    loss.backward()
    analytic = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for p in params}

    rng = np.random.default_rng(seed)
    checks = []
    with no_grad():
        for p in params:
            flat = p.data.reshape(-1)
            n = flat.size
            if max_coords_per_param is not None and n > max_coords_per_param:
                coords = np.sort(rng.choice(n, size=max_coords_per_param, replace=False))
            else:
                coords = np.arange(n)
            a_flat = analytic[p.name].reshape(-1)
            worst = (0.0, 0, 0.0, 0.0)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = float(loss_fn().data)
                flat[i] = orig - eps
                f_minus = float(loss_fn().data)
                flat[i] = orig
                if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                    raise ValueError(f"loss not finite when perturbing {p.name}[{i}]")
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a = float(a_flat[i])
                rel = abs(a - numeric) / max(abs(a), abs(numeric), REL_ERR_FLOOR)
                if rel > worst[0]:
                    worst = (rel, int(i), a, numeric)
            checks.append(
                ParamCheck(
                    name=p.name,
                    max_rel_err=worst[0],
                    worst_index=np.unravel_index(worst[1], p.data.shape),
                    analytic=worst[2],
                    numeric=worst[3],
                    n_checked=len(coords),
                )
            )
    return GradCheckReport(checks=checks, eps=eps, tolerance=tolerance)
