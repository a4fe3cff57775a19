"""Central finite-difference verification of backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    tolerance: float
    per_tensor: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_tensor.values()) if self.per_tensor else 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def __str__(self) -> str:
        lines = [f"gradient check (tolerance {self.tolerance:g}):"]
        for name, err in sorted(self.per_tensor.items()):
            mark = "ok " if err <= self.tolerance else "FAIL"
            lines.append(f"  [{mark}] {name}: max rel error {err:.3e}")
        lines.append(f"  overall: {'PASS' if self.passed else 'FAIL'} "
                     f"(max {self.max_rel_error:.3e})")
        return "\n".join(lines)


def _rel_error(a: float, n: float, atol: float) -> float:
    if abs(a) < atol and abs(n) < atol:
        # both numerically zero: the central difference is pure roundoff
        # noise there (e.g. a conv bias feeding straight into batch norm)
        return 0.0
    denom = max(abs(a) + abs(n), 1e-8)
    return abs(a - n) / denom


def gradient_check(loss_fn, tensors: dict[str, np.ndarray],
                   analytic: dict[str, np.ndarray], *, tolerance=1e-4,
                   samples_per_tensor=50, step=1e-5, atol=1e-5, rng=None) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    loss_fn re-evaluates the scalar loss from the current contents of
    `tensors` (which are perturbed in place and restored). At most
    `samples_per_tensor` coordinates are probed per tensor, drawn without
    replacement; tensors smaller than that are checked exhaustively.
    Coordinates where both gradients are below `atol` in magnitude count
    as exact matches.
    """
    rng = rng or np.random.default_rng(0)
    report = GradCheckReport(tolerance=tolerance)
    for name, tensor in tensors.items():
        grad = analytic[name]
        flat = tensor.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= samples_per_tensor else rng.choice(n, samples_per_tensor, replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            err = np.inf
            # retry with smaller steps: a ReLU kink crossed by the
            # perturbation shows up as an error that shrinks with the
            # step, a wrong backward pass does not
            for h in (step, step / 16, step / 256):
                flat[i] = orig + h
                plus = loss_fn()
                flat[i] = orig - h
                minus = loss_fn()
                flat[i] = orig
                numeric = (plus - minus) / (2 * h)
                err = min(err, _rel_error(grad.reshape(-1)[i], numeric, atol))
                if err <= tolerance:
                    break
            worst = max(worst, err)
        report.per_tensor[name] = worst
    return report
