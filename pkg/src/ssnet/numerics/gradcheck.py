"""Analytic-vs-finite-difference gradient verification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream
from .tensor import Parameter

__all__ = ["GradCheckReport", "grad_check"]


@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    worst_param: str = ""
    worst_index: tuple = ()
    per_param: list = field(default_factory=list)  # (name, coords checked, max rel err)

    def __str__(self) -> str:
        lines = [
            f"{name}: {n} coords, max rel err {err:.3e}"
            for name, n, err in self.per_param
        ]
        lines.append(
            f"worst: {self.worst_param}{list(self.worst_index)} "
            f"rel err {self.max_rel_error:.3e}"
            if self.worst_param
            else "no parameters checked"
        )
        return "\n".join(lines)


def _rel_error(a: float, n: float) -> float:
    scale = max(abs(a), abs(n))
    if scale < 1e-8:
        return abs(a - n)  # both effectively zero: absolute comparison
    return abs(a - n) / scale


def grad_check(
    loss_fn,
    params: list[Parameter],
    eps: float = 1e-5,
    max_coords_per_param: int = 24,
    rng: RngStream | None = None,
) -> GradCheckReport:
    """Compare backward-pass gradients against central finite differences.

    `loss_fn` must rebuild the loss graph from the current parameter
    values on every call (64-bit, dropout disabled, any gating fixed by
    the caller's seeding). Up to `max_coords_per_param` coordinates per
    parameter are probed, chosen by `rng` so reruns are reproducible.
    """
    if rng is None:
        rng = RngStream(0, "gradcheck")

    loss = loss_fn()
    loss.backward()
    analytic = {p.name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for p in params}
    for p in params:
        p.zero_grad()

    report = GradCheckReport()
    for p in params:
        n_total = p.data.size
        if n_total == 0:
            continue
        if n_total <= max_coords_per_param:
            coords = np.arange(n_total)
        else:
            coords = rng.permutation(n_total)[:max_coords_per_param]
        flat = p.data.reshape(-1)
        worst = 0.0
        worst_idx: tuple = ()
        for c in coords:
            c = int(c)
            saved = flat[c]
            flat[c] = saved + eps
            f_plus = loss_fn().item()
            flat[c] = saved - eps
            f_minus = loss_fn().item()
            flat[c] = saved
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = _rel_error(float(analytic[p.name].reshape(-1)[c]), numeric)
            if err > worst:
                worst = err
                worst_idx = np.unravel_index(c, p.shape)
        report.per_param.append((p.name, len(coords), worst))
        if worst > report.max_rel_error:
            report.max_rel_error = worst
            report.worst_param = p.name
            report.worst_index = worst_idx
    return report
