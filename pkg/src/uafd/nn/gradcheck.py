"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import backward


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    n_checked: int
    rel_error: float
    max_abs_error: float
    analytic: np.ndarray | None = field(default=None, repr=False, compare=False)
    numeric: np.ndarray | None = field(default=None, repr=False, compare=False)

    def ok(self, tol: float) -> bool:
        return self.rel_error <= tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def gradcheck(loss_fn, params: dict, step: float = 1e-5, max_coords: int | None = 24, seed: int = 0):
    """Compare ``backward`` against central differences for every parameter.

    ``loss_fn()`` must rebuild the graph from the current ``params`` data and
    return a scalar Tensor; any randomness inside it must be re-seeded per
    call.  At most ``max_coords`` coordinates per parameter are perturbed
    (chosen with a fixed seed); None checks every coordinate.
    """
    analytic = {k: g.copy() for k, g in backward(loss_fn(), params).items()}
    rng = np.random.default_rng(seed)
    results = []
    for name, p in params.items():
        flat = p.data.reshape(-1)
        if max_coords is None or flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        numeric = np.empty(coords.size)
        for j, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + step
            up = float(loss_fn().data)
            flat[c] = orig - step
            down = float(loss_fn().data)
            flat[c] = orig
            numeric[j] = (up - down) / (2.0 * step)
        a = analytic[name].reshape(-1)[coords]
        results.append(GradCheckResult(name, int(coords.size), relative_error(a, numeric),
                                       float(np.max(np.abs(a - numeric))) if coords.size else 0.0,
                                       a.copy(), numeric))
    return results


def combine(name: str, results) -> GradCheckResult:
    """Norm-wise error over the union of the checked coordinates.

    Used for whole graphs, where some tensors have structurally zero
    gradients (a bias feeding batch normalization) whose per-tensor
    relative error is pure round-off.
    """
    a = np.concatenate([r.analytic for r in results])
    n = np.concatenate([r.numeric for r in results])
    return GradCheckResult(name, int(a.size), relative_error(a, n),
                           float(np.max(np.abs(a - n))) if a.size else 0.0, a, n)
