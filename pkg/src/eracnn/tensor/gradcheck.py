"""Central-difference gradient verification against the tape."""

import numpy as np

from .core import ComputeGraph, Tensor


def finite_diff_gradcheck(fn, points, eps=1e-5, max_coords=None, seed=0):
    """Max relative error between tape gradients and central differences.

    ``fn`` is called as ``fn(*points)`` and must return a scalar Tensor;
    ``points`` is a Tensor or a list of Tensors (float64 for meaningful
    tolerances). Differences perturb ``points`` data in place and restore
    it. When ``max_coords`` is given, a seeded random subset of coordinates
    is checked instead of every one (needed for large parameter sets).

    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if isinstance(points, Tensor):
        points = [points]
    for p in points:
        p.requires_grad = True
        p.grad = None

    with ComputeGraph() as graph:
        loss = fn(*points)
        graph.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in points]
    for p in points:
        p.grad = None

    coords = [(i, idx) for i, p in enumerate(points) for idx in range(p.size)]
    if max_coords is not None and len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        chosen = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[int(c)] for c in sorted(chosen)]

    worst = 0.0
    for i, idx in coords:
        flat = points[i].data.reshape(-1)
        saved = flat[idx]
        flat[idx] = saved + eps
        f_plus = fn(*points).item()
        flat[idx] = saved - eps
        f_minus = fn(*points).item()
        flat[idx] = saved
        numeric = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[i].reshape(-1)[idx]
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
