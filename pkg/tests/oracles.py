"""Independent brute-force oracles shared by the test modules.

Everything here deliberately avoids the vectorized paths of the package:
metrics are recomputed with plain loops over an exhaustive threshold
sweep, and gradients with central finite differences.
"""

import numpy as np


def roc_points(scores, same):
    """Operating points (P_miss, P_fa) at every distinct score plus open ends."""
    tar = [s for s, lab in zip(scores, same) if lab]
    non = [s for s, lab in zip(scores, same) if not lab]
    points = [(0.0, 1.0)]
    for th in sorted(set(scores)):
        p_miss = sum(1 for s in tar if s < th) / len(tar)
        p_fa = sum(1 for s in non if s >= th) / len(non)
        points.append((p_miss, p_fa))
    points.append((1.0, 0.0))
    return points


def brute_force_eer(scores, same):
    points = roc_points(scores, same)
    for i, (m, f) in enumerate(points):
        if m >= f:
            if m == f:
                return m
            m1, f1 = points[i - 1]
            lam = (f1 - m1) / ((m - m1) - (f - f1))
            return m1 + lam * (m - m1)
    raise AssertionError("no crossing found")


def brute_force_min_dcf(scores, same, p_target=1e-2, c_fa=1.0, c_fr=1.0):
    points = roc_points(scores, same)
    best = min(c_fr * p_target * m + c_fa * (1.0 - p_target) * f for m, f in points)
    return best / min(c_fr * p_target, c_fa * (1.0 - p_target))


def central_difference(fn, x, step):
    """Gradient of scalar fn at array x via elementwise central differences."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        hi = fn(x)
        x[idx] = orig - step
        lo = fn(x)
        x[idx] = orig
        grad[idx] = (hi - lo) / (2.0 * step)
        it.iternext()
    return grad


def max_relative_error(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())
