import os

import numpy as np
import pytest


def max_rel_err(got, want):
    """Normwise relative error: max |got - want| / max(1e-30, max |want|)."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = max(1e-30, float(np.max(np.abs(want))) if want.size else 0.0)
    return float(np.max(np.abs(got - want))) / scale if got.size else 0.0


def grad_rel_err(analytic, numeric, floor=1e-6):
    """Per-coordinate relative error with an absolute floor for tiny gradients."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    b = np.asarray(numeric, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def central_diff(f, x, h=1e-5):
    """Central finite differences of scalar f at every coordinate of x (in place)."""
    x = np.asarray(x)
    g = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def mnist_dir():
    """Directory holding the four MNIST IDX files, or None."""
    root = os.environ.get("FASTFOOD_DATA_DIR")
    if not root:
        return None
    from fastfood.data import resolve_mnist_paths
    try:
        resolve_mnist_paths(root)
    except FileNotFoundError:
        return None
    return root


requires_mnist = pytest.mark.skipif(
    mnist_dir() is None,
    reason="MNIST IDX files not found; set FASTFOOD_DATA_DIR to run",
)
