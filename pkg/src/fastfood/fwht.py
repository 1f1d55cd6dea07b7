"""Unnormalized fast Walsh-Hadamard transform and its dense-matrix oracle.

Convention used everywhere in this package: H_1 = [1] and

    H_{2d} = [[H_d,  H_d],
              [H_d, -H_d]]

with no 1/sqrt(d) factor anywhere, so H @ H = d * I. Normalization is owned
by the callers (the fastfood layer folds a fixed constant into its forward
pass); keeping the kernel unnormalized keeps it branch-free.
"""

import numpy as np

__all__ = ["fwht", "fwht_inplace", "hadamard_matrix", "dense_hadamard_matvec"]

# Largest H we agree to materialize: 4096^2 float64 is ~134 MB.
MAX_DENSE_DIM = 4096


def _check_power_of_two(d):
    if d < 1 or (d & (d - 1)) != 0:
        raise ValueError(f"transform length must be a power of two, got {d}")


def fwht_inplace(x, counter=None):
    """Apply the unnormalized Walsh-Hadamard transform along the last axis, in place.

    Iterative radix-2 butterfly: log2(d) sequential passes, each combining
    pairs (a, b) -> (a + b, a - b). Costs d*log2(d) adds/subs per vector and
    never forms a d x d matrix.

    Parameters
    ----------
    x : ndarray, shape (..., d)
        Array with power-of-two last axis, modified in place. The last axis
        must be contiguous; otherwise the pass-splitting reshape would
        silently copy and the in-place contract would break.
    counter : OpCounter, optional
        Credited with the butterfly add/subs.

    Returns
    -------
    x : ndarray
        The same array, now holding H_d applied along the last axis.
    """
    d = x.shape[-1]
    _check_power_of_two(d)
    if x.strides[-1] != x.itemsize:
        raise ValueError("last axis must be contiguous for the in-place transform")
    h = 1
    while h < d:
        pairs = x.reshape(x.shape[:-1] + (d // (2 * h), 2, h))
        even = pairs[..., 0, :]
        odd = pairs[..., 1, :]
        diff = even - odd
        even += odd
        odd[...] = diff
        h *= 2
    if counter is not None and d > 1:
        counter.count_adds(x.size * int(np.log2(d)))
    return x


def fwht(x, counter=None):
    """Out-of-place variant of :func:`fwht_inplace`; the input is left untouched."""
    return fwht_inplace(np.array(x, order="C", copy=True), counter)


def hadamard_matrix(d, dtype=np.float64):
    """Materialize H_d from the recursive definition. Test oracle, d <= 4096."""
    _check_power_of_two(d)
    if d > MAX_DENSE_DIM:
        raise ValueError(f"refusing to materialize H_{d} (limit {MAX_DENSE_DIM})")
    h = np.ones((1, 1), dtype=dtype)
    while h.shape[0] < d:
        h = np.block([[h, h], [h, -h]])
    return h


def dense_hadamard_matvec(x):
    """O(d^2) product against an explicitly materialized H_d.

    Independent oracle for :func:`fwht_inplace`; never used on a production
    path. Always computes in float64.
    """
    x = np.asarray(x)
    h = hadamard_matrix(x.shape[-1], dtype=np.float64)
    return x @ h  # H is symmetric
