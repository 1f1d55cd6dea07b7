"""Arithmetic-operation accounting for the cost-model checks and the benchmark CLI.

The counter tallies what the algorithm does mathematically: one add/sub per
butterfly, one multiply per diagonal entry, one multiply-accumulate per dense
matrix cell. Permutations, copies and numpy temporaries are free.
"""

import math

__all__ = ["OpCounter", "fastfood_forward_ops", "dense_matvec_ops"]


class OpCounter:
    __slots__ = ("adds", "muls")

    def __init__(self):
        self.adds = 0
        self.muls = 0

    def reset(self):
        self.adds = 0
        self.muls = 0

    def count_adds(self, n):
        self.adds += int(n)

    def count_muls(self, n):
        self.muls += int(n)

    @property
    def total(self):
        return self.adds + self.muls

    def __repr__(self):
        return f"OpCounter(adds={self.adds}, muls={self.muls})"


def fastfood_forward_ops(d_pad, m=1):
    """Closed-form op count for one forward pass: m blocks of 3d + 2d*log2(d)."""
    k = int(math.log2(d_pad))
    return m * (3 * d_pad + 2 * d_pad * k)


def dense_matvec_ops(n_out, d_in):
    """Closed-form op count for a dense matvec, one op per multiply-accumulate."""
    return n_out * d_in
