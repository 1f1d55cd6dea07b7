"""Fastfood reparameterization of dense layers: forward and analytic backward.

One block represents a d_pad x d_pad matrix as

    W_hat = norm_const * diag(s) @ H @ diag(g) @ P @ H @ diag(b)

where H is the unnormalized Walsh-Hadamard matrix (:mod:`fastfood.fwht`),
P a fixed random permutation, b a sign-flip diagonal, g a Gaussian diagonal
and s an output-scaling diagonal. Storage is O(d); applying the block costs
O(d log d) via the fast transform. A layer stacks ceil(n_out / d_pad) blocks
to map d_in inputs (zero-padded to the next power of two) to n_out outputs.

In adaptive mode s, g, b are trained by backpropagation; in random mode they
stay fixed at their sampled values. The backward pass propagates adjoints
through the factor chain in O(n log d): H is symmetric, so its adjoint is
another fast transform; the permutation's adjoint is its inverse; diagonal
gradients are elementwise products.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StateError
from .fwht import fwht_inplace, hadamard_matrix

__all__ = [
    "FastfoodBlock",
    "FastfoodLayer",
    "BackwardWorkspace",
    "FastfoodGradients",
    "init_random",
    "init_adaptive",
    "next_pow2",
]

# dense_matrix() materializes five d x d factors; keep it a test-scale tool.
MAX_DENSE_BLOCK_DIM = 1024


def next_pow2(n):
    return 1 << max(0, (int(n) - 1).bit_length())


@dataclass
class FastfoodBlock:
    """Parameters of one d_pad x d_pad unit.

    ``perm`` acts by gathering: (P v)[i] = v[perm[i]]. ``norm_const`` is a
    fixed scalar folded into the forward pass; 1/d_pad makes an all-ones
    block the identity map (H @ H = d * I).
    """

    d_pad: int
    b: np.ndarray
    g: np.ndarray
    s: np.ndarray
    perm: np.ndarray
    norm_const: float
    inv_perm: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        d = self.d_pad
        if d < 1 or (d & (d - 1)) != 0:
            raise ValueError(f"d_pad must be a power of two, got {d}")
        for name in ("b", "g", "s"):
            v = getattr(self, name)
            if v.shape != (d,):
                raise ValueError(f"{name} must have shape ({d},), got {v.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite entries")
        p = np.asarray(self.perm)
        if p.shape != (d,) or not np.array_equal(np.sort(p), np.arange(d)):
            raise ValueError("perm must be a permutation of 0..d_pad-1")
        self.perm = p.astype(np.int64)
        if self.inv_perm is None:
            inv = np.empty(d, dtype=np.int64)
            inv[self.perm] = np.arange(d)
            self.inv_perm = inv

    @classmethod
    def identity(cls, d_pad, dtype=np.float64):
        """All-ones diagonals, identity permutation, norm_const 1: W_hat = d * I."""
        ones = np.ones(d_pad, dtype=dtype)
        return cls(d_pad, ones.copy(), ones.copy(), ones.copy(),
                   np.arange(d_pad), norm_const=1.0)


@dataclass
class BackwardWorkspace:
    """Partial products cached by forward, consumed once by backward.

    Stage arrays have shape (N, m, d_pad); each is the input to the factor
    named by the trailing letters (bx feeds the inner H, phbx feeds g, ...).
    """

    layer: "FastfoodLayer"
    single: bool
    x_pad: np.ndarray     # zero-padded input, shared across blocks
    bx: np.ndarray        # diag(b) x
    hbx: np.ndarray       # H diag(b) x
    phbx: np.ndarray      # P H diag(b) x, after pi-side dropout if active
    gphbx: np.ndarray     # diag(g) P H diag(b) x
    hgphbx: np.ndarray    # H diag(g) P H diag(b) x, feeds the s diagonal
    drop_pi: np.ndarray = None
    drop_s: np.ndarray = None
    consumed: bool = False


@dataclass
class FastfoodGradients:
    """Gradient arrays shaped like the parameters: (m, d_pad) each, dx like x."""

    ds: np.ndarray
    dg: np.ndarray
    db: np.ndarray
    dx: np.ndarray


class FastfoodLayer:
    """A stack of fastfood blocks mapping d_in inputs to n_out outputs.

    Parameters are immutable during evaluation; forward/backward are safe to
    call from several threads as long as each call keeps its own workspace.
    Use :func:`init_random` / :func:`init_adaptive` to build one.
    """

    def __init__(self, blocks, d_in, n_out, mode, dropout_pi=0.0, dropout_s=0.0):
        if not blocks:
            raise ValueError("need at least one block")
        if mode not in ("random", "adaptive"):
            raise ValueError(f"mode must be 'random' or 'adaptive', got {mode!r}")
        d_pad = blocks[0].d_pad
        if any(blk.d_pad != d_pad for blk in blocks):
            raise ValueError("all blocks must share d_pad")
        if len(blocks) * d_pad < n_out:
            raise ValueError("blocks provide fewer than n_out outputs")
        if not (d_pad >= d_in >= 1):
            raise ValueError(f"d_in must be in 1..{d_pad}, got {d_in}")
        for rate, name in ((dropout_pi, "dropout_pi"), (dropout_s, "dropout_s")):
            if not (0.0 <= rate < 1.0):
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        self.blocks = list(blocks)
        self.d_in = int(d_in)
        self.n_out = int(n_out)
        self.mode = mode
        self.dropout_pi = float(dropout_pi)
        self.dropout_s = float(dropout_s)

    @property
    def d_pad(self):
        return self.blocks[0].d_pad

    @property
    def m(self):
        return len(self.blocks)

    @property
    def learnable(self):
        return self.mode == "adaptive"

    def param_count(self):
        """Learnable parameter count: 3 diagonals per block, or 0 in random mode."""
        return 3 * self.m * self.d_pad if self.learnable else 0

    def stored_param_count(self):
        """Everything kept on disk: three diagonals plus the permutation per block."""
        return 4 * self.m * self.d_pad

    # -- evaluation ---------------------------------------------------------

    def _stacked(self, names):
        return [np.stack([getattr(blk, n) for blk in self.blocks]) for n in names]

    def forward(self, x, train=False, rng=None, counter=None):
        """Apply the layer. Returns (y, workspace).

        x may be one vector of length d_in or a batch of shape (N, d_in).
        The workspace caches every partial product needed by
        :meth:`backward` and is valid for exactly one backward call.
        """
        x = np.asarray(x)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.ndim != 2 or xb.shape[1] != self.d_in:
            raise ValueError(f"expected input of length {self.d_in}, got shape {x.shape}")
        if not np.all(np.isfinite(xb)):
            raise FloatingPointError("non-finite input to fastfood forward")
        n, d, m = xb.shape[0], self.d_pad, self.m
        dtype = np.dtype(xb.dtype if np.issubdtype(xb.dtype, np.floating) else np.float64)

        bs, gs, ss = self._stacked(["b", "g", "s"])
        perms = np.stack([blk.perm for blk in self.blocks])
        ncs = np.array([blk.norm_const for blk in self.blocks], dtype=np.float64)

        x_pad = np.zeros((n, d), dtype=dtype)
        x_pad[:, : self.d_in] = xb

        bx = x_pad[:, None, :] * bs[None].astype(dtype)
        hbx = fwht_inplace(bx.copy(), counter)
        phbx = np.take_along_axis(hbx, np.broadcast_to(perms[None], hbx.shape), axis=2)

        drop_pi = drop_s = None
        if train and self.dropout_pi > 0.0:
            drop_pi = _dropout_mask(rng, phbx.shape, self.dropout_pi, dtype)
            phbx = phbx * drop_pi
        gphbx = phbx * gs[None].astype(dtype)
        hgphbx = fwht_inplace(gphbx.copy(), counter)
        out = hgphbx * (ss * ncs[:, None])[None].astype(dtype)
        if train and self.dropout_s > 0.0:
            drop_s = _dropout_mask(rng, out.shape, self.dropout_s, dtype)
            out = out * drop_s
        if counter is not None:
            counter.count_muls(3 * n * m * d)

        y = out.reshape(n, m * d)[:, : self.n_out].copy()
        ws = BackwardWorkspace(self, single, x_pad, bx, hbx, phbx, gphbx, hgphbx,
                               drop_pi, drop_s)
        return (y[0] if single else y), ws

    def backward(self, ws, dy, counter=None):
        """Propagate adjoints through the factor chain of the cached forward.

        dy must match the forward output shape. Diagonal gradients sum over
        the batch; dx keeps the batch axis and is truncated back to d_in.
        """
        if ws is None or ws.layer is not self:
            raise StateError("workspace does not belong to this layer")
        if ws.consumed:
            raise StateError("workspace already consumed by a backward call")
        dy = np.asarray(dy)
        dyb = dy[None, :] if ws.single else dy
        n, d, m = ws.x_pad.shape[0], self.d_pad, self.m
        if dyb.shape != (n, self.n_out):
            raise ValueError(f"dy shape {dy.shape} does not match forward output")
        ws.consumed = True

        bs, gs, ss = self._stacked(["b", "g", "s"])
        inv_perms = np.stack([blk.inv_perm for blk in self.blocks])
        ncs = np.array([blk.norm_const for blk in self.blocks], dtype=np.float64)
        dtype = ws.x_pad.dtype

        e = np.zeros((n, m * d), dtype=dtype)
        e[:, : self.n_out] = dyb
        e = e.reshape(n, m, d)
        if ws.drop_s is not None:
            e = e * ws.drop_s

        ds = np.einsum("nmd,nmd->md", e, ws.hgphbx) * ncs[:, None]
        a = e * (ss * ncs[:, None])[None].astype(dtype)   # dE/d hgphbx
        a = fwht_inplace(a, counter)                      # dE/d gphbx  (H^T = H)
        dg = np.einsum("nmd,nmd->md", a, ws.phbx)
        a = a * gs[None].astype(dtype)                    # dE/d phbx
        if ws.drop_pi is not None:
            a = a * ws.drop_pi
        a = np.take_along_axis(a, np.broadcast_to(inv_perms[None], a.shape), axis=2)
        a = fwht_inplace(np.ascontiguousarray(a), counter)  # dE/d bx
        db = np.einsum("nmd,nd->md", a, ws.x_pad)
        dx_pad = (a * bs[None].astype(dtype)).sum(axis=1)   # dE/d x, summed over blocks
        if counter is not None:
            counter.count_muls(3 * n * m * d)

        dx = np.ascontiguousarray(dx_pad[:, : self.d_in])
        return FastfoodGradients(ds, dg, db, dx[0] if ws.single else dx)

    # -- oracles and bookkeeping --------------------------------------------

    def dense_matrix(self):
        """Materialize W_hat (n_out x d_pad) from the five factor matrices.

        Test oracle: builds each block as an explicit product of dense
        factors, independent of the fast transform path.
        """
        d = self.d_pad
        if d > MAX_DENSE_BLOCK_DIM:
            raise ValueError(f"refusing to materialize blocks with d_pad={d} "
                             f"(limit {MAX_DENSE_BLOCK_DIM})")
        h = hadamard_matrix(d, dtype=np.float64)
        rows = []
        for blk in self.blocks:
            p = np.zeros((d, d))
            p[np.arange(d), blk.perm] = 1.0
            w = blk.norm_const * (np.diag(blk.s) @ h @ np.diag(blk.g) @ p
                                  @ h @ np.diag(blk.b))
            rows.append(w)
        return np.concatenate(rows, axis=0)[: self.n_out]


def _dropout_mask(rng, shape, rate, dtype):
    if rng is None:
        raise ValueError("training with dropout requires an rng")
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(dtype) / dtype.type(keep)


def _sample_block(rng, d_pad, sigma, s_init, dtype):
    b = (rng.integers(0, 2, size=d_pad) * 2 - 1).astype(dtype)
    g = (rng.standard_normal(d_pad) * sigma).astype(dtype)
    if s_init == "chi":
        # Row norms of H g P H b are |g| * sqrt(d); rescaling each by a
        # chi(d)-distributed draw over |g| matches a dense Gaussian matrix.
        u = np.sqrt(rng.chisquare(d_pad, size=d_pad))
        s = (u / np.linalg.norm(g)).astype(dtype)
    elif s_init == "ones":
        s = np.ones(d_pad, dtype=dtype)
    else:
        raise ValueError(f"unknown s_init {s_init!r} (use 'chi' or 'ones')")
    perm = rng.permutation(d_pad)
    return FastfoodBlock(d_pad, b, g, s, perm, norm_const=1.0 / d_pad)


def _init(d_in, n_out, rng_seed, mode, sigma, s_init, dropout_pi, dropout_s, dtype):
    if d_in < 1 or n_out < 1:
        raise ValueError(f"dimensions must be positive, got d_in={d_in}, n_out={n_out}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    d_pad = next_pow2(d_in)
    m = -(-n_out // d_pad)
    blocks = [_sample_block(rng, d_pad, sigma, s_init, np.dtype(dtype)) for _ in range(m)]
    return FastfoodLayer(blocks, d_in, n_out, mode,
                         dropout_pi=dropout_pi, dropout_s=dropout_s)


def init_random(d_in, n_out, rng_seed, sigma=0.01, s_init="chi",
                dropout_pi=0.0, dropout_s=0.0, dtype=np.float64):
    """Sample a non-adaptive layer: all diagonals stay fixed after init.

    b is Rademacher +-1, g is iid Gaussian with standard deviation sigma,
    s follows the chi(d)/|g| scaling rule (configurable via s_init), and the
    permutation is drawn uniformly. Deterministic given the seed.
    """
    return _init(d_in, n_out, rng_seed, "random", sigma, s_init,
                 dropout_pi, dropout_s, dtype)


def init_adaptive(d_in, n_out, rng_seed, sigma=0.01, s_init="chi",
                  dropout_pi=0.0, dropout_s=0.0, dtype=np.float64):
    """Same sampling as :func:`init_random`, but s, g, b are marked learnable."""
    return _init(d_in, n_out, rng_seed, "adaptive", sigma, s_init,
                 dropout_pi, dropout_s, dtype)
