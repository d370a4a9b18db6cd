"""Pure numpy implementations of the hot kernels.

These are the reference semantics for ``_kernels.pyx``.  The atomic kernel
returns integers and agrees bit-for-bit with the compiled version; the
resampling kernel agrees to floating-point summation order.
"""

from __future__ import annotations

import numpy as np

from ._rng import TAG_ATOMS, draw, mix64

_U64 = np.uint64
#: Columns of the atomic kernel output.
ATOMIC_COLUMNS = ("a1", "a2", "b2", "a3", "b3", "kept2", "kept3")
_BLOCK_ELEMS = 1 << 20


def atomic_spin_sums(keys, n_atoms, threshold, out=None):
    """Per-atom scattering simulation, summarised as integer spin sums.

    For trial ``t`` with key ``keys[t]`` and ``n_atoms[t]`` pseudo-spins:

    * atom ``a`` starts with sign ``s = +-1`` from bit 63 of draw ``3a``;
    * in interval ``k`` (draw ``3a+k``) it scatters when ``draw >> 1`` is
      below ``threshold``; a scattered atom takes a fresh sign from bit 0
      and stays flagged as lost from the input state.

    Output row: ``a1`` (sum of input signs at pulse 1), ``a2``/``a3`` (sum of
    signs of still-unscattered atoms), ``b2``/``b3`` (sum of fresh signs of
    scattered atoms) and the unscattered counts ``kept2``/``kept3``.  The
    collective spin at pulse ``k`` is ``(a_k + sqrt(beta) * b_k) / 2``.
    """
    keys = np.ascontiguousarray(keys, dtype=_U64)
    n_atoms = np.ascontiguousarray(n_atoms, dtype=np.int64)
    if keys.shape != n_atoms.shape or keys.ndim != 1:
        raise ValueError("keys and n_atoms must be equal-length 1-d arrays")
    if out is None:
        out = np.zeros((keys.size, 7), dtype=np.int64)
    thr = _U64(threshold)
    atom_keys = mix64(keys ^ _U64(TAG_ATOMS))
    for n in np.unique(n_atoms):
        (rows,) = np.nonzero(n_atoms == n)
        if n <= 0:
            out[rows] = 0
            continue
        block = max(1, _BLOCK_ELEMS // int(n))
        counters = np.arange(3 * int(n), dtype=_U64).reshape(int(n), 3)
        for start in range(0, rows.size, block):
            idx = rows[start : start + block]
            h = draw(atom_keys[idx, None, None], counters[None])
            sign0 = np.where(h[..., 0] >> _U64(63), 1, -1)
            hit1 = (h[..., 1] >> _U64(1)) < thr
            hit2 = (h[..., 2] >> _U64(1)) < thr
            fresh1 = np.where(h[..., 1] & _U64(1), 1, -1)
            fresh2 = np.where(h[..., 2] & _U64(1), 1, -1)
            kept2 = ~hit1
            kept3 = kept2 & ~hit2
            value3_scattered = np.where(hit2, fresh2, fresh1)
            res = out[idx]
            res[:, 0] = sign0.sum(axis=1)
            res[:, 1] = np.where(kept2, sign0, 0).sum(axis=1)
            res[:, 2] = np.where(hit1, fresh1, 0).sum(axis=1)
            res[:, 3] = np.where(kept3, sign0, 0).sum(axis=1)
            res[:, 4] = np.where(kept3, 0, value3_scattered).sum(axis=1)
            res[:, 5] = kept2.sum(axis=1)
            res[:, 6] = kept3.sum(axis=1)
            out[idx] = res
    return out


def resample_sums(x, keys, out=None):
    """Moment sums of bootstrap resamples of the rows of ``x`` (shape n x 3).

    Resample ``r`` draws ``n`` row indices ``((h >> 32) * n) >> 32`` from the
    stream ``keys[r]``.  Output row: ``sum x_k`` (3) then ``sum x_j x_k`` for
    (11, 12, 13, 22, 23, 33).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=_U64)
    n = x.shape[0]
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError("x must have shape (n, 3)")
    if n >= 1 << 32:
        raise ValueError("too many rows for 32-bit resampling")
    if out is None:
        out = np.zeros((keys.size, 9), dtype=np.float64)
    products = np.column_stack(
        [x, x[:, 0] * x[:, 0], x[:, 0] * x[:, 1], x[:, 0] * x[:, 2],
         x[:, 1] * x[:, 1], x[:, 1] * x[:, 2], x[:, 2] * x[:, 2]]
    )
    counters = np.arange(n, dtype=_U64)
    for r, key in enumerate(keys):
        h = draw(key, counters)
        idx = ((h >> _U64(32)) * _U64(n)) >> _U64(32)
        counts = np.bincount(idx.astype(np.intp), minlength=n).astype(np.float64)
        out[r] = counts @ products
    return out
