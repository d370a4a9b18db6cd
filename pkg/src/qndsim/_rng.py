"""Counter-based random streams.

Every random number is a pure function of ``(key, counter)``, so a trial's
draws do not depend on which worker produces it or in which order.  The
mixer is the SplitMix64 finalizer; ``_kernels.pyx`` carries an identical C
copy, and both must be changed together.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
M1 = 0xBF58476D1CE4E5B9
M2 = 0x94D049BB133111EB

# Domain tags for independent sub-streams.
TAG_TRIAL = 0x51D3_0001
TAG_ATOMS = 0xA7035_0002
TAG_BOOT_ATOMS = 0xB0075_0003
TAG_BOOT_RO = 0xB0075_0004

_U64 = np.uint64


def mix64_int(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * M1) & MASK
    z = ((z ^ (z >> 27)) * M2) & MASK
    return z ^ (z >> 31)


def mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=_U64)
    z = (z ^ (z >> _U64(30))) * _U64(M1)
    z = (z ^ (z >> _U64(27))) * _U64(M2)
    return z ^ (z >> _U64(31))


def draw(key, counter) -> np.ndarray:
    """Raw 64-bit output number ``counter`` of the stream ``key``."""
    key = np.asarray(key, dtype=_U64)
    counter = np.asarray(counter, dtype=_U64)
    return mix64(key + (counter + _U64(1)) * _U64(GAMMA))


def derive_key_int(seed: int, *words: int) -> int:
    k = mix64_int(seed ^ 0x243F6A8885A308D3)
    for w in words:
        k = mix64_int(k ^ mix64_int((int(w) & MASK) + GAMMA))
    return k


def derive_keys(seed: int, *columns) -> np.ndarray:
    """Vectorised :func:`derive_key_int` over equally shaped integer columns."""
    cols = [np.asarray(c).astype(_U64) for c in columns]
    shape = np.broadcast_shapes(*(c.shape for c in cols)) if cols else ()
    k = np.full(shape, mix64_int(seed ^ 0x243F6A8885A308D3), dtype=_U64)
    for c in cols:
        k = mix64(k ^ mix64(c + _U64(GAMMA)))
    return k


def uniform(bits: np.ndarray) -> np.ndarray:
    """Map raw 64-bit draws to doubles strictly inside (0, 1), on a 2**-52 grid offset by half a step."""
    return ((bits >> _U64(12)).astype(np.float64) + 0.5) * 2.0**-52


def normals(keys: np.ndarray, n_slots: int) -> np.ndarray:
    """Standard normals, shape ``keys.shape + (n_slots,)``, slot ``s`` from counter ``s``.

    Inverse-CDF is used rather than Box-Muller because ``ndtri`` is an
    elementwise scalar routine, which keeps results independent of array
    length or chunking.
    """
    keys = np.asarray(keys, dtype=_U64)
    counters = np.arange(n_slots, dtype=_U64)
    return ndtri(uniform(draw(keys[..., None], counters)))


def scatter_threshold(eta: float) -> int:
    """Integer threshold on a 63-bit draw giving scattering probability ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must be in [0, 1]")
    return min(int(eta * 2.0**63), 1 << 63)
