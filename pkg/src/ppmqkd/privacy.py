"""Privacy amplification by seeded Toeplitz hashing over GF(2).

A Toeplitz matrix is fully determined by ``rows + cols - 1`` bits, so
both parties regenerate it from a short shared seed and compress their
identical corrected keys to the secure length.  The matrix-vector
product over GF(2) is a binary convolution, evaluated exactly through an
FFT on small integers (coefficients stay far below 2**53, so rounding
back to integers is lossless) and reduced mod 2.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

__all__ = ["toeplitz_hash", "privacy_amplify"]

_FFT_THRESHOLD = 4096


def toeplitz_hash(bits: np.ndarray, out_len: int, seed: int) -> np.ndarray:
    """Multiply ``bits`` by a seeded random Toeplitz matrix over GF(2)."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = len(bits)
    if out_len < 0 or out_len > n:
        raise ValueError(f"output length must lie in [0, {n}], got {out_len}")
    if out_len == 0:
        return np.zeros(0, dtype=np.uint8)
    diag = np.random.default_rng(seed).integers(0, 2, size=n + out_len - 1,
                                                dtype=np.uint8)
    # row i of the matrix is diag[n-1+i : i-1 : -1]; the product is the
    # convolution of diag with bits, sliced at offsets n-1 .. n-1+out_len
    if n >= _FFT_THRESHOLD:
        conv = fftconvolve(diag.astype(np.float64), bits.astype(np.float64))
        window = np.rint(conv[n - 1:n - 1 + out_len]).astype(np.int64)
    else:
        window = np.convolve(diag.astype(np.int64), bits.astype(np.int64))[
            n - 1:n - 1 + out_len]
    return (window & 1).astype(np.uint8)


def privacy_amplify(bits: np.ndarray, secure_length: int,
                    seed: int) -> tuple[np.ndarray, bool]:
    """Compress a corrected key to ``secure_length`` bits.

    Returns ``(final_key, flagged)``; a nonpositive requested length
    yields an empty key with the flag set.  Identical inputs and seed
    give identical outputs on both sides.
    """
    if secure_length <= 0:
        return np.zeros(0, dtype=np.uint8), True
    return toeplitz_hash(bits, secure_length, seed), False
