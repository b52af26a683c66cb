"""Unitary radix-2 FFT (power-of-two lengths), vectorised over leading axes."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bitrev(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(m, inverse):
    sign = 1.0 if inverse else -1.0
    return np.exp(sign * 1j * np.pi * np.arange(m) / m)


def _fft_last(x, inverse):
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"length {n} is not a power of two")
    lead = x.shape[:-1]
    y = np.asarray(x, dtype=complex)[..., _bitrev(n)]
    m = 1
    while m < n:
        y = y.reshape(*lead, n // (2 * m), 2, m)
        a = y[..., 0, :]
        b = y[..., 1, :] * _twiddles(m, inverse)
        y = np.concatenate([a + b, a - b], axis=-1)
        m *= 2
    return y.reshape(*lead, n) / np.sqrt(n)


def fft(x):
    """Unitary forward DFT along the last axis."""
    return _fft_last(np.asarray(x), False)


def ifft(x):
    return _fft_last(np.asarray(x), True)


def fft2(x):
    """Unitary 2D DFT over the last two axes."""
    y = _fft_last(np.asarray(x), False)
    return np.swapaxes(_fft_last(np.swapaxes(y, -1, -2), False), -1, -2)


def ifft2(x):
    y = _fft_last(np.asarray(x), True)
    return np.swapaxes(_fft_last(np.swapaxes(y, -1, -2), True), -1, -2)
