"""
Spectral utilities for faultsynth
---------------------------------
Iterative radix-2 decimation-in-time FFT and the one-sided magnitude
spectrum the frequency-domain features are computed from.
"""

import numpy as np

from src.errors import DataError
from src.tensor import Tensor


def next_power_of_two(n):
    return 1 << max(0, int(n - 1).bit_length())


def _bit_reversal(size):
    bits = size.bit_length() - 1
    idx = np.arange(size)
    rev = np.zeros(size, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def radix2_fft(x):
    """
    FFT along the last axis; the length must be a power of two.

    Stage s combines adjacent blocks of size 2**(s-1) with twiddles
    exp(-2*pi*i*k/2**s).
    """
    x = np.asarray(x, dtype=np.complex128)
    size = x.shape[-1]
    if size & (size - 1):
        raise DataError(f"radix-2 FFT needs a power-of-two length, got {size}")
    lead = x.shape[:-1]
    a = x[..., _bit_reversal(size)]
    block = 2
    while block <= size:
        half = block // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / block)
        a = a.reshape(*lead, size // block, block)
        even = a[..., :half]
        odd = a[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, size)
        block *= 2
    return a


def fft_magnitude(burst):
    """
    One-sided magnitude spectrum of a burst (or a batch [B, L] of bursts).

    The burst is zero-padded to the next power of two P; the result has
    P/2 + 1 bins scaled by 2/L, except DC and Nyquist which are scaled by 1/L.
    """
    x = np.asarray(burst.data if isinstance(burst, Tensor) else burst, dtype=np.float64)
    length = x.shape[-1]
    if length < 2:
        raise DataError(f"fft_magnitude needs at least 2 samples, got {length}")
    padded_len = next_power_of_two(length)
    pad = [(0, 0)] * (x.ndim - 1) + [(0, padded_len - length)]
    spectrum = radix2_fft(np.pad(x, pad))[..., :padded_len // 2 + 1]
    magnitude = np.abs(spectrum) * (2.0 / length)
    magnitude[..., 0] /= 2.0
    magnitude[..., -1] /= 2.0
    return magnitude
