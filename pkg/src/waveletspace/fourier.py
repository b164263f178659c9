"""Fourier multipliers on the discrete torus."""

from __future__ import annotations

import numpy as np

from .core import GridFunction


def frequency_magnitude(n: int, J: int) -> np.ndarray:
    """|xi| on the rfftn layout with symmetric integer frequencies.

    The Nyquist bin (-2^{J-1}) is its own conjugate; its magnitude is
    2^{J-1} either way, so the multiplier stays conjugate symmetric.
    """
    N = 2**J
    full = np.fft.fftfreq(N, d=1.0 / N)
    half = np.fft.rfftfreq(N, d=1.0 / N)
    if n == 1:
        return np.abs(half)
    X, Y = np.meshgrid(full, half, indexing="ij")
    return np.sqrt(X**2 + Y**2)


def apply_multiplier(f: GridFunction, mult: np.ndarray) -> GridFunction:
    axes = tuple(range(f.n))
    F = np.fft.rfftn(f.values, axes=axes)
    out = np.fft.irfftn(F * mult, s=f.values.shape, axes=axes)
    return GridFunction(f.n, f.J, out)


def bessel_potential(f: GridFunction, s: float) -> GridFunction:
    """(1 + |2 pi xi|^2)^{-s/2} f, the classical Bessel potential of order s."""
    xi = frequency_magnitude(f.n, f.J)
    return apply_multiplier(f, (1.0 + (2 * np.pi * xi) ** 2) ** (-s / 2))
