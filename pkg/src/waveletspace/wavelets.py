"""Periodized orthonormal tensor-product wavelet transforms on the n-torus.

Two families:

* ``daubechies``: minimal-phase filters of order m built by spectral
  factorization, applied as circular filter banks.
* ``discrete_meyer``: band-limited masks with the polynomial Meyer window,
  applied in the DFT domain.

Normalization: the finest scaling coefficients are ``samples * 2^{-Jn/2}``, so
the transform is orthogonal and ``sum(c**2) == mean(samples**2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import comb

from .core import CoefficientField, GridFunction, WaveletIndex, eps_vectors

MAX_ORDER = 10


@dataclass(frozen=True)
class FilterPair:
    lowpass: np.ndarray
    highpass: np.ndarray

    def __len__(self):
        return len(self.lowpass)


@dataclass(frozen=True)
class WaveletSpec:
    family: str = "daubechies"
    m: int = 2

    def __post_init__(self):
        if self.family not in ("daubechies", "discrete_meyer"):
            raise ValueError(f"unknown wavelet family {self.family!r}")
        if self.family == "daubechies" and not 1 <= self.m <= MAX_ORDER:
            raise ValueError(f"Daubechies order must be in 1..{MAX_ORDER}, got {self.m}")

    @property
    def support_exponent(self):
        """Smallest M with supp(phi) inside [0, 2^M]; None for Meyer."""
        if self.family != "daubechies":
            return None
        return max(0, math.ceil(math.log2(2 * self.m - 1))) if self.m > 1 else 0

    @property
    def min_levels(self) -> int:
        return 3 if self.family == "discrete_meyer" else 1

    def to_dict(self) -> dict:
        return {"family": self.family, "m": self.m}

    @classmethod
    def from_dict(cls, d: dict) -> "WaveletSpec":
        unknown = set(d) - {"family", "m"}
        if unknown:
            raise ValueError(f"unknown wavelet keys: {sorted(unknown)}")
        return cls(d.get("family", "daubechies"), int(d.get("m", 2)))


HAAR = WaveletSpec("daubechies", 1)


@lru_cache(maxsize=None)
def _daubechies_taps(m: int) -> tuple:
    if m == 1:
        return (2**-0.5, 2**-0.5)
    # |H(w)|^2 = 2 cos^{2m}(w/2) q(sin^2(w/2)); factor q through its roots
    q = [comb(m - 1 + k, k, exact=True) for k in range(m)]
    yroots = np.roots(q[::-1])
    zroots = []
    for y in yroots:
        # y = (2 - z - 1/z) / 4  <=>  z^2 - (2 - 4y) z + 1 = 0
        pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        zroots.append(pair[np.argmin(np.abs(pair))])
    poly = np.array([1.0 + 0j])
    for _ in range(m):
        poly = np.convolve(poly, [0.5, 0.5])
    for z in zroots:
        poly = np.convolve(poly, [1.0, -z])
    h = np.real(poly)
    h = h * (math.sqrt(2.0) / h.sum())
    # orient so the largest taps lead (h[0] = (1+sqrt3)/(4 sqrt2) for m=2)
    if abs(h[0]) < abs(h[-1]):
        h = h[::-1]
    return tuple(h)


def daubechies_filter(m: int) -> FilterPair:
    if not 1 <= m <= MAX_ORDER:
        raise ValueError(f"unsupported Daubechies order {m}; use 1..{MAX_ORDER}")
    h = np.array(_daubechies_taps(m))
    L = len(h)
    g = np.array([(-1) ** k * h[L - 1 - k] for k in range(L)])
    return FilterPair(h, g)


def meyer_window(x):
    """The polynomial transition nu: 0 below 0, 1 above 1, nu(x) + nu(1-x) = 1."""
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)


def meyer_phi_hat(xi):
    """Fourier transform of the Meyer scaling function (real, even)."""
    a = np.abs(xi)
    out = np.cos(0.5 * np.pi * meyer_window(3 * a / (2 * np.pi) - 1))
    out = np.where(a <= 2 * np.pi / 3, 1.0, out)
    return np.where(a >= 4 * np.pi / 3, 0.0, out)


def meyer_step_masks(M: int):
    """Low and high masks H, G on the M-point DFT grid (M even).

    H(w) = sqrt2 * phi_hat(2w) with w wrapped to [-pi, pi), and
    G(w) = e^{-iw} H(w + pi), so that |H|^2 + |G|^2 = 2 and PR holds.
    """
    q = np.arange(M)
    w = 2 * np.pi * q / M
    wrap = (w + np.pi) % (2 * np.pi) - np.pi
    H = math.sqrt(2.0) * meyer_phi_hat(2 * wrap)
    wp = (w + 2 * np.pi) % (2 * np.pi) - np.pi  # w + pi wrapped
    Hp = math.sqrt(2.0) * meyer_phi_hat(2 * wp)
    G = np.exp(-1j * w) * Hp
    return H.astype(complex), G


@dataclass(frozen=True)
class MeyerFilterbank:
    J: int
    steps: tuple       # steps[j] = (low, high) on the 2^{j+1}-point grid, energy-normalized
    bands: np.ndarray  # bands[j] for j < J: level-j energy on the 2^J grid; bands[J]: scaling

    def partition_residual(self) -> float:
        res = max(float(np.max(np.abs(np.abs(lo) ** 2 + np.abs(hi) ** 2 - 1.0)))
                  for lo, hi in self.steps)
        return max(res, float(np.max(np.abs(self.bands.sum(axis=0) - 1.0))))


def meyer_filterbank(J: int) -> MeyerFilterbank:
    if J < 3:
        raise ValueError(f"discrete Meyer needs J >= 3 for the transition band, got {J}")
    steps = []
    for j in range(J):
        H, G = meyer_step_masks(2 ** (j + 1))
        steps.append((H / math.sqrt(2), G / math.sqrt(2)))
    xi = np.arange(2**J)
    bands = np.zeros((J + 1, 2**J))
    low = np.ones(2**J)
    for j in range(J - 1, -1, -1):
        lo, hi = steps[j]
        idx = xi % 2 ** (j + 1)
        bands[j] = low * np.abs(hi[idx]) ** 2
        low = low * np.abs(lo[idx]) ** 2
    bands[J] = low
    return MeyerFilterbank(J, tuple(steps), bands)


# -- one-level steps along a chosen axis -------------------------------------

def _dau_analysis(x: np.ndarray, fp: FilterPair, axis: int):
    x = np.moveaxis(x, axis, -1)
    N = x.shape[-1]
    base = 2 * np.arange(N // 2)
    a = np.zeros(x.shape[:-1] + (N // 2,))
    d = np.zeros_like(a)
    for l, (hl, gl) in enumerate(zip(fp.lowpass, fp.highpass)):
        xs = x[..., (base + l) % N]
        a += hl * xs
        d += gl * xs
    return np.moveaxis(a, -1, axis), np.moveaxis(d, -1, axis)


def _dau_synthesis(a: np.ndarray, d: np.ndarray, fp: FilterPair, axis: int):
    a = np.moveaxis(a, axis, -1)
    d = np.moveaxis(d, axis, -1)
    half = a.shape[-1]
    N = 2 * half
    out = np.zeros(a.shape[:-1] + (N,))
    base = 2 * np.arange(half)
    for l, (hl, gl) in enumerate(zip(fp.lowpass, fp.highpass)):
        contrib = hl * a + gl * d
        # for fixed l the targets (base + l) % N are distinct
        out[..., (base + l) % N] += contrib
    return np.moveaxis(out, -1, axis)


def _mey_analysis(x: np.ndarray, axis: int):
    N = x.shape[axis]
    H, G = meyer_step_masks(N)
    shape = [1] * x.ndim
    shape[axis] = N
    X = np.fft.fft(x, axis=axis)
    Ya = X * np.conj(H).reshape(shape)
    Yd = X * np.conj(G).reshape(shape)
    lo = [slice(None)] * x.ndim
    hi = [slice(None)] * x.ndim
    lo[axis] = slice(0, N // 2)
    hi[axis] = slice(N // 2, N)
    A = 0.5 * (Ya[tuple(lo)] + Ya[tuple(hi)])
    D = 0.5 * (Yd[tuple(lo)] + Yd[tuple(hi)])
    return np.real(np.fft.ifft(A, axis=axis)), np.real(np.fft.ifft(D, axis=axis))


def _mey_synthesis(a: np.ndarray, d: np.ndarray, axis: int):
    half = a.shape[axis]
    N = 2 * half
    H, G = meyer_step_masks(N)
    shape = [1] * a.ndim
    shape[axis] = N
    A = np.fft.fft(a, axis=axis)
    D = np.fft.fft(d, axis=axis)
    A2 = np.concatenate([A, A], axis=axis)
    D2 = np.concatenate([D, D], axis=axis)
    X = H.reshape(shape) * A2 + G.reshape(shape) * D2
    return np.real(np.fft.ifft(X, axis=axis))


def analysis_step(x: np.ndarray, spec: WaveletSpec, axis: int):
    """One decimated analysis step along ``axis``: returns (low, high)."""
    if spec.family == "daubechies":
        return _dau_analysis(x, daubechies_filter(spec.m), axis)
    return _mey_analysis(x, axis)


def synthesis_step(a: np.ndarray, d: np.ndarray, spec: WaveletSpec, axis: int):
    if spec.family == "daubechies":
        return _dau_synthesis(a, d, daubechies_filter(spec.m), axis)
    return _mey_synthesis(a, d, axis)


def level_step(block: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    """Split a 2^{j+1}-sided block into Mallat quadrants along every axis."""
    out = block
    for axis in range(block.ndim):
        lo, hi = analysis_step(out, spec, axis)
        out = np.concatenate([lo, hi], axis=axis)
    return out


def level_unstep(block: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    out = block
    for axis in reversed(range(block.ndim)):
        half = out.shape[axis] // 2
        lo = np.take(out, np.arange(half), axis=axis)
        hi = np.take(out, np.arange(half, 2 * half), axis=axis)
        out = synthesis_step(lo, hi, spec, axis)
    return out


def _check_resolution(J: int, spec: WaveletSpec):
    if J < spec.min_levels:
        raise ValueError(
            f"resolution J={J} too small for {spec.family}; need J >= {spec.min_levels}"
        )


def forward_dwt(f: GridFunction, spec: WaveletSpec = HAAR, stop_level: int = 0) -> CoefficientField:
    """Full decimated transform from level J down to ``stop_level`` (default 0).

    With ``stop_level > 0`` the leading 2^{stop_level}-sided block holds
    scaling coefficients at that level instead of coarser detail.
    """
    _check_resolution(f.J, spec)
    n, J = f.n, f.J
    data = f.values * 2.0 ** (-J * n / 2)
    for j in range(J - 1, stop_level - 1, -1):
        sl = (slice(0, 2 ** (j + 1)),) * n
        data[sl] = level_step(data[sl], spec)
    return CoefficientField(n, J, data)


def inverse_dwt(c: CoefficientField, spec: WaveletSpec = HAAR, start_level: int = 0) -> GridFunction:
    _check_resolution(c.J, spec)
    n, J = c.n, c.J
    data = np.array(c.data, dtype=float)
    for j in range(start_level, J):
        sl = (slice(0, 2 ** (j + 1)),) * n
        data[sl] = level_unstep(data[sl], spec)
    return GridFunction(n, J, data * 2.0 ** (J * n / 2))


def scaling_coefficients(f: GridFunction, spec: WaveletSpec, j: int) -> np.ndarray:
    """<f, Phi^0_{j,k}> for all k, as a 2^j-sided array."""
    c = forward_dwt(f, spec, stop_level=j)
    return np.array(c.data[(slice(0, 2**j),) * f.n])


def synthesize_scaling_function(j: int, k: tuple, spec: WaveletSpec, J: int, n: int | None = None) -> GridFunction:
    """Grid samples of the L2-normalized Phi^0_{j,k}."""
    n = len(k) if n is None else n
    data = np.zeros((2**J,) * n)
    data[tuple(k)] = 1.0
    c = CoefficientField(n, J, data)
    return inverse_dwt(c, spec, start_level=j)


def synthesize_basis_function(idx: WaveletIndex, spec: WaveletSpec, J: int) -> GridFunction:
    if idx.j >= J:
        raise ValueError(f"level {idx.j} not resolved at J={J}")
    return inverse_dwt(CoefficientField.delta(idx, J), spec)


def vanishing_moment_residual(spec: WaveletSpec, alpha, J: int = 10, n: int | None = None) -> float:
    """max over eps != 0 of |sum_x x^alpha Phi^eps(x) 2^{-Jn}| on the grid.

    The mother wavelet is taken at a level fine enough that its support does
    not wrap around the torus, so x^alpha is a genuine polynomial on it.
    """
    alpha = tuple(np.atleast_1d(alpha).astype(int))
    n = len(alpha) if n is None else n
    if spec.family == "daubechies":
        span = 2 * spec.m - 1
        j = max(0, math.ceil(math.log2(span)) + 1) if span > 1 else 0
    else:
        j = 0
    j = min(j, J - 1)
    x = np.arange(2**J) / 2**J
    worst = 0.0
    for eps in eps_vectors(n):
        psi = synthesize_basis_function(WaveletIndex(eps, j, (0,) * n), spec, J).values
        w = np.ones_like(psi)
        for ax, a in enumerate(alpha):
            shape = [1] * n
            shape[ax] = -1
            w = w * (x**a).reshape(shape)
        worst = max(worst, abs(float((w * psi).sum() * 2.0 ** (-J * n))))
    return worst
