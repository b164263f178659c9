"""Dyadic geometry, grid containers and parameter checks on the unit n-torus.

Conventions
-----------
* Cubes are half-open: ``Q_{j,k} = prod_i [2^-j k_i, 2^-j (k_i + 1))``, with
  ``k_i`` taken modulo ``2^j``.
* A grid at resolution ``J`` has ``2^J`` cells per axis; sample ``m`` sits at
  the cell corner ``m 2^-J`` and the function is read as constant on the cell.
* Coefficient fields use the Mallat layout: one array with the grid's shape in
  which the block of ``(eps, j)`` occupies ``[2^j, 2^{j+1})`` along axes with
  ``eps_i = 1`` and ``[0, 2^j)`` along axes with ``eps_i = 0``. The scaling
  entry ``eps = 0`` exists only at ``j = 0`` (index ``(0, ..., 0)``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

MAX_LEVEL = 62


class ParameterError(ValueError):
    """Raised when a parameter set violates the standing assumptions."""


@dataclass(frozen=True)
class SpaceParams:
    """Exponents (n, t, r, p, tau) shared by every norm in the package.

    ``t`` may be negative (derivatives shift it down), but ``p (r + t)``
    must lie in ``[0, n)``.
    """

    n: int = 1
    t: float = 0.0
    r: float = 0.25
    p: float = 2.0
    tau: float = 0.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ParameterError(f"dimension n must be 1 or 2, got {self.n}")
        if not 1.0 < self.p < math.inf:
            raise ParameterError(f"p must lie in (1, inf), got {self.p}")
        if self.tau < 0:
            raise ParameterError(f"tau must be >= 0, got {self.tau}")
        gap = self.p * (self.r + self.t)
        if not 0.0 <= gap < self.n:
            raise ParameterError(
                f"need 0 <= p(r+t) < n; got p(r+t) = {gap:g} with n = {self.n}"
            )

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def gap(self) -> float:
        """n - (t + r) p, the dimension of the fractal limit set."""
        return self.n - (self.t + self.r) * self.p

    def require_small_smoothness(self) -> None:
        """Extra hypothesis t + r < 1 used by the Q-functional machinery."""
        if not self.r + self.t < 1.0:
            raise ParameterError(f"need r + t < 1, got {self.r + self.t:g}")

    def replace(self, **kw) -> "SpaceParams":
        d = dict(n=self.n, t=self.t, r=self.r, p=self.p, tau=self.tau)
        d.update(kw)
        return SpaceParams(**d)

    def to_dict(self) -> dict:
        return dict(n=self.n, t=self.t, r=self.r, p=self.p, tau=self.tau)


@dataclass(frozen=True)
class WaveletIndex:
    eps: tuple
    j: int
    k: tuple

    def __post_init__(self):
        eps = tuple(int(e) for e in self.eps)
        k = tuple(int(x) for x in self.k)
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "k", k)
        if len(eps) != len(k) or len(eps) not in (1, 2):
            raise ValueError("eps and k must both have length n in {1, 2}")
        if any(e not in (0, 1) for e in eps):
            raise ValueError(f"eps entries must be 0 or 1, got {eps}")
        if self.j < 0:
            raise ValueError(f"level must be >= 0, got {self.j}")
        if not any(eps) and self.j > 0:
            raise ValueError("eps = 0 is only allowed at level 0")
        if any(not 0 <= x < 2**self.j for x in k):
            raise ValueError(f"k={k} outside 0..2^{self.j}-1")

    @property
    def n(self) -> int:
        return len(self.eps)

    @property
    def cube(self) -> "DyadicCube":
        return DyadicCube(self.j, self.k)

    def slot(self) -> tuple:
        """Array index of this entry in the Mallat layout."""
        return tuple((2**self.j if e else 0) + kk for e, kk in zip(self.eps, self.k))


@dataclass(frozen=True, order=True)
class DyadicCube:
    j: int
    k: tuple

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(x) for x in self.k))
        if not 0 <= self.j <= MAX_LEVEL:
            raise ValueError(f"cube level {self.j} outside 0..{MAX_LEVEL}")
        if any(not 0 <= x < 2**self.j for x in self.k):
            raise ValueError(f"corner {self.k} outside 0..2^{self.j}-1")

    @property
    def n(self) -> int:
        return len(self.k)

    @property
    def side(self) -> float:
        return 2.0**-self.j

    @property
    def volume(self) -> float:
        return 2.0 ** (-self.j * self.n)

    def corner(self) -> tuple:
        return tuple(x * self.side for x in self.k)

    def children(self) -> list:
        return cube_children(self)

    def parent(self) -> "DyadicCube":
        if self.j == 0:
            raise ValueError("the unit cube has no parent")
        return DyadicCube(self.j - 1, tuple(x // 2 for x in self.k))

    def ancestor(self, level: int) -> "DyadicCube":
        if not 0 <= level <= self.j:
            raise ValueError(f"ancestor level {level} outside 0..{self.j}")
        shift = self.j - level
        return DyadicCube(level, tuple(x >> shift for x in self.k))

    def contains(self, other: "DyadicCube") -> bool:
        return cube_contains(self, other)

    def to_dict(self) -> dict:
        return {"j": self.j, "k": list(self.k)}


def cube_children(q: DyadicCube, max_level: int = MAX_LEVEL) -> list:
    if q.j >= max_level:
        raise ValueError(f"cannot refine level {q.j}: maximum level is {max_level}")
    offsets = itertools.product((0, 1), repeat=q.n)
    # axis 0 varies slowest within the product, so order children with the
    # last axis outermost to keep (2,0),(3,0),(2,1),(3,1) ordering
    kids = [
        DyadicCube(q.j + 1, tuple(2 * x + o for x, o in zip(q.k, off)))
        for off in offsets
    ]
    return sorted(kids, key=lambda c: tuple(reversed(c.k)))


def cube_contains(outer: DyadicCube, inner: DyadicCube) -> bool:
    if outer.n != inner.n:
        raise ValueError("cubes live in different dimensions")
    if inner.j < outer.j:
        return False
    return inner.ancestor(outer.j).k == outer.k


def indicator(q: DyadicCube, x) -> int:
    """1 iff the point x lies in q (half-open convention, periodized)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (q.n,):
        raise ValueError(f"point must have {q.n} coordinates")
    scaled = np.floor(np.mod(x, 1.0) * 2**q.j).astype(np.int64)
    return int(tuple(scaled.tolist()) == q.k)


def all_cubes(n: int, j: int) -> Iterator[DyadicCube]:
    for k in itertools.product(range(2**j), repeat=n):
        yield DyadicCube(j, k)


def eps_vectors(n: int, include_zero: bool = False) -> list:
    """{0,1}^n minus zero (the set E_n), lexicographic."""
    vecs = list(itertools.product((0, 1), repeat=n))
    return vecs if include_zero else vecs[1:]


def enlarged_cube_mask(q: DyadicCube, J: int, multiple: float) -> np.ndarray:
    """Boolean grid mask of the cube with the same centre and side multiplied.

    A cell belongs to the enlarged cube when its centre does; distances are
    periodic. ``multiple = 1`` returns the plain cube.
    """
    N = 2**J
    axes = []
    for kk in q.k:
        centre = (kk + 0.5) * q.side
        cells = (np.arange(N) + 0.5) / N
        d = np.abs(cells - centre)
        d = np.minimum(d, 1.0 - d)
        axes.append(d < multiple * q.side / 2 - 1e-15 * q.side)
    mask = axes[0]
    for a in axes[1:]:
        mask = np.multiply.outer(mask, a)
    return mask


@dataclass(frozen=True)
class GridFunction:
    """Real samples on the uniform 2^J-per-axis grid of the n-torus."""

    n: int
    J: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.n}")
        if self.J < 0:
            raise ValueError("J must be >= 0")
        v = np.asarray(self.values, dtype=float)
        shape = (2**self.J,) * self.n
        if v.size != 2 ** (self.J * self.n):
            raise ValueError(f"expected {2 ** (self.J * self.n)} samples, got {v.size}")
        v = v.reshape(shape).copy()
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, func, n: int, J: int) -> "GridFunction":
        x = np.arange(2**J) / 2**J
        if n == 1:
            return cls(1, J, func(x))
        X, Y = np.meshgrid(x, x, indexing="ij")
        return cls(2, J, func(X, Y))

    @classmethod
    def zeros(cls, n: int, J: int) -> "GridFunction":
        return cls(n, J, np.zeros((2**J,) * n))

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def cell_volume(self) -> float:
        return 2.0 ** (-self.J * self.n)

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def lp_norm(self, p: float = 2.0) -> float:
        return float((np.abs(self.values) ** p).sum() * self.cell_volume) ** (1 / p)

    def inner(self, other: "GridFunction") -> float:
        _check_same_grid(self, other)
        return float((self.values * other.values).sum() * self.cell_volume)

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            _check_same_grid(self, other)
            other = other.values
        return GridFunction(self.n, self.J, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.n, self.J, -self.values)


def _check_same_grid(a, b):
    if (a.n, a.J) != (b.n, b.J):
        raise ValueError(f"grid mismatch: (n={a.n}, J={a.J}) vs (n={b.n}, J={b.J})")


def level_slices(n: int, eps: tuple, j: int) -> tuple:
    return tuple(slice(2**j, 2 ** (j + 1)) if e else slice(0, 2**j) for e in eps[:n])


@dataclass(frozen=True)
class CoefficientField:
    """Map (eps, j, k) -> coefficient for 0 <= j < J, stored in Mallat layout."""

    n: int
    J: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.n}")
        d = np.asarray(self.data, dtype=float)
        shape = (2**self.J,) * self.n
        if d.size != 2 ** (self.J * self.n):
            raise ValueError(f"incomplete field: expected {2 ** (self.J * self.n)} entries, got {d.size}")
        d = d.reshape(shape).copy()
        if not np.all(np.isfinite(d)):
            raise ValueError("coefficients must be finite")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @classmethod
    def zeros(cls, n: int, J: int) -> "CoefficientField":
        return cls(n, J, np.zeros((2**J,) * n))

    @classmethod
    def delta(cls, idx: WaveletIndex, J: int, amplitude: float = 1.0) -> "CoefficientField":
        if idx.j >= J:
            raise ValueError(f"level {idx.j} not resolved at J={J}")
        d = np.zeros((2**J,) * idx.n)
        d[idx.slot()] = amplitude
        return cls(idx.n, J, d)

    @classmethod
    def from_levels(cls, n: int, J: int, func, scaling: float = 0.0) -> "CoefficientField":
        """Build a field whose block (eps, j) is ``func(eps, j, k_arrays)``."""
        d = np.zeros((2**J,) * n)
        d[(0,) * n] = scaling
        for j in range(J):
            ks = np.meshgrid(*[np.arange(2**j)] * n, indexing="ij")
            for eps in eps_vectors(n):
                d[level_slices(n, eps, j)] = func(eps, j, tuple(ks))
        return cls(n, J, d)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def scaling(self) -> float:
        return float(self.data[(0,) * self.n])

    def block(self, eps: tuple, j: int) -> np.ndarray:
        if not any(eps) and j != 0:
            raise ValueError("eps = 0 is only stored at level 0")
        if not 0 <= j < self.J:
            raise ValueError(f"level {j} outside 0..{self.J - 1}")
        if not any(eps):
            return self.data[(slice(0, 1),) * self.n]
        return self.data[level_slices(self.n, eps, j)]

    def __getitem__(self, idx: WaveletIndex) -> float:
        return float(self.data[idx.slot()])

    def level_map(self) -> np.ndarray:
        """Integer array giving the level j of each stored entry."""
        N = 2**self.J
        lv1 = np.zeros(N, dtype=int)
        for j in range(self.J):
            lv1[2**j: 2 ** (j + 1)] = j
        if self.n == 1:
            return lv1
        return np.maximum.outer(lv1, lv1)

    def entries(self) -> Iterator[tuple]:
        """Yield (WaveletIndex, value) in (j, eps, k) order."""
        n = self.n
        yield WaveletIndex((0,) * n, 0, (0,) * n), self.scaling
        for j in range(self.J):
            for eps in eps_vectors(n):
                blk = self.block(eps, j)
                for k in itertools.product(range(2**j), repeat=n):
                    yield WaveletIndex(eps, j, k), float(blk[k])

    def map_levels(self, factor_of_level) -> "CoefficientField":
        """Multiply every entry at level j by ``factor_of_level(j)``."""
        levels = self.level_map()
        factors = np.array([factor_of_level(j) for j in range(max(self.J, 1))], dtype=float)
        return CoefficientField(self.n, self.J, self.data * factors[levels])

    def mask(self, keep: np.ndarray) -> "CoefficientField":
        return CoefficientField(self.n, self.J, np.where(keep, self.data, 0.0))

    def truncate_levels(self, below: int) -> "CoefficientField":
        """Keep the scaling entry and all levels j < below."""
        if below <= 0:
            return self.mask(_scaling_mask(self.n, self.J))
        return self.mask(self.level_map() < below)

    def __add__(self, other: "CoefficientField") -> "CoefficientField":
        _check_same_grid(self, other)
        return CoefficientField(self.n, self.J, self.data + other.data)

    def __sub__(self, other: "CoefficientField") -> "CoefficientField":
        _check_same_grid(self, other)
        return CoefficientField(self.n, self.J, self.data - other.data)

    def __mul__(self, c: float) -> "CoefficientField":
        return CoefficientField(self.n, self.J, self.data * float(c))

    __rmul__ = __mul__


def _scaling_mask(n: int, J: int) -> np.ndarray:
    m = np.zeros((2**J,) * n, dtype=bool)
    m[(0,) * n] = True
    return m


def upsample_blocks(a: np.ndarray, factor: int) -> np.ndarray:
    """Repeat every entry of an n-D array ``factor`` times along each axis."""
    for ax in range(a.ndim):
        a = np.repeat(a, factor, axis=ax)
    return a


def block_sum(a: np.ndarray, factor: int) -> np.ndarray:
    """Sum an n-D array over non-overlapping blocks of side ``factor``."""
    shape = []
    for s in a.shape:
        shape += [s // factor, factor]
    out = a.reshape(shape)
    return out.sum(axis=tuple(range(1, 2 * a.ndim, 2)))


def level_energy(c: CoefficientField, weight_of_level, include_scaling: bool = True) -> list:
    """Per-level arrays ``sum_eps weight(j) |c_{eps,j,k}|^2`` on the level-j grid.

    Entry 0 carries the scaling term (if requested) added to the level-0
    wavelet energy, since both live on the single level-0 cube.
    """
    out = []
    for j in range(c.J):
        e = np.zeros((2**j,) * c.n)
        for eps in eps_vectors(c.n):
            e = e + c.block(eps, j) ** 2
        e = e * weight_of_level(j)
        if j == 0 and include_scaling:
            e = e + weight_of_level(0) * c.scaling**2
        out.append(e)
    return out
