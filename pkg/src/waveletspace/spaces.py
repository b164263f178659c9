"""Wavelet-characterized norms: Sobolev, Morrey, logarithmic Morrey, BMO^r.

All integrands are constant on the level-(J-1) cubes, so every integral
below is an exact finite sum over those cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    CoefficientField,
    DyadicCube,
    GridFunction,
    SpaceParams,
    block_sum,
    eps_vectors,
    upsample_blocks,
)
from .wavelets import HAAR, WaveletSpec, forward_dwt, inverse_dwt, synthesize_scaling_function


@dataclass
class NormReport:
    value: float
    witness_cube: Optional[DyadicCube] = None
    per_cube_table: Optional[list] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {"value": self.value,
             "witness": None if self.witness_cube is None else self.witness_cube.to_dict()}
        if self.per_cube_table is not None:
            d["table"] = [{"j": q.j, "k": list(q.k), "value": v} for q, v in self.per_cube_table]
        return d


def _level_energies(c: CoefficientField, weight_of_level) -> list:
    """e_j = weight(j) * sum_eps |c_{eps,j,k}|^2 on the level-j grid."""
    out = []
    for j in range(c.J):
        e = np.zeros((2**j,) * c.n)
        for eps in eps_vectors(c.n):
            e = e + c.block(eps, j) ** 2
        out.append(e * weight_of_level(j))
    return out


def _accumulate(levels: Sequence[np.ndarray], n: int) -> np.ndarray:
    """sum_j upsample(levels[j]) on the finest level grid of the list."""
    acc = np.zeros((1,) * n)
    for e in levels:
        acc = upsample_blocks(acc, 2) + e if acc.shape != e.shape else acc + e
    return acc


def square_function(c: CoefficientField, r: float) -> GridFunction:
    """S_r c on the grid, scaling term included."""
    n, J = c.n, c.J
    energies = _level_energies(c, lambda j: 2.0 ** (j * (2 * r + n)))
    if J == 0:
        return GridFunction(n, 0, np.full((1,) * n, abs(c.scaling)))
    energies[0] = energies[0] + c.scaling**2
    acc = _accumulate(energies, n)
    return GridFunction(n, J, upsample_blocks(np.sqrt(acc), 2))


def sobolev_norm(c: CoefficientField, r: float, p: float) -> NormReport:
    if not 1 <= p < math.inf:
        raise ValueError(f"p must lie in [1, inf), got {p}")
    n, J = c.n, c.J
    if J == 0:
        return NormReport(abs(c.scaling))
    energies = _level_energies(c, lambda j: 2.0 ** (j * (2 * r + n)))
    energies[0] = energies[0] + c.scaling**2
    acc = _accumulate(energies, n)
    integral = float(np.sum(acc ** (p / 2))) * 2.0 ** (-(J - 1) * n)
    return NormReport(integral ** (1 / p))


def local_integrals(c: CoefficientField, weight_of_level, p: float) -> list:
    """For each level i, the array over level-i cubes Q of
    int_Q (sum_{eps != 0, Q_{j,k} in Q} weight(j) |c|^2 chi_{j,k})^{p/2}.
    """
    n, J = c.n, c.J
    if J == 0:
        return []
    energies = _level_energies(c, weight_of_level)
    G = J - 1
    cell = 2.0 ** (-G * n)
    out = [None] * J
    tail = np.zeros((2**G,) * n)
    for i in range(G, -1, -1):
        tail = tail + upsample_blocks(energies[i], 2 ** (G - i))
        out[i] = block_sum(tail ** (p / 2), 2 ** (G - i)) * cell
    return out


def _morrey_type(c: CoefficientField, weight_of_level, factor_of_level, p: float,
                 scaling_term: float, table: bool) -> NormReport:
    n = c.n
    loc = local_integrals(c, weight_of_level, p)
    best, witness = scaling_term, DyadicCube(0, (0,) * n)
    rows = [] if table else None
    if table and not loc:
        rows.append((DyadicCube(0, (0,) * n), scaling_term))
    for i, arr in enumerate(loc):
        vals = factor_of_level(i) * arr ** (1.0 / p)
        if table and i == 0:
            # the unit cube also carries the mean-value term
            vals = np.maximum(vals, scaling_term)
        k = np.unravel_index(int(np.argmax(vals)), vals.shape)
        if vals[k] > best:
            best, witness = float(vals[k]), DyadicCube(i, tuple(int(x) for x in k))
        if table:
            for kk in np.ndindex(vals.shape):
                rows.append((DyadicCube(i, kk), float(vals[kk])))
    return NormReport(float(best), witness, rows)


def log_morrey_norm(c: CoefficientField, params: SpaceParams, table: bool = False) -> NormReport:
    """sup over dyadic Q of (1 - log2|Q|)^tau [|Q|^{p(r+t)/n - 1} int_Q T_Q^{p/2}]^{1/p},
    together with the mean-value term |c^0_{0,0}|.
    """
    n, t, r, p, tau = params.n, params.t, params.r, params.p, params.tau
    if c.n != n:
        raise ValueError(f"field dimension {c.n} does not match params n={n}")

    def factor(i):
        vol = 2.0 ** (-i * n)
        return vol ** ((r + t) / n - 1 / p) * (1.0 + i * n) ** tau

    return _morrey_type(c, lambda j: 2.0 ** (j * (n + 2 * t)), factor, p,
                        abs(c.scaling), table)


def morrey_norm(c: CoefficientField, params: SpaceParams, table: bool = False) -> NormReport:
    return log_morrey_norm(c, params.replace(tau=0.0), table)


def bmo_r_seminorm(c: CoefficientField, r: float, p_probe: float = 2.0, table: bool = False) -> NormReport:
    """sup_Q |Q|^{-1/p} || (sum_{Q_{j,k} in Q} 2^{2j(n/2 - r)} |c|^2 chi)^{1/2} ||_{L^p(Q)}."""
    if not 1 < p_probe < math.inf:
        raise ValueError(f"probe exponent must lie in (1, inf), got {p_probe}")
    n = c.n
    return _morrey_type(c, lambda j: 2.0 ** (2 * j * (n / 2 - r)),
                        lambda i: 2.0 ** (i * n / p_probe), p_probe, 0.0, table)


def embedding_chain(c: CoefficientField, params: SpaceParams) -> list:
    """Per level i, the pair (lhs, rhs) of arrays over level-i cubes with
    lhs = int_Q (sum 2^{jn-2jr}|c|^2 chi)^{p/2} and
    rhs = |Q|^{p(r+t)/n} int_Q (sum 2^{j(n+2t)}|c|^2 chi)^{p/2}.
    """
    n, t, r, p = params.n, params.t, params.r, params.p
    lhs = local_integrals(c, lambda j: 2.0 ** (j * n - 2 * j * r), p)
    rhs = local_integrals(c, lambda j: 2.0 ** (j * (n + 2 * t)), p)
    return [(a, (2.0 ** (-i * n)) ** (p * (r + t) / n) * b)
            for i, (a, b) in enumerate(zip(lhs, rhs))]


def decay_envelope(c: CoefficientField, r: float, tau: float = 0.0) -> float:
    """sup |c_{eps,j,k}| 2^{j(n/2 - r)} (1 + j)^tau, scaling entry included."""
    n = c.n
    levels = c.level_map()
    J = max(c.J, 1)
    w = np.array([2.0 ** (j * (n / 2 - r)) * (1.0 + j) ** tau for j in range(J)])
    return float(np.max(np.abs(c.data) * w[levels]))


def apply_Tt(c: CoefficientField, t: float) -> CoefficientField:
    """Diagonal multiplier 2^{-jt}; T^0 is the identity."""
    if t < 0:
        raise ValueError("T^t needs t >= 0")
    if t == 0:
        return c
    return c.map_levels(lambda j: 2.0 ** (-j * t))


def derivative_coeffs(c: CoefficientField, beta) -> CoefficientField:
    """Coefficients of the order-beta derivative surrogate: 2^{j|beta|} c."""
    order = int(np.sum(np.atleast_1d(beta)))
    if order == 0:
        return c
    return c.map_levels(lambda j: 2.0 ** (j * order))


def hl_maximal(f: GridFunction) -> GridFunction:
    """Dyadic maximal function: max over dyadic Q containing x of mean_Q |f|."""
    a = np.abs(f.values)
    out = a.copy()
    sums = a
    for i in range(f.J - 1, -1, -1):
        sums = block_sum(sums, 2)
        avg = sums * 2.0 ** (-(f.J - i) * f.n)
        out = np.maximum(out, upsample_blocks(avg, 2 ** (f.J - i)))
    return GridFunction(f.n, f.J, out)


def maximal_bound_constants(spec: WaveletSpec, t: float, J: int, n: int = 1,
                            levels: Optional[Sequence[int]] = None) -> dict:
    """For h the scaling delta at (j, k = 0), the smallest C with
    2^{j(n/2 - t)} <= C * M(T^t h)(x) for every grid x in Q_{j,0}.
    """
    levels = list(range(1, J - 2)) if levels is None else list(levels)
    out = {}
    for j in levels:
        h = synthesize_scaling_function(j, (0,) * n, spec, J)
        th = inverse_dwt(apply_Tt(forward_dwt(h, spec), t), spec)
        M = hl_maximal(th).values
        cell = (slice(0, 2 ** (J - j)),) * n
        out[j] = float(2.0 ** (j * (n / 2 - t)) / np.min(M[cell]))
    return out


def multiplier_ratio(f: CoefficientField, g: CoefficientField, params: SpaceParams,
                     spec: WaveletSpec = HAAR) -> float:
    fg = inverse_dwt(f, spec) * inverse_dwt(g, spec)
    num = sobolev_norm(forward_dwt(fg, spec), params.t, params.p).value
    den = sobolev_norm(g, params.t + params.r, params.p).value
    if den == 0:
        raise ValueError("dictionary element has zero norm")
    return num / den


def multiplier_norm_lower_bound(f: CoefficientField, dictionary, params: SpaceParams,
                                spec: WaveletSpec = HAAR) -> float:
    """max_i ||f g_i||_{H^{t,p}} / ||g_i||_{H^{t+r,p}} over a finite dictionary."""
    dictionary = list(dictionary)
    if not dictionary:
        raise ValueError("empty dictionary")
    best = 0.0
    for g in dictionary:
        if isinstance(g, GridFunction):
            g = forward_dwt(g, spec)
        best = max(best, multiplier_ratio(f, g, params, spec))
    return best


def default_dictionary(n: int, J: int, rng: np.random.Generator, extra=()) -> list:
    """Seeded test fields: basis deltas at a spread of levels, random +-1
    fields band-limited to one level each, and any caller-supplied extras.
    """
    out = []
    for j in range(J):
        d = np.zeros((2**J,) * n)
        k = tuple(int(x) for x in rng.integers(0, 2**j, size=n))
        d[tuple(2**j + kk for kk in k)] = 1.0
        out.append(CoefficientField(n, J, d))
    for j in range(J):
        d = np.zeros((2**J,) * n)
        for eps in eps_vectors(n):
            sl = tuple(slice(2**j, 2 ** (j + 1)) if e else slice(0, 2**j) for e in eps)
            d[sl] = rng.choice([-1.0, 1.0], size=(2**j,) * n)
        out.append(CoefficientField(n, J, d))
    out.extend(extra)
    return out
