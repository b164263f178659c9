"""Projections, the telescoping product decomposition, interaction
coefficients, almost-diagonal operators and combination atoms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .core import (
    CoefficientField,
    DyadicCube,
    GridFunction,
    SpaceParams,
    WaveletIndex,
    block_sum,
    eps_vectors,
    level_slices,
    upsample_blocks,
)
from .spaces import square_function
from .wavelets import (
    HAAR,
    WaveletSpec,
    forward_dwt,
    inverse_dwt,
    scaling_coefficients,
    synthesize_basis_function,
    synthesize_scaling_function,
)


# -- projections ---------------------------------------------------------------

def project(c: CoefficientField, j: int, kind: str, spec: WaveletSpec = HAAR) -> GridFunction:
    """P_j: scaling entry plus all levels < j.  Q_j: level j only (= P_{j+1} - P_j)."""
    kind = kind.upper()
    if kind == "P":
        if not 0 <= j <= c.J:
            raise ValueError(f"P_j needs 0 <= j <= J={c.J}, got {j}")
        return inverse_dwt(c.truncate_levels(j), spec)
    if kind == "Q":
        if not 0 <= j < c.J:
            raise ValueError(f"Q_j needs 0 <= j < J={c.J}, got {j}")
        return inverse_dwt(c.mask((c.level_map() == j) & ~_scaling_only(c)), spec)
    raise ValueError(f"kind must be 'P' or 'Q', got {kind!r}")


def _scaling_only(c: CoefficientField) -> np.ndarray:
    m = np.zeros(c.data.shape, dtype=bool)
    m[(0,) * c.n] = True
    return m


def _projections(c: CoefficientField, spec: WaveletSpec):
    """All P_j (j = 0..J) and Q_j (j = 0..J-1) as arrays."""
    levels = c.level_map()
    scal = _scaling_only(c)
    P = [inverse_dwt(c.mask(scal), spec).values]
    Q = []
    for j in range(c.J):
        q = inverse_dwt(c.mask((levels == j) & ~scal), spec).values
        Q.append(q)
        P.append(P[-1] + q)
    return P, Q


@dataclass
class ProductTerms:
    diagonal: GridFunction
    low_high: GridFunction
    high_low: GridFunction
    base: GridFunction
    N: int
    # refinement of high_low: shifts[s-1] = sum_j Q_j f Q_{j-s} g, tail = sum_j Q_j f P_{j-N} g
    shifts: list = field(default_factory=list, repr=False)
    tail: Optional[GridFunction] = field(default=None, repr=False)

    def total(self) -> GridFunction:
        return self.diagonal + self.low_high + self.high_low + self.base

    def refinement_total(self) -> GridFunction:
        out = self.tail
        for s in self.shifts:
            out = out + s
        return out


def product_decompose(f: GridFunction, g: GridFunction, N: int = 3,
                      spec: WaveletSpec = HAAR) -> ProductTerms:
    """fg = P_N f P_N g + sum_{j=N}^{J-1} (Q_j f Q_j g + P_j f Q_j g + Q_j f P_j g)."""
    if (f.n, f.J) != (g.n, g.J):
        raise ValueError("f and g must share a grid")
    J = f.J
    if not 1 <= N <= J - 1:
        raise ValueError(f"shift N must satisfy 1 <= N <= J-1 = {J - 1}, got {N}")
    Pf, Qf = _projections(forward_dwt(f, spec), spec)
    Pg, Qg = _projections(forward_dwt(g, spec), spec)
    z = np.zeros(f.shape)
    diag, lh, hl = z.copy(), z.copy(), z.copy()
    shifts = [z.copy() for _ in range(N)]
    tail = z.copy()
    for j in range(N, J):
        diag += Qf[j] * Qg[j]
        lh += Pf[j] * Qg[j]
        hl += Qf[j] * Pg[j]
        for s in range(1, N + 1):
            shifts[s - 1] += Qf[j] * Qg[j - s]
        tail += Qf[j] * Pg[j - N]
    mk = lambda a: GridFunction(f.n, J, a)
    return ProductTerms(mk(diag), mk(lh), mk(hl), mk(Pf[N] * Pg[N]), N,
                        [mk(s) for s in shifts], mk(tail))


# -- interaction coefficients -----------------------------------------------------

def _as_grid(obj, spec, J) -> GridFunction:
    if isinstance(obj, GridFunction):
        return obj
    if isinstance(obj, WaveletIndex):
        return synthesize_basis_function(obj, spec, J)
    raise TypeError(f"expected WaveletIndex or GridFunction, got {type(obj).__name__}")


def interaction_coefficient(a, b, spec: WaveletSpec = HAAR, J: int = 8) -> float:
    """Grid inner product <A, B>; indices are synthesized at resolution J."""
    A = _as_grid(a, spec, J)
    B = _as_grid(b, spec, A.J)
    return A.inner(B)


def product_interactions(eps: tuple, j: int, k: tuple, l: tuple, spec: WaveletSpec, J: int):
    """All a_{j',k'} = <Phi^0_{j,k+l} Phi^eps_{j,k}, Phi^{eps'}_{j',k'}> at once."""
    n = len(k)
    kl = tuple((a + b) % 2**j for a, b in zip(k, l))
    prod = synthesize_scaling_function(j, kl, spec, J) * synthesize_basis_function(
        WaveletIndex(eps, j, k), spec, J)
    return forward_dwt(prod, spec)


def fit_interaction_decay(eps: tuple, j: int, k: tuple, l: tuple, spec: WaveletSpec, J: int,
                          floor: float = 1e-13) -> dict:
    """Sweep j' <= j and all k' of the product-type coefficients.

    Returns the scale-normalized envelope per distance d = |k' - 2^{j'-j} k|
    (sup norm), the fitted decay exponent N2 (log-log slope of the envelope
    over d >= 1 above the rounding floor) and the constant C(N2).
    """
    c = product_interactions(eps, j, k, l, spec, J)
    n = len(k)
    env: dict = {}
    for jp in range(0, j + 1):
        scale = 2.0 ** (n * jp / 2 + jp - j)
        centre = np.array(k, dtype=float) * 2.0 ** (jp - j)
        for epsp in eps_vectors(n):
            blk = np.abs(c.block(epsp, jp))
            for kp in np.ndindex(blk.shape):
                diff = np.abs(np.array(kp) - centre)
                diff = np.minimum(diff, 2**jp - diff)  # periodic distance
                d = int(round(float(np.max(diff))))
                env[d] = max(env.get(d, 0.0), float(blk[kp]) / scale)
    ds = np.array(sorted(env))
    vals = np.array([env[d] for d in ds])
    top = vals.max()
    use = (ds >= 1) & (vals > floor * top)
    if use.sum() >= 2:
        slope = np.polyfit(np.log1p(ds[use]), np.log(vals[use]), 1)[0]
        N2 = float(-slope)
    else:
        # nothing above the floor away from the diagonal: compact support
        N2 = math.inf
    Nfit = min(N2, 50.0)
    C = float(np.max(vals * (1.0 + ds) ** Nfit))
    return {"N2": N2, "C": C, "envelope": dict(zip(ds.tolist(), vals.tolist()))}


def change_of_basis_matrix(src: WaveletSpec, dst: WaveletSpec, n: int, J: int) -> np.ndarray:
    """a_{idx, idx'} = <Phi^dst_idx, Phi^src_idx'> on the flattened Mallat layout."""
    size = 2 ** (J * n)
    M = np.zeros((size, size))
    for col in range(size):
        d = np.zeros(size)
        d[col] = 1.0
        g = inverse_dwt(CoefficientField(n, J, d), src)
        M[:, col] = forward_dwt(g, dst).data.ravel()
    return M


def apply_almost_diagonal(entries, c: CoefficientField) -> CoefficientField:
    """c~_idx = sum_idx' a_{idx, idx'} c_idx'.

    ``entries`` is a dict {(idx, idx'): a} or a (sparse) matrix acting on the
    flattened Mallat layout.
    """
    if isinstance(entries, dict):
        out = np.zeros(c.data.shape)
        for (i, ip), a in entries.items():
            out[i.slot()] += a * c.data[ip.slot()]
        return CoefficientField(c.n, c.J, out)
    vec = entries @ c.data.ravel()
    return CoefficientField(c.n, c.J, np.asarray(vec).ravel())


# -- combination atoms --------------------------------------------------------------

def _enlarge_matrix(j: int, J: int, multiple: float) -> sparse.csr_matrix:
    """Rows: level-J cells; columns: level-j cubes; 1 if the cell centre lies
    in the cube enlarged about its centre by ``multiple`` (periodic)."""
    N = 2**J
    cells = (np.arange(N) + 0.5) / N
    centres = (np.arange(2**j) + 0.5) * 2.0**-j
    d = np.abs(cells[:, None] - centres[None, :])
    d = np.minimum(d, 1.0 - d)
    half = multiple * 2.0**-j / 2
    return sparse.csr_matrix((d < half - 1e-12 * 2.0**-J).astype(float))


def enlarged_square_function(c: CoefficientField, r: float, multiple: float = 4.0) -> GridFunction:
    """S~_r c: the square function with chi replaced by the indicator of the
    cube enlarged by ``multiple``; ``multiple = 1`` gives S_r c."""
    if multiple < 1:
        raise ValueError("enlargement multiple must be >= 1")
    n, J = c.n, c.J
    acc = np.full((2**J,) * n, c.scaling**2)
    for j in range(J):
        e = np.zeros((2**j,) * n)
        for eps in eps_vectors(n):
            e = e + c.block(eps, j) ** 2
        e *= 2.0 ** (j * (2 * r + n))
        A = _enlarge_matrix(j, J, multiple)
        if n == 1:
            acc += A @ e
        else:
            acc += A @ (A @ e.T).T
    return GridFunction(n, J, np.sqrt(acc))


@dataclass
class CombinationAtom:
    v: int
    coeffs: CoefficientField
    support: np.ndarray        # boolean level-J mask of E_v (all True for the residual atom)
    cubes: list = field(default_factory=list, repr=False)   # the dyadic cubes of this atom's entries

    @property
    def level_bound(self) -> float:
        return 2.0**self.v

    @property
    def measure(self) -> float:
        return float(self.support.mean())


@dataclass
class AtomDecomposition:
    atoms: list
    S_tilde: GridFunction
    r: float
    p: float
    multiple: float

    def reconstruct(self) -> CoefficientField:
        out = CoefficientField.zeros(self.S_tilde.n, self.S_tilde.J)
        for a in self.atoms:
            out = out + a.coeffs
        return out

    def chebyshev_sum(self) -> float:
        return sum(2.0 ** (self.p * a.v) * a.measure for a in self.atoms if a.v >= 1)

    def chebyshev_bound(self) -> float:
        p = self.p
        return 2**p / (2**p - 1) * float(np.mean(self.S_tilde.values ** p))


def atom_decompose(c: CoefficientField, r: float, p: float = 2.0,
                   multiple: float = 4.0) -> AtomDecomposition:
    """Split c by the level sets E_v = {S~_r c > 2^v}.

    The entries of Q_{j,k} go to atom v = max{v >= 1 : Q_{j,k} in E_v}, or to
    the residual atom v = 0 when Q_{j,k} is not inside E_1. The scaling entry
    lives on the unit cube.
    """
    n, J = c.n, c.J
    S = enlarged_square_function(c, r, multiple)
    with np.errstate(divide="ignore"):
        lg = np.log2(S.values)
    # v(x) = largest integer v with S(x) > 2^v
    vx = np.where(S.values > 0, np.ceil(lg) - 1, -1).astype(int)
    vmax = int(max(vx.max(), 0))
    assign = np.zeros(c.data.shape, dtype=int)
    # cube-wise minimum of v(x) at every level, by repeated block minima
    mins = [None] * (J + 1)
    mins[J] = vx
    for i in range(J - 1, -1, -1):
        m = mins[i + 1]
        for ax in range(n):
            shape = list(m.shape)
            shape[ax] //= 2
            shape.insert(ax + 1, 2)
            m = m.reshape(shape).min(axis=ax + 1)
        mins[i] = m
    assign[(0,) * n] = max(mins[0].flat[0], 0)
    for j in range(J):
        lv = np.maximum(mins[j], 0)
        for eps in eps_vectors(n):
            assign[level_slices(n, eps, j)] = lv
    atoms = []
    for v in range(0, vmax + 1):
        keep = assign == v
        coeffs = c.mask(keep)
        support = np.ones(S.shape, dtype=bool) if v == 0 else S.values > 2.0**v
        cubes = []
        for j in range(J):
            for eps in eps_vectors(n):
                blk = keep[level_slices(n, eps, j)]
                for k in zip(*np.nonzero(blk)):
                    cubes.append(DyadicCube(j, tuple(int(x) for x in k)))
        if keep[(0,) * n]:
            cubes.append(DyadicCube(0, (0,) * n))
        atoms.append(CombinationAtom(v, coeffs, support, sorted(set(cubes))))
    return AtomDecomposition(atoms, S, r, p, multiple)


# -- peeling of atom supports -------------------------------------------------------------

@dataclass
class PeelHierarchy:
    J: int
    n: int
    generations: list          # list of (level, [DyadicCube, ...])
    residuals: list            # residual masks E_{u,s} before generation s is removed

    @property
    def levels(self) -> list:
        return [lv for lv, _ in self.generations]


def cubes_to_mask(cubes: Sequence[DyadicCube], J: int, n: int) -> np.ndarray:
    m = np.zeros((2**J,) * n, dtype=bool)
    for q in cubes:
        if q.j > J:
            raise ValueError(f"cube level {q.j} finer than grid J={J}")
        s = 2 ** (J - q.j)
        m[tuple(slice(x * s, (x + 1) * s) for x in q.k)] = True
    return m


def peel_cover(E, J: Optional[int] = None, n: Optional[int] = None) -> PeelHierarchy:
    """Repeatedly remove every dyadic cube of the coarsest level that fits
    inside what is left of E.

    ``E`` is a boolean level-J mask or a collection of DyadicCube.
    """
    if not isinstance(E, np.ndarray):
        cubes = list(E)
        if not cubes:
            raise ValueError("E must be nonempty")
        n = cubes[0].n if n is None else n
        J = max(q.j for q in cubes) if J is None else J
        E = cubes_to_mask(cubes, J, n)
    E = np.asarray(E, dtype=bool)
    n = E.ndim
    J = int(round(math.log2(E.shape[0])))
    if not E.any():
        raise ValueError("E must be nonempty")
    rest = E.copy()
    gens, residuals = [], []
    while rest.any():
        for i in range(J + 1):
            full = block_sum(rest.astype(np.int64), 2 ** (J - i)) == 2 ** ((J - i) * n)
            if full.any():
                break
        residuals.append(rest.copy())
        cubes = [DyadicCube(i, tuple(int(x) for x in k)) for k in zip(*np.nonzero(full))]
        gens.append((i, cubes))
        rest &= ~upsample_blocks(full, 2 ** (J - i))
    return PeelHierarchy(J, n, gens, residuals)


def scaling_bound_check(atom: CombinationAtom, hierarchy: PeelHierarchy, params: SpaceParams,
                        spec: WaveletSpec = HAAR, multiple: float = 4.0) -> dict:
    """Fitted C_s = sup |<g_u, Phi^0_{j,k}>| 2^{nj/2} 2^{(t+r) j_s} 2^{-u} over
    cubes Q_{j,k} (j >= j_s) inside generation-s cubes and outside the
    enlarged cubes of coarser generations.
    """
    n, J = atom.coeffs.n, atom.coeffs.J
    g = inverse_dwt(atom.coeffs, spec)
    tr = params.t + params.r
    per_gen = []
    blocked = np.zeros((2**J,) * n, dtype=bool)
    for level, cubes in hierarchy.generations:
        inside = cubes_to_mask(cubes, J, n) & ~blocked
        best = 0.0
        for j in range(level, J + 1):
            if j < J:
                coef = scaling_coefficients(g, spec, j)
            else:
                coef = g.values * 2.0 ** (-J * n / 2)
            s = 2 ** (J - j)
            ok = block_sum(inside.astype(np.int64), s) == s**n
            if ok.any():
                val = float(np.max(np.abs(coef[ok]))) * 2.0 ** (n * j / 2)
                best = max(best, val)
        C = best * 2.0 ** (tr * level) * 2.0 ** (-atom.v)
        per_gen.append({"level": level, "cubes": len(cubes), "C": C})
        for q in cubes:
            blocked |= _enlarged_mask(q, J, multiple)
    Cs = [row["C"] for row in per_gen if row["C"] > 0]
    spread = (max(Cs) / min(Cs)) if Cs else 1.0
    return {"C": max(Cs) if Cs else 0.0, "per_generation": per_gen, "spread": spread}


def _enlarged_mask(q: DyadicCube, J: int, multiple: float) -> np.ndarray:
    A = _enlarge_matrix(q.j, J, multiple).toarray()
    out = A[:, q.k[0]].astype(bool)
    for kk in q.k[1:]:
        out = np.multiply.outer(out, A[:, kk].astype(bool))
    return out


def localized_product_check(f: CoefficientField, atom: CombinationAtom, hierarchy: PeelHierarchy,
                            params: SpaceParams, spec: WaveletSpec = HAAR) -> dict:
    """sup over generation cubes Q of ||f g_u||_{H^{t,p}(Q)} / ((1 + j_s)^{-tau} 2^u |Q|^{1/p})."""
    n, J = f.n, f.J
    prod = inverse_dwt(f, spec) * inverse_dwt(atom.coeffs, spec)
    S = square_function(forward_dwt(prod, spec), params.t).values ** params.p
    rows = []
    for level, cubes in hierarchy.generations:
        s = 2 ** (J - level)
        local = block_sum(S, s) * 2.0 ** (-J * n)
        for q in cubes:
            norm = float(local[q.k]) ** (1 / params.p)
            ref = (1.0 + level) ** (-params.tau) * 2.0**atom.v * q.volume ** (1 / params.p)
            rows.append({"j": level, "k": list(q.k), "norm": norm, "ratio": norm / ref})
    sup = max((row["ratio"] for row in rows), default=0.0)
    return {"sup_ratio": sup, "rows": rows}
