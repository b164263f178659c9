"""Cantor-type construction of a log-Morrey function that is not a multiplier.

The construction keeps, inside every stage-(s-1) cube, the 2^{n tau_s}
sub-cubes of level u_s that touch its 2^n vertices. ``f`` puts one wavelet
coefficient (eps = (1,...,1)) on every stage-s cube, ``g`` is a step
function that grows on the deep stages, and the Q-functional of (f, g)
diverges with the depth while the log-Morrey norm of f is meant to stay put.

Two evaluators exist for every quantity: a dense one on a 2^J grid, and a
sparse one that only touches stage cubes and works at any depth. The sparse
Q-functional uses an exact antiderivative of the kernel and is 1-D only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import CoefficientField, DyadicCube, GridFunction, SpaceParams, ParameterError

DEFAULT_DELTA = 0.1


class InfeasibleError(ValueError):
    """The requested depth or parameters cannot be realized."""

    def __init__(self, message: str, max_feasible: Optional[int] = None):
        super().__init__(message)
        self.max_feasible = max_feasible


@dataclass(frozen=True)
class FractalConfig:
    params: SpaceParams
    taus: tuple
    vs: tuple
    delta: float = DEFAULT_DELTA
    v_floor: int = 8
    normalization: str = "l2"   # "l2": c = literal * 2^{-n u_s / 2};  "literal": as printed

    def __post_init__(self):
        if len(self.taus) != len(self.vs) or not self.taus:
            raise ValueError("taus and vs must be nonempty and of equal length")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.normalization not in ("l2", "literal"):
            raise ValueError(f"unknown normalization {self.normalization!r}")

    @property
    def depth(self) -> int:
        return len(self.taus)

    @property
    def sigmas(self) -> tuple:
        return tuple(int(x) for x in np.cumsum(self.taus))

    @property
    def us(self) -> tuple:
        return tuple(int(x) for x in np.cumsum(self.vs))

    @property
    def gap(self) -> float:
        return self.params.gap

    @property
    def bracket(self) -> int:
        return int(math.floor(4 * self.params.n / self.gap))

    def drift(self) -> np.ndarray:
        """D_s = n sigma_s - (n - (t+r)p) u_s."""
        return self.params.n * np.array(self.sigmas) - self.gap * np.array(self.us)

    def truncated(self, S: int) -> "FractalConfig":
        if not 1 <= S <= self.depth:
            raise ValueError(f"truncation depth {S} outside 1..{self.depth}")
        return replace(self, taus=self.taus[:S], vs=self.vs[:S])

    def check(self) -> list:
        """Return a list of violated invariants (empty when valid)."""
        bad = []
        B = self.bracket
        vmax = max(int(math.floor(5 * self.params.n / self.gap)), self.v_floor)
        for s, (ta, v) in enumerate(zip(self.taus, self.vs), 1):
            if not 1 <= ta < B:
                bad.append(f"tau_{s}={ta} outside [1, {B})")
            if not B <= v <= vmax:
                bad.append(f"v_{s}={v} outside [{B}, {vmax}]")
        D = self.drift()
        floor = -self.params.n * self.us[0]
        for s, d in enumerate(D, 1):
            if d < floor - 1e-9:
                bad.append(f"drift D_{s}={d:g} below -n u_1 = {floor}")
        return bad

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(), "taus": list(self.taus), "vs": list(self.vs),
                "sigmas": list(self.sigmas), "us": list(self.us), "delta": self.delta,
                "v_floor": self.v_floor, "normalization": self.normalization}


def build_sequences(params: SpaceParams, S: int, v_floor: int = 8, delta: float = DEFAULT_DELTA,
                    normalization: str = "l2") -> FractalConfig:
    """Greedy choice: v_s = v_1 = max(B, v_floor) with B = [4n/gap], and tau_s
    in [1, B) minimizing |D_s|, D_s = n sigma_s - gap u_s (ties go to the
    smaller tau)."""
    if S < 1:
        raise ValueError("depth S must be >= 1")
    n, gap = params.n, params.gap
    if gap <= 0:
        raise InfeasibleError("need p(r+t) < n")
    B = int(math.floor(4 * n / gap))
    if B < 2:
        raise InfeasibleError(f"no integer tau in [1, {B})")
    v1 = max(B, int(v_floor))
    taus, vs = [], []
    D = 0.0
    for _ in range(S):
        best = min(range(1, B), key=lambda ta: (abs(D + n * ta - gap * v1), ta))
        taus.append(best)
        vs.append(v1)
        D += n * best - gap * v1
    cfg = FractalConfig(params, tuple(taus), tuple(vs), delta, int(v_floor), normalization)
    bad = cfg.check()
    if bad:
        raise InfeasibleError("; ".join(bad))
    return cfg


# -- stages --------------------------------------------------------------------------

@dataclass(frozen=True)
class CantorStage:
    s: int
    level: int
    n: int
    axis_corners: np.ndarray = field(repr=False)   # 1-D corners; cubes are their n-fold product

    @property
    def count(self) -> int:
        return len(self.axis_corners) ** self.n

    @property
    def measure(self) -> float:
        return self.count * 2.0 ** (-self.n * self.level)

    def cubes(self):
        for k in np.ndindex(*(len(self.axis_corners),) * self.n):
            yield DyadicCube(self.level, tuple(int(self.axis_corners[i]) for i in k))

    def axis_mask(self, J: int) -> np.ndarray:
        if J < self.level:
            raise InfeasibleError(f"grid J={J} does not resolve stage level {self.level}")
        m = np.zeros(2**J, dtype=bool)
        s = 2 ** (J - self.level)
        for c in self.axis_corners:
            m[int(c) * s:(int(c) + 1) * s] = True
        return m

    def mask(self, J: int) -> np.ndarray:
        a = self.axis_mask(J)
        return a if self.n == 1 else np.multiply.outer(a, a)


def corner_block(tau: int, v: int) -> np.ndarray:
    half = 2 ** (tau - 1)
    return np.concatenate([np.arange(half), np.arange(2**v - half, 2**v)]).astype(np.int64)


def build_fractal_sets(cfg: FractalConfig) -> list:
    if cfg.us[-1] > 62:
        raise InfeasibleError(f"finest stage level {cfg.us[-1]} exceeds 62")
    stages = []
    prev = np.zeros(1, dtype=np.int64)
    for s, (ta, v, u) in enumerate(zip(cfg.taus, cfg.vs, cfg.us), 1):
        prev = (prev[:, None] * 2**v + corner_block(ta, v)[None, :]).ravel()
        stages.append(CantorStage(s, u, cfg.params.n, prev))
    return stages


# -- f and g -----------------------------------------------------------------------------

def f_value(cfg: FractalConfig, s: int) -> float:
    p, t, r, n = cfg.params.p, cfg.params.t, cfg.params.r, cfg.params.n
    u = cfg.us[s - 1]
    val = s ** (-1 / cfg.params.p_conj) * 2.0 ** (-t * u) * 2.0 ** ((t + r) * u)
    if cfg.normalization == "l2":
        val *= 2.0 ** (-n * u / 2)
    return val


def g_value(cfg: FractalConfig, s: int) -> float:
    """g on S_s minus S_{s+1} (and on all of S_S for the deepest stage); 1 for s = 0."""
    if s == 0:
        return 1.0
    p, t, r = cfg.params.p, cfg.params.t, cfg.params.r
    return (s ** (-1 / p) * math.log2(1 + s) ** (-(1 + cfg.delta) / p)
            * 2.0 ** ((t + r) * cfg.us[s - 1]))


def build_f(cfg: FractalConfig, J: int) -> CoefficientField:
    """Dense field at resolution J (needs u_S < J)."""
    n = cfg.params.n
    if cfg.us[-1] >= J:
        raise InfeasibleError(f"stage level {cfg.us[-1]} needs J > {cfg.us[-1]}, got J={J}",
                              max_feasible_depth(cfg, J, strict=True))
    data = np.zeros((2**J,) * n)
    for st in build_fractal_sets(cfg):
        idx = 2**st.level + st.axis_corners
        data[np.ix_(*[idx] * n)] = f_value(cfg, st.s)
    return CoefficientField(n, J, data)


def build_g(cfg: FractalConfig, J: int) -> GridFunction:
    n = cfg.params.n
    vals = np.ones((2**J,) * n)
    for st in build_fractal_sets(cfg):
        vals[st.mask(J)] = g_value(cfg, st.s)
    return GridFunction(n, J, vals)


def g_power_integral(cfg: FractalConfig) -> float:
    """Closed form of int |g|^p over the torus."""
    stages = build_fractal_sets(cfg)
    p = cfg.params.p
    meas = [st.measure for st in stages] + [0.0]
    total = 1.0 - meas[0]
    for s in range(1, cfg.depth + 1):
        total += g_value(cfg, s) ** p * (meas[s - 1] - meas[s])
    return total


def max_feasible_depth(cfg: FractalConfig, J: int, strict: bool = False) -> int:
    us = cfg.us
    return sum(1 for u in us if (u < J if strict else u <= J))


# -- kernel coefficients ---------------------------------------------------------------------

def _kernel_antiderivative(y, c, h, beta):
    """Antiderivative in y of (h + |y - c|)^beta, zero at y = c."""
    d = y - c
    return np.sign(d) * ((h + np.abs(d)) ** (beta + 1) - h ** (beta + 1)) / (beta + 1)


def kernel_on_intervals(a, b, centre, h, beta) -> np.ndarray:
    """int_a^b (h + |y - c|)^beta dy for arrays of intervals (a, b) and centres."""
    return (_kernel_antiderivative(b, centre, h, beta)
            - _kernel_antiderivative(a, centre, h, beta))


def kernel_coefficient(g: GridFunction, j: int, k, params: SpaceParams,
                       refine: int = 4) -> float:
    """g_{j,k} = int (2^{-j} + |y - 2^{-j} k|)^{t+r-n} g(y) dy on [0,1]^n.

    1-D: exact on every cell through the antiderivative. 2-D: cell-midpoint
    rule with the cells near the centre split ``refine`` times per axis.
    The distance is Euclidean on the unit cube, not periodic.
    """
    k = np.atleast_1d(k)
    beta = params.t + params.r - params.n
    h = 2.0**-j
    centre = k * h
    if np.any(g.values < 0):
        raise ValueError("kernel coefficients need g >= 0")
    N = 2**g.J
    edges = np.arange(N + 1) / N
    if g.n == 1:
        w = kernel_on_intervals(edges[:-1], edges[1:], centre[0], h, beta)
        return float(np.dot(w, g.values))
    mids = (np.arange(N) + 0.5) / N
    X, Y = np.meshgrid(mids, mids, indexing="ij")
    dist = np.hypot(X - centre[0], Y - centre[1])
    K = (h + dist) ** beta / N**2
    near = dist < 2.0 / N + h
    if refine > 1 and near.any():
        sub = (np.arange(refine) + 0.5) / (refine * N) - 0.5 / N
        SX, SY = np.meshgrid(sub, sub, indexing="ij")
        xs, ys = X[near], Y[near]
        d = np.hypot(xs[:, None] - centre[0] + SX.ravel()[None, :],
                     ys[:, None] - centre[1] + SY.ravel()[None, :])
        K[near] = ((h + d) ** beta).mean(axis=1) / N**2
    return float(np.sum(K * g.values))


def kernel_error_bound(g: GridFunction, j: int, params: SpaceParams) -> float:
    """Lipschitz bound times cell diameter for the 2-D midpoint rule."""
    beta = params.t + params.r - params.n
    h = 2.0**-j
    lip = abs(beta) * h ** (beta - 1)
    diam = math.sqrt(g.n) / 2**g.J
    return lip * diam * float(np.abs(g.values).mean())


# -- the Q-functional -----------------------------------------------------------------------------

def q_functional(f: CoefficientField, g: GridFunction, params: SpaceParams,
                 power: bool = False) -> float:
    """(int (sum 2^{j(n+2t)} |g_{j,k}|^2 |f_{eps,j,k}|^2 chi_{j,k})^{p/2})^{1/p}.

    Kernel coefficients are computed only where f is nonzero.
    """
    if (f.n, f.J) != (g.n, g.J):
        raise ValueError("f and g must share a grid")
    n, J, t, p = f.n, f.J, params.t, params.p
    G = max(J - 1, 0)
    acc = np.zeros((2**G,) * n)
    levels = f.level_map()
    nz = np.argwhere(f.data != 0)
    for pos in nz:
        pos = tuple(int(x) for x in pos)
        j = int(levels[pos])
        if all(x == 0 for x in pos):
            k = (0,) * n
        else:
            k = tuple(x - 2**j if x >= 2**j else x for x in pos)
        gk = kernel_coefficient(g, j, k, params)
        w = 2.0 ** (j * (n + 2 * t)) * gk**2 * f.data[pos] ** 2
        s = 2 ** (G - j)
        acc[tuple(slice(x * s, (x + 1) * s) for x in k)] += w
    qp = float(np.sum(acc ** (p / 2))) * 2.0 ** (-G * n)
    return qp if power else qp ** (1 / p)


def sparse_kernel_coefficients(cfg: FractalConfig, chunk: int = 256) -> list:
    """Exact g_{u_s, k} at every stage cube for the 1-D construction."""
    if cfg.params.n != 1:
        raise NotImplementedError("the sparse kernel evaluator is 1-D")
    stages = build_fractal_sets(cfg)
    beta = cfg.params.t + cfg.params.r - 1.0
    out = []
    steps = [(g_value(cfg, i) - g_value(cfg, i - 1), st) for i, st in enumerate(stages, 1)]
    for st in stages:
        h = 2.0**-st.level
        centres = st.axis_corners * h
        gk = kernel_on_intervals(0.0, 1.0, centres, h, beta)
        for dv, other in steps:
            a = other.axis_corners * 2.0**-other.level
            b = a + 2.0**-other.level
            for lo in range(0, len(centres), chunk):
                c = centres[lo:lo + chunk, None]
                gk[lo:lo + chunk] += dv * kernel_on_intervals(a[None, :], b[None, :], c, h, beta).sum(axis=1)
        out.append(gk)
    return out


def sparse_q_power(cfg: FractalConfig, kernel=None) -> float:
    """q^p of (f, g) for the 1-D construction, exact in the kernel and the
    integral; the integrand is constant on S_s minus S_{s+1}."""
    if cfg.params.n != 1:
        raise NotImplementedError("the sparse Q-functional is 1-D")
    stages = build_fractal_sets(cfg)
    gk = sparse_kernel_coefficients(cfg) if kernel is None else kernel
    n, t, p = 1, cfg.params.t, cfg.params.p
    total = 0.0
    acc = None
    for s, st in enumerate(stages, 1):
        w = 2.0 ** (st.level * (n + 2 * t)) * gk[s - 1] ** 2 * f_value(cfg, s) ** 2
        acc = w if acc is None else np.repeat(acc, 2 ** cfg.taus[s - 1]) + w
        if s < cfg.depth:
            keep = 2.0 ** (n * (cfg.taus[s] - cfg.vs[s]))
        else:
            keep = 0.0
        total += 2.0 ** (-n * st.level) * (1.0 - keep) * float(np.sum(acc ** (p / 2)))
    return total


def kernel_lower_bound_ratios(cfg: FractalConfig, kernel=None) -> list:
    """min over stage-s cubes of g_{u_s,k} / (s^{1/p'} [log2(1+s)]^{-(1+delta)/p})."""
    gk = sparse_kernel_coefficients(cfg) if kernel is None else kernel
    p, pc = cfg.params.p, cfg.params.p_conj
    out = []
    for s, arr in enumerate(gk, 1):
        ref = s ** (1 / pc) * math.log2(1 + s) ** (-(1 + cfg.delta) / p)
        out.append(float(arr.min() / ref))
    return out


def reference_sum(S: int, delta: float) -> float:
    return float(sum(math.log2(1 + s) ** (-(1 + delta)) for s in range(2, S + 1)))


def divergence_experiment(params: SpaceParams, delta: float = DEFAULT_DELTA, S_max: int = 3,
                          v_floor: int = 8, J: int = 28) -> list:
    """Rows (S, q^p, reference sum, ratio) for S = 1..S_max, with f and g
    truncated at S. Needs u_{S_max} <= J."""
    full = build_sequences(params, S_max, v_floor, delta)
    feasible = max_feasible_depth(full, J)
    if feasible < S_max:
        raise InfeasibleError(
            f"S_max={S_max} needs J >= {full.us[S_max - 1]}; max feasible S at J={J} is {feasible}",
            feasible)
    rows = []
    for S in range(1, S_max + 1):
        cfg = full.truncated(S)
        if params.n == 1:
            qp = sparse_q_power(cfg)
        else:
            qp = q_functional(build_f(cfg, J), build_g(cfg, J), params, power=True)
        ref = reference_sum(S, delta)
        rows.append({"S": S, "q_power_p": qp, "reference_sum": ref,
                     "ratio": qp / ref if ref > 0 else None})
    return rows


def increment_ratios(rows: list, delta: float) -> list:
    """(S, [q^p(S) - q^p(S-1)] / [log2(1+S)]^{-(1+delta)}) for S >= 2."""
    out = []
    for prev, row in zip(rows, rows[1:]):
        S = row["S"]
        out.append((S, (row["q_power_p"] - prev["q_power_p"]) / math.log2(1 + S) ** (-(1 + delta))))
    return out


# -- log-Morrey norm of f, resolution free -----------------------------------------------------------

def fractal_log_morrey(cfg: FractalConfig, tau: Optional[float] = None) -> dict:
    """Exact log-Morrey norm of f (no grid): by self-similarity every stage
    cube carries the same tail integral, so the sup over level-j cubes is
    attained at a corner cube and only needs the kept-cube count.
    """
    prm = cfg.params
    n, t, r, p = prm.n, prm.t, prm.r, prm.p
    tau = prm.tau if tau is None else tau
    S = cfg.depth
    us = (0,) + cfg.us
    sig = (0,) + cfg.sigmas
    w = [2.0 ** (cfg.us[i] * (n + 2 * t)) * f_value(cfg, i + 1) ** 2 for i in range(S)]
    kept = [2.0 ** (n * (cfg.taus[i] - cfg.vs[i])) for i in range(S)] + [0.0]

    def cube_integral(m):
        # int over one stage-(m+1) cube of (sum_{i > m, x in S_i} w_i)^{p/2}
        tot, W = 0.0, 0.0
        for s in range(m + 1, S + 1):
            W += w[s - 1]
            meas = 2.0 ** (n * (sig[s] - sig[m + 1])) * 2.0 ** (-n * us[s]) * (1.0 - kept[s])
            tot += meas * W ** (p / 2)
        return tot

    integrals = [cube_integral(m) for m in range(S)]
    best, witness, rows = 0.0, DyadicCube(0, (0,) * n), []
    for j in range(0, us[S] + 1):
        m = sum(1 for u in cfg.us if u < j)
        d = j - us[m]
        ta, v = cfg.taus[m], cfg.vs[m]
        per_axis = 2**ta if d == 0 else min(2 ** (ta - 1), 2 ** (v - d))
        local = per_axis**n * integrals[m]
        vol = 2.0 ** (-j * n)
        val = (vol ** (p * (r + t) / n - 1) * local) ** (1 / p) * (1.0 + j * n) ** tau
        rows.append((j, val))
        if val > best:
            best, witness = val, DyadicCube(j, (0,) * n)
    return {"value": best, "witness": witness, "per_level": rows}


def decay_envelope_of_f(cfg: FractalConfig, tau: Optional[float] = None) -> float:
    prm = cfg.params
    tau = prm.p_conj ** -1 if tau is None else tau
    return max(f_value(cfg, s) * 2.0 ** (u * (prm.n / 2 - prm.r)) * (1 + u) ** tau
               for s, u in enumerate(cfg.us, 1))
