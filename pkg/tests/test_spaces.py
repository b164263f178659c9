import itertools

import numpy as np
import pytest

from waveletspace.core import CoefficientField, DyadicCube, GridFunction, ParameterError, SpaceParams, WaveletIndex, all_cubes
from waveletspace.counterexample import build_f, build_g, build_sequences, max_feasible_depth
from waveletspace.fourier import bessel_potential
from waveletspace.spaces import (
    apply_Tt,
    bmo_r_seminorm,
    decay_envelope,
    default_dictionary,
    derivative_coeffs,
    embedding_chain,
    hl_maximal,
    log_morrey_norm,
    maximal_bound_constants,
    morrey_norm,
    multiplier_norm_lower_bound,
    sobolev_norm,
    square_function,
)
from waveletspace.wavelets import HAAR, WaveletSpec

P1 = SpaceParams(n=1, t=0.0, r=0.25, p=2.0, tau=0.5)
P2 = SpaceParams(n=2, t=0.1, r=0.3, p=1.5, tau=1.0)


def random_field(n, J, r, seed):
    rng = np.random.default_rng(seed)
    return CoefficientField.from_levels(
        n, J, lambda e, j, k: rng.standard_normal(k[0].shape) * 2.0 ** (-j * (r + n / 2)),
        scaling=float(rng.standard_normal()))


def brute_force_morrey(c, prm):
    """Enumerate every dyadic cube and every contained index directly."""
    n, J, p = c.n, c.J, prm.p
    side = 2 ** (J - 1)
    x = np.stack(np.meshgrid(*[np.arange(side) / side] * n, indexing="ij"), -1).reshape(-1, n)
    best, arg = abs(c.scaling), None
    for i in range(J):
        for q in all_cubes(n, i):
            inside = np.all(np.floor(x * 2**i) == q.k, axis=1)
            T = np.zeros(inside.sum())
            xs = x[inside]
            for idx, val in c.entries():
                if idx.j < i or not any(idx.eps) or val == 0:
                    continue
                hit = np.all(np.floor(xs * 2**idx.j) == idx.k, axis=1)
                T += 2.0 ** (idx.j * (n + 2 * prm.t)) * val**2 * hit
            integral = float(np.sum(T ** (p / 2))) / side**n
            vol = 2.0 ** (-i * n)
            v = (vol ** (p * (prm.r + prm.t) / n - 1) * integral) ** (1 / p) * (1 + i * n) ** prm.tau
            if v > best:
                best, arg = v, q
    return best, arg


def test_square_function_delta():
    c = CoefficientField.delta(WaveletIndex((1,), 3, (5,)), 6, amplitude=-2.0)
    S = square_function(c, 0.5).values
    assert np.allclose(S[40:48], 2.0 * 2 ** (3 * 1.0))
    assert np.count_nonzero(S) == 8
    assert not square_function(CoefficientField.zeros(1, 6), 0.5).values.any()


def test_sobolev_examples():
    c = CoefficientField.delta(WaveletIndex((1,), 3, (2,)), 8)
    assert sobolev_norm(c, 0.5, 2.0).value == pytest.approx(2**1.5, rel=1e-14)
    d = random_field(2, 5, 0.2, 1)
    assert sobolev_norm(d * -3.0, 0.2, 1.7).value == pytest.approx(3 * sobolev_norm(d, 0.2, 1.7).value, rel=1e-13)
    # r = 0, p = 2 is the l2 norm of the field, scaling entry included
    assert sobolev_norm(d, 0.0, 2.0).value == pytest.approx(np.sqrt(np.sum(d.data**2)), rel=1e-12)


@pytest.mark.parametrize("prm,J", [(P1, 5), (P2, 3)])
def test_morrey_against_cube_enumeration(prm, J):
    for seed in range(3):
        c = random_field(prm.n, J, prm.r, seed)
        want, q = brute_force_morrey(c, prm)
        got = log_morrey_norm(c, prm)
        assert got.value == pytest.approx(want, rel=1e-12)
        assert got.witness_cube == q


def test_morrey_delta_and_separation():
    c = CoefficientField.delta(WaveletIndex((1,), 2, (1,)), 8)
    rep = morrey_norm(c, P1)
    assert rep.value == pytest.approx(2**0.5, rel=1e-14)
    assert rep.witness_cube == DyadicCube(2, (1,))
    far = CoefficientField.delta(WaveletIndex((1,), 4, (14,)), 8, amplitude=3.0)
    both = CoefficientField(1, 8, c.data + far.data)
    assert morrey_norm(both, P1).value == pytest.approx(
        max(rep.value, morrey_norm(far, P1).value), rel=1e-14)


def test_table_max_and_tau_zero_identity():
    c = random_field(2, 4, 0.3, 5)
    rep = log_morrey_norm(c, P2, table=True)
    assert rep.value == max(max(v for _, v in rep.per_cube_table), abs(c.scaling))
    a = morrey_norm(c, P2, table=True)
    b = log_morrey_norm(c, P2.replace(tau=0.0), table=True)
    assert a.value == b.value and a.per_cube_table == b.per_cube_table


def test_monotone_under_zeroing():
    c = random_field(1, 8, 0.25, 9)
    mask = np.random.default_rng(0).random(c.data.shape) < 0.5
    d = CoefficientField(1, 8, np.where(mask, 0.0, c.data))
    for norm in (lambda x: sobolev_norm(x, 0.25, 2.0), lambda x: morrey_norm(x, P1),
                 lambda x: log_morrey_norm(x, P1)):
        assert norm(d).value <= norm(c).value


def test_embedding_chain_random():
    for prm, J in [(P1, 9), (P2, 5)]:
        c = random_field(prm.n, J, prm.r, 4)
        for lhs, rhs in embedding_chain(c, prm):
            assert np.all(lhs <= rhs * (1 + 1e-12))


def test_bmo_delta_and_geometric_field():
    for n, J in [(1, 8), (2, 5)]:
        for j in range(J):
            c = CoefficientField.delta(WaveletIndex((1,) * n, j, (0,) * n), J)
            rep = bmo_r_seminorm(c, 0.25, 2.0)
            assert rep.value == pytest.approx(2.0 ** (j * (n / 2 - 0.25)), rel=1e-13)
            assert rep.witness_cube == DyadicCube(j, (0,) * n)
    # coefficients exactly 2^{j(r - n/2)} everywhere: value does not depend on J
    vals = []
    for J in (6, 8, 10):
        c = CoefficientField.from_levels(1, J, lambda e, j, k: np.full(k[0].shape, 2.0 ** (j * (0.25 - 0.5))))
        vals.append(bmo_r_seminorm(c, 0.25, 2.0).value)
    assert np.ptp(vals) / vals[0] < 0.3
    with pytest.raises(ValueError):
        bmo_r_seminorm(c, 0.25, 1.0)


def test_decay_envelope():
    r, tau = 0.25, 0.5
    c = CoefficientField.from_levels(
        1, 8, lambda e, j, k: np.full(k[0].shape, 2.0 ** (j * (r - 0.5)) * (1 + j) ** -tau), scaling=1.0)
    assert decay_envelope(c, r, tau) == pytest.approx(1.0, rel=1e-14)
    assert decay_envelope(CoefficientField.zeros(1, 8), r, tau) == 0.0
    # K = 1 from the delta calibration: envelope equals the norm on a delta
    for n, prm, J in [(1, P1, 8), (2, P2, 5)]:
        d = CoefficientField.delta(WaveletIndex((1,) * n, 2, (1,) * n), J)
        K = decay_envelope(d, prm.r, prm.tau) / log_morrey_norm(d, prm.replace(t=0.0)).value
        assert K <= 1.0 + 1e-14
        for seed in range(5):
            f = random_field(n, J, prm.r, seed)
            assert decay_envelope(f, prm.r, prm.tau) <= log_morrey_norm(f, prm.replace(t=0.0)).value * (1 + 1e-12)


def test_decay_envelope_of_counterexample_f():
    cfg = build_sequences(SpaceParams(n=1, t=0.0, r=0.1, p=2.0), 2, 5)
    f = build_f(cfg, 12)
    env = decay_envelope(f, 0.1, 0.5)
    assert np.isfinite(env) and env > 0


def test_Tt_and_sobolev_identity():
    c = random_field(1, 8, 0.2, 2)
    assert apply_Tt(c, 0.0) is c
    d = CoefficientField.delta(WaveletIndex((1,), 5, (3,)), 8)
    assert apply_Tt(d, 0.4)[WaveletIndex((1,), 5, (3,))] == pytest.approx(2.0**-2.0)
    for t, p in [(0.3, 2.0), (0.7, 1.5)]:
        assert sobolev_norm(apply_Tt(c, t), 0.0, p).value == pytest.approx(sobolev_norm(c, -t, p).value, rel=1e-13)
    with pytest.raises(ValueError):
        apply_Tt(c, -0.1)


def test_derivative_shift_identity():
    c = random_field(1, 8, 0.2, 3)
    assert derivative_coeffs(c, (0,)) is c
    for beta in [(1,), (2,)]:
        b = sum(beta)
        lhs = log_morrey_norm(derivative_coeffs(c, beta), SpaceParams(n=1, t=0.1 - b, r=0.2 + b, p=2.0, tau=0.5))
        rhs = log_morrey_norm(c, SpaceParams(n=1, t=0.1, r=0.2, p=2.0, tau=0.5))
        assert lhs.value == pytest.approx(rhs.value, rel=1e-12)
    d = CoefficientField.delta(WaveletIndex((1, 0), 3, (1, 1)), 5)
    assert derivative_coeffs(d, (1, 1))[WaveletIndex((1, 0), 3, (1, 1))] == 64.0


def test_hl_maximal_brute_force(rng):
    for n, J in [(1, 6), (2, 3)]:
        f = GridFunction(n, J, rng.standard_normal((2**J,) * n))
        M = hl_maximal(f).values
        want = np.zeros_like(M)
        side = 2**J
        for x in itertools.product(range(side), repeat=n):
            best = 0.0
            for i in range(J + 1):
                w = side // 2**i
                sl = tuple(slice((xi // w) * w, (xi // w + 1) * w) for xi in x)
                best = max(best, float(np.mean(np.abs(f.values[sl]))))
            want[x] = best
        assert np.allclose(M, want, rtol=1e-14, atol=0)
        assert np.all(M >= np.abs(f.values))
    const = GridFunction(1, 5, np.full(32, -2.5))
    assert np.allclose(hl_maximal(const).values, 2.5)
    ind = np.zeros(64)
    ind[8:16] = 1.0        # the level-3 cube k = 1
    M = hl_maximal(GridFunction(1, 6, ind)).values
    assert M[8] == 1.0 and M[0] == 0.5 and M[16] == 0.25 and M[40] == 0.125


@pytest.mark.parametrize("spec", [HAAR, WaveletSpec("daubechies", 2), WaveletSpec("discrete_meyer", 0)])
@pytest.mark.parametrize("t", [0.0, 0.3])
def test_maximal_bound_constant_stable(spec, t):
    J = 12
    C = maximal_bound_constants(spec, t, J, 1, levels=range(2, J - 2))
    vals = np.array(list(C.values()))
    mid = 0.5 * (vals.max() + vals.min())
    assert np.all(np.abs(vals / mid - 1) <= 0.2), C


def test_multiplier_examples(rng):
    prm = SpaceParams(n=1, t=0.0, r=0.25, p=2.0)
    J = 8
    dic = default_dictionary(1, J, rng)
    assert multiplier_norm_lower_bound(CoefficientField.zeros(1, J), dic, prm) == 0.0
    one = CoefficientField(1, J, np.eye(1, 2**J)[0])
    assert multiplier_norm_lower_bound(one, dic, prm) <= 1.0 + 1e-12
    with pytest.raises(ValueError):
        multiplier_norm_lower_bound(one, [], prm)


def test_multiplier_grows_with_counterexample_stages():
    prm = SpaceParams(n=1, t=0.0, r=0.1, p=2.0, tau=0.5)
    full = build_sequences(prm, 2, 5)          # stage 2 needs J > u_2 = 10

    def bound(J):
        cfg = full.truncated(max_feasible_depth(full, J, strict=True))
        g = bessel_potential(build_g(cfg, J), prm.t + prm.r)
        dic = default_dictionary(1, J, np.random.default_rng(0), extra=[g])
        return multiplier_norm_lower_bound(build_f(cfg, J), dic, prm)

    one_stage = [bound(J) for J in (8, 10)]
    two_stage = bound(11)
    # flat while the stage count is fixed, a clear jump when a stage is added
    assert abs(one_stage[1] / one_stage[0] - 1) < 1e-3
    assert two_stage > 1.1 * max(one_stage)


def test_params_gate_on_norms():
    with pytest.raises(ParameterError):
        log_morrey_norm(CoefficientField.zeros(1, 4), SpaceParams(n=1, r=0.6, p=2.0))
