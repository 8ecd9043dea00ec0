import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothing.errors import DomainError
from smoothing.similarity import (
    Q_from_complex,
    Similarity,
    continuous_group,
    discrete_group,
    isotropic_group,
    rotation2,
)
from smoothing.stable_laws import (
    Gaussian,
    Isotropic,
    Jump,
    Operator1,
    SpectralMeasure,
    StableSpec,
    TruncationError,
    Zero,
    gamma1,
    is_invariant,
    nu_tail,
    plan_truncation,
    psi_eval,
    random_group_elements,
    sample_Y,
    sample_YW,
    symmetrize,
    uniform_spectral,
)
from smoothing.verify import standard_grid, two_sample_test
from smoothing.weight_models import make_preset

A7 = 1 / math.cos(2 * math.pi / 7)


def polya_group():
    return make_preset("cyclic_polya").group


def polya_jump(alpha=A7):
    g = polya_group()
    rho = symmetrize(SpectralMeasure(np.array([[1.0, 0.0]]), np.array([1.0])), g)
    return StableSpec(alpha, g, Jump(rho))


def discrete_jump(alpha=1.3):
    g = discrete_group(Similarity(0.5, rotation2(0.7)))
    rho = SpectralMeasure(np.array([[0.7, 0.0], [0.0, -0.6]]), np.array([0.6, 0.4]))
    return StableSpec(alpha, g, Jump(rho))


def line_spec(alpha, points=((1.0,),), weights=(1.0,), payload=Jump):
    g = continuous_group(np.eye(1))
    return StableSpec(alpha, g, payload(SpectralMeasure(np.array(points), np.array(weights))))


def _mp_one_sided(alpha, x):
    # int_0^inf (e^{ixt} - 1 - ixt 1{alpha>1}) t^{-alpha-1} dt by quadrature
    with mp.workdps(30):
        a, x = mp.mpf(alpha), mp.mpf(x)
        re0 = mp.quad(lambda t: (mp.cos(x * t) - 1) * t ** (-a - 1), [0, 1])
        re1 = mp.quadosc(lambda t: mp.cos(x * t) * t ** (-a - 1), [1, mp.inf], omega=x) - 1 / a
        if alpha > 1:
            im0 = mp.quad(lambda t: (mp.sin(x * t) - x * t) * t ** (-a - 1), [0, 1])
            im1 = mp.quadosc(lambda t: mp.sin(x * t) * t ** (-a - 1), [1, mp.inf], omega=x) - x / (a - 1)
        else:
            im0 = mp.quad(lambda t: mp.sin(x * t) * t ** (-a - 1), [0, 1])
            im1 = mp.quadosc(lambda t: mp.sin(x * t) * t ** (-a - 1), [1, mp.inf], omega=x)
        return complex(re0 + re1) + 1j * complex(im0 + im1)


def test_gaussian_exponent():
    g = isotropic_group(3)
    sp = StableSpec(2.0, g, Gaussian(np.eye(3)))
    x = np.array([[0.3, -1.0, 2.0], [0.0, 0.0, 0.0]])
    v = psi_eval(sp, x)
    assert np.allclose(v, -0.5 * np.sum(x ** 2, 1), atol=1e-15)
    assert np.all(psi_eval(StableSpec(1.2, g, Zero()), x) == 0)


@pytest.mark.parametrize("alpha", [0.7, 1.5])
@pytest.mark.parametrize("x", [0.4, -2.5])
def test_line_exponent_matches_quadrature(alpha, x):
    sp = line_spec(alpha)
    want = _mp_one_sided(alpha, abs(x))
    if x < 0:
        want = want.conjugate()
    got = complex(psi_eval(sp, np.array([[x]]))[0])
    assert abs(got - want) < 1e-9 * abs(want)


def test_symmetric_cauchy_operator_payload():
    sp = line_spec(1.0, points=((1.0,), (-1.0,)), weights=(0.5, 0.5), payload=Operator1)
    x = np.array([[0.3], [-2.0], [5.0]])
    v = psi_eval(sp, x)
    assert np.allclose(v.real, -math.pi / 2 * np.abs(x[:, 0]), rtol=1e-9)
    assert np.max(np.abs(v.imag)) < 1e-9


def test_dense_orbit_is_isotropic():
    n = 96
    g = continuous_group(np.eye(2), compact_generators=(rotation2(2 * math.pi / n),))
    sp = StableSpec(1.5, g, Jump(uniform_spectral(2, n)))
    th = np.linspace(0, 2 * np.pi, 13)
    X = 0.8 * np.stack([np.cos(th), np.sin(th)], 1)
    v = psi_eval(sp, X)
    assert np.max(np.abs(v.imag)) < 1e-8 * np.max(np.abs(v))
    c = -v.real / 0.8 ** 1.5
    assert np.ptp(c) < 1e-6 * c.mean()


def test_symmetrize_examples():
    rho = SpectralMeasure(np.array([[1.0, 0.0]]), np.array([1.0]))
    same = symmetrize(rho, continuous_group(np.eye(2)))
    assert np.array_equal(same.points, rho.points) and same.total == 1.0
    s7 = symmetrize(rho, polya_group())
    assert len(s7.weights) == 7 and np.allclose(s7.weights, 1 / 7) and s7.total == 1.0
    assert is_invariant(s7, [rotation2(2 * math.pi / 7)])
    assert not is_invariant(rho, [rotation2(2 * math.pi / 7)])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=5), st.integers(0, 1000))
def test_symmetrize_conserves_mass_exactly(ws, seed):
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(len(ws), 2))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    rho = SpectralMeasure(P, np.array(ws))
    out = symmetrize(rho, polya_group())
    assert out.total == rho.total
    assert is_invariant(out, [rotation2(2 * math.pi / 7)])


def test_nu_tail_continuous():
    sp = line_spec(1.5, weights=(1.5,))
    assert nu_tail(sp, 1.0) == pytest.approx(1.0, rel=1e-15)
    r = np.geomspace(1e-3, 1e3, 50)
    assert np.allclose(nu_tail(sp, 2 * r) / nu_tail(sp, r), 2 ** -1.5, rtol=1e-13)


def test_nu_tail_discrete_lattice_oracle():
    g = discrete_group(Similarity(0.5, np.eye(2)))
    sp = StableSpec(1.3, g, Jump(SpectralMeasure(np.array([[0.7, 0.0]]), np.array([1.0]))))
    sp1 = StableSpec(0.9, g, Jump(SpectralMeasure(np.array([[0.7, 0.0]]), np.array([1.0]))))
    for spec in (sp, sp1):
        a = spec.alpha
        for R in (0.01, 0.3, 0.7, 2.0, 13.0):
            # direct sum over lattice points 0.5^n * 0.7 > R
            want = math.fsum(0.5 ** (-n * a) for n in range(-80, 200) if 0.5 ** n * 0.7 > R)
            assert nu_tail(spec, R) == pytest.approx(want, rel=1e-12)
    # period-r multiplicativity at alpha = 1 (a jump spec cannot have alpha = 1; use the operator formula)
    r = np.geomspace(0.01, 10, 7)
    a = sp.alpha
    assert np.allclose(nu_tail(sp, r / 2) / nu_tail(sp, r), 2 ** a, rtol=1e-12)


def test_polya_invariance():
    for sp in (polya_jump(), discrete_jump(), polya_jump(0.8)):
        X = standard_grid(2, seed=1)
        base = psi_eval(sp, X)
        for u in random_group_elements(sp.group, 4, seed=2):
            v = psi_eval(sp, X @ u.matrix)
            err = np.abs(v - u.scale ** sp.alpha * base) / np.abs(u.scale ** sp.alpha * base)
            assert err.max() < 1e-6


def test_operator1_gamma_and_invariance():
    g = polya_group()
    rho = symmetrize(SpectralMeasure(np.array([[1.0, 0.0]]), np.array([1.0])), g)
    sp = StableSpec(1.0, g, Operator1(rho))
    assert np.all(np.isfinite(gamma1(sp)))
    X = standard_grid(2, seed=3)
    base = psi_eval(sp, X)
    for u in random_group_elements(g, 3, seed=4):
        v = psi_eval(sp, X @ u.matrix)
        assert np.max(np.abs(v - u.scale * base) / np.abs(u.scale * base)) < 1e-6
    with pytest.raises(DomainError):
        sample_Y(sp, n=3)


def test_spec_validation():
    g = polya_group()
    with pytest.raises(DomainError):
        StableSpec(1.5, g, Gaussian(np.eye(2)))
    with pytest.raises(DomainError):
        StableSpec(2.0, g, Gaussian(np.diag([1.0, 2.0])))
    with pytest.raises(DomainError):
        StableSpec(1.0, g, Jump(symmetrize(SpectralMeasure(np.array([[1.0, 0.0]]), np.array([1.0])), g)))
    with pytest.raises(DomainError):
        StableSpec(1.5, g, Jump(SpectralMeasure(np.array([[1.0, 0.0]]), np.array([1.0]))))
    with pytest.raises(DomainError):
        StableSpec(1.5, g, Jump(SpectralMeasure(np.array([[2.0, 0.0]]), np.array([1.0]))))
    with pytest.raises(DomainError):
        discrete_jump().__class__(1.3, discrete_jump().group,
                                  Jump(SpectralMeasure(np.array([[0.2, 0.0]]), np.array([1.0]))))
    with pytest.raises(DomainError):
        StableSpec(2.5, g, Isotropic(1.0))
    with pytest.raises(DomainError):
        line_spec(1.0, payload=Operator1)  # mean vector not zero on ker Q'


def test_incommensurate_frequencies_rejected():
    Q = np.eye(4)
    Q[0, 1], Q[1, 0] = -1.0, 1.0
    Q[2, 3], Q[3, 2] = -math.sqrt(2), math.sqrt(2)
    g = continuous_group(Q)
    rho = SpectralMeasure(np.array([[1.0, 0, 0, 0]]), np.array([1.0]))
    with pytest.raises(DomainError):
        StableSpec(1.5, g, Jump(rho))


def test_spec_roundtrip():
    for sp in (polya_jump(), discrete_jump(), StableSpec(1.5, polya_group(), Isotropic(0.7)),
               StableSpec(2.0, isotropic_group(2), Gaussian(2 * np.eye(2)))):
        back = StableSpec.from_dict(sp.to_dict())
        X = standard_grid(2, seed=5)[:5]
        assert np.allclose(psi_eval(back, X), psi_eval(sp, X), rtol=1e-14)


def test_gaussian_sampler_covariance():
    sp = StableSpec(2.0, isotropic_group(2), Gaussian(np.eye(2)))
    Y = sample_Y(sp, t=4.0, seed=1, n=100_000)
    C = np.cov(Y.T)
    se = 4 * math.sqrt(2 / len(Y)) * np.array([[1, 1 / math.sqrt(2)], [1 / math.sqrt(2), 1]])
    assert np.all(np.abs(C - 4 * np.eye(2)) < 4 * se)


def test_truncation_plan():
    sp = polya_jump()
    p = plan_truncation(sp)
    assert p.budget_met and p.expected_jumps == pytest.approx(1000, rel=1e-9)
    with pytest.raises(TruncationError):
        sample_Y(sp, n=10, max_jumps=10)
    Y = sample_Y(sp, n=10, max_jumps=10, on_budget="ignore")
    assert Y.shape == (10, 2)
    m = [plan_truncation(sp, max_jumps=k).error_metric for k in (100, 1000, 10_000)]
    assert m[0] > m[1] > m[2]


def test_time_change_examples():
    sp = StableSpec(1.5, isotropic_group(2), Isotropic(1.0))
    Y1 = sample_Y(sp, 1.0, seed=3, n=50)
    assert np.array_equal(sample_YW(sp, np.ones(50), seed=3), Y1)
    W = np.linspace(0.1, 3, 50)
    assert np.allclose(sample_YW(sp, W, seed=3, shortcut=True), W[:, None] ** (1 / 1.5) * Y1, rtol=1e-13)


def test_shortcut_matches_time_change_in_law():
    g = make_preset("bary_spacings", {"b": 27}).group
    sp = StableSpec(1.934347765446087, g, Isotropic(1.0))
    W = np.random.default_rng(0).exponential(size=40_000)
    a = sample_YW(sp, W, seed=1, shortcut=True)
    b = sample_YW(sp, W, seed=2)
    v = two_sample_test(a, b, standard_grid(2, seed=0), seed=3)
    assert v.passed


def test_jump_sampler_vs_isotropic_sampler():
    n = 64
    g = continuous_group(np.eye(2), compact_generators=(rotation2(2 * math.pi / n),))
    sj = StableSpec(1.5, g, Jump(uniform_spectral(2, n)))
    c = -float(psi_eval(sj, np.array([[1.0, 0.0]]))[0].real)
    si = StableSpec(1.5, g, Isotropic(c))
    a = sample_Y(sj, n=30_000, seed=4, gaussian=True)
    b = sample_Y(si, n=30_000, seed=5)
    assert two_sample_test(a, b, standard_grid(2, seed=1), seed=6).passed
