import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothing.char_roots import (
    DirichletPsi,
    RealSecondRootWarning,
    RootSet,
    chi_roots,
    lambda2,
    psi_lambda2,
    psi_root_near,
    select_lambda2,
)
from smoothing.errors import DomainError


def _mp_roots(b):
    # independent oracle: expand prod(z + j) - b! and use mpmath's polyroots
    with mp.workdps(60):
        c = [mp.mpf(1)]
        for j in range(1, b):
            c = [j * a + p for a, p in zip(c + [0], [0] + c)]
        c[0] -= mp.factorial(b)
        r = mp.polyroots(list(reversed(c)), maxsteps=400, extraprec=400)
        return np.array([complex(v) for v in r])


def test_b4_factorization():
    rs = chi_roots(4)
    want = np.array([1.0, (-7 + 1j * math.sqrt(23)) / 2, (-7 - 1j * math.sqrt(23)) / 2])
    for w in want:
        assert np.min(np.abs(rs.roots - w)) < 1e-13
    assert abs(lambda2(4) - want[1]) < 1e-13


@pytest.mark.parametrize("b", [5, 12, 27])
def test_roots_match_polyroots_oracle(b):
    rs = chi_roots(b)
    ref = _mp_roots(b)
    assert len(rs) == b - 1
    for z in ref:
        assert np.min(np.abs(rs.roots - z)) < 1e-9 * max(1, abs(z))
    assert rs.max_residual() < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(4, 60))
def test_root_set_structure(b):
    rs = chi_roots(b)
    z = rs.roots
    assert len(z) == b - 1
    assert np.any(z == 1.0)
    # conjugate closed
    for v in z:
        assert np.min(np.abs(z - np.conj(v))) < 1e-9 * max(1, abs(v))
    l2 = select_lambda2(rs)
    assert l2.real < 1 and l2.imag > 0
    if b >= 14:
        assert l2.real > 0


def test_half_threshold_between_26_and_27():
    assert lambda2(26).real <= 0.5
    assert lambda2(27).real > 0.5
    assert abs(lambda2(27) - (0.5169701218484807 + 2.1788653536248304j)) < 1e-13


def test_select_synthetic():
    assert select_lambda2(RootSet.from_roots([1, 0.3 + 0.2j, 0.3 - 0.2j, -2])) == 0.3 + 0.2j
    with pytest.warns(RealSecondRootWarning):
        assert select_lambda2(RootSet.from_roots([1, 0.4, -3])) == 0.4
    with pytest.raises(DomainError):
        select_lambda2(RootSet.from_roots([0.5, 2]))
    with pytest.raises(DomainError):
        chi_roots(3)


def test_dirichlet_psi_matches_chi():
    psi = DirichletPsi(27)
    z = psi_root_near(psi, 0.5 + 2j)
    assert abs(z - lambda2(27)) < 1e-9
    assert abs(psi_root_near(psi, 1.0) - 1.0) < 1e-14
    # uniform spacings: psi = b! Gamma(z+1)/Gamma(z+b)
    for v in (0.3, 1.7 + 0.4j):
        want = complex(mp.factorial(27) * mp.gamma(v + 1) / mp.gamma(v + 27))
        assert abs(psi(v) - want) < 1e-12 * abs(want)
    assert abs(psi_lambda2(psi) - lambda2(27)) < 1e-12


def test_dirichlet_noninteger_shape_is_root():
    psi = DirichletPsi(10, 1.5)
    z = psi_lambda2(psi)
    assert abs(psi(z) - 1) < 1e-10 and z.imag > 0
