import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gammaln

from smoothing.char_roots import lambda2
from smoothing.errors import DomainError
from smoothing.similarity import Similarity, rotation2
from smoothing.weight_models import (
    alpha_or_inf,
    check_assumptions,
    expected_Z1,
    m_eval,
    make_preset,
    model_from_config,
    sample_Z1,
    scan_alpha,
    solve_alpha,
    table,
)

C7 = math.cos(2 * math.pi / 7)


def one_third():
    return table([{"prob": 1.0, "C": [1.0], "T": [{"scale": 1 / 3, "rotation": [[1.0]]}] * 2}])


def test_bary_m_formula_and_mean_offspring():
    m = make_preset("bary_spacings", {"b": 27})
    assert m_eval(m, 0.0)[0] == pytest.approx(27.0, rel=1e-14)
    re = lambda2(27).real
    for s in (0.5, 1.0, 2.5):
        want = math.exp(gammaln(28) - sum(math.log(re * s + j) for j in range(1, 27)))
        assert m_eval(m, s)[0] == pytest.approx(want, rel=1e-13)


@pytest.mark.parametrize("name,s", [("bary_spacings", 1.3), ("cyclic_polya", 0.8), ("cyclic_polya", 2.0)])
def test_analytic_m_matches_monte_carlo(name, s):
    m = make_preset(name)
    a, _ = m_eval(m, s)
    v, se = m_eval(m, s, n_mc=200_000, seed=1, force_mc=True)
    assert abs(v - a) < 4 * se


def test_cyclic_polya_m_and_alpha():
    m = make_preset("cyclic_polya", {"b": 7})
    for s in (0.3, 1.0, 4.0):
        assert m_eval(m, s)[0] == pytest.approx(2 / (1 + C7 * s), rel=1e-15)
    a = solve_alpha(m)
    assert abs(a - 1 / C7) < 1e-12
    assert abs(m_eval(m, a)[0] - 1) < 1e-12
    with pytest.raises(DomainError):
        make_preset("cyclic_polya", {"b": 4})


def test_table_alpha_and_determinism():
    T = 2 ** (-1 / 1.5)
    m = table([{"prob": 1, "C": [0.0], "T": [{"scale": T, "rotation": [[1.0]]}] * 2}])
    assert m.deterministic
    assert abs(m_eval(m, 1.5)[0] - 1) < 1e-15
    assert abs(solve_alpha(m) - 1.5) < 1e-12
    t = one_third()
    for seed in (0, 5, 99):
        w = t.sample(seed)
        assert w.N == 2 and np.allclose(w.C, [1.0]) and all(abs(x.scale - 1 / 3) < 1e-15 for x in w.T)


def test_bary_alpha_is_inverse_re_lambda2():
    m = make_preset("bary_spacings", {"b": 27})
    a = solve_alpha(m)
    assert abs(a - 1 / lambda2(27).real) < 1e-9
    # frozen from a 40-digit mpmath findroot on prod((z+j)/(1+j)) = 1
    assert abs(a - 1.934347765446087) < 1e-12


def test_scan_reports_no_root():
    m = table([{"prob": 1, "C": [0.0], "T": [{"scale": 1.0, "rotation": [[1.0]]}] * 2}])
    assert scan_alpha(m).alpha is None
    assert alpha_or_inf(m) == math.inf
    with pytest.raises(DomainError):
        solve_alpha(m)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_solve_alpha_on_two_atom_tables(p, a, b):
    m = table([{"prob": p, "T": [a, a]}, {"prob": 1 - p, "T": [b, b, b]}] and
              [{"prob": p, "C": [0.0], "T": [{"scale": a, "rotation": [[1.0]]}] * 2},
               {"prob": 1 - p, "C": [0.0], "T": [{"scale": b, "rotation": [[1.0]]}] * 3}])
    al = alpha_or_inf(m)
    assert np.isfinite(al)
    # direct oracle: the finite sum at the root
    assert abs(p * 2 * a ** al + (1 - p) * 3 * b ** al - 1) < 1e-10


def test_expected_Z1_examples():
    m = make_preset("cyclic_polya")
    EZ, _ = expected_Z1(m)
    assert np.allclose(EZ, np.eye(2))
    Z = sample_Z1(m, 200_000, seed=3)
    mc = Z.mean(axis=0)
    se = Z.std(axis=0) / math.sqrt(len(Z))
    assert np.all(np.abs(mc - np.eye(2)) < 4 * se + 1e-12)
    mb = make_preset("bary_spacings", {"b": 27})
    Zb = sample_Z1(mb, 100_000, seed=4)
    assert np.all(np.abs(Zb.mean(0) - np.eye(2)) < 4 * Zb.std(0) / math.sqrt(len(Zb)))
    R = rotation2(math.pi)
    t = table([{"prob": 1, "C": [0, 0], "T": [Similarity(0.5, R).to_dict()] * 2}])
    assert np.allclose(expected_Z1(t)[0], R)


def test_assumption_reports():
    r = check_assumptions(make_preset("cyclic_polya"), 1 / C7)
    for k in ("A1", "A2", "A3_mprime", "A4prime", "S1"):
        assert r.passed(k) is True
    assert r.entries["A3_mprime"]["estimate"] < 0
    rb = check_assumptions(make_preset("bary_spacings", {"b": 27}), 1 / lambda2(27).real)
    assert rb.entries["A1"]["estimate"] == 27
    rt = check_assumptions(one_third(), math.log(2) / math.log(3))
    s1 = rt.entries["S1"]
    assert s1["pass"] is True and s1["beta"] == 1.0 and abs(s1["estimate"] - 2 / 3) < 1e-12
    assert r.to_dict()["entries"]["A1"]["pass"] is True


def test_polya_second_moment_bound():
    m = make_preset("cyclic_polya")
    assert m_eval(m, 2.0)[0] < 1
    Z = sample_Z1(m, 100_000, seed=8)
    assert np.max(np.sum(Z[:, :, 0] ** 2, axis=1)) <= 4 + 1e-12


def test_config_and_presets():
    m = model_from_config({"preset": "bary", "b": 30})
    assert m.params["b"] == 30
    with pytest.raises(DomainError):
        make_preset("nope")
    with pytest.raises(DomainError):
        make_preset("cyclic_polya", {"bogus": 1})
    for name in ("bary_exponential", "fragmentation", "biggins_brw", "kac3d"):
        mm = make_preset(name)
        fb = mm.sample_batch(0, 100)
        assert fb.size == 100 and np.all(fb.scale >= 0)


def test_mc_infinite_mean_flag():
    t = make_preset("biggins_brw")
    v, se = m_eval(t, 0.5, n_mc=20_000)
    assert np.isfinite(v) or math.isnan(se)
