import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad

from wavemode.errors import InvalidKernel
from wavemode.medium import (BAND_EDGE, CovarianceSpec, GaussianBumpKernel, TabulatedKernel, band_limited_check,
                             eval_S, load_tabulated_kernel, quadrature_for)


def cos_moment(v, d):
    return d if v == 0 else d * math.sin(v) / v


def test_constant_kernel_closed_form():
    spec = CovarianceSpec.constant(1.0, 2.0, amplitude=0.7)
    for v1, v2 in [(0.0, 0.0), (1.3, 4.0), (7.0, 0.5), (25.0, 19.0)]:
        ref = 0.7 * cos_moment(v1, 2.0) * cos_moment(v2, 2.0)
        assert eval_S(spec, v1, v2) == pytest.approx(ref, abs=1e-10)


def test_cosine_band_closed_form():
    spec = CovarianceSpec.cosine_band(1.0, 1.0, amplitude=2.0, band_limit=None)

    def C(v):
        return quad(lambda x: math.cos(math.pi * x) * math.cos(v * x), 0, 1, epsabs=1e-14)[0]

    for v1, v2 in [(math.pi, math.pi), (0.0, math.pi), (2.0, 5.5)]:
        assert eval_S(spec, v1, v2) == pytest.approx(2.0 * C(v1) * C(v2), abs=1e-11)
    assert eval_S(spec, math.pi, math.pi) == pytest.approx(0.5, rel=1e-12)


def test_gaussian_against_dblquad():
    spec = CovarianceSpec.gaussian_bump(1.0, 1.0, amplitude=1.5, center=0.3, width=0.15)
    k = spec.kernel
    for v1, v2 in [(0.0, 2.0), (9.0, 3.0), (30.0, 30.0)]:
        ref = dblquad(lambda y, x: k(x, y) * math.cos(v1 * x) * math.cos(v2 * y), 0, 1, 0, 1,
                      epsabs=1e-13, epsrel=1e-12)[0]
        assert eval_S(spec, v1, v2) == pytest.approx(ref, abs=1e-10)


def test_band_limit_truncates():
    spec = CovarianceSpec.cosine_band(1.0, 1.0)
    assert eval_S(spec, 2.0 * BAND_EDGE, 0.1) == 0.0
    assert eval_S(spec, math.pi, math.pi) > 0
    assert band_limited_check(spec)
    assert not band_limited_check(CovarianceSpec.cosine_band(1.0, 1.0, band_limit=None))
    assert not band_limited_check(CovarianceSpec.constant(1.0, 1.0))


def test_quadrature_cached():
    spec = CovarianceSpec.gaussian_bump(1.0, 1.0)
    assert quadrature_for(spec, 10.0) is quadrature_for(spec, 10.0)


def test_sine_quadratic_matches_pairs():
    spec = CovarianceSpec.gaussian_bump(1.0, 1.0)
    rule = quadrature_for(spec, 60.0)
    sigma, eta = 4.0, np.linspace(0.0, 50.0, 40)
    dm, dp = sigma - eta, sigma + eta
    ref = 0.25 * (rule.pairs(dm, dm) + rule.pairs(dp, dp) - 2.0 * rule.pairs(dm, dp))
    assert np.allclose(rule.sine_quadratic(sigma, eta), ref, atol=1e-13)
    many = rule.sine_quadratic_many([4.0, 7.5], eta)
    assert np.allclose(many[0], ref, atol=1e-13)


def test_tabulated_round_trip(tmp_path):
    g = np.linspace(0.0, 1.0, 21)
    vals = np.exp(-np.subtract.outer(g, g) ** 2 / 0.1)
    path = tmp_path / "k.csv"
    rows = ["x,y,value"] + [f"{float(x)!r},{float(y)!r},{float(vals[i, j])!r}" for i, x in enumerate(g) for j, y in enumerate(g)]
    path.write_text("\n".join(rows) + "\n")
    k = load_tabulated_kernel(path)
    assert k.d == 1.0
    assert np.allclose(k(g[:, None], g[None, :]), vals)
    spec = CovarianceSpec(k, 1.0, 1.0)
    # The bilinear interpolant integrates exactly to the 2-D trapezoid rule on the samples.
    w = np.full(g.size, g[1])
    w[[0, -1]] *= 0.5
    assert eval_S(spec, 0.0, 0.0) == pytest.approx(w @ vals @ w, rel=1e-12)


@pytest.mark.parametrize("body, msg", [
    ("a,b,c\n0,0,1\n", "header"),
    ("x,y,value\n0,0,1\n0,1,2\n1,0,1\n1,1,1\n", "symmetric"),
    ("x,y,value\n0,0,1\n0,1,2\n1,0,2\n1,1,1\n", "semidefinite"),
    ("x,y,value\n0,0,1\n0,1,0\n1,0,0\n", "rows"),
])
def test_tabulated_rejects(tmp_path, body, msg):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(InvalidKernel, match=msg):
        load_tabulated_kernel(path)


def test_kernel_depth_mismatch():
    with pytest.raises(InvalidKernel):
        CovarianceSpec(GaussianBumpKernel(2.0), 1.0, 1.0)
    with pytest.raises(InvalidKernel):
        TabulatedKernel([0.0, 1.0], np.eye(3))


@given(st.floats(0.0, 40.0), st.floats(0.0, 40.0))
def test_property_symmetry_and_evenness(v1, v2):
    spec = CovarianceSpec.gaussian_bump(1.0, 1.0, center=0.6, width=0.1)
    s = eval_S(spec, v1, v2)
    assert s == pytest.approx(eval_S(spec, v2, v1), abs=1e-12)
    assert s == pytest.approx(eval_S(spec, -v1, v2), abs=1e-12)


@given(st.lists(st.floats(0.0, 30.0), min_size=2, max_size=6, unique=True))
def test_property_psd_gram(vs):
    # S restricted to cosine test functions is a Gram matrix of a PSD kernel.
    spec = CovarianceSpec.gaussian_bump(1.0, 1.0)
    v = np.array(vs)
    S = eval_S(spec, v[:, None], v[None, :])
    assert np.linalg.eigvalsh(S).min() >= -1e-10 * max(np.abs(S).max(), 1e-300)
