import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hardy_nls.grid import (ConfigurationError, Grading, PhysParams, RadialField, UsageError,
                            assemble_sector_op, build_grid, inner_a, l2_inner, s_minus, s_plus)


def test_params_range():
    assert PhysParams(-0.04).beta == pytest.approx(np.sqrt(0.84))
    for a in (-0.3, -0.09, 0.0, 0.1, float("nan")):
        with pytest.raises(ConfigurationError, match="-1/4"):
            PhysParams(a)


def test_indicial_roots(params):
    for ell in (0, 1, 2):
        sp_, sm = s_plus(params, ell), s_minus(params, ell)
        # both solve s(s+1) = a + l(l+1)
        for s in (sp_, sm):
            assert s * (s + 1) == pytest.approx(params.a + ell * (ell + 1))
    assert s_plus(params, 1) == pytest.approx((-1 + np.sqrt(9 + 4 * params.a)) / 2)


@pytest.mark.parametrize("kind", ["hybrid", "geometric", "log"])
def test_grid_shape(params, kind):
    g = build_grid(params, 256, 150.0, Grading(kind=kind, r_min=1e-4))
    assert g.r[0] == pytest.approx(1e-4, rel=1e-9)
    assert g.r[-1] == 150.0
    assert np.all(np.diff(g.r) > 0)
    r, dr = g.at(np.arange(1, 257, dtype=float))
    assert np.allclose(r[:-1], g.r[:-1])


def test_grid_errors(params):
    with pytest.raises(ConfigurationError):
        build_grid(params, 8)
    with pytest.raises(ConfigurationError):
        build_grid(params, 256, 0.5)
    with pytest.raises(ConfigurationError):
        build_grid(params, 256, 100.0, Grading(kind="spiral"))


def test_fingerprint(params):
    a = build_grid(params, 256, 200.0).fingerprint()
    assert a == build_grid(params, 256, 200.0).fingerprint()
    assert a != build_grid(params, 320, 200.0).fingerprint()


def test_quadrature(params):
    g = build_grid(params, 512, 60.0)
    val = g.integrate(np.exp(-g.r ** 2))
    assert val == pytest.approx(np.pi ** 1.5, rel=1e-9)


def test_operator_symmetric(small):
    for ell, c in ((0, 0), (0, 5), (1, 5)):
        A = assemble_sector_op(small.grid, small.params, ell, c).sparse
        assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    with pytest.raises(UsageError):
        assemble_sector_op(small.grid, small.params, 0, 3)


def test_energy_form_matches_closed_form(params):
    # ||f||_a^2 for f = exp(-r^2): int |f'|^2 + a f^2 / r^2 over R^3
    g = build_grid(params, 1024, 60.0)
    f = RadialField.from_function(g, params, lambda r: np.exp(-r ** 2))
    exact = 4 * np.pi * (3 * np.sqrt(np.pi / 2) / 8 + params.a * np.sqrt(np.pi / 2) / 2)
    assert inner_a(f, f) == pytest.approx(exact, rel=1e-6)


def test_mixed_fields_rejected(params, small):
    g2 = build_grid(params, 300, 200.0)
    f = RadialField(small.grid, params, np.ones(small.grid.n))
    h = RadialField(g2, params, np.ones(300))
    with pytest.raises(UsageError):
        l2_inner(f, h)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0.3, 5.0))
def test_hardy_positivity(small, coef, width):
    # the form stays positive on arbitrary smooth radial data, a > -1/4
    r = small.grid.r
    u = sum(c * np.exp(-((r - j * width) / width) ** 2) for j, c in enumerate(coef))
    if np.max(np.abs(u)) < 1e-8:
        return
    f = RadialField.from_u(small.grid, small.params, u)
    assert inner_a(f, f) > 0
