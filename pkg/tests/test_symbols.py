"""Symbol-class membership, homogeneity and multiplier-bound audits."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrlab.symbols import (
    EllipticSymbol, check_ellipticity, laplacian_symbol, mihlin_audit,
    principal_symbol, symbols_equal, unit_sphere_samples,
)


def test_symbol_validation():
    with pytest.raises(ValueError):
        EllipticSymbol(1, 3, {(3,): 1.0})          # odd order
    with pytest.raises(ValueError):
        EllipticSymbol(1, 2, {(1,): 1.0})          # no principal part
    with pytest.raises(ValueError):
        EllipticSymbol(1, 2, {(3,): 1.0})          # index above order
    with pytest.raises(ValueError):
        EllipticSymbol(2, 2, {(2,): 1.0})          # index length mismatch


def test_sector_boundary_is_sharp():
    # A(xi) = e^{i pi/4} xi^2 lies on the boundary of the pi/4 sector:
    # a slightly wider sector accepts it, a slightly narrower one rejects it
    sym = EllipticSymbol(1, 2, {(2,): np.exp(1j * np.pi / 4)})
    wide = check_ellipticity(sym, np.pi / 4 + 0.01, 0.5, 2.0, 512)
    narrow = check_ellipticity(sym, np.pi / 4 - 0.01, 0.5, 2.0, 512)
    assert wide.passed
    assert not narrow.passed
    assert narrow.angle_margin < 0 < wide.angle_margin


def test_lower_bound_rejects_small_symbols():
    sym = EllipticSymbol(1, 2, {(2,): 0.3})
    cert = check_ellipticity(sym, np.pi / 3, 0.5, 2.0, 256)
    assert not cert.passed
    assert cert.modulus_margin < 0


def test_coefficient_cap_rejects_large_symbols():
    sym = EllipticSymbol(1, 2, {(2,): 5.0})
    cert = check_ellipticity(sym, np.pi / 3, 0.5, 2.0, 256)
    assert not cert.passed
    assert cert.coeff_margin < 0


def test_principal_homogeneity():
    # principal part of order m scales like t^m
    sym = EllipticSymbol(2, 2, {(2, 0): 1.0, (0, 2): 2.0, (1, 1): 0.5j,
                                (1, 0): 3.0})
    xi = np.array([0.7, -0.4])
    for t in (2.0, 5.0):
        a = principal_symbol(sym, t * xi)
        b = t ** 2 * principal_symbol(sym, xi)
        assert a == pytest.approx(b, rel=1e-12)


def test_principal_evenness():
    sym = EllipticSymbol(2, 2, {(2, 0): 1.0, (0, 2): 2.0, (1, 1): 0.5j})
    xi = np.array([0.3, 0.9])
    assert principal_symbol(sym, -xi) == pytest.approx(principal_symbol(sym, xi),
                                                       rel=1e-12)


def test_laplacian_symbol_values():
    sym1 = laplacian_symbol(1, 2, 1.0)
    assert principal_symbol(sym1, np.array([3.0])) == pytest.approx(9.0)
    sym2 = laplacian_symbol(2, 2, 1.0)
    # |xi|^2 at (3, 4) = 25
    assert principal_symbol(sym2, np.array([3.0, 4.0])) == pytest.approx(25.0)
    sym4 = laplacian_symbol(2, 4, 0.5)
    # 0.5 |xi|^4 at (3, 4) = 0.5 * 625
    assert principal_symbol(sym4, np.array([3.0, 4.0])) == pytest.approx(312.5)


def test_laplacian_certificate_margins():
    # real positive symbol: angle margin theta, modulus margin 1 - kappa on
    # the unit sphere, coefficient margin K - 1
    sym = laplacian_symbol(1, 2, 1.0)
    cert = check_ellipticity(sym, np.pi / 3, 0.5, 2.0, 256)
    assert cert.passed
    assert cert.angle_margin == pytest.approx(np.pi / 3, abs=1e-12)
    assert cert.modulus_margin == pytest.approx(0.5, abs=1e-12)
    assert cert.coeff_margin == pytest.approx(1.0, abs=1e-12)


def test_certificate_deterministic():
    sym = EllipticSymbol(2, 2, {(2, 0): 1.0, (0, 2): 1.0 + 0.2j})
    a = check_ellipticity(sym, np.pi / 3, 0.5, 2.0, 512)
    b = check_ellipticity(sym, np.pi / 3, 0.5, 2.0, 512)
    assert a == b


def test_serialization_roundtrip():
    sym = EllipticSymbol(2, 4, {(4, 0): 1.0 + 1j, (2, 2): 2.0, (0, 4): 1.0,
                                (1, 0): -0.5j})
    back = EllipticSymbol.loads(sym.dumps())
    assert symbols_equal(sym, back)


@given(st.integers(0, 10 ** 6))
@settings(max_examples=20, deadline=None)
def test_sphere_samples_are_unit(seed):
    pts = unit_sphere_samples(2, 64, seed)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-12)


def test_sphere_samples_1d():
    pts = unit_sphere_samples(1, 16)
    assert set(np.unique(pts)) == {-1.0, 1.0}


def test_mihlin_bound_heat_symbol():
    # for A = xi^2 the weighted symbol lam^{1-|b|/2} xi^b/(lam+xi^2) and its
    # first scaled derivative stay below 1.3 (|xi D M| peaks at 9/8 for b=1)
    sym = laplacian_symbol(1, 2, 1.0)
    for beta in ((0,), (1,), (2,)):
        worst = mihlin_audit(sym, 1.0, beta)
        assert worst <= 1.3


def test_mihlin_bound_stable_in_lambda():
    # the lam prefactor makes the audit value lambda-independent for the
    # scale-invariant heat symbol
    sym = laplacian_symbol(1, 2, 1.0)
    vals = [mihlin_audit(sym, lam, (1,)) for lam in (1.0, 10.0, 100.0)]
    assert max(vals) / min(vals) <= 1.05


def test_mihlin_2d_mixed_derivative():
    sym = laplacian_symbol(2, 2, 1.0)
    worst = mihlin_audit(sym, 4.0, (1, 1))
    assert np.isfinite(worst) and worst <= 4.0


def test_scale_and_shift():
    sym = laplacian_symbol(1, 2, 1.0)
    doubled = sym.scale(2.0)
    assert principal_symbol(doubled, np.array([1.0])) == pytest.approx(2.0)
    shifted = sym.shift({(0,): 1.5})
    assert shifted.coeffs[(0,)] == 1.5
