"""Grid, norm and spectral-transform checks against independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrlab.fields import (
    GridField, SpaceTimeField, TorusGrid, apply_multiplier, besov_norm,
    derivative, field_from_binary, field_from_csv, field_to_binary,
    field_to_csv, low_pass, lp_block, lq_norm, monomial, multi_indices_upto,
    n_blocks, sobolev_norms, trace_norm_oracle,
)


def _rand_field(grid, seed):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    return GridField(grid, vals)


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(3, 16)
    with pytest.raises(ValueError):
        TorusGrid(1, 48)      # not a power of two
    with pytest.raises(ValueError):
        TorusGrid(1, 512)     # above the 1D cap
    with pytest.raises(ValueError):
        TorusGrid(2, 128)     # above the 2D cap


def test_field_shape_validation():
    grid = TorusGrid(1, 8)
    with pytest.raises(ValueError):
        GridField(grid, np.zeros(4))


def test_lq_norm_direct_sum_oracle():
    # independent route: plain loop over cells
    grid = TorusGrid(1, 8)
    f = _rand_field(grid, 0)
    q = 3.0
    acc = 0.0
    for v in f.values:
        acc += abs(v) ** q * (2 * np.pi / 8)
    assert lq_norm(f, q) == pytest.approx(acc ** (1 / q), rel=1e-13)


def test_lq_norm_2d_direct_sum_oracle():
    grid = TorusGrid(2, 8)
    f = _rand_field(grid, 1)
    acc = 0.0
    for row in f.values:
        for v in row:
            acc += abs(v) ** 2 * (2 * np.pi / 8) ** 2
    assert lq_norm(f, 2.0) == pytest.approx(np.sqrt(acc), rel=1e-13)


@given(st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_parseval_identity(seed):
    # ||f||_2^2 = (2pi)^d / N^d * sum |fhat_k|^2 / N^d  (numpy fft convention)
    grid = TorusGrid(1, 16)
    f = _rand_field(grid, seed)
    hat = np.fft.fftn(f.values)
    rhs = np.sqrt(np.sum(np.abs(hat) ** 2) / grid.size * grid.cell_volume)
    assert lq_norm(f, 2.0) == pytest.approx(rhs, rel=1e-12)


def test_derivative_of_complex_exponential_is_exact():
    # D = -i d/dx, so D^2 e^{ikx} = k^2 e^{ikx}
    grid = TorusGrid(1, 32)
    x = grid.points()[0]
    for k in (1, 3, 7):
        f = GridField(grid, np.exp(1j * k * x))
        df = derivative(f, (2,))
        assert np.allclose(df.values, k ** 2 * f.values, atol=1e-12)


def test_derivative_2d_mixed():
    grid = TorusGrid(2, 16)
    xx, yy = grid.points()
    f = GridField(grid, np.exp(1j * (2 * xx + 3 * yy)))
    df = derivative(f, (1, 1))
    assert np.allclose(df.values, 2 * 3 * f.values, atol=1e-12)


@given(st.integers(0, 500))
@settings(max_examples=20, deadline=None)
def test_multiplier_composition(seed):
    # applying m1 then m2 equals applying m1*m2
    grid = TorusGrid(1, 16)
    f = _rand_field(grid, seed)
    rng = np.random.default_rng(seed + 1)
    m1 = rng.standard_normal(grid.shape)
    m2 = rng.standard_normal(grid.shape)
    a = apply_multiplier(apply_multiplier(f, m1), m2)
    b = apply_multiplier(f, m1 * m2)
    assert np.allclose(a.values, b.values, atol=1e-10)


def test_sobolev_semi_vs_full_single_mode():
    # e^{ikx}: ||D^a f||_2 = k^|a| ||f||_2, so the splits are exact sums
    grid = TorusGrid(1, 32)
    x = grid.points()[0]
    k = 3
    f = GridField(grid, np.exp(1j * k * x))
    base = lq_norm(f, 2.0)
    full, semi = sobolev_norms(f, 2, 2.0)
    assert semi == pytest.approx(k ** 2 * base, rel=1e-12)
    assert full == pytest.approx((1 + k + k ** 2) * base, rel=1e-12)


def test_littlewood_paley_blocks_partition():
    grid = TorusGrid(1, 32)
    f = _rand_field(grid, 7)
    total = np.zeros(grid.shape, dtype=complex)
    for j in range(n_blocks(grid) + 1):
        total += lp_block(f, j).values
    assert np.allclose(total, f.values, atol=1e-12)


def test_besov_single_block_closed_form():
    # a mode with |k| inside block j gives exactly 2^{js} ||f||_q
    grid = TorusGrid(1, 64)
    x = grid.points()[0]
    for k, j in ((1, 0), (3, 2), (8, 3), (12, 4)):
        f = GridField(grid, np.exp(1j * k * x))
        s, q, p = 1.5, 2.0, 2.0
        expect = 2.0 ** (j * s) * lq_norm(f, q)
        assert besov_norm(f, s, q, p) == pytest.approx(expect, rel=1e-12)


def test_low_pass_is_projection():
    grid = TorusGrid(1, 32)
    f = _rand_field(grid, 3)
    g = low_pass(f, 4.0)
    gg = low_pass(g, 4.0)
    assert np.allclose(g.values, gg.values, atol=1e-13)


def test_trace_norm_equivalent_to_besov():
    # dual route: the K-functional discretization and the dyadic-block sum
    # price the same space (theta*m = s); equivalence constants stay small
    grid = TorusGrid(1, 64)
    x = grid.points()[0]
    theta, q, p, m = 0.75, 2.0, 2.0, 2
    s = theta * m
    for k in (2, 4, 8, 16):
        f = GridField(grid, np.exp(1j * k * x))
        tr = trace_norm_oracle(f, theta, q, p, m)
        bs = besov_norm(f, s, q, p)
        ratio = tr / bs
        assert 1.0 / 8.0 <= ratio <= 8.0


def test_trace_norm_scales_like_mode_power():
    # on single modes the interpolation norm must grow like k^{theta m}
    grid = TorusGrid(1, 128)
    x = grid.points()[0]
    theta, q, p, m = 0.5, 2.0, 2.0, 2
    vals = []
    for k in (4, 8, 16, 32):
        f = GridField(grid, np.exp(1j * k * x))
        vals.append(trace_norm_oracle(f, theta, q, p, m))
    rate = [vals[i + 1] / vals[i] for i in range(3)]
    # doubling k should roughly double the norm (theta*m = 1)
    assert all(1.5 <= r <= 2.7 for r in rate)


def test_trace_norm_zero_field():
    grid = TorusGrid(1, 16)
    assert trace_norm_oracle(GridField.zero(grid), 0.5, 2.0, 2.0, 2) == 0.0


def test_spacetime_midpoints():
    grid = TorusGrid(1, 8)
    times = np.linspace(0.0, 1.0, 5)
    vals = np.stack([np.full(grid.shape, t) for t in times])
    f = SpaceTimeField(grid, times, vals)
    mids = f.midpoint_values()
    assert np.allclose(mids[:, 0], [0.125, 0.375, 0.625, 0.875])


def test_spacetime_value_at_interpolates():
    grid = TorusGrid(1, 8)
    times = np.array([0.0, 1.0])
    vals = np.stack([np.zeros(grid.shape), np.ones(grid.shape)])
    f = SpaceTimeField(grid, times, vals)
    assert np.allclose(f.value_at(0.25), 0.25)


def test_csv_roundtrip():
    grid = TorusGrid(1, 8)
    f = _rand_field(grid, 11)
    field_to_csv(f, "/tmp/_field_rt.csv")
    g = field_from_csv("/tmp/_field_rt.csv", grid)
    assert np.allclose(f.values, g.values, atol=1e-15)


def test_binary_roundtrip_exact():
    grid = TorusGrid(2, 8)
    f = _rand_field(grid, 12)
    field_to_binary(f, "/tmp/_field_rt.bin")
    g = field_from_binary("/tmp/_field_rt.bin")
    assert g.grid == grid
    assert np.array_equal(f.values, g.values)


def test_monomial_matches_power():
    grid = TorusGrid(2, 8)
    mesh = grid.frequency_mesh()
    vals = monomial(mesh, (2, 1))
    assert np.allclose(vals, mesh[0] ** 2 * mesh[1])


def test_multi_indices_counts():
    # d=2, order <= 2: (0,0),(1,0),(0,1),(2,0),(1,1),(0,2)
    idx = multi_indices_upto(2, 2)
    assert len(idx) == 6
    assert (1, 1) in idx


def test_weighted_lq_norm_power_weight():
    from mrlab.weights import PowerWeight
    # time-axis weighted norm on a SpaceTimeField trajectory is exercised in
    # the solver tests; here the spatial weight hook must match a direct sum
    grid = TorusGrid(1, 8)
    f = _rand_field(grid, 5)
    w = np.linspace(0.5, 2.0, 8)
    direct = (np.sum(np.abs(f.values) ** 2 * w * grid.cell_volume)) ** 0.5
    assert lq_norm(f, 2.0, w=w) == pytest.approx(direct, rel=1e-13)
