"""Viscous operators: symbols, matrix-free vs dense realizations, blocks.

The dense matrices are assembled from explicit DFT differentiation
matrices and Kronecker products while the applicators use FFTs — two
independent code paths that must agree.  Symbols are checked against
closed-form eigenvalues and dense 2x2 eigensolves.
"""

from __future__ import annotations

import numpy as np
import pytest
import scipy.io

from cpelab.grid import make_grid, vertical_derivative
from cpelab.operators import (
    DENSE_LIMIT,
    apply_chs,
    apply_cylindrical_split,
    apply_hydrostatic_lame,
    assemble_chs,
    dense_chs,
    dense_hydrostatic_lame,
    export_matrix,
    lame_symbol_eigs,
    make_lame_coefficients,
    pack_state,
    symbol_ellipticity_report,
    unpack_state,
    vertical_lame_block,
    vertical_reduction,
)
from cpelab.transforms import DELTA, PhysicalParams, make_pressure_law


def smooth_xi0(g, base=1.0, amp=0.2):
    x = g.x[:, None]
    y = g.y[None, :]
    out = base + amp * (np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)
                        + 0.5 * np.sin(2 * np.pi * y))
    assert np.all(out > 0)
    return out


def all_model_params():
    return [
        PhysicalParams(mu=1.0, mu_prime=0.7, model="Gamma1"),
        PhysicalParams(mu=0.8, mu_prime=-0.3, model="Gamma2"),
        PhysicalParams(mu=1.2, mu_prime=0.5, model="GeneralNoGravity",
                       **make_pressure_law("linear", c=1.0)),
    ]


# ---------------------------------------------------------------------------
# symbol
# ---------------------------------------------------------------------------

def test_symbol_worked_examples():
    mu, mup = 1.3, 0.4
    e = lame_symbol_eigs((1, 0), mu, mup)
    assert np.isclose(e.lam1, (mu + mup) * 4 * np.pi**2, atol=1e-12)
    assert np.isclose(e.lam2, mu * 4 * np.pi**2, atol=1e-12)
    e2 = lame_symbol_eigs((1, 1), mu, mup)
    assert np.isclose(e2.lam2, mu * 8 * np.pi**2, atol=1e-12)
    # angular input bypasses the 2 pi scaling
    e3 = lame_symbol_eigs(np.array([1.0, 0.0]), mu, mup, angular=True)
    assert np.isclose(e3.lam2, mu, atol=1e-15)


def test_symbol_matrix_eigensolve_agreement():
    rng = np.random.default_rng(5)
    for _ in range(5):
        mu = float(rng.uniform(0.1, 3.0))
        mup = float(rng.uniform(-0.9 * mu, 3.0))
        k = rng.integers(-8, 9, size=2)
        if k[0] == 0 and k[1] == 0:
            k = np.array([1, 0])
        e = lame_symbol_eigs(k, mu, mup)
        dense = np.sort(np.linalg.eigvalsh(e.matrix))
        mine = np.sort([e.lam1, e.lam2])
        assert np.allclose(mine, dense, rtol=1e-12)
        assert np.all(mine > 0)


def test_ellipticity_report_admissible_and_inadmissible():
    rep = symbol_ellipticity_report(1.0, 1.0, kmax=8)
    assert rep.ok
    assert np.isclose(rep.min_lam2, 4 * np.pi**2, atol=1e-10)
    assert np.isclose(rep.b1_min, np.exp(-2.0) / DELTA**2, atol=1e-12)
    assert rep.b1_min >= rep.b1_lower_bound
    # inadmissible pairs are reported, not raised
    bad = symbol_ellipticity_report(1.0, -1.5, kmax=8)
    assert not bad.ok and min(bad.min_lam1, bad.min_lam2) < 0


# ---------------------------------------------------------------------------
# coefficients and split
# ---------------------------------------------------------------------------

def test_lame_coefficients_values():
    g = make_grid(4, 4, 5)
    xi0 = smooth_xi0(g)
    c1 = make_lame_coefficients(xi0, g, all_model_params()[0])
    one_minus = 1.0 - DELTA * g.z
    assert np.allclose(c1.a[2, 3], 1.0 / (one_minus * xi0[2, 3]), atol=1e-15)
    assert np.allclose(c1.b[2, 3], one_minus / (DELTA**2 * xi0[2, 3]),
                       atol=1e-15)
    assert np.allclose(c1.b1, one_minus**2 / DELTA**2, atol=1e-15)
    c2 = make_lame_coefficients(xi0, g, all_model_params()[1])
    assert np.allclose(c2.c[1, 2], 1.0 / (xi0[1, 2] + g.z / 2.0), atol=1e-15)
    c3 = make_lame_coefficients(xi0, g, all_model_params()[2])
    assert np.allclose(c3.c[1, 2], 1.0 / xi0[1, 2], atol=1e-15)
    with pytest.raises(ValueError, match="nonpositive"):
        make_lame_coefficients(-1.0, g, all_model_params()[0])


def test_cylindrical_split_reproduces_scaled_operator():
    g = make_grid(8, 8, 7)
    params = all_model_params()[0]
    xi0 = smooth_xi0(g)
    rng = np.random.default_rng(1)
    V = rng.standard_normal((8, 8, 7, 2))
    A1, A2, A3 = apply_cylindrical_split(V, xi0, g, params)
    assert np.allclose(A1, A2 + A3, atol=1e-12)
    raw = apply_hydrostatic_lame(V, xi0, g, params, bc="raw")
    weight = ((1.0 - DELTA * g.z)[None, None, :]
              * xi0[:, :, None])[..., None]
    assert np.allclose(A1, weight * raw, atol=1e-9)
    with pytest.raises(ValueError, match="Gamma1"):
        apply_cylindrical_split(V, xi0, g, all_model_params()[1])


# ---------------------------------------------------------------------------
# matrix-free vs dense
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("params", all_model_params(),
                         ids=lambda p: p.model)
def test_dense_matches_matrix_free_lame(params):
    g = make_grid(4, 4, 5)
    xi0 = smooth_xi0(g)
    A = dense_hydrostatic_lame(xi0, g, params)
    rng = np.random.default_rng(2)
    for _ in range(5):
        V = rng.standard_normal((4, 4, 5, 2))
        ref = (A @ V.reshape(-1)).reshape(V.shape)
        out = apply_hydrostatic_lame(V, xi0, g, params)
        assert np.max(np.abs(out - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_dense_matches_matrix_free_chs():
    g = make_grid(4, 4, 5)
    params = PhysicalParams(mu=1.0, mu_prime=0.7)
    B = dense_chs(1.3, g, params)
    rng = np.random.default_rng(3)
    for _ in range(5):
        zeta = rng.standard_normal((4, 4))
        V = rng.standard_normal((4, 4, 5, 2))
        ref = B @ pack_state(zeta, V)
        r1, r2 = apply_chs(zeta, V, 1.3, g, params)
        got = pack_state(r1, r2)
        assert np.max(np.abs(got - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_boundary_row_replacement_semantics():
    g = make_grid(4, 4, 5)
    params = all_model_params()[0]
    rng = np.random.default_rng(4)
    V = rng.standard_normal((4, 4, 5, 2))
    out = apply_hydrostatic_lame(V, 1.0, g, params, constant_coefficient=True)
    assert np.allclose(out[:, :, -1, :], V[:, :, -1, :], atol=0)
    dzV = vertical_derivative(V, g)
    assert np.allclose(out[:, :, 0, :], dzV[:, :, 0, :], atol=1e-12)


def test_chs_null_vector_constant_zeta():
    g = make_grid(4, 4, 5)
    params = PhysicalParams(mu=1.0, mu_prime=1.0)
    B = dense_chs(1.0, g, params, bc="replace")
    null = np.zeros(B.shape[0])
    null[: 16] = 2.7
    assert np.max(np.abs(B @ null)) < 1e-12


def test_dense_limit_enforced():
    g = make_grid(16, 16, 5)
    with pytest.raises(ValueError, match="too large"):
        dense_hydrostatic_lame(1.0, g, all_model_params()[0])


# ---------------------------------------------------------------------------
# per-mode vertical blocks
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("params", all_model_params(),
                         ids=lambda p: p.model)
def test_vertical_block_matches_full_operator_on_single_mode(params):
    g = make_grid(8, 8, 7)
    xi0_value = 1.2
    k = np.array([2, -1])
    kt = 2 * np.pi * k.astype(float)
    blk = vertical_lame_block(kt, xi0_value, g, params)
    rng = np.random.default_rng(6)
    phi = rng.standard_normal(2 * g.nz) + 1j * rng.standard_normal(2 * g.nz)
    x = g.x[:, None, None]
    y = g.y[None, :, None]
    wave = np.exp(1j * (kt[0] * x + kt[1] * y))
    V = wave[..., None] * phi.reshape(g.nz, 2)[None, None, :, :]
    const_params = PhysicalParams(
        mu=params.mu, mu_prime=params.mu_prime, model=params.model,
        xi_bar=xi0_value, pressure=params.pressure,
        pressure_derivative=params.pressure_derivative,
        c1=params.c1, c2=params.c2)
    out = (apply_hydrostatic_lame(V.real, xi0_value, g, const_params,
                                  constant_coefficient=True, bc="raw")
           + 1j * apply_hydrostatic_lame(V.imag, xi0_value, g, const_params,
                                         constant_coefficient=True, bc="raw"))
    ref = wave[..., None] * (blk @ phi).reshape(g.nz, 2)[None, None, :, :]
    assert np.max(np.abs(out - ref)) < 1e-9 * np.max(np.abs(ref))


def test_vertical_reduction_properties():
    g = make_grid(4, 4, 9)
    S, R = vertical_reduction(g)
    assert S.shape == (7, 9) and R.shape == (9, 7)
    assert np.allclose(S @ R, np.eye(7), atol=0)
    # lifted vectors satisfy both boundary conditions exactly
    rng = np.random.default_rng(7)
    w = rng.standard_normal(7)
    v = R @ w
    assert v[-1] == 0.0
    assert abs(g.Dz[0, :] @ v) < 1e-12


# ---------------------------------------------------------------------------
# wrapper, packing, export
# ---------------------------------------------------------------------------

def test_assemble_chs_wrapper():
    g = make_grid(4, 4, 5)
    params = PhysicalParams(mu=1.0, mu_prime=0.5)
    op = assemble_chs(1.0, g, params, dense=True)
    rng = np.random.default_rng(8)
    zeta = rng.standard_normal((4, 4))
    V = rng.standard_normal((4, 4, 5, 2))
    r1, r2 = op.apply(zeta, V)
    ref = op.dense @ pack_state(zeta, V)
    assert np.allclose(pack_state(r1, r2), ref, atol=1e-10)
    with pytest.raises(ValueError, match="omega"):
        assemble_chs(1.0, g, params, omega=-1.0)
    with pytest.raises(ValueError, match="xi_bar"):
        assemble_chs(-1.0, g, params)


def test_pack_unpack_roundtrip():
    g = make_grid(4, 4, 5)
    rng = np.random.default_rng(9)
    zeta = rng.standard_normal((4, 4))
    V = rng.standard_normal((4, 4, 5, 2))
    z2, V2 = unpack_state(pack_state(zeta, V), g)
    assert np.array_equal(z2, zeta) and np.array_equal(V2, V)


def test_export_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(10)
    A = rng.standard_normal((6, 6))
    A[np.abs(A) < 0.8] = 0.0
    path = tmp_path / "matrix.mtx"
    export_matrix(A, path)
    back = scipy.io.mmread(str(path)).toarray()
    assert np.allclose(back, A, atol=1e-15)
