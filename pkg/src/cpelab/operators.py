"""Viscous operators of the linearized system and their realizations.

Three related elliptic operators appear:

* the hydrostatic Lame operator (model ``Gamma1``, transformed vertical
  coordinate)

      A v = mu * a * Lap_H v + d_z(mu * b * d_z v) + mu' * a * grad_H div_H v,

  with a = 1/((1-delta z) xi0) and b = (1-delta z)/(delta^2 xi0); its
  constant-coefficient variant replaces xi0 by the reference value;
* the uniform-coefficient operator of the other models,

      B v = mu * c * Lap v + mu' * c * grad_H div_H v,

  with the full 3D Laplacian and c = 1/(xi0 + z/2) (``Gamma2``) or
  c = 1/xi0 (``GeneralNoGravity``);
* the compressible hydrostatic Stokes block operator

      A_CHS (zeta, V) = ( -xi_bar * div_H avg(V),  -grad_H zeta + A_{xi_bar} V ),

  acting on a surface scalar and a horizontal velocity, the generator of
  the linear evolution d/dt (zeta, V) = A_CHS (zeta, V) + forcing.

Boundary conditions are V = 0 at z = 1 and d_z V = 0 at z = 0.  Three
realizations are provided and must agree: a matrix-free applicator
(boundary rows replaced by the boundary residuals), a dense matrix built
from explicit DFT differentiation matrices and Kronecker products
(``bc`` in ``raw`` / ``replace`` / ``reduced``), and per-horizontal-mode
vertical blocks (constant coefficients are diagonal in the horizontal
Fourier basis, so solvers and eigensolvers work mode by mode).  The
``reduced`` realization eliminates the boundary degrees of freedom
(Dirichlet layer dropped, Neumann layer expressed through the interior)
and is the one whose eigenvalues are meaningful.

The cylindrical split multiplies the hydrostatic Lame operator by
(1-delta z) xi0, yielding A1 = A2 + A3 with A2 the horizontal Lame
operator (Fourier symbol matrix available in closed form) and A3 a
vertical operator with first-order term -mu ((1-delta z)/delta) d_z.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse

from .grid import (
    Grid,
    div_h,
    grad_h,
    validate_field,
    vertical_average,
    vertical_derivative,
)
from .transforms import DELTA, PhysicalParams

__all__ = [
    "LameCoefficients",
    "LinearOperator",
    "SymbolEigs",
    "EllipticityReport",
    "make_lame_coefficients",
    "apply_hydrostatic_lame",
    "apply_cylindrical_split",
    "apply_chs",
    "lame_symbol_eigs",
    "symbol_ellipticity_report",
    "dense_hydrostatic_lame",
    "dense_chs",
    "assemble_chs",
    "vertical_lame_block",
    "vertical_reduction",
    "pack_state",
    "unpack_state",
    "export_matrix",
    "DENSE_LIMIT",
]

#: Largest resolution at which dense realizations are assembled.
DENSE_LIMIT = (8, 8, 9)

_BC_MODES = ("raw", "replace", "reduced")


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LameCoefficients:
    """Coefficient fields of the viscous operator, shaped (nx, ny, nz).

    For ``Gamma1``: a, b and the split coefficient b1(z) = (1-delta z)^2 /
    delta^2 (c is None).  For the uniform-coefficient models: c (a, b
    None).  b1 is stored as a 1D profile in z.
    """

    a: np.ndarray | None
    b: np.ndarray | None
    b1: np.ndarray | None
    c: np.ndarray | None


def _surface_array(xi0, g: Grid) -> np.ndarray:
    xi0 = np.asarray(xi0, dtype=float)
    if xi0.ndim == 0:
        xi0 = np.full((g.nx, g.ny), float(xi0))
    if xi0.shape != (g.nx, g.ny):
        raise ValueError(
            f"surface density must be scalar or shaped {(g.nx, g.ny)}, "
            f"got {xi0.shape}")
    if np.any(xi0 <= 0):
        raise ValueError(f"nonpositive surface density: min = {xi0.min()}")
    return xi0


def make_lame_coefficients(
    xi0, g: Grid, params: PhysicalParams
) -> LameCoefficients:
    """Coefficient fields for the viscous operator of the given model."""
    xi0 = _surface_array(xi0, g)
    z = g.z[None, None, :]
    if params.model == "Gamma1":
        one_minus = 1.0 - DELTA * z
        a = 1.0 / (one_minus * xi0[:, :, None])
        b = one_minus / (DELTA**2 * xi0[:, :, None])
        b1 = (1.0 - DELTA * g.z) ** 2 / DELTA**2
        return LameCoefficients(a=a, b=b, b1=b1, c=None)
    if params.model == "Gamma2":
        c = 1.0 / (xi0[:, :, None] + z / 2.0)
    else:
        c = np.broadcast_to(1.0 / xi0[:, :, None], (g.nx, g.ny, g.nz)).copy()
    return LameCoefficients(a=None, b=None, b1=None, c=c)


# ---------------------------------------------------------------------------
# matrix-free applications
# ---------------------------------------------------------------------------

def _laplacian_h(V: np.ndarray, g: Grid) -> np.ndarray:
    from .grid import _ddx, _ddy

    return _ddx(_ddx(V, g), g) + _ddy(_ddy(V, g), g)


def _grad_div_h(V: np.ndarray, g: Grid) -> np.ndarray:
    d = div_h(V, g)
    return grad_h(d, g)


def _replace_bc_rows(out: np.ndarray, V: np.ndarray, g: Grid) -> np.ndarray:
    out = out.copy()
    out[:, :, -1, :] = V[:, :, -1, :]
    out[:, :, 0, :] = np.einsum("j,abjc->abc", g.Dz[0, :], V)
    return out


def _apply_viscous_raw(
    V: np.ndarray, coeffs: LameCoefficients, g: Grid, params: PhysicalParams
) -> np.ndarray:
    mu, mup = params.mu, params.mu_prime
    if coeffs.a is not None:
        horiz = mu * _laplacian_h(V, g) + mup * _grad_div_h(V, g)
        dzv = vertical_derivative(V, g)
        vert = mu * vertical_derivative(coeffs.b[..., None] * dzv, g)
        return coeffs.a[..., None] * horiz + vert
    horiz = mu * _laplacian_h(V, g) + mup * _grad_div_h(V, g)
    vert = mu * vertical_derivative(vertical_derivative(V, g), g)
    return coeffs.c[..., None] * (horiz + vert)


def apply_hydrostatic_lame(
    V: np.ndarray,
    xi0,
    g: Grid,
    params: PhysicalParams,
    constant_coefficient: bool = False,
    bc: str = "replace",
) -> np.ndarray:
    """Apply the viscous operator of the model to a horizontal velocity.

    Parameters
    ----------
    V : ndarray, shape (nx, ny, nz, 2)
    xi0 : float or ndarray (nx, ny)
        Surface density entering the coefficients; ignored when
        ``constant_coefficient`` is set (the reference value
        ``params.xi_bar`` is used instead).
    bc : {"replace", "raw"}
        ``replace`` overwrites the boundary layers with the boundary
        residuals (V at z = 1, d_z V at z = 0); ``raw`` returns the plain
        differential action everywhere.
    """
    if validate_field(V, g) != "vector3d":
        raise ValueError("expected a horizontal velocity field (nx, ny, nz, 2)")
    if bc not in ("replace", "raw"):
        raise ValueError(f"bc must be 'replace' or 'raw', got {bc!r}")
    if constant_coefficient:
        xi0 = params.xi_bar
    coeffs = make_lame_coefficients(xi0, g, params)
    out = _apply_viscous_raw(V, coeffs, g, params)
    if bc == "replace":
        out = _replace_bc_rows(out, V, g)
    return out


def apply_cylindrical_split(
    V: np.ndarray, xi0, g: Grid, params: PhysicalParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw action of A1 = (1-delta z) xi0 A and of its parts A2, A3.

    A2 = mu Lap_H + mu' grad_H div_H carries the horizontal symbol; A3 =
    mu b1(z) d_zz - mu ((1-delta z)/delta) d_z is the vertical remainder
    (the first-order term enters with a minus sign: differentiating
    b = (1-delta z)/(delta^2 xi0) once in z produces -1/(delta xi0), and
    the prefactor (1-delta z) xi0 leaves -(1-delta z)/delta).
    Only meaningful for model ``Gamma1``.
    """
    if params.model != "Gamma1":
        raise ValueError("the cylindrical split applies to model 'Gamma1' only")
    if validate_field(V, g) != "vector3d":
        raise ValueError("expected a horizontal velocity field (nx, ny, nz, 2)")
    mu, mup = params.mu, params.mu_prime
    A2 = mu * _laplacian_h(V, g) + mup * _grad_div_h(V, g)
    b1 = ((1.0 - DELTA * g.z) ** 2 / DELTA**2)[None, None, :, None]
    first = ((1.0 - DELTA * g.z) / DELTA)[None, None, :, None]
    dzv = vertical_derivative(V, g)
    A3 = mu * b1 * vertical_derivative(dzv, g) - mu * first * dzv
    return A2 + A3, A2, A3


def apply_chs(
    zeta: np.ndarray,
    V: np.ndarray,
    xi_bar: float,
    g: Grid,
    params: PhysicalParams,
    bc: str = "replace",
) -> tuple[np.ndarray, np.ndarray]:
    """Apply the Stokes block operator to a state (zeta, V).

    Row 1: -xi_bar * div_H of the vertical average of V.  Row 2:
    -grad_H zeta + A_{xi_bar} V with the constant-coefficient viscous
    operator; with ``bc="replace"`` the boundary layers of row 2 are the
    boundary residuals of V.
    """
    if validate_field(zeta, g) != "scalar2d":
        raise ValueError("expected a surface scalar (nx, ny)")
    row1 = -xi_bar * div_h(vertical_average(V, g), g)
    gz = grad_h(zeta, g)
    row2 = -gz[:, :, None, :] + apply_hydrostatic_lame(
        V, xi_bar, g, params, constant_coefficient=True, bc="raw")
    if bc == "replace":
        row2 = _replace_bc_rows(row2, V, g)
    elif bc != "raw":
        raise ValueError(f"bc must be 'replace' or 'raw', got {bc!r}")
    return row1, row2


# ---------------------------------------------------------------------------
# horizontal symbol
# ---------------------------------------------------------------------------

class SymbolEigs(NamedTuple):
    lam1: float
    lam2: float
    matrix: np.ndarray


def lame_symbol_eigs(
    k_H, mu: float, mu_prime: float, angular: bool = False
) -> SymbolEigs:
    """Eigenvalues and matrix of the horizontal Lame symbol -A2#(k_H).

    For the integer mode k_H the wave vector is kt = 2 pi k_H (pass
    ``angular=True`` to supply kt directly); the symbol matrix is

        [[mu |kt|^2 + mu' kt1^2,  mu' kt1 kt2],
         [mu' kt1 kt2,  mu |kt|^2 + mu' kt2^2]]

    with eigenvalues lam1 = (mu + mu') |kt|^2 (eigenvector kt, the
    compressive direction) and lam2 = mu |kt|^2 (the shear direction).
    """
    k = np.asarray(k_H, dtype=float)
    kt = k if angular else 2.0 * np.pi * k
    k2 = float(kt @ kt)
    mat = mu * k2 * np.eye(2) + mu_prime * np.outer(kt, kt)
    return SymbolEigs(lam1=(mu + mu_prime) * k2, lam2=mu * k2, matrix=mat)


@dataclass(frozen=True)
class EllipticityReport:
    """Scan of the horizontal symbol eigenvalues and the vertical coefficient."""

    min_lam1: float
    min_lam2: float
    argmin_k: tuple[int, int]
    b1_min: float
    b1_lower_bound: float
    ok: bool


def symbol_ellipticity_report(
    mu: float, mu_prime: float, kmax: int
) -> EllipticityReport:
    """Scan both symbol eigenvalues over 0 < |k_H| <= kmax.

    Reports the minima and the minimum of b1(z) = (1-delta z)^2/delta^2
    on a z-sample together with its lower bound exp(-2)/delta^2; ``ok``
    requires every scanned eigenvalue and b1 to be positive.  Accepts
    inadmissible viscosities on purpose so that failures are reported
    rather than raised.
    """
    best = (np.inf, np.inf, (0, 0))
    for k1 in range(-kmax, kmax + 1):
        for k2 in range(-kmax, kmax + 1):
            if k1 == k2 == 0 or k1 * k1 + k2 * k2 > kmax * kmax:
                continue
            eig = lame_symbol_eigs((k1, k2), mu, mu_prime)
            if min(eig.lam1, eig.lam2) < min(best[0], best[1]):
                best = (eig.lam1, eig.lam2, (k1, k2))
    zs = np.linspace(0.0, 1.0, 101)
    b1 = (1.0 - DELTA * zs) ** 2 / DELTA**2
    b1_min = float(b1.min())
    bound = float(np.exp(-2.0) / DELTA**2)
    ok = bool(min(best[0], best[1]) > 0 and b1_min >= bound > 0)
    return EllipticityReport(
        min_lam1=float(best[0]),
        min_lam2=float(best[1]),
        argmin_k=best[2],
        b1_min=b1_min,
        b1_lower_bound=bound,
        ok=ok,
    )


# ---------------------------------------------------------------------------
# dense realizations
# ---------------------------------------------------------------------------

def _check_dense_limit(g: Grid) -> None:
    if g.nx > DENSE_LIMIT[0] or g.ny > DENSE_LIMIT[1] or g.nz > DENSE_LIMIT[2]:
        raise ValueError(
            f"resolution {(g.nx, g.ny, g.nz)} too large for a dense "
            f"realization (limit {DENSE_LIMIT})")


def _dft_derivative_matrix(n: int, ik: np.ndarray) -> np.ndarray:
    """Real dense matrix of the spectral first derivative on n nodes."""
    F = scipy.linalg.dft(n)
    return ((F.conj().T / n) @ (ik[:, None] * F)).real


def _lifted_derivatives(g: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense d/dx, d/dy, d/dz acting on scalar 3D fields flattened C-order."""
    Dx = _dft_derivative_matrix(g.nx, g.ikx)
    Dy = _dft_derivative_matrix(g.ny, g.iky)
    Dx3 = np.kron(Dx, np.eye(g.ny * g.nz))
    Dy3 = np.kron(np.eye(g.nx), np.kron(Dy, np.eye(g.nz)))
    Dz3 = np.kron(np.eye(g.nx * g.ny), g.Dz)
    return Dx3, Dy3, Dz3


def vertical_reduction(g: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Interior selection S and boundary-eliminating lift R in z.

    R maps interior layers (iz = 1..nz-2) to all layers: the top layer is
    zero (Dirichlet) and the bottom layer solves d_z V|_0 = 0 for V_0,
    i.e. V_0 = -sum_{j>=1} Dz[0, j] V_j / Dz[0, 0].  S selects the
    interior layers; S @ R = I.  Eigenvalues of S @ A_raw @ R are the
    eigenvalues of the boundary-value operator.
    """
    nz = g.nz
    S = np.zeros((nz - 2, nz))
    R = np.zeros((nz, nz - 2))
    for j in range(1, nz - 1):
        S[j - 1, j] = 1.0
        R[j, j - 1] = 1.0
        R[0, j - 1] = -g.Dz[0, j] / g.Dz[0, 0]
    return S, R


def _replace_rows_dense(A: np.ndarray, g: Grid, ncomp: int = 2) -> np.ndarray:
    """Overwrite boundary rows of a dense operator on (nx, ny, nz, ncomp)."""
    A = A.copy()
    nz = g.nz
    for node2 in range(g.nx * g.ny):
        for c in range(ncomp):
            top = (node2 * nz + nz - 1) * ncomp + c
            bot = (node2 * nz + 0) * ncomp + c
            A[top, :] = 0.0
            A[top, top] = 1.0
            A[bot, :] = 0.0
            for j in range(nz):
                A[bot, (node2 * nz + j) * ncomp + c] = g.Dz[0, j]
    return A


def dense_hydrostatic_lame(
    xi0,
    g: Grid,
    params: PhysicalParams,
    constant_coefficient: bool = False,
    bc: str = "replace",
) -> np.ndarray:
    """Dense matrix of the viscous operator on V fields flattened C-order.

    Assembled from explicit DFT differentiation matrices and Kronecker
    products — an independent code path from the matrix-free FFT
    applicator.  ``bc``: ``raw`` (no boundary handling), ``replace``
    (boundary rows set to the boundary residuals), ``reduced``
    (boundary degrees of freedom eliminated; see
    :func:`vertical_reduction`).
    """
    _check_dense_limit(g)
    if bc not in _BC_MODES:
        raise ValueError(f"bc must be one of {_BC_MODES}, got {bc!r}")
    if constant_coefficient:
        xi0 = params.xi_bar
    coeffs = make_lame_coefficients(xi0, g, params)
    mu, mup = params.mu, params.mu_prime
    Dx3, Dy3, Dz3 = _lifted_derivatives(g)
    D = (Dx3, Dy3)
    LH = Dx3 @ Dx3 + Dy3 @ Dy3
    I2 = np.eye(2)
    if coeffs.a is not None:
        a = np.diag(coeffs.a.ravel())
        b = np.diag(coeffs.b.ravel())
        A = mu * np.kron(a @ LH + Dz3 @ b @ Dz3, I2)
    else:
        c = np.diag(coeffs.c.ravel())
        A = mu * np.kron(c @ (LH + Dz3 @ Dz3), I2)
        a = c
    for i in range(2):
        for j in range(2):
            E = np.zeros((2, 2))
            E[i, j] = 1.0
            A += mup * np.kron(a @ D[i] @ D[j], E)
    if bc == "replace":
        return _replace_rows_dense(A, g)
    if bc == "reduced":
        S, R = vertical_reduction(g)
        lift = np.kron(np.eye(g.nx * g.ny), np.kron(R, I2))
        sel = np.kron(np.eye(g.nx * g.ny), np.kron(S, I2))
        return sel @ A @ lift
    return A


def dense_chs(
    xi_bar: float, g: Grid, params: PhysicalParams, bc: str = "replace"
) -> np.ndarray:
    """Dense matrix of the Stokes block operator on packed states.

    The packed vector is (zeta.ravel(), V.ravel()) — see
    :func:`pack_state`.  ``bc`` as in :func:`dense_hydrostatic_lame`; the
    zeta rows are never reduced or replaced.
    """
    _check_dense_limit(g)
    if bc not in _BC_MODES:
        raise ValueError(f"bc must be one of {_BC_MODES}, got {bc!r}")
    n2 = g.nx * g.ny
    Dx2 = _dft_derivative_matrix(g.nx, g.ikx)
    Dy2 = _dft_derivative_matrix(g.ny, g.iky)
    Dx2f = np.kron(Dx2, np.eye(g.ny))
    Dy2f = np.kron(np.eye(g.nx), Dy2)
    # divergence of a 2D vector field and vertical average of a 3D one
    div2 = np.kron(Dx2f, np.array([[1.0, 0.0]])) + np.kron(
        Dy2f, np.array([[0.0, 1.0]]))
    avg = np.kron(np.eye(n2), np.kron(g.wz[None, :], np.eye(2)))
    row1_V = -xi_bar * div2 @ avg
    # gradient of the surface scalar, broadcast over z, per component
    ones_z = np.ones((g.nz, 1))
    grad_bc = np.kron(np.kron(Dx2f, ones_z), np.array([[1.0], [0.0]])) + np.kron(
        np.kron(Dy2f, ones_z), np.array([[0.0], [1.0]]))
    A_V = dense_hydrostatic_lame(
        xi_bar, g, params, constant_coefficient=True, bc="raw")
    nV = A_V.shape[0]
    full = np.zeros((n2 + nV, n2 + nV))
    full[:n2, n2:] = row1_V
    full[n2:, :n2] = -grad_bc
    full[n2:, n2:] = A_V
    if bc == "raw":
        return full
    if bc == "replace":
        # replace boundary rows of the velocity block, zeroing zeta coupling
        out = full.copy()
        nz = g.nz
        for node2 in range(n2):
            for c in range(2):
                top = n2 + (node2 * nz + nz - 1) * 2 + c
                bot = n2 + (node2 * nz + 0) * 2 + c
                out[top, :] = 0.0
                out[top, top] = 1.0
                out[bot, :] = 0.0
                for j in range(nz):
                    out[bot, n2 + (node2 * nz + j) * 2 + c] = g.Dz[0, j]
        return out
    S, R = vertical_reduction(g)
    lift = np.kron(np.eye(n2), np.kron(R, np.eye(2)))
    sel = np.kron(np.eye(n2), np.kron(S, np.eye(2)))
    nred = sel.shape[0]
    out = np.zeros((n2 + nred, n2 + nred))
    out[:n2, :n2] = 0.0
    out[:n2, n2:] = row1_V @ lift
    out[n2:, :n2] = -(sel @ grad_bc)
    out[n2:, n2:] = sel @ A_V @ lift
    return out


# ---------------------------------------------------------------------------
# block operator wrapper and state packing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearOperator:
    """Immutable operator: applicator, optional dense matrix, BC tag, shift.

    ``apply`` maps a state (zeta, V) to a state; ``dense`` (if present)
    acts on packed vectors.  ``omega`` is an optional nonnegative shift
    available to solvers as a regularization knob for variable
    coefficients; it is not folded into ``apply``.
    """

    apply: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    bc: str
    omega: float = 0.0
    dense: np.ndarray | None = field(default=None, repr=False)


def assemble_chs(
    xi_bar: float,
    g: Grid,
    params: PhysicalParams,
    dense: bool = False,
    bc: str = "replace",
    omega: float = 0.0,
) -> LinearOperator:
    """Bundle the Stokes block operator, optionally with a dense matrix."""
    if not xi_bar > 0:
        raise ValueError(f"xi_bar must be positive, got {xi_bar}")
    if omega < 0:
        raise ValueError(f"omega must be nonnegative, got {omega}")

    def apply(zeta, V, bc=bc):
        return apply_chs(zeta, V, xi_bar, g, params,
                         bc="replace" if bc != "raw" else "raw")

    matrix = dense_chs(xi_bar, g, params, bc=bc) if dense else None
    return LinearOperator(apply=apply, bc=bc, omega=omega, dense=matrix)


def pack_state(zeta: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Flatten (zeta, V) into the packed vector used by dense realizations."""
    return np.concatenate([np.asarray(zeta).ravel(), np.asarray(V).ravel()])


def unpack_state(u: np.ndarray, g: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`pack_state`."""
    n2 = g.nx * g.ny
    zeta = u[:n2].reshape(g.nx, g.ny)
    V = u[n2:].reshape(g.nx, g.ny, g.nz, 2)
    return zeta, V


# ---------------------------------------------------------------------------
# per-mode vertical blocks
# ---------------------------------------------------------------------------

def vertical_lame_block(
    kt: np.ndarray, xi0_value: float, g: Grid, params: PhysicalParams
) -> np.ndarray:
    """Vertical block of the viscous operator at one horizontal mode.

    ``kt`` is the angular wave vector (2 pi k_H).  Returns the real
    (2 nz) x (2 nz) matrix acting on V-hat(z) flattened as (iz, comp)
    C-order, without boundary handling (combine with
    :func:`vertical_reduction` for solves and eigensolves).
    """
    kt = np.asarray(kt, dtype=float)
    k2 = float(kt @ kt)
    mu, mup = params.mu, params.mu_prime
    I2 = np.eye(2)
    kk = np.outer(kt, kt)
    if params.model == "Gamma1":
        one_minus = 1.0 - DELTA * g.z
        a = 1.0 / (one_minus * xi0_value)
        b = one_minus / (DELTA**2 * xi0_value)
        vert = g.Dz @ np.diag(b) @ g.Dz
        return (
            -mu * k2 * np.kron(np.diag(a), I2)
            + mu * np.kron(vert, I2)
            - mup * np.kron(np.diag(a), kk)
        )
    if params.model == "Gamma2":
        c = 1.0 / (xi0_value + g.z / 2.0)
    else:
        c = np.full(g.nz, 1.0 / xi0_value)
    dzz = g.Dz @ g.Dz
    return (
        mu * np.kron(np.diag(c) @ (dzz - k2 * np.eye(g.nz)), I2)
        - mup * np.kron(np.diag(c), kk)
    )


def export_matrix(A: np.ndarray, path) -> None:
    """Write a dense matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), scipy.sparse.coo_matrix(A))
