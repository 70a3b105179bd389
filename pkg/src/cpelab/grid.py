"""Discretization of the periodic cylinder Omega = G x (0,1), G = (0,1)^2.

Horizontal directions are discretized by Fourier collocation on uniform
nodes (periodic boundary conditions), the vertical direction by
Chebyshev--Gauss--Lobatto (CGL) collocation mapped to [0,1] so that the
boundary planes z=0 (Gamma_b) and z=1 (Gamma_u) are grid nodes and nodal
boundary conditions can be imposed by row replacement.

Field layout conventions (all float64, C order):

* scalar 2D field : shape (Nx, Ny)
* vector 2D field : shape (Nx, Ny, 2)
* scalar 3D field : shape (Nx, Ny, Nz)
* vector 3D field : shape (Nx, Ny, Nz, 2)

The horizontal axes always come first and FFTs act on axes (0, 1); the
vertical node axis is axis 2 for 3D fields; vector components sit on the
last axis.

Design notes
------------
* Wavenumbers follow the FFT ordering ``2*pi*fftfreq(N, 1/N)``.  The Nyquist
  column (even N) is zeroed in the first-derivative multiplier (derivative
  of the real trigonometric interpolant), and every higher operator is
  composed from first derivatives, so spectral differentiation agrees with
  the classical dense Fourier differentiation matrix to machine precision.
* Vertical quadrature uses Clenshaw--Curtis weights on the CGL nodes,
  normalized so that the weights sum to 1 on [0,1].
* Dealiasing uses the 2/3 rule: modes with ``|k| > floor(N/3)`` in either
  direction are cut from products of the nonlinear terms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import numpy.polynomial.chebyshev as npcheb

__all__ = [
    "Grid",
    "make_grid",
    "vertical_average",
    "vertical_derivative",
    "integrate_from_bottom",
    "horizontal_derivatives",
    "HorizontalDerivatives",
    "grad_h",
    "div_h",
    "grad_h_vec",
    "dealias",
    "integral",
    "l2_norm",
    "validate_field",
    "field_to_csv",
    "field_to_binary",
    "field_from_binary",
]


# ---------------------------------------------------------------------------
# Chebyshev building blocks (Gauss--Lobatto nodes on [-1,1], descending)
# ---------------------------------------------------------------------------

def _cheb_matrix(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev differentiation matrix on n+1 CGL nodes x_j = cos(j*pi/n)."""
    if n == 0:
        return np.zeros((1, 1)), np.ones(1)
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.hstack([2.0, np.ones(n - 1), 2.0]) * (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return d, x


def _clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Clenshaw--Curtis quadrature weights on n+1 CGL nodes, sum = 2."""
    if n == 0:
        return np.array([2.0])
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    ii = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2.0 * k * theta[ii]) / (4.0 * k**2 - 1)
        v -= np.cos(n * theta[ii]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * theta[ii]) / (4.0 * k**2 - 1)
    w[ii] = 2.0 * v / n
    return w


def _integration_from_one_matrix(x: np.ndarray) -> np.ndarray:
    """Matrix I with (I f)_j = int_{x_j}^{1} f(x) dx on CGL nodes x.

    Built column by column through the Chebyshev interpolant of the unit
    vectors (exact for polynomials of degree <= len(x)-1).
    """
    n = len(x)
    mat = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        coeffs = npcheb.chebfit(x, e, n - 1)
        anti = npcheb.chebint(coeffs)
        mat[:, k] = npcheb.chebval(1.0, anti) - npcheb.chebval(x, anti)
    return mat


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Discretized periodic cylinder.

    Attributes
    ----------
    nx, ny : int
        Horizontal resolutions (even, >= 4).
    nz : int
        Number of vertical collocation nodes (>= 3).
    x, y : ndarray, shape (nx,), (ny,)
        Uniform horizontal nodes on [0, 1).
    z : ndarray, shape (nz,)
        CGL nodes mapped to [0, 1], ascending; z[0] = 0 (Gamma_b),
        z[-1] = 1 (Gamma_u).
    kx, ky : ndarray
        Angular wavenumbers ``2*pi*fftfreq(N, 1/N)`` (Nyquist negative).
    ikx, iky : ndarray (complex)
        First-derivative multipliers ``i*k`` with the Nyquist entry zeroed.
    Dz : ndarray, shape (nz, nz)
        Vertical differentiation matrix (acts on values in z order).
    wz : ndarray, shape (nz,)
        Clenshaw--Curtis weights with sum(wz) = 1.
    Iz : ndarray, shape (nz, nz)
        Integration-from-bottom matrix, (Iz f)_j = int_0^{z_j} f dz;
        row 0 is exactly zero.
    dealias_mask : ndarray, shape (nx, ny), bool
        2/3-rule mask (True = keep), ``|k| <= floor(N/3)`` per direction.
    active_mask : ndarray, shape (nx, ny), bool
        Modes not on a Nyquist line in either direction.
    """

    nx: int
    ny: int
    nz: int
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    kx: np.ndarray = field(repr=False)
    ky: np.ndarray = field(repr=False)
    ikx: np.ndarray = field(repr=False)
    iky: np.ndarray = field(repr=False)
    Dz: np.ndarray = field(repr=False)
    wz: np.ndarray = field(repr=False)
    Iz: np.ndarray = field(repr=False)
    dealias_mask: np.ndarray = field(repr=False)
    active_mask: np.ndarray = field(repr=False)

    @property
    def shape2d(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def shape3d(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)


def make_grid(nx: int, ny: int, nz: int) -> Grid:
    """Construct a :class:`Grid`.

    Parameters
    ----------
    nx, ny : int
        Horizontal resolutions; must be even and >= 4.
    nz : int
        Vertical node count; must be >= 3.

    Raises
    ------
    ValueError
        If the resolution is too small or the horizontal sizes are odd.
    """
    for name, n in (("nx", nx), ("ny", ny)):
        if n < 4 or n % 2 != 0:
            raise ValueError(
                f"resolution too small: {name}={n} must be an even integer >= 4"
            )
    if nz < 3:
        raise ValueError(f"resolution too small: nz={nz} must be >= 3")

    x = np.arange(nx) / nx
    y = np.arange(ny) / ny

    kx = 2.0 * np.pi * np.fft.fftfreq(nx, d=1.0 / nx)
    ky = 2.0 * np.pi * np.fft.fftfreq(ny, d=1.0 / ny)
    ikx = 1j * kx
    iky = 1j * ky
    ikx[nx // 2] = 0.0
    iky[ny // 2] = 0.0

    # CGL nodes descend from 1 to -1, so z = (1-x)/2 ascends from 0 to 1 and
    # the index order of nodal values is shared; d/dz = -2 d/dx.
    d_cheb, x_cheb = _cheb_matrix(nz - 1)
    z = (1.0 - x_cheb) / 2.0
    z[0] = 0.0
    z[-1] = 1.0
    dz_mat = -2.0 * d_cheb
    wz = _clenshaw_curtis_weights(nz - 1) / 2.0
    # int_0^z f dz' = (1/2) int_{x(z)}^{1} f dx'
    iz_mat = 0.5 * _integration_from_one_matrix(x_cheb)
    iz_mat[0, :] = 0.0

    kx_int = np.rint(kx / (2.0 * np.pi)).astype(int)
    ky_int = np.rint(ky / (2.0 * np.pi)).astype(int)
    keep_x = np.abs(kx_int) <= nx // 3
    keep_y = np.abs(ky_int) <= ny // 3
    dealias_mask = keep_x[:, None] & keep_y[None, :]

    active_x = np.ones(nx, dtype=bool)
    active_y = np.ones(ny, dtype=bool)
    active_x[nx // 2] = False
    active_y[ny // 2] = False
    active_mask = active_x[:, None] & active_y[None, :]

    return Grid(
        nx=nx, ny=ny, nz=nz,
        x=x, y=y, z=z,
        kx=kx, ky=ky, ikx=ikx, iky=iky,
        Dz=dz_mat, wz=wz, Iz=iz_mat,
        dealias_mask=dealias_mask, active_mask=active_mask,
    )


# ---------------------------------------------------------------------------
# Field validation
# ---------------------------------------------------------------------------

def validate_field(f: np.ndarray, g: Grid) -> str:
    """Classify an array as one of the supported field shapes.

    Returns one of ``"scalar2d" | "vector2d" | "scalar3d" | "vector3d"``;
    raises ``ValueError`` on any other shape.
    """
    shape = tuple(np.shape(f))
    if shape == (g.nx, g.ny):
        return "scalar2d"
    if shape == (g.nx, g.ny, 2) and g.nz != 2:
        return "vector2d"
    if shape == (g.nx, g.ny, g.nz):
        return "scalar3d"
    if shape == (g.nx, g.ny, g.nz, 2):
        return "vector3d"
    raise ValueError(
        f"shape mismatch: array of shape {shape} does not fit grid "
        f"({g.nx},{g.ny},{g.nz})"
    )


def _is_3d(kind: str) -> bool:
    return kind in ("scalar3d", "vector3d")


# ---------------------------------------------------------------------------
# Vertical operations
# ---------------------------------------------------------------------------

def vertical_average(f: np.ndarray, g: Grid) -> np.ndarray:
    """Vertical average ``int_0^1 f dz`` by Clenshaw--Curtis quadrature.

    Accepts a scalar or vector 3D field and returns the matching 2D field.
    """
    kind = validate_field(f, g)
    if not _is_3d(kind):
        raise ValueError("vertical_average expects a 3D field")
    return np.tensordot(f, g.wz, axes=([2], [0]))


def vertical_derivative(f: np.ndarray, g: Grid) -> np.ndarray:
    """Apply the vertical differentiation matrix along the node axis."""
    kind = validate_field(f, g)
    if not _is_3d(kind):
        raise ValueError("vertical_derivative expects a 3D field")
    return np.einsum("ij,abj...->abi...", g.Dz, f)


def integrate_from_bottom(f: np.ndarray, g: Grid) -> np.ndarray:
    """Cumulative vertical integral ``int_0^{z_j} f dz'`` (exactly 0 at z=0)."""
    kind = validate_field(f, g)
    if not _is_3d(kind):
        raise ValueError("integrate_from_bottom expects a 3D field")
    return np.einsum("ij,abj...->abi...", g.Iz, f)


# ---------------------------------------------------------------------------
# Horizontal spectral operations
# ---------------------------------------------------------------------------

def _ddx(f: np.ndarray, g: Grid) -> np.ndarray:
    fh = np.fft.fft(f, axis=0)
    shape = [1] * f.ndim
    shape[0] = g.nx
    out = np.fft.ifft(fh * g.ikx.reshape(shape), axis=0)
    return out if np.iscomplexobj(f) else out.real


def _ddy(f: np.ndarray, g: Grid) -> np.ndarray:
    fh = np.fft.fft(f, axis=1)
    shape = [1] * f.ndim
    shape[1] = g.ny
    out = np.fft.ifft(fh * g.iky.reshape(shape), axis=1)
    return out if np.iscomplexobj(f) else out.real


def grad_h(f: np.ndarray, g: Grid) -> np.ndarray:
    """Horizontal gradient of a scalar field; appends a component axis."""
    kind = validate_field(f, g)
    if kind not in ("scalar2d", "scalar3d"):
        raise ValueError("grad_h expects a scalar field")
    return np.stack([_ddx(f, g), _ddy(f, g)], axis=-1)


def div_h(v: np.ndarray, g: Grid) -> np.ndarray:
    """Horizontal divergence of a 2-vector field; drops the component axis."""
    kind = validate_field(v, g)
    if kind not in ("vector2d", "vector3d"):
        raise ValueError("div_h expects a 2-vector field")
    return _ddx(v[..., 0], g) + _ddy(v[..., 1], g)


def grad_h_vec(v: np.ndarray, g: Grid) -> np.ndarray:
    """Horizontal gradient tensor of a 2-vector field.

    Returns an array with two trailing axes ``[i, j] = d v_i / d y_j``.
    """
    kind = validate_field(v, g)
    if kind not in ("vector2d", "vector3d"):
        raise ValueError("grad_h_vec expects a 2-vector field")
    return np.stack([_ddx(v, g), _ddy(v, g)], axis=-1)


class HorizontalDerivatives(NamedTuple):
    """Result bundle of :func:`horizontal_derivatives`.

    ``grad`` is the gradient (scalar input) or gradient tensor (vector
    input); ``div`` is the horizontal divergence for vector input and
    ``None`` for scalar input.
    """

    grad: np.ndarray
    div: np.ndarray | None


def horizontal_derivatives(f: np.ndarray, g: Grid) -> HorizontalDerivatives:
    """Spectral horizontal derivatives of a periodic field."""
    kind = validate_field(f, g)
    if kind in ("scalar2d", "scalar3d"):
        return HorizontalDerivatives(grad=grad_h(f, g), div=None)
    return HorizontalDerivatives(grad=grad_h_vec(f, g), div=div_h(f, g))


def dealias(f: np.ndarray, g: Grid) -> np.ndarray:
    """Apply the 2/3-rule mask to a field (used on products)."""
    validate_field(f, g)
    fh = np.fft.fft2(f, axes=(0, 1))
    shape = [1] * f.ndim
    shape[0], shape[1] = g.nx, g.ny
    fh *= g.dealias_mask.reshape(shape)
    out = np.fft.ifft2(fh, axes=(0, 1))
    return out if np.iscomplexobj(f) else out.real


# ---------------------------------------------------------------------------
# Quadrature functionals
# ---------------------------------------------------------------------------

def integral(f: np.ndarray, g: Grid) -> float:
    """Integral over G (2D fields) or Omega (3D fields).

    Horizontal quadrature is the trapezoid/mean rule (exact for resolved
    trigonometric polynomials); vertical quadrature is Clenshaw--Curtis.
    Vector fields are not accepted (integrate components explicitly).
    """
    kind = validate_field(f, g)
    if kind == "scalar2d":
        return float(np.mean(f))
    if kind == "scalar3d":
        return float(np.mean(f, axis=(0, 1)) @ g.wz)
    raise ValueError("integral expects a scalar field")


def l2_norm(f: np.ndarray, g: Grid) -> float:
    """Quadrature L^2 norm; components of vector fields are summed."""
    f = np.asarray(f)
    mag2 = np.abs(f) ** 2
    kind = validate_field(f, g)
    if kind in ("vector2d", "vector3d"):
        mag2 = mag2.sum(axis=-1)
    return float(np.sqrt(integral(mag2, g)))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _components(f: np.ndarray, kind: str) -> int:
    return 2 if kind in ("vector2d", "vector3d") else 1


def field_to_csv(f: np.ndarray, g: Grid, path: str) -> None:
    """Write a field as CSV, one row per node: x,y[,z],components."""
    kind = validate_field(f, g)
    ncomp = _components(f, kind)
    rows = []
    if _is_3d(kind):
        header = "x,y,z," + ",".join(f"c{i}" for i in range(ncomp))
        vals = f.reshape(g.nx, g.ny, g.nz, ncomp)
        for i in range(g.nx):
            for j in range(g.ny):
                for k in range(g.nz):
                    coords = (g.x[i], g.y[j], g.z[k]) + tuple(vals[i, j, k])
                    rows.append(",".join("%.17g" % c for c in coords))
    else:
        header = "x,y," + ",".join(f"c{i}" for i in range(ncomp))
        vals = f.reshape(g.nx, g.ny, ncomp)
        for i in range(g.nx):
            for j in range(g.ny):
                coords = (g.x[i], g.y[j]) + tuple(vals[i, j])
                rows.append(",".join("%.17g" % c for c in coords))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fh.write("\n".join(rows) + "\n")


def field_to_binary(f: np.ndarray, g: Grid, path: str) -> None:
    """Write a field as a raw little-endian float64 dump plus JSON header.

    The header is stored at ``path + ".json"`` and records the dimensions
    and component count.
    """
    kind = validate_field(f, g)
    header = {
        "dims": list(np.shape(f)[: 3 if _is_3d(kind) else 2]),
        "components": _components(f, kind),
        "dtype": "<f8",
        "order": "C",
    }
    np.ascontiguousarray(f, dtype="<f8").tofile(path)
    with open(path + ".json", "w") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")


def field_from_binary(path: str) -> np.ndarray:
    """Read a field written by :func:`field_to_binary`."""
    with open(path + ".json") as fh:
        header = json.load(fh)
    data = np.fromfile(path, dtype="<f8")
    shape = list(header["dims"])
    if header["components"] > 1:
        shape.append(header["components"])
    return data.reshape(shape)
