"""Scalar functionals and fits that turn analytic statements into checks.

Mass, energy and dissipation functionals are provided in two equivalent
forms: plain quadrature of Eulerian fields, and Lagrangian-frame versions
weighted by the flow-map Jacobian (the exact change of variables, so both
evaluate the same continuum functional).  Decay-rate fits, envelope
monotonicity checks and a dense matrix-exponential cross-check connect the
simulation output to the linear spectral bound.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .grid import Grid, grad_h, grad_h_vec, integral, l2_norm, validate_field, \
    vertical_derivative
from .transforms import DELTA, PhysicalParams

__all__ = [
    "COLUMNS",
    "EnergyEntry",
    "EnergyReport",
    "DecayFit",
    "PositivityReport",
    "potential_energy_density",
    "total_mass",
    "energy",
    "lagrangian_energy",
    "lagrangian_mass",
    "surface_h1_norm",
    "positivity_report",
    "fit_decay_rate",
    "envelope_maxima",
    "envelope_is_decreasing",
    "write_diagnostics_csv",
    "read_diagnostics_csv",
    "linear_envelope_series",
]

#: Column order of the diagnostics CSV emitted by the simulation driver.
COLUMNS = ("t", "mass", "energy", "dissipation_integral", "zeta_m_h1",
           "v_l2", "min_xi", "max_xi", "min_det")


class EnergyEntry(NamedTuple):
    """Instantaneous energy ``E`` and dissipation rate ``D``."""

    E: float
    D: float


@dataclass(frozen=True)
class EnergyReport:
    """Energy-balance time series extracted from diagnostics rows.

    ``residual[i] = E[i] + dissipation_integral[i] - E[0]`` vanishes for the
    continuum dynamics of the models with an energy identity and is O(dt)
    for the first-order integrator.
    """

    t: np.ndarray
    E: np.ndarray
    dissipation_integral: np.ndarray
    residual: np.ndarray
    mass: np.ndarray

    @classmethod
    def from_rows(cls, rows) -> "EnergyReport":
        a = np.asarray(rows, dtype=float)
        if a.ndim != 2 or a.shape[1] != len(COLUMNS):
            raise ValueError(
                f"expected rows with {len(COLUMNS)} columns, got {a.shape}")
        t, mass, E, diss = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
        return cls(t=t, E=E, dissipation_integral=diss,
                   residual=E + diss - E[0], mass=mass)

    @property
    def dissipation_nondecreasing(self) -> bool:
        return bool(np.all(np.diff(self.dissipation_integral) >= -1e-15))


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential-decay fit of a positive time series."""

    eta: float
    r_squared: float
    n_tail: int
    t_start: float


@dataclass(frozen=True)
class PositivityReport:
    """Pointwise extrema of a density field against configured bounds."""

    min: float
    max: float
    ok: bool


def potential_energy_density(xi: np.ndarray,
                             params: PhysicalParams) -> np.ndarray:
    """Potential energy density of the surface field, per model.

    Gamma1 uses ``xi log xi + 1 - xi``; GeneralNoGravity uses the pressure
    primitive ``xi * int_1^xi P(s)/s^2 ds - P(1)(xi - 1)`` (evaluated by
    Gauss-Legendre quadrature, exact to roundoff for smooth laws); Gamma2
    has no surface energy identity here, so the squared deviation from the
    reference density is returned as a monitoring quantity.
    """
    xi = np.asarray(xi, dtype=float)
    if np.min(xi) <= 0:
        raise ValueError(f"nonpositive density (min {np.min(xi):.3e})")
    if params.model == "Gamma1":
        return xi * np.log(xi) + 1.0 - xi
    if params.model == "Gamma2":
        return (xi - params.xi_bar) ** 2
    nodes, weights = np.polynomial.legendre.leggauss(48)
    s = 1.0 + (xi[..., None] - 1.0) * 0.5 * (nodes + 1.0)
    vals = params.pressure(s) / s**2
    prim = 0.5 * (xi - 1.0) * (vals @ weights)
    return xi * prim - float(params.pressure(1.0)) * (xi - 1.0)


def total_mass(rho: np.ndarray, g: Grid) -> float:
    """Quadrature integral of a 3D density field over the cylinder."""
    kind = validate_field(rho, g)
    if kind != "scalar3d":
        raise ValueError(f"total_mass expects a 3D scalar density, got {kind}")
    return integral(rho, g)


def _gamma1_dissipation_weights(g: Grid) -> tuple[np.ndarray, np.ndarray]:
    wH = 1.0 / (1.0 - DELTA * g.z)
    wZ = (1.0 - DELTA * g.z) / DELTA**2
    return wH[None, None, :], wZ[None, None, :]


def energy(xi: np.ndarray, v: np.ndarray, g: Grid,
           params: PhysicalParams) -> EnergyEntry:
    """Energy and instantaneous dissipation of Eulerian fields.

    ``xi`` is the surface density (2D, positive), ``v`` the horizontal
    velocity (3D 2-vector).  Gamma1 fields are understood in the stretched
    vertical coordinate, which is where its energy identity lives.
    """
    kind = validate_field(xi, g)
    if kind != "scalar2d":
        raise ValueError(f"energy expects a 2D surface density, got {kind}")
    validate_field(v, g)
    if np.min(xi) <= 0:
        raise ValueError(f"nonpositive density (min {np.min(xi):.3e})")
    speed2 = np.sum(v**2, axis=-1)
    if params.model == "Gamma2":
        rho3 = xi[:, :, None] + 0.5 * g.z[None, None, :]
        kinetic = integral(0.5 * rho3 * speed2, g)
    else:
        kinetic = integral(0.5 * xi[:, :, None] * speed2, g)
    potential = integral(potential_energy_density(xi, params), g)
    dv = grad_h_vec(v, g)
    dzv = vertical_derivative(v, g)
    div2 = (dv[..., 0, 0] + dv[..., 1, 1]) ** 2
    gradsq = np.sum(dv**2, axis=(-2, -1))
    dzsq = np.sum(dzv**2, axis=-1)
    if params.model == "Gamma1":
        wH, wZ = _gamma1_dissipation_weights(g)
        D = (params.mu * integral(wH * gradsq, g)
             + params.mu * integral(wZ * dzsq, g)
             + params.mu_prime * integral(wH * div2, g))
    else:
        D = (params.mu * integral(gradsq + dzsq, g)
             + params.mu_prime * integral(div2, g))
    return EnergyEntry(E=float(kinetic + potential), D=float(D))


def lagrangian_energy(zeta_full: np.ndarray, V: np.ndarray, fm, g: Grid,
                      params: PhysicalParams, mode: str) -> EnergyEntry:
    """Energy and dissipation evaluated on Lagrangian fields.

    Same functionals as :func:`energy` after the change of variables: the
    Eulerian gradient becomes the label gradient contracted with the
    inverse flow-map Jacobian, and the area element contributes the
    Jacobian determinant.
    """
    if np.min(zeta_full) <= 0:
        raise ValueError(
            f"nonpositive density (min {np.min(zeta_full):.3e})")
    det = fm.detX
    det3 = det[:, :, None]
    speed2 = np.sum(V**2, axis=-1)
    if mode == "LocalGamma2":
        rho3 = zeta_full[:, :, None] + 0.5 * g.z[None, None, :]
        kinetic = integral(0.5 * rho3 * speed2 * det3, g)
    else:
        kinetic = integral(0.5 * zeta_full[:, :, None] * speed2 * det3, g)
    potential = integral(potential_energy_density(zeta_full, params) * det, g)
    GT = np.einsum("abzil,ablk->abzik", grad_h_vec(V, g), fm.Z)
    dzv = vertical_derivative(V, g)
    gradsq = np.sum(GT**2, axis=(-2, -1))
    div2 = (GT[..., 0, 0] + GT[..., 1, 1]) ** 2
    dzsq = np.sum(dzv**2, axis=-1)
    if params.model == "Gamma1":
        wH, wZ = _gamma1_dissipation_weights(g)
        D = (params.mu * integral(wH * gradsq * det3, g)
             + params.mu * integral(wZ * dzsq * det3, g)
             + params.mu_prime * integral(wH * div2 * det3, g))
    else:
        D = (params.mu * integral((gradsq + dzsq) * det3, g)
             + params.mu_prime * integral(div2 * det3, g))
    return EnergyEntry(E=float(kinetic + potential), D=float(D))


def lagrangian_mass(zeta_full: np.ndarray, fm, g: Grid,
                    params: PhysicalParams, mode: str) -> float:
    """Total mass of the state, evaluated on the label grid.

    In the stretched Gamma1 coordinates a fluid column of surface density
    ``xi`` carries mass ``delta * xi``; the Gamma2 column adds the constant
    ``z/2`` stratification, which integrates to 1/4 over the cylinder.
    """
    area = integral(zeta_full * fm.detX, g)
    if params.model == "Gamma1":
        return float(DELTA * area)
    if params.model == "Gamma2":
        return float(area + 0.25)
    return float(area)


def surface_h1_norm(f: np.ndarray, g: Grid) -> float:
    """Discrete H1 norm of a surface field (spectral first derivatives)."""
    kind = validate_field(f, g)
    if kind != "scalar2d":
        raise ValueError(f"surface_h1_norm expects a 2D scalar, got {kind}")
    return float(np.sqrt(l2_norm(f, g) ** 2 + l2_norm(grad_h(f, g), g) ** 2))


def positivity_report(xi: np.ndarray, lower: float,
                      upper: float) -> PositivityReport:
    """Pointwise extrema of a density field against the given bounds."""
    lo = float(np.min(xi))
    hi = float(np.max(xi))
    return PositivityReport(min=lo, max=hi, ok=bool(lower <= lo and hi <= upper))


def _tail_mask(t: np.ndarray, t_skip_fraction: float) -> np.ndarray:
    if not 0.0 <= t_skip_fraction < 1.0:
        raise ValueError(
            f"t_skip_fraction must be in [0, 1), got {t_skip_fraction}")
    return t >= t[0] + t_skip_fraction * (t[-1] - t[0])


def fit_decay_rate(t: np.ndarray, values: np.ndarray,
                   t_skip_fraction: float = 0.2) -> DecayFit:
    """Exponential decay rate from the tail of a positive series.

    Least squares on ``log(values)`` against ``t`` over the tail window
    ``t >= t0 + t_skip_fraction * (t_end - t0)`` (transients are excluded by
    construction).  Returns the rate ``eta = -slope`` and the coefficient of
    determination of the log fit.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.shape != values.shape or t.ndim != 1:
        raise ValueError("t and values must be 1D arrays of equal length")
    keep = _tail_mask(t, t_skip_fraction)
    tt, vv = t[keep], values[keep]
    if tt.size < 10:
        raise ValueError(
            f"need at least 10 samples in the tail window, got {tt.size}")
    if np.min(vv) <= 0:
        raise ValueError("decay fit needs positive values in the tail window")
    logv = np.log(vv)
    slope, intercept = np.polyfit(tt, logv, 1)
    pred = slope * tt + intercept
    ss_res = float(np.sum((logv - pred) ** 2))
    ss_tot = float(np.sum((logv - np.mean(logv)) ** 2))
    if ss_tot <= 1e-30:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return DecayFit(eta=float(-slope), r_squared=float(r2),
                    n_tail=int(tt.size), t_start=float(tt[0]))


def envelope_maxima(t: np.ndarray, values: np.ndarray,
                    t_skip_fraction: float = 0.2,
                    n_windows: int = 8) -> np.ndarray:
    """Per-window maxima of |values| over equal time windows of the tail."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = _tail_mask(t, t_skip_fraction)
    tt, vv = t[keep], np.abs(values[keep])
    if tt.size < 2 * n_windows:
        raise ValueError(
            f"need at least {2 * n_windows} tail samples for {n_windows} "
            f"windows, got {tt.size}")
    edges = np.linspace(tt[0], tt[-1], n_windows + 1)
    idx = np.clip(np.searchsorted(edges, tt, side="right") - 1, 0,
                  n_windows - 1)
    out = np.empty(n_windows)
    for w in range(n_windows):
        sel = idx == w
        if not np.any(sel):
            raise ValueError(f"empty envelope window {w}")
        out[w] = np.max(vv[sel])
    return out


def envelope_is_decreasing(t: np.ndarray, values: np.ndarray,
                           t_skip_fraction: float = 0.2,
                           n_windows: int = 8) -> bool:
    """True when the tail-window maxima decrease strictly."""
    m = envelope_maxima(t, values, t_skip_fraction, n_windows)
    return bool(np.all(np.diff(m) < 0))


def write_diagnostics_csv(rows, path: str) -> None:
    """Write diagnostics rows with 17 significant digits per value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for row in rows:
            if len(row) != len(COLUMNS):
                raise ValueError(
                    f"row has {len(row)} fields, expected {len(COLUMNS)}")
            writer.writerow([f"{float(v):.17g}" for v in row])


def read_diagnostics_csv(path: str) -> np.ndarray:
    """Read a diagnostics CSV back into a float array."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(COLUMNS):
        raise ValueError(
            f"{path}: expected {len(COLUMNS)} columns, got {data.shape[1]}")
    return data


def linear_envelope_series(
    g: Grid,
    params: PhysicalParams,
    xi_bar: float = 1.0,
    t_end: float = 40.0,
    n_samples: int = 400,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Norm history of the linear evolution on the mean-free subspace.

    Evolves a random mean-free state with the dense matrix exponential of
    the coupled surface/velocity operator (no nonlinear terms) and returns
    the norm series; its tail decay rate is the dense spectral bound, so
    this cross-checks the decay-fit machinery against the eigensolver.
    """
    from .operators import dense_chs
    from .stokes_solver import _mean_free_active_basis

    A = dense_chs(xi_bar, g, params, bc="reduced")
    Q = _mean_free_active_basis(g, 2 * (g.nz - 2))
    Ap = Q.T @ A @ Q
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(Ap.shape[0])
    u /= np.linalg.norm(u)
    times = np.linspace(0.0, t_end, n_samples)
    prop = scipy.linalg.expm(Ap * (times[1] - times[0]))
    norms = np.empty(n_samples)
    norms[0] = np.linalg.norm(u)
    for i in range(1, n_samples):
        u = prop @ u
        norms[i] = np.linalg.norm(u)
    return times, norms
