"""Time integration of the hydrostatic models in Lagrangian variables.

The evolved unknowns are the surface density ``zeta`` (or its perturbation
from the constant state), the horizontal velocity ``V`` and the horizontal
flow map, all sampled on the Lagrangian label grid.  One IMEX step treats
the stiff linear block implicitly -- the full surface/velocity coupling for
``GlobalGamma1``, the constant-coefficient part of the viscous operator for
the local modes -- and the nonlinear remainders ``F1``/``F2`` explicitly
with 2/3-rule dealiasing.

Evolution modes
---------------
``LocalGamma1``
    Transformed shallow-atmosphere equations linearized at the initial
    surface density field; pressure gradient handled explicitly in ``F2``.
``GlobalGamma1``
    Same equations linearized at the constant state; the pressure gradient
    and depth-averaged divergence stay in the implicit coupled block.
``LocalGamma2``
    Affine vertical density profile with quadratic pressure, untransformed
    vertical coordinate, weighted depth average in the continuity equation.
``GeneralNoGravity``
    Uniform-in-z density with a general pressure law.

Terminal conditions (positivity loss, flow-map degeneration, blowup) raise
distinct exceptions so a caller can attribute the failure to the hypothesis
that broke.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import diagnostics
from .flowmap import (
    FlowMap,
    advance_flow_lagrangian,
    check_invertibility,
    compose,
    identity_map,
    invert_map,
)
from .grid import (
    Grid,
    _ddx,
    _ddy,
    dealias as dealias_field,
    div_h,
    grad_h,
    grad_h_vec,
    integral,
    l2_norm,
    make_grid,
    validate_field,
    vertical_average,
    vertical_derivative,
)
from .operators import vertical_lame_block
from .transforms import DELTA, PhysicalParams, density_from_surface

__all__ = [
    "EVOLUTION_MODES",
    "MODE_MODEL",
    "TerminalCondition",
    "PositivityLost",
    "MapNonInvertible",
    "BlowupDetected",
    "LagrangianState",
    "EulerianFields",
    "RunConfig",
    "RunResult",
    "Stepper",
    "full_surface_density",
    "nonlinearity_F1",
    "nonlinearity_F2",
    "reconstruct_w",
    "step",
    "pull_back",
    "initial_state",
    "run_simulation",
]

EVOLUTION_MODES = ("LocalGamma1", "LocalGamma2", "GlobalGamma1",
                   "GeneralNoGravity")

#: Physical model backing each evolution mode.
MODE_MODEL = {
    "LocalGamma1": "Gamma1",
    "GlobalGamma1": "Gamma1",
    "LocalGamma2": "Gamma2",
    "GeneralNoGravity": "GeneralNoGravity",
}


class TerminalCondition(RuntimeError):
    """A run-ending event with a machine-readable ``status`` tag."""

    status = "terminal"


class PositivityLost(TerminalCondition):
    """Surface density left the admissible positivity interval."""

    status = "positivity_lost"


class MapNonInvertible(TerminalCondition):
    """The horizontal flow map stopped being a controlled diffeomorphism."""

    status = "map_noninvertible"


class BlowupDetected(TerminalCondition):
    """Non-finite values appeared in the state."""

    status = "blowup"


@dataclass(frozen=True)
class LagrangianState:
    """Prognostic fields on the Lagrangian label grid at one instant.

    ``zeta`` is the surface density itself for the local modes and the
    perturbation from ``params.xi_bar`` for ``GlobalGamma1``.  ``zeta0`` is
    the frozen linearization baseline of the local modes (``None`` for the
    global mode).  ``dtV`` is the previous step's velocity increment per
    unit time, used to lag the time-derivative term of the momentum
    remainder; ``None`` means "treat as zero" (first step).
    """

    mode: str
    zeta: np.ndarray
    V: np.ndarray
    fm: FlowMap
    t: float
    zeta0: np.ndarray | None = None
    dtV: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in EVOLUTION_MODES:
            raise ValueError(
                f"unknown mode {self.mode!r}; expected one of {EVOLUTION_MODES}")
        if self.mode != "GlobalGamma1" and self.zeta0 is None:
            raise ValueError(f"mode {self.mode} requires a zeta0 baseline")


class EulerianFields(NamedTuple):
    """Pull-back of a Lagrangian state to the Eulerian grid."""

    xi: np.ndarray
    v: np.ndarray
    w: np.ndarray
    rho: np.ndarray


def _check_mode_params(mode: str, params: PhysicalParams) -> None:
    if mode not in EVOLUTION_MODES:
        raise ValueError(
            f"unknown mode {mode!r}; expected one of {EVOLUTION_MODES}")
    want = MODE_MODEL[mode]
    if params.model != want:
        raise ValueError(
            f"mode {mode} needs params.model={want!r}, got {params.model!r}")
    if mode == "GlobalGamma1" and params.xi_bar != 1.0:
        raise ValueError(
            "GlobalGamma1 linearizes at the unit constant state; "
            f"set xi_bar=1, got {params.xi_bar}")


def full_surface_density(state: LagrangianState,
                         params: PhysicalParams) -> np.ndarray:
    """Actual (non-perturbative) surface density of a state."""
    if state.mode == "GlobalGamma1":
        return params.xi_bar + state.zeta
    return state.zeta


def _full_density_column(state: LagrangianState, params: PhysicalParams,
                         g: Grid) -> np.ndarray:
    """3D density factor multiplying the material derivative, shape (nx,ny,nz)."""
    zf = full_surface_density(state, params)
    if state.mode == "LocalGamma2":
        return zf[:, :, None] + 0.5 * g.z[None, None, :]
    return np.broadcast_to(zf[:, :, None], (g.nx, g.ny, g.nz)).copy()


def _grad2(f: np.ndarray, g: Grid) -> np.ndarray:
    """Stack x/y derivatives along a new trailing axis (works on any rank)."""
    return np.stack([_ddx(f, g), _ddy(f, g)], axis=-1)


def _twisted_divergence(U: np.ndarray, Z: np.ndarray, g: Grid) -> np.ndarray:
    """Eulerian divergence of a composed 2-vector field: sum_k,i Z[k,i] d_k U_i."""
    dU = grad_h_vec(U, g)
    if U.ndim == 4:
        return np.einsum("abki,abzik->abz", Z, dU)
    return np.einsum("abki,abik->ab", Z, dU)


def reconstruct_w(state: LagrangianState, g: Grid,
                  params: PhysicalParams) -> np.ndarray:
    """Vertical velocity implied by the continuity equation, on labels.

    Integrates the composed horizontal mass flux from the bottom; vanishes
    identically at ``z=0`` and, up to quadrature error of the depth-mean
    constraint, at ``z=1``.  Raises on nonpositive density.
    """
    validate_field(state.V, g)
    zf = full_surface_density(state, params)
    if np.min(zf) <= 0.0:
        raise ValueError(f"nonpositive surface density (min {np.min(zf):.3e})")
    Z = state.fm.Z
    Vt = state.V - vertical_average(state.V, g)[:, :, None, :]
    flux = _twisted_divergence(zf[:, :, None, None] * Vt, Z, g)
    if state.mode == "LocalGamma2":
        twdiv3 = _twisted_divergence(state.V, Z, g)
        baro = (twdiv3 * g.z[None, None, :]) @ g.wz
        flux = flux + 0.5 * (g.z[None, None, :] * twdiv3 - baro[:, :, None])
        rho = zf[:, :, None] + 0.5 * g.z[None, None, :]
    else:
        rho = zf[:, :, None]
    from .grid import integrate_from_bottom

    return -integrate_from_bottom(flux, g) / rho


def _baseline(state: LagrangianState, params: PhysicalParams) -> np.ndarray:
    if state.mode == "GlobalGamma1":
        return np.full((state.zeta.shape[0], state.zeta.shape[1]),
                       params.xi_bar)
    return state.zeta0


def nonlinearity_F1(state: LagrangianState, g: Grid, params: PhysicalParams,
                    dealias: bool = True) -> np.ndarray:
    """Nonlinear remainder of the surface-density equation.

    By construction the linear part plus this remainder reproduce the exact
    transport of the surface density along the depth-averaged flow; all
    terms carry a factor ``(Z - I)`` or ``(zeta - baseline)`` and vanish on
    the linearization point.
    """
    _check_mode_params(state.mode, params)
    Z = state.fm.Z
    ZmI = Z - np.eye(2)
    zf = full_surface_density(state, params)
    Vbar = vertical_average(state.V, g)
    dVbar = grad_h_vec(Vbar, g)
    div_bar = dVbar[..., 0, 0] + dVbar[..., 1, 1]
    colon_bar = np.einsum("abik,abki->ab", dVbar, ZmI)
    if state.mode == "GlobalGamma1":
        out = -state.zeta * div_bar - zf * colon_bar
    else:
        out = -(state.zeta - state.zeta0) * div_bar - zf * colon_bar
    if state.mode == "LocalGamma2":
        dV = grad_h_vec(state.V, g)
        colon3 = np.einsum("abzik,abki->abz", dV, ZmI)
        out = out - 0.5 * ((colon3 * g.z[None, None, :]) @ g.wz)
    return dealias_field(out, g) if dealias else out


F2_MUTATIONS = ("flip_w_advection",)


def nonlinearity_F2(state: LagrangianState, dtV: np.ndarray | None, g: Grid,
                    params: PhysicalParams, dealias: bool = True,
                    mutation: str | None = None) -> np.ndarray:
    """Nonlinear remainder of the momentum equation.

    ``dtV`` is the (lagged) time derivative of ``V``; ``None`` means zero.
    The remainder collects the twisted-minus-flat viscous terms, the
    (mode-appropriate) pressure contribution, the density defect acting on
    ``dtV`` and the full twisted advection.  ``mutation`` is a verification
    fixture: ``"flip_w_advection"`` flips the sign of the vertical advection
    term so oracle-based tests can prove they would catch a sign error.
    """
    _check_mode_params(state.mode, params)
    if mutation is not None and mutation not in F2_MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}")
    if dtV is None:
        dtV = np.zeros_like(state.V)
    V = state.V
    Z = state.fm.Z
    ZmI = Z - np.eye(2)
    zf = full_surface_density(state, params)

    dV = grad_h_vec(V, g)                       # [i, m] = d_m V_i
    H = np.stack([_ddx(dV, g), _ddy(dV, g)], axis=-2)  # [i, n, m]
    dZ = _grad2(Z, g)                           # [m, k, n] = d_n Z[m, k]

    # twisted-minus-flat horizontal Laplacian and grad-div
    C = np.einsum("abnk,abmk->abnm", Z, Z) - np.eye(2)
    tau = np.einsum("abnk,abmkn->abm", Z, dZ)
    twlap = (np.einsum("abnm,abzinm->abzi", C, H)
             + np.einsum("abm,abzim->abzi", tau, dV))
    twgd = (np.einsum("abni,abmj,abzjnm->abzi", Z, Z, H)
            - np.einsum("abzjij->abzi", H)
            + np.einsum("abni,abmjn,abzjm->abzi", Z, dZ, dV))

    # full twisted advection
    W = reconstruct_w(state, g, params)
    Vt = V - vertical_average(V, g)[:, :, None, :]
    advH = np.einsum("abzk,ablk,abzil->abzi", Vt, Z, dV)
    advZ = W[..., None] * vertical_derivative(V, g)

    dzeta = grad_h(state.zeta, g)
    press_full = np.einsum("abji,abj->abi", Z, dzeta)[:, :, None, :]
    press_rem = np.einsum("abji,abj->abi", ZmI, dzeta)[:, :, None, :]

    if state.mode in ("LocalGamma1", "GlobalGamma1"):
        base = _baseline(state, params)[:, :, None, None]
        weight = 1.0 / (1.0 - DELTA * g.z[None, None, :, None])
        pref = weight / base
        out = params.mu * pref * twlap + params.mu_prime * pref * twgd
        ratio = (zf[:, :, None, None] / base)
        if state.mode == "GlobalGamma1":
            out = out - press_rem / params.xi_bar
        else:
            out = out - press_full / base
    elif state.mode == "LocalGamma2":
        rho0 = state.zeta0[:, :, None, None] + 0.5 * g.z[None, None, :, None]
        rhoL = zf[:, :, None, None] + 0.5 * g.z[None, None, :, None]
        out = (params.mu * twlap + params.mu_prime * twgd) / rho0
        out = out - 2.0 * (rhoL / rho0) * press_full
        ratio = rhoL / rho0
    else:  # GeneralNoGravity
        base = state.zeta0[:, :, None, None]
        out = (params.mu * twlap + params.mu_prime * twgd) / base
        pp = params.pressure_derivative(zf)[:, :, None, None]
        out = out - (pp / base) * press_full
        ratio = zf[:, :, None, None] / base
    out = out + (1.0 - ratio) * dtV - ratio * (advH + advZ)
    if mutation == "flip_w_advection":
        out = out + 2.0 * ratio * advZ
    return dealias_field(out, g) if dealias else out


# ---------------------------------------------------------------------------
# IMEX stepping
# ---------------------------------------------------------------------------


def _bc_row_indices(nz: int, offset: int) -> tuple[list[int], list[int]]:
    """Row indices of the top (Dirichlet) and bottom (Neumann) velocity rows."""
    top = [offset + (nz - 1) * 2 + c for c in range(2)]
    bot = [offset + 0 * 2 + c for c in range(2)]
    return top, bot


def _replace_velocity_bc_rows(M: np.ndarray, nz: int, offset: int,
                              Dz0: np.ndarray) -> None:
    """Overwrite the boundary-node velocity rows of a per-mode matrix."""
    iz = np.arange(nz)
    top, bot = _bc_row_indices(nz, offset)
    for c, (rt, rb) in enumerate(zip(top, bot)):
        M[rt, :] = 0.0
        M[rt, rt] = 1.0
        M[rb, :] = 0.0
        M[rb, offset + iz * 2 + c] = Dz0
    return None


class Stepper:
    """Precomputed implicit solves for repeated IMEX steps at fixed ``dt``.

    For ``GlobalGamma1`` the implicit block is the full coupled
    surface/velocity operator, solved mode by mode with boundary rows
    replaced.  For the local modes it is the constant-coefficient part of
    the viscous operator; the variable density multiplying the time
    derivative is handled by a contractive fixed-point iteration
    preconditioned with the midpoint density.
    """

    def __init__(self, mode: str, g: Grid, params: PhysicalParams, dt: float,
                 zeta0: np.ndarray | None = None, fp_tol: float = 1e-12,
                 fp_max_iter: int = 200, det_floor: float = 0.1):
        _check_mode_params(mode, params)
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.mode = mode
        self.g = g
        self.params = params
        self.dt = float(dt)
        self.fp_tol = float(fp_tol)
        self.fp_max_iter = int(fp_max_iter)
        self.det_floor = float(det_floor)
        nz = g.nz
        kx = g.ikx.imag
        ky = g.iky.imag
        if mode == "GlobalGamma1":
            n = 1 + 2 * nz
            iz = np.arange(nz)
            stack = np.empty((g.nx, g.ny, n, n), dtype=complex)
            for ix in range(g.nx):
                for iy in range(g.ny):
                    kt = np.array([kx[ix], ky[iy]])
                    Ak = vertical_lame_block(kt, params.xi_bar, g, params)
                    M = np.zeros((n, n), dtype=complex)
                    M[0, 0] = 1.0
                    for c in range(2):
                        M[0, 1 + iz * 2 + c] = (dt * params.xi_bar * 1j
                                                * kt[c] * g.wz)
                    M[1:, 1:] = np.eye(2 * nz) - dt * Ak
                    for c in range(2):
                        M[1 + iz * 2 + c, 0] = dt * 1j * kt[c]
                    _replace_velocity_bc_rows(M, nz, 1, g.Dz[0, :])
                    stack[ix, iy] = M
            self._inv = np.linalg.inv(stack)
            self.rho0 = None
            self.rho_star = None
        else:
            if zeta0 is None:
                raise ValueError(f"mode {mode} requires the zeta0 baseline")
            if mode == "LocalGamma2":
                rho0 = zeta0[:, :, None] + 0.5 * g.z[None, None, :]
            else:
                rho0 = np.broadcast_to(zeta0[:, :, None],
                                       (g.nx, g.ny, g.nz)).copy()
            if np.min(rho0) <= 0:
                raise ValueError("baseline density must be positive")
            self.rho0 = rho0[..., None]
            self.rho_star = 0.5 * (np.min(rho0) + np.max(rho0))
            n2 = 2 * nz
            Dzz = g.Dz @ g.Dz
            stack = np.empty((g.nx, g.ny, n2, n2))
            for ix in range(g.nx):
                for iy in range(g.ny):
                    kt = np.array([kx[ix], ky[iy]])
                    if mode == "LocalGamma1":
                        Lk = vertical_lame_block(kt, 1.0, g, params)
                    else:
                        k2 = float(kt @ kt)
                        Lk = (params.mu
                              * np.kron(Dzz - k2 * np.eye(nz), np.eye(2))
                              - params.mu_prime
                              * np.kron(np.eye(nz), np.outer(kt, kt)))
                    M = self.rho_star * np.eye(n2) - dt * Lk
                    _replace_velocity_bc_rows(M, nz, 0, g.Dz[0, :])
                    stack[ix, iy] = M
            self._inv = np.linalg.inv(stack)

    # -- helpers ------------------------------------------------------------

    def _solve_coupled(self, zeta: np.ndarray, V: np.ndarray,
                       F1: np.ndarray, F2: np.ndarray):
        g, nz, dt = self.g, self.g.nz, self.dt
        zh = np.fft.fft2(zeta + dt * F1, axes=(0, 1))
        r = V + dt * F2
        r[:, :, -1, :] = 0.0
        r[:, :, 0, :] = 0.0
        rh = np.fft.fft2(r, axes=(0, 1)).reshape(g.nx, g.ny, 2 * nz)
        rhs = np.concatenate([zh[..., None], rh], axis=-1)
        sol = np.einsum("abij,abj->abi", self._inv, rhs)
        zeta_new = np.fft.ifft2(sol[..., 0], axes=(0, 1)).real
        V_new = np.fft.ifft2(sol[..., 1:].reshape(g.nx, g.ny, nz, 2),
                             axes=(0, 1)).real
        return zeta_new, V_new

    def _solve_momentum(self, V: np.ndarray, F2: np.ndarray) -> np.ndarray:
        """Fixed-point solve of (rho0 - dt L) V_new = rho0 (V + dt F2)."""
        g, nz = self.g, self.g.nz
        base = self.rho0 * (V + self.dt * F2)
        Vm = V.copy()
        scale = max(1.0, float(np.max(np.abs(V))))
        for _ in range(self.fp_max_iter):
            r = base + (self.rho_star - self.rho0) * Vm
            r[:, :, -1, :] = 0.0
            r[:, :, 0, :] = 0.0
            rh = np.fft.fft2(r, axes=(0, 1)).reshape(g.nx, g.ny, 2 * nz)
            sol = np.einsum("abij,abj->abi", self._inv, rh)
            V_new = np.fft.ifft2(sol.reshape(g.nx, g.ny, nz, 2),
                                 axes=(0, 1)).real
            change = float(np.max(np.abs(V_new - Vm)))
            Vm = V_new
            if change <= self.fp_tol * scale:
                return Vm
        raise RuntimeError(
            f"implicit momentum fixed point did not converge in "
            f"{self.fp_max_iter} iterations (last change {change:.3e})")

    def _check_state(self, zeta: np.ndarray, V: np.ndarray,
                     fm: FlowMap) -> None:
        p = self.params
        if not (np.all(np.isfinite(zeta)) and np.all(np.isfinite(V))):
            raise BlowupDetected("non-finite values in the state")
        if self.mode == "GlobalGamma1":
            xi = p.xi_bar + zeta
            if np.min(xi) < 0.5 * p.xi_bar:
                raise PositivityLost(
                    f"surface density fell below xi_bar/2 "
                    f"(min {np.min(xi):.6g})")
        else:
            lo, hi = 0.5 * p.M1, 2.0 * p.M2
            if np.min(zeta) < lo or np.max(zeta) > hi:
                raise PositivityLost(
                    f"surface density left [{lo}, {hi}] "
                    f"(range [{np.min(zeta):.6g}, {np.max(zeta):.6g}])")
        rep = check_invertibility(fm, det_floor=self.det_floor)
        if not rep.ok:
            raise MapNonInvertible(
                f"flow map out of the diffeomorphism regime "
                f"(|gradX - I| = {rep.supnorm_dev:.3g}, "
                f"min det = {rep.min_det:.3g})")

    # -- one IMEX step -------------------------------------------------------

    def step(self, state: LagrangianState) -> LagrangianState:
        """Advance the state by ``dt`` and re-check its invariants."""
        if state.mode != self.mode:
            raise ValueError(f"stepper built for {self.mode}, got {state.mode}")
        g, params, dt = self.g, self.params, self.dt
        F2 = nonlinearity_F2(state, state.dtV, g, params)
        if self.mode == "GlobalGamma1":
            F1 = nonlinearity_F1(state, g, params)
            zeta_new, V_new = self._solve_coupled(state.zeta, state.V, F1, F2)
        else:
            V_new = self._solve_momentum(state.V, F2)
            mid = dataclasses.replace(state, V=V_new)
            F1 = nonlinearity_F1(mid, g, params)
            Vbar_new = vertical_average(V_new, g)
            lin = state.zeta0 * div_h(Vbar_new, g)
            if self.mode == "LocalGamma2":
                div3 = div_h(V_new, g)
                lin = lin + 0.5 * ((div3 * g.z[None, None, :]) @ g.wz)
            zeta_new = state.zeta + dt * (F1 - lin)
        fm_new = advance_flow_lagrangian(state.fm,
                                         vertical_average(V_new, g), g, dt)
        self._check_state(zeta_new, V_new, fm_new)
        return LagrangianState(
            mode=self.mode, zeta=zeta_new, V=V_new, fm=fm_new,
            t=state.t + dt, zeta0=state.zeta0, dtV=(V_new - state.V) / dt)


def step(state: LagrangianState, dt: float, g: Grid,
         params: PhysicalParams,
         stepper: Stepper | None = None) -> LagrangianState:
    """One IMEX step; builds a throwaway :class:`Stepper` if none is given."""
    if stepper is None:
        stepper = Stepper(state.mode, g, params, dt, zeta0=state.zeta0)
    elif stepper.dt != dt:
        raise ValueError(f"stepper was built for dt={stepper.dt}, got {dt}")
    return stepper.step(state)


def pull_back(state: LagrangianState, g: Grid, params: PhysicalParams,
              inv_tol: float = 1e-10) -> EulerianFields:
    """Eulerian snapshot of a state via flow-map inversion and composition."""
    Y = invert_map(state.fm, g, inv_tol=inv_tol)
    xi = compose(full_surface_density(state, params), Y, g)
    v = compose(state.V, Y, g)
    w = compose(reconstruct_w(state, g, params), Y, g)
    coordinate = ("transformed" if MODE_MODEL[state.mode] == "Gamma1"
                  else "physical")
    rho = density_from_surface(xi, g, params, coordinate=coordinate)
    return EulerianFields(xi=xi, v=v, w=w, rho=rho)


# ---------------------------------------------------------------------------
# Simulation driver
# ---------------------------------------------------------------------------

PRESETS = ("steady", "fourier_perturbation", "random_smooth")


@dataclass(frozen=True)
class RunConfig:
    """Validated simulation configuration.

    ``perturbation_mode`` is the horizontal integer wavevector of the
    ``fourier_perturbation`` preset.  ``lin_tol`` and ``mean_tol`` mirror the
    steady-solver tolerances so one config schema covers every subcommand;
    the time stepper itself uses ``fp_tol`` (implicit fixed point),
    ``inv_tol`` (flow-map inversion in pull-backs) and ``det_floor``
    (Jacobian floor of the invertibility check).
    """

    mode: str
    nx: int
    ny: int
    nz: int
    params: PhysicalParams
    dt: float
    t_end: float
    output_every: int = 1
    preset: str = "steady"
    amplitude: float = 0.0
    perturbation_mode: tuple[int, int] = (1, 0)
    seed: int = 0
    fp_tol: float = 1e-12
    inv_tol: float = 1e-10
    det_floor: float = 0.1
    lin_tol: float = 1e-8
    mean_tol: float = 1e-10
    output_dir: str | None = None

    def __post_init__(self):
        _check_mode_params(self.mode, self.params)
        if self.preset not in PRESETS:
            raise ValueError(
                f"unknown preset {self.preset!r}; expected one of {PRESETS}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.t_end < self.dt:
            raise ValueError(
                f"t_end={self.t_end} is shorter than one step dt={self.dt}")
        if self.output_every < 1:
            raise ValueError(
                f"output_every must be >= 1, got {self.output_every}")
        if self.preset != "steady" and not self.amplitude > 0:
            raise ValueError(
                f"preset {self.preset!r} needs amplitude > 0, "
                f"got {self.amplitude}")
        m = self.perturbation_mode
        if (len(m) != 2 or any(int(k) != k for k in m)
                or max(abs(int(k)) for k in m) > min(self.nx, self.ny) // 3
                or m == (0, 0)):
            raise ValueError(
                f"perturbation_mode must be a nonzero integer pair within "
                f"the dealiased range, got {m}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))


@dataclass(frozen=True)
class RunResult:
    """Outcome of :func:`run_simulation`."""

    status: str
    t_final: float
    n_steps: int
    rows: list
    state: LagrangianState
    message: str | None = None


def _lowpass_random(rng: np.random.Generator, g: Grid, kmax: int = 2
                    ) -> np.ndarray:
    """Random real surface field with spectrum confined to |k|_inf <= kmax."""
    f = rng.standard_normal((g.nx, g.ny))
    fh = np.fft.fft2(f)
    kx = np.rint(g.ikx.imag / (2 * np.pi)).astype(int)
    ky = np.rint(g.iky.imag / (2 * np.pi)).astype(int)
    mask = (np.abs(kx)[:, None] <= kmax) & (np.abs(ky)[None, :] <= kmax)
    fh *= mask
    fh[0, 0] = 0.0
    out = np.fft.ifft2(fh).real
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def _check_boundary_compatibility(V: np.ndarray, g: Grid) -> None:
    scale = max(1.0, float(np.max(np.abs(V))))
    top = float(np.max(np.abs(V[:, :, -1, :])))
    bot = float(np.max(np.abs(np.einsum("j,abjc->abc", g.Dz[0, :], V))))
    if top > 1e-10 * scale or bot > 1e-8 * scale:
        raise ValueError(
            f"initial velocity violates the boundary compatibilities "
            f"(|V| at top {top:.2e}, |dV/dz| at bottom {bot:.2e})")


def initial_state(cfg: RunConfig, g: Grid) -> LagrangianState:
    """Construct the preset initial data and validate its compatibilities."""
    params = cfg.params
    xb = params.xi_bar
    V = np.zeros((g.nx, g.ny, g.nz, 2))
    if cfg.preset == "steady":
        pert = np.zeros((g.nx, g.ny))
    elif cfg.preset == "fourier_perturbation":
        m1, m2 = cfg.perturbation_mode
        phase = 2 * np.pi * (m1 * g.x[:, None] + m2 * g.y[None, :])
        pert = cfg.amplitude * np.cos(phase)
    else:  # random_smooth
        rng = np.random.default_rng(cfg.seed)
        pert = cfg.amplitude * _lowpass_random(rng, g)
        q1 = 1.0 - g.z**2
        q2 = q1**2
        for i in range(2):
            V[:, :, :, i] = cfg.amplitude * (
                _lowpass_random(rng, g)[:, :, None] * q1[None, None, :]
                + 0.5 * _lowpass_random(rng, g)[:, :, None] * q2[None, None, :])
    _check_boundary_compatibility(V, g)
    if cfg.mode == "GlobalGamma1":
        zeta = pert
        zeta0 = None
    else:
        zeta = xb + pert
        zeta0 = zeta.copy()
        if np.min(zeta) < params.M1 or np.max(zeta) > params.M2:
            raise ValueError(
                f"initial surface density leaves [M1, M2] = "
                f"[{params.M1}, {params.M2}]: range "
                f"[{np.min(zeta):.6g}, {np.max(zeta):.6g}]")
    return LagrangianState(mode=cfg.mode, zeta=zeta, V=V,
                           fm=identity_map(g), t=0.0, zeta0=zeta0)


def _diagnostics_row(state: LagrangianState, g: Grid, params: PhysicalParams,
                     diss_integral: float) -> tuple:
    zf = full_surface_density(state, params)
    zeta_m = state.zeta - float(np.mean(state.zeta))
    entry = diagnostics.lagrangian_energy(zf, state.V, state.fm, g, params,
                                          state.mode)
    mass = diagnostics.lagrangian_mass(zf, state.fm, g, params, state.mode)
    return (
        float(state.t), mass, entry.E, float(diss_integral),
        diagnostics.surface_h1_norm(zeta_m, g), l2_norm(state.V, g),
        float(np.min(zf)), float(np.max(zf)), float(np.min(state.fm.detX)),
    )


def run_simulation(cfg: RunConfig) -> RunResult:
    """Run the configured simulation and collect diagnostics rows.

    Diagnostics are evaluated in the Lagrangian frame with flow-map Jacobian
    weights (the exact change of variables of the Eulerian functionals); the
    dissipation integral is accumulated with the trapezoid rule every step.
    Terminal conditions end the run early with the matching status.
    """
    g = make_grid(cfg.nx, cfg.ny, cfg.nz)
    params = cfg.params
    state = initial_state(cfg, g)
    stepper = Stepper(cfg.mode, g, params, cfg.dt, zeta0=state.zeta0,
                      fp_tol=cfg.fp_tol, det_floor=cfg.det_floor)
    rows = [_diagnostics_row(state, g, params, 0.0)]
    diss = 0.0
    d_prev = diagnostics.lagrangian_energy(
        full_surface_density(state, params), state.V, state.fm, g, params,
        state.mode).D
    status, message = "completed", None
    cfl_warned = False
    n_done = 0
    for n in range(1, cfg.n_steps + 1):
        try:
            state = stepper.step(state)
        except TerminalCondition as exc:
            status, message = exc.status, str(exc)
            break
        n_done = n
        d_new = diagnostics.lagrangian_energy(
            full_surface_density(state, params), state.V, state.fm, g,
            params, state.mode).D
        diss += 0.5 * cfg.dt * (d_prev + d_new)
        d_prev = d_new
        if not cfl_warned:
            speed = float(np.max(np.abs(state.V)))
            h = min(1.0 / g.nx, 1.0 / g.ny)
            if cfg.dt * speed > h:
                warnings.warn(
                    f"advective CFL advisory: dt*max|V| = {cfg.dt * speed:.3g}"
                    f" exceeds the grid spacing {h:.3g}", RuntimeWarning,
                    stacklevel=2)
                cfl_warned = True
        if n % cfg.output_every == 0 or n == cfg.n_steps:
            rows.append(_diagnostics_row(state, g, params, diss))
    return RunResult(status=status, t_final=float(state.t), n_steps=n_done,
                     rows=rows, state=state, message=message)
