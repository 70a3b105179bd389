"""Tests for the Lagrangian IMEX time integration."""

from __future__ import annotations

import numpy as np
import pytest

from cpelab import reference
from cpelab.evolve import (
    EVOLUTION_MODES,
    MODE_MODEL,
    BlowupDetected,
    LagrangianState,
    MapNonInvertible,
    PositivityLost,
    RunConfig,
    Stepper,
    TerminalCondition,
    full_surface_density,
    initial_state,
    nonlinearity_F1,
    nonlinearity_F2,
    pull_back,
    reconstruct_w,
    run_simulation,
    step,
)
from cpelab.flowmap import FlowMap, identity_map, inverse_jacobian
from cpelab.grid import grad_h, grad_h_vec, l2_norm, make_grid
from cpelab.transforms import PhysicalParams, make_pressure_law


def rel_err(a, b, g):
    return l2_norm(a - b, g) / max(l2_norm(b, g), 1e-300)


def gamma1_params(**kw):
    return PhysicalParams(mu=kw.pop("mu", 1.0), mu_prime=kw.pop("mu_prime", 0.5),
                          model="Gamma1", **kw)


def state_from_truth(truth):
    return LagrangianState(mode=truth.mode, zeta=truth.zeta, V=truth.V,
                           fm=truth.fm, t=0.0, zeta0=truth.zeta0,
                           dtV=truth.dtV)


@pytest.fixture(scope="module")
def oracle_grid():
    return make_grid(24, 24, 17)


@pytest.fixture(scope="module")
def oracle_gamma1():
    return reference.build_oracle_template("LocalGamma1", mu=1.0, mu_prime=0.5)


@pytest.fixture(scope="module")
def oracle_general():
    return reference.build_oracle_template(
        "GeneralNoGravity", mu=0.8, mu_prime=0.2,
        pressure="tanh", pressure_alpha=0.4)


@pytest.fixture(scope="module")
def general_params():
    return PhysicalParams(mu=0.8, mu_prime=0.2, model="GeneralNoGravity",
                          **make_pressure_law("tanh", alpha=0.4))


# ---------------------------------------------------------------------------
# nonlinear remainders against the symbolic oracle
# ---------------------------------------------------------------------------


def test_nonlinearities_match_oracle(oracle_gamma1, oracle_general,
                                     general_params, oracle_grid):
    g = oracle_grid
    cases = [
        (oracle_gamma1, gamma1_params(), "LocalGamma1"),
        (oracle_general, general_params, "GeneralNoGravity"),
    ]
    rng = np.random.default_rng(11)
    for template, params, mode in cases:
        for _ in range(2):
            coeffs = reference.sample_coefficients(rng, mode)
            truth = template.evaluate(coeffs, g)
            state = state_from_truth(truth)
            F1 = nonlinearity_F1(state, g, params, dealias=False)
            F2 = nonlinearity_F2(state, truth.dtV, g, params, dealias=False)
            W = reconstruct_w(state, g, params)
            assert rel_err(F1, truth.F1, g) < 1e-6, mode
            assert rel_err(F2, truth.F2, g) < 1e-6, mode
            assert rel_err(W, truth.W, g) < 1e-7, mode
            # the continuity-equation reconstruction integrates from z = 0
            assert np.all(W[:, :, 0] == 0.0)


def test_mutation_is_detectable(oracle_gamma1, oracle_grid):
    g = oracle_grid
    rng = np.random.default_rng(12)
    coeffs = reference.sample_coefficients(rng, "LocalGamma1")
    truth = oracle_gamma1.evaluate(coeffs, g)
    state = state_from_truth(truth)
    params = gamma1_params()
    good = nonlinearity_F2(state, truth.dtV, g, params, dealias=False)
    bad = nonlinearity_F2(state, truth.dtV, g, params, dealias=False,
                          mutation="flip_w_advection")
    assert rel_err(good, truth.F2, g) < 1e-6
    assert rel_err(bad, truth.F2, g) > 1e-4


def test_unknown_mutation_rejected(oracle_gamma1, oracle_grid):
    g = oracle_grid
    rng = np.random.default_rng(13)
    truth = oracle_gamma1.evaluate(
        reference.sample_coefficients(rng, "LocalGamma1"), g)
    state = state_from_truth(truth)
    with pytest.raises(ValueError, match="unknown mutation"):
        nonlinearity_F2(state, None, g, gamma1_params(), mutation="nope")


def test_remainders_vanish_on_linearization_point():
    # Local modes keep the full pressure gradient explicit, so their F2
    # reduces to exactly that term on the linearization point; with a
    # constant baseline both remainders vanish identically.  The global
    # mode treats the pressure implicitly and F2 vanishes outright.
    g = make_grid(8, 8, 5)
    params = gamma1_params()
    zeta0 = 1.0 + 0.2 * np.cos(2 * np.pi * g.x)[:, None] * np.ones(g.ny)
    state = LagrangianState(
        mode="LocalGamma1", zeta=zeta0.copy(), V=np.zeros((g.nx, g.ny, g.nz, 2)),
        fm=identity_map(g), t=0.0, zeta0=zeta0)
    assert np.all(nonlinearity_F1(state, g, params) == 0.0)
    F2 = nonlinearity_F2(state, None, g, params, dealias=False)
    pressure = -grad_h(zeta0, g)[:, :, None, :] / zeta0[:, :, None, None]
    assert np.max(np.abs(F2 - pressure)) < 1e-12

    flat = np.full((g.nx, g.ny), 1.3)
    const = LagrangianState(
        mode="LocalGamma1", zeta=flat.copy(), V=np.zeros((g.nx, g.ny, g.nz, 2)),
        fm=identity_map(g), t=0.0, zeta0=flat)
    assert np.max(np.abs(nonlinearity_F2(const, None, g, params))) < 1e-14

    glob = LagrangianState(
        mode="GlobalGamma1", zeta=np.zeros((g.nx, g.ny)),
        V=np.zeros((g.nx, g.ny, g.nz, 2)), fm=identity_map(g), t=0.0)
    assert np.all(nonlinearity_F1(glob, g, params) == 0.0)
    assert np.all(nonlinearity_F2(glob, None, g, params) == 0.0)


def test_mode_parameter_guards():
    g = make_grid(8, 8, 5)
    zeta = np.ones((g.nx, g.ny))
    state = LagrangianState(mode="LocalGamma1", zeta=zeta,
                            V=np.zeros((g.nx, g.ny, g.nz, 2)),
                            fm=identity_map(g), t=0.0, zeta0=zeta)
    wrong = PhysicalParams(mu=1.0, mu_prime=0.5, model="Gamma2")
    with pytest.raises(ValueError, match="needs params.model"):
        nonlinearity_F1(state, g, wrong)
    with pytest.raises(ValueError, match="unknown mode"):
        LagrangianState(mode="Gamma7", zeta=zeta,
                        V=np.zeros((g.nx, g.ny, g.nz, 2)),
                        fm=identity_map(g), t=0.0, zeta0=zeta)
    with pytest.raises(ValueError, match="requires a zeta0"):
        LagrangianState(mode="LocalGamma1", zeta=zeta,
                        V=np.zeros((g.nx, g.ny, g.nz, 2)),
                        fm=identity_map(g), t=0.0)
    with pytest.raises(ValueError, match="xi_bar"):
        Stepper("GlobalGamma1", g, gamma1_params(xi_bar=2.0), dt=1e-3)


def test_reconstruct_w_rejects_nonpositive_density():
    g = make_grid(8, 8, 5)
    zeta = -np.ones((g.nx, g.ny))
    state = LagrangianState(mode="LocalGamma1", zeta=zeta,
                            V=np.zeros((g.nx, g.ny, g.nz, 2)),
                            fm=identity_map(g), t=0.0, zeta0=np.ones_like(zeta))
    with pytest.raises(ValueError, match="nonpositive surface density"):
        reconstruct_w(state, g, gamma1_params())


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


def test_global_steady_state_is_exact_fixed_point():
    g = make_grid(8, 8, 7)
    params = gamma1_params()
    state = LagrangianState(
        mode="GlobalGamma1", zeta=np.zeros((g.nx, g.ny)),
        V=np.zeros((g.nx, g.ny, g.nz, 2)), fm=identity_map(g), t=0.0)
    stepper = Stepper("GlobalGamma1", g, params, dt=1e-2)
    for _ in range(20):
        state = stepper.step(state)
    assert np.max(np.abs(state.zeta)) <= 1e-15
    assert np.max(np.abs(state.V)) <= 1e-15
    assert np.max(np.abs(state.fm.disp)) == 0.0


def test_step_is_first_order_accurate():
    def final_state(dt):
        cfg = RunConfig(mode="LocalGamma1", nx=8, ny=8, nz=7,
                        params=gamma1_params(), dt=dt, t_end=0.02,
                        preset="random_smooth", amplitude=0.05, seed=2)
        res = run_simulation(cfg)
        assert res.status == "completed"
        return res.state

    g = make_grid(8, 8, 7)
    ref = final_state(0.02 / 160)
    coarse = final_state(2e-3)
    fine = final_state(1e-3)
    ec = l2_norm(coarse.V - ref.V, g) + l2_norm(coarse.zeta - ref.zeta, g)
    ef = l2_norm(fine.V - ref.V, g) + l2_norm(fine.zeta - ref.zeta, g)
    assert ec / ef == pytest.approx(2.0, rel=0.45)


def test_mass_conserved_on_short_run():
    cfg = RunConfig(mode="LocalGamma1", nx=12, ny=12, nz=7,
                    params=gamma1_params(), dt=1e-3, t_end=0.02,
                    preset="random_smooth", amplitude=0.05, seed=0)
    res = run_simulation(cfg)
    assert res.status == "completed"
    masses = np.array([row[1] for row in res.rows])
    assert np.max(np.abs(masses - masses[0])) <= 1e-6 * abs(masses[0])


def test_energy_decays_in_linear_regime():
    cfg = RunConfig(mode="GlobalGamma1", nx=8, ny=8, nz=7,
                    params=gamma1_params(), dt=5e-3, t_end=0.2,
                    preset="fourier_perturbation", amplitude=1e-6,
                    perturbation_mode=(1, 0))
    res = run_simulation(cfg)
    assert res.status == "completed"
    E = np.array([row[2] for row in res.rows])
    assert np.all(E >= 0.0)
    assert np.all(np.diff(E) <= 1e-9 * E[0])
    assert E[-1] < 0.95 * E[0]


def test_stepper_reuse_matches_throwaway_steps():
    g = make_grid(8, 8, 7)
    params = gamma1_params()
    cfg = RunConfig(mode="LocalGamma1", nx=8, ny=8, nz=7, params=params,
                    dt=1e-3, t_end=0.01, preset="random_smooth",
                    amplitude=0.05, seed=4)
    s0 = initial_state(cfg, g)
    stepper = Stepper("LocalGamma1", g, params, 1e-3, zeta0=s0.zeta0)
    a = stepper.step(stepper.step(s0))
    b = step(step(s0, 1e-3, g, params), 1e-3, g, params)
    assert np.array_equal(a.zeta, b.zeta)
    assert np.array_equal(a.V, b.V)
    assert np.array_equal(a.fm.disp, b.fm.disp)
    with pytest.raises(ValueError, match="built for dt"):
        step(s0, 2e-3, g, params, stepper=stepper)
    glob = LagrangianState(mode="GlobalGamma1", zeta=np.zeros((g.nx, g.ny)),
                           V=np.zeros((g.nx, g.ny, g.nz, 2)),
                           fm=identity_map(g), t=0.0)
    with pytest.raises(ValueError, match="stepper built for"):
        stepper.step(glob)


def test_stepper_validation():
    g = make_grid(8, 8, 5)
    params = gamma1_params()
    with pytest.raises(ValueError, match="dt must be positive"):
        Stepper("LocalGamma1", g, params, dt=0.0, zeta0=np.ones((g.nx, g.ny)))
    with pytest.raises(ValueError, match="requires the zeta0"):
        Stepper("LocalGamma1", g, params, dt=1e-3)
    with pytest.raises(ValueError, match="baseline density"):
        Stepper("LocalGamma1", g, params, dt=1e-3,
                zeta0=np.zeros((g.nx, g.ny)))


# ---------------------------------------------------------------------------
# terminal conditions
# ---------------------------------------------------------------------------


def test_positivity_loss_terminates_run():
    cfg = RunConfig(mode="GlobalGamma1", nx=8, ny=8, nz=7,
                    params=gamma1_params(), dt=1e-3, t_end=0.1,
                    preset="fourier_perturbation", amplitude=0.55,
                    perturbation_mode=(1, 0))
    res = run_simulation(cfg)
    assert res.status == "positivity_lost"
    assert "xi_bar/2" in res.message
    assert res.n_steps == 0
    assert len(res.rows) == 1


def test_positivity_guard_on_local_upper_bound():
    g = make_grid(8, 8, 5)
    params = gamma1_params()  # admissible window is [M1/2, 2*M2] = [0.25, 4]
    zeta = np.full((g.nx, g.ny), 4.2)
    state = LagrangianState(mode="LocalGamma1", zeta=zeta,
                            V=np.zeros((g.nx, g.ny, g.nz, 2)),
                            fm=identity_map(g), t=0.0, zeta0=zeta)
    with pytest.raises(PositivityLost, match="left") as exc_info:
        step(state, 1e-3, g, params)
    assert exc_info.value.status == "positivity_lost"
    assert isinstance(exc_info.value, TerminalCondition)


def test_degenerate_flow_map_terminates_step():
    g = make_grid(8, 8, 5)
    disp = np.zeros((g.nx, g.ny, 2))
    disp[:, :, 0] = 0.1 * np.sin(2 * np.pi * g.x)[:, None]
    gradX = np.broadcast_to(np.eye(2), (g.nx, g.ny, 2, 2)) + grad_h_vec(disp, g)
    Z, detX = inverse_jacobian(gradX)
    fm = FlowMap(disp=disp, gradX=gradX, Z=Z, detX=detX, t=0.0)
    zeta = np.ones((g.nx, g.ny))
    state = LagrangianState(mode="LocalGamma1", zeta=zeta,
                            V=np.zeros((g.nx, g.ny, g.nz, 2)),
                            fm=fm, t=0.0, zeta0=zeta)
    with pytest.raises(MapNonInvertible, match="diffeomorphism") as exc_info:
        step(state, 1e-3, g, gamma1_params())
    assert exc_info.value.status == "map_noninvertible"


def test_non_finite_state_reports_blowup():
    g = make_grid(8, 8, 5)
    zeta = np.zeros((g.nx, g.ny))
    zeta[0, 0] = np.nan
    state = LagrangianState(mode="GlobalGamma1", zeta=zeta,
                            V=np.zeros((g.nx, g.ny, g.nz, 2)),
                            fm=identity_map(g), t=0.0)
    with pytest.raises(BlowupDetected, match="non-finite") as exc_info:
        step(state, 1e-3, g, gamma1_params())
    assert exc_info.value.status == "blowup"


# ---------------------------------------------------------------------------
# pull-back to the Eulerian frame
# ---------------------------------------------------------------------------


def test_pull_back_identity_map_is_a_no_op():
    g = make_grid(12, 12, 7)
    params = gamma1_params()
    cfg = RunConfig(mode="LocalGamma1", nx=12, ny=12, nz=7, params=params,
                    dt=1e-3, t_end=1e-3, preset="random_smooth",
                    amplitude=0.05, seed=7)
    state = initial_state(cfg, g)
    fields = pull_back(state, g, params)
    assert np.max(np.abs(fields.xi - state.zeta)) < 1e-12
    assert np.max(np.abs(fields.v - state.V)) < 1e-12
    assert np.max(np.abs(fields.w - reconstruct_w(state, g, params))) < 1e-12
    assert fields.rho.shape == (g.nx, g.ny, g.nz)


def test_pull_back_of_translated_state_shifts_fields():
    g = make_grid(16, 16, 5)
    shift = 0.25
    disp = np.zeros((g.nx, g.ny, 2))
    disp[:, :, 0] = shift
    eye = np.broadcast_to(np.eye(2), (g.nx, g.ny, 2, 2)).copy()
    fm = FlowMap(disp=disp, gradX=eye, Z=eye.copy(), detX=np.ones((g.nx, g.ny)),
                 t=1.0)
    zeta = 1.0 + 0.3 * np.cos(2 * np.pi * g.x)[:, None] * np.ones(g.ny)
    state = LagrangianState(mode="LocalGamma1", zeta=zeta,
                            V=np.zeros((g.nx, g.ny, g.nz, 2)),
                            fm=fm, t=1.0, zeta0=zeta)
    fields = pull_back(state, g, gamma1_params())
    expected = 1.0 + 0.3 * np.cos(2 * np.pi * (g.x - shift))[:, None] \
        * np.ones(g.ny)
    assert np.max(np.abs(fields.xi - expected)) < 1e-12
    assert np.max(np.abs(fields.v)) < 1e-12
    assert np.max(np.abs(fields.w)) < 1e-12


# ---------------------------------------------------------------------------
# run configuration and presets
# ---------------------------------------------------------------------------


def test_initial_state_presets():
    params = gamma1_params()
    g = make_grid(12, 12, 7)
    steady = initial_state(
        RunConfig(mode="LocalGamma1", nx=12, ny=12, nz=7, params=params,
                  dt=1e-3, t_end=1e-3), g)
    assert np.all(steady.V == 0.0)
    assert np.all(steady.zeta == params.xi_bar)
    assert np.array_equal(steady.zeta0, steady.zeta)

    four = initial_state(
        RunConfig(mode="LocalGamma1", nx=12, ny=12, nz=7, params=params,
                  dt=1e-3, t_end=1e-3, preset="fourier_perturbation",
                  amplitude=1e-3, perturbation_mode=(2, 1)), g)
    phase = 2 * np.pi * (2 * g.x[:, None] + 1 * g.y[None, :])
    assert np.max(np.abs(four.zeta - 1.0 - 1e-3 * np.cos(phase))) < 1e-15

    def rand_state(seed):
        return initial_state(
            RunConfig(mode="LocalGamma1", nx=12, ny=12, nz=7, params=params,
                      dt=1e-3, t_end=1e-3, preset="random_smooth",
                      amplitude=0.05, seed=seed), g)

    a, b, c = rand_state(3), rand_state(3), rand_state(4)
    assert np.array_equal(a.V, b.V) and np.array_equal(a.zeta, b.zeta)
    assert not np.array_equal(a.V, c.V)
    assert np.max(np.abs(a.V[:, :, -1, :])) < 1e-12  # rigid top
    assert np.max(np.abs(np.einsum("j,abjc->abc", g.Dz[0], a.V))) < 1e-8


def test_initial_density_window_is_enforced():
    cfg = RunConfig(mode="LocalGamma1", nx=12, ny=12, nz=7,
                    params=gamma1_params(), dt=1e-3, t_end=1e-3,
                    preset="fourier_perturbation", amplitude=0.8)
    with pytest.raises(ValueError, match=r"leaves \[M1, M2\]"):
        initial_state(cfg, make_grid(12, 12, 7))


def test_run_config_validation():
    params = gamma1_params()
    good = dict(mode="LocalGamma1", nx=8, ny=8, nz=5, params=params,
                dt=1e-3, t_end=1e-2)
    RunConfig(**good)
    with pytest.raises(ValueError, match="unknown preset"):
        RunConfig(**{**good, "preset": "warp"})
    with pytest.raises(ValueError, match="dt must be positive"):
        RunConfig(**{**good, "dt": -1e-3})
    with pytest.raises(ValueError, match="t_end must be positive"):
        RunConfig(**{**good, "t_end": 0.0})
    with pytest.raises(ValueError, match="shorter than one step"):
        RunConfig(**{**good, "t_end": 1e-4})
    with pytest.raises(ValueError, match="output_every"):
        RunConfig(**{**good, "output_every": 0})
    with pytest.raises(ValueError, match="needs amplitude"):
        RunConfig(**{**good, "preset": "fourier_perturbation"})
    with pytest.raises(ValueError, match="perturbation_mode"):
        RunConfig(**{**good, "preset": "fourier_perturbation",
                     "amplitude": 1e-3, "perturbation_mode": (0, 0)})
    with pytest.raises(ValueError, match="perturbation_mode"):
        RunConfig(**{**good, "preset": "fourier_perturbation",
                     "amplitude": 1e-3, "perturbation_mode": (5, 0)})
    with pytest.raises(ValueError, match="needs params.model"):
        RunConfig(**{**good, "mode": "LocalGamma2"})
    assert RunConfig(**{**good, "dt": 1e-3, "t_end": 1e-2}).n_steps == 10


def test_rows_respect_output_cadence():
    cfg = RunConfig(mode="LocalGamma1", nx=8, ny=8, nz=5,
                    params=gamma1_params(), dt=1e-3, t_end=1e-2,
                    output_every=3, preset="steady")
    res = run_simulation(cfg)
    assert res.status == "completed"
    assert res.n_steps == 10
    times = [row[0] for row in res.rows]
    assert times == pytest.approx([0.0, 3e-3, 6e-3, 9e-3, 1e-2])


def test_mode_tables_are_consistent():
    assert set(MODE_MODEL) == set(EVOLUTION_MODES)
    assert set(MODE_MODEL.values()) == {"Gamma1", "Gamma2", "GeneralNoGravity"}
    g = make_grid(8, 8, 5)
    state = LagrangianState(mode="GlobalGamma1", zeta=np.zeros((g.nx, g.ny)),
                            V=np.zeros((g.nx, g.ny, g.nz, 2)),
                            fm=identity_map(g), t=0.0)
    assert np.all(full_surface_density(state, gamma1_params()) == 1.0)
