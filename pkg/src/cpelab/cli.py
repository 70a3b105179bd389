"""Command-line interface: configuration, subcommands, reproducible output.

Subcommands
-----------
``simulate``
    Run a time integration from a JSON run configuration; write the
    diagnostics CSV and a summary JSON.
``spectrum``
    Compute the symbol-ellipticity report and the spectral bound eta0 for
    the linear operator of a configuration; write a per-mode symbol CSV
    and a summary JSON.
``resolvent``
    Solve one resolvent problem described by a JSON problem file; write
    the solution fields and a summary JSON.
``verify``
    Run a curated battery of the package's correctness properties and
    print a pass/fail table.

Exit codes
----------
0   success (simulate: run completed; verify: all checks passed)
2   configuration error (unreadable file, schema violation, bad value)
3   run stopped: positivity lost
4   run stopped: flow map left the diffeomorphism regime
5   run stopped: blowup detected
6   compatibility violation in a steady (lambda = 0) resolvent problem
7   verification failed (one or more checks did not pass)

Determinism: identical configuration and seed produce bitwise-identical
diagnostics CSV files and summary JSONs; no timestamps or host details
are written.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import diagnostics, evolve, flowmap, operators, reference, stokes_solver
from .grid import Grid, l2_norm, make_grid
from .transforms import PhysicalParams, make_pressure_law

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "CPELAB_OUTPUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_POSITIVITY = 3
EXIT_NONINVERTIBLE = 4
EXIT_BLOWUP = 5
EXIT_COMPATIBILITY = 6
EXIT_VERIFY_FAILED = 7

STATUS_EXIT = {
    "completed": EXIT_OK,
    "positivity_lost": EXIT_POSITIVITY,
    "map_noninvertible": EXIT_NONINVERTIBLE,
    "blowup": EXIT_BLOWUP,
}


class ConfigError(Exception):
    """A configuration file failed validation; message names the field."""


# ---------------------------------------------------------------------------
# JSON configuration parsing
# ---------------------------------------------------------------------------

_GRID_KEYS = {"nx", "ny", "nz"}
_PARAM_KEYS = {"mu", "mu_prime", "xi_bar", "M1", "M2", "pressure"}
_PRESSURE_KEYS = {"law", "c", "alpha"}
_TOLERANCE_KEYS = {"fp_tol", "inv_tol", "det_floor", "lin_tol", "mean_tol"}
_RUN_KEYS = {
    "schema_version", "mode", "grid", "params", "dt", "t_end",
    "output_every", "preset", "amplitude", "perturbation_mode", "seed",
    "tolerances", "output_dir",
}
_RESOLVENT_KEYS = {
    "schema_version", "grid", "params", "lam", "rhs", "seed", "output_dir",
}


def _key_line(text: str, key: str) -> str:
    """Best-effort source location of a key in the raw JSON text."""
    idx = text.find(f'"{key}"')
    if idx < 0:
        return ""
    return f" (line {text.count(chr(10), 0, idx) + 1})"


def _require(obj: dict, key: str, text: str):
    if key not in obj:
        raise ConfigError(f"missing required key '{key}'")
    return obj[key]


def _check_unknown(obj: dict, allowed: set, text: str, where: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(
                f"unknown key '{key}' in {where}{_key_line(text, key)}")


def _as_number(value, key: str, text: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(
            f"'{key}' must be a number, got {value!r}{_key_line(text, key)}")
    return float(value)


def _as_int(value, key: str, text: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(
            f"'{key}' must be an integer, got {value!r}{_key_line(text, key)}")
    return value


def _load_json(path: str) -> tuple[dict, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON in {path!r}: {exc.msg} (line {exc.lineno}, "
            f"column {exc.colno})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config root in {path!r} must be a JSON object")
    return obj, text


def _check_schema_version(obj: dict, text: str) -> None:
    version = _require(obj, "schema_version", text)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version!r}; this build reads "
            f"version {SCHEMA_VERSION}{_key_line(text, 'schema_version')}")


def _parse_grid(obj: dict, text: str) -> tuple[int, int, int]:
    grid = _require(obj, "grid", text)
    if not isinstance(grid, dict):
        raise ConfigError(f"'grid' must be an object{_key_line(text, 'grid')}")
    _check_unknown(grid, _GRID_KEYS, text, "'grid'")
    return tuple(_as_int(_require(grid, k, text), k, text)
                 for k in ("nx", "ny", "nz"))


def _parse_params(obj: dict, text: str, model: str) -> PhysicalParams:
    raw = _require(obj, "params", text)
    if not isinstance(raw, dict):
        raise ConfigError(
            f"'params' must be an object{_key_line(text, 'params')}")
    _check_unknown(raw, _PARAM_KEYS, text, "'params'")
    kwargs = {
        "mu": _as_number(_require(raw, "mu", text), "mu", text),
        "mu_prime": _as_number(_require(raw, "mu_prime", text),
                               "mu_prime", text),
        "model": model,
    }
    for key in ("xi_bar", "M1", "M2"):
        if key in raw:
            kwargs[key] = _as_number(raw[key], key, text)
    if "pressure" in raw:
        if model != "GeneralNoGravity":
            raise ConfigError(
                "'pressure' is only meaningful for the GeneralNoGravity "
                f"mode{_key_line(text, 'pressure')}")
        pres = raw["pressure"]
        if not isinstance(pres, dict):
            raise ConfigError(
                f"'pressure' must be an object{_key_line(text, 'pressure')}")
        _check_unknown(pres, _PRESSURE_KEYS, text, "'pressure'")
        law = _require(pres, "law", text)
        law_kwargs = {k: _as_number(pres[k], k, text)
                      for k in ("c", "alpha") if k in pres}
        try:
            kwargs.update(make_pressure_law(law, **law_kwargs))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid pressure law: {exc}"
                              f"{_key_line(text, 'law')}") from exc
    elif model == "GeneralNoGravity":
        kwargs.update(make_pressure_law("linear", c=1.0))
    try:
        return PhysicalParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid params: {exc}") from exc


def parse_run_config(path: str, require_time: bool = True) -> evolve.RunConfig:
    """Parse and validate a simulate/spectrum configuration file.

    Every violation raises :class:`ConfigError` naming the offending field
    and, when it can be located in the raw text, its line number.  With
    ``require_time=False`` the time-stepping keys become optional (the
    spectrum subcommand only uses the grid and the parameters).
    """
    obj, text = _load_json(path)
    _check_unknown(obj, _RUN_KEYS, text, "run config")
    _check_schema_version(obj, text)
    mode = _require(obj, "mode", text)
    if mode not in evolve.MODE_MODEL:
        raise ConfigError(
            f"unknown mode {mode!r}; expected one of "
            f"{sorted(evolve.MODE_MODEL)}{_key_line(text, 'mode')}")
    nx, ny, nz = _parse_grid(obj, text)
    try:
        make_grid(nx, ny, nz)
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc
    params = _parse_params(obj, text, evolve.MODE_MODEL[mode])

    if require_time or "dt" in obj:
        dt = _as_number(_require(obj, "dt", text), "dt", text)
    else:
        dt = 1.0
    if require_time or "t_end" in obj:
        t_end = _as_number(_require(obj, "t_end", text), "t_end", text)
    else:
        t_end = dt

    kwargs = {}
    if "output_every" in obj:
        kwargs["output_every"] = _as_int(obj["output_every"],
                                         "output_every", text)
    if "preset" in obj:
        preset = obj["preset"]
        if preset not in ("steady", "fourier_perturbation", "random_smooth"):
            raise ConfigError(
                f"unknown preset {preset!r}{_key_line(text, 'preset')}")
        kwargs["preset"] = preset
    if "amplitude" in obj:
        kwargs["amplitude"] = _as_number(obj["amplitude"], "amplitude", text)
    if "perturbation_mode" in obj:
        pm = obj["perturbation_mode"]
        if (not isinstance(pm, list) or len(pm) != 2
                or not all(isinstance(k, int) and not isinstance(k, bool)
                           for k in pm)):
            raise ConfigError(
                "'perturbation_mode' must be a pair of integers"
                f"{_key_line(text, 'perturbation_mode')}")
        kwargs["perturbation_mode"] = (pm[0], pm[1])
    if "seed" in obj:
        kwargs["seed"] = _as_int(obj["seed"], "seed", text)
    if "tolerances" in obj:
        tol = obj["tolerances"]
        if not isinstance(tol, dict):
            raise ConfigError(
                f"'tolerances' must be an object{_key_line(text, 'tolerances')}")
        _check_unknown(tol, _TOLERANCE_KEYS, text, "'tolerances'")
        for key, value in tol.items():
            kwargs[key] = _as_number(value, key, text)
    if "output_dir" in obj:
        if not isinstance(obj["output_dir"], str):
            raise ConfigError(
                f"'output_dir' must be a string{_key_line(text, 'output_dir')}")
        kwargs["output_dir"] = obj["output_dir"]

    try:
        return evolve.RunConfig(mode=mode, nx=nx, ny=ny, nz=nz, params=params,
                                dt=dt, t_end=t_end, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_resolvent_problem(path: str):
    """Parse a resolvent problem file.

    Returns ``(lam, rhs_kind, seed, grid, params, output_dir)`` where
    ``rhs_kind`` is one of ``manufactured``, ``random``, ``zero``.
    """
    obj, text = _load_json(path)
    _check_unknown(obj, _RESOLVENT_KEYS, text, "resolvent problem")
    _check_schema_version(obj, text)
    nx, ny, nz = _parse_grid(obj, text)
    params = _parse_params(obj, text, "Gamma1")
    raw_lam = _require(obj, "lam", text)
    if isinstance(raw_lam, list) and len(raw_lam) == 2:
        lam = complex(_as_number(raw_lam[0], "lam", text),
                      _as_number(raw_lam[1], "lam", text))
    elif isinstance(raw_lam, (int, float)) and not isinstance(raw_lam, bool):
        lam = complex(raw_lam)
    else:
        raise ConfigError(
            "'lam' must be a number or a [real, imag] pair"
            f"{_key_line(text, 'lam')}")
    if lam.real < 0:
        raise ConfigError(
            f"'lam' must satisfy Re lambda >= 0, got {lam}"
            f"{_key_line(text, 'lam')}")
    rhs = obj.get("rhs", "manufactured")
    if rhs not in ("manufactured", "random", "zero"):
        raise ConfigError(
            f"unknown rhs preset {rhs!r}; expected manufactured, random or "
            f"zero{_key_line(text, 'rhs')}")
    seed = _as_int(obj.get("seed", 0), "seed", text)
    output_dir = obj.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ConfigError(
            f"'output_dir' must be a string{_key_line(text, 'output_dir')}")
    try:
        g = make_grid(nx, ny, nz)
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc
    return lam, rhs, seed, g, params, output_dir


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _resolve_output_dir(flag_value, config_value) -> str:
    out = flag_value or os.environ.get(OUTPUT_DIR_ENV) or config_value or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_summary(out_dir: str, payload: dict) -> str:
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    cfg = parse_run_config(args.config)
    out_dir = _resolve_output_dir(args.output_dir, cfg.output_dir)
    result = evolve.run_simulation(cfg)
    csv_path = os.path.join(out_dir, "diagnostics.csv")
    diagnostics.write_diagnostics_csv(result.rows, csv_path)

    rows = np.asarray(result.rows)
    final = dict(zip(diagnostics.COLUMNS, (float(v) for v in rows[-1])))
    decay = None
    if cfg.preset != "steady" and rows.shape[0] >= 12:
        t = rows[:, 0]
        v_l2 = rows[:, diagnostics.COLUMNS.index("v_l2")]
        try:
            fit = diagnostics.fit_decay_rate(t, v_l2)
            decay = {"eta": fit.eta, "r_squared": fit.r_squared,
                     "n_tail": fit.n_tail, "t_start": fit.t_start}
        except ValueError:
            decay = None
    payload = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": "simulate",
        "mode": cfg.mode,
        "grid": [cfg.nx, cfg.ny, cfg.nz],
        "preset": cfg.preset,
        "seed": cfg.seed,
        "dt": cfg.dt,
        "status": result.status,
        "exit_code": STATUS_EXIT[result.status],
        "message": result.message,
        "t_final": result.t_final,
        "n_steps": result.n_steps,
        "rows_written": int(rows.shape[0]),
        "final": final,
        "decay_fit": decay,
        "diagnostics_csv": os.path.basename(csv_path),
    }
    _write_summary(out_dir, payload)
    print(f"status={result.status} t_final={result.t_final:.6g} "
          f"steps={result.n_steps} -> {csv_path}")
    if result.message:
        print(result.message)
    return STATUS_EXIT[result.status]


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------

def _cmd_spectrum(args) -> int:
    # Parse leniently: an inadmissible viscosity pair must be *reported*
    # (ok = false with an explanation), not rejected at parse time.
    obj, text = _load_json(args.config)
    _check_unknown(obj, _RUN_KEYS, text, "run config")
    _check_schema_version(obj, text)
    mode = _require(obj, "mode", text)
    if mode not in evolve.MODE_MODEL:
        raise ConfigError(
            f"unknown mode {mode!r}; expected one of "
            f"{sorted(evolve.MODE_MODEL)}{_key_line(text, 'mode')}")
    nx, ny, nz = _parse_grid(obj, text)
    try:
        g = make_grid(nx, ny, nz)
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc
    raw = _require(obj, "params", text)
    if not isinstance(raw, dict):
        raise ConfigError(
            f"'params' must be an object{_key_line(text, 'params')}")
    _check_unknown(raw, _PARAM_KEYS, text, "'params'")
    mu = _as_number(_require(raw, "mu", text), "mu", text)
    mu_prime = _as_number(_require(raw, "mu_prime", text), "mu_prime", text)
    xi_bar = _as_number(raw.get("xi_bar", 1.0), "xi_bar", text)
    cfg_out = obj.get("output_dir")
    if cfg_out is not None and not isinstance(cfg_out, str):
        raise ConfigError(
            f"'output_dir' must be a string{_key_line(text, 'output_dir')}")
    out_dir = _resolve_output_dir(args.output_dir, cfg_out)
    report = operators.symbol_ellipticity_report(mu, mu_prime, kmax=8)

    rows = []
    for k1 in range(-8, 9):
        for k2 in range(-8, 9):
            if k1 == 0 and k2 == 0:
                continue
            eigs = operators.lame_symbol_eigs((k1, k2), mu, mu_prime)
            rows.append((k1, k2, eigs.lam1, eigs.lam2))
    csv_path = os.path.join(out_dir, "symbol_eigs.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("k1,k2,lam1,lam2\n")
        for k1, k2, l1, l2 in rows:
            fh.write(f"{k1},{k2},{l1:.17g},{l2:.17g}\n")

    min_symbol_eig = min(report.min_lam1, report.min_lam2)
    eta0 = None
    explanation = None
    if report.ok:
        params = _parse_params(obj, text, evolve.MODE_MODEL[mode])
        eta0 = stokes_solver.spectral_bound(g, params, xi_bar=xi_bar)
    else:
        explanation = (
            f"symbol not parameter-elliptic: min eigenvalue "
            f"{min_symbol_eig:.6g} <= 0 at k_H = {report.argmin_k} "
            f"(requires mu > 0 and mu + mu_prime > 0)")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": "spectrum",
        "grid": [nx, ny, nz],
        "mu": mu,
        "mu_prime": mu_prime,
        "xi_bar": xi_bar,
        "ok": bool(report.ok),
        "eta0": eta0,
        "min_symbol_eig": min_symbol_eig,
        "b1_min": report.b1_min,
        "explanation": explanation,
        "symbol_csv": os.path.basename(csv_path),
    }
    path = _write_summary(out_dir, payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    print(f"-> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# resolvent
# ---------------------------------------------------------------------------

def _cmd_resolvent(args) -> int:
    lam, rhs_kind, seed, g, params, cfg_out = parse_resolvent_problem(
        args.problem)
    out_dir = _resolve_output_dir(args.output_dir, cfg_out)
    xi_bar = params.xi_bar

    truth_error = None
    if rhs_kind == "manufactured":
        problem, zeta_true, V_true = stokes_solver.manufactured_resolvent_problem(
            lam, g, params, xi_bar=xi_bar)
    elif rhs_kind == "random":
        from .grid import dealias
        rng = np.random.default_rng(seed)
        f1 = dealias(rng.standard_normal((g.nx, g.ny)), g)
        f2 = dealias(rng.standard_normal((g.nx, g.ny, g.nz, 2)), g)
        f2[:, :, -1, :] = 0.0
        f2[:, :, 0, :] = 0.0
        problem = stokes_solver.ResolventProblem(lam, f1, f2, xi_bar=xi_bar)
    else:
        f1 = np.zeros((g.nx, g.ny))
        f2 = np.zeros((g.nx, g.ny, g.nz, 2))
        problem = stokes_solver.ResolventProblem(lam, f1, f2, xi_bar=xi_bar)

    try:
        zeta, V = stokes_solver.solve_resolvent(problem, g, params)
    except ValueError as exc:
        if "compatibility" in str(exc):
            print(str(exc), file=sys.stderr)
            return EXIT_COMPATIBILITY
        raise

    if rhs_kind == "manufactured":
        scale = max(np.sqrt(l2_norm(zeta_true, g) ** 2
                            + l2_norm(V_true, g) ** 2), 1e-300)
        truth_error = float(np.sqrt(l2_norm(zeta - zeta_true, g) ** 2
                                    + l2_norm(V - V_true, g) ** 2) / scale)

    residual = stokes_solver.resolvent_residual(
        lam, zeta, V, problem.f1, problem.f2, xi_bar, g, params)
    np.save(os.path.join(out_dir, "zeta.npy"),
            zeta.real if np.isrealobj(problem.f1) and lam.imag == 0 else zeta)
    np.save(os.path.join(out_dir, "V.npy"),
            V.real if np.isrealobj(problem.f2) and lam.imag == 0 else V)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": "resolvent",
        "grid": [g.nx, g.ny, g.nz],
        "lam": [lam.real, lam.imag],
        "rhs": rhs_kind,
        "seed": seed,
        "xi_bar": xi_bar,
        "residual": residual,
        "truth_error": truth_error,
        "zeta_l2": l2_norm(zeta, g),
        "v_l2": l2_norm(V, g),
        "fields": ["zeta.npy", "V.npy"],
    }
    path = _write_summary(out_dir, payload)
    print(f"residual={residual:.3e} zeta_l2={payload['zeta_l2']:.6g} "
          f"v_l2={payload['v_l2']:.6g} -> {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _verify_symbol(tol_scale: float):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(2):
        mu = float(rng.uniform(0.2, 3.0))
        mu_prime = float(rng.uniform(-0.5 * mu, 3.0))
        for k1 in range(-4, 5):
            for k2 in range(-4, 5):
                if k1 == 0 and k2 == 0:
                    continue
                eigs = operators.lame_symbol_eigs((k1, k2), mu, mu_prime)
                kt = 2.0 * np.pi * np.array([k1, k2], dtype=float)
                M = mu * np.dot(kt, kt) * np.eye(2) + mu_prime * np.outer(kt, kt)
                dense = np.sort(np.linalg.eigvalsh(M))
                mine = np.sort([eigs.lam1, eigs.lam2])
                worst = max(worst, float(np.max(np.abs(mine - dense)
                                                / np.abs(dense))))
                if min(mine) <= 0:
                    return False, "nonpositive symbol eigenvalue"
    ok = worst <= 1e-12 * tol_scale
    return ok, f"max rel err {worst:.2e}"


def _verify_operator_oracle(tol_scale: float):
    g = make_grid(4, 4, 5)
    params = PhysicalParams(mu=1.0, mu_prime=0.8)
    xi0 = 1.0 + 0.2 * np.cos(2 * np.pi * g.x)[:, None] * np.sin(
        2 * np.pi * g.y)[None, :]
    A = operators.dense_hydrostatic_lame(xi0, g, params)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(3):
        V = rng.standard_normal((4, 4, 5, 2))
        ref = (A @ V.reshape(-1)).reshape(V.shape)
        out = operators.apply_hydrostatic_lame(V, xi0, g, params)
        worst = max(worst, float(np.max(np.abs(out - ref))
                                 / np.max(np.abs(ref))))
    B = operators.dense_chs(1.0, g, params)
    for _ in range(3):
        zeta = rng.standard_normal((4, 4))
        V = rng.standard_normal((4, 4, 5, 2))
        ref = B @ stokes_solver.pack_state(zeta, V)
        rz, rV = stokes_solver.unpack_state(ref, g)
        z2, V2 = operators.apply_chs(zeta, V, 1.0, g, params)
        err = max(float(np.max(np.abs(z2 - rz))),
                  float(np.max(np.abs(V2 - rV)))) / max(
                      float(np.max(np.abs(ref))), 1e-300)
        worst = max(worst, err)
    ok = worst <= 1e-10 * tol_scale
    return ok, f"max rel err {worst:.2e}"


def _verify_spectrum(tol_scale: float):
    g = make_grid(6, 6, 7)
    params = PhysicalParams(mu=1.0, mu_prime=1.0)
    eta0 = stokes_solver.spectral_bound(g, params)
    if not eta0 > 0:
        return False, f"spectral bound {eta0:.3e} not positive"
    A = operators.dense_chs(1.0, g, params, bc="replace")
    null = np.zeros(A.shape[0])
    null[:36] = 1.0
    res = float(np.max(np.abs(A @ null)))
    ok = res <= 1e-12 * tol_scale
    return ok, f"eta0 {eta0:.4f}, null-vector residual {res:.2e}"


def _verify_resolvent(tol_scale: float):
    g = make_grid(8, 8, 7)
    params = PhysicalParams(mu=1.0, mu_prime=0.5)
    worst = 0.0
    for lam in (0.0, 1j):
        problem, _, _ = stokes_solver.manufactured_resolvent_problem(
            lam, g, params)
        zeta, V = stokes_solver.solve_resolvent(problem, g, params)
        worst = max(worst, stokes_solver.resolvent_residual(
            lam, zeta, V, problem.f1, problem.f2, 1.0, g, params))
    ok = worst <= 1e-8 * tol_scale
    return ok, f"max residual {worst:.2e}"


def _verify_compatibility(tol_scale: float):
    g = make_grid(6, 6, 5)
    params = PhysicalParams(mu=1.0, mu_prime=0.5)
    f1 = np.full((6, 6), 0.3)
    f2 = np.zeros((6, 6, 5, 2))
    try:
        stokes_solver.solve_resolvent(
            stokes_solver.ResolventProblem(0.0, f1, f2), g, params)
    except ValueError as exc:
        if "compatibility" in str(exc):
            return True, "nonzero-mean f1 rejected at lambda = 0"
        return False, f"wrong error: {exc}"
    return False, "nonzero-mean f1 accepted at lambda = 0"


def _verify_steady_decomposed(tol_scale: float):
    g = make_grid(8, 8, 7)
    params = PhysicalParams(mu=1.0, mu_prime=0.5)
    problem, _, _ = stokes_solver.manufactured_resolvent_problem(
        0.0, g, params)
    z_mono, V_mono = stokes_solver.solve_resolvent(problem, g, params)
    z_dec, V_dec = stokes_solver.solve_steady_decomposed(
        problem.f1, problem.f2, g, params)
    err = np.sqrt(l2_norm(z_dec - z_mono, g) ** 2
                  + l2_norm(V_dec - V_mono, g) ** 2)
    scale = max(np.sqrt(l2_norm(z_mono, g) ** 2
                        + l2_norm(V_mono, g) ** 2), 1e-300)
    rel = float(err / scale)
    ok = rel <= 1e-7 * tol_scale
    return ok, f"decomposed vs monolithic rel err {rel:.2e}"


def _verify_oracle(tol_scale: float, mutation):
    template = reference.build_oracle_template("LocalGamma1",
                                               mu=1.0, mu_prime=0.5)
    g = make_grid(24, 24, 17)
    params = PhysicalParams(mu=1.0, mu_prime=0.5, model="Gamma1")
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(2):
        coeffs = reference.sample_coefficients(rng, "LocalGamma1")
        truth = template.evaluate(coeffs, g)
        state = evolve.LagrangianState(
            mode="LocalGamma1", zeta=truth.zeta, V=truth.V, fm=truth.fm,
            t=0.0, zeta0=truth.zeta0, dtV=truth.dtV)
        F1 = evolve.nonlinearity_F1(state, g, params, dealias=False)
        F2 = evolve.nonlinearity_F2(state, truth.dtV, g, params,
                                    dealias=False, mutation=mutation)
        e1 = l2_norm(F1 - truth.F1, g) / max(l2_norm(truth.F1, g), 1e-300)
        e2 = l2_norm(F2 - truth.F2, g) / max(l2_norm(truth.F2, g), 1e-300)
        worst = max(worst, float(e1), float(e2))
    ok = worst <= 1e-6 * tol_scale
    return ok, f"max rel err vs chain-rule oracle {worst:.2e}"


def _verify_flowmap(tol_scale: float):
    g = make_grid(16, 16, 5)
    x = g.x[:, None]
    y = g.y[None, :]
    vbar = 0.05 * np.stack(
        [np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y),
         np.cos(2 * np.pi * x) * np.ones_like(x + y)], axis=-1)
    fm = flowmap.identity_map(g)
    for _ in range(4):
        fm = flowmap.advance_flow(fm, vbar, g, 0.05)
    Xpos = flowmap.positions(fm, g)
    ident = np.stack(np.meshgrid(g.x, g.y, indexing="ij"), axis=-1)
    dY = flowmap.invert_map(fm, g, inv_tol=1e-13) - ident
    comp = Xpos + flowmap.evaluate_at_points(dY, Xpos, g)
    round_err = float(np.max(np.abs(comp - ident)))
    dist = np.abs(fm.gradX - np.eye(2)).sum(axis=-1).max(axis=-1)
    zdist = np.abs(fm.Z - np.eye(2)).sum(axis=-1).max(axis=-1)
    neumann_ok = bool(np.all(zdist <= 2.0 * dist + 1e-14))
    ok = round_err <= 1e-10 * tol_scale and neumann_ok
    return ok, f"roundtrip {round_err:.2e}, Neumann bound holds: {neumann_ok}"


def _verify_fixed_point(tol_scale: float):
    params = PhysicalParams(mu=1.0, mu_prime=1.0, model="Gamma1", xi_bar=1.0)
    cfg = evolve.RunConfig(mode="GlobalGamma1", nx=8, ny=8, nz=7,
                           params=params, dt=1e-3, t_end=0.02,
                           preset="steady")
    result = evolve.run_simulation(cfg)
    rows = np.asarray(result.rows)
    sup = float(np.max(np.abs(rows[:, [4, 5]])))
    ok = result.status == "completed" and sup <= 1e-13 * tol_scale
    return ok, f"max perturbation norm over run {sup:.2e}"


def _verify_mass(tol_scale: float):
    params = PhysicalParams(mu=1.0, mu_prime=1.0, model="Gamma1",
                            M1=0.5, M2=2.0)
    cfg = evolve.RunConfig(mode="LocalGamma1", nx=12, ny=12, nz=7,
                           params=params, dt=1e-3, t_end=0.02,
                           preset="random_smooth", amplitude=0.1, seed=1)
    result = evolve.run_simulation(cfg)
    rows = np.asarray(result.rows)
    drift = float(np.max(np.abs(rows[:, 1] - rows[0, 1]))
                  / np.abs(rows[0, 1]))
    ok = result.status == "completed" and drift <= 1e-6 * tol_scale
    return ok, f"relative mass drift {drift:.2e}"


def _verify_determinism(tol_scale: float):
    import tempfile
    params = PhysicalParams(mu=1.0, mu_prime=1.0, model="Gamma1",
                            M1=0.5, M2=2.0)
    cfg = evolve.RunConfig(mode="LocalGamma1", nx=8, ny=8, nz=5,
                           params=params, dt=1e-3, t_end=5e-3,
                           preset="random_smooth", amplitude=0.1, seed=4)
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for i in range(2):
            result = evolve.run_simulation(cfg)
            path = os.path.join(tmp, f"d{i}.csv")
            diagnostics.write_diagnostics_csv(result.rows, path)
            with open(path, "rb") as fh:
                blobs.append(fh.read())
    ok = blobs[0] == blobs[1]
    return ok, "bitwise-identical CSV" if ok else "CSV outputs differ"


VERIFY_CHECKS = (
    ("symbol eigenvalues match dense 2x2 eigensolves", _verify_symbol),
    ("matrix-free operators match dense assemblies", _verify_operator_oracle),
    ("mean-free spectrum stable; exact null vector", _verify_spectrum),
    ("manufactured resolvent residuals", _verify_resolvent),
    ("steady compatibility rejection", _verify_compatibility),
    ("decomposed steady solve matches monolithic", _verify_steady_decomposed),
    ("nonlinearities match chain-rule oracle", _verify_oracle),
    ("flow-map roundtrip and Neumann bound", _verify_flowmap),
    ("global steady state is an exact fixed point", _verify_fixed_point),
    ("mass conservation on a short run", _verify_mass),
    ("determinism of diagnostics output", _verify_determinism),
)


def _cmd_verify(args) -> int:
    tol_scale = args.tol_scale
    if tol_scale < 1.0:
        print("config error: --tol-scale must be >= 1 (tolerances only relax)",
              file=sys.stderr)
        return EXIT_CONFIG
    if args.mutation is not None and args.mutation not in evolve.F2_MUTATIONS:
        print(f"config error: unknown mutation {args.mutation!r}; expected "
              f"one of {sorted(evolve.F2_MUTATIONS)}", file=sys.stderr)
        return EXIT_CONFIG
    all_ok = True
    width = max(len(name) for name, _ in VERIFY_CHECKS)
    for name, fn in VERIFY_CHECKS:
        if fn is _verify_oracle:
            ok, detail = fn(tol_scale, args.mutation)
        else:
            ok, detail = fn(tol_scale)
        all_ok = all_ok and ok
        tag = "PASS" if ok else "FAIL"
        print(f"[{tag}] {name:<{width}}  {detail}")
    print("verification " + ("passed" if all_ok else "FAILED"))
    return EXIT_OK if all_ok else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpelab",
        description=("Simulator and operator laboratory for the compressible "
                     "primitive equations on the periodic cylinder."))
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_sim = sub.add_parser("simulate", help="run a time integration")
    p_sim.add_argument("config", help="JSON run configuration")
    p_sim.add_argument("--output-dir", default=None,
                       help=f"output directory (overrides {OUTPUT_DIR_ENV} "
                            "and the config)")
    p_sim.set_defaults(fn=_cmd_simulate)

    p_spec = sub.add_parser("spectrum",
                            help="symbol ellipticity report and spectral bound")
    p_spec.add_argument("config", help="JSON run configuration "
                                       "(time-stepping keys optional)")
    p_spec.add_argument("--output-dir", default=None)
    p_spec.set_defaults(fn=_cmd_spectrum)

    p_res = sub.add_parser("resolvent", help="solve one resolvent problem")
    p_res.add_argument("problem", help="JSON problem file")
    p_res.add_argument("--output-dir", default=None)
    p_res.set_defaults(fn=_cmd_resolvent)

    p_ver = sub.add_parser("verify",
                           help="run the curated correctness battery")
    p_ver.add_argument("--mutation", default=None,
                       help="inject a named defect into the explicit "
                            "nonlinearity before running the oracle check "
                            "(the check must then fail)")
    p_ver.add_argument("--tol-scale", type=float, default=1.0,
                       help="relax all check tolerances by this factor (>= 1)")
    p_ver.set_defaults(fn=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
