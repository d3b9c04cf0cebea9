"""Command-line front end: constants, verify, kernels and solve runs.

Configuration is plain text, one ``key = value`` per line with dotted
section prefixes (``grid.Nx = 16``).  Outputs embed the config hash;
mismatched resumes are refused.  Exit codes: 0 ok, 2 config error,
3 certificate failure, 4 non-convergence.
"""

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .collision_maps import (sample_binary_frames, sample_ternary_frames,
                             binary_conservation_residuals,
                             ternary_conservation_residuals)
from .cross_sections import (KernelConfig, B2_PRESETS, B3_PRESETS,
                             AngularTable1D)
from .estimates import (verify_convolution, time_lemma_bound,
                        verify_time_average, wellposedness_constants)
from .ks_solver import (BeginningConditionFailure, SmallnessViolation,
                        ks_solve, write_checkpoint, read_checkpoint)
from .operators import QuadratureSpec
from .phase_space import Maxwellian, PhaseDensity, PhaseGrid, Tolerances

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFICATE = 3
EXIT_NO_CONVERGENCE = 4

_DEFAULTS = {
    "dim": 2,
    "alpha": 1.0,
    "beta": 1.0,
    "seed": 0,
    "workers": 0,
    "kernel.gamma2": 1.0,
    "kernel.gamma3": 1.0,
    "kernel.b2": "hard_sphere_binary",
    "kernel.b3": "derived_ternary",
    "grid.Rx": None,
    "grid.Rv": None,
    "grid.Nx": 16,
    "grid.Nv": 16,
    "grid.Nt": 64,
    "grid.T": 4.0,
    "quad.backend": "deterministic",
    "quad.n_ang": 16,
    "quad.n_vel": 12,
    "quad.n_mc": 16384,
    "quad.mc_omega": 8,
    "quad.resolve_omega_loss": False,
    "init.preset": "scaled_maxwellian",
    "init.factor": 0.5,
    "init.csv": "",
    "stop.n_max": 50,
    "stop.eps_gap": 1e-6,
    "solver.op_stride": 4,
    "tol.interp": 1e-6,
    "tol.envelope_truncation": 1e-8,
    "tol.mono": 1e-8,
    "output.dir": "out",
    "verify.n_points": 64,
    "verify.n_v_samples": 200,
}

_TYPES = {
    "dim": int, "seed": int, "workers": int,
    "grid.Nx": int, "grid.Nv": int, "grid.Nt": int,
    "quad.n_ang": int, "quad.n_vel": int, "quad.n_mc": int,
    "quad.mc_omega": int, "stop.n_max": int, "solver.op_stride": int,
    "verify.n_points": int, "verify.n_v_samples": int,
    "quad.resolve_omega_loss": bool,
    "kernel.b2": str, "kernel.b3": str, "quad.backend": str,
    "init.preset": str, "init.csv": str, "output.dir": str,
}


class ConfigError(Exception):
    def __init__(self, problems):
        self.problems = problems
        super().__init__("; ".join(problems))


def _coerce(key, raw):
    typ = _TYPES.get(key, float)
    if typ is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if typ is str:
        return raw
    return typ(raw)


def parse_config(path):
    """Parse and fully validate a run configuration.

    All violations are collected and reported together, not just the first.
    """
    problems = []
    values = dict(_DEFAULTS)
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"])
    for lineno, line in enumerate(lines, 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _DEFAULTS:
            problems.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}")
    cfg = _validate(values, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


@dataclass
class RunConfig:
    values: dict
    kernel: KernelConfig
    grid: PhaseGrid
    quad: QuadratureSpec
    envelope: Maxwellian
    tol: Tolerances
    config_hash: str

    def __getitem__(self, key):
        return self.values[key]


def _load_b2_csv(path):
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    return AngularTable1D.from_table(rows[:, 0], rows[:, 1],
                                     name=os.path.basename(path))


def _validate(values, problems):
    d = values["dim"]
    if d < 2 or d > 3:
        problems.append("dim must be 2 or 3")
    alpha, beta = values["alpha"], values["beta"]
    if alpha <= 0 or beta <= 0:
        problems.append("alpha and beta must be positive")
    tol = Tolerances(values["tol.interp"], values["tol.envelope_truncation"],
                     values["tol.mono"])
    # kernel
    b2 = b3 = None
    name2 = values["kernel.b2"]
    if name2 in B2_PRESETS:
        b2 = B2_PRESETS[name2]() if name2 != "maxwell" else B2_PRESETS[name2](d)
    elif name2:
        if os.path.exists(name2):
            try:
                b2 = _load_b2_csv(name2)
            except Exception as exc:
                problems.append(f"kernel.b2: cannot load table: {exc}")
        else:
            problems.append(f"kernel.b2: unknown preset or missing file {name2!r}")
    name3 = values["kernel.b3"]
    if name3 in B3_PRESETS:
        b3 = B3_PRESETS[name3]()
    elif name3:
        problems.append(f"kernel.b3: unknown preset {name3!r} "
                        "(tabulated ternary densities are not supported)")
    kernel = None
    if alpha > 0 and beta > 0 and 2 <= d <= 3:
        try:
            kernel = KernelConfig(d=d, gamma2=values["kernel.gamma2"],
                                  gamma3=values["kernel.gamma3"], b2=b2, b3=b3)
        except ValueError as exc:
            problems.append(f"kernel: {exc}")
    # grid; truncation radii default to the envelope tolerance
    Rx = values["grid.Rx"]
    Rv = values["grid.Rv"]
    if Rx is None:
        Rx = float(np.sqrt(np.log(1.0 / tol.envelope_truncation) / alpha)) if alpha > 0 else 1.0
        values["grid.Rx"] = Rx
    if Rv is None:
        Rv = float(np.sqrt(np.log(1.0 / tol.envelope_truncation) / beta)) if beta > 0 else 1.0
        values["grid.Rv"] = Rv
    grid = quad = None
    try:
        grid = PhaseGrid(d, Rx, Rv, values["grid.Nx"], values["grid.Nv"],
                         values["grid.Nt"], values["grid.T"])
    except ValueError as exc:
        problems.append(f"grid: {exc}")
    try:
        quad = QuadratureSpec(backend=values["quad.backend"],
                              n_ang=values["quad.n_ang"],
                              n_vel=values["quad.n_vel"],
                              n_mc=values["quad.n_mc"],
                              seed=values["seed"],
                              mc_omega=values["quad.mc_omega"],
                              resolve_omega_loss=values["quad.resolve_omega_loss"])
        if grid is not None:
            quad.check_dim(d)
    except ValueError as exc:
        problems.append(f"quad: {exc}")
    if values["init.preset"] not in ("scaled_maxwellian", "tabulated"):
        problems.append(f"init.preset: unknown preset {values['init.preset']!r}")
    if values["init.preset"] == "scaled_maxwellian":
        if not (0.0 <= values["init.factor"] < 1.0):
            problems.append("init.factor must lie in [0, 1)")
    if values["init.preset"] == "tabulated" and not values["init.csv"]:
        problems.append("init.preset tabulated requires init.csv")
    if problems:
        return None
    canon = "\n".join(f"{k} = {values[k]}" for k in sorted(values))
    config_hash = hashlib.sha256(canon.encode()).hexdigest()[:16]
    return RunConfig(values, kernel, grid, quad, Maxwellian(alpha, beta), tol,
                     config_hash)


def _initial_data(cfg: RunConfig, constants):
    grid, env = cfg.grid, cfg.envelope
    if cfg["init.preset"] == "scaled_maxwellian":
        amp = cfg["init.factor"] * constants.smallness_threshold
        return amp * env.grid_values(grid), amp
    rows = np.loadtxt(cfg["init.csv"], delimiter=",", ndmin=2)
    d = grid.d
    if rows.shape[1] != 2 * d + 1:
        raise ConfigError([f"init.csv: expected {2*d+1} columns, got {rows.shape[1]}"])
    expected = grid.x_nodes.shape[0] * grid.v_nodes.shape[0]
    if rows.shape[0] != expected:
        raise ConfigError([f"init.csv: expected {expected} rows (full grid)"])
    f0 = np.zeros(grid.xshape + grid.vshape)
    hx, hv = grid.hx, grid.hv
    for row in rows:
        xi = np.round((row[:d] + grid.Rx) / hx).astype(int)
        vi = np.round((row[d:2 * d] + grid.Rv) / hv).astype(int)
        if np.any(xi < 0) or np.any(xi >= grid.Nx) or np.any(vi < 0) or np.any(vi >= grid.Nv):
            raise ConfigError(["init.csv: node off the configured grid"])
        f0[tuple(xi) + tuple(vi)] = row[-1]
    env_grid = env.grid_values(grid)
    bound = float(np.max(f0 / env_grid))
    if np.any(f0 < 0):
        raise ConfigError(["init.csv: negative values violate the envelope certificate"])
    return f0, bound


def _set_workers(n):
    if n and n > 0:
        import numba
        numba.set_num_threads(max(1, min(n, os.cpu_count() or 1)))


# ---------------------------------------------------------------------------
# subcommands


def cmd_constants(cfg: RunConfig, args):
    constants = wellposedness_constants(cfg["alpha"], cfg["beta"], cfg.kernel)
    payload = {
        "config_hash": cfg.config_hash,
        "d": constants.d,
        "alpha": constants.alpha,
        "beta": constants.beta,
        "gamma2": constants.gamma2,
        "gamma3": constants.gamma3,
        "b2_norm": constants.b2_norm,
        "b3_norm": constants.b3_norm,
        "C_d": constants.c_d,
        "Ktilde2": constants.ktilde2,
        "Ktilde3": constants.ktilde3,
        "K_beta": constants.k_beta,
        "lambda": constants.lambda_ab,
        "smallness_threshold": constants.smallness_threshold,
    }
    if cfg["init.preset"] == "scaled_maxwellian":
        f0_norm = cfg["init.factor"] * constants.smallness_threshold
        payload["f0_norm"] = f0_norm
        payload["C_out"] = constants.c_out(f0_norm)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_kernels(cfg: RunConfig, args):
    rng = np.random.default_rng(cfg["seed"])
    d = cfg["dim"]
    n = args.frames
    cols = (["kind"]
            + [f"v_{i}" for i in range(d)] + [f"v1_{i}" for i in range(d)]
            + [f"v2_{i}" for i in range(d)]
            + [f"omega1_{i}" for i in range(d)] + [f"omega2_{i}" for i in range(d)]
            + [f"vpost_{i}" for i in range(d)] + [f"v1post_{i}" for i in range(d)]
            + [f"v2post_{i}" for i in range(d)]
            + ["res_momentum", "res_energy", "res_specular", "res_relative_speed"])
    print(",".join(cols))
    blank = [""] * d

    def emit(kind, vecs, res, i):
        row = [kind]
        for arr in vecs:
            row += blank if arr is None else [f"{x:.17g}" for x in arr[i]]
        row += [f"{res[key][i]:.3e}" for key in res]
        print(",".join(row))

    if cfg.kernel.has_binary:
        fr = sample_binary_frames(n, d, rng)
        res = binary_conservation_residuals(fr)
        for i in range(n):
            emit("binary", (fr["v"], fr["v1"], None, fr["omega"], None,
                            fr["vp"], fr["v1p"], None), res, i)
    if cfg.kernel.has_ternary:
        fr = sample_ternary_frames(n, d, rng)
        res = ternary_conservation_residuals(fr)
        for i in range(n):
            emit("ternary", (fr["v"], fr["v1"], fr["v2"], fr["omega1"],
                             fr["omega2"], fr["vs"], fr["v1s"], fr["v2s"]), res, i)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args):
    constants = wellposedness_constants(cfg["alpha"], cfg["beta"], cfg.kernel)
    rng = np.random.default_rng(cfg["seed"])
    outdir = cfg["output.dir"]
    os.makedirs(outdir, exist_ok=True)
    rows = []
    ok = True

    n_v = cfg["verify.n_v_samples"]
    vmags = rng.uniform(0.0, 10.0, n_v)
    for beta in (0.5, 1.0, 2.0):
        for q2 in (-0.9, 0.0, 1.0):
            rep = verify_convolution(beta, q2, "binary", vmags)
            rows.append(("conv_binary", f"beta={beta},q={q2}", rep.max_ratio, rep.ok))
            ok &= rep.ok
        for q3 in (-2.9, 0.0, 1.0):
            rep = verify_convolution(beta, q3, "ternary", vmags)
            rows.append(("conv_ternary", f"beta={beta},q={q3}", rep.max_ratio, rep.ok))
            ok &= rep.ok

    val, bound = time_lemma_bound(np.zeros(2), np.array([1.0, 0.0]), 1.0)
    rows.append(("time_lemma_equality", "x0=0,|u0|=1,alpha=1", val / bound,
                 abs(val / bound - 1.0) < 1e-10))
    ok &= abs(val / bound - 1.0) < 1e-10
    worst = 0.0
    for _ in range(200):
        x0 = rng.normal(size=2) * 3
        u0 = rng.normal(size=2)
        if np.linalg.norm(u0) < 1e-6:
            continue
        a = float(rng.uniform(0.1, 5.0))
        val, bound = time_lemma_bound(x0, u0, a)
        worst = max(worst, val / bound)
    rows.append(("time_lemma_random", "200 draws", worst, worst <= 1.0 + 1e-12))
    ok &= worst <= 1.0 + 1e-12

    grid = cfg.grid
    f = PhaseDensity.from_maxwellian(grid, cfg.envelope, 1.0, tol=cfg.tol)
    reports = verify_time_average(f, f, f, cfg.kernel, constants, cfg.quad,
                                  n_points=cfg["verify.n_points"])
    for rep in reports:
        rows.append((f"time_average_{rep.op}", "f=g=h=M", rep.max_ratio, rep.ok))
        ok &= rep.ok

    csv_path = os.path.join(outdir, "certificates.csv")
    with open(csv_path, "w") as fh:
        fh.write("certificate,case,worst_ratio,pass\n")
        for name, case, ratio, passed in rows:
            fh.write(f"{name},\"{case}\",{ratio:.12g},{int(passed)}\n")
    for name, case, ratio, passed in rows:
        print(f"{'PASS' if passed else 'FAIL'}  {name:24s} {case:24s} "
              f"worst ratio {ratio:.6f}")
    print(f"wrote {csv_path}")
    return EXIT_OK if ok else EXIT_CERTIFICATE


def cmd_solve(cfg: RunConfig, args):
    constants = wellposedness_constants(cfg["alpha"], cfg["beta"], cfg.kernel)
    outdir = cfg["output.dir"]
    os.makedirs(outdir, exist_ok=True)
    f0, _ = _initial_data(cfg, constants)
    grid = cfg.grid

    resume_state = None
    if args.resume:
        ckpts = sorted(p for p in os.listdir(outdir) if p.endswith(".ksc"))
        if ckpts:
            header, lvals, uvals = read_checkpoint(
                os.path.join(outdir, ckpts[-1]), expected_hash=cfg.config_hash)
            resume_state = (header["n"], lvals, uvals)
            print(f"resuming from iterate {header['n']}")

    def writer(state):
        path = os.path.join(outdir, f"checkpoint_{state.n:04d}.ksc")
        write_checkpoint(path, state.n, grid, cfg.config_hash,
                         state.lower, state.upper)

    try:
        result = ks_solve(
            f0, cfg.envelope, cfg.kernel, cfg.quad, constants, grid,
            eps_gap=cfg["stop.eps_gap"], n_max=cfg["stop.n_max"],
            op_stride=cfg["solver.op_stride"], tol=cfg.tol,
            override_smallness=args.override_smallness,
            include_timing=args.timing, checkpoint_writer=writer,
            resume_state=resume_state)
    except SmallnessViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BeginningConditionFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE

    trace_path = os.path.join(outdir, "trace.csv")
    with open(trace_path, "w") as fh:
        fh.write("n,gap,max_mono_violation,residual_L1,wall_time_s\n")
        for row in result["trace"]:
            fh.write(f"{row.n},{row.gap:.17g},{row.max_mono_violation:.17g},"
                     f"{row.residual_l1:.17g},{row.wall_time_s:.6f}\n")
    summary = {
        "config_hash": cfg.config_hash,
        "converged": bool(result["converged"]),
        "n_iter": result["n_iter"],
        "final_gap": result["gap"],
        "C_out": result["c_out"],
        "f0_norm": result["f0_norm"],
        "smallness_threshold": constants.smallness_threshold,
        "K_beta": constants.k_beta,
        "lambda": constants.lambda_ab,
        "rho_bound": result["rho_bound"],
        "final_m_norm": result.get("final_m_norm", 0.0),
        "residual_L1": {str(k): v for k, v in result["residuals"].items()},
    }
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK if result["converged"] else EXIT_NO_CONVERGENCE


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="btboltz",
        description="Binary-ternary Boltzmann solver and verification suite")
    parser.add_argument("command", choices=["constants", "verify", "kernels", "solve"])
    parser.add_argument("--config", required=True, help="path to the run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads for the operator sweeps")
    parser.add_argument("--override-smallness", action="store_true",
                        help="attempt a solve even above the smallness threshold")
    parser.add_argument("--timing", action="store_true",
                        help="record wall times in the trace (breaks bitwise "
                             "reproducibility of trace.csv)")
    parser.add_argument("--frames", type=int, default=32,
                        help="frames to print for the kernels command")
    parser.add_argument("--resume", action="store_true",
                        help="resume a solve from the latest checkpoint")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG

    if args.seed is not None:
        cfg = _revalidate_with_seed(cfg, args.seed)
    if args.workers is not None:
        _set_workers(args.workers)

    handler = {"constants": cmd_constants, "verify": cmd_verify,
               "kernels": cmd_kernels, "solve": cmd_solve}[args.command]
    try:
        return handler(cfg, args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG


def _revalidate_with_seed(cfg: RunConfig, seed):
    values = dict(cfg.values)
    values["seed"] = seed
    problems = []
    out = _validate(values, problems)
    if problems:
        raise ConfigError(problems)
    return out


if __name__ == "__main__":
    sys.exit(main())
