"""Monotone supersolution/subsolution iteration and the linear transported step.

The linear problem df^#/dt + f^# R^#(g,g) = h^# is solved by an
integrating-factor recurrence that is exact for constant frequency,
unconditionally positive, and order-preserving: larger initial data or
source, or smaller frequency, can only increase the output.  Those three
monotonicities are exactly what propagates the bracket

    0 <= l_0 <= l_1 <= ... <= l_n <= u_n <= ... <= u_1 <= u_0

once the beginning condition holds, so the discrete iteration inherits the
sandwich structure without any extra tolerance beyond roundoff.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .operators import QuadratureSpec, r_sharp, gain_sharp
from .phase_space import Maxwellian, PhaseDensity, Tolerances, DEFAULT_TOL

__all__ = [
    "LinearProblem",
    "solve_linear",
    "comparison_check",
    "ks_init",
    "ks_step",
    "check_beginning_condition",
    "ks_solve",
    "SmallnessViolation",
    "BeginningConditionFailure",
    "MonotonicityViolation",
    "write_checkpoint",
    "read_checkpoint",
]


class SmallnessViolation(ValueError):
    pass


class BeginningConditionFailure(RuntimeError):
    pass


class MonotonicityViolation(RuntimeError):
    pass


def cumtrapz_time(field, ts):
    """Cumulative trapezoid of a (Nt, ...) field along the time axis."""
    out = np.zeros_like(field)
    dt = np.diff(ts)
    inc = 0.5 * dt.reshape((-1,) + (1,) * (field.ndim - 1)) * (field[1:] + field[:-1])
    np.cumsum(inc, axis=0, out=out[1:])
    return out


def _interp_time_subset(values_sub, sub_idx, ts):
    """Linear time interpolation of fields sampled on a time-index subset."""
    nt = ts.size
    if len(sub_idx) == nt:
        return values_sub
    out = np.empty((nt,) + values_sub.shape[1:])
    sub_ts = ts[sub_idx]
    j = 0
    for k in range(nt):
        while j < len(sub_idx) - 2 and ts[k] > sub_ts[j + 1]:
            j += 1
        t0, t1 = sub_ts[j], sub_ts[j + 1]
        lam = 0.0 if t1 == t0 else np.clip((ts[k] - t0) / (t1 - t0), 0.0, 1.0)
        out[k] = (1.0 - lam) * values_sub[j] + lam * values_sub[j + 1]
    return out


@dataclass
class LinearProblem:
    """Data of the linear transported problem.

    The frequency enters either as a density ``g`` (then R^#(g, g) is
    evaluated with ``quad``/``kernel``) or as a precomputed field
    ``r_values`` on the full time grid.  ``h_values`` is the transported
    source on the full grid (zero if None).
    """

    f0: np.ndarray
    grid: object
    envelope: Maxwellian
    g: PhaseDensity | None = None
    h_values: np.ndarray | None = None
    r_values: np.ndarray | None = None
    quad: QuadratureSpec | None = None
    kernel: object = None
    op_stride: int = 1

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=float)
        expected = self.grid.xshape + self.grid.vshape
        if self.f0.shape != expected:
            raise ValueError(f"f0 shape {self.f0.shape} != {expected}")
        if self.f0.min() < 0:
            raise ValueError("f0 must be nonnegative")
        if self.h_values is not None and np.min(self.h_values) < 0:
            raise ValueError("source must be nonnegative")
        if self.r_values is None and self.g is None:
            self.r_values = np.zeros((self.grid.Nt,) + expected)


def _op_time_indices(grid, stride):
    idx = np.arange(0, grid.Nt, max(1, stride))
    if idx[-1] != grid.Nt - 1:
        idx = np.append(idx, grid.Nt - 1)
    return idx


def _frequency_field(p: LinearProblem):
    if p.r_values is not None:
        return p.r_values
    idx = _op_time_indices(p.grid, p.op_stride)
    res = r_sharp(p.g, p.g, p.quad, p.kernel, t_indices=idx)
    return _interp_time_subset(res.values, idx, p.grid.ts)


def solve_linear(p: LinearProblem, return_values=False):
    """Integrating-factor solution of the linear transported problem.

    F_k = F_{k-1} exp(-int R) + local trapezoid of the damped source, with
    int R accumulated by trapezoid over each step.
    """
    grid = p.grid
    r = _frequency_field(p)
    h = p.h_values if p.h_values is not None else np.zeros_like(r)
    vals = np.empty_like(r)
    vals[0] = p.f0
    dt = np.diff(grid.ts) if grid.Nt > 1 else []
    for k in range(1, grid.Nt):
        efac = np.exp(-0.5 * dt[k - 1] * (r[k] + r[k - 1]))
        vals[k] = vals[k - 1] * efac + 0.5 * dt[k - 1] * (h[k - 1] * efac + h[k])
    if return_values:
        return vals
    return PhaseDensity.from_values(grid, vals, p.envelope)


def linear_residual(values, r, h, f0, grid):
    """Max over t of the L^1 defect of f + int f R - f0 - int h."""
    from .phase_space import l1_norm
    defect = values + cumtrapz_time(values * r, grid.ts) \
        - f0[None] - cumtrapz_time(h, grid.ts)
    return max(l1_norm(defect, k, grid) for k in range(grid.Nt))


def comparison_check(p1: LinearProblem, p2: LinearProblem, tol=DEFAULT_TOL.mono):
    """Order preservation of the linear solve under ordered data.

    Requires f0_1 <= f0_2, g_1 >= g_2 and h_1 <= h_2; returns True when the
    solutions are ordered within ``tol`` on envelope-normalized values.
    """
    if np.any(p1.f0 > p2.f0 + 1e-15):
        raise ValueError("precondition f0_1 <= f0_2 violated")
    h1 = p1.h_values if p1.h_values is not None else 0.0
    h2 = p2.h_values if p2.h_values is not None else 0.0
    if np.any(np.asarray(h1) > np.asarray(h2) + 1e-15):
        raise ValueError("precondition h_1 <= h_2 violated")
    r1 = _frequency_field(p1)
    r2 = _frequency_field(p2)
    if np.any(r1 < r2 - 1e-12):
        raise ValueError("precondition g_1 >= g_2 violated (frequency fields)")
    v1 = solve_linear(p1, return_values=True)
    v2 = solve_linear(p2, return_values=True)
    env = p1.envelope.grid_values(p1.grid)
    return bool(np.max((v1 - v2) / env[None]) <= tol)


# ---------------------------------------------------------------------------
# Kaniel-Shinbrot iteration


@dataclass
class TraceRow:
    n: int
    gap: float
    max_mono_violation: float
    residual_l1: float
    wall_time_s: float


@dataclass
class IterationState:
    n: int
    lower: PhaseDensity
    upper: PhaseDensity
    trace: list = field(default_factory=list)


def ks_init(f0, envelope, constants, grid, override_smallness=False,
            tol=DEFAULT_TOL):
    """Initial bracket (l_0, u_0) = (0, C_out M) for admissible data."""
    f0 = np.asarray(f0, dtype=float)
    env = envelope.grid_values(grid)
    f0_norm = float(np.max(f0 / env))
    if not constants.smallness_check(f0_norm):
        if not override_smallness:
            raise SmallnessViolation(
                f"initial data norm {f0_norm:.6e} >= smallness threshold "
                f"{constants.smallness_threshold:.6e}")
        c_out = constants.lambda_ab * 0.999  # best admissible supersolution
    else:
        c_out = constants.c_out(f0_norm)
    lower = PhaseDensity.zeros(grid, envelope, tol=tol)
    upper = PhaseDensity.from_maxwellian(grid, envelope, c_out, tol=tol)
    return lower, upper, c_out, f0_norm


@dataclass
class KSWorkspace:
    """Run-scoped operator configuration for the iteration."""

    grid: object
    envelope: Maxwellian
    kernel: object
    quad: QuadratureSpec
    f0: np.ndarray
    op_stride: int = 4
    tol: Tolerances = DEFAULT_TOL
    include_timing: bool = False

    def op_indices(self):
        return _op_time_indices(self.grid, self.op_stride)

    def frequency(self, g: PhaseDensity):
        if g.envelope_bound == 0.0:
            return np.zeros((self.grid.Nt,) + self.grid.xshape + self.grid.vshape)
        idx = self.op_indices()
        res = r_sharp(g, g, self.quad, self.kernel, t_indices=idx)
        return _interp_time_subset(res.values, idx, self.grid.ts)

    def gain(self, w: PhaseDensity):
        if w.envelope_bound == 0.0:
            return np.zeros((self.grid.Nt,) + self.grid.xshape + self.grid.vshape)
        idx = self.op_indices()
        res = gain_sharp(w, w, w, self.quad, self.kernel, t_indices=idx)
        return _interp_time_subset(res.values, idx, self.grid.ts)


def _gap(lower, upper, env):
    return float(np.max((upper.values - lower.values) / env[None]))


def _gap_values(l_vals, u_vals, env):
    return float(np.max((u_vals - l_vals) / env[None]))


def ks_step(state: IterationState, ws: KSWorkspace):
    """One monotone update of the bracket.

    l_n solves the linear problem with frequency input u_{n-1} and source
    G^#(l_{n-1}, l_{n-1}, l_{n-1}); u_n swaps the roles.  Ordering is
    asserted within the monotonicity tolerance; sub-tolerance violations
    are clamped onto the bracket and logged.
    """
    t0 = time.perf_counter()
    grid, env = ws.grid, ws.envelope.grid_values(ws.grid)
    l_prev, u_prev = state.lower, state.upper
    r_u = ws.frequency(u_prev)
    r_l = ws.frequency(l_prev)
    h_l = ws.gain(l_prev)
    h_u = ws.gain(u_prev)
    l_vals = solve_linear(LinearProblem(ws.f0, grid, ws.envelope, r_values=r_u,
                                        h_values=h_l), return_values=True)
    u_vals = solve_linear(LinearProblem(ws.f0, grid, ws.envelope, r_values=r_l,
                                        h_values=h_u), return_values=True)
    viol = max(
        float(np.max((state.lower.values - l_vals) / env[None], initial=0.0)),
        float(np.max((l_vals - u_vals) / env[None], initial=0.0)),
        float(np.max((u_vals - state.upper.values) / env[None], initial=0.0)),
    )
    viol = max(viol, 0.0)
    if viol > ws.tol.mono:
        raise MonotonicityViolation(
            f"bracket ordering violated by {viol:.3e} at iterate {state.n + 1} "
            "(quadrature too coarse or data too large)")
    l_vals = np.minimum(l_vals, u_vals)
    lower = PhaseDensity.from_values(grid, l_vals, ws.envelope, tol=ws.tol)
    upper = PhaseDensity.from_values(grid, u_vals, ws.envelope, tol=ws.tol)
    # integral-equation defect of the l-update, from cached fields
    resid = linear_residual(l_vals, r_u, h_l, ws.f0, grid)
    gap = _gap(lower, upper, env)
    dt_wall = time.perf_counter() - t0 if ws.include_timing else 0.0
    row = TraceRow(state.n + 1, gap, viol, resid, dt_wall)
    return IterationState(state.n + 1, lower, upper, state.trace + [row])


@dataclass
class BeginningConditionReport:
    ok: bool
    worst: dict

    def __str__(self):
        status = "holds" if self.ok else "FAILS"
        detail = ", ".join(f"{k}: {v:.3e}" for k, v in self.worst.items())
        return f"beginning condition {status} ({detail})"


def check_beginning_condition(l0, u0, l1, u1, tol=DEFAULT_TOL.mono):
    """Pointwise chain 0 <= l0 <= l1 <= u1 <= u0 on the whole grid."""
    env = l0.envelope.grid_values(l0.grid)[None]
    worst = {
        "0 <= l0": float(np.max(-l0.values / env)),
        "l0 <= l1": float(np.max((l0.values - l1.values) / env)),
        "l1 <= u1": float(np.max((l1.values - u1.values) / env)),
        "u1 <= u0": float(np.max((u1.values - u0.values) / env)),
    }
    return BeginningConditionReport(all(v <= tol for v in worst.values()), worst)


def mild_residual(f: PhaseDensity, ws: KSWorkspace, n_samples=8):
    """L^1 defect of the closed-loop integral equation at sampled times."""
    from .phase_space import l1_norm
    grid = f.grid
    r = ws.frequency(f)
    idx = ws.op_indices()
    gres = gain_sharp(f, f, f, ws.quad, ws.kernel, t_indices=idx)
    g = _interp_time_subset(gres.values, idx, grid.ts)
    defect = f.values + cumtrapz_time(f.values * r, grid.ts) \
        - ws.f0[None] - cumtrapz_time(g, grid.ts)
    ks = np.unique(np.linspace(0, grid.Nt - 1, n_samples).astype(int))
    return {int(k): l1_norm(defect, int(k), grid) for k in ks}


def ks_solve(f0, envelope, kernel, quad, constants, grid, eps_gap=1e-6,
             n_max=50, op_stride=4, tol=DEFAULT_TOL, override_smallness=False,
             include_timing=False, checkpoint_writer=None, resume_state=None):
    """Construct the mild solution by the monotone bracket iteration.

    Returns a dict with the bracket midpoint density, the per-iterate
    trace, convergence data and the mild-equation residuals.
    """
    lower, upper, c_out, f0_norm = ks_init(f0, envelope, constants, grid,
                                           override_smallness, tol)
    ws = KSWorkspace(grid, envelope, kernel, quad, np.asarray(f0, dtype=float),
                     op_stride=op_stride, tol=tol, include_timing=include_timing)
    env = envelope.grid_values(grid)
    state = IterationState(0, lower, upper, [])
    if c_out == 0.0:
        f = PhaseDensity.zeros(grid, envelope, tol=tol)
        return {"f": f, "trace": [TraceRow(0, 0.0, 0.0, 0.0, 0.0)],
                "converged": True, "n_iter": 0, "gap": 0.0, "c_out": 0.0,
                "f0_norm": 0.0, "residuals": {0: 0.0},
                "beginning_condition": None, "rho_bound": 0.0,
                "final_m_norm": 0.0,
                "bracket": (f, f)}

    if resume_state is not None:
        n0, l_vals, u_vals = resume_state
        state = IterationState(
            int(n0),
            PhaseDensity.from_values(grid, l_vals, envelope, tol=tol),
            PhaseDensity.from_values(grid, u_vals, envelope, tol=tol),
            [TraceRow(int(n0), _gap_values(l_vals, u_vals, env), 0.0, 0.0, 0.0)])
        bc = None
    else:
        state = ks_step(state, ws)
        bc = check_beginning_condition(lower, upper, state.lower, state.upper,
                                       tol.mono)
        if not bc.ok:
            raise BeginningConditionFailure(str(bc))
        if checkpoint_writer is not None:
            checkpoint_writer(state)
    converged = state.trace[-1].gap <= eps_gap
    while not converged and state.n < n_max:
        state = ks_step(state, ws)
        if checkpoint_writer is not None:
            checkpoint_writer(state)
        converged = state.trace[-1].gap <= eps_gap
    mid = 0.5 * (state.lower.values + state.upper.values)
    f = PhaseDensity.from_values(grid, mid, envelope, tol=tol)
    residuals = mild_residual(f, ws)
    rho = constants.contraction_rho(c_out)
    return {"f": f, "trace": state.trace, "converged": converged,
            "n_iter": state.n, "gap": state.trace[-1].gap, "c_out": c_out,
            "f0_norm": f0_norm, "residuals": residuals,
            "beginning_condition": bc, "rho_bound": rho,
            "final_m_norm": f.sup_m_norm(),
            "bracket": (state.lower, state.upper)}


# ---------------------------------------------------------------------------
# checkpoints: JSON header line + raw float64 arrays (t, x, v) for l and u


def write_checkpoint(path, n, grid, config_hash, lower, upper):
    header = {
        "n": int(n),
        "config_hash": config_hash,
        "grid": {"d": grid.d, "Rx": grid.Rx, "Rv": grid.Rv, "Nx": grid.Nx,
                 "Nv": grid.Nv, "Nt": grid.Nt, "T": grid.T},
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(lower.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(upper.values, dtype="<f8").tobytes())


def read_checkpoint(path, expected_hash=None):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if expected_hash is not None and header["config_hash"] != expected_hash:
            raise ValueError("checkpoint config hash does not match this run")
        g = header["grid"]
        count = g["Nt"] * g["Nx"] ** g["d"] * g["Nv"] ** g["d"]
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * count:
        raise ValueError("checkpoint payload size mismatch")
    full = (g["Nt"],) + (g["Nx"],) * g["d"] + (g["Nv"],) * g["d"]
    return header, raw[:count].reshape(full).copy(), raw[count:].reshape(full).copy()
