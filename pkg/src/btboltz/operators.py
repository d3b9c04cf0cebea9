"""Transported gain, loss and collision-frequency operators on phase grids.

Two quadrature backends share the same evaluation kernels:

* ``deterministic`` (d = 2 only): tensor Gauss-Legendre velocity nodes on the
  truncated box, midpoint rule on S^1 and a hyperspherical Gauss x midpoint
  rule on S^3.
* ``monte_carlo``: a random product rule with Gaussian-importance velocity
  nodes (proposal matched to the envelope decay rate) and uniform sphere
  nodes, frozen per (seed, time-slice).  With frozen nodes the sweeps are
  monotone multilinear functionals, exactly like a deterministic rule.

The loss is always assembled as f^# times the collision frequency R^#, never
by a separate integral, so the factorization identity holds exactly at grid
level.
"""

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .cross_sections import KernelConfig, build_a3_table
from .phase_space import PhaseDensity
from .quadrules import gl_box, circle_rule, sphere3_rule

__all__ = [
    "QuadratureSpec",
    "OperatorResult",
    "r2_sharp",
    "r3_sharp",
    "r_sharp",
    "g2_sharp",
    "g3_sharp",
    "gain_sharp",
    "loss_sharp",
]

_SPHERE_AREA = {1: 2.0 * np.pi, 3: 2.0 * np.pi ** 2}  # |S^1|, |S^3|


@dataclass(frozen=True)
class QuadratureSpec:
    """Backend and resolution of the collision quadratures.

    ``n_ang``: angular nodes per circle (the S^3 rule uses
    (n_ang//4, n_ang//4, n_ang//2)); ``n_vel``: Gauss-Legendre nodes per
    velocity axis; ``n_mc``: Monte Carlo nodes per time slice;
    ``mc_omega``: sphere nodes per velocity node in the random product rule.
    ``resolve_omega_loss`` makes the frequency/loss share the gain's angular
    rule instead of the collapsed angular integral (used by the gain/loss
    identity checks so the angular error cancels between the two sides).
    """

    backend: str = "deterministic"
    n_ang: int = 16
    n_vel: int = 12
    n_mc: int = 16384
    seed: int = 0
    mc_omega: int = 8
    resolve_omega_loss: bool = False

    def __post_init__(self):
        if self.backend not in ("deterministic", "monte_carlo"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.n_ang < 8 or self.n_ang % 2:
            raise ValueError("n_ang must be even and >= 8")
        if self.n_vel < 2:
            raise ValueError("n_vel >= 2 required")
        if self.n_mc < 10_000:
            raise ValueError("n_mc >= 10^4 required for certified runs")

    def check_dim(self, d):
        if self.backend == "deterministic" and d != 2:
            raise ValueError("the deterministic backend supports d = 2 only")

    def s3_counts(self):
        return (max(2, self.n_ang // 4), max(2, self.n_ang // 4), max(4, self.n_ang // 2))


@dataclass
class OperatorResult:
    """Operator values on (t_indices, x-grid, v-grid) plus an error estimate."""

    values: np.ndarray
    t_indices: np.ndarray
    error: float | None = None
    backend: str = "deterministic"
    converged: bool = True


# ---------------------------------------------------------------------------
# node construction


def _det_nodes_v(grid, quad, pair):
    dim = 2 * grid.d if pair else grid.d
    return gl_box(grid.Rv, quad.n_vel, dim)


def _mc_nodes_v(grid, quad, pair, beta, slice_key):
    d = grid.d
    dim = 2 * d if pair else d
    n = max(1, quad.n_mc // max(1, quad.mc_omega))
    rng = np.random.default_rng(np.random.SeedSequence([quad.seed, 77, slice_key, int(pair)]))
    pts = rng.standard_normal((n, dim)) / np.sqrt(2.0 * beta)
    # importance weights against the Gaussian proposal matched to the envelope
    sq = np.sum(pts * pts, axis=1)
    w = (np.pi / beta) ** (dim / 2.0) * np.exp(beta * sq) / n
    # proposal tails beyond the box carry zero integrand; drop them early
    keep = np.all(np.abs(pts) <= grid.Rv, axis=1)
    return np.ascontiguousarray(pts[keep]), np.ascontiguousarray(w[keep])


def _mc_nodes_omega(grid, quad, pair, slice_key):
    d = grid.d
    dim = 2 * d if pair else d
    n = quad.mc_omega
    rng = np.random.default_rng(np.random.SeedSequence([quad.seed, 99, slice_key, int(pair)]))
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    from scipy.special import gamma as _G
    area = 2.0 * np.pi ** (dim / 2.0) / _G(dim / 2.0)
    return np.ascontiguousarray(g), np.full(n, area / n)


def _omega_nodes(grid, quad, pair, slice_key):
    if quad.backend == "deterministic":
        if pair:
            om, w = sphere3_rule(*quad.s3_counts())
        else:
            om, w = circle_rule(quad.n_ang)
        return np.ascontiguousarray(om), np.ascontiguousarray(w)
    return _mc_nodes_omega(grid, quad, pair, slice_key)


def _velocity_nodes(grid, quad, pair, beta, slice_key):
    if quad.backend == "deterministic":
        vn, vw = _det_nodes_v(grid, quad, pair)
        return np.ascontiguousarray(vn), np.ascontiguousarray(vw)
    return _mc_nodes_v(grid, quad, pair, beta, slice_key)


# ---------------------------------------------------------------------------
# kernel tables


def _b2_table_arrays(cfg: KernelConfig):
    if cfg.b2 is None:
        z = np.linspace(-1, 1, 3)
        return z[0], z[1] - z[0], np.zeros(3)
    zs, vals = cfg.b2.zs, cfg.b2.vals
    return zs[0], zs[1] - zs[0], np.ascontiguousarray(vals)


def _b3_table_arrays(cfg: KernelConfig):
    if cfg.b3 is None:
        return -1.0, 1.0, -0.5, 0.5, np.zeros((3, 3))
    t = cfg.b3
    return (t.zs[0], t.zs[1] - t.zs[0], t.ws[0], t.ws[1] - t.ws[0],
            np.ascontiguousarray(t.vals))


_A3_CACHE = {}


def _a3_arrays(cfg: KernelConfig):
    from .cross_sections import a3_content_key
    key = a3_content_key(cfg)
    if key not in _A3_CACHE:
        if cfg.b3 is None:
            _A3_CACHE[key] = (1.0, np.zeros((3, 3)))
        else:
            rs, table = build_a3_table(cfg)
            _A3_CACHE[key] = (rs[1] - rs[0], np.ascontiguousarray(table))
    return _A3_CACHE[key]


def _vx_slice(density: PhaseDensity, k):
    """Time slice reordered to (v1, v2, x1, x2), cached on the density."""
    cache = getattr(density, "_vx_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(density, "_vx_cache", cache)
    if k not in cache:
        d = density.grid.d
        slab = density.values[k]
        cache[k] = np.ascontiguousarray(np.moveaxis(slab, range(d, 2 * d), range(d)))
    return cache[k]


def _grid_args(grid):
    return (grid.xs[0], grid.hx, grid.Nx, grid.vs[0], grid.hv, grid.Nv)


def _normalize_tidx(grid, t_indices):
    if t_indices is None:
        return np.arange(grid.Nt)
    return np.atleast_1d(np.asarray(t_indices, dtype=int))


def _is_zero(density: PhaseDensity):
    return density.envelope_bound == 0.0


def _to_xv(out_slices, grid):
    d = grid.d
    arr = np.stack([np.moveaxis(s, range(d), range(d, 2 * d)) for s in out_slices])
    return arr


# ---------------------------------------------------------------------------
# operator sweeps


def _sweep(kind, dens, quad, cfg, t_indices, beta):
    """Run one operator sweep over the requested time slices (d = 2)."""
    grid = dens[0].grid
    tidx = _normalize_tidx(grid, t_indices)
    ga = _grid_args(grid)
    bz0, bdz, bvals = _b2_table_arrays(cfg)
    tz0, tdz, tw0, tdw, tvals = _b3_table_arrays(cfg)
    out_slices = []
    pair = kind in ("r3", "g3")
    for k in tidx:
        t = float(grid.ts[k])
        out = np.zeros((grid.Nv, grid.Nv, grid.Nx, grid.Nx))
        vn, vw = _velocity_nodes(grid, quad, pair, beta, int(k))
        if kind == "r2":
            if quad.resolve_omega_loss:
                on, ow = _omega_nodes(grid, quad, False, int(k))
                K.r2_sweep(_vx_slice(dens[0], k), t, *ga, vn, vw, cfg.gamma2,
                           0.0, on, ow, bz0, bdz, bvals, True, out)
            else:
                dummy = np.zeros((1, 2))
                K.r2_sweep(_vx_slice(dens[0], k), t, *ga, vn, vw, cfg.gamma2,
                           cfg.b2_norm, dummy, np.zeros(1), bz0, bdz, bvals, False, out)
        elif kind == "g2":
            on, ow = _omega_nodes(grid, quad, False, int(k))
            K.g2_sweep(_vx_slice(dens[0], k), _vx_slice(dens[1], k), t, *ga,
                       vn, vw, on, ow, cfg.gamma2, bz0, bdz, bvals, out)
        elif kind == "r3":
            if quad.resolve_omega_loss:
                on, ow = _omega_nodes(grid, quad, True, int(k))
                K.r3_sweep(_vx_slice(dens[0], k), _vx_slice(dens[1], k), t, *ga,
                           vn, vw, cfg.gamma3, 1.0, np.zeros((3, 3)),
                           on, ow, tz0, tdz, tw0, tdw, tvals, True, out)
            else:
                a3_dr, a3_table = _a3_arrays(cfg)
                dummy = np.zeros((1, 4))
                K.r3_sweep(_vx_slice(dens[0], k), _vx_slice(dens[1], k), t, *ga,
                           vn, vw, cfg.gamma3, a3_dr, a3_table,
                           dummy, np.zeros(1), tz0, tdz, tw0, tdw, tvals, False, out)
        elif kind == "g3":
            on, ow = _omega_nodes(grid, quad, True, int(k))
            K.g3_sweep(_vx_slice(dens[0], k), _vx_slice(dens[1], k),
                       _vx_slice(dens[2], k), t, *ga, vn, vw, on, ow,
                       cfg.gamma3, tz0, tdz, tw0, tdw, tvals, out)
        out_slices.append(out)
    return _to_xv(out_slices, grid)


def _sweep_generic(kind, dens, quad, cfg, t_indices, beta):
    """Plain-numpy Monte Carlo path for d != 2 (small grids only)."""
    from .phase_space import eval_phase
    from .collision_maps import binary_map, ternary_map, u_tilde_mag
    grid = dens[0].grid
    d = grid.d
    tidx = _normalize_tidx(grid, t_indices)
    pair = kind in ("r3", "g3")
    xs = grid.x_nodes
    vs = grid.v_nodes
    out = np.zeros((len(tidx),) + grid.xshape + grid.vshape)
    for row, k in enumerate(tidx):
        t = float(grid.ts[k])
        vn, vw = _mc_nodes_v(grid, quad, pair, beta, int(k))
        on, ow = _mc_nodes_omega(grid, quad, pair, int(k))
        slabs = [dn.values[k] for dn in dens]
        flat = out[row].reshape(xs.shape[0], vs.shape[0])
        for iv, vo in enumerate(vs):
            flat[:, iv] = _generic_point_batch(kind, slabs, grid, t, xs, vo,
                                               vn, vw, on, ow, cfg)
    return out


def _generic_point_batch(kind, slabs, grid, t, X, vo, vn, vw, on, ow, cfg):
    """Operator values at all x for one output velocity (vectorized MC)."""
    from .phase_space import eval_phase
    from .collision_maps import ternary_map, u_tilde_mag
    d = grid.d
    nx = X.shape[0]
    acc = np.zeros(nx)
    if kind in ("r2", "g2"):
        u = vn - vo
        umag = np.linalg.norm(u, axis=1)
        ok = umag > 1e-14
        upow = np.zeros_like(umag)
        upow[ok] = umag[ok] ** cfg.gamma2
        for k_i in range(on.shape[0]):
            om = on[k_i]
            if kind == "r2":
                zb = np.zeros_like(umag)
                zb[ok] = np.einsum("md,d->m", u[ok], om) / umag[ok]
                wgt = vw * ow[k_i] * upow \
                    * (cfg.b2(zb) if cfg.b2 is not None else 0.0)
                for m in np.nonzero(ok & (wgt != 0))[0]:
                    acc += wgt[m] * eval_phase(slabs[0], grid, X - t * u[m],
                                               np.broadcast_to(vn[m], (nx, d)))
            else:
                dot = np.einsum("md,d->m", u, om)
                vp = vo[None, :] + dot[:, None] * om[None, :]
                v1p = vn - dot[:, None] * om[None, :]
                zb = np.zeros_like(umag)
                zb[ok] = dot[ok] / umag[ok]
                wgt = vw * ow[k_i] * upow \
                    * (cfg.b2(zb) if cfg.b2 is not None else 0.0)
                for m in np.nonzero(ok & (wgt != 0))[0]:
                    fa = eval_phase(slabs[0], grid, X + t * (vo - vp[m]), np.broadcast_to(vp[m], (nx, d)))
                    fb = eval_phase(slabs[1], grid, X + t * (vo - v1p[m]), np.broadcast_to(v1p[m], (nx, d)))
                    acc += wgt[m] * fa * fb
        return acc
    v1 = vn[:, :d]
    v2 = vn[:, d:]
    vo_b = np.broadcast_to(vo, v1.shape)
    ut = u_tilde_mag(vo_b, v1, v2)
    ok = ut > 1e-14
    utpow = np.zeros_like(ut)
    utpow[ok] = ut[ok] ** cfg.gamma3
    nu1 = np.zeros_like(v1)
    nu2 = np.zeros_like(v2)
    nu1[ok] = (v1[ok] - vo) / ut[ok, None]
    nu2[ok] = (v2[ok] - vo) / ut[ok, None]
    for k_i in range(on.shape[0]):
        om1, om2 = on[k_i, :d], on[k_i, d:]
        z = nu1 @ om1 + nu2 @ om2
        wdot = float(om1 @ om2)
        b3v = cfg.b3(np.clip(z, -1, 1), np.clip(wdot, -0.5, 0.5)) if cfg.b3 is not None else np.zeros_like(z)
        wgt = vw * ow[k_i] * utpow * b3v
        live = np.nonzero(ok & (wgt != 0))[0]
        if kind == "r3":
            for m in live:
                fa = eval_phase(slabs[0], grid, X + t * (vo - v1[m]), np.broadcast_to(v1[m], (nx, d)))
                fb = eval_phase(slabs[1], grid, X + t * (vo - v2[m]), np.broadcast_to(v2[m], (nx, d)))
                acc += wgt[m] * fa * fb
        else:
            vs, v1s, v2s = ternary_map(vo_b[live], v1[live], v2[live],
                                       np.broadcast_to(om1, (live.size, d)),
                                       np.broadcast_to(om2, (live.size, d)))
            for j, m in enumerate(live):
                fa = eval_phase(slabs[0], grid, X + t * (vo - vs[j]), np.broadcast_to(vs[j], (nx, d)))
                fb = eval_phase(slabs[1], grid, X + t * (vo - v1s[j]), np.broadcast_to(v1s[j], (nx, d)))
                fc = eval_phase(slabs[2], grid, X + t * (vo - v2s[j]), np.broadcast_to(v2s[j], (nx, d)))
                acc += wgt[m] * fa * fb * fc
    return acc


def _dispatch(kind, dens, quad, cfg, t_indices, error_estimate):
    grid = dens[0].grid
    quad.check_dim(grid.d)
    tidx = _normalize_tidx(grid, t_indices)
    beta = dens[0].envelope.beta
    zero = any(_is_zero(dn) for dn in dens)
    missing = (kind in ("r2", "g2") and not cfg.has_binary) or \
              (kind in ("r3", "g3") and not cfg.has_ternary)
    if zero or missing:
        values = np.zeros((len(tidx),) + grid.xshape + grid.vshape)
        return OperatorResult(values, tidx, 0.0, quad.backend, True)
    if grid.d == 2:
        values = _sweep(kind, dens, quad, cfg, tidx, beta)
    else:
        values = _sweep_generic(kind, dens, quad, cfg, tidx, beta)
    err = None
    if error_estimate:
        err = _error_estimate(kind, dens, quad, cfg, tidx, beta, values)
    return OperatorResult(values, tidx, err, quad.backend, True)


def _error_estimate(kind, dens, quad, cfg, tidx, beta, values):
    """Refinement-difference (deterministic) or seed-split (MC) estimate."""
    if quad.backend == "deterministic":
        coarse = replace(quad, n_vel=max(3, (2 * quad.n_vel) // 3),
                         n_ang=max(8, (quad.n_ang // 4) * 2))
        other = _sweep(kind, dens, coarse, cfg, tidx, beta)
    else:
        other = _sweep(kind, dens, replace(quad, seed=quad.seed + 104729), cfg, tidx, beta) \
            if dens[0].grid.d == 2 else values
    return float(np.max(np.abs(values - other)))


def r2_sharp(g, quad, cfg, t_indices=None, error_estimate=False):
    """Transported binary collision frequency R2^#(g)."""
    return _dispatch("r2", [g], quad, cfg, t_indices, error_estimate)


def r3_sharp(g, h, quad, cfg, t_indices=None, error_estimate=False):
    """Transported ternary collision frequency R3^#(g, h)."""
    return _dispatch("r3", [g, h], quad, cfg, t_indices, error_estimate)


def r_sharp(g, h, quad, cfg, t_indices=None, error_estimate=False):
    """R^# = R2^#(g) + R3^#(g, h)."""
    a = r2_sharp(g, quad, cfg, t_indices, error_estimate)
    b = r3_sharp(g, h, quad, cfg, t_indices, error_estimate)
    err = None if a.error is None else a.error + b.error
    return OperatorResult(a.values + b.values, a.t_indices, err, quad.backend,
                          a.converged and b.converged)


def g2_sharp(f, g, quad, cfg, t_indices=None, error_estimate=False):
    """Transported binary gain G2^#(f, g)."""
    return _dispatch("g2", [f, g], quad, cfg, t_indices, error_estimate)


def g3_sharp(f, g, h, quad, cfg, t_indices=None, error_estimate=False):
    """Transported ternary gain G3^#(f, g, h)."""
    return _dispatch("g3", [f, g, h], quad, cfg, t_indices, error_estimate)


def gain_sharp(f, g, h, quad, cfg, t_indices=None, error_estimate=False):
    """G^# = G2^#(f, g) + G3^#(f, g, h)."""
    a = g2_sharp(f, g, quad, cfg, t_indices, error_estimate)
    b = g3_sharp(f, g, h, quad, cfg, t_indices, error_estimate)
    err = None if a.error is None else a.error + b.error
    return OperatorResult(a.values + b.values, a.t_indices, err, quad.backend,
                          a.converged and b.converged)


def loss_sharp(f, g, h, quad, cfg, t_indices=None, error_estimate=False,
               r_values=None):
    """L^#(f, g, h) = f^#(t) R^#(g, h)(t), exactly at every node.

    ``r_values`` may carry a precomputed R^# field on the same t_indices.
    """
    grid = f.grid
    tidx = _normalize_tidx(grid, t_indices)
    if r_values is None:
        rres = r_sharp(g, h, quad, cfg, tidx, error_estimate)
        rv, err = rres.values, rres.error
    else:
        rv, err = r_values, None
    values = f.values[tidx] * rv
    return OperatorResult(values, tidx, err, quad.backend, True)
