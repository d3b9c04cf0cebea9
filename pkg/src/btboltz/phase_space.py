"""Phase-space grids, Maxwellian envelopes, weighted norms and free transport.

Densities live on uniform tensor grids over the truncated box
[-Rx, Rx]^d x [-Rv, Rv]^d and a uniform time grid on [0, T].  All
interpolation is multilinear (hence monotone: pointwise-ordered inputs
stay ordered), and every lookup outside the box evaluates to zero.
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np

__all__ = [
    "Tolerances",
    "Maxwellian",
    "PhaseGrid",
    "PhaseDensity",
    "maxwellian_eval",
    "transport",
    "l1_norm",
    "eval_phase",
]


@dataclass(frozen=True)
class Tolerances:
    """Default numerical tolerances used across the package."""

    interp: float = 1e-6
    envelope_truncation: float = 1e-8
    mono: float = 1e-8


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class Maxwellian:
    """Non-normalized Gaussian weight exp(-alpha|x|^2 - beta|v|^2)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Maxwellian requires alpha > 0 and beta > 0")

    def eval(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        return np.exp(-self.alpha * np.sum(x * x, axis=-1)
                      - self.beta * np.sum(v * v, axis=-1))

    def grid_values(self, grid):
        """Envelope sampled on the (x, v) nodes of ``grid``; shape xshape+vshape."""
        gx = np.exp(-self.alpha * grid.x_sqnorm)
        gv = np.exp(-self.beta * grid.v_sqnorm)
        return np.multiply.outer(gx, gv)


def maxwellian_eval(m: Maxwellian, x, v):
    """Pointwise value of the Maxwellian weight at (x, v)."""
    return m.eval(x, v)


class PhaseGrid:
    """Uniform tensor grid on [-Rx,Rx]^d x [-Rv,Rv]^d with Nt times on [0,T]."""

    def __init__(self, d, Rx, Rv, Nx, Nv, Nt=1, T=0.0):
        if d < 2:
            raise ValueError("dimension must satisfy d >= 2")
        if Nx < 2 or Nv < 2:
            raise ValueError("need at least two nodes per axis")
        if Nt < 1 or T < 0:
            raise ValueError("invalid time grid")
        self.d = int(d)
        self.Rx = float(Rx)
        self.Rv = float(Rv)
        self.Nx = int(Nx)
        self.Nv = int(Nv)
        self.Nt = int(Nt)
        self.T = float(T)
        self.xs = np.linspace(-self.Rx, self.Rx, self.Nx)
        self.vs = np.linspace(-self.Rv, self.Rv, self.Nv)
        self.ts = np.linspace(0.0, self.T, self.Nt) if self.Nt > 1 else np.array([0.0])
        self.hx = self.xs[1] - self.xs[0]
        self.hv = self.vs[1] - self.vs[0]
        self.dt = self.ts[1] - self.ts[0] if self.Nt > 1 else 0.0

    @property
    def xshape(self):
        return (self.Nx,) * self.d

    @property
    def vshape(self):
        return (self.Nv,) * self.d

    @property
    def shape(self):
        return (self.Nt,) + self.xshape + self.vshape

    @cached_property
    def x_sqnorm(self):
        """|x|^2 on the spatial grid, shape xshape."""
        out = np.zeros(self.xshape)
        for ax in range(self.d):
            sh = [1] * self.d
            sh[ax] = self.Nx
            out = out + (self.xs ** 2).reshape(sh)
        return out

    @cached_property
    def v_sqnorm(self):
        out = np.zeros(self.vshape)
        for ax in range(self.d):
            sh = [1] * self.d
            sh[ax] = self.Nv
            out = out + (self.vs ** 2).reshape(sh)
        return out

    @cached_property
    def v_nodes(self):
        """All velocity nodes as an array of shape (Nv^d, d)."""
        mesh = np.meshgrid(*([self.vs] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def x_nodes(self):
        mesh = np.meshgrid(*([self.xs] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def trapezoid_weights(self, axis_nodes):
        w = np.full(axis_nodes.size, axis_nodes[1] - axis_nodes[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    @cached_property
    def phase_weights(self):
        """Trapezoid weights over the (x, v) box, shape xshape + vshape."""
        wx = self.trapezoid_weights(self.xs)
        wv = self.trapezoid_weights(self.vs)
        out = np.ones(())
        for _ in range(self.d):
            out = np.multiply.outer(out, wx)
        for _ in range(self.d):
            out = np.multiply.outer(out, wv)
        return out

    def check_truncation(self, m: Maxwellian, tol=DEFAULT_TOL.envelope_truncation):
        """Velocity-box truncation keeps the envelope tail below ``tol``."""
        tail = np.exp(-m.beta * self.Rv ** 2)
        if tail > tol * (1.0 + 1e-9):
            raise ValueError(
                f"velocity truncation too small: exp(-beta Rv^2) = {tail:.3e} > {tol:.1e}")
        return tail

    def compatible(self, other):
        return (self.d == other.d and self.Nx == other.Nx and self.Nv == other.Nv
                and self.Nt == other.Nt and self.Rx == other.Rx
                and self.Rv == other.Rv and self.T == other.T)


def _shift_axis_linear(block, axis, knot, frac):
    """Sample ``block`` at index + (knot + frac) along ``axis``; zero outside."""
    n = block.shape[axis]
    idx = np.arange(n) + knot
    lo = np.take(block, np.clip(idx, 0, n - 1), axis=axis)
    lo *= ((idx >= 0) & (idx <= n - 1)).reshape([-1 if a == axis else 1 for a in range(block.ndim)])
    hi = np.take(block, np.clip(idx + 1, 0, n - 1), axis=axis)
    hi *= ((idx + 1 >= 0) & (idx + 1 <= n - 1)).reshape([-1 if a == axis else 1 for a in range(block.ndim)])
    return (1.0 - frac) * lo + frac * hi


def shift_x_block(block, grid, shift):
    """Evaluate an x-block at x + shift by separable linear interpolation.

    ``block`` has shape ``grid.xshape``; ``shift`` is a length-d vector.
    Points falling outside the box contribute zero.
    """
    out = block
    for ax in range(grid.d):
        s = shift[ax] / grid.hx
        knot = int(np.floor(s))
        frac = s - knot
        out = _shift_axis_linear(out, ax, knot, frac)
    return out


def transport(f, direction="#", grid=None):
    """Free-transport conjugation g(t,x,v) = f(t, x ± t v, v).

    ``direction`` "#" evaluates at x + t v, "-#" at x - t v.  Accepts a
    PhaseDensity or a raw array (then ``grid`` is required) and returns the
    transported values as an array of the same shape.
    """
    if isinstance(f, PhaseDensity):
        values, grid = f.values, f.grid
    else:
        values = np.asarray(f, dtype=float)
        if grid is None:
            raise ValueError("grid required when passing raw values")
    sign = {"#": 1.0, "-#": -1.0}[direction]
    out = np.empty_like(values)
    d = grid.d
    vmesh = grid.v_nodes
    for k, t in enumerate(grid.ts):
        # move the v axes up front so each v-node owns a contiguous x block
        slab = np.moveaxis(values[k], range(d, 2 * d), range(d))
        res = np.empty_like(slab)
        flat_in = slab.reshape(-1, *grid.xshape)
        flat_out = res.reshape(-1, *grid.xshape)
        for j in range(flat_in.shape[0]):
            if t == 0.0:
                flat_out[j] = flat_in[j]
            else:
                flat_out[j] = shift_x_block(flat_in[j], grid, sign * t * vmesh[j])
        out[k] = np.moveaxis(res, range(d), range(d, 2 * d))
    return out


def l1_norm(f, t_index=0, grid=None):
    """Trapezoid-rule L^1 norm of |f| over the truncated (x, v) box."""
    if isinstance(f, PhaseDensity):
        values, grid = f.values, f.grid
    else:
        values = np.asarray(f, dtype=float)
        if grid is None:
            raise ValueError("grid required when passing raw values")
    slab = values[t_index] if values.ndim == 2 * grid.d + 1 else values
    return float(np.sum(np.abs(slab) * grid.phase_weights))


def eval_phase(slab, grid, X, V):
    """Multilinear evaluation of an (x, v) slab at arbitrary points.

    ``X`` and ``V`` have shape (..., d); zero is returned outside the box.
    """
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    batch = X.shape[:-1]
    d = grid.d
    coords = []
    for ax in range(d):
        coords.append((X[..., ax] + grid.Rx) / grid.hx)
    for ax in range(d):
        coords.append((V[..., ax] + grid.Rv) / grid.hv)
    sizes = [grid.Nx] * d + [grid.Nv] * d
    base = []
    frac = []
    inside = np.ones(batch, dtype=bool)
    for c, n in zip(coords, sizes):
        b = np.floor(c).astype(np.int64)
        f = c - b
        inside &= (c >= 0.0) & (c <= n - 1)
        base.append(np.clip(b, 0, n - 2))
        frac.append(np.where(b == n - 1, 1.0, f))  # exact top edge
    out = np.zeros(batch)
    flat = slab.reshape(-1)
    strides = np.cumprod([1] + sizes[::-1][:-1])[::-1]
    for corner in product((0, 1), repeat=2 * d):
        idx = np.zeros(batch, dtype=np.int64)
        w = np.ones(batch)
        for a, off in enumerate(corner):
            idx += (base[a] + off) * strides[a]
            w = w * (frac[a] if off else 1.0 - frac[a])
        out += w * flat[np.clip(idx, 0, flat.size - 1)]
    return np.where(inside, out, 0.0)


class PhaseDensity:
    """Sampled nonnegative density f^# with a certified Maxwellian envelope.

    Construction verifies 0 <= values <= envelope_bound * M_{alpha,beta}
    at every node; violations are rejected.  Instances are immutable.
    """

    def __init__(self, grid, values, envelope, envelope_bound,
                 tol=DEFAULT_TOL, _skip_checks=False):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        if envelope_bound < 0:
            raise ValueError("envelope_bound must be nonnegative")
        self.grid = grid
        self.envelope = envelope
        self.envelope_bound = float(envelope_bound)
        self.tol = tol
        if not _skip_checks:
            grid.check_truncation(envelope, tol.envelope_truncation)
            if values.min() < 0.0:
                raise ValueError("density has negative nodes")
            env = self.envelope_grid
            slack = 1e-12 * max(self.envelope_bound, 1.0)
            excess = values - self.envelope_bound * env[None]
            if excess.max() > slack:
                node = np.unravel_index(int(np.argmax(excess)), values.shape)
                raise ValueError(
                    "envelope certificate violated: node exceeds bound "
                    f"by {excess.max():.3e} at index {node}")
        self.values = values
        self.values.setflags(write=False)

    @cached_property
    def envelope_grid(self):
        return self.envelope.grid_values(self.grid)

    @classmethod
    def zeros(cls, grid, envelope, tol=DEFAULT_TOL):
        return cls(grid, np.zeros(grid.shape), envelope, 0.0, tol=tol)

    @classmethod
    def from_maxwellian(cls, grid, envelope, amplitude, tol=DEFAULT_TOL):
        """Time-constant density amplitude * M_{alpha,beta} on the grid."""
        env = envelope.grid_values(grid)
        vals = np.broadcast_to(amplitude * env, grid.shape).copy()
        return cls(grid, vals, envelope, amplitude, tol=tol)

    @classmethod
    def from_values(cls, grid, values, envelope, tol=DEFAULT_TOL):
        """Certify raw values, inferring the smallest valid envelope bound."""
        values = np.asarray(values, dtype=float)
        env = envelope.grid_values(grid)
        bound = float(np.max(values / env[None])) if values.size else 0.0
        return cls(grid, values, envelope, max(bound, 0.0), tol=tol)

    def m_norm(self, t_index=None):
        """Weighted sup norm max |f|/M at one time (or per spec over all t)."""
        env = self.envelope_grid
        if t_index is None:
            return float(np.max(self.values / env[None]))
        return float(np.max(self.values[t_index] / env))

    def sup_m_norm(self):
        return self.m_norm(t_index=None)

    def l1_norm(self, t_index=0):
        return l1_norm(self.values, t_index, self.grid)

    def slab(self, t_index):
        return self.values[t_index]
