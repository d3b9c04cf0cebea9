"""Cross-section families B2 = |u|^g2 b2(u^.w) and B3 = |u~|^g3 b3(u-.w, w1.w2).

Angular densities are carried as tabulated values with linear interpolation
(evenness enforced by symmetrization); the built-in hard-sphere and derived
ternary kernels are exact on their tables because they are piecewise linear
in z with a knot at zero.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .collision_maps import u_tilde_mag, relative_velocity_directions
from .quadrules import gl_interval, sphere3_rule

__all__ = [
    "SkipSample",
    "AngularTable1D",
    "AngularTable2D",
    "KernelConfig",
    "b2_eval",
    "b3_eval",
    "B2_eval",
    "B3_eval",
    "angular_norm",
    "ternary_angular_integral",
    "build_a3_table",
]


class SkipSample(Exception):
    """Degenerate zero-relative-velocity sample with nonpositive exponent.

    The integrand is still integrable; such measure-zero samples are
    dropped by the operator quadratures.
    """


class UnintegrableAngularDensity(ValueError):
    """Angular norm estimate diverged or is not finite."""


def _symmetrize_even(zs, vals):
    """Average b(z) and b(-z) on a symmetric z-grid."""
    return 0.5 * (vals + vals[::-1])


@dataclass(frozen=True)
class AngularTable1D:
    """Tabulated angular density b2 on z in [-1, 1], even by construction."""

    zs: np.ndarray
    vals: np.ndarray
    name: str = "custom"

    @classmethod
    def from_function(cls, fn, n=513, name="custom"):
        zs = np.linspace(-1.0, 1.0, n)
        vals = np.asarray([fn(z) for z in zs], dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("angular density must be finite and nonnegative")
        return cls(zs, _symmetrize_even(zs, vals), name=name)

    @classmethod
    def from_table(cls, zs, vals, name="custom"):
        zs = np.asarray(zs, dtype=float)
        vals = np.asarray(vals, dtype=float)
        if zs.ndim != 1 or zs.size < 2 or np.any(np.diff(zs) <= 0):
            raise ValueError("z nodes must be strictly increasing")
        if abs(zs[0] + 1.0) > 1e-12 or abs(zs[-1] - 1.0) > 1e-12:
            raise ValueError("z nodes must span [-1, 1]")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("angular density must be finite and nonnegative")
        grid = np.linspace(-1.0, 1.0, max(513, 2 * zs.size + 1))
        resampled = np.interp(grid, zs, vals)
        return cls(grid, _symmetrize_even(grid, resampled), name=name)

    def __call__(self, z):
        return np.interp(z, self.zs, self.vals)

    @property
    def is_zero(self):
        return bool(np.all(self.vals == 0.0))


@dataclass(frozen=True)
class AngularTable2D:
    """Tabulated ternary density b3 on [-1,1] x [-1/2,1/2], even in z."""

    zs: np.ndarray
    ws: np.ndarray
    vals: np.ndarray  # shape (len(zs), len(ws))
    name: str = "custom"

    @classmethod
    def from_function(cls, fn, nz=513, nw=129, name="custom"):
        zs = np.linspace(-1.0, 1.0, nz)
        ws = np.linspace(-0.5, 0.5, nw)
        vals = np.asarray([[fn(z, w) for w in ws] for z in zs], dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("angular density must be finite and nonnegative")
        vals = 0.5 * (vals + vals[::-1, :])
        return cls(zs, ws, vals, name=name)

    def __call__(self, z, w):
        z = np.asarray(z, dtype=float)
        w = np.asarray(w, dtype=float)
        iz = np.clip(np.floor((z + 1.0) / (self.zs[1] - self.zs[0])).astype(int),
                     0, self.zs.size - 2)
        iw = np.clip(np.floor((w + 0.5) / (self.ws[1] - self.ws[0])).astype(int),
                     0, self.ws.size - 2)
        fz = (z - self.zs[iz]) / (self.zs[1] - self.zs[0])
        fw = (w - self.ws[iw]) / (self.ws[1] - self.ws[0])
        v = self.vals
        return ((1 - fz) * (1 - fw) * v[iz, iw] + fz * (1 - fw) * v[iz + 1, iw]
                + (1 - fz) * fw * v[iz, iw + 1] + fz * fw * v[iz + 1, iw + 1])

    @property
    def is_zero(self):
        return bool(np.all(self.vals == 0.0))


def hard_sphere_b2():
    """Hard-sphere binary angular density b2(z) = |z|/2."""
    return AngularTable1D.from_function(lambda z: 0.5 * abs(z), name="hard_sphere_binary")


def maxwell_b2(d=2):
    """Constant angular density normalized on S^{d-1}."""
    from scipy.special import gamma as _G
    area = 2.0 * np.pi ** (d / 2.0) / _G(d / 2.0)
    return AngularTable1D.from_function(lambda z: 1.0 / area, name="maxwell")


def derived_ternary_b3():
    """Ternary angular density b3(z, w) = |z| / (2 sqrt(1 + w))."""
    return AngularTable2D.from_function(
        lambda z, w: 0.5 * abs(z) / np.sqrt(1.0 + w), name="derived_ternary")


B2_PRESETS = {"hard_sphere_binary": hard_sphere_b2, "maxwell": maxwell_b2, "zero": lambda: None}
B3_PRESETS = {"derived_ternary": derived_ternary_b3, "zero": lambda: None}


@dataclass(frozen=True)
class KernelConfig:
    """Exponents and angular densities of the binary/ternary cross-sections.

    ``b2`` or ``b3`` may be None (that interaction switched off), but not
    both.  Exponent ranges: gamma2 in (-d+1, 1], gamma3 in (-2d+1, 1].
    """

    d: int
    gamma2: float = 1.0
    gamma3: float = 1.0
    b2: AngularTable1D | None = None
    b3: AngularTable2D | None = None

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d >= 2 required")
        if not (-self.d + 1 < self.gamma2 <= 1.0):
            raise ValueError(f"gamma2 = {self.gamma2} outside (-d+1, 1] for d = {self.d}")
        if not (-2 * self.d + 1 < self.gamma3 <= 1.0):
            raise ValueError(f"gamma3 = {self.gamma3} outside (-2d+1, 1] for d = {self.d}")
        b2_zero = self.b2 is None or self.b2.is_zero
        b3_zero = self.b3 is None or self.b3.is_zero
        if b2_zero and b3_zero:
            raise ValueError("at least one of b2, b3 must be nonzero")

    @classmethod
    def hard_sphere_derived(cls, d=2):
        """Hard-sphere binary plus derived ternary kernel, both gamma = 1."""
        return cls(d=d, gamma2=1.0, gamma3=1.0,
                   b2=hard_sphere_b2(), b3=derived_ternary_b3())

    @property
    def has_binary(self):
        return self.b2 is not None and not self.b2.is_zero

    @property
    def has_ternary(self):
        return self.b3 is not None and not self.b3.is_zero

    @cached_property
    def b2_norm(self):
        return angular_norm(self, "binary")

    @cached_property
    def b3_norm(self):
        return angular_norm(self, "ternary")


def b2_eval(cfg: KernelConfig, z):
    if np.any(np.abs(z) > 1.0 + 1e-12):
        raise ValueError("b2 argument outside [-1, 1]")
    if cfg.b2 is None:
        return np.zeros_like(np.asarray(z, dtype=float)) + 0.0
    return cfg.b2(np.clip(z, -1.0, 1.0))


def b3_eval(cfg: KernelConfig, z, w):
    if np.any(np.abs(z) > 1.0 + 1e-12):
        raise ValueError("b3 first argument outside [-1, 1]")
    if np.any(np.abs(w) > 0.5 + 1e-12):
        raise ValueError("b3 second argument outside [-1/2, 1/2]")
    if cfg.b3 is None:
        return np.zeros_like(np.asarray(z, dtype=float)) + 0.0
    return cfg.b3(np.clip(z, -1.0, 1.0), np.clip(w, -0.5, 0.5))


def B2_eval(cfg: KernelConfig, u, omega):
    """Binary cross-section |u|^gamma2 b2(u^ . omega) for a single frame."""
    u = np.asarray(u, dtype=float)
    omega = np.asarray(omega, dtype=float)
    umag = float(np.linalg.norm(u))
    if umag == 0.0:
        if cfg.gamma2 > 0:
            return 0.0
        raise SkipSample("zero relative velocity with gamma2 <= 0")
    return umag ** cfg.gamma2 * float(b2_eval(cfg, float(np.dot(u, omega)) / umag))


def B3_eval(cfg: KernelConfig, v, v1, v2, omega1, omega2):
    """Ternary cross-section |u~|^gamma3 b3(u- . w, w1 . w2) for one frame."""
    ut = float(u_tilde_mag(v, v1, v2))
    if ut == 0.0:
        if cfg.gamma3 > 0:
            return 0.0
        raise SkipSample("zero relative velocity with gamma3 <= 0")
    nu1, nu2 = relative_velocity_directions(v, v1, v2)
    z = float(np.dot(nu1, omega1) + np.dot(nu2, omega2))
    w = float(np.dot(omega1, omega2))
    return ut ** cfg.gamma3 * float(b3_eval(cfg, np.clip(z, -1, 1), np.clip(w, -0.5, 0.5)))


def _binary_norm(cfg):
    if not cfg.has_binary:
        return 0.0
    if cfg.d == 2:
        # the (1-z^2)^{(d-3)/2} weight is singular at |z| = 1 for d = 2;
        # integrate directly over the circle instead
        n = 1 << 17
        theta = (np.arange(n) + 0.5) * (2.0 * np.pi / n)
        val = float(np.sum(cfg.b2(np.cos(theta))) * (2.0 * np.pi / n))
    else:
        from scipy.special import gamma as _G
        sphere = 2.0 * np.pi ** ((cfg.d - 1) / 2.0) / _G((cfg.d - 1) / 2.0)
        zs, wz = gl_interval(-1.0, 1.0, 400)
        val = sphere * float(np.sum(wz * cfg.b2(zs)
                                    * (1.0 - zs ** 2) ** ((cfg.d - 3) / 2.0)))
    if not np.isfinite(val):
        raise UnintegrableAngularDensity("binary angular norm is not finite")
    return val


def _ellipsoid_nu(n1, n2):
    """Representative (nu1, nu2) in R^4 with given magnitudes on E^3.

    On the ellipsoid the inner product is forced: nu1.nu2 = n1^2+n2^2-1/2.
    """
    c = n1 ** 2 + n2 ** 2 - 0.5
    denom = n1 * n2
    cos_t = 0.0 if denom == 0.0 else float(np.clip(c / denom, -1.0, 1.0))
    sin_t = np.sqrt(max(0.0, 1.0 - cos_t ** 2))
    nu1 = np.array([n1, 0.0])
    nu2 = np.array([n2 * cos_t, n2 * sin_t])
    return nu1, nu2


def ternary_angular_integral(cfg, nu1, nu2, quad=(24, 24, 48)):
    """Integral of b3(nu . omega, omega1 . omega2) over S^{2d-1} (d = 2)."""
    if cfg.b3 is None:
        return 0.0
    if cfg.d != 2:
        return _ternary_angular_integral_mc(cfg, nu1, nu2)
    omega, w = sphere3_rule(*quad)
    z = omega[:, :2] @ np.asarray(nu1) + omega[:, 2:] @ np.asarray(nu2)
    wdot = np.sum(omega[:, :2] * omega[:, 2:], axis=1)
    vals = cfg.b3(np.clip(z, -1.0, 1.0), np.clip(wdot, -0.5, 0.5))
    return float(np.sum(w * vals))


def _a3_batch(cfg, pairs, quad):
    """Angular integrals for a batch of ellipsoid magnitude pairs (d = 2)."""
    from . import _kernels as _K
    omega, w = sphere3_rule(*quad)
    nus = np.array([np.concatenate(_ellipsoid_nu(a, b)) for a, b in pairs])
    t = cfg.b3
    out = np.empty(pairs.shape[0])
    _K.a3_batch(np.ascontiguousarray(nus), np.ascontiguousarray(omega),
                np.ascontiguousarray(w), t.zs[0], t.zs[1] - t.zs[0],
                t.ws[0], t.ws[1] - t.ws[0], np.ascontiguousarray(t.vals), out)
    return out


def a3_content_key(cfg):
    return ("a3", cfg.d, _table_key(cfg.b3))


def _ternary_angular_integral_mc(cfg, nu1, nu2, n=200_000, seed=1234):
    """Monte Carlo fallback on S^{2d-1} for d > 2."""
    d = cfg.d
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, 2 * d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    from scipy.special import gamma as _G
    area = 2.0 * np.pi ** d / _G(d)
    z = g[:, :d] @ np.asarray(nu1) + g[:, d:] @ np.asarray(nu2)
    wdot = np.sum(g[:, :d] * g[:, d:], axis=1)
    vals = cfg.b3(np.clip(z, -1.0, 1.0), np.clip(wdot, -0.5, 0.5))
    return float(area * np.mean(vals))


def _ternary_norm(cfg, n_grid=49, refine_rounds=3):
    """sup over the ellipsoid of the angular integral, by grid + refinement.

    Coarse-to-fine: scans a deterministic magnitude grid with a modest
    sphere rule, narrows around the maximizer, and re-evaluates the winner
    with the fine rule.
    """
    if not cfg.has_ternary:
        return 0.0
    if cfg.d != 2:
        return _ternary_norm_mc(cfg)
    rmax = np.sqrt(2.0 / 3.0)  # largest |nu_i| attainable on the ellipsoid
    lo1, hi1, lo2, hi2 = 0.0, rmax, 0.0, rmax
    arg = (rmax / 2, rmax / 2)
    for _ in range(refine_rounds):
        g1 = np.linspace(lo1, hi1, n_grid)
        g2 = np.linspace(lo2, hi2, n_grid)
        pairs = np.array([(a, b) for a in g1 for b in g2
                          if _valid_ellipsoid_pair(a, b)])
        if pairs.size == 0:
            break
        vals = _a3_batch(cfg, pairs, (12, 12, 24))
        arg = tuple(pairs[int(np.argmax(vals))])
        span1, span2 = (hi1 - lo1) / n_grid, (hi2 - lo2) / n_grid
        lo1, hi1 = max(0.0, arg[0] - 2 * span1), min(rmax, arg[0] + 2 * span1)
        lo2, hi2 = max(0.0, arg[1] - 2 * span2), min(rmax, arg[1] + 2 * span2)
    nu1, nu2 = _ellipsoid_nu(*arg)
    best = ternary_angular_integral(cfg, nu1, nu2, quad=(32, 32, 64))
    if not np.isfinite(best):
        raise UnintegrableAngularDensity("ternary angular norm is not finite")
    return float(best)


def _ternary_norm_mc(cfg, n_grid=33):
    """Magnitude-grid scan with the Monte Carlo sphere integral (d = 3)."""
    rmax = np.sqrt(2.0 / 3.0)
    best = 0.0
    for a in np.linspace(0, rmax, n_grid):
        for b in np.linspace(0, rmax, n_grid):
            if not _valid_ellipsoid_pair(a, b):
                continue
            nu1, nu2 = _ellipsoid_nu_d(a, b, cfg.d)
            best = max(best, _ternary_angular_integral_mc(cfg, nu1, nu2, n=50_000))
    if not np.isfinite(best):
        raise UnintegrableAngularDensity("ternary angular norm is not finite")
    return float(best)


def _ellipsoid_nu_d(n1, n2, d):
    """Representative pair in R^{2d} with the ellipsoid-forced inner product."""
    c = n1 ** 2 + n2 ** 2 - 0.5
    denom = n1 * n2
    cos_t = 0.0 if denom == 0.0 else float(np.clip(c / denom, -1.0, 1.0))
    sin_t = np.sqrt(max(0.0, 1.0 - cos_t ** 2))
    nu1 = np.zeros(d)
    nu2 = np.zeros(d)
    nu1[0] = n1
    nu2[0] = n2 * cos_t
    nu2[1] = n2 * sin_t
    return nu1, nu2


def _valid_ellipsoid_pair(n1, n2):
    """(n1, n2) magnitudes realizable on the ellipsoid (Cauchy-Schwarz check)."""
    c = n1 ** 2 + n2 ** 2 - 0.5
    return abs(c) <= n1 * n2 + 1e-12


_NORM_CACHE = {}


def _table_key(table):
    import hashlib
    if table is None:
        return "none"
    payload = table.vals.tobytes()
    return hashlib.sha1(payload).hexdigest()


def angular_norm(cfg: KernelConfig, kind):
    """L^1 angular norm: sphere integral (binary) or ellipsoid sup (ternary)."""
    if kind == "binary":
        key = ("binary", cfg.d, _table_key(cfg.b2))
        if key not in _NORM_CACHE:
            _NORM_CACHE[key] = _binary_norm(cfg)
        return _NORM_CACHE[key]
    if kind == "ternary":
        key = ("ternary", cfg.d, _table_key(cfg.b3))
        if key not in _NORM_CACHE:
            _NORM_CACHE[key] = _ternary_norm(cfg)
        return _NORM_CACHE[key]
    raise ValueError(f"unknown kind {kind!r}")


def build_a3_table(cfg, n=129, quad=(24, 24, 48)):
    """Angular integral of b3 tabulated over the ellipsoid invariants.

    By diagonal rotation invariance the S^3 integral depends only on
    (|nu1|, |nu2|); on the ellipsoid the inner product nu1.nu2 is then
    fixed, so a 2-D table suffices.  Off-ellipsoid nodes (needed so the
    valid region is fully covered by interpolation cells) clamp the forced
    inner product, giving a smooth extension that is exact on the valid
    region.  Returns (r_nodes, table) for bilinear lookup.
    """
    if cfg.d != 2:
        raise ValueError("the tabulated angular integral is d = 2 only")
    if cfg.b3 is None:
        rs = np.linspace(0.0, 1.0, 3)
        return rs, np.zeros((3, 3))
    rmax = np.sqrt(2.0 / 3.0) * 1.0001
    rs = np.linspace(0.0, rmax, n)
    pairs = np.array([(a, b) for a in rs for b in rs])
    table = _a3_batch(cfg, pairs, quad).reshape(n, n)
    return rs, table
