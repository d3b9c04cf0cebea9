"""Pre/post velocity transformations for binary and ternary interactions.

All maps are vectorized over leading axes: velocity arguments have shape
(..., d).  Both maps are involutions and conserve momentum and kinetic
energy exactly (up to double-precision roundoff, budget 1e-12 relative).
"""

import numpy as np

__all__ = [
    "binary_map",
    "ternary_map",
    "u_tilde_mag",
    "sample_impact",
    "relative_velocity_directions",
    "ellipsoid_residual",
    "sample_binary_frames",
    "sample_ternary_frames",
]

_UNIT_TOL = 1e-12


def _dot(a, b):
    return np.sum(a * b, axis=-1)


def binary_map(v, v1, omega, check=True):
    """Specular exchange along the impact direction omega in S^{d-1}.

    Returns (v', v1') with v' = v + (omega.u) omega and v1' = v1 - (omega.u) omega,
    where u = v1 - v.  Rejects non-unit omega.
    """
    v = np.asarray(v, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if check:
        err = np.abs(_dot(omega, omega) - 1.0)
        if np.any(err > _UNIT_TOL):
            raise ValueError(f"omega not on the unit sphere (max |.|^2-1 = {err.max():.2e})")
    proj = _dot(omega, v1 - v)[..., None] * omega
    return v + proj, v1 - proj


def ternary_map(v, v1, v2, omega1, omega2, check=True):
    """Three-body exchange parametrized by (omega1, omega2) in S^{2d-1}.

    The pair must satisfy |omega1|^2 + |omega2|^2 = 1, which forces
    1 + omega1.omega2 >= 1/2, so the denominator never vanishes.
    """
    v = np.asarray(v, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    omega1 = np.asarray(omega1, dtype=float)
    omega2 = np.asarray(omega2, dtype=float)
    if check:
        err = np.abs(_dot(omega1, omega1) + _dot(omega2, omega2) - 1.0)
        if np.any(err > _UNIT_TOL):
            raise ValueError(
                f"(omega1, omega2) not on S^(2d-1) (max |.|^2-1 = {err.max():.2e})")
    num = _dot(omega1, v1 - v) + _dot(omega2, v2 - v)
    lam = (num / (1.0 + _dot(omega1, omega2)))[..., None]
    return (v + lam * (omega1 + omega2),
            v1 - lam * omega1,
            v2 - lam * omega2)


def u_tilde_mag(v, v1, v2):
    """Symmetric relative-speed magnitude sqrt(|v-v1|^2+|v-v2|^2+|v1-v2|^2)."""
    v = np.asarray(v, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    return np.sqrt(_dot(v - v1, v - v1) + _dot(v - v2, v - v2) + _dot(v1 - v2, v1 - v2))


def relative_velocity_directions(v, v1, v2):
    """Normalized pre-collisional pair (u1, u2)/|u~| on the ellipsoid E^{2d-1}.

    Undefined when all three velocities coincide; callers must guard
    (degenerate samples carry zero kernel weight and are skipped).
    """
    mag = u_tilde_mag(v, v1, v2)[..., None]
    return (v1 - v) / mag, (v2 - v) / mag


def ellipsoid_residual(nu1, nu2):
    """|nu1|^2 + |nu2|^2 + |nu1-nu2|^2 - 1 (zero on the ellipsoid)."""
    return _dot(nu1, nu1) + _dot(nu2, nu2) + _dot(nu1 - nu2, nu1 - nu2) - 1.0


def sample_impact(kind, d, n, rng):
    """Uniform impact directions: omega on S^{d-1} or (omega1, omega2) on S^{2d-1}.

    Normalized Gaussian vectors; dimension-agnostic and unbiased.
    """
    if kind == "binary":
        g = rng.standard_normal((n, d))
        return g / np.linalg.norm(g, axis=-1, keepdims=True)
    if kind == "ternary":
        g = rng.standard_normal((n, 2 * d))
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        return g[:, :d], g[:, d:]
    raise ValueError(f"unknown interaction kind: {kind!r}")


def sample_binary_frames(n, d, rng, vscale=1.0):
    """Random binary frames: pre/post velocities and impact direction."""
    v = vscale * rng.standard_normal((n, d))
    v1 = vscale * rng.standard_normal((n, d))
    omega = sample_impact("binary", d, n, rng)
    vp, v1p = binary_map(v, v1, omega)
    return {"v": v, "v1": v1, "omega": omega, "vp": vp, "v1p": v1p}


def sample_ternary_frames(n, d, rng, vscale=1.0):
    """Random ternary frames: pre/post velocities and impact pair."""
    v = vscale * rng.standard_normal((n, d))
    v1 = vscale * rng.standard_normal((n, d))
    v2 = vscale * rng.standard_normal((n, d))
    omega1, omega2 = sample_impact("ternary", d, n, rng)
    vs, v1s, v2s = ternary_map(v, v1, v2, omega1, omega2)
    return {"v": v, "v1": v1, "v2": v2, "omega1": omega1, "omega2": omega2,
            "vs": vs, "v1s": v1s, "v2s": v2s}


def binary_conservation_residuals(frame):
    """Max relative momentum/energy violation and specular identity residuals."""
    v, v1, vp, v1p, om = (frame[k] for k in ("v", "v1", "vp", "v1p", "omega"))
    scale_p = 1.0 + np.abs(v + v1).max(axis=-1)
    mom = np.abs(vp + v1p - v - v1).max(axis=-1) / scale_p
    e_pre = _dot(v, v) + _dot(v1, v1)
    en = np.abs(_dot(vp, vp) + _dot(v1p, v1p) - e_pre) / (1.0 + e_pre)
    u, up = v1 - v, v1p - vp
    spec = np.abs(_dot(om, up) + _dot(om, u)) / (1.0 + np.abs(_dot(om, u)))
    umag = np.abs(np.sqrt(_dot(up, up)) - np.sqrt(_dot(u, u))) / (1.0 + np.sqrt(_dot(u, u)))
    return {"momentum": mom, "energy": en, "specular": spec, "u_mag": umag}


def ternary_conservation_residuals(frame):
    v, v1, v2 = frame["v"], frame["v1"], frame["v2"]
    vs, v1s, v2s = frame["vs"], frame["v1s"], frame["v2s"]
    om1, om2 = frame["omega1"], frame["omega2"]
    scale_p = 1.0 + np.abs(v + v1 + v2).max(axis=-1)
    mom = np.abs(vs + v1s + v2s - v - v1 - v2).max(axis=-1) / scale_p
    e_pre = _dot(v, v) + _dot(v1, v1) + _dot(v2, v2)
    en = np.abs(_dot(vs, vs) + _dot(v1s, v1s) + _dot(v2s, v2s) - e_pre) / (1.0 + e_pre)
    ut, uts = u_tilde_mag(v, v1, v2), u_tilde_mag(vs, v1s, v2s)
    umag = np.abs(uts - ut) / (1.0 + ut)
    # omega . u_bar* = -omega . u_bar, written via the unnormalized pair
    pre = _dot(om1, v1 - v) + _dot(om2, v2 - v)
    post = _dot(om1, v1s - vs) + _dot(om2, v2s - vs)
    spec = np.abs(post + pre) / (1.0 + np.abs(pre))
    return {"momentum": mom, "energy": en, "specular": spec, "u_tilde": umag}
