"""Quadrature rules: Gauss-Legendre boxes, the circle, and the 3-sphere."""

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = ["gl_interval", "gl_box", "circle_rule", "sphere3_rule"]


def gl_interval(a, b, n):
    """Gauss-Legendre nodes/weights on [a, b]."""
    x, w = leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def gl_box(R, n, dim):
    """Tensor Gauss-Legendre rule on [-R, R]^dim; returns (nodes, weights)."""
    x, w = gl_interval(-R, R, n)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(1)
    for _ in range(dim):
        weights = np.multiply.outer(weights, w).ravel()
    return nodes, weights


def circle_rule(n, offset=0.5):
    """Midpoint rule on S^1: n equally spaced directions, weights 2*pi/n.

    The half-step offset keeps nodes away from the axes, which improves
    accuracy for kernels with kinks at z = 0 (e.g. hard spheres).
    """
    theta = (np.arange(n) + offset) * (2.0 * np.pi / n)
    nodes = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    weights = np.full(n, 2.0 * np.pi / n)
    return nodes, weights


def sphere3_rule(n_psi, n_theta, n_phi):
    """Hyperspherical rule on S^3 in R^4.

    omega = (cos psi, sin psi cos theta, sin psi sin theta cos phi,
             sin psi sin theta sin phi) with surface measure
    sin^2(psi) sin(theta) dpsi dtheta dphi; Gauss-Legendre in psi and
    cos(theta), midpoint in phi.  Total weight is 2*pi^2.
    """
    psi, wp = gl_interval(0.0, np.pi, n_psi)
    z, wz = gl_interval(-1.0, 1.0, n_theta)  # z = cos(theta)
    phi = (np.arange(n_phi) + 0.5) * (2.0 * np.pi / n_phi)
    wf = 2.0 * np.pi / n_phi

    sp, cp = np.sin(psi), np.cos(psi)
    st = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    P, T, F = np.meshgrid(np.arange(n_psi), np.arange(n_theta), np.arange(n_phi),
                          indexing="ij")
    P, T, F = P.ravel(), T.ravel(), F.ravel()
    omega = np.stack([
        cp[P],
        sp[P] * z[T],
        sp[P] * st[T] * np.cos(phi[F]),
        sp[P] * st[T] * np.sin(phi[F]),
    ], axis=-1)
    weights = (wp[P] * sp[P] ** 2) * wz[T] * wf
    return omega, weights
