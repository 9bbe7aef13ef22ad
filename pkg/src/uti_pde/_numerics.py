"""Internal numerical helpers shared by the formula evaluators.

Contents: stable exponential phi-functions, Gauss-Legendre panel quadrature
with phase-aware panel grading, and exact exponential moments of piecewise
polynomials (used to integrate splines against e^{s z} without cancellation).
"""
from __future__ import annotations

import numpy as np


class QuadratureError(RuntimeError):
    """Quadrature failed to reach the requested accuracy."""

    def __init__(self, message: str, estimate: float | None = None):
        super().__init__(message)
        self.estimate = estimate


# ---------------------------------------------------------------------------
# phi functions: phi1(z) = (e^z - 1)/z and friends, stable for small |z|
# ---------------------------------------------------------------------------

def phi1(z):
    """(e^z - 1)/z, entire, evaluated without cancellation."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < 0.25
    zs = z[small]
    # truncated Taylor series; |z| < 0.25 makes the tail < 1e-18
    acc = np.ones_like(zs)
    term = np.ones_like(zs)
    for n in range(2, 18):
        term = term * zs / n
        acc = acc + term
    out[small] = acc
    zb = z[~small]
    out[~small] = np.where(zb != 0, (np.exp(zb) - 1.0) / np.where(zb != 0, zb, 1.0), 1.0)
    return out


def exp_integral(s, t):
    """E(s, t) = integral_0^t e^{s z} dz = t * phi1(s t)."""
    s = np.asarray(s, dtype=complex)
    return t * phi1(s * t)


def poly_exp_moments(z, mmax: int):
    """g_m(z) = integral_0^1 u^m e^{z u} du for m = 0..mmax.

    Returns an array of shape (mmax+1,) + z.shape.  Uses the upward
    recursion g_m = (e^z - m g_{m-1})/z for moderate |z| and the Taylor
    series for small |z| where the recursion cancels.
    """
    z = np.asarray(z, dtype=complex)
    out = np.empty((mmax + 1,) + z.shape, dtype=complex)
    small = np.abs(z) < 0.5
    zs = z[small]
    for m in range(mmax + 1):
        # g_m(z) = sum_n z^n / (n! (m+n+1))
        acc = np.full_like(zs, 1.0 / (m + 1))
        term = np.ones_like(zs)
        for n in range(1, 22):
            term = term * zs / n
            acc = acc + term / (m + n + 1)
        out[m][...] = 0
        out[m][small] = acc
    zb = z[~small]
    ez = np.exp(zb)
    g = (ez - 1.0) / zb
    out[0][~small] = g
    for m in range(1, mmax + 1):
        g = (ez - m * g) / zb
        out[m][~small] = g
    return out


# ---------------------------------------------------------------------------
# Gauss-Legendre panels
# ---------------------------------------------------------------------------

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gl_rule(n: int):
    if n not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (x, w)
    return _GL_CACHE[n]


def panel_nodes(edges: np.ndarray, nodes_per_panel: int):
    """Nodes and weights of composite Gauss-Legendre panels over given edges."""
    x, w = gl_rule(nodes_per_panel)
    a = edges[:-1]
    h = np.diff(edges)
    nodes = (a[:, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


def graded_edges(a: float, b: float, density, nodes_per_panel: int = 12,
                 phase_per_node: float = 0.7, min_panels: int = 2,
                 max_panels: int = 400000):
    """Panel edges on [a, b] sized so each panel sees a bounded phase increment.

    ``density(x)`` is (an upper bound for) the local phase derivative in
    radians per unit length.  Panels are sized so the phase increment per
    panel stays below phase_per_node * nodes_per_panel, which keeps the
    Gauss-Legendre error of analytic oscillatory integrands near round-off.
    """
    edges = [a]
    x = a
    span = b - a
    budget = phase_per_node * nodes_per_panel
    n = 0
    while x < b:
        d = max(float(density(x)), 1e-12)
        h = min(budget / d, span / min_panels)
        d2 = max(float(density(min(x + h, b))), 1e-12)
        if d2 > d:  # density grows to the right; respect the bound there
            h = min(h, budget / d2)
        h = max(h, span * 1e-8)
        x = min(x + h, b)
        edges.append(x)
        n += 1
        if n > max_panels:
            raise QuadratureError("phase-graded paneling exceeded panel budget")
    return np.asarray(edges)


def integrate_graded(f, a: float, b: float, density, nodes_per_panel: int = 12):
    """Integrate f over [a, b] with phase-graded Gauss-Legendre panels."""
    edges = graded_edges(a, b, density, nodes_per_panel)
    nodes, weights = panel_nodes(edges, nodes_per_panel)
    return np.sum(f(nodes) * weights, axis=-1)
