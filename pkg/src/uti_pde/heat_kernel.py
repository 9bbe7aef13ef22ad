"""Heat-reduction kernel: the one-sided function Lambda_ell, its derivative,
uniform bound, self-convolution (the Volterra kernel of the boundary-data
integral equation), and the contour identity tying it to the spectral plane.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ._numerics import QuadratureError, panel_nodes
from . import contours


class OrderNotImplementedError(NotImplementedError):
    pass


class TruncationError(QuadratureError):
    """Truncation radius too small for the requested tail tolerance."""


@dataclass(frozen=True)
class LambdaKernel:
    ell: float

    def __post_init__(self):
        if self.ell <= 0:
            raise ValueError("ell must be positive")


def lambda_eval(k: LambdaKernel, sigma, order: int = 0):
    """Lambda_ell(sigma) (order 0) or its first derivative (order 1).

    Vanishes identically for sigma <= 0; for sigma > 0,
    order 0 gives e^{-ell^2/4 sigma} / sigma^{3/2} and order 1 gives
    (ell^2 - 6 sigma) e^{-ell^2/4 sigma} / (4 sigma^{7/2}).
    Higher orders exist but are never needed numerically.
    """
    if order not in (0, 1):
        raise OrderNotImplementedError(f"order {order} not implemented")
    sigma = np.asarray(sigma, dtype=float)
    scalar = sigma.ndim == 0
    sigma = np.atleast_1d(sigma)
    out = np.zeros_like(sigma)
    pos = sigma > 0
    s = sigma[pos]
    with np.errstate(under="ignore"):
        expf = np.exp(-k.ell**2 / (4.0 * s))
        if order == 0:
            out[pos] = expf / s**1.5
        else:
            out[pos] = (k.ell**2 - 6.0 * s) / (4.0 * s**3.5) * expf
    return float(out[0]) if scalar else out


def lambda_bound(k: LambdaKernel) -> float:
    """Uniform bound (6/(e ell^2))^{3/2} for Lambda_ell over the real line."""
    return (6.0 / (math.e * k.ell**2)) ** 1.5


def lambda_selfconv(k: LambdaKernel, tau: float, tol: float = 1e-10) -> float:
    """K(tau) = integral_0^tau Lambda(tau-z) Lambda(z) dz to absolute error tol.

    The integrand is smooth and flat at both endpoints, so plain
    Gauss-Legendre panels converge fast; panel count doubles until two
    successive values agree within tol/2.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if tau <= 0:
        return 0.0

    def value(n_panels):
        edges = np.linspace(0.0, tau, n_panels + 1)
        nodes, weights = panel_nodes(edges, 12)
        f = lambda_eval(k, tau - nodes) * lambda_eval(k, nodes)
        return float(np.sum(f * weights))

    prev = value(4)
    for n_panels in (8, 16, 32, 64, 128, 256, 512):
        cur = value(n_panels)
        if abs(cur - prev) <= 0.5 * tol:
            return cur
        prev = cur
    raise QuadratureError("self-convolution quadrature did not converge",
                          estimate=abs(cur - prev))


def selfconv_table(k: LambdaKernel, tau_max: float, n: int = 2049,
                   tol: float = 1e-12) -> CubicSpline:
    """Dense table of the self-convolution kernel on [0, tau_max] as a spline.

    K is smooth and flat at 0, so a cubic spline of a fine table carries the
    full accuracy of the pointwise values. Solvers evaluate this spline inside
    every Volterra pass instead of re-integrating.
    """
    taus = np.linspace(0.0, tau_max, n)
    vals = np.empty_like(taus)
    vals[0] = 0.0
    # one fixed high-order panelization is cheaper than per-point adaptivity
    x, w = np.polynomial.legendre.leggauss(24)
    for i, tau in enumerate(taus[1:], start=1):
        edges = np.linspace(0.0, tau, 24 + 1)
        a = edges[:-1]
        h = np.diff(edges)
        nodes = (a[:, None] + 0.5 * h[:, None] * (x[None, :] + 1.0)).ravel()
        weights = (0.5 * h[:, None] * w[None, :]).ravel()
        f = lambda_eval(k, tau - nodes) * lambda_eval(k, nodes)
        vals[i] = np.sum(f * weights)
    spline = CubicSpline(taus, vals, bc_type=((1, 0.0), "not-a-knot"))
    return spline


def dp_required_radius(ell: float, tol: float) -> float:
    """Radius R with the analytic wedge-ray tail below tol.

    On both rays |e^{i lambda ell}| = e^{-rho ell/sqrt 2} while the time
    factor has unit modulus, so the tail of |lambda| e^{i lambda ell - ...}
    is bounded by 2 * e^{-c R} (R/c + 1/c^2) with c = ell/sqrt(2).
    """
    c = ell / math.sqrt(2.0)
    R = 10.0 / c
    for _ in range(200):
        tail = 2.0 * math.exp(-c * R) * (R / c + 1.0 / c**2)
        if tail <= tol:
            return R
        R *= 1.15
    raise TruncationError("no feasible truncation radius for this tolerance")


def dp_identity_check(k: LambdaKernel, sigma: float,
                      rule: "contours.QuadratureRule",
                      truncation_radius: float | None = None):
    """Quadrature of the wedge-boundary integral against its closed form.

    Returns (quadrature_value, closed_form, abs_error) where the closed form
    is i sqrt(pi) ell Lambda_ell(sigma) / 2 (zero for sigma <= 0).
    """
    tol = rule.tail_tolerance
    R_needed = dp_required_radius(k.ell, tol / 10.0)
    if truncation_radius is not None:
        if truncation_radius < R_needed:
            raise TruncationError(
                f"truncation radius {truncation_radius} too small; "
                f"tail bound needs R >= {R_needed:.2f} for tolerance {tol}")
        R = truncation_radius
    else:
        R = R_needed

    path = contours.make_contour("boundary_d", R)

    def integrand(lam):
        return np.exp(1j * lam * k.ell - lam**2 * sigma) * lam

    # double panel count until two successive quadratures agree
    panels = max(rule.panels_per_piece, 16)
    prev = None
    for _ in range(12):
        r = contours.QuadratureRule(panels_per_piece=panels,
                                    nodes_per_panel=rule.nodes_per_panel,
                                    tail_tolerance=tol)
        val = contours.integrate(path, r, integrand)
        if prev is not None and abs(val - prev) <= tol / 10.0:
            break
        prev = val
        panels *= 2
    else:
        raise QuadratureError("wedge-boundary quadrature did not converge",
                              estimate=abs(val - prev))

    closed = 0.5j * math.sqrt(math.pi) * k.ell * lambda_eval(k, sigma)
    return val, closed, abs(val - closed)
