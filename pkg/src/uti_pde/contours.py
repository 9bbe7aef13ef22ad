"""Spectral-plane contours and a generic oriented contour quadrature engine.

The heat formulas integrate over the boundary of the wedge
pi/4 < arg k < 3pi/4 ("boundary_d": incoming ray at 3pi/4, outgoing at pi/4).
The third-order formulas use hyperbola branches on which k^3 - k stays real,

    gamma(y) = sqrt((y^2+1)/3) + i y,   y >= 0   (right branch),

together with real-axis pieces:

* "kdv_c_plus":  left branch incoming, real segment (-1/sqrt3, 1/sqrt3)
  rightward, right branch outgoing.
* "kdv_c_minus": two continuous paths — real (-inf, -1/sqrt3) rightward then
  left branch outgoing, and right branch incoming then real (1/sqrt3, inf)
  rightward.
* "kdv_hyperbola_only": the two branches alone, oriented as in c_minus.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._numerics import QuadratureError, panel_nodes

SQRT3 = math.sqrt(3.0)


class TruncationError(QuadratureError):
    pass


@dataclass(frozen=True)
class Piece:
    """One parametrized segment s in [a, b] -> z(s), with derivative dz(s)."""

    a: float
    b: float
    z: Callable[[np.ndarray], np.ndarray]
    dz: Callable[[np.ndarray], np.ndarray]
    orientation: int = 1
    unbounded: bool = False
    far_end: Optional[str] = None  # "a" or "b": which end was truncated
    label: str = ""


@dataclass(frozen=True)
class ContourPath:
    pieces: tuple
    truncation_radius: float

    def __post_init__(self):
        if self.truncation_radius <= 0:
            raise ValueError("truncation_radius must be positive")


@dataclass(frozen=True)
class QuadratureRule:
    panels_per_piece: int = 64
    nodes_per_panel: int = 12
    tail_tolerance: float = 1e-10
    oscillatory_strategy: str = "tau_substitution"  # or "plain_panels"

    def __post_init__(self):
        if self.nodes_per_panel < 2:
            raise ValueError("nodes_per_panel must be >= 2")
        if self.tail_tolerance <= 0:
            raise ValueError("tail_tolerance must be positive")
        if self.oscillatory_strategy not in ("tau_substitution", "plain_panels"):
            raise ValueError("unknown oscillatory strategy")


def gamma(y):
    """Right hyperbola branch; k^3 - k is real along it."""
    y = np.asarray(y, dtype=float)
    return np.sqrt((y * y + 1.0) / 3.0) + 1j * y


def gamma_prime(y):
    y = np.asarray(y, dtype=float)
    return y / np.sqrt(3.0 * (y * y + 1.0)) + 1j


def _ray(angle: float, R: float, orientation: int, label: str) -> Piece:
    e = cmath.exp(1j * angle)
    return Piece(0.0, R, lambda s, e=e: s * e, lambda s, e=e: np.full_like(s, e, dtype=complex),
                 orientation=orientation, unbounded=True, far_end="b", label=label)


def _real_piece(a: float, b: float, unbounded: bool, far_end, label: str) -> Piece:
    return Piece(a, b, lambda s: s.astype(complex), lambda s: np.ones_like(s, dtype=complex),
                 orientation=1, unbounded=unbounded, far_end=far_end, label=label)


def _branch_piece(side: str, Y: float, orientation: int, label: str) -> Piece:
    if side == "right":
        return Piece(0.0, Y, lambda y: gamma(y), lambda y: gamma_prime(y),
                     orientation=orientation, unbounded=True, far_end="b", label=label)
    # left branch: -conj(gamma)
    return Piece(0.0, Y, lambda y: -np.conj(gamma(y)), lambda y: -np.conj(gamma_prime(y)),
                 orientation=orientation, unbounded=True, far_end="b", label=label)


def make_contour(kind: str, truncation_radius: float) -> ContourPath:
    if truncation_radius <= 0:
        raise ValueError("truncation_radius must be positive")
    R = truncation_radius
    if kind == "boundary_d":
        pieces = (_ray(3 * math.pi / 4, R, -1, "ray_3pi4_in"),
                  _ray(math.pi / 4, R, +1, "ray_pi4_out"))
    elif kind == "kdv_c_plus":
        pieces = (_branch_piece("left", R, -1, "c_left_in"),
                  _real_piece(-1 / SQRT3, 1 / SQRT3, False, None, "segment"),
                  _branch_piece("right", R, +1, "c_right_out"))
    elif kind == "kdv_c_minus":
        pieces = (_real_piece(-R, -1 / SQRT3, True, "a", "real_left"),
                  _branch_piece("left", R, +1, "c_left_out"),
                  _branch_piece("right", R, -1, "c_right_in"),
                  _real_piece(1 / SQRT3, R, True, "b", "real_right"))
    elif kind == "kdv_hyperbola_only":
        pieces = (_branch_piece("left", R, +1, "c_left_out"),
                  _branch_piece("right", R, -1, "c_right_in"))
    else:
        raise ValueError(f"unknown contour kind {kind!r}")
    return ContourPath(pieces=pieces, truncation_radius=R)


def integrate(path: ContourPath, rule: QuadratureRule, integrand) -> complex:
    """Oriented panel quadrature of integrand(k) dk over the path.

    Deterministic for a fixed rule. Raises QuadratureError when the integrand
    is non-finite at a node, TruncationError when the outermost panel of a
    truncated piece still contributes more than the tail tolerance.
    """
    total = 0.0 + 0.0j
    for piece in path.pieces:
        edges = np.linspace(piece.a, piece.b, rule.panels_per_piece + 1)
        nodes, weights = panel_nodes(edges, rule.nodes_per_panel)
        z = piece.z(nodes)
        f = np.asarray(integrand(z), dtype=complex)
        bad = ~np.isfinite(f)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise QuadratureError(
                f"integrand not finite at node k={z[i]} on piece {piece.label!r}")
        contrib = f * piece.dz(nodes) * weights
        per_panel = contrib.reshape(rule.panels_per_piece, rule.nodes_per_panel).sum(axis=1)
        if piece.unbounded and piece.far_end is not None:
            tail_est = abs(per_panel[0] if piece.far_end == "a" else per_panel[-1])
            if tail_est > rule.tail_tolerance:
                raise TruncationError(
                    f"tail estimate {tail_est:.3e} above tolerance on piece "
                    f"{piece.label!r}; increase the truncation radius",
                    estimate=tail_est)
        total += piece.orientation * per_panel.sum()
    return complex(total)


# ---------------------------------------------------------------------------
# dispersion roots
# ---------------------------------------------------------------------------

def _canonical(u):
    """Force +0 imaginary part so the square-root cut is approached from above."""
    u = np.asarray(u, dtype=complex)
    return np.where(u.imag == 0.0, u.real + 0.0j, u)


def nu(k):
    """Companion dispersion root -k/2 + sqrt(1 - 3k^2/4), principal branch.

    Satisfies nu^3 - nu = k^3 - k for every complex k (any branch does).
    On the real pieces |k| > 2/sqrt(3) the cut is resolved from above,
    giving +i sqrt(3k^2/4 - 1).
    """
    k = np.asarray(k, dtype=complex)
    scalar = k.ndim == 0
    k = np.atleast_1d(k)
    u = _canonical(1.0 - 0.75 * k * k)
    out = -0.5 * k + np.sqrt(u)
    return complex(out[0]) if scalar else out


def nu_symmetric(k):
    """Schwarz-symmetrized root: nu(k) for Re k >= 0, -conj(nu(-conj k)) else.

    Equal to nu() on the real pieces with |k| >= 2/sqrt(3); on left-half-plane
    curved pieces it selects the reflected root so that contour integrands
    built from it pair into real values for real data.
    """
    k = np.asarray(k, dtype=complex)
    scalar = k.ndim == 0
    k = np.atleast_1d(k)
    right = nu(np.where(k.real >= 0, k, -np.conj(k)))
    out = np.where(k.real >= 0, right, -np.conj(right))
    return complex(out[0]) if scalar else out


def real_branch_k(tau: float) -> float:
    """Real root of -(k^3 - k) = tau on the branch |k| >= 1.

    Maps (0, inf) -> (-inf, -1] and (-inf, 0) -> [1, inf); the sign of k is
    opposite to the sign of tau.  At tau = +-0.0 the limit from that side is
    returned (k = -1 for +0.0, k = +1 for -0.0).
    """
    if tau == 0.0:
        return -math.copysign(1.0, tau)
    if tau < 0.0:
        return -real_branch_k(-tau)
    # tau > 0: root k <= -1 of f(k) = k^3 - k + tau
    lo, hi = -(1.0 + np.cbrt(tau) + 1.0), -1.0
    k = -(1.0 + np.cbrt(tau))
    for _ in range(100):
        f = k**3 - k + tau
        df = 3.0 * k * k - 1.0
        step = f / df
        k_new = k - step
        if not (lo <= k_new <= hi):  # fall back to bisection inside bracket
            if f > 0:
                hi = k
            else:
                lo = k
            k_new = 0.5 * (lo + hi)
        if abs(k_new - k) <= 1e-16 * (1.0 + abs(k_new)):
            k = k_new
            break
        k = k_new
    residual = abs(-(k**3 - k) - tau)
    if residual > 1e-12 * (1.0 + abs(tau)):
        raise QuadratureError(f"cubic root residual {residual:.3e} too large")
    return float(k)
