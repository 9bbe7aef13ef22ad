"""Boundary-data solvers for the reduced finite-interval heat problem.

The unknown left/right half-line data (a, b) solve a Volterra integral
equation whose kernel is the self-convolution K of the one-sided reduction
kernel:  a(t) = g(t) + (ell^2/4pi) * integral_0^t K(t-r) a(r) dr, and
b(t) = -v[a](ell, t).  Solvers:

* picard_solve      — fixed-point iteration under the contraction certificate
* collocation_solve — sine-basis collocation (dense square system)
* marching_solve    — windowed fixed-point for horizons beyond the certificate
* varcoeff_solve    — time-dependent diffusion via the rescaled clock D(t)

All iteration happens in sample space on the given grid; only the recovery of
b and the residual fields touch the contour formulas.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_simpson

from ._numerics import QuadratureError, graded_edges, panel_nodes
from .contours import QuadratureRule
from .core import (BoundarySignal, Certificate, SolutionField, SpaceGrid,
                   TimeGrid, ValidationError, l2_norm_values)
from .heat_kernel import LambdaKernel, selfconv_table
from .heat_formulas import (DEFAULT_RULE, _sine_modes, field_q, field_v,
                            tilde_grid)


class CertificateError(RuntimeError):
    """The contraction certificate refuses this solve."""


class PicardError(RuntimeError):
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = list(log or [])


class IllConditionedError(RuntimeError):
    pass


class MarchingError(RuntimeError):
    pass


@dataclass(frozen=True)
class HeatScenario:
    ell: float
    t_end: float
    g: BoundarySignal
    diffusion: Optional[Callable] = None  # d(t) > 0; None means d == 1

    def __post_init__(self):
        if self.ell <= 0 or self.t_end <= 0:
            raise ValidationError("ell and t_end must be positive")


@dataclass(frozen=True)
class ReductionResult:
    a: BoundarySignal
    b: BoundarySignal
    certificate: Certificate
    solver_tag: str
    iteration_log: tuple
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

def contraction_factor_heat(ell: float, t_end: float) -> float:
    return 18.0 * math.sqrt(3.0) * t_end**2 / (math.pi * math.e**3 * ell**4)


def admissible_horizon_ratio() -> float:
    """Largest admissible t_end / ell^2 (equality case of the certificate)."""
    return math.sqrt(math.pi) * math.e**1.5 / (2.0 * 3.0**1.25)


def contraction_check_heat(ell: float, t_end: float) -> Certificate:
    if ell <= 0 or t_end <= 0:
        raise ValidationError("ell and t_end must be positive")
    return Certificate.from_factor(contraction_factor_heat(ell, t_end))


# ---------------------------------------------------------------------------
# Volterra machinery
# ---------------------------------------------------------------------------

def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    """Rows of cumulative trapezoid weights: W[i, j] integrates over [0, t_i]."""
    n = nodes.size
    W = np.zeros((n, n))
    h = np.diff(nodes)
    for i in range(1, n):
        W[i, 0] = h[0] / 2.0
        W[i, 1:i] = (h[:i - 1] + h[1:i]) / 2.0
        W[i, i] = h[i - 1] / 2.0
    return W


def volterra_matrix(ell: float, nodes: np.ndarray, kspline,
                    clock: Optional[np.ndarray] = None,
                    dweights: Optional[np.ndarray] = None) -> np.ndarray:
    """Matrix M with (M a)_i = (ell^2/4pi) int_0^{t_i} K(D_i - D_j) a d(r) dr."""
    clock = nodes if clock is None else clock
    n = nodes.size
    diffs = clock[:, None] - clock[None, :]
    Kv = np.where(diffs > 0, kspline(np.clip(diffs, 0.0, None)), 0.0)
    M = _trapezoid_weights(nodes) * Kv
    if dweights is not None:
        M = M * dweights[None, :]
    return (ell**2 / (4.0 * math.pi)) * M


def apply_phi_heat(g_vals: np.ndarray, M: np.ndarray, a_vals: np.ndarray):
    """One application of the boundary-data map a -> g + (Volterra part) a."""
    return g_vals + M @ a_vals


def _picard_iterate(g_vals, M, nodes, tol, max_iter):
    a = g_vals.copy()
    log = []
    for _ in range(max_iter):
        a_new = apply_phi_heat(g_vals, M, a)
        r = l2_norm_values(a_new - a, nodes)
        log.append(r)
        a = a_new
        if r <= tol:
            return a, log
    raise PicardError(f"no convergence in {max_iter} iterations "
                      f"(last residual {log[-1]:.3e})", log)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def picard_solve(sc: HeatScenario, grid: TimeGrid, tol: float = 1e-10,
                 max_iter: int = 60,
                 rule: QuadratureRule = DEFAULT_RULE) -> ReductionResult:
    """Fixed-point solve of the boundary-data equation on the grid."""
    if tol <= 0:
        raise ValidationError("tol must be positive")
    cert = contraction_check_heat(sc.ell, grid.t_end)
    if not cert.admissible:
        raise CertificateError(
            f"contraction factor {cert.contraction_factor:.4f} exceeds "
            f"{cert.threshold}; use marching_solve for this horizon")
    kern = LambdaKernel(sc.ell)
    kspline = selfconv_table(kern, grid.t_end)
    g_vals = sc.g(grid.nodes)
    M = volterra_matrix(sc.ell, grid.nodes, kspline)
    a_vals, log = _picard_iterate(g_vals, M, grid.nodes, tol, max_iter)
    a = BoundarySignal.samples(grid, a_vals, compatible=bool(a_vals[0] == 0.0))
    b = recover_b(a, sc.ell, grid, rule)
    return ReductionResult(a=a, b=b, certificate=cert, solver_tag="picard",
                           iteration_log=tuple(log))


def recover_b(a: BoundarySignal, ell: float, grid: TimeGrid,
              rule: QuadratureRule = DEFAULT_RULE) -> BoundarySignal:
    """Right-boundary datum b(t) = -(1/i pi) int e^{ik ell - k^2 t} k a~ dk.

    Direct ray quadrature: at x = ell the rays decay like e^{-rho ell/sqrt2},
    so a modest truncation radius reaches the tail tolerance.  The value
    equals -v[a](ell, t); the cross-check against the real-line backend of
    evaluate_v is exercised in the tests.
    """
    c = ell / math.sqrt(2.0)
    R = 10.0 / c
    while 2.0 * math.exp(-c * R) * (R / c + 1.0 / c**2) > rule.tail_tolerance:
        R *= 1.1
    t_end = grid.t_end
    edges = graded_edges(0.0, R, lambda r: c + 2.0 * r * t_end + 0.5, 12)
    rho, wq = panel_nodes(edges, 12)

    b_vals = np.zeros(grid.n_nodes)
    total = np.zeros(grid.n_nodes, dtype=complex)
    for sgn, angle in ((+1, math.pi / 4), (-1, 3 * math.pi / 4)):
        e = complex(math.cos(angle), math.sin(angle))
        kk = rho * e
        k2 = kk * kk
        til = tilde_grid(a, k2, grid.nodes)  # (n_k, n_t)
        damp = np.exp(1j * kk[:, None] * ell - k2[:, None] * grid.nodes[None, :])
        total += sgn * ((kk * e * wq)[None, :] @ (damp * til)).ravel()
    vals = -(total / (1j * math.pi))
    if np.max(np.abs(vals.imag)) > 1e-6:
        raise QuadratureError("right-boundary recovery lost reality")
    b_vals = vals.real
    b_vals[grid.nodes == 0.0] = 0.0
    return BoundarySignal.samples(grid, b_vals, compatible=True)


def fit_sine_series(values: np.ndarray, nodes: np.ndarray, tau: float,
                    n_modes: int, cond_limit: float = 1e12) -> BoundarySignal:
    """Collocation fit of sampled values by the sine basis on (0, tau)."""
    interior = (nodes > 0) & (nodes < tau)
    tn = nodes[interior]
    if tn.size < n_modes:
        raise ValidationError("not enough interior nodes for the fit")
    # square collocation on the n_modes most informative (uniformly thinned) nodes
    pick = np.linspace(0, tn.size - 1, n_modes).round().astype(int)
    pick = np.unique(pick)
    while pick.size < n_modes:
        n_modes -= 1
        pick = np.unique(np.linspace(0, tn.size - 1, n_modes).round().astype(int))
    tsel = tn[pick]
    S = np.sin(np.outer(tsel, np.arange(1, n_modes + 1)) * (math.pi / tau))
    if np.linalg.cond(S) > cond_limit:
        raise IllConditionedError("sine fit system is ill-conditioned")
    coeffs = np.linalg.solve(S, values[interior][pick])
    return BoundarySignal.sine_series(tau, coeffs)


def collocation_solve(sc: HeatScenario, n_modes: int, tau_support: float,
                      collocation_nodes: Optional[np.ndarray] = None,
                      rule: QuadratureRule = DEFAULT_RULE,
                      cond_limit: float = 1e12,
                      b_grid_nodes: int = 0) -> ReductionResult:
    """Sine-basis collocation for the boundary-data equation.

    The unknown datum is expanded in n_modes sine modes supported on
    (0, tau_support) with tau_support > t_end (the basis forces a zero at its
    own support end, which the true datum does not satisfy at the horizon).
    The equation is enforced at the collocation nodes, by default the uniform
    interior nodes t_k = k t_end/(n_modes+1).
    """
    if n_modes < 1:
        raise ValidationError("need at least one mode")
    T = sc.t_end
    if tau_support <= T:
        raise ValidationError("tau_support must exceed the horizon")
    if collocation_nodes is None:
        # endpoint-inclusive nodes: leaving (t_M, T] unconstrained lets the
        # basis drift exactly where the horizon values matter most
        tk = np.arange(1, n_modes + 1) * T / n_modes
    else:
        tk = np.asarray(collocation_nodes, dtype=float)
        if tk.size != n_modes or np.any(tk <= 0) or np.any(tk >= tau_support):
            raise ValidationError(
                "need exactly n_modes interior nodes in (0, tau_support)")
    omegas = np.arange(1, n_modes + 1) * math.pi / tau_support

    kern = LambdaKernel(sc.ell)
    kspline = selfconv_table(kern, float(np.max(tk)) * (1 + 1e-12))
    S = np.sin(np.outer(tk, omegas))
    I = np.empty((n_modes, n_modes))
    for i, t in enumerate(tk):
        n_panels = max(8, int(math.ceil(t * (omegas[-1] + 2.0) / 6.0)))
        edges = np.linspace(0.0, t, n_panels + 1)
        r, w = panel_nodes(edges, 16)
        Kv = kspline(t - r)
        I[i] = (w * Kv) @ np.sin(np.outer(r, omegas))
    A = S - (sc.ell**2 / (4.0 * math.pi)) * I
    if np.linalg.cond(A) > cond_limit:
        raise IllConditionedError(
            "collocation system is ill-conditioned; reduce n_modes or move "
            "the nodes")
    coeffs = np.linalg.solve(A, sc.g(tk))
    a = BoundarySignal.sine_series(tau_support, coeffs)

    # right-boundary datum as fine samples (kept sample-valued: forcing it
    # into the same truncated basis rings between the collocation nodes)
    n_fine = b_grid_nodes if b_grid_nodes else 16 * (n_modes + 1) + 1
    b = recover_b(a, sc.ell, TimeGrid.uniform(T, n_fine), rule)

    cert = contraction_check_heat(sc.ell, T)
    return ReductionResult(a=a, b=b, certificate=cert,
                           solver_tag="collocation", iteration_log=(),
                           meta={"nodes": tk, "tau": tau_support})


def marching_solve(sc: HeatScenario, tol: float = 1e-11,
                   grid: Optional[TimeGrid] = None,
                   rule: QuadratureRule = DEFAULT_RULE,
                   max_iter: int = 200) -> ReductionResult:
    """Windowed fixed-point solve valid for any horizon.

    The window length is the certificate's equality horizon T0; windows
    advance by T0/2 on a shared global grid, each re-solving its first half
    (already fixed by the previous window) plus a fresh second half.  The
    overlap values must agree; a mismatch beyond 10*tol raises MarchingError.
    """
    T = sc.t_end
    T0 = admissible_horizon_ratio() * sc.ell**2
    if grid is None:
        dt_target = min(T, T0) / 512.0
        grid = TimeGrid.uniform(T, int(round(T / dt_target)) + 1)
    if T <= T0:
        return picard_solve(sc, grid, tol, max_iter, rule)

    nodes = grid.nodes
    dt = nodes[1] - nodes[0]
    if np.max(np.abs(np.diff(nodes) - dt)) > 1e-12 * dt:
        raise ValidationError("marching needs a uniform grid")
    q = int(math.floor(T0 / (2.0 * dt)))
    if q < 8:
        raise ValidationError("grid too coarse for the marching window")

    kern = LambdaKernel(sc.ell)
    kspline = selfconv_table(kern, T)
    g_vals = sc.g(nodes)
    M = volterra_matrix(sc.ell, nodes, kspline)
    n = nodes.size

    a = g_vals.copy()
    fixed_upto = 0  # highest node index already determined
    logs = []
    overlap_diffs = []
    start = 0
    while fixed_upto < n - 1:
        end = min(start + 2 * q, n - 1)
        idx = slice(start + (1 if start else 0), end + 1)
        prev_vals = a[idx].copy()
        for it in range(max_iter):
            a_new_idx = g_vals[idx] + (M[idx] @ a)
            r = l2_norm_values(a_new_idx - a[idx], nodes[idx])
            a[idx] = a_new_idx
            logs.append(r)
            if r <= tol:
                break
        else:
            raise PicardError("window iteration did not converge", logs)
        if start > 0:
            overlap = slice(start + 1, min(fixed_upto, end) + 1)
            diff = float(np.max(np.abs(a[overlap] - prev_vals[:overlap.stop - overlap.start])))
            overlap_diffs.append(diff)
            if diff > 10.0 * tol:
                raise MarchingError(
                    f"window overlap mismatch {diff:.3e} exceeds 10*tol")
        fixed_upto = end
        start += q

    cert = contraction_check_heat(sc.ell, min(2 * q * dt, T))
    a_sig = BoundarySignal.samples(grid, a, compatible=bool(a[0] == 0.0))
    b = recover_b(a_sig, sc.ell, grid, rule)
    return ReductionResult(a=a_sig, b=b, certificate=cert,
                           solver_tag="marching", iteration_log=tuple(logs),
                           meta={"overlap_diffs": overlap_diffs,
                                 "window_nodes": 2 * q + 1})


def varcoeff_solve(sc: HeatScenario, grid: TimeGrid, tol: float = 1e-10,
                   max_iter: int = 60,
                   rule: QuadratureRule = DEFAULT_RULE) -> ReductionResult:
    """Fixed-point solve with time-dependent diffusion d(t) via the clock
    D(t) = int_0^t d; the kernel argument becomes D(t) - D(r) and the measure
    gains the weight d(r)."""
    if sc.diffusion is None:
        raise ValidationError("scenario has no diffusion coefficient")
    d_vals = np.asarray(sc.diffusion(grid.nodes), dtype=float)
    if np.any(d_vals <= 0.0):
        raise ValidationError("diffusion coefficient must be positive")
    D = cumulative_simpson(d_vals, x=grid.nodes, initial=0.0)
    if np.any(np.diff(D) <= 0):
        raise ValidationError("diffusion clock must be increasing")
    kappa = contraction_factor_heat(sc.ell, grid.t_end) * float(np.max(d_vals))**2
    cert = Certificate.from_factor(kappa)
    if not cert.admissible:
        raise CertificateError(
            f"variable-coefficient contraction factor {kappa:.4f} exceeds "
            f"{cert.threshold}")
    kern = LambdaKernel(sc.ell)
    kspline = selfconv_table(kern, float(D[-1]))
    g_vals = sc.g(grid.nodes)
    M = volterra_matrix(sc.ell, grid.nodes, kspline, clock=D, dweights=d_vals)
    a_vals, log = _picard_iterate(g_vals, M, grid.nodes, tol, max_iter)
    a = BoundarySignal.samples(grid, a_vals, compatible=bool(a_vals[0] == 0.0))

    # right-boundary recovery in the D-clock (the formulas match after the
    # change of time variable)
    d_grid = TimeGrid(float(D[-1]), D)
    a_clock = BoundarySignal.samples(d_grid, a_vals,
                                     compatible=bool(a_vals[0] == 0.0))
    b_clock = recover_b(a_clock, sc.ell, d_grid, rule)
    b = BoundarySignal.samples(grid, b_clock.values, compatible=True)
    return ReductionResult(a=a, b=b, certificate=cert, solver_tag="varcoeff",
                           iteration_log=tuple(log))


# ---------------------------------------------------------------------------
# decomposition residual
# ---------------------------------------------------------------------------

def _threads() -> int:
    env = os.environ.get("UTI_PDE_THREADS")
    cap = os.cpu_count() or 1
    if env is not None:
        try:
            cap = max(1, min(cap, int(env)))
        except ValueError:
            cap = 1
    return min(4, cap)


def _field_chunked(fn, xs, ts) -> np.ndarray:
    n_threads = _threads()
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if n_threads <= 1 or xs.size < 8:
        return fn(xs)
    chunks = np.array_split(np.arange(xs.size), n_threads)
    out = np.empty((xs.size, np.atleast_1d(ts).size))
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        for ids, res in zip(chunks, pool.map(lambda c: fn(xs[c]), chunks)):
            out[ids] = res
    return out


def residual_heat(sc: HeatScenario, res: ReductionResult, xgrid: SpaceGrid,
                  tgrid: TimeGrid, rule: QuadratureRule = DEFAULT_RULE):
    """Decomposition residual dc = q - (v + w) on the grid, plus the per-time
    L2-in-x norms of dc.  Returns (q, v, w, dc, norms) as SolutionFields and
    an array."""
    xs, ts = xgrid.nodes, tgrid.nodes
    qv = _field_chunked(lambda xc: field_q(sc.g, xc, ts, sc.ell), xs, ts)
    vv = _field_chunked(lambda xc: field_v(res.a, xc, ts), xs, ts)
    wv = _field_chunked(lambda xc: field_v(res.b, sc.ell - xc, ts), xs, ts)
    dc = qv - vv - wv
    norms = np.sqrt(np.trapezoid(dc * dc, xs, axis=0))
    mk = lambda vals, tag: SolutionField(xgrid, tgrid, vals, tag)
    return (mk(qv, "interval_reference"), mk(vv, "halfline_left"),
            mk(wv, "halfline_right"), mk(dc, "decomposition_residual"),
            norms)
