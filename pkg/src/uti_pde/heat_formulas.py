"""Evaluators for the half-line and finite-interval heat solution formulas.

The defining integrals run over the wedge boundary (rays at arguments 3pi/4
and pi/4).  Evaluated literally on the rays the integrands lose all decay at
the boundary points x = 0 (and x = ell for the reflected problem), so the
production path first deforms the contour to the real axis — legal because
e^{-k^2 t} times the time transform is entire and O(1/k^2) in the closed
sectors swept by the deformation — and then splits off the non-decaying part
in closed form:

* sine data a(z) = sum_n c_n sin(w_n z) splits into a boundary-layer wave
  sum_n c_n e^{-th_n x} sin(w_n t - th_n x), th_n = sqrt(w_n/2) (the residue
  part), plus a Gaussian-damped real-line integral;
* sampled data splits into a(t) itself plus a real-line integral against the
  first time derivative, accumulated by a stable backward recursion.

At x = 0 the raw symmetric ray quadrature converges to a(t)/2 (half-jump of
the truncated transform); the split returns the x -> 0+ limit, which is the
Dirichlet value the formulas encode.  The finite-interval reference formula
is evaluated through its exact image expansion (geometric series of the sine
ratio, convergent on the wedge rays), which makes the right-boundary value an
exact zero.  A direct ray-quadrature backend is kept for cross-checks at
interior x, where the rays do decay.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import CubicSpline

from ._numerics import (QuadratureError, exp_integral, graded_edges,
                        panel_nodes, poly_exp_moments)
from .contours import QuadratureRule, TruncationError
from .core import BoundarySignal, ValidationError

DEFAULT_RULE = QuadratureRule()


class OverflowGuardError(ArithmeticError):
    """Exponent magnitude would overflow; rescale the problem."""


class FormulaConsistencyError(RuntimeError):
    """A formula value that must be real came out complex."""


# ---------------------------------------------------------------------------
# time transforms: integral_0^t e^{k2 z} a(z) dz
# ---------------------------------------------------------------------------

def _sine_modes(signal: BoundarySignal):
    """(omegas, coeffs, support) when the signal is a finite sine sum."""
    if signal.kind == "sine_series":
        n = np.arange(1, signal.coeffs.size + 1)
        return (n * math.pi / signal.tau,
                np.asarray(signal.coeffs, dtype=float),
                min(signal.support_end, signal.tau))
    if signal.kind == "closed_form" and signal.name == "sin":
        omega = float(signal.params.get("omega", 1.0))
        amp = float(signal.params.get("amplitude", 1.0))
        return np.array([omega]), np.array([amp]), signal.support_end
    return None


def _check_overflow(k2, t: float):
    re = np.real(np.asarray(k2))
    if np.any(re * t > 700.0):
        raise OverflowGuardError("exponent overflow; rescale")


def _tilde_sine(omegas, coeffs, k2, t_eff: float):
    k2 = np.asarray(k2, dtype=complex)
    acc = np.zeros(k2.shape, dtype=complex)
    for w, c in zip(omegas, coeffs):
        if c == 0.0:
            continue
        acc += c * (exp_integral(k2 + 1j * w, t_eff)
                    - exp_integral(k2 - 1j * w, t_eff)) / 2j
    return acc


def _spline_coeffs(values_spline: CubicSpline):
    """Breakpoints and ascending-power coefficient rows of a scipy spline."""
    c = values_spline.c[::-1, :].T  # (n_int, order+1), powers 0..order
    return values_spline.x, c


def _tilde_samples(signal: BoundarySignal, k2, t: float):
    """Exact integral of the cubic-spline interpolant against e^{k2 z}."""
    k2 = np.asarray(k2, dtype=complex)
    xs, c = _spline_coeffs(CubicSpline(signal.grid.nodes, signal.values))
    t_eff = min(t, signal.support_end)
    total = np.zeros(k2.shape, dtype=complex)
    for j in range(len(xs) - 1):
        z0 = xs[j]
        h = min(xs[j + 1], t_eff) - z0
        if h <= 0:
            break
        g = poly_exp_moments(k2 * h, 3)
        seg = np.zeros_like(total)
        for m in range(4):
            seg += c[j, m] * h ** (m + 1) * g[m]
        total += np.exp(k2 * z0) * seg
    return total


def tilde_transform(a: BoundarySignal, k2: complex, t: float,
                    tol: float = 1e-12) -> complex:
    """integral_0^t e^{k2 z} a(z) dz (a vanishes past its support).

    Closed form for sine-type and sampled (cubic-spline) signals; adaptive
    panel quadrature with doubling for other closed forms.
    """
    if t < 0:
        raise ValidationError("t must be nonnegative")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if t == 0:
        return 0.0 + 0.0j
    _check_overflow(k2, t)
    modes = _sine_modes(a)
    if modes is not None:
        w, c, supp = modes
        return complex(_tilde_sine(w, c, np.asarray(k2, dtype=complex),
                                   min(t, supp)))
    if a.kind == "samples":
        return complex(_tilde_samples(a, np.asarray(k2, dtype=complex), t))
    t_eff = min(t, a.support_end)
    prev = None
    for n_panels in (8, 16, 32, 64, 128, 256, 512, 1024):
        edges = np.linspace(0.0, t_eff, n_panels + 1)
        nodes, weights = panel_nodes(edges, 12)
        val = complex(np.sum(np.exp(k2 * nodes) * a(nodes) * weights))
        if prev is not None and abs(val - prev) <= tol:
            return val
        prev = val
    raise QuadratureError("time-transform quadrature did not converge",
                          estimate=abs(val - prev))


def tilde_grid(a: BoundarySignal, k2s, ts) -> np.ndarray:
    """tilde a(k2, t) for an array of k2 and grid times; shape (n_k, n_t).

    For sampled signals the times must be nodes of the signal's own grid;
    the transform is then accumulated once over the grid (moduli stay
    bounded whenever Re(k2) <= 0, which holds on all contours used here).
    """
    k2s = np.asarray(np.atleast_1d(k2s), dtype=complex)
    ts = np.asarray(np.atleast_1d(ts), dtype=float)
    out = np.empty((k2s.size, ts.size), dtype=complex)
    modes = _sine_modes(a)
    if modes is not None:
        w, c, supp = modes
        for j, t in enumerate(ts):
            out[:, j] = 0.0 if t == 0 else _tilde_sine(w, c, k2s, min(t, supp))
        return out
    if a.kind != "samples":
        for j, t in enumerate(ts):
            out[:, j] = [tilde_transform(a, k2, t) for k2 in k2s]
        return out
    xs, coef = _spline_coeffs(CubicSpline(a.grid.nodes, a.values))
    key = np.round(ts, 12)
    known = {round(float(x), 12): i for i, x in enumerate(xs)}
    if not all(kk in known for kk in key):
        for j, t in enumerate(ts):
            out[:, j] = _tilde_samples(a, k2s, t)
        return out
    cum = np.zeros(k2s.size, dtype=complex)
    cols = {round(float(xs[0]), 12): cum.copy()}
    for j in range(len(xs) - 1):
        h = xs[j + 1] - xs[j]
        g = poly_exp_moments(k2s * h, 3)
        seg = np.zeros_like(cum)
        for m in range(4):
            seg += coef[j, m] * h ** (m + 1) * g[m]
        cum = cum + np.exp(k2s * xs[j]) * seg
        cols[round(float(xs[j + 1]), 12)] = cum.copy()
    for j, kk in enumerate(key):
        out[:, j] = cols[kk]
    return out


# ---------------------------------------------------------------------------
# real-line backend, sine data
# ---------------------------------------------------------------------------

def _k_grid(t_min: float, x_max: float, omegas, nodes_per_panel: int = 12):
    """Nodes/weights on [0, K] resolving e^{ikx - k^2 t} and the mode bumps."""
    K = math.sqrt(46.0 / max(t_min, 1e-10))
    K = min(max(K, 6.0), 6000.0)
    scales = np.sqrt(np.asarray(omegas, dtype=float))
    k_lo = float(np.min(scales)) if scales.size else 1.0
    k_hi = float(np.max(scales)) if scales.size else 1.0

    def density(k):
        # e^{ikx} phase plus bump resolution near k ~ sqrt(omega)
        return x_max + 2.0 * t_min * k + 8.0 / max(k, 0.15 * k_lo)

    k_mid = min(K, 5.0 * k_hi + 5.0)
    edges = graded_edges(0.0, k_mid, density, nodes_per_panel)
    if K > k_mid:
        tail = graded_edges(k_mid, K, lambda k: x_max + 2.0 * t_min * k + 0.5,
                            nodes_per_panel)
        edges = np.concatenate([edges, tail[1:]])
    return panel_nodes(edges, nodes_per_panel)


def _mode_B(omegas, coeffs, k):
    """Gaussian-part density sum_n c_n w_n / (k^4 + w_n^2)."""
    k4 = k ** 4
    acc = np.zeros_like(k, dtype=float)
    for w, c in zip(omegas, coeffs):
        if c != 0.0:
            acc += c * w / (k4 + w * w)
    return acc


def _mode_A_frozen(omegas, coeffs, k, s: float):
    """sum_n c_n [k^2 sin(w_n s) - w_n cos(w_n s)] / (k^4 + w_n^2)."""
    k2 = k * k
    k4 = k2 * k2
    acc = np.zeros_like(k, dtype=float)
    for w, c in zip(omegas, coeffs):
        if c != 0.0:
            acc += c * (k2 * math.sin(w * s) - w * math.cos(w * s)) / (k4 + w * w)
    return acc


def _image_offsets(x, ell: float, n_images: int):
    """Alternating image coordinates (x + 2 m ell, 2(m+1) ell - x)."""
    out = []
    for m in range(n_images):
        out.append((2 * m * ell + x, +1.0))
        out.append((2 * (m + 1) * ell - x, -1.0))
    return out


def _n_images(omegas, coeffs, ell: float, t_max: float):
    """(wave image count, Gaussian image count).

    Wave images decay like e^{-th_min 2 ell m}; Gaussian images die once the
    image offset leaves the heat-kernel reach sqrt(46 t_max).
    """
    th_min = math.sqrt(float(np.min(omegas[np.asarray(coeffs) != 0])) / 2.0) \
        if np.any(np.asarray(coeffs) != 0) else 1.0
    m_wave = int(math.ceil(30.0 / max(th_min * 2.0 * ell, 1e-6))) + 2
    m_gauss = int(math.ceil(math.sqrt(46.0 * t_max) / (2.0 * ell))) + 2
    if m_wave > 400:
        raise TruncationError("image expansion would need too many terms")
    return m_wave, min(m_gauss, m_wave)


def _sine_field(a: BoundarySignal, xs, ts, ell: float | None = None):
    """Half-line values on xs x ts for sine data; image sum when ell is set.

    Support handling: for t <= tau the split is wave + Gaussian; past the
    support both pieces are Gaussian-damped (frozen-coefficient form).
    """
    omegas, coeffs, supp = _sine_modes(a)
    xs = np.asarray(np.atleast_1d(xs), dtype=float)
    ts = np.asarray(np.atleast_1d(ts), dtype=float)
    out = np.zeros((xs.size, ts.size))
    live = (ts > 0) & (ts <= supp)
    past = ts > supp
    th = np.sqrt(omegas / 2.0)

    if ell is None:
        offs_wave = [[(float(x), +1.0)] for x in xs]
        offs_gauss = offs_wave
    else:
        n_wave, n_gauss = _n_images(omegas, coeffs, ell, float(np.max(ts)))
        offs_wave = [_image_offsets(float(x), ell, n_wave) for x in xs]
        offs_gauss = [_image_offsets(float(x), ell, n_gauss) for x in xs]

    x_gauss_max = max(max(abs(o) for offs in offs_gauss for o, _ in offs), 1e-6)

    if np.any(live):
        tl = ts[live]
        t_min = float(np.min(tl))
        k, wq = _k_grid(t_min, x_gauss_max, omegas)
        B = _mode_B(omegas, coeffs, k)
        gauss = np.exp(-np.outer(k * k, tl))  # (n_k, n_t)
        for i in range(xs.size):
            osc = np.zeros_like(k, dtype=complex)
            for xo, sgn in offs_gauss[i]:
                osc += sgn * np.exp(1j * k * xo)
            dens = np.imag(osc * k) * B * wq
            col = (2.0 / math.pi) * (dens @ gauss)
            for n in range(omegas.size):
                if coeffs[n] == 0.0:
                    continue
                for xo, sgn in offs_wave[i]:
                    col += sgn * coeffs[n] * math.exp(-th[n] * xo) * \
                        np.sin(omegas[n] * tl - th[n] * xo)
            out[i, live] = col

    if np.any(past):
        tp = ts[past]
        s_min = float(np.min(tp - supp))
        if s_min <= 1e-9 * max(supp, 1.0):
            raise QuadratureError(
                "evaluation too close past the signal support end")
        k, wq = _k_grid(min(s_min, float(np.min(tp))), x_gauss_max, omegas)
        B = _mode_B(omegas, coeffs, k)
        Afro = _mode_A_frozen(omegas, coeffs, k, supp)
        gauss_tail = np.exp(-np.outer(k * k, tp - supp))
        gauss_full = np.exp(-np.outer(k * k, tp))
        for i in range(xs.size):
            osc = np.zeros_like(k, dtype=complex)
            for xo, sgn in offs_gauss[i]:
                osc += sgn * np.exp(1j * k * xo)
            base = np.imag(osc * k) * wq
            col = (2.0 / math.pi) * ((base * Afro) @ gauss_tail
                                     + (base * B) @ gauss_full)
            out[i, past] = col
    return out


# ---------------------------------------------------------------------------
# real-line backend, sampled data
# ---------------------------------------------------------------------------

def _interval_weighted(dcoef_row, h: float, s):
    """integral_0^h e^{-s (h-d)} p(d) dd for quadratic p, stable for s >= 0."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    big = s * h > 300.0
    sb = s[~big]
    g = poly_exp_moments(sb * h, 2).real
    seg = np.zeros_like(sb)
    for m in range(3):
        seg += dcoef_row[m] * h ** (m + 1) * g[m]
    out[~big] = np.exp(-sb * h) * seg
    # Watson form: boundary-layer at d = h; e^{-sh} terms are below 1e-130
    p_h = dcoef_row[0] + dcoef_row[1] * h + dcoef_row[2] * h * h
    dp_h = dcoef_row[1] + 2.0 * dcoef_row[2] * h
    d2p_h = 2.0 * dcoef_row[2]
    sbig = s[big]
    out[big] = p_h / sbig - dp_h / sbig**2 + d2p_h / sbig**3
    return out


def _samples_field(a: BoundarySignal, xs, ts):
    """Half-line values at xs for sampled data; ts must be signal grid nodes."""
    nodes = a.grid.nodes
    ts = np.asarray(np.atleast_1d(ts), dtype=float)
    idx = np.clip(np.searchsorted(nodes, ts), 1, nodes.size - 1)
    idx = np.where(np.abs(nodes[idx] - ts) <= np.abs(nodes[idx - 1] - ts),
                   idx, idx - 1)
    if not np.allclose(nodes[idx], ts, rtol=0, atol=1e-9 * max(1.0, nodes[-1])):
        raise ValidationError("sampled-data evaluation needs grid times")
    xs = np.asarray(np.atleast_1d(xs), dtype=float)

    t_pos = nodes[1:]
    K = max(500.0, math.sqrt(46.0 / float(t_pos[0])))
    x_max = max(float(np.max(xs)), 0.05)

    def density(k):
        return x_max + 4.0 / max(k, 0.5)

    edges = graded_edges(0.0, K, density, 12)
    k, wq = panel_nodes(edges, 12)
    s = k * k

    dsp = CubicSpline(nodes, a.values).derivative()
    _, dc = _spline_coeffs(dsp)

    # backward recursion: h1(k, t_{j+1}) = e^{-k^2 h} h1(k, t_j) + local term
    h1 = np.zeros((k.size, nodes.size))
    cur = np.zeros_like(k)
    for j in range(nodes.size - 1):
        h = nodes[j + 1] - nodes[j]
        with np.errstate(under="ignore"):
            cur = cur * np.exp(-s * h) + _interval_weighted(dc[j], h, s)
        h1[:, j + 1] = cur

    out = np.zeros((xs.size, ts.size))
    a_at = a(ts)
    for i, x in enumerate(xs):
        with np.errstate(invalid="ignore", divide="ignore"):
            kernel = np.where(k > 0, np.sin(k * x) / np.where(k > 0, k, 1.0), x)
        proj = (kernel * wq) @ h1[:, idx]
        out[i] = a_at - (2.0 / math.pi) * proj
    return out


# ---------------------------------------------------------------------------
# public evaluators
# ---------------------------------------------------------------------------

def evaluate_v(a: BoundarySignal, x: float, t: float,
               rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Half-line solution driven by left-boundary datum a, at (x, t), x >= 0.

    At x = 0 the returned value is the boundary limit (equals a(t) for
    0 < t < support).  t = 0 returns an exact 0.
    """
    if x < 0:
        raise ValidationError("x must be >= 0")
    if t == 0:
        return 0.0
    if a.is_zero():
        return 0.0
    if _sine_modes(a) is not None:
        return float(_sine_field(a, [x], [t])[0, 0])
    if a.kind == "samples":
        return float(_samples_field(a, [x], [t])[0, 0])
    raise ValidationError(
        f"no evaluation path for closed form {a.name!r}; sample it first")


def evaluate_w(b: BoundarySignal, x: float, t: float, ell: float,
               rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Negative half-line solution driven by right datum b: reflection x -> ell-x."""
    if x > ell:
        raise ValidationError("x must be <= ell")
    return evaluate_v(b, ell - x, t, rule)


def evaluate_q_reference(g: BoundarySignal, x: float, t: float, ell: float,
                         rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Finite-interval reference solution (image expansion), 0 <= x <= ell."""
    if not (0.0 <= x <= ell):
        raise ValidationError("x must lie in [0, ell]")
    if t == 0:
        return 0.0
    if g.is_zero():
        return 0.0
    if _sine_modes(g) is None:
        raise ValidationError("reference formula needs sine-type boundary data")
    return float(_sine_field(g, [x], [t], ell=ell)[0, 0])


def field_v(a: BoundarySignal, xs, ts) -> np.ndarray:
    """evaluate_v on a grid; shape (n_x, n_t)."""
    if a.is_zero():
        return np.zeros((np.atleast_1d(xs).size, np.atleast_1d(ts).size))
    if _sine_modes(a) is not None:
        return _sine_field(a, xs, ts)
    if a.kind == "samples":
        return _samples_field(a, xs, ts)
    raise ValidationError("no field path for this signal")


def field_w(b: BoundarySignal, xs, ts, ell: float) -> np.ndarray:
    xs = np.asarray(np.atleast_1d(xs), dtype=float)
    return field_v(b, ell - xs[::-1], ts)[::-1, :]


def field_q(g: BoundarySignal, xs, ts, ell: float) -> np.ndarray:
    if g.is_zero():
        return np.zeros((np.atleast_1d(xs).size, np.atleast_1d(ts).size))
    return _sine_field(g, xs, ts, ell=ell)


# ---------------------------------------------------------------------------
# direct ray-quadrature backend (cross-checks; needs x-decay on the rays)
# ---------------------------------------------------------------------------

def _ray_radius(x: float, tol: float, scale: float) -> float:
    c = x / math.sqrt(2.0)
    if c <= 0:
        raise TruncationError("ray quadrature has no decay at the boundary")
    R = 10.0 / c
    for _ in range(300):
        if 2.0 * scale * math.exp(-c * R) * (R / c + 1.0 / c**2) <= tol:
            return R
        R *= 1.1
    raise TruncationError("no feasible ray truncation radius")


def _ray_nodes(x: float, t: float, tol: float, scale: float):
    R = _ray_radius(x, tol, scale)
    edges = graded_edges(0.0, R, lambda r: x / math.sqrt(2.0) + 2.0 * r * t + 0.5, 12)
    return panel_nodes(edges, 12)


def evaluate_v_rays(a: BoundarySignal, x: float, t: float,
                    rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Direct wedge-ray quadrature of the half-line formula (x > 0)."""
    if t == 0:
        return 0.0
    scale = 1.0
    rho, wq = _ray_nodes(x, t, rule.tail_tolerance, scale)
    total = 0.0 + 0.0j
    for sgn, angle in ((+1, math.pi / 4), (-1, 3 * math.pi / 4)):
        e = complex(math.cos(angle), math.sin(angle))
        kk = rho * e
        k2 = kk * kk
        til = _tilde_any(a, k2, t)
        total += sgn * np.sum(np.exp(1j * kk * x - k2 * t) * kk * til * e * wq)
    val = total / (1j * math.pi)
    if abs(val.imag) > 1e-6:
        raise FormulaConsistencyError(
            f"formula evaluation inconsistent: imaginary part {val.imag:.3e}")
    return float(val.real)


def _tilde_any(a: BoundarySignal, k2s, t: float):
    modes = _sine_modes(a)
    if modes is not None:
        w, c, supp = modes
        return _tilde_sine(w, c, k2s, min(t, supp))
    if a.kind == "samples":
        return _tilde_samples(a, k2s, t)
    return np.array([tilde_transform(a, k2, t) for k2 in np.atleast_1d(k2s)])


def evaluate_q_rays(g: BoundarySignal, x: float, t: float, ell: float,
                    rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Direct ray quadrature of the interval reference formula (0 < x < ell)."""
    if t == 0:
        return 0.0
    rho, wq = _ray_nodes(x, t, rule.tail_tolerance, 1.0)
    total = 0.0 + 0.0j
    for sgn, angle in ((+1, math.pi / 4), (-1, 3 * math.pi / 4)):
        e = complex(math.cos(angle), math.sin(angle))
        kk = rho * e
        k2 = kk * kk
        sk = np.sin(kk * ell)
        if np.any(np.abs(sk) < 1e-12):
            raise QuadratureError("node collided with a zero of sin(k ell)")
        ratio = np.sin(kk * (ell - x)) / sk
        til = _tilde_any(g, k2, t)
        total += sgn * np.sum(np.exp(-k2 * t) * ratio * kk * til * e * wq)
    val = total / (1j * math.pi)
    if abs(val.imag) > 1e-6:
        raise FormulaConsistencyError(
            f"formula evaluation inconsistent: imaginary part {val.imag:.3e}")
    return float(val.real)
