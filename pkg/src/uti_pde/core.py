"""Shared domain types: grids, boundary signals, fields, certificates.

All types are immutable after construction and safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class ValidationError(ValueError):
    """Raised when a domain object violates its invariants."""


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Ordered time nodes on [0, t_end], first node 0, last node t_end."""

    t_end: float
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if self.t_end <= 0:
            raise ValidationError("t_end must be positive")
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValidationError("need at least two time nodes")
        if nodes[0] != 0.0 or nodes[-1] != self.t_end:
            raise ValidationError("time nodes must start at 0 and end at t_end")
        if np.any(np.diff(nodes) <= 0):
            raise ValidationError("time nodes must be strictly increasing")
        nodes.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> float:
        # uniform spacing when the grid is uniform; max spacing otherwise
        return float(np.max(np.diff(self.nodes)))

    @staticmethod
    def uniform(t_end: float, n_nodes: int) -> "TimeGrid":
        return TimeGrid(t_end, np.linspace(0.0, t_end, n_nodes))


@dataclass(frozen=True)
class SpaceGrid:
    """Ordered space nodes inside [0, ell]."""

    ell: float
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if self.ell <= 0:
            raise ValidationError("ell must be positive")
        if nodes.ndim != 1 or nodes.size < 1:
            raise ValidationError("need at least one space node")
        if nodes[0] < 0 or nodes[-1] > self.ell:
            raise ValidationError("space nodes must lie in [0, ell]")
        if np.any(np.diff(nodes) <= 0):
            raise ValidationError("space nodes must be strictly increasing")
        nodes.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return self.nodes.size

    @staticmethod
    def uniform(ell: float, n_nodes: int) -> "SpaceGrid":
        return SpaceGrid(ell, np.linspace(0.0, ell, n_nodes))


# ---------------------------------------------------------------------------
# boundary signals
# ---------------------------------------------------------------------------

def _sin_form(t, amplitude=1.0, omega=1.0):
    return amplitude * np.sin(omega * t)


def _sin_ramp_form(t, amplitude=1.0, omega=1.0, t_end=1.0):
    # sin burst multiplied by a linear ramp; vanishes at t=0 together with
    # its rough scale, convenient as a compatible test datum
    return amplitude * np.sin(omega * t) * (t / t_end)


def _sin_sq_form(t, amplitude=1.0, omega=1.0):
    return amplitude * np.sin(omega * t) ** 2


def _const_form(t, value=1.0):
    return np.full_like(np.asarray(t, dtype=float), value)


CLOSED_FORMS: dict[str, Callable] = {
    "sin": _sin_form,
    "sin_ramp": _sin_ramp_form,
    "sin_sq": _sin_sq_form,
    "const": _const_form,
}


@dataclass(frozen=True)
class BoundarySignal:
    """A function of time on [0, support_end], identically 0 afterwards.

    Three representations:

    * ``kind="closed_form"``: named formula from ``CLOSED_FORMS`` with params.
    * ``kind="sine_series"``: sum_n coeffs[n-1] * sin(pi n t / tau); exactly 0
      at t = 0 and outside (0, tau).
    * ``kind="samples"``: values on a TimeGrid, linear interpolation between
      nodes, 0 outside the grid.
    """

    kind: str
    support_end: float
    name: str = ""
    params: dict = field(default_factory=dict)
    tau: float = 0.0
    coeffs: Optional[np.ndarray] = None
    grid: Optional[TimeGrid] = None
    values: Optional[np.ndarray] = None
    compatible: bool = False

    def __post_init__(self):
        if self.support_end <= 0:
            raise ValidationError("support_end must be positive")
        if self.kind == "closed_form":
            if self.name not in CLOSED_FORMS:
                raise ValidationError(f"unknown closed form {self.name!r}")
        elif self.kind == "sine_series":
            if self.tau <= 0:
                raise ValidationError("sine series needs tau > 0")
            coeffs = np.array(self.coeffs, dtype=float)
            if coeffs.ndim != 1 or coeffs.size < 1:
                raise ValidationError("sine series needs coefficients")
            coeffs.flags.writeable = False
            object.__setattr__(self, "coeffs", coeffs)
        elif self.kind == "samples":
            if self.grid is None or self.values is None:
                raise ValidationError("samples need grid and values")
            values = np.array(self.values, dtype=float)
            if values.shape != self.grid.nodes.shape:
                raise ValidationError("values must match the grid")
            if self.compatible and values[0] != 0.0:
                raise ValidationError("compatible samples must vanish at t=0")
            values.flags.writeable = False
            object.__setattr__(self, "values", values)
        else:
            raise ValidationError(f"unknown signal kind {self.kind!r}")

    # constructors ----------------------------------------------------------
    @staticmethod
    def closed_form(name: str, support_end: float, **params) -> "BoundarySignal":
        return BoundarySignal(kind="closed_form", support_end=support_end,
                              name=name, params=params)

    @staticmethod
    def sine_series(tau: float, coeffs, support_end: Optional[float] = None) -> "BoundarySignal":
        return BoundarySignal(kind="sine_series",
                              support_end=tau if support_end is None else support_end,
                              tau=tau, coeffs=np.asarray(coeffs, dtype=float))

    @staticmethod
    def samples(grid: TimeGrid, values, compatible: bool = False) -> "BoundarySignal":
        return BoundarySignal(kind="samples", support_end=grid.t_end,
                              grid=grid, values=np.asarray(values, dtype=float),
                              compatible=compatible)

    @staticmethod
    def zero(support_end: float = 1.0) -> "BoundarySignal":
        return BoundarySignal.sine_series(support_end, [0.0])

    # evaluation ------------------------------------------------------------
    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.zeros_like(t)
        inside = (t >= 0.0) & (t <= self.support_end)
        ti = t[inside]
        if self.kind == "closed_form":
            out[inside] = CLOSED_FORMS[self.name](ti, **self.params)
        elif self.kind == "sine_series":
            live = ti <= self.tau
            acc = np.zeros_like(ti)
            n = np.arange(1, self.coeffs.size + 1)
            acc[live] = np.sin(np.outer(ti[live], n) * (np.pi / self.tau)) @ self.coeffs
            out[inside] = acc
        else:
            out[inside] = np.interp(ti, self.grid.nodes, self.values,
                                    left=0.0, right=0.0)
        return out[0] if scalar else out

    def is_zero(self) -> bool:
        if self.kind == "sine_series":
            return bool(np.all(self.coeffs == 0.0))
        if self.kind == "samples":
            return bool(np.all(self.values == 0.0))
        return False


def signal_eval(s: BoundarySignal, t: float) -> float:
    """Value of the signal at time t >= 0 (0 beyond the support)."""
    if t < 0:
        raise ValidationError("signal_eval requires t >= 0")
    return float(s(t))


def l2_norm_time(s: BoundarySignal, grid: TimeGrid) -> float:
    """Trapezoid-rule L2 norm of the signal over [0, t_end]."""
    v = s(grid.nodes)
    return float(math.sqrt(np.trapezoid(v * v, grid.nodes)))


def l2_norm_values(values, nodes) -> float:
    """Trapezoid-rule L2 norm of sampled values."""
    values = np.asarray(values, dtype=float)
    return float(math.sqrt(np.trapezoid(values * values, nodes)))


# ---------------------------------------------------------------------------
# solution fields and certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolutionField:
    """Real values of a formula on a rectangular (x, t) grid."""

    space: SpaceGrid
    time: TimeGrid
    values: np.ndarray  # shape (n_x, n_t)
    formula_tag: str

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.space.n_nodes, self.time.n_nodes):
            raise ValidationError("field shape must be (n_x, n_t)")
        if not np.all(np.isfinite(values)):
            raise ValidationError("field values must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class Certificate:
    """Contraction factor of an integral-equation map plus its admissibility.

    ``size_bound_multiplier`` is 1/(1-kappa) when kappa < 1 and None otherwise.
    """

    contraction_factor: float
    threshold: float = 0.5
    admissible: bool = False
    size_bound_multiplier: Optional[float] = None

    def __post_init__(self):
        if self.contraction_factor < 0:
            raise ValidationError("contraction factor must be nonnegative")

    @staticmethod
    def from_factor(kappa: float, threshold: float = 0.5) -> "Certificate":
        mult = 1.0 / (1.0 - kappa) if kappa < 1.0 else None
        return Certificate(contraction_factor=kappa, threshold=threshold,
                           admissible=kappa <= threshold,
                           size_bound_multiplier=mult)
