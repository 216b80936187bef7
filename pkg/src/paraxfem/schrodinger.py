"""Crank-Nicolson Galerkin stepping for the strip problem

    u_t = i a(t) u_xx + i beta(t, x) u + f,     u(t, 0) = 0,

with either the dynamical Neumann bottom condition

    u_x(t, 1) = mu(t) [S(t) u_t(t, 1) + G(t) u(t, 1)] + f1(t)

or the paraxial (Abrahamsson-Kreiss) condition u_x(t, 1) = f1(t).

All coefficients are frozen at the half-step t^{n-1/2}; step lengths may
vary from step to step.
"""

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .acoustics import CoefficientSet
from .fem1d import (BandedSystem, DofField, FeSpace, SingularSystemError,
                    assemble_mass, assemble_stiffness, elliptic_project,
                    l2_project, load_vector)

NEUMANN = "N"
AK = "AK"


class StepSizeError(SingularSystemError):
    """The step matrix could not be factored; the step is too long."""


class DownslopingWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or t.size < 1 or t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "t", t)

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeGrid":
        if N < 0 or (N > 0 and T <= 0):
            raise ValueError("need T > 0 and N >= 0")
        t = np.linspace(0.0, T, N + 1) if N else np.zeros(1)
        return cls(t)

    @classmethod
    def with_step(cls, T: float, k: float) -> "TimeGrid":
        if k <= 0:
            raise ValueError("k must be positive")
        return cls.uniform(T, max(1, int(round(T / k))))

    @property
    def steps(self) -> int:
        return self.t.size - 1

    @property
    def T(self) -> float:
        return float(self.t[-1])

    @property
    def k(self) -> np.ndarray:
        return np.diff(self.t)

    @property
    def k_max(self) -> float:
        return float(self.k.max()) if self.steps else 0.0

    def half(self, n: int) -> float:
        return 0.5 * (self.t[n - 1] + self.t[n])

    def step_length(self, n: int) -> float:
        return float(self.t[n] - self.t[n - 1])

    def mesh_condition_constant(self) -> float:
        """Smallest C with |k_{n+1} - k_n| <= C max(k_n^2, k_{n+1}^2)."""
        k = self.k
        if k.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(k)) / np.maximum(k[:-1], k[1:]) ** 2))


def _last_dof(space: FeSpace) -> int:
    return space.value_dof_at_one


class CnStepContext:
    """Everything needed to advance one CN step.

    The mass and stiffness matrices are built once; the weighted mass
    matrix for beta and the boundary terms are rebuilt at every step.
    """

    def __init__(self, space: FeSpace, coeffs: CoefficientSet, grid: TimeGrid,
                 boundary_mode: str = NEUMANN, warn_downsloping: bool = True):
        if boundary_mode not in (NEUMANN, AK):
            raise ValueError(f"boundary mode must be {NEUMANN!r} or {AK!r}")
        self.space = space
        self.coeffs = coeffs
        self.grid = grid
        self.mode = boundary_mode
        self.M = assemble_mass(space)
        self.K = assemble_stiffness(space)
        self.last = _last_dof(space)
        self.kl = space.bandwidth
        if boundary_mode == NEUMANN and warn_downsloping and grid.steps:
            mu = np.array([coeffs.mu(grid.half(n)) for n in range(1, grid.steps + 1)])
            if np.any(mu > 0):
                warnings.warn("bottom is downsloping on part of the range; the "
                              "dynamical-boundary scheme is only analysed for "
                              "upsloping bottoms", DownslopingWarning, stacklevel=2)

    def operator(self, th: float) -> BandedSystem:
        """L = -i a K + i M_beta (+ i a mu G E in Neumann mode)."""
        c = self.coeffs
        a = c.a(th)
        Mb = assemble_mass(self.space, lambda X: c.beta(th, X))
        L = (-1j * a) * self.K + 1j * Mb
        if self.mode == NEUMANN:
            mu = c.mu(th)
            if mu != 0:
                L.data[self.last, self.kl] += 1j * a * mu * c.G(th)
        return L

    def matrices(self, n: int):
        """Left and right step matrices and the load for step n."""
        th = self.grid.half(n)
        k = self.grid.step_length(n)
        c = self.coeffs
        L = self.operator(th)
        Mk = self.M * (1.0 + 0j)
        if self.mode == NEUMANN:
            mu = c.mu(th)
            if mu != 0:
                Mk.data[self.last, self.kl] -= 1j * c.a(th) * mu * c.S(th)
        left = Mk - (0.5 * k) * L
        right = Mk + (0.5 * k) * L
        load = np.zeros(self.space.dof_count, dtype=complex)
        if c.f is not None:
            load += k * load_vector(self.space, lambda X: c.f(th, X))
        if c.f1 is not None:
            load[self.last] += k * 1j * c.a(th) * c.f1(th)
        return left, right, load

    def step(self, U_prev: DofField, n: int) -> DofField:
        left, right, load = self.matrices(n)
        rhs = right.matvec(U_prev.coeffs) + load
        try:
            left.factor(pivot=True)
        except SingularSystemError as exc:
            raise StepSizeError(
                f"step {n}: step-size condition violated (k_n = "
                f"{self.grid.step_length(n):.6g}); the step matrix is singular, "
                f"reduce the time step ({exc})", exc.pivot_index) from exc
        return DofField(self.space, left.solve(rhs))

    def l2_norm(self, U: DofField) -> float:
        c = U.coeffs
        return float(np.sqrt(abs(np.vdot(c, self.M.matvec(c)).real)))


def init_neumann(space: FeSpace, coeffs: CoefficientSet, u0: Callable,
                 du0: Optional[Callable] = None) -> DofField:
    """U^0 = R_h u0."""
    return elliptic_project(space, u0, du0)


def init_ak(space: FeSpace, u0: Callable, method: str = "l2",
            du0: Optional[Callable] = None) -> DofField:
    """U^0 = P_h u0 (``method='l2'``) or R_h u0 (``method='ritz'``)."""
    if method == "l2":
        return l2_project(space, u0)
    if method == "ritz":
        return elliptic_project(space, u0, du0)
    raise ValueError(f"unknown initialisation {method!r}")


def step_neumann(ctx: CnStepContext, U_prev: DofField, n: int) -> DofField:
    if ctx.mode != NEUMANN:
        raise ValueError("context is not in Neumann mode")
    return ctx.step(U_prev, n)


def step_ak(ctx: CnStepContext, U_prev: DofField, n: int) -> DofField:
    if ctx.mode != AK:
        raise ValueError("context is not in AK mode")
    return ctx.step(U_prev, n)


@dataclass
class FieldHistory:
    """Per-step monitors plus any stored snapshots.

    ``status`` is ``"complete"`` or ``"unstable"``; an unstable run stops
    at ``terminated_step`` once the norm exceeds the blow-up threshold.
    """

    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    boundary: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    probes: list = field(default_factory=list)
    status: str = "complete"
    terminated_step: Optional[int] = None
    final: Optional[DofField] = None

    @property
    def flagged(self) -> bool:
        return self.status != "complete"

    def record(self, n, t, U, norm, probe):
        self.times.append(float(t))
        self.norms.append(norm)
        self.boundary.append(complex(U.coeffs[U.space.value_dof_at_one]))
        if probe is not None:
            self.probes.append(probe(n, t, U))


def run(ctx: CnStepContext, U0: DofField, snapshot_steps=(), probe: Optional[Callable] = None,
        blowup_ratio: Optional[float] = None) -> FieldHistory:
    """March over the whole grid.

    ``probe(n, t, U)`` is called after every step (and at n = 0) and its
    results collected in ``history.probes``.  With ``blowup_ratio`` set,
    the run stops and is flagged once ||U^n|| > blowup_ratio * ||U^0||.
    """
    hist = FieldHistory()
    keep = set(snapshot_steps)
    U = U0
    n0 = ctx.l2_norm(U0)
    hist.record(0, ctx.grid.t[0], U, n0, probe)
    if 0 in keep:
        hist.snapshots[0] = U
    for n in range(1, ctx.grid.steps + 1):
        U = ctx.step(U, n)
        norm = ctx.l2_norm(U)
        hist.record(n, ctx.grid.t[n], U, norm, probe)
        if n in keep:
            hist.snapshots[n] = U
        if blowup_ratio is not None and not norm <= blowup_ratio * n0:
            hist.status = "unstable"
            hist.terminated_step = n
            break
    hist.final = U
    return hist


__all__ = [
    "NEUMANN", "AK", "TimeGrid", "CnStepContext", "FieldHistory", "StepSizeError",
    "DownslopingWarning", "init_neumann", "init_ak", "step_neumann", "step_ak", "run",
]
