"""Real parabolic problems with a dynamical condition at x = 1:

    u_t = a(t) u_xx + beta(t, x) u + f,          u(t, 0) = 0,
    a(t) u_x(t, 1) = eps(t) u_t(t, 1) + delta(t) u(t, 1) + g(t).

eps <= 0 (dissipative) uses a standard CN-Galerkin scheme on linear
elements.  eps > 0 (reactive) replaces u_t(t, 1) through the equation
and tests with the stiffness form on C1 Hermite cubics.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fem1d import (HERMITE, LINEAR, BandedSystem, DofField, FeSpace,
                    SingularSystemError, assemble, assemble_bstar, assemble_mass,
                    assemble_stiffness, elliptic_project, elliptic_project_star,
                    load_vector)
from .schrodinger import FieldHistory, StepSizeError, TimeGrid

DISSIPATIVE = "dissipative"
REACTIVE = "reactive"


def _const(v):
    return (lambda t: v) if not callable(v) else v


@dataclass(frozen=True)
class ParabolicCoeffs:
    """Coefficients of the real problem.

    ``beta_x`` and ``f_x`` are only used by the reactive scheme, which
    tests against derivatives and therefore needs them analytically.
    """

    a: Callable
    eps: Callable
    beta: Optional[Callable] = None
    delta: Optional[Callable] = None
    g: Optional[Callable] = None
    f: Optional[Callable] = None
    beta_x: Optional[Callable] = None
    f_x: Optional[Callable] = None

    @classmethod
    def build(cls, a, eps, **kw) -> "ParabolicCoeffs":
        kw = {k: (_const(v) if k in ("delta", "g") and v is not None else v)
              for k, v in kw.items()}
        return cls(_const(a), _const(eps), **kw)

    def mode_at(self, t) -> str:
        return REACTIVE if self.eps(t) > 0 else DISSIPATIVE

    def check_mode(self, grid: TimeGrid, mode: str):
        """Raise unless eps has the sign required by ``mode`` at every half-step."""
        for n in range(1, grid.steps + 1):
            th = grid.half(n)
            e = self.eps(th)
            if mode == DISSIPATIVE and e > 0:
                raise ValueError(f"eps({th:.6g}) = {e:.6g} > 0: use the reactive scheme")
            if mode == REACTIVE and not e > 0:
                raise ValueError(f"eps({th:.6g}) = {e:.6g} <= 0: use the dissipative scheme")

    def _delta(self, t):
        return 0.0 if self.delta is None else self.delta(t)

    def _g(self, t):
        return 0.0 if self.g is None else self.g(t)


class ParabolicContext:
    def __init__(self, space: FeSpace, coeffs: ParabolicCoeffs, grid: TimeGrid, mode: str):
        if mode == DISSIPATIVE and space.family != LINEAR:
            raise ValueError("the dissipative scheme uses linear elements")
        if mode == REACTIVE and space.family != HERMITE:
            raise ValueError("the reactive scheme needs C1 Hermite elements")
        if not space.clamped:
            raise ValueError("space must vanish at x = 0")
        coeffs.check_mode(grid, mode)
        self.space, self.coeffs, self.grid, self.mode = space, coeffs, grid, mode
        self.K = assemble_stiffness(space)
        self.kl = space.bandwidth
        if mode == DISSIPATIVE:
            self.M = assemble_mass(space)
        else:
            self.Kstar = assemble_bstar(space)

    # Both schemes read  W dU = L AU + load  with W the time-derivative form.
    def _dissipative(self, th):
        c, sp = self.coeffs, self.space
        v1 = sp.value_dof_at_one
        W = self.M.add_entry(v1, v1, -c.eps(th))
        L = self.K * (-c.a(th))
        if c.beta is not None:
            L = L + assemble_mass(sp, lambda X: c.beta(th, X))
        L = L.add_entry(v1, v1, c._delta(th))
        load = np.zeros(sp.dof_count)
        if c.f is not None:
            load += load_vector(sp, lambda X: c.f(th, X))
        load[v1] += c._g(th)
        return W, L, load

    def _reactive(self, th):
        c, sp = self.coeffs, self.space
        v1, d1, d0 = sp.value_dof_at_one, sp.deriv_dof_at_one, sp.deriv_dof_at_zero
        a, eps = c.a(th), c.eps(th)
        L = self.Kstar * (-a)
        beta1 = 0.0
        if c.beta is not None:
            if c.beta_x is None:
                raise ValueError("the reactive scheme needs beta_x")
            L = L + assemble(sp, lambda X: c.beta(th, X), 1, 1)
            L = L + assemble(sp, lambda X: c.beta_x(th, X), 1, 0)
            beta1 = float(c.beta(th, np.array(1.0)))
        L = L.add_entry(d1, d1, a / eps)
        L = L.add_entry(d1, v1, -(c._delta(th) / eps + beta1))
        load = np.zeros(sp.dof_count)
        f1 = f0 = 0.0
        if c.f is not None:
            if c.f_x is None:
                raise ValueError("the reactive scheme needs f_x")
            load += load_vector(sp, lambda X: c.f_x(th, X), deriv=1)
            f1 = float(c.f(th, np.array(1.0)))
            f0 = float(c.f(th, np.array(0.0)))
        load[d1] -= c._g(th) / eps + f1
        load[d0] += f0
        return self.K.copy(), L, load

    def matrices(self, n: int):
        th = self.grid.half(n)
        k = self.grid.step_length(n)
        W, L, load = (self._dissipative if self.mode == DISSIPATIVE else self._reactive)(th)
        left = W - (0.5 * k) * L
        right = W + (0.5 * k) * L
        return left, right, k * load

    def step(self, U_prev: DofField, n: int) -> DofField:
        left, right, load = self.matrices(n)
        rhs = right.matvec(U_prev.coeffs) + load
        try:
            left.factor(pivot=True)
        except SingularSystemError as exc:
            raise StepSizeError(
                f"step {n}: step-size condition violated (k_n = "
                f"{self.grid.step_length(n):.6g}); reduce the time step ({exc})",
                exc.pivot_index) from exc
        return DofField(self.space, left.solve(rhs))

    def residual(self, U_prev: DofField, U: DofField, n: int) -> float:
        """Relative residual of the step equations."""
        left, right, load = self.matrices(n)
        rhs = right.matvec(U_prev.coeffs) + load
        r = left.matvec(U.coeffs) - rhs
        return float(np.linalg.norm(r) / max(np.linalg.norm(rhs), 1e-300))

    def l2_norm(self, U: DofField) -> float:
        return U.l2_norm()


def init_dissipative(space: FeSpace, u0: Callable) -> DofField:
    return elliptic_project(space, u0)


def init_reactive(space: FeSpace, u0: Callable, du0: Callable, d2u0: Callable) -> DofField:
    return elliptic_project_star(space, u0, du0, d2u0)


def step_dissipative(ctx: ParabolicContext, U_prev: DofField, n: int) -> DofField:
    if ctx.mode != DISSIPATIVE:
        raise ValueError("context is not dissipative")
    return ctx.step(U_prev, n)


def step_reactive(ctx: ParabolicContext, U_prev: DofField, n: int) -> DofField:
    if ctx.mode != REACTIVE:
        raise ValueError("context is not reactive")
    return ctx.step(U_prev, n)


def run_parabolic(ctx: ParabolicContext, U0: DofField) -> FieldHistory:
    hist = FieldHistory()
    U = U0
    hist.record(0, 0.0, U, ctx.l2_norm(U), None)
    for n in range(1, ctx.grid.steps + 1):
        U = ctx.step(U, n)
        hist.record(n, ctx.grid.t[n], U, ctx.l2_norm(U), None)
    hist.final = U
    return hist


__all__ = [
    "DISSIPATIVE", "REACTIVE", "ParabolicCoeffs", "ParabolicContext",
    "init_dissipative", "init_reactive", "step_dissipative", "step_reactive",
    "run_parabolic",
]
