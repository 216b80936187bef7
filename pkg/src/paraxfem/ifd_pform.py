"""Stabilised p-formulation of the rigid-bottom wedge problem.

Substituting the PDE for w_t in the bottom condition and differentiating
in depth gives an equation for p-tilde = w_y.  After the strip map and
the phase change p = s exp(zeta) (p-tilde + zeta_x * integral), the
unknown p(t, x) satisfies

    p_t = (i/A) p_xx + B p_x + (B_x + G) p + G_x theta,   p_x(t, 0) = 0,
    (i/A) p_x(t, 1) = (1 - R1 B(1))/R1 p(1) - (R1 G(1) + R2)/R1 theta(1),

with theta(t, x) = int_0^x p and w(t, x s) = exp(-zeta) theta.  The phase
zeta = i c(t) x^2 is switched on only where the bottom is downsloping.

The p-space has no essential condition at x = 0.  Time stepping is CN
with coefficients at half-steps.  Nodal values of theta are carried as
auxiliary unknowns linked by the (exact) trapezoid recurrence, which
keeps the whole step banded.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels
from .acoustics import BottomProfile
from .fem1d import (BandedSystem, DofField, FeSpace, LINEAR, Mesh1D,
                    SingularSystemError, assemble, assemble_mass,
                    assemble_stiffness, l2_project)
from .schrodinger import FieldHistory, StepSizeError, TimeGrid

DEGENERACY_TOL = 1e-10


class MonotonicityError(ValueError):
    """The bottom slope vanishes or changes sign inside a step."""


# ---------------------------------------------------------------------------
# coefficients


class ZetaCoefficients:
    """zeta, sigma and the derived coefficients A, B, G, R1, R2.

    ``g`` is the dimensionless bottom admittance (constant or callable).
    ``gamma(t, y)`` and its y-derivative ``gamma_y`` are optional.
    """

    def __init__(self, profile: BottomProfile, eps_sigma: float = 0.1, g=0.0,
                 gamma: Optional[Callable] = None, gamma_y: Optional[Callable] = None):
        if eps_sigma <= 0:
            raise ValueError("eps_sigma must be positive")
        if (gamma is None) != (gamma_y is None):
            raise ValueError("gamma and gamma_y must be given together")
        self.profile = profile
        self.eps_sigma = float(eps_sigma)
        self._g = g if callable(g) else (lambda t, _g=complex(g): _g)
        self.gamma, self.gamma_y = gamma, gamma_y

    def g(self, t):
        return self._g(t)

    def _slope(self, t):
        s, sd, sdd = self.profile.values(t)
        if sd == 0:
            raise MonotonicityError(
                f"bottom slope vanishes at t={t}: sigma is undefined")
        return s, sd, sdd

    def downsloping(self, t) -> bool:
        return self._slope(t)[1] > 0

    def sigma(self, t):
        s, sd, _ = self._slope(t)
        if sd < 0:
            return 1.0
        return 2.0 * (1.0 + sd * sd) / (sd * sd) + self.eps_sigma

    def c(self, t):
        """zeta = i c(t) x^2."""
        s, sd, _ = self._slope(t)
        if sd < 0:
            return 0.0
        return 0.5 * (self.sigma(t) - 1.0) * sd * s

    def c_dot(self, t):
        s, sd, sdd = self._slope(t)
        if sd < 0:
            return 0.0
        sig = self.sigma(t)
        sig_dot = -4.0 * sdd / sd ** 3
        return 0.5 * (sig_dot * sd * s + (sig - 1.0) * (sdd * s + sd * sd))

    def zeta(self, t, x):
        return 1j * self.c(t) * np.asarray(x) ** 2

    def zeta_x(self, t, x):
        return 2j * self.c(t) * np.asarray(x)

    def zeta_xx(self, t, x):
        return 2j * self.c(t) + 0 * np.asarray(x)

    def zeta_t(self, t, x):
        return 1j * self.c_dot(t) * np.asarray(x) ** 2

    def A(self, t):
        return 2.0 * self.profile.s(t) ** 2

    def B(self, t, x):
        s, sd, _ = self._slope(t)
        return np.asarray(x) * sd / s * self.sigma(t)

    def B1(self, t):
        """B(t, 1), which is also B_x."""
        s, sd, _ = self._slope(t)
        return sd / s * self.sigma(t)

    def R1(self, t):
        s, sd, _ = self._slope(t)
        return sd * s / (1.0 + sd * sd)

    def R2(self, t):
        return ((self.g(t) - self.zeta_t(t, 1.0)) * self.R1(t)
                + self.zeta_x(t, 1.0))

    def _g2(self, t):
        s, sd, _ = self._slope(t)
        c = self.c(t)
        return 1j * (self.c_dot(t) - 2.0 * c * sd / s - 2.0 * c * c / (s * s))

    def G(self, t, x):
        x = np.asarray(x)
        s = self.profile.s(t)
        out = self._g2(t) * x * x + self.c(t) / (s * s)
        if self.gamma is not None:
            out = out + 1j * self.gamma(t, x * s)
        return out

    def G_x(self, t, x):
        x = np.asarray(x)
        out = 2.0 * self._g2(t) * x
        if self.gamma_y is not None:
            s = self.profile.s(t)
            out = out + 1j * s * self.gamma_y(t, x * s)
        return out

    def has_volume_coupling(self, t) -> bool:
        return self.gamma_y is not None or self.c(t) != 0.0

    def stability_margin(self, t):
        """1/R1 - B(t,1)/2; negative on downsloping stretches."""
        return 1.0 / self.R1(t) - 0.5 * self.B1(t)


# ---------------------------------------------------------------------------
# theta = int_0^x p on linear elements


def theta_nodes(space: FeSpace, coeffs) -> np.ndarray:
    """theta_h at the mesh nodes (trapezoid sums, exact for linear p)."""
    c = np.asarray(coeffs)
    h = space.mesh.h
    out = np.zeros(c.size, dtype=np.result_type(c.dtype, float))
    out[1:] = np.cumsum(0.5 * h * (c[:-1] + c[1:]))
    return out


def theta_eval(space: FeSpace, coeffs, x) -> np.ndarray:
    """theta_h at arbitrary points in [0, 1]."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = np.asarray(coeffs)
    nodes = space.mesh.nodes
    th = theta_nodes(space, c)
    e = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, space.mesh.element_count - 1)
    h = space.mesh.h[e]
    xi = (x - nodes[e]) / h
    return th[e] + h * (c[e] * (xi - 0.5 * xi * xi) + c[e + 1] * 0.5 * xi * xi)


def integral_weights(space: FeSpace) -> np.ndarray:
    """W_j = int phi_j, so theta_h(1) = W . c."""
    h = space.mesh.h
    W = np.zeros(space.dof_count)
    W[:-1] += 0.5 * h
    W[1:] += 0.5 * h
    return W


# ---------------------------------------------------------------------------
# initial data


def build_p_initial(space: FeSpace, zc: ZetaCoefficients, dw0: Callable,
                    w0: Optional[Callable] = None, npts: int = 16) -> DofField:
    """L2 projection of p0 = s0 exp(zeta)[w0'(x s0) + zeta_x int_0^x w0'(xi s0) dxi].

    Without ``w0`` the inner integral is computed by Gauss quadrature.
    """
    s0 = float(zc.profile.s(0.0))

    def inner(x):
        x = np.asarray(x, dtype=float)
        if w0 is not None:
            return w0(x * s0) / s0
        xi, wq = np.polynomial.legendre.leggauss(npts)
        pts = 0.5 * (xi + 1.0)
        vals = dw0(np.multiply.outer(x, pts) * s0)
        return 0.5 * x * np.tensordot(vals, wq, axes=([-1], [0]))

    def p0(x):
        x = np.asarray(x, dtype=float)
        return s0 * np.exp(zc.zeta(0.0, x)) * (dw0(x * s0) + zc.zeta_x(0.0, x) * inner(x))

    return l2_project(space, p0)


def p_space(mesh: Mesh1D) -> FeSpace:
    return FeSpace(mesh, LINEAR, clamped=False)


# ---------------------------------------------------------------------------
# stepping


@dataclass
class _StepPieces:
    left: BandedSystem      # c-c block of the left matrix
    right: BandedSystem     # c-c block of the right matrix
    alpha2: complex         # coefficient of theta(1) in the boundary row
    qtheta: Optional[np.ndarray]  # (ndof, nel+1) coupling onto theta nodes, local
    qloc: Optional[BandedSystem]  # banded part of (G_x theta, phi)


class PStepContext:
    """CN stepping for the p-equation on an unclamped linear space.

    ``solver`` is ``"auto"`` (Sherman-Morrison when there is no volume
    coupling, the augmented banded system otherwise), ``"augmented"``,
    ``"sherman-morrison"`` or ``"dense"`` (reference path, small meshes).
    """

    def __init__(self, space: FeSpace, zc: ZetaCoefficients, grid: TimeGrid,
                 solver: str = "auto"):
        if space.family != LINEAR or space.clamped:
            raise ValueError("the p-equation needs an unclamped linear space")
        if solver not in ("auto", "augmented", "sherman-morrison", "dense"):
            raise ValueError(f"unknown solver {solver!r}")
        self.space, self.zc, self.grid, self.solver = space, zc, grid, solver
        self.M = assemble_mass(space)
        self.K = assemble_stiffness(space)
        self.W = integral_weights(space)
        self.last = space.dof_count - 1
        self.stability_margins = []

    # -- per-step checks ----------------------------------------------------

    def _check_step(self, n):
        t0, t1 = self.grid.t[n - 1], self.grid.t[n]
        th = self.grid.half(n)
        sd = [self.zc.profile.s_dot(t) for t in (t0, th, t1)]
        sgn = np.sign(sd[1])
        if sgn == 0 or np.sign(sd[0]) == -sgn or np.sign(sd[2]) == -sgn:
            raise MonotonicityError(
                f"step {n}: bottom slope is not one-signed on [{t0:.6g}, {t1:.6g}]")
        d = 1.0 - self.zc.R1(th) * self.zc.B1(th)
        if abs(d) < DEGENERACY_TOL:
            raise SingularSystemError(f"step {n}: 1 - R1 B(1) vanishes at t={th:.6g}")
        return th

    # -- assembly -----------------------------------------------------------

    def _pieces(self, n) -> _StepPieces:
        th = self._check_step(n)
        zc, sp = self.zc, self.space
        k = self.grid.step_length(n)
        R1 = zc.R1(th)
        B1 = zc.B1(th)
        alpha1 = (1.0 - R1 * B1) / R1
        alpha2 = (R1 * zc.G(th, 1.0) + zc.R2(th)) / R1
        self.stability_margins.append(zc.stability_margin(th))
        L = (-1j / zc.A(th)) * self.K
        L = L + assemble(sp, lambda X: zc.B(th, X), 0, 1)
        L = L + assemble_mass(sp, lambda X: B1 + zc.G(th, X))
        L.data[self.last, sp.bandwidth] += alpha1
        qtheta = qloc = None
        if zc.has_volume_coupling(th):
            qloc, qtheta = self._theta_coupling(th)
            L = L + qloc
        Mc = self.M * (1.0 + 0j)
        return _StepPieces(Mc - (0.5 * k) * L, Mc + (0.5 * k) * L, alpha2, qtheta, qloc)

    def _theta_coupling(self, th):
        """Split (G_x theta_h, phi_l) into a banded c-part and a theta-node part."""
        sp = self.space
        X, JxW, phi, _, _ = sp.tabulate()
        gx = np.asarray(self.zc.G_x(th, X)) * JxW
        xi = sp.rule.points
        h = sp.mesh.h
        psi = np.stack([xi - 0.5 * xi * xi, 0.5 * xi * xi])          # (2, nq)
        local = np.einsum("eaq,bq,eq->eab", phi, psi, gx) * h[:, None, None]
        qloc = BandedSystem(sp.dof_count, 1, 1, dtype=complex)
        _kernels.scatter(qloc.data, 1, np.ascontiguousarray(local), sp.element_dofs)
        node_w = np.einsum("eaq,eq->ea", phi, gx)                      # (nel, 2)
        return qloc, node_w

    # -- solves -------------------------------------------------------------

    def step(self, P_prev: DofField, n: int) -> DofField:
        pc = self._pieces(n)
        k = self.grid.step_length(n)
        cp = P_prev.coeffs
        rhs = pc.right.matvec(cp)
        th_prev = theta_nodes(self.space, cp)
        rhs[self.last] -= 0.5 * k * pc.alpha2 * th_prev[-1]
        if pc.qtheta is not None:
            rhs += 0.5 * k * self._apply_qtheta(pc.qtheta, th_prev)
        mode = self.solver
        if mode == "auto":
            mode = "sherman-morrison" if pc.qtheta is None else "augmented"
        if mode == "sherman-morrison" and pc.qtheta is not None:
            raise ValueError("Sherman-Morrison needs G_x = 0 on the step")
        try:
            if mode == "sherman-morrison":
                c = self._solve_sm(pc, k, rhs)
            elif mode == "augmented":
                c = self._solve_augmented(pc, k, rhs)
            else:
                c = self._solve_dense(pc, k, rhs)
        except (SingularSystemError, np.linalg.LinAlgError) as exc:
            raise StepSizeError(f"step {n}: p-step matrix is singular ({exc}); "
                                "reduce the time step") from exc
        return DofField(self.space, c)

    def _apply_qtheta(self, node_w, th):
        out = np.zeros(self.space.dof_count, dtype=complex)
        out[:-1] += node_w[:, 0] * th[:-1]
        out[1:] += node_w[:, 1] * th[:-1]
        return out

    def _solve_sm(self, pc, k, rhs):
        # left = band + u W^T with u = (k/2) alpha2 e_last
        band = pc.left
        band.factor(pivot=True)
        y = band.solve(rhs)
        u = np.zeros(self.space.dof_count, dtype=complex)
        u[self.last] = 0.5 * k * pc.alpha2
        z = band.solve(u)
        denom = 1.0 + self.W @ z
        if abs(denom) < 1e-14:
            raise SingularSystemError("rank-one update makes the step singular")
        return y - z * (self.W @ y) / denom

    def _prefix_matrix(self):
        """T with theta_nodes = T c."""
        nd = self.space.dof_count
        h = self.space.mesh.h
        T = np.zeros((nd, nd))
        for e in range(nd - 1):
            T[e + 1] = T[e]
            T[e + 1, e] += 0.5 * h[e]
            T[e + 1, e + 1] += 0.5 * h[e]
        return T

    def _solve_dense(self, pc, k, rhs):
        A = pc.left.to_dense().astype(complex)
        A[self.last] += 0.5 * k * pc.alpha2 * self.W
        if pc.qtheta is not None:
            T = self._prefix_matrix()
            Qn = np.zeros((self.space.dof_count, self.space.dof_count), dtype=complex)
            nel = self.space.mesh.element_count
            for e in range(nel):
                Qn[e] += pc.qtheta[e, 0] * T[e]
                Qn[e + 1] += pc.qtheta[e, 1] * T[e]
            A -= 0.5 * k * Qn
        return np.linalg.solve(A, rhs)

    def _solve_augmented(self, pc, k, rhs):
        # unknowns z = [c_0, th_0, c_1, th_1, ...]; even rows are the Galerkin
        # equations, odd rows tie th_j to the trapezoid sum of c.
        nd = self.space.dof_count
        h = self.space.mesh.h
        N2 = 2 * nd
        kl, ku = 3, 2
        big = BandedSystem(N2, kl, ku, dtype=complex)
        D = big.data
        L = pc.left.data
        for off in (-1, 0, 1):
            rows = np.arange(max(0, -off), min(nd, nd - off))
            D[2 * rows, 2 * off + kl] = L[rows, off + 1]
        # theta(1) enters the boundary row
        D[2 * (nd - 1), 1 + kl] += 0.5 * k * pc.alpha2
        if pc.qtheta is not None:
            nel = nd - 1
            e = np.arange(nel)
            # row l=e uses th_e (offset +1), row l=e+1 uses th_e (offset -1)
            D[2 * e, 1 + kl] -= 0.5 * k * pc.qtheta[:, 0]
            D[2 * (e + 1), -1 + kl] -= 0.5 * k * pc.qtheta[:, 1]
        # constraint rows
        D[1, kl] = 1.0
        j = np.arange(1, nd)
        scale = 1.0 / h[j - 1]
        D[2 * j + 1, kl] = scale
        D[2 * j + 1, -2 + kl] = -scale
        D[2 * j + 1, -3 + kl] = -0.5
        D[2 * j + 1, -1 + kl] = -0.5
        b = np.zeros(N2, dtype=complex)
        b[0::2] = rhs
        big.factor(pivot=True)
        return big.solve(b)[0::2]

    def l2_norm(self, P: DofField) -> float:
        c = P.coeffs
        return float(np.sqrt(abs(np.vdot(c, self.M.matvec(c)).real)))


def step_p(ctx: PStepContext, P_prev: DofField, n: int) -> DofField:
    return ctx.step(P_prev, n)


def recover_w(ctx: PStepContext, P: DofField, t: float, x) -> np.ndarray:
    """w(t, x s(t)) = exp(-zeta(t, x)) theta_h(t, x)."""
    x = np.asarray(x, dtype=float)
    th = theta_eval(ctx.space, P.coeffs, x)
    return np.exp(-ctx.zc.zeta(t, x)) * th


def run_p(ctx: PStepContext, P0: DofField, probe: Optional[Callable] = None,
          blowup_ratio: Optional[float] = None) -> FieldHistory:
    """March the p-equation; ``history.norms`` is the L2 stability monitor."""
    hist = FieldHistory()
    P = P0
    n0 = ctx.l2_norm(P0)

    def rec(n, t, P, norm):
        hist.times.append(float(t))
        hist.norms.append(norm)
        hist.boundary.append(complex(theta_nodes(ctx.space, P.coeffs)[-1]))
        if probe is not None:
            hist.probes.append(probe(n, t, P))

    rec(0, ctx.grid.t[0], P, n0)
    for n in range(1, ctx.grid.steps + 1):
        P = ctx.step(P, n)
        norm = ctx.l2_norm(P)
        rec(n, ctx.grid.t[n], P, norm)
        if blowup_ratio is not None and not norm <= blowup_ratio * n0:
            hist.status, hist.terminated_step = "unstable", n
            break
    hist.final = P
    return hist


__all__ = [
    "ZetaCoefficients", "PStepContext", "MonotonicityError", "theta_nodes",
    "theta_eval", "integral_weights", "build_p_initial", "p_space", "step_p",
    "recover_w", "run_p",
]
