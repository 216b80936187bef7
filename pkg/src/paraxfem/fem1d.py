"""One-dimensional finite elements on (0, 1).

Meshes, Lagrange-linear and Hermite-cubic spaces with the essential
condition v(0) = 0 built into the basis, Gauss-Legendre quadrature,
assembly of every bilinear form the steppers need, banded linear solves
and the L2 / elliptic projections.

All bases are real-valued, so sesquilinear forms reduce to bilinear ones
on the coefficient vectors and complex data only enters through the
coefficients and the load vectors.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np

from . import _kernels

LINEAR = "linear"
HERMITE = "hermite"

Weight = Union[None, float, complex, Callable]


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when a banded factorization meets a (numerically) zero pivot."""

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


# ---------------------------------------------------------------------------
# mesh and quadrature


@dataclass(frozen=True)
class Mesh1D:
    """Partition 0 = x_0 < x_1 < ... < x_n = 1."""

    nodes: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("a mesh needs at least two nodes")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise ValueError("mesh must start at 0 and end at 1")
        if np.any(np.diff(x) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @classmethod
    def uniform(cls, n: int) -> "Mesh1D":
        if n < 1:
            raise ValueError("element count must be >= 1")
        x = np.linspace(0.0, 1.0, n + 1)
        x[-1] = 1.0
        return cls(x)

    @property
    def element_count(self) -> int:
        return self.nodes.size - 1

    @cached_property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h_max(self) -> float:
        return float(self.h.max())


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on the reference element [0, 1]."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss(cls, npts: int) -> "QuadratureRule":
        xi, w = np.polynomial.legendre.leggauss(npts)
        return cls(0.5 * (xi + 1.0), 0.5 * w)

    @property
    def order(self) -> int:
        return self.points.size

    @property
    def exact_degree(self) -> int:
        return 2 * self.points.size - 1


def _reference_basis(family, xi, h):
    """Values and first/second x-derivatives of the local shape functions.

    ``xi`` has shape (nq,), ``h`` shape (ne,); results are (ne, nloc, nq).
    """
    xi = np.asarray(xi, dtype=float)[None, :]
    h = np.asarray(h, dtype=float)[:, None]
    ones = np.ones_like(h * xi)
    if family == LINEAR:
        v = np.stack([ones * (1.0 - xi), ones * xi], axis=1)
        d1 = np.stack([-ones / h, ones / h], axis=1)
        d2 = np.zeros_like(v)
        return v, d1, d2
    xi2, xi3 = xi * xi, xi * xi * xi
    v = np.stack([
        ones * (1.0 - 3.0 * xi2 + 2.0 * xi3),
        h * (xi - 2.0 * xi2 + xi3),
        ones * (3.0 * xi2 - 2.0 * xi3),
        h * (xi3 - xi2),
    ], axis=1)
    d1 = np.stack([
        (6.0 * xi2 - 6.0 * xi) / h,
        ones * (1.0 - 4.0 * xi + 3.0 * xi2),
        (6.0 * xi - 6.0 * xi2) / h,
        ones * (3.0 * xi2 - 2.0 * xi),
    ], axis=1)
    d2 = np.stack([
        (12.0 * xi - 6.0) / h**2,
        (6.0 * xi - 4.0) / h,
        (6.0 - 12.0 * xi) / h**2,
        (6.0 * xi - 2.0) / h,
    ], axis=1)
    return v, d1, d2


# ---------------------------------------------------------------------------
# spaces


class FeSpace:
    """Continuous piecewise-linear or C1 piecewise-cubic (Hermite) space.

    With ``clamped=True`` (the default) the value DOF at x = 0 is removed,
    so every function in the space vanishes at the left end.  Hermite
    derivative DOFs are physical derivatives, so for a field ``u`` the
    coefficient at ``deriv_dof_at_one`` *is* u'(1).
    """

    def __init__(self, mesh: Mesh1D, family: str = LINEAR, clamped: bool = True,
                 quad_points: Optional[int] = None):
        if family not in (LINEAR, HERMITE):
            raise ValueError(f"unknown element family {family!r}")
        self.mesh = mesh
        self.family = family
        self.clamped = clamped
        if quad_points is None:
            quad_points = 4 if family == LINEAR else 6
        self.rule = QuadratureRule.gauss(quad_points)

    def __repr__(self):
        return (f"FeSpace(n={self.mesh.element_count}, family={self.family!r}, "
                f"clamped={self.clamped})")

    @property
    def nloc(self) -> int:
        return 2 if self.family == LINEAR else 4

    @property
    def bandwidth(self) -> int:
        return 1 if self.family == LINEAR else 3

    @property
    def dof_count(self) -> int:
        nn = self.mesh.nodes.size
        full = nn if self.family == LINEAR else 2 * nn
        return full - 1 if self.clamped else full

    def value_dof(self, node: int) -> int:
        i = node if self.family == LINEAR else 2 * node
        return i - 1 if self.clamped else i

    def deriv_dof(self, node: int) -> int:
        if self.family != HERMITE:
            raise ValueError("derivative DOFs exist only for Hermite elements")
        return 2 * node if self.clamped else 2 * node + 1

    @property
    def value_dof_at_one(self) -> int:
        return self.value_dof(self.mesh.element_count)

    @property
    def deriv_dof_at_one(self) -> int:
        return self.deriv_dof(self.mesh.element_count)

    @property
    def deriv_dof_at_zero(self) -> int:
        return self.deriv_dof(0)

    @cached_property
    def element_dofs(self) -> np.ndarray:
        e = np.arange(self.mesh.element_count)
        if self.family == LINEAR:
            d = np.stack([e, e + 1], axis=1)
        else:
            d = np.stack([2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3], axis=1)
        if self.clamped:
            d = d - 1
        d.setflags(write=False)
        return d

    def tabulate(self, rule: Optional[QuadratureRule] = None):
        """Quadrature data ``(X, JxW, phi, dphi, d2phi)`` over all elements."""
        rule = rule or self.rule
        key = rule.order
        cache = self.__dict__.setdefault("_tab_cache", {})
        if key not in cache:
            x0, h = self.mesh.nodes[:-1], self.mesh.h
            X = x0[:, None] + h[:, None] * rule.points[None, :]
            JxW = h[:, None] * rule.weights[None, :]
            cache[key] = (X, JxW) + _reference_basis(self.family, rule.points, h)
        return cache[key]

    def _locate(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        nodes = self.mesh.nodes
        e = np.clip(np.searchsorted(nodes, x, side="right") - 1,
                    0, self.mesh.element_count - 1)
        h = self.mesh.h[e]
        xi = (x - nodes[e]) / h
        return e, xi, h

    def evaluate(self, coeffs, x, deriv: int = 0):
        """Evaluate the field with DOF vector ``coeffs`` (or its derivative)."""
        shape = np.shape(x)
        e, xi, h = self._locate(np.ravel(x))
        vals = self._eval_local(e, xi, h, deriv)
        coeffs = np.asarray(coeffs)
        c = np.concatenate([coeffs, np.zeros(1, dtype=coeffs.dtype)])
        dofs = self.element_dofs[e]
        res = np.sum(c[dofs] * vals, axis=1)
        return res[0] if shape == () else res.reshape(shape)

    def _eval_local(self, e, xi, h, deriv):
        xi = xi[:, None]
        h = h[:, None]
        if self.family == LINEAR:
            if deriv == 0:
                return np.hstack([1.0 - xi, xi])
            if deriv == 1:
                return np.hstack([-1.0 / h, 1.0 / h])
            return np.zeros((xi.shape[0], 2))
        xi2, xi3 = xi * xi, xi ** 3
        if deriv == 0:
            return np.hstack([1 - 3 * xi2 + 2 * xi3, h * (xi - 2 * xi2 + xi3),
                              3 * xi2 - 2 * xi3, h * (xi3 - xi2)])
        if deriv == 1:
            return np.hstack([(6 * xi2 - 6 * xi) / h, 1 - 4 * xi + 3 * xi2,
                              (6 * xi - 6 * xi2) / h, 3 * xi2 - 2 * xi])
        if deriv == 2:
            return np.hstack([(12 * xi - 6) / h**2, (6 * xi - 4) / h,
                              (6 - 12 * xi) / h**2, (6 * xi - 2) / h])
        raise ValueError("derivative order must be 0, 1 or 2")

    def interpolate(self, v: Callable, dv: Optional[Callable] = None) -> "DofField":
        """Nodal interpolant (Hermite needs ``dv`` for the derivative DOFs)."""
        x = self.mesh.nodes
        vals = np.asarray(v(x))
        dtype = np.result_type(vals.dtype, float)
        c = np.zeros(self.dof_count, dtype=dtype)
        start = 1 if self.clamped else 0
        nodes = np.arange(start, x.size)
        c[[self.value_dof(i) for i in nodes]] = vals[start:]
        if self.family == HERMITE:
            if dv is None:
                raise ValueError("Hermite interpolation needs the derivative")
            dvals = np.asarray(dv(x))
            c = c.astype(np.result_type(c.dtype, dvals.dtype))
            c[[self.deriv_dof(i) for i in range(x.size)]] = dvals
        return DofField(self, c)

    def zero(self, dtype=float) -> "DofField":
        return DofField(self, np.zeros(self.dof_count, dtype=dtype))


# ---------------------------------------------------------------------------
# banded systems


class BandedSystem:
    """Square banded matrix with a cached LU factorization.

    Arithmetic returns new systems; only the factorization state mutates.
    ``spd=True`` marks symmetric positive-definite forms, which are factored
    without pivoting.
    """

    def __init__(self, n: int, kl: int, ku: int, data=None, dtype=float,
                 spd: bool = False):
        self.n, self.kl, self.ku = int(n), int(kl), int(ku)
        width = 2 * self.kl + self.ku + 1
        if data is None:
            data = np.zeros((self.n, width), dtype=dtype)
        elif data.shape != (self.n, width):
            raise ValueError("band storage has the wrong shape")
        self.data = data
        self.spd = spd
        self._lu = None
        self._piv = None

    # construction ----------------------------------------------------------

    @classmethod
    def from_dense(cls, A, kl: int, ku: int, spd: bool = False) -> "BandedSystem":
        A = np.asarray(A)
        n = A.shape[0]
        out = cls(n, kl, ku, dtype=A.dtype, spd=spd)
        for off in range(-kl, ku + 1):
            lo, hi = max(0, -off), min(n, n - off)
            rows = np.arange(lo, hi)
            out.data[rows, off + kl] = A[rows, rows + off]
        return out

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=self.data.dtype)
        for off in range(-self.kl, self.ku + 1):
            lo, hi = max(0, -off), min(self.n, self.n - off)
            rows = np.arange(lo, hi)
            A[rows, rows + off] = self.data[rows, off + self.kl]
        return A

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def factored(self) -> bool:
        return self._lu is not None

    def copy(self) -> "BandedSystem":
        return BandedSystem(self.n, self.kl, self.ku, self.data.copy(), spd=self.spd)

    def entry(self, i: int, j: int):
        if not -self.kl <= j - i <= self.ku:
            return self.data.dtype.type(0)
        return self.data[i, j - i + self.kl]

    def add_entry(self, i: int, j: int, value) -> "BandedSystem":
        """Copy of the system with ``value`` added at (i, j)."""
        if not -self.kl <= j - i <= self.ku:
            raise IndexError("entry outside the band")
        dtype = np.result_type(self.data.dtype, np.asarray(value).dtype)
        out = BandedSystem(self.n, self.kl, self.ku, self.data.astype(dtype), spd=False)
        out.data[i, j - i + self.kl] += value
        return out

    def _combine(self, other, sign):
        if not isinstance(other, BandedSystem):
            return NotImplemented
        if (other.n, other.kl, other.ku) != (self.n, self.kl, self.ku):
            raise ValueError("band structures differ")
        data = self.data + sign * other.data
        return BandedSystem(self.n, self.kl, self.ku, data,
                            spd=self.spd and other.spd and sign > 0)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __mul__(self, scalar):
        if isinstance(scalar, BandedSystem) or np.ndim(scalar) != 0:
            return NotImplemented
        spd = self.spd and np.isreal(scalar) and np.real(scalar) > 0
        return BandedSystem(self.n, self.kl, self.ku, self.data * scalar, spd=bool(spd))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x)
        y = np.zeros(self.n, dtype=np.result_type(self.data.dtype, x.dtype))
        W = self.data if self.data.dtype == y.dtype else self.data.astype(y.dtype)
        return _kernels.band_matvec(W, self.kl, self.ku, x.astype(y.dtype, copy=False), y)

    __matmul__ = matvec

    # factorization ---------------------------------------------------------

    def factor(self, pivot: Optional[bool] = None) -> "BandedSystem":
        if pivot is None:
            pivot = not self.spd
        W = self.data.copy()
        scale = float(np.max(np.abs(W))) if W.size else 0.0
        if scale == 0.0:
            raise SingularSystemError("zero matrix", 0)
        tol = 64.0 * np.finfo(float).eps * scale
        piv, info = _kernels.band_factor(W, self.kl, self.ku, bool(pivot), tol)
        if info:
            raise SingularSystemError(
                f"zero pivot at row {info - 1} (matrix singular to working precision)",
                info - 1)
        diag = np.abs(W[:, self.kl])
        if diag.min() < 1e-13 * diag.max():
            raise SingularSystemError(
                "factorization is ill-conditioned (pivot ratio "
                f"{diag.min() / diag.max():.3e})", int(np.argmin(diag)))
        self._lu, self._piv = W, piv
        return self

    def solve(self, rhs) -> np.ndarray:
        if self._lu is None:
            self.factor()
        rhs = np.asarray(rhs)
        dtype = np.result_type(self._lu.dtype, rhs.dtype)
        W = self._lu if self._lu.dtype == dtype else self._lu.astype(dtype)
        return _kernels.band_solve(W, self._piv, self.kl, self.ku,
                                   rhs.astype(dtype, copy=True))


def solve(system: BandedSystem, rhs) -> np.ndarray:
    return system.solve(rhs)


# ---------------------------------------------------------------------------
# fields


@dataclass
class DofField:
    """A finite element function: a space plus its coefficient vector."""

    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs)
        if self.coeffs.shape != (self.space.dof_count,):
            raise ValueError(
                f"expected {self.space.dof_count} coefficients, got {self.coeffs.shape}")

    def __call__(self, x, deriv: int = 0):
        return self.space.evaluate(self.coeffs, x, deriv)

    def __add__(self, other):
        return DofField(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return DofField(self.space, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return DofField(self.space, self.coeffs * scalar)

    __rmul__ = __mul__

    def at_quadrature(self, deriv: int = 0, rule: Optional[QuadratureRule] = None):
        X, JxW, *tabs = self.space.tabulate(rule)
        c = np.concatenate([self.coeffs, np.zeros(1, dtype=self.coeffs.dtype)])
        local = c[self.space.element_dofs]
        return np.einsum("ea,eaq->eq", local, tabs[deriv])

    def _norm(self, deriv, rule=None):
        JxW = self.space.tabulate(rule)[1]
        vals = self.at_quadrature(deriv, rule)
        return float(np.sqrt(np.sum(np.abs(vals) ** 2 * JxW)))

    def l2_norm(self, rule=None) -> float:
        return self._norm(0, rule)

    def h1_seminorm(self, rule=None) -> float:
        return self._norm(1, rule)

    def h2_seminorm(self, rule=None) -> float:
        return self._norm(2, rule)

    def boundary_eval(self):
        return boundary_eval(self)


def boundary_eval(field: DofField):
    """``(value, derivative)`` of the field at x = 1, read off exactly."""
    space, c = field.space, field.coeffs
    val = c[space.value_dof_at_one]
    if space.family == HERMITE:
        return val, c[space.deriv_dof_at_one]
    n = space.mesh.element_count
    prev = space.value_dof(n - 1)
    left = c[prev] if prev >= 0 else 0.0 * val
    return val, (val - left) / space.mesh.h[-1]


# ---------------------------------------------------------------------------
# assembly


def _eval_weight(weight, X):
    if weight is None:
        return None
    if callable(weight):
        w = np.asarray(weight(X))
        return np.broadcast_to(w, X.shape)
    return np.full(X.shape, weight, dtype=np.result_type(type(weight), float))


def assemble(space: FeSpace, weight: Weight = None, test_deriv: int = 0,
             trial_deriv: int = 0, rule: Optional[QuadratureRule] = None,
             spd: bool = False) -> BandedSystem:
    """Matrix with entry (l, j) = integral of weight * D^t phi_j * D^s phi_l.

    Row index l is the test function (derivative order ``test_deriv``),
    column j the trial function.
    """
    X, JxW, *tabs = space.tabulate(rule)
    w = _eval_weight(weight, X)
    qw = JxW if w is None else w * JxW
    local = np.einsum("eaq,ebq,eq->eab", tabs[test_deriv], tabs[trial_deriv], qw)
    bw = space.bandwidth
    out = BandedSystem(space.dof_count, bw, bw, dtype=local.dtype, spd=spd)
    _kernels.scatter(out.data, bw, np.ascontiguousarray(local), space.element_dofs)
    return out


def assemble_mass(space: FeSpace, weight: Weight = None, rule=None) -> BandedSystem:
    real_weight = weight is None or (not callable(weight) and np.isreal(weight)
                                     and np.real(weight) > 0)
    return assemble(space, weight, 0, 0, rule, spd=bool(real_weight))


def assemble_stiffness(space: FeSpace, weight: Weight = None, rule=None) -> BandedSystem:
    return assemble(space, weight, 1, 1, rule, spd=weight is None and space.clamped)


def assemble_bstar(space: FeSpace, rule=None) -> BandedSystem:
    """The curvature form (v'', w'') on a Hermite space."""
    if space.family != HERMITE:
        raise ValueError("the curvature form needs C1 (Hermite) elements")
    return assemble(space, None, 2, 2, rule)


def assemble_gamma_star(space: FeSpace, rule=None) -> BandedSystem:
    """(v'', w'') + (v', w'), positive definite on clamped Hermite spaces."""
    out = assemble_bstar(space, rule) + assemble_stiffness(space, rule=rule)
    out.spd = space.clamped
    return out


def load_vector(space: FeSpace, f: Callable, deriv: int = 0, rule=None) -> np.ndarray:
    """Entries integral of f * D^deriv phi_l (the basis is real, so no conjugate)."""
    X, JxW, *tabs = space.tabulate(rule)
    fx = np.asarray(f(X))
    fx = np.broadcast_to(fx, X.shape)
    local = np.einsum("eaq,eq->ea", tabs[deriv], fx * JxW)
    out = np.zeros(space.dof_count, dtype=local.dtype)
    dofs = space.element_dofs
    keep = dofs >= 0
    np.add.at(out, dofs[keep], local[keep])
    return out


# ---------------------------------------------------------------------------
# projections


def l2_project(space: FeSpace, f: Callable, rule=None) -> DofField:
    """L2 projection: (P f, phi) = (f, phi) for every basis function."""
    M = assemble_mass(space, rule=rule)
    b = load_vector(space, f, rule=rule)
    return DofField(space, M.solve(b))


def _linear_stiffness_load(space: FeSpace, v: Callable) -> np.ndarray:
    # (v', phi') is exact through nodal differences on linear elements.
    x = space.mesh.nodes
    vals = np.asarray(v(x))
    jump = np.diff(vals) / space.mesh.h
    local = np.stack([-jump, jump], axis=1)
    out = np.zeros(space.dof_count, dtype=local.dtype)
    dofs = space.element_dofs
    keep = dofs >= 0
    np.add.at(out, dofs[keep], local[keep])
    return out


def elliptic_project(space: FeSpace, v: Callable, dv: Optional[Callable] = None,
                     rule=None) -> DofField:
    """Ritz projection R_h for the form (u', w').

    On linear elements the right-hand side is integrated exactly from
    nodal values of ``v``; Hermite spaces integrate ``dv`` by quadrature.
    """
    if not space.clamped:
        raise ValueError("the stiffness form is only definite on clamped spaces")
    K = assemble_stiffness(space, rule=rule)
    if space.family == LINEAR:
        b = _linear_stiffness_load(space, v)
    else:
        if dv is None:
            raise ValueError("Hermite elliptic projection needs v'")
        b = load_vector(space, dv, deriv=1, rule=rule)
    return DofField(space, K.solve(b))


def elliptic_project_star(space: FeSpace, v: Callable, dv: Callable, d2v: Callable,
                          rule=None) -> DofField:
    """Projection for (u'', w'') + (u', w') onto a clamped Hermite space."""
    if space.family != HERMITE:
        raise ValueError("the H2 projection needs Hermite elements")
    A = assemble_gamma_star(space, rule)
    b = load_vector(space, d2v, deriv=2, rule=rule) + load_vector(space, dv, deriv=1, rule=rule)
    return DofField(space, A.solve(b))


# ---------------------------------------------------------------------------
# error norms against exact functions


@dataclass
class ErrorNorms:
    l2: float
    h1_semi: float
    h2_semi: float = float("nan")

    @property
    def h1(self) -> float:
        return float(np.hypot(self.l2, self.h1_semi))


def error_norms(field: DofField, u: Callable, du: Optional[Callable] = None,
                d2u: Optional[Callable] = None, npts: int = 8) -> ErrorNorms:
    """L2, H1 and H2 seminorm errors, integrated with an ``npts`` Gauss rule."""
    rule = QuadratureRule.gauss(npts)
    X, JxW, *_ = field.space.tabulate(rule)

    def err(deriv, exact):
        if exact is None:
            return float("nan")
        diff = field.at_quadrature(deriv, rule) - np.asarray(exact(X))
        return float(np.sqrt(np.sum(np.abs(diff) ** 2 * JxW)))

    return ErrorNorms(err(0, u), err(1, du), err(2, d2u))


def nodal_l2_error(field: DofField, u: Callable) -> float:
    """sqrt(h * sum_j |U(x_j) - u(x_j)|^2) over the interior and right nodes."""
    x = field.space.mesh.nodes[1:]
    diff = field(x) - np.asarray(u(x))
    h = field.space.mesh.h
    return float(np.sqrt(np.sum(h * np.abs(diff) ** 2)))


__all__ = [
    "LINEAR", "HERMITE", "Mesh1D", "QuadratureRule", "FeSpace", "BandedSystem",
    "DofField", "SingularSystemError", "ErrorNorms", "assemble", "assemble_mass",
    "assemble_stiffness", "assemble_bstar", "assemble_gamma_star", "load_vector",
    "l2_project", "elliptic_project", "elliptic_project_star", "boundary_eval",
    "solve", "error_norms", "nodal_l2_error",
]
