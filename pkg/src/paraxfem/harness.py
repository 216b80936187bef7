"""Reproducible experiments: manufactured convergence studies, the ASA
wedge runs, the bottom-profile growth study and cross-model comparisons.

Runs are independent; ``run_many`` executes them on a thread pool whose
size is capped by ``PARAXFEM_THREADS`` and returns results in task order.
"""

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from . import acoustics as ac
from . import ifd_pform as ifd
from . import parabolic as pb
from . import schrodinger as sch
from .fem1d import HERMITE, LINEAR, FeSpace, Mesh1D, error_norms, nodal_l2_error

BLOWUP_RATIO = 1e6
WEDGE_DEPTH = {"up": 90.0, "down": 25.0}
WEDGE_RMAX = {"up": 2200.0, "down": None}
DEFAULT_WEDGE_N = 1000
DEFAULT_WEDGE_STEPS = 16000
ONSET_FACTOR = 10.0


def thread_count() -> int:
    raw = os.environ.get("PARAXFEM_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PARAXFEM_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError("PARAXFEM_THREADS must be at least 1")
    return n


def run_many(tasks: Sequence[Callable[[], object]], threads: Optional[int] = None) -> list:
    """Run zero-argument callables concurrently; results keep task order."""
    tasks = list(tasks)
    workers = min(threads or thread_count(), max(len(tasks), 1))
    if workers <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: t(), tasks))


# ---------------------------------------------------------------------------
# manufactured problems


@dataclass
class ManufacturedProblem:
    """An exact solution with the forcing that makes it exact.

    ``residual`` evaluates the strong equation and boundary condition at
    random points; it guards the hand-derived forcing algebra.
    """

    name: str
    u: Callable
    ux: Callable
    uxx: Callable
    ut: Callable
    coeffs: object
    strong_residual: Callable
    boundary_residual: Callable

    def u0(self, x):
        return self.u(0.0, x)

    def residual(self, samples: int = 1000, T: float = 1.0, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        t = rng.uniform(0.0, T, samples)
        x = rng.uniform(0.0, 1.0, samples)
        r1 = np.abs(self.strong_residual(t, x))
        r2 = np.abs([self.boundary_residual(ti) for ti in t])
        return float(max(r1.max(), r2.max()))


def _poly_u(t, x):
    return -x * (x - 1) ** 3 + np.sin(t) * x


def _poly_ux(t, x):
    return -(x - 1) ** 3 - 3 * x * (x - 1) ** 2 + np.sin(t)


def _poly_uxx(t, x):
    return -6 * (x - 1) * (2 * x - 1)


def _poly_ut(t, x):
    return np.cos(t) * x


def strip_problem(case: int, mode: str = sch.NEUMANN) -> ManufacturedProblem:
    """u = -x(x-1)^3 + sin(t) x on the strip of bottom case 1, 2 or 3."""
    base = ac.wedge_coefficients(ac.table_case(case), g=0.0)
    a = base.a

    def beta(t, x):
        return x * t + 1j * (3 * x + t * t)

    def f(t, x):
        return (np.cos(t) * x + 6j * a(t) * (x - 1) * (2 * x - 1)
                - 1j * (x * t + 1j * (3 * x + t * t)) * _poly_u(t, x))

    if mode == sch.NEUMANN:
        def f1(t):
            return np.sin(t) - base.mu(t) * (base.S(t) * np.cos(t) + base.G(t) * np.sin(t))
    elif mode == sch.AK:
        def f1(t):
            return np.sin(t)
    else:
        raise ValueError(f"unknown boundary mode {mode!r}")
    c = replace(base, beta=beta, f=f, f1=f1)

    def strong(t, x):
        return _poly_ut(t, x) - (1j * a(t) * _poly_uxx(t, x)
                                 + 1j * c.beta(t, x) * _poly_u(t, x) + c.f(t, x))

    def bc(t):
        rhs = c.f1(t)
        if mode == sch.NEUMANN:
            rhs = rhs + c.mu(t) * (c.S(t) * _poly_ut(t, 1.0) + c.G(t) * _poly_u(t, 1.0))
        return _poly_ux(t, 1.0) - rhs

    return ManufacturedProblem(f"table-case{case}-{mode}", _poly_u, _poly_ux, _poly_uxx,
                               _poly_ut, c, strong, bc)


def _parabolic_a(t):
    return 1.0 + 0.5 * np.sin(t)


def dissipative_problem(eps: float = -1.0, delta: float = -0.5) -> ManufacturedProblem:
    """Real problem with u = -x(x-1)^3 + sin(t) x, beta = x t."""
    if eps > 0:
        raise ValueError("dissipative problems need eps <= 0")

    def beta(t, x):
        return x * t

    def f(t, x):
        return _poly_ut(t, x) - _parabolic_a(t) * _poly_uxx(t, x) - x * t * _poly_u(t, x)

    def g(t):
        return (_parabolic_a(t) * np.sin(t) - eps * np.cos(t) - delta * np.sin(t))

    c = pb.ParabolicCoeffs.build(_parabolic_a, eps, beta=beta, delta=delta, g=g, f=f)
    return _parabolic_problem("dissipative", _poly_u, _poly_ux, _poly_uxx, _poly_ut, c)


def _wave_u(t, x):
    return np.sin(2 * x + t) - np.sin(t)


def _wave_ux(t, x):
    return 2 * np.cos(2 * x + t)


def _wave_uxx(t, x):
    return -4 * np.sin(2 * x + t)


def _wave_ut(t, x):
    return np.cos(2 * x + t) - np.cos(t)


def reactive_problem(eps: float = 1.0, delta: float = -0.5) -> ManufacturedProblem:
    """Real problem with u = sin(2x + t) - sin(t), beta = x t and eps > 0.

    u is not piecewise cubic, so the Hermite space does not contain it.
    """
    if not eps > 0:
        raise ValueError("reactive problems need eps > 0")

    def beta(t, x):
        return x * t

    def beta_x(t, x):
        return t + 0.0 * x

    def f(t, x):
        return _wave_ut(t, x) - _parabolic_a(t) * _wave_uxx(t, x) - x * t * _wave_u(t, x)

    def f_x(t, x):
        # d/dx of f; u_xt = -2 sin(2x + t), u_xxx = -8 cos(2x + t)
        return (-2 * np.sin(2 * x + t) + 8 * _parabolic_a(t) * np.cos(2 * x + t)
                - t * _wave_u(t, x) - x * t * _wave_ux(t, x))

    def g(t):
        return (_parabolic_a(t) * _wave_ux(t, 1.0) - eps * _wave_ut(t, 1.0)
                - delta * _wave_u(t, 1.0))

    c = pb.ParabolicCoeffs.build(_parabolic_a, eps, beta=beta, beta_x=beta_x,
                                 delta=delta, g=g, f=f, f_x=f_x)
    return _parabolic_problem("reactive", _wave_u, _wave_ux, _wave_uxx, _wave_ut, c)


def _parabolic_problem(name, u, ux, uxx, ut, c):
    def strong(t, x):
        return ut(t, x) - (c.a(t) * uxx(t, x) + c.beta(t, x) * u(t, x) + c.f(t, x))

    def bc(t):
        return (c.a(t) * ux(t, 1.0) - c.eps(t) * ut(t, 1.0)
                - c._delta(t) * u(t, 1.0) - c._g(t))

    return ManufacturedProblem(name, u, ux, uxx, ut, c, strong, bc)


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class LevelResult:
    h: float
    k: float
    error: float
    status: str = "complete"
    message: str = ""


@dataclass
class ConvergenceReport:
    """Errors per level and observed orders between successive levels.

    ``rates[i]`` compares level i with level i + 1 and is NaN for the last
    level or when either run failed.
    """

    levels: list
    rates: list
    norm: str = "l2_nodes"
    label: str = ""

    @property
    def errors(self):
        return [lv.error for lv in self.levels]


def observed_rates(levels: Sequence[LevelResult]) -> list:
    out = []
    for a, b in zip(levels[:-1], levels[1:]):
        ok = (a.status == "complete" and b.status == "complete"
              and a.error > 0 and b.error > 0)
        out.append(math.log(a.error / b.error) / math.log(a.h / b.h) if ok else float("nan"))
    out.append(float("nan"))
    return out


def _schrodinger_level(problem: ManufacturedProblem, mode: str, n: int) -> LevelResult:
    h = 1.0 / n
    try:
        space = FeSpace(Mesh1D.uniform(n))
        grid = sch.TimeGrid.uniform(1.0, n)
        ctx = sch.CnStepContext(space, problem.coeffs, grid, mode, warn_downsloping=False)
        U0 = sch.init_neumann(space, problem.coeffs, problem.u0)
        hist = sch.run(ctx, U0)
        err = nodal_l2_error(hist.final, lambda x: problem.u(1.0, x))
        return LevelResult(h, h, err)
    except (sch.StepSizeError, FloatingPointError) as exc:
        return LevelResult(h, h, float("nan"), "failed", str(exc))


def strip_study(case: int, levels: Sequence[int] = (100, 200, 400, 800),
                  mode: str = sch.NEUMANN, threads: Optional[int] = None) -> ConvergenceReport:
    """Nodal l2 errors at T = 1 with k = h = 1/n for each n in ``levels``."""
    problem = strip_problem(case, mode)
    levels = sorted(int(n) for n in levels)
    res = run_many([lambda n=n: _schrodinger_level(problem, mode, n) for n in levels], threads)
    return ConvergenceReport(res, observed_rates(res), "l2_nodes", problem.name)


def parabolic_study(kind: str, levels: Sequence[int], norm: str = "l2",
                    threads: Optional[int] = None) -> ConvergenceReport:
    """Errors at T = 1 for the manufactured real problems.

    The dissipative scheme runs with k = h, the reactive one with
    k = h^(3/2), rounded to a whole number of steps.
    """
    if norm not in ("l2", "h1"):
        raise ValueError("norm must be 'l2' or 'h1'")
    problem = dissipative_problem() if kind == pb.DISSIPATIVE else reactive_problem()

    def level(n):
        h = 1.0 / n
        if kind == pb.DISSIPATIVE:
            space, steps = FeSpace(Mesh1D.uniform(n), LINEAR), n
        else:
            space, steps = FeSpace(Mesh1D.uniform(n), HERMITE), int(round(n ** 1.5))
        grid = sch.TimeGrid.uniform(1.0, steps)
        ctx = pb.ParabolicContext(space, problem.coeffs, grid, kind)
        if kind == pb.DISSIPATIVE:
            U0 = pb.init_dissipative(space, problem.u0)
        else:
            U0 = pb.init_reactive(space, problem.u0, lambda x: problem.ux(0.0, x),
                                  lambda x: problem.uxx(0.0, x))
        U = pb.run_parabolic(ctx, U0).final
        e = error_norms(U, lambda x: problem.u(1.0, x), lambda x: problem.ux(1.0, x))
        return LevelResult(h, 1.0 / steps, e.l2 if norm == "l2" else e.h1)

    res = run_many([lambda n=n: level(n) for n in sorted(levels)], threads)
    return ConvergenceReport(res, observed_rates(res), norm, problem.name)


# ---------------------------------------------------------------------------
# growth study


@dataclass
class GrowthReport:
    profile: str
    times: np.ndarray
    norms: np.ndarray

    @property
    def initial(self) -> float:
        return float(self.norms[0]) if len(self.norms) else float("nan")

    @property
    def final(self) -> float:
        return float(self.norms[-1]) if len(self.norms) else float("nan")

    @property
    def peak(self) -> float:
        return float(np.max(self.norms)) if len(self.norms) else float("nan")

    @property
    def onset(self) -> Optional[float]:
        """First time the norm exceeds ONSET_FACTOR times its initial value."""
        if not len(self.norms):
            return None
        hit = np.nonzero(np.asarray(self.norms) > ONSET_FACTOR * self.initial)[0]
        return float(self.times[hit[0]]) if hit.size else None


def growth_initial(x):
    return -x * (x - 1) ** 3 + 0j


def growth_study(label: str, n: int = 800, steps: Optional[int] = None,
                 T: float = 1.0) -> GrowthReport:
    """Problem (N) for a catalog profile with beta = f = g = 0."""
    profile = ac.growth_profile(label)
    c = replace(ac.wedge_coefficients(profile, g=0.0), beta=lambda t, x: 0.0 * x)
    space = FeSpace(Mesh1D.uniform(n))
    grid = sch.TimeGrid.uniform(T, steps or n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sch.DownslopingWarning)
        ctx = sch.CnStepContext(space, c, grid, sch.NEUMANN)
    hist = sch.run(ctx, sch.init_neumann(space, c, growth_initial))
    return GrowthReport(label, np.array(hist.times), np.array(hist.norms))


# ---------------------------------------------------------------------------
# ASA wedge


@dataclass
class WedgeReport:
    model: str
    direction: str
    depth: float
    n: int
    steps: int
    r: np.ndarray
    tl: np.ndarray
    norms: np.ndarray
    status: str = "complete"
    terminated_step: Optional[int] = None
    extra: dict = field(default_factory=dict)
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    boundary: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    @property
    def flagged(self) -> bool:
        return self.status != "complete"

    @property
    def norm_ratio(self) -> float:
        """max_n ||U^n|| / ||U^0|| over the computed steps."""
        return float(np.max(self.norms) / self.norms[0])


def _output_stride(steps: int, samples: int) -> int:
    if samples <= 0 or steps % samples:
        raise ValueError(f"steps ({steps}) must be a multiple of samples ({samples})")
    return steps // samples


def asa_wedge(model: str, direction: str, n: int = DEFAULT_WEDGE_N,
              steps: int = DEFAULT_WEDGE_STEPS, depth: Optional[float] = None,
              samples: int = 1000, blowup_ratio: float = BLOWUP_RATIO,
              eps_sigma: float = 0.1) -> WedgeReport:
    """TL at one receiver depth along the benchmark wedge.

    TL is sampled at ``samples`` equally spaced ranges so that runs with
    different step counts share an output grid.  Points where the receiver
    lies below the bottom are NaN.
    """
    env = ac.asa_wedge_environment(direction)
    profile = env.profile()
    z = WEDGE_DEPTH[direction] if depth is None else float(depth)
    stride = _output_stride(steps, samples)
    grid = sch.TimeGrid.uniform(env.T, steps)
    mesh = Mesh1D.uniform(n)
    lin = FeSpace(mesh)
    psi_ref = ac.reference_amplitude(env, lin.tabulate()[0])

    def inside(t):
        return z <= float(profile.s(t)) / env.k0

    if model in (sch.NEUMANN, sch.AK):
        c = env.coefficients()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sch.DownslopingWarning)
            ctx = sch.CnStepContext(lin, c, grid, model)
        u0 = ac.transform_initial(profile, ac.nondimensional_start(env, psi_ref))
        U0 = sch.init_neumann(lin, c, u0)

        def probe(k, t, U):
            if k % stride or not inside(t):
                return np.nan
            return ac.recover_field(U, t, z, profile, env, psi_ref)[0]

        hist = sch.run(ctx, U0, probe=probe, blowup_ratio=blowup_ratio)
        extra = {}
    elif model == "IFDP":
        space = ifd.p_space(mesh)
        zc = ifd.ZetaCoefficients(profile, eps_sigma, g=env.g)
        psi0, dpsi0 = ac.asa_source(env), ac.asa_source_derivative(env)
        k0 = env.k0
        P0 = ifd.build_p_initial(space, zc, lambda y: dpsi0(np.asarray(y) / k0) / (k0 * psi_ref),
                                 lambda y: psi0(np.asarray(y) / k0) / psi_ref)
        ctx = ifd.PStepContext(space, zc, grid)

        def probe(k, t, P):
            if k % stride or not inside(t):
                return np.nan
            x = k0 * z / float(profile.s(t))
            return psi_ref * ifd.recover_w(ctx, P, t, x)[0]

        hist = ifd.run_p(ctx, P0, probe=probe, blowup_ratio=blowup_ratio)
        extra = {"stability_margin_max": float(max(ctx.stability_margins, default=np.nan))}
    else:
        raise ValueError(f"unknown model {model!r}")

    t = np.array(hist.times)
    psi = np.array(hist.probes, dtype=complex)
    keep = np.arange(stride, len(t), stride)
    r = t[keep] / env.k0
    with np.errstate(invalid="ignore"):
        tl = np.asarray(ac.transmission_loss(psi[keep], r), dtype=float)
    tl = np.where(np.isfinite(psi[keep]), tl, np.nan)
    return WedgeReport(model, direction, z, n, steps, r, tl, np.array(hist.norms),
                       hist.status, hist.terminated_step, extra, t,
                       np.array(hist.boundary, dtype=complex))


def null_mask(tl, prominence_db: float = 3.0, window: int = 101) -> np.ndarray:
    """True where a TL sample is kept, False on null flanks.

    A null is a local TL maximum standing at least ``prominence_db`` above
    its surroundings within ``window`` samples.  Samples around it whose TL
    exceeds that local base plus ``prominence_db`` are excluded.  NaN
    samples are never kept.
    """
    tl = np.asarray(tl, dtype=float)
    keep = np.isfinite(tl)
    if not keep.any():
        return keep
    work = np.where(keep, tl, np.min(tl[keep]))
    peaks, props = find_peaks(work, prominence=prominence_db, wlen=window)
    for i, p in zip(peaks, props["prominences"]):
        thr = work[i] - p + prominence_db
        j = i
        while j >= 0 and work[j] > thr:
            keep[j] = False
            j -= 1
        j = i + 1
        while j < len(work) and work[j] > thr:
            keep[j] = False
            j += 1
    return keep


def tl_difference(a: WedgeReport, b: WedgeReport, rmax: Optional[float] = None) -> float:
    """Max |TL_a - TL_b| over shared ranges, outside nulls of either curve."""
    if a.r.shape != b.r.shape or not np.allclose(a.r, b.r, rtol=1e-12):
        raise ValueError("reports do not share an output grid")
    m = null_mask(a.tl) & null_mask(b.tl)
    if rmax is not None:
        m &= a.r <= rmax
    if not m.any():
        return float("nan")
    return float(np.max(np.abs(a.tl - b.tl)[m]))


def self_convergence(model: str, direction: str, n: int = DEFAULT_WEDGE_N,
                     steps: int = DEFAULT_WEDGE_STEPS, threads: Optional[int] = None):
    """Run at (h, k) and (h/2, k/2); return both reports and their TL gap."""
    coarse, fine = run_many([lambda: asa_wedge(model, direction, n, steps),
                             lambda: asa_wedge(model, direction, 2 * n, 2 * steps)], threads)
    gap = (tl_difference(coarse, fine, WEDGE_RMAX[direction])
           if not (coarse.flagged or fine.flagged) else float("nan"))
    return coarse, fine, gap


@dataclass
class SolveReport:
    """Norm and boundary-value trajectory of a single run."""

    model: str
    times: np.ndarray
    norms: np.ndarray
    boundary: np.ndarray
    status: str = "complete"

    @property
    def flagged(self) -> bool:
        return self.status != "complete"


def solve_run(model: str, direction: Optional[str] = None, n: Optional[int] = None,
              steps: Optional[int] = None) -> SolveReport:
    """One trajectory: a wedge model on the benchmark environment, or a
    manufactured real problem (``parabolic-dissipative`` / ``parabolic-reactive``)."""
    if model in (sch.NEUMANN, sch.AK, "IFDP"):
        if direction is None:
            raise ValueError("wedge models need an environment direction")
        w = asa_wedge(model, direction, n or DEFAULT_WEDGE_N, steps or DEFAULT_WEDGE_STEPS,
                      samples=1)
        return SolveReport(model, w.times, w.norms, w.boundary, w.status)
    kind = {"parabolic-dissipative": pb.DISSIPATIVE, "parabolic-reactive": pb.REACTIVE}.get(model)
    if kind is None:
        raise ValueError(f"unknown model {model!r}")
    problem = dissipative_problem() if kind == pb.DISSIPATIVE else reactive_problem()
    n = n or (100 if kind == pb.DISSIPATIVE else 16)
    if kind == pb.DISSIPATIVE:
        space, default_steps = FeSpace(Mesh1D.uniform(n), LINEAR), n
        U0 = pb.init_dissipative(space, problem.u0)
    else:
        space, default_steps = FeSpace(Mesh1D.uniform(n), HERMITE), int(round(n ** 1.5))
        U0 = pb.init_reactive(space, problem.u0, lambda x: problem.ux(0.0, x),
                              lambda x: problem.uxx(0.0, x))
    grid = sch.TimeGrid.uniform(1.0, steps or default_steps)
    hist = pb.run_parabolic(pb.ParabolicContext(space, problem.coeffs, grid, kind), U0)
    return SolveReport(model, np.array(hist.times), np.array(hist.norms),
                       np.array(hist.boundary, dtype=complex))


__all__ = [
    "SolveReport", "solve_run",
    "ManufacturedProblem", "LevelResult", "ConvergenceReport", "GrowthReport",
    "WedgeReport", "strip_problem", "dissipative_problem", "reactive_problem",
    "strip_study", "parabolic_study", "growth_study", "asa_wedge", "null_mask",
    "tl_difference", "self_convergence", "observed_rates", "run_many", "thread_count",
]
