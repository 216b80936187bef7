"""Bottom profiles, wedge-to-strip coefficients, source model and TL.

Nondimensional variables: depth y = k0 z, range t = k0 r and the field
w = psi / psi_ref.  The water column 0 <= y <= s(t) is mapped onto the
strip 0 <= x <= 1 by x = y / s(t), and the phase factor
u = exp(-i delta x^2) w removes the first-order x-derivative from the
transformed equation

    u_t = i a(t) u_xx + i beta(t, x) u.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

TL_CLIP_DB = 999.0
KINK_TOL = 1e-12


# ---------------------------------------------------------------------------
# bottom profiles


@dataclass(frozen=True)
class BottomProfile:
    """Dimensionless depth s(t) > 0 together with its first two derivatives.

    ``kinks`` lists points where s is not smooth; evaluating the
    derivatives there is an error.
    """

    s: Callable
    s_dot: Callable
    s_ddot: Callable
    kinks: tuple = ()
    name: str = ""

    def check(self, t):
        for tk in self.kinks:
            if np.any(np.abs(np.asarray(t) - tk) <= KINK_TOL):
                raise ValueError(
                    f"profile {self.name or '?'} is not differentiable at t={tk}")

    def values(self, t):
        self.check(t)
        return self.s(t), self.s_dot(t), self.s_ddot(t)

    def delta(self, t):
        return 0.5 * self.s(t) * self.s_dot(t)

    def delta_dot(self, t):
        sd = self.s_dot(t)
        return 0.5 * (sd * sd + self.s(t) * self.s_ddot(t))


def linear_profile(s0: float, slope: float, name: str = "") -> BottomProfile:
    return BottomProfile(
        s=lambda t: s0 + slope * np.asarray(t, dtype=float),
        s_dot=lambda t: slope + 0.0 * np.asarray(t, dtype=float),
        s_ddot=lambda t: 0.0 * np.asarray(t, dtype=float),
        name=name or f"{s0}+{slope}t",
    )


def from_bathymetry(ell: Callable, ell_dot: Callable, ell_ddot: Callable, k0: float,
                    name: str = "") -> BottomProfile:
    """s(t) = k0 * ell(t / k0) for a depth function ell(r) in metres."""
    return BottomProfile(
        s=lambda t: k0 * ell(np.asarray(t) / k0),
        s_dot=lambda t: ell_dot(np.asarray(t) / k0),
        s_ddot=lambda t: ell_ddot(np.asarray(t) / k0) / k0,
        name=name,
    )


def _abs3(x):
    return np.abs(x) ** 3


# Profiles (a)-(h) of the growth study, all on 0 <= t <= 1.
GROWTH_PROFILES = {
    "a": BottomProfile(np.exp, np.exp, np.exp, name="a"),
    "b": BottomProfile(lambda t: np.exp(-t), lambda t: -np.exp(-t),
                       lambda t: np.exp(-t), name="b"),
    "c": BottomProfile(lambda t: 1 + (t - 0.5) ** 2, lambda t: 2 * (t - 0.5),
                       lambda t: 2.0 + 0 * t, name="c"),
    "d": BottomProfile(lambda t: 1 - _abs3(t - 0.5),
                       lambda t: -3 * (t - 0.5) * np.abs(t - 0.5),
                       lambda t: -6 * np.abs(t - 0.5), name="d"),
    "e": BottomProfile(lambda t: 1 - (t - 0.5) ** 3, lambda t: -3 * (t - 0.5) ** 2,
                       lambda t: -6 * (t - 0.5), name="e"),
    "f": BottomProfile(lambda t: 2 - np.abs(2 * t - 1),
                       lambda t: -2.0 * np.sign(2 * t - 1),
                       lambda t: 0.0 * t, kinks=(0.5,), name="f"),
    "g": BottomProfile(lambda t: 1 + (t - 0.5) ** 3, lambda t: 3 * (t - 0.5) ** 2,
                       lambda t: 6 * (t - 0.5), name="g"),
    "h": BottomProfile(lambda t: 1 + t ** 3, lambda t: 3 * t ** 2, lambda t: 6 * t,
                       name="h"),
}

_FOUR_PI = 4 * np.pi

# Bottom cases of the manufactured convergence study.
TABLE_CASES = {
    1: linear_profile(0.7, -0.3, name="case1"),
    2: linear_profile(0.3, 0.4, name="case2"),
    3: BottomProfile(
        lambda t: 0.2 * np.cos(_FOUR_PI * t) + 0.2 * np.sin(_FOUR_PI * t) + 0.7,
        lambda t: 0.2 * _FOUR_PI * (np.cos(_FOUR_PI * t) - np.sin(_FOUR_PI * t)),
        lambda t: -0.2 * _FOUR_PI ** 2 * (np.cos(_FOUR_PI * t) + np.sin(_FOUR_PI * t)),
        name="case3"),
}


def growth_profile(label: str) -> BottomProfile:
    try:
        return GROWTH_PROFILES[label]
    except KeyError:
        raise ValueError(f"unknown growth profile {label!r} (expected a-h)") from None


def table_case(case: int) -> BottomProfile:
    try:
        return TABLE_CASES[int(case)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown bottom case {case!r} (expected 1, 2 or 3)") from None


def upsloping_mask(profile: BottomProfile, t) -> np.ndarray:
    """True where mu(t) = s'(t)/s(t) <= 0."""
    t = np.asarray(t, dtype=float)
    return np.asarray(profile.s_dot(t) / profile.s(t) <= 0)


def is_upsloping(profile: BottomProfile, T: float, samples: int = 1000) -> bool:
    t = np.linspace(0.0, T, samples)
    t = t[~np.isin(t, profile.kinks)]
    return bool(np.all(upsloping_mask(profile, t)))


# ---------------------------------------------------------------------------
# coefficients


def _zero_t(t):
    return 0.0


@dataclass(frozen=True)
class CoefficientSet:
    """Time and space coefficients of the strip problem.

    ``beta`` and ``f`` take ``(t, x)``; the others take ``t``.  Boundary
    coefficients ``mu``, ``S`` and ``G`` describe the dynamical condition
    u_x(t,1) = mu [S u_t(t,1) + G u(t,1)] + f1(t).
    """

    a: Callable
    beta: Callable
    mu: Callable = _zero_t
    S: Callable = _zero_t
    G: Callable = _zero_t
    delta: Callable = _zero_t
    f: Optional[Callable] = None
    f1: Optional[Callable] = None
    g: Optional[Callable] = None

    def with_forcing(self, f=None, f1=None) -> "CoefficientSet":
        return replace(self, f=f, f1=f1)


def _as_time_callable(g):
    if g is None:
        return lambda t: 0.0
    if callable(g):
        return g
    return lambda t, _g=complex(g): _g


def wedge_coefficients(profile: BottomProfile, gamma: Optional[Callable] = None,
                       g=None) -> CoefficientSet:
    """Strip coefficients for a bottom profile.

    ``gamma(t, y)`` is the (possibly complex) refraction term of the
    physical equation; ``g`` the dimensionless bottom admittance, a
    constant or a callable of t.
    """
    gfun = _as_time_callable(g)

    def a(t):
        s, _, _ = profile.values(t)
        return 1.0 / (2.0 * s * s)

    def beta(t, x):
        s, sd, sdd = profile.values(t)
        x = np.asarray(x)
        out = -0.5 * sdd * s * x * x + 1j * (sd / (2.0 * s))
        if gamma is not None:
            out = out + gamma(t, x * s)
        return out

    def mu(t):
        s, sd, _ = profile.values(t)
        return sd / s

    def S(t):
        s, sd, _ = profile.values(t)
        return s * s / (1.0 + sd * sd)

    def G(t):
        s, sd, sdd = profile.values(t)
        St = s * s / (1.0 + sd * sd)
        ddot = 0.5 * (sd * sd + s * sdd)
        return gfun(t) * St + 1j * (St * ddot - s * s)

    def delta(t):
        s, sd, _ = profile.values(t)
        return 0.5 * s * sd

    return CoefficientSet(a=a, beta=beta, mu=mu, S=S, G=G, delta=delta, g=gfun)


def transform_initial(profile: BottomProfile, w0: Callable) -> Callable:
    """u0(x) = exp(-i delta(0) x^2) w0(x s(0))."""
    s0 = float(profile.s(0.0))
    d0 = float(profile.delta(0.0))

    def u0(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-1j * d0 * x * x) * w0(x * s0)

    return u0


# ---------------------------------------------------------------------------
# the acoustic environment


@dataclass(frozen=True)
class WedgeEnvironment:
    """Physical description of a range-dependent wedge (SI units).

    ``ell`` and its derivatives give the bottom depth in metres as a
    function of range.  ``gB`` defaults to i*k0.  ``gamma`` optionally
    supplies the dimensionless refraction term gamma(t, y).
    """

    f0: float
    c0: float
    zs: float
    ell: Callable
    ell_dot: Callable
    ell_ddot: Callable
    range_max: float
    gB: Optional[complex] = None
    gamma: Optional[Callable] = None
    name: str = ""

    def __post_init__(self):
        if self.f0 <= 0 or self.c0 <= 0:
            raise ValueError("frequency and sound speed must be positive")
        if not 0 < self.zs < self.ell(0.0):
            raise ValueError("source depth must lie inside the water column")
        r = np.linspace(0.0, self.range_max, 257)
        if np.any(self.ell(r) <= 0):
            raise ValueError("bottom depth must stay positive")

    @property
    def k0(self) -> float:
        return 2.0 * np.pi * self.f0 / self.c0

    @property
    def T(self) -> float:
        return self.k0 * self.range_max

    @property
    def admittance(self) -> complex:
        return 1j * self.k0 if self.gB is None else complex(self.gB)

    @property
    def g(self) -> complex:
        # dimensionless admittance: g_B / k0 keeps the bottom condition consistent
        return self.admittance / self.k0

    def profile(self) -> BottomProfile:
        return from_bathymetry(self.ell, self.ell_dot, self.ell_ddot, self.k0,
                               name=self.name)

    def coefficients(self) -> CoefficientSet:
        return wedge_coefficients(self.profile(), self.gamma, self.g)

    def upsloping(self) -> bool:
        return is_upsloping(self.profile(), self.T)


def _linear_bathymetry(d0, slope):
    return (lambda r: d0 + slope * np.asarray(r, dtype=float),
            lambda r: slope + 0.0 * np.asarray(r, dtype=float),
            lambda r: 0.0 * np.asarray(r, dtype=float))


def asa_wedge_environment(direction: str = "up", f0: float = 25.0,
                          c0: float = 1500.0, range_max: float = 3339.0,
                          zs: Optional[float] = None) -> WedgeEnvironment:
    """The benchmark wedges: depth 200 -> 33.05 m (up) or 33.05 -> 200 m (down)."""
    if direction == "up":
        ell = _linear_bathymetry(200.0, -0.05)
        zs = 100.0 if zs is None else zs
    elif direction == "down":
        ell = _linear_bathymetry(33.05, 0.05)
        zs = 25.0 if zs is None else zs
    else:
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    return WedgeEnvironment(f0, c0, zs, *ell, range_max=range_max,
                            name=f"asa-{direction}")


def asa_source(env: WedgeEnvironment) -> Callable:
    """Gaussian starter with an image source: psi0(z), odd about z = 0."""
    k0, zs = env.k0, env.zs
    amp = np.sqrt(k0 / 2.0)
    q = k0 * k0 / 4.0

    def psi0(z):
        z = np.asarray(z, dtype=float)
        return amp * (np.exp(-(z - zs) ** 2 * q) - np.exp(-(z + zs) ** 2 * q))

    return psi0


def asa_source_derivative(env: WedgeEnvironment) -> Callable:
    """d psi0 / dz."""
    k0, zs = env.k0, env.zs
    amp = np.sqrt(k0 / 2.0)
    q = k0 * k0 / 4.0

    def dpsi0(z):
        z = np.asarray(z, dtype=float)
        return amp * (-2 * q * (z - zs) * np.exp(-(z - zs) ** 2 * q)
                      + 2 * q * (z + zs) * np.exp(-(z + zs) ** 2 * q))

    return dpsi0


def reference_amplitude(env: WedgeEnvironment, x_samples) -> float:
    """psi_ref = max |psi0| over the strip sample points mapped to depth."""
    z = np.asarray(x_samples, dtype=float).ravel() * env.ell(0.0)
    return float(np.max(np.abs(asa_source(env)(z))))


def nondimensional_start(env: WedgeEnvironment, psi_ref: float) -> Callable:
    """w0(y) = psi0(y / k0) / psi_ref."""
    psi0 = asa_source(env)
    k0 = env.k0
    return lambda y: psi0(np.asarray(y) / k0) / psi_ref


def recover_field(u: Callable, t: float, z, profile: BottomProfile,
                  env: WedgeEnvironment, psi_ref: float):
    """psi(r, z) at range r = t / k0 from a strip solution ``u(x)``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    depth = float(profile.s(t)) / env.k0
    if np.any(z < 0) or np.any(z > depth * (1 + 1e-12)):
        raise ValueError(f"depth outside the water column [0, {depth:.6g}] m")
    s = float(profile.s(t))
    x = np.minimum(env.k0 * z / s, 1.0)
    w = np.exp(1j * float(profile.delta(t)) * x * x) * u(x)
    return psi_ref * w


def transmission_loss(psi, r):
    """TL = -20 log10 |psi| + 10 log10 r in dB; |psi| = 0 maps to TL_CLIP_DB."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("transmission loss needs r > 0")
    mag = np.abs(np.asarray(psi))
    with np.errstate(divide="ignore"):
        tl = -20.0 * np.log10(mag) + 10.0 * np.log10(r)
    return np.where(mag > 0, tl, TL_CLIP_DB)


__all__ = [
    "BottomProfile", "CoefficientSet", "WedgeEnvironment", "GROWTH_PROFILES",
    "TABLE_CASES", "TL_CLIP_DB", "linear_profile", "from_bathymetry",
    "growth_profile", "table_case", "upsloping_mask", "is_upsloping",
    "wedge_coefficients", "transform_initial", "asa_wedge_environment",
    "asa_source", "asa_source_derivative", "reference_amplitude",
    "nondimensional_start", "recover_field", "transmission_loss",
]
