"""Problem data and the u <-> v <-> h transformation chain.

``v(t, r)`` is the transverse displacement read at distance ``r`` inward
from the rim, and ``h = sqrt(R - r) * exp(alpha t / 2) * v`` is the
weighted unknown whose equation has no first-order terms.  This module
owns the data containers, the closed-form/sampled scalar profiles they
are built from, the toughness model, and the two source kernels

    F(tau, sigma) = (alpha^2 + 1/(R - sigma)^2) / 4 * h(tau, sigma)
    G(tau, sigma) = -v_r(tau, sigma)/(R - sigma) - alpha * v_t(tau, sigma)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

COMPAT_TOL = 1e-10


class CompatibilityError(ValueError):
    """Raised when boundary/initial data fail the corner conditions."""


def _asarray(x):
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# scalar profiles
# ---------------------------------------------------------------------------

class Profile:
    """A scalar function of one variable with optional derivative and an
    exact-or-cached cumulative integral from 0.

    Closed-form presets keep analytic derivatives and antiderivatives;
    sampled tables interpolate (monotone cubic by default, linear for
    solver-internal traces) and integrate their interpolant exactly or via
    a dense cached spline.
    """

    def __init__(self, value, deriv=None, cumint=None, domain=(0.0, np.inf),
                 kind="callable", params=None):
        self._value = value
        self._deriv = deriv
        self._cumint = cumint
        self.domain = (float(domain[0]), float(domain[1]))
        self.kind = kind
        self.params = params or {}

    def __call__(self, x):
        return _asarray(self._value(_asarray(x)))

    @property
    def has_deriv(self) -> bool:
        return self._deriv is not None

    def deriv(self, x):
        if self._deriv is None:
            raise ValueError(f"profile of kind {self.kind!r} has no derivative")
        return _asarray(self._deriv(_asarray(x)))

    def cumint(self, x):
        """Integral of the profile from 0 to x."""
        if self._cumint is None:
            self._cumint = self._build_cached_cumint()
        return _asarray(self._cumint(_asarray(x)))

    def _build_cached_cumint(self, panels: int = 4096):
        lo, hi = self.domain
        if not np.isfinite(hi):
            raise ValueError("cannot cache a cumulative integral on an unbounded domain")
        # composite Simpson on a dense grid, then a C^2 spline through the
        # cumulative values; error is far below the solver tolerances
        xs = np.linspace(lo, hi, 2 * panels + 1)
        ys = self(xs)
        h = (hi - lo) / (2 * panels)
        chunks = (ys[0:-2:2] + 4.0 * ys[1:-1:2] + ys[2::2]) * (h / 3.0)
        cum = np.concatenate(([0.0], np.cumsum(chunks)))
        spline = CubicSpline(xs[::2], cum)
        offset = float(spline(0.0)) if lo <= 0.0 <= hi else float(spline(lo))
        return lambda x: spline(x) - offset

    # -- presets ----------------------------------------------------------

    @classmethod
    def zero(cls):
        return cls(lambda x: np.zeros_like(_asarray(x)),
                   deriv=lambda x: np.zeros_like(_asarray(x)),
                   cumint=lambda x: np.zeros_like(_asarray(x)),
                   kind="zero")

    @classmethod
    def constant(cls, c: float):
        c = float(c)
        return cls(lambda x: np.full_like(_asarray(x), c),
                   deriv=lambda x: np.zeros_like(_asarray(x)),
                   cumint=lambda x: c * _asarray(x),
                   kind="constant", params={"c": c})

    @classmethod
    def affine(cls, a: float, b: float):
        """a + b * x."""
        a, b = float(a), float(b)
        return cls(lambda x: a + b * _asarray(x),
                   deriv=lambda x: np.full_like(_asarray(x), b),
                   cumint=lambda x: a * _asarray(x) + 0.5 * b * _asarray(x) ** 2,
                   kind="affine", params={"a": a, "b": b})

    @classmethod
    def poly(cls, coeffs: Sequence[float]):
        """sum_k coeffs[k] * x**k."""
        c = np.asarray(coeffs, dtype=float)
        dc = c[1:] * np.arange(1, len(c))
        ic = np.concatenate(([0.0], c / np.arange(1, len(c) + 1)))
        return cls(lambda x: np.polynomial.polynomial.polyval(_asarray(x), c),
                   deriv=lambda x: np.polynomial.polynomial.polyval(_asarray(x), dc)
                   if len(dc) else np.zeros_like(_asarray(x)),
                   cumint=lambda x: np.polynomial.polynomial.polyval(_asarray(x), ic),
                   kind="poly", params={"coeffs": tuple(float(v) for v in c)})

    @classmethod
    def sine_bump(cls, amp: float, width: float):
        """amp * sin(pi x / width): vanishes at 0 and width."""
        amp, width = float(amp), float(width)
        k = np.pi / width
        return cls(lambda x: amp * np.sin(k * _asarray(x)),
                   deriv=lambda x: amp * k * np.cos(k * _asarray(x)),
                   cumint=lambda x: amp / k * (1.0 - np.cos(k * _asarray(x))),
                   domain=(0.0, width),
                   kind="sine_bump", params={"amp": amp, "width": width})

    @classmethod
    def sine(cls, amp: float, freq: float):
        """amp * sin(freq * x), for time-dependent loads."""
        amp, freq = float(amp), float(freq)
        return cls(lambda x: amp * np.sin(freq * _asarray(x)),
                   deriv=lambda x: amp * freq * np.cos(freq * _asarray(x)),
                   cumint=lambda x: amp / freq * (1.0 - np.cos(freq * _asarray(x))),
                   kind="sine", params={"amp": amp, "freq": freq})

    @classmethod
    def from_samples(cls, x, y, method: str = "pchip", deriv_samples=None):
        x = _asarray(x)
        y = _asarray(y)
        if method == "pchip":
            interp = PchipInterpolator(x, y, extrapolate=True)
            dfun = interp.derivative()
            ifun = interp.antiderivative()
            off = float(ifun(x[0]))
            prof = cls(interp, deriv=dfun, cumint=lambda s: ifun(s) - off,
                       domain=(x[0], x[-1]), kind="pchip")
        elif method == "linear":
            cum = np.concatenate(([0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))))

            def lin_cum(s, x=x, y=y, cum=cum):
                s = _asarray(s)
                idx = np.clip(np.searchsorted(x, s, side="right") - 1, 0, len(x) - 2)
                x0, y0 = x[idx], y[idx]
                slope = (y[idx + 1] - y0) / (x[idx + 1] - x0)
                ds = s - x0
                return cum[idx] + y0 * ds + 0.5 * slope * ds * ds

            prof = cls(lambda s: np.interp(_asarray(s), x, y),
                       cumint=lin_cum, domain=(x[0], x[-1]), kind="linear")
        else:
            raise ValueError(f"unknown sample interpolation {method!r}")
        if deriv_samples is not None:
            d = _asarray(deriv_samples)
            prof._deriv = lambda s: np.interp(_asarray(s), x, d)
        return prof

    def shifted(self, t0: float) -> "Profile":
        """The profile x -> self(x + t0), derivative included."""
        d = (lambda x: self.deriv(_asarray(x) + t0)) if self.has_deriv else None
        return Profile(lambda x: self(_asarray(x) + t0), deriv=d,
                       domain=(self.domain[0] - t0, self.domain[1] - t0),
                       kind=f"shifted({self.kind})")


PRESETS = {
    "zero": lambda: Profile.zero(),
    "constant": lambda c: Profile.constant(c),
    "affine": lambda a, b: Profile.affine(a, b),
    "poly": lambda *coeffs: Profile.poly(coeffs),
    "sine_bump": lambda amp, width: Profile.sine_bump(amp, width),
    "sine": lambda amp, freq: Profile.sine(amp, freq),
}


def make_preset(name: str, *params: float) -> Profile:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown profile preset {name!r}") from None
    return factory(*params)


# ---------------------------------------------------------------------------
# problem data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemData:
    """Geometry, damping, boundary load and initial data of one run."""

    R: float
    rho0: float
    alpha: float
    horizon: float
    w: Profile
    v0: Profile
    v1: Profile

    def __post_init__(self):
        if not (0 < self.rho0 < self.R):
            raise CompatibilityError("need 0 < rho0 < R")
        if self.alpha < 0:
            raise CompatibilityError("damping coefficient must be nonnegative")
        if abs(float(self.v0(0.0)) - float(self.w(0.0))) > COMPAT_TOL:
            raise CompatibilityError("v0(0) must equal w(0)")
        if abs(float(self.v0(self.rho0))) > COMPAT_TOL:
            raise CompatibilityError("v0 must vanish at the front")


@dataclass(frozen=True)
class HData:
    """Weighted data (z, h0, h1) driving the auxiliary problem for h."""

    R: float
    rho0: float
    alpha: float
    z: Profile
    h0: Profile
    h1: Profile
    h0_dot: Callable

    def __post_init__(self):
        if abs(float(self.h0(0.0)) - float(self.z(0.0))) > COMPAT_TOL * np.sqrt(self.R):
            raise CompatibilityError("h0(0) must equal z(0)")
        if abs(float(self.h0(self.rho0))) > COMPAT_TOL * np.sqrt(self.R):
            raise CompatibilityError("h0 must vanish at the front")


def to_h_data(data: ProblemData) -> HData:
    """Map (w, v0, v1) to the weighted data (z, h0, h1).

    h0' is assembled analytically from v0 and v0' whenever the preset has
    a derivative; sampled profiles without one are rejected since the
    release-rate formulas need pointwise h0'.
    """
    R, a = data.R, data.alpha
    w, v0, v1 = data.w, data.v0, data.v1
    if not (v0.has_deriv and w.has_deriv):
        raise CompatibilityError("v0 and w must come with derivatives")

    sq = lambda r: np.sqrt(R - _asarray(r))
    ea = lambda t: np.exp(0.5 * a * _asarray(t))

    z = Profile(lambda t: np.sqrt(R) * ea(t) * w(t),
                deriv=lambda t: np.sqrt(R) * ea(t) * (w.deriv(t) + 0.5 * a * w(t)),
                kind="z")
    h0 = Profile(lambda r: sq(r) * v0(r),
                 deriv=lambda r: sq(r) * v0.deriv(r) - 0.5 * v0(r) / sq(r),
                 domain=(0.0, data.rho0), kind="h0")
    h1 = Profile(lambda r: sq(r) * (v1(r) + 0.5 * a * v0(r)),
                 domain=(0.0, data.rho0), kind="h1")
    return HData(R=R, rho0=data.rho0, alpha=a, z=z, h0=h0, h1=h1, h0_dot=h0.deriv)


def v_from_h(h_value, h_t, h_r, t, r, R: float, alpha: float):
    """Invert the weight: (h, h_t, h_r) at (t, r) -> (v, v_t, v_r)."""
    r = _asarray(r)
    if np.any(r >= R):
        raise ValueError("the weight is singular at r = R")
    wgt = np.exp(-0.5 * alpha * _asarray(t)) / np.sqrt(R - r)
    v = wgt * h_value
    v_t = wgt * (_asarray(h_t) - 0.5 * alpha * _asarray(h_value))
    v_r = wgt * (_asarray(h_r) + 0.5 * _asarray(h_value) / (R - r))
    return v, v_t, v_r


def u_from_v(v, r, R: float):
    """Place the radial value back in the plane: returns (|x|, u)."""
    r = _asarray(r)
    if np.any(r < 0) or np.any(r > R):
        raise ValueError("radial offset outside [0, R]")
    return R - r, _asarray(v)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def kernel_prefactor(sigma, R: float, alpha: float):
    """The zero-order coefficient (alpha^2 + 1/(R - sigma)^2) / 4."""
    sigma = _asarray(sigma)
    return 0.25 * (alpha * alpha + 1.0 / (R - sigma) ** 2)


def f_kernel(h_value, sigma, R: float, alpha: float):
    return kernel_prefactor(sigma, R, alpha) * _asarray(h_value)


def g_kernel(v_t, v_r, sigma, R: float, alpha: float):
    sigma = _asarray(sigma)
    return -_asarray(v_r) / (R - sigma) - alpha * _asarray(v_t)


@dataclass(frozen=True)
class KernelSample:
    """One kernel evaluation, tagged by which chain it belongs to."""

    kind: str  # "F_kernel" | "G_kernel"
    tau: float
    sigma: float
    value: float

    @classmethod
    def f_at(cls, tau, sigma, h_value, R, alpha):
        return cls("F_kernel", tau, sigma, float(f_kernel(h_value, sigma, R, alpha)))

    @classmethod
    def g_at(cls, tau, sigma, v_t, v_r, R, alpha):
        return cls("G_kernel", tau, sigma, float(g_kernel(v_t, v_r, sigma, R, alpha)))


# ---------------------------------------------------------------------------
# toughness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Toughness:
    """Piecewise toughness r -> kappa(r) on [rho0, R), right-continuous at
    breakpoints, bounded between positive constants c1 and c2."""

    breakpoints: np.ndarray  # increasing, breakpoints[0] is the domain start
    pieces: tuple  # Profile per interval [b_i, b_{i+1})
    R: float
    c1: float = field(init=False)
    c2: float = field(init=False)

    def __post_init__(self):
        b = _asarray(self.breakpoints)
        object.__setattr__(self, "breakpoints", b)
        if len(self.pieces) != len(b):
            raise ValueError("need one piece per breakpoint")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if b[-1] >= self.R:
            raise ValueError("breakpoints must stay below R")
        lo, hi = np.inf, -np.inf
        edges = np.concatenate((b, [self.R]))
        for i, piece in enumerate(self.pieces):
            rr = np.linspace(edges[i], min(edges[i + 1], self.R - 1e-9), 65)
            vals = piece(rr)
            lo, hi = min(lo, float(vals.min())), max(hi, float(vals.max()))
        if lo <= 0:
            raise ValueError("toughness must be bounded away from zero")
        object.__setattr__(self, "c1", lo)
        object.__setattr__(self, "c2", hi)
        b.flags.writeable = False

    @classmethod
    def constant(cls, kappa: float, rho0: float, R: float):
        return cls(np.array([rho0]), (Profile.constant(kappa),), R)

    @classmethod
    def from_pieces(cls, pieces: Sequence[tuple], R: float):
        """pieces: sequence of (breakpoint, Profile)."""
        bs = np.array([p[0] for p in pieces], dtype=float)
        return cls(bs, tuple(p[1] for p in pieces), R)

    def piece_index(self, r):
        r = _asarray(r)
        return np.clip(np.searchsorted(self.breakpoints, r, side="right") - 1,
                       0, len(self.pieces) - 1)

    def __call__(self, r):
        return kappa_eval(self, r)

    def clamped_after(self, r_clamp: float) -> "Toughness":
        """Constant extension past r_clamp with the left-limit value there;
        used so one solver window never straddles a breakpoint."""
        keep = self.breakpoints < r_clamp - 1e-14
        idx = int(np.count_nonzero(keep)) - 1
        value = float(self.pieces[max(idx, 0)](r_clamp))
        bs = np.concatenate((self.breakpoints[keep], [r_clamp]))
        return Toughness(bs, tuple(self.pieces[: max(idx + 1, 1)]) + (Profile.constant(value),), self.R)


def kappa_eval(tough: Toughness, r):
    """Right-continuous evaluation of the toughness at radius offset r."""
    r = _asarray(r)
    lo = tough.breakpoints[0]
    if np.any(r < lo - 1e-10) or np.any(r >= tough.R):
        raise ValueError("toughness evaluated outside [rho0, R)")
    r = np.maximum(r, lo)
    idx = tough.piece_index(r)
    out = np.empty_like(r, dtype=float)
    for i in range(len(tough.pieces)):
        mask = idx == i
        if np.any(mask):
            out[mask] = tough.pieces[i](r[mask])
    return out
