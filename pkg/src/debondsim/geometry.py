"""Front parametrization and characteristic geometry.

The debonded annulus is described by the width ``rho(t)`` of the bonded
overlap measured inward from the outer rim ``R``.  Everything downstream
(d'Alembert formulas, cone quadrature, energy audits) only ever sees the
front through the maps defined here:

    phi(t) = t - rho(t)        psi(t) = t + rho(t)
    omega  = phi o psi^{-1}    (reflected-characteristic map)
    lambda = phi^{-1}          (front-crossing time of a characteristic)

A :class:`FrontCurve` is piecewise linear between knots, so all four maps
are piecewise affine and inverted exactly segment by segment.  The subsonic
condition 0 <= rho' < 1 is enforced at construction; it is what makes phi
strictly increasing and omega a contraction slope-wise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


class GeometryError(ValueError):
    """Raised for inadmissible fronts or out-of-domain evaluations."""


_TOL = 1e-12


def _asarray(x):
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class FrontCurve:
    """Piecewise-linear debonding front t -> rho(t) on [0, horizon].

    Knots must start at t = 0, be strictly increasing in t, keep
    rho nondecreasing with segment slopes in [0, 1), and stay below the
    outer radius R.
    """

    t_knots: np.ndarray
    rho_knots: np.ndarray
    R: float

    def __post_init__(self):
        t = _asarray(self.t_knots)
        rho = _asarray(self.rho_knots)
        object.__setattr__(self, "t_knots", t)
        object.__setattr__(self, "rho_knots", rho)
        if t.ndim != 1 or t.shape != rho.shape or t.size < 2:
            raise GeometryError("front needs at least two (t, rho) knots")
        if abs(t[0]) > _TOL:
            raise GeometryError("front must start at t = 0")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise GeometryError("front knots must be strictly increasing in t")
        slopes = np.diff(rho) / dt
        if np.any(slopes < -1e-12):
            raise GeometryError("front must be nondecreasing")
        if np.any(slopes >= 1.0):
            raise GeometryError("front speed must stay below 1 (subsonic)")
        if np.any(rho >= self.R):
            raise GeometryError("front must stay inside the outer radius R")
        if rho[0] <= 0:
            raise GeometryError("initial front width must be positive")
        object.__setattr__(self, "_slopes", np.maximum(slopes, 0.0))
        for arr in (t, rho, self._slopes):
            arr.flags.writeable = False

    _slopes: np.ndarray = field(init=False, repr=False, compare=False)

    @classmethod
    def constant(cls, rho0: float, horizon: float, R: float) -> "FrontCurve":
        return cls(np.array([0.0, horizon]), np.array([rho0, rho0]), R)

    @classmethod
    def affine(cls, rho0: float, speed: float, horizon: float, R: float) -> "FrontCurve":
        return cls(np.array([0.0, horizon]), np.array([rho0, rho0 + speed * horizon]), R)

    @property
    def rho0(self) -> float:
        return float(self.rho_knots[0])

    @property
    def horizon(self) -> float:
        return float(self.t_knots[-1])

    # -- basic maps -------------------------------------------------------

    def _check_t(self, t):
        t = _asarray(t)
        if np.any(t < -1e-10) or np.any(t > self.horizon + 1e-10):
            raise GeometryError("time outside the front domain")
        return np.clip(t, 0.0, self.horizon)

    def rho(self, t):
        t = self._check_t(t)
        return np.interp(t, self.t_knots, self.rho_knots)

    def rho_dot(self, t):
        """Right-continuous segment slope (the front speed at t+)."""
        t = self._check_t(t)
        idx = np.searchsorted(self.t_knots, t, side="right") - 1
        idx = np.clip(idx, 0, len(self._slopes) - 1)
        return self._slopes[idx]

    def phi(self, t):
        t = self._check_t(t)
        return t - np.interp(t, self.t_knots, self.rho_knots)

    def psi(self, t):
        t = self._check_t(t)
        return t + np.interp(t, self.t_knots, self.rho_knots)

    @property
    def phi_knots(self) -> np.ndarray:
        return self.t_knots - self.rho_knots

    @property
    def psi_knots(self) -> np.ndarray:
        return self.t_knots + self.rho_knots

    def psi_inverse(self, s):
        s = _asarray(s)
        pk = self.psi_knots
        if np.any(s < pk[0] - 1e-10) or np.any(s > pk[-1] + 1e-10):
            raise GeometryError("value outside the range of psi")
        return np.interp(s, pk, self.t_knots)

    def lambda_of(self, s):
        """Inverse of phi: the time at which the front meets the
        characteristic t - r = s."""
        s = _asarray(s)
        fk = self.phi_knots
        if np.any(s < fk[0] - 1e-10) or np.any(s > fk[-1] + 1e-10):
            raise GeometryError("value outside the range of phi")
        return np.interp(s, fk, self.t_knots)

    def omega(self, s):
        s = _asarray(s)
        pk = self.psi_knots
        if np.any(s < -1e-10) or np.any(s > pk[-1] + 1e-10):
            raise GeometryError("omega argument out of range")
        return self._omega_unchecked(s)

    def _omega_unchecked(self, s):
        s = _asarray(s)
        out = np.interp(s, self.psi_knots, self.phi_knots)
        return np.where(s < self.rho0, -self.rho0, out)

    def omega_dot(self, s):
        """Slope of omega; equals (1 - rho')/(1 + rho') past the first
        reflection and 0 on the flat branch."""
        s = _asarray(s)
        rd = self.rho_dot(self.psi_inverse(np.clip(s, self.psi_knots[0], self.psi_knots[-1])))
        return np.where(s < self.rho0, 0.0, (1.0 - rd) / (1.0 + rd))

    # -- windows ----------------------------------------------------------

    def window(self, t0: float, t1: float) -> "FrontCurve":
        """Restriction to [t0, t1], re-based to local time starting at 0."""
        if not (0.0 - 1e-12 <= t0 < t1 <= self.horizon + 1e-12):
            raise GeometryError("window outside the front domain")
        interior = (self.t_knots > t0 + 1e-14) & (self.t_knots < t1 - 1e-14)
        ts = np.concatenate(([t0], self.t_knots[interior], [t1]))
        rhos = np.interp(ts, self.t_knots, self.rho_knots)
        return FrontCurve(ts - t0, rhos, self.R)


class ClosedFormFront:
    """Front given by callables; inverse maps fall back to bisection.

    Mirrors the :class:`FrontCurve` interface for user-supplied analytic
    fronts.  Only scalar-or-array evaluation of the forward maps is exact;
    psi_inverse / lambda_of solve the defining equations numerically.
    """

    def __init__(self, rho, rho_dot, horizon: float, R: float):
        self._rho = rho
        self._rho_dot = rho_dot
        self.horizon = float(horizon)
        self.R = float(R)
        self.rho0 = float(rho(0.0))
        if not (0 < self.rho0 < R):
            raise GeometryError("inadmissible front width at t = 0")

    def rho(self, t):
        return _asarray(self._rho(_asarray(t)))

    def rho_dot(self, t):
        return _asarray(self._rho_dot(_asarray(t)))

    def phi(self, t):
        return _asarray(t) - self.rho(t)

    def psi(self, t):
        return _asarray(t) + self.rho(t)

    def _invert(self, fwd, s):
        lo, hi = 0.0, self.horizon
        flo, fhi = fwd(lo), fwd(hi)
        if not (flo - 1e-10 <= s <= fhi + 1e-10):
            raise GeometryError("value outside the map range")
        s = min(max(s, flo), fhi)
        if s == flo:
            return lo
        if s == fhi:
            return hi
        return brentq(lambda t: fwd(t) - s, lo, hi, xtol=1e-14)

    def psi_inverse(self, s):
        f = np.vectorize(lambda v: self._invert(lambda t: float(self.psi(t)), v))
        return f(_asarray(s))

    def lambda_of(self, s):
        f = np.vectorize(lambda v: self._invert(lambda t: float(self.phi(t)), v))
        return f(_asarray(s))

    def omega(self, s):
        s = _asarray(s)
        out = np.where(s < self.rho0, -self.rho0, 0.0)
        past = s >= self.rho0
        if np.any(past):
            tt = self.psi_inverse(np.where(past, s, self.rho0))
            out = np.where(past, self.phi(tt), out)
        return out

    def omega_dot(self, s):
        s = _asarray(s)
        rd = self.rho_dot(self.psi_inverse(np.clip(s, self.psi(0.0), None)))
        return np.where(s < self.rho0, 0.0, (1.0 - rd) / (1.0 + rd))


# -- dependence cones -----------------------------------------------------

OMEGA1, OMEGA2, OMEGA3 = "Omega1", "Omega2", "Omega3"


@dataclass(frozen=True)
class ConeRegion:
    """Truncated dependence cone of an apex, in characteristic coordinates
    xi = t - r, eta = t + r.

    The region is { xi_lo <= xi <= xi_hi, max(|xi|, eta_flat) <= eta <= eta_hi }
    with eta_flat = max(xi_hi, 0).  The only boundary that can fall off a
    characteristic-aligned lattice is xi_lo, which carries the reflected
    bound omega(eta_hi) when the apex sees the moving front.
    """

    apex: tuple
    case_tag: str
    xi_lo: float
    xi_hi: float
    eta_hi: float

    @property
    def eta_flat(self) -> float:
        return max(self.xi_hi, 0.0)

    def eta_lo(self, xi):
        return np.maximum(np.abs(_asarray(xi)), self.eta_flat)

    @property
    def is_empty(self) -> bool:
        return self.xi_hi - self.xi_lo <= _TOL


def cone_region(front, t: float, r: float) -> ConeRegion:
    """Classify the apex (t, r) and return its truncated cone."""
    rho_t = float(front.rho(t))
    if r < -1e-10 or r > rho_t + 1e-10:
        raise GeometryError("apex outside the space-time domain")
    xi = t - r
    eta = t + r
    rho0 = front.rho0
    if t > r and eta > rho0 + 1e-12:
        raise GeometryError("apex beyond the first reflection family")
    if eta <= rho0 + _TOL:
        tag = OMEGA1 if t <= r else OMEGA2
        xi_lo = -eta
    else:
        tag = OMEGA3
        xi_lo = float(front._omega_unchecked(np.array(eta)))
    return ConeRegion(apex=(t, r), case_tag=tag, xi_lo=xi_lo, xi_hi=xi, eta_hi=eta)


def region_area(region: ConeRegion) -> float:
    """Exact area of the truncated cone in (t, r) coordinates."""
    if region.is_empty:
        return 0.0
    xi_lo, xi_hi, eta_hi = region.xi_lo, region.xi_hi, region.eta_hi
    c = region.eta_flat
    area_char = 0.0
    # wedge part, eta from |xi| down: integrand eta_hi + xi on xi < -c
    a, b = xi_lo, min(xi_hi, -c)
    if b > a:
        area_char += (eta_hi * (b - a) + 0.5 * (b * b - a * a))
    # flat part, eta from c: integrand eta_hi - c on xi in [-c, xi_hi]
    a2 = max(xi_lo, -c)
    if xi_hi > a2:
        area_char += (eta_hi - c) * (xi_hi - a2)
    return 0.5 * area_char


def annulus_area_derivative(rho: float, R: float) -> float:
    """Rate of change of the debonded annulus area with the front width."""
    if rho < 0 or rho >= R:
        raise GeometryError("front width must lie in [0, R)")
    return 2.0 * math.pi * (R - rho)


# -- corner wavefronts ------------------------------------------------------

def corner_wavefronts(front, horizon: float):
    """Characteristic paths emitted by the two initial corners.

    A front that starts moving, or data whose derivatives do not vanish at
    the edges, radiates derivative jumps along the characteristics through
    (0, 0) and (0, rho0).  Each path alternates between inward and outward
    legs, bouncing at the rim and at the front; the reflection times come
    from the exact piecewise-affine maps.  Returns segments
    (t_start, t_end, kind, c) with r = c - t on '-' legs and r = t - c on
    '+' legs.
    """
    segs = []
    phi_T = float(front.phi(front.horizon))
    for mode, c in (("-", front.rho0), ("+", 0.0)):
        t0 = 0.0
        while t0 < horizon - 1e-12:
            if mode == "-":
                t1 = min(c, horizon)
                segs.append((t0, t1, "-", c))
                t0, mode = t1, "+"
                # after the rim bounce the outward leg keeps t - r = c
            else:
                if c >= phi_T - 1e-15:
                    segs.append((t0, horizon, "+", c))
                    break
                t_hit = float(front.lambda_of(c))
                t1 = min(t_hit, horizon)
                segs.append((t0, t1, "+", c))
                if t1 >= horizon:
                    break
                c = float(front.psi(t_hit))
                t0, mode = t1, "-"
    return segs


def jump_radii(segs, t: float, rho_t: float):
    """Radii in (0, rho_t) crossed by a corner wavefront at time t."""
    out = []
    for ta, tb, kind, c in segs:
        if ta - 1e-12 <= t <= tb + 1e-12:
            r = c - t if kind == "-" else t - c
            if 1e-9 < r < rho_t - 1e-9:
                out.append(r)
    out.sort()
    dedup = []
    for r in out:
        if not dedup or r - dedup[-1] > 1e-10:
            dedup.append(r)
    return dedup
