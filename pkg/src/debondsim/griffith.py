"""Coupled front evolution by the critical-rate flow rule.

The front is unknown; its crossing time lambda(s) of each characteristic
t - r = s obeys the rate ODE

    lambda'(s) = (1 + max(Lam(s), 1)) / 2,    lambda(-rho0) = 0,

where Lam is the ratio of the release rate to the toughness, evaluated
from the data traces and a characteristic line integral of the kernel
field.  Each marching window alternates two updates on a diagonal strip
hugging the front: the field update (free solution plus half the cone
integral, cut off at the current front) and the lambda update (cumulative
quadrature of the rate law).  The pair contracts in the product metric
max(L2 field distance, sup lambda distance) once the strip is narrow
enough; the width starts from the analytic sufficiency bounds and halves
whenever the measured factor misbehaves.

A window whose front would outrun its own time horizon is capped: the
lambda iterate is frozen at the horizon, which leaves every in-window
formula untouched (the strip never looks past its last row) and lets fast
fronts advance a full window per step.  After each window the full-annulus
field is re-solved with the produced front prescribed, giving exact seam
traces for the next window; the final output field is one global
prescribed solve against the assembled front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .fields import HData, ProblemData, Profile, Toughness, kappa_eval, to_h_data
from .geometry import FrontCurve, GeometryError, corner_wavefronts, jump_radii
from .prescribed import (ConvergenceError, FieldPatch, _seam_data, march)

SLOPE_CAP = 1.0 - 1e-9


class _Shrink(Exception):
    """Internal: the current strip width must be halved."""


# ---------------------------------------------------------------------------
# the strip workspace
# ---------------------------------------------------------------------------

class StripWorkspace:
    """Characteristic strip along the front for one coupled window.

    Node (l, k) sits at t = l*delta on the diagonal t - r = s_k, with
    s_k = -rho0 + k*delta, k = 0..m; the physical radius is t - s_k.
    Everything the two updates need (data columns, kernel columns, the
    induced reflection map) lives here.
    """

    def __init__(self, hd: HData, tough: Toughness, T: float, m: int, delta: float):
        self.hd = hd
        self.tough = tough
        self.delta = delta
        self.m = m
        self.L = int(round(T / delta))
        self.T = self.L * delta
        self.rho0 = hd.rho0
        self.s = -self.rho0 + delta * np.arange(m + 1)
        self.y = m * delta

        ll = np.arange(self.L + 1)[:, None] * delta
        kk = np.arange(m + 1)[None, :]
        self.t_grid = np.broadcast_to(ll, (self.L + 1, m + 1))
        self.r_grid = self.t_grid - self.s[None, :]
        self.eta_grid = self.t_grid + self.r_grid

        R, alpha = hd.R, hd.alpha
        if np.max(self.r_grid) >= R:
            raise GeometryError("strip reaches the rim radius")
        self.kern = 0.25 * (alpha * alpha + 1.0 / (R - self.r_grid) ** 2)

        self.h0_col = np.asarray(hd.h0(-self.s), dtype=float)
        self.H1_col = np.asarray(hd.h1.cumint(-self.s), dtype=float)
        self.h0d_col = np.asarray(hd.h0_dot(-self.s), dtype=float)
        self.h1_col = np.asarray(hd.h1(-self.s), dtype=float)

    def blank(self) -> np.ndarray:
        return np.zeros((self.L + 1, self.m + 1))

    # -- induced front ------------------------------------------------------

    def _lam_capped(self, lam: np.ndarray) -> np.ndarray:
        return np.minimum(lam, self.T)

    def inside_mask(self, lam: np.ndarray) -> np.ndarray:
        return self.t_grid <= self._lam_capped(lam)[None, :] + 1e-12

    def omega_of(self, lam: np.ndarray, eta: np.ndarray) -> np.ndarray:
        """Reflected-characteristic map induced by the lambda iterate:
        the front point with t + r = eta has t - r = omega(eta)."""
        lamc = self._lam_capped(lam)
        u = 2.0 * lamc - self.s  # increasing in s
        eta_c = np.clip(eta, u[0], u[-1])
        out = np.interp(eta_c, u, self.s)
        return np.where(eta <= self.rho0, -self.rho0, out)

    # -- field update ---------------------------------------------------------

    def free_solution(self, lam: np.ndarray) -> np.ndarray:
        hd = self.hd
        eta = self.eta_grid
        direct = eta <= self.rho0 + 1e-14
        eta_d = np.clip(eta, 0.0, self.rho0)
        a_direct = (0.5 * self.h0_col[None, :] + 0.5 * hd.h0(eta_d)
                    + 0.5 * (hd.h1.cumint(eta_d) - self.H1_col[None, :]))
        q = np.clip(-self.omega_of(lam, eta), 0.0, self.rho0)
        a_refl = (0.5 * self.h0_col[None, :] - 0.5 * hd.h0(q)
                  + 0.5 * (hd.h1.cumint(q) - self.H1_col[None, :]))
        return np.where(direct, a_direct, a_refl)

    def cone_integrals(self, lam: np.ndarray, F: np.ndarray) -> np.ndarray:
        """Phi[F] at every strip node, cut at the induced front."""
        d = self.delta
        L, m = self.L, self.m
        C = np.zeros_like(F)  # line integral along each diagonal, dtau units
        for l in range(1, L + 1):
            C[l] = C[l - 1] + 0.5 * d * (F[l - 1] + F[l])

        J = self.blank()
        lamc = self._lam_capped(lam)
        u = 2.0 * lamc - self.s
        for g in range(-m, 2 * L + 1):
            l_lo = max(0, (g + 1) // 2)
            l_hi = min(L, (g + m) // 2)
            if l_lo > l_hi:
                continue
            k_min = max(0, -g)
            k_max = min(m, 2 * L - g)
            ks = np.arange(k_min, k_max + 1)
            lp2 = g + ks  # = 2 * l'(k): even entries are node rows
            I = np.empty(len(ks))
            even = (lp2 % 2) == 0
            le = (lp2[even] // 2)
            I[even] = 2.0 * C[le, ks[even]]
            odd = ~even
            if np.any(odd):
                lo = (lp2[odd] - 1) // 2
                ko = ks[odd]
                I[odd] = (2.0 * C[lo, ko]
                          + d * (3.0 * F[lo, ko] + F[np.minimum(lo + 1, L), ko]) / 4.0)
            A = np.empty(len(ks))
            A[0] = 0.0
            np.cumsum(0.5 * d * (I[:-1] + I[1:]), out=A[1:])

            eta_g = self.rho0 + g * d
            cut = 0.0
            if eta_g > self.rho0 + 1e-12:
                om = float(np.interp(min(max(eta_g, u[0]), u[-1]), u, self.s))
                pos = (om + self.rho0) / d - k_min
                q0 = int(math.floor(pos + 1e-12))
                sfrac = pos - q0
                if q0 >= len(A) - 1:
                    cut = A[-1]
                elif q0 >= 0:
                    cut = A[q0] + d * (sfrac * I[q0]
                                       + 0.5 * sfrac * sfrac * (I[q0 + 1] - I[q0]))
            ls = np.arange(l_lo, l_hi + 1)
            kk = 2 * ls - g
            J[ls, kk] = 0.5 * (A[kk - k_min] - cut)
        return J

    def psi1(self, h: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Field update: free solution plus half the cone integral of the
        kernel field, zero past the induced front."""
        F = self.kern * h
        out = self.free_solution(lam) + 0.5 * self.cone_integrals(lam, F)
        return np.where(self.inside_mask(lam), out, 0.0)

    # -- rate update ----------------------------------------------------------

    def rate_ratio(self, h: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Lam(s_k): release rate over toughness along the front candidate."""
        d = self.delta
        hd, tough = self.hd, self.tough
        lamc = self._lam_capped(lam)
        F = self.kern * h
        C = np.zeros_like(F)
        for l in range(1, self.L + 1):
            C[l] = C[l - 1] + 0.5 * d * (F[l - 1] + F[l])
        lf = np.clip(np.floor(lamc / d + 1e-12).astype(int), 0, self.L)
        cols = np.arange(self.m + 1)
        line = C[lf, cols]
        rem = lamc - lf * d
        has = rem > 1e-13
        if np.any(has):
            frac = rem / d
            f_lo = F[lf, cols]
            f_hi = F[np.minimum(lf + 1, self.L), cols]
            f_end = (1.0 - frac) * f_lo + frac * f_hi
            line = np.where(has, line + 0.5 * rem * (f_lo + f_end), line)

        bracket = self.h0d_col - self.h1_col - line
        rho = np.clip(lamc - self.s, self.rho0, hd.R - 1e-9)
        kap = kappa_eval(tough, np.minimum(rho, tough.R - 1e-12))
        den = 2.0 * (hd.R - rho) * np.exp(hd.alpha * lamc) * kap
        return bracket * bracket / den

    def rate_slopes(self, h: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Crossing-time slopes (1 + max(Lam, 1)) / 2 at the s-samples."""
        big = self.rate_ratio(h, lam)
        return 0.5 * (1.0 + np.maximum(big, 1.0))

    def lambda_cumulative(self, slope: np.ndarray) -> np.ndarray:
        out = np.empty_like(slope)
        out[0] = 0.0
        np.cumsum(0.5 * self.delta * (slope[:-1] + slope[1:]), out=out[1:])
        return out

    def psi2(self, h: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Rate update: cumulative quadrature of the crossing-time ODE,
        frozen at the window horizon once it is reached."""
        return np.minimum(self.lambda_cumulative(self.rate_slopes(h, lam)), self.T)

    def metric(self, h1, lam1, h2, lam2) -> float:
        dh = math.sqrt(float(np.sum((h1 - h2) ** 2)) * self.delta * self.delta)
        dl = float(np.max(np.abs(lam1 - lam2)))
        return max(dh, dl)


@dataclass
class CoupledWindow:
    """One coupled marching window: strip geometry and iteration caps."""

    t_start: float
    T: float
    y: float
    delta: float
    M: float
    metric_tol: float
    workspace: StripWorkspace = field(repr=False, compare=False, default=None)

    @property
    def s_range(self):
        rho0 = self.workspace.rho0 if self.workspace else None
        return (-rho0, -rho0 + self.y) if rho0 else None


def lambda_rhs(window: CoupledWindow, h: np.ndarray, lam: np.ndarray, s: float) -> float:
    """Crossing-time slope at s: (1 + max(Lam(s), 1)) / 2, in [1, inf)."""
    ws = window.workspace
    big = ws.rate_ratio(h, lam)
    val = float(np.interp(s, ws.s, big))
    return 0.5 * (1.0 + max(val, 1.0))


def psi1(window: CoupledWindow, h: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return window.workspace.psi1(h, lam)


def psi2(window: CoupledWindow, h: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return window.workspace.psi2(h, lam)


def solve_coupled_window(window: CoupledWindow, hdata: HData, tough: Toughness,
                         tol: float = 1e-10, max_iter: int = 200):
    """Alternate the field and rate updates until the product metric
    settles.  Raises _Shrink when the sup cap or the measured contraction
    says the strip is too wide."""
    ws = window.workspace
    lam = np.minimum(ws.s + ws.rho0, ws.T)  # unit-slope start: front at rest
    h = ws.psi1(ws.blank(), lam)            # free solution on the strip
    history = []
    for it in range(1, max_iter + 1):
        h_new = ws.psi1(h, lam)
        lam_new = ws.psi2(h_new, lam)
        d = ws.metric(h_new, lam_new, h, lam)
        history.append(d)
        h, lam = h_new, lam_new
        if float(np.max(np.abs(h))) > window.M:
            raise _Shrink("field escaped the sup cap")
        if d < tol:
            break
        if it >= 5 and history[-2] > 0 and d / history[-2] >= 0.9:
            raise _Shrink("measured contraction factor >= 0.9")
    else:
        raise ConvergenceError(
            f"coupled window at t = {window.t_start:.6g} did not converge "
            f"(last metric {history[-1]:.3e}, factors "
            f"{[round(b / a, 3) for a, b in zip(history[:-1], history[1:])][-3:]})")
    factors = [b / a for a, b in zip(history[:-1], history[1:]) if a > 0]
    slopes = ws.rate_slopes(h, lam)
    lam_raw = ws.lambda_cumulative(slopes)
    diag = {
        "iterations": len(history),
        "final_metric": history[-1] if history else 0.0,
        "measured_factor": max(factors) if factors else 0.0,
        "capped": bool(lam_raw[-1] >= ws.T - 1e-12),
        "lam_raw": lam_raw,
        "slopes": slopes,
    }
    return h, lam, diag


# ---------------------------------------------------------------------------
# window sizing
# ---------------------------------------------------------------------------

def _band_integrals(hd: HData, y: float, n: int = 257):
    ss = np.linspace(hd.rho0 - y, hd.rho0, n)
    absum = np.abs(hd.h0_dot(ss)) + np.abs(hd.h1(ss))
    sqsum = (np.asarray(hd.h0_dot(ss)) - np.asarray(hd.h1(ss))) ** 2
    return float(np.trapezoid(absum, ss)), float(np.trapezoid(sqsum, ss))

def _seed_width(hd: HData, tough: Toughness, T: float, M: float,
                delta: float, y_cap: float) -> int:
    """Largest lattice multiple of the strip width passing the analytic
    self-map bounds (conservative, later halved adaptively)."""
    R, alpha = hd.R, hd.alpha
    rho_max = hd.rho0 + T
    gap = R - hd.rho0 - T
    if gap <= 0:
        return 1
    m = max(1, int(math.floor(y_cap / delta)))
    while m > 1:
        y = m * delta
        int_abs, int_sq = _band_integrals(hd, y)
        bound1 = int_abs + 0.125 * (alpha ** 2 + 1.0 / (R - rho_max) ** 2) * M * T * y
        bound2 = (y + int_sq / (2.0 * tough.c1 * gap)
                  + (M * T) ** 2 * (alpha ** 2 + 1.0 / gap ** 2) ** 2
                  / (32.0 * tough.c1 * gap) * y)
        if bound1 <= M and bound2 <= T:
            break
        m //= 2
    return max(1, m)


# ---------------------------------------------------------------------------
# the coupled march
# ---------------------------------------------------------------------------

@dataclass
class GriffithRun:
    """Result of a coupled run: the produced front, the field re-solved
    against it, and the stopping information."""

    front: FrontCurve
    patches: List[FieldPatch]
    t_star: float
    stop_reason: str  # "horizon" | "fully_debonded"
    data: ProblemData
    tough: Toughness
    delta: float
    stop_margin: float
    window_diagnostics: List[dict]


def _front_knots(ws: StripWorkspace, lam_raw: np.ndarray,
                 slopes: np.ndarray, t_end: float):
    """Window-local front knots (t, rho) from the converged crossing times.

    Knots sit at the crossing times themselves, so each segment slope is
    the trapezoid-consistent front speed; the cumulative crossing time is
    piecewise quadratic, and a horizon overshoot inside a cell is resolved
    by the exact quadratic crossing.  A final knot lands exactly on t_end.
    """
    d = ws.delta
    ls, ss = [0.0], [float(ws.s[0])]
    for j in range(1, len(lam_raw)):
        if lam_raw[j] <= ws.T + 1e-15:
            if lam_raw[j] > ls[-1] + 1e-13:
                ls.append(float(lam_raw[j]))
                ss.append(float(ws.s[j]))
            if lam_raw[j] >= ws.T - 1e-15:
                break
        else:
            a = float(slopes[j - 1])
            b = 0.5 * (float(slopes[j]) - float(slopes[j - 1])) / d
            target = ws.T - float(lam_raw[j - 1])
            if abs(b) < 1e-14:
                u = target / a if a > 0 else 0.0
            else:
                u = (-a + math.sqrt(a * a + 4.0 * b * target)) / (2.0 * b)
            u = min(max(u, 0.0), d)
            if ws.T > ls[-1] + 1e-13:
                ls.append(ws.T)
                ss.append(float(ws.s[j - 1]) + u)
            break
    ts = [t for t in ls if t < t_end - 1e-13] + [t_end]
    s_of_t = np.interp(ts, ls, ss)
    rho = np.asarray(ts) - s_of_t
    rho = np.maximum.accumulate(rho)
    dts = np.diff(ts)
    seg = np.clip(np.diff(rho) / dts, 0.0, SLOPE_CAP)
    rho = np.concatenate(([rho[0]], rho[0] + np.cumsum(seg * dts)))
    return np.asarray(ts), rho


def run(data: ProblemData, tough: Toughness, horizon: float,
        tol: float = 1e-10, delta: float = 1.0 / 128,
        stop_margin: Optional[float] = None, max_iter: int = 200) -> GriffithRun:
    """March the coupled problem until the horizon or full debonding.

    Each window solves the strip fixed point with the toughness clamped
    past its next breakpoint (so no window straddles one), re-bases the
    data from a certified prescribed solve of the produced front, and
    stops when the bonded disk is within the stop margin of vanishing.
    """
    if stop_margin is None:
        stop_margin = 2.0 * delta
    hd = to_h_data(data)
    R = hd.R
    if R - hd.rho0 <= stop_margin:
        raise ValueError("the annulus is already within the stop margin")
    n_total = int(round(horizon / delta))
    if abs(n_total * delta - horizon) > 1e-9 * max(horizon, 1.0):
        n_total = int(math.ceil(horizon / delta - 1e-9))
    if n_total < 1:
        raise ValueError("horizon must cover at least one lattice step")

    t_knots = [0.0]
    rho_knots = [hd.rho0]
    local = hd
    diags: List[dict] = []
    rows_done = 0
    stop_reason = "horizon"

    while rows_done < n_total:
        rho_bar = rho_knots[-1]
        if R - rho_bar <= stop_margin + 1e-12:
            stop_reason = "fully_debonded"
            break

        T_cap = min(0.45 * rho_bar, 0.9 * (R - rho_bar),
                    (n_total - rows_done) * delta)
        L = max(1, int(math.floor(T_cap / delta + 1e-9)))
        T = L * delta

        later = tough.breakpoints[tough.breakpoints > rho_bar + 1e-12]
        b_next = float(later[0]) if len(later) else None
        tough_w = tough.clamped_after(b_next) if (
            b_next is not None and b_next < rho_bar + T) else tough

        guess = _band_integrals(local, min(0.45 * rho_bar, local.rho0 - delta))[0]
        M = 2.0 * max(guess, float(np.abs(local.h0(local.rho0 - 1e-9))), 1e-9)
        m = _seed_width(local, tough_w, T, M, delta,
                        y_cap=min(0.9 * local.rho0, T))

        shrink_count = 0
        while True:
            ws = StripWorkspace(local, tough_w, T, m, delta)
            window = CoupledWindow(t_start=rows_done * delta, T=ws.T, y=ws.y,
                                   delta=delta, M=M, metric_tol=tol, workspace=ws)
            try:
                h_strip, lam, wdiag = solve_coupled_window(window, local, tough_w,
                                                           tol=tol, max_iter=max_iter)
                break
            except _Shrink as exc:
                shrink_count += 1
                m //= 2
                if m < 1:
                    raise ConvergenceError(
                        f"strip width underflow below the lattice step at "
                        f"t = {rows_done * delta:.6g}: {exc}") from exc

        lam_raw = wdiag.pop("lam_raw")
        slopes = wdiag.pop("slopes")
        adv_rows = ws.L if wdiag["capped"] else max(
            1, int(math.floor(float(lam_raw[-1]) / delta + 1e-12)))
        tw, rw = _front_knots(ws, lam_raw, slopes, adv_rows * delta)

        if b_next is not None and rw[-1] >= b_next - 1e-12:
            # never straddle a toughness breakpoint: cut at the first full
            # row past the crossing
            t_cross = float(np.interp(b_next, rw, tw))
            adv_rows = max(1, int(math.ceil(t_cross / delta - 1e-9)))
            keep = tw < adv_rows * delta - 1e-13
            tw = np.append(tw[keep], adv_rows * delta)
            rw = np.append(rw[keep], np.interp(adv_rows * delta, *(lambda a, b: (a, b))(tw[:-1] if len(tw) > 1 else tw, rw[keep] if len(rw[keep]) else rw))) if False else None
            tw, rw = _front_knots(ws, lam_raw, slopes, adv_rows * delta)

        wdiag.update(t_start=rows_done * delta, T=ws.T, y=ws.y, m=m,
                     rows=adv_rows, shrinks=shrink_count,
                     rho_end=float(rw[-1]))
        diags.append(wdiag)

        # window field, solved against the produced front, for seam traces
        front_w = FrontCurve(tw, rw, R)
        patches_w = march(local, front_w, horizon=adv_rows * delta,
                          tol=tol, delta=delta, max_iter=max_iter)

        t0 = rows_done * delta
        for tk, rk in zip(tw[1:], rw[1:]):
            t_knots.append(t0 + float(tk))
            rho_knots.append(float(rk))
        rows_done += adv_rows

        if rows_done < n_total and R - rho_knots[-1] > stop_margin + 1e-12:
            front_glob = FrontCurve(np.asarray(t_knots), np.asarray(rho_knots), R)
            wf = corner_wavefronts(front_glob, front_glob.horizon)
            seam_jumps = jump_radii(wf, rows_done * delta, rho_knots[-1])
            # jump radii are global; the seam data live on the same radii
            local = _seam_data(patches_w[-1], seam_jumps)

    t_star = rows_done * delta
    if R - rho_knots[-1] <= stop_margin + 1e-12:
        stop_reason = "fully_debonded"

    front = FrontCurve(np.asarray(t_knots), np.asarray(rho_knots), R)
    patches = march(data, front, horizon=t_star, tol=tol, delta=delta,
                    max_iter=max_iter)
    return GriffithRun(front=front, patches=patches, t_star=t_star,
                       stop_reason=stop_reason, data=data, tough=tough,
                       delta=delta, stop_margin=stop_margin,
                       window_diagnostics=diags)
