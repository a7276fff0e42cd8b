"""Fixed-point solver for the wave field under a prescribed front.

Each marching window solves the representation identity

    h = A + (1/2) Phi[F[h]],      F[h] = (alpha^2 + 1/(R-r)^2)/4 * h

by Picard iteration on a characteristic lattice, starting from the free
solution A.  Window lengths are chosen so the iteration is a certified
contraction; marching re-bases the data at every seam using the exact
derivative trace formulas (never finite differences), and rescales the
exponential weight so each window works with well-conditioned local
values.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .dalembert import TravelingWaves, free_derivatives, free_solution, traveling_decomposition
from .fields import HData, ProblemData, Profile, kernel_prefactor, to_h_data, v_from_h
from .geometry import GeometryError, corner_wavefronts, jump_radii
from .quadrature import (CharLattice, cone_integrals_batch, diag_cumulatives,
                         g_row_batch, phi_time_trace)


class ConvergenceError(RuntimeError):
    """Raised when a fixed-point iteration fails to reach tolerance."""


DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


# ---------------------------------------------------------------------------
# window planning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WindowPlan:
    """One marching window with its certified contraction factor."""

    t_start: float
    t_end: float
    rho_at_start: float
    contraction_bound: float
    delta: float

    def __post_init__(self):
        if self.contraction_bound >= 1.0:
            raise ConvergenceError("window is not a certified contraction")

    @property
    def length(self) -> float:
        return self.t_end - self.t_start

    @property
    def nt(self) -> int:
        return int(round(self.length / self.delta))


def certified_step(rho_k: float, R: float, alpha: float) -> float:
    """Marching step with a guaranteed contraction, from the window
    recursion: half the min of rho_k/2, (R-rho_k)/2 and the kernel bound."""
    kern_term = (4.0 / rho_k) / (alpha * alpha + 4.0 / (R - rho_k) ** 2)
    return 0.5 * min(0.5 * rho_k, 0.5 * (R - rho_k), kern_term)


def contraction_bound(rho_k: float, R: float, alpha: float, T: float) -> float:
    """Analytic sup-norm Lipschitz bound of the window operator.

    The strip estimate rho_k*T/4*(alpha^2 + 4/(R-rho_k)^2) applies for
    window lengths within the planning cap; very short windows near full
    debonding fall back on the sharper cone-area bound T^2/8 * max-kernel.
    """
    best = np.inf
    if T <= min(0.5 * rho_k, 0.5 * (R - rho_k)) + 1e-12:
        best = 0.25 * rho_k * T * (alpha * alpha + 4.0 / (R - rho_k) ** 2)
    if rho_k + T < R:
        sharp = 0.125 * T * T * (alpha * alpha + 1.0 / (R - rho_k - T) ** 2)
        best = min(best, sharp)
    return best


def plan_windows(front, data: HData, alpha: float, horizon: float,
                 delta: float = 1.0 / 128, multiplier: float = 1.0) -> List[WindowPlan]:
    """Cover [0, horizon] with certified windows snapped to the lattice."""
    if not (0 < multiplier <= 1.0):
        raise ValueError("window multiplier must be in (0, 1]")
    n_total = int(round(horizon / delta))
    if abs(n_total * delta - horizon) > 1e-9 * max(1.0, horizon):
        n_total = int(math.ceil(horizon / delta - 1e-9))
    if n_total * delta > front.horizon + 1e-9:
        raise GeometryError("horizon exceeds the front domain")
    R = data.R
    plans: List[WindowPlan] = []
    i0 = 0
    while i0 < n_total:
        t0 = i0 * delta
        rho_k = float(front.rho(t0))
        steps = int(math.floor(multiplier * certified_step(rho_k, R, alpha) / delta + 1e-9))
        steps = max(1, min(steps, n_total - i0))
        while True:
            T = steps * delta
            q = contraction_bound(rho_k, R, alpha, T)
            if q < 0.999 or steps == 1:
                break
            steps = max(1, steps // 2)
        if q >= 0.999:
            raise ConvergenceError(
                f"no certified window at t = {t0:.6g} (front too close to the rim)")
        plans.append(WindowPlan(t_start=t0, t_end=(i0 + steps) * delta,
                                rho_at_start=rho_k, contraction_bound=q, delta=delta))
        i0 += steps
    return plans


# ---------------------------------------------------------------------------
# one window
# ---------------------------------------------------------------------------

FieldSample = namedtuple("FieldSample", "h h_t h_r v v_t v_r u")


@dataclass
class FieldPatch:
    """Converged field on one window lattice, plus everything needed to
    evaluate values and exact derivative traces inside the window.

    ``lattice.values`` stores the locally rescaled field; global values
    carry the factor ``scale`` = exp(alpha * t_start / 2).
    """

    lattice: CharLattice
    window: WindowPlan
    hdata: HData
    waves: TravelingWaves
    scale: float
    kern: np.ndarray
    F: np.ndarray
    C_F: np.ndarray
    D_F: np.ndarray
    free_grid: np.ndarray
    diagnostics: dict
    trace_t0: dict

    @property
    def t0(self) -> float:
        return self.window.t_start

    @property
    def t1(self) -> float:
        return self.window.t_end

    def rho_local(self, t_loc):
        return self.lattice.front.rho(t_loc)

    # -- local evaluation ---------------------------------------------------

    def local_value(self, t_loc: float, r: float) -> float:
        return float(self.lattice.sample(self.lattice.values, t_loc, r))

    def local_traces(self, t_loc: float, r: float):
        """(h, h_t, h_r) in window-local variables, exact trace formulas."""
        rho_t = float(self.rho_local(t_loc))
        if r > rho_t + 1e-9:
            raise GeometryError("point beyond the front")
        r = min(r, rho_t)
        d_t, d_r = free_derivatives(self.waves, t_loc, r)
        g1, g2 = phi_time_trace(self.lattice, self.F, t_loc, r)
        h_t = float(d_t) + 0.5 * (g1 + g2)
        h_r = float(d_r) + 0.5 * (g1 - g2)
        if abs(r - rho_t) < 1e-14:
            h = 0.0
        else:
            h = self.local_value(t_loc, r)
        return h, h_t, h_r

    def row_traces(self, i: int):
        """(h, h_t, h_r) arrays over all lattice columns at row i (zeros
        beyond the front)."""
        lat = self.lattice
        t_loc = i * lat.delta
        d_t, d_r = free_derivatives(self.waves, t_loc, lat.radii)
        g1, g2 = g_row_batch(lat, self.F, self.C_F, self.D_F, i)
        inside = lat.inside[i]
        h_t = np.where(inside, d_t + 0.5 * (g1 + g2), 0.0)
        h_r = np.where(inside, d_r + 0.5 * (g1 - g2), 0.0)
        return lat.values[i].copy(), h_t, h_r

    def front_bracket(self, t_loc: float) -> float:
        """The squared-bracket trace h_r - h_t at the front point, from
        window data and the characteristic line integral of F."""
        rho_t = float(self.rho_local(t_loc))
        s = rho_t - t_loc
        hd = self.hdata
        line = _char_line_plus(self.lattice, self.F, -s, t_loc)
        return float(hd.h0_dot(s)) - float(hd.h1(s)) - line

    def rim_bracket(self, t_loc: float) -> float:
        """The trace h_r + h_t at the rim, from window data and the
        reflected characteristic line integral of F."""
        hd = self.hdata
        line = _char_line_minus(self.lattice, self.F, t_loc)
        return float(hd.h0_dot(t_loc)) + float(hd.h1(t_loc)) + line


def _char_line_plus(lat: CharLattice, values: np.ndarray, xi: float, t_end: float) -> float:
    """Integral of the field along r = tau - xi from tau = 0 to t_end."""
    from .quadrature import _diag_line_integral
    return _diag_line_integral(lat, values, 0.0, -xi, +1, t_end)


def _char_line_minus(lat: CharLattice, values: np.ndarray, t_end: float) -> float:
    """Integral of the field along r = t_end - tau from tau = 0 to t_end."""
    from .quadrature import _diag_line_integral
    return _diag_line_integral(lat, values, 0.0, t_end, -1, t_end)


class _Workspace:
    """Grids shared by all Picard sweeps of one window."""

    def __init__(self, hdata: HData, front_local, plan: WindowPlan):
        self.lattice = CharLattice(front_local, plan.delta, plan.nt)
        lat = self.lattice
        self.waves = traveling_decomposition(hdata, front_local)
        tt = lat.times[:, None]
        rr = lat.radii[None, :]
        self.free_grid = lat.masked(free_solution(hdata, front_local, tt, rr, check=False))
        sigma = np.minimum(lat.radii, hdata.R - 1e-9)
        kern_row = kernel_prefactor(sigma, hdata.R, hdata.alpha)
        self.kern = np.where(lat.radii < hdata.R - 1e-9, kern_row, 0.0)[None, :]
        self.z_col = np.asarray(hdata.z(lat.times), dtype=float)


def apply_L(h: np.ndarray, hdata: HData, front, window: WindowPlan,
            workspace: Optional[_Workspace] = None) -> np.ndarray:
    """One application of the window operator: free solution plus half the
    cone integral of the kernel field, boundary and initial rows reimposed."""
    if workspace is None:
        workspace = _Workspace(hdata, front.window(window.t_start, window.t_end), window)
    lat = workspace.lattice
    F = workspace.kern * lat.masked(h)
    J = cone_integrals_batch(lat, F)
    out = lat.masked(workspace.free_grid + 0.5 * J)
    out[:, 0] = workspace.z_col
    out[0, :] = workspace.free_grid[0, :]
    return out


def solve_window(hdata: HData, front, window: WindowPlan,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                 scale: float = 1.0) -> FieldPatch:
    """Picard-iterate the window operator from the free solution until the
    sup-norm update drops below tol."""
    front_local = front.window(window.t_start, window.t_end)
    ws = _Workspace(hdata, front_local, window)
    lat = ws.lattice

    h = ws.free_grid.copy()
    h[:, 0] = ws.z_col
    residuals = []
    for it in range(1, max_iter + 1):
        h_new = apply_L(h, hdata, front, window, workspace=ws)
        res = float(np.max(np.abs(h_new - h)))
        residuals.append(res)
        h = h_new
        if res < tol:
            break
    else:
        measured = residuals[-1] / residuals[-2] if len(residuals) > 1 and residuals[-2] else np.nan
        raise ConvergenceError(
            f"window at t = {window.t_start:.6g} did not converge in {max_iter} "
            f"iterations (last update {residuals[-1]:.3e}, measured factor {measured:.3f})")

    measured = [residuals[i + 1] / residuals[i] for i in range(len(residuals) - 1)
                if residuals[i] > 0]
    lat.values = h
    F = ws.kern * h
    C_F, D_F = diag_cumulatives(F, lat.delta)
    diag = {
        "iterations": len(residuals),
        "final_update": residuals[-1],
        "contraction_bound": window.contraction_bound,
        "measured_factor": max(measured) if measured else 0.0,
    }
    trace_t0 = {"h0": h[0, :].copy(), "h1": None}
    return FieldPatch(lattice=lat, window=window, hdata=hdata, waves=ws.waves,
                      scale=scale, kern=ws.kern, F=F, C_F=C_F, D_F=D_F,
                      free_grid=ws.free_grid, diagnostics=diag, trace_t0=trace_t0)


# ---------------------------------------------------------------------------
# marching
# ---------------------------------------------------------------------------

def _seam_data(patch: FieldPatch, seam_jumps=()) -> HData:
    """Window data for the next seam from the exact end-row traces.

    ``seam_jumps`` lists radii where the derivative fields jump (corner
    wavefronts crossing the seam row); the sampled profiles get a double
    knot there so the next window inherits a sharp jump instead of a
    smeared cell.
    """
    lat = patch.lattice
    nt = lat.nt
    hd = patch.hdata
    t_end = nt * lat.delta
    rho_end = float(patch.rho_local(t_end))
    j_in = int(math.floor(rho_end / lat.delta + 1e-12))
    h_row, ht_row, hr_row = patch.row_traces(nt)

    rs = list(lat.radii[: j_in + 1])
    h0_s = list(h_row[: j_in + 1])
    h1_s = list(ht_row[: j_in + 1])
    hd0_s = list(hr_row[: j_in + 1])
    for r_star in seam_jumps:
        for r_side in (r_star - 1e-9, r_star + 1e-9):
            h, h_t, h_r = patch.local_traces(t_end, r_side)
            rs.append(r_side)
            h0_s.append(h)
            h1_s.append(h_t)
            hd0_s.append(h_r)
    if seam_jumps:
        order = np.argsort(rs, kind="stable")
        rs = [rs[k] for k in order]
        h0_s = [h0_s[k] for k in order]
        h1_s = [h1_s[k] for k in order]
        hd0_s = [hd0_s[k] for k in order]
        keep = [0] + [k for k in range(1, len(rs)) if rs[k] - rs[k - 1] > 1e-12]
        rs = [rs[k] for k in keep]
        h0_s = [h0_s[k] for k in keep]
        h1_s = [h1_s[k] for k in keep]
        hd0_s = [hd0_s[k] for k in keep]
    if rho_end - rs[-1] > 1e-10:
        h, h_t, h_r = patch.local_traces(t_end, rho_end)
        rs.append(rho_end)
        h0_s.append(0.0)
        h1_s.append(h_t)
        hd0_s.append(h_r)
    else:
        h0_s[-1] = 0.0

    decay = math.exp(-0.5 * hd.alpha * patch.window.length)
    rs = np.asarray(rs)
    h0_s = decay * np.asarray(h0_s)
    h1_s = decay * np.asarray(h1_s)
    hd0_s = decay * np.asarray(hd0_s)

    dT = patch.window.length
    z_prev = hd.z
    z_next = Profile(lambda s: decay * z_prev(np.asarray(s, dtype=float) + dT),
                     deriv=lambda s: decay * z_prev.deriv(np.asarray(s, dtype=float) + dT),
                     kind="z")
    h0_s[0] = float(z_next(0.0))  # seam compatibility, exact
    h0 = Profile.from_samples(rs, h0_s, method="linear", deriv_samples=hd0_s)
    h1 = Profile.from_samples(rs, h1_s, method="linear")
    return HData(R=hd.R, rho0=rho_end, alpha=hd.alpha, z=z_next,
                 h0=h0, h1=h1, h0_dot=h0.deriv)


def march(data, front, horizon: float, tol: float = DEFAULT_TOL,
          delta: float = 1.0 / 128, max_iter: int = DEFAULT_MAX_ITER,
          multiplier: float = 1.0) -> List[FieldPatch]:
    """Solve up to the horizon by sequential certified windows.

    ``data`` may be the physical problem data or ready-made weighted data.
    Seam traces are taken from the exact derivative formulas of the
    previous patch, and the local fields absorb the exponential weight so
    the stored values stay O(data).
    """
    hd = to_h_data(data) if isinstance(data, ProblemData) else data
    plans = plan_windows(front, hd, hd.alpha, horizon, delta, multiplier)
    wavefronts = corner_wavefronts(front, plans[-1].t_end)
    patches: List[FieldPatch] = []
    local = hd
    scale = 1.0
    for k, plan in enumerate(plans):
        patch = solve_window(local, front, plan, tol=tol, max_iter=max_iter, scale=scale)
        patches.append(patch)
        if k + 1 < len(plans):
            seam_jumps = jump_radii(wavefronts, plan.t_end,
                                    float(front.rho(plan.t_end)))
            local = _seam_data(patch, seam_jumps)
            scale *= math.exp(0.5 * hd.alpha * plan.length)
    return patches


def locate_patch(patches: List[FieldPatch], t: float) -> FieldPatch:
    for patch in patches:
        if t <= patch.t1 + 1e-12:
            if t < patch.t0 - 1e-12:
                break
            return patch
    raise GeometryError(f"time {t} is not covered by the solved windows")


def evaluate_field(patches, t: float, r: float) -> FieldSample:
    """Global field values and exact derivatives at one solved point.

    Derivatives combine the analytic traveling-wave derivatives with the
    boundary line integrals of the kernel field; the value interpolates
    the window lattice.  Output is in unweighted (global) variables.
    """
    if isinstance(patches, FieldPatch):
        patches = [patches]
    patch = locate_patch(patches, t)
    t_loc = t - patch.t0
    hd = patch.hdata
    h_loc, ht_loc, hr_loc = patch.local_traces(t_loc, r)
    s = patch.scale
    h, h_t, h_r = s * h_loc, s * ht_loc, s * hr_loc
    v, v_t, v_r = v_from_h(h, h_t, h_r, t, r, hd.R, hd.alpha)
    return FieldSample(h=float(h), h_t=float(h_t), h_r=float(h_r),
                       v=float(v), v_t=float(v_t), v_r=float(v_r), u=float(v))


@dataclass
class SolveReport:
    """Per-window convergence diagnostics of one marching run."""

    window_starts: list
    window_ends: list
    rho_at_start: list
    contraction_bounds: list
    measured_factors: list
    iterations: list
    final_updates: list
    stop_reason: str = "horizon"

    @classmethod
    def from_patches(cls, patches: List[FieldPatch], stop_reason: str = "horizon"):
        return cls(
            window_starts=[p.t0 for p in patches],
            window_ends=[p.t1 for p in patches],
            rho_at_start=[p.window.rho_at_start for p in patches],
            contraction_bounds=[p.diagnostics["contraction_bound"] for p in patches],
            measured_factors=[p.diagnostics["measured_factor"] for p in patches],
            iterations=[p.diagnostics["iterations"] for p in patches],
            final_updates=[p.diagnostics["final_update"] for p in patches],
            stop_reason=stop_reason,
        )

    def to_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "windows": [
                {
                    "t_start": self.window_starts[i],
                    "t_end": self.window_ends[i],
                    "rho_at_start": self.rho_at_start[i],
                    "contraction_bound": self.contraction_bounds[i],
                    "measured_factor": self.measured_factors[i],
                    "iterations": self.iterations[i],
                    "final_update": self.final_updates[i],
                }
                for i in range(len(self.window_starts))
            ],
        }
