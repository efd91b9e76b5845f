"""Experiment-level verification: scaling, blow-ups, BV diagnostics, varifolds.

These routines drive the solver at several scales and compare the observed
behaviour against the predicted asymptotics: the minimum-energy scaling law,
the staircase microstructure of blow-ups, total-variation domination by the
forcing, and the graph-varifold pairing identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import Affine, Forcing, Smooth, Step, gauss_legendre
from .grid import PCFn, blow_up, scales, total_variation
from .solve import SolveOptions, SolveReport, minimize_dpmf
from .staircase import Staircase, hv_params, staircase_eval


class ThresholdInversionError(ValueError):
    """The slope-regime thresholds cross: n is too small to separate scales."""


@dataclass(frozen=True)
class RegimeClasses:
    steep: np.ndarray
    intermediate: np.ndarray
    flat: np.ndarray
    thresholds: tuple


@dataclass(frozen=True)
class StaircaseFit:
    H: float
    V: float
    tau0: float
    residual: float
    jump_positions: np.ndarray
    jump_heights: np.ndarray


@dataclass(frozen=True)
class StrictRow:
    n: int
    l1_error: float
    tv_minimizer: float
    tv_forcing: float
    tv_bounded: bool


@dataclass(frozen=True)
class VarifoldRHS:
    ac_term: float
    diffuse_plus: float
    diffuse_minus: float
    jump_plus: float
    jump_minus: float

    @property
    def total(self) -> float:
        return (self.ac_term + self.diffuse_plus + self.diffuse_minus
                + self.jump_plus + self.jump_minus)


@dataclass(frozen=True)
class ScalingRow:
    n: int
    omega: float
    m_n: float
    ratio: float
    limit_value: float


@dataclass(frozen=True)
class BlowupResult:
    w: PCFn
    fit: StaircaseFit | None
    predicted: tuple | None


#: Test functions phi(x, s, theta) for the varifold pairing, fixed battery.
PHI_BATTERY = {
    "one": lambda x, s, theta: np.ones_like(np.broadcast_arrays(x, s, theta)[0]),
    "cos_theta": lambda x, s, theta: np.cos(theta) * np.ones_like(np.asarray(x, dtype=float)),
    "sin_theta": lambda x, s, theta: np.sin(theta) * np.ones_like(np.asarray(x, dtype=float)),
    "x_times_s": lambda x, s, theta: np.asarray(x, dtype=float) * np.asarray(s, dtype=float),
}


def classify_slopes(u: PCFn, n: int) -> RegimeClasses:
    """Partition derivative cells of a delta(n)-grid function by slope size.

    Steep cells carry the jumps, flat cells the plateaus; the thresholds are
    ``1/(delta(n) log(n)^4)`` and ``1/log(n)``.
    """
    sp = scales(n)
    g = u.grid
    if abs(g.delta / sp.delta_n - 1.0) > 1e-12:
        raise ValueError(f"grid width {g.delta!r} does not match delta(n) for n={n}")
    logn = math.log(n)
    t_steep = 1.0 / (sp.delta_n * logn**4)
    t_flat = 1.0 / logn
    if t_steep <= t_flat:
        raise ThresholdInversionError(
            f"t_steep={t_steep:.4g} <= t_flat={t_flat:.4g} at n={n}; increase n")
    slopes = np.abs(np.diff(u.values)) / g.delta
    idx = np.arange(slopes.size)
    steep = slopes > t_steep
    flat = slopes < t_flat
    return RegimeClasses(steep=idx[steep], flat=idx[flat],
                         intermediate=idx[~steep & ~flat],
                         thresholds=(t_steep, t_flat))


# ---------------------------------------------------------------------------
# Staircase fitting
# ---------------------------------------------------------------------------

def _detect_jumps(w: PCFn, threshold: float):
    d = np.diff(w.values)
    hot = np.flatnonzero(np.abs(d) > threshold)
    if hot.size == 0:
        return np.array([]), np.array([])
    # merge runs of adjacent hot increments into single jumps
    breaks = np.flatnonzero(np.diff(hot) > 1)
    groups = np.split(hot, breaks + 1)
    nodes = w.grid.a_star + (np.arange(len(d)) + 1) * w.grid.delta
    positions = []
    heights = []
    for grp in groups:
        h = d[grp]
        heights.append(float(np.sum(h)))
        positions.append(float(np.sum(nodes[grp] * np.abs(h)) / np.sum(np.abs(h))))
    return np.asarray(positions), np.asarray(heights)


def _circular_tau(positions: np.ndarray, H: float) -> float:
    """Offset of the jump lattice relative to 0, as tau in [-1, 1)."""
    phase = np.mod(positions / H, 2.0)  # target: (1 + tau) mod 2
    angles = np.pi * phase
    mean_angle = math.atan2(float(np.mean(np.sin(angles))), float(np.mean(np.cos(angles))))
    mu = math.fmod(mean_angle / math.pi + 2.0, 2.0)
    return mu - 1.0


def fit_staircase(w: PCFn, jump_threshold: float) -> StaircaseFit:
    """Fit an oblique staircase translation to a piecewise-constant function.

    Jumps are increments exceeding ``jump_threshold`` (adjacent hot cells
    merge); H is half the mean jump spacing, V half the mean signed height.
    The residual is the sup-norm gap, at cell midpoints, to the best
    translation of the fitted staircase; note it saturates near jump cells
    when the jump lattice is incommensurate with the grid.
    """
    positions, heights = _detect_jumps(w, jump_threshold)
    if positions.size < 2:
        raise ValueError(f"fewer than 2 jumps detected (threshold {jump_threshold!r})")
    H = float(np.mean(np.diff(positions))) / 2.0
    V = float(np.mean(heights)) / 2.0
    tau0 = _circular_tau(positions, H)

    mids = w.grid.cell_midpoints()
    taus = np.concatenate((np.linspace(-1.0, 1.0, 161), [tau0],
                           np.mod(positions / H, 2.0) - 1.0))
    best_tau, best_res = 0.0, math.inf
    span = None
    for _ in range(3):
        for t in np.unique(taus):
            cand = Staircase(H=H, V=V, tau0=float(np.clip(t, -1.0, 1.0)))
            res = float(np.max(np.abs(w.values - staircase_eval(cand, mids))))
            if res < best_res:
                best_tau, best_res = float(t), res
        span = 0.0125 if span is None else span / 10.0
        taus = best_tau + np.linspace(-span, span, 21)
    return StaircaseFit(H=H, V=V, tau0=tau0, residual=best_res,
                        jump_positions=positions, jump_heights=heights)


# ---------------------------------------------------------------------------
# Strict-BV diagnostics
# ---------------------------------------------------------------------------

def strict_convergence_report(minimizers, f: Forcing, tv_slack: float = 1e-6):
    """Per-n L1 distance to the forcing, TV of the minimizer, and the TV bound."""
    nodes, weights = gauss_legendre(8)
    rows = []
    for n, u in sorted(minimizers, key=lambda t: t[0]):
        g = u.grid
        edges = g.nodes()
        mid = (edges[:-1] + edges[1:])[:, None] / 2.0
        half = np.diff(edges)[:, None] / 2.0
        x = mid + half * nodes[None, :]
        gap = np.abs(u.values[:, None] - f.value(x))
        l1 = float(np.sum((gap @ weights) * half[:, 0]))
        tv_u = total_variation(u)
        tv_f = f.tv(g.a, g.b)
        rows.append(StrictRow(n=n, l1_error=l1, tv_minimizer=tv_u, tv_forcing=tv_f,
                              tv_bounded=tv_u <= tv_f + tv_slack))
    return rows


# ---------------------------------------------------------------------------
# Varifold pairing
# ---------------------------------------------------------------------------

def varifold_lhs(u: PCFn, phi) -> float:
    """Graph pairing of the piecewise-affine interpolant of ``u``.

    The interpolant passes through the cell values at the nodes ``z/n``; its
    slope on each open cell is the difference quotient (0 on the last cell).
    Integration is Gauss-Legendre of order 8 per cell.
    """
    g = u.grid
    v = u.values
    slopes = np.concatenate((np.diff(v) / g.delta, [0.0]))
    nodes, weights = gauss_legendre(8)
    edges = g.nodes()
    mid = (edges[:-1] + edges[1:])[:, None] / 2.0
    half = g.delta / 2.0
    x = mid + half * nodes[None, :]
    uhat = v[:, None] + slopes[:, None] * (x - edges[:-1][:, None])
    theta = np.arctan(slopes)[:, None] * np.ones_like(x)
    integrand = phi(x, uhat, theta) * np.sqrt(1.0 + slopes[:, None] ** 2)
    return float(np.sum((integrand @ weights) * half))


def _panel_integral(fn, lo: float, hi: float, cuts=(), panels: int = 200) -> float:
    """Composite Gauss-Legendre of order 8, splitting at the given cuts."""
    nodes, weights = gauss_legendre(8)
    edges = np.unique(np.concatenate((np.linspace(lo, hi, panels + 1),
                                      [c for c in cuts if lo < c < hi])))
    mid = (edges[:-1] + edges[1:])[:, None] / 2.0
    half = np.diff(edges)[:, None] / 2.0
    x = mid + half * nodes[None, :]
    return float(np.sum((fn(x) @ weights) * half[:, 0]))


def varifold_rhs(f: Forcing, phi, interval: tuple = (0.0, 1.0)) -> VarifoldRHS:
    """Limit side of the pairing: horizontal part plus signed vertical parts.

    The vertical parts split into the diffuse derivative (affine/smooth
    forcings) and per-jump segments over the jump interval (step forcings).
    """
    lo, hi = interval
    f.check_domain(lo, hi)
    jump_cuts = tuple(p for p, _ in f.jumps())
    ac = _panel_integral(lambda x: phi(x, f.value(x), np.zeros_like(x)),
                         lo, hi, cuts=jump_cuts)
    up = math.pi / 2.0
    if isinstance(f, Step):
        dplus = dminus = 0.0
    else:
        dplus = _panel_integral(
            lambda x: phi(x, f.value(x), np.full_like(x, up)) * np.maximum(f.derivative(x), 0.0),
            lo, hi)
        dminus = _panel_integral(
            lambda x: phi(x, f.value(x), np.full_like(x, -up)) * np.maximum(-f.derivative(x), 0.0),
            lo, hi)
    jplus = jminus = 0.0
    if isinstance(f, Step):
        nodes, weights = gauss_legendre(8)
        for p, h in f.jumps():
            if not lo < p < hi:
                continue
            s_lo = float(f.value_left(np.asarray(p)))
            s_hi = float(f.value(np.asarray(p)))
            s_lo, s_hi = min(s_lo, s_hi), max(s_lo, s_hi)
            mid, half = (s_lo + s_hi) / 2.0, (s_hi - s_lo) / 2.0
            s = mid + half * nodes
            sign = up if h > 0 else -up
            term = float(np.sum(phi(np.full_like(s, p), s, np.full_like(s, sign)) * weights) * half)
            if h > 0:
                jplus += term
            else:
                jminus += term
    return VarifoldRHS(ac_term=ac, diffuse_plus=dplus, diffuse_minus=dminus,
                       jump_plus=jplus, jump_minus=jminus)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def forcing_scaling_limit(f: Forcing, beta: float) -> float:
    """``beta^(1/3) * int_0^1 |f'|^(2/3)``; 0 for step forcings (out of hypothesis)."""
    if isinstance(f, Step):
        return 0.0
    if isinstance(f, Affine):
        integral = abs(f.slope) ** (2.0 / 3.0)
    else:
        integral = _panel_integral(
            lambda x: np.abs(f.derivative(x)) ** (2.0 / 3.0), 0.0, 1.0, panels=512)
    return beta ** (1.0 / 3.0) * integral


def scaling_experiment(f: Forcing, beta: float, n_list,
                       opts: SolveOptions | None = None,
                       reports: dict | None = None):
    """Minimize per n and report the energy ratio against the predicted limit."""
    limit = forcing_scaling_limit(f, beta)
    rows = []
    for n in sorted(n_list):
        report = (reports or {}).get(n) or minimize_dpmf(f, beta, n, opts)
        omega = scales(n).omega
        m_n = report.energy.total
        rows.append(ScalingRow(n=n, omega=omega, m_n=m_n,
                               ratio=m_n / omega**2, limit_value=limit))
    return rows


def blowup_experiment(f: Forcing, beta: float, n: int, center: float,
                      variant: str = "w", opts: SolveOptions | None = None,
                      report: SolveReport | None = None,
                      jump_threshold: float | None = None) -> BlowupResult:
    """Blow up a minimizer at ``center`` and fit the staircase microstructure.

    ``variant='w'`` anchors at the forcing value, ``'v'`` at the minimizer's
    own value.  The predicted (H, V) comes from the derivative of the forcing
    at the center; it is None when that derivative vanishes.
    """
    if variant not in ("w", "v"):
        raise ValueError("variant must be 'w' or 'v'")
    k = round(center * n)
    if abs(center * n - k) > 1e-9 or not 0 <= k <= n - 1:
        raise ValueError(f"center {center!r} is not a lattice point k/n with 0 <= k < n")
    if report is None:
        report = minimize_dpmf(f, beta, n, opts)
    u = report.minimizer
    sp = scales(n)
    shift = float(f.value(center)) if variant == "w" else u.value_at_node(u.grid.index_of_node(center))
    w = blow_up(u, center, sp.omega, shift)
    H, V = hv_params(beta, float(f.derivative(center)), 4.0 / 3.0)
    predicted = None if H is None else (H, V)
    if jump_threshold is None:
        if predicted is not None:
            jump_threshold = sp.omega * abs(V) / 2.0
        else:
            jump_threshold = 1.0 / math.log(n) ** 4
    try:
        fit = fit_staircase(w, jump_threshold)
    except ValueError:
        fit = None
    return BlowupResult(w=w, fit=fit, predicted=predicted)
