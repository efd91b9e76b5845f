"""Minimization of the discrete energy, the limit problem, and the mu values.

The discrete pipeline is: analytic staircase competitors -> dynamic
programming over value labels (coarse pass plus recentered refinements) ->
coordinate-descent polish.  Every stage keeps the best function found so far,
so the recorded stage energies never increase.  The reported minimum is an
upper bound for the true minimum; at desk scale it is certified exact only
over label lattices (see :func:`brute_force_min`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainSpec, descent_sweeps, dp_labels, labels_for_cells, recentered_labels
from .energy import Affine, EnergyParts, Forcing, StepFn, dpmf_energy, rdpmf_energy
from .grid import Grid, PCFn, make_grid, scales
from .staircase import hv_params

#: Gamma-limit constant: cost of one jump in the rescaled energy.
ALPHA_LIMIT = 4.0 / 3.0

#: Assignment cap for exhaustive enumeration.
BRUTE_FORCE_BUDGET = 10**7

#: Coarse label cap for large chains.
COARSE_LABEL_BUDGET = 128


class BudgetExceededError(RuntimeError):
    """A solver was asked for more work than its configured budget allows."""


@dataclass(frozen=True)
class LabelSet:
    """Uniform value labels in [lo, hi] plus refinement controls."""

    lo: float
    hi: float
    count: int
    refinement_levels: int = 0
    window: int = 8

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")
        if self.count < 2:
            raise ValueError("need at least two labels")
        if self.refinement_levels < 0 or self.window < 1:
            raise ValueError("refinement_levels must be >= 0 and window >= 1")

    def array(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class SolveOptions:
    L_list: tuple = (2.0, 5.0, 10.0)
    label_count: int = 64
    refinement_levels: int = 3
    window: int = 8
    shrink: float = 4.0
    max_sweeps: int = 50


@dataclass(frozen=True)
class SolveReport:
    minimizer: PCFn
    energy: EnergyParts
    pipeline_trace: tuple
    iterations: int
    converged: bool


@dataclass(frozen=True)
class MuResult:
    value: float
    minimizer: object
    m_jumps: int


# ---------------------------------------------------------------------------
# Chain construction
# ---------------------------------------------------------------------------

def _chain_for_grid(grid: Grid, f: Forcing, beta: float, pair_weight: float,
                    interval: tuple, pins: tuple = (None, None)) -> ChainSpec:
    lo, hi = interval
    edges = np.clip(grid.nodes(), lo, hi)
    widths = np.diff(edges)
    m0, m1 = f.cell_moments(edges)
    return ChainSpec(delta=grid.delta, pair_weight=pair_weight, beta=beta,
                     m0=m0, m1=m1, widths=widths,
                     pin_first=pins[0], pin_last=pins[1])


def _dpmf_chain(f: Forcing, beta: float, n: int, grid: Grid) -> ChainSpec:
    f.check_domain(grid.a, grid.b)
    return _chain_for_grid(grid, f, beta, pair_weight=grid.delta,
                           interval=(grid.a, grid.b))


# ---------------------------------------------------------------------------
# Staircase competitor
# ---------------------------------------------------------------------------

def init_competitor(f: Forcing, beta: float, n: int, L: float) -> PCFn:
    """Blockwise staircase competitor on the 1/n grid over (0, 1).

    The unit interval splits into blocks of rescaled length ``L_n`` (the
    smallest lattice multiple above ``L``); each block carries the optimal
    equally-spaced staircase for the block's mean slope, pinned to the
    forcing at the block boundaries.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if L <= 0:
        raise ValueError("L must be positive")
    f.check_domain(0.0, 1.0)
    sp = scales(n)
    cells_per_block = math.ceil(L / sp.delta_n)
    L_n = sp.delta_n * cells_per_block
    if L_n * sp.omega < 2.0 / n:
        raise ValueError("degenerate partition: block shorter than two cells")
    nblocks = math.ceil(n / cells_per_block)
    grid = make_grid(0.0, 1.0, 1.0 / n)
    dlo, dhi = f.domain
    values = np.empty(n)
    for k in range(nblocks):
        c0 = k * cells_per_block
        c1 = min((k + 1) * cells_per_block, n)
        if c0 >= n:
            break
        x0 = c0 / n
        x1 = (k + 1) * cells_per_block / n
        f0 = float(f.value(min(max(x0, dlo), dhi)))
        f1 = float(f.value(min(max(x1, dlo), dhi)))
        slope = (f1 - f0) / (L_n * sp.omega)
        m = mu_star_formula(ALPHA_LIMIT, beta, L_n, slope).m_jumps
        i = np.arange(c1 - c0)
        if m == 0:
            values[c0:c1] = f0
        else:
            # plateau index at the cell midpoint of the rescaled block
            j = np.clip(np.floor((i + 0.5) * m / cells_per_block + 0.5), 0, m)
            values[c0:c1] = f0 + sp.omega * slope * L_n * j / m
    return PCFn(grid, values)


# ---------------------------------------------------------------------------
# Label DP and polish
# ---------------------------------------------------------------------------

def _dp_stages(spec: ChainSpec, labels: LabelSet, incumbent: np.ndarray | None):
    """Coarse pass plus recentered refinements; returns (best, stage list)."""
    stages = []
    best = incumbent
    best_e = spec.energy(best) if best is not None else math.inf

    coarse = dp_labels(spec, labels_for_cells(spec, labels.array()))
    e = spec.energy(coarse)
    if e < best_e:
        best, best_e = coarse, e
    stages.append(("dp_coarse", best_e))

    span0 = (labels.hi - labels.lo) / 2.0
    for lvl in range(1, labels.refinement_levels + 1):
        span = span0 / 4.0**lvl
        cell_labels = recentered_labels(spec, best, span, labels.count)
        refined = dp_labels(spec, cell_labels, window=labels.window)
        e = spec.energy(refined)
        if e < best_e:
            best, best_e = refined, e
        stages.append((f"dp_refine_{lvl}", best_e))
    return best, stages


def _check_label_budget(n: int, count: int) -> None:
    if n >= 10**4 and count > COARSE_LABEL_BUDGET:
        raise BudgetExceededError(
            f"coarse label count {count} exceeds {COARSE_LABEL_BUDGET} for n={n}")


def solve_chain_dp(f: Forcing, beta: float, n: int, labels: LabelSet) -> PCFn:
    """Exact minimizer of the discrete energy over the label lattice.

    The coarse pass allows unrestricted value transitions; refinement passes
    recenter the labels per cell around the incumbent and restrict
    transitions to a band of label indices.
    """
    _check_label_budget(n, labels.count)
    grid = make_grid(0.0, 1.0, 1.0 / n)
    spec = _dpmf_chain(f, beta, n, grid)
    best, _ = _dp_stages(spec, labels, incumbent=None)
    return PCFn(grid, best)


def polish_coordinate_descent(u: PCFn, f: Forcing, beta: float, n: int,
                              max_sweeps: int = 50) -> PCFn:
    """Cellwise descent on the discrete energy; never returns a worse function."""
    grid = u.grid
    if abs(grid.delta * n - 1.0) > 1e-12:
        raise ValueError(f"grid width {grid.delta!r} does not match 1/n for n={n}")
    spec = _dpmf_chain(f, beta, n, grid)
    values, _, _ = descent_sweeps(spec, u.values, max_sweeps)
    return PCFn(grid, values)


def minimize_dpmf(f: Forcing, beta: float, n: int,
                  opts: SolveOptions | None = None) -> SolveReport:
    """Full pipeline for the discrete minimum problem on (0, 1)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    opts = opts or SolveOptions()
    grid = make_grid(0.0, 1.0, 1.0 / n)
    spec = _dpmf_chain(f, beta, n, grid)

    mean_f = float(np.sum(spec.m0)) / float(np.sum(spec.widths))
    candidates = [np.full(grid.ncells, mean_f)]
    for L in opts.L_list:
        try:
            candidates.append(init_competitor(f, beta, n, L).values)
        except ValueError:
            continue  # block degenerate at this (n, L)
    best = min(candidates, key=spec.energy)
    best_e = spec.energy(best)
    trace = [("init", best_e)]

    _check_label_budget(n, opts.label_count)
    fmin, fmax = f.range_bounds(grid.a, grid.b)
    span = 3.0 * max(scales(n).omega, fmax - fmin)
    labels = LabelSet(lo=fmin - span, hi=fmax + span, count=opts.label_count,
                      refinement_levels=opts.refinement_levels,
                      window=opts.window)
    best, stages = _dp_stages(spec, labels, incumbent=best)
    trace.extend(stages)

    values, sweeps, converged = descent_sweeps(spec, best, opts.max_sweeps)
    if spec.energy(values) <= spec.energy(best):
        best = values
    trace.append(("polish", spec.energy(best)))

    minimizer = PCFn(grid, best)
    return SolveReport(minimizer=minimizer,
                       energy=dpmf_energy(minimizer, f, beta, n),
                       pipeline_trace=tuple(trace),
                       iterations=sweeps,
                       converged=converged)


def brute_force_min(f: Forcing, beta: float, n: int, labels) -> tuple[PCFn, float]:
    """Exhaustive oracle: scan every label assignment, lexicographic ties."""
    labels = np.sort(np.asarray(labels, dtype=float))
    grid = make_grid(0.0, 1.0, 1.0 / n)
    nc = grid.ncells
    total = len(labels) ** nc
    if total > BRUTE_FORCE_BUDGET:
        raise BudgetExceededError(f"{total} assignments exceed budget {BRUTE_FORCE_BUDGET}")
    spec = _dpmf_chain(f, beta, n, grid)
    best_e = math.inf
    best_vals = None
    chunk = 1 << 15
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total))
        digits = np.array(np.unravel_index(ids, (len(labels),) * nc)).T
        V = labels[digits]
        d = np.diff(V, axis=1) / grid.delta
        rough = spec.pair_weight * np.sum(np.log1p(d * d), axis=1)
        mis = V * V * spec.widths - 2.0 * V * spec.m0 + spec.m1
        E = rough + beta * np.sum(np.maximum(mis, 0.0), axis=1)
        i = int(np.argmin(E))
        if E[i] < best_e:
            best_e = float(E[i])
            best_vals = V[i].copy()
    u = PCFn(grid, best_vals)
    return u, dpmf_energy(u, f, beta, n).total


# ---------------------------------------------------------------------------
# Limit (jump-penalized) problem
# ---------------------------------------------------------------------------

def potts_exact(f: Forcing, alpha: float, beta: float, interval: tuple,
                resolution: int, bc: tuple | None = None) -> MuResult:
    """Exact minimizer over step functions with jumps on a uniform lattice.

    Dynamic programming over segment endpoints; per-segment constants are the
    segment means of the forcing (prefix-sum moments), overridden by the
    boundary values on the first/last segment when ``bc`` is given.
    """
    a, b = interval
    R = int(resolution)
    if R < 2:
        raise ValueError("resolution must be >= 2")
    f.check_domain(a, b)
    x = np.linspace(a, b, R + 1)
    m0c, m1c = f.cell_moments(x)
    P0 = np.concatenate(([0.0], np.cumsum(m0c)))
    P1 = np.concatenate(([0.0], np.cumsum(m1c)))
    left_pin = right_pin = None
    if bc is not None:
        left_pin, right_pin = float(bc[0]), float(bc[1])

    E = np.full(R + 1, np.inf)
    E[0] = 0.0
    pred = np.full(R + 1, -1, dtype=int)
    for j in range(1, R + 1):
        i = np.arange(j)
        dp0 = P0[j] - P0[i]
        dp1 = P1[j] - P1[i]
        length = x[j] - x[i]
        seg = dp1 - dp0 * dp0 / length
        if right_pin is not None and j == R:
            seg = right_pin**2 * length - 2.0 * right_pin * dp0 + dp1
        if left_pin is not None:
            if right_pin is not None and j == R:
                if abs(left_pin - right_pin) <= 1e-12 * max(1.0, abs(left_pin)):
                    seg[0] = left_pin**2 * length[0] - 2.0 * left_pin * dp0[0] + dp1[0]
                else:
                    seg[0] = np.inf
            else:
                seg[0] = left_pin**2 * length[0] - 2.0 * left_pin * dp0[0] + dp1[0]
        seg = np.where(np.isfinite(seg), np.maximum(seg, 0.0), seg)
        cand = E[i] + np.where(i > 0, alpha, 0.0) + beta * seg
        k = int(np.argmin(cand))
        E[j] = cand[k]
        pred[j] = k

    nodes = [R]
    while nodes[-1] != 0:
        nodes.append(int(pred[nodes[-1]]))
    nodes.reverse()
    consts = []
    for i, j in zip(nodes[:-1], nodes[1:]):
        if left_pin is not None and i == 0:
            if right_pin is not None and j == R:
                consts.append(left_pin)
            else:
                consts.append(left_pin)
        elif right_pin is not None and j == R:
            consts.append(right_pin)
        else:
            consts.append((P0[j] - P0[i]) / (x[j] - x[i]))
    jumps = []
    for node, (c_prev, c_next) in zip(nodes[1:-1], zip(consts[:-1], consts[1:])):
        if c_next != c_prev:
            jumps.append((float(x[node]), float(c_next - c_prev)))
    minimizer = StepFn(base=float(consts[0]), jumps=tuple(jumps), domain=(a, b))
    return MuResult(value=float(E[R]), minimizer=minimizer, m_jumps=len(jumps))


def mu_star_formula(alpha: float, beta: float, L: float, M: float) -> MuResult:
    """Closed-form boundary-value minimum on (0, L) with affine datum of slope M.

    For ``M != 0`` the minimum over equally-spaced staircases with m jumps is
    ``m*alpha + beta*M^2*L^3/(12 m^2)``; the integer scan resolves ties to the
    smaller jump count.  ``M = 0`` degenerates to the zero function.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    if M == 0:
        return MuResult(0.0, StepFn(0.0, (), (0.0, L)), 0)
    m_cont = (beta * M * M * L**3 / (6.0 * alpha)) ** (1.0 / 3.0)
    best_m, best_v = 1, math.inf
    for m in range(1, max(3, math.ceil(m_cont) + 2) + 1):
        v = m * alpha + beta * M * M * L**3 / (12.0 * m * m)
        if v < best_v:
            best_m, best_v = m, v
    m = best_m
    jumps = tuple(((j - 0.5) * L / m, M * L / m) for j in range(1, m + 1))
    return MuResult(best_v, StepFn(0.0, jumps, (0.0, L)), m)


def mu_bounds(alpha: float, beta: float, L: float, M: float) -> tuple[float, float]:
    """Lower/upper bounds for the minimum values on (0, L) with slope-M datum."""
    lead = 0.5 * (9.0 * alpha**2 * beta * M * M / 2.0) ** (1.0 / 3.0) * L
    return lead - 2.0 * 6.0 ** (2.0 / 3.0) * alpha, lead + 1.5 * alpha


def mu_numeric(alpha: float, beta: float, L: float, M: float,
               bc: bool, resolution: int) -> MuResult:
    """Lattice minimum of the limit energy on (0, L) with affine datum."""
    if resolution < 4:
        raise ValueError("resolution must be >= 4")
    pins = (0.0, M * L) if bc else None
    return potts_exact(Affine(M, 0.0), alpha, beta, (0.0, L), resolution, bc=pins)


def mu_n_numeric(beta: float, L: float, M: float, n: int, bc: bool,
                 opts: SolveOptions | None = None) -> MuResult:
    """Minimize the rescaled energy on (0, L) over the delta(n) grid.

    Runs the same pipeline as the discrete solver, transplanted to the
    microscopic grid; with ``bc`` the first and last cells are pinned to the
    datum's boundary values.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    opts = opts or SolveOptions()
    sp = scales(n)
    if bc and L <= sp.delta_n:
        raise ValueError("boundary conditions need L > delta(n)")
    grid = make_grid(0.0, L, sp.delta_n)
    f = Affine(M, 0.0)
    pins = (0.0, M * L) if bc else (None, None)
    spec = _chain_for_grid(grid, f, beta, pair_weight=sp.delta_n / sp.omega**2,
                           interval=(0.0, L), pins=pins)

    stair = mu_star_formula(ALPHA_LIMIT, beta, L, M).minimizer
    candidates = [
        np.full(grid.ncells, 0.0),
        np.full(grid.ncells, M * L / 2.0),
        np.asarray(stair.value(grid.cell_midpoints()), dtype=float),
    ]
    candidates = [spec.apply_pins(v) for v in candidates]
    best = min(candidates, key=spec.energy)

    _check_label_budget(n, opts.label_count)
    lo = min(0.0, M * L)
    hi = max(0.0, M * L)
    span = 3.0 * max(sp.omega, hi - lo)
    labels = LabelSet(lo=lo - span, hi=hi + span, count=opts.label_count,
                      refinement_levels=opts.refinement_levels,
                      window=opts.window)
    best, _ = _dp_stages(spec, labels, incumbent=best)
    values, _, _ = descent_sweeps(spec, best, opts.max_sweeps)

    u = PCFn(grid, values)
    value = rdpmf_energy(u, f, beta, n, (0.0, L)).total
    if M == 0:
        threshold = math.inf
    else:
        _, V = hv_params(beta, M, ALPHA_LIMIT)
        threshold = abs(V)
    m_jumps = int(np.sum(np.abs(np.diff(values)) > threshold))
    return MuResult(value=value, minimizer=u, m_jumps=m_jumps)
