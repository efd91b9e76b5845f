"""Forcing terms, step functions, and the discrete / rescaled / limit energies.

Three forcing kinds are supported.  Affine and step forcings integrate
exactly (closed-form cell moments); smooth forcings use Gauss-Legendre
quadrature of a configurable order per cell.  The three energies are

* the discrete energy on the 1/n grid: log-roughness plus weighted L2 misfit,
* its rescaled version living on the microscopic grid of width delta(n),
* the limit jump-counting energy on step functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import PCFn, scales

_DOMAIN_SLACK = 1e-12


def gauss_legendre(order: int):
    """Nodes and weights on [-1, 1]; cached per order."""
    nodes, weights = _GL_CACHE.get(order, (None, None))
    if nodes is None:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (nodes, weights)
    return nodes, weights


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


# ---------------------------------------------------------------------------
# Step functions (finitely many jumps)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepFn:
    """Right-continuous step function: ``base`` plus jumps at sorted positions.

    ``value(x) = base + sum of heights at positions <= x``.
    """

    base: float
    jumps: tuple = ()
    domain: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        jumps = tuple((float(p), float(h)) for p, h in self.jumps)
        lo, hi = self.domain
        pos = [p for p, _ in jumps]
        if any(p2 <= p1 for p1, p2 in zip(pos, pos[1:])):
            raise ValueError("jump positions must be strictly increasing")
        if any(h == 0.0 for _, h in jumps):
            raise ValueError("jump heights must be nonzero")
        if any(not (lo < p < hi) for p in pos):
            raise ValueError("jump positions must lie strictly inside the domain")
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "domain", (float(lo), float(hi)))

    def positions(self) -> np.ndarray:
        return np.array([p for p, _ in self.jumps], dtype=float)

    def heights(self) -> np.ndarray:
        return np.array([h for _, h in self.jumps], dtype=float)

    def piece_values(self) -> np.ndarray:
        """Constant value on each of the ``len(jumps)+1`` pieces."""
        return self.base + np.concatenate(([0.0], np.cumsum(self.heights())))

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.positions(), x, side="right")
        return self.piece_values()[idx]

    def value_left(self, x) -> np.ndarray:
        """Left limit ``u(x-)``."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.positions(), x, side="left")
        return self.piece_values()[idx]

    def jumps_inside(self, lo: float, hi: float) -> list:
        return [(p, h) for p, h in self.jumps if lo < p < hi]


# ---------------------------------------------------------------------------
# Forcing terms
# ---------------------------------------------------------------------------

class Forcing:
    """Interface shared by the three forcing kinds."""

    domain: tuple

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x) -> np.ndarray:
        """Pointwise a.e. derivative (0 at jump points of a step forcing)."""
        raise NotImplementedError

    def jumps(self) -> tuple:
        return ()

    def cell_moments(self, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(m0, m1)`` per interval between consecutive ``edges``."""
        raise NotImplementedError

    def moments(self, lo: float, hi: float) -> tuple[float, float]:
        m0, m1 = self.cell_moments(np.array([lo, hi], dtype=float))
        return float(m0[0]), float(m1[0])

    def tv(self, lo: float, hi: float) -> float:
        """Total variation on ``(lo, hi)``."""
        raise NotImplementedError

    def range_bounds(self, lo: float, hi: float) -> tuple[float, float]:
        """(min, max) of the forcing over ``[lo, hi]`` (approximate for Smooth)."""
        raise NotImplementedError

    def check_domain(self, lo: float, hi: float) -> None:
        dlo, dhi = self.domain
        slack = _DOMAIN_SLACK * max(1.0, abs(lo), abs(hi))
        if lo < dlo - slack or hi > dhi + slack:
            raise ValueError(f"interval ({lo}, {hi}) not contained in forcing domain {self.domain}")


@dataclass(frozen=True)
class Affine(Forcing):
    """``f(x) = slope*x + offset``."""

    slope: float
    offset: float = 0.0
    domain: tuple = (-math.inf, math.inf)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.slope * x + self.offset

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, self.slope)

    def cell_moments(self, edges):
        e = np.asarray(edges, dtype=float)
        M, c = self.slope, self.offset
        p, q = e[:-1], e[1:]
        m0 = M * (q**2 - p**2) / 2.0 + c * (q - p)
        m1 = M**2 * (q**3 - p**3) / 3.0 + M * c * (q**2 - p**2) + c**2 * (q - p)
        return m0, m1

    def tv(self, lo, hi):
        return abs(self.slope) * (hi - lo)

    def range_bounds(self, lo, hi):
        v = [self.slope * lo + self.offset, self.slope * hi + self.offset]
        return min(v), max(v)


@dataclass(frozen=True)
class Step(Forcing):
    """Step forcing: value ``base`` before the first jump, then cumulative heights."""

    base: float
    step_jumps: tuple = ()
    domain: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        # Validation and value bookkeeping are delegated to a StepFn.
        object.__setattr__(self, "_fn", StepFn(self.base, tuple(self.step_jumps), self.domain))
        object.__setattr__(self, "step_jumps", self._fn.jumps)

    def value(self, x):
        return self._fn.value(x)

    def value_left(self, x):
        return self._fn.value_left(x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)

    def jumps(self):
        return self._fn.jumps

    def as_stepfn(self) -> StepFn:
        return self._fn

    def cell_moments(self, edges):
        e = np.asarray(edges, dtype=float)
        vals = self._fn.piece_values()
        m0 = _step_cumulative(e, self.positions(), vals)
        m1 = _step_cumulative(e, self.positions(), vals**2)
        return np.diff(m0), np.diff(m1)

    def positions(self):
        return self._fn.positions()

    def tv(self, lo, hi):
        return float(sum(abs(h) for p, h in self._fn.jumps if lo < p < hi))

    def range_bounds(self, lo, hi):
        xs = [lo] + [p for p, _ in self._fn.jumps if lo < p < hi] + [hi]
        vals = self._fn.value(np.asarray(xs))
        return float(np.min(vals)), float(np.max(vals))


def _step_cumulative(x: np.ndarray, positions: np.ndarray, piece_values: np.ndarray) -> np.ndarray:
    """Antiderivative of the step function with given pieces, zero at x[0]."""
    r = x[0]
    out = piece_values[0] * (x - r)
    for p, (v_prev, v_next) in zip(positions, zip(piece_values[:-1], piece_values[1:])):
        out += (v_next - v_prev) * np.clip(x - max(p, r), 0.0, None)
    return out


@dataclass(frozen=True)
class Smooth(Forcing):
    """Smooth forcing given by value and derivative callables.

    Both callables must accept numpy arrays.  Cell moments use Gauss-Legendre
    quadrature of ``order`` nodes per cell.
    """

    fn: object
    dfn: object
    order: int = 4
    name: str = ""
    domain: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("quadrature order must be >= 2")

    def value(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def derivative(self, x):
        return np.asarray(self.dfn(np.asarray(x, dtype=float)), dtype=float)

    def cell_moments(self, edges):
        e = np.asarray(edges, dtype=float)
        nodes, weights = gauss_legendre(self.order)
        mid = (e[:-1] + e[1:])[:, None] / 2.0
        half = (np.diff(e))[:, None] / 2.0
        fx = self.value(mid + half * nodes[None, :])
        m0 = (fx @ weights) * half[:, 0]
        m1 = ((fx**2) @ weights) * half[:, 0]
        return m0, m1

    def tv(self, lo, hi, panels: int = 256):
        nodes, weights = gauss_legendre(8)
        edges = np.linspace(lo, hi, panels + 1)
        mid = (edges[:-1] + edges[1:])[:, None] / 2.0
        half = np.diff(edges)[:, None] / 2.0
        fp = np.abs(self.derivative(mid + half * nodes[None, :]))
        return float(np.sum((fp @ weights) * half[:, 0]))

    def range_bounds(self, lo, hi, samples: int = 4097):
        vals = self.value(np.linspace(lo, hi, samples))
        return float(np.min(vals)), float(np.max(vals))


#: Named smooth forcings available from the CLI.
SMOOTH_BUILTINS = {
    "sin": lambda domain: Smooth(
        fn=lambda x: np.sin(2.0 * np.pi * x),
        dfn=lambda x: 2.0 * np.pi * np.cos(2.0 * np.pi * x),
        name="sin",
        domain=domain,
    ),
    "poly3": lambda domain: Smooth(
        fn=lambda x: x**3,
        dfn=lambda x: 3.0 * x**2,
        name="poly3",
        domain=domain,
    ),
}


# ---------------------------------------------------------------------------
# Energies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyParts:
    roughness: float
    fidelity: float
    total: float = field(default=math.nan)

    def __post_init__(self):
        if math.isnan(self.total):
            object.__setattr__(self, "total", self.roughness + self.fidelity)


def fidelity_moments(f: Forcing, cell: tuple) -> tuple[float, float]:
    """``(int_cell f, int_cell f^2)``, exact for affine and step forcings."""
    lo, hi = cell
    if not lo < hi:
        raise ValueError(f"cell must be a nonempty interval, got {cell!r}")
    f.check_domain(lo, hi)
    return f.moments(lo, hi)


def _clipped_cell_misfit(u: PCFn, f: Forcing, lo: float, hi: float) -> float:
    """``int_lo^hi (u - f)^2`` with cells clipped at the interval endpoints."""
    g = u.grid
    edges = np.clip(g.nodes(), lo, hi)
    widths = np.diff(edges)
    m0, m1 = f.cell_moments(edges)
    live = widths > 0
    v = u.values[live]
    per_cell = v * v * widths[live] - 2.0 * v * m0[live] + m1[live]
    return float(np.sum(np.maximum(per_cell, 0.0)))


def roughness_log_sum(values: np.ndarray, delta: float, weight: float) -> float:
    """``weight * sum log(1 + (increment/delta)^2)`` over interior cell boundaries."""
    if values.size < 2:
        return 0.0
    d = np.diff(values) / delta
    return float(weight * np.sum(np.log1p(d * d)))


def dpmf_energy(u: PCFn, f: Forcing, beta: float, n: int) -> EnergyParts:
    """Discrete energy on the 1/n grid.

    Roughness integrates ``log(1 + (difference quotient)^2)`` up to the
    second-to-last node (the last cell carries no difference term); the misfit
    integrates over the requested interval of the grid.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    g = u.grid
    if abs(g.delta * n - 1.0) > 1e-12:
        raise ValueError(f"grid width {g.delta!r} does not match 1/n for n={n}")
    f.check_domain(g.a, g.b)
    rough = roughness_log_sum(u.values, g.delta, weight=g.delta)
    fid = beta * _clipped_cell_misfit(u, f, g.a, g.b)
    return EnergyParts(rough, fid)


def rdpmf_energy(u: PCFn, f: Forcing, beta: float, n: int, interval: tuple) -> EnergyParts:
    """Rescaled energy on the delta(n) grid over ``interval``.

    ``beta = 0`` evaluates the principal (log-roughness) part alone.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    sp = scales(n)
    g = u.grid
    if abs(g.delta / sp.delta_n - 1.0) > 1e-12:
        raise ValueError(f"grid width {g.delta!r} does not match delta(n) for n={n}")
    lo, hi = interval
    rough = roughness_log_sum(u.values, g.delta, weight=g.delta / sp.omega**2)
    fid = 0.0
    if beta > 0:
        f.check_domain(lo, hi)
        fid = beta * _clipped_cell_misfit(u, f, max(lo, g.a_star), min(hi, g.b_star))
    return EnergyParts(rough, fid)


def jf_energy(u: StepFn, f: Forcing, alpha: float, beta: float, interval: tuple) -> EnergyParts:
    """Limit energy: ``alpha * (#jumps strictly inside) + beta * L2 misfit``.

    The misfit integral splits at the jumps of both ``u`` and ``f`` so each
    piece integrates a constant against a smooth/affine stretch.
    """
    lo, hi = interval
    if not lo < hi:
        raise ValueError("interval must be nonempty")
    ulo, uhi = u.domain
    if lo < ulo - _DOMAIN_SLACK or hi > uhi + _DOMAIN_SLACK:
        raise ValueError(f"interval ({lo}, {hi}) not contained in step-function domain {u.domain}")
    f.check_domain(lo, hi)
    u_jumps = [p for p, _ in u.jumps_inside(lo, hi)]
    rough = alpha * len(u_jumps)
    cuts = np.unique(np.concatenate((
        [lo, hi], u_jumps, [p for p, _ in f.jumps() if lo < p < hi])))
    m0, m1 = f.cell_moments(cuts)
    mids = (cuts[:-1] + cuts[1:]) / 2.0
    c = u.value(mids)
    widths = np.diff(cuts)
    fid = beta * float(np.sum(np.maximum(c * c * widths - 2.0 * c * m0 + m1, 0.0)))
    return EnergyParts(rough, fid)
