"""Shared engine for chain energies: label-set dynamic programming and descent.

A chain instance is a sequence of cells with a quadratic per-cell misfit
(encoded by the moments ``m0``, ``m1`` and the integration width of each
cell) plus a pairwise cost ``pair_weight * log(1 + (increment/delta)^2)``
between neighbouring cells.  Both the discrete energy (pair weight = cell
width) and the rescaled energy (pair weight = cell width / omega^2) reduce
to this form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChainSpec:
    delta: float
    pair_weight: float
    beta: float
    m0: np.ndarray
    m1: np.ndarray
    widths: np.ndarray
    pin_first: float | None = None
    pin_last: float | None = None

    @property
    def ncells(self) -> int:
        return len(self.m0)

    def energy(self, values: np.ndarray) -> float:
        d = np.diff(values) / self.delta
        rough = self.pair_weight * float(np.sum(np.log1p(d * d)))
        mis = values * values * self.widths - 2.0 * values * self.m0 + self.m1
        return rough + self.beta * float(np.sum(np.maximum(mis, 0.0)))

    def unary(self, z: int, labels: np.ndarray) -> np.ndarray:
        mis = labels * labels * self.widths[z] - 2.0 * labels * self.m0[z] + self.m1[z]
        return self.beta * np.maximum(mis, 0.0)

    def apply_pins(self, values: np.ndarray) -> np.ndarray:
        v = np.array(values, dtype=float)
        if self.pin_first is not None:
            v[0] = self.pin_first
        if self.pin_last is not None:
            v[-1] = self.pin_last
        return v


def _pair_matrix(spec: ChainSpec, prev_labels: np.ndarray, cur_labels: np.ndarray) -> np.ndarray:
    d = (cur_labels[None, :] - prev_labels[:, None]) / spec.delta
    return spec.pair_weight * np.log1p(d * d)


def dp_labels(spec: ChainSpec, cell_labels, window: int | None = None) -> np.ndarray:
    """Exact minimizer of the chain energy over per-cell label sets.

    ``cell_labels`` maps each cell to an ascending label array; passing the
    same array object for several cells enables a cached transition matrix.
    With ``window`` set, transitions are restricted to label-index distance
    at most ``window`` whenever both cells carry label sets of equal size
    (pinned single-label cells always connect freely).  Ties resolve to the
    smallest label value.
    """
    n = spec.ncells
    if n < 1:
        raise ValueError("empty chain")
    D = spec.unary(0, cell_labels[0]).copy()
    backptr = []
    cached_key = None
    cached_mat = None
    for z in range(1, n):
        prev, cur = cell_labels[z - 1], cell_labels[z]
        banded = window is not None and len(prev) == len(cur) and len(prev) > 1
        if banded:
            K = len(cur)
            j = np.arange(K)[:, None]
            i = j + np.arange(-window, window + 1)[None, :]
            valid = (i >= 0) & (i < K)
            ic = np.clip(i, 0, K - 1)
            step = (cur[:, None] - prev[ic]) / spec.delta
            cand = D[ic] + spec.pair_weight * np.log1p(step * step)
            cand[~valid] = np.inf
            k = np.argmin(cand, axis=1)
            rows = np.arange(K)
            bp = ic[rows, k]
            D = cand[rows, k] + spec.unary(z, cur)
        else:
            if prev is cur:
                if cached_key is not prev:
                    cached_key = prev
                    cached_mat = _pair_matrix(spec, prev, prev)
                mat = cached_mat
            else:
                mat = _pair_matrix(spec, prev, cur)
            tot = D[:, None] + mat
            bp = np.argmin(tot, axis=0)
            D = tot[bp, np.arange(len(cur))] + spec.unary(z, cur)
        backptr.append(bp.astype(np.int32))

    values = np.empty(n, dtype=float)
    j = int(np.argmin(D))
    for z in range(n - 1, 0, -1):
        values[z] = cell_labels[z][j]
        j = int(backptr[z - 1][j])
    values[0] = cell_labels[0][j]
    return values


def labels_for_cells(spec: ChainSpec, shared: np.ndarray):
    """Per-cell view of a shared label array, honouring pinned endpoints."""
    out = [shared] * spec.ncells
    if spec.pin_first is not None:
        out[0] = np.array([spec.pin_first])
    if spec.pin_last is not None:
        out[-1] = np.array([spec.pin_last])
    return out


def recentered_labels(spec: ChainSpec, incumbent: np.ndarray, span: float, count: int):
    """Label sets centered on the incumbent value of each cell.

    The offset grid always contains 0 so the incumbent itself stays
    representable, which keeps refinement passes monotone.
    """
    if count % 2 == 0:
        count += 1
    offsets = np.linspace(-span, span, count)
    out = [incumbent[z] + offsets for z in range(spec.ncells)]
    if spec.pin_first is not None:
        out[0] = np.array([spec.pin_first])
    if spec.pin_last is not None:
        out[-1] = np.array([spec.pin_last])
    return out


# ---------------------------------------------------------------------------
# Coordinate descent
# ---------------------------------------------------------------------------

def _local_objective(spec, t, left, right, wl, wr, m0, widths):
    dl = (t - left) / spec.delta
    dr = (right - t) / spec.delta
    rough = wl * np.log1p(dl * dl) + wr * np.log1p(dr * dr)
    return spec.pair_weight * rough + spec.beta * (t * t * widths - 2.0 * t * m0)


def _local_derivs(spec, t, left, right, wl, wr, m0, widths):
    d2 = spec.delta * spec.delta
    al = d2 + (t - left) ** 2
    ar = d2 + (right - t) ** 2
    g = spec.pair_weight * (wl * 2.0 * (t - left) / al - wr * 2.0 * (right - t) / ar)
    g += spec.beta * (2.0 * t * widths - 2.0 * m0)
    h = spec.pair_weight * (wl * 2.0 * (d2 - (t - left) ** 2) / al**2
                            + wr * 2.0 * (d2 - (right - t) ** 2) / ar**2)
    h += 2.0 * spec.beta * widths
    return g, h


def _refine_newton(spec, t0, left, right, wl, wr, m0, widths,
                   max_iter: int = 30, tol: float = 1e-12):
    """Damped Newton from t0 on the scalar cell objective, vectorized."""
    t = t0.copy()
    ft = _local_objective(spec, t, left, right, wl, wr, m0, widths)
    scale = np.maximum(1.0, np.abs(t))
    floor_h = max(2.0 * spec.beta * float(np.min(widths)) if len(widths) else 0.0, 1e-300)
    for _ in range(max_iter):
        g, h = _local_derivs(spec, t, left, right, wl, wr, m0, widths)
        step = g / np.maximum(h, floor_h)
        for _ in range(15):
            tn = t - step
            fn = _local_objective(spec, tn, left, right, wl, wr, m0, widths)
            worse = fn > ft
            if not np.any(worse):
                break
            step = np.where(worse, 0.5 * step, step)
        tn = t - step
        fn = _local_objective(spec, tn, left, right, wl, wr, m0, widths)
        accept = fn <= ft
        moved = np.where(accept, np.abs(step), 0.0)
        t = np.where(accept, tn, t)
        ft = np.where(accept, fn, ft)
        if np.max(moved / scale) <= tol:
            break
    return t, ft


def _update_color(spec: ChainSpec, values: np.ndarray, idx: np.ndarray):
    n = spec.ncells
    has_l = idx > 0
    has_r = idx < n - 1
    left = np.where(has_l, values[np.maximum(idx - 1, 0)], values[idx])
    right = np.where(has_r, values[np.minimum(idx + 1, n - 1)], values[idx])
    wl = has_l.astype(float)
    wr = has_r.astype(float)
    m0 = spec.m0[idx]
    widths = spec.widths[idx]
    safe_w = np.where(widths > 0, widths, 1.0)
    candidates = [values[idx], left, right, m0 / safe_w]
    best_t = values[idx].copy()
    best_f = _local_objective(spec, best_t, left, right, wl, wr, m0, widths)
    for c in candidates:
        t, ft = _refine_newton(spec, c, left, right, wl, wr, m0, widths)
        better = ft < best_f
        best_t = np.where(better, t, best_t)
        best_f = np.where(better, ft, best_f)
    values[idx] = best_t


def descent_sweeps(spec: ChainSpec, values: np.ndarray, max_sweeps: int,
                   rel_tol: float = 1e-12):
    """Red-black coordinate-descent sweeps; the energy never increases.

    Each half-sweep updates every other cell, so the cells updated together
    do not interact and the scalar minimizations are exact in parallel.
    Returns ``(values, sweeps_done, converged)``.
    """
    v = spec.apply_pins(values)
    n = spec.ncells
    free = np.ones(n, dtype=bool)
    if spec.pin_first is not None:
        free[0] = False
    if spec.pin_last is not None:
        free[-1] = False
    energy = spec.energy(v)
    sweeps = 0
    converged = False
    for _ in range(max_sweeps):
        for color in (0, 1):
            idx = np.arange(color, n, 2)
            idx = idx[free[idx]]
            if idx.size:
                _update_color(spec, v, idx)
        sweeps += 1
        new_energy = spec.energy(v)
        if energy - new_energy <= rel_tol * max(abs(energy), 1e-300):
            energy = new_energy
            converged = True
            break
        energy = new_energy
    return v, sweeps, converged
