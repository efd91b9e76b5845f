"""Canonical staircases, their translations, and the local-minimizer checker.

The canonical staircase with parameters (H, V) has steps of width 2H and
height 2V, jumps at odd multiples of H, and the origin at the midpoint of a
step.  Oblique translations slide the graph along its mean line; horizontal
translations slide it only in x.  Entire local minimizers of the limit
energy with affine datum of slope M are exactly the oblique translations of
the staircase with H = (6*alpha/(beta*M^2))^(1/3) / 2 and V = M*H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import StepFn

MODES = ("oblique", "horizontal")


@dataclass(frozen=True)
class Staircase:
    H: float
    V: float
    tau0: float = 0.0
    mode: str = "oblique"

    def __post_init__(self):
        if self.H <= 0:
            raise ValueError("H must be positive")
        if abs(self.tau0) > 1.0:
            raise ValueError("tau0 must lie in [-1, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def unit_staircase(x) -> np.ndarray:
    """``S(x) = 2*floor((x+1)/2)``: steps of width 2 and height 2 through 0."""
    x = np.asarray(x, dtype=float)
    return 2.0 * np.floor((x + 1.0) / 2.0)


def staircase_eval(s: Staircase, x) -> np.ndarray:
    """Evaluate the (translated) staircase; right-continuous at jumps."""
    x = np.asarray(x, dtype=float)
    if s.V == 0.0:
        return np.zeros_like(x)
    out = s.V * unit_staircase((x - s.H * s.tau0) / s.H)
    if s.mode == "oblique":
        out = out + s.V * s.tau0
    return out


def staircase_jump_positions(s: Staircase, lo: float, hi: float) -> np.ndarray:
    """Jump locations strictly inside (lo, hi): ``H*(tau0 + odd integer)``."""
    if s.V == 0.0:
        return np.array([], dtype=float)
    k_lo = math.floor(((lo / s.H - s.tau0) - 1.0) / 2.0) - 1
    k_hi = math.ceil(((hi / s.H - s.tau0) - 1.0) / 2.0) + 1
    pos = s.H * (s.tau0 + 2.0 * np.arange(k_lo, k_hi + 1) + 1.0)
    return pos[(pos > lo) & (pos < hi)]


def staircase_stepfn(s: Staircase, interval: tuple) -> StepFn:
    """Restriction of the staircase to ``interval`` as a step function."""
    lo, hi = interval
    if not lo < hi:
        raise ValueError("interval must be nonempty")
    pos = staircase_jump_positions(s, lo, hi)
    base = float(staircase_eval(s, np.asarray(lo)))
    jumps = tuple((float(p), 2.0 * s.V) for p in pos)
    return StepFn(base=base, jumps=jumps, domain=(lo, hi))


def hv_params(beta: float, M: float, alpha: float) -> tuple:
    """Optimal step parameters ``(H, V)``; degenerate ``(None, 0.0)`` for M = 0."""
    if beta <= 0 or alpha <= 0:
        raise ValueError("alpha and beta must be positive")
    if M == 0:
        return None, 0.0
    H = 0.5 * (6.0 * alpha / (beta * M * M)) ** (1.0 / 3.0)
    return H, M * H


def l0_threshold(alpha: float, beta: float, M: float) -> float:
    """Maximal event-free interval length for local minimizers (M != 0)."""
    if M == 0:
        raise ValueError("threshold undefined for M = 0")
    return 2.0 * (alpha / (beta * M * M)) ** (1.0 / 3.0)


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    passed: bool
    residual: float


@dataclass(frozen=True)
class LocalMinReport:
    """Pass flags and residuals for the four structural properties:

    1. no sub-interval longer than L0 avoids both jumps and line crossings,
    2. jump values are symmetric around the line and deviate with M's sign,
    3. plateaus between consecutive jumps sit at the line's midpoint value,
    4. consecutive line crossings are equally spaced.
    """

    interval_coverage: CheckResult
    jump_symmetry: CheckResult
    plateau_levels: CheckResult
    crossing_spacing: CheckResult

    @property
    def all_passed(self) -> bool:
        return (self.interval_coverage.passed and self.jump_symmetry.passed
                and self.plateau_levels.passed and self.crossing_spacing.passed)


def _crossings(v: StepFn, M: float, lo: float, hi: float) -> list:
    """Interior points where a constant piece of v meets the line M*x."""
    cuts = [lo] + [p for p, _ in v.jumps_inside(lo, hi)] + [hi]
    out = []
    for p, q in zip(cuts[:-1], cuts[1:]):
        c = float(v.value(np.asarray((p + q) / 2.0)))
        y = c / M
        if p < y < q and lo < y < hi:
            out.append(y)
    return out


def check_local_min_properties(v: StepFn, M: float, interval: tuple,
                               alpha: float, beta: float,
                               tol: float = 1e-9) -> LocalMinReport:
    """Verify the four structural properties of local minimizers on ``interval``.

    Failures are reported, never raised.  For ``M = 0`` the coverage and
    spacing checks are vacuous and pass with residual 0.
    """
    lo, hi = interval
    jump_pos = [p for p, _ in v.jumps_inside(lo, hi)]

    # (2) symmetry around the line, deviation signed like M
    res2 = 0.0
    sign_ok = True
    for p in jump_pos:
        vminus = float(v.value_left(np.asarray(p)))
        vplus = float(v.value(np.asarray(p)))
        res2 = max(res2, abs(vplus + vminus - 2.0 * M * p))
        if M != 0 and (vplus - M * p) * math.copysign(1.0, M) < -tol:
            sign_ok = False
    check2 = CheckResult(sign_ok and res2 <= tol, res2)

    # (3) plateau between consecutive jumps at the midpoint level
    res3 = 0.0
    for p, q in zip(jump_pos[:-1], jump_pos[1:]):
        c = float(v.value(np.asarray((p + q) / 2.0)))
        res3 = max(res3, abs(c - M * (p + q) / 2.0))
    check3 = CheckResult(res3 <= tol, res3)

    if M == 0:
        check1 = CheckResult(True, 0.0)
        check4 = CheckResult(True, 0.0)
    else:
        crossings = _crossings(v, M, lo, hi)
        events = sorted(jump_pos + crossings)
        cuts = [lo] + events + [hi]
        max_gap = max(q - p for p, q in zip(cuts[:-1], cuts[1:]))
        L0 = l0_threshold(alpha, beta, M)
        check1 = CheckResult(max_gap <= L0 + tol, max(0.0, max_gap - L0))
        if len(crossings) >= 3:
            spacings = np.diff(np.asarray(crossings))
            res4 = float(np.max(spacings) - np.min(spacings))
        else:
            res4 = 0.0
        check4 = CheckResult(res4 <= tol, res4)

    return LocalMinReport(interval_coverage=check1, jump_symmetry=check2,
                          plateau_levels=check3, crossing_spacing=check4)
