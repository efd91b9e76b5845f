"""1D discrete Perona-Malik minimization and its limit-model verification."""

from .analysis import (PHI_BATTERY, BlowupResult, RegimeClasses, ScalingRow,
                       StaircaseFit, StrictRow, ThresholdInversionError,
                       VarifoldRHS, blowup_experiment, classify_slopes,
                       fit_staircase, forcing_scaling_limit, scaling_experiment,
                       strict_convergence_report, varifold_lhs, varifold_rhs)
from .energy import (SMOOTH_BUILTINS, Affine, EnergyParts, Forcing, Smooth,
                     Step, StepFn, dpmf_energy, fidelity_moments, jf_energy,
                     rdpmf_energy)
from .grid import (Grid, PCFn, ScalePair, blow_up, discrete_derivative,
                   grid_from_lattice, make_grid, scales, total_variation)
from .solve import (ALPHA_LIMIT, BudgetExceededError, LabelSet, MuResult,
                    SolveOptions, SolveReport, brute_force_min, init_competitor,
                    minimize_dpmf, mu_bounds, mu_n_numeric, mu_numeric,
                    mu_star_formula, polish_coordinate_descent, potts_exact,
                    solve_chain_dp)
from .staircase import (CheckResult, LocalMinReport, Staircase,
                        check_local_min_properties, hv_params, l0_threshold,
                        staircase_eval, staircase_stepfn, unit_staircase)

__all__ = [name for name in dir() if not name.startswith("_")]

__version__ = "0.1.0"
