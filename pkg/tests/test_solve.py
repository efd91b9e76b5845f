import numpy as np
import pytest

from pmstair import (Affine, LabelSet, PCFn, SolveOptions, Step, StepFn,
                     blow_up, brute_force_min, dpmf_energy, fit_staircase,
                     init_competitor, jf_energy, make_grid, minimize_dpmf,
                     mu_bounds, mu_n_numeric, mu_numeric, mu_star_formula,
                     polish_coordinate_descent, potts_exact, scales,
                     solve_chain_dp)
from pmstair.chain import descent_sweeps
from pmstair.solve import BudgetExceededError, _dpmf_chain

from helpers import potts_oracle, random_instance


class TestChainDpOracle:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            n, k, lo, hi, f, beta = random_instance(rng)
            u_dp = solve_chain_dp(f, beta, n, LabelSet(lo, hi, k))
            e_dp = dpmf_energy(u_dp, f, beta, n).total
            _, e_bf = brute_force_min(f, beta, n, np.linspace(lo, hi, k))
            assert e_dp == e_bf

    def test_zero_forcing_with_zero_label(self):
        u = solve_chain_dp(Affine(0, 0), 1.0, 4, LabelSet(-1.0, 1.0, 5))
        assert np.all(u.values == 0.0)
        assert dpmf_energy(u, Affine(0, 0), 1.0, 4).total == 0.0

    def test_spec_step_instance(self):
        f = Step(0.0, ((0.5, 1.0),))
        labels = LabelSet(0.0, 1.0, 5)  # {0, 0.25, 0.5, 0.75, 1}
        u_dp = solve_chain_dp(f, 10.0, 4, labels)
        _, e_bf = brute_force_min(f, 10.0, 4, np.linspace(0, 1, 5))
        assert dpmf_energy(u_dp, f, 10.0, 4).total == e_bf

    def test_translation_equivariance(self):
        c = 0.375
        u0 = solve_chain_dp(Affine(1.0, 0.0), 2.0, 5, LabelSet(-0.5, 1.5, 6))
        u1 = solve_chain_dp(Affine(1.0, c), 2.0, 5, LabelSet(-0.5 + c, 1.5 + c, 6))
        assert np.allclose(u1.values, u0.values + c, rtol=0, atol=1e-12)

    def test_label_budget(self):
        with pytest.raises(BudgetExceededError):
            solve_chain_dp(Affine(1, 0), 1.0, 10**4, LabelSet(0.0, 1.0, 129))


class TestBruteForce:
    def test_single_label(self):
        u, e = brute_force_min(Affine(0, 0.3), 1.0, 3, [0.3])
        assert np.all(u.values == 0.3)
        assert e == pytest.approx(0.0, abs=1e-14)

    def test_two_cells_two_labels(self):
        u, e = brute_force_min(Affine(0, 0), 1.0, 2, [0.0, 1.0])
        assert u.values.tolist() == [0.0, 0.0]
        assert e == 0.0

    def test_budget(self):
        with pytest.raises(BudgetExceededError):
            brute_force_min(Affine(0, 0), 1.0, 9, np.linspace(0, 1, 8))


class TestPolish:
    def test_never_worse(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            n = int(rng.integers(4, 30))
            f = Affine(float(rng.uniform(-2, 2)), 0.0)
            beta = float(rng.uniform(0.2, 5))
            u = PCFn(make_grid(0, 1, 1 / n), rng.normal(size=n))
            out = polish_coordinate_descent(u, f, beta, n, max_sweeps=5)
            assert (dpmf_energy(out, f, beta, n).total
                    <= dpmf_energy(u, f, beta, n).total + 1e-15)

    def test_fixed_point_at_optimum(self):
        n = 8
        u = PCFn(make_grid(0, 1, 1 / n), np.full(n, 0.6))
        out = polish_coordinate_descent(u, Affine(0.0, 0.6), 1.0, n)
        assert np.array_equal(out.values, u.values)

    def test_two_cell_descent(self):
        u = PCFn(make_grid(0, 1, 0.5), [0.0, 1.0])
        out = polish_coordinate_descent(u, Affine(0, 0), 1.0, 2, max_sweeps=100)
        assert dpmf_energy(out, Affine(0, 0), 1.0, 2).total <= 1.3047189562170502


class TestInitCompetitor:
    def test_zero_forcing(self):
        u = init_competitor(Affine(0, 0), 1.0, 1000, 2.0)
        assert np.all(u.values == 0.0)

    def test_translation_equivariance(self):
        c = -0.8125
        u0 = init_competitor(Affine(1.0, 0.0), 1.0, 500, 2.0)
        u1 = init_competitor(Affine(1.0, c), 1.0, 500, 2.0)
        assert np.allclose(u1.values, u0.values + c, rtol=0, atol=1e-12)

    def test_staircase_quality_at_scale(self):
        n = 10**5
        f = Affine(1.0, 0.0)
        u = init_competitor(f, 1.0, n, 2.0)
        sp = scales(n)
        e = dpmf_energy(u, f, 1.0, n)
        assert 0.8 <= e.total / sp.omega**2 <= 3.0
        w = blow_up(u, 0.5, sp.omega, float(f.value(0.5)))
        fit = fit_staircase(w, sp.omega / 2)
        # fitted step length over 2*omega(n), i.e. H_est against predicted H=1
        assert 0.5 <= fit.H <= 2.0

    def test_degenerate_partition(self):
        with pytest.raises(ValueError):
            init_competitor(Affine(1, 0), 1.0, 100, 1e-6)


class TestMinimize:
    def test_constant_forcing(self):
        rep = minimize_dpmf(Affine(0.0, 1.25), 2.0, 16)
        assert np.allclose(rep.minimizer.values, 1.25, rtol=0, atol=1e-12)
        assert rep.energy.total == pytest.approx(0.0, abs=1e-14)

    def test_trace_non_increasing(self):
        rep = minimize_dpmf(Affine(1.0, 0.0), 1.0, 200)
        energies = [e for _, e in rep.pipeline_trace]
        assert all(a >= b - 1e-15 for a, b in zip(energies, energies[1:]))
        assert rep.pipeline_trace[0][0] == "init"
        assert rep.pipeline_trace[-1][0] == "polish"

    def test_energy_revalidates(self):
        rep = minimize_dpmf(Affine(1.0, 0.0), 1.0, 300)
        again = dpmf_energy(rep.minimizer, Affine(1.0, 0.0), 1.0, 300)
        assert rep.energy.total == pytest.approx(again.total, rel=1e-9)

    def test_tiny_n_agrees_with_refined_brute_force(self):
        # two-route check: exhaustive lattice argmin, then full descent, must
        # land on the pipeline's optimum
        f, beta, n = Affine(1.0, 0.0), 1.0, 6
        rep = minimize_dpmf(f, beta, n, SolveOptions(max_sweeps=5000))
        u_bf, _ = brute_force_min(f, beta, n, np.linspace(-0.2, 1.2, 13))
        spec = _dpmf_chain(f, beta, n, u_bf.grid)
        refined, _, converged = descent_sweeps(spec, u_bf.values, 5000)
        assert converged
        e_ref = dpmf_energy(PCFn(u_bf.grid, refined), f, beta, n).total
        assert rep.energy.total == pytest.approx(e_ref, rel=1e-9)

    def test_minimum_decreases_with_n(self):
        f = Affine(1.0, 0.0)
        totals = [minimize_dpmf(f, 1.0, n).energy.total for n in (100, 1000, 10000)]
        assert totals[0] > totals[1] > totals[2]

    def test_deterministic(self):
        a = minimize_dpmf(Affine(1.0, 0.0), 1.0, 150)
        b = minimize_dpmf(Affine(1.0, 0.0), 1.0, 150)
        assert np.array_equal(a.minimizer.values, b.minimizer.values)
        assert a.pipeline_trace == b.pipeline_trace


class TestPotts:
    def test_spec_examples(self):
        f = Step(0.0, ((0.5, 1.0),))
        r = potts_exact(f, 4 / 3, 1.0, (0, 1), 8)
        assert r.value == pytest.approx(0.25, rel=1e-14)
        assert r.m_jumps == 0
        assert float(r.minimizer.value(np.asarray(0.3))) == pytest.approx(0.5)
        r2 = potts_exact(f, 0.1, 1.0, (0, 1), 8)
        assert r2.value == pytest.approx(0.1, rel=1e-14)
        assert r2.m_jumps == 1

    def test_constant_forcing(self):
        r = potts_exact(Affine(0.0, 0.7), 1.0, 1.0, (0, 1), 16)
        assert r.value == pytest.approx(0.0, abs=1e-15)
        assert r.m_jumps == 0

    def test_against_subset_oracle(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            resolution = int(rng.integers(2, 9))
            alpha = float(rng.uniform(0.05, 2.0))
            beta = float(rng.uniform(0.3, 4.0))
            if rng.random() < 0.5:
                f = Affine(float(rng.uniform(-3, 3)), float(rng.uniform(-1, 1)))
            else:
                f = Step(float(rng.uniform(-1, 1)),
                         ((float(rng.uniform(0.2, 0.8)), float(rng.uniform(0.3, 2.0))),))
            L = float(rng.uniform(0.5, 3.0))
            bc = None
            if rng.random() < 0.5:
                bc = (float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
            r = potts_exact(f, alpha, beta, (0.0, L), resolution, bc=bc)
            ref = potts_oracle(f, alpha, beta, (0.0, L), resolution, bc=bc)
            assert r.value == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_minimizer_energy_consistent(self):
        # reported value equals the limit energy of the reported minimizer
        f = Affine(1.0, 0.0)
        r = potts_exact(f, 0.5, 1.0, (0.0, 2.0), 64)
        e = jf_energy(r.minimizer, f, 0.5, 1.0, (0.0, 2.0))
        assert e.total == pytest.approx(r.value, rel=1e-11)
        assert e.roughness == pytest.approx(0.5 * r.m_jumps, rel=1e-15)

    def test_resolution_validation(self):
        with pytest.raises(ValueError):
            potts_exact(Affine(1, 0), 1.0, 1.0, (0, 1), 1)


class TestMuFormulas:
    def test_mu_star_examples(self):
        r = mu_star_formula(4 / 3, 1.0, 2.0, 1.0)
        assert r.value == pytest.approx(2.0, rel=1e-14)
        assert r.m_jumps == 1
        r4 = mu_star_formula(4 / 3, 1.0, 4.0, 1.0)
        assert r4.value == pytest.approx(4.0, rel=1e-14)
        assert r4.m_jumps == 2
        r0 = mu_star_formula(4 / 3, 1.0, 2.0, 0.0)
        assert r0.value == 0.0 and r0.m_jumps == 0

    def test_formula_matches_limit_energy_of_minimizer(self):
        for alpha, beta, L, M in [(4 / 3, 1.0, 2.0, 1.0), (1.0, 0.5, 5.0, -2.0),
                                  (2.0, 4.0, 1.0, 0.5)]:
            r = mu_star_formula(alpha, beta, L, M)
            e = jf_energy(r.minimizer, Affine(M, 0.0), alpha, beta, (0.0, L))
            assert e.total == pytest.approx(r.value, rel=1e-12)
            # boundary values match the datum
            assert float(r.minimizer.value(np.asarray(1e-12 * L))) == pytest.approx(0.0, abs=1e-12)
            assert float(r.minimizer.value(np.asarray(L))) == pytest.approx(M * L, rel=1e-12)

    def test_mu_bounds_examples(self):
        lower, upper = mu_bounds(4 / 3, 1.0, 2.0, 1.0)
        assert lower == pytest.approx(2.0 - (8 / 3) * 6 ** (2 / 3), rel=1e-12)
        assert upper == pytest.approx(4.0, rel=1e-14)
        lower0, upper0 = mu_bounds(4 / 3, 1.0, 2.0, 0.0)
        assert lower0 == pytest.approx(-2 * 6 ** (2 / 3) * 4 / 3, rel=1e-12)
        assert upper0 == pytest.approx(2.0, rel=1e-14)

    def test_mu_bounds_linear_in_L(self):
        alpha, beta, M = 1.0, 2.0, 1.5
        lead = 0.5 * (9 * alpha**2 * beta * M * M / 2) ** (1 / 3)
        for L in (1.0, 2.0, 4.0):
            l1, u1 = mu_bounds(alpha, beta, L, M)
            l2, u2 = mu_bounds(alpha, beta, 2 * L, M)
            assert l2 - l1 == pytest.approx(lead * L, rel=1e-12)
            assert u2 - u1 == pytest.approx(lead * L, rel=1e-12)


class TestMuNumeric:
    def test_matches_formula(self):
        r = mu_numeric(4 / 3, 1.0, 2.0, 1.0, bc=True, resolution=256)
        assert r.value == pytest.approx(2.0, rel=1e-3)

    def test_relaxation_order(self):
        free = mu_numeric(4 / 3, 1.0, 2.0, 1.0, bc=False, resolution=128)
        pinned = mu_numeric(4 / 3, 1.0, 2.0, 1.0, bc=True, resolution=128)
        assert free.value <= pinned.value + 1e-12

    def test_within_bounds(self):
        lower, upper = mu_bounds(4 / 3, 1.0, 2.0, 1.0)
        free = mu_numeric(4 / 3, 1.0, 2.0, 1.0, bc=False, resolution=128)
        assert lower - 1e-9 <= free.value <= upper + 1e-9


class TestMuN:
    def test_degenerate_zero_slope(self):
        r = mu_n_numeric(1.0, 2.0, 0.0, 1000, bc=False)
        assert r.value == 0.0
        assert r.m_jumps == 0
        assert np.all(r.minimizer.values == 0.0)

    def test_bc_requires_room(self):
        sp = scales(1000)
        with pytest.raises(ValueError):
            mu_n_numeric(1.0, sp.delta_n / 2, 1.0, 1000, bc=True)

    def test_monotone_in_slope(self):
        a = mu_n_numeric(1.0, 2.0, 1.0, 2000, bc=False).value
        b = mu_n_numeric(1.0, 2.0, 2.0, 2000, bc=False).value
        assert b >= a - 1e-6

    def test_quadratic_scaling_inequality(self):
        for m1, m2 in [(1.0, 2.0), (0.5, 1.0)]:
            v1 = mu_n_numeric(1.0, 2.0, m1, 2000, bc=True).value
            v2 = mu_n_numeric(1.0, 2.0, m2, 2000, bc=True).value
            assert v2 <= (m2 / m1) ** 2 * v1 + 1e-6
