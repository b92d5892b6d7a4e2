"""
Structural laws of the modulus: symmetrization, monotone scaling along
delta and stability under small transport perturbations.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from services.adapted_ot.app.core.adapted import lift
from services.adapted_ot.app.core.diagnostics import (
    equicontinuity_sweep,
    sandwich_check,
)
from services.adapted_ot.app.core.families import (
    figure_one_family,
    figure_one_pair,
    perturbed_pair,
    two_branch_modulus,
)
from services.adapted_ot.app.core.measures import PairedMeasure, marginal, mirror
from services.adapted_ot.app.core.modulus import (
    ModulusCurve,
    PartialSelfCoupling,
    modulus_curve,
    symmetrize,
)
from services.adapted_ot.app.core.spaces import ProductSpace
from services.adapted_ot.tests.generators import (
    random_measure,
    random_paired,
    random_partial_self_coupling,
    random_space,
)

SEEDS = st.integers(0, 2**32 - 1)
GRID = [0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6]


class TestSymmetrize:
    @given(seed=SEEDS)
    @settings(max_examples=200, deadline=None)
    def test_completion_is_a_symmetric_coupling(self, seed):
        rng = np.random.default_rng(seed)
        p = float(rng.choice([1.0, 2.0]))
        mu = random_paired(rng, int(rng.integers(1, 5)), p=p)
        partial = random_partial_self_coupling(rng, mu)
        coupling = symmetrize(partial)
        gamma = coupling.measure

        assert gamma.mass == pytest.approx(1.0, abs=1e-9)
        assert mirror(gamma).atoms == gamma.atoms
        for axes in ((0, 1), (2, 3)):
            assert marginal(gamma, axes).close_to(mu.measure, 1e-9)

        completed = PartialSelfCoupling(gamma, mu, mu.p)
        assert completed.rho_x == pytest.approx(partial.rho_x, abs=1e-9)
        assert completed.rho_y == pytest.approx(partial.rho_y, abs=1e-9)


class TestCurveLaws:
    @given(seed=SEEDS, p=st.sampled_from([1.0, 2.0]))
    @settings(max_examples=50, deadline=None)
    def test_random_curves_are_monotone_and_scale(self, seed, p):
        rng = np.random.default_rng(seed)
        mu = random_paired(rng, int(rng.integers(1, 5)), p=p)
        curve = modulus_curve(mu, GRID, p)
        assert curve.violations(1e-8) == []

    def test_sweep_outputs_obey_the_laws(self):
        left, members = figure_one_family([0.5, 0.25, 0.125, 0.0625])
        sweep = equicontinuity_sweep([left] + members, GRID)
        reference = lift(members[0], 1).as_paired()
        for rows in sweep.member_values:
            for values in rows + (sweep.sup_values[0],):
                curve = ModulusCurve(
                    deltas=sweep.deltas,
                    values=values,
                    optima=values,
                    p=1.0,
                    reference=reference,
                )
                assert curve.violations(1e-8) == []


class TestSandwich:
    @given(seed=SEEDS)
    @settings(max_examples=100, deadline=None)
    def test_bounds_hold(self, seed):
        rng = np.random.default_rng(seed)
        radius = float(rng.uniform(0.001, 0.3))
        mu, nu = perturbed_pair(rng, int(rng.integers(1, 4)), radius)
        delta = float(rng.uniform(0.05, 1.0))
        report = sandwich_check(mu, nu, delta)
        assert report.lower < report.omega_nu + 1e-9
        assert report.omega_nu < report.upper + 1e-9
        assert report.holds

    @given(seed=SEEDS)
    @settings(max_examples=100, deadline=None)
    def test_bounds_hold_for_independent_pairs(self, seed):
        rng = np.random.default_rng(seed)
        p = float(rng.choice([1.0, 2.0]))
        dim = int(rng.integers(1, 3))
        space = ProductSpace((random_space(rng, 4, dim), random_space(rng, 4, dim)), p)
        mu = PairedMeasure(random_measure(rng, space, int(rng.integers(1, 5))))
        nu = PairedMeasure(random_measure(rng, space, int(rng.integers(1, 5))))
        delta = float(rng.uniform(0.05, 1.0))
        report = sandwich_check(mu, nu, delta, p)
        assert report.lower < report.omega_nu + 1e-9
        assert report.omega_nu < report.upper + 1e-9
        assert report.holds

    @pytest.mark.parametrize("gap", [0.5, 0.25, 0.125, 0.0625])
    @pytest.mark.parametrize("delta", [0.05, 0.2, 1.0])
    def test_two_branch_pair(self, gap, delta):
        left, right = figure_one_pair(gap)
        late = PairedMeasure(left.as_measure())
        early = PairedMeasure(right.as_measure())

        report = sandwich_check(late, early, delta)
        assert report.distance == pytest.approx(gap, abs=1e-9)
        assert report.omega_mu == pytest.approx(2.0, abs=1e-8)
        assert report.omega_nu == pytest.approx(
            two_branch_modulus(delta, gap, 2.0), abs=1e-8
        )
        assert report.holds
        # the late branching keeps omega at 2, so the lower side stays positive
        assert report.lower > 0.0

        back = sandwich_check(early, late, delta)
        assert back.omega_mu == report.omega_nu
        assert back.holds
