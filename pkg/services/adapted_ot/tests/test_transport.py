import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from services.adapted_ot.app.core.config import Tolerances, tolerance_scope
from services.adapted_ot.app.core.errors import PreconditionError
from services.adapted_ot.app.core.measures import (
    DiscreteMeasure,
    MeasureKind,
    dirac,
)
from services.adapted_ot.app.core.spaces import FiniteMetricSpace, ProductSpace
from services.adapted_ot.app.core.transport import (
    Coupling,
    compose_couplings,
    cost_functionals,
    coupling_on,
    displacement,
    optimal_transport,
    wasserstein,
)

from .generators import random_measure, random_space


class TestWasserstein:
    def test_identical_measures(self, line):
        mu = DiscreteMeasure(line, ((0, 0.5), (3, 0.5)))
        result = wasserstein(mu, mu)
        assert result.distance == 0.0
        assert result.coupling.measure.atoms == (((0, 0), 0.5), ((3, 3), 0.5))

    def test_diracs(self, line):
        assert wasserstein(dirac(line, 1), dirac(line, 4), 2.0).distance == 3.0

    def test_dirac_against_spread(self, line):
        spread = DiscreteMeasure(line, ((0, 0.5), (4, 0.5)))
        result = wasserstein(dirac(line, 2), spread, 2.0)
        assert result.cost == pytest.approx(4.0)
        assert result.distance == pytest.approx(2.0)

    def test_shift_on_the_line(self, line):
        mu = DiscreteMeasure(line, ((0, 0.5), (1, 0.5)))
        nu = DiscreteMeasure(line, ((3, 0.5), (4, 0.5)))
        assert wasserstein(mu, nu).distance == pytest.approx(3.0)

    def test_coupling_has_the_right_marginals(self, line):
        mu = DiscreteMeasure(line, ((0, 0.2), (1, 0.3), (2, 0.5)))
        nu = DiscreteMeasure(line, ((2, 0.6), (4, 0.4)))
        coupling = wasserstein(mu, nu).coupling
        assert coupling.left_marginal.close_to(mu, 1e-12)
        assert coupling.right_marginal.close_to(nu, 1e-12)
        assert coupling.cost(1.0) == pytest.approx(wasserstein(mu, nu).cost)

    def test_rejects_mismatched_spaces(self, line):
        other = FiniteMetricSpace.from_points([0.0, 1.0])
        with pytest.raises(PreconditionError):
            wasserstein(dirac(line, 0), dirac(other, 0))

    def test_rejects_subprobability(self, line):
        half = DiscreteMeasure(line, ((0, 0.5),), MeasureKind.SUBPROBABILITY)
        with pytest.raises(PreconditionError):
            wasserstein(half, half)

    def test_rejects_small_exponent(self, line):
        with pytest.raises(PreconditionError):
            wasserstein(dirac(line, 0), dirac(line, 1), 0.5)

    def test_rejects_a_product_built_for_another_exponent(self, line):
        space = ProductSpace((line, line), 1.0)
        mu = DiscreteMeasure(space, (((0, 0), 1.0),))
        nu = DiscreteMeasure(space, (((1, 2), 1.0),))
        assert wasserstein(mu, nu, 1.0).distance == 3.0
        with pytest.raises(PreconditionError, match="not p=2"):
            wasserstein(mu, nu, 2.0)

    def test_mass_within_tolerance_is_rescaled(self, line):
        with tolerance_scope(Tolerances(mass=1e-6)):
            mu = DiscreteMeasure(line, ((0, 0.5), (3, 0.5 + 1e-7)))
            nu = DiscreteMeasure(line, ((1, 0.5), (4, 0.5)))
            result = wasserstein(mu, nu)
        assert result.distance == pytest.approx(1.0, abs=1e-6)
        assert result.coupling.measure.mass == pytest.approx(1.0, abs=1e-12)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_distance_grows_with_the_exponent(self, seed):
        rng = np.random.default_rng(seed)
        space = random_space(rng, 6)
        a = random_measure(rng, space, int(rng.integers(1, 5)))
        b = random_measure(rng, space, int(rng.integers(1, 5)))
        exponents = [1.0, 1.5, 2.0, 3.0]
        distances = [wasserstein(a, b, p).distance for p in exponents]
        for lower, higher in zip(distances, distances[1:]):
            assert lower <= higher + 1e-9

    @given(seed=st.integers(0, 100_000), p=st.sampled_from([1.0, 2.0]))
    @settings(max_examples=40, deadline=None)
    def test_metric_properties(self, seed, p):
        rng = np.random.default_rng(seed)
        space = random_space(rng, 5, dim=2)
        a, b, c = (random_measure(rng, space, 3) for _ in range(3))
        ab = wasserstein(a, b, p).distance
        assert ab == pytest.approx(wasserstein(b, a, p).distance, abs=1e-9)
        assert ab <= (
            wasserstein(a, c, p).distance + wasserstein(c, b, p).distance + 1e-9
        )

    @given(seed=st.integers(0, 100_000))
    @settings(max_examples=40, deadline=None)
    def test_zero_duality_gap(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.dirichlet(np.ones(3))
        b = rng.dirichlet(np.ones(4))
        cost = rng.uniform(0.0, 1.0, (3, 4))
        plan = optimal_transport(a, b, cost)
        assert plan.lp.duality_gap == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(plan.plan.sum(axis=1), a, atol=1e-12)
        np.testing.assert_allclose(plan.plan.sum(axis=0), b, atol=1e-12)


class TestCoupling:
    def test_rejects_wrong_marginals(self, line):
        mu = DiscreteMeasure(line, ((0, 0.5), (1, 0.5)))
        gamma = coupling_on(mu, [(0, 0, 1.0)])
        with pytest.raises(PreconditionError):
            Coupling(gamma, mu, mu)

    def test_partial_coupling_only_needs_domination(self, line):
        mu = DiscreteMeasure(line, ((0, 0.5), (1, 0.5)))
        gamma = coupling_on(mu, [(0, 1, 0.25)])
        partial = Coupling(gamma, mu, mu, partial=True)
        assert partial.cost(1.0) == 0.25

    def test_compose_couplings_follows_both_legs(self, line):
        a = dirac(line, 0)
        b = DiscreteMeasure(line, ((1, 0.5), (2, 0.5)))
        c = DiscreteMeasure(line, ((3, 0.5), (4, 0.5)))
        first = Coupling(coupling_on(a, [(0, 1, 0.5), (0, 2, 0.5)]), a, b)
        second = Coupling(coupling_on(b, [(1, 4, 0.5), (2, 3, 0.5)]), b, c)
        composed = compose_couplings(first, second)
        assert composed.measure.atoms == (((0, 3), 0.5), ((0, 4), 0.5))
        assert composed.cost(1.0) <= first.cost(1.0) + second.cost(1.0)

    def test_compose_rejects_mismatched_middle(self, line):
        a = dirac(line, 0)
        b = dirac(line, 1)
        c = dirac(line, 2)
        first = Coupling(coupling_on(a, [(0, 1, 1.0)]), a, b)
        second = Coupling(coupling_on(c, [(2, 2, 1.0)]), c, c)
        with pytest.raises(PreconditionError):
            compose_couplings(first, second)


class TestCostFunctionals:
    def test_displacements_of_a_self_coupling(self, line):
        space = ProductSpace((line, line, line, line), 1.0)
        gamma = DiscreteMeasure(
            space,
            (((0, 0, 1, 3), 0.5), ((2, 2, 2, 2), 0.5)),
            MeasureKind.SUBPROBABILITY,
        )
        rho_x, rho_y = cost_functionals(gamma, 1.0)
        assert rho_x == 0.5
        assert rho_y == 1.5
        assert displacement(gamma, 1, 3, 2.0) == pytest.approx(np.sqrt(4.5))

    def test_requires_grouped_factors(self, line):
        other = FiniteMetricSpace.from_points([0.0, 1.0])
        space = ProductSpace((line, other, other, line), 1.0)
        gamma = DiscreteMeasure(space, (((0, 0, 0, 0), 1.0),))
        with pytest.raises(PreconditionError):
            cost_functionals(gamma, 1.0)

    def test_displacement_needs_matching_factors(self, line):
        other = FiniteMetricSpace.from_points([0.0, 1.0])
        space = ProductSpace((line, other), 1.0)
        gamma = DiscreteMeasure(space, (((0, 0), 1.0),))
        with pytest.raises(PreconditionError):
            displacement(gamma, 0, 1, 1.0)
