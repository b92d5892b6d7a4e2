import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from services.adapted_ot.app.core.errors import (
    MalformedInputError,
    PreconditionError,
)
from services.adapted_ot.app.core.measures import (
    DiscreteMeasure,
    MeasureKind,
    PairedMeasure,
    marginal,
    mirror,
)
from services.adapted_ot.app.core.modulus import (
    CurveViolationKind,
    ModulusCurve,
    PartialSelfCoupling,
    fiber_self_coupling,
    is_graph_measure,
    modulus,
    modulus_curve,
    scaled_witness,
    symmetrize,
)
from services.adapted_ot.app.core.spaces import doubled

from .generators import random_paired, random_partial_self_coupling


class TestModulus:
    def test_graph_measure_has_zero_modulus_at_zero(self, graph_measure):
        assert modulus(graph_measure, 0.0).value == 0.0
        assert is_graph_measure(graph_measure)

    @pytest.mark.parametrize("p", [1.0, 2.0])
    def test_split_fiber_value_at_zero(self, split_measure, p):
        # Two atoms at one x: omega(0) is the distance between their y.
        result = modulus(split_measure, 0.0, p)
        assert result.value == pytest.approx(2.0)
        assert not is_graph_measure(split_measure, p)

    def test_identity_graph_grows_linearly(self, graph_measure):
        # On y = x any X-displacement buys the same Y-displacement.
        for delta in (0.1, 0.25, 0.5):
            assert modulus(graph_measure, delta).value == pytest.approx(delta)

    def test_saturates_at_the_diameter(self, graph_measure):
        big = modulus(graph_measure, 100.0).value
        assert big == pytest.approx(modulus(graph_measure, 10.0).value)

    def test_witness_is_feasible(self, graph_measure):
        result = modulus(graph_measure, 0.3)
        witness = result.witness
        assert witness.within(0.3)
        assert witness.rho_y == pytest.approx(result.value)

    @pytest.mark.parametrize("delta", [-0.1, float("nan"), float("inf")])
    def test_rejects_bad_delta(self, graph_measure, delta):
        with pytest.raises(PreconditionError):
            modulus(graph_measure, delta)

    def test_rejects_subprobability(self, line):
        half = PairedMeasure.from_atoms(
            line, line, [((0, 0), 0.5)], kind=MeasureKind.SUBPROBABILITY
        )
        with pytest.raises(PreconditionError):
            modulus(half, 0.1)

    def test_single_atom(self, line):
        point = PairedMeasure.from_atoms(line, line, [((2, 3), 1.0)])
        result = modulus(point, 1.0)
        assert result.value == 0.0
        assert result.witness.gamma.mass == 0.0


class TestPartialSelfCoupling:
    def test_rejects_marginal_above_mu(self, graph_measure):
        space = doubled(graph_measure.space)
        gamma = DiscreteMeasure(
            space, (((0, 0, 1, 1), 0.5),), MeasureKind.SUBPROBABILITY
        )
        with pytest.raises(PreconditionError):
            PartialSelfCoupling(gamma, graph_measure)

    def test_mirrored_swaps_roles(self, graph_measure):
        space = doubled(graph_measure.space)
        gamma = DiscreteMeasure(
            space, (((0, 0, 2, 2), 0.25),), MeasureKind.SUBPROBABILITY
        )
        partial = PartialSelfCoupling(gamma, graph_measure)
        flipped = partial.mirrored()
        assert flipped.gamma.atoms == (((2, 2, 0, 0), 0.25),)
        assert flipped.functionals == partial.functionals


class TestSymmetrize:
    def test_completes_to_symmetric_coupling(self, graph_measure):
        space = doubled(graph_measure.space)
        gamma = DiscreteMeasure(
            space, (((0, 0, 2, 2), 0.25),), MeasureKind.SUBPROBABILITY
        )
        partial = PartialSelfCoupling(gamma, graph_measure)
        coupling = symmetrize(partial)
        assert coupling.measure.mass == pytest.approx(1.0)
        assert mirror(coupling.measure).atoms == coupling.measure.atoms
        assert coupling.measure.weight((1, 1, 1, 1)) == 0.25
        completed = PartialSelfCoupling(coupling.measure, graph_measure)
        assert completed.rho_x == pytest.approx(partial.rho_x)
        assert completed.rho_y == pytest.approx(partial.rho_y)

    @given(seed=st.integers(0, 100_000), n_atoms=st.integers(1, 4))
    @settings(max_examples=40, deadline=None)
    def test_marginals_equal_mu(self, seed, n_atoms):
        rng = np.random.default_rng(seed)
        mu = random_paired(rng, n_atoms)
        coupling = symmetrize(random_partial_self_coupling(rng, mu))
        for axes in ((0, 1), (2, 3)):
            assert marginal(coupling.measure, axes).close_to(mu.measure, 1e-9)


class TestFiberSelfCoupling:
    def test_graph_measure_gives_zero(self, graph_measure):
        fiber = fiber_self_coupling(graph_measure)
        assert fiber.rho_x == 0.0
        assert fiber.rho_y == 0.0

    def test_split_measure_lower_bounds_omega_at_zero(self, split_measure):
        fiber = fiber_self_coupling(split_measure)
        assert fiber.rho_x == 0.0
        # Half of the mass crosses between y = 1 and y = 3.
        assert fiber.rho_y == pytest.approx(1.0)
        assert fiber.rho_y <= modulus(split_measure, 0.0).value + 1e-12


class TestScaledWitness:
    def test_shrinks_both_displacements(self, graph_measure):
        witness = modulus(graph_measure, 0.4).witness
        scaled = scaled_witness(witness, 0.1, 0.4)
        assert scaled.within(0.1)
        assert scaled.rho_y == pytest.approx(witness.rho_y * 0.25)

    def test_rejects_inverted_levels(self, graph_measure):
        witness = modulus(graph_measure, 0.4).witness
        with pytest.raises(PreconditionError):
            scaled_witness(witness, 0.5, 0.4)


class TestModulusCurve:
    def test_curve_on_grid(self, graph_measure):
        curve = modulus_curve(graph_measure, [0.0, 0.1, 0.2], max_workers=2)
        assert curve.deltas == (0.0, 0.1, 0.2)
        assert curve.values[0] == 0.0
        assert curve.values[2] == pytest.approx(0.2)
        assert curve.violations() == []
        assert curve.rows()[1] == (0.1, curve.values[1])

    @pytest.mark.parametrize("grid", [[], [0.2, 0.1], [-1.0], [float("nan")]])
    def test_rejects_bad_grids(self, graph_measure, grid):
        with pytest.raises(MalformedInputError):
            modulus_curve(graph_measure, grid)

    def test_violations_are_listed(self, graph_measure):
        curve = ModulusCurve(
            deltas=(0.1, 0.2),
            values=(0.5, 0.1),
            optima=(0.5, 0.1),
            p=1.0,
            reference=graph_measure,
        )
        kinds = [v.kind for v in curve.violations()]
        assert kinds == [CurveViolationKind.MONOTONICITY]

        curve = ModulusCurve(
            deltas=(0.1, 0.2),
            values=(0.1, 1.0),
            optima=(0.1, 1.0),
            p=1.0,
            reference=graph_measure,
        )
        assert [v.kind for v in curve.violations()] == [
            CurveViolationKind.SCALING
        ]
