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
    ProcessLaw,
    canonical_atoms,
    convex_combination,
    diagonal_coupling,
    dirac,
    disintegrate,
    leq,
    marginal,
    mirror,
    moment,
    phi_integral,
    product_measure,
    pushforward,
    scale,
)
from services.adapted_ot.app.core.spaces import ProductSpace

from .generators import random_measure, random_paired, random_space

SEEDS = st.integers(0, 2**32 - 1)


class TestCanonicalForm:
    def test_merges_sorts_and_drops_zeros(self):
        atoms = canonical_atoms([(2, 0.25), (0, 0.5), (2, 0.25), (1, 0.0)])
        assert atoms == ((0, 0.5), (2, 0.5))

    @pytest.mark.parametrize("weight", [-0.1, float("nan"), float("inf")])
    def test_rejects_invalid_weights(self, weight):
        with pytest.raises(MalformedInputError):
            canonical_atoms([(0, weight)])

    def test_same_measure_regardless_of_atom_order(self, line):
        a = DiscreteMeasure(line, ((3, 0.5), (1, 0.5)))
        b = DiscreteMeasure(line, ((1, 0.5), (3, 0.5)))
        assert a == b

    @given(seed=SEEDS)
    @settings(max_examples=100, deadline=None)
    def test_canonical_form_is_idempotent(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 12))
        points = [int(x) for x in rng.integers(0, 5, n)]
        weights = [float(w) if w > 0.3 else 0.0 for w in rng.uniform(0.0, 1.0, n)]
        once = canonical_atoms(zip(points, weights))
        assert canonical_atoms(once) == once
        assert [x for x, _ in once] == sorted(set(x for x, _ in once))


class TestDiscreteMeasure:
    def test_probability_mass_checked(self, line):
        with pytest.raises(PreconditionError):
            DiscreteMeasure(line, ((0, 0.5),))

    def test_subprobability_allows_deficit(self, line):
        mu = DiscreteMeasure(line, ((0, 0.5),), MeasureKind.SUBPROBABILITY)
        assert mu.mass == 0.5
        with pytest.raises(PreconditionError):
            DiscreteMeasure(line, ((0, 1.5),), MeasureKind.SUBPROBABILITY)

    def test_rejects_point_outside_space(self, line):
        with pytest.raises(MalformedInputError):
            DiscreteMeasure(line, ((9, 1.0),))

    def test_weight_lookup(self, line):
        mu = DiscreteMeasure(line, ((0, 0.25), (4, 0.75)))
        assert mu.weight(4) == 0.75
        assert mu.weight(2) == 0.0
        assert len(mu) == 2

    def test_scaled_is_subprobability(self, line):
        mu = scale(dirac(line, 2), 0.25)
        assert mu.kind == MeasureKind.SUBPROBABILITY
        assert mu.atoms == ((2, 0.25),)
        with pytest.raises(PreconditionError):
            dirac(line, 2).scaled(1.5)


class TestOperations:
    def test_marginal_single_and_multiple_axes(self, line):
        space = ProductSpace((line, line, line), 1.0)
        mu = DiscreteMeasure(space, (((0, 1, 2), 0.5), ((0, 3, 4), 0.5)))
        assert marginal(mu, (0,)) == dirac(line, 0)
        pair = marginal(mu, (2, 1))
        assert pair.space == ProductSpace((line, line), 1.0)
        assert pair.atoms == (((2, 1), 0.5), ((4, 3), 0.5))

    @pytest.mark.parametrize("axes", [(), (0, 0), (3,)])
    def test_marginal_rejects_bad_axes(self, graph_measure, axes):
        with pytest.raises(MalformedInputError):
            marginal(graph_measure.measure, axes)

    def test_pushforward_merges_images(self, line):
        mu = DiscreteMeasure(line, ((0, 0.25), (1, 0.25), (4, 0.5)))
        image = pushforward(mu, lambda x: min(x, 1))
        assert image.atoms == ((0, 0.25), (1, 0.75))
        assert pushforward(mu, {0: 4, 1: 4, 4: 0}).atoms == ((0, 0.5), (4, 0.5))

    @given(seed=SEEDS)
    @settings(max_examples=100, deadline=None)
    def test_marginal_commutes_with_pushforward(self, seed):
        rng = np.random.default_rng(seed)
        spaces = [random_space(rng, int(rng.integers(2, 5))) for _ in range(3)]
        space = ProductSpace(tuple(spaces), float(rng.choice([1.0, 2.0])))
        mu = random_measure(rng, space, int(rng.integers(1, 8)))
        maps = [[int(v) for v in rng.integers(0, s.n, s.n)] for s in spaces]
        axes = tuple(int(a) for a in rng.permutation(3)[: int(rng.integers(1, 4))])

        def on_axes(z):
            coords = z if len(axes) > 1 else (z,)
            image = tuple(maps[a][x] for a, x in zip(axes, coords))
            return image if len(axes) > 1 else image[0]

        moved = pushforward(mu, lambda z: tuple(m[x] for m, x in zip(maps, z)))
        first = marginal(moved, axes)
        second = pushforward(marginal(mu, axes), on_axes)
        assert first.close_to(second)

    def test_pushforward_rejects_partial_map(self, line):
        with pytest.raises(PreconditionError):
            pushforward(dirac(line, 0), {1: 2})
        with pytest.raises(PreconditionError):
            pushforward(dirac(line, 0), lambda x: x + 10)

    def test_leq(self, line):
        big = DiscreteMeasure(line, ((0, 0.5), (1, 0.5)))
        small = DiscreteMeasure(line, ((0, 0.5),), MeasureKind.SUBPROBABILITY)
        assert leq(small, big)
        assert not leq(big, small)

    def test_mirror_is_an_involution(self, graph_measure):
        gamma = diagonal_coupling(graph_measure.measure)
        shifted = pushforward(gamma, lambda z: (z[0], z[1], z[0], 4))
        assert mirror(mirror(shifted)) == shifted
        assert mirror(shifted) != shifted

    def test_diagonal_coupling_of_plain_measure(self, line):
        gamma = diagonal_coupling(DiscreteMeasure(line, ((1, 0.5), (2, 0.5))))
        assert gamma.atoms == (((1, 1), 0.5), ((2, 2), 0.5))

    def test_convex_combination(self, line):
        mixed = convex_combination(dirac(line, 0), dirac(line, 4), 0.25)
        assert mixed.atoms == ((0, 0.75), (4, 0.25))
        with pytest.raises(PreconditionError):
            convex_combination(dirac(line, 0), dirac(line, 4), 1.5)

    def test_product_measure_has_its_factors_as_marginals(self, line):
        a = DiscreteMeasure(line, ((0, 0.5), (1, 0.5)))
        b = DiscreteMeasure(line, ((2, 0.25), (3, 0.75)))
        ab = product_measure(a, b)
        assert len(ab) == 4
        assert marginal(ab, (0,)).close_to(a)
        assert marginal(ab, (1,)).close_to(b)

    def test_moment_and_phi_integral(self, line):
        mu = DiscreteMeasure(line, ((1, 0.5), (3, 0.5)))
        assert moment(mu, 2.0) == 5.0
        assert phi_integral(mu, 2.0) == 6.0
        assert phi_integral(mu, 2.0, outside=[3]) == 1.0

    def test_disintegrate(self, split_measure):
        fibers = disintegrate(split_measure.measure, axis=0)
        assert fibers == {0: (1.0, ((1, 0.5), (3, 0.5)))}
        by_y = disintegrate(split_measure.measure, axis=1)
        assert by_y[3] == (0.5, ((0, 1.0),))

    @given(seed=st.integers(0, 10_000), n_atoms=st.integers(1, 6))
    @settings(max_examples=50, deadline=None)
    def test_disintegration_reassembles(self, seed, n_atoms):
        mu = random_paired(np.random.default_rng(seed), n_atoms)
        rebuilt = [
            ((x, y), w * c)
            for x, (w, fiber) in disintegrate(mu.measure).items()
            for y, c in fiber
        ]
        assert DiscreteMeasure(mu.space, tuple(rebuilt)).close_to(mu.measure)


class TestPairedMeasure:
    def test_marginals(self, graph_measure, line):
        assert graph_measure.x_marginal.space == line
        assert graph_measure.y_marginal.weight(2) == 0.5
        assert graph_measure.is_probability()

    def test_rejects_three_factors(self, line):
        space = ProductSpace((line, line, line), 1.0)
        with pytest.raises(PreconditionError):
            PairedMeasure(DiscreteMeasure(space, (((0, 0, 0), 1.0),)))


class TestProcessLaw:
    def test_paths_are_canonical(self, line):
        law = ProcessLaw((line, line), (([1, 2], 0.5), ((0, 3), 0.5)))
        assert law.paths == (((0, 3), 0.5), ((1, 2), 0.5))
        assert law.horizon == 2

    def test_rejects_mass_defect(self, line):
        with pytest.raises(PreconditionError):
            ProcessLaw((line, line), (((0, 0), 0.5),))

    def test_coordinates(self, line):
        law = ProcessLaw(
            (line, line, line), (((0, 1, 2), 0.5), ((0, 3, 2), 0.5))
        )
        tail = law.coordinates(1, 3)
        assert tail.atoms == (((1, 2), 0.5), ((3, 2), 0.5))
        with pytest.raises(MalformedInputError):
            law.coordinates(2, 2)

    def test_same_shape(self, line):
        a = ProcessLaw((line, line), (((0, 0), 1.0),))
        b = ProcessLaw((line, line), (((1, 1), 1.0),))
        c = ProcessLaw((line,), (((1,), 1.0),))
        assert a.same_shape(b)
        assert not a.same_shape(c)
