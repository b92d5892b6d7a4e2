"""
Built-in instance generators.

The two-step processes below are the standard example of a bounded family
that converges weakly but has no limit once information is taken into
account: the left process decides its branch at time 2, the right one
already at time 1, with the two time-1 positions only 2 * gap apart.
"""

import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import MalformedInputError
from .measures import PairedMeasure, ProcessLaw
from .spaces import FiniteMetricSpace, MetricSpace, Point

logger = logging.getLogger(__name__)

DEFAULT_SEPARATION = 2.0


def _line(coords: Sequence[float]) -> Tuple[FiniteMetricSpace, Dict[float, int]]:
    """Points on the real line, deduplicated and sorted."""
    values = sorted(set(float(c) for c in coords))
    space = FiniteMetricSpace.from_points(values)
    return space, {v: i for i, v in enumerate(values)}


def _check_gaps(gaps: Sequence[float]) -> None:
    if not gaps:
        raise MalformedInputError("At least one gap is required")
    if any(not g > 0.0 for g in gaps):
        raise MalformedInputError(f"Gaps must be positive, got {list(gaps)}")


def figure_one_family(
    gaps: Sequence[float], separation: float = DEFAULT_SEPARATION
) -> Tuple[ProcessLaw, List[ProcessLaw]]:
    """
    The late-branching process and one early-branching process per gap,
    all on the same spaces.

    The late-branching process sits at 0 at time 1 and moves to
    +-separation/2 with probability 1/2 each. The early-branching process
    with gap e sits at +-e at time 1 and keeps the sign at time 2.
    """
    _check_gaps(gaps)
    if not separation > 0.0:
        raise MalformedInputError(f"Separation must be positive: {separation}")

    first, at = _line([0.0] + [s * g for g in gaps for s in (-1.0, 1.0)])
    half = separation / 2.0
    second, branch = _line([-half, half])
    spaces = (first, second)

    left = ProcessLaw(
        spaces,
        (
            ((at[0.0], branch[half]), 0.5),
            ((at[0.0], branch[-half]), 0.5),
        ),
    )
    members = [
        ProcessLaw(
            spaces,
            (
                ((at[g], branch[half]), 0.5),
                ((at[-g], branch[-half]), 0.5),
            ),
        )
        for g in gaps
    ]
    logger.debug(f"Built the two-branch family for gaps {list(gaps)}")
    return left, members


def figure_one_pair(
    gap: float, separation: float = DEFAULT_SEPARATION
) -> Tuple[ProcessLaw, ProcessLaw]:
    left, (right,) = figure_one_family([gap], separation)
    return left, right


def two_branch_modulus(delta: float, gap: float, separation: float) -> float:
    """Closed form of omega at time 1 for the early-branching process."""
    return separation * min(1.0, delta / (2.0 * gap))


def shifted_sequence(
    x_coords: Sequence[float],
    y_space: MetricSpace,
    atoms: Sequence[Tuple[int, Point, float]],
    levels: int,
    p: float = 1.0,
) -> Tuple[PairedMeasure, List[PairedMeasure]]:
    """
    A measure on X x Y and copies of it whose X-positions are moved by
    2^-k for k = 1..levels, so that the k-th copy is within 2^-k of it.

    Args:
        x_coords: Positions of the X-atoms on the real line
        y_space: The Y space
        atoms: (index into x_coords, y, weight) triples
        levels: Number of shifted copies
        p: Exponent of the product metric

    Returns:
        The limit measure and the list of shifted copies, all on one
        X space holding every position used
    """
    if levels < 1:
        raise MalformedInputError(f"Need at least one level, got {levels}")
    shifts = [2.0**-k for k in range(1, levels + 1)]
    positions = [float(c) for c in x_coords]
    x_space, at = _line(positions + [c + s for c in positions for s in shifts])

    def build(shift: float) -> PairedMeasure:
        return PairedMeasure.from_atoms(
            x_space,
            y_space,
            (((at[positions[i] + shift], y), w) for i, y, w in atoms),
            p=p,
        )

    return build(0.0), [build(s) for s in shifts]


def gluing_counterexample(
    levels: int, p: float = 1.0
) -> Tuple[List[PairedMeasure], List[PairedMeasure], PairedMeasure, PairedMeasure]:
    """
    Sequences whose gluings do not converge because the limit kernel is not
    a graph measure.

    At level k two y-positions +-2^-k each carry one of the z-values; in the
    limit they merge into y = 0, which then carries both z-values.
    """
    if levels < 1:
        raise MalformedInputError(f"Need at least one level, got {levels}")
    shifts = [2.0**-k for k in range(1, levels + 1)]
    x_space, x_at = _line([0.0, 1.0])
    y_space, y_at = _line([0.0] + [s * t for t in shifts for s in (-1.0, 1.0)])
    z_space, z_at = _line([0.0, 1.0])

    def pair(y_low: float, y_high: float):
        mu = PairedMeasure.from_atoms(
            x_space,
            y_space,
            (
                ((x_at[0.0], y_at[y_low]), 0.5),
                ((x_at[1.0], y_at[y_high]), 0.5),
            ),
            p=p,
        )
        nu = PairedMeasure.from_atoms(
            y_space,
            z_space,
            (
                ((y_at[y_low], z_at[0.0]), 0.5),
                ((y_at[y_high], z_at[1.0]), 0.5),
            ),
            p=p,
        )
        return mu, nu

    sequence = [pair(-t, t) for t in shifts]
    mu, nu = pair(0.0, 0.0)
    return [m for m, _ in sequence], [n for _, n in sequence], mu, nu


def perturbed_pair(
    rng: np.random.Generator,
    n_atoms: int = 3,
    radius: float = 0.01,
    p: float = 1.0,
) -> Tuple[PairedMeasure, PairedMeasure]:
    """
    A random measure on X x Y in the unit square and a copy with every
    atom moved by at most radius in each coordinate.
    """
    if n_atoms < 1:
        raise MalformedInputError(f"Need at least one atom, got {n_atoms}")
    xs = rng.uniform(0.0, 1.0, n_atoms)
    ys = rng.uniform(0.0, 1.0, n_atoms)
    dx = rng.uniform(-radius, radius, n_atoms)
    dy = rng.uniform(-radius, radius, n_atoms)
    weights = rng.dirichlet(np.ones(n_atoms))

    x_space, x_at = _line(np.concatenate([xs, xs + dx]).tolist())
    y_space, y_at = _line(np.concatenate([ys, ys + dy]).tolist())

    def build(x_off: np.ndarray, y_off: np.ndarray) -> PairedMeasure:
        return PairedMeasure.from_atoms(
            x_space,
            y_space,
            (
                ((x_at[float(x + a)], y_at[float(y + b)]), float(w))
                for x, y, a, b, w in zip(xs, ys, x_off, y_off, weights)
            ),
            p=p,
        )

    zero = np.zeros(n_atoms)
    return build(zero, zero), build(dx, dy)


def random_gluing_instance(
    rng: np.random.Generator,
    levels: int,
    n_atoms: int = 3,
    p: float = 1.0,
) -> Tuple[List[PairedMeasure], List[PairedMeasure], PairedMeasure, PairedMeasure]:
    """
    Random sequences for the gluing experiment with a graph kernel.

    mu sits on random points of the unit square and its k-th copy has the
    X-positions moved by 2^-k. The kernel nu on Y x Z maps every y-atom of
    mu to its own random z, so it shares mu's Y-marginal and is a graph
    measure. The kernel sequence is constant.
    """
    if n_atoms < 1:
        raise MalformedInputError(f"Need at least one atom, got {n_atoms}")
    xs = rng.uniform(0.0, 1.0, n_atoms).tolist()
    ys = rng.uniform(0.0, 1.0, n_atoms).tolist()
    zs = rng.uniform(0.0, 1.0, n_atoms).tolist()
    weights = rng.dirichlet(np.ones(n_atoms)).tolist()

    y_space, y_at = _line(ys)
    z_space, z_at = _line(zs)
    mu, mu_seq = shifted_sequence(
        xs,
        y_space,
        [(i, y_at[y], w) for i, (y, w) in enumerate(zip(ys, weights))],
        levels,
        p,
    )
    nu = PairedMeasure.from_atoms(
        y_space,
        z_space,
        (((y_at[y], z_at[z]), w) for y, z, w in zip(ys, zs, weights)),
        p=p,
    )
    return mu_seq, [nu] * levels, mu, nu
