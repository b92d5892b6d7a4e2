"""
Finite-evidence diagnostics for compactness and continuity statements.

Nothing here proves a limit statement. Each diagnostic evaluates the
relevant quantities on a finite grid or sample and reports what it saw.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from services.shared.utils import ordered_map

from .adapted import glue_full, lift
from .errors import MalformedInputError, PreconditionError, SolverError
from .measures import (
    DiscreteMeasure,
    PairedMeasure,
    ProcessLaw,
    phi_integral,
)
from .modulus import is_graph_measure, modulus, modulus_curve, validate_grid
from .spaces import Point, diameter
from .transport import (
    Coupling,
    compose_couplings,
    cost_functionals,
    coupling_on,
    wasserstein,
)

logger = logging.getLogger(__name__)

SANDWICH_INFLATION = 1e-6
SANDWICH_FLOOR = 1e-12
SANDWICH_SLACK = 1e-9
PLAUSIBLE = "equicontinuity plausible"
FAILS = "fails equicontinuity"


@dataclass(frozen=True)
class FamilySweep:
    """
    Lifted moduli of a family of process laws, or plain moduli of a family
    of measures on X x Y.

    member_values[i][m][k] is omega(lift(member m, ts[i]), deltas[k]) and
    sup_values[i][k] its maximum over members. A family of measures has
    the single time 0, which stands for the members themselves.
    """

    deltas: Tuple[float, ...]
    ts: Tuple[int, ...]
    p: float
    threshold: float
    member_values: Tuple[Tuple[Tuple[float, ...], ...], ...] = field(repr=False)
    sup_values: Tuple[Tuple[float, ...], ...]
    evaluation_index: int
    slopes: Tuple[Optional[float], ...]
    witnesses: Tuple[int, ...]

    @property
    def evaluation_delta(self) -> float:
        return self.deltas[self.evaluation_index]

    @property
    def worst(self) -> float:
        return max(row[self.evaluation_index] for row in self.sup_values)

    @property
    def plausible(self) -> bool:
        return self.worst < self.threshold

    @property
    def verdict(self) -> str:
        return PLAUSIBLE if self.plausible else FAILS

    def rows(self) -> List[Tuple[int, float, float]]:
        return [
            (t, delta, value)
            for t, row in zip(self.ts, self.sup_values)
            for delta, value in zip(self.deltas, row)
        ]


def _evaluation_index(deltas: Sequence[float]) -> int:
    for k, d in enumerate(deltas):
        if d > 0.0:
            return k
    return 0


def _slope(deltas: Sequence[float], row: Sequence[float]) -> Optional[float]:
    positive = [k for k, d in enumerate(deltas) if d > 0.0]
    distinct = [k for k in positive if deltas[k] > deltas[positive[0]]]
    if not positive or not distinct:
        return None
    k0, k1 = positive[0], distinct[0]
    return (row[k1] - row[k0]) / (deltas[k1] - deltas[k0])


def equicontinuity_sweep(
    family: Sequence[Union[ProcessLaw, PairedMeasure]],
    grid: Sequence[float],
    p: float = 1.0,
    threshold: float = 1e-3,
    max_workers: int = 1,
) -> FamilySweep:
    """
    Sweep omega(lift(mu, t), delta) over members, times and grid points.
    Members that are measures on X x Y are swept as they are, at t = 0.

    The verdict compares the largest supremum at the smallest positive
    grid point against threshold; slopes between the two smallest positive
    grid points and the member attaining each supremum are reported with it.

    Raises:
        MalformedInputError: If the family or grid is empty
        PreconditionError: If members differ in kind or shape, or the
            horizon leaves no time to lift at
    """
    members = list(family)
    if not members:
        raise MalformedInputError("The family is empty")
    deltas = validate_grid(grid)
    first = members[0]
    for k, member in enumerate(members[1:], start=1):
        if type(member) is not type(first):
            raise PreconditionError(f"Family member {k} is of another kind")
        if isinstance(first, PairedMeasure):
            same = member.space == first.space  # type: ignore[union-attr]
        else:
            same = member.same_shape(first)  # type: ignore[union-attr,arg-type]
        if not same:
            raise PreconditionError(f"Family member {k} has different spaces")

    if isinstance(first, PairedMeasure):
        ts: Tuple[int, ...] = (0,)
    elif first.horizon < 2:
        raise PreconditionError("Lifts need a horizon of at least 2")
    else:
        ts = tuple(range(1, first.horizon))
    jobs = [(t, m) for t in ts for m in range(len(members))]

    def evaluate(job: Tuple[int, int]) -> Tuple[float, ...]:
        t, m = job
        member = members[m]
        if isinstance(member, PairedMeasure):
            paired = member
        else:
            paired = lift(member, t, p).as_paired()
        return modulus_curve(paired, deltas, p).values

    curves = ordered_map(evaluate, jobs, max_workers)
    per_t = tuple(
        tuple(curves[i * len(members) : (i + 1) * len(members)])
        for i in range(len(ts))
    )
    sup_values = tuple(
        tuple(max(curve[k] for curve in rows) for k in range(len(deltas)))
        for rows in per_t
    )
    for rows, sups in zip(per_t, sup_values):
        for curve in rows:
            if any(v > s for v, s in zip(curve, sups)):
                raise SolverError("Sweep supremum below a member curve")

    k0 = _evaluation_index(deltas)
    sweep = FamilySweep(
        deltas=deltas,
        ts=ts,
        p=p,
        threshold=threshold,
        member_values=per_t,
        sup_values=sup_values,
        evaluation_index=k0,
        slopes=tuple(_slope(deltas, sups) for sups in sup_values),
        witnesses=tuple(
            int(np.argmax([curve[k0] for curve in rows])) for rows in per_t
        ),
    )
    logger.info(
        f"Sweep over {len(members)} members at delta={sweep.evaluation_delta!r}: "
        f"sup {sweep.worst!r}, {sweep.verdict}"
    )
    return sweep


@dataclass(frozen=True)
class SandwichReport:
    """Both sides of the two-sided bound on omega_nu(delta) via omega_mu."""

    delta: float
    p: float
    distance: float
    epsilon: float
    omega_mu: float
    omega_nu: float
    lower: float
    upper: float

    @property
    def lower_slack(self) -> float:
        return self.omega_nu - self.lower

    @property
    def upper_slack(self) -> float:
        return self.upper - self.omega_nu

    @property
    def holds(self) -> bool:
        return (
            self.lower_slack > -SANDWICH_SLACK
            and self.upper_slack > -SANDWICH_SLACK
        )


def sandwich_check(
    mu: PairedMeasure, nu: PairedMeasure, delta: float, p: float = 1.0
) -> SandwichReport:
    """
    Check (omega_mu - 2e) / (1 + 2e/delta) < omega_nu < (1 + 2e/delta)
    omega_mu + 2e with e just above W_p(mu, nu).

    A failing report points at a defect in transport or modulus.

    Raises:
        PreconditionError: If delta <= 0 or the measures are incomparable,
            including products built for another exponent
    """
    if not delta > 0.0:
        raise PreconditionError(f"delta must be positive, got {delta}")
    if mu.p != p or nu.p != p:
        raise PreconditionError(
            f"Measures built for p={mu.p:g} and p={nu.p:g}, checked at p={p:g}"
        )
    distance = wasserstein(mu.measure, nu.measure, p).distance
    epsilon = max(distance * (1.0 + SANDWICH_INFLATION), SANDWICH_FLOOR)
    omega_mu = modulus(mu, delta, p).value
    omega_nu = modulus(nu, delta, p).value
    factor = 1.0 + 2.0 * epsilon / delta

    report = SandwichReport(
        delta=delta,
        p=p,
        distance=distance,
        epsilon=epsilon,
        omega_mu=omega_mu,
        omega_nu=omega_nu,
        lower=(omega_mu - 2.0 * epsilon) / factor,
        upper=factor * omega_mu + 2.0 * epsilon,
    )
    if not report.holds:
        logger.error(f"Sandwich bound violated: {report}")
    return report


@dataclass(frozen=True)
class GluingRow:
    index: int
    input_distance: float
    output_distance: float


@dataclass(frozen=True)
class GluingTable:
    rows: Tuple[GluingRow, ...]
    graph_kernel: bool
    input_tol: float
    output_tol: float

    @property
    def converges(self) -> bool:
        """Every row with input distance <= input_tol has small output."""
        return all(
            row.output_distance <= self.output_tol
            for row in self.rows
            if row.input_distance <= self.input_tol
        )


def gluing_continuity_experiment(
    mu_seq: Sequence[PairedMeasure],
    nu_seq: Sequence[PairedMeasure],
    mu: PairedMeasure,
    nu: PairedMeasure,
    p: float = 1.0,
    counterexample: bool = False,
    input_tol: float = 1e-4,
    output_tol: float = 1e-3,
) -> GluingTable:
    """
    Tabulate W_p(mu_k glued with nu_k, mu glued with nu) against
    max(W_p(mu_k, mu), W_p(nu_k, nu)).

    Continuity is only guaranteed when nu is a graph measure; the
    experiment refuses other kernels unless counterexample is set, in
    which case it tabulates without asserting anything. Otherwise the
    inputs must come within input_tol of their limits, and every such row
    must have an output distance of at most output_tol.

    Raises:
        PreconditionError: If the sequences differ in length. Outside
            counterexample mode also if nu is not a graph measure, and when
            the inputs do not converge or the outputs do not follow them
    """
    if len(mu_seq) != len(nu_seq):
        raise PreconditionError("Sequences have different lengths")
    graph_kernel = is_graph_measure(nu, p)
    if not graph_kernel and not counterexample:
        raise PreconditionError("The kernel measure is not a graph measure")

    limit = glue_full(mu, nu)
    rows = []
    for k, (mu_k, nu_k) in enumerate(zip(mu_seq, nu_seq), start=1):
        input_distance = max(
            wasserstein(mu_k.measure, mu.measure, p).distance,
            wasserstein(nu_k.measure, nu.measure, p).distance,
        )
        output_distance = wasserstein(glue_full(mu_k, nu_k), limit, p).distance
        rows.append(GluingRow(k, input_distance, output_distance))
        logger.debug(
            f"Gluing row {k}: in {input_distance!r}, out {output_distance!r}"
        )

    table = GluingTable(tuple(rows), graph_kernel, input_tol, output_tol)
    if counterexample:
        return table

    close = [row for row in rows if row.input_distance <= input_tol]
    if not close:
        raise PreconditionError(
            f"Input sequences never come within {input_tol!r} of their limits"
        )
    if not table.converges:
        worst = max(close, key=lambda row: row.output_distance)
        raise PreconditionError(
            f"Gluing outputs did not follow their inputs: row {worst.index} "
            f"has input {worst.input_distance!r} but output "
            f"{worst.output_distance!r} above {output_tol!r}"
        )
    return table


@dataclass(frozen=True)
class HelperLemmaCertificate:
    epsilon: float
    delta_prime: float
    delta: float
    samples: int
    requested: int
    max_rho_y: float
    max_composed_rho_y: float
    holds: bool


def _modulus_below(mu: PairedMeasure, target: float, p: float) -> float:
    """Largest delta found by bisection with omega_mu(delta) < target."""
    hi = diameter(mu.x_space, mu.x_marginal.points)
    if hi == 0.0 or modulus(mu, hi, p).value < target:
        return max(hi, target)
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if modulus(mu, mid, p).value < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * hi:
            break
    return lo


def _random_support_measure(
    mu: PairedMeasure, rng: np.random.Generator
) -> DiscreteMeasure:
    count = int(rng.integers(1, 4))
    xs = rng.integers(0, mu.x_space.n, count)
    ys = rng.integers(0, mu.y_space.n, count)
    weights = rng.dirichlet(np.ones(count))
    return DiscreteMeasure(
        mu.space,
        tuple(((int(x), int(y)), float(w)) for x, y, w in zip(xs, ys, weights)),
    )


def helper_lemma_check(
    mu: PairedMeasure,
    epsilon: float,
    p: float = 1.0,
    samples: int = 100,
    seed: int = 0,
) -> HelperLemmaCertificate:
    """
    Certificate delta for the statement: W_p(mu, nu) < delta and a coupling
    gamma of (mu, nu) with rho^X(gamma) < delta force rho^Y(gamma) < epsilon.

    delta' is found by bisection so that omega_mu(delta') < epsilon / 2,
    and delta = min(delta' / 2, epsilon / 2). The statement is then sampled
    with nu = (1 - s) mu + s eta and gamma = (1 - s) id + s (mu x eta). For
    each sample the composed coupling of gamma with an optimal coupling of
    (nu, mu) is also checked to stay within omega_mu(delta').

    Raises:
        PreconditionError: If mu is not a graph measure or epsilon <= 0
    """
    if not epsilon > 0.0:
        raise PreconditionError(f"epsilon must be positive, got {epsilon}")
    if not is_graph_measure(mu, p):
        raise PreconditionError("The measure is not a graph measure")

    delta_prime = _modulus_below(mu, epsilon / 2.0, p)
    delta = min(delta_prime / 2.0, epsilon / 2.0)
    span = (
        diameter(mu.x_space, list(mu.x_space.points())) ** p
        + diameter(mu.y_space, list(mu.y_space.points())) ** p
    ) ** (1.0 / p)

    rng = np.random.default_rng(seed)
    base = mu.measure
    max_rho_y = 0.0
    max_composed = 0.0
    holds = True
    checked = 0
    for _ in range(samples):
        eta = _random_support_measure(mu, rng)
        # Keeps rho(gamma) below delta / 2, hence W_p(mu, nu) < delta.
        bound = 1.0 if span == 0.0 else (delta / (2.0 * span)) ** p
        s = float(rng.uniform(0.0, 1.0)) * min(1.0, bound)

        nu_atoms = [(z, (1.0 - s) * w) for z, w in base.atoms]
        nu_atoms += [(z, s * w) for z, w in eta.atoms]
        nu = DiscreteMeasure(mu.space, tuple(nu_atoms))

        triples = [(z, z, (1.0 - s) * w) for z, w in base.atoms]
        triples += [
            (a, b, s * w * v) for a, w in base.atoms for b, v in eta.atoms
        ]
        gamma = Coupling(coupling_on(base, triples), base, nu)
        rho_x, rho_y = cost_functionals(gamma.measure, p)
        if rho_x >= delta:
            continue
        checked += 1

        back = wasserstein(nu, base, p).coupling
        composed = compose_couplings(gamma, back)
        composed_x, composed_y = cost_functionals(composed.measure, p)

        max_rho_y = max(max_rho_y, rho_y)
        max_composed = max(max_composed, composed_y)
        if (
            rho_y >= epsilon
            or composed_x > delta_prime + 1e-9
            or composed_y >= epsilon / 2.0 + 1e-9
        ):
            holds = False
            logger.error(
                f"Helper bound failed: rho_Y {rho_y!r}, composed rho_X "
                f"{composed_x!r} against delta' {delta_prime!r}"
            )

    return HelperLemmaCertificate(
        epsilon=epsilon,
        delta_prime=delta_prime,
        delta=delta,
        samples=checked,
        requested=samples,
        max_rho_y=max_rho_y,
        max_composed_rho_y=max_composed,
        holds=holds,
    )


@dataclass(frozen=True)
class TailReport:
    """
    phi-integrals of every measure and the supremum over the family of
    the phi-mass outside each candidate set.
    """

    p: float
    phi_integrals: Tuple[float, ...]
    tails: Tuple[Tuple[float, ...], ...]
    sup_tails: Tuple[float, ...]
    nested: bool


def tail_report(
    family: Sequence[DiscreteMeasure],
    candidate_sets: Sequence[Iterable[Point]],
    p: float = 1.0,
) -> TailReport:
    """
    Sup over the family of the integral of 1 + rho(x0, x)^p outside each
    candidate set. Purely descriptive; sets are expected to be nested.

    Raises:
        MalformedInputError: If the family is empty
    """
    measures = list(family)
    if not measures:
        raise MalformedInputError("The family is empty")
    sets = [frozenset(s) for s in candidate_sets]
    nested = all(a <= b for a, b in zip(sets, sets[1:]))
    if not nested:
        logger.warning("Candidate sets are not nested")

    tails = tuple(
        tuple(phi_integral(mu, p, outside=s) for s in sets) for mu in measures
    )
    sup_tails = tuple(
        max(row[k] for row in tails) for k in range(len(sets))
    )
    return TailReport(
        p=p,
        phi_integrals=tuple(phi_integral(mu, p) for mu in measures),
        tails=tails,
        sup_tails=sup_tails,
        nested=nested,
    )
