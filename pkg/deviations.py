#!/usr/bin/env python3
"""
Large-deviation bound for suspension flows and empirical deviation masses.

The bound's constants come from the concentration constant D of the base
measure and the norms of the roof and observable. Empirical deviation
masses are computed exactly by word enumeration and estimated by Monte
Carlo; D itself is fitted from exact discrete deviation probabilities.
"""

import bisect
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from sft_core import (
    LocallyConstantFunction, ThermoflowError, birkhoff_sums, count_words, extend_words,
    to_word, word_array,
)
from suspension import FlowObservable, flow_march, nu_integral, real_roots, sample_nu_batch
from thermo import GibbsMarkovMeasure, cylinder_masses, integrate, sample_orbits

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 2 ** 24
DEVIATION_SLACK = 1e-12
PREFIX_LENGTH = 8
CHUNK_PREFIXES = 16
MC_BLOCK_SIZE = 10_000


class DeviationError(ThermoflowError):
    """Large-deviation computation cannot proceed."""
    pass


class DegenerateSeminorm(DeviationError):
    """A Lipschitz seminorm needed by the bound is zero."""
    pass


class BelowThreshold(DeviationError):
    """Bound requested for t below the validity threshold T0."""
    pass


class BudgetExceeded(ThermoflowError):
    """Exact enumeration would exceed the word budget."""
    pass


# ---------------------------------------------------------------------------
# Bound constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LDBoundConstants:
    """
    Explicit constants of the flow large-deviation bound.

    C1 and C2 come from matching the two-term bound
        2t||f|| exp(-C_i (t/||f|| - 2) eps1^2 / s_i^2)
    against the explicit exponentials
        2t||f|| exp(-(1/(4D)) / |g_i|^2 * n1(t) * (eps1 / (2 s_i))^2)
    with g_1 = F~, s_1 = 1 and g_2 = f, s_2 = ||f|| ||F||. Using
    n1(t) >= t/||f|| - 2 this holds with C_i = 1 / (16 D |g_i|^2).
    """

    epsilon: float
    D: float
    f_sup: float
    F_sup: float
    F_tilde_seminorm: float
    f_seminorm: float
    C1: float
    C2: float
    C: float
    X: float
    Y: float
    T0: float

    @classmethod
    def from_norms(cls, epsilon: float, D: float, f_sup: float, F_sup: float,
                   F_tilde_seminorm: float, f_seminorm: float) -> 'LDBoundConstants':
        if epsilon <= 0:
            raise DeviationError(f"epsilon must be positive, got {epsilon}")
        if D <= 0:
            raise DeviationError(f"D must be positive, got {D}")
        if F_tilde_seminorm == 0:
            raise DegenerateSeminorm("lap integral F~ is constant: |F~|_theta = 0")
        if f_seminorm == 0:
            raise DegenerateSeminorm("roof is constant: |f|_theta = 0")
        if F_sup == 0:
            raise DegenerateSeminorm("observable vanishes: ||F|| = 0")

        C1 = 1.0 / (16.0 * D * F_tilde_seminorm ** 2)
        C2 = 1.0 / (16.0 * D * f_seminorm ** 2)
        C = min(C1, C2)
        fF = f_sup * F_sup
        X = C * epsilon ** 2 / (4.0 * f_sup ** 3 * F_sup ** 2)
        Y = math.log(4.0 * f_sup) + 2.0 * C * epsilon ** 2 / (4.0 * fF ** 2)
        T0 = max(2.0 * f_sup, 2.0 * fF * (1.0 + f_sup) / epsilon)
        return cls(epsilon=epsilon, D=D, f_sup=f_sup, F_sup=F_sup,
                   F_tilde_seminorm=F_tilde_seminorm, f_seminorm=f_seminorm,
                   C1=C1, C2=C2, C=C, X=X, Y=Y, T0=T0)

    def B(self, seminorm: float) -> float:
        """Concentration rate (4 D |g|^2)^-1."""
        return 1.0 / (4.0 * self.D * seminorm ** 2)

    def epsilon1(self, t: float) -> float:
        return self.epsilon - self.f_sup * self.F_sup * (1.0 + self.f_sup) / t

    def epsilon2(self, t: float) -> float:
        return self.epsilon1(t) / 2.0

    def epsilon3(self, t: float) -> float:
        return self.epsilon1(t) / (2.0 * self.f_sup * self.F_sup)

    def n1(self, t: float) -> int:
        return math.floor(t / self.f_sup - 1.0)

    @property
    def collapse_licensed(self) -> bool:
        """Whether the two-term bound is dominated by the single exponential."""
        return self.f_sup * self.F_sup >= 1.0


@dataclass(frozen=True)
class BoundEvaluation:
    """The bound at one t, with the two-term forms it is derived from."""

    t: float
    theorem: float
    log_theorem: float
    proposition: float
    explicit: float
    collapse_licensed: bool


def ld_constants(mu: GibbsMarkovMeasure, F: FlowObservable, epsilon: float, D: float) -> LDBoundConstants:
    """Bound constants for observable F over its roof under mu."""
    f = F.roof
    constants = LDBoundConstants.from_norms(
        epsilon=float(epsilon), D=float(D), f_sup=f.sup_norm, F_sup=F.sup_norm,
        F_tilde_seminorm=F.tilde.seminorm, f_seminorm=f.seminorm,
    )
    logger.info(f"Bound constants: X = {constants.X!r}, Y = {constants.Y!r}, T0 = {constants.T0!r}")
    if not constants.collapse_licensed:
        logger.warning(f"||f|| ||F|| = {f.sup_norm * F.sup_norm!r} < 1: single-exponential form does not dominate")
    return constants


def proposition_bound(constants: LDBoundConstants, t: float) -> float:
    """Two-term bound in the C1, C2 form."""
    c = constants
    scale = 2.0 * t * c.f_sup
    length = t / c.f_sup - 2.0
    eps1 = c.epsilon1(t)
    first = math.exp(-c.C1 * length * eps1 ** 2)
    second = math.exp(-c.C2 * length * eps1 ** 2 / (c.f_sup * c.F_sup) ** 2)
    return scale * (first + second)


def explicit_bound(constants: LDBoundConstants, t: float) -> float:
    """Two-term bound in the explicit D, n1(t) form."""
    c = constants
    scale = 2.0 * t * c.f_sup
    n1 = c.n1(t)
    first = math.exp(-c.B(c.F_tilde_seminorm) * n1 * c.epsilon2(t) ** 2)
    second = math.exp(-c.B(c.f_seminorm) * n1 * c.epsilon3(t) ** 2)
    return scale * (first + second)


def ld_bound(constants: LDBoundConstants, t: float) -> BoundEvaluation:
    """
    exp(-X t + log t + Y) for t >= T0.

    Raises:
        BelowThreshold: t < T0
    """
    if t < constants.T0:
        raise BelowThreshold(f"t = {t!r} is below T0 = {constants.T0!r}")
    log_value = -constants.X * t + math.log(t) + constants.Y
    return BoundEvaluation(
        t=float(t), theorem=math.exp(log_value), log_theorem=log_value,
        proposition=proposition_bound(constants, t), explicit=explicit_bound(constants, t),
        collapse_licensed=constants.collapse_licensed,
    )


# ---------------------------------------------------------------------------
# Exact deviation masses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactDeviation:
    """Deviation mass for the >= eps and > eps events."""

    at_least: float
    strictly: float
    words: int


def required_length(F: FlowObservable, t: float, level_mode: str) -> int:
    """Truncation length on which the flow average over [0, t] is constant per cylinder."""
    reach = t if level_mode == 'zero' else t + F.roof.sup_norm
    return int(math.ceil(reach)) + F.tilde_depth


def _chunks(spec, length: int) -> List[np.ndarray]:
    """Fixed prefix blocks; the partition does not depend on the thread count."""
    prefixes = word_array(spec, min(PREFIX_LENGTH, length))
    return [prefixes[i:i + CHUNK_PREFIXES] for i in range(0, len(prefixes), CHUNK_PREFIXES)]


def _zero_level_chunk(mu, F, mean, epsilon, t, length, prefixes) -> Tuple[float, float]:
    words = extend_words(mu.spec, prefixes, length)
    masses = cylinder_masses(mu, words)
    averages = flow_march(F, words, np.zeros(len(words)), t).integrals / t
    deviation = np.abs(averages - mean)
    at_least = math.fsum(masses[deviation >= epsilon - DEVIATION_SLACK])
    strictly = math.fsum(masses[deviation > epsilon + DEVIATION_SLACK])
    return at_least, strictly


def _deviating_lengths(poly: Polynomial, lo: float, hi: float, epsilon: float) -> Tuple[float, float]:
    """Lengths of {s in [lo, hi): |poly(s)| >= eps} and {... > eps}."""
    cuts = set(real_roots(poly - epsilon, lo, hi)) | set(real_roots(poly + epsilon, lo, hi))
    points = [lo] + sorted(cuts) + [hi]
    at_least, strictly = [], []
    for a, b in zip(points, points[1:]):
        value = abs(float(poly((a + b) / 2.0)))
        if value >= epsilon - DEVIATION_SLACK:
            at_least.append(b - a)
        if value > epsilon + DEVIATION_SLACK:
            strictly.append(b - a)
    return math.fsum(at_least), math.fsum(strictly)


def _nu_level_chunk(mu, F, mean, epsilon, t, length, prefixes) -> Tuple[float, float]:
    """
    For each word, the average from level s is a piecewise polynomial in s;
    pieces break where s + t crosses a roof.
    """
    f = F.roof
    words = extend_words(mu.spec, prefixes, length)
    masses = cylinder_masses(mu, words)
    roof_depth, F_depth = f.depth, F.depth
    laps = length - F.tilde_depth + 1
    at_least, strictly = [], []
    for row, mass in zip(words, masses):
        word = to_word(row)
        roofs = [f(word[j:j + roof_depth]) for j in range(laps)]
        tildes = [F.tilde(word[j:j + F.tilde_depth]) for j in range(laps)]
        partial = [0.0]
        for r in roofs:
            partial.append(partial[-1] + r)
        first = roofs[0]
        cuts = sorted({p - t for p in partial if 0.0 < p - t < first})
        edges = [0.0] + cuts + [first]
        start = F.polynomials[word[:F_depth]].integ()
        ge, gt = [], []
        for lo, hi in zip(edges, edges[1:]):
            lap = bisect.bisect_right(partial, (lo + hi) / 2.0 + t) - 1
            end = F.polynomials[word[lap:lap + F_depth]].integ()
            before = math.fsum(tildes[:lap])
            average = (before + end(Polynomial([t - partial[lap], 1.0])) - start) / t - mean
            a, b = _deviating_lengths(average, lo, hi, epsilon)
            ge.append(a)
            gt.append(b)
        at_least.append(mass * math.fsum(ge))
        strictly.append(mass * math.fsum(gt))
    return math.fsum(at_least), math.fsum(strictly)


def empirical_Z_exact(mu: GibbsMarkovMeasure, F: FlowObservable, epsilon: float, t: float,
                      level_mode: str = 'zero', budget: int = DEFAULT_BUDGET, threads: int = 1) -> ExactDeviation:
    """
    Exact mass of {|average over [0, t] - integral F d nu| >= eps}.

    level_mode 'zero' starts every orbit at level 0 and weighs by mu;
    'nu' integrates over starting levels and weighs by nu.

    Raises:
        BudgetExceeded: more admissible words than `budget`
    """
    if level_mode not in ('zero', 'nu'):
        raise DeviationError(f"unknown level mode {level_mode!r}")
    if t <= 0:
        raise DeviationError(f"t must be positive, got {t}")
    length = max(required_length(F, t, level_mode), mu.state_length)
    total = count_words(mu.spec, length)
    if total > budget:
        raise BudgetExceeded(f"{total} words of length {length} exceed the budget of {budget}")

    mean = nu_integral(mu, F)
    worker = _zero_level_chunk if level_mode == 'zero' else _nu_level_chunk
    chunks = _chunks(mu.spec, length)
    logger.debug(f"Enumerating {total} words of length {length} in {len(chunks)} chunks")

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda prefixes: worker(mu, F, mean, epsilon, t, length, prefixes), chunks))

    at_least = math.fsum(p[0] for p in parts)
    strictly = math.fsum(p[1] for p in parts)
    if level_mode == 'nu':
        mean_roof = integrate(mu, F.roof.base)
        at_least, strictly = at_least / mean_roof, strictly / mean_roof
    return ExactDeviation(at_least=at_least, strictly=strictly, words=total)


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    std_error: float
    samples: int
    hits: int


def _mc_block(mu, F, mean, epsilon, t, length, level_mode, size, seed_sequence) -> int:
    rng = np.random.default_rng(seed_sequence)
    if level_mode == 'zero':
        words = sample_orbits(mu, length, size, rng)
        levels = np.zeros(size)
    else:
        words, levels = sample_nu_batch(mu, F.roof, size, length, rng)
    averages = flow_march(F, words, levels, t).integrals / t
    return int(np.count_nonzero(np.abs(averages - mean) >= epsilon - DEVIATION_SLACK))


def empirical_Z_mc(mu: GibbsMarkovMeasure, F: FlowObservable, epsilon: float, t: float, n_samples: int,
                   seed: int, level_mode: str = 'zero', threads: int = 1,
                   block_size: int = MC_BLOCK_SIZE) -> MonteCarloEstimate:
    """
    Monte-Carlo frequency of the deviation event with a binomial standard error.

    Samples are drawn in fixed-size blocks, each with its own generator
    spawned from `seed`, so the estimate does not depend on `threads`.
    """
    if n_samples < 1:
        raise DeviationError(f"n_samples must be at least 1, got {n_samples}")
    if level_mode not in ('zero', 'nu'):
        raise DeviationError(f"unknown level mode {level_mode!r}")
    length = max(required_length(F, t, level_mode), mu.state_length)
    mean = nu_integral(mu, F)
    sizes = [min(block_size, n_samples - start) for start in range(0, n_samples, block_size)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        hits = sum(pool.map(
            lambda job: _mc_block(mu, F, mean, epsilon, t, length, level_mode, job[0], job[1]),
            zip(sizes, seeds),
        ))

    p = hits / n_samples
    return MonteCarloEstimate(estimate=p, std_error=math.sqrt(p * (1.0 - p) / n_samples),
                              samples=n_samples, hits=hits)


# ---------------------------------------------------------------------------
# Concentration constant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitPoint:
    function: int
    m: int
    epsilon: float
    probability: float
    implied_D: Optional[float]


@dataclass(frozen=True)
class FitResult:
    D: float
    points: List[FitPoint] = field(default_factory=list)
    fallback: bool = False


def discrete_deviation(mu: GibbsMarkovMeasure, g: LocallyConstantFunction, m: int, epsilon: float,
                       budget: int = DEFAULT_BUDGET) -> float:
    """Exact mu{|S_m g / m - integral g| >= eps}."""
    length = max(m + g.depth - 1, mu.state_length)
    total = count_words(mu.spec, length)
    if total > budget:
        raise BudgetExceeded(f"{total} words of length {length} exceed the budget of {budget}")
    words = word_array(mu.spec, length)
    masses = cylinder_masses(mu, words)
    deviation = np.abs(birkhoff_sums(g, words, m) / m - integrate(mu, g))
    return math.fsum(masses[deviation >= epsilon - DEVIATION_SLACK])


def implied_D(probability: float, m: int, epsilon: float, seminorm: float) -> float:
    """Least D with 2 exp(-m eps^2 / (4 D |g|^2)) >= probability."""
    return m * epsilon ** 2 / (4.0 * seminorm ** 2 * -math.log(probability / 2.0))


def fit_D(mu: GibbsMarkovMeasure, functions: Sequence[LocallyConstantFunction], m_grid: Sequence[int],
          epsilon_grid: Sequence[float], default_D: float = 1.0, margin: float = 0.1,
          budget: int = DEFAULT_BUDGET) -> FitResult:
    """
    Smallest D consistent with the discrete concentration inequality on the
    grid, times (1 + margin).

    Points with zero probability or a constant function carry no constraint;
    when no point does, the default D is returned.
    """
    if not functions or not m_grid or not epsilon_grid:
        raise DeviationError("fit_D needs nonempty functions, m grid and epsilon grid")
    points = []
    for index, g in enumerate(functions):
        for m in m_grid:
            for epsilon in epsilon_grid:
                probability = discrete_deviation(mu, g, int(m), float(epsilon), budget)
                implied = None
                if probability > 0 and g.seminorm > 0:
                    implied = implied_D(probability, int(m), float(epsilon), g.seminorm)
                points.append(FitPoint(function=index, m=int(m), epsilon=float(epsilon),
                                       probability=probability, implied_D=implied))

    constrained = [p for p in points if p.implied_D is not None]
    if not constrained:
        logger.warning(f"All deviation probabilities are zero on the grid; using default D = {default_D}")
        return FitResult(D=float(default_D), points=points, fallback=True)

    worst = max(constrained, key=lambda p: p.implied_D)
    D = worst.implied_D * (1.0 + margin)
    logger.info(f"Fitted D = {D!r} (function {worst.function}, m = {worst.m}, eps = {worst.epsilon})")
    return FitResult(D=D, points=points)


def default_fit_functions(F: FlowObservable) -> List[LocallyConstantFunction]:
    """Functions fit_D tests the concentration inequality on: the lap integral F~ and the roof."""
    return [F.tilde, F.roof.base]


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def bound_rows(constants: LDBoundConstants, t_grid: Sequence[float]) -> List[dict]:
    """ld_bound.csv rows; grid points below T0 are skipped with a log line."""
    rows = []
    for t in t_grid:
        if t < constants.T0:
            logger.info(f"Skipping t = {t} below T0 = {constants.T0!r}")
            continue
        evaluation = ld_bound(constants, float(t))
        rows.append({
            't': float(t), 'bound_thm1': evaluation.theorem, 'bound_prop32': evaluation.proposition,
            'X': constants.X, 'Y': constants.Y, 'T0': constants.T0, 'D': constants.D,
            'epsilon': constants.epsilon,
        })
    return rows


def empirical_rows(mu: GibbsMarkovMeasure, F: FlowObservable, epsilon: float, t_grid: Sequence[float],
                   mc_samples: int, seed: int, level_mode: str, budget: int, threads: int) -> List[dict]:
    """ld_empirical.csv rows; Z_exact is empty where enumeration exceeds the budget."""
    rows = []
    seeds = np.random.SeedSequence(seed).generate_state(len(t_grid))
    for t, t_seed in zip(t_grid, seeds):
        t = float(t)
        try:
            exact = empirical_Z_exact(mu, F, epsilon, t, level_mode, budget, threads)
            Z_exact, Z_strict = exact.at_least, exact.strictly
        except BudgetExceeded as e:
            logger.warning(f"Exact Z skipped at t = {t}: {e}")
            Z_exact = Z_strict = None
        Z_mc = mc_stderr = None
        if mc_samples > 0:
            estimate = empirical_Z_mc(mu, F, epsilon, t, mc_samples, int(t_seed), level_mode, threads)
            Z_mc, mc_stderr = estimate.estimate, estimate.std_error
        rows.append({'t': t, 'Z_exact': Z_exact, 'Z_exact_strict': Z_strict, 'Z_mc': Z_mc,
                     'mc_stderr': mc_stderr, 'epsilon': float(epsilon)})
    return rows


def theorem1_rows(mu: GibbsMarkovMeasure, F: FlowObservable, constants: LDBoundConstants, t_grid: Sequence[float],
                  mc_samples: int, seed: int, level_mode: str, budget: int, threads: int) -> List[dict]:
    """theorem1.csv rows: empirical masses next to the bound for every t >= T0."""
    feasible = [float(t) for t in t_grid if t >= constants.T0]
    if len(feasible) < len(t_grid):
        logger.info(f"Dropped {len(t_grid) - len(feasible)} grid points below T0 = {constants.T0!r}")
    empirical = empirical_rows(mu, F, constants.epsilon, feasible, mc_samples, seed, level_mode, budget, threads)
    rows = []
    for row in empirical:
        evaluation = ld_bound(constants, row['t'])
        if row['Z_exact'] is not None and row['Z_exact'] > evaluation.theorem:
            logger.warning(f"❌ Z_exact = {row['Z_exact']!r} exceeds the bound {evaluation.theorem!r} at t = {row['t']}")
        rows.append({
            't': row['t'], 'Z_exact': row['Z_exact'], 'Z_mc': row['Z_mc'], 'mc_stderr': row['mc_stderr'],
            'bound_thm1': evaluation.theorem, 'bound_prop32': evaluation.proposition,
            'X': constants.X, 'Y': constants.Y, 'T0': constants.T0, 'D': constants.D,
            'epsilon': constants.epsilon,
        })
    return rows
