#!/usr/bin/env python3
"""
Escape rates through shrinking holes.

Holes are unions of n-cylinders around a target point z. The open system
is the equilibrium Markov chain recoded on L-words with transitions into
the hole removed; its spectral radius gives the discrete escape rate and
its roof-tilted version the flow escape rate.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.stats import linregress

from deviations import BudgetExceeded
from perron import spectral_radius
from sft_core import (
    SftSpec, ThermoflowError, Word, birkhoff_sum, check_word, count_words, format_word,
    is_admissible, parse_word, window_codes, word_array, word_code,
)
from suspension import RoofFunction
from thermo import GibbsMarkovMeasure, cylinder_masses, cylinder_measure

logger = logging.getLogger(__name__)

DEFAULT_STATE_BUDGET = 2 ** 20
MC_BLOCK_SIZE = 50_000
MIN_TAIL_SURVIVORS = 100
AUTO_GRID_POINTS = 20
AUTO_GRID_SPAN = 4.0


class EscapeError(ThermoflowError):
    """Escape-rate computation cannot proceed."""
    pass


class NotActuallyPeriodic(EscapeError):
    """Declared period contradicts the target truncation."""
    pass


class PeriodNotPrime(EscapeError):
    """A proper divisor of the declared period is also a period."""
    pass


class HoleIsEverything(EscapeError):
    """Every state lies in the hole."""
    pass


class EmptyHole(EscapeError):
    """Hole contains no cylinder."""
    pass


class HoleError(EscapeError):
    """Hole words are malformed or miss the target."""
    pass


# ---------------------------------------------------------------------------
# Hole sequences
# ---------------------------------------------------------------------------

def _periods_of(word: Sequence[int], p: int) -> bool:
    return all(word[i] == word[i + p] for i in range(len(word) - p))


@dataclass(frozen=True, eq=False)
class HoleSequence:
    """I_n for n in a contiguous range, each a set of admissible n-words containing z's prefix."""

    spec: SftSpec
    target: Word
    period: int
    holes: Mapping[int, FrozenSet[Word]]

    def __post_init__(self):
        if not self.holes:
            raise EmptyHole("hole sequence has no holes")
        ns = sorted(self.holes)
        if ns != list(range(ns[0], ns[-1] + 1)):
            raise HoleError(f"hole indices must be contiguous, got {ns}")
        if len(self.target) < ns[-1]:
            raise HoleError(f"target truncation of length {len(self.target)} is shorter than n = {ns[-1]}")
        check_word(self.spec, self.target)
        for n, words in self.holes.items():
            if not words:
                raise EmptyHole(f"I_{n} is empty")
            for word in words:
                if len(word) != n:
                    raise HoleError(f"I_{n} contains {format_word(self.spec, word)!r} of length {len(word)}")
                if not is_admissible(self.spec, word):
                    raise HoleError(f"I_{n} contains inadmissible word {format_word(self.spec, word)!r}")
            if self.target[:n] not in words:
                raise HoleError(f"I_{n} does not contain the target prefix {format_word(self.spec, self.target[:n])!r}")
        if self.period < 0:
            raise HoleError(f"period must be non-negative, got {self.period}")
        if self.period > 0 and not _periods_of(self.target, self.period):
            raise NotActuallyPeriodic(f"target {format_word(self.spec, self.target)} does not have period {self.period}")

    @property
    def n_values(self) -> List[int]:
        return sorted(self.holes)

    @classmethod
    def cylinders_around(cls, spec: SftSpec, z: Sequence[int], n_range: Tuple[int, int], period: int = 0) -> 'HoleSequence':
        """I_n = [z_0 .. z_{n-1}] for n in the inclusive range."""
        lo, hi = n_range
        z = tuple(int(s) for s in z)
        return cls(spec=spec, target=z, period=int(period),
                   holes={n: frozenset([z[:n]]) for n in range(int(lo), int(hi) + 1)})

    @classmethod
    def from_word_lists(cls, spec: SftSpec, z: Sequence[int], holes: Mapping[Union[int, str], Iterable[Union[str, Sequence[int]]]],
                        period: int = 0) -> 'HoleSequence':
        """Holes given as word lists (strings or symbol sequences) keyed by n."""
        parsed = {}
        for n, words in holes.items():
            parsed[int(n)] = frozenset(
                parse_word(spec, w) if isinstance(w, str) else tuple(int(s) for s in w) for w in words
            )
        return cls(spec=spec, target=tuple(int(s) for s in z), period=int(period), holes=parsed)


def hole_measure(mu: GibbsMarkovMeasure, words: Iterable[Word]) -> float:
    """mu(I_n) for a union of cylinders."""
    return math.fsum(cylinder_measure(mu, w, marginal=True) for w in words)


def gamma(mu: GibbsMarkovMeasure, z: Sequence[int], p: int) -> float:
    """
    1 for aperiodic z, 1 - exp(S_p phi(z) - p P) for z of prime period p.

    The truncation is continued periodically when it is too short for S_p phi.
    """
    if p == 0:
        return 1.0
    z = tuple(z)
    if len(z) < 2 * p or not _periods_of(z, p):
        raise NotActuallyPeriodic(f"truncation of length {len(z)} does not show period {p}")
    for d in range(1, p):
        if p % d == 0 and _periods_of(z, d):
            raise PeriodNotPrime(f"period {p} is not prime: {d} is also a period")
    phi = mu.potential
    needed = p + phi.depth - 1
    orbit = (z[:p] * (needed // p + 1))[:max(needed, len(z))]
    return 1.0 - math.exp(birkhoff_sum(phi, orbit, p) - p * mu.pressure)


def hitting_time(hole: Iterable[Sequence[int]], word: Sequence[int]) -> Optional[int]:
    """
    Least m >= 1 whose n-window of the word lies in the hole.

    Returns None when no window inside the truncation hits.
    """
    hole = {tuple(w) for w in hole}
    if not hole:
        return None
    n = len(next(iter(hole)))
    word = tuple(word)
    for m in range(1, len(word) - n + 1):
        if word[m:m + n] in hole:
            return m
    return None


# ---------------------------------------------------------------------------
# Open systems
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OpenSystem:
    """
    The equilibrium chain on admissible L-words with the hole marked.

    `kernel` is the full transition matrix; `open_kernel` drops every
    transition into or out of a hole state.
    """

    mu: GibbsMarkovMeasure
    n: int
    length: int
    codes: np.ndarray
    start: np.ndarray
    in_hole: np.ndarray
    successors: np.ndarray
    probabilities: np.ndarray
    kernel: sparse.csr_matrix
    roof_values: Optional[np.ndarray]

    @cached_property
    def open_kernel(self) -> sparse.csr_matrix:
        keep = sparse.diags((~self.in_hole).astype(float))
        return (keep @ self.kernel @ keep).tocsr()

    @cached_property
    def open_start(self) -> np.ndarray:
        return np.where(self.in_hole, 0.0, self.start)


def build_open_system(mu: GibbsMarkovMeasure, hole: Iterable[Word], n: int, roof: Optional[RoofFunction] = None,
                      budget: int = DEFAULT_STATE_BUDGET) -> OpenSystem:
    """
    Recode mu on L-words, L = max(n, k - 1, k_f), so that hole, potential
    and roof are all functions of the state.
    """
    spec = mu.spec
    a = spec.alphabet_size
    hole = frozenset(tuple(w) for w in hole)
    if not hole:
        raise EmptyHole(f"I_{n} is empty")
    L = max(n, mu.state_length, roof.depth if roof is not None else 1)
    count = count_words(spec, L)
    if count > budget:
        raise BudgetExceeded(f"{count} open-system states of length {L} exceed the budget of {budget}")

    words = word_array(spec, L)
    codes = window_codes(words, a, L)[:, 0]
    start = cylinder_masses(mu, words)
    start = start / start.sum()

    hole_codes = np.array(sorted(word_code(w, a) for w in hole), dtype=np.int64)
    in_hole = np.isin(codes // a ** (L - n), hole_codes)
    if in_hole.all():
        raise HoleIsEverything(f"I_{n} covers every admissible {n}-word")

    chain_state = mu.state_lookup[codes % a ** mu.state_length]
    allowed = spec.matrix[words[:, -1]] > 0
    next_codes = (codes % a ** (L - 1))[:, None] * a + np.arange(a)[None, :]
    successors = np.where(allowed, np.searchsorted(codes, next_codes), -1)
    probabilities = np.where(allowed, mu.successor_probabilities[chain_state], 0.0)

    rows = np.repeat(np.arange(count), a)[allowed.ravel()]
    cols = successors.ravel()[allowed.ravel()]
    kernel = sparse.csr_matrix((probabilities.ravel()[allowed.ravel()], (rows, cols)), shape=(count, count))

    roof_values = roof.base.evaluate(words) if roof is not None else None
    logger.debug(f"Open system for I_{n}: {count} states, {int(in_hole.sum())} in the hole")
    return OpenSystem(mu=mu, n=n, length=L, codes=codes, start=start, in_hole=in_hole,
                      successors=successors, probabilities=probabilities, kernel=kernel,
                      roof_values=roof_values)


def discrete_escape_rate(mu: GibbsMarkovMeasure, hole: Iterable[Word], n: int,
                         system: Optional[OpenSystem] = None) -> float:
    """-log of the spectral radius of the open kernel; inf when it is nilpotent."""
    system = system or build_open_system(mu, hole, n)
    radius = spectral_radius(system.open_kernel)
    if radius <= 0.0:
        return math.inf
    return -math.log(radius)


def survivor_mass(mu: GibbsMarkovMeasure, hole: Iterable[Word], n: int, k: int,
                  system: Optional[OpenSystem] = None) -> float:
    """mu{x : sigma^i x not in I_n for 0 <= i < k} from open-kernel powers."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    system = system or build_open_system(mu, hole, n)
    vector = system.open_start
    transposed = system.open_kernel.T.tocsr()
    for _ in range(k - 1):
        vector = transposed @ vector
    return math.fsum(vector)


def survivor_mass_enumerated(mu: GibbsMarkovMeasure, hole: Iterable[Word], n: int, k: int,
                             budget: int = DEFAULT_STATE_BUDGET) -> float:
    """Same mass by enumerating every (n + k - 1)-word."""
    a = mu.spec.alphabet_size
    length = max(n + k - 1, mu.state_length)
    total = count_words(mu.spec, length)
    if total > budget:
        raise BudgetExceeded(f"{total} words of length {length} exceed the budget of {budget}")
    words = word_array(mu.spec, length)
    hole_codes = np.array(sorted(word_code(w, a) for w in hole), dtype=np.int64)
    windows = window_codes(words[:, :n + k - 1], a, n)
    survives = ~np.isin(windows, hole_codes).any(axis=1)
    return math.fsum(cylinder_masses(mu, words)[survives])


# ---------------------------------------------------------------------------
# Flow escape
# ---------------------------------------------------------------------------

def flow_escape_rate_spectral(mu: GibbsMarkovMeasure, f: RoofFunction, hole: Iterable[Word], n: int,
                              system: Optional[OpenSystem] = None) -> float:
    """
    Exact flow escape rate: the s with spectral radius of diag(e^{s f}) Q_open equal to 1.

    The root lies in [R / ||f||, R / min f] for the discrete rate R.
    """
    system = system or build_open_system(mu, hole, n, roof=f)
    discrete = discrete_escape_rate(mu, hole, n, system)
    if math.isinf(discrete):
        return math.inf
    lo, hi = discrete / f.sup_norm, discrete / f.min_value
    if hi - lo <= 1e-15 * max(1.0, hi):
        return hi
    roofs = system.roof_values

    def log_radius(s: float) -> float:
        return math.log(spectral_radius(sparse.diags(np.exp(s * roofs)) @ system.open_kernel))

    if log_radius(lo) >= 0.0:
        return lo
    if log_radius(hi) <= 0.0:
        return hi
    return float(brentq(log_radius, lo, hi, xtol=1e-14, rtol=1e-12))


def auto_t_grid(rate: float, points: int = AUTO_GRID_POINTS) -> List[float]:
    """Evenly spaced grid up to AUTO_GRID_SPAN e-foldings of the survival."""
    if not math.isfinite(rate) or rate <= 0:
        raise EscapeError(f"cannot build a time grid for rate {rate!r}")
    t_max = AUTO_GRID_SPAN / rate
    return [float(t) for t in np.linspace(t_max / points, t_max, points)]


@dataclass(frozen=True, eq=False)
class FlowEscapeEstimate:
    """Monte-Carlo flow escape rate with its tail regression."""

    rate: float
    band_lo: float
    band_hi: float
    stderr: float
    full_window_rate: float
    t_grid: List[float]
    survival: np.ndarray
    tail_survivors: int
    too_few_survivors: bool
    samples: int
    hitting_times: np.ndarray = field(repr=False)
    roof_sums: np.ndarray = field(repr=False)
    censored: np.ndarray = field(repr=False)


def _escape_block(system: OpenSystem, size: int, t_max: float, seed_sequence) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run `size` chains until they enter the hole or their roof sum reaches t_max."""
    rng = np.random.default_rng(seed_sequence)
    state = rng.choice(len(system.start), size=size, p=system.start)
    sums = np.zeros(size)
    times = np.zeros(size, dtype=np.int64)
    censored = np.zeros(size, dtype=bool)
    cumulative = np.cumsum(system.probabilities, axis=1)
    last_allowed = system.probabilities.shape[1] - 1 - np.argmax(system.probabilities[:, ::-1] > 0, axis=1)
    active = np.arange(size)
    step = 0
    while active.size:
        current = state[active]
        sums[active] += system.roof_values[current]
        step += 1
        u = rng.random(active.size)
        symbol = np.minimum((u[:, None] > cumulative[current]).sum(axis=1), last_allowed[current])
        following = system.successors[current, symbol]
        state[active] = following
        hit = system.in_hole[following]
        over = ~hit & (sums[active] >= t_max)
        times[active[hit | over]] = step
        censored[active[over]] = True
        active = active[~(hit | over)]
    return times, sums, censored


def _slope(t: np.ndarray, counts: np.ndarray, samples: int):
    mask = counts > 0
    if mask.sum() < 2:
        return math.nan, math.nan
    fit = linregress(t[mask], np.log(counts[mask] / samples))
    return -float(fit.slope), float(fit.stderr)


def flow_escape_rate(mu: GibbsMarkovMeasure, f: RoofFunction, hole: Iterable[Word], n: int,
                     t_grid: Sequence[float], n_samples: int, seed: Union[int, np.random.SeedSequence],
                     threads: int = 1, system: Optional[OpenSystem] = None,
                     block_size: int = MC_BLOCK_SIZE) -> FlowEscapeEstimate:
    """
    Estimate the decay rate of mu{S_{tau_n} f >= t}.

    Chains start from mu, sum the roof until tau_n, and are censored once
    the sum passes the last grid time. The rate is minus the slope of log
    survival over the upper half of the grid; the band is one regression
    standard error either side.
    """
    system = system or build_open_system(mu, hole, n, roof=f)
    grid = np.asarray(sorted(float(t) for t in t_grid))
    if grid.size < 2:
        raise EscapeError("flow escape rate needs at least two grid times")
    if n_samples < 1:
        raise EscapeError(f"flow escape rate needs at least one sample, got {n_samples}")
    sizes = [min(block_size, n_samples - s) for s in range(0, n_samples, block_size)]
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = root.spawn(len(sizes))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        blocks = list(pool.map(lambda job: _escape_block(system, job[0], float(grid[-1]), job[1]), zip(sizes, seeds)))

    times = np.concatenate([b[0] for b in blocks])
    sums = np.concatenate([b[1] for b in blocks])
    censored = np.concatenate([b[2] for b in blocks])
    counts = np.array([np.count_nonzero(sums >= t) for t in grid])

    tail = slice(grid.size // 2, grid.size)
    rate, stderr = _slope(grid[tail], counts[tail], n_samples)
    full_rate, _ = _slope(grid, counts, n_samples)
    tail_survivors = int(counts[-1])
    too_few = tail_survivors < MIN_TAIL_SURVIVORS
    if too_few:
        logger.warning(f"Only {tail_survivors} survivors at t = {grid[-1]!r} for I_{n}; band is unreliable")

    return FlowEscapeEstimate(
        rate=rate, band_lo=rate - stderr, band_hi=rate + stderr, stderr=stderr,
        full_window_rate=full_rate, t_grid=[float(t) for t in grid], survival=counts / n_samples,
        tail_survivors=tail_survivors, too_few_survivors=too_few, samples=n_samples,
        hitting_times=times, roof_sums=sums, censored=censored,
    )


def tau_chain_violations(estimate: FlowEscapeEstimate, epsilon: float) -> int:
    """
    Samples with S_{tau_n} f >= t and tau_n <= eps t for some grid t.

    Censored samples only carry a lower bound on tau_n and never count.
    """
    exact = ~estimate.censored
    violations = 0
    for t in estimate.t_grid:
        violations += int(np.count_nonzero(
            exact & (estimate.roof_sums >= t) & (estimate.hitting_times <= epsilon * t)
        ))
    return violations


# ---------------------------------------------------------------------------
# Nested condition
# ---------------------------------------------------------------------------

@dataclass
class ConditionResult:
    condition: int
    passed: bool
    detail: str
    per_n: Dict[int, bool] = field(default_factory=dict)


@dataclass
class NestedReport:
    conditions: List[ConditionResult]
    c: float
    rho: float
    l_n: Dict[int, int]
    kappa: float
    n0: Optional[int]
    measures: Dict[int, float]

    def condition(self, number: int) -> ConditionResult:
        return self.conditions[number - 1]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)


def _common_prefix(x: Sequence[int], y: Sequence[int]) -> int:
    m = 0
    for a, b in zip(x, y):
        if a != b:
            break
        m += 1
    return m


def nesting_violations(holes: HoleSequence) -> List[int]:
    """The n with some word of I_{n+1} outside I_n."""
    return [n for n in holes.n_values
            if n + 1 in holes.holes and any(w[:n] not in holes.holes[n] for w in holes.holes[n + 1])]


def nested_check(holes: HoleSequence, mu: GibbsMarkovMeasure, kappa_min: float = 0.0) -> NestedReport:
    """
    Check the five nested-hole conditions.

    1. each I_n is a union of admissible n-cylinders
    2. I_{n+1} is inside I_n
    3. mu(I_n) <= c rho^n with rho < 1 (least-squares fit, c raised to dominate)
    4. kappa = min l_n / n > kappa_min, l_n the depth of [z] containing I_n
    5. sigma^-p(I_n) within [z]_p lies in I_n for all n >= n0
    """
    spec = holes.spec
    ns = holes.n_values
    z, p = holes.target, holes.period

    first = {n: all(len(w) == n and is_admissible(spec, w) for w in holes.holes[n]) for n in ns}
    conditions = [ConditionResult(1, all(first.values()), "every hole word is an admissible n-word", first)]

    failing = nesting_violations(holes)
    second = {n: n not in failing for n in ns}
    conditions.append(ConditionResult(2, not failing, f"not nested at n = {failing}" if failing else "nested", second))

    measures = {n: hole_measure(mu, holes.holes[n]) for n in ns}
    if len(ns) >= 2:
        slope, intercept = np.polyfit(np.array(ns, dtype=float), np.log([measures[n] for n in ns]), 1)
        rho = float(math.exp(slope))
        c = max(math.exp(intercept), max(measures[n] / rho ** n for n in ns))
        dominated = all(measures[n] <= c * rho ** n * (1 + 1e-9) for n in ns)
        third = ConditionResult(3, rho < 1.0 and dominated, f"c = {c!r}, rho = {rho!r}")
    else:
        c, rho = math.nan, math.nan
        third = ConditionResult(3, False, "needs at least two holes to fit c and rho")
    conditions.append(third)

    l_n = {n: min(_common_prefix(w, z[:n]) for w in holes.holes[n]) for n in ns}
    kappa = min(l_n[n] / n for n in ns)
    fourth = {n: l_n[n] / n > kappa_min for n in ns}
    conditions.append(ConditionResult(4, kappa > kappa_min, f"kappa = {kappa!r}, kappa_min = {kappa_min!r}", fourth))

    if p == 0:
        conditions.append(ConditionResult(5, True, "target is aperiodic", {n: True for n in ns}))
        n0 = None
    else:
        head = z[:p]
        fifth = {}
        for n in ns:
            included = True
            for w in holes.holes[n]:
                candidate = head + w
                if is_admissible(spec, candidate) and candidate[:n] not in holes.holes[n]:
                    included = False
                    break
            fifth[n] = included
        n0 = None
        for n in reversed(ns):
            if not fifth[n]:
                break
            n0 = n
        detail = f"holds from n0 = {n0}" if n0 is not None else "fails at the largest n"
        conditions.append(ConditionResult(5, n0 is not None, detail, fifth))

    for result in conditions:
        logger.info(f"{'✅' if result.passed else '❌'} Nested condition {result.condition}: {result.detail}")
    return NestedReport(conditions=conditions, c=c, rho=rho, l_n=l_n, kappa=kappa, n0=n0, measures=measures)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class EscapeReport:
    """Per-n escape ratios with the roof constant W and the lower bound gamma / W."""

    gamma: float
    W: float
    mean_roof: float
    lower_bound: float
    identity_holds: bool
    rows: List[dict]
    nested: Optional[NestedReport] = None


def discrete_rows(mu: GibbsMarkovMeasure, holes: HoleSequence, threads: int = 1) -> List[dict]:
    """escape_discrete.csv rows."""
    g = gamma(mu, holes.target, holes.period)

    def one(n: int) -> dict:
        words = holes.holes[n]
        measure = hole_measure(mu, words)
        rate = discrete_escape_rate(mu, words, n)
        return {'n': n, 'mu_In': measure, 'R_discrete': rate, 'ratio_discrete': rate / measure, 'gamma': g}

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(one, holes.n_values))


def _flow_for_hole(mu, f, holes, n, t_grid, n_samples, seed_sequence, threads):
    words = holes.holes[n]
    system = build_open_system(mu, words, n, roof=f)
    spectral = flow_escape_rate_spectral(mu, f, words, n, system)
    grid = auto_t_grid(spectral) if t_grid == 'auto' else list(t_grid)
    estimate = flow_escape_rate(mu, f, words, n, grid, n_samples, seed_sequence, threads, system)
    return system, spectral, estimate


def flow_rows(mu: GibbsMarkovMeasure, f: RoofFunction, holes: HoleSequence, t_grid: Union[str, Sequence[float]],
              n_samples: int, seed: int, threads: int = 1) -> List[dict]:
    """escape_flow.csv rows."""
    seeds = dict(zip(holes.n_values, np.random.SeedSequence(seed).spawn(len(holes.n_values))))
    rows = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(
            lambda n: _flow_for_hole(mu, f, holes, n, t_grid, n_samples, seeds[n], 1), holes.n_values
        ))
    for n, (_, spectral, estimate) in zip(holes.n_values, results):
        rows.append({'n': n, 'R_flow': estimate.rate, 'band_lo': estimate.band_lo, 'band_hi': estimate.band_hi,
                     'R_flow_spectral': spectral, 'too_few_survivors': estimate.too_few_survivors})
    return rows


def theorem2_report(mu: GibbsMarkovMeasure, f: RoofFunction, holes: HoleSequence,
                    t_grid: Union[str, Sequence[float]], n_samples: int, seed: int,
                    threads: int = 1, kappa_min: float = 0.0) -> EscapeReport:
    """
    Discrete and flow escape ratios for every hole next to gamma(z) / W,
    W = 1 + ||f|| / integral f d mu.
    """
    if f.min_value == 1.0:
        logger.warning("min f = 1: the flow lower bound is stated for roofs strictly above 1")

    nested = nested_check(holes, mu, kappa_min)
    g = gamma(mu, holes.target, holes.period)
    mean_roof = f.with_measure(mu).mean
    W = 1.0 + f.sup_norm / mean_roof
    lower = g / W
    alternative = g * mean_roof / (mean_roof + f.sup_norm)
    identity = abs(lower - alternative) <= 1e-12 * max(1.0, abs(lower))
    if not identity:
        logger.error(f"❌ gamma / W = {lower!r} disagrees with gamma * mean / (mean + ||f||) = {alternative!r}")

    discrete = {row['n']: row for row in discrete_rows(mu, holes, threads)}
    flow = {row['n']: row for row in flow_rows(mu, f, holes, t_grid, n_samples, seed, threads)}

    rows = []
    for n in holes.n_values:
        d, fl = discrete[n], flow[n]
        nu_slab = d['mu_In'] / mean_roof
        rows.append({
            'n': n, 'mu_In': d['mu_In'], 'R_discrete': d['R_discrete'], 'ratio_discrete': d['ratio_discrete'],
            'gamma': g, 'R_flow': fl['R_flow'], 'band_lo': fl['band_lo'], 'band_hi': fl['band_hi'],
            'nu_slab': nu_slab, 'ratio_flow': fl['R_flow'] / nu_slab, 'W': W, 'lower_bound': lower,
            'nested_1': nested.condition(1).per_n[n], 'nested_2': nested.condition(2).per_n[n],
            'nested_3': nested.condition(3).passed, 'nested_4': nested.condition(4).per_n[n],
            'nested_5': nested.condition(5).per_n[n],
            'R_flow_spectral': fl['R_flow_spectral'], 'ratio_flow_spectral': fl['R_flow_spectral'] / nu_slab,
        })
        # band is in rate units; ratio_flow is R_flow / nu_slab
        if rows[-1]['ratio_flow'] < lower - 3 * (fl['band_hi'] - fl['R_flow']) / nu_slab:
            logger.warning(f"❌ ratio_flow = {rows[-1]['ratio_flow']!r} below gamma / W = {lower!r} at n = {n}")

    logger.info(f"✅ Escape report for {len(rows)} holes: gamma = {g!r}, W = {W!r}")
    return EscapeReport(gamma=g, W=W, mean_roof=mean_roof, lower_bound=lower,
                        identity_holds=identity, rows=rows, nested=nested)
