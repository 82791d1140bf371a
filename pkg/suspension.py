#!/usr/bin/env python3
"""
Suspension semi-flow over a subshift.

Points are (x, s) with 0 <= s < f(x); the flow moves s upward at unit
speed and resets to (sigma x, 0) at the roof. Observables are polynomials
in s on each cylinder, so their lap integrals, sup norms and the
condition constant C are all exact.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial

from sft_core import (
    LocallyConstantFunction, MissingWord, SftSpec, ThermoflowError, Word, WordTooShort,
    enumerate_words, format_word, is_admissible, parse_word, window_codes, word_array,
)
from thermo import GibbsMarkovMeasure, cylinder_masses, integrate, sample_orbits

logger = logging.getLogger(__name__)

MAX_DEGREE = 8
LEVEL_TOLERANCE = 1e-9
ROOT_IMAG_TOLERANCE = 1e-9


class FlowError(ThermoflowError):
    """Invalid roof, flow point or observable."""
    pass


class RoofTooLow(FlowError):
    """Roof function takes a value below 1."""
    pass


class DegreeTooHigh(FlowError):
    """Observable polynomial degree exceeds the supported maximum."""
    pass


# ---------------------------------------------------------------------------
# Roof and points
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RoofFunction:
    """A locally constant roof f >= 1, optionally with its mean under a measure."""

    base: LocallyConstantFunction
    mean: Optional[float] = None

    def __post_init__(self):
        if self.base.min_value < 1.0:
            raise RoofTooLow(f"roof below 1: minimum value is {self.base.min_value!r}")

    @property
    def spec(self) -> SftSpec:
        return self.base.spec

    @property
    def depth(self) -> int:
        return self.base.depth

    @property
    def min_value(self) -> float:
        return self.base.min_value

    @property
    def sup_norm(self) -> float:
        return self.base.sup_norm

    @property
    def seminorm(self) -> float:
        return self.base.seminorm

    def __call__(self, word: Sequence[int]) -> float:
        return self.base(word)

    def with_measure(self, mu: GibbsMarkovMeasure) -> 'RoofFunction':
        """Copy carrying the mean of f under mu."""
        return RoofFunction(base=self.base, mean=integrate(mu, self.base))


@dataclass(frozen=True)
class FlowPoint:
    """(x, s) with x given by a finite truncation and 0 <= s < f(x)."""

    base_word: Word
    level: float


def make_point(f: RoofFunction, word: Sequence[int], level: float = 0.0) -> FlowPoint:
    """Validated FlowPoint."""
    word = tuple(int(s) for s in word)
    roof = f(word)
    if not 0.0 <= level < roof:
        raise FlowError(f"level {level!r} outside [0, {roof!r}) on {format_word(f.spec, word)}")
    return FlowPoint(base_word=word, level=float(level))


# ---------------------------------------------------------------------------
# Flow map
# ---------------------------------------------------------------------------

def flow_step(f: RoofFunction, p: FlowPoint, t: float) -> Tuple[FlowPoint, int, float]:
    """
    Phi^t(p).

    m is the unique lap count with S_m f <= s + t < S_{m+1} f; a tie with a
    roof crossing goes to the next lap.

    Returns:
        (new point, m, new level)
    """
    if t < 0:
        raise ValueError(f"flow time must be non-negative, got {t}")
    word = p.base_word
    target = p.level + t
    k = f.depth
    laps = 0
    partial = 0.0
    while True:
        if len(word) < laps + k:
            raise WordTooShort(f"flow for time {t} needs more than {len(word)} symbols")
        roof = f(word[laps:laps + k])
        if partial + roof <= target:
            partial += roof
            laps += 1
        else:
            break
    level = target - partial
    return FlowPoint(base_word=word[laps:], level=level), laps, level


def lap_decomposition(f: RoofFunction, word: Sequence[int], t: float) -> Tuple[int, float]:
    """t = S_n f(x) + t(x) for a point starting at level 0; returns (n, t(x))."""
    _, laps, residual = flow_step(f, FlowPoint(base_word=tuple(word), level=0.0), t)
    return laps, residual


def semigroup_check(f: RoofFunction, p: FlowPoint, t1: float, t2: float,
                    tol: float = LEVEL_TOLERANCE) -> bool:
    """Phi^(t1+t2)(p) == Phi^t2(Phi^t1(p)) with exact base words and levels within tol."""
    direct, _, _ = flow_step(f, p, t1 + t2)
    middle, _, _ = flow_step(f, p, t1)
    composed, _, _ = flow_step(f, middle, t2)
    if direct.base_word == composed.base_word:
        return abs(direct.level - composed.level) <= tol
    # a tie resolved differently by rounding: same point seen from both sides of the roof
    longer, shorter = (direct, composed) if len(direct.base_word) > len(composed.base_word) else (composed, direct)
    if longer.base_word[1:] != shorter.base_word:
        return False
    return abs(longer.level - f(longer.base_word)) <= tol and shorter.level <= tol


# ---------------------------------------------------------------------------
# Polynomial helpers
# ---------------------------------------------------------------------------

def real_roots(poly: Polynomial, lo: float, hi: float) -> List[float]:
    """Sorted real roots strictly inside (lo, hi)."""
    poly = poly.trim()
    if poly.degree() < 1:
        return []
    roots = []
    for root in poly.roots():
        if abs(root.imag) <= ROOT_IMAG_TOLERANCE * max(1.0, abs(root.real)) and lo < root.real < hi:
            roots.append(float(root.real))
    return sorted(set(roots))


def abs_integral(poly: Polynomial, lo: float, hi: float) -> float:
    """Integral of |poly| over [lo, hi] by splitting at the real roots."""
    antiderivative = poly.integ()
    points = [lo] + real_roots(poly, lo, hi) + [hi]
    return math.fsum(abs(antiderivative(b) - antiderivative(a)) for a, b in zip(points, points[1:]))


def abs_max(poly: Polynomial, lo: float, hi: float) -> float:
    """max |poly| over the closed interval [lo, hi]."""
    candidates = [lo, hi] + real_roots(poly.deriv(), lo, hi)
    return max(abs(float(poly(x))) for x in candidates)


def _horner(coefficients: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise polynomial evaluation; coefficients[i] are increasing powers for x[i]."""
    result = np.zeros_like(x, dtype=float)
    for j in range(coefficients.shape[1] - 1, -1, -1):
        result = result * x + coefficients[:, j]
    return result


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FlowObservable:
    """
    F(x, s) = sum_j c_j(w) s^j on each depth-k_F cylinder [w].

    The exact lap integral F~(x) = integral_0^f(x) F(x, s) ds lives on
    words of depth max(k_F, k_f).
    """

    spec: SftSpec
    roof: RoofFunction
    depth: int
    degree: int
    coefficients: Mapping[Word, Tuple[float, ...]]

    @cached_property
    def polynomials(self) -> Dict[Word, Polynomial]:
        return {word: Polynomial(c) for word, c in self.coefficients.items()}

    @cached_property
    def tilde_depth(self) -> int:
        return max(self.depth, self.roof.depth)

    @cached_property
    def antiderivative_table(self) -> np.ndarray:
        """Antiderivative coefficients (value 0 at s = 0) indexed by base-a word code."""
        a = self.spec.alphabet_size
        table = np.full((a ** self.depth, self.degree + 2), np.nan)
        for word, poly in self.polynomials.items():
            coef = poly.integ().coef
            row = np.zeros(self.degree + 2)
            row[:len(coef)] = coef
            code = window_codes(np.array([[s - 1 for s in word]]), a, self.depth)[0, 0]
            table[code] = row
        table.setflags(write=False)
        return table

    @cached_property
    def tilde(self) -> LocallyConstantFunction:
        """F~ as a locally constant function of depth max(k_F, k_f)."""
        K = self.tilde_depth
        values = {}
        for word in enumerate_words(self.spec, K):
            roof = self.roof(word)
            values[word] = float(self.polynomials[word[:self.depth]].integ()(roof))
        return LocallyConstantFunction(spec=self.spec, depth=K, values=values)

    @cached_property
    def sup_norm(self) -> float:
        """sup |F| over the closed region 0 <= s <= f(x)."""
        best = 0.0
        for word in enumerate_words(self.spec, self.tilde_depth):
            best = max(best, abs_max(self.polynomials[word[:self.depth]], 0.0, self.roof(word)))
        return best

    @cached_property
    def condition_constant(self) -> float:
        """
        Least C with integral_0^min(f(x), f(y)) |F(x, s) - F(y, s)| ds <= C d_theta(x, y).

        Pairs of K-words with first difference at index m have distance theta^m;
        points agreeing on K symbols contribute nothing.
        """
        K = self.tilde_depth
        theta = self.spec.theta
        words = enumerate_words(self.spec, K)
        best = 0.0
        for i, x in enumerate(words):
            px = self.polynomials[x[:self.depth]]
            for y in words[i + 1:]:
                py = self.polynomials[y[:self.depth]]
                m = next(j for j in range(K) if x[j] != y[j])
                if m >= self.depth:
                    continue
                upper = min(self.roof(x), self.roof(y))
                best = max(best, abs_integral(px - py, 0.0, upper) / theta ** m)
        return best

    def value(self, word: Sequence[int], s: float) -> float:
        """F(x, s)."""
        if len(word) < self.depth:
            raise WordTooShort(f"need {self.depth} symbols, got {len(word)}")
        return float(self.polynomials[tuple(word[:self.depth])](s))

    def lap_integral(self, word: Sequence[int], lo: float, hi: float) -> float:
        """integral_lo^hi F(x, s) ds on the cylinder of x."""
        antiderivative = self.polynomials[tuple(word[:self.depth])].integ()
        return float(antiderivative(hi) - antiderivative(lo))


def build_observable(spec: SftSpec, f: RoofFunction, coefficient_table: Mapping[Union[str, Sequence[int]], Sequence[float]],
                     depth: Optional[int] = None, degree: Optional[int] = None) -> FlowObservable:
    """
    Validate a per-cylinder coefficient table and build the observable.

    Args:
        spec: the subshift
        f: roof function
        coefficient_table: word -> [c_0, ..., c_d]
        depth: k_F; inferred from the keys when omitted
        degree: d; inferred from the longest coefficient list when omitted

    Raises:
        DegreeTooHigh: d > 8
        MissingWord: absent admissible word or foreign key
    """
    parsed: Dict[Word, List[float]] = {}
    for key, coefficients in coefficient_table.items():
        word = parse_word(spec, key) if isinstance(key, str) else tuple(int(s) for s in key)
        parsed[word] = [float(c) for c in coefficients]

    if depth is None:
        lengths = {len(word) for word in parsed}
        if len(lengths) != 1:
            raise MissingWord(f"observable keys have mixed lengths {sorted(lengths)}")
        depth = lengths.pop()
    if degree is None:
        degree = max((len(c) for c in parsed.values()), default=1) - 1
    if degree > MAX_DEGREE:
        raise DegreeTooHigh(f"polynomial degree {degree} exceeds {MAX_DEGREE}")

    for word, coefficients in parsed.items():
        if len(word) != depth or not is_admissible(spec, word):
            raise MissingWord(f"observable key {format_word(spec, word)!r} is not an admissible {depth}-word")
        if len(coefficients) > degree + 1:
            raise DegreeTooHigh(f"word {format_word(spec, word)!r} has {len(coefficients)} coefficients for degree {degree}")
        if not coefficients:
            raise MissingWord(f"word {format_word(spec, word)!r} has no coefficients")

    ordered = {}
    for word in enumerate_words(spec, depth):
        if word not in parsed:
            raise MissingWord(f"observable table is missing word {format_word(spec, word)!r}")
        coefficients = parsed[word] + [0.0] * (degree + 1 - len(parsed[word]))
        ordered[word] = tuple(coefficients)

    observable = FlowObservable(spec=spec, roof=f, depth=depth, degree=degree, coefficients=ordered)
    logger.debug(f"Observable of depth {depth}, degree {degree}: ||F|| = {observable.sup_norm!r}")
    return observable


def observable_from_function(f: RoofFunction, g: LocallyConstantFunction) -> FlowObservable:
    """F(x, s) = g(x), constant along each fibre."""
    return FlowObservable(spec=g.spec, roof=f, depth=g.depth, degree=0,
                          coefficients={word: (value,) for word, value in g.values.items()})


def tilde_bound_holds(F: FlowObservable, tol: float = 1e-12) -> bool:
    """|F~|_theta <= |f|_theta ||F|| + C."""
    left = F.tilde.seminorm
    right = F.roof.seminorm * F.sup_norm + F.condition_constant
    return left <= right + tol * max(1.0, right)


# ---------------------------------------------------------------------------
# Flow integrals and the flow measure
# ---------------------------------------------------------------------------

def flow_birkhoff(F: FlowObservable, p: FlowPoint, t: float) -> float:
    """
    integral_0^t F(Phi^u p) du.

    The partial lap from the starting level is integrated directly, full
    laps contribute F~, and the last lap is integrated up to the residual.
    """
    f = F.roof
    word = p.base_word
    K = F.tilde_depth
    level = p.level
    remaining = float(t)
    parts = []
    lap = 0
    while True:
        if len(word) < lap + K:
            raise WordTooShort(f"flow integral for time {t} needs more than {len(word)} symbols")
        window = word[lap:lap + K]
        roof = f(window)
        if level + remaining < roof:
            parts.append(F.lap_integral(window, level, level + remaining))
            break
        if level == 0.0:
            parts.append(F.tilde(window))
        else:
            parts.append(F.lap_integral(window, level, roof))
        remaining -= roof - level
        level = 0.0
        lap += 1
    return math.fsum(parts)


@dataclass(frozen=True, eq=False)
class FlowMarch:
    """Vectorized flow result for a batch of starting points."""

    integrals: np.ndarray
    laps: np.ndarray
    end_levels: np.ndarray


def flow_march(F: FlowObservable, words: np.ndarray, levels: np.ndarray, t: float) -> FlowMarch:
    """
    Flow every (word, level) row for time t, integrating F on the way.

    All rows still moving at lap j are advanced together, so the work per
    lap is one vectorized roof and antiderivative evaluation.
    """
    f = F.roof
    a = F.spec.alphabet_size
    words = np.asarray(words)
    count, length = words.shape
    K = F.tilde_depth

    level = np.asarray(levels, dtype=float).copy()
    remaining = np.full(count, float(t))
    integrals = np.zeros(count)
    laps = np.zeros(count, dtype=np.int64)
    active = np.arange(count)
    table = F.antiderivative_table

    lap = 0
    while active.size:
        if lap + K > length:
            raise WordTooShort(f"flow for time {t} needs more than {length} symbols")
        roof = f.base.evaluate(words[active], offset=lap)
        codes = window_codes(words[active, lap:lap + F.depth], a, F.depth)[:, 0]
        coefficients = table[codes]
        start = level[active]
        stop = start + remaining[active] < roof
        end = np.where(stop, start + remaining[active], roof)
        integrals[active] += _horner(coefficients, end) - _horner(coefficients, start)

        finished = active[stop]
        level[finished] = end[stop]
        moving = active[~stop]
        remaining[moving] -= roof[~stop] - start[~stop]
        level[moving] = 0.0
        laps[moving] += 1
        active = moving
        lap += 1

    return FlowMarch(integrals=integrals, laps=laps, end_levels=level)


def batch_flow_integrals(F: FlowObservable, words: np.ndarray, levels: np.ndarray, t: float) -> np.ndarray:
    """integral_0^t F(Phi^u (x, s)) du for every row."""
    return flow_march(F, words, levels, t).integrals


def nu_integral(mu: GibbsMarkovMeasure, F: FlowObservable) -> float:
    """integral F d nu = integral F~ d mu / integral f d mu."""
    return integrate(mu, F.tilde) / integrate(mu, F.roof.base)


def sample_nu_batch(mu: GibbsMarkovMeasure, f: RoofFunction, count: int, length: int,
                    rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    `count` nu-distributed points by rejection.

    x ~ mu and l ~ Uniform[0, ||f||], accepted when l < f(x).

    Returns:
        (0-based word array of the given length, levels)
    """
    length = max(length, f.depth, mu.state_length)
    top = f.sup_norm
    words_parts, level_parts = [], []
    accepted = 0
    while accepted < count:
        batch = max(count - accepted, 16)
        words = sample_orbits(mu, length, batch, rng)
        levels = rng.uniform(0.0, top, size=batch)
        keep = levels < f.base.evaluate(words)
        words_parts.append(words[keep])
        level_parts.append(levels[keep])
        accepted += int(keep.sum())
    return np.concatenate(words_parts)[:count], np.concatenate(level_parts)[:count]


def sample_nu(mu: GibbsMarkovMeasure, f: RoofFunction, seed: Union[int, np.random.Generator, None] = None,
              length: int = 32) -> FlowPoint:
    """One nu-distributed FlowPoint with a base truncation of the given length."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    words, levels = sample_nu_batch(mu, f, 1, length, rng)
    return FlowPoint(base_word=tuple(int(s) + 1 for s in words[0]), level=float(levels[0]))


def transport_check(mu: GibbsMarkovMeasure, f: RoofFunction, t: float, depth: int, n_bins: int) -> float:
    """
    Largest discrepancy between nu and its push-forward under Phi^t on
    (depth-N cylinder) x (level bin) cells, for 0 < t < min f.

    Mass arriving in [w] x [a, b) comes from [w] itself at levels shifted
    by t, and from every [y_0 w] across the roof into [0, t).
    """
    if not 0.0 < t < f.min_value:
        raise FlowError(f"transport check needs 0 < t < min f = {f.min_value!r}, got {t}")
    if depth < max(f.depth, mu.state_length):
        raise WordTooShort(f"cylinder depth {depth} is below the roof or measure depth")

    spec = f.spec
    mean = integrate(mu, f.base)
    words = word_array(spec, depth)
    masses = cylinder_masses(mu, words)
    roofs = f.base.evaluate(words)
    extended = word_array(spec, depth + 1)
    extended_masses = cylinder_masses(mu, extended)
    a = spec.alphabet_size
    codes = window_codes(extended[:, 1:], a, depth)[:, 0]
    word_codes = window_codes(words, a, depth)[:, 0]
    order = np.searchsorted(word_codes, codes)
    incoming = np.zeros(len(words))
    np.add.at(incoming, order, extended_masses)

    edges = np.linspace(0.0, f.sup_norm, n_bins + 1)
    worst = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        inside = np.clip(np.minimum(hi, roofs) - lo, 0.0, None)
        before = masses * inside / mean
        stay = np.clip(np.minimum(hi, roofs) - max(lo, t), 0.0, None)
        wrap = max(0.0, min(hi, t) - lo)
        after = (masses * stay + incoming * wrap) / mean
        worst = max(worst, float(np.abs(after - before).max()))
    return worst
