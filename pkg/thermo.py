#!/usr/bin/env python3
"""
Equilibrium states of locally constant potentials.

The potential is recoded on (k-1)-word states; the weighted transition
matrix M(w, w') = exp(phi(w . last(w'))) gives the pressure log(lambda) and
the equilibrium state as a Markov measure built from its Perron data.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, Sequence, Union

import numpy as np

from perron import perron_eigenpair
from sft_core import (
    LocallyConstantFunction, SftSpec, ThermoflowError, Word, WordTooShort,
    check_word, enumerate_words, to_word, window_codes, word_array, word_code,
)

logger = logging.getLogger(__name__)

MEASURE_TOLERANCE = 1e-12


class ThermoError(ThermoflowError):
    """Equilibrium measure failed an internal consistency check."""
    pass


@dataclass(frozen=True, eq=False)
class GibbsMarkovMeasure:
    """
    Equilibrium state of `potential` as a Markov measure on (k-1)-word states.

    `potential` is the caller's function; `depth` is its depth promoted to
    at least 2 so that one recoding path serves every depth.
    """

    spec: SftSpec
    potential: LocallyConstantFunction
    depth: int
    states: List[Word]
    state_lookup: np.ndarray
    weighted_matrix: np.ndarray
    lead_eigenvalue: float
    right_eigenvector: np.ndarray
    left_eigenvector: np.ndarray
    pressure: float
    stationary: np.ndarray
    kernel: np.ndarray

    @property
    def state_length(self) -> int:
        return self.depth - 1

    @cached_property
    def successor_states(self) -> np.ndarray:
        """successor_states[i, s] = index of state w[1:] + s, or -1 if not allowed."""
        a = self.spec.alphabet_size
        L = self.state_length
        successors = np.full((len(self.states), a), -1, dtype=np.int64)
        for i, state in enumerate(self.states):
            for s in range(1, a + 1):
                if self.spec.allows(state[-1], s):
                    successors[i, s - 1] = self.state_lookup[word_code(state[1:] + (s,), a) if L > 1 else s - 1]
        return successors

    @cached_property
    def successor_probabilities(self) -> np.ndarray:
        """successor_probabilities[i, s] = pi(state i -> w[1:] + s)."""
        successors = self.successor_states
        rows = np.repeat(np.arange(len(self.states))[:, None], successors.shape[1], axis=1)
        probabilities = np.where(successors >= 0, self.kernel[rows, np.maximum(successors, 0)], 0.0)
        return probabilities


def equilibrium_measure(spec: SftSpec, phi: LocallyConstantFunction) -> GibbsMarkovMeasure:
    """
    Unique equilibrium state of a locally constant potential.

    Args:
        spec: the subshift
        phi: potential of any depth

    Returns:
        GibbsMarkovMeasure with pressure, Perron data, stationary state law
        and transition kernel
    """
    depth = max(2, phi.depth)
    table = phi.promote(depth)
    a = spec.alphabet_size
    L = depth - 1

    states = enumerate_words(spec, L)
    state_lookup = np.full(a ** L, -1, dtype=np.int64)
    state_codes = window_codes(word_array(spec, L), a, L)[:, 0]
    state_lookup[state_codes] = np.arange(len(states))

    # exp of the centred table keeps M well scaled; the centre returns in P
    centre = float(table.value_array.max())
    words = word_array(spec, depth)
    rows = state_lookup[window_codes(words[:, :L], a, L)[:, 0]]
    cols = state_lookup[window_codes(words[:, 1:], a, L)[:, 0]]
    matrix = np.zeros((len(states), len(states)))
    matrix[rows, cols] = np.exp(table.value_array - centre)

    perron = perron_eigenpair(matrix, tol=MEASURE_TOLERANCE)
    value, h, v = perron.eigenvalue, perron.right, perron.left

    kernel = matrix * h[None, :] / (value * h[:, None])
    kernel /= kernel.sum(axis=1, keepdims=True)
    stationary = v * h
    stationary /= stationary.sum()

    if np.abs(stationary @ kernel - stationary).max() > MEASURE_TOLERANCE:
        raise ThermoError("stationary law is not invariant under the kernel")

    pressure = float(np.log(value) + centre)
    logger.info(f"Equilibrium state on {len(states)} states: P = {pressure!r}")

    for array in (matrix, h, v, kernel, stationary):
        array.setflags(write=False)

    return GibbsMarkovMeasure(
        spec=spec, potential=phi, depth=depth, states=states, state_lookup=state_lookup,
        weighted_matrix=matrix, lead_eigenvalue=float(value * np.exp(centre)),
        right_eigenvector=h, left_eigenvector=v, pressure=pressure,
        stationary=stationary, kernel=kernel,
    )


def cylinder_measure(mu: GibbsMarkovMeasure, word: Sequence[int], marginal: bool = False) -> float:
    """
    mu([w]) by the product formula stationary(w_1..w_{k-1}) * prod pi(step).

    Words shorter than k-1 raise WordTooShort unless `marginal` is set, in
    which case the stationary law is summed over their completions.
    """
    word = tuple(word)
    L = mu.state_length
    if len(word) < L:
        if not marginal:
            raise WordTooShort(f"cylinder needs at least {L} symbols, got {len(word)}")
        return float(sum(p for state, p in zip(mu.states, mu.stationary) if state[:len(word)] == word))
    try:
        check_word(mu.spec, word)
    except ThermoflowError:
        return 0.0
    return float(cylinder_masses(mu, np.array([[s - 1 for s in word]], dtype=np.int16))[0])


def cylinder_masses(mu: GibbsMarkovMeasure, words: np.ndarray) -> np.ndarray:
    """Vectorized mu([w]) for the rows of an admissible 0-based word array."""
    words = np.asarray(words)
    L = mu.state_length
    if words.shape[1] < L:
        raise WordTooShort(f"cylinders need at least {L} symbols, got {words.shape[1]}")
    index = mu.state_lookup[window_codes(words, mu.spec.alphabet_size, L)]
    masses = mu.stationary[index[:, 0]].copy()
    for j in range(index.shape[1] - 1):
        masses *= mu.kernel[index[:, j], index[:, j + 1]]
    return masses


def integrate(mu: GibbsMarkovMeasure, g: LocallyConstantFunction) -> float:
    """Exact integral of a locally constant function."""
    n = max(g.depth, mu.state_length)
    words = word_array(mu.spec, n)
    return float(np.sum(cylinder_masses(mu, words) * g.evaluate(words)))


def entropy(mu: GibbsMarkovMeasure) -> float:
    """Measure-theoretic entropy h_mu = P - integral of phi."""
    return mu.pressure - integrate(mu, mu.potential)


def variational_gap(mu: GibbsMarkovMeasure) -> float:
    """|P - (h_mu + integral of phi)| computed from the Markov entropy formula."""
    kernel = mu.kernel
    with np.errstate(divide='ignore', invalid='ignore'):
        logs = np.where(kernel > 0, np.log(kernel), 0.0)
    markov_entropy = -float(np.sum(mu.stationary[:, None] * kernel * logs))
    return abs(mu.pressure - (markov_entropy + integrate(mu, mu.potential)))


def gibbs_weight_ratio(mu: GibbsMarkovMeasure, word: Sequence[int], total_length: int) -> float:
    """
    Direct Gibbs-weight oracle for mu([w]).

    (sum over N-words showing w in the middle of prod exp(phi)) / (sum over
    all N-words). Both ends are free, so w sits away from them.
    """
    phi = mu.potential
    words = word_array(mu.spec, total_length)
    codes = window_codes(words, mu.spec.alphabet_size, phi.depth)
    log_weights = phi.table[codes].sum(axis=1)
    weights = np.exp(log_weights - log_weights.max())
    pattern = np.array([s - 1 for s in word])
    offset = (total_length - len(pattern)) // 2
    match = (words[:, offset:offset + len(pattern)] == pattern).all(axis=1)
    return float(weights[match].sum() / weights.sum())


def sample_orbits(mu: GibbsMarkovMeasure, length: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    `count` mu-distributed truncations of length L as a 0-based array.

    The first (k-1)-word is drawn from the stationary law, the rest from
    the kernel.
    """
    L = mu.state_length
    if length < L:
        raise WordTooShort(f"orbit length must be at least {L}, got {length}")
    state = rng.choice(len(mu.states), size=count, p=mu.stationary)
    state_words = word_array(mu.spec, L)
    words = np.empty((count, length), dtype=np.int16)
    words[:, :L] = state_words[state]
    cumulative = np.cumsum(mu.successor_probabilities, axis=1)
    last_allowed = mu.successor_probabilities.shape[1] - 1 - np.argmax(mu.successor_probabilities[:, ::-1] > 0, axis=1)
    for position in range(L, length):
        u = rng.random(count)
        symbol = (u[:, None] > cumulative[state]).sum(axis=1)
        symbol = np.minimum(symbol, last_allowed[state])
        words[:, position] = symbol
        state = mu.successor_states[state, symbol]
    return words


def sample_orbit(mu: GibbsMarkovMeasure, length: int, seed: Union[int, np.random.Generator, None] = None) -> Word:
    """One mu-distributed truncation of length L, reproducible given the seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return to_word(sample_orbits(mu, length, 1, rng)[0])


def cylinder_table(mu: GibbsMarkovMeasure, n: int) -> List[tuple]:
    """(word, mu([w])) for every admissible n-word, lexicographic."""
    if n >= mu.state_length:
        words = word_array(mu.spec, n)
        masses = cylinder_masses(mu, words)
    else:
        words = word_array(mu.spec, mu.state_length)
        full = cylinder_masses(mu, words)
        short = word_array(mu.spec, n)
        masses = np.array([full[(words[:, :n] == row).all(axis=1)].sum() for row in short])
        words = short
    return [(to_word(row), float(mass)) for row, mass in zip(words, masses)]
