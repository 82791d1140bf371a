#!/usr/bin/env python3
"""
Subshift of finite type primitives.
Transition matrices, admissible words, the d_theta metric and locally
constant functions with their variation and Lipschitz norms.

Symbols are 1-based at every interface. Internally words are stored as
0-based numpy arrays, one row per word, in lexicographic order.
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Word = Tuple[int, ...]


class ThermoflowError(Exception):
    """Base class for domain and numerical failures."""
    pass


class SftError(ThermoflowError):
    """Invalid subshift, word or function table."""
    pass


class BadMatrix(SftError):
    """Transition matrix is not a square 0/1 matrix."""
    pass


class BadTheta(SftError):
    """Metric parameter outside (0, 1)."""
    pass


class DeadSymbol(SftError):
    """A symbol has no successor or no predecessor."""
    pass


class NotPrimitive(SftError):
    """No power A^d with d <= a^2 is entrywise positive."""
    pass


class InadmissibleWord(SftError):
    """Word contains a forbidden transition or an unknown symbol."""
    pass


class WordTooShort(SftError):
    """Word truncation is too short for the requested evaluation."""
    pass


class TruncationTooShort(SftError):
    """Two distinct points agree on the whole available truncation."""
    pass


class MissingWord(SftError):
    """A function table lacks an admissible word or has a foreign key."""
    pass


@dataclass(frozen=True)
class SftSpec:
    """The space (X, sigma, d_theta) given by a primitive transition matrix."""

    alphabet_size: int
    transition: Tuple[Tuple[int, ...], ...]
    theta: float
    aperiodicity_power: int

    @cached_property
    def matrix(self) -> np.ndarray:
        matrix = np.array(self.transition, dtype=np.int64)
        matrix.setflags(write=False)
        return matrix

    def allows(self, a: int, b: int) -> bool:
        """Whether the 1-based transition a -> b is allowed."""
        return self.transition[a - 1][b - 1] == 1


def validate_sft(raw_matrix: Sequence[Sequence[int]], theta: float) -> SftSpec:
    """
    Validate a transition matrix and metric parameter.

    Args:
        raw_matrix: square matrix of 0/1 entries
        theta: metric parameter in (0, 1)

    Returns:
        SftSpec with the least aperiodicity power d such that A^d > 0
    """
    try:
        matrix = np.array(raw_matrix, dtype=float)
    except (TypeError, ValueError) as e:
        raise BadMatrix(f"transition matrix is not numeric: {e}")

    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise BadMatrix(f"transition matrix must be square, got shape {matrix.shape}")
    if not np.isin(matrix, (0.0, 1.0)).all():
        raise BadMatrix("transition matrix entries must be 0 or 1")

    size = matrix.shape[0]
    if size < 2:
        raise BadMatrix(f"alphabet size must be at least 2, got {size}")

    if not isinstance(theta, (int, float)) or isinstance(theta, bool) or not 0.0 < theta < 1.0:
        raise BadTheta(f"theta must lie in (0, 1), got {theta!r}")

    matrix = matrix.astype(np.int64)
    for i in range(size):
        if not matrix[i, :].any():
            raise DeadSymbol(f"symbol {i + 1} has no allowed successor")
        if not matrix[:, i].any():
            raise DeadSymbol(f"symbol {i + 1} has no allowed predecessor")

    # Boolean powers; Wielandt's bound (a-1)^2 + 1 <= a^2 makes the search finite.
    reach = matrix > 0
    power = reach.copy()
    for d in range(1, size * size + 1):
        if power.all():
            logger.debug(f"Transition matrix is primitive with power {d}")
            spec = SftSpec(
                alphabet_size=size,
                transition=tuple(tuple(int(v) for v in row) for row in matrix),
                theta=float(theta),
                aperiodicity_power=d,
            )
            return spec
        power = (power.astype(np.int64) @ reach.astype(np.int64)) > 0

    raise NotPrimitive(f"no power A^d with d <= {size * size} is entrywise positive")


# ---------------------------------------------------------------------------
# Words
# ---------------------------------------------------------------------------

def is_admissible(spec: SftSpec, word: Sequence[int]) -> bool:
    """Whether every symbol is in range and every consecutive pair is allowed."""
    a = spec.alphabet_size
    if any(not 1 <= s <= a for s in word):
        return False
    return all(spec.allows(word[i], word[i + 1]) for i in range(len(word) - 1))


def check_word(spec: SftSpec, word: Sequence[int]) -> Word:
    """Return the word as a tuple or raise InadmissibleWord."""
    word = tuple(int(s) for s in word)
    if not is_admissible(spec, word):
        raise InadmissibleWord(f"word {format_word(spec, word)} is not admissible")
    return word


def format_word(spec: SftSpec, word: Sequence[int]) -> str:
    """Symbol digits joined by nothing for a <= 9, by '.' otherwise."""
    separator = '' if spec.alphabet_size <= 9 else '.'
    return separator.join(str(int(s)) for s in word)


def parse_word(spec: SftSpec, text: str) -> Word:
    """Inverse of format_word; symbols are not checked for admissibility."""
    text = str(text).strip()
    if not text:
        return ()
    try:
        if spec.alphabet_size <= 9:
            return tuple(int(ch) for ch in text)
        return tuple(int(part) for part in text.split('.'))
    except ValueError:
        raise InadmissibleWord(f"cannot parse word {text!r}")


def shift(word: Sequence[int], m: int = 1) -> Word:
    """sigma^m applied to a finite truncation."""
    return tuple(word[m:])


@lru_cache(maxsize=None)
def count_words(spec: SftSpec, n: int) -> int:
    """Exact number of admissible words of length n."""
    if n <= 0:
        return 1 if n == 0 else 0
    counts = [1] * spec.alphabet_size
    for _ in range(n - 1):
        counts = [sum(counts[b] for b in range(spec.alphabet_size) if spec.transition[a][b])
                  for a in range(spec.alphabet_size)]
    return sum(counts)


def extend_words(spec: SftSpec, words: np.ndarray, n: int) -> np.ndarray:
    """
    Extend every row of a 0-based word array to length n.

    Rows are extended in lexicographic order, so a sorted input gives a
    sorted output.
    """
    words = np.asarray(words, dtype=np.int16)
    a = spec.alphabet_size
    allowed = spec.matrix > 0
    symbols = np.arange(a, dtype=np.int16)
    while words.shape[1] < n:
        repeated = np.repeat(words, a, axis=0)
        tails = np.tile(symbols, words.shape[0])
        keep = allowed[repeated[:, -1], tails]
        words = np.concatenate([repeated[keep], tails[keep, None]], axis=1)
    return words


@lru_cache(maxsize=64)
def word_array(spec: SftSpec, n: int) -> np.ndarray:
    """All admissible n-words as a read-only (count, n) array of 0-based symbols."""
    if n < 1:
        raise ValueError(f"word length must be at least 1, got {n}")
    start = np.arange(spec.alphabet_size, dtype=np.int16)[:, None]
    words = extend_words(spec, start, n)
    words.setflags(write=False)
    return words


def enumerate_words(spec: SftSpec, n: int) -> List[Word]:
    """All admissible words of length n in lexicographic order."""
    return [tuple(int(s) + 1 for s in row) for row in word_array(spec, n)]


def window_codes(words: np.ndarray, alphabet_size: int, width: int) -> np.ndarray:
    """
    Base-a codes of every window of the given width.

    Returns an int64 array of shape (count, length - width + 1); the code of
    a window w_0..w_{width-1} is sum w_i a^(width-1-i).
    """
    words = np.asarray(words, dtype=np.int64)
    length = words.shape[1]
    if width > length:
        raise WordTooShort(f"window width {width} exceeds word length {length}")
    span = length - width + 1
    codes = np.zeros((words.shape[0], span), dtype=np.int64)
    for i in range(width):
        codes = codes * alphabet_size + words[:, i:i + span]
    return codes


def word_code(word: Sequence[int], alphabet_size: int) -> int:
    """Base-a code of a 1-based word."""
    code = 0
    for s in word:
        code = code * alphabet_size + (int(s) - 1)
    return code


def d_theta(spec: SftSpec, x: Sequence[int], y: Sequence[int], distinct: bool = False) -> float:
    """
    d_theta(x, y) = theta^m with m the first index where x and y differ.

    Args:
        x, y: admissible truncations of equal length
        distinct: caller asserts the underlying points differ

    Returns:
        the distance; 0 for identical truncations of the same point
    """
    if len(x) != len(y):
        raise WordTooShort(f"truncations have different lengths {len(x)} and {len(y)}")
    for m, (xs, ys) in enumerate(zip(x, y)):
        if xs != ys:
            return spec.theta ** m
    if distinct:
        raise TruncationTooShort(f"points agree on all {len(x)} available symbols")
    return 0.0


# ---------------------------------------------------------------------------
# Locally constant functions
# ---------------------------------------------------------------------------

TableKey = Union[str, Sequence[int]]


@dataclass(frozen=True, eq=False)
class LocallyConstantFunction:
    """
    A function on X that depends only on the first `depth` symbols.

    `values` maps every admissible depth-word (1-based tuple) to a real.
    """

    spec: SftSpec
    depth: int
    values: Mapping[Word, float]

    @classmethod
    def from_table(cls, spec: SftSpec, depth: int, table: Mapping[TableKey, float]) -> 'LocallyConstantFunction':
        """
        Build from a table keyed by words or word strings.

        Raises MissingWord naming the first absent admissible word, or the
        first key that is not an admissible depth-word.
        """
        if depth < 1:
            raise MissingWord(f"depth must be at least 1, got {depth}")
        values: Dict[Word, float] = {}
        for key, value in table.items():
            word = parse_word(spec, key) if isinstance(key, str) else tuple(int(s) for s in key)
            if len(word) != depth or not is_admissible(spec, word):
                raise MissingWord(f"table key {format_word(spec, word)!r} is not an admissible {depth}-word")
            values[word] = float(value)
        for word in enumerate_words(spec, depth):
            if word not in values:
                raise MissingWord(f"table is missing word {format_word(spec, word)!r}")
        ordered = {word: values[word] for word in enumerate_words(spec, depth)}
        return cls(spec=spec, depth=depth, values=ordered)

    @classmethod
    def constant(cls, spec: SftSpec, value: float, depth: int = 1) -> 'LocallyConstantFunction':
        return cls(spec=spec, depth=depth,
                   values={word: float(value) for word in enumerate_words(spec, depth)})

    def __call__(self, word: Sequence[int]) -> float:
        if len(word) < self.depth:
            raise WordTooShort(f"need {self.depth} symbols, got {len(word)}")
        key = tuple(word[:self.depth])
        try:
            return self.values[key]
        except KeyError:
            raise InadmissibleWord(f"word {format_word(self.spec, key)} is not admissible")

    @cached_property
    def value_array(self) -> np.ndarray:
        """Values in lexicographic word order."""
        return np.array(list(self.values.values()), dtype=float)

    @cached_property
    def table(self) -> np.ndarray:
        """Values indexed by base-a word code; NaN for inadmissible codes."""
        table = np.full(self.spec.alphabet_size ** self.depth, np.nan)
        codes = window_codes(word_array(self.spec, self.depth), self.spec.alphabet_size, self.depth)[:, 0]
        table[codes] = self.value_array
        table.setflags(write=False)
        return table

    def evaluate(self, words: np.ndarray, offset: int = 0) -> np.ndarray:
        """Vectorized evaluation on the window starting at `offset` of each row."""
        words = np.asarray(words)
        if words.shape[1] < offset + self.depth:
            raise WordTooShort(f"need {offset + self.depth} symbols, got {words.shape[1]}")
        codes = window_codes(words[:, offset:offset + self.depth], self.spec.alphabet_size, self.depth)[:, 0]
        return self.table[codes]

    def promote(self, depth: int) -> 'LocallyConstantFunction':
        """Same function tabulated on longer words."""
        if depth < self.depth:
            raise ValueError(f"cannot promote depth {self.depth} to {depth}")
        if depth == self.depth:
            return self
        return LocallyConstantFunction(
            spec=self.spec, depth=depth,
            values={word: self.values[word[:self.depth]] for word in enumerate_words(self.spec, depth)},
        )

    def shifted(self, c: float) -> 'LocallyConstantFunction':
        """The function g + c."""
        return LocallyConstantFunction(spec=self.spec, depth=self.depth,
                                       values={w: v + c for w, v in self.values.items()})

    @cached_property
    def min_value(self) -> float:
        return float(self.value_array.min())

    @cached_property
    def sup_norm(self) -> float:
        return float(np.abs(self.value_array).max())

    @cached_property
    def variations(self) -> List[float]:
        """V_m for m = 0..depth-1; V_m = 0 for m >= depth."""
        values = self.value_array
        words = word_array(self.spec, self.depth)
        variations = []
        for m in range(self.depth):
            if m == 0:
                starts = np.array([0])
            else:
                prefixes = window_codes(words[:, :m], self.spec.alphabet_size, m)[:, 0]
                # lexicographic order keeps each prefix group contiguous
                starts = np.flatnonzero(np.r_[True, prefixes[1:] != prefixes[:-1]])
            spread = np.maximum.reduceat(values, starts) - np.minimum.reduceat(values, starts)
            variations.append(float(spread.max()))
        return variations

    @cached_property
    def seminorm(self) -> float:
        """|g|_theta = max over m < depth of V_m / theta^m."""
        return max(v / self.spec.theta ** m for m, v in enumerate(self.variations))

    @cached_property
    def lipschitz_norm(self) -> float:
        return self.seminorm + self.sup_norm


def norms(g: LocallyConstantFunction) -> Tuple[float, float, float]:
    """(sup norm, Lipschitz seminorm, Lipschitz norm) of g."""
    return g.sup_norm, g.seminorm, g.lipschitz_norm


def brute_force_seminorm(g: LocallyConstantFunction) -> float:
    """Sup of |g(x) - g(y)| / d_theta(x, y) over all pairs of depth-words."""
    words = enumerate_words(g.spec, g.depth)
    best = 0.0
    for i, x in enumerate(words):
        for y in words[i + 1:]:
            best = max(best, abs(g.values[x] - g.values[y]) / d_theta(g.spec, x, y, distinct=True))
    return best


def birkhoff_sum(g: LocallyConstantFunction, word: Sequence[int], n: int) -> float:
    """S_n g evaluated on a truncation: sum_{j<n} g(sigma^j w)."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if n == 0:
        return 0.0
    needed = n + g.depth - 1
    if len(word) < needed:
        raise WordTooShort(f"Birkhoff sum of length {n} needs {needed} symbols, got {len(word)}")
    return float(sum(g(word[j:j + g.depth]) for j in range(n)))


def birkhoff_sums(g: LocallyConstantFunction, words: np.ndarray, n: int) -> np.ndarray:
    """Vectorized S_n g over the rows of a 0-based word array."""
    words = np.asarray(words)
    if n == 0:
        return np.zeros(words.shape[0])
    needed = n + g.depth - 1
    if words.shape[1] < needed:
        raise WordTooShort(f"Birkhoff sum of length {n} needs {needed} symbols, got {words.shape[1]}")
    codes = window_codes(words[:, :needed], g.spec.alphabet_size, g.depth)
    return g.table[codes].sum(axis=1)


def to_word(row: Sequence[int]) -> Word:
    """A 0-based array row to a 1-based word."""
    return tuple(int(s) + 1 for s in row)
