"""Domain types and pure helpers shared by every other module.

A dataset is an ordered sequence of ``(voter, winner, loser)`` triples held as
three parallel integer arrays.  Positions into that sequence are what the
attacks flip, so ordering is part of a dataset's identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

# Strengths closer than this (relative) are treated as tied when ranking.
TIE_RTOL = 1e-6

Ranking = tuple[int, ...]
FlipSet = frozenset[int]


class DimensionError(ValueError):
    """Inputs disagree on the number of candidates."""


class Comparison(NamedTuple):
    voter: int
    winner: int
    loser: int


@dataclass(frozen=True)
class CandidateSet:
    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        if len(self.names) < 2:
            raise ValueError("need at least two candidates")
        if len(set(self.names)) != len(self.names):
            raise ValueError("candidate names must be unique")
        for name in self.names:
            if "," in name or "\n" in name or not name.strip():
                raise ValueError(f"invalid candidate name {name!r}")

    @property
    def m(self) -> int:
        return len(self.names)

    @classmethod
    def numbered(cls, m: int) -> "CandidateSet":
        return cls(tuple(f"c{i}" for i in range(m)))

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown candidate {name!r}") from None


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.int64).reshape(-1)
    arr.flags.writeable = False
    return arr


class ComparisonDataset:
    """Immutable, ordered collection of voter-attributed pairwise preferences."""

    __slots__ = ("voters", "winners", "losers", "candidates", "n_voters")

    def __init__(self, voters, winners, losers, candidates: CandidateSet, n_voters: int):
        voters, winners, losers = _frozen(voters), _frozen(winners), _frozen(losers)
        if not (len(voters) == len(winners) == len(losers)):
            raise ValueError("voter/winner/loser arrays differ in length")
        m = candidates.m
        if n_voters < 0:
            raise ValueError("n_voters must be non-negative")
        if len(voters):
            if winners.min() < 0 or losers.min() < 0 or winners.max() >= m or losers.max() >= m:
                raise ValueError(f"candidate index out of range for m={m}")
            if voters.min() < 0 or voters.max() >= n_voters:
                raise ValueError(f"voter index out of range for n_voters={n_voters}")
            bad = np.flatnonzero(winners == losers)
            if bad.size:
                raise ValueError(f"comparison {bad[0]} has winner == loser")
        object.__setattr__(self, "voters", voters)
        object.__setattr__(self, "winners", winners)
        object.__setattr__(self, "losers", losers)
        object.__setattr__(self, "candidates", candidates)
        object.__setattr__(self, "n_voters", int(n_voters))

    def __setattr__(self, name, value):
        raise AttributeError("ComparisonDataset is immutable")

    @classmethod
    def from_comparisons(
        cls,
        comparisons: Iterable[Sequence[int]],
        candidates: CandidateSet | int,
        n_voters: int | None = None,
    ) -> "ComparisonDataset":
        if isinstance(candidates, int):
            candidates = CandidateSet.numbered(candidates)
        rows = np.array([tuple(c) for c in comparisons], dtype=np.int64).reshape(-1, 3)
        if n_voters is None:
            n_voters = int(rows[:, 0].max()) + 1 if len(rows) else 0
        return cls(rows[:, 0], rows[:, 1], rows[:, 2], candidates, n_voters)

    @property
    def m(self) -> int:
        return self.candidates.m

    def __len__(self) -> int:
        return len(self.voters)

    def __iter__(self) -> Iterator[Comparison]:
        for v, w, l in zip(self.voters.tolist(), self.winners.tolist(), self.losers.tolist()):
            yield Comparison(v, w, l)

    def __getitem__(self, i: int) -> Comparison:
        return Comparison(int(self.voters[i]), int(self.winners[i]), int(self.losers[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ComparisonDataset):
            return NotImplemented
        return (
            self.candidates == other.candidates
            and self.n_voters == other.n_voters
            and np.array_equal(self.voters, other.voters)
            and np.array_equal(self.winners, other.winners)
            and np.array_equal(self.losers, other.losers)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"ComparisonDataset(m={self.m}, n_voters={self.n_voters}, comparisons={len(self)})"


def aggregate(dataset: ComparisonDataset) -> np.ndarray:
    """Return the m x m win-count matrix; ``counts[i, j]`` is how often i beat j."""
    m = dataset.m
    flat = np.bincount(dataset.winners * m + dataset.losers, minlength=m * m)
    return flat.reshape(m, m)


def bt_probability(p_i: float, p_j: float) -> float:
    if not (p_i > 0 and p_j > 0):
        raise ValueError("strengths must be positive")
    return p_i / (p_i + p_j)


def normalize(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise ValueError("strengths must be a finite positive vector")
    return p / p.sum()


def check_ranking(order: Sequence[int], m: int | None = None) -> Ranking:
    order = tuple(int(i) for i in order)
    if m is not None and len(order) != m:
        raise DimensionError(f"ranking has {len(order)} entries, expected {m}")
    if sorted(order) != list(range(len(order))):
        raise ValueError(f"{order} is not a permutation of 0..{len(order) - 1}")
    return order


def ranking_from_strengths(p, tie_rtol: float = TIE_RTOL) -> Ranking:
    """Candidates sorted best-first; near-ties (within ``tie_rtol``) go by index.

    Ties are grouped by chaining consecutive sorted strengths, so the result
    does not depend on solver noise below the tolerance.
    """
    p = np.asarray(p, dtype=float)
    order = sorted(range(len(p)), key=lambda i: (-p[i], i))
    out: list[int] = []
    group = [order[0]]
    for prev, cur in zip(order, order[1:]):
        if p[prev] - p[cur] <= tie_rtol * abs(p[prev]):
            group.append(cur)
        else:
            out.extend(sorted(group))
            group = [cur]
    out.extend(sorted(group))
    return tuple(out)


def _merge_count(seq: list[int]) -> tuple[list[int], int]:
    if len(seq) <= 1:
        return seq, 0
    mid = len(seq) // 2
    left, a = _merge_count(seq[:mid])
    right, b = _merge_count(seq[mid:])
    merged, inv = [], a + b
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            inv += len(left) - i
            j += 1
    merged += left[i:]
    merged += right[j:]
    return merged, inv


def kendall_tau(a: Sequence[int], b: Sequence[int]) -> int:
    """Number of candidate pairs ordered oppositely by rankings ``a`` and ``b``.

    O(m log m): relabel ``b`` by positions in ``a`` and count inversions.
    """
    if len(a) != len(b):
        raise DimensionError(f"rankings have different lengths ({len(a)} vs {len(b)})")
    a = check_ranking(a)
    b = check_ranking(b)
    pos = [0] * len(a)
    for r, c in enumerate(a):
        pos[c] = r
    return _merge_count([pos[c] for c in b])[1]


def check_flips(delta: Iterable[int], size: int) -> FlipSet:
    out = frozenset(int(i) for i in delta)
    for i in out:
        if not 0 <= i < size:
            raise IndexError(f"flip index {i} out of range for {size} comparisons")
    return out


def flip(dataset: ComparisonDataset, delta: Iterable[int]) -> ComparisonDataset:
    """Exchange winner and loser at every position in ``delta``."""
    idx = np.fromiter(check_flips(delta, len(dataset)), dtype=np.int64)
    if idx.size == 0:
        return dataset
    winners = dataset.winners.copy()
    losers = dataset.losers.copy()
    winners[idx], losers[idx] = dataset.losers[idx], dataset.winners[idx]
    return ComparisonDataset(dataset.voters, winners, losers, dataset.candidates, dataset.n_voters)
