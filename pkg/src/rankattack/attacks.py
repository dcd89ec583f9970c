"""Flip attacks against a Bradley-Terry ranking.

All four attacks share the same rules:

* only comparisons cast by coalition voters may be flipped;
* at most ``budget`` positions may end up flipped (flipping a position twice
  restores it and frees its budget);
* every distance is measured on a fresh MLE fit of the dataset it refers to;
* a state is only ever replaced by one strictly closer to the target, so
  the final distance never exceeds the initial one.

Tentative datasets whose comparison graph is not strongly connected have no
finite MLE and are rejected outright.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .core import (
    ComparisonDataset,
    FlipSet,
    Ranking,
    aggregate,
    check_ranking,
    flip,
    kendall_tau,
    ranking_from_strengths,
)
from .influence import solve_zero_sum
from .mle import FitConfig, NonIdentifiableError, fit, hessian


@dataclass(frozen=True)
class AttackConfig:
    target: Ranking
    budget: int
    # None means every voter is in the coalition
    coalition: frozenset[int] | None = None
    seed: int = 0
    subsets: int = 10
    iterations: int = 50
    fit: FitConfig = field(default_factory=FitConfig)
    # ASSA only: order the pool by predicted influence instead of shuffling
    influence_order: bool = False
    # ASSA only: what to do when a round accepts nothing ("restart" reopens the
    # whole coalition pool, "stop" ends the attack)
    on_empty: str = "restart"
    # ASSA only: starting pool; "discordant" keeps just the coalition's
    # comparisons whose current orientation disagrees with the target
    candidates: str = "coalition"

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(int(c) for c in self.target))
        if self.coalition is not None:
            object.__setattr__(self, "coalition", frozenset(int(v) for v in self.coalition))
            if not self.coalition:
                raise ValueError("coalition must not be empty (use None for every voter)")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.subsets < 1:
            raise ValueError("subsets must be at least 1")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.on_empty not in ("restart", "stop"):
            raise ValueError("on_empty must be 'restart' or 'stop'")
        if self.candidates not in ("coalition", "discordant"):
            raise ValueError("candidates must be 'coalition' or 'discordant'")


@dataclass(frozen=True)
class Checkpoint:
    flips: FlipSet
    # None when the tentative dataset had no finite MLE
    distance: int | None
    accepted: bool
    round: int

    @property
    def flips_used(self) -> int:
        return len(self.flips)


@dataclass(frozen=True)
class AttackResult:
    algorithm: str
    flips: FlipSet
    manipulated: ComparisonDataset
    trajectory: tuple[Checkpoint, ...]
    initial_distance: int
    final_distance: int
    initial_ranking: Ranking
    final_ranking: Ranking
    rounds: int
    refits: int
    # ASSA only: size of the pool partitioned in each round, and the rounds
    # whose pool was reopened to the full coalition
    pool_sizes: tuple[int, ...] = ()
    restarts: tuple[int, ...] = ()

    @property
    def succeeded(self) -> bool:
        return self.final_distance == 0


def coalition_pool(dataset: ComparisonDataset, coalition: Iterable[int] | None) -> np.ndarray:
    """Positions of comparisons cast by coalition voters, in dataset order."""
    if coalition is None:
        return np.arange(len(dataset))
    members = np.array(sorted(set(int(v) for v in coalition)), dtype=np.int64)
    bad = members[(members < 0) | (members >= dataset.n_voters)]
    if bad.size:
        raise ValueError(f"unknown voter index {int(bad[0])} (n_voters={dataset.n_voters})")
    return np.flatnonzero(np.isin(dataset.voters, members))


@dataclass
class _Proposal:
    positions: np.ndarray
    counts: np.ndarray
    strengths: np.ndarray
    ranking: Ranking
    distance: int
    size: int


class _Search:
    """Incumbent state of an attack plus tentative re-evaluation."""

    def __init__(self, dataset: ComparisonDataset, config: AttackConfig):
        self.dataset = dataset
        self.config = config
        self.target = check_ranking(config.target, dataset.m)
        self.flipped = np.zeros(len(dataset), dtype=bool)
        self.size = 0
        self.counts = aggregate(dataset).astype(float)
        result = fit(self.counts, config.fit)
        self.strengths = result.strengths
        self.ranking = ranking_from_strengths(self.strengths)
        self.distance = kendall_tau(self.target, self.ranking)
        self.initial_ranking = self.ranking
        self.initial_distance = self.distance
        self.refits = 1
        self.trajectory = [Checkpoint(frozenset(), self.distance, True, 0)]

    @property
    def flips(self) -> FlipSet:
        return frozenset(np.flatnonzero(self.flipped).tolist())

    def size_after(self, positions: np.ndarray) -> int:
        already = int(self.flipped[positions].sum())
        return self.size + len(positions) - 2 * already

    def orientation(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        f = self.flipped[positions]
        w = np.where(f, self.dataset.losers[positions], self.dataset.winners[positions])
        l = np.where(f, self.dataset.winners[positions], self.dataset.losers[positions])
        return w, l

    def propose(self, positions) -> _Proposal | None:
        positions = np.asarray(positions, dtype=np.int64)
        w, l = self.orientation(positions)
        counts = self.counts.copy()
        np.subtract.at(counts, (w, l), 1.0)
        np.add.at(counts, (l, w), 1.0)
        self.refits += 1
        try:
            result = fit(counts, self.config.fit, init=self.strengths)
        except NonIdentifiableError:
            return None
        ranking = ranking_from_strengths(result.strengths)
        return _Proposal(
            positions,
            counts,
            result.strengths,
            ranking,
            kendall_tau(self.target, ranking),
            self.size_after(positions),
        )

    def improves(self, proposal: _Proposal | None) -> bool:
        return proposal is not None and proposal.distance < self.distance

    def commit(self, proposal: _Proposal, round_: int) -> None:
        self.flipped[proposal.positions] = ~self.flipped[proposal.positions]
        self.size = proposal.size
        self.counts = proposal.counts
        self.strengths = proposal.strengths
        self.ranking = proposal.ranking
        self.distance = proposal.distance
        self.trajectory.append(Checkpoint(self.flips, self.distance, True, round_))

    def result(self, algorithm: str, rounds: int, **extra) -> AttackResult:
        flips = self.flips
        return AttackResult(
            algorithm=algorithm,
            flips=flips,
            manipulated=flip(self.dataset, flips),
            trajectory=tuple(self.trajectory),
            initial_distance=self.initial_distance,
            final_distance=self.distance,
            initial_ranking=self.initial_ranking,
            final_ranking=self.ranking,
            rounds=rounds,
            refits=self.refits,
            **extra,
        )


def discordant(search: "_Search", positions: np.ndarray) -> np.ndarray:
    """The positions whose current orientation puts the loser above the winner in the target."""
    place = np.empty(search.dataset.m, dtype=np.int64)
    place[list(search.target)] = np.arange(search.dataset.m)
    w, l = search.orientation(positions)
    return positions[place[w] > place[l]]


def _partition(rng: np.random.Generator, pool: np.ndarray, b: int) -> list[np.ndarray]:
    """Shuffle, then cut into ``b`` contiguous chunks whose sizes differ by <= 1."""
    return np.array_split(rng.permutation(pool), b)


def random_flip(dataset: ComparisonDataset, config: AttackConfig) -> AttackResult:
    search = _Search(dataset, config)
    rng = np.random.default_rng(config.seed)
    pool = coalition_pool(dataset, config.coalition)
    size = min(config.budget, len(pool))
    if size == 0:
        return search.result("rf", 0)
    attempt = np.sort(rng.choice(pool, size=size, replace=False))
    proposal = search.propose(attempt)
    if search.improves(proposal):
        search.commit(proposal, 1)
    else:
        # keep the attempted outcome visible even though it is reverted
        distance = None if proposal is None else proposal.distance
        search.trajectory.append(
            Checkpoint(frozenset(attempt.tolist()), distance, False, 1)
        )
    return search.result("rf", 1)


def greedy_flip(dataset: ComparisonDataset, config: AttackConfig) -> AttackResult:
    """Commit, one at a time, the single flip with the largest strict K_d drop.

    Flipping any two unflipped positions with the same winner and loser yields
    the same count matrix, so one refit per distinct (winner, loser) pair
    covers every position; ties go to the lowest position.
    """
    search = _Search(dataset, config)
    pool = coalition_pool(dataset, config.coalition)
    steps = 0
    while search.size < config.budget and search.distance > 0:
        open_ = pool[~search.flipped[pool]]
        if open_.size == 0:
            break
        keys = dataset.winners[open_] * dataset.m + dataset.losers[open_]
        _, first = np.unique(keys, return_index=True)
        best = None
        for pos in sorted(open_[first].tolist()):
            proposal = search.propose([pos])
            if search.improves(proposal) and (best is None or proposal.distance < best.distance):
                best = proposal
        steps += 1
        if best is None:
            break
        search.commit(best, steps)
    return search.result("gf", steps)


def _subset_pass(search: _Search, chunks: list[np.ndarray], round_: int) -> list[np.ndarray]:
    """Try each chunk in order atop the incumbent; return the accepted ones."""
    accepted = []
    for chunk in chunks:
        if search.distance == 0:
            break
        if chunk.size == 0 or search.size_after(chunk) > search.config.budget:
            continue
        proposal = search.propose(chunk)
        if search.improves(proposal):
            search.commit(proposal, round_)
            accepted.append(chunk)
    return accepted


def rsa(dataset: ComparisonDataset, config: AttackConfig) -> AttackResult:
    """Randomized subset attack: reshuffle the whole coalition pool every round."""
    search = _Search(dataset, config)
    rng = np.random.default_rng(config.seed)
    pool = coalition_pool(dataset, config.coalition)
    rounds = 0
    while rounds < config.iterations and search.distance > 0 and pool.size:
        rounds += 1
        _subset_pass(search, _partition(rng, pool, config.subsets), rounds)
    return search.result("rsa", rounds)


def _influence_chunks(search: _Search, pool: np.ndarray, b: int) -> list[np.ndarray]:
    """Pool sorted by predicted movement toward the target, cut into b chunks."""
    m = search.dataset.m
    w, l = search.orientation(pool)
    # desirability of each candidate under the target: best gets the most
    want = np.empty(m)
    want[list(search.target)] = np.arange(m, 0, -1, dtype=float)
    want -= want.mean()
    h = hessian(search.counts, search.strengths)
    response = np.column_stack(
        [solve_zero_sum(h, np.eye(m)[c] - 1.0 / m) for c in range(m)]
    )
    # a flip moves theta by response[:, l] - response[:, w]
    gain = want @ response
    score = gain[l] - gain[w]
    order = np.lexsort((pool, -score))
    return np.array_split(pool[order], b)


def assa(dataset: ComparisonDataset, config: AttackConfig) -> AttackResult:
    """Adaptive subset selection: only subsets that helped survive to the next round.

    After a round, the pool becomes the union of its accepted subsets.  A
    round that accepts nothing either ends the attack (``on_empty="stop"``)
    or reopens the full coalition pool for the next round (the default).
    """
    search = _Search(dataset, config)
    rng = np.random.default_rng(config.seed)
    coalition = coalition_pool(dataset, config.coalition)

    def reopen() -> np.ndarray:
        if config.candidates == "discordant":
            return discordant(search, coalition)
        return coalition

    pool = reopen()
    sizes: list[int] = []
    restarts: list[int] = []
    rounds = 0
    for t in range(1, config.iterations + 1):
        if search.distance == 0 or pool.size == 0:
            break
        if config.influence_order:
            chunks = _influence_chunks(search, pool, config.subsets)
        else:
            chunks = _partition(rng, pool, config.subsets)
        rounds = t
        sizes.append(int(pool.size))
        good = _subset_pass(search, chunks, t)
        if good:
            pool = np.sort(np.concatenate(good))
        elif config.on_empty == "stop":
            break
        else:
            if t < config.iterations:
                restarts.append(t + 1)
            pool = reopen()
        if search.size >= config.budget:
            break
    return search.result("assa", rounds, pool_sizes=tuple(sizes), restarts=tuple(restarts))


ALGORITHMS: dict[str, Callable[[ComparisonDataset, AttackConfig], AttackResult]] = {
    "rf": random_flip,
    "gf": greedy_flip,
    "rsa": rsa,
    "assa": assa,
}


def run_attack(name: str, dataset: ComparisonDataset, config: AttackConfig) -> AttackResult:
    try:
        algorithm = ALGORITHMS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(ALGORITHMS)}") from None
    return algorithm(dataset, config)
