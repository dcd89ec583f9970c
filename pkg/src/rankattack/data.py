"""Synthetic electorates, ranked-ballot ingestion and dataset files.

Ballot file format (UTF-8)::

    candidates: Alice,Bob,Carol
    2: Alice,Bob          # two voters cast this (incomplete) ballot
    Carol,Alice,Bob       # count defaults to 1

Dataset file format (UTF-8)::

    # rankattack dataset v1
    m: 3
    n_voters: 2
    candidates: Alice,Bob,Carol
    voter,winner,loser
    0,0,1
    ...
"""

from __future__ import annotations

import io
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Literal, Sequence

import numpy as np

from .core import CandidateSet, ComparisonDataset, normalize

Policy = Literal["ranked-only", "ranked-over-unranked"]
POLICIES: tuple[str, ...] = ("ranked-only", "ranked-over-unranked")

DATASET_MAGIC = "# rankattack dataset v1"


class BallotParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class RankedBallot:
    voter: int
    ranking: tuple[int, ...]
    weight: int = 1

    def __post_init__(self):
        object.__setattr__(self, "ranking", tuple(int(c) for c in self.ranking))
        if len(set(self.ranking)) != len(self.ranking):
            raise ValueError(f"ballot ranks a candidate twice: {self.ranking}")
        if any(c < 0 for c in self.ranking):
            raise ValueError("negative candidate index")
        if self.weight < 1:
            raise ValueError("ballot weight must be at least 1")


@dataclass(frozen=True)
class SyntheticSpec:
    m: int
    n_voters: int
    comparisons_per_voter: int | None = None  # None: every pair
    strength_law: Literal["uniform", "geometric"] = "geometric"
    rho: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least two candidates")
        if self.n_voters < 0:
            raise ValueError("n_voters must be non-negative")
        pairs = self.m * (self.m - 1) // 2
        if self.comparisons_per_voter is not None and not 0 <= self.comparisons_per_voter <= pairs:
            raise ValueError(f"comparisons_per_voter must be in [0, {pairs}]")
        if self.strength_law not in ("uniform", "geometric"):
            raise ValueError(f"unknown strength law {self.strength_law!r}")
        if self.strength_law == "geometric" and not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")

    @property
    def pairs_per_voter(self) -> int:
        if self.comparisons_per_voter is None:
            return self.m * (self.m - 1) // 2
        return self.comparisons_per_voter


def ground_truth(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.strength_law == "geometric":
        return normalize(spec.rho ** np.arange(spec.m, dtype=float))
    # 1 - U[0,1) lies in (0, 1], so every strength is positive
    return normalize(1.0 - rng.random(spec.m))


def generate_synthetic(spec: SyntheticSpec) -> tuple[ComparisonDataset, np.ndarray]:
    """Draw a Bradley-Terry electorate; returns the dataset and true strengths.

    Each voter judges ``pairs_per_voter`` distinct unordered pairs chosen
    uniformly; each judgement is an independent Bradley-Terry draw.
    """
    rng = np.random.default_rng(spec.seed)
    p = ground_truth(spec, rng)
    pairs = np.array(list(itertools.combinations(range(spec.m), 2)), dtype=np.int64)
    k = spec.pairs_per_voter
    voters, first, second = [], [], []
    for v in range(spec.n_voters):
        chosen = pairs[np.sort(rng.choice(len(pairs), size=k, replace=False))]
        voters.append(np.full(k, v))
        first.append(chosen[:, 0])
        second.append(chosen[:, 1])
    if voters:
        voters = np.concatenate(voters)
        i = np.concatenate(first)
        j = np.concatenate(second)
    else:
        voters = i = j = np.zeros(0, dtype=np.int64)
    i_wins = rng.random(len(i)) < p[i] / (p[i] + p[j])
    winners = np.where(i_wins, i, j)
    losers = np.where(i_wins, j, i)
    data = ComparisonDataset(voters, winners, losers, CandidateSet.numbered(spec.m), spec.n_voters)
    return data, p


def sample_ballots(p, n_voters: int, rng: np.random.Generator) -> list[RankedBallot]:
    """Full rankings drawn from the Plackett-Luce model with strengths ``p``.

    Pairwise marginals of adjacent choices follow the Bradley-Terry law, which
    makes this the ranked-ballot counterpart of ``generate_synthetic``.
    """
    p = normalize(p)
    ballots = []
    for v in range(n_voters):
        # Gumbel-max trick: sorting log p + Gumbel noise samples Plackett-Luce
        keys = np.log(p) + rng.gumbel(size=len(p))
        ballots.append(RankedBallot(v, tuple(np.argsort(-keys, kind="stable").tolist())))
    return ballots


def truncate_ballots(ballots: Iterable[RankedBallot], depth: int) -> list[RankedBallot]:
    return [RankedBallot(b.voter, b.ranking[:depth], b.weight) for b in ballots]


def expand_weights(ballots: Iterable[RankedBallot]) -> list[RankedBallot]:
    """Split weight-w ballots into w single voters with consecutive ids."""
    out = []
    for b in ballots:
        for _ in range(b.weight):
            out.append(RankedBallot(len(out), b.ranking, 1))
    return out


def ballots_to_pairwise(
    ballots: Sequence[RankedBallot],
    candidates: CandidateSet | int,
    policy: Policy = "ranked-only",
    n_voters: int | None = None,
) -> ComparisonDataset:
    """Expand ranked ballots into pairwise comparisons, ballot order preserved.

    ``ranked-only`` emits one comparison per pair of ranked candidates.
    ``ranked-over-unranked`` also lets every ranked candidate beat every
    unranked one.  A ballot of weight w is emitted w times for its voter.
    """
    if isinstance(candidates, int):
        candidates = CandidateSet.numbered(candidates)
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    m = candidates.m
    rows: list[tuple[int, int, int]] = []
    for b in ballots:
        if any(c >= m for c in b.ranking):
            raise ValueError(f"ballot of voter {b.voter} names a candidate >= m={m}")
        one = [(b.voter, w, l) for w, l in itertools.combinations(b.ranking, 2)]
        if policy == "ranked-over-unranked":
            unranked = [c for c in range(m) if c not in set(b.ranking)]
            one += [(b.voter, w, l) for w in b.ranking for l in unranked]
        rows.extend(one * b.weight)
    if n_voters is None:
        n_voters = max((b.voter for b in ballots), default=-1) + 1
    return ComparisonDataset.from_comparisons(rows, candidates, n_voters)


def _split_names(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def parse_ballots(stream: IO[str] | str) -> tuple[CandidateSet | None, list[RankedBallot]]:
    """Read a ballot file; each non-comment line after the header is one ballot.

    Returns ``(None, [])`` for an empty input.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    candidates: CandidateSet | None = None
    ballots: list[RankedBallot] = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if candidates is None:
            key, sep, rest = line.partition(":")
            if not sep or key.strip().lower() != "candidates":
                raise BallotParseError("expected 'candidates: name,...' header", lineno)
            try:
                candidates = CandidateSet(tuple(_split_names(rest)))
            except ValueError as e:
                raise BallotParseError(str(e), lineno) from None
            continue
        head, sep, body = line.partition(":")
        if sep:
            try:
                weight = int(head.strip())
            except ValueError:
                raise BallotParseError(f"malformed count {head.strip()!r}", lineno) from None
            if weight < 1:
                raise BallotParseError(f"count must be positive, got {weight}", lineno)
        else:
            weight, body = 1, head
        names = _split_names(body)
        if not names:
            raise BallotParseError("ballot ranks no candidates", lineno)
        ranking = []
        for name in names:
            try:
                ranking.append(candidates.index(name))
            except KeyError:
                raise BallotParseError(f"unknown candidate {name!r}", lineno) from None
        if len(set(ranking)) != len(ranking):
            raise BallotParseError("candidate ranked twice in one ballot", lineno)
        ballots.append(RankedBallot(len(ballots), tuple(ranking), weight))
    return candidates, ballots


def format_ballots(candidates: CandidateSet, ballots: Iterable[RankedBallot]) -> str:
    lines = ["candidates: " + ",".join(candidates.names)]
    for b in ballots:
        lines.append(f"{b.weight}: " + ",".join(candidates.names[c] for c in b.ranking))
    return "\n".join(lines) + "\n"


def serialize_dataset(dataset: ComparisonDataset) -> str:
    out = [
        DATASET_MAGIC,
        f"m: {dataset.m}",
        f"n_voters: {dataset.n_voters}",
        "candidates: " + ",".join(dataset.candidates.names),
        "voter,winner,loser",
    ]
    out.extend(f"{c.voter},{c.winner},{c.loser}" for c in dataset)
    return "\n".join(out) + "\n"


def load_dataset(stream: IO[str] | str) -> ComparisonDataset:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = stream.read().splitlines()
    if not lines or lines[0].strip() != DATASET_MAGIC:
        raise BallotParseError("missing dataset header", 1)
    meta = {}
    for lineno, line in enumerate(lines[1:4], start=2):
        key, sep, value = line.partition(":")
        if not sep:
            raise BallotParseError("malformed metadata line", lineno)
        meta[key.strip()] = value.strip()
    try:
        m = int(meta["m"])
        n_voters = int(meta["n_voters"])
        names = tuple(_split_names(meta["candidates"]))
    except (KeyError, ValueError) as e:
        raise BallotParseError(f"bad metadata: {e}", 2) from None
    if len(names) != m:
        raise BallotParseError(f"{len(names)} candidate names for m={m}", 4)
    if len(lines) < 5 or lines[4].strip() != "voter,winner,loser":
        raise BallotParseError("missing column header", 5)
    rows = []
    for lineno, line in enumerate(lines[5:], start=6):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 3:
                raise ValueError
            rows.append(tuple(int(x) for x in parts))
        except ValueError:
            raise BallotParseError(f"malformed comparison {line!r}", lineno) from None
    try:
        return ComparisonDataset.from_comparisons(rows, CandidateSet(names), n_voters)
    except ValueError as e:
        raise BallotParseError(str(e)) from None


def write_dataset(dataset: ComparisonDataset, path: str | Path) -> None:
    Path(path).write_text(serialize_dataset(dataset), encoding="utf-8")


def read_dataset(path: str | Path) -> ComparisonDataset:
    with open(path, encoding="utf-8") as f:
        return load_dataset(f)
