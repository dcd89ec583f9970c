"""Budget sweeps, hyperparameter sweeps and collusion-threshold search.

Every trial draws its seeds from ``numpy.random.SeedSequence(spec.seed)``
spawned per trial, so trial ``t`` sees the same electorate and the same
attack seed in every cell: algorithms and budgets are compared on paired
seeds.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import IO, Iterable, Literal, Sequence

import numpy as np

from .attacks import AttackConfig, AttackResult, coalition_pool, run_attack
from .core import ComparisonDataset, Ranking, aggregate, check_ranking, ranking_from_strengths
from .data import SyntheticSpec, generate_synthetic
from .mle import FitConfig, fit

CSV_COLUMNS = (
    "algorithm",
    "budget_fraction",
    "trials",
    "mean_final_kd",
    "mean_reduction",
    "mean_rank_shift",
    "success_rate",
    "mean_flips",
    "seconds",
    "subsets",
    "iterations",
)
SCHEMA_VERSION = 1

Criterion = Literal["exact", "improved"]


def initial_ranking(dataset: ComparisonDataset, config: FitConfig | None = None) -> Ranking:
    return ranking_from_strengths(fit(aggregate(dataset), config).strengths)


def make_target(initial: Sequence[int], kind: str | Sequence[int]) -> Ranking:
    """Build a target ranking from the current one.

    ``identity``      the current ranking itself
    ``swap-top``      first and second place exchanged
    ``promote:K``     the candidate in place K (1-based, or ``last``) moved to first
    ``reverse``       the whole ranking reversed
    A sequence of candidate indices is taken as an explicit target.
    """
    order = list(initial)
    if not isinstance(kind, str):
        return check_ranking(kind, len(order))
    if kind == "identity":
        return tuple(order)
    if kind == "swap-top":
        return tuple([order[1], order[0]] + order[2:])
    if kind == "reverse":
        return tuple(reversed(order))
    if kind.startswith("promote:"):
        arg = kind.split(":", 1)[1]
        place = len(order) if arg == "last" else int(arg)
        if not 1 <= place <= len(order):
            raise ValueError(f"promote place must be in 1..{len(order)}")
        c = order.pop(place - 1)
        return tuple([c] + order)
    raise ValueError(f"unknown target kind {kind!r}")


def budget_for(fraction: float, pool_size: int) -> int:
    # round first so that e.g. 0.05 * 120 is 6, not 7
    return math.ceil(round(fraction * pool_size, 9))


def rank_shift(result: AttackResult, target: Ranking) -> int:
    """Places gained by the target's top candidate (positive means it climbed)."""
    c = target[0]
    return result.initial_ranking.index(c) - result.final_ranking.index(c)


@dataclass(frozen=True)
class SweepSpec:
    synthetic: SyntheticSpec | None = None
    dataset: ComparisonDataset | None = None
    algorithms: tuple[str, ...] = ("rf", "gf", "rsa", "assa")
    budget_fractions: tuple[float, ...] = (0.01, 0.05, 0.10, 0.20)
    trials: int = 20
    target: str | tuple[int, ...] = "swap-top"
    subsets: int = 20
    iterations: int = 50
    # None: every voter belongs to the coalition
    coalition_size: int | None = None
    seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)
    criterion: Criterion = "exact"

    def __post_init__(self):
        if self.criterion not in ("exact", "improved"):
            raise ValueError(f"unknown success criterion {self.criterion!r}")
        if (self.synthetic is None) == (self.dataset is None):
            raise ValueError("give exactly one of synthetic or dataset")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for f in self.budget_fractions:
            if not 0 < f <= 1:
                raise ValueError(f"budget fraction {f} outside (0, 1]")


# 4 candidates, 20 voters comparing every pair, strengths 0.8**i; with 20
# subsets each one holds 5% of the 120 comparisons
STANDARD_ELECTORATE = SyntheticSpec(m=4, n_voters=20, rho=0.8)


def standard_ensemble(**overrides) -> SweepSpec:
    """The desk-scale ensemble: 20 paired trials of making the runner-up the
    winner, b=20, T=50, k in {1%, 5%, 10%, 20%}."""
    return replace(SweepSpec(synthetic=STANDARD_ELECTORATE), **overrides)


@dataclass(frozen=True)
class TrialRecord:
    algorithm: str
    budget_fraction: float
    trial: int
    data_seed: int
    attack_seed: int
    budget: int
    initial_distance: int
    final_distance: int
    flips: int
    rounds: int
    rank_shift: int
    seconds: float
    subsets: int
    iterations: int


@dataclass(frozen=True)
class CellResult:
    algorithm: str
    budget_fraction: float
    trials: int
    mean_final_kd: float
    min_final_kd: int
    max_final_kd: int
    mean_reduction: float
    mean_rank_shift: float
    success_rate: float
    mean_flips: float
    seconds: float
    subsets: int
    iterations: int
    seeds: tuple[int, ...] = ()


def success_rate(results: Iterable, criterion: Criterion = "exact") -> float:
    """Fraction of trials that hit the target (``exact``) or got closer (``improved``).

    Accepts AttackResult or TrialRecord items.
    """
    results = list(results)
    if not results:
        raise ValueError("need at least one trial")
    if criterion == "exact":
        hits = sum(r.final_distance == 0 for r in results)
    elif criterion == "improved":
        hits = sum(r.final_distance < r.initial_distance or r.final_distance == 0 for r in results)
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    return hits / len(results)


def trial_seeds(seed: int, trials: int) -> list[tuple[int, int, int]]:
    """(data, attack, coalition) seeds for each trial, derived from one root seed."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(trials):
        a, b, c = child.generate_state(3, dtype=np.uint32).tolist()
        out.append((a, b, c))
    return out


def _trial_dataset(spec: SweepSpec, data_seed: int) -> ComparisonDataset:
    if spec.synthetic is not None:
        return generate_synthetic(replace(spec.synthetic, seed=data_seed))[0]
    return spec.dataset


def _coalition(dataset: ComparisonDataset, size: int | None, seed: int) -> frozenset[int] | None:
    if size is None or size >= dataset.n_voters:
        return None
    rng = np.random.default_rng(seed)
    return frozenset(rng.choice(dataset.n_voters, size=size, replace=False).tolist())


def _run_trial(job) -> TrialRecord:
    spec, algorithm, fraction, t, (data_seed, attack_seed, coalition_seed) = job
    dataset = _trial_dataset(spec, data_seed)
    coalition = _coalition(dataset, spec.coalition_size, coalition_seed)
    pool = coalition_pool(dataset, coalition)
    if pool.size == 0:
        raise ValueError("coalition casts no comparisons; nothing to flip")
    target = make_target(initial_ranking(dataset, spec.fit), spec.target)
    config = AttackConfig(
        target=target,
        budget=budget_for(fraction, pool.size),
        coalition=coalition,
        seed=attack_seed,
        subsets=spec.subsets,
        iterations=spec.iterations,
        fit=spec.fit,
    )
    start = time.perf_counter()
    result = run_attack(algorithm, dataset, config)
    return TrialRecord(
        algorithm=algorithm,
        budget_fraction=fraction,
        trial=t,
        data_seed=data_seed,
        attack_seed=attack_seed,
        budget=config.budget,
        initial_distance=result.initial_distance,
        final_distance=result.final_distance,
        flips=len(result.flips),
        rounds=result.rounds,
        rank_shift=rank_shift(result, target),
        seconds=time.perf_counter() - start,
        subsets=spec.subsets,
        iterations=spec.iterations,
    )


def _map(jobs: list, jobs_n: int) -> list[TrialRecord]:
    if jobs_n <= 1 or len(jobs) <= 1:
        return [_run_trial(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=jobs_n) as pool:
        return list(pool.map(_run_trial, jobs, chunksize=max(1, len(jobs) // (4 * jobs_n))))


def summarize(records: Sequence[TrialRecord], criterion: Criterion = "exact") -> CellResult:
    first = records[0]
    finals = [r.final_distance for r in records]
    return CellResult(
        algorithm=first.algorithm,
        budget_fraction=first.budget_fraction,
        trials=len(records),
        mean_final_kd=float(np.mean(finals)),
        min_final_kd=int(min(finals)),
        max_final_kd=int(max(finals)),
        mean_reduction=float(np.mean([r.initial_distance - r.final_distance for r in records])),
        mean_rank_shift=float(np.mean([r.rank_shift for r in records])),
        success_rate=success_rate(records, criterion),
        mean_flips=float(np.mean([r.flips for r in records])),
        seconds=float(sum(r.seconds for r in records)),
        subsets=first.subsets,
        iterations=first.iterations,
        seeds=tuple(r.attack_seed for r in records),
    )


@dataclass
class SweepTable:
    cells: list[CellResult]
    records: list[TrialRecord] = field(default_factory=list)


def run_cells(spec: SweepSpec, jobs: int = 1) -> SweepTable:
    seeds = trial_seeds(spec.seed, spec.trials)
    work = [
        (spec, alg, frac, t, seeds[t])
        for alg in spec.algorithms
        for frac in spec.budget_fractions
        for t in range(spec.trials)
    ]
    records = _map(work, jobs)
    records.sort(key=lambda r: (spec.algorithms.index(r.algorithm), r.budget_fraction, r.trial))
    cells = []
    for alg in spec.algorithms:
        for frac in spec.budget_fractions:
            group = [r for r in records if r.algorithm == alg and r.budget_fraction == frac]
            cells.append(summarize(group, spec.criterion))
    return SweepTable(cells, records)


def budget_sweep(spec: SweepSpec, jobs: int = 1) -> SweepTable:
    """One cell per (algorithm, budget fraction), ``spec.trials`` paired seeds each."""
    return run_cells(spec, jobs)


def hyperparameter_sweep(
    axis: Literal["subsets", "iterations"], values: Sequence[int], spec: SweepSpec, jobs: int = 1
) -> SweepTable:
    if axis not in ("subsets", "iterations"):
        raise ValueError(f"unknown axis {axis!r}")
    table = SweepTable([], [])
    for v in values:
        part = run_cells(replace(spec, **{axis: int(v)}), jobs)
        table.cells.extend(part.cells)
        table.records.extend(part.records)
    return table


@dataclass(frozen=True)
class ThresholdResult:
    reachable: bool
    threshold: int | None
    fraction: float | None
    n_voters: int
    # coalition size -> share of sampled coalitions that reached the target
    evaluated: dict[int, float]


def coalition_success(
    dataset: ComparisonDataset,
    target: Ranking,
    size: int,
    algorithm: str = "assa",
    trials: int = 5,
    seed: int = 0,
    subsets: int = 10,
    iterations: int = 50,
    fit_config: FitConfig | None = None,
    candidates: str = "coalition",
) -> float:
    """Share of ``trials`` random coalitions of ``size`` voters that reach ``target``.

    Each coalition may flip every comparison it cast.
    """
    hits = 0
    for t in range(trials):
        ss = np.random.SeedSequence([seed, size, t])
        coalition_seed, attack_seed = ss.generate_state(2, dtype=np.uint32).tolist()
        coalition = _coalition(dataset, size, coalition_seed)
        pool = coalition_pool(dataset, coalition)
        config = AttackConfig(
            target=target,
            budget=int(pool.size),
            coalition=coalition,
            seed=attack_seed,
            subsets=subsets,
            iterations=iterations,
            fit=fit_config or FitConfig(),
            candidates=candidates,
        )
        hits += run_attack(algorithm, dataset, config).final_distance == 0
    return hits / trials


def collusion_threshold(
    dataset: ComparisonDataset,
    target: Ranking,
    algorithm: str = "assa",
    trials: int = 5,
    seed: int = 0,
    subsets: int = 10,
    iterations: int = 50,
    fit_config: FitConfig | None = None,
    candidates: str = "coalition",
) -> ThresholdResult:
    """Smallest coalition size at which at least half the sampled coalitions win.

    Binary search over sizes 1..n_voters; it assumes success is monotone in
    coalition size and first checks that the full electorate can succeed.
    """
    target = check_ranking(target, dataset.m)
    n = dataset.n_voters
    evaluated: dict[int, float] = {}

    def succeeds(size: int) -> bool:
        if size not in evaluated:
            evaluated[size] = coalition_success(
                dataset, target, size, algorithm, trials, seed, subsets, iterations, fit_config, candidates
            )
        return evaluated[size] >= 0.5

    if n < 1 or not succeeds(n):
        return ThresholdResult(False, None, None, n, evaluated)
    lo, hi = 1, n
    while lo < hi:
        mid = (lo + hi) // 2
        if succeeds(mid):
            hi = mid
        else:
            lo = mid + 1
    return ThresholdResult(True, hi, hi / n, n, dict(sorted(evaluated.items())))


def _cell_row(cell: CellResult) -> list:
    return [getattr(cell, c) for c in CSV_COLUMNS]


def format_csv(cells: Iterable[CellResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for cell in cells:
        writer.writerow(_cell_row(cell))
    return buf.getvalue()


def format_json(table: SweepTable) -> str:
    doc = {
        "schema": "rankattack.sweep",
        "version": SCHEMA_VERSION,
        "cells": [asdict(c) for c in table.cells],
        "records": [asdict(r) for r in table.records],
    }
    return json.dumps(doc, indent=2)


def load_json(text: str) -> SweepTable:
    doc = json.loads(text)
    if doc.get("schema") != "rankattack.sweep" or doc.get("version") != SCHEMA_VERSION:
        raise ValueError("not a rankattack sweep document of a supported version")
    cells = [CellResult(**{**c, "seeds": tuple(c.get("seeds", ()))}) for c in doc["cells"]]
    records = [TrialRecord(**r) for r in doc.get("records", [])]
    return SweepTable(cells, records)


def emit_results(
    table: SweepTable | Sequence[CellResult],
    fmt: Literal["csv", "json"],
    destination: str | Path | IO[str],
) -> None:
    if not isinstance(table, SweepTable):
        table = SweepTable(list(table))
    if fmt == "csv":
        text = format_csv(table.cells)
    elif fmt == "json":
        text = format_json(table) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if isinstance(destination, (str, Path)):
        with open(destination, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    else:
        destination.write(text)
