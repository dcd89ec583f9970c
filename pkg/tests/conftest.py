import numpy as np
import pytest

from rankattack.core import ComparisonDataset


def random_counts(rng: np.random.Generator, m: int, high: int = 6, connected: bool = True) -> np.ndarray:
    """Random win-count matrix; with ``connected`` every ordered pair is >= 1."""
    low = 1 if connected else 0
    c = rng.integers(low, high + 1, size=(m, m))
    np.fill_diagonal(c, 0)
    return c


def dataset_from_counts(counts, rng: np.random.Generator | None = None, n_voters: int = 1) -> ComparisonDataset:
    counts = np.asarray(counts)
    rows = []
    for i in range(counts.shape[0]):
        for j in range(counts.shape[0]):
            rows += [(i, j)] * int(counts[i, j])
    if rng is not None:
        rng.shuffle(rows)
        voters = rng.integers(0, n_voters, size=len(rows))
    else:
        voters = np.zeros(len(rows), dtype=int)
    return ComparisonDataset.from_comparisons(
        [(int(v), w, l) for v, (w, l) in zip(voters, rows)], counts.shape[0], n_voters
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_attack_case(rng: np.random.Generator):
    """A small strongly connected dataset plus a random attack configuration."""
    from rankattack.attacks import AttackConfig, coalition_pool
    from rankattack.core import aggregate
    from rankattack.data import SyntheticSpec, generate_synthetic
    from rankattack.mle import check_connectivity

    while True:
        m = int(rng.integers(3, 6))
        n_voters = int(rng.integers(3, 9))
        per = int(rng.integers(max(1, m - 1), m * (m - 1) // 2 + 1))
        spec = SyntheticSpec(m, n_voters, per, strength_law="uniform", seed=int(rng.integers(2**31)))
        dataset, _ = generate_synthetic(spec)
        if check_connectivity(aggregate(dataset)).strongly_connected:
            break
    coalition = None
    if rng.random() < 0.5:
        size = int(rng.integers(1, n_voters + 1))
        coalition = frozenset(rng.choice(n_voters, size=size, replace=False).tolist())
    pool = coalition_pool(dataset, coalition)
    config = AttackConfig(
        target=tuple(rng.permutation(m).tolist()),
        budget=int(rng.integers(0, len(pool) + 1)),
        coalition=coalition,
        seed=int(rng.integers(2**31)),
        subsets=int(rng.integers(1, 7)),
        iterations=int(rng.integers(1, 6)),
    )
    return dataset, config


def attack_violations(dataset, config, result, rerun=None) -> list[str]:
    """Every broken attack constraint, as readable strings (empty when all hold)."""
    from rankattack.attacks import coalition_pool
    from rankattack.core import aggregate, flip, kendall_tau, ranking_from_strengths
    from rankattack.mle import fit

    def distance_of(flips):
        p = fit(aggregate(flip(dataset, flips))).strengths
        return kendall_tau(config.target, ranking_from_strengths(p))

    bad = []
    if len(result.flips) > config.budget:
        bad.append(f"budget: {len(result.flips)} > {config.budget}")
    pool = set(coalition_pool(dataset, config.coalition).tolist())
    if not result.flips <= pool:
        bad.append(f"coalition: flipped {sorted(result.flips - pool)} outside the pool")
    if result.manipulated != flip(dataset, result.flips):
        bad.append("manipulated dataset differs from flip(original, flips)")
    if result.final_distance > result.initial_distance:
        bad.append("final distance exceeds initial distance")
    accepted = [c for c in result.trajectory if c.accepted]
    dists = [c.distance for c in accepted]
    if any(b >= a for a, b in zip(dists, dists[1:])):
        bad.append(f"trajectory not strictly decreasing: {dists}")
    if dists[0] != result.initial_distance or dists[-1] != result.final_distance:
        bad.append("trajectory endpoints disagree with reported distances")
    for c in result.trajectory:
        if c.distance is not None and distance_of(c.flips) != c.distance:
            bad.append(f"stale distance at round {c.round}: {c.distance}")
    if rerun is not None and rerun != result:
        bad.append("same seed produced a different result")
    return bad


# criterion number -> report line, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
