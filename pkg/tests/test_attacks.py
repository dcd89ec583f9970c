import itertools

import numpy as np
import pytest

from conftest import attack_violations, dataset_from_counts, random_attack_case, random_counts
from rankattack.attacks import (
    AttackConfig,
    assa,
    coalition_pool,
    greedy_flip,
    random_flip,
    rsa,
    run_attack,
)
from rankattack.core import ComparisonDataset, aggregate, flip, kendall_tau, ranking_from_strengths
from rankattack.data import SyntheticSpec, generate_synthetic
from rankattack.mle import NonIdentifiableError, fit

ATTACKS = [random_flip, greedy_flip, rsa, assa]


def ranking_of(dataset):
    return ranking_from_strengths(fit(aggregate(dataset)).strengths)


def single_flip_oracle(dataset, target, pool):
    """Best K_d over every single flip in the pool (and no flip at all)."""
    best = kendall_tau(target, ranking_of(dataset))
    for pos in pool:
        try:
            best = min(best, kendall_tau(target, ranking_of(flip(dataset, {int(pos)}))))
        except NonIdentifiableError:
            pass
    return best


class TestCoalitionPool:
    def test_examples(self):
        d = ComparisonDataset.from_comparisons([(0, 0, 1), (1, 1, 0), (0, 0, 1)], 2)
        assert coalition_pool(d, None).tolist() == [0, 1, 2]
        assert coalition_pool(d, {0, 1}).tolist() == [0, 1, 2]
        assert coalition_pool(d, {0}).tolist() == [0, 2]
        assert coalition_pool(d, set()).tolist() == []

    def test_unknown_voter(self):
        d = ComparisonDataset.from_comparisons([(0, 0, 1), (1, 1, 0)], 2)
        with pytest.raises(ValueError):
            coalition_pool(d, {2})


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(budget=-1),
            dict(subsets=0),
            dict(iterations=0),
            dict(coalition=frozenset()),
            dict(on_empty="retry"),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            AttackConfig(target=(0, 1), **{"budget": 1, **kwargs})

    def test_bad_target(self):
        d = dataset_from_counts([[0, 2], [1, 0]])
        with pytest.raises(ValueError):
            rsa(d, AttackConfig(target=(0, 0), budget=1))

    def test_unknown_algorithm(self):
        d = dataset_from_counts([[0, 2], [1, 0]])
        with pytest.raises(ValueError):
            run_attack("sa", d, AttackConfig(target=(1, 0), budget=1))

    def test_disconnected_input(self):
        d = dataset_from_counts([[0, 2], [0, 0]])
        with pytest.raises(NonIdentifiableError):
            rsa(d, AttackConfig(target=(1, 0), budget=1))


@pytest.fixture
def contested():
    # 3 candidates, 5 voters, every voter compares every pair
    d, _ = generate_synthetic(SyntheticSpec(m=3, n_voters=5, rho=0.8, seed=2))
    return d


class TestTargetAlreadyMet:
    @pytest.mark.parametrize("attack", ATTACKS)
    def test_nothing_flipped(self, attack, contested):
        config = AttackConfig(target=ranking_of(contested), budget=5, seed=1)
        result = attack(contested, config)
        assert result.flips == frozenset()
        assert result.initial_distance == result.final_distance == 0
        assert result.manipulated == contested


class TestRandomFlip:
    def test_budget_zero(self, contested):
        target = tuple(reversed(ranking_of(contested)))
        result = random_flip(contested, AttackConfig(target=target, budget=0))
        assert result.flips == frozenset()
        assert result.final_distance == result.initial_distance

    def test_saturation_attempts_whole_pool(self, contested):
        target = tuple(reversed(ranking_of(contested)))
        pool = coalition_pool(contested, {1, 3})
        result = random_flip(contested, AttackConfig(target=target, budget=10_000, coalition={1, 3}))
        assert result.trajectory[-1].flips == frozenset(pool.tolist())

    def test_worsening_attempt_reverted_but_recorded(self):
        # target already met, so any flip that changes the ranking is reverted
        d = ComparisonDataset.from_comparisons([(0, 0, 1), (0, 0, 1), (0, 1, 0)], 2)
        result = random_flip(d, AttackConfig(target=(0, 1), budget=3))
        attempt = result.trajectory[-1]
        assert not attempt.accepted and attempt.flips == frozenset({0, 1, 2})
        assert attempt.distance == 1
        assert result.flips == frozenset() and result.final_distance == 0

    def test_attempt_keeps_raw_distance(self, rng):
        seen_worse = False
        for seed in range(40):
            d, _ = generate_synthetic(SyntheticSpec(m=4, n_voters=4, rho=0.7, seed=seed))
            try:
                target = ranking_of(d)
            except NonIdentifiableError:
                continue
            result = random_flip(d, AttackConfig(target=target, budget=8, seed=seed))
            last = result.trajectory[-1]
            if not last.accepted and last.distance:
                seen_worse = True
                assert result.final_distance == 0
        assert seen_worse


class TestGreedyFlip:
    def test_two_candidate_example(self):
        d = ComparisonDataset.from_comparisons([(0, 0, 1), (0, 0, 1), (0, 1, 0)], 2)
        result = greedy_flip(d, AttackConfig(target=(1, 0), budget=1))
        assert len(result.flips) == 1
        (pos,) = result.flips
        assert d[pos].winner == 0
        assert aggregate(result.manipulated).tolist() == [[0, 1], [2, 0]]
        assert result.final_distance == 0

    def test_unique_improving_flip(self):
        # exhaustive check of the example: only 0-beats-1 flips help
        d = ComparisonDataset.from_comparisons([(0, 0, 1), (0, 0, 1), (0, 1, 0)], 2)
        helpful = []
        for pos in range(3):
            try:
                if ranking_of(flip(d, {pos})) == (1, 0):
                    helpful.append(pos)
            except NonIdentifiableError:
                pass
        assert helpful == [0, 1]

    def test_budget_one_matches_brute_force(self, rng):
        for _ in range(15):
            m = int(rng.integers(3, 5))
            counts = random_counts(rng, m, high=3)
            d = dataset_from_counts(counts, rng, n_voters=3)
            target = tuple(rng.permutation(m).tolist())
            result = greedy_flip(d, AttackConfig(target=target, budget=1))
            assert len(result.flips) <= 1
            assert result.final_distance == single_flip_oracle(d, target, range(len(d)))

    def test_lowest_position_wins_ties(self):
        d = ComparisonDataset.from_comparisons([(0, 0, 1), (0, 0, 1), (0, 1, 0)], 2)
        assert greedy_flip(d, AttackConfig(target=(1, 0), budget=1)).flips == frozenset({0})

    def test_one_commit_per_step(self, contested):
        target = ranking_of(contested)
        target = (target[0], target[2], target[1])
        result = greedy_flip(contested, AttackConfig(target=target, budget=100))
        assert result.final_distance == 0
        assert result.rounds == len(result.trajectory) - 1


class TestSubsetAttacks:
    def test_whole_pool_in_first_round(self):
        # flipping every comparison swaps the ranking exactly
        d = ComparisonDataset.from_comparisons(
            [(0, 0, 1), (0, 0, 1), (0, 1, 0), (1, 1, 2), (1, 1, 2), (1, 2, 1), (1, 0, 2), (1, 0, 2), (0, 2, 0)],
            3,
        )
        target = tuple(reversed(ranking_of(d)))
        assert ranking_of(flip(d, set(range(len(d))))) == target
        result = rsa(d, AttackConfig(target=target, budget=len(d), subsets=1, iterations=5))
        assert result.flips == frozenset(range(len(d)))
        assert result.trajectory[1].round == 1 and result.rounds == 1

    def test_oversized_subset_skipped(self, contested):
        target = tuple(reversed(ranking_of(contested)))
        result = rsa(contested, AttackConfig(target=target, budget=3, subsets=1, iterations=3))
        assert result.flips == frozenset() and result.refits == 1

    def test_assa_single_round_equals_rsa(self):
        for seed in range(10):
            d, _ = generate_synthetic(SyntheticSpec(m=4, n_voters=6, rho=0.8, seed=seed))
            try:
                init = ranking_of(d)
            except NonIdentifiableError:
                continue
            target = tuple(reversed(init))
            config = AttackConfig(target=target, budget=len(d), subsets=1, iterations=1, seed=seed)
            a, r = assa(d, config), rsa(d, config)
            assert (a.flips, a.final_distance, a.trajectory) == (r.flips, r.final_distance, r.trajectory)

    def test_assa_pool_shrinks_between_restarts(self, rng):
        for _ in range(30):
            d, config = random_attack_case(rng)
            result = assa(d, config)
            for t in range(1, len(result.pool_sizes)):
                if t + 1 not in result.restarts:
                    assert result.pool_sizes[t] <= result.pool_sizes[t - 1]

    def test_assa_stop_mode_never_restarts(self, rng):
        for _ in range(30):
            d, config = random_attack_case(rng)
            result = assa(d, AttackConfig(**{**config.__dict__, "on_empty": "stop"}))
            assert result.restarts == ()
            assert all(b <= a for a, b in zip(result.pool_sizes, result.pool_sizes[1:]))

    def test_assa_beats_random_flip_at_30_percent(self):
        assa_final, rf_final = [], []
        for seed in range(20):
            d, _ = generate_synthetic(SyntheticSpec(m=4, n_voters=20, rho=0.8, seed=seed))
            init = ranking_of(d)
            target = (init[3], init[0], init[1], init[2])
            config = AttackConfig(target=target, budget=36, subsets=20, seed=seed)
            assa_final.append(assa(d, config).final_distance)
            rf_final.append(random_flip(d, config).final_distance)
        assert np.mean(assa_final) <= np.mean(rf_final)


class TestConstraints:
    @pytest.mark.parametrize("name", ["rf", "gf", "rsa", "assa"])
    def test_random_runs(self, name, rng):
        for _ in range(12):
            d, config = random_attack_case(rng)
            result = run_attack(name, d, config)
            assert attack_violations(d, config, result, run_attack(name, d, config)) == []

    def test_warm_start_agrees_with_cold_fits(self, rng):
        # distances in every trajectory are rechecked from scratch inside
        # attack_violations; here also check the final strengths agree
        d, config = random_attack_case(rng)
        result = rsa(d, config)
        cold = fit(aggregate(result.manipulated)).strengths
        assert ranking_from_strengths(cold) == result.final_ranking

    def test_all_pairs_greedy_never_exceeds_budget(self):
        counts = np.array([[0, 3, 3], [1, 0, 3], [1, 1, 0]])
        d = dataset_from_counts(counts)
        for k in range(4):
            for target in itertools.permutations(range(3)):
                result = greedy_flip(d, AttackConfig(target=target, budget=k))
                assert len(result.flips) <= k
