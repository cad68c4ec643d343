"""Active-learning engine tests: round arithmetic, invariants, resumability."""

import numpy as np
import pytest

from activeseed.corpus import two_moons
from activeseed.mixture import ViConfig
from activeseed.pal import (
    AlConfig,
    PalRun,
    make_simulated_oracle,
    oracle_answer,
    run_pal,
)
from activeseed.svm import GridSearchSpec

FAST_VI = ViConfig(j_max=5, n_restarts=2, seed=0)
SMALL_GRID = GridSearchSpec(c_grid=(1.0, 10.0), gamma_grid=(0.5, 2.0))


def moons_split(n=120, seed=0, train_frac=0.75):
    ds = two_moons(n=n, seed=seed)
    cut = int(train_frac * n)
    train = ds.block(np.arange(cut))
    test = ds.block(np.arange(cut, n))
    return train, test


def fast_cfg(**kw):
    base = dict(
        budget=18, strategy="4ds", kernel="rbf", vi=FAST_VI, grid=SMALL_GRID,
        record_timing=False,
    )
    base.update(kw)
    return AlConfig(**base)


class TestConfig:
    def test_defaults_follow_strategy(self):
        assert fast_cfg(strategy="4ds").effective_query_size == 5
        assert fast_cfg(strategy="us").effective_query_size == 1
        assert fast_cfg(strategy="random").effective_query_size == 1
        assert fast_cfg().effective_init_size(3) == 12

    def test_validation(self):
        with pytest.raises(ValueError, match="strategy"):
            fast_cfg(strategy="entropy")
        with pytest.raises(ValueError, match="kernel"):
            fast_cfg(kernel="poly")
        with pytest.raises(ValueError):
            fast_cfg(budget=0)
        with pytest.raises(ValueError):
            fast_cfg(diversity_weight=1.5)


class TestRounds:
    def test_budget_equal_to_init_gives_single_round(self):
        train, test = moons_split()
        cfg = fast_cfg(budget=8)
        record = run_pal(train, cfg, 2, make_simulated_oracle(train), test=test)
        assert len(record.rounds) == 1
        assert record.rounds[0].n_labeled == 8
        assert len(record.rounds[0].selected_ids) == 8

    def test_round_count_matches_cadence(self):
        train, test = moons_split()
        cfg = fast_cfg(budget=23)  # 8 + 5 + 5 + 5
        record = run_pal(train, cfg, 2, make_simulated_oracle(train), test=test)
        assert len(record.rounds) == 4
        assert [r.n_labeled for r in record.rounds] == [8, 13, 18, 23]

    def test_tail_round_shrinks_to_budget(self):
        train, _ = moons_split()
        cfg = fast_cfg(budget=20)  # 8 + 5 + 5 + 2
        record = run_pal(train, cfg, 2, make_simulated_oracle(train))
        assert [r.n_labeled for r in record.rounds] == [8, 13, 18, 20]
        assert len(record.rounds[-1].selected_ids) == 2

    def test_partition_invariant_and_monotone_growth(self):
        train, _ = moons_split()
        run = PalRun(train, fast_cfg(budget=18), 2)
        oracle = make_simulated_oracle(train)
        seen = set()
        while not run.done:
            ids = run.pending
            assert not (set(ids.tolist()) & seen)
            seen |= set(ids.tolist())
            labeled = set(train.ids[run.labeled_pos].tolist())
            pool = set(train.ids[run.pool_pos].tolist())
            assert labeled.isdisjoint(pool)
            assert labeled | pool == set(train.ids.tolist())
            run.provide(oracle_answer(oracle, ids))
        assert len(run.labeled_pos) == 18

    def test_hyperparams_tuned_once_on_first_labeled_set(self):
        train, _ = moons_split()
        run = PalRun(train, fast_cfg(budget=13), 2)
        oracle = make_simulated_oracle(train)
        run.provide(oracle(run.pending))
        spec_after_init = run.kernel_spec
        c_after_init = run.c
        run.provide(oracle(run.pending))
        assert run.kernel_spec is spec_after_init
        assert run.c == c_after_init
        assert run.record.tuned_gamma == spec_after_init.gamma


class TestDeterminism:
    def test_identical_runs_produce_identical_records(self):
        train, test = moons_split()
        oracle = make_simulated_oracle(train)
        a = run_pal(train, fast_cfg(budget=18, seed=5), 2, oracle, test=test)
        b = run_pal(train, fast_cfg(budget=18, seed=5), 2, oracle, test=test)
        assert [r.to_dict() for r in a.rounds] == [r.to_dict() for r in b.rounds]
        assert (a.tuned_gamma, a.tuned_c) == (b.tuned_gamma, b.tuned_c)

    def test_replaying_a_transcript_restores_state(self):
        train, _ = moons_split()
        cfg = fast_cfg(budget=18, seed=2)
        oracle = make_simulated_oracle(train)
        first = PalRun(train, cfg, 2)
        transcript = []
        while not first.done:
            ids = first.pending
            labels = oracle(ids)
            transcript.append(labels)
            first.provide(labels)
        resumed = PalRun(train, cfg, 2)
        for labels in transcript:
            resumed.provide(labels)
        assert np.array_equal(first.labeled_pos, resumed.labeled_pos)
        assert np.array_equal(first.labeled_y, resumed.labeled_y)
        assert [r.to_dict() for r in first.record.rounds] == [
            r.to_dict() for r in resumed.record.rounds
        ]


class TestClassicalReduction:
    def test_us_without_refinement_keeps_the_mixture_fixed(self):
        train, _ = moons_split()
        cfg = fast_cfg(strategy="us", budget=12, refinement=False)
        run = PalRun(train, cfg, 2)
        oracle = make_simulated_oracle(train)
        while not run.done:
            run.provide(oracle(run.pending))
        assert run.model is run.base_model

    def test_us_queries_one_sample_per_round(self):
        train, _ = moons_split()
        cfg = fast_cfg(strategy="us", budget=11, refinement=False)
        record = run_pal(train, cfg, 2, make_simulated_oracle(train))
        assert [len(r.selected_ids) for r in record.rounds] == [8, 1, 1, 1]


class TestWeightsInRecord:
    def test_initial_round_keeps_distribution_focus(self):
        train, _ = moons_split()
        record = run_pal(train, fast_cfg(budget=8), 2, make_simulated_oracle(train))
        assert record.rounds[0].weights == (0.0, 0.0, 1.0)

    def test_simplex_every_round(self):
        train, _ = moons_split()
        record = run_pal(train, fast_cfg(budget=23), 2, make_simulated_oracle(train))
        for r in record.rounds:
            assert min(r.weights) >= 0.0
            assert abs(sum(r.weights) - 1.0) < 1e-9


class TestErrors:
    def test_provide_checks_label_count_and_range(self):
        train, _ = moons_split()
        run = PalRun(train, fast_cfg(budget=12), 2)
        with pytest.raises(ValueError, match="labels"):
            run.provide(np.zeros(3, dtype=np.int64))
        with pytest.raises(ValueError, match="range"):
            run.provide(np.full(len(run.pending), 7))

    def test_provide_after_done_raises(self):
        train, _ = moons_split()
        run = PalRun(train, fast_cfg(budget=8), 2)
        run.provide(make_simulated_oracle(train)(run.pending))
        assert run.done
        with pytest.raises(RuntimeError, match="complete"):
            run.provide(np.zeros(1, dtype=np.int64))

    def test_budget_exceeding_pool_rejected(self):
        train, _ = moons_split(n=40)
        with pytest.raises(ValueError, match="budget"):
            PalRun(train, fast_cfg(budget=400), 2)

    def test_oracle_answer_validates_shape(self):
        with pytest.raises(ValueError, match="mismatched"):
            oracle_answer(lambda ids: np.zeros(1, dtype=np.int64), np.arange(3))

    def test_simulated_oracle_needs_labels(self):
        train, _ = moons_split()
        block = train.take(np.arange(10))
        block.y[:] = -1
        with pytest.raises(ValueError, match="labeled"):
            make_simulated_oracle(block)


class TestLearning:
    def test_accuracy_curve_is_recorded_and_credible(self):
        train, test = moons_split(n=160, seed=1)
        cfg = fast_cfg(budget=28, seed=1)
        record = run_pal(train, cfg, 2, make_simulated_oracle(train), test=test)
        assert len(record.curve) == len(record.rounds)
        sizes = [p[0] for p in record.curve]
        assert sizes == sorted(sizes)
        assert record.final_test_acc >= 0.80

    def test_rwm_kernel_path_runs(self):
        train, test = moons_split(n=120, seed=3)
        cfg = fast_cfg(budget=13, kernel="rwm", seed=3)
        record = run_pal(train, cfg, 2, make_simulated_oracle(train), test=test)
        assert record.final_test_acc is not None
        assert record.tuned_gamma in SMALL_GRID.gamma_grid
