import math

import numpy as np
import pytest

from lakejoin.contextualize import Pattern
from lakejoin.corpus import Column, Repository
from lakejoin.embed import HashingCellEmbedder
from lakejoin.errors import DimensionMismatchError
from lakejoin.oracle import MatchConfig, equi_joinability, semantic_joinability
from lakejoin.trainprep import (
    PositivePair,
    TrainBatch,
    TrainConfig,
    augment_shuffle,
    make_batches,
    mnr_loss,
    self_join_positives,
)

from conftest import random_column, random_repository


def naive_mnr(x, y):
    """Independent oracle: literal formula, no stabilization."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.shape[0]
    total = 0.0
    for i in range(n):
        s_ii = np.dot(x[i], y[i]) / (np.linalg.norm(x[i]) * np.linalg.norm(y[i]))
        denom = sum(
            math.exp(np.dot(x[i], y[j]) / (np.linalg.norm(x[i]) * np.linalg.norm(y[j])))
            for j in range(n)
        )
        total += s_ii - math.log(denom)
    return -total / n


def brute_force_positives(repo, t, mode="equi", cfg=None):
    """Independent oracle: all ordered pairs by direct jn evaluation."""
    out = set()
    for x in repo:
        for y in repo:
            if x.id == y.id:
                continue
            jn = (equi_joinability(x, y) if mode == "equi"
                  else semantic_joinability(x, y, cfg))
            if jn >= t - 1e-9:
                out.add((x.id, y.id, round(jn, 12)))
    return out


class TestSelfJoinPositives:
    def test_disjoint_repo_empty(self, rng):
        cols = [
            Column(id=f"c{i}", cells=tuple(f"p{i}v{j}" for j in range(6)))
            for i in range(10)
        ]
        repo = Repository(cols)
        pairs = self_join_positives(repo, TrainConfig(t=0.7))
        assert pairs == []

    def test_identical_columns_both_directions(self):
        cells = tuple(f"v{i}" for i in range(6))
        repo = Repository([Column(id="a", cells=cells), Column(id="b", cells=cells)])
        pairs = self_join_positives(repo, TrainConfig(t=0.7))
        assert {(p.x_id, p.y_id, p.jn) for p in pairs} == {
            ("a", "b", 1.0), ("b", "a", 1.0)}

    def test_matches_all_pairs_oracle_equi(self, rng):
        repo = random_repository(rng, 200, vocab=120, max_cells=12)
        pairs = self_join_positives(repo, TrainConfig(t=0.5))
        got = {(p.x_id, p.y_id, round(p.jn, 12)) for p in pairs}
        assert got == brute_force_positives(repo, 0.5)

    def test_matches_all_pairs_oracle_semantic(self, rng):
        repo = random_repository(rng, 30, vocab=60, max_cells=8)
        cfg = MatchConfig(cell_embedder=HashingCellEmbedder(16, 2), tau=1.1)
        pairs = self_join_positives(repo, TrainConfig(t=0.4, join_mode=cfg))
        got = {(p.x_id, p.y_id, round(p.jn, 12)) for p in pairs}
        assert got == brute_force_positives(repo, 0.4, "semantic", cfg)

    def test_reproducible(self, rng):
        repo = random_repository(rng, 50, vocab=60)
        cfg = TrainConfig(t=0.3, seed=11)
        assert self_join_positives(repo, cfg) == self_join_positives(repo, cfg)

    def test_jn_at_least_threshold(self, rng):
        repo = random_repository(rng, 80, vocab=80)
        pairs = self_join_positives(repo, TrainConfig(t=0.4))
        assert all(p.jn >= 0.4 - 1e-9 for p in pairs)
        assert all(not p.augmented for p in pairs)

    def test_sampling_caps_join_size(self, rng):
        repo = random_repository(rng, 40, vocab=60)
        cfg = TrainConfig(t=0.3, seed=0, sample_size=10)
        pairs = self_join_positives(repo, cfg)
        ids = {p.x_id for p in pairs} | {p.y_id for p in pairs}
        assert len(ids) <= 10

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(t=0.0)
        with pytest.raises(ValueError):
            TrainConfig(t=1.5)
        with pytest.raises(ValueError):
            TrainConfig(t=0.5, r=-1)
        with pytest.raises(ValueError):
            TrainConfig(t=0.5, batch_size=1)
        with pytest.raises(ValueError):
            TrainConfig(t=0.5, join_mode="fuzzy")


def make_pairs(n, distinct_y=True):
    return [
        PositivePair(x_id=f"x{i}", y_id=f"y{i if distinct_y else 0}",
                     x_text=f"tx {i}", y_text=f"ty {i}", jn=0.8)
        for i in range(n)
    ]


class TestAugmentShuffle:
    def _repo_and_pairs(self, rng, n_pairs):
        repo = random_repository(rng, 60, vocab=500, min_cells=8, max_cells=12)
        ids = repo.ids()
        pairs = [
            PositivePair(
                x_id=ids[i % 60], y_id=ids[(i + 1) % 60],
                x_text=", ".join(repo[ids[i % 60]].cells),
                y_text=", ".join(repo[ids[(i + 1) % 60]].cells),
                jn=0.9,
            )
            for i in range(n_pairs)
        ]
        return repo, pairs

    def test_r_zero_identity(self, rng):
        repo, pairs = self._repo_and_pairs(rng, 20)
        assert augment_shuffle(pairs, 0.0, 1, repo) == pairs

    def test_counts_at_r_point_two(self, rng):
        repo, pairs = self._repo_and_pairs(rng, 100)
        out = augment_shuffle(pairs, 0.2, 3, repo, pattern=Pattern.COL)
        assert len(out) == 120
        augmented = [p for p in out if p.augmented]
        assert len(augmented) == 20
        assert len(augmented) / len(out) == pytest.approx(0.2 / 1.2)

    def test_augmented_text_is_cell_permutation(self, rng):
        repo, pairs = self._repo_and_pairs(rng, 50)
        out = augment_shuffle(pairs, 0.4, 7, repo, pattern=Pattern.COL)
        for p in out:
            if not p.augmented:
                continue
            original = sorted(repo[p.x_id].cells)
            shuffled = sorted(p.x_text.split(", "))
            assert shuffled == original

    def test_augmented_shares_jn_and_ids(self, rng):
        repo, pairs = self._repo_and_pairs(rng, 30)
        out = augment_shuffle(pairs, 0.5, 2, repo, pattern=Pattern.COL)
        originals = {(p.x_id, p.y_id): p for p in pairs}
        for p in out:
            if p.augmented:
                src = originals[(p.x_id, p.y_id)]
                assert p.jn == src.jn
                assert p.y_text == src.y_text

    def test_deterministic(self, rng):
        repo, pairs = self._repo_and_pairs(rng, 40)
        a = augment_shuffle(pairs, 0.3, 9, repo)
        b = augment_shuffle(pairs, 0.3, 9, repo)
        assert a == b


class TestMakeBatches:
    def test_four_pairs_two_batches(self):
        batches, dropped = make_batches(make_pairs(4), 2, seed=0)
        assert len(batches) == 2
        assert dropped == 0

    def test_single_shared_y_drops_everything(self):
        batches, dropped = make_batches(make_pairs(10, distinct_y=False), 2, seed=0)
        assert batches == []
        assert dropped == 10

    def test_invariants_on_random_input(self, rng):
        pairs = [
            PositivePair(x_id=f"x{i}", y_id=f"y{int(rng.integers(0, 12))}",
                         x_text="t", y_text="t", jn=0.7)
            for i in range(200)
        ]
        for n in (2, 8, 32):
            batches, dropped = make_batches(pairs, n, seed=4)
            assert all(len(b) == n for b in batches)
            for b in batches:
                ys = [p.y_id for p in b.pairs]
                assert len(set(ys)) == n
            assert len(batches) * n + dropped == len(pairs)

    def test_batch_validation(self):
        with pytest.raises(ValueError):
            TrainBatch(pairs=tuple(make_pairs(3, distinct_y=False)))
        with pytest.raises(ValueError):
            make_batches(make_pairs(4), 1, seed=0)


class TestMnrLoss:
    def test_single_pair_loss_zero(self, rng):
        v = rng.standard_normal((1, 8))
        assert mnr_loss(v, v) == 0.0

    def test_orthogonal_two_pair_case(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss = mnr_loss(x, x)
        assert loss == pytest.approx(math.log(1 + math.e) - 1, abs=1e-9)
        assert loss == pytest.approx(0.313262, abs=1e-6)

    def test_matches_naive_formula(self, rng):
        for n in (2, 5, 16):
            x = rng.standard_normal((n, 12))
            y = rng.standard_normal((n, 12))
            assert mnr_loss(x, y) == pytest.approx(naive_mnr(x, y), abs=1e-9)

    def test_diagonal_improvement_decreases_loss(self, rng):
        n = 6
        x = rng.standard_normal((n, 16))
        y = rng.standard_normal((n, 16))
        base = mnr_loss(x, y)
        y2 = y.copy()
        # pull y_0 toward x_0: raises S(0,0) while other rows are untouched
        y2[0] = 0.2 * y2[0] / np.linalg.norm(y2[0]) + 0.8 * x[0] / np.linalg.norm(x[0])
        assert mnr_loss(x, y2) < base

    def test_batch_permutation_invariance(self, rng):
        n = 8
        x = rng.standard_normal((n, 10))
        y = rng.standard_normal((n, 10))
        perm = rng.permutation(n)
        assert mnr_loss(x[perm], y[perm]) == pytest.approx(mnr_loss(x, y), abs=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionMismatchError):
            mnr_loss(rng.standard_normal((3, 4)), rng.standard_normal((4, 4)))

    def test_stable_for_large_magnitudes(self, rng):
        # cosine keeps scores in [-1, 1]; scaling inputs must not change loss
        x = rng.standard_normal((4, 8))
        y = rng.standard_normal((4, 8))
        assert mnr_loss(x * 1e6, y * 1e-6) == pytest.approx(mnr_loss(x, y), abs=1e-9)
