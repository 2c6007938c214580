"""Aggregation rules: the layered defense and the four baselines."""

import math

import numpy as np
import pytest

from celtibero import (
    AggregatorKind,
    aggregate,
    celtibero_aggregate,
    coordinate_median,
    fedavg,
    krum,
    median_krum,
)
from .conftest import make_weights
from .oracles import krum_scores, sorted_median

GLOBAL_VEC = np.array([0.5, -0.25, 1.0])

BENIGN_DELTAS = [
    [1.00, 1.01, 0.99],
    [1.02, 0.98, 1.00],
    [0.97, 1.00, 1.03],
    [1.01, 1.02, 0.98],
    [0.99, 0.97, 1.01],
    [1.03, 1.00, 1.02],
]
POISONED_DELTA = [-1.0, -1.0, -1.0]


def detection_scenario():
    """Six benign clients near delta (+1,+1,+1) with distinct noise and three
    coordinated clients at exactly (-1,-1,-1)."""
    global_model = make_weights(GLOBAL_VEC)
    locals_ = [make_weights(GLOBAL_VEC + np.asarray(d)) for d in BENIGN_DELTAS]
    locals_ += [make_weights(GLOBAL_VEC + np.asarray(POISONED_DELTA)) for _ in range(3)]
    return global_model, locals_


class TestCeltiberoAggregate:
    def test_hand_computed_detection_scenario(self):
        global_model, locals_ = detection_scenario()
        out, verdicts = celtibero_aggregate(global_model, locals_)
        # per-coordinate medians of the six benign deltas are 1.005, 1.0, 1.005
        expected = np.array([1.505, 0.75, 2.005])
        assert np.max(np.abs(out.layers[0][1] - expected)) <= 1e-9
        (verdict,) = verdicts
        assert verdict.benign == (0, 1, 2, 3, 4, 5)
        assert verdict.poisoned == (6, 7, 8)
        assert verdict.score_2 == 0.0
        assert verdict.score_1 > 0.0

    def test_layerwise_independence(self):
        # layer 0 poisons clients 6..8, layer 1 poisons clients 0..2
        layer0 = BENIGN_DELTAS + [POISONED_DELTA] * 3
        layer1 = [POISONED_DELTA] * 3 + BENIGN_DELTAS
        global_model = make_weights(GLOBAL_VEC, GLOBAL_VEC)
        locals_ = [
            make_weights(GLOBAL_VEC + np.asarray(a), GLOBAL_VEC + np.asarray(b))
            for a, b in zip(layer0, layer1)
        ]
        out, verdicts = celtibero_aggregate(global_model, locals_)
        assert verdicts[0].poisoned == (6, 7, 8)
        assert verdicts[1].poisoned == (0, 1, 2)
        expected0 = np.array([1.505, 0.75, 2.005])
        medians1 = [
            sorted_median([layer1[i][c] for i in range(3, 9)]) for c in range(3)
        ]
        assert np.allclose(out.layers[0][1], expected0, atol=1e-9)
        assert np.allclose(out.layers[1][1], GLOBAL_VEC + np.asarray(medians1), atol=1e-9)

    def test_permutation_invariance(self):
        global_model, locals_ = detection_scenario()
        base, _ = celtibero_aggregate(global_model, locals_)
        rng = np.random.default_rng(2)
        for _ in range(5):
            order = rng.permutation(len(locals_))
            permuted, _ = celtibero_aggregate(global_model, [locals_[i] for i in order])
            assert permuted == base

    def test_joint_delta_scaling_keeps_verdict(self):
        global_model, locals_ = detection_scenario()
        _, verdicts = celtibero_aggregate(global_model, locals_)
        scaled = [
            make_weights(GLOBAL_VEC + 7.5 * (m.layers[0][1] - GLOBAL_VEC))
            for m in locals_
        ]
        out_scaled, verdicts_scaled = celtibero_aggregate(global_model, scaled)
        assert [v.poisoned for v in verdicts] == [v.poisoned for v in verdicts_scaled]
        expected = GLOBAL_VEC + 7.5 * (np.array([1.505, 0.75, 2.005]) - GLOBAL_VEC)
        assert np.allclose(out_scaled.layers[0][1], expected, atol=1e-9)

    def test_output_within_benign_envelope(self):
        rng = np.random.default_rng(13)
        global_model = make_weights(rng.normal(size=4), rng.normal(size=2))
        locals_ = [
            make_weights(
                global_model.layers[0][1] + rng.normal(size=4),
                global_model.layers[1][1] + rng.normal(size=2),
            )
            for _ in range(7)
        ]
        out, verdicts = celtibero_aggregate(global_model, locals_)
        for k, (_, vec) in enumerate(out.layers):
            kept = [locals_[i].layers[k][1] for i in verdicts[k].benign]
            assert np.all(vec >= np.min(kept, axis=0) - 1e-12)
            assert np.all(vec <= np.max(kept, axis=0) + 1e-12)

    def test_single_opposite_adversary_always_flagged(self):
        rng = np.random.default_rng(41)
        delta = np.array([0.5, -1.0, 0.25, 2.0])
        global_model = make_weights(rng.normal(size=4), rng.normal(size=3))
        locals_ = []
        for i in range(5):
            noise = rng.normal(scale=1e-3, size=4)
            locals_.append(
                make_weights(
                    global_model.layers[0][1] + delta + noise,
                    global_model.layers[1][1] + delta[:3] + noise[:3],
                )
            )
        adversary = make_weights(
            global_model.layers[0][1] - delta,
            global_model.layers[1][1] - delta[:3],
        )
        locals_.append(adversary)
        _, verdicts = celtibero_aggregate(global_model, locals_)
        for verdict in verdicts:
            assert 5 in verdict.poisoned

    def test_requires_two_locals(self):
        global_model, locals_ = detection_scenario()
        with pytest.raises(ValueError):
            celtibero_aggregate(global_model, locals_[:1])


class TestFedavg:
    def test_two_point_mean(self):
        out = fedavg([make_weights([0.0]), make_weights([2.0])])
        assert np.array_equal(out.layers[0][1], [1.0])

    def test_identical_inputs_identity(self):
        m = make_weights([1.0, -2.0], [0.5])
        assert fedavg([m, m, m]) == m

    def test_matches_fsum_oracle(self):
        rng = np.random.default_rng(19)
        locals_ = [make_weights(rng.normal(size=5), rng.normal(size=3)) for _ in range(9)]
        out = fedavg(locals_)
        for k in range(2):
            vecs = [m.layers[k][1] for m in locals_]
            for c in range(vecs[0].size):
                expected = math.fsum(v[c] for v in vecs) / len(vecs)
                assert abs(out.layers[k][1][c] - expected) <= 1e-12

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            fedavg([])


class TestCoordinateMedian:
    def test_odd_count(self):
        out = coordinate_median([make_weights([1.0]), make_weights([9.0]), make_weights([2.0])])
        assert out.layers[0][1][0] == 2.0

    def test_even_count_midpoint(self):
        out = coordinate_median([make_weights([1.0]), make_weights([3.0])])
        assert out.layers[0][1][0] == 2.0

    def test_matches_sort_oracle_exhaustively(self):
        grid = [-2.0, -1.0, 0.0, 1.0, 2.0]
        for n in range(1, 8):
            rng = np.random.default_rng(n)
            for _ in range(40):
                values = rng.choice(grid, size=n)
                out = coordinate_median([make_weights([v]) for v in values])
                assert out.layers[0][1][0] == sorted_median(values.tolist())

    def test_breakdown_envelope_by_construction(self):
        rng = np.random.default_rng(43)
        for n in range(3, 8):
            adversaries = math.ceil(n / 2) - 1
            benign = [make_weights(rng.normal(size=4)) for _ in range(n - adversaries)]
            hostile = [make_weights(np.full(4, 1e9 * (-1) ** i)) for i in range(adversaries)]
            out = coordinate_median(benign + hostile)
            stack = np.array([m.layers[0][1] for m in benign])
            assert np.all(out.layers[0][1] >= stack.min(axis=0))
            assert np.all(out.layers[0][1] <= stack.max(axis=0))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            coordinate_median([])


class TestKrum:
    def make_locals(self, rng, n, spread=1.0):
        return [make_weights(rng.normal(scale=spread, size=6)) for _ in range(n)]

    def test_outlier_never_selected(self):
        rng = np.random.default_rng(47)
        for _ in range(10):
            clustered = [make_weights(rng.normal(scale=0.01, size=4) + 1.0) for _ in range(5)]
            outlier = make_weights(np.full(4, 50.0))
            chosen = krum(clustered + [outlier], f=1)
            assert any(chosen is m for m in clustered)

    def test_identical_models_pick_first(self):
        models = [make_weights([1.0, 2.0]) for _ in range(5)]
        assert krum(models, f=1) is models[0]

    def test_selection_matches_bruteforce_scores(self):
        rng = np.random.default_rng(53)
        for _ in range(15):
            n = int(rng.integers(5, 9))
            f = int(rng.integers(0, (n - 3) // 2 + 1))
            locals_ = self.make_locals(rng, n)
            chosen = krum(locals_, f=f)
            scores = krum_scores([m.concat().tolist() for m in locals_], f)
            best = min(range(n), key=lambda i: (scores[i], i))
            assert chosen is locals_[best]

    def test_output_is_an_input(self):
        rng = np.random.default_rng(59)
        locals_ = self.make_locals(rng, 6)
        assert any(krum(locals_, f=1) is m for m in locals_)

    def test_too_few_models_rejected(self):
        rng = np.random.default_rng(61)
        with pytest.raises(ValueError):
            krum(self.make_locals(rng, 4), f=1)
        with pytest.raises(ValueError):
            krum(self.make_locals(rng, 6), f=2)


class TestMedianKrum:
    def test_identical_models_unchanged(self):
        m = make_weights([0.5, 1.5])
        assert median_krum([m] * 5, f=1) == m

    def test_outlier_excluded_from_median_set(self):
        rng = np.random.default_rng(67)
        clustered = [make_weights(rng.normal(scale=0.01, size=3) + 2.0) for _ in range(5)]
        outlier = make_weights(np.full(3, -100.0))
        out = median_krum(clustered + [outlier], f=1)
        stack = np.array([m.layers[0][1] for m in clustered])
        assert np.all(out.layers[0][1] >= stack.min(axis=0))
        assert np.all(out.layers[0][1] <= stack.max(axis=0))

    def test_matches_score_sorted_median_oracle(self):
        rng = np.random.default_rng(71)
        for _ in range(10):
            n = int(rng.integers(5, 9))
            f = int(rng.integers(0, (n - 3) // 2 + 1))
            locals_ = [make_weights(rng.normal(size=4)) for _ in range(n)]
            out = median_krum(locals_, f=f)
            scores = krum_scores([m.concat().tolist() for m in locals_], f)
            order = sorted(range(n), key=lambda i: (scores[i], i))[: n - f]
            for c in range(4):
                expected = sorted_median([locals_[i].layers[0][1][c] for i in order])
                assert out.layers[0][1][c] == pytest.approx(expected, abs=1e-12)


class TestAggregateDispatcher:
    def test_kind_validation(self):
        with pytest.raises(ValueError):
            AggregatorKind("trimmed_mean")
        with pytest.raises(ValueError):
            AggregatorKind("krum", krum_f=-1)
        with pytest.raises(ValueError):
            AggregatorKind("celtibero", linkage="ward")

    def test_verdicts_only_for_celtibero(self):
        global_model, locals_ = detection_scenario()
        out, verdicts = aggregate(AggregatorKind("celtibero"), global_model, locals_)
        assert verdicts is not None and len(verdicts) == 1
        for name in ("fedavg", "coord_median"):
            _, verdicts = aggregate(AggregatorKind(name), global_model, locals_)
            assert verdicts is None

    def test_dispatch_matches_direct_calls(self):
        global_model, locals_ = detection_scenario()
        assert aggregate(AggregatorKind("fedavg"), global_model, locals_)[0] == fedavg(locals_)
        assert aggregate(AggregatorKind("coord_median"), global_model, locals_)[0] == (
            coordinate_median(locals_)
        )
        assert aggregate(AggregatorKind("krum", krum_f=2), global_model, locals_)[0] == (
            krum(locals_, f=2)
        )
        assert aggregate(AggregatorKind("median_krum", krum_f=2), global_model, locals_)[0] == (
            median_krum(locals_, f=2)
        )
