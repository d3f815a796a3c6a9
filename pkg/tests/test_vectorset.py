import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vlineage.vectorset import (
    DimensionMismatch,
    LineageVectorSet,
    SimilarityParams,
    kmeans_cap,
    set_similarity,
    top_k_similar,
    tv_add,
    tv_mul,
)


def brute_force_min_sse(points: np.ndarray, k: int) -> float:
    """Oracle: minimum within-cluster SSE over every assignment into k nonempty groups."""
    n = len(points)
    best = np.inf
    for labels in itertools.product(range(k), repeat=n):
        if len(set(labels)) != k:
            continue
        sse = 0.0
        for j in range(k):
            members = points[[i for i in range(n) if labels[i] == j]]
            sse += float(((members - members.mean(axis=0)) ** 2).sum())
        best = min(best, sse)
    return best


def assert_lloyd_fixed_point(points: np.ndarray, centers: np.ndarray, tol: float = 1e-6) -> None:
    """Oracle: every center is the mean of the points nearest to it."""
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    for j in range(len(centers)):
        members = points[labels == j]
        assert len(members) > 0, f"center {j} attracts no points"
        assert np.allclose(centers[j], members.mean(axis=0), atol=tol)


def random_set(rng: np.random.Generator, n: int, dim: int, max_vectors: int = 4) -> LineageVectorSet:
    return LineageVectorSet(rng.standard_normal((n, dim)), max_vectors)


class TestKmeansCap:
    def test_under_cap_returns_input_unchanged(self):
        points = np.arange(6.0).reshape(3, 2)
        out = kmeans_cap(points, 4, seed=0)
        assert np.array_equal(out, points)

    def test_degenerate_duplicates(self):
        v = np.array([1.0, -2.0, 0.5])
        points = np.tile(v, (8, 1))
        out = kmeans_cap(points, 4, seed=0)
        assert out.shape == (4, 3)
        assert np.allclose(out, np.tile(v, (4, 1)))

    def test_two_clear_clusters_match_brute_force(self):
        points = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        out = kmeans_cap(points, 2, seed=0)
        expected = {(0.0, 0.5), (10.0, 0.5)}
        got = {tuple(np.round(c, 9)) for c in out}
        assert got == expected
        # and the solution really is the SSE optimum
        d2 = ((points[:, None, :] - out[None, :, :]) ** 2).sum(axis=2)
        sse = float(d2.min(axis=1).sum())
        assert abs(sse - brute_force_min_sse(points, 2)) < 1e-9

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(5)
        points = rng.standard_normal((9, 4))
        assert np.array_equal(kmeans_cap(points, 3, seed=11), kmeans_cap(points, 3, seed=11))

    def test_returns_exactly_k_fixed_point_centers(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            points = rng.standard_normal((rng.integers(5, 12), 3))
            k = int(rng.integers(2, 5))
            if len(points) <= k:
                continue
            out = kmeans_cap(points, k, seed=trial)
            assert out.shape == (k, 3)
            assert_lloyd_fixed_point(points, out)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            kmeans_cap(np.empty((0, 3)), 2, seed=0)


class TestVectorSet:
    def test_cardinality_bounds_enforced(self):
        with pytest.raises(ValueError):
            LineageVectorSet(np.zeros((5, 2)), 4)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            LineageVectorSet(np.array([[np.nan, 0.0]]), 4)

    def test_vectors_are_read_only(self):
        vs = LineageVectorSet(np.zeros((1, 2)), 4)
        with pytest.raises(ValueError):
            vs.vectors[0, 0] = 1.0


class TestAdd:
    def test_below_cap_is_plain_union(self):
        rng = np.random.default_rng(0)
        a, b = random_set(rng, 2, 3), random_set(rng, 1, 3)
        out = tv_add(a, b)
        assert len(out) == 3
        assert np.array_equal(out.vectors, np.concatenate([a.vectors, b.vectors]))

    def test_duplicates_are_kept_as_a_multiset(self):
        v = np.array([[1.0, 2.0]])
        a = LineageVectorSet(v, 4)
        out = tv_add(a, a)
        assert len(out) == 2
        assert np.array_equal(out.vectors, np.concatenate([v, v]))

    def test_above_cap_result_is_kmeans_of_union(self):
        rng = np.random.default_rng(1)
        a, b = random_set(rng, 3, 3), random_set(rng, 3, 3)
        out = tv_add(a, b, seed=9)
        assert len(out) == 4
        union = np.concatenate([a.vectors, b.vectors])
        assert_lloyd_fixed_point(union, out.vectors)

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DimensionMismatch):
            tv_add(random_set(rng, 1, 3), random_set(rng, 1, 4))

    def test_max_vectors_mismatch(self):
        rng = np.random.default_rng(0)
        with pytest.raises(DimensionMismatch):
            tv_add(random_set(rng, 1, 3, 4), random_set(rng, 1, 3, 5))


class TestMul:
    def test_singletons_average(self):
        u = LineageVectorSet(np.array([[2.0, 0.0]]), 4)
        v = LineageVectorSet(np.array([[0.0, 4.0]]), 4)
        out = tv_mul(u, v)
        assert np.array_equal(out.vectors, np.array([[1.0, 2.0]]))

    def test_identical_singletons_stay_put(self):
        u = LineageVectorSet(np.array([[1.5, -3.0]]), 4)
        out = tv_mul(u, u)
        assert np.array_equal(out.vectors, u.vectors)

    def test_above_cap_result_is_kmeans_of_pairwise_averages(self):
        rng = np.random.default_rng(4)
        a, b = random_set(rng, 3, 3), random_set(rng, 2, 3)
        out = tv_mul(a, b, seed=5)
        assert len(out) == 4
        averages = np.array([(x + y) / 2 for x in a.vectors for y in b.vectors])
        assert averages.shape == (6, 3)
        assert_lloyd_fixed_point(averages, out.vectors)

    def test_pairwise_average_order(self):
        a = LineageVectorSet(np.array([[1.0, 0.0], [0.0, 1.0]]), 8)
        b = LineageVectorSet(np.array([[1.0, 1.0], [3.0, 3.0]]), 8)
        out = tv_mul(a, b)
        expected = np.array([[1.0, 0.5], [2.0, 1.5], [0.5, 1.0], [1.5, 2.0]])
        assert np.array_equal(out.vectors, expected)


class TestSetSimilarity:
    def test_self_similarity_is_one(self):
        v = LineageVectorSet(np.array([[0.3, -0.4]]), 4)
        assert set_similarity(v, v, SimilarityParams(2.0, 3.0)) == pytest.approx(1.0)

    def test_singletons_reduce_to_cosine(self):
        a = LineageVectorSet(np.array([[1.0, 0.0]]), 4)
        b = LineageVectorSet(np.array([[1.0, 1.0]]), 4)
        c = 1.0 / np.sqrt(2.0)
        assert set_similarity(a, b, SimilarityParams(1.0, 1.0)) == pytest.approx(c)

    def test_worked_example(self):
        a = LineageVectorSet(np.array([[1.0, 0.0], [0.0, 1.0]]), 4)
        b = LineageVectorSet(np.array([[1.0, 0.0]]), 4)
        # pairwise cosines are {1, 0}: max 1, avg 0.5
        assert set_similarity(a, b, SimilarityParams(1.0, 1.0)) == pytest.approx(0.75)

    def test_zero_vector_contributes_zero(self):
        a = LineageVectorSet(np.array([[0.0, 0.0]]), 4)
        b = LineageVectorSet(np.array([[1.0, 0.0]]), 4)
        assert set_similarity(a, b, SimilarityParams(1.0, 1.0)) == 0.0

    def test_dimension_mismatch(self):
        a = LineageVectorSet(np.zeros((1, 2)) + 1.0, 4)
        b = LineageVectorSet(np.zeros((1, 3)) + 1.0, 4)
        with pytest.raises(DimensionMismatch):
            set_similarity(a, b, SimilarityParams())

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_range(self, seed):
        rng = np.random.default_rng(seed)
        a = random_set(rng, int(rng.integers(1, 5)), 4)
        b = random_set(rng, int(rng.integers(1, 5)), 4)
        params = SimilarityParams(float(rng.uniform(0, 3)), float(rng.uniform(0.1, 3)))
        ab = set_similarity(a, b, params)
        ba = set_similarity(b, a, params)
        assert abs(ab - ba) < 1e-12
        assert -1.0 - 1e-12 <= ab <= 1.0 + 1e-12

    @given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
    @settings(max_examples=60, deadline=None)
    def test_positive_scaling_invariance(self, seed, scale):
        rng = np.random.default_rng(seed)
        a = random_set(rng, 3, 4)
        b = random_set(rng, 2, 4)
        params = SimilarityParams(1.0, 1.0)
        scaled = a.vectors.copy()
        scaled[1] *= scale
        a_scaled = LineageVectorSet(scaled, a.max_vectors)
        assert set_similarity(a, b, params) == pytest.approx(
            set_similarity(a_scaled, b, params), abs=1e-12
        )

    def test_params_validation(self):
        with pytest.raises(ValueError):
            SimilarityParams(0.0, 0.0)
        with pytest.raises(ValueError):
            SimilarityParams(-1.0, 2.0)


class TestTopK:
    def test_identical_candidate_ranks_first(self):
        rng = np.random.default_rng(8)
        target = random_set(rng, 1, 5)
        candidates = [(1, random_set(rng, 2, 5)), (2, target), (3, random_set(rng, 1, 5))]
        out = top_k_similar(target, candidates, 3, SimilarityParams())
        assert out[0][0] == 2
        assert out[0][1] == pytest.approx(1.0)

    def test_k_larger_than_pool_returns_all(self):
        rng = np.random.default_rng(9)
        target = random_set(rng, 1, 3)
        candidates = [(i, random_set(rng, 1, 3)) for i in range(4)]
        assert len(top_k_similar(target, candidates, 50, SimilarityParams())) == 4

    def test_matches_brute_force_ordering(self):
        rng = np.random.default_rng(10)
        params = SimilarityParams(1.5, 0.5)
        target = random_set(rng, 3, 6)
        candidates = [(i, random_set(rng, int(rng.integers(1, 5)), 6)) for i in range(50)]
        got = top_k_similar(target, candidates, 10, params)
        oracle = sorted(
            ((i, set_similarity(target, vs, params)) for i, vs in candidates),
            key=lambda item: (-item[1], item[0]),
        )[:10]
        assert [i for i, _ in got] == [i for i, _ in oracle]

    def test_tie_break_by_ascending_id(self):
        v = LineageVectorSet(np.array([[1.0, 0.0]]), 4)
        out = top_k_similar(v, [(7, v), (3, v)], 2, SimilarityParams())
        assert [i for i, _ in out] == [3, 7]

    def test_k_must_be_positive(self):
        v = LineageVectorSet(np.array([[1.0, 0.0]]), 4)
        with pytest.raises(ValueError):
            top_k_similar(v, [], 0, SimilarityParams())
