# tests/test_mc_engine.py
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exceptions import DomainError, EvaluatorError
from mc_engine import (Chunk, RngStream, StreamingStats, concat_samples, parallel_reduce, sample_bundle,
                       stable_stream_id, stats_merge, tree_merge)


def test_same_stream_gives_same_paths(stream):
    a = sample_bundle(stream.child(3), 2, 2, 1.0, 32)
    b = sample_bundle(RngStream(seed=stream.seed, stream_id=(3,)), 2, 2, 1.0, 32)
    np.testing.assert_array_equal(a.values, b.values)
    c = sample_bundle(stream.child(4), 2, 2, 1.0, 32)
    assert not np.array_equal(a.values, c.values)


def test_brownian_increments_have_the_right_law(stream):
    bundle = sample_bundle(stream, 100_000, 2, 1.0, 2)
    endpoints = bundle.values[:, -1, :]
    assert np.all(bundle.values[:, 0, :] == 0.0)
    np.testing.assert_allclose(endpoints.var(axis=0), [1.0, 1.0], atol=0.02)
    half = bundle.values[:, 1, 0]
    assert np.corrcoef(half, endpoints[:, 0])[0, 1] == pytest.approx(np.sqrt(0.5), abs=0.01)
    assert abs(np.corrcoef(endpoints[:, 0], endpoints[:, 1])[0, 1]) < 0.01


def test_bundle_rejects_bad_shapes(stream):
    with pytest.raises(DomainError):
        sample_bundle(stream, 2, 1, 1.0, 0)
    with pytest.raises(DomainError):
        sample_bundle(stream, 0, 1, 1.0, 4)
    with pytest.raises(DomainError):
        sample_bundle(stream, 2, 1, 0.0, 4)


def test_engine_misuse_raises_domain_errors(stream):
    with pytest.raises(DomainError):
        parallel_reduce(-1, lambda chunk: np.zeros(chunk.size), stream)
    with pytest.raises(DomainError):
        StreamingStats.empty().to_estimate()


def test_truncated_bundle_keeps_the_leading_grid(stream):
    bundle = sample_bundle(stream, 2, 1, 1.0, 16)
    head = bundle.truncated(4)
    assert head.t == pytest.approx(0.25)
    np.testing.assert_array_equal(head.values, bundle.values[:, :5])


@settings(max_examples=40, deadline=None)
@given(a=st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=0, max_size=30),
       b=st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=0, max_size=30))
def test_stats_merge_matches_pooled_sample(a, b):
    merged = stats_merge(StreamingStats.from_samples(a), StreamingStats.from_samples(b))
    pooled = a + b
    assert merged.count == len(pooled)
    if pooled:
        assert float(merged.mean) == pytest.approx(np.mean(pooled), rel=1e-9, abs=1e-9)
        assert float(merged.m2) == pytest.approx(np.sum((np.asarray(pooled) - np.mean(pooled)) ** 2),
                                                 rel=1e-7, abs=1e-6)
        assert float(merged.min) == min(pooled) and float(merged.max) == max(pooled)


def test_tree_merge_of_nothing_is_empty():
    assert tree_merge([]).count == 0
    assert parallel_reduce(0, lambda chunk: np.zeros(chunk.size), RngStream(seed=1)).count == 0


def _normal_evaluator(chunk: Chunk) -> np.ndarray:
    return np.array([s.generator().standard_normal() for s in chunk.sample_streams()])


def test_reduction_is_identical_for_any_worker_count(stream):
    serial = parallel_reduce(1_000, _normal_evaluator, stream, workers=1, chunk_size=64)
    threaded = parallel_reduce(1_000, _normal_evaluator, stream, workers=8, chunk_size=64)
    assert serial.to_dict() == threaded.to_dict()


def test_samples_do_not_depend_on_chunking(stream):
    a = concat_samples(300, _normal_evaluator, stream, chunk_size=7)
    b = concat_samples(300, _normal_evaluator, stream, workers=4, chunk_size=128)
    np.testing.assert_array_equal(a, b)


def test_constant_samples_have_zero_stderr(stream):
    stats = parallel_reduce(500, lambda chunk: np.ones(chunk.size), stream, chunk_size=64)
    estimate = stats.to_estimate()
    assert estimate.mean == 1.0
    assert estimate.stderr == 0.0
    assert estimate.count == 500


def test_vector_samples_give_componentwise_statistics(stream):
    stats = parallel_reduce(200, lambda chunk: np.tile([1.0, 2.0], (chunk.size, 1)), stream, chunk_size=64)
    assert stats.to_estimate(1).mean == 2.0


def test_evaluator_failure_reports_the_chunk(stream):
    def evaluator(chunk: Chunk) -> np.ndarray:
        if chunk.start >= 64:
            raise FloatingPointError("overflow")
        return np.zeros(chunk.size)

    with pytest.raises(EvaluatorError) as info:
        parallel_reduce(200, evaluator, stream, workers=2, chunk_size=64)
    assert (info.value.start, info.value.stop) == (64, 128)
    assert isinstance(info.value.cause, FloatingPointError)


def test_wrong_evaluator_shape_is_an_error(stream):
    with pytest.raises(EvaluatorError):
        parallel_reduce(10, lambda chunk: np.zeros(chunk.size + 1), stream, chunk_size=4)


def test_named_streams_are_stable():
    assert stable_stream_id("series") == stable_stream_id("series")
    assert stable_stream_id("series") != stable_stream_id("fk")
    assert RngStream(seed=5).named("fk") == RngStream(seed=5).named("fk")
