# mc_engine.py
"""Reproducible Monte Carlo substrate.

Random numbers come from counter-based Philox generators addressed by a
``(seed, stream_id)`` pair, so the draws of a sample never depend on which
worker thread produced them. Work is split into fixed-size chunks, run on a
thread pool through asyncio, and the per-chunk statistics are merged in a
fixed binary tree.
"""
import asyncio
import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from exceptions import DomainError, EvaluatorError
from models import Estimate

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 256
_UINT64 = 2 ** 64


def stable_stream_id(label: str) -> int:
    """64-bit stream id derived from a label, stable across processes."""
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


class RngStream(BaseModel):
    """Address of an independent random stream: a seed plus a hierarchical id."""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=_UINT64)
    stream_id: Tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        return np.random.Generator(np.random.Philox(sequence))

    def child(self, index: int) -> "RngStream":
        return RngStream(seed=self.seed, stream_id=self.stream_id + (int(index) % _UINT64,))

    def named(self, label: str) -> "RngStream":
        return self.child(stable_stream_id(label))


@dataclass(frozen=True)
class PathBundle:
    """k independent d-dimensional Brownian paths on a uniform grid of [0, t]."""
    k: int
    d: int
    t: float
    n_steps: int
    values: np.ndarray  # shape (k, n_steps + 1, d)
    stream_id: Tuple[int, ...] = ()

    @property
    def dt(self) -> float:
        return self.t / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t, self.n_steps + 1)

    def pair(self, i: int, j: int) -> "PathBundle":
        return PathBundle(k=2, d=self.d, t=self.t, n_steps=self.n_steps,
                          values=self.values[[i, j]], stream_id=self.stream_id)

    def truncated(self, n_steps: int) -> "PathBundle":
        """The same paths restricted to the first ``n_steps`` grid cells."""
        return PathBundle(k=self.k, d=self.d, t=self.dt * n_steps, n_steps=n_steps,
                          values=self.values[:, : n_steps + 1], stream_id=self.stream_id)


def sample_bundle(stream: RngStream, k: int, d: int, t: float, n_steps: int) -> PathBundle:
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps}")
    if k < 1 or d < 1 or not t > 0:
        raise DomainError(f"invalid bundle shape k={k}, d={d}, t={t}")
    rng = stream.generator()
    increments = rng.standard_normal((k, n_steps, d)) * math.sqrt(t / n_steps)
    values = np.zeros((k, n_steps + 1, d))
    np.cumsum(increments, axis=1, out=values[:, 1:, :])
    return PathBundle(k=k, d=d, t=t, n_steps=n_steps, values=values, stream_id=stream.stream_id)


# --- Streaming statistics ---

@dataclass
class StreamingStats:
    """Count, mean, sum of squared deviations, min and max of a sample.

    Scalar samples give 0-d arrays; vector samples of width m give arrays of
    shape (m,), one statistic per component.
    """
    count: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(()))
    m2: np.ndarray = field(default_factory=lambda: np.zeros(()))
    min: np.ndarray = field(default_factory=lambda: np.full((), np.inf))
    max: np.ndarray = field(default_factory=lambda: np.full((), -np.inf))

    @classmethod
    def empty(cls) -> "StreamingStats":
        return cls()

    @classmethod
    def from_samples(cls, values: Any) -> "StreamingStats":
        values = np.asarray(values, dtype=float)
        if values.ndim == 0:
            values = values.reshape(1)
        if values.shape[0] == 0:
            return cls.empty()
        mean = values.mean(axis=0)
        return cls(count=values.shape[0], mean=mean, m2=((values - mean) ** 2).sum(axis=0),
                   min=values.min(axis=0), max=values.max(axis=0))

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.full(np.shape(self.mean), np.nan)
        return self.m2 / (self.count - 1)

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.full(np.shape(self.mean), np.nan)
        return np.sqrt(self.m2 / (self.count * (self.count - 1)))

    def to_estimate(self, index: Optional[int] = None) -> Estimate:
        if self.count == 0:
            raise DomainError("cannot build an estimate from empty statistics")
        mean, se = self.mean, self.stderr
        if index is not None:
            mean, se = mean[index], se[index]
        se = float(se)
        return Estimate.from_moments(float(mean), 0.0 if math.isnan(se) else se, self.count)

    def to_dict(self) -> dict:
        return {"count": self.count, "mean": np.asarray(self.mean).tolist(), "m2": np.asarray(self.m2).tolist(),
                "min": np.asarray(self.min).tolist(), "max": np.asarray(self.max).tolist()}


def stats_merge(a: StreamingStats, b: StreamingStats) -> StreamingStats:
    """Pooled statistics of two disjoint samples (Chan et al. pairwise update)."""
    if b.count == 0:
        return a
    if a.count == 0:
        return b
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return StreamingStats(count=n, mean=mean, m2=m2, min=np.minimum(a.min, b.min), max=np.maximum(a.max, b.max))


def tree_merge(parts: Sequence[StreamingStats]) -> StreamingStats:
    """Merge in a fixed binary tree over the input order."""
    level = list(parts)
    if not level:
        return StreamingStats.empty()
    while len(level) > 1:
        merged = [stats_merge(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            merged.append(level[-1])
        level = merged
    return level[0]


# --- Parallel execution ---

@dataclass(frozen=True)
class Chunk:
    """A contiguous range of sample indices handed to an evaluator."""
    stream: RngStream
    index: int
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start

    def generator(self) -> np.random.Generator:
        """One generator for the whole chunk; depends on chunk size, not on workers."""
        return self.stream.child(self.start).generator()

    def sample_streams(self) -> List[RngStream]:
        """One substream per sample index; independent of chunking."""
        return [self.stream.child(i) for i in range(self.start, self.stop)]


Evaluator = Callable[[Chunk], Any]


def _chunks(n_samples: int, stream: RngStream, chunk_size: int) -> List[Chunk]:
    return [Chunk(stream=stream, index=c, start=start, stop=min(start + chunk_size, n_samples))
            for c, start in enumerate(range(0, n_samples, chunk_size))]


async def _gather_chunks(chunks: List[Chunk], evaluator: Evaluator, workers: int) -> List[Any]:
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        tasks = [loop.run_in_executor(pool, evaluator, chunk) for chunk in chunks]
        results = await asyncio.gather(*tasks, return_exceptions=True)
    for chunk, result in zip(chunks, results):
        if isinstance(result, BaseException):
            logger.error(f"Evaluator failed on samples [{chunk.start}, {chunk.stop}): {result}", exc_info=result)
            raise EvaluatorError(f"{type(result).__name__}: {result}", chunk.start, chunk.stop, cause=result) from result
    return list(results)


def parallel_map(n_samples: int, evaluator: Evaluator, stream: RngStream, workers: int = 1,
                 chunk_size: int = DEFAULT_CHUNK_SIZE) -> List[Any]:
    """Evaluate every chunk and return the outputs in chunk order."""
    if n_samples < 0:
        raise DomainError(f"n_samples must be non-negative, got {n_samples}")
    if n_samples == 0:
        return []
    chunks = _chunks(n_samples, stream, chunk_size)
    logger.debug(f"Running {len(chunks)} chunks of <= {chunk_size} samples on {workers} worker(s)")
    return asyncio.run(_gather_chunks(chunks, evaluator, max(1, int(workers))))


def parallel_reduce(n_samples: int, evaluator: Evaluator, stream: RngStream, workers: int = 1,
                    chunk_size: int = DEFAULT_CHUNK_SIZE) -> StreamingStats:
    """Statistics of per-sample values produced by ``evaluator``.

    The evaluator returns an array of shape (chunk.size,) or (chunk.size, m).
    The result is bit-identical for any worker count.
    """
    outputs = parallel_map(n_samples, evaluator, stream, workers=workers, chunk_size=chunk_size)
    parts = []
    for chunk, values in zip(_chunks(n_samples, stream, chunk_size), outputs):
        values = np.asarray(values, dtype=float)
        if values.shape[:1] != (chunk.size,):
            raise EvaluatorError(f"evaluator returned shape {values.shape}, expected leading dimension {chunk.size}",
                                 chunk.start, chunk.stop)
        parts.append(StreamingStats.from_samples(values))
    return tree_merge(parts)


def concat_samples(n_samples: int, evaluator: Evaluator, stream: RngStream, workers: int = 1,
                   chunk_size: int = DEFAULT_CHUNK_SIZE) -> np.ndarray:
    """All per-sample values in sample order, for estimators that post-process samples."""
    outputs = parallel_map(n_samples, evaluator, stream, workers=workers, chunk_size=chunk_size)
    if not outputs:
        return np.zeros((0,))
    return np.concatenate([np.asarray(o, dtype=float) for o in outputs], axis=0)
