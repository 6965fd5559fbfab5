"""In-process master/worker simulation.

A cluster is a list of worker configs (sketch size, sketch spec, private rng
stream). Rounds execute one task per worker, serially or in a thread pool,
with a determinism contract: outputs are collected in worker-index order and
must be identical either way. Worker failures abort the round (the averaging
estimators assume exactly q i.i.d. terms, so no partial averaging).

Stream layout: worker k of trial t uses stream id 1 + t * 2^32 + k, keeping
worker draws disjoint across trials and distinct from the problem-generation
stream 0.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .linalg import RngStream
from .sketches import SketchSpec


class WorkerError(RuntimeError):
    """A worker task failed; carries the worker index and original error."""

    def __init__(self, worker_index: int, original: BaseException):
        super().__init__(f"worker {worker_index} failed: {original!r}")
        self.worker_index = worker_index
        self.original = original


@dataclass(frozen=True)
class WorkerConfig:
    m: int
    sketch: SketchSpec
    stream: RngStream

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"sketch size must be >= 1, got {self.m}")
        if self.sketch.m != self.m:
            raise ValueError(
                f"worker m={self.m} disagrees with sketch spec m={self.sketch.m}")


@dataclass(frozen=True)
class ClusterConfig:
    workers: tuple[WorkerConfig, ...]
    master_seed: int = 0
    partitioned: bool = False

    def __post_init__(self):
        if len(self.workers) < 1:
            raise ValueError("cluster needs at least one worker")
        streams = [w.stream for w in self.workers]
        if len(set(streams)) != len(streams):
            raise ValueError("worker rng streams must be distinct")

    @property
    def q(self) -> int:
        return len(self.workers)

    @property
    def m_list(self) -> list:
        return [w.m for w in self.workers]


def worker_stream(seed: int, trial: int, worker_index: int) -> RngStream:
    if trial < 0 or worker_index < 0:
        raise ValueError("trial and worker index must be >= 0")
    return RngStream(seed, 1 + trial * 2 ** 32 + worker_index)


def make_cluster(q: int, m, kind: str = "gaussian", seed: int = 0,
                 trial: int = 0, s: int = 8, m2=None, inner: str = "sjlt",
                 partitioned: bool = False) -> ClusterConfig:
    """Homogeneous or heterogeneous cluster; ``m`` is an int or one per worker."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    m_list = [int(m)] * q if isinstance(m, (int, float)) else [int(v) for v in m]
    if len(m_list) != q:
        raise ValueError(f"m list length {len(m_list)} != q={q}")
    workers = tuple(
        WorkerConfig(Mk, SketchSpec(kind, Mk, s=s, m2=m2, inner=inner),
                     worker_stream(seed, trial, k))
        for k, Mk in enumerate(m_list))
    return ClusterConfig(workers, master_seed=seed, partitioned=partitioned)


def run_cluster_round(cluster: ClusterConfig, task, threads: int = 1):
    """Run ``task(worker_index, worker_config)`` once per worker.

    Returns (outputs, round_wall_s) with outputs in worker-index order and
    the round wall time the max over per-worker compute times, modeling a
    synchronization barrier. Identical outputs whether threads is 1 or more.
    """
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")

    def timed(k):
        start = time.perf_counter()
        out = task(k, cluster.workers[k])
        return out, time.perf_counter() - start

    indices = range(cluster.q)
    if threads == 1 or cluster.q == 1:
        raw = []
        for k in indices:
            try:
                raw.append(timed(k))
            except Exception as exc:
                raise WorkerError(k, exc) from exc
    else:
        with ThreadPoolExecutor(max_workers=min(threads, cluster.q)) as pool:
            futures = [pool.submit(timed, k) for k in indices]
            raw = []
            for k, fut in enumerate(futures):
                try:
                    raw.append(fut.result())
                except Exception as exc:
                    raise WorkerError(k, exc) from exc
    outputs = [r[0] for r in raw]
    round_wall = max(r[1] for r in raw)
    return outputs, round_wall


def row_ranges(n: int, q: int) -> list:
    """Contiguous near-even [lo, hi) row blocks, one per worker."""
    if not (1 <= q <= n):
        raise ValueError(f"need 1 <= q <= n, got q={q}, n={n}")
    bounds = [round(i * n / q) for i in range(q + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(q)]
