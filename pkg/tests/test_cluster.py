import numpy as np
import pytest

from sketchavg.cluster import (ClusterConfig, WorkerConfig, WorkerError,
                               make_cluster, row_ranges, run_cluster_round,
                               worker_stream)
from sketchavg.linalg import RngStream
from sketchavg.sketches import SketchSpec, apply_sketch


def test_worker_streams_distinct_across_trials():
    seen = set()
    for trial in range(3):
        for k in range(5):
            st = worker_stream(7, trial, k)
            assert st not in seen
            seen.add(st)
    assert worker_stream(7, 1, 0) == worker_stream(7, 1, 0)
    with pytest.raises(ValueError):
        worker_stream(7, -1, 0)


def test_make_cluster_homogeneous():
    c = make_cluster(4, 16, kind="gaussian", seed=3)
    assert c.q == 4
    assert c.m_list == [16, 16, 16, 16]
    assert len({w.stream for w in c.workers}) == 4


def test_make_cluster_heterogeneous():
    c = make_cluster(3, [8, 16, 32], kind="sjlt", seed=3, s=4)
    assert c.m_list == [8, 16, 32]
    for w in c.workers:
        assert w.sketch.m == w.m
        assert w.sketch.s == 4
    with pytest.raises(ValueError, match="length"):
        make_cluster(3, [8, 16])


def test_worker_config_consistency():
    with pytest.raises(ValueError, match="disagrees"):
        WorkerConfig(8, SketchSpec("gaussian", 16), RngStream(0, 1))
    with pytest.raises(ValueError, match="distinct"):
        ClusterConfig((
            WorkerConfig(8, SketchSpec("gaussian", 8), RngStream(0, 1)),
            WorkerConfig(8, SketchSpec("gaussian", 8), RngStream(0, 1)),
        ))


def test_round_outputs_ordered_and_thread_invariant():
    data = RngStream(81).generator().standard_normal((64, 3))
    cluster = make_cluster(6, 12, kind="gaussian", seed=81)

    def task(k, w):
        return apply_sketch(w.sketch, data, w.stream.generator())

    serial, _ = run_cluster_round(cluster, task, threads=1)
    threaded, _ = run_cluster_round(cluster, task, threads=4)
    assert len(serial) == 6
    for a, b in zip(serial, threaded):
        assert np.array_equal(a, b)
    # Sketches differ across workers (distinct streams).
    assert not np.array_equal(serial[0], serial[1])


def test_round_task_index_matches_worker():
    cluster = make_cluster(5, 4, seed=82)

    def task(k, w):
        return (k, w.m)

    outputs, wall = run_cluster_round(cluster, task, threads=3)
    assert outputs == [(k, 4) for k in range(5)]
    assert wall >= 0.0


def test_worker_error_carries_index():
    cluster = make_cluster(4, 4, seed=83)

    def task(k, w):
        if k == 2:
            raise ValueError("synthetic fault")
        return k

    for threads in (1, 3):
        with pytest.raises(WorkerError) as err:
            run_cluster_round(cluster, task, threads=threads)
        assert err.value.worker_index == 2
        assert isinstance(err.value.original, ValueError)


def test_round_thread_validation():
    cluster = make_cluster(2, 4, seed=84)
    with pytest.raises(ValueError, match="threads"):
        run_cluster_round(cluster, lambda k, w: k, threads=0)


def test_row_ranges_cover_evenly():
    for n, q in [(10, 3), (100, 7), (5, 5), (12, 1)]:
        ranges = row_ranges(n, q)
        assert ranges[0][0] == 0
        assert ranges[-1][1] == n
        sizes = [hi - lo for lo, hi in ranges]
        assert all(hi == nlo for (_, hi), (nlo, _) in zip(ranges, ranges[1:]))
        assert max(sizes) - min(sizes) <= 1
    with pytest.raises(ValueError):
        row_ranges(3, 4)
