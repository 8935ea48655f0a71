import threading
import time

import pytest

from perpex.pool import WorkerPool, WorkPile


def square(x):
    return x * x


def slow_identity(x, delay):
    time.sleep(delay)
    return x


class TestWorkerPool:
    def test_starmap_keeps_order(self):
        with WorkerPool(4) as pool:
            # later items finish first
            results = pool.starmap(slow_identity, [(i, 0.05 * (5 - i)) for i in range(5)])
        assert results == list(range(5))

    def test_spawn(self):
        with WorkerPool(2) as pool:
            future = pool.spawn(square, 7)
            assert future.result() == 49
            pool.waitall()
            assert pool.running() == 0
            assert pool.free() == 2

    def test_bounded(self):
        active = []
        peak = []
        lock = threading.Lock()

        def work():
            with lock:
                active.append(1)
                peak.append(len(active))
            time.sleep(0.02)
            with lock:
                active.pop()

        with WorkerPool(3) as pool:
            for _ in range(12):
                pool.spawn(work)
            pool.waitall()
        assert max(peak) <= 3

    def test_default_size(self):
        with WorkerPool() as pool:
            assert pool.size >= 1


class TestWorkPile:
    def test_iterates_in_spawn_order(self):
        with WorkerPool(3) as pool:
            pile = WorkPile(pool)
            for i in range(6):
                pile.spawn(square, i)
            assert len(pile) == 6
            assert list(pile) == [0, 1, 4, 9, 16, 25]

    def test_reraises(self):
        with WorkerPool(2) as pool:
            pile = WorkPile(pool)
            pile.spawn(square, None)
            with pytest.raises(TypeError):
                list(pile)
