import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor

__all__ = ['WorkerPool', 'WorkPile', 'default_size']

log = logging.getLogger('perpex')


def default_size():
    """Number of workers used when none is requested"""
    return max(1, min(8, os.cpu_count() or 1))


class WorkerPool:
    """Pool of worker threads

    This class manages a bounded pool of OS threads. The heavy lifting of every work item is done
    inside numpy/scipy kernels, which release the GIL, so threads give real parallelism without
    the pickling cost of processes.
    """

    def __init__(self, size=None):
        """
        :param int size: maximum number of work items executing at once
        """
        self.size = size or default_size()
        self.running_items = set()
        self.sem = threading.BoundedSemaphore(self.size)
        self.no_items_running = threading.Event()
        self.no_items_running.set()
        self._lock = threading.Lock()
        self._executor = ThreadPoolExecutor(max_workers=self.size, thread_name_prefix='perpex')

    def __enter__(self):
        return self

    def __exit__(self, typ, value, tb):
        self.close()

    def close(self):
        self._executor.shutdown(wait=True)

    def running(self):
        """Return the number of work items currently executing in the pool
        """
        return len(self.running_items)

    def free(self):
        """Return the number of workers available for use

        If zero, the next call to :meth:`spawn` blocks the caller until a slot becomes available.
        """
        return self.size - self.running()

    def spawn(self, function, *args, **kwargs):
        """Run the *function* with its arguments on a worker thread

        Returns the :class:`concurrent.futures.Future` of the call, which can be used to retrieve
        the result. If the pool is currently at capacity, ``spawn`` blocks until one of the running
        work items completes and frees up a slot.
        """
        self.sem.acquire()
        try:
            future = self._executor.submit(function, *args, **kwargs)
        except BaseException:
            self.sem.release()
            raise
        with self._lock:
            self.running_items.add(future)
            self.no_items_running.clear()
        future.add_done_callback(self._spawn_done)
        return future

    def _spawn_done(self, future):
        with self._lock:
            self.running_items.discard(future)
            if not self.running_items:
                self.no_items_running.set()
        self.sem.release()

    def waitall(self):
        """Wait until all work items in the pool are finished
        """
        self.no_items_running.wait()

    def starmap(self, function, iterable):
        """Apply each item in `iterable` to `function`

        Each item in `iterable` must be an iterable itself, passed to the function as expanded
        positional arguments. This behaves the same way as :func:`itertools.starmap`, except that
        `function` is executed on the pool; results are returned in input order regardless of
        completion order.

        :rtype: list
        """
        pile = WorkPile(self)
        for args in iterable:
            pile.spawn(function, *args)
        return list(pile)


class WorkPile:
    """An ordered set of work items

    Construct a WorkPile with an existing WorkerPool object. Iterating over the pile yields the
    results in the order the items were spawned, re-raising the first exception met.
    """

    def __init__(self, pool):
        """
        :param WorkerPool pool: pool executing the items
        """
        self.pool = pool
        self.futures = []

    def spawn(self, func, *args, **kwargs):
        self.futures.append(self.pool.spawn(func, *args, **kwargs))

    def __len__(self):
        return len(self.futures)

    def __iter__(self):
        for future in self.futures:
            yield future.result()
