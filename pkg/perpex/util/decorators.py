import logging
from functools import wraps
import inspect
import re
import time

import numpy as np

log = logging.getLogger('perpex')

max_param_len = 40
log_function_start = True  # log when the function is called
log_function_exit = True  # log when the function exits, with elapsed time

# regex for extracting from <perpex.ode.ValueFunction object at 0x7fc54e28be80>
r_at = re.compile('<.*(?= at )')


def parse_repr(obj):
    s = repr(obj)
    m = re.search(r_at, s)
    if m:
        return '{}>'.format(m.group())
    return s[:max_param_len] + '...'


def format_arg(arg):
    """Convert `arg` to a short string

    Arrays are summarised by shape, long reprs are cut down to the class name.
    """
    if isinstance(arg, np.ndarray):
        return 'array{}'.format(arg.shape)
    s = str(arg)
    if len(s) > max_param_len:
        return parse_repr(arg)
    return s


def log_start(f, args, kwargs):
    try:
        bound = inspect.signature(f).bind_partial(*args, **kwargs)
        items = bound.arguments.items()
    except (TypeError, ValueError):
        items = [(str(i), a) for i, a in enumerate(args)] + list(kwargs.items())

    f_args = ', '.join('{}={}'.format(k, format_arg(v)) for k, v in items)
    log.debug('{}.{}({})'.format(f.__module__, f.__qualname__, f_args))


def log_exit(f, elapsed):
    log.debug('..done: {}.{} ({:.3f} s)'.format(f.__module__, f.__qualname__, elapsed))


def logged(f):
    """Decorator which logs the call and the wall time of the decorated function"""

    @wraps(f)
    def wrapper(*args, **kwargs):
        if not log.isEnabledFor(logging.DEBUG):
            return f(*args, **kwargs)

        if log_function_start:
            log_start(f, args, kwargs)

        start = time.perf_counter()
        ret = f(*args, **kwargs)

        if log_function_exit:
            log_exit(f, time.perf_counter() - start)

        return ret

    return wrapper
