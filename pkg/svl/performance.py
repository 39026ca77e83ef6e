# svl/performance.py
"""
Profiling utilities for training and evaluation steps.

Provides a decorator that times a step and logs it; slow steps are logged
as warnings so they show up at the default log level.
"""

import functools
import logging
import time
from typing import Callable, Optional

logger = logging.getLogger(__name__)

SLOW_STEP_SECONDS = 30.0


def profile_step(name: Optional[str] = None, slow_after: float = SLOW_STEP_SECONDS) -> Callable:
    """
    Decorator to log the wall time of one engine step.

    Usage:
        @profile_step("pretrain_epoch")
        def run_epoch(...):
            ...

    Args:
        name: Optional name for the profile log (defaults to function name)
        slow_after: Seconds above which the timing is logged as a warning

    Returns:
        Decorated function with timing
    """

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            profile_name = name or func.__name__
            start_time = time.perf_counter()

            result = func(*args, **kwargs)

            elapsed_time = time.perf_counter() - start_time
            log_msg = f"[PROFILE] {profile_name}: {elapsed_time:.3f}s"
            if elapsed_time > slow_after:
                logger.warning(log_msg)
            else:
                logger.debug(log_msg)

            return result

        return wrapper

    return decorator
