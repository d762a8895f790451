"""
Performance timing utilities.
"""

import time
from contextlib import contextmanager
from types import SimpleNamespace


@contextmanager
def timer(description):
    """
    Context manager for timing code execution.

    The yielded record takes an optional `detail` that is appended to the
    printed line.

    Args:
        description: Description of the operation being timed
    """
    record = SimpleNamespace(detail="")
    start = time.perf_counter()
    yield record
    elapsed = time.perf_counter() - start
    suffix = f" ({record.detail})" if record.detail else ""
    print(f"{description} completed in {elapsed:.2f} seconds{suffix}")
