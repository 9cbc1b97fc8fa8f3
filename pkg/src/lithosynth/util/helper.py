# -*- coding: utf-8 -*-
"""
Provides helper functions.

The helpers are shared plumbing for the pipeline: deterministic seed
derivation, content hashing, canonical JSON and an order-preserving parallel
map whose results never depend on the number of workers.
"""

from concurrent.futures import ProcessPoolExecutor
import hashlib
import json
import logging

import numpy as np

logger = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1


def derive_seed(*parts):
    """
    Derives a 64-bit seed from an arbitrary sequence of parts.

    The parts are joined with a separator that cannot occur in their string
    forms and hashed with sha-256, so the result depends only on the values
    of the parts (never on call order or process).

    Parameters
    ----------
    *parts : int, str or enum member
        The values identifying the consumer of the seed, e.g.
        ``(master_seed, layout_id, group, index)``.

    Returns
    -------
    int
        Seed in ``[0, 2**64)``.
    """
    tokens = [str(getattr(part, "value", part)) for part in parts]
    digest = hashlib.sha256("\x1f".join(tokens).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & SEED_MASK


def sha256_of_array(array):
    """Hex sha-256 of an array's bytes together with its shape and dtype."""
    array = np.ascontiguousarray(array)
    hasher = hashlib.sha256()
    hasher.update(f"{array.dtype.str}{array.shape}".encode("ascii"))
    hasher.update(array.tobytes())
    return hasher.hexdigest()


def canonical_json(obj, indent=None):
    """
    Serializes `obj` to a byte-stable JSON string.

    Keys are sorted and separators fixed, so equal objects always produce
    identical text.
    """
    if indent is None:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return json.dumps(obj, sort_keys=True, indent=indent)


def ordered_parallel_map(func, items, workers=1, chunksize=8):
    """
    Maps `func` over `items`, optionally in worker processes.

    Parameters
    ----------
    func : callable
        A picklable, module-level function of one argument.
    items : iterable
        The arguments.
    workers : int, optional
        Number of worker processes. 1 (the default) runs in-process.
    chunksize : int, optional
        Items handed to a worker at a time.

    Returns
    -------
    list
        ``[func(item) for item in items]`` in input order, whatever
        `workers` is.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug("mapping %d items over %d workers", len(items), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunksize))
