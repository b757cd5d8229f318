"""Shared plumbing: canonical serialization, seed derivation, parallel map."""

import hashlib
import json
import multiprocessing
import os

import numpy as np

# namespacing constants for derived random streams
PURPOSE_DRAWS = 1
PURPOSE_GENERATE = 2
PURPOSE_BOOTSTRAP = 3
PURPOSE_ORACLE = 4
PURPOSE_REGRESSION = 5


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj):
    """Serialize with sorted keys and shortest round-trip floats.

    Python's float repr is exact under round-trip, which is what makes
    artifacts byte-reproducible.
    """
    return json.dumps(_to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False)


def dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(obj))
        fh.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def text_entropy(text):
    """Stable 256-bit entropy words for a string (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]


def seed_for(seed, purpose, *keys):
    """Derive a child SeedSequence from (master seed, purpose, string/int keys).

    Keyed derivation (rather than spawn order) is what keeps draws tied to a
    market id across bootstrap resamples and worker counts.
    """
    entropy = [int(seed), int(purpose)]
    for key in keys:
        if isinstance(key, str):
            entropy.extend(text_entropy(key))
        else:
            entropy.append(int(key))
    return np.random.SeedSequence(entropy)


def rng_for(seed, purpose, *keys):
    return np.random.default_rng(seed_for(seed, purpose, *keys))


def write_csv(df, path, meta=None):
    """Write a CSV artifact, embedding the resolved config as a '#' header line."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if meta is not None:
            fh.write("# " + json.dumps(_to_jsonable(meta), sort_keys=True) + "\n")
        df.to_csv(fh, index=False)


def read_csv(path):
    import pandas as pd

    return pd.read_csv(path, comment="#")


def default_workers():
    return int(os.environ.get("ACCELMATCH_WORKERS", os.cpu_count() or 1))


def ordered_map(fn, items, workers=1):
    """Map preserving input order; results are identical for any worker count.

    Tasks must be self-contained (seeds derived from indices/ids, never from
    shared state), which every caller in this package guarantees.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    try:
        ctx = multiprocessing.get_context("fork")
    except ValueError:
        ctx = multiprocessing.get_context("spawn")
    with ctx.Pool(processes=min(workers, len(items))) as pool:
        return pool.map(fn, items)
