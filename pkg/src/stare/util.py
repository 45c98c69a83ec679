"""Runtime helpers: seeded RNG streams, bounded parallelism, atomic file writes."""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "STARE_THREADS"

# Stream tags keep independently consumed RNG streams from colliding when
# they are derived from the same user-facing seed.
STREAM_GENERATE = 0
STREAM_EM = 1
STREAM_ASSIGN = 2
STREAM_MODEL_SAMPLE = 3


def child_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, *key)``.

    Distinct keys give statistically independent streams; the same key always
    reproduces the same stream, which keeps parallel per-candidate work
    deterministic regardless of scheduling order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(t) for t in key))
    return np.random.default_rng(ss)


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(int(seed_or_rng))


def thread_budget() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Map ``fn`` over ``items``, using up to STARE_THREADS threads.

    Results come back in input order, so output is independent of how the
    work was scheduled.
    """
    items = list(items)
    workers = min(thread_budget(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays so json.dumps accepts them."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and obj != obj:  # NaN has no JSON spelling
        return None
    return obj


def dump_json_stable(obj) -> str:
    """Serialize with sorted keys and fixed separators, for byte-stable output."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def atomic_write_text(path: str, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
