"""Lazily built, cached complexity tables for both machine modes.

:class:`Lab` is the ``tables`` object every check consumes.  Rows are keyed
by mode and encoded condition; the unconditional row uses a wider target
universe than conditional rows.  Missing rows are built on demand, or in
batches through :meth:`Lab.resolve`.
"""
from __future__ import annotations

import contextlib
import fcntl
import hashlib
import logging
import os
from pathlib import Path

import numpy as np

from .bitcodec import CODEC_VERSION, condition_encode, lenlex_key, lenlex_string
from .enumerator import (INFINITY, ComplexityTable, SliceCount, build_table,
                         enumerate_slices, load_cache, save_cache)
from .errors import IoFailure, LockHeld, MissingCondition, NotComputed
from .machine import MACHINE_VERSION, MODES, PLAIN, PREFIX, reference_machine

log = logging.getLogger(__name__)

COND_TARGET_BITS = 10
FREE_TARGET_BITS = 21


def encode_condition(cond) -> str:
    """Accept an encoded string or a tuple/list of items."""
    if isinstance(cond, str):
        return cond
    return condition_encode(list(cond)) if cond else ""


class Lab:
    def __init__(self, P=24, T=1024, *, workers=1, cache_dir=None, on_demand=True,
                 machine_version=MACHINE_VERSION, cond_target_bits=COND_TARGET_BITS,
                 free_target_bits=FREE_TARGET_BITS):
        self.P = P
        self.T = T
        self.workers = workers
        self.on_demand = on_demand
        self.machines = {m: reference_machine(m, machine_version) for m in MODES}
        self.cond_target_bits = cond_target_bits
        self.free_target_bits = free_target_bits
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.tables: dict[tuple[str, int], ComplexityTable] = {}
        self._dirty: set[tuple[str, int]] = set()
        self._deferred = False
        self._slices: dict[int, dict[str, SliceCount]] = {}
        self.rows_built = 0
        if self.cache_dir:
            self._load()

    @property
    def fingerprint(self) -> str:
        """Digest binding both machine modes and the codec version."""
        h = hashlib.sha256()
        for m in MODES:
            h.update(self.machines[m].fingerprint.encode())
        h.update(f"codec {CODEC_VERSION}".encode())
        return h.hexdigest()

    def scale(self, L) -> dict:
        return {"L": L, "P": self.P, "T": self.T}

    # -- storage ------------------------------------------------------------

    def _key(self, mode, cond_enc):
        return mode, self.free_target_bits if cond_enc == "" else self.cond_target_bits

    def _path(self, mode, M):
        return self.cache_dir / f"{mode}-M{M}-P{self.P}-T{self.T}.klab"

    def _load(self):
        for mode in MODES:
            for M in {self.free_target_bits, self.cond_target_bits}:
                path = self._path(mode, M)
                if path.exists():
                    table = load_cache(path, fingerprint=self.machines[mode].fingerprint,
                                       P=self.P, T=self.T)
                    self.tables[mode, M] = table
                    log.info("loaded %s (%d rows)", path.name, len(table.rows))

    def _mkdir(self):
        try:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise IoFailure(f"cannot create cache directory {self.cache_dir}: {e}") from e

    def save(self) -> list[Path]:
        if not self.cache_dir:
            return []
        self._mkdir()
        written = []
        for key in sorted(self._dirty):
            path = self._path(*key)
            save_cache(self.tables[key], path)
            written.append(path)
            log.info("wrote %s", path.name)
        self._dirty.clear()
        return written

    @contextlib.contextmanager
    def lock(self):
        """Advisory lock on the cache directory."""
        if not self.cache_dir:
            yield
            return
        self._mkdir()
        with open(self.cache_dir / ".lock", "w") as f:
            try:
                fcntl.flock(f, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except BlockingIOError:
                raise LockHeld(f"cache directory {self.cache_dir} is locked") from None
            try:
                yield
            finally:
                fcntl.flock(f, fcntl.LOCK_UN)

    # -- building -----------------------------------------------------------

    def has_row(self, mode, cond_enc) -> bool:
        t = self.tables.get(self._key(mode, cond_enc))
        return t is not None and cond_enc in t.rows

    def ensure(self, mode, conditions) -> int:
        """Build every missing row among ``conditions``; returns rows built."""
        groups: dict[int, set[str]] = {}
        for c in conditions:
            c = encode_condition(c)
            if not self.has_row(mode, c):
                groups.setdefault(self._key(mode, c)[1], set()).add(c)
        built = 0
        for M, conds in groups.items():
            log.info("building %d %s rows (P=%d, T=%d, M=%d)", len(conds), mode, self.P, self.T, M)
            new = build_table(self.machines[mode], mode, conds, M, self.P, self.T,
                              workers=self.workers)
            key = (mode, M)
            if key in self.tables:
                self.tables[key].merge(new)
            else:
                self.tables[key] = new
            self._dirty.add(key)
            built += len(conds)
        self.rows_built += built
        return built

    def resolve(self, fn, items):
        """Map ``fn`` over ``items``, building missing rows in batches.

        ``fn`` must be pure: items that hit a missing row are retried from
        scratch once every row requested in that pass has been built.
        """
        items = list(items)
        results: dict[int, object] = {}
        pending = list(range(len(items)))
        while pending:
            missing: dict[str, set[str]] = {}
            retry = []
            with self.deferred():
                for i in pending:
                    try:
                        results[i] = fn(items[i])
                    except MissingCondition as e:
                        missing.setdefault(e.mode, set()).add(e.condition)
                        retry.append(i)
            if not missing:
                break
            if not self.on_demand:
                mode = sorted(missing)[0]
                raise MissingCondition(mode, sorted(missing[mode])[0])
            for mode in sorted(missing):
                self.ensure(mode, missing[mode])
            pending = retry
        return [results[i] for i in range(len(items))]

    @contextlib.contextmanager
    def deferred(self):
        prev, self._deferred = self._deferred, True
        try:
            yield
        finally:
            self._deferred = prev

    def budget_changes(self, factor: int = 2) -> list[tuple[str, str, str, float, float]]:
        """Entries of every built row whose value differs at budget factor * T.

        Returns (mode, condition, target, value at T, value at factor * T).
        """
        out = []
        for (mode, M), table in sorted(self.tables.items()):
            conds = sorted(table.rows, key=lenlex_key)
            big = build_table(self.machines[mode], mode, conds, M, self.P, self.T * factor,
                              workers=self.workers)
            for c in conds:
                a, b = table.rows[c].lengths, big.rows[c].lengths
                for i in np.nonzero(a != b)[0]:
                    x = lenlex_string(int(i))
                    out.append((mode, c, x, table.value(c, x), big.value(c, x)))
        return out

    # -- lookups ------------------------------------------------------------

    def table(self, mode, cond_enc) -> ComplexityTable:
        if not self.has_row(mode, cond_enc):
            if self._deferred or not self.on_demand:
                raise MissingCondition(mode, cond_enc)
            self.ensure(mode, [cond_enc])
        return self.tables[self._key(mode, cond_enc)]

    def value(self, mode, target, cond=()):
        c = encode_condition(cond)
        return self.table(mode, c).value(c, target)

    def witness(self, mode, target, cond=()):
        c = encode_condition(cond)
        return self.table(mode, c).witness(c, target)

    def C(self, x, *cond):
        """Time-bounded plain complexity C_T(x | cond...)."""
        return self.value(PLAIN, x, cond)

    def K(self, x, *cond):
        """Time-bounded prefix complexity K_T(x | cond...)."""
        return self.value(PREFIX, x, cond)

    def slices(self, n: int) -> dict[str, SliceCount]:
        if n not in self._slices:
            table = self.table(PLAIN, "")
            self._slices[n] = {s.a: s for s in enumerate_slices(table, n)}
        return self._slices[n]


def finite(v):
    """Return ``v`` unchanged; raise :class:`Excluded` for Infinity."""
    if v == INFINITY:
        raise Excluded("Infinity")
    return v


class Excluded(Exception):
    def __init__(self, reason):
        self.reason = reason
        super().__init__(reason)


def guarded(fn):
    """Wrap a per-item measurement so exclusions become values, not errors."""
    def wrapper(item):
        try:
            return fn(item)
        except Excluded as e:
            return e
        except MissingCondition:
            raise
        except NotComputed:
            return Excluded("NotComputed")
    return wrapper
