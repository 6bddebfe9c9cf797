"""Exhaustive time-bounded complexity tables, slice counts and the cache file.

A :class:`ComplexityTable` holds, for a set of conditions, the exact minimum
over all programs of at most ``P`` bits halting within ``T`` steps, for every
target string of at most ``max_target_bits`` bits.  Values are ``int`` or
:data:`INFINITY`.
"""
from __future__ import annotations

import hashlib
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numba import njit

from . import _kernel
from .bitcodec import (BitString, lenlex_index, lenlex_key, lenlex_string,
                       pair_decode, pair_encode)
from .errors import (CapacityExceeded, CorruptCache, FingerprintMismatch,
                     IoFailure, MalformedCode, NotComputed)
from .machine import MODES, PLAIN, PREFIX, MachineDescriptor, reference_machine

INFINITY = math.inf
MAX_PROGRAM_BITS = 26
WORK_CEILING = 2**40
NO_WITNESS = _kernel.NO_WITNESS

MAGIC = b"KLAB1"
FORMAT_VERSION = 1
INF_VALUE = 0xFFFF
_HEADER = struct.Struct("<5sH32sBIIQ")


@dataclass
class Row:
    """Dense results for one condition, indexed by length-lex target index."""

    lengths: np.ndarray  # int16, NO_WITNESS where no program halts
    witnesses: np.ndarray  # int64 program bits (MSB first)

    def __eq__(self, other):
        return (np.array_equal(self.lengths, other.lengths)
                and np.array_equal(self.witnesses, other.witnesses))


@dataclass
class ComplexityTable:
    machine_fingerprint: str
    mode: str
    max_program_bits: int
    budget: int
    max_target_bits: int
    rows: dict[str, Row] = field(default_factory=dict)

    @property
    def conditions(self) -> list[str]:
        return sorted(self.rows, key=lenlex_key)

    def _row(self, condition: BitString, target: BitString) -> tuple[Row, int]:
        row = self.rows.get(condition)
        if row is None or len(target) > self.max_target_bits:
            raise NotComputed(f"({condition or 'ε'}, {target or 'ε'}) outside table domain")
        return row, lenlex_index(target)

    def value(self, condition: BitString, target: BitString):
        row, i = self._row(condition, target)
        v = int(row.lengths[i])
        return INFINITY if v == NO_WITNESS else v

    def witness(self, condition: BitString, target: BitString) -> BitString | None:
        row, i = self._row(condition, target)
        v = int(row.lengths[i])
        if v == NO_WITNESS:
            return None
        return format(int(row.witnesses[i]), f"0{v}b") if v else ""

    def entries(self):
        """Yield (condition, target, value, witness) over the whole domain."""
        for cond in self.conditions:
            for i in range((2 << self.max_target_bits) - 1):
                t = lenlex_string(i)
                yield cond, t, self.value(cond, t), self.witness(cond, t)

    def merge(self, other: ComplexityTable) -> None:
        if (other.machine_fingerprint, other.mode, other.max_program_bits, other.budget,
                other.max_target_bits) != (self.machine_fingerprint, self.mode,
                                           self.max_program_bits, self.budget, self.max_target_bits):
            raise FingerprintMismatch("cannot merge tables of different configuration")
        self.rows.update(other.rows)

    def __eq__(self, other):
        return (isinstance(other, ComplexityTable)
                and (self.machine_fingerprint, self.mode, self.max_program_bits, self.budget,
                     self.max_target_bits) == (other.machine_fingerprint, other.mode,
                                               other.max_program_bits, other.budget,
                                               other.max_target_bits)
                and self.rows.keys() == other.rows.keys()
                and all(self.rows[k] == other.rows[k] for k in self.rows))


@lru_cache(maxsize=None)
def _word_arrays(descriptor: MachineDescriptor):
    words = descriptor.words
    return (np.array([len(b) for b, _, _ in words], np.int64),
            np.array([int(b, 2) for b, _, _ in words], np.int64),
            np.array([int(op) for _, op, _ in words], np.int64),
            np.array([arg for _, _, arg in words], np.int64))


def _cond_array(condition: BitString) -> np.ndarray:
    return np.array([int(c) for c in condition], np.int64)


def search_row(descriptor, condition, max_target_bits, P, T) -> Row:
    size = (2 << max_target_bits) - 1
    lengths = np.full(size, NO_WITNESS, np.int16)
    witnesses = np.zeros(size, np.int64)
    dummy = np.zeros(1, np.int64)
    _kernel.search(*_word_arrays(descriptor), descriptor.mode == PREFIX,
                   _cond_array(condition), P, T, max_target_bits,
                   descriptor.stack_depth, lengths, witnesses,
                   False, dummy, dummy, dummy, dummy)
    return Row(lengths, witnesses)


def halting_programs(descriptor, condition, P, T) -> list[tuple[BitString, BitString]]:
    """All (program, output) pairs that halt having read the whole program.

    In plain mode this omits programs that halt with unread trailing bits
    (extensions of an explicitly halting program).
    """
    cap = 2 << P
    h = [np.zeros(cap, np.int64) for _ in range(4)]
    dummy = np.zeros(1, np.int64)
    n = _kernel.search(*_word_arrays(descriptor), descriptor.mode == PREFIX,
                       _cond_array(condition), P, T, 1 << 30,
                       descriptor.stack_depth, dummy, dummy, True, *h)
    out = []
    for i in range(n):
        p = format(int(h[1][i]), f"0{h[0][i]}b") if h[0][i] else ""
        olen = int(h[2][i])
        o = format(int(h[3][i]) & ((1 << olen) - 1), f"0{olen}b") if 0 < olen <= 63 else (None if olen else "")
        out.append((p, o))
    out.sort(key=lambda po: lenlex_key(po[0]))
    return out


def _search_chunk(args):
    mode, version, conditions, max_target_bits, P, T = args
    d = reference_machine(mode, version)
    return [(c, search_row(d, c, max_target_bits, P, T)) for c in conditions]


def build_table(descriptor: MachineDescriptor, mode: str, conditions, targets, P: int, T: int,
                *, workers: int = 1, work_ceiling: int = WORK_CEILING) -> ComplexityTable:
    """Exhaustively enumerate programs of length <= P for every condition.

    ``targets`` is either the maximum target length or an iterable of target
    strings; the table domain is every string up to that length.  Work is
    split into contiguous runs of conditions (in length-lex order); each
    condition's row is computed independently, so the result does not depend
    on ``workers``.
    """
    if mode != descriptor.mode:
        raise ValueError(f"descriptor is {descriptor.mode}, asked for {mode}")
    if not 0 <= P <= MAX_PROGRAM_BITS:
        raise CapacityExceeded(f"P={P} exceeds hard cap {MAX_PROGRAM_BITS}")
    if isinstance(targets, int):
        max_target_bits = targets
    else:
        max_target_bits = max((len(t) for t in targets), default=0)
    conditions = sorted(set(conditions), key=lenlex_key)
    if len(conditions) * (2 << P) > work_ceiling:
        raise CapacityExceeded(
            f"{len(conditions)} conditions x 2^{P + 1} programs exceeds ceiling {work_ceiling}")
    table = ComplexityTable(descriptor.fingerprint, mode, P, T, max_target_bits)
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(conditions) <= 1:
        for c in conditions:
            table.rows[c] = search_row(descriptor, c, max_target_bits, P, T)
        return table
    if descriptor != reference_machine(mode, descriptor.version):
        raise ValueError("parallel builds need the reference machine")
    step = -(-len(conditions) // workers)
    chunks = [(mode, descriptor.version, conditions[i:i + step], max_target_bits, P, T)
              for i in range(0, len(conditions), step)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_search_chunk, chunks):
            table.rows.update(part)
    return table


def lookup_c(table: ComplexityTable, x: BitString, cond: BitString = ""):
    if table.mode != PLAIN:
        raise ValueError("lookup_c needs a plain-mode table")
    return table.value(cond, x)


def lookup_k(table: ComplexityTable, x: BitString, cond: BitString = ""):
    if table.mode != PREFIX:
        raise ValueError("lookup_k needs a prefix-mode table")
    return table.value(cond, x)


def pair_complexity(table: ComplexityTable, a: BitString, b: BitString):
    return lookup_c(table, pair_encode(a, b), "")


@dataclass
class SliceCount:
    n: int
    a: BitString
    ordinal_index: dict[BitString, int]

    @property
    def count(self) -> int:
        return len(self.ordinal_index)


def enumerate_slices(table: ComplexityTable, n: int) -> list[SliceCount]:
    """Group every pair with plain complexity <= n by its first component.

    Pairs are numbered in discovery order, the order in which a length-lex
    program enumeration first produces them: by complexity, then witness.
    """
    row = table.rows.get("")
    if table.mode != PLAIN or row is None:
        raise NotComputed("slices need the unconditional plain row")
    idx = np.nonzero(row.lengths <= n)[0]
    found = []
    for i in idx:
        s = lenlex_string(int(i))
        try:
            a, y = pair_decode(s)
        except MalformedCode:
            continue
        found.append((int(row.lengths[i]), int(row.witnesses[i]), a, y))
    found.sort()
    slices: dict[str, SliceCount] = {}
    for _, _, a, y in found:
        sl = slices.setdefault(a, SliceCount(n, a, {}))
        sl.ordinal_index[y] = len(sl.ordinal_index)
    return [slices[a] for a in sorted(slices, key=lenlex_key)]


def semimeasure(slice_: SliceCount) -> Fraction:
    """The a-priori weight N_a * 2^-(n+1) of the slice's first component."""
    return Fraction(slice_.count, 2 ** (slice_.n + 1))


# -- cache file -------------------------------------------------------------

def _bits_to_bytes(bits: BitString) -> bytes:
    if not bits:
        return b""
    nbytes = (len(bits) + 7) // 8
    return int(bits.ljust(nbytes * 8, "0"), 2).to_bytes(nbytes, "big")


def _bytes_to_bits(data: bytes, nbits: int) -> BitString:
    if not nbits:
        return ""
    return format(int.from_bytes(data, "big"), f"0{len(data) * 8}b")[:nbits]


@njit(cache=True)
def _pack_row(cond_head, max_target_bits, lengths, witnesses):
    n = lengths.shape[0]
    size = 0
    for i in range(n):
        tl = 0
        while (2 << tl) - 1 <= i:
            tl += 1
        wl = lengths[i] if lengths[i] != NO_WITNESS else 0
        size += cond_head.shape[0] + 2 + (tl + 7) // 8 + 4 + (wl + 7) // 8
    out = np.zeros(size, np.uint8)
    pos = 0
    tl = 0
    for i in range(n):
        while (2 << tl) - 1 <= i:
            tl += 1
        for j in range(cond_head.shape[0]):
            out[pos + j] = cond_head[j]
        pos += cond_head.shape[0]
        out[pos] = tl & 0xFF
        out[pos + 1] = tl >> 8
        pos += 2
        tbits = i - ((1 << tl) - 1)
        tb = (tl + 7) // 8
        tbits <<= tb * 8 - tl
        for j in range(tb):
            out[pos + j] = (tbits >> (8 * (tb - 1 - j))) & 0xFF
        pos += tb
        if lengths[i] == NO_WITNESS:
            v = 0xFFFF
            wl = 0
        else:
            v = lengths[i]
            wl = lengths[i]
        out[pos] = v & 0xFF
        out[pos + 1] = v >> 8
        out[pos + 2] = wl & 0xFF
        out[pos + 3] = wl >> 8
        pos += 4
        wb = (wl + 7) // 8
        wbits = witnesses[i] << (wb * 8 - wl) if wl else 0
        for j in range(wb):
            out[pos + j] = (wbits >> (8 * (wb - 1 - j))) & 0xFF
        pos += wb
    return out


@njit(cache=True)
def _unpack(buf, count):
    """Parse ``count`` entries; returns per-entry fields and a status code."""
    c_off = np.zeros(count, np.int64)
    c_len = np.zeros(count, np.int64)
    t_len = np.zeros(count, np.int64)
    t_bits = np.zeros(count, np.int64)
    value = np.zeros(count, np.int64)
    w_bits = np.zeros(count, np.int64)
    pos = 0
    n = buf.shape[0]
    for e in range(count):
        if pos + 2 > n:
            return c_off, c_len, t_len, t_bits, value, w_bits, 1
        cl = buf[pos] | (np.int64(buf[pos + 1]) << 8)
        c_off[e] = pos + 2
        c_len[e] = cl
        pos += 2 + (cl + 7) // 8
        if pos + 2 > n:
            return c_off, c_len, t_len, t_bits, value, w_bits, 1
        tl = buf[pos] | (np.int64(buf[pos + 1]) << 8)
        pos += 2
        tb = (tl + 7) // 8
        if tl > 62 or pos + tb + 4 > n:
            return c_off, c_len, t_len, t_bits, value, w_bits, 1
        acc = np.int64(0)
        for j in range(tb):
            acc = (acc << 8) | buf[pos + j]
        t_len[e] = tl
        t_bits[e] = acc >> (tb * 8 - tl)
        pos += tb
        value[e] = buf[pos] | (np.int64(buf[pos + 1]) << 8)
        wl = buf[pos + 2] | (np.int64(buf[pos + 3]) << 8)
        pos += 4
        wb = (wl + 7) // 8
        if wl > 62 or pos + wb > n:
            return c_off, c_len, t_len, t_bits, value, w_bits, 1
        acc = np.int64(0)
        for j in range(wb):
            acc = (acc << 8) | buf[pos + j]
        w_bits[e] = acc >> (wb * 8 - wl) if wl else 0
        pos += wb
        if value[e] == 0xFFFF:
            if wl != 0:
                return c_off, c_len, t_len, t_bits, value, w_bits, 2
        elif wl != value[e]:
            return c_off, c_len, t_len, t_bits, value, w_bits, 2
    if pos != n:
        return c_off, c_len, t_len, t_bits, value, w_bits, 1
    return c_off, c_len, t_len, t_bits, value, w_bits, 0


def dump_cache(table: ComplexityTable) -> bytes:
    conds = table.conditions
    size = (2 << table.max_target_bits) - 1
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, bytes.fromhex(table.machine_fingerprint),
                          MODES.index(table.mode), table.max_program_bits, table.budget,
                          len(conds) * size)
    parts = [header]
    for c in conds:
        head = np.frombuffer(struct.pack("<H", len(c)) + _bits_to_bytes(c), np.uint8)
        row = table.rows[c]
        parts.append(_pack_row(head, table.max_target_bits, row.lengths, row.witnesses).tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def parse_cache(data: bytes, *, fingerprint: str | None = None, P: int | None = None,
                T: int | None = None) -> ComplexityTable:
    if len(data) < _HEADER.size + 32 or data[:5] != MAGIC:
        raise CorruptCache("bad magic or truncated header")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptCache("digest mismatch")
    magic, version, fp, mode_byte, p, t, count = _HEADER.unpack_from(body)
    if version != FORMAT_VERSION or mode_byte >= len(MODES):
        raise CorruptCache(f"unsupported format version {version} / mode {mode_byte}")
    if fingerprint is not None and fp.hex() != fingerprint:
        raise FingerprintMismatch(f"cache built by machine {fp.hex()[:16]}…, active is {fingerprint[:16]}…")
    if (P is not None and p != P) or (T is not None and t != T):
        raise FingerprintMismatch(f"cache scale P={p},T={t} differs from requested P={P},T={T}")
    buf = np.frombuffer(body, np.uint8)[_HEADER.size:]
    c_off, c_len, t_len, t_bits, value, w_bits, status = _unpack(buf, count)
    if status:
        raise CorruptCache("malformed entry stream")
    max_t = int(t_len.max()) if count else 0
    size = (2 << max_t) - 1
    if count % size:
        raise CorruptCache("entry count is not a whole number of rows")
    table = ComplexityTable(fp.hex(), MODES[mode_byte], p, t, max_t)
    expect = np.arange(size)
    for r in range(count // size):
        sl = slice(r * size, (r + 1) * size)
        lens = c_len[sl]
        if (lens != lens[0]).any():
            raise CorruptCache("row mixes conditions")
        off = int(c_off[r * size])
        cond = _bytes_to_bits(bytes(buf[off:off + (int(lens[0]) + 7) // 8]), int(lens[0]))
        idx = (1 << t_len[sl]) - 1 + t_bits[sl]
        if not np.array_equal(idx, expect) or cond in table.rows:
            raise CorruptCache("row targets out of order")
        v = value[sl]
        table.rows[cond] = Row(np.where(v == INF_VALUE, NO_WITNESS, v).astype(np.int16),
                               w_bits[sl].copy())
    return table


def save_cache(table: ComplexityTable, path) -> None:
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(dump_cache(table))
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"cannot write cache {path}: {e}") from e


def load_cache(path, *, fingerprint: str | None = None, P: int | None = None,
               T: int | None = None) -> ComplexityTable:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoFailure(f"cannot read cache {path}: {e}") from e
    return parse_cache(data, fingerprint=fingerprint, P=P, T=T)
