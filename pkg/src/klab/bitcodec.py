"""Bit-exact codecs: self-delimiting strings, naturals, pairs and conditions.

Bit strings are plain ``str`` objects over the alphabet ``{'0', '1'}``; the
empty string is the empty word.  All functions are pure.
"""
from __future__ import annotations

from collections.abc import Iterator, Sequence

from .errors import MalformedCode

CODEC_VERSION = 1

BitString = str


def check_bits(x: str) -> str:
    if x.strip("01"):
        raise ValueError(f"not a bit string: {x!r}")
    return x


def lenlex_key(x: BitString) -> tuple[int, str]:
    """Sort key for length-lexicographic order (shorter first, then 0 < 1)."""
    return len(x), x


def lenlex_index(x: BitString) -> int:
    """Position of ``x`` in length-lex order: ε → 0, "0" → 1, "1" → 2, ..."""
    return (1 << len(x)) - 1 + (int(x, 2) if x else 0)


def lenlex_string(i: int) -> BitString:
    return bin(i + 1)[3:]


def all_strings(max_len: int, min_len: int = 0) -> Iterator[BitString]:
    """Every bit string with ``min_len <= |x| <= max_len`` in length-lex order."""
    for n in range(min_len, max_len + 1):
        for v in range(1 << n):
            yield format(v, f"0{n}b") if n else ""


def nat_to_bits(n: int) -> BitString:
    """Bijective numbering: 0 ↔ ε, 1 ↔ "0", 2 ↔ "1", 3 ↔ "00", ..."""
    if n < 0:
        raise ValueError("naturals are non-negative")
    return bin(n + 1)[3:]


def bits_to_nat(x: BitString) -> int:
    return int("1" + x, 2) - 1


def selfdelim_encode(x: BitString) -> BitString:
    """Double every bit and append the terminator ``01``."""
    return "".join(c + c for c in x) + "01"


def selfdelim_decode(s: BitString) -> tuple[BitString, BitString]:
    """Split ``s`` into (decoded payload, unread rest)."""
    out = []
    for i in range(0, len(s) - 1, 2):
        pair = s[i : i + 2]
        if pair == "01":
            return "".join(out), s[i + 2 :]
        if pair == "10":
            raise MalformedCode(f"invalid pair '10' at offset {i}")
        out.append(pair[0])
    raise MalformedCode("no terminator before end of input")


def pair_encode(a: BitString, b: BitString) -> BitString:
    return selfdelim_encode(a) + b


def pair_decode(s: BitString) -> tuple[BitString, BitString]:
    return selfdelim_decode(s)


def _as_bits(item) -> BitString:
    if isinstance(item, str):
        return check_bits(item)
    if isinstance(item, int) and not isinstance(item, bool):
        return nat_to_bits(item)
    raise TypeError(f"condition items are bit strings or naturals, got {item!r}")


def condition_encode(items: Sequence) -> BitString:
    """Flatten a condition list onto one tape.

    Every item but the last is self-delimited, the last is written raw.
    Integers are naturals and go through :func:`nat_to_bits` first.  The
    empty condition is the single-item list ``[""]``.
    """
    if not items:
        raise ValueError("condition list must be non-empty; use [''] for no condition")
    parts = [_as_bits(i) for i in items]
    return "".join(selfdelim_encode(p) for p in parts[:-1]) + parts[-1]


def condition_decode(s: BitString, count: int) -> list[BitString]:
    items = []
    for _ in range(count - 1):
        item, s = selfdelim_decode(s)
        items.append(item)
    items.append(s)
    return items
