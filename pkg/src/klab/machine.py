"""The reference machine: a tiny stack interpreter with plain and prefix modes.

A program is a sequence of variable-length instructions taken from a
prefix-free opcode table.  Instructions are fetched from the program one at
a time; instructions already fetched stay buffered so backward jumps can
revisit them.  The machine has a one-way condition tape, a bit stack of
bounded depth and an append-only output tape.

Plain mode: the program is given whole.  Fetching an instruction exactly at
the end of the program halts the machine (an implicit ``HALT``).

Prefix mode: program bits are read strictly on demand.  A fetch past the end
of the program is an over-read and the run is ``Stuck``; ``HALT`` only counts
as halting when every program bit has been read.  Halting programs therefore
form a prefix-free set.

Every fetch is preceded by a budget check; executing an instruction (the
implicit halt included) costs one step, skipping one costs none.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from functools import cached_property

from .bitcodec import BitString

MACHINE_NAME = "klab-ref"
MACHINE_VERSION = 1
STACK_DEPTH = 4

PLAIN = "plain"
PREFIX = "prefix"
MODES = (PLAIN, PREFIX)


class Op(enum.IntEnum):
    HALT = 0
    OUT0 = 1
    OUT1 = 2
    RCOND = 3
    OUTS = 4
    SKIPZ = 5
    SKIPE = 6
    JBACK = 7


@dataclass(frozen=True)
class Opcode:
    mnemonic: str
    pattern: str
    operand_bits: int
    semantics: str

    @property
    def op(self) -> Op:
        return Op[self.mnemonic]


OPCODES = (
    Opcode("OUT0", "00", 0, "append 0 to the output"),
    Opcode("OUT1", "01", 0, "append 1 to the output"),
    Opcode("HALT", "100", 0, "stop; in prefix mode only valid once every program bit is read"),
    Opcode("RCOND", "101", 0, "push the next condition bit; stuck if the condition is exhausted or the stack is full"),
    Opcode("OUTS", "1100", 0, "pop a bit and append it to the output; stuck on empty stack"),
    Opcode("SKIPZ", "1101", 0, "pop a bit; if it is 0 skip the next instruction; stuck on empty stack"),
    Opcode("SKIPE", "1110", 0, "skip the next instruction if the condition is exhausted"),
    Opcode("JBACK", "1111", 2, "jump back (operand + 1) instructions; stuck before the first instruction"),
)

# Constants pinned by exhaustive search over |x| <= 10 (tests/test_machine.py).
# Literal output: C(x) <= alpha*|x| + beta.  Condition copy: C(x|x) <= gamma.
MACHINE_CONSTANTS = {
    PLAIN: {"alpha": 2, "beta": 0, "gamma": 17},
    PREFIX: {"alpha": 2, "beta": 3, "gamma": 20},
}


class Status(enum.Enum):
    HALTED = "Halted"
    OUT_OF_BUDGET = "OutOfBudget"
    STUCK = "Stuck"


@dataclass(frozen=True)
class RunResult:
    status: Status
    output: BitString
    program_bits_read: int
    steps_used: int

    @property
    def halted(self) -> bool:
        return self.status is Status.HALTED


@dataclass(frozen=True)
class MachineDescriptor:
    name: str
    opcode_table: tuple[Opcode, ...]
    mode: str
    version: int
    stack_depth: int = STACK_DEPTH
    constants: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        patterns = [o.pattern for o in self.opcode_table]
        for p in patterns:
            for q in patterns:
                if p != q and q.startswith(p):
                    raise ValueError(f"opcode patterns not prefix-free: {p} / {q}")

    def serialize(self) -> str:
        """Canonical text of every field except the fingerprint."""
        lines = [
            f"machine {self.name}",
            f"version {self.version}",
            f"mode {self.mode}",
            f"stack_depth {self.stack_depth}",
        ]
        for o in self.opcode_table:
            operand = f"+{o.operand_bits}" if o.operand_bits else ""
            lines.append(f"opcode {o.pattern}{operand} {o.mnemonic} : {o.semantics}")
        for key in sorted(self.constants):
            lines.append(f"constant {key} {self.constants[key]}")
        return "\n".join(lines) + "\n"

    @cached_property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    @cached_property
    def words(self) -> tuple[tuple[str, Op, int], ...]:
        """Every complete instruction word as (bits, op, operand value)."""
        out = []
        for o in self.opcode_table:
            for v in range(1 << o.operand_bits):
                arg = format(v, f"0{o.operand_bits}b") if o.operand_bits else ""
                out.append((o.pattern + arg, o.op, v))
        return tuple(out)

    @cached_property
    def _trie(self) -> dict:
        trie: dict = {}
        for bits, op, arg in self.words:
            node = trie
            for b in bits[:-1]:
                node = node.setdefault(b, {})
            node[bits[-1]] = (op, arg)
        return trie


def reference_machine(mode: str, version: int = MACHINE_VERSION) -> MachineDescriptor:
    if version != MACHINE_VERSION:
        raise ValueError(f"machine version {version} is not available (have {MACHINE_VERSION})")
    return MachineDescriptor(
        name=MACHINE_NAME,
        opcode_table=OPCODES,
        mode=mode,
        version=version,
        constants=dict(MACHINE_CONSTANTS[mode]),
    )


def describe(descriptor: MachineDescriptor) -> str:
    return descriptor.serialize() + f"fingerprint {descriptor.fingerprint}\n"


def run(descriptor: MachineDescriptor, program: BitString, condition: BitString, budget: int) -> RunResult:
    """Execute ``program`` on ``condition`` for at most ``budget`` steps."""
    return _execute(descriptor, program, condition, budget, strict=True)


def run_stream(descriptor: MachineDescriptor, stream: BitString, condition: BitString, budget: int) -> RunResult:
    """Prefix-mode run that tolerates unread trailing bits.

    Used to find where a self-delimiting program ends inside a longer
    concatenation; ``program_bits_read`` is the split point.
    """
    return _execute(descriptor, stream, condition, budget, strict=False)


def _execute(descriptor, program, condition, budget, strict):
    prefix = descriptor.mode == PREFIX
    depth = descriptor.stack_depth
    trie = descriptor._trie
    instrs: list[tuple[Op, int]] = []
    read = 0
    pc = 0
    skip = False
    stack: list[str] = []
    cpos = 0
    out: list[str] = []
    steps = 0
    # (pc, skip, stack) states seen since the last fetch, condition read or
    # output; a repeat means the run can never halt.
    seen: set = set()

    def result(status):
        return RunResult(status, "".join(out) if status is Status.HALTED else "", read, steps)

    while True:
        if steps >= budget:
            return result(Status.OUT_OF_BUDGET)
        if pc == len(instrs):
            if read == len(program):
                if prefix:
                    return result(Status.STUCK)
                steps += 1
                return result(Status.HALTED)
            node = trie
            while isinstance(node, dict):
                if read == len(program):
                    return result(Status.STUCK)
                node = node[program[read]]
                read += 1
            instrs.append(node)
            seen.clear()
        else:
            key = (pc, skip, "".join(stack))
            if key in seen:
                steps = budget
                return result(Status.OUT_OF_BUDGET)
            seen.add(key)

        op, arg = instrs[pc]
        if skip:
            skip = False
            pc += 1
            continue
        steps += 1
        if op is Op.HALT:
            if prefix and strict and read != len(program):
                return result(Status.STUCK)
            return result(Status.HALTED)
        if op is Op.OUT0 or op is Op.OUT1:
            out.append("1" if op is Op.OUT1 else "0")
            seen.clear()
        elif op is Op.RCOND:
            if cpos >= len(condition) or len(stack) >= depth:
                return result(Status.STUCK)
            stack.append(condition[cpos])
            cpos += 1
            seen.clear()
        elif op is Op.OUTS:
            if not stack:
                return result(Status.STUCK)
            out.append(stack.pop())
            seen.clear()
        elif op is Op.SKIPZ:
            if not stack:
                return result(Status.STUCK)
            skip = stack.pop() == "0"
        elif op is Op.SKIPE:
            skip = cpos >= len(condition)
        elif op is Op.JBACK:
            target = pc - (arg + 1)
            if target < 0:
                return result(Status.STUCK)
            pc = target
            continue
        pc += 1
