"""Compiled depth-first enumeration of all programs up to P bits.

Programs sharing a prefix share their execution up to the point where the
machine fetches an instruction past the buffered prefix, so the search walks
the tree of instruction sequences and runs each edge once.  Semantics match
:func:`klab.machine.run` exactly; ``tests/test_enumerator.py`` checks the two
against each other by brute force.

Pruning is exact for table building: output is append-only, so a branch whose
output outgrows the target universe can never produce a target; a repeated
(pc, skip, stack) state with no progress in between never halts.
"""
import numpy as np
from numba import njit

from .machine import Op

HALT, OUT0, OUT1, RCOND, OUTS, SKIPZ, SKIPE, JBACK = (int(o) for o in Op)
NO_WITNESS = np.iinfo(np.int16).max


@njit(cache=True)
def search(w_len, w_bits, w_op, w_arg, prefix, cond, max_bits, budget,
           max_out, depth, best_len, best_bits, collect, h_len, h_bits, h_olen, h_obits):
    """Enumerate programs of at most ``max_bits`` bits on one condition.

    When ``collect`` is false, ``best_len``/``best_bits`` (indexed by the
    length-lex index of the output) receive the shortest, then lex-smallest,
    halting program per output of length <= ``max_out``.  When true, every
    halting program is appended to the ``h_*`` arrays instead, with no output
    pruning.  Returns the number of collected programs.
    """
    nw = w_len.shape[0]
    clen = cond.shape[0]
    max_instr = max_bits // 2 + 2
    instr_op = np.zeros(max_instr, np.int64)
    instr_arg = np.zeros(max_instr, np.int64)
    f_steps = np.zeros(max_instr, np.int64)
    f_ssize = np.zeros(max_instr, np.int64)
    f_sbits = np.zeros(max_instr, np.int64)
    f_cpos = np.zeros(max_instr, np.int64)
    f_olen = np.zeros(max_instr, np.int64)
    f_obits = np.zeros(max_instr, np.int64)
    f_skip = np.zeros(max_instr, np.int64)
    f_blen = np.zeros(max_instr, np.int64)
    f_bbits = np.zeros(max_instr, np.int64)
    f_next = np.zeros(max_instr, np.int64)
    codes = 2 << depth
    seen = np.zeros((max_instr + 1) * 2 * codes, np.int64)
    gen = 0
    nh = 0

    if budget <= 0:
        return 0
    if not prefix:
        if collect:
            h_len[nh] = 0
            h_bits[nh] = 0
            h_olen[nh] = 0
            h_obits[nh] = 0
            nh += 1
        else:
            best_len[0] = 0
            best_bits[0] = 0
    d = 0
    while d >= 0:
        c = f_next[d]
        if c >= nw:
            d -= 1
            continue
        f_next[d] = c + 1
        blen = f_blen[d] + w_len[c]
        if blen > max_bits:
            continue
        bbits = (f_bbits[d] << w_len[c]) | w_bits[c]
        steps = f_steps[d]
        ssize = f_ssize[d]
        sbits = f_sbits[d]
        cpos = f_cpos[d]
        olen = f_olen[d]
        obits = f_obits[d]
        skip = f_skip[d]
        instr_op[d] = w_op[c]
        instr_arg[d] = w_arg[c]
        ni = d + 1
        pc = d
        gen += 1
        fresh = False
        halted = False
        # The budget check for this fetch already passed at the parent node.
        while True:
            if skip:
                skip = 0
                pc += 1
            else:
                op = instr_op[pc]
                steps += 1
                if op == HALT:
                    halted = True
                    break
                elif op == OUT0 or op == OUT1:
                    olen += 1
                    obits = (obits << 1) | (op - OUT0)
                    if olen > max_out and not collect:
                        break
                    gen += 1
                    pc += 1
                elif op == RCOND:
                    if cpos >= clen or ssize >= depth:
                        break
                    sbits = (sbits << 1) | cond[cpos]
                    ssize += 1
                    cpos += 1
                    gen += 1
                    pc += 1
                elif op == OUTS:
                    if ssize == 0:
                        break
                    olen += 1
                    obits = (obits << 1) | (sbits & 1)
                    sbits >>= 1
                    ssize -= 1
                    if olen > max_out and not collect:
                        break
                    gen += 1
                    pc += 1
                elif op == SKIPZ:
                    if ssize == 0:
                        break
                    if (sbits & 1) == 0:
                        skip = 1
                    sbits >>= 1
                    ssize -= 1
                    pc += 1
                elif op == SKIPE:
                    if cpos >= clen:
                        skip = 1
                    pc += 1
                else:
                    pc -= instr_arg[pc] + 1
                    if pc < 0:
                        break
            # next cycle
            if steps >= budget:
                break
            if pc == ni:
                fresh = True
                break
            key = ((pc * 2 + skip) * codes) + ((1 << ssize) | sbits)
            if seen[key] == gen:
                break
            seen[key] = gen

        if halted or (fresh and not prefix):
            if collect:
                h_len[nh] = blen
                h_bits[nh] = bbits
                h_olen[nh] = olen
                h_obits[nh] = obits
                nh += 1
            elif olen <= max_out:
                idx = (1 << olen) - 1 + obits
                if blen < best_len[idx] or (blen == best_len[idx] and bbits < best_bits[idx]):
                    best_len[idx] = blen
                    best_bits[idx] = bbits
        if fresh:
            d = ni
            f_steps[d] = steps
            f_ssize[d] = ssize
            f_sbits[d] = sbits
            f_cpos[d] = cpos
            f_olen[d] = olen
            f_obits[d] = obits
            f_skip[d] = skip
            f_blen[d] = blen
            f_bbits[d] = bbits
            f_next[d] = 0
    return nh
