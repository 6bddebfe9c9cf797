"""Measured additive constants for every identity of the additivity theorem.

Each check walks an exhaustive range of strings or pairs, evaluates both
sides of an identity with time-bounded complexities and records the signed
difference per item.  Items touching an Infinity or out-of-domain value are
kept as exclusions, never dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .bitcodec import (CODEC_VERSION, all_strings, condition_encode, nat_to_bits,
                       pair_encode, selfdelim_decode, selfdelim_encode)
from .errors import Diverged, MalformedCode, MissingCondition, NotComputed, ScaleTooSmall
from .lab import Excluded, Lab, finite, guarded
from .machine import PREFIX, PLAIN, Status, run, run_stream

IDENTITIES = (
    "THM1", "THM1_UPPER", "THM1_LOWER_K", "THM1_LOWER_C", "PROP2",
    "COR_CKC", "COR_KKK", "COR_EMPTY_B", "COR_EMPTY_A", "COR_KC_EQ_CC", "COR_FUNC",
    "LEVIN_FP", "GACS_ID", "PREFIX_PAIR", "COUNTEREX", "PROP3_FP", "PROP3_SUMS",
    "REMARK_SCAN",
)
COROLLARIES = ("COR_CKC", "COR_KKK", "COR_EMPTY_B", "COR_EMPTY_A", "COR_KC_EQ_CC",
               "GACS_ID", "PREFIX_PAIR")


@dataclass
class Item:
    id: str
    deviation: int | float | None = None
    excluded_reason: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def included(self) -> bool:
        return self.excluded_reason is None


@dataclass
class DeviationReport:
    identity_id: str
    scale: dict
    machine_fingerprint: str
    items: list[Item]
    variant: str | None = None
    summary: dict = field(default_factory=dict)
    codec_version: int = CODEC_VERSION

    @property
    def included(self) -> list:
        return [i.deviation for i in self.items if i.included]

    @property
    def coverage(self) -> float:
        return len(self.included) / len(self.items) if self.items else 0.0

    @property
    def stats(self) -> dict | None:
        vals = self.included
        if not vals:
            return None
        return {"min": min(vals), "max": max(vals), "mean": sum(vals) / len(vals)}

    @property
    def max_abs(self):
        vals = self.included
        return max(abs(v) for v in vals) if vals else None


def pairs_upto(L: int):
    """All (a, b) with |a| + |b| <= L, by total length, then a, then b."""
    for total in range(L + 1):
        for la in range(total + 1):
            for a in all_strings(la, la):
                for b in all_strings(total - la, total - la):
                    yield a, b


def pair_id(a, b) -> str:
    return f"{a or 'ε'},{b or 'ε'}"


def _measure(tables: Lab, identity_id, L, keyed, fn, variant=None) -> DeviationReport:
    """Run ``fn`` over ``keyed`` = [(id, payload)] and collect a report.

    ``fn`` returns a deviation, or (deviation, extra dict).
    """
    keyed = list(keyed)
    results = tables.resolve(guarded(fn), [p for _, p in keyed])
    items = []
    for (ident, _), r in zip(keyed, results):
        if isinstance(r, Excluded):
            items.append(Item(ident, excluded_reason=r.reason))
        elif isinstance(r, tuple):
            items.append(Item(ident, r[0], extra=r[1]))
        else:
            items.append(Item(ident, r))
    return DeviationReport(identity_id, tables.scale(L), tables.fingerprint, items, variant)


def _pairs(L):
    return [(pair_id(a, b), (a, b)) for a, b in pairs_upto(L)]


def _singles(max_len):
    return [(x or "ε", x) for x in all_strings(max_len)]


# -- decomposition of pair complexity ---------------------------------------

def check_theorem1(tables: Lab, L: int) -> DeviationReport:
    """C(a,b) - [K(a | n) + C(b | a, n)] with n = C(a,b)."""
    def fn(ab):
        a, b = ab
        n = finite(tables.C(pair_encode(a, b)))
        k = finite(tables.K(a, n))
        c = finite(tables.C(b, a, n))
        return n - (k + c), {"n": n, "K_a_n": k, "C_b_an": c}
    return _measure(tables, "THM1", L, _pairs(L), fn)


def decode_concatenation(tables: Lab, description: str):
    """Decode d̄ · p · q back into a pair, following the upper-bound proof.

    Reads d, recovers n = |p| + |q| + d, runs the self-delimiting ``p`` on n
    to find where it ends and get ``a``, then runs ``q`` on (a, n).
    Returns (a, b) or None when any stage fails.
    """
    try:
        d_bits, rest = selfdelim_decode(description)
    except MalformedCode:
        return None
    d = int("1" + d_bits, 2) - 1
    n = len(rest) + d
    r = run_stream(tables.machines[PREFIX], rest, nat_to_bits(n), tables.T)
    if r.status is not Status.HALTED:
        return None
    q = rest[r.program_bits_read:]
    s = run(tables.machines[PLAIN], q, condition_encode([r.output, n]), tables.T)
    if s.status is not Status.HALTED:
        return None
    return r.output, s.output


def check_thm1_upper(tables: Lab, L: int) -> DeviationReport:
    """C(a,b) - (|p| + |q|) for the stored witnesses p, q.

    When the gap d is positive, the description d̄·p·q is assembled and
    decoded back; ``extra['verified']`` records whether it yields (a, b).
    """
    def fn(ab):
        a, b = ab
        n = finite(tables.C(pair_encode(a, b)))
        p = tables.witness(PREFIX, a, (n,))
        q = tables.witness(PLAIN, b, (a, n))
        if p is None or q is None:
            raise Excluded("Infinity")
        d = n - len(p) - len(q)
        extra = {"n": n, "p": p, "q": q}
        if d > 0:
            desc = selfdelim_encode(nat_to_bits(d)) + p + q
            extra["description_bits"] = len(desc)
            extra["verified"] = decode_concatenation(tables, desc) == (a, b)
        return d, extra
    return _measure(tables, "THM1_UPPER", L, _pairs(L), fn)


def _log2_floor(n):
    return n.bit_length() - 1


def _log2_ceil(n):
    return (n - 1).bit_length()


def check_thm1_lower(tables: Lab, L: int) -> tuple[DeviationReport, DeviationReport]:
    """The two halves of the counting argument.

    THM1_LOWER_K: K(a|n) - (n - floor(log2 N_a)) per (a, n).
    THM1_LOWER_C: C(b|a,n) - ceil(log2 N_a) per (a, b, n).
    """
    def n_of(ab):
        return finite(tables.C(pair_encode(*ab)))

    ns = tables.resolve(guarded(n_of), [ab for _, ab in _pairs(L)])
    rows_k, rows_c = [], []
    seen = set()
    for (ident, (a, b)), n in zip(_pairs(L), ns):
        if isinstance(n, Excluded):
            rows_c.append((f"{ident};n=∞", (a, b, None)))
            if (a, None) not in seen:
                seen.add((a, None))
                rows_k.append((f"{a or 'ε'};n=∞", (a, None)))
            continue
        rows_c.append((f"{ident};n={n}", (a, b, n)))
        if (a, n) not in seen:
            seen.add((a, n))
            rows_k.append((f"{a or 'ε'};n={n}", (a, n)))

    def fk(an):
        a, n = an
        if n is None:
            raise Excluded("Infinity")
        N = tables.slices(n)[a].count
        k = finite(tables.K(a, n))
        return k - (n - _log2_floor(N)), {"N_a": N, "K_a_n": k}

    def fc(abn):
        a, b, n = abn
        if n is None:
            raise Excluded("Infinity")
        sl = tables.slices(n)[a]
        c = finite(tables.C(b, a, n))
        return c - _log2_ceil(sl.count), {"N_a": sl.count, "ordinal": sl.ordinal_index[b], "C_b_an": c}

    rk = _measure(tables, "THM1_LOWER_K", L, rows_k, fk)
    rc = _measure(tables, "THM1_LOWER_C", L, rows_c, fc)
    counts = {}
    for n in sorted({n for n in ns if not isinstance(n, Excluded)}):
        total = sum(s.count for s in tables.slices(n).values())
        counts[n] = {"sum_N_a": total, "bound": 2 ** (n + 1)}
    rk.summary["counting_bound"] = counts
    return rk, rc


def check_prop2(tables: Lab, L: int) -> DeviationReport:
    """C(a,b) - [K(a | n) + C(b | a, m)] with m = K(a | n), n = C(a,b)."""
    def fn(ab):
        a, b = ab
        n = finite(tables.C(pair_encode(a, b)))
        m = finite(tables.K(a, n))
        c = finite(tables.C(b, a, m))
        return n - (m + c), {"n": n, "m": m, "C_b_am": c}
    return _measure(tables, "PROP2", L, _pairs(L), fn)


# -- corollaries --------------------------------------------------------------

def single_length(L: int) -> int:
    return L + 2


def check_corollaries(tables: Lab, L: int, single_len: int | None = None) -> list[DeviationReport]:
    """The seven corollary identities; singles up to ``single_len`` bits."""
    s = single_length(L) if single_len is None else single_len
    C, K = tables.C, tables.K

    def ckc(a):
        c = finite(C(a))
        return finite(C(pair_encode(a, nat_to_bits(c)))) - c

    def kkk(a):
        k = finite(K(a))
        return finite(K(pair_encode(a, nat_to_bits(k)))) - k

    def empty_b(a):
        c = finite(C(a))
        return c - finite(K(a, c))

    def empty_a(b):
        c = finite(C(b))
        return c - finite(C(b, c))

    def kc_eq_cc(u):
        c = finite(C(u))
        return finite(C(u, c)) - finite(K(u, c))

    def gacs(ab):
        n = finite(C(pair_encode(*ab)))
        return n - finite(K(pair_encode(*ab), n))

    def prefix_pair(ab):
        a, b = ab
        ka = finite(K(a))
        return finite(K(pair_encode(a, b))) - (ka + finite(K(b, a, ka)))

    return [
        _measure(tables, "COR_CKC", L, _singles(s), ckc),
        _measure(tables, "COR_KKK", L, _singles(s), kkk),
        _measure(tables, "COR_EMPTY_B", L, _singles(s), empty_b),
        _measure(tables, "COR_EMPTY_A", L, _singles(s), empty_a),
        _measure(tables, "COR_KC_EQ_CC", L, _singles(s), kc_eq_cc),
        _measure(tables, "GACS_ID", L, _pairs(L), gacs),
        _measure(tables, "PREFIX_PAIR", L, _pairs(L), prefix_pair),
    ]


BUILTIN_FUNCTIONS = {
    "identity": lambda b: b,
    "empty": lambda b: "",
    "length": lambda b: nat_to_bits(len(b)),
}


def check_function_corollary(tables: Lab, f, L: int, name: str | None = None,
                             single_len: int | None = None) -> DeviationReport:
    """C(b) - [K(f(b) | C(b)) + C(b | f(b), C(b))]."""
    if isinstance(f, str):
        name, f = f, BUILTIN_FUNCTIONS[f]
    s = single_length(L) if single_len is None else single_len

    def fn(b):
        c = finite(tables.C(b))
        fb = f(b)
        k = finite(tables.K(fb, c))
        r = finite(tables.C(b, fb, c))
        return c - (k + r), {"C_b": c, "K_fb_C": k, "C_b_fbC": r}
    return _measure(tables, "COR_FUNC", L, _singles(s), fn, variant=name)


def levin_fixed_point(tables: Lab, a: str, i_max: int):
    """Smallest i <= i_max with K(a | i) <= i, and the row describing it.

    Also lists every i above the crossing point where K(a|i) > i again; the
    window is the distance from i_star to the last such i.
    """
    ks = [tables.K(a, i) for i in range(i_max + 1)]
    i_star = next((i for i, k in enumerate(ks) if k <= i), None)
    c = tables.C(a)
    row = {"a": a, "i_star": i_star, "C_a": c, "K_a_i": [k if k != math.inf else None for k in ks]}
    if i_star is not None:
        flagged = [i for i in range(i_star + 1, i_max + 1) if ks[i] > i]
        row["flagged"] = flagged
        row["window"] = (flagged[-1] - i_star) if flagged else 0
        row["deviation"] = i_star - c if c != math.inf else None
    return i_star, row


def check_levin(tables: Lab, L: int, max_len: int | None = None, i_max: int | None = None) -> DeviationReport:
    """i_star - C(a) for every a with |a| <= max_len (default L + 1)."""
    max_len = L + 1 if max_len is None else max_len
    i_max = tables.P if i_max is None else i_max

    def fn(a):
        i_star, row = levin_fixed_point(tables, a, i_max)
        if i_star is None:
            raise Excluded("Infinity")
        finite(row["C_a"])
        return row.pop("deviation"), row
    return _measure(tables, "LEVIN_FP", L, _singles(max_len), fn)


# -- counterexample -----------------------------------------------------------

def reference_gap(n: int) -> float:
    return math.log2(n) - 2 * math.log2(math.log2(n))


def counterexample_search(tables: Lab, n_values, L: int | None = None) -> DeviationReport:
    """Trend table of the gap C(x,y) - C(x) - K(y|x) against log n - 2 log log n.

    For each n the pair (r, i), |r| = n, i < n, of largest finite
    C(<r, i>) is split as x = r[:i], y = r[i:] (first maximum in length-lex
    order of r, then i).  Rows with no finite candidate are excluded with
    reason ScaleTooSmall.  No sign is asserted.
    """
    def fn(n):
        best = None
        for r in all_strings(n, n):
            for i in range(n):
                try:
                    v = tables.C(pair_encode(r, nat_to_bits(i)))
                except MissingCondition:
                    raise
                except NotComputed:
                    continue
                if v != math.inf and (best is None or v > best[0]):
                    best = (v, r, i)
        if best is None:
            raise Excluded("ScaleTooSmall")
        v, r, i = best
        x, y = r[:i], r[i:]
        cxy = finite(tables.C(pair_encode(x, y)))
        cx = finite(tables.C(x))
        kyx = finite(tables.K(y, x))
        return cxy - cx - kyx, {"r": r, "i": i, "x": x, "y": y, "C_ri": v, "C_xy": cxy,
                                "C_x": cx, "K_y_x": kyx, "reference": reference_gap(n)}
    n_values = list(n_values)
    report = _measure(tables, "COUNTEREX", L, [(f"n={n}", n) for n in n_values], fn)
    if not report.included:
        raise ScaleTooSmall(f"no finite entries for any n in {n_values}")
    report.scale["n_values"] = n_values
    return report


def counterexample_scan(tables: Lab, L: int) -> list[tuple[str, str, int]]:
    """Every pair at scale L with C(x,y) > C(x) + K(y|x), with the excess."""
    def fn(xy):
        x, y = xy
        return finite(tables.C(pair_encode(x, y))) - finite(tables.C(x)) - finite(tables.K(y, x))
    pairs = list(pairs_upto(L))
    out = tables.resolve(guarded(fn), pairs)
    return [(x, y, g) for (x, y), g in zip(pairs, out) if not isinstance(g, Excluded) and g > 0]


# -- the (k, l) fixed point and its frontier ----------------------------------

def fixed_point_kl(tables: Lab, x: str, y: str, max_iter: int = 64):
    """Iterate F(k, l) = (C(x|l), C(y|x,k)) from (C(x|0), C(y|x,0)).

    Stops at the first repeated point or after ``max_iter`` points.  Returns
    (k, l, residual, trace) where (k, l) minimises the residual
    |k - C(x|l)| + |l - C(y|x,k)| over the final cycle (over the whole trace
    if no cycle was closed), ties going to the smaller (k, l).
    """
    def F(k, l):
        nk, nl = tables.C(x, l), tables.C(y, x, k)
        if nk == math.inf or nl == math.inf:
            raise Diverged(f"F({k},{l}) has no finite value for ({x or 'ε'}, {y or 'ε'})")
        return nk, nl

    cx0, cy0 = tables.C(x, 0), tables.C(y, x, 0)
    if cx0 == math.inf or cy0 == math.inf:
        raise Diverged("no finite starting point")
    trace = [(cx0, cy0)]
    cycle = None
    while len(trace) < max_iter:
        nxt = F(*trace[-1])
        if nxt in trace:
            cycle = trace[trace.index(nxt):]
            break
        trace.append(nxt)
    candidates = cycle if cycle is not None else trace

    def residual(p):
        f = F(*p)
        return abs(p[0] - f[0]) + abs(p[1] - f[1])

    k, l = min(candidates, key=lambda p: (residual(p), p))
    return k, l, residual((k, l)), trace


def check_prop3_sums(tables: Lab, x: str, y: str, k: int, l: int) -> dict:
    """C(<x,y>|k,l), C(<x,y>|k), C(<x,y>|l), each minus k + l."""
    t = pair_encode(x, y)
    return {
        "kl": tables.C(t, k, l) - (k + l),
        "k": tables.C(t, k) - (k + l),
        "l": tables.C(t, l) - (k + l),
    }


def check_prop3(tables: Lab, L: int, max_iter: int = 64) -> tuple[DeviationReport, DeviationReport]:
    """PROP3_FP: residual of the fixed point per pair.  PROP3_SUMS: the three
    sum identities on every pair whose fixed point has residual 0."""
    def fp(ab):
        try:
            k, l, res, trace = fixed_point_kl(tables, *ab, max_iter=max_iter)
        except Diverged:
            raise Excluded("Infinity")
        return res, {"k": k, "l": l, "steps": len(trace), "trace": trace}

    rep_fp = _measure(tables, "PROP3_FP", L, _pairs(L), fp)
    keyed = []
    for (ident, (a, b)), item in zip(_pairs(L), rep_fp.items):
        if item.included and item.deviation == 0:
            k, l = item.extra["k"], item.extra["l"]
            for which in ("kl", "k", "l"):
                keyed.append((f"{ident}|{which};k={k},l={l}", (a, b, k, l, which)))

    def sums(row):
        a, b, k, l, which = row
        v = check_prop3_sums(tables, a, b, k, l)[which]
        return finite(v)

    rep_sums = _measure(tables, "PROP3_SUMS", L, keyed, sums)
    return rep_fp, rep_sums


def pareto_frontier(points):
    """Coordinate-wise minimal elements of a set of integer pairs."""
    pts = sorted(set(points))
    front = []
    best_l = math.inf
    for k, l in pts:
        if l < best_l:
            front.append((k, l))
            best_l = l
    return front


def remark_scan(tables: Lab, x: str, y: str, box: int, fixed_point=None) -> dict:
    """All (k', l') in [0, box]^2 with C(x|l') <= k' and C(y|x,k') <= l'."""
    cx = [tables.C(x, l) for l in range(box + 1)]
    cy = [tables.C(y, x, k) for k in range(box + 1)]
    feasible = [(k, l) for k in range(box + 1) for l in range(box + 1) if cx[l] <= k and cy[k] <= l]
    front = pareto_frontier(feasible)
    out = {"feasible": len(feasible), "frontier": front}
    if fixed_point is not None:
        fk, fl = fixed_point
        if fixed_point in front:
            pos = "on_frontier"
        elif any(k <= fk and l <= fl for k, l in front):
            pos = "dominated"
        elif fk > box or fl > box:
            pos = "outside_box"
        else:
            pos = "infeasible"
        out["fixed_point"] = list(fixed_point)
        out["position"] = pos
    return out


def check_remark(tables: Lab, L: int, box: int = 16, max_iter: int = 64) -> DeviationReport:
    """Per pair: (k + l) of the fixed point minus the least k' + l' on the frontier."""
    def fn(ab):
        try:
            k, l, res, _ = fixed_point_kl(tables, *ab, max_iter=max_iter)
        except Diverged:
            raise Excluded("Infinity")
        scan = remark_scan(tables, *ab, box, fixed_point=(k, l))
        if not scan["frontier"]:
            raise Excluded("Infinity")
        best = min(a + b for a, b in scan["frontier"])
        scan["residual"] = res
        return (k + l) - best, scan
    rep = _measure(tables, "REMARK_SCAN", L, _pairs(L), fn)
    rep.scale["box"] = box
    return rep

