import math
import statistics
from types import SimpleNamespace

import pytest
from hypothesis import given, strategies as st

from klab.bitcodec import nat_to_bits, pair_encode
from klab.errors import ScaleTooSmall
from klab.lab import Lab
from klab.machine import PLAIN, PREFIX, reference_machine
from klab.theorems import (IDENTITIES, check_function_corollary, check_levin, check_prop2,
                           check_prop3, check_remark, check_theorem1, check_thm1_lower,
                           check_thm1_upper, counterexample_search, decode_concatenation,
                           fixed_point_kl, levin_fixed_point, pair_id, pairs_upto,
                           pareto_frontier, remark_scan)

from conftest import brute_complexity

AB = pair_encode("1", "0")


def test_identity_ids():
    assert len(IDENTITIES) == len(set(IDENTITIES)) == 18


def test_pairs_upto_counts():
    for L in range(6):
        pairs = list(pairs_upto(L))
        assert len(pairs) == sum((t + 1) * 2**t for t in range(L + 1))
        assert len(set(pairs)) == len(pairs)
    assert pair_id("", "") == "ε,ε"


# -- arithmetic on stub tables ----------------------------------------------

def test_thm1_arithmetic(stub):
    t = stub(c={(AB, ()): 7, ("0", ("1", 7)): 4}, k={("1", (7,)): 3})
    rep = check_theorem1(t, 2)
    item = {i.id: i for i in rep.items}["1,0"]
    assert item.deviation == 0
    assert item.extra == {"n": 7, "K_a_n": 3, "C_b_an": 4}
    # every other pair is missing from the stub
    assert sum(i.included for i in rep.items) == 1
    assert {i.excluded_reason for i in rep.items if not i.included} == {"NotComputed"}


def test_thm1_infinity_excluded(stub):
    t = stub(c={(AB, ()): math.inf})
    item = {i.id: i for i in check_theorem1(t, 2).items}["1,0"]
    assert item.excluded_reason == "Infinity"


def test_upper_bound_arithmetic(stub):
    t = stub(c={(AB, ()): 9, ("0", ("1", 9)): 4}, k={("1", (9,)): 3})
    t.witnesses = {(PREFIX, "1", (9,)): "101", (PLAIN, "0", ("1", 9)): "0000"}
    t.machines = {PLAIN: reference_machine(PLAIN), PREFIX: reference_machine(PREFIX)}
    item = {i.id: i for i in check_thm1_upper(t, 2).items}["1,0"]
    assert item.deviation == 2
    assert item.extra["description_bits"] == len("0001") + 7
    assert item.extra["verified"] is False


def _stub_slices(counts):
    return lambda n: {a: SimpleNamespace(count=N, ordinal_index={"0": 0}) for a, N in counts.items()}


@pytest.mark.parametrize("j", [0, 1, 3, 5])
def test_lower_bound_arithmetic(stub, j):
    t = stub(c={(AB, ()): 12, ("0", ("1", 12)): 6}, k={("1", (12,)): 9})
    t.slices = _stub_slices({"1": 2**j})
    rk, rc = check_thm1_lower(t, 2)
    k_item = {i.id: i for i in rk.items}["1;n=12"]
    c_item = {i.id: i for i in rc.items}["1,0;n=12"]
    assert k_item.deviation == 9 - (12 - j)
    assert c_item.deviation == 6 - j
    assert rk.summary["counting_bound"][12] == {"sum_N_a": 2**j, "bound": 2**13}


def test_lower_bound_log_rounding(stub):
    t = stub(c={(AB, ()): 12, ("0", ("1", 12)): 6}, k={("1", (12,)): 9})
    t.slices = _stub_slices({"1": 5})
    rk, rc = check_thm1_lower(t, 2)
    assert {i.id: i for i in rk.items}["1;n=12"].deviation == 9 - (12 - 2)
    assert {i.id: i for i in rc.items}["1,0;n=12"].deviation == 6 - 3


def test_prop2_arithmetic(stub):
    t = stub(c={(AB, ()): 8, ("0", ("1", 3)): 2}, k={("1", (8,)): 3})
    assert {i.id: i for i in check_prop2(t, 2).items}["1,0"].deviation == 3


def test_levin_constant_k(stub):
    t = stub(c={("1", ()): 4}, k={("1", (i,)): 5 for i in range(25)})
    i_star, row = levin_fixed_point(t, "1", 24)
    assert i_star == 5
    assert row["flagged"] == [] and row["window"] == 0
    assert row["deviation"] == 1


def test_levin_window(stub):
    ks = {0: 9, 1: 9, 2: 2, 3: 9, 4: 9, 5: 3, 6: 3}
    t = stub(c={("1", ()): 2}, k={("1", (i,)): v for i, v in ks.items()})
    i_star, row = levin_fixed_point(t, "1", 6)
    assert i_star == 2
    assert row["flagged"] == [3, 4]
    assert row["window"] == 2


def test_fixed_point_constant_map(stub):
    c = {("x", (l,)): 3 for l in range(10)}
    c.update({("y", ("x", k)): 4 for k in range(10)})
    k, l, res, trace = fixed_point_kl(stub(c=c), "x", "y")
    assert (k, l, res) == (3, 4, 0)
    assert len(trace) == 1


def test_fixed_point_two_cycle(stub):
    # C(x|l) alternates 1, 2 with the parity of l and C(y|x,k) = k, which
    # gives a 4-cycle with residual 1 everywhere; ties go to the smallest point
    c = {("x", (l,)): (1 if l % 2 == 0 else 2) for l in range(5)}
    c.update({("y", ("x", k)): k for k in range(5)})
    k, l, res, trace = fixed_point_kl(stub(c=c), "x", "y")
    assert trace == [(1, 0), (1, 1), (2, 1), (2, 2), (1, 2)]
    assert res == 1
    assert (k, l) == (1, 1)


def test_remark_box_zero(stub):
    c = {("x", (0,)): 0, ("y", ("x", 0)): 0}
    scan = remark_scan(stub(c=c), "x", "y", 0, fixed_point=(0, 0))
    assert scan["feasible"] <= 1
    assert scan["frontier"] == [(0, 0)]
    assert scan["position"] == "on_frontier"


@given(st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), max_size=40))
def test_frontier_is_minimal_antichain(points):
    front = pareto_frontier(points)
    for p in front:
        assert not any(q != p and q[0] <= p[0] and q[1] <= p[1] for q in points)
    for q in points:
        assert any(p[0] <= q[0] and p[1] <= q[1] for p in front)


def test_stats_recount(stub):
    c = {(pair_encode(a, b), ()): 4 + len(a) + 2 * len(b) for a, b in pairs_upto(2)}
    t = stub(c=c, k={})
    for a, b in pairs_upto(2):
        n = c[pair_encode(a, b), ()]
        t.k[a, (n,)] = 3 + len(a)
        t.c[b, (a, n)] = len(b) + (1 if a else 0)
    rep = check_theorem1(t, 2)
    devs = [i.deviation for i in rep.items]
    assert rep.coverage == 1.0
    assert rep.stats == {"min": min(devs), "max": max(devs), "mean": statistics.mean(devs)}
    assert rep.max_abs == max(map(abs, devs))


# -- against the reference tables --------------------------------------------

def test_thm1_empty_pair_against_brute_force(lab):
    item = {i.id: i for i in check_theorem1(lab, 0).items}["ε,ε"]
    n, _ = brute_complexity(PLAIN, pair_encode("", ""))
    k, _ = brute_complexity(PREFIX, "", (n,))
    c, _ = brute_complexity(PLAIN, "", ("", n))
    assert (n, k, c) == (4, 3, 0)
    assert item.deviation == n - k - c == 1


def test_upper_bound_descriptions_decode(lab):
    rep = check_thm1_upper(lab, 3)
    positive = [i for i in rep.items if i.included and i.deviation > 0]
    assert positive
    assert all(i.extra["verified"] for i in positive)
    for i in rep.items:
        assert i.deviation == i.extra["n"] - len(i.extra["p"]) - len(i.extra["q"])


def test_decode_rejects_garbage(lab):
    assert decode_concatenation(lab, "10") is None
    assert decode_concatenation(lab, "0001" + "1100") is None


def test_empty_function_specialization(lab):
    rep = check_function_corollary(lab, "empty", 2)
    for item in rep.items:
        b = "" if item.id == "ε" else item.id
        c = lab.C(b)
        assert item.deviation == c - lab.K("", c) - lab.C(b, "", c)


def test_length_function_specialization(lab):
    rep = check_function_corollary(lab, lambda b: nat_to_bits(len(b)), 2, name="len")
    assert rep.variant == "len" and rep.coverage == 1.0


def test_levin_against_direct_scan(lab):
    rep = check_levin(lab, 2)
    for item in rep.items:
        a = "" if item.id == "ε" else item.id
        ks = [lab.K(a, i) for i in range(lab.P + 1)]
        i_star = min(i for i, k in enumerate(ks) if k <= i)
        assert item.extra["i_star"] == i_star
        assert item.deviation == i_star - lab.C(a)


def test_counterexample_scale(lab):
    rep = counterexample_search(lab, [2, 4, 8])
    by_n = {i.id: i for i in rep.items}
    assert by_n["n=8"].excluded_reason == "ScaleTooSmall"
    assert by_n["n=2"].included and by_n["n=4"].included
    with pytest.raises(ScaleTooSmall):
        counterexample_search(lab, [8])


def test_prop3_residual_recomputed(lab):
    fp, sums = check_prop3(lab, 2)
    for item in fp.items:
        k, l = item.extra["k"], item.extra["l"]
        a, b = ("" if s == "ε" else s for s in item.id.split(","))
        assert item.deviation == abs(k - lab.C(a, l)) + abs(l - lab.C(b, a, k))
        assert item.extra["steps"] <= 64
    assert len(sums.items) == 3 * sum(1 for i in fp.items if i.deviation == 0)


def test_remark_report(lab):
    rep = check_remark(lab, 1)
    assert rep.scale["box"] == 16
    for item in rep.items:
        front = item.extra["frontier"]
        assert pareto_frontier(front) == front


def test_cache_is_transparent(tmp_path):
    first = Lab(16, 256, cache_dir=tmp_path)
    a = check_theorem1(first, 1)
    first.save()
    second = Lab(16, 256, cache_dir=tmp_path)
    b = check_theorem1(second, 1)
    assert second.rows_built == 0
    assert [(i.id, i.deviation, i.excluded_reason) for i in a.items] == \
        [(i.id, i.deviation, i.excluded_reason) for i in b.items]


def test_fixed_point_empty_pair(lab):
    # the empty program halts at once in plain mode, so every value is 0
    assert brute_complexity(PLAIN, "", (0,), P=4)[0] == 0
    k, l, res, trace = fixed_point_kl(lab, "", "")
    assert (k, l, res) == (0, 0, 0)
    assert trace == [(0, 0)]


@pytest.mark.parametrize("x", ["0", "11", "0110", "10101"])
def test_frontier_reaches_zero_for_empty_y(lab, x):
    start = lab.C(x, 0)
    scan = remark_scan(lab, x, "", 16)
    assert start <= 16
    assert (start, 0) in scan["frontier"]
