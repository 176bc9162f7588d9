import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merit import workloads
from merit.interconnect import (CROSS, THROUGH, apply_bit_hash, butterfly_route, deliver, is_xor_permutation,
                                simulate_fetch)
from merit.layout import Grouping, HashConfig, ScratchLayout, naive_grouping


def test_identity_is_all_through():
    cfg = butterfly_route(8, range(8))
    assert all(s == THROUGH for stage in cfg.stages for s in stage)


def test_xor_permutation_settings_follow_bits():
    cfg = butterfly_route(8, [n ^ 5 for n in range(8)])
    want = [CROSS, THROUGH, CROSS]  # bits 0 and 2 of 5 are set
    for stage, setting in zip(cfg.stages, want):
        assert set(stage) == {setting}


def test_non_permutation_rejected():
    with pytest.raises(ValueError):
        butterfly_route(4, [1, 0, 0, 3])
    with pytest.raises(ValueError):
        butterfly_route(6, range(6))


def test_unroutable_permutation():
    # ALUs 0 and 2 both need line 0 after the first stage
    assert butterfly_route(4, [0, 2, 1, 3]) is None


@pytest.mark.parametrize("n", [2, 4, 8])
def test_routing_is_exact_when_routable(n):
    routable = 0
    for perm in itertools.permutations(range(n)):
        cfg = butterfly_route(n, perm)
        if cfg is None:
            continue
        routable += 1
        assert deliver(cfg, [f"bank{b}" for b in range(n)]) == [f"bank{b}" for b in perm]
    # a log2(N)-stage network has N/2 * log2(N) switches
    assert routable == 2 ** (n // 2 * (n.bit_length() - 1))


@settings(max_examples=50, deadline=None)
@given(bits=st.integers(1, 5), k=st.integers(0, 31))
def test_xor_permutations_always_route(bits, k):
    n = 1 << bits
    perm = [i ^ (k % n) for i in range(n)]
    assert is_xor_permutation(perm)
    cfg = butterfly_route(n, perm)
    assert deliver(cfg, list(range(n))) == perm


def test_bank_sequence_of_regular_pattern_routes():
    perm = [3, 4, 1, 2, 7, 0, 5, 6]
    assert not is_xor_permutation(perm)
    cfg = butterfly_route(8, perm)
    assert cfg is not None and deliver(cfg, list(range(8))) == perm


def test_apply_bit_hash():
    assert apply_bit_hash(13, HashConfig.identity(3, 4), 3) == 5
    assert apply_bit_hash(3, HashConfig(((1, 0, 0, 0), (0, 1, 1, 0), (0, 0, 1, 1)), 1), 3) == 5
    with pytest.raises(ValueError):
        apply_bit_hash(-1, HashConfig.identity(3))
    with pytest.raises(ValueError):
        apply_bit_hash(1, HashConfig.identity(3), 2)


def conv8_tile4():
    return workloads.build("conv2d", {"h": 8, "w": 8, "k": 3}, seed=6)


def test_fetch_conflict_free_grouping():
    w = conv8_tile4()
    group = Grouping(((1, 0), (0, 0), (0, 1))).first((4, 4))
    verdicts = simulate_fetch(w.viewA, w.srcA, (4, 4), (3, 3), ScratchLayout(), group, 8)
    assert [v.verdict for v in verdicts] == ["OK"] * 9


def test_fetch_naive_grouping_stalls():
    w = conv8_tile4()
    group = naive_grouping((4, 4), 8).first((4, 4))
    verdicts = simulate_fetch(w.viewA, w.srcA, (4, 4), (3, 3), ScratchLayout(), group, 8)
    assert all(v.verdict == "STALL" and v.reason == "bank conflict" for v in verdicts)


def test_fetch_padded_layout_and_interior_tile():
    w = conv8_tile4()
    group = naive_grouping((4, 4), 8).first((4, 4))
    verdicts = simulate_fetch(w.viewA, w.srcA, (4, 4), (3, 3), ScratchLayout(6), group, 8, k_start=(4, 4, 0, 0))
    assert [v.verdict for v in verdicts] == ["OK"] * 9


def test_fetch_single_alu():
    w = conv8_tile4()
    verdicts = simulate_fetch(w.viewA, w.srcA, (1, 1), (3, 3), ScratchLayout(), [(0, 0)], 1)
    assert [v.verdict for v in verdicts] == ["OK"] * 9


def test_fetch_needs_one_alu_per_bank():
    w = conv8_tile4()
    with pytest.raises(ValueError):
        simulate_fetch(w.viewA, w.srcA, (4, 4), (3, 3), ScratchLayout(), [(0, 0)], 8)
