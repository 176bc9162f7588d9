import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merit.errors import DivByZero, IllegalInstruction, LutRange
from merit.rip import (AluInstr, LaneMachine, LookupTable, StrategyProgram, alu_op, asm, lut_eval, phase_range,
                       phase_sequence, rip_execute, segment_name)
from merit.tensor import FIX16_MAX, FIX16_MIN, REAL32, fix16

DOT = StrategyProgram.build(["MOVC r0 #0"], "MAC r0 r0 a b", ["MAX o0 r0 r0"], constants=(0,))
RELU = StrategyProgram.build(["MOVC r0 #0"], "MAC r0 r0 a b", ["MAX o0 r0 c0"], constants=(0,))


def names(depth, rng):
    return tuple(segment_name(depth, s) for s in rng)


@pytest.mark.parametrize("k,want", [((0, 0), ("Pre_1", "Body")), ((2, 2), ("Body", "Post_1")),
                                    ((1, 0), ("Pre_2", "Body")), ((1, 1), ("Body", "Body")),
                                    ((0, 2), ("Body", "Post_2"))])
def test_phase_range_examples(k, want):
    first, last = phase_range((3, 3), k)
    assert (segment_name(2, first), segment_name(2, last)) == want


def test_phase_sequence_counts():
    seq = phase_sequence((3, 4))
    segs = [s for _, s in seq]
    assert segs.count("Body") == 12
    assert segs.count("Pre_1") == segs.count("Post_1") == 1
    assert segs.count("Pre_2") == segs.count("Post_2") == 3
    assert phase_sequence(()) == [((), "Body")]


def test_dot_product():
    a, b = [1, 2], [3, 4]
    assert rip_execute(DOT, (2,), lambda k: a[k[0]], lambda k: b[k[0]]) == [11]


def test_relu_clamps_negative():
    a, b = [1, 2], [-3, -1]
    assert rip_execute(RELU, (2,), lambda k: a[k[0]], lambda k: b[k[0]]) == [0]


def test_l1_distance():
    prog = StrategyProgram.build(["MOVC r0 #0", ""], "L1 r0 r0 a b", ["MAX o0 r0 r0", ""], constants=(0,))
    A, B = np.array([[1, 2], [3, 4]]), np.array([[4, 3], [2, 1]])
    assert rip_execute(prog, (2, 2), lambda k: A[k], lambda k: B[k]) == [8]


@pytest.mark.parametrize("op,args,s,dtype,want", [
    ("MAC", (10, 3, 4), 0, REAL32, 22),
    ("MAC", (0, 256, 256), 8, fix16(8), 256),
    ("L1", (5, 2, 9), 0, REAL32, 12),
    ("ADD", (1, 2, 3), 1, REAL32, 3.5),
    ("SUB", (0, -7, 0), 1, fix16(8), -4),  # floor shift
    ("MAX", (2, 5, 0), 0, REAL32, 5),
    ("MIN", (2, 5, 0), 0, REAL32, 2),
    ("SEL", (0, 7, 9), 0, REAL32, 9),
    ("SEL", (1, 7, 9), 0, fix16(8), 7),
    ("BXOR", (6, 3, 0), 0, fix16(8), 5),
    ("BNOT", (0, 0, 0), 0, fix16(8), -1),
    ("DIV", (1, 4, 0), 0, REAL32, 0.25),
])
def test_alu_ops(op, args, s, dtype, want):
    assert alu_op(op, *args, s=s, dtype=dtype) == want


def test_fix16_saturates():
    assert alu_op("MAC", FIX16_MAX, 256, 256, s=8, dtype=fix16(8)) == FIX16_MAX
    assert alu_op("SUB", FIX16_MIN, 0, 1, dtype=fix16(8)) == FIX16_MIN


def test_div_rules():
    with pytest.raises(IllegalInstruction):
        alu_op("DIV", 1, 2, dtype=fix16(8))
    with pytest.raises(DivByZero):
        alu_op("DIV", 1, 0)


def test_lut():
    t = LookupTable((0.0, 10.0, 20.0), 0.0, 2.0)
    assert lut_eval(t, 0.5) == 5.0
    assert lut_eval(t, 2.0) == 20.0
    with pytest.raises(LutRange):
        lut_eval(t, 2.5)
    ext = LookupTable((0.0, 10.0, 20.0), 0.0, 2.0, extrapolate=True)
    assert lut_eval(ext, 3.0) == 30.0
    fixed = LookupTable((0, 256, 512), 0, 512)
    assert lut_eval(fixed, 128, fix16(8)) == 128


def test_asm_and_str():
    ins = asm("MAC r0 r0 a b >>8")
    assert ins == AluInstr("MAC", "r0", "r0", "a", "b", 8, 0)
    assert str(ins) == "MAC r0 r0 a b >>8"
    assert asm("LUT r4, r3 #1") == AluInstr("LUT", "r4", "r3", None, None, 0, 1)


@pytest.mark.parametrize("bad", [
    lambda: StrategyProgram.build([], "MAX r0 r0 r0 >>2", []),  # shift on a non-shift op
    lambda: StrategyProgram.build([], "MAC r16 r0 a b", []),
    lambda: StrategyProgram.build([], "MAC o1 r0 a b", []),
    lambda: StrategyProgram.build([], "ADD r0 o0 a b", []),
    lambda: StrategyProgram.build([], "MOVC r0 #0", []),  # empty constant pool
    lambda: StrategyProgram.build([], "LUT r0 a #0", []),
    lambda: StrategyProgram.build([], "FMA r0 a b", []),
    lambda: StrategyProgram(1, [[]]),
])
def test_illegal_programs(bad):
    with pytest.raises(IllegalInstruction):
        bad()


def test_div_rejected_in_fix16_machine():
    prog = StrategyProgram.build([""], "DIV r0 a b", ["MAX o0 r0 r0"])
    with pytest.raises(IllegalInstruction):
        LaneMachine(prog, (2,), fix16(8), 1)


def test_json_round_trip():
    prog = StrategyProgram.build(["MOVC r0 #0", "IDX r1 #2"], "MAC r0 r0 a b >>4", ["LUT o0 r0 #0", ""],
                                 constants=(0,), tables=(LookupTable((0, 1), 0, 1, True),))
    assert StrategyProgram.from_json(prog.to_json()) == prog


def test_flattened_tables():
    stream, starts, ends = DOT.flattened()
    assert len(stream) == 3
    assert starts == (0, 1, 2) and ends == (1, 2, 3)


def test_idx_reads_indices():
    prog = StrategyProgram.build(["MOVC r0 #0"], "IDX r1 #1; ADD r0 r0 r1 c0", ["IDX o1 #0; MAX o0 r0 r0"],
                                 constants=(0,), outputs=2)
    m = LaneMachine(prog, (4,), REAL32, 3, [np.array([5, 6, 7])])
    for k in range(4):
        m.step((k,), np.zeros(3), np.zeros(3))
    out = m.result()
    assert out.shape == (3, 1, 2)
    assert list(out[:, 0, 0]) == [6, 6, 6]  # 0 + 1 + 2 + 3
    assert list(out[:, 0, 1]) == [5, 6, 7]


@settings(max_examples=60, deadline=None)
@given(shape=st.lists(st.integers(1, 4), min_size=1, max_size=3), seed=st.integers(0, 1000))
def test_fix16_dot_matches_python(shape, seed):
    rng = np.random.default_rng(seed)
    A = rng.integers(-400, 400, size=shape)
    B = rng.integers(-400, 400, size=shape)
    depth = len(shape)
    prog = StrategyProgram.build(["MOVC r0 #0"] + [""] * (depth - 1), "MAC r0 r0 a b >>8",
                                 ["MAX o0 r0 r0"] + [""] * (depth - 1), constants=(0,))
    acc = 0
    for x, y in zip(A.reshape(-1), B.reshape(-1)):
        acc = min(max(acc + ((int(x) * int(y)) >> 8), FIX16_MIN), FIX16_MAX)
    got = rip_execute(prog, tuple(shape), lambda k: A[k], lambda k: B[k], dtype=fix16(8))
    assert got == [acc]
