import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merit.errors import BadMagic, OutOfRange, TruncatedPayload, UnknownDtype
from merit.tensor import (FIX16_MAX, FIX16_MIN, REAL32, Tensor, fix16, from_bytes, ndrange, parse_dtype,
                          read_tensor, tensor_at, to_bytes, write_tensor)


@pytest.mark.parametrize("shape,data,idx,want", [
    ((2, 3), (0, 1, 2, 3, 4, 5), (1, 0), 3),
    ((4,), (7, 7, 7, 7), (2,), 7),
    ((2, 2), (1, 2, 3, 4), (1, 1), 4),
])
def test_tensor_at_row_major(shape, data, idx, want):
    assert tensor_at(Tensor(shape, REAL32, data), idx) == want


def test_tensor_at_out_of_range():
    t = Tensor((2, 2), REAL32, range(4))
    with pytest.raises(OutOfRange):
        tensor_at(t, (2, 0))
    with pytest.raises(OutOfRange):
        tensor_at(t, (0,))


def test_tensor_is_immutable():
    t = Tensor((2,), REAL32, [1, 2])
    with pytest.raises(AttributeError):
        t.shape = (1, 2)
    with pytest.raises(ValueError):
        t.data[0] = 5


def test_identity_round_trip(tmp_path):
    t = Tensor.from_array(np.eye(3, dtype=np.float32))
    path = tmp_path / "eye.mrt"
    write_tensor(t, path)
    assert read_tensor(path).same_bits(t)


def test_fix16_encoding():
    t = Tensor.from_real([1.5], fix16(8))
    assert int(t.data[0]) == 0x0180
    buf = io.BytesIO()
    write_tensor(t, buf)
    buf.seek(0)
    back = read_tensor(buf)
    assert back.dtype == fix16(8)
    assert back.to_real()[0] == 1.5


def test_fix16_saturates_on_quantization():
    t = Tensor.from_real([1000.0, -1000.0], fix16(8))
    assert list(t.data) == [FIX16_MAX, FIX16_MIN]


def test_truncated_payload():
    raw = to_bytes(Tensor((2, 2), REAL32, range(4)))
    with pytest.raises(TruncatedPayload):
        from_bytes(raw[:-1])


def test_bad_magic():
    raw = to_bytes(Tensor((1,), REAL32, [0]))
    with pytest.raises(BadMagic):
        from_bytes(b"XXXX" + raw[4:])


def test_parse_dtype():
    assert parse_dtype("real32") == REAL32
    assert parse_dtype("fix16") == fix16(8)
    assert parse_dtype("FIX16:12") == fix16(12)
    with pytest.raises(UnknownDtype):
        parse_dtype("float64")
    with pytest.raises(UnknownDtype):
        fix16(16)


def test_ndrange_order():
    assert list(ndrange((2, 2))) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert list(ndrange(())) == [()]


@settings(max_examples=50, deadline=None)
@given(
    shape=st.lists(st.integers(1, 4), min_size=1, max_size=4),
    fixed=st.booleans(),
    seed=st.integers(0, 2**16),
)
def test_round_trip_property(shape, fixed, seed):
    rng = np.random.default_rng(seed)
    dtype = fix16(int(rng.integers(0, 16))) if fixed else REAL32
    t = Tensor.from_real(rng.uniform(-4, 4, size=shape), dtype)
    back = from_bytes(to_bytes(t))
    assert back.shape == t.shape and back.dtype == t.dtype
    assert back.same_bits(t)
