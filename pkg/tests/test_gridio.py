import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from vortexmoduli.errors import FormatError
from vortexmoduli.gridio import MAGIC, VERSION, decode, encode, load_grid, save_grid


def test_header_layout():
    a = np.arange(2 * 2 * 1 * 3, dtype=complex).reshape(2, 2, 1, 3) * (1 + 2j)
    buf = encode(a, bidegree=(0, 1))
    assert buf[:4] == MAGIC
    version, ndim = struct.unpack_from("<HH", buf, 4)
    assert (version, ndim) == (VERSION, 4)
    assert struct.unpack_from("<4I", buf, 8) == (2, 2, 1, 3)
    assert struct.unpack_from("<BBHH", buf, 24) == (0, 1, 1, 3)
    # little-endian float64, real and imaginary parts interleaved, row-major
    body = np.frombuffer(buf[30:], dtype="<f8")
    assert body[2] == 1.0 and body[3] == 2.0


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.complex128, hnp.array_shapes(min_dims=2, max_dims=4, max_side=5),
                  elements=st.complex_numbers(allow_nan=True, allow_infinity=True)),
       st.sampled_from([(0, 0), (0, 1), (1, 0), (1, 1)]))
def test_bit_exact_round_trip(a, bideg):
    d = decode(encode(a, bideg))
    assert d.data.shape == a.shape and d.bidegree == bideg
    assert d.data.tobytes() == np.ascontiguousarray(a).tobytes()


def test_file_round_trip(tmp_path):
    a = np.random.default_rng(0).standard_normal((8, 8, 2, 2)) + 0j
    save_grid(tmp_path / "h.vtxg", a)
    d = load_grid(tmp_path / "h.vtxg")
    assert d.ranks == (2, 2) and np.array_equal(d.data, a)
    assert [p.name for p in tmp_path.iterdir()] == ["h.vtxg"]


def test_corrupt_input_is_rejected():
    buf = encode(np.zeros((4, 4)))
    with pytest.raises(FormatError):
        decode(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        decode(buf[:-8])
    with pytest.raises(FormatError):
        encode(np.zeros((4, 4)), bidegree=(2, 0))
