import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stemtune.errors import InvalidArgument, SchemaError
from stemtune.image import (
    MAXVAL,
    Image,
    dequantize,
    quantize,
    read_image,
    read_pgm,
    readout,
    write_image,
)


def test_image_validation():
    with pytest.raises(InvalidArgument):
        Image(np.ones(4), 0.02)
    with pytest.raises(InvalidArgument):
        Image(-np.ones((2, 2)), 0.02)
    with pytest.raises(InvalidArgument):
        Image(np.full((2, 2), np.nan), 0.02)


def test_integer_counts_stored_exactly(tmp_path):
    counts = np.random.default_rng(0).poisson(2000.0, (16, 16)).astype(float)
    image = Image(counts, 0.02, {"seed": 42, "dose": 1e7, "state": {"c10": 0.5, "c12a": -1.25}})
    returned = write_image(tmp_path / "a.pgm", image)
    back = read_image(tmp_path / "a.pgm")
    assert np.array_equal(back.data, counts)
    assert np.array_equal(returned, counts)
    assert back.pixel_size == 0.02
    assert back.metadata["seed"] == 42
    assert back.metadata["dose"] == 1e7
    assert back.metadata["state.c12a"] == -1.25


def test_pgm_header_is_big_endian_16_bit(tmp_path):
    data = np.array([[0.0, 1.0], [256.0, 65535.0]])
    write_image(tmp_path / "b.pgm", Image(data, 0.1))
    raw = (tmp_path / "b.pgm").read_bytes()
    assert raw.startswith(b"P5\n2 2\n65535\n")
    assert raw[-8:] == bytes([0, 0, 0, 1, 1, 0, 255, 255])
    assert np.array_equal(read_pgm(tmp_path / "b.pgm"), data.astype(np.uint16))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (8, 8), elements=st.floats(0, 1e9, allow_subnormal=False)))
def test_readout_is_what_a_reader_sees(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("img") / "c.pgm"
    returned = write_image(path, Image(data, 0.02))
    back = read_image(path).data
    assert np.array_equal(back, returned)
    assert np.array_equal(back, readout(data))
    # a second cycle is exact
    assert np.array_equal(readout(back), back) or np.allclose(readout(back), back, rtol=0,
                                                              atol=(back.max() - back.min()) / MAXVAL)


def test_quantize_float_range():
    data = np.linspace(1.5, 99.5, 100).reshape(10, 10)
    codes, offset, scale = quantize(data)
    assert codes.dtype == np.uint16 and codes.min() == 0 and codes.max() == MAXVAL
    assert np.abs(dequantize(codes, offset, scale) - data).max() <= scale / 2 + 1e-12


def test_corrupt_pgm_rejected(tmp_path):
    write_image(tmp_path / "d.pgm", Image(np.ones((4, 4)), 0.02))
    raw = (tmp_path / "d.pgm").read_bytes()
    (tmp_path / "d.pgm").write_bytes(raw[:-3])
    with pytest.raises(SchemaError):
        read_image(tmp_path / "d.pgm")
