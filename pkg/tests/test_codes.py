import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from binaryne.codes import HEADER_BYTES, CodeMatrix, binarize, load_codes, save_codes, words_for
from binaryne.model import hidden_repr, init_params


def test_sign_of_zero_is_plus_one():
    codes = binarize(np.array([[0.3, -0.2, 0.0], [-0.0, -1e-30, 1e-30]]))
    assert codes.bits().tolist() == [[1, 0, 1], [1, 0, 1]]
    assert codes.data[0, 0] == 0b101


def test_all_negative_row_is_zero_word():
    codes = binarize(-np.ones((2, 130)))
    assert not codes.data.any()
    assert codes.words_per_code == 3


def test_bit_layout_little_endian_words():
    bits = np.zeros((1, 130), dtype=bool)
    bits[0, [0, 63, 64, 129]] = True
    data = CodeMatrix.from_bits(bits).data[0]
    assert data.tolist() == [1 | (1 << 63), 1, 2]


@pytest.mark.parametrize("beta", [0.01, 0.1, 1, 10])
def test_binarization_is_beta_invariant(beta):
    params = init_params(40, 3, 70, seed=1, dtype=np.float64)
    params.W_in[0, :5] = 0.0
    from_tanh = np.stack([hidden_repr(params, i, beta) for i in range(40)]) >= 0
    assert CodeMatrix.from_bits(from_tanh) == binarize(params)


def test_binarize_accepts_params():
    params = init_params(5, 2, 9, seed=0)
    assert binarize(params) == binarize(params.W_in)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 200), st.data())
def test_from_bits_round_trip_and_tail(n, d, data):
    bits = data.draw(hnp.arrays(np.bool_, (n, d)))
    codes = CodeMatrix.from_bits(bits)
    assert codes.words_per_code == words_for(d)
    assert np.array_equal(codes.bits(), bits)
    assert codes.tail_is_zero()
    assert np.array_equal(codes.signs(), np.where(bits, 1, -1))


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    codes = CodeMatrix.from_bits(rng.random((1000, 128)) < 0.5)
    path = tmp_path / "c.codes"
    save_codes(codes, path)
    assert path.stat().st_size == HEADER_BYTES + 1000 * 16
    assert load_codes(path) == codes
    save_codes(load_codes(path), tmp_path / "d.codes")
    assert (tmp_path / "d.codes").read_bytes() == path.read_bytes()


def test_header_layout(tmp_path):
    codes = CodeMatrix.from_bits(np.ones((3, 65), dtype=bool))
    save_codes(codes, tmp_path / "c")
    raw = (tmp_path / "c").read_bytes()
    assert raw[:4] == b"BNEC"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:16], "little") == 3
    assert int.from_bytes(raw[16:20], "little") == 65
    assert len(raw) == 20 + 3 * 2 * 8


def test_empty_matrix_is_header_only(tmp_path):
    codes = CodeMatrix.from_bits(np.zeros((0, 128), dtype=bool))
    save_codes(codes, tmp_path / "e")
    assert (tmp_path / "e").stat().st_size == HEADER_BYTES
    back = load_codes(tmp_path / "e")
    assert back.node_count == 0 and back.d == 128


def test_load_errors(tmp_path):
    codes = CodeMatrix.from_bits(np.ones((4, 10), dtype=bool))
    path = tmp_path / "c"
    save_codes(codes, path)
    raw = path.read_bytes()
    cases = {
        "magic": b"XXXX" + raw[4:],
        "version": raw[:4] + (2).to_bytes(4, "little") + raw[8:],
        "expected": raw[:-1],
        "truncated": raw[:7],
        "beyond": raw[:HEADER_BYTES] + (1 << 40).to_bytes(8, "little") + raw[HEADER_BYTES + 8:],
        "invalid code length": raw[:16] + (0).to_bytes(4, "little") + raw[20:],
    }
    for message, payload in cases.items():
        path.write_bytes(payload)
        with pytest.raises(ValueError, match=message):
            load_codes(path)
    # a dimension that disagrees with the payload size
    path.write_bytes(raw[:16] + (65).to_bytes(4, "little") + raw[20:])
    with pytest.raises(ValueError, match="expected"):
        load_codes(path)


def test_memory_ratio():
    codes = CodeMatrix.from_bits(np.zeros((2708, 128), dtype=bool))
    assert codes.payload_bytes == 2708 * 128 // 8 == 43_328
    assert 2708 * 128 * 8 == 64 * codes.payload_bytes


def test_constructor_validation():
    with pytest.raises(ValueError):
        CodeMatrix(np.zeros((2, 2), dtype=np.int64), 128)
    with pytest.raises(ValueError):
        CodeMatrix(np.zeros((2, 3), dtype=np.uint64), 128)
    with pytest.raises(ValueError):
        CodeMatrix.from_bits(np.zeros((2, 0), dtype=bool))
