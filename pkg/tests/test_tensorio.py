import struct

import numpy as np
import pytest

from oodkit import (
    DataError,
    DomainError,
    FormatError,
    LinearHead,
    ShapeError,
    TruncationError,
    read_fvec,
    read_labels_csv,
    read_matrix_csv,
    write_fvec,
    write_labels_csv,
    write_matrix_csv,
)


def fvec_bytes(rows, cols, values, version=1, magic=b"FVEC"):
    header = struct.pack("<4sIII", magic, version, rows, cols)
    return header + struct.pack(f"<{len(values)}f", *values)


class TestFvecRead:
    def test_direct_encoding(self, tmp_path):
        path = tmp_path / "m.fvec"
        path.write_bytes(fvec_bytes(1, 2, [1.0, 2.0]))
        assert np.array_equal(read_fvec(path), [[1.0, 2.0]])

    def test_roundtrip_random(self, tmp_path):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((3, 4)).astype(np.float32).astype(np.float64)
        write_fvec(m, tmp_path / "m.fvec")
        assert np.array_equal(read_fvec(tmp_path / "m.fvec"), m)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.fvec"
        path.write_bytes(fvec_bytes(2, 2, [1.0, 2.0, 3.0]))
        with pytest.raises(TruncationError):
            read_fvec(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.fvec"
        path.write_bytes(fvec_bytes(1, 1, [0.0], magic=b"NOPE"))
        with pytest.raises(FormatError):
            read_fvec(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v9.fvec"
        path.write_bytes(fvec_bytes(1, 1, [0.0], version=9))
        with pytest.raises(FormatError):
            read_fvec(path)

    def test_nonfinite_payload(self, tmp_path):
        path = tmp_path / "nan.fvec"
        path.write_bytes(fvec_bytes(1, 2, [1.0, float("nan")]))
        with pytest.raises(DataError):
            read_fvec(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError):
            read_fvec(tmp_path / "absent.fvec")

    def test_little_endian_is_normative(self, tmp_path):
        write_fvec([[1.0]], tmp_path / "one.fvec")
        blob = (tmp_path / "one.fvec").read_bytes()
        assert blob[16:] == bytes([0x00, 0x00, 0x80, 0x3F])


class TestFvecWrite:
    def test_single_value_file_size(self, tmp_path):
        write_fvec([[0.0]], tmp_path / "m.fvec")
        assert (tmp_path / "m.fvec").stat().st_size == 20

    def test_deterministic_bytes(self, tmp_path):
        m = np.random.default_rng(0).standard_normal((4, 3))
        write_fvec(m, tmp_path / "a.fvec")
        write_fvec(m, tmp_path / "b.fvec")
        assert (tmp_path / "a.fvec").read_bytes() == (tmp_path / "b.fvec").read_bytes()

    def test_empty_matrix(self, tmp_path):
        write_fvec(np.zeros((0, 3)), tmp_path / "empty.fvec")
        assert (tmp_path / "empty.fvec").stat().st_size == 16
        back = read_fvec(tmp_path / "empty.fvec")
        assert back.shape == (0, 3)

    def test_rejects_nonfinite(self, tmp_path):
        with pytest.raises(DataError):
            write_fvec([[np.inf]], tmp_path / "inf.fvec")

    def test_rejects_1d(self, tmp_path):
        with pytest.raises(ShapeError):
            write_fvec(np.zeros(4), tmp_path / "flat.fvec")


def test_roundtrip_property_bitexact(tmp_path):
    rng = np.random.default_rng(11)
    for case in range(200):
        rows = int(rng.integers(0, 8))
        cols = int(rng.integers(1, 8))
        m = (rng.standard_normal((rows, cols)) * 10.0 ** rng.integers(-3, 4)).astype(
            np.float32
        )
        path = tmp_path / f"m{case}.fvec"
        write_fvec(m.astype(np.float64), path)
        back = read_fvec(path)
        assert back.dtype == np.float64
        assert np.array_equal(back.astype(np.float32), m)


def test_nonfinite_injection_property(tmp_path):
    rng = np.random.default_rng(12)
    for case in range(100):
        rows = int(rng.integers(1, 6))
        cols = int(rng.integers(1, 6))
        m = rng.standard_normal((rows, cols))
        i = int(rng.integers(0, rows))
        j = int(rng.integers(0, cols))
        m[i, j] = rng.choice([np.nan, np.inf, -np.inf])
        with pytest.raises(DataError):
            write_fvec(m, tmp_path / f"bad{case}.fvec")


class TestLabelsCsv:
    def test_direct_parse(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("id,label\n0,2\n1,0\n")
        assert np.array_equal(read_labels_csv(path), [2, 0])

    def test_header_only(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("id,label\n")
        assert read_labels_csv(path).shape == (0,)

    def test_negative_label(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("id,label\n0,-1\n")
        with pytest.raises(DomainError):
            read_labels_csv(path)

    def test_non_integer_label(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("id,label\n0,cat\n")
        with pytest.raises(FormatError):
            read_labels_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("index,klass\n0,1\n")
        with pytest.raises(FormatError):
            read_labels_csv(path)

    def test_roundtrip(self, tmp_path):
        labels = np.array([0, 3, 1, 1, 2])
        write_labels_csv(labels, tmp_path / "labels.csv")
        assert np.array_equal(read_labels_csv(tmp_path / "labels.csv"), labels)


class TestMatrixCsv:
    def test_roundtrip(self, tmp_path):
        m = np.random.default_rng(5).standard_normal((4, 3))
        write_matrix_csv(m, tmp_path / "m.csv")
        assert np.array_equal(read_matrix_csv(tmp_path / "m.csv"), m)

    def test_header(self, tmp_path):
        write_matrix_csv([[1.0, 2.0]], tmp_path / "m.csv")
        assert (tmp_path / "m.csv").read_text().splitlines()[0] == "v0,v1"

    def test_bad_header(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(FormatError):
            read_matrix_csv(path)

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("v0,v1\n1.0\n")
        with pytest.raises(FormatError):
            read_matrix_csv(path)


class TestLinearHead:
    def test_shapes(self):
        head = LinearHead(weights=np.eye(2), bias=np.zeros(2))
        assert head.feature_dim == 2
        assert head.n_classes == 2

    def test_bias_mismatch(self):
        with pytest.raises(ShapeError):
            LinearHead(weights=np.eye(3), bias=np.zeros(2))

    def test_nonfinite_weights(self):
        w = np.eye(2)
        w[0, 0] = np.nan
        with pytest.raises(DataError):
            LinearHead(weights=w, bias=np.zeros(2))

    def test_nonfinite_bias(self):
        with pytest.raises(DataError):
            LinearHead(weights=np.eye(2), bias=np.array([0.0, np.inf]))
