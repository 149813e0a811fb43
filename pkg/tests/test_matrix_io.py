import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from approxfa.errors import MatrixParseError
from approxfa.matrix_io import RunManifest, manifest_path_for, read_cov, read_matrix, write_matrix

from conftest import FIXTURES


def test_identity_round_trip(tmp_path):
    path = tmp_path / "i.csv"
    write_matrix(np.eye(3), path)
    np.testing.assert_array_equal(read_matrix(path), np.eye(3))


def test_ragged_file_names_line():
    with pytest.raises(MatrixParseError) as info:
        read_matrix(FIXTURES / "ragged.csv")
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_non_numeric_field(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,x\n")
    with pytest.raises(MatrixParseError) as info:
        read_matrix(path)
    assert info.value.line == 2


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_17_digit_round_trip_is_bit_exact(tmp_path_factory, M):
    path = tmp_path_factory.mktemp("rt") / "m.csv"
    write_matrix(M, path)
    back = read_matrix(path)
    assert back.tobytes() == M.tobytes()


def test_vector_written_as_column(tmp_path):
    path = tmp_path / "v.csv"
    write_matrix([1.0, 2.0], path)
    assert path.read_text() == "1\n2\n"


def test_read_cov_validates_symmetry(tmp_path):
    path = tmp_path / "a.csv"
    write_matrix([[1.0, 0.5], [0.0, 1.0]], path)
    with pytest.raises(ValueError, match="symmetric"):
        read_cov(path)
    assert read_cov(FIXTURES / "exact_sigma.csv").pd


def test_manifest_round_trip(tmp_path):
    out = tmp_path / "t.csv"
    out.write_text("iter\n")
    m = RunManifest(command="fit", argv=["fit", "--k", "2"], engines=["alt"], k=2,
                    split=[3, 1], config={"max_iters": 5}, seed=4, outputs={"trace": str(out)})
    m.add_checksums()
    path = manifest_path_for(out)
    assert path.name == "t.csv.manifest.json"
    m.save(path)
    assert RunManifest.load(path) == m
    assert len(m.checksums["trace"]) == 64
