"""Round-trip checks for the versioned text document container."""

import numpy as np
import pytest

from pcgkit import textio
from pcgkit.errors import DataError


def test_format_float_round_trips_doubles(rng):
    values = np.concatenate([
        rng.standard_normal(200),
        rng.standard_normal(100) * 1e-280,
        rng.standard_normal(100) * 1e280,
        [0.0, 1.0, -1.0, np.pi, 2.0 / 3.0],
    ])
    for v in values:
        assert float(textio.format_float(float(v))) == float(v)


def test_document_round_trip_bit_exact(tmp_path, rng):
    arrays = {
        "vec": rng.standard_normal(7),
        "mat": rng.standard_normal((3, 5)),
        "single": np.array([1e-300]),
    }
    meta = {"alpha": "0.25", "name": "fixture"}
    path = str(tmp_path / "doc.txt")
    textio.write_document(path, "emission-model", meta, arrays)
    meta2, arrays2 = textio.read_document(path, "emission-model")
    assert meta2["alpha"] == "0.25"
    assert meta2["name"] == "fixture"
    for key, arr in arrays.items():
        assert arrays2[key].shape == arr.shape
        assert np.array_equal(arrays2[key], arr)


def test_document_kind_and_kind_mismatch(tmp_path):
    path = str(tmp_path / "doc.txt")
    textio.write_document(path, "classifier", {}, {"w": np.zeros(2)})
    assert textio.document_kind(path) == "classifier"
    with pytest.raises(DataError):
        textio.read_document(path, "emission-model")


def test_document_kind_rejects_other_files(tmp_path):
    path = str(tmp_path / "junk.txt")
    with open(path, "w") as fh:
        fh.write("just some text\n")
    with pytest.raises(DataError):
        textio.document_kind(path)
