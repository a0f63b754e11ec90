import numpy as np
import pytest

from cascade.embeddings import EmbeddingTable
from cascade.errors import ContractError, DimensionError, ParseError


def test_text_roundtrip_exact_for_f32(tmp_path):
    rng = np.random.default_rng(0)
    table = EmbeddingTable([f"e{i}" for i in range(20)],
                           rng.normal(size=(20, 7)).astype(np.float32))
    table.save(tmp_path / "emb.txt")
    loaded = EmbeddingTable.load(tmp_path / "emb.txt")
    assert loaded.ids == table.ids
    assert np.array_equal(loaded.vectors, table.vectors)


def test_header_and_layout(tmp_path):
    table = EmbeddingTable(["u1"], np.array([[1.5, -2.0]], dtype=np.float32))
    table.save(tmp_path / "emb.txt")
    lines = (tmp_path / "emb.txt").read_text().splitlines()
    assert lines[0] == "1 2"
    assert lines[1].split() == ["u1", "1.5", "-2"]


def test_row_count_mismatch_rejected():
    with pytest.raises(DimensionError):
        EmbeddingTable(["a", "b"], np.zeros((3, 2)))


def test_duplicate_ids_rejected():
    with pytest.raises(ContractError):
        EmbeddingTable(["a", "a"], np.zeros((2, 2)))


def test_non_finite_rejected():
    with pytest.raises(ContractError):
        EmbeddingTable(["a"], np.array([[np.inf, 0.0]]))


def test_malformed_file_reports_line(tmp_path):
    (tmp_path / "bad.txt").write_text("2 3\nu1 1 2 3\nu2 1 2\n")
    with pytest.raises(ParseError, match="line 3"):
        EmbeddingTable.load(tmp_path / "bad.txt")


def test_lookup():
    table = EmbeddingTable(["x", "y"], np.array([[1.0], [2.0]], dtype=np.float32))
    assert "x" in table and "z" not in table
    assert table.get("y")[0] == 2.0
    assert table.dim == 1 and len(table) == 2
