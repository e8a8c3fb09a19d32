from fractions import Fraction

import numpy as np
import pytest

from detdiff import io


def test_hash_ignores_key_order_and_is_stable():
    h1 = io.config_hash({"a": 1, "b": Fraction(1, 3)})
    assert h1 == io.config_hash({"b": Fraction(1, 3), "a": 1})
    assert h1 != io.config_hash({"a": 1, "b": Fraction(1, 4)})
    assert len(h1) == 16


def test_csv_roundtrip(tmp_path):
    meta = io.metadata("scan", {"x": 1})
    p = tmp_path / "t.csv"
    io.write_csv(p, meta, ["x", "y", "flag"], [(0.1, 1 / 3, True), (2, np.float64(2.5), False)])
    got, cols, rows = io.read_csv(p)
    assert got["config_hash"] == meta["config_hash"]
    assert got["tool"].startswith("detdiff ")
    assert cols == ["x", "y", "flag"]
    data = io.read_columns(p, ["x", "y"])
    assert data["y"][0] == 1 / 3     # 17 significant digits round-trip doubles
    assert rows[1][2] == "0"


def test_digits_and_nan():
    assert io.fmt(1 / 3, 4) == "0.3333"
    assert io.fmt(float("nan")) == "nan"
    assert io.fmt(np.int64(7)) == "7"


def test_malformed_csv(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# only comments\n")
    with pytest.raises(ValueError):
        io.read_csv(p)
    p.write_text("x,y\n1,2\n3,oops\n")
    with pytest.raises(ValueError):
        io.read_columns(p)
    with pytest.raises(ValueError):
        io.read_columns(p, ["z"])


def test_json_has_meta_and_plain_values(tmp_path):
    import json
    meta = io.metadata("simulate", {"a": Fraction(7, 2)})
    p = tmp_path / "o.json"
    io.write_json(p, meta, {"v": np.arange(3), "f": Fraction(1, 2), "bad": float("inf")})
    doc = json.loads(p.read_text())
    assert doc["meta"]["config"]["a"] == "7/2"
    assert doc["v"] == [0, 1, 2] and doc["f"] == "1/2" and doc["bad"] == "inf"
