import hashlib
import pytest
from smtalign.util import calculate_md5, canonical_json, config_hash, deep_merge, read_json, write_json

def test_canonical_json_sorts_keys():
    """Test dat sleutels gesorteerd worden, ongeacht de invoervolgorde."""
    assert canonical_json({"b": 1, "a": 2}) == canonical_json({"a": 2, "b": 1})
    assert canonical_json({"b": 1, "a": 2}).index('"a"') < canonical_json({"b": 1, "a": 2}).index('"b"')

def test_canonical_json_compact_form():
    assert canonical_json({"b": [1, 2], "a": None}, indent=None) == '{"a":null,"b":[1,2]}'

def test_canonical_json_ends_with_newline():
    assert canonical_json({"a": 1}).endswith("}\n")

def test_config_hash_is_sha256_of_compact_json():
    expected = hashlib.sha256(b'{"a":1}').hexdigest()
    assert config_hash({"a": 1}) == expected

def test_config_hash_differs_for_different_data():
    assert config_hash({"a": 1}) != config_hash({"a": 2})

def test_deep_merge_nested():
    """Test samenvoegen van geneste dicts."""
    base = {"svr": {"epsilon": 0.1, "c_penalty": 1.0}, "seed": 42}
    override = {"svr": {"epsilon": 0.2}}
    merged = deep_merge(base, override)
    assert merged == {"svr": {"epsilon": 0.2, "c_penalty": 1.0}, "seed": 42}
    assert base["svr"]["epsilon"] == 0.1

def test_deep_merge_replaces_non_dict_values():
    assert deep_merge({"dirs": ["R1005", "C1005"]}, {"dirs": ["R0402"]}) == {"dirs": ["R0402"]}

def test_write_and_read_json(tmp_path):
    path = tmp_path / "data.json"
    write_json(path, {"z": 1, "a": [1.5, 2.5]})
    assert read_json(path) == {"z": 1, "a": [1.5, 2.5]}
    assert path.read_text() == canonical_json({"z": 1, "a": [1.5, 2.5]})

def test_read_corrupted_json(tmp_path):
    """Test dat corrupte JSON een ValueError geeft."""
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ValueError, match="Corrupted JSON"):
        read_json(path)

def test_calculate_md5(tmp_path):
    path = tmp_path / "file.txt"
    path.write_bytes(b"smt")
    assert calculate_md5(path) == hashlib.md5(b"smt").hexdigest()
