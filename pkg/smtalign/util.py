import hashlib
import json
from typing import Any


def calculate_md5(file_path) -> str:
    """
    Calculate the MD5 checksum of a file.
    """
    md5 = hashlib.md5()
    with open(file_path, "rb") as f:
        while chunk := f.read(8192):
            md5.update(chunk)
    return md5.hexdigest()


def canonical_json(data: Any, indent: int | None = 2) -> str:
    """
    Serializes data as JSON with sorted keys, so equal data always gives equal text.

    Parameters:
    -----------
    data : Any
        JSON-serializable data (dicts, lists, numbers, strings).
    indent : int | None
        Indentation; None gives the compact form used for hashing.

    Returns:
    --------
    str
        The JSON text, newline-terminated when indented.
    """
    if indent is None:
        return json.dumps(data, sort_keys=True, separators=(",", ":"))
    return json.dumps(data, sort_keys=True, indent=indent) + "\n"


def config_hash(data: Any) -> str:
    """Return the SHA-256 hex digest of the canonical compact JSON form of data."""
    return hashlib.sha256(canonical_json(data, indent=None).encode("utf-8")).hexdigest()


def write_json(file_path, data: Any) -> None:
    """Write data as canonical JSON."""
    with open(file_path, "w", encoding="utf-8") as f:
        f.write(canonical_json(data))


def read_json(file_path) -> Any:
    with open(file_path, "r", encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"Corrupted JSON in {file_path}: {e}")


def deep_merge(base: dict, override: dict) -> dict:
    """
    Returns a new dict with override merged into base; nested dicts are merged key by key,
    any other value in override replaces the value in base.
    """
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
