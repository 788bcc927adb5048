import pytest

from riskforks.hashing import canonical_json, derive_seed, fnv1a64, stable_hash


def test_fnv1a64_published_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_canonical_sorts_keys_and_strips_whitespace():
    assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'
    assert canonical_json([1, "x", None, True]) == '[1,"x",null,true]'


def test_canonical_float_17_significant_digits():
    assert canonical_json(0.1) == "0.10000000000000001"
    assert canonical_json(1.5) == "1.5"
    assert canonical_json(1.0) == "1"


def test_canonical_rejects_non_finite():
    with pytest.raises(ValueError):
        canonical_json(float("nan"))
    with pytest.raises(ValueError):
        canonical_json(float("inf"))


def test_canonical_escapes_strings():
    assert canonical_json('a"b\n') == '"a\\"b\\n"'


def test_stable_hash_is_key_order_independent():
    assert stable_hash({"x": 1, "y": [2, 3]}) == stable_hash({"y": [2, 3], "x": 1})


def test_derive_seed_distinguishes_parts():
    assert derive_seed(1, "a") != derive_seed(1, "b")
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert derive_seed(1, 2) == derive_seed(1, 2)
